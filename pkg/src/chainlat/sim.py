"""Concrete-execution simulator and safety oracle.

Cores execute their merged chains over one hyperperiod against live LRU
caches: a private first level per core and a shared second level.  Cores
interact only through the shared level, so each core runs eagerly between
its shared-cache lookups while the lookups themselves are applied in global
cycle order, ties resolved by ascending core id.  Caches are cold at time
zero and the private level is cleared at every job release, matching the
per-job cold-start assumption of the analysis.

Path policies: seeded random choices, a worst-biased walker that steers
branches toward the heavier suffix and runs loops to their upper bounds,
and exhaustive enumeration of all decision tapes for small problems.
"""

from __future__ import annotations

import csv
import heapq
import random
from dataclasses import dataclass, field
from typing import Optional

from .cache_ai import AH, BYPASS, PS
from .context import covers
from .model import ValidationError, topo_order


@dataclass
class SimConfig:
    policy: str = "random"  # random | worst | tape
    seed: int = 0
    tape: Optional[list] = None  # decision tape when policy == "tape"
    max_exhaustive_paths: int = 100_000


@dataclass
class JobRecord:
    core: int
    chain_id: str
    period_index: int
    task_index: int
    task_id: str
    start: int
    finish: int


@dataclass
class AccessEvent:
    cycle: int
    core: int
    chain_id: str
    period_index: int
    task_index: int
    block_id: str
    access_id: str
    level: str  # L1 | L2 | MEM
    scope: Optional[tuple]  # (loop id, entry serial) of the innermost scope


@dataclass
class BlockOccurrence:
    core: int
    chain_id: str
    period_index: int
    task_index: int
    block_id: str
    start: int
    end: int


@dataclass
class SimTrace:
    jobs: list = field(default_factory=list)
    accesses: list = field(default_factory=list)
    blocks: list = field(default_factory=list)
    overruns: list = field(default_factory=list)
    l2_state: list = field(default_factory=list)


class LRUCache:
    """Set-associative LRU cache over line numbers."""

    def __init__(self, sets: int, ways: int):
        self.sets = sets
        self.ways = ways
        self.state = [[] for _ in range(sets)]

    def access(self, line: int) -> bool:
        s = self.state[line % self.sets]
        if line in s:
            s.remove(line)
            s.insert(0, line)
            return True
        s.insert(0, line)
        if len(s) > self.ways:
            s.pop()
        return False

    def flush(self):
        self.state = [[] for _ in range(self.sets)]

    def snapshot(self):
        return [list(s) for s in self.state]


class _Decider:
    """Resolves branch and loop-bound choices for one simulation run."""

    def __init__(self, config: SimConfig):
        self.policy = config.policy
        self.seed = config.seed
        self.tape = list(config.tape) if config.tape is not None else None
        self.pos = 0
        self.counts = []  # choice count at every decision point, for enumeration
        self.rngs = {}

    def _rng(self, job_key):
        if job_key not in self.rngs:
            self.rngs[job_key] = random.Random("%s|%s" % (self.seed, job_key))
        return self.rngs[job_key]

    def _pick(self, n: int, job_key, worst_index: int, rng_pick) -> int:
        self.counts.append(n)
        self.pos += 1
        if self.tape is not None:
            if self.pos - 1 < len(self.tape):
                return self.tape[self.pos - 1]
            self.tape.append(0)
            return 0
        if self.policy == "worst":
            return worst_index
        return rng_pick(self._rng(job_key))

    def branch(self, choices, job_key, scores) -> str:
        if len(choices) == 1:
            return choices[0]
        worst = max(range(len(choices)), key=lambda i: (scores.get(choices[i], 0), -i))
        idx = self._pick(len(choices), job_key, worst, lambda r: r.randrange(len(choices)))
        return choices[idx]

    def iterations(self, lo: int, hi: int, job_key) -> int:
        if lo == hi:
            return lo
        idx = self._pick(hi - lo + 1, job_key, hi - lo, lambda r: r.randint(0, hi - lo))
        return lo + idx


def _suffix_scores(task, node_worst) -> dict:
    """Worst-remaining-cost per block, the biased walker's branch heuristic."""
    scores = {}
    succ = task.successors(include_back=False)
    for bid in reversed(topo_order(task)):
        nxt = max((scores[s] for s in succ[bid]), default=0)
        scores[bid] = node_worst.get(bid, 0) + nxt
    return scores


def _core_walker(core, setup, cid, decider, trace, system, scores_by_task):
    """Generator running one core's chain; yields at shared-cache lookups."""
    cs = setup.chains[cid]
    chain = cs.chain
    l1 = LRUCache(system.l1.sets, system.l1.ways)
    clock = 0
    n_instances = setup.hyper // chain.period

    for k in range(n_instances):
        for i, tid in enumerate(chain.tasks):
            task = setup.bundle.tasks[tid]
            scores = scores_by_task[tid]
            if chain.trigger == "TT":
                release = k * chain.period + chain.offsets[i]
            elif i == 0:
                release = k * chain.period
            else:
                release = clock  # ET: triggered by predecessor completion
            if clock > release:
                trace.overruns.append((core, cid, k, i, release, clock))
            clock = max(clock, release)
            l1.flush()
            job_key = "%s/%d/%d" % (cid, k, i)
            start = clock

            heads = {ln.head_block: lid for lid, ln in task.loops.items()}
            tails = {}
            for lid, ln in task.loops.items():
                tails.setdefault(ln.tail_block, []).append(lid)
            succ_fwd = task.successors(include_back=False)
            exclusive = {}
            for pair in task.exclusive_pairs:
                a, b = tuple(pair)
                exclusive.setdefault(a, set()).add(b)
                exclusive.setdefault(b, set()).add(a)

            cur = task.entry_block
            loop_stack = []  # [loop id, chosen iterations, done count, entry serial]
            entry_serial = {}
            forbidden = set()

            while True:
                lid = heads.get(cur)
                if lid is not None and (not loop_stack or loop_stack[-1][0] != lid):
                    serial = entry_serial.get(lid, 0)
                    entry_serial[lid] = serial + 1
                    ln = task.loops[lid]
                    iters = decider.iterations(ln.min_bound, ln.max_bound, job_key)
                    loop_stack.append([lid, iters, 1, serial])

                block = task.blocks[cur]
                if cur in exclusive:
                    forbidden |= exclusive[cur]
                scope = (loop_stack[-1][0], loop_stack[-1][3]) if loop_stack else None
                b_start = clock
                n_acc = len(block.accesses)
                for j in range(block.instruction_count):
                    clock += system.base_cpi
                    if j < n_acc:
                        acc = block.accesses[j]
                        if l1.access(system.l1.line_of(acc.address)):
                            clock += system.l1.hit_latency
                            trace.accesses.append(
                                AccessEvent(clock, core, cid, k, i, cur, acc.id, "L1", scope)
                            )
                        else:
                            latency, level = yield (clock, acc.address)
                            clock += latency
                            trace.accesses.append(
                                AccessEvent(clock, core, cid, k, i, cur, acc.id, level, scope)
                            )
                trace.blocks.append(BlockOccurrence(core, cid, k, i, cur, b_start, clock))

                # Repeat or leave loops whose tail this block is, innermost first.
                advanced = False
                while loop_stack and task.loops[loop_stack[-1][0]].tail_block == cur:
                    top = loop_stack[-1]
                    if top[2] < top[1]:
                        top[2] += 1
                        cur = task.loops[top[0]].head_block
                        advanced = True
                        break
                    loop_stack.pop()
                if advanced:
                    continue
                if cur == task.exit_block:
                    break
                choices = sorted(s for s in succ_fwd[cur] if s not in forbidden)
                if not choices:
                    choices = sorted(succ_fwd[cur])
                cur = decider.branch(choices, job_key, scores)

            trace.jobs.append(JobRecord(core, cid, k, i, tid, start, clock))


def _run(bundle, setup, decider) -> SimTrace:
    system = bundle.system
    scores_by_task = {
        tid: _suffix_scores(bundle.tasks[tid], setup.tasks[tid].contracted_init.node_worst)
        for tid in bundle.tasks
    }
    trace = SimTrace()
    l2 = LRUCache(system.l2.sets, system.l2.ways)

    gens = {}
    for cid in sorted(setup.chains):
        core = setup.chains[cid].chain.core
        gens[core] = _core_walker(core, setup, cid, decider, trace, system, scores_by_task)

    heap = []
    for core in sorted(gens):
        try:
            cycle, address = next(gens[core])
            heapq.heappush(heap, (cycle, core, address))
        except StopIteration:
            pass

    while heap:
        cycle, core, address = heapq.heappop(heap)
        hit = l2.access(system.l2.line_of(address))
        latency = system.l2.hit_latency if hit else system.mem_latency
        try:
            nxt_cycle, nxt_addr = gens[core].send((latency, "L2" if hit else "MEM"))
            heapq.heappush(heap, (nxt_cycle, core, nxt_addr))
        except StopIteration:
            pass

    trace.jobs.sort(key=lambda j: (j.core, j.period_index, j.task_index))
    trace.l2_state = l2.snapshot()
    return trace


def simulate(bundle, config: SimConfig, setup=None) -> SimTrace:
    """One concrete run of the whole bundle over its hyperperiod."""
    from .latency import prepare

    setup = setup or prepare(bundle)
    return _run(bundle, setup, _Decider(config))


def simulate_exhaustive(bundle, config: SimConfig = None, setup=None):
    """Yield one trace per decision tape, enumerated like an odometer."""
    from .latency import prepare

    config = config or SimConfig()
    setup = setup or prepare(bundle)
    tape = []
    paths = 0
    while True:
        decider = _Decider(SimConfig(policy="tape", seed=config.seed, tape=tape))
        trace = _run(bundle, setup, decider)
        paths += 1
        if paths > config.max_exhaustive_paths:
            raise ValidationError("exhaustive simulation exceeds %d paths" % config.max_exhaustive_paths)
        yield trace
        grown, counts = decider.tape, decider.counts
        pos = len(grown) - 1
        while pos >= 0 and grown[pos] + 1 >= counts[pos]:
            pos -= 1
        if pos < 0:
            return
        tape = grown[: pos + 1]
        tape[pos] += 1


def trace_hit_ratio(trace: SimTrace) -> Optional[float]:
    """Shared-cache hits over shared-cache accesses; None without L2 traffic."""
    l2 = [e for e in trace.accesses if e.level in ("L2", "MEM")]
    if not l2:
        return None
    return sum(1 for e in l2 if e.level == "L2") / len(l2)


def check_safety(trace: SimTrace, report, setup=None) -> list:
    """Compare a concrete trace against the refined analysis results.

    Returns violation records; an empty list certifies the run.  Checks:
    job and chain latencies against the refined bounds, always-hit accesses
    never missing, persistent accesses missing at most once per scope entry,
    and every block occurrence covered by its absolute window.
    """
    setup = setup or report.setup
    violations = []

    by_instance = {}
    for j in trace.jobs:
        by_instance[(j.chain_id, j.period_index, j.task_index)] = j
        res = report.instances.get(("TSC", j.chain_id, j.period_index, j.task_index))
        if res is None:
            continue
        if j.finish - j.start > res.wcet:
            violations.append(
                {"kind": "job-latency", "job": (j.chain_id, j.period_index, j.task_index),
                 "latency": j.finish - j.start, "bound": res.wcet}
            )

    for cid, cs in setup.chains.items():
        if (cid, "TSC") not in report.chain_results:
            continue
        mel = report.chain_results[(cid, "TSC")].mel
        for k in range(setup.hyper // cs.chain.period):
            first = by_instance.get((cid, k, 0))
            last = by_instance.get((cid, k, len(cs.chain.tasks) - 1))
            if first and last:
                latency = last.finish - first.start
                if latency > mel:
                    violations.append({"kind": "chain-latency", "chain": cid, "instance": k,
                                       "latency": latency, "bound": mel})

    ps_misses = {}
    for e in trace.accesses:
        res = report.instances.get(("TSC", e.chain_id, e.period_index, e.task_index))
        if res is None:
            continue
        cls = setup.tasks[res.task_id].classification.accesses[e.access_id]
        chmc = res.refined.get(e.access_id, cls.l2_chmc)
        if cls.l2_chmc == BYPASS and e.level != "L1":
            violations.append({"kind": "l1-ah-miss", "access": e.access_id, "cycle": e.cycle})
        if chmc == AH and e.level == "MEM":
            violations.append({"kind": "ah-miss", "access": e.access_id, "cycle": e.cycle,
                               "job": (e.chain_id, e.period_index, e.task_index)})
        if chmc == PS and e.level == "MEM":
            key = (e.chain_id, e.period_index, e.task_index, e.access_id, e.scope)
            ps_misses[key] = ps_misses.get(key, 0) + 1
            if ps_misses[key] > 1:
                violations.append({"kind": "ps-extra-miss", "access": e.access_id,
                                   "scope": e.scope, "count": ps_misses[key]})

    ctx_cache = {}
    for occ in trace.blocks:
        key = (occ.chain_id, occ.period_index, occ.task_index)
        if key not in ctx_cache:
            ctx_cache[key] = setup.job_ctx(key)
        bba = ctx_cache[key].bba_time(occ.block_id)
        if not covers(bba, occ.start, occ.end):
            violations.append({"kind": "context-coverage", "block": occ.block_id,
                               "job": key, "window": (occ.start, occ.end)})

    for core, cid, k, i, release, actual in trace.overruns:
        violations.append({"kind": "deadline-overrun", "job": (cid, k, i),
                           "release": release, "actual_start": actual})
    return violations


def write_trace_csv(path, trace: SimTrace):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["cycle", "core", "chain", "period", "task", "block", "access", "level"])
        for e in sorted(trace.accesses, key=lambda e: (e.cycle, e.core, e.access_id)):
            w.writerow([e.cycle, e.core, e.chain_id, e.period_index, e.task_index, e.block_id, e.access_id, e.level])
