"""Differential testing of the contract against the reference semantics.

Every step is applied to both sides: the reference graph value and the
contract running inside a fresh simulated ledger. The two must agree on
whether the event was accepted and, afterwards, on the decoded marking.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

from .avm import Ledger
from .contract import PROGRAM_NAME, DcrClient, deploy_graph
from .encoding import KEY_MARKING, decode_marking, encode_marking
from .dcr import DcrGraph, Marking, Relation, RelationKind, enabled, execute, new_graph, random_graph

FUNDING = 10**12
DEFAULT_DENSITIES = (0.05, 0.15, 0.5)


@dataclass(frozen=True)
class Mismatch:
    step: int
    event: int
    kind: str  # "enabledness" or "marking"
    reference: object
    contract: object

    def __str__(self) -> str:
        return (f"step {self.step}, event {self.event}: {self.kind} differs "
                f"(reference={self.reference}, contract={self.contract})")


def fresh_ledger(graph: DcrGraph) -> Ledger:
    ledger = Ledger()
    ledger.fund(graph.creator, FUNDING)
    for addr in set(graph.executors):
        ledger.fund(addr, FUNDING)
    return ledger


def compare_step(ref: DcrGraph, client: DcrClient, step: int, e: int) -> tuple[DcrGraph, Mismatch | None]:
    ok = enabled(ref, e)
    result = client.execute(e)
    if result.approved != ok:
        return ref, Mismatch(step, e, "enabledness", ok, f"{result.approved} ({result.reason})")
    if ok:
        ref = execute(ref, e)
    got = client.marking()
    if got != ref.marking:
        return ref, Mismatch(step, e, "marking", ref.marking, got)
    return ref, None


def check_case(graph: DcrGraph, trace: Sequence[int], program: str = PROGRAM_NAME) -> Mismatch | None:
    """Replay ``trace`` on both sides from scratch; return the first disagreement."""
    ledger = fresh_ledger(graph)
    client = deploy_graph(ledger, graph, program=program).client
    if client.marking() != graph.marking:
        return Mismatch(-1, 0, "marking", graph.marking, client.marking())
    ref = graph
    for step, e in enumerate(trace):
        ref, bad = compare_step(ref, client, step, e)
        if bad:
            return bad
    return None


def _drop_event(graph: DcrGraph, e: int) -> DcrGraph:
    """Remove event ``e`` and renumber the ones above it."""
    def ren(x: int) -> int:
        return x - 1 if x > e else x

    rels = [Relation(ren(r.source), r.kind, ren(r.target)) for r in graph.relations
            if e not in (r.source, r.target)]
    m = graph.marking
    marking = Marking.of(*([ren(x) for x in s if x != e] for s in (m.executed, m.pending, m.included)))
    execs = graph.executors[:e - 1] + graph.executors[e:]
    return new_graph(graph.event_count - 1, rels, marking, execs, graph.creator)


def shrink(graph: DcrGraph, trace: Sequence[int], program: str = PROGRAM_NAME,
           budget: int = 2000) -> tuple[DcrGraph, list[int], Mismatch]:
    """Greedy minimisation of a failing (graph, trace) pair.

    Repeatedly tries to drop trace steps, relations, marking entries and
    whole events, keeping any reduction that still fails. Deterministic.
    """
    bad = check_case(graph, trace, program)
    assert bad is not None, "shrink needs a failing case"
    trace = list(trace[:bad.step + 1]) if bad.step >= 0 else []
    tries = 0

    def fails(g: DcrGraph, t: Sequence[int]) -> Mismatch | None:
        nonlocal tries
        tries += 1
        return check_case(g, t, program)

    changed = True
    while changed and tries < budget:
        changed = False
        for i in range(len(trace)):
            cand = trace[:i] + trace[i + 1:]
            if (m := fails(graph, cand)):
                trace, bad, changed = cand[:m.step + 1] if m.step >= 0 else [], m, True
                break
        if changed:
            continue
        for r in sorted(graph.relations):
            g = new_graph(graph.event_count, graph.relations - {r}, graph.marking, graph.executors, graph.creator)
            if (m := fails(g, trace)):
                graph, bad, changed = g, m, True
                break
        if changed:
            continue
        mk = graph.marking
        for field_name in ("pending", "included"):
            for x in sorted(getattr(mk, field_name)):
                sets = {"executed": mk.executed, "pending": mk.pending, "included": mk.included}
                sets[field_name] = sets[field_name] - {x}
                g = graph.with_marking(Marking(**sets))
                if (m := fails(g, trace)):
                    graph, bad, changed = g, m, True
                    break
            if changed:
                break
        if changed:
            continue
        for e in reversed(graph.events):
            if e in trace:
                continue
            g = _drop_event(graph, e)
            t = [x - 1 if x > e else x for x in trace]
            if (m := fails(g, t)):
                graph, trace, bad, changed = g, t, m, True
                break
    return graph, trace, bad


@dataclass
class Counterexample:
    iteration: int
    seed: str
    graph: DcrGraph
    trace: list[int]
    mismatch: Mismatch


@dataclass
class FuzzReport:
    seed: int | str
    iterations: int
    graphs: int = 0
    steps: int = 0
    rejections_checked: int = 0
    max_events_seen: int = 0
    mismatches: int = 0
    counterexample: Counterexample | None = None

    @property
    def passed(self) -> bool:
        return self.mismatches == 0


def fuzz(
    seed: int | str,
    iterations: int,
    max_events: int = 61,
    densities: Sequence[float] = DEFAULT_DENSITIES,
    max_steps: int = 100,
    program: str = PROGRAM_NAME,
    stop_on_failure: bool = True,
    minimize: bool = True,
) -> FuzzReport:
    """Random graphs, random enabled-event traces, both sides in lock step.

    Iteration ``i`` draws everything from a generator seeded with
    ``"{seed}:{i}"``, so any failure is reproducible from those two values.
    """
    report = FuzzReport(seed, iterations)
    for i in range(iterations):
        case_seed = f"{seed}:{i}"
        rng = random.Random(case_seed)
        n = rng.randint(0, max_events)
        density = densities[i % len(densities)]
        graph = random_graph(case_seed, n, density)
        report.graphs += 1
        report.max_events_seen = max(report.max_events_seen, n)

        ledger = fresh_ledger(graph)
        client = deploy_graph(ledger, graph, program=program).client
        ref = graph
        trace: list[int] = []
        probe_at = rng.randrange(max_steps + 1)
        bad = None if client.marking() == graph.marking else Mismatch(-1, 0, "marking", graph.marking, client.marking())
        probed = False
        for step in range(max_steps + 1 if bad is None else 0):
            choices = [] if step == max_steps else [e for e in graph.events if enabled(ref, e)]
            # one non-enabled event per graph: at the drawn step, or when the trace ends
            if not probed and (step >= probe_at or not choices):
                probed = True
                blocked = [e for e in graph.events if not enabled(ref, e)]
                if blocked:
                    e = rng.choice(blocked)
                    trace.append(e)
                    ref, bad = compare_step(ref, client, len(trace) - 1, e)
                    report.rejections_checked += 1
                    if bad:
                        break
            if not choices:
                break
            e = rng.choice(choices)
            trace.append(e)
            ref, bad = compare_step(ref, client, len(trace) - 1, e)
            report.steps += 1
            if bad:
                break

        if bad is not None:
            report.mismatches += 1
            if report.counterexample is None:
                g, t, m = shrink(graph, trace, program) if minimize else (graph, trace, bad)
                report.counterexample = Counterexample(i, case_seed, g, t, m)
            if stop_on_failure:
                report.iterations = i + 1
                break
    return report


@dataclass
class ExhaustiveReport:
    graphs: int = 0
    transitions: int = 0
    markings: int = 0
    mismatches: list[tuple[DcrGraph, Mismatch]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.mismatches


def all_included(n: int) -> list[Marking]:
    return [Marking.of(included=range(1, n + 1))]


def small_initial_markings(n: int) -> list[Marking]:
    """Initial markings used for every enumerated graph.

    Everything included and nothing pending, everything included and
    everything pending, and a mixed marking with event 1 excluded.
    """
    events = range(1, n + 1)
    out = [Marking.of(included=events), Marking.of(included=events, pending=events)]
    if n >= 2:
        out.append(Marking.of(included=range(2, n + 1), pending=[1, n]))
    return out


def _explore(graph: DcrGraph, client: DcrClient, depth: int, report: ExhaustiveReport) -> None:
    """Check every trace of length <= ``depth`` from ``graph``'s marking.

    Breadth-first over reachable markings: trying every event at every
    marking reached within ``depth - 1`` steps covers every such trace.
    ``execute`` may only write the marking pair, so instead of copying the
    ledger per branch the pair is reset to the source marking before each
    call, and any other write is reported as a mismatch.
    """
    app = client.app
    state = app.global_state
    executors = graph.executors
    frontier = [graph]
    seen = {graph.marking}
    packed = {graph.marking: encode_marking(graph.marking, graph.event_count).data}
    for level in range(depth):
        nxt = []
        for ref in frontier:
            src = packed[ref.marking]
            for e in ref.events:
                state[KEY_MARKING] = src
                ok = enabled(ref, e)
                result = client.execute(e, sender=executors[e - 1])
                report.transitions += 1
                ref2 = execute(ref, e) if ok else ref
                if ref2.marking not in packed:
                    packed[ref2.marking] = encode_marking(ref2.marking, ref2.event_count).data
                bad = None
                if result.approved != ok:
                    bad = Mismatch(level, e, "enabledness", ok, f"{result.approved} ({result.reason})")
                elif state[KEY_MARKING] != packed[ref2.marking]:
                    bad = Mismatch(level, e, "marking", ref2.marking,
                                   decode_marking(state[KEY_MARKING], ref.event_count))
                elif ok and (set(result.state_delta["global"]) != {KEY_MARKING} or result.state_delta["local"]):
                    bad = Mismatch(level, e, "writes", {KEY_MARKING}, result.state_delta)
                if bad:
                    report.mismatches.append((ref, bad))
                    return
                if ref2.marking not in seen and level + 1 < depth:
                    seen.add(ref2.marking)
                    nxt.append(ref2)
        frontier = nxt
    report.markings += len(seen)


def exhaustive(
    max_events: int = 3,
    max_relations: int = 4,
    depth: int = 4,
    program: str = PROGRAM_NAME,
    markings: Callable[[int], list[Marking]] = all_included,
) -> ExhaustiveReport:
    """Check every graph with up to ``max_events`` events and ``max_relations`` relations.

    Each graph starts from every marking ``markings(n)`` returns. Excluded
    and pending states are still reached through the relations themselves.

    Relation subsets are enumerated depth-first so that each graph's contract
    is obtained from its parent's by a single ``add_relation`` call.
    """
    report = ExhaustiveReport()
    for n in range(max_events + 1):
        events = range(1, n + 1)
        triples = [Relation(s, k, t) for s in events for k in RelationKind for t in events]
        for marking in markings(n) if n else [Marking()]:
            base = new_graph(n, (), marking)
            ledger = fresh_ledger(base)
            app_id = deploy_graph(ledger, base, program=program).app_id

            def visit(start: int, chosen: list[Relation], led: Ledger) -> None:
                g = new_graph(n, chosen, marking, base.executors, base.creator)
                report.graphs += 1
                client = DcrClient(led, app_id)
                _explore(g, client, depth, report)
                client.app.global_state[KEY_MARKING] = encode_marking(marking, n).data
                if len(chosen) == max_relations:
                    return
                for idx in range(start, len(triples)):
                    child = led.copy()
                    r = triples[idx]
                    res = DcrClient(child, app_id).add_relation(r.source, r.kind, r.target)
                    if not res.approved:
                        raise RuntimeError(f"add_relation {r} rejected: {res.reason}")
                    visit(idx + 1, chosen + [r], child)

            visit(0, [], ledger)
    return report


def all_relation_sets(n: int, max_relations: int) -> Iterable[tuple[Relation, ...]]:
    events = range(1, n + 1)
    triples = [Relation(s, k, t) for s in events for k in RelationKind for t in events]
    for size in range(max_relations + 1):
        yield from itertools.combinations(triples, size)


@dataclass
class BudgetReport:
    event_count: int
    max_ops: dict[str, int] = field(default_factory=dict)
    calls: int = 0
    approved: dict[str, int] = field(default_factory=dict)

    def record(self, handler: str, result) -> None:
        self.calls += 1
        self.max_ops[handler] = max(self.max_ops.get(handler, 0), result.ops_used)
        if result.approved:
            self.approved[handler] = self.approved.get(handler, 0) + 1

    @property
    def overall_max(self) -> int:
        return max(self.max_ops.values(), default=0)


def _saturated(n: int, kinds: Iterable[RelationKind]) -> DcrGraph:
    kinds = list(kinds)
    rels = [Relation(s, k, t) for s in range(1, n + 1) for k in kinds for t in range(1, n + 1)]
    return new_graph(n, rels, Marking.of(included=range(1, n + 1)))


def measure_budget(event_count: int = 61, program: str = PROGRAM_NAME) -> BudgetReport:
    """Worst-case op counts of every handler on saturated graphs.

    With every relation present each event conditions itself, so execution
    can only take the blocked branch. A second graph saturated with the
    effect relations alone lets every execution succeed; the partner loop
    runs over all events either way.
    """
    report = BudgetReport(event_count)
    full = _saturated(event_count, RelationKind)
    built = deploy_graph(fresh_ledger(full), full, program=program)
    for label, res in built.steps:
        report.record(label.split()[0], res)
    client = built.client
    for e in full.events:
        report.record("execute", client.execute(e))
        for status in ("pend", "exclude", "include"):
            report.record("update_status", client.update_status(e, status))

    effects = _saturated(event_count, (RelationKind.INCLUDE, RelationKind.EXCLUDE, RelationKind.RESPONSE))
    built = deploy_graph(fresh_ledger(effects), effects, program=program)
    for e in effects.events:
        report.record("execute", built.client.execute(e))
    return report
