"""Reference semantics for DCR graphs.

Graphs are immutable values. Events are the integers ``1..event_count``;
labels are not modelled, an event is identified by its index alone.
This module is the oracle the on-chain contract is checked against, so it
stays deliberately close to the set-based definitions and avoids any of
the bit tricks used by the packed representation.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass, field
from enum import IntEnum
from functools import cached_property
from typing import Iterable, Mapping, NamedTuple, Sequence

from .errors import (
    DanglingReference,
    DuplicateRelation,
    NotEnabled,
    NotEnabledAtStep,
    TooManyEvents,
    UnknownEvent,
)

MAX_EVENTS = 61
ADDRESS_LEN = 32


class RelationKind(IntEnum):
    # values are the bit offsets inside a packed links group
    INCLUDE = 0
    EXCLUDE = 1
    MILESTONE = 2
    CONDITION = 3
    RESPONSE = 4

    @classmethod
    def parse(cls, name: str) -> RelationKind:
        try:
            return cls[name.upper()]
        except KeyError:
            raise ValueError(f"unknown relation kind {name!r}") from None

    @property
    def label(self) -> str:
        return self.name.lower()

    @property
    def is_out_link(self) -> bool:
        """Effects (include, exclude, response) are stored on the source's row."""
        return self in (RelationKind.INCLUDE, RelationKind.EXCLUDE, RelationKind.RESPONSE)


class Relation(NamedTuple):
    source: int
    kind: RelationKind
    target: int

    def __str__(self) -> str:
        return f"{self.source} {self.kind.label} {self.target}"


@dataclass(frozen=True)
class Marking:
    executed: frozenset[int] = frozenset()
    pending: frozenset[int] = frozenset()
    included: frozenset[int] = frozenset()

    @classmethod
    def of(cls, executed: Iterable[int] = (), pending: Iterable[int] = (),
           included: Iterable[int] = ()) -> Marking:
        return cls(frozenset(executed), frozenset(pending), frozenset(included))

    def events(self) -> frozenset[int]:
        return self.executed | self.pending | self.included

    def status(self, e: int) -> tuple[bool, bool, bool]:
        """(included, pending, executed) flags of one event."""
        return (e in self.included, e in self.pending, e in self.executed)


def derive_address(tag: str | bytes) -> bytes:
    """Deterministic 32-byte account address for a human-readable tag."""
    if isinstance(tag, str):
        tag = tag.encode()
    return hashlib.sha256(tag).digest()


@dataclass(frozen=True)
class DcrGraph:
    event_count: int
    relations: frozenset[Relation]
    marking: Marking
    executors: tuple[bytes, ...]
    creator: bytes = field(default=bytes(ADDRESS_LEN))

    @property
    def events(self) -> range:
        return range(1, self.event_count + 1)

    def executor(self, e: int) -> bytes:
        self._check_event(e)
        return self.executors[e - 1]

    def with_marking(self, marking: Marking) -> DcrGraph:
        return DcrGraph(self.event_count, self.relations, marking, self.executors, self.creator)

    def _check_event(self, e: int) -> None:
        if not isinstance(e, int) or not 1 <= e <= self.event_count:
            raise UnknownEvent(f"event {e!r} is not in 1..{self.event_count}")

    @cached_property
    def _index(self) -> dict[tuple[int, RelationKind], frozenset[int]]:
        # conditions/milestones are keyed by target, effects by source
        acc: dict[tuple[int, RelationKind], set[int]] = {}
        for r in self.relations:
            if r.kind.is_out_link:
                acc.setdefault((r.source, r.kind), set()).add(r.target)
            else:
                acc.setdefault((r.target, r.kind), set()).add(r.source)
        return {k: frozenset(v) for k, v in acc.items()}

    def conditions_of(self, e: int) -> frozenset[int]:
        """Sources ``c`` with ``c ->* e``."""
        return self._index.get((e, RelationKind.CONDITION), frozenset())

    def milestones_of(self, e: int) -> frozenset[int]:
        return self._index.get((e, RelationKind.MILESTONE), frozenset())

    def responses(self, e: int) -> frozenset[int]:
        return self._index.get((e, RelationKind.RESPONSE), frozenset())

    def includes(self, e: int) -> frozenset[int]:
        return self._index.get((e, RelationKind.INCLUDE), frozenset())

    def excludes(self, e: int) -> frozenset[int]:
        return self._index.get((e, RelationKind.EXCLUDE), frozenset())


def new_graph(
    event_count: int,
    relations: Iterable[Relation | tuple[int, RelationKind | int | str, int]] = (),
    initial_marking: Marking | None = None,
    executors: Mapping[int, bytes] | Sequence[bytes] | None = None,
    creator: bytes = bytes(ADDRESS_LEN),
) -> DcrGraph:
    """Validate inputs and build a graph.

    ``executors`` may be a mapping ``event -> address`` or a sequence indexed
    from event 1. When omitted every event gets a derived address.
    """
    if not isinstance(event_count, int) or event_count < 0:
        raise ValueError(f"event_count must be a non-negative int, got {event_count!r}")
    if event_count > MAX_EVENTS:
        raise TooManyEvents(f"{event_count} events exceeds the limit of {MAX_EVENTS}")

    def check(e: object, what: str) -> None:
        if not isinstance(e, int) or not 1 <= e <= event_count:
            raise DanglingReference(f"{what} {e!r} is not an event of a {event_count}-event graph")

    rels: set[Relation] = set()
    for raw in relations:
        src, kind, dst = raw
        if isinstance(kind, str):
            kind = RelationKind.parse(kind)
        rel = Relation(src, RelationKind(kind), dst)
        check(rel.source, "relation source")
        check(rel.target, "relation target")
        if rel in rels:
            raise DuplicateRelation(f"duplicate relation {rel}")
        rels.add(rel)

    marking = initial_marking if initial_marking is not None else Marking()
    for e in marking.events():
        check(e, "marked event")

    if executors is None:
        execs = tuple(derive_address(f"executor-{i}") for i in range(1, event_count + 1))
    elif isinstance(executors, Mapping):
        missing = [i for i in range(1, event_count + 1) if i not in executors]
        if missing:
            raise DanglingReference(f"events without an executor: {missing}")
        for e in executors:
            check(e, "executor entry")
        execs = tuple(executors[i] for i in range(1, event_count + 1))
    else:
        execs = tuple(executors)
        if len(execs) != event_count:
            raise DanglingReference(f"expected {event_count} executors, got {len(execs)}")
    for a in (*execs, creator):
        if not isinstance(a, bytes) or len(a) != ADDRESS_LEN:
            raise ValueError(f"addresses must be {ADDRESS_LEN} bytes")

    return DcrGraph(event_count, frozenset(rels), marking, execs, creator)


def enabled(graph: DcrGraph, e: int) -> bool:
    graph._check_event(e)
    m = graph.marking
    if e not in m.included:
        return False
    if not (graph.conditions_of(e) & m.included) <= m.executed:
        return False
    return not (graph.milestones_of(e) & m.pending & m.included)


def enabled_events(graph: DcrGraph) -> list[int]:
    return [e for e in graph.events if enabled(graph, e)]


def execute(graph: DcrGraph, e: int) -> DcrGraph:
    if not enabled(graph, e):
        raise NotEnabled(f"event {e} is not enabled")
    m = graph.marking
    executed = m.executed | {e}
    pending = (m.pending - {e}) | graph.responses(e)
    # exclusion first, inclusion second: include wins on the same target
    included = (m.included - graph.excludes(e)) | graph.includes(e)
    return graph.with_marking(Marking(executed, pending, included))


def is_accepting(graph: DcrGraph) -> bool:
    return not (graph.marking.pending & graph.marking.included)


def run_trace(graph: DcrGraph, trace: Iterable[int]) -> tuple[DcrGraph, bool]:
    """Execute ``trace`` left to right; report whether the final state accepts."""
    for step, e in enumerate(trace):
        if not enabled(graph, e):
            raise NotEnabledAtStep(step, e)
        graph = execute(graph, e)
    return graph, is_accepting(graph)


def random_graph(seed: int | str, event_count: int, relation_density: float) -> DcrGraph:
    """Deterministic random graph for fuzzing.

    Each of the ``5 * n * n`` possible relations is present independently with
    probability ``relation_density``. The initial marking has random included
    and pending sets and nothing executed, so it can be built on chain.
    """
    if event_count > MAX_EVENTS:
        raise TooManyEvents(f"{event_count} events exceeds the limit of {MAX_EVENTS}")
    if not 0.0 <= relation_density <= 1.0:
        raise ValueError("relation_density must lie in [0, 1]")
    rng = random.Random(f"dcr-graph:{seed}:{event_count}:{relation_density!r}")
    events = range(1, event_count + 1)
    rels = [
        Relation(s, k, t)
        for s in events
        for k in RelationKind
        for t in events
        if rng.random() < relation_density
    ]
    included = [e for e in events if rng.random() < 0.8]
    pending = [e for e in events if rng.random() < 0.2]
    return new_graph(
        event_count,
        rels,
        Marking.of(included=included, pending=pending),
        creator=derive_address("creator"),
    )
