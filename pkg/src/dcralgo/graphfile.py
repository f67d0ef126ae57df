"""Line-oriented text format for DCR graphs.

    dcrgraph v1
    event 1 executor=<64 hex chars> included pending name="Collect documents"
    rel 1 condition 6

``#`` starts a comment. Event ids must be declared densely, in order, from 1.
Names are carried for people and ignored by the semantics.
"""

from __future__ import annotations

import shlex
from dataclasses import dataclass, field
from pathlib import Path

from .dcr import ADDRESS_LEN, DcrGraph, Marking, Relation, RelationKind, new_graph
from .errors import ParseError

HEADER = "dcrgraph v1"
FLAGS = ("included", "pending", "executed")


@dataclass(frozen=True)
class EventDecl:
    id: int
    executor: bytes
    included: bool = False
    pending: bool = False
    executed: bool = False
    name: str | None = None


@dataclass
class GraphFile:
    events: list[EventDecl] = field(default_factory=list)
    relations: list[Relation] = field(default_factory=list)

    @property
    def executors(self) -> list[bytes]:
        return [e.executor for e in self.events]

    @property
    def marking(self) -> Marking:
        return Marking.of(
            executed=[e.id for e in self.events if e.executed],
            pending=[e.id for e in self.events if e.pending],
            included=[e.id for e in self.events if e.included],
        )

    @property
    def names(self) -> dict[int, str]:
        return {e.id: e.name for e in self.events if e.name is not None}

    def to_graph(self, creator: bytes = bytes(ADDRESS_LEN)) -> DcrGraph:
        return new_graph(len(self.events), self.relations, self.marking, self.executors, creator)


def _int(tok: str, lineno: int, what: str) -> int:
    try:
        return int(tok, 10)
    except ValueError:
        raise ParseError(f"{what} must be a decimal integer, got {tok!r}", lineno) from None


def parse_graph(text: str, allow_executed: bool = False) -> GraphFile:
    """Parse graph-file text.

    Initially executed events cannot be established by the contract's status
    updates, so ``executed`` is rejected unless ``allow_executed`` is set.
    """
    gf = GraphFile()
    seen_header = False
    rels: set[Relation] = set()
    rel_lines: list[tuple[int, Relation]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        try:
            toks = shlex.split(raw, comments=True)
        except ValueError as err:
            raise ParseError(str(err), lineno) from None
        if not toks:
            continue
        if not seen_header:
            if " ".join(toks) != HEADER:
                raise ParseError(f"expected header {HEADER!r}", lineno)
            seen_header = True
            continue

        head, rest = toks[0], toks[1:]
        if head == "event":
            if not rest:
                raise ParseError("event needs an id", lineno)
            eid = _int(rest[0], lineno, "event id")
            if eid != len(gf.events) + 1:
                raise ParseError(f"event ids must be dense and ordered; expected {len(gf.events) + 1}, got {eid}", lineno)
            executor, name, flags = None, None, set()
            for tok in rest[1:]:
                if tok.startswith("executor="):
                    hexaddr = tok.split("=", 1)[1]
                    try:
                        executor = bytes.fromhex(hexaddr)
                    except ValueError:
                        executor = None
                    if executor is None or len(executor) != ADDRESS_LEN or len(hexaddr) != 2 * ADDRESS_LEN:
                        raise ParseError("executor must be 64 hex characters", lineno)
                elif tok.startswith("name="):
                    name = tok.split("=", 1)[1]
                elif tok in FLAGS:
                    flags.add(tok)
                else:
                    raise ParseError(f"unexpected token {tok!r}", lineno)
            if executor is None:
                raise ParseError(f"event {eid} has no executor", lineno)
            if "executed" in flags and not allow_executed:
                raise ParseError(f"event {eid}: an initially executed event cannot be set on chain", lineno)
            gf.events.append(EventDecl(eid, executor, "included" in flags, "pending" in flags,
                                       "executed" in flags, name))
        elif head == "rel":
            if len(rest) != 3:
                raise ParseError("expected: rel <src-id> <kind> <dst-id>", lineno)
            try:
                kind = RelationKind.parse(rest[1])
            except ValueError as err:
                raise ParseError(str(err), lineno) from None
            rel = Relation(_int(rest[0], lineno, "source"), kind, _int(rest[2], lineno, "target"))
            if rel in rels:
                raise ParseError(f"duplicate relation {rel}", lineno)
            rels.add(rel)
            rel_lines.append((lineno, rel))
        else:
            raise ParseError(f"unknown directive {head!r}", lineno)

    if not seen_header:
        raise ParseError(f"missing header {HEADER!r}", 1)
    n = len(gf.events)
    for lineno, rel in rel_lines:
        if not (1 <= rel.source <= n and 1 <= rel.target <= n):
            raise ParseError(f"relation {rel} references an undeclared event", lineno)
    gf.relations = [r for _, r in rel_lines]
    return gf


def load_graph(path: str | Path, allow_executed: bool = False) -> GraphFile:
    return parse_graph(Path(path).read_text(), allow_executed)


def _quote(name: str) -> str:
    return '"' + name.replace("\\", "\\\\").replace('"', '\\"') + '"'


def format_graph(graph: DcrGraph, names: dict[int, str] | None = None) -> str:
    names = names or {}
    m = graph.marking
    lines = [HEADER]
    for e in graph.events:
        parts = [f"event {e}", f"executor={graph.executor(e).hex()}"]
        parts += [flag for flag, on in zip(FLAGS, (e in m.included, e in m.pending, e in m.executed)) if on]
        if e in names:
            parts.append(f"name={_quote(names[e])}")
        lines.append(" ".join(parts))
    for r in sorted(graph.relations):
        lines.append(f"rel {r.source} {r.kind.label} {r.target}")
    return "\n".join(lines) + "\n"
