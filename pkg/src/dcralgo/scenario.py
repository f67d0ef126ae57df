"""Scripted runs against a freshly constructed contract.

    scenario v1
    graph corpus:mortgage.dcr           # or a path relative to the scenario file
    check non-accepting
    check enabled 1 2 3 4
    exec 6 expect=NotEnabled
    exec 1                              # sender defaults to the event's executor
    exec 2 as=creator expect=NotExecutor
    status 6 pend                       # sent by the creator
    check event 4 excluded pending

``exec`` senders: ``executor`` (default), ``executor:<id>``, ``creator`` or a
64-hex-char address. ``expect`` is ``approved`` (default) or a reject code.
``check event`` takes any of included, excluded, pending, not-pending,
executed, not-executed.
"""

from __future__ import annotations

import shlex
from dataclasses import dataclass, field
from importlib.resources import files
from pathlib import Path

from .avm import Ledger
from .contract import STATUS_CODES, DcrClient, deploy
from .dcr import ADDRESS_LEN, Marking, derive_address, enabled_events, is_accepting
from .errors import ParseError
from .graphfile import GraphFile, load_graph, parse_graph

HEADER = "scenario v1"
CORPUS_PREFIX = "corpus:"
EVENT_FLAGS = {
    "included": ("included", True),
    "excluded": ("included", False),
    "pending": ("pending", True),
    "not-pending": ("pending", False),
    "executed": ("executed", True),
    "not-executed": ("executed", False),
}


def corpus_text(name: str) -> str:
    return files("dcralgo").joinpath("corpus", name).read_text()


def corpus_names() -> list[str]:
    return sorted(p.name for p in files("dcralgo").joinpath("corpus").iterdir() if p.is_file())


def load_graph_ref(ref: str, base: Path | None = None, allow_executed: bool = False) -> GraphFile:
    """Load ``corpus:<name>`` from the package or a path relative to ``base``."""
    if ref.startswith(CORPUS_PREFIX):
        return parse_graph(corpus_text(ref[len(CORPUS_PREFIX):]), allow_executed)
    path = Path(ref)
    if base is not None and not path.is_absolute():
        path = base / path
    return load_graph(path, allow_executed)


@dataclass(frozen=True)
class Step:
    line: int
    verb: str  # exec, status, check
    event: int = 0
    sender: str = "executor"
    expect: str = "approved"
    status: str = ""
    check: str = ""
    operands: tuple[str, ...] = ()

    def describe(self) -> str:
        if self.verb == "exec":
            return f"exec {self.event} as={self.sender}"
        if self.verb == "status":
            return f"status {self.event} {self.status}"
        return " ".join(("check", self.check, *self.operands))


@dataclass
class Scenario:
    graph_ref: str
    steps: list[Step] = field(default_factory=list)


def _event_id(tok: str, lineno: int) -> int:
    try:
        e = int(tok, 10)
    except ValueError:
        raise ParseError(f"event id must be a decimal integer, got {tok!r}", lineno) from None
    if e < 1:
        raise ParseError(f"event id must be positive, got {e}", lineno)
    return e


def _options(toks: list[str], allowed: set[str], lineno: int) -> dict[str, str]:
    opts = {}
    for tok in toks:
        key, eq, value = tok.partition("=")
        if not eq or key not in allowed:
            raise ParseError(f"unexpected token {tok!r}", lineno)
        opts[key] = value
    return opts


def parse_scenario(text: str) -> Scenario:
    graph_ref = None
    steps: list[Step] = []
    seen_header = False
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
        verb, rest = toks[0], toks[1:]
        if verb == "graph":
            if len(rest) != 1 or graph_ref is not None:
                raise ParseError("exactly one 'graph <path>' line is required", lineno)
            graph_ref = rest[0]
        elif verb == "exec":
            if not rest:
                raise ParseError("exec needs an event id", lineno)
            opts = _options(rest[1:], {"as", "expect"}, lineno)
            sender = opts.get("as", "executor")
            _check_sender(sender, lineno)
            steps.append(Step(lineno, "exec", _event_id(rest[0], lineno), sender=sender,
                              expect=opts.get("expect", "approved")))
        elif verb == "status":
            if len(rest) < 2 or rest[1] not in STATUS_CODES:
                raise ParseError("expected: status <id> include|exclude|pend", lineno)
            opts = _options(rest[2:], {"expect"}, lineno)
            steps.append(Step(lineno, "status", _event_id(rest[0], lineno), sender="creator",
                              status=rest[1], expect=opts.get("expect", "approved")))
        elif verb == "check":
            steps.append(_parse_check(rest, lineno))
        else:
            raise ParseError(f"unknown directive {verb!r}", lineno)
    if not seen_header:
        raise ParseError(f"missing header {HEADER!r}", 1)
    if graph_ref is None:
        raise ParseError("missing 'graph <path>' line", 1)
    return Scenario(graph_ref, steps)


def _check_sender(sender: str, lineno: int) -> None:
    if sender in ("executor", "creator"):
        return
    if sender.startswith("executor:"):
        _event_id(sender.split(":", 1)[1], lineno)
        return
    try:
        ok = len(bytes.fromhex(sender)) == ADDRESS_LEN
    except ValueError:
        ok = False
    if not ok:
        raise ParseError(f"bad sender {sender!r}", lineno)


def _parse_check(rest: list[str], lineno: int) -> Step:
    if not rest:
        raise ParseError("check needs a subject", lineno)
    what, ops = rest[0], tuple(rest[1:])
    if what in ("accepting", "non-accepting"):
        if ops:
            raise ParseError(f"check {what} takes no operands", lineno)
    elif what == "enabled":
        for tok in ops:
            _event_id(tok, lineno)
    elif what == "event":
        if not ops:
            raise ParseError("expected: check event <id> <flag>...", lineno)
        _event_id(ops[0], lineno)
        for tok in ops[1:]:
            if tok not in EVENT_FLAGS:
                raise ParseError(f"unknown event flag {tok!r}", lineno)
    else:
        raise ParseError(f"unknown check {what!r}", lineno)
    return Step(lineno, "check", check=what, operands=ops)


def load_scenario(path: str | Path) -> Scenario:
    return parse_scenario(Path(path).read_text())


@dataclass(frozen=True)
class StepOutcome:
    step: Step
    ok: bool
    detail: str
    ops_used: int | None = None


@dataclass
class ReplayReport:
    app_id: int
    txn_count: int
    outcomes: list[StepOutcome]
    final: Marking

    @property
    def passed(self) -> bool:
        return all(o.ok for o in self.outcomes)


def _resolve_sender(client: DcrClient, sender: str, event: int) -> bytes:
    if sender == "executor":
        return client.executor(event)
    if sender == "creator":
        return client.creator
    if sender.startswith("executor:"):
        return client.executor(int(sender.split(":", 1)[1]))
    return bytes.fromhex(sender)


def _run_check(client: DcrClient, step: Step) -> tuple[bool, str]:
    graph = client.graph()
    if step.check in ("accepting", "non-accepting"):
        verdict = "accepting" if is_accepting(graph) else "non-accepting"
        return verdict == step.check, verdict
    if step.check == "enabled":
        got = sorted(enabled_events(graph))
        want = sorted(int(t) for t in step.operands)
        return got == want, f"enabled {got}"
    e = int(step.operands[0])
    if not 1 <= e <= graph.event_count:
        return False, f"no event {e}"
    m = graph.marking
    ok = all((e in getattr(m, attr)) == want for attr, want in (EVENT_FLAGS[f] for f in step.operands[1:]))
    flags = [name for name, on in zip(("included", "pending", "executed"), m.status(e)) if on]
    return ok, f"event {e}: " + (" ".join(flags) or "excluded")


def replay(scenario: Scenario, base: Path | None = None, ledger: Ledger | None = None,
           creator: bytes | None = None, funding: int = 10**12) -> ReplayReport:
    """Construct the scenario's graph on a fresh ledger and run every step.

    Failed expectations are recorded, not raised, so the report shows all of them.
    """
    gf = load_graph_ref(scenario.graph_ref, base)
    ledger = ledger or Ledger()
    creator = creator or derive_address("creator")
    ledger.fund(creator, funding)
    for addr in set(gf.executors):
        ledger.fund(addr, funding)
    built = deploy(ledger, creator, gf.executors, gf.relations, gf.marking)
    client = built.client

    outcomes = []
    for step in scenario.steps:
        if step.verb == "check":
            ok, detail = _run_check(client, step)
            outcomes.append(StepOutcome(step, ok, detail))
            continue
        sender = _resolve_sender(client, step.sender, step.event)
        if step.verb == "exec":
            res = client.execute(step.event, sender=sender)
        else:
            res = client.update_status(step.event, step.status, sender=sender)
        got = "approved" if res.approved else res.reason
        outcomes.append(StepOutcome(step, got == step.expect, got, res.ops_used))
    return ReplayReport(built.app_id, built.txn_count, outcomes, client.marking())
