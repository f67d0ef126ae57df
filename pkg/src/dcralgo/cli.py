"""Command-line front end.

Exit status: 0 on success, 1 on domain errors (parse, ledger, contract,
mismatch), 2 on usage errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import Any

from . import cost
from .avm import Ledger
from .contract import DcrClient, deploy, read_image
from .dcr import ADDRESS_LEN, MAX_EVENTS, DcrGraph, Marking, derive_address, enabled, is_accepting, run_trace
from .errors import DcrAlgoError, DifferentialMismatch
from .graphfile import format_graph
from .harness import DEFAULT_DENSITIES, fuzz
from .scenario import load_graph_ref, load_scenario, replay

DEFAULT_FUND = 100 * cost.MICROALGOS_PER_ALGO


class UsageError(Exception):
    pass


def parse_address(text: str) -> bytes:
    """64 hex characters are taken literally; anything else names a role."""
    if len(text) == 2 * ADDRESS_LEN:
        try:
            return bytes.fromhex(text)
        except ValueError:
            pass
    return derive_address(text)


def _decimal(text: str) -> Decimal:
    try:
        value = Decimal(text)
    except InvalidOperation:
        raise argparse.ArgumentTypeError(f"not a decimal number: {text!r}") from None
    if not value.is_finite() or value <= 0:
        raise argparse.ArgumentTypeError("rate must be a positive number")
    return value


def _density(text: str) -> float:
    value = float(text)
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError("density must lie in [0, 1]")
    return value


def _trace(text: str) -> list[int]:
    try:
        return [int(t) for t in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"trace must be event ids, got {text!r}") from None


def _emit(args: argparse.Namespace, doc: dict[str, Any], lines: list[str]) -> None:
    if args.json:
        print(json.dumps(doc, indent=2, sort_keys=True, default=str))
    else:
        print("\n".join(lines))


def _load_ledger(path: Path) -> Ledger:
    try:
        return Ledger.loads(path.read_text())
    except FileNotFoundError:
        raise UsageError(f"ledger file {path} does not exist; run 'create' first") from None


def _save_ledger(ledger: Ledger, path: Path) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(ledger.dumps())
    tmp.replace(path)


def _status_table(graph: DcrGraph) -> list[dict[str, Any]]:
    m = graph.marking
    return [
        {"event": e, "included": e in m.included, "pending": e in m.pending,
         "executed": e in m.executed, "enabled": enabled(graph, e),
         "executor": graph.executor(e).hex()}
        for e in graph.events
    ]


def _marking_delta(before: Marking, after: Marking, n: int) -> dict[int, dict[str, list[bool]]]:
    names = ("included", "pending", "executed")
    delta = {}
    for e in range(1, n + 1):
        changed = {k: [a, b] for k, a, b in zip(names, before.status(e), after.status(e)) if a != b}
        if changed:
            delta[e] = changed
    return delta


# -- commands ------------------------------------------------------------------

def cmd_create(args: argparse.Namespace) -> int:
    gf = load_graph_ref(str(args.graph))
    path = Path(args.ledger)
    ledger = Ledger.loads(path.read_text()) if path.exists() else Ledger()
    creator = parse_address(args.creator)
    ledger.fund(creator, args.fund)
    for addr in set(gf.executors):
        ledger.fund(addr, args.fund)
    built = deploy(ledger, creator, gf.executors, gf.relations, gf.marking)
    _save_ledger(ledger, path)

    app = built.client.app
    escrow = app.escrow_locked + sum(app.optin_locks.values())
    steps = [{"step": 0, "call": "deploy", "fee": ledger.fee}]
    steps += [{"step": i, "call": label, "fee": r.fee, "ops_used": r.ops_used}
              for i, (label, r) in enumerate(built.steps, start=1)]
    doc = {"app_id": built.app_id, "txn_count": built.txn_count, "fees": built.fees,
           "escrow_locked": escrow, "storage_optins": built.optins, "steps": steps}
    lines = [f"app {built.app_id}: {built.txn_count} transactions, "
             f"fees {built.fees} microAlgos, escrow locked {escrow} microAlgos"]
    if built.optins:
        lines.append(f"storage accounts opted in: {built.optins} (fees not counted above)")
    lines += [f"  {s['step']:>3}  {s['call']:<40} fee {s['fee']}" for s in steps]
    _emit(args, doc, lines)
    return 0


def cmd_exec(args: argparse.Namespace) -> int:
    path = Path(args.ledger)
    ledger = _load_ledger(path)
    client = DcrClient(ledger, args.app)
    n = client.event_count()
    before = client.marking()
    if args.sender is None or args.sender == "executor":
        sender = client.executor(args.event)
    elif args.sender == "creator":
        sender = client.creator
    else:
        sender = parse_address(args.sender)
    result = client.execute(args.event, sender=sender, fee_payer=args.fee_payer)
    _save_ledger(ledger, path)

    after = client.marking()
    delta = _marking_delta(before, after, n)
    verdict = "approved" if result.approved else f"rejected ({result.reason})"
    doc = {"event": args.event, "approved": result.approved, "reason": result.reason,
           "ops_used": result.ops_used, "fee": result.fee, "delta": delta,
           "accepting": not (after.pending & after.included)}
    lines = [f"execute {args.event}: {verdict}, {result.ops_used} ops, fee {result.fee} microAlgos"]
    for e, changes in delta.items():
        lines.append(f"  event {e}: " + ", ".join(f"{k} {a} -> {b}" for k, (a, b) in changes.items()))
    _emit(args, doc, lines)
    return 0 if result.approved else 1


def cmd_state(args: argparse.Namespace) -> int:
    ledger = _load_ledger(Path(args.ledger))
    image = read_image(ledger, args.app)
    graph = DcrClient(ledger, args.app).graph()
    rows = _status_table(graph)
    accepting = is_accepting(graph)
    rels = [{"source": r.source, "kind": r.kind.label, "target": r.target} for r in sorted(graph.relations)]
    doc = {"app_id": args.app, "GC": image.creator.hex(), "TEN": image.event_count,
           "MK": image.marking.data.hex(), "events": rows, "relations": rels,
           "accepting": accepting}
    flag = lambda on, c: c if on else "-"  # noqa: E731
    lines = [f"GC  {image.creator.hex()}", f"TEN {image.event_count}", f"MK  {image.marking.data.hex() or '(empty)'}",
             "event  inc pend exec  enabled  executor"]
    lines += [f"{r['event']:>5}  {flag(r['included'], 'I'):>3} {flag(r['pending'], 'P'):>4} "
              f"{flag(r['executed'], 'X'):>4}  {str(r['enabled']):<7}  {r['executor'][:16]}" for r in rows]
    lines += [f"rel {r['source']} {r['kind']} {r['target']}" for r in rels]
    lines.append("accepting" if accepting else "non-accepting")
    _emit(args, doc, lines)
    return 0


def cmd_accepting(args: argparse.Namespace) -> int:
    if args.graph is not None:
        graph = load_graph_ref(str(args.graph), allow_executed=True).to_graph()
        graph, accepting = run_trace(graph, args.trace)
        source = str(args.graph)
    else:
        if args.app is None:
            raise UsageError("give a graph file or --app with --ledger")
        graph = DcrClient(_load_ledger(Path(args.ledger)), args.app).graph()
        accepting = is_accepting(graph)
        source = f"app {args.app}"
    blocking = sorted(graph.marking.pending & graph.marking.included)
    doc = {"source": source, "accepting": accepting, "pending_included": blocking}
    lines = [("accepting" if accepting else "non-accepting")
             + ("" if accepting else f" (pending and included: {', '.join(map(str, blocking))})")]
    _emit(args, doc, lines)
    return 0


def cmd_cost(args: argparse.Namespace) -> int:
    rates = cost.RateTable(args.rate)
    cc = cost.creation_cost(args.events, args.relations, args.status_updates, rates)
    ex = cost.execution_cost(rates)
    doc: dict[str, Any] = {
        "rate_usd_per_algo": rates.usd_per_algo,
        "creation": {"txn_count": cc.txn_count, "fee_microalgos": cc.fee_microalgos,
                     "escrow_global": cc.escrow.escrow_global,
                     "escrow_local": list(cc.escrow.escrow_local_per_account),
                     "escrow_overall": cc.escrow.escrow_overall,
                     "usd_excl_escrow": cc.usd_excl_escrow, "usd_incl_escrow": cc.usd_incl_escrow},
        "execution": {"fee_microalgos": ex.microalgos, "usd": ex.usd},
    }
    lines = [
        f"creation: {cc.txn_count} transactions, fees {cc.fee_microalgos} microAlgos "
        f"({cost.algos(cc.fee_microalgos)} Algo, ${cc.usd_excl_escrow})",
        f"escrow: global {cc.escrow.escrow_global} + local {cc.escrow.escrow_local} "
        f"= {cc.escrow.escrow_overall} microAlgos",
        f"creation incl. escrow: {cost.algos(cc.total_microalgos)} Algo, ${cc.usd_incl_escrow}",
        f"execution: {ex.microalgos} microAlgos ({ex.algo} Algo, ${ex.usd})",
    ]
    if args.compare:
        report = cost.comparison_report(args.events, args.relations, args.status_updates, rates)
        doc["comparison"] = [vars(r) for r in report.rows]
        lines.append(f"{'row':<22} {'Algo':>10} {'Algorand $':>11} {'ETH gas':>9} {'ETH $':>11} "
                     f"{'ratio $/$':>9} {'table':>7}")
        for r in report.rows:
            lines.append(f"{r.label:<22} {r.algo:>10} {r.algorand_usd:>11} {r.eth_gas:>9} {r.eth_usd:>11} "
                         f"{r.usd_ratio:>9} {r.table_ratio:>7}")
    if args.curve:
        curve = cost.escrow_curve(args.curve_max, rates)
        doc["curve"] = [{"events": n, "usd": usd} for n, usd in curve]
        lines += [f"escrow {n:>2} events: ${usd}" for n, usd in curve]
    _emit(args, doc, lines)
    return 0


def cmd_fuzz(args: argparse.Namespace) -> int:
    program = "dcr-literal" if args.literal else "dcr"
    report = fuzz(args.seed, args.iterations, max_events=args.max_events,
                  densities=args.density or DEFAULT_DENSITIES, max_steps=args.max_steps,
                  program=program)
    doc: dict[str, Any] = {"seed": args.seed, "iterations": report.iterations, "graphs": report.graphs,
                           "steps": report.steps, "rejections_checked": report.rejections_checked,
                           "mismatches": report.mismatches, "passed": report.passed}
    lines = [f"{'pass' if report.passed else 'FAIL'}: {report.graphs} graphs, {report.steps} steps, "
             f"{report.rejections_checked} rejection probes, {report.mismatches} mismatches"]
    cx = report.counterexample
    if cx is not None:
        doc["counterexample"] = {"iteration": cx.iteration, "seed": cx.seed, "trace": cx.trace,
                                 "mismatch": str(cx.mismatch), "graph": format_graph(cx.graph)}
        lines += [f"counterexample (iteration {cx.iteration}, seed {cx.seed!r}): {cx.mismatch}",
                  f"trace: {' '.join(map(str, cx.trace))}", format_graph(cx.graph).rstrip()]
    _emit(args, doc, lines)
    if not report.passed:
        raise DifferentialMismatch(f"reproduce with --seed {args.seed}")
    return 0


def cmd_replay(args: argparse.Namespace) -> int:
    path = Path(args.scenario)
    report = replay(load_scenario(path), base=path.parent)
    doc = {"app_id": report.app_id, "txn_count": report.txn_count, "passed": report.passed,
           "steps": [{"line": o.step.line, "step": o.step.describe(), "ok": o.ok, "result": o.detail,
                      "ops_used": o.ops_used} for o in report.outcomes]}
    lines = [f"app {report.app_id} constructed with {report.txn_count} transactions"]
    lines += [f"{'ok  ' if o.ok else 'FAIL'} line {o.step.line:>3}: {o.step.describe()} -> {o.detail}"
              for o in report.outcomes]
    lines.append("pass" if report.passed else "FAIL")
    _emit(args, doc, lines)
    return 0 if report.passed else 1


# -- parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="machine-readable output")

    on_ledger = argparse.ArgumentParser(add_help=False)
    on_ledger.add_argument("--ledger", default="ledger.json", help="ledger snapshot file (default: %(default)s)")

    parser = argparse.ArgumentParser(prog="dcralgo", description="DCR graph contracts on a simulated ledger.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("create", parents=[common, on_ledger], help="deploy and construct a graph contract")
    p.add_argument("graph", help="graph file, or corpus:<name> for a shipped one")
    p.add_argument("--creator", default="creator", help="64-hex address or a role name (default: %(default)s)")
    p.add_argument("--fund", type=int, default=DEFAULT_FUND,
                   help="microAlgos minted to the creator and each executor first (default: %(default)s)")
    p.set_defaults(func=cmd_create)

    p = sub.add_parser("exec", parents=[common, on_ledger], help="execute one event")
    p.add_argument("event", type=int)
    p.add_argument("--app", type=int, required=True)
    p.add_argument("--as", dest="sender", help="executor (default), creator, a role name or a 64-hex address")
    p.add_argument("--fee-payer", choices=("sender", "app"), default="sender")
    p.set_defaults(func=cmd_exec)

    p = sub.add_parser("state", parents=[common, on_ledger], help="dump a contract's decoded state")
    p.add_argument("--app", type=int, required=True)
    p.set_defaults(func=cmd_state)

    p = sub.add_parser("accepting", parents=[common, on_ledger],
                       help="accepting verdict of a contract, or of a graph file after a trace")
    p.add_argument("graph", nargs="?", help="graph file or corpus:<name>; omit to read --app")
    p.add_argument("--app", type=int)
    p.add_argument("--trace", type=_trace, default=[], help="events to execute first, e.g. 1,2,3,6")
    p.set_defaults(func=cmd_accepting)

    p = sub.add_parser("cost", parents=[common], help="creation, escrow and execution costs")
    p.add_argument("events", type=int)
    p.add_argument("relations", type=int)
    p.add_argument("status_updates", type=int)
    p.add_argument("--rate", type=_decimal, default=cost.RateTable().usd_per_algo, help="USD per Algo")
    p.add_argument("--compare", action="store_true", help="add the Ethereum comparison table")
    p.add_argument("--curve", action="store_true", help="add the escrow-vs-events curve")
    p.add_argument("--curve-max", type=int, default=MAX_EVENTS)
    p.set_defaults(func=cmd_cost)

    p = sub.add_parser("fuzz", parents=[common], help="differential fuzzing against the reference semantics")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--iterations", type=int, default=100)
    p.add_argument("--max-events", type=int, default=MAX_EVENTS)
    p.add_argument("--max-steps", type=int, default=100)
    p.add_argument("--density", type=_density, action="append",
                   help="relation density; repeat to cycle (default: 0.05, 0.15, 0.5)")
    p.add_argument("--literal", action="store_true", help="fuzz the naive contract variant")
    p.set_defaults(func=cmd_fuzz)

    p = sub.add_parser("replay", parents=[common], help="run a scenario file on a fresh ledger")
    p.add_argument("scenario")
    p.set_defaults(func=cmd_replay)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "max_events", 0) > MAX_EVENTS:
        parser.error(f"--max-events must be at most {MAX_EVENTS}")
    try:
        return args.func(args)
    except UsageError as err:
        print(f"dcralgo: error: {err}", file=sys.stderr)
        return 2
    except (DcrAlgoError, OSError, ValueError) as err:
        print(f"dcralgo: {type(err).__name__}: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
