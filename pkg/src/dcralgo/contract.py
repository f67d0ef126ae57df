"""The DCR graph contract and a client that drives it through the ledger.

Method ABI (``args[0]`` selects the method, integers are big-endian):

    add_event      [executor: 32 bytes]
    add_relation   [e1, e2, kind]          kind: include=0 exclude=1 milestone=2 condition=3 response=4
    execute        [e1]
    update_status  [e1, status]            status: include=0 exclude=1 pend=2

Storage follows :mod:`dcralgo.encoding` bit for bit. Loops over partner
events are unrolled when the program is compiled, so offsets inside them are
immediates and only the primitives themselves are metered.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from . import cost
from .avm import AppCall, AppSchema, CallResult, EvalContext, Ledger, register_program
from .dcr import ADDRESS_LEN, MAX_EVENTS, DcrGraph, Marking, Relation, RelationKind, derive_address
from .encoding import (
    GLOBAL_SLOT,
    KEY_CREATOR,
    KEY_EVENT_COUNT,
    KEY_MARKING,
    LINK_BITS,
    LOCAL_PAIRS,
    STATUS_BITS,
    GraphStateImage,
    PackedLinks,
    PackedMarking,
    decode_marking,
    executor_key,
    executor_ordinal,
    graph_from_image,
    links_key,
    links_len,
    links_ordinal,
    marking_len,
    slot_for_pair,
    storage_accounts_needed,
)
from .errors import CapacityExceeded, ConstructionError, MissingKey

PROGRAM_NAME = "dcr"
LITERAL_PROGRAM_NAME = "dcr-literal"

STATUS_CODES = {"include": 0, "exclude": 1, "pend": 2}

# bit values inside a 5-bit links group / 4-bit status nibble (MSB first)
G_INCLUDE, G_EXCLUDE, G_MILESTONE, G_CONDITION, G_RESPONSE = 16, 8, 4, 2, 1
N_INCLUDED, N_PENDING, N_EXECUTED = 8, 4, 2
BLOCKED = 16


def transition_table(inclusion_aware: bool = True) -> bytes:
    """Per-partner lookup indexed by ``links_group << 4 | status_nibble``.

    Each entry holds the partner's status nibble after the owner executes
    in its low four bits and, at bit 4, whether the partner blocks the owner.
    """
    table = bytearray(512)
    for g in range(32):
        for n in range(16):
            inc, pend, done = n & N_INCLUDED, n & N_PENDING, n & N_EXECUTED
            gate = inc if inclusion_aware else 1
            blocked = bool(
                (g & G_CONDITION and gate and not done)
                or (g & G_MILESTONE and gate and pend)
            )
            new_inc = (inc and not g & G_EXCLUDE) or g & G_INCLUDE
            new = (N_INCLUDED if new_inc else 0) | (N_PENDING if pend or g & G_RESPONSE else 0) | done
            table[g << 4 | n] = (BLOCKED if blocked else 0) | new
    return bytes(table)


class DcrContract:
    """Approval program for one DCR graph.

    ``literal=True`` builds a naive variant that applies the execute steps
    word for word: the executing event's own inclusion is not checked,
    excluded conditions and milestones still block, and the pending flag is
    cleared after the responses are applied. It exists to show that the
    differential harness notices the difference.
    """

    def __init__(self, literal: bool = False):
        self.literal = literal
        self.table = transition_table(inclusion_aware=not literal)

    # -- helpers (each charges what the equivalent contract code would)
    @staticmethod
    def _slot(ctx: EvalContext, ordinal: int):
        ctx.op(2)  # compare with 64, branch
        if ordinal > 64:
            ctx.op(2)  # (ordinal - 65) / 16
        return slot_for_pair(ordinal)

    def _event_pair(self, ctx: EvalContext, e: int, links: bool):
        ctx.op(3)  # ordinal arithmetic, key formatting
        ordinal = links_ordinal(e) if links else executor_ordinal(e)
        return self._slot(ctx, ordinal), (links_key(e) if links else executor_key(e))

    @staticmethod
    def _require_creator(ctx: EvalContext) -> None:
        sender = ctx.sender()
        creator = ctx.get(GLOBAL_SLOT, KEY_CREATOR)
        ctx.op(2)
        if sender != creator:
            ctx.reject("NotCreator")

    @staticmethod
    def _event_arg(ctx: EvalContext, i: int, ten: int) -> int:
        e = ctx.btoi(ctx.arg(i))
        ctx.op(4)  # 1 <= e, e <= ten, and, branch
        if not 1 <= e <= ten:
            ctx.reject("UnknownEvent", f"event {e} outside 1..{ten}")
        return e

    # -- entry points
    def on_create(self, ctx: EvalContext) -> None:
        ctx.put(GLOBAL_SLOT, KEY_CREATOR, ctx.sender())
        ctx.put(GLOBAL_SLOT, KEY_MARKING, b"")
        ctx.put(GLOBAL_SLOT, KEY_EVENT_COUNT, 0)

    def approve(self, ctx: EvalContext) -> None:
        method = ctx.arg(0)
        handlers = (
            (b"add_event", self.add_event),
            (b"add_relation", self.add_relation),
            (b"execute", self.execute),
            (b"update_status", self.update_status),
        )
        for name, handler in handlers:
            ctx.op(2)  # compare, branch
            if method == name:
                return handler(ctx)
        ctx.reject("UnknownMethod", f"unknown method {method!r}")

    def add_event(self, ctx: EvalContext) -> None:
        self._require_creator(ctx)
        ten = ctx.get(GLOBAL_SLOT, KEY_EVENT_COUNT)
        ctx.op(2)
        if ten >= MAX_EVENTS:
            ctx.reject("CapacityExceeded", f"already {ten} events")
        executor = ctx.arg(1)
        ctx.op(2)
        if len(executor) != ADDRESS_LEN:
            ctx.reject("BadArgument", "executor must be a 32-byte address")
        ten += 1
        ctx.op(1)

        ctx.op(2)  # parity test, branch
        mk = ctx.get(GLOBAL_SLOT, KEY_MARKING)
        if marking_len(ten) > len(mk):
            ctx.put(GLOBAL_SLOT, KEY_MARKING, ctx.concat(mk, b"\x00"))

        width = links_len(ten)
        ctx.op(3)  # width arithmetic, compare, branch
        if width > links_len(ten - 1):
            ctx.op(1)  # jump into the unrolled block for ten - 1 rows
            for i in range(1, ten):
                slot = slot_for_pair(links_ordinal(i))
                row = ctx.get(slot, links_key(i))
                ctx.put(slot, links_key(i), ctx.concat(row, b"\x00"))

        slot, key = self._event_pair(ctx, ten, links=True)
        ctx.op(1)
        ctx.put(slot, key, ctx.bzero(width))
        slot, key = self._event_pair(ctx, ten, links=False)
        ctx.put(slot, key, executor)
        ctx.put(GLOBAL_SLOT, KEY_EVENT_COUNT, ten)

    def add_relation(self, ctx: EvalContext) -> None:
        self._require_creator(ctx)
        ten = ctx.get(GLOBAL_SLOT, KEY_EVENT_COUNT)
        e1 = self._event_arg(ctx, 1, ten)
        e2 = self._event_arg(ctx, 2, ten)
        k = ctx.btoi(ctx.arg(3))
        ctx.op(2)
        if k > RelationKind.RESPONSE:
            ctx.reject("BadArgument", f"unknown relation code {k}")
        ctx.op(4)  # k == 2 or k == 3
        if k in (RelationKind.MILESTONE, RelationKind.CONDITION):
            owner, partner = e2, e1
        else:
            owner, partner = e1, e2
        ctx.op(3)  # (partner - 1) * 5 + k
        bit = (partner - 1) * LINK_BITS + k
        slot, key = self._event_pair(ctx, owner, links=True)
        row = bytearray(ctx.get(slot, key))
        ctx.setbit(row, bit, 1)
        ctx.put(slot, key, row)

    def update_status(self, ctx: EvalContext) -> None:
        self._require_creator(ctx)
        ten = ctx.get(GLOBAL_SLOT, KEY_EVENT_COUNT)
        e = self._event_arg(ctx, 1, ten)
        status = ctx.btoi(ctx.arg(2))
        mk = bytearray(ctx.get(GLOBAL_SLOT, KEY_MARKING))
        ctx.op(2)  # (e - 1) * 4
        base = (e - 1) * STATUS_BITS
        for name, bit, value in (("include", base, 1), ("exclude", base, 0), ("pend", base + 1, 1)):
            ctx.op(2)  # compare, branch
            if status == STATUS_CODES[name]:
                ctx.setbit(mk, bit, value)
                break
        else:
            ctx.reject("BadArgument", f"unknown status code {status}")
        ctx.put(GLOBAL_SLOT, KEY_MARKING, mk)

    def execute(self, ctx: EvalContext) -> None:
        ten = ctx.get(GLOBAL_SLOT, KEY_EVENT_COUNT)
        e = self._event_arg(ctx, 1, ten)
        slot, key = self._event_pair(ctx, e, links=False)
        executor = ctx.get(slot, key)
        sender = ctx.sender()
        ctx.op(2)
        if sender != executor:
            ctx.reject("NotExecutor")
        slot, key = self._event_pair(ctx, e, links=True)
        row = ctx.get(slot, key)
        mk = ctx.get(GLOBAL_SLOT, KEY_MARKING)

        ctx.op(2)  # (e - 1) * 4
        base = (e - 1) * STATUS_BITS
        if not self.literal:
            own = ctx.getbits(mk, base, STATUS_BITS)
            ctx.op(2)
            if not own & N_INCLUDED:
                ctx.reject("NotEnabled", f"event {e} is excluded")

        new = bytearray(mk)
        ctx.op(2)  # copy, jump into the unrolled partner blocks
        table = self.table
        acc = 0
        for j in range(ten):
            g = ctx.getbits(row, j * LINK_BITS, LINK_BITS)
            n = ctx.getbits(mk, j * STATUS_BITS, STATUS_BITS)
            ctx.op(2)
            v = ctx.getbyte(table, g << 4 | n)
            ctx.op(1)
            acc |= v
            ctx.setbits(new, j * STATUS_BITS, STATUS_BITS, v)
        ctx.op(2)
        if acc & BLOCKED:
            ctx.reject("NotEnabled", f"event {e} is blocked")

        if self.literal:
            ctx.op(1)
            ctx.setbit(new, base + 1, 0)
        else:
            # the owner stays pending only through a response to itself
            ctx.op(2)
            resp = ctx.getbit(row, (e - 1) * LINK_BITS + RelationKind.RESPONSE)
            ctx.op(1)
            ctx.setbit(new, base + 1, resp)
        ctx.op(1)
        ctx.setbit(new, base + 2, 1)
        ctx.put(GLOBAL_SLOT, KEY_MARKING, new)


register_program(PROGRAM_NAME, DcrContract())
register_program(LITERAL_PROGRAM_NAME, DcrContract(literal=True))


# -- reading state back ------------------------------------------------------

def read_image(ledger: Ledger, app_id: int) -> GraphStateImage:
    """Raw state of a deployed graph contract, without metering."""
    n = ledger.kv_read(app_id, GLOBAL_SLOT, KEY_EVENT_COUNT)
    execs, rows = [], []
    for e in range(1, n + 1):
        execs.append(ledger.kv_read(app_id, slot_for_pair(executor_ordinal(e)), executor_key(e)))
        rows.append(PackedLinks(ledger.kv_read(app_id, slot_for_pair(links_ordinal(e)), links_key(e)), e))
    return GraphStateImage(
        creator=ledger.kv_read(app_id, GLOBAL_SLOT, KEY_CREATOR),
        marking=PackedMarking(ledger.kv_read(app_id, GLOBAL_SLOT, KEY_MARKING), n),
        event_count=n,
        executors=tuple(execs),
        links=tuple(rows),
    )


def read_marking(ledger: Ledger, app_id: int) -> Marking:
    n = ledger.kv_read(app_id, GLOBAL_SLOT, KEY_EVENT_COUNT)
    return decode_marking(ledger.kv_read(app_id, GLOBAL_SLOT, KEY_MARKING), n)


def read_graph(ledger: Ledger, app_id: int) -> DcrGraph:
    return graph_from_image(read_image(ledger, app_id))


# -- client ------------------------------------------------------------------

def _u64(x: int) -> bytes:
    return int(x).to_bytes(8, "big")


class DcrClient:
    """Builds application calls for one deployed graph contract."""

    def __init__(self, ledger: Ledger, app_id: int):
        self.ledger = ledger
        self.app_id = app_id

    @property
    def app(self):
        return self.ledger.app(self.app_id)

    @property
    def creator(self) -> bytes:
        return self.app.creator

    def call(self, sender: bytes, *args: bytes, fee_payer: str = "sender") -> CallResult:
        app = self.app
        return self.ledger.app_call(AppCall(
            sender=sender,
            app_id=self.app_id,
            args=args,
            accounts=tuple(app.storage_accounts),
            fee_payer=fee_payer,
        ))

    def add_event(self, executor: bytes, sender: bytes | None = None) -> CallResult:
        return self.call(sender or self.creator, b"add_event", executor)

    def add_relation(self, source: int, kind: RelationKind | int, target: int,
                     sender: bytes | None = None) -> CallResult:
        return self.call(sender or self.creator, b"add_relation", _u64(source), _u64(target), _u64(kind))

    def update_status(self, e: int, status: str, sender: bytes | None = None) -> CallResult:
        return self.call(sender or self.creator, b"update_status", _u64(e), _u64(STATUS_CODES[status]))

    def execute(self, e: int, sender: bytes | None = None, fee_payer: str = "sender") -> CallResult:
        if sender is None:
            sender = self.executor(e)
        return self.call(sender, b"execute", _u64(e), fee_payer=fee_payer)

    def executor(self, e: int) -> bytes:
        try:
            return self.ledger.kv_read(self.app_id, slot_for_pair(executor_ordinal(e)), executor_key(e))
        except (MissingKey, CapacityExceeded):
            return bytes(ADDRESS_LEN)

    def event_count(self) -> int:
        return self.ledger.kv_read(self.app_id, GLOBAL_SLOT, KEY_EVENT_COUNT)

    def marking(self) -> Marking:
        return read_marking(self.ledger, self.app_id)

    def graph(self) -> DcrGraph:
        return read_graph(self.ledger, self.app_id)


def dcr_schema(capacity: int) -> AppSchema:
    """Schema sized for ``capacity`` events: TEN as the only uint."""
    return AppSchema(
        global_uints=1,
        global_byteslices=min(cost.byteslice_pairs(capacity), cost.GLOBAL_BYTESLICE_CAP),
        local_uints=0,
        local_byteslices=LOCAL_PAIRS if storage_accounts_needed(capacity) else 0,
    )


def storage_address(app_id: int, index: int) -> bytes:
    return derive_address(f"storage:{app_id}:{index}")


@dataclass
class Construction:
    client: DcrClient
    steps: list[tuple[str, CallResult]]
    optins: int

    @property
    def app_id(self) -> int:
        return self.client.app_id

    @property
    def txn_count(self) -> int:
        return 1 + len(self.steps)

    @property
    def fees(self) -> int:
        return self.txn_count * self.client.ledger.fee


def status_updates(marking: Marking) -> list[tuple[int, str]]:
    """Minimal update_status calls that turn the all-zero marking into ``marking``."""
    if marking.executed:
        raise ValueError("executed events cannot be set by a status update")
    ups = [(e, "include") for e in sorted(marking.included)]
    ups += [(e, "pend") for e in sorted(marking.pending)]
    return ups


def deploy(
    ledger: Ledger,
    creator: bytes,
    executors: Sequence[bytes],
    relations: Iterable[Relation],
    marking: Marking = Marking(),
    *,
    program: str = PROGRAM_NAME,
    storage_accounts: Sequence[bytes] | None = None,
) -> Construction:
    """Deploy a graph contract and construct it with 1+E+R+S transactions.

    Storage accounts are opted in straight after deployment; when none are
    given, derived addresses are used and topped up to cover their fee.
    Raises :class:`ConstructionError` on the first rejected call.
    """
    n = len(executors)
    capacity = min(n, MAX_EVENTS)
    app_id = ledger.deploy_app(creator, dcr_schema(capacity), program,
                               local_escrow=cost.escrow_local_schedule(capacity))
    client = DcrClient(ledger, app_id)

    needed = storage_accounts_needed(capacity)
    if storage_accounts is None:
        storage_accounts = [storage_address(app_id, j) for j in range(needed)]
        for addr in storage_accounts:
            short = ledger.fee - ledger.account(addr).available
            if short > 0:
                ledger.fund(addr, short)
    for addr in list(storage_accounts)[:needed]:
        ledger.opt_in(addr, app_id)

    steps: list[tuple[str, CallResult]] = []

    def run(label: str, result: CallResult) -> None:
        steps.append((label, result))
        if not result.approved:
            raise ConstructionError(len(steps), label, result.reason)

    for i, ex in enumerate(executors, start=1):
        run(f"add_event {i}", client.add_event(ex))
    for r in sorted(relations):
        run(f"add_relation {r}", client.add_relation(r.source, r.kind, r.target))
    for e, status in status_updates(marking):
        run(f"update_status {e} {status}", client.update_status(e, status))
    return Construction(client, steps, needed)


def deploy_graph(ledger: Ledger, graph: DcrGraph, **kwargs) -> Construction:
    return deploy(ledger, graph.creator, graph.executors, graph.relations, graph.marking, **kwargs)
