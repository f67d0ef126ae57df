"""A deterministic, resource-metered stateful-contract runtime.

The ledger applies transactions strictly in submission order. Programs are
Python objects registered under a name; they see the chain only through an
:class:`EvalContext`, which charges one unit of the per-call operation
budget for every primitive it performs and buffers all state writes until
the call is approved.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Any, Iterable, Literal, Protocol

from . import cost
from .encoding import (
    GLOBAL_PAIRS,
    LOCAL_ACCOUNTS,
    LOCAL_PAIRS,
    MAX_KV_BYTES,
    KvSlot,
    get_bit,
    get_field,
    set_bit,
    set_field,
    value_len,
)
from .errors import (
    BudgetExceeded,
    CallTooLarge,
    FeeUnpayable,
    InsufficientBalance,
    KeyValueTooLong,
    MissingKey,
    ProgramError,
    Rejected,
    SchemaFull,
    SchemaTooLarge,
    StorageAccountsExhausted,
    UnknownApp,
)

OP_BUDGET = 700
MAX_ARGS = 255
MAX_ACCOUNTS = 4
MAX_FOREIGN_APPS = 2
MAX_FOREIGN_ASSETS = 2
SNAPSHOT_FORMAT = "dcralgo-ledger/1"

Value = bytes | int


@dataclass(frozen=True)
class AppSchema:
    global_uints: int = 0
    global_byteslices: int = 0
    local_uints: int = 0
    local_byteslices: int = 0

    def validate(self) -> None:
        counts = (self.global_uints, self.global_byteslices, self.local_uints, self.local_byteslices)
        if any(c < 0 for c in counts):
            raise SchemaTooLarge("schema counts must be non-negative")
        if self.global_uints + self.global_byteslices > GLOBAL_PAIRS:
            raise SchemaTooLarge(f"global schema exceeds {GLOBAL_PAIRS} pairs")
        if self.local_uints + self.local_byteslices > LOCAL_PAIRS:
            raise SchemaTooLarge(f"local schema exceeds {LOCAL_PAIRS} pairs")

    @property
    def global_escrow(self) -> int:
        return cost.schema_escrow(self.global_uints, self.global_byteslices)

    @property
    def local_escrow(self) -> int:
        return cost.schema_escrow(self.local_uints, self.local_byteslices)


@dataclass(frozen=True)
class AppCall:
    sender: bytes
    app_id: int
    args: tuple[bytes, ...] = ()
    accounts: tuple[bytes, ...] = ()
    foreign_apps: tuple[int, ...] = ()
    foreign_assets: tuple[int, ...] = ()
    fee_payer: Literal["sender", "app"] = "sender"

    def __post_init__(self):
        object.__setattr__(self, "args", tuple(self.args))
        object.__setattr__(self, "accounts", tuple(self.accounts))
        if len(self.args) > MAX_ARGS:
            raise CallTooLarge(f"at most {MAX_ARGS} arguments")
        if len(self.accounts) > MAX_ACCOUNTS:
            raise CallTooLarge(f"at most {MAX_ACCOUNTS} accounts")
        if len(self.foreign_apps) > MAX_FOREIGN_APPS or len(self.foreign_assets) > MAX_FOREIGN_ASSETS:
            raise CallTooLarge("too many foreign apps or assets")
        if self.fee_payer not in ("sender", "app"):
            raise ValueError(f"unknown fee payer {self.fee_payer!r}")


@dataclass
class OpMeter:
    budget: int = OP_BUDGET
    charged: int = 0

    def charge(self, n: int = 1) -> None:
        if self.charged + n > self.budget:
            raise BudgetExceeded(f"operation budget of {self.budget} exhausted")
        self.charged += n


@dataclass(frozen=True)
class CallResult:
    approved: bool
    ops_used: int
    state_delta: dict[str, Any]
    reason: str | None = None
    fee: int = cost.FLAT_FEE
    fee_payer: bytes = b""


class Program(Protocol):
    def on_create(self, ctx: EvalContext) -> None: ...

    def approve(self, ctx: EvalContext) -> None: ...


PROGRAMS: dict[str, Program] = {}


def register_program(name: str, program: Program) -> None:
    PROGRAMS[name] = program


def app_address(app_id: int) -> bytes:
    return hashlib.sha256(b"appID" + app_id.to_bytes(8, "big")).digest()


@dataclass
class Account:
    balance: int = 0
    locked: int = 0
    local: dict[int, dict[bytes, Value]] = field(default_factory=dict)

    @property
    def available(self) -> int:
        return self.balance - self.locked


@dataclass
class App:
    app_id: int
    creator: bytes
    schema: AppSchema
    program: str
    global_state: dict[bytes, Value] = field(default_factory=dict)
    storage_accounts: list[bytes] = field(default_factory=list)
    escrow_locked: int = 0
    prepaid_local: tuple[int, ...] = ()
    optin_locks: dict[bytes, int] = field(default_factory=dict)

    @property
    def address(self) -> bytes:
        return app_address(self.app_id)


def _count(values: Iterable[Value]) -> tuple[int, int]:
    uints = byteslices = 0
    for v in values:
        if isinstance(v, int):
            uints += 1
        else:
            byteslices += 1
    return uints, byteslices


class EvalContext:
    """Metered view of the chain handed to a running program.

    Every method that models a contract primitive charges one operation;
    ``op`` charges plain arithmetic, comparisons and branches. Byte-string
    scratch values are ``bytearray`` so bit writes happen in place.
    """

    def __init__(self, ledger: Ledger, app: App, call: AppCall, meter: OpMeter):
        self.ledger = ledger
        self.app = app
        self.call = call
        self.meter = meter
        self.op = meter.charge  # bound once; this is the hot path
        self.global_writes: dict[bytes, Value] = {}
        self.local_writes: dict[bytes, dict[bytes, Value]] = {}

    # -- metering: ``op(n)`` charges n operations (bound in __init__)
    def reject(self, code: str, message: str = "") -> None:
        raise Rejected(message or code, code=code)

    # -- transaction fields
    def sender(self) -> bytes:
        self.op()
        return self.call.sender

    def num_args(self) -> int:
        self.op()
        return len(self.call.args)

    def arg(self, i: int) -> bytes:
        self.op()
        if not 0 <= i < len(self.call.args):
            self.reject("BadArgument", f"missing argument {i}")
        return self.call.args[i]

    def btoi(self, b: bytes) -> int:
        self.op()
        if len(b) > 8:
            self.reject("BadArgument", "integer argument longer than 8 bytes")
        return int.from_bytes(b, "big")

    # -- state
    def _local_store(self, slot: KvSlot) -> tuple[bytes, dict[bytes, Value]]:
        idx = slot.account_index
        if not 0 <= idx < len(self.app.storage_accounts):
            self.reject("NoStorageAccount", f"storage account {idx} has not opted in")
        addr = self.app.storage_accounts[idx]
        if addr not in self.call.accounts:
            self.reject("AccountNotAvailable", f"storage account {idx} missing from the accounts array")
        return addr, self.ledger.accounts[addr].local[self.app.app_id]

    def get(self, slot: KvSlot, key: bytes) -> Value:
        self.op()
        if slot.scope == "global":
            if key in self.global_writes:
                return self.global_writes[key]
            store = self.app.global_state
        else:
            addr, store = self._local_store(slot)
            pending = self.local_writes.get(addr, {})
            if key in pending:
                return pending[key]
        try:
            return store[key]
        except KeyError:
            raise MissingKey(f"no key {key!r} in {slot.scope} state") from None

    def put(self, slot: KvSlot, key: bytes, value: Value) -> None:
        self.op()
        if isinstance(value, (bytearray, memoryview)):
            value = bytes(value)
        if len(key) + value_len(value) > MAX_KV_BYTES:
            raise KeyValueTooLong(f"key+value of {key!r} is {len(key) + value_len(value)} bytes")
        if slot.scope == "global":
            base, writes = self.app.global_state, self.global_writes
            cap_u, cap_b = self.app.schema.global_uints, self.app.schema.global_byteslices
        else:
            addr, base = self._local_store(slot)
            writes = self.local_writes.setdefault(addr, {})
            cap_u, cap_b = self.app.schema.local_uints, self.app.schema.local_byteslices
        old = writes.get(key, base.get(key))
        if old is None or isinstance(old, int) != isinstance(value, int):
            merged = {**base, **writes, key: value}
            uints, byteslices = _count(merged.values())
            if uints > cap_u or byteslices > cap_b:
                raise SchemaFull(f"{slot.scope} schema allows {cap_u} uints and {cap_b} byte slices")
        writes[key] = value

    # -- byte-string primitives
    def getbit(self, data: bytes | bytearray, pos: int) -> int:
        self.op()
        return get_bit(data, pos)

    def setbit(self, buf: bytearray, pos: int, value: int) -> None:
        self.op()
        set_bit(buf, pos, value)

    def getbits(self, data: bytes | bytearray, start: int, width: int) -> int:
        """Fixed-width bit-field read; one operation like ``getbit``."""
        self.op()
        return get_field(data, start, width)

    def setbits(self, buf: bytearray, start: int, width: int, value: int) -> None:
        self.op()
        set_field(buf, start, width, value)

    def getbyte(self, data: bytes | bytearray, i: int) -> int:
        self.op()
        return data[i]

    def concat(self, a: bytes | bytearray, b: bytes | bytearray) -> bytearray:
        self.op()
        return bytearray(a) + b

    def bzero(self, n: int) -> bytearray:
        self.op()
        return bytearray(n)

    def delta(self) -> dict[str, Any]:
        return {
            "global": dict(self.global_writes),
            "local": {addr: dict(kv) for addr, kv in self.local_writes.items()},
        }

    def commit(self) -> None:
        self.app.global_state.update(self.global_writes)
        for addr, kv in self.local_writes.items():
            self.ledger.accounts[addr].local[self.app.app_id].update(kv)


class Ledger:
    """Accounts, applications and the sequential transaction processor."""

    def __init__(self, fee: int = cost.FLAT_FEE, budget: int = OP_BUDGET):
        self.fee = fee
        self.budget = budget
        self.accounts: dict[bytes, Account] = {}
        self.apps: dict[int, App] = {}
        self.next_app_id = 1
        self.fees_collected = 0
        self.minted = 0

    # -- accounts
    def fund(self, address: bytes, amount: int) -> None:
        """Mint ``amount`` microAlgos into ``address`` (simulation genesis)."""
        if amount < 0:
            raise ValueError("amount must be non-negative")
        self.accounts.setdefault(address, Account()).balance += amount
        self.minted += amount

    def account(self, address: bytes) -> Account:
        return self.accounts.setdefault(address, Account())

    def balance(self, address: bytes) -> int:
        acct = self.accounts.get(address)
        return acct.balance if acct else 0

    def total_balance(self) -> int:
        return sum(a.balance for a in self.accounts.values())

    def app(self, app_id: int) -> App:
        try:
            return self.apps[app_id]
        except KeyError:
            raise UnknownApp(f"no application {app_id}") from None

    def _pay_fee(self, payer: bytes, exc: type[Exception]) -> None:
        acct = self.accounts.get(payer)
        if acct is None or acct.available < self.fee:
            raise exc(f"account cannot pay the {self.fee} microAlgo fee")
        acct.balance -= self.fee
        self.fees_collected += self.fee

    # -- applications
    def deploy_app(self, creator: bytes, schema: AppSchema, program: str,
                   args: Iterable[bytes] = (), local_escrow: Iterable[int] = ()) -> int:
        """Create an application and run its creation branch.

        The creator locks the global-schema escrow plus any ``local_escrow``
        amounts it prepays for future storage accounts.
        """
        schema.validate()
        if program not in PROGRAMS:
            raise KeyError(f"unknown program {program!r}")
        prepaid = tuple(local_escrow)
        if len(prepaid) > LOCAL_ACCOUNTS:
            raise StorageAccountsExhausted(f"at most {LOCAL_ACCOUNTS} storage accounts")
        escrow = schema.global_escrow + sum(prepaid)
        acct = self.accounts.get(creator)
        if acct is None or acct.available < escrow + self.fee:
            raise InsufficientBalance(f"creator needs {escrow + self.fee} available microAlgos")

        app_id = self.next_app_id
        app = App(app_id, creator, schema, program, escrow_locked=escrow, prepaid_local=prepaid)
        call = AppCall(creator, app_id, tuple(args))
        meter = OpMeter(self.budget)
        ctx = EvalContext(self, app, call, meter)
        PROGRAMS[program].on_create(ctx)

        self.next_app_id += 1
        acct.balance -= self.fee
        self.fees_collected += self.fee
        acct.locked += escrow
        ctx.commit()
        self.apps[app_id] = app
        self.accounts.setdefault(app.address, Account())
        return app_id

    def opt_in(self, address: bytes, app_id: int) -> int:
        """Provision ``address`` as the next storage account; returns its index."""
        app = self.app(app_id)
        if address in app.storage_accounts:
            raise ValueError("account already opted in")
        if len(app.storage_accounts) >= LOCAL_ACCOUNTS:
            raise StorageAccountsExhausted(f"application {app_id} already has {LOCAL_ACCOUNTS} storage accounts")
        index = len(app.storage_accounts)
        lock = 0 if index < len(app.prepaid_local) else app.schema.local_escrow
        acct = self.accounts.get(address)
        if acct is None or acct.available < lock + self.fee:
            raise InsufficientBalance(f"opt-in needs {lock + self.fee} available microAlgos")
        acct.balance -= self.fee
        self.fees_collected += self.fee
        acct.locked += lock
        acct.local[app_id] = {}
        app.optin_locks[address] = lock
        app.storage_accounts.append(address)
        return index

    def delete_app(self, app_id: int, sender: bytes) -> None:
        app = self.app(app_id)
        if sender != app.creator:
            raise Rejected("only the creator may delete", code="NotCreator")
        self._pay_fee(sender, FeeUnpayable)
        self.accounts[app.creator].locked -= app.escrow_locked
        for addr, lock in app.optin_locks.items():
            acct = self.accounts[addr]
            acct.locked -= lock
            acct.local.pop(app_id, None)
        del self.apps[app_id]

    def app_call(self, call: AppCall) -> CallResult:
        app = self.app(call.app_id)
        payer = call.sender if call.fee_payer == "sender" else app.address
        self._pay_fee(payer, FeeUnpayable)
        meter = OpMeter(self.budget)
        ctx = EvalContext(self, app, call, meter)
        try:
            PROGRAMS[app.program].approve(ctx)
        except ProgramError as err:
            return CallResult(False, meter.charged, {}, err.code, self.fee, payer)
        ctx.commit()
        return CallResult(True, meter.charged, ctx.delta(), None, self.fee, payer)

    # -- direct storage access (outside any call)
    def _store(self, app: App, slot: KvSlot) -> dict[bytes, Value]:
        if slot.scope == "global":
            return app.global_state
        if not 0 <= slot.account_index < len(app.storage_accounts):
            raise MissingKey(f"storage account {slot.account_index} has not opted in")
        return self.accounts[app.storage_accounts[slot.account_index]].local[app.app_id]

    def kv_read(self, app_id: int, slot: KvSlot, key: bytes) -> Value:
        store = self._store(self.app(app_id), slot)
        try:
            return store[key]
        except KeyError:
            raise MissingKey(f"no key {key!r} in {slot.scope} state") from None

    def kv_write(self, app_id: int, slot: KvSlot, key: bytes, value: Value) -> None:
        """Write one pair with the same checks a program write gets."""
        app = self.app(app_id)
        ctx = EvalContext(self, app, AppCall(app.creator, app_id, accounts=tuple(app.storage_accounts)),
                          OpMeter(self.budget))
        ctx.put(slot, key, value)
        ctx.commit()

    # -- snapshots
    def copy(self) -> Ledger:
        other = Ledger(self.fee, self.budget)
        other.next_app_id = self.next_app_id
        other.fees_collected = self.fees_collected
        other.minted = self.minted
        other.accounts = {
            addr: Account(a.balance, a.locked, {k: dict(v) for k, v in a.local.items()})
            for addr, a in self.accounts.items()
        }
        other.apps = {
            i: App(a.app_id, a.creator, a.schema, a.program, dict(a.global_state),
                   list(a.storage_accounts), a.escrow_locked, a.prepaid_local, dict(a.optin_locks))
            for i, a in self.apps.items()
        }
        return other

    def to_dict(self) -> dict[str, Any]:
        return {
            "format": SNAPSHOT_FORMAT,
            "fee": self.fee,
            "budget": self.budget,
            "next_app_id": self.next_app_id,
            "fees_collected": self.fees_collected,
            "minted": self.minted,
            "accounts": {
                addr.hex(): {
                    "balance": a.balance,
                    "locked": a.locked,
                    "local": {str(i): _kv_out(kv) for i, kv in a.local.items()},
                }
                for addr, a in self.accounts.items()
            },
            "apps": {
                str(i): {
                    "creator": a.creator.hex(),
                    "program": a.program,
                    "schema": [a.schema.global_uints, a.schema.global_byteslices,
                               a.schema.local_uints, a.schema.local_byteslices],
                    "global": _kv_out(a.global_state),
                    "storage_accounts": [s.hex() for s in a.storage_accounts],
                    "escrow_locked": a.escrow_locked,
                    "prepaid_local": list(a.prepaid_local),
                    "optin_locks": {k.hex(): v for k, v in a.optin_locks.items()},
                }
                for i, a in self.apps.items()
            },
        }

    def dumps(self) -> str:
        """Canonical text form: sorted keys, decimal ints, lowercase hex bytes."""
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> Ledger:
        if doc.get("format") != SNAPSHOT_FORMAT:
            raise ValueError(f"not a {SNAPSHOT_FORMAT} document")
        led = cls(doc["fee"], doc["budget"])
        led.next_app_id = doc["next_app_id"]
        led.fees_collected = doc["fees_collected"]
        led.minted = doc["minted"]
        for addr, a in doc["accounts"].items():
            led.accounts[bytes.fromhex(addr)] = Account(
                a["balance"], a["locked"], {int(i): _kv_in(kv) for i, kv in a["local"].items()})
        for i, a in doc["apps"].items():
            led.apps[int(i)] = App(
                int(i), bytes.fromhex(a["creator"]), AppSchema(*a["schema"]), a["program"],
                _kv_in(a["global"]), [bytes.fromhex(s) for s in a["storage_accounts"]],
                a["escrow_locked"], tuple(a["prepaid_local"]),
                {bytes.fromhex(k): v for k, v in a["optin_locks"].items()})
        return led

    @classmethod
    def loads(cls, text: str) -> Ledger:
        return cls.from_dict(json.loads(text))


def _kv_out(kv: dict[bytes, Value]) -> dict[str, dict[str, Any]]:
    return {k.hex(): ({"uint": v} if isinstance(v, int) else {"bytes": v.hex()}) for k, v in kv.items()}


def _kv_in(doc: dict[str, dict[str, Any]]) -> dict[bytes, Value]:
    return {
        bytes.fromhex(k): (v["uint"] if "uint" in v else bytes.fromhex(v["bytes"]))
        for k, v in doc.items()
    }
