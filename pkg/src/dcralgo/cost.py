"""Escrow, fee and transaction-count arithmetic.

All amounts are integer microAlgos. Conversion to USD happens once, at the
edge, rounded half-even to five decimal places.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from decimal import ROUND_HALF_EVEN, Decimal

from .dcr import MAX_EVENTS
from .errors import OutOfRange

MICROALGOS_PER_ALGO = 1_000_000
FLAT_FEE = 1_000

MIN_BALANCE_PER_APP = 100_000
MIN_BALANCE_PER_PAGE = 100_000
SCHEMA_ENTRY = 25_000
UINT_VALUE = 3_500
BYTESLICE_VALUE = 25_000

GLOBAL_BYTESLICE_CAP = 63
LOCAL_PAIRS_PER_ACCOUNT = 16

USD_QUANTUM = Decimal("0.00001")


def schema_escrow(num_uint: int, num_byteslice: int, extra_pages: int = 0) -> int:
    """Minimum-balance requirement of one application or opt-in schema."""
    return (
        MIN_BALANCE_PER_APP
        + MIN_BALANCE_PER_PAGE * extra_pages
        + (SCHEMA_ENTRY + UINT_VALUE) * num_uint
        + (SCHEMA_ENTRY + BYTESLICE_VALUE) * num_byteslice
    )


def algos(microalgos: int) -> Decimal:
    return Decimal(microalgos) / MICROALGOS_PER_ALGO


def to_usd(microalgos: int, usd_per_algo: Decimal) -> Decimal:
    return (algos(microalgos) * usd_per_algo).quantize(USD_QUANTUM, rounding=ROUND_HALF_EVEN)


def _check_tsn(tsn: int) -> None:
    if not isinstance(tsn, int) or not 0 <= tsn <= MAX_EVENTS:
        raise OutOfRange(f"event count {tsn!r} outside 0..{MAX_EVENTS}")


def byteslice_pairs(tsn: int) -> int:
    # GC and MK plus an executor and a links pair per event
    return 2 * tsn + 2


def escrow_global(tsn: int) -> int:
    _check_tsn(tsn)
    return schema_escrow(1, min(byteslice_pairs(tsn), GLOBAL_BYTESLICE_CAP))


def escrow_local_schedule(tsn: int) -> list[int]:
    """Per storage account escrow, in opt-in order; empty when nothing spills."""
    _check_tsn(tsn)
    overflow = max(0, byteslice_pairs(tsn) - GLOBAL_BYTESLICE_CAP)
    accounts = -(-overflow // LOCAL_PAIRS_PER_ACCOUNT)
    return [
        schema_escrow(0, min(overflow - LOCAL_PAIRS_PER_ACCOUNT * j, LOCAL_PAIRS_PER_ACCOUNT))
        for j in range(accounts)
    ]


@dataclass(frozen=True)
class EscrowQuote:
    tsn: int
    escrow_global: int
    escrow_local_per_account: tuple[int, ...]

    @property
    def escrow_local(self) -> int:
        return sum(self.escrow_local_per_account)

    @property
    def escrow_overall(self) -> int:
        return self.escrow_global + self.escrow_local


def escrow_overall(tsn: int) -> EscrowQuote:
    return EscrowQuote(tsn, escrow_global(tsn), tuple(escrow_local_schedule(tsn)))


@dataclass(frozen=True)
class RateTable:
    usd_per_algo: Decimal = Decimal("1.36")

    def __post_init__(self):
        if Decimal(self.usd_per_algo) <= 0:
            raise ValueError("usd_per_algo must be positive")
        object.__setattr__(self, "usd_per_algo", Decimal(self.usd_per_algo))


@dataclass(frozen=True)
class EthConstants:
    """Published Ethereum figures for the 5-event / 11-relation example.

    ``usd_per_eth`` is the rate implied by the published creation cost
    (717,709 gas at 150 gwei/gas costing $349.88314).
    """

    creation_gas: int = 717_709
    execution_gas: Decimal = Decimal(54_496)
    gwei_per_gas: Decimal = Decimal(150)
    usd_per_eth: Decimal = Decimal(3250)

    def usd(self, gas: int | Decimal) -> Decimal:
        eth = Decimal(gas) * self.gwei_per_gas / Decimal(10) ** 9
        return (eth * self.usd_per_eth).quantize(USD_QUANTUM, rounding=ROUND_HALF_EVEN)


@dataclass(frozen=True)
class CreationCost:
    events: int
    relations: int
    status_updates: int
    txn_count: int
    fee_microalgos: int
    escrow: EscrowQuote
    usd_per_algo: Decimal

    @property
    def total_microalgos(self) -> int:
        return self.fee_microalgos + self.escrow.escrow_overall

    @property
    def usd_excl_escrow(self) -> Decimal:
        return to_usd(self.fee_microalgos, self.usd_per_algo)

    @property
    def usd_incl_escrow(self) -> Decimal:
        return to_usd(self.total_microalgos, self.usd_per_algo)


def creation_txn_count(events: int, relations: int, status_updates: int) -> int:
    # deployment, then one call per event, relation and status update
    return 1 + events + relations + status_updates


def creation_cost(events: int, relations: int, status_updates: int,
                  rates: RateTable = RateTable()) -> CreationCost:
    _check_tsn(events)
    if relations < 0 or status_updates < 0:
        raise OutOfRange("relation and status-update counts must be non-negative")
    n = creation_txn_count(events, relations, status_updates)
    return CreationCost(events, relations, status_updates, n, n * FLAT_FEE,
                        escrow_overall(events), rates.usd_per_algo)


@dataclass(frozen=True)
class Amount:
    microalgos: int
    usd: Decimal

    @property
    def algo(self) -> Decimal:
        return algos(self.microalgos)


def execution_cost(rates: RateTable = RateTable()) -> Amount:
    return Amount(FLAT_FEE, to_usd(FLAT_FEE, rates.usd_per_algo))


@dataclass(frozen=True)
class ComparisonRow:
    label: str
    algo: Decimal
    algorand_usd: Decimal
    eth_gas: Decimal
    eth_usd: Decimal
    usd_ratio: int
    table_ratio: int
    table_basis: str


@dataclass(frozen=True)
class ComparisonReport:
    rows: tuple[ComparisonRow, ...]
    creation: CreationCost
    rates: RateTable
    eth: EthConstants = field(default_factory=EthConstants)

    def row(self, label: str) -> ComparisonRow:
        return next(r for r in self.rows if r.label == label)


def _ratio(num: Decimal, den: Decimal) -> int:
    return int((num / den).to_integral_value(rounding=ROUND_HALF_EVEN))


def comparison_report(events: int, relations: int, status_updates: int,
                      rates: RateTable = RateTable(),
                      eth: EthConstants = EthConstants()) -> ComparisonReport:
    """Algorand vs Ethereum costs for contract creation and one execution.

    Two ratio columns are produced. ``usd_ratio`` divides USD by USD on every
    row. ``table_ratio`` reproduces the historical comparison table, whose
    creation rows divide the Ethereum USD cost by the Algo quantity while the
    execution row divides by the Algorand USD cost; ``table_basis`` names the
    denominator used.
    """
    cc = creation_cost(events, relations, status_updates, rates)
    ex = execution_cost(rates)
    eth_create = eth.usd(eth.creation_gas)
    eth_exec = eth.usd(eth.execution_gas)
    rows = []
    for label, micro, usd, gas, eth_usd, basis in (
        ("creation_excl_escrow", cc.fee_microalgos, cc.usd_excl_escrow, eth.creation_gas, eth_create, "algo"),
        ("creation_incl_escrow", cc.total_microalgos, cc.usd_incl_escrow, eth.creation_gas, eth_create, "algo"),
        ("execution", ex.microalgos, ex.usd, eth.execution_gas, eth_exec, "usd"),
    ):
        qty = algos(micro)
        rows.append(ComparisonRow(
            label=label,
            algo=qty,
            algorand_usd=usd,
            eth_gas=Decimal(gas),
            eth_usd=eth_usd,
            usd_ratio=_ratio(eth_usd, usd),
            table_ratio=_ratio(eth_usd, qty if basis == "algo" else usd),
            table_basis=basis,
        ))
    return ComparisonReport(tuple(rows), cc, rates, eth)


def escrow_curve(max_tsn: int = MAX_EVENTS, rates: RateTable = RateTable()) -> list[tuple[int, Decimal]]:
    _check_tsn(max_tsn)
    return [(n, to_usd(escrow_overall(n).escrow_overall, rates.usd_per_algo))
            for n in range(max_tsn + 1)]
