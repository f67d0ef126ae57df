from decimal import Decimal

import pytest

from dcralgo import cost
from dcralgo.dcr import MAX_EVENTS
from dcralgo.encoding import GLOBAL_SLOT, slot_for_pair
from dcralgo.errors import OutOfRange
from oracles import pair_slots


def enumerated_escrow(tsn):
    """Escrow from per-slot pair counts; TEN is the single global uint."""
    counts = pair_slots(tsn, slot_for_pair)
    g = counts.pop(GLOBAL_SLOT)
    local = [counts[s] for s in sorted(counts, key=lambda s: s.account_index)]
    per_pair = cost.SCHEMA_ENTRY + cost.BYTESLICE_VALUE
    glob = cost.MIN_BALANCE_PER_APP + (cost.SCHEMA_ENTRY + cost.UINT_VALUE) + per_pair * (g - 1)
    return glob, [cost.MIN_BALANCE_PER_APP + per_pair * c for c in local]


@pytest.mark.parametrize("tsn", range(MAX_EVENTS + 1))
def test_escrow_formula_matches_enumeration(tsn):
    glob, local = enumerated_escrow(tsn)
    assert cost.escrow_global(tsn) == glob
    assert cost.escrow_local_schedule(tsn) == local
    assert cost.escrow_overall(tsn).escrow_overall == glob + sum(local)


@pytest.mark.parametrize("tsn, glob, local", [
    (61, 3_278_500, [900_000, 900_000, 900_000, 750_000]),
    (5, 728_500, []),
    (0, 228_500, []),
    (30, cost.schema_escrow(1, 62), []),
    (32, cost.schema_escrow(1, 63), [250_000]),
])
def test_escrow_examples(tsn, glob, local):
    assert cost.escrow_global(tsn) == glob
    assert cost.escrow_local_schedule(tsn) == local


def test_escrow_overall_at_capacity():
    q = cost.escrow_overall(61)
    assert (q.escrow_global, q.escrow_local, q.escrow_overall) == (3_278_500, 3_450_000, 6_728_500)
    assert cost.to_usd(q.escrow_overall, Decimal("1.36")) == Decimal("9.15076")


@pytest.mark.parametrize("bad", [-1, 62, 1.5])
def test_escrow_rejects_out_of_range(bad):
    with pytest.raises(OutOfRange):
        cost.escrow_global(bad)


def test_creation_cost_small_example():
    cc = cost.creation_cost(5, 11, 3)
    assert cc.txn_count == 20 and cc.fee_microalgos == 20_000
    assert cc.usd_excl_escrow == Decimal("0.02720")
    assert cost.algos(cc.total_microalgos) == Decimal("0.7485")
    assert cc.usd_incl_escrow == Decimal("1.01796")


def test_bare_deployment():
    cc = cost.creation_cost(0, 0, 0, cost.RateTable(Decimal(1)))
    assert cc.txn_count == 1 and cost.algos(cc.fee_microalgos) == Decimal("0.001")


@pytest.mark.parametrize("rate, usd", [("1.36", "0.00136"), ("1.0", "0.00100"), ("2.72", "0.00272")])
def test_execution_cost(rate, usd):
    ex = cost.execution_cost(cost.RateTable(Decimal(rate)))
    assert ex.microalgos == 1000 and ex.usd == Decimal(usd)


def test_rate_must_be_positive():
    with pytest.raises(ValueError):
        cost.RateTable(Decimal(0))


def test_eth_constants_reproduce_published_creation_usd():
    eth = cost.EthConstants()
    assert eth.usd(eth.creation_gas) == Decimal("349.88314")


def test_comparison_report():
    report = cost.comparison_report(5, 11, 3)
    assert [r.table_ratio for r in report.rows] == [17494, 467, 19534]
    assert [r.table_basis for r in report.rows] == ["algo", "algo", "usd"]
    excl = report.row("creation_excl_escrow")
    assert excl.usd_ratio == round(excl.eth_usd / excl.algorand_usd)


def test_escrow_curve_is_monotone():
    curve = cost.escrow_curve()
    assert len(curve) == MAX_EVENTS + 1
    assert all(a[1] < b[1] for a, b in zip(curve, curve[1:]))
    assert curve[-1][1] == Decimal("9.15076")
