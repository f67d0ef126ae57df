import pytest

from dcralgo.avm import OP_BUDGET, Ledger
from dcralgo.contract import (
    DcrClient,
    dcr_schema,
    deploy,
    deploy_graph,
    read_image,
    status_updates,
    transition_table,
)
from dcralgo.dcr import MAX_EVENTS, Marking, Relation, RelationKind, derive_address, new_graph, random_graph
from dcralgo.encoding import GLOBAL_SLOT, KvSlot, links_key, links_ordinal, slot_for_pair, state_image
from dcralgo.errors import ConstructionError
from dcralgo.harness import fresh_ledger, measure_budget
from conftest import CREATOR, FUNDS


def u64(x):
    return x.to_bytes(8, "big")


def test_mortgage_initial_state(mortgage):
    ledger, client = mortgage
    g = client.graph()
    assert g.marking == Marking.of(pending=[6], included=range(1, 7))
    assert client.execute(6).reason == "NotEnabled"
    assert client.execute(5).reason == "NotEnabled"
    assert client.execute(1).approved


def test_wrong_sender_is_rejected(mortgage):
    _, client = mortgage
    assert client.execute(1, sender=client.executor(2)).reason == "NotExecutor"
    assert client.execute(9, sender=client.executor(1)).reason == "UnknownEvent"


def test_only_creator_constructs(mortgage):
    _, client = mortgage
    outsider = client.executor(1)
    assert client.add_event(bytes(32), sender=outsider).reason == "NotCreator"
    assert client.add_relation(1, RelationKind.CONDITION, 2, sender=outsider).reason == "NotCreator"
    assert client.update_status(1, "exclude", sender=outsider).reason == "NotCreator"


def test_bad_arguments(mortgage):
    _, client = mortgage
    assert client.call(client.creator, b"add_event", b"short").reason == "BadArgument"
    assert client.call(client.creator, b"add_relation", u64(1), u64(2), u64(5)).reason == "BadArgument"
    assert client.call(client.creator, b"update_status", u64(1), u64(3)).reason == "BadArgument"
    assert client.call(client.creator, b"add_relation", u64(0), u64(2), u64(1)).reason == "UnknownEvent"
    assert client.call(client.creator, b"frobnicate").reason == "UnknownMethod"
    assert client.call(client.creator).reason == "BadArgument"


def test_status_updates_set_single_bits(mortgage):
    _, client = mortgage
    client.update_status(3, "exclude")
    client.update_status(2, "pend")
    m = client.marking()
    assert 3 not in m.included and 2 in m.pending
    client.update_status(3, "include")
    assert 3 in client.marking().included


def test_status_updates_plan():
    m = Marking.of(pending=[2], included=[1, 2])
    assert status_updates(m) == [(1, "include"), (2, "include"), (2, "pend")]
    with pytest.raises(ValueError):
        status_updates(Marking.of(executed=[1]))


def test_construction_count(mortgage_file):
    ledger = fresh_ledger(mortgage_file.to_graph(CREATOR))
    built = deploy(ledger, CREATOR, mortgage_file.executors, mortgage_file.relations, mortgage_file.marking)
    assert built.txn_count == 1 + 6 + 10 + 7
    assert built.fees == built.txn_count * 1000


@pytest.mark.parametrize("seed, n, density", [(1, 5, 0.3), (2, 20, 0.15), (3, 33, 0.1), (4, 61, 0.05)])
def test_onchain_state_is_bit_exact(seed, n, density):
    g = random_graph(seed, n, density)
    built = deploy_graph(fresh_ledger(g), g)
    assert read_image(built.client.ledger, built.app_id) == state_image(g)


def test_rows_grow_with_event_count():
    ledger = Ledger()
    ledger.fund(CREATOR, FUNDS)
    client = DcrClient(ledger, ledger.deploy_app(CREATOR, dcr_schema(4), "dcr"))
    for _ in range(2):
        assert client.add_event(derive_address("x")).approved
    assert client.add_relation(1, RelationKind.RESPONSE, 2).approved
    # the fourth event widens every row from two bytes to three
    for _ in range(2):
        assert client.add_event(derive_address("y")).approved
    g = client.graph()
    assert g.event_count == 4 and g.relations == {Relation(1, RelationKind.RESPONSE, 2)}
    assert all(len(row.data) == 3 for row in read_image(ledger, client.app_id).links)


def test_capacity_limit():
    execs = [derive_address(f"e{i}") for i in range(MAX_EVENTS + 1)]
    ledger = Ledger()
    ledger.fund(CREATOR, FUNDS)
    with pytest.raises(ConstructionError) as info:
        deploy(ledger, CREATOR, execs, [])
    assert info.value.step == MAX_EVENTS + 1
    assert "CapacityExceeded" in str(info.value)


def test_pairs_spill_into_storage_accounts():
    g = random_graph(9, MAX_EVENTS, 0.02)
    built = deploy_graph(fresh_ledger(g), g)
    ledger, app = built.client.ledger, built.client.app
    assert built.optins == 4 and len(app.storage_accounts) == 4
    assert len(app.global_state) == 64
    # event 31's links pair is ordinal 64, event 31's executor is the 65th pair
    assert slot_for_pair(links_ordinal(31)) == GLOBAL_SLOT
    assert ledger.kv_read(app.app_id, KvSlot("local", 0), b"31") == g.executor(31)
    assert ledger.kv_read(app.app_id, KvSlot("local", 3), links_key(61)) is not None


def test_schema_sizes():
    assert dcr_schema(5).global_byteslices == 12
    assert dcr_schema(61).global_byteslices == 63
    assert dcr_schema(61).local_byteslices == 16
    assert dcr_schema(30).local_byteslices == 0


def test_transition_table_against_semantics():
    table = transition_table()
    for g in range(32):
        for n in range(16):
            v = table[g << 4 | n]
            inc, pend, done = n & 8, n & 4, n & 2
            blocked = (g & 2 and inc and not done) or (g & 4 and inc and pend)
            assert bool(v & 16) == bool(blocked)
            assert bool(v & 8) == bool(g & 16 or (inc and not g & 8))
            assert bool(v & 4) == bool(pend or g & 1)
            assert v & 2 == done and not v & 1


def test_literal_variant_differs_on_excluded_events():
    g = new_graph(1, [], Marking())
    ledger = fresh_ledger(g)
    strict = deploy_graph(ledger, g).client
    literal = deploy_graph(ledger, g, program="dcr-literal").client
    assert strict.execute(1).reason == "NotEnabled"
    assert literal.execute(1).approved


def test_budget_on_saturated_graph():
    report = measure_budget(MAX_EVENTS)
    assert set(report.max_ops) == {"add_event", "add_relation", "update_status", "execute"}
    assert report.overall_max <= OP_BUDGET
    assert report.approved["execute"] == MAX_EVENTS


def test_fee_payer_app(mortgage):
    ledger, client = mortgage
    ledger.fund(client.app.address, 2000)
    res = client.execute(1, fee_payer="app")
    assert res.approved and ledger.balance(client.app.address) == 1000
    assert isinstance(DcrClient(ledger, client.app_id).marking(), Marking)
