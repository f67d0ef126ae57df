import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dcralgo.dcr import Marking, Relation, RelationKind, derive_address, new_graph, random_graph
from dcralgo.errors import ParseError
from dcralgo.graphfile import format_graph, parse_graph
from dcralgo.scenario import corpus_names, corpus_text, parse_scenario, replay

ADDR = derive_address("someone").hex()


def test_mortgage_corpus(mortgage_file):
    g = mortgage_file.to_graph()
    assert g.event_count == 6 and len(g.relations) == 10
    assert mortgage_file.names[3] == "Statistical appraisal"
    assert g.marking == Marking.of(pending=[6], included=range(1, 7))
    assert Relation(1, RelationKind.CONDITION, 5) in g.relations


def test_names_and_comments_roundtrip():
    text = f'dcrgraph v1\n# c\nevent 1 executor={ADDR} included name="a \\"b\\" # c"\n'
    gf = parse_graph(text)
    assert gf.names == {1: 'a "b" # c'}
    again = parse_graph(format_graph(gf.to_graph(), gf.names))
    assert again.names == gf.names and again.to_graph() == gf.to_graph()


@pytest.mark.parametrize("text, line", [
    ("event 1", 1),
    ("dcrgraph v1\nevent 2 executor=" + ADDR, 2),
    ("dcrgraph v1\nevent 1 executor=abc", 2),
    ("dcrgraph v1\nevent 1", 2),
    ("dcrgraph v1\nevent 1 executor=" + ADDR + " sleepy", 2),
    ("dcrgraph v1\nevent 1 executor=" + ADDR + " executed", 2),
    ("dcrgraph v1\nevent 1 executor=" + ADDR + "\nrel 1 precedes 1", 3),
    ("dcrgraph v1\nevent 1 executor=" + ADDR + "\nrel 1 condition 2", 3),
    ("dcrgraph v1\nevent 1 executor=" + ADDR + "\nrel 1 condition 1\nrel 1 condition 1", 4),
    ("dcrgraph v1\nflow 1 2", 2),
    ("dcrgraph v1\nevent 1 executor=" + ADDR + ' name="open', 2),
])
def test_parse_errors_carry_line_numbers(text, line):
    with pytest.raises(ParseError) as info:
        parse_graph(text)
    assert info.value.line == line


def test_executed_flag_can_be_allowed():
    gf = parse_graph(f"dcrgraph v1\nevent 1 executor={ADDR} executed", allow_executed=True)
    assert gf.marking.executed == {1}


def test_empty_graph():
    assert parse_graph("dcrgraph v1\n").to_graph().event_count == 0


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 25), st.sampled_from([0.05, 0.2, 0.6]), st.integers(0, 10**6))
def test_print_parse_roundtrip(n, density, seed):
    g = random_graph(seed, n, density)
    assert parse_graph(format_graph(g)).to_graph(g.creator) == g


def test_scenario_corpus_passes():
    assert {"mortgage.dcr", "mortgage.scn"} <= set(corpus_names())
    report = replay(parse_scenario(corpus_text("mortgage.scn")))
    assert report.passed, [o for o in report.outcomes if not o.ok]
    assert report.txn_count == 24


def test_scenario_failures_are_reported(tmp_path):
    (tmp_path / "g.dcr").write_text(format_graph(new_graph(1, [], Marking.of(included=[1]))))
    scn = parse_scenario("scenario v1\ngraph g.dcr\nexec 1 expect=NotEnabled\ncheck accepting\nstatus 1 pend\n"
                         "check event 1 pending not-executed\n")
    report = replay(scn, base=tmp_path)
    assert [o.ok for o in report.outcomes] == [False, True, True, False]


@pytest.mark.parametrize("text", [
    "graph x",
    "scenario v1\nexec 1",
    "scenario v1\ngraph a\ngraph b",
    "scenario v1\ngraph a\nexec x",
    "scenario v1\ngraph a\nexec 1 as=nobody",
    "scenario v1\ngraph a\nstatus 1 wobble",
    "scenario v1\ngraph a\ncheck event 1 sideways",
    "scenario v1\ngraph a\ncheck",
    "scenario v1\ngraph a\nfly 1",
])
def test_scenario_parse_errors(text):
    with pytest.raises(ParseError):
        parse_scenario(text)
