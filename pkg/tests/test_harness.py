from dcralgo.dcr import Marking, RelationKind, new_graph
from dcralgo.harness import (
    all_relation_sets,
    check_case,
    exhaustive,
    fuzz,
    shrink,
    small_initial_markings,
)


def test_fuzz_passes_and_probes_rejections():
    report = fuzz(11, 30, max_events=25)
    assert report.passed and report.graphs == 30
    assert report.rejections_checked >= 25
    assert report.steps > 0


def test_fuzz_is_reproducible():
    a = fuzz("repro", 15, program="dcr-literal", stop_on_failure=False)
    b = fuzz("repro", 15, program="dcr-literal", stop_on_failure=False)
    assert a == b and a.mismatches > 0


def test_zero_iterations():
    report = fuzz(0, 0)
    assert report.passed and report.graphs == 0


def test_literal_counterexample_is_minimal():
    report = fuzz(5, 40, program="dcr-literal")
    cx = report.counterexample
    assert cx is not None
    assert cx.graph.event_count <= 2 and len(cx.graph.relations) <= 1 and len(cx.trace) == 1
    assert check_case(cx.graph, cx.trace, "dcr-literal") is not None
    assert check_case(cx.graph, cx.trace) is None


def test_shrink_keeps_failure():
    g = new_graph(3, [(1, RelationKind.RESPONSE, 2), (2, RelationKind.CONDITION, 3)],
                  Marking.of(pending=[1], included=[1, 3]))
    graph, trace, bad = shrink(g, [3, 1], "dcr-literal")
    assert check_case(graph, trace, "dcr-literal") == bad
    assert len(trace) == 1


def test_exhaustive_small_graphs_every_marking():
    report = exhaustive(max_events=2, max_relations=4, depth=4, markings=small_initial_markings)
    assert report.passed
    sets = [sum(1 for _ in all_relation_sets(n, 4)) for n in (1, 2)]
    assert report.graphs == 1 + 2 * sets[0] + 3 * sets[1]


def test_exhaustive_catches_literal_variant():
    report = exhaustive(max_events=2, max_relations=1, depth=2, program="dcr-literal",
                        markings=small_initial_markings)
    assert not report.passed


def test_relation_set_counts():
    assert sum(1 for _ in all_relation_sets(1, 4)) == 1 + 5 + 10 + 10 + 5
