import pytest
from hypothesis import given, settings, strategies as st

from flowforge import graph as wg
from flowforge.trace import Trace, TraceStep
from flowforge.whitebox import (
    DepthExhausted, Fsm, InvalidGraph, behavioral_equivalent, bounded_paths, canonicalize, diagnose,
    fidelity, multiset_jaccard, path_sufficiency, structural_congruence,
)

from strategies import renamed, valid_graphs


def loop_graph(fn="sqrt"):
    g = wg.WorkflowGraph()
    g.add_start_node({"x": 4, "target": 2, "digits": 2})
    g.add_function_node("root", fn, {"x": "x"}, "x")
    g.add_function_node("gap", "abs_diff", {"a": "x", "b": "target"}, "abs_diff")
    g.add_condition_node("check", "abs_diff < 0.01")
    g.add_function_node("fmt", "round_to", {"x": "x", "digits": "digits"}, "answer")
    g.add_end_node("answer")
    g.add_edge(wg.START_ID, "root")
    g.add_edge("root", "gap")
    g.add_edge("gap", "check")
    g.add_edge("check", "fmt", "true")
    g.add_edge("check", "root", "false")
    g.add_edge("fmt", wg.END_ID)
    return g


@settings(max_examples=200, deadline=None)
@given(valid_graphs(), st.integers(0, 10**6))
def test_canonical_form_ignores_ids_and_order(graph, seed):
    c = canonicalize(graph)
    assert canonicalize(c.to_graph()).nodes == c.nodes
    assert canonicalize(c.to_graph()).edges == c.edges
    other = canonicalize(renamed(graph, seed))
    assert (other.nodes, other.edges) == (c.nodes, c.edges)


@settings(max_examples=100, deadline=None)
@given(valid_graphs(), st.integers(0, 10**6))
def test_equivalence_is_reflexive_and_rename_invariant(graph, seed):
    assert behavioral_equivalent(graph, graph).equivalent
    assert behavioral_equivalent(graph, renamed(graph, seed)).equivalent
    assert structural_congruence(graph, renamed(graph, seed)).aggregate == 1.0


def test_different_graphs_have_a_witness():
    a, b = loop_graph(), loop_graph("abs_value")
    eq = behavioral_equivalent(a, b)
    assert eq.verdict == "Different"
    assert Fsm(a).accepts(eq.witness) != Fsm(b).accepts(eq.witness)


def test_congruence_drops_for_mutation():
    score = structural_congruence(loop_graph(), loop_graph("abs_value"))
    assert 0 < score.aggregate < 1
    assert multiset_jaccard([1, 1, 2], [1, 2, 2]) == pytest.approx(2 / 4)
    assert multiset_jaccard([], []) == 1.0


def test_bounded_paths_respect_depth():
    g = loop_graph()
    shallow, deep = bounded_paths(g, 0), bounded_paths(g, 1)
    assert len(shallow) == 1
    assert len(deep) == 2 and shallow < deep
    assert path_sufficiency(g, g, 2).coverage == 1.0


def test_cycle_without_condition_is_reported():
    g = wg.WorkflowGraph()
    g.add_start_node()
    g.add_function_node("a", "add", {"a": "x", "b": "x"}, "x")
    g.add_function_node("b", "add", {"a": "x", "b": "x"}, "x")
    g.add_condition_node("c", "x > 1")
    g.add_end_node("x")
    g.add_edge(wg.START_ID, "c")
    g.add_edge("c", "a", "true")
    g.add_edge("c", wg.END_ID, "false")
    g.add_edge("a", "b")
    g.add_edge("b", "a")
    with pytest.raises((DepthExhausted, InvalidGraph)):
        bounded_paths(g, 1)


def test_invalid_graph_is_refused():
    g = wg.WorkflowGraph()
    g.add_start_node()
    with pytest.raises(InvalidGraph):
        canonicalize(g)


def test_fidelity_replays_loop_trace():
    calls = ["sqrt", "abs_diff", "sqrt", "abs_diff", "round_to"]
    assert fidelity(loop_graph(), calls) == 1.0
    assert fidelity(loop_graph(), ["round_to", "sqrt"]) == 0.0
    assert fidelity(loop_graph(), ["sqrt"]) == 1.0
    with pytest.raises(ValueError):
        fidelity(loop_graph(), [])


def test_diagnose_record():
    t = Trace("t", "q")
    for i, name in enumerate(["sqrt", "abs_diff", "round_to"]):
        t.steps.append(TraceStep(i, "", name, {}, "1", "B"))
    d = diagnose(loop_graph(), loop_graph(), t)
    assert d["available"] and d["equivalence"] == "Equivalent"
    assert d["score"] == 1.0 and d["fidelity"] == 1.0 and d["paths"]["coverage"] == 1.0
    assert diagnose(loop_graph(), None) == {"available": False}
    assert diagnose(loop_graph(), wg.WorkflowGraph()) == {"available": False}
