import json
import random

import pytest
from hypothesis import given, settings

from flowforge import graph as wg
from flowforge.graph import (
    DuplicateEdge, DuplicateEnd, DuplicateId, DuplicateStart, SchemaError, UnknownNode,
)

from strategies import build_random_graph, valid_graphs

SEVEN = ("MissingStart", "MissingEnd", "DisconnectedNode", "DeadEndNode",
         "UnboundInput", "DuplicateId", "BadBranchLabels")


def linear():
    g = wg.WorkflowGraph()
    g.add_start_node({"xs": [1, 2, 3]})
    g.add_function_node("step1_sum", "sum_list", {"xs": "xs"}, "total")
    g.add_end_node("total")
    g.add_edge(wg.START_ID, "step1_sum")
    g.add_edge("step1_sum", wg.END_ID)
    return g


def test_builder_rejects_structural_mistakes():
    g = linear()
    with pytest.raises(DuplicateStart):
        g.add_start_node()
    with pytest.raises(DuplicateEnd):
        g.add_end_node()
    with pytest.raises(DuplicateId):
        g.add_function_node("step1_sum", "add", {}, "z")
    with pytest.raises(UnknownNode):
        g.add_edge("step1_sum", "nowhere")
    with pytest.raises(DuplicateEdge):
        g.add_edge(wg.START_ID, "step1_sum")


def test_initial_data_is_widened():
    assert linear().start.initial_data == {"xs": [1.0, 2.0, 3.0]}


def test_valid_linear_graph():
    assert wg.validate(linear(), ["sum_list"]).valid


def test_unknown_tool_only_with_registry():
    g = linear()
    assert wg.validate(g).valid
    assert wg.validate(g, ["add"]).codes() == {"UnknownTool"}


# each seeder breaks one rule of a valid graph
def _drop_kind(kind):
    def seed(g, rng):
        victim = next(n for n in g.nodes if n.kind is kind)
        g.nodes.remove(victim)
        g.edges[:] = [e for e in g.edges if victim.id not in (e.source, e.target)]
    return seed


def _orphan(g, rng):
    g.nodes.append(wg.Node("orphan", wg.NodeKind.FUNCTION_CALL, "add", {"a": "x", "b": "y"}, "z"))
    g.edges.append(wg.Edge("orphan", wg.END_ID))


def _dead_end(g, rng):
    g.nodes.append(wg.Node("stuck", wg.NodeKind.FUNCTION_CALL, "add", {"a": "x", "b": "y"}, "z"))
    first = g.out_edges(wg.START_ID)[0]
    g.edges.append(wg.Edge(wg.START_ID, "stuck"))
    g.edges.remove(first)
    g.edges.append(wg.Edge("stuck", first.target))
    # now remove the outgoing edge of a call to make a dead end
    g.edges[:] = [e for e in g.edges if e.source != "stuck"]


def _unbound(g, rng):
    call = next(n for n in g.nodes if n.kind is wg.NodeKind.FUNCTION_CALL)
    call.input_keys = dict(call.input_keys, a="never_written")


def _duplicate(g, rng):
    call = next(n for n in g.nodes if n.kind is wg.NodeKind.FUNCTION_CALL)
    g.nodes.append(wg.Node(call.id, wg.NodeKind.FUNCTION_CALL, "add", {"a": "x", "b": "y"}, "q"))


def _bad_labels(g, rng):
    edge = g.out_edges(wg.START_ID)[0]
    g.edges[g.edges.index(edge)] = wg.Edge(edge.source, edge.target, "true")


SEEDERS = {
    "MissingStart": _drop_kind(wg.NodeKind.START),
    "MissingEnd": _drop_kind(wg.NodeKind.END),
    "DisconnectedNode": _orphan,
    "DeadEndNode": _dead_end,
    "UnboundInput": _unbound,
    "DuplicateId": _duplicate,
    "BadBranchLabels": _bad_labels,
}


@pytest.mark.parametrize("code", SEVEN)
@settings(max_examples=30, deadline=None)
@given(graph=valid_graphs())
def test_validate_catches_seeded_violation(code, graph):
    assert wg.validate(graph).valid
    SEEDERS[code](graph, random.Random(0))
    assert code in wg.validate(graph).codes()


def test_condition_needs_both_labels():
    g = wg.WorkflowGraph()
    g.add_start_node({"x": 1})
    g.add_condition_node("c", "x > 0")
    g.add_end_node()
    g.add_edge(wg.START_ID, "c")
    g.add_edge("c", wg.END_ID, "true")
    assert "BadBranchLabels" in wg.validate(g).codes()
    g.add_edge("c", wg.END_ID, "false")
    assert wg.validate(g).valid


def test_condition_reading_unknown_key():
    g = wg.WorkflowGraph()
    g.add_start_node({"x": 1})
    g.add_condition_node("c", "y > 0")
    g.add_end_node()
    g.add_edge(wg.START_ID, "c")
    g.add_edge("c", wg.END_ID, "true")
    g.add_edge("c", wg.END_ID, "false")
    assert wg.validate(g).codes() == {"UnboundInput"}


@settings(max_examples=500, deadline=None)
@given(valid_graphs())
def test_serialization_round_trip(graph):
    text = wg.serialize(graph)
    back = wg.deserialize(text)
    assert wg.to_document(back) == wg.to_document(graph)
    assert wg.serialize(back) == text


@settings(max_examples=200, deadline=None)
@given(valid_graphs())
def test_render_state_mentions_each_element_once(graph):
    text = wg.render_state(graph)
    nodes_part, rest = text.split("\n\nEdges (")
    edges_part = rest.split("\n\nMissing Elements")[0]
    node_lines = [l[4:] for l in nodes_part.splitlines()[1:]]
    edge_lines = [l[4:] for l in edges_part.splitlines()[1:]]
    assert sorted(l.split(" (")[0] for l in node_lines) == sorted(n.id for n in graph.nodes)
    assert sorted(edge_lines) == sorted(str(e) for e in graph.edges)
    assert text.endswith("Missing Elements: None")


def test_render_state_lists_missing_pieces():
    g = wg.WorkflowGraph()
    g.add_start_node({"x": 1})
    g.add_condition_node("check", "x > 0")
    g.add_edge(wg.START_ID, "check")
    g.add_edge("check", wg.START_ID, "true")
    text = wg.render_state(g)
    assert "End node (call add_end_node)" in text
    assert "check is missing its 'false' branch" in text
    assert "check (CONDITION): x > 0" in text


@pytest.mark.parametrize("doc,path", [
    ({"edges": []}, "$.nodes"),
    ({"nodes": [{"id": "a"}], "edges": []}, "$.nodes[0].kind"),
    ({"nodes": [{"id": "a", "kind": "teleport"}], "edges": []}, "$.nodes[0].kind"),
    ({"nodes": [], "edges": [{"from": "a"}]}, "$.edges[0].to"),
])
def test_schema_errors_carry_paths(doc, path):
    with pytest.raises(SchemaError) as info:
        wg.from_document(doc)
    assert info.value.path == path


def test_deserialize_rejects_non_json():
    with pytest.raises(SchemaError):
        wg.deserialize("{nodes")


def test_describe_mentions_counts():
    text = wg.describe(linear())
    assert "3 nodes" in text and "2 edges" in text


def test_document_is_json_clean():
    g = build_random_graph(7, 4, 2)
    json.loads(wg.serialize(g))
