import pytest
from hypothesis import given, strategies as st

from flowforge import graph as wg
from flowforge.tools import (
    BUILTIN_NAMES, CATEGORIES, ArityOrNameMismatch, DuplicateTool, Param, Partition, RegistryError,
    ToolError, ToolRegistry, ToolSpec, UnknownCategory, UnknownTool, builtin_suite, business_registry,
    graph_tools, render_spec, round_half_even, scan_signatures, session_registry,
)


def test_every_category_has_eight_tools():
    for cat in CATEGORIES:
        assert len(builtin_suite(cat)) == 8
    assert len(BUILTIN_NAMES) == 32


def test_unknown_category():
    with pytest.raises(UnknownCategory):
        builtin_suite("astrology")


def test_duplicate_registration():
    spec, fn = builtin_suite("math")[0]
    with pytest.raises(DuplicateTool):
        ToolRegistry([(spec, fn), (spec, fn)])


def test_restricted_registry_keeps_requested_order():
    reg = business_registry(names=["upper", "add"])
    assert reg.names == ["upper", "add"]
    with pytest.raises(RegistryError):
        business_registry(names=["teleport"])


def test_add_rendering():
    spec = business_registry(names=["add"]).spec("add")
    assert render_spec(spec) == (
        "Name: add\nDescription: Add two numbers together\nParameters:\n"
        "- a (number): First number to add\n- b (number): Second number to add\n"
        f"Returns: {spec.returns}")


@pytest.mark.parametrize("cats", [["math"], ["math", "data"], list(CATEGORIES)])
def test_signature_rendering_round_trips(cats):
    reg = business_registry(cats)
    text = reg.render_signatures()
    assert scan_signatures(text) == [(s.name, tuple(p.name for p in s.params)) for s in reg.specs()]


@pytest.mark.parametrize("name,args,want", [
    ("add", {"a": 2, "b": 3}, 5.0),
    ("div", {"a": 1, "b": 4}, 0.25),
    ("round_to", {"x": 2.675, "digits": 2}, 2.68),
    ("round_to", {"x": 0.125, "digits": 2}, 0.12),
    ("sum_list", {"xs": []}, 0.0),
    ("filter_gt", {"xs": [1, 5, 10], "threshold": 2}, [5.0, 10.0]),
    ("upper", {"text": "abc"}, "ABC"),
    ("substring", {"text": "hello", "start": 1, "end": 3}, "el"),
    ("xor", {"a": True, "b": False}, True),
    ("implies", {"a": True, "b": False}, False),
    ("select_if", {"cond": False, "a": 1, "b": "x"}, "x"),
])
def test_builtin_behaviour(name, args, want):
    assert business_registry().execute(name, args) == want


@pytest.mark.parametrize("name,args,exc,fragment", [
    ("teleport", {}, UnknownTool, "available"),
    ("add", {"x": 1, "y": 2}, ArityOrNameMismatch, "unexpected parameter(s): x, y"),
    ("add", {"a": 1}, ArityOrNameMismatch, "missing parameter(s): b"),
    ("add", {"a": "1", "b": 2}, ToolError, "expects number"),
    ("div", {"a": 1, "b": 0}, ToolError, "division by zero"),
    ("sqrt", {"x": -1}, ToolError, "negative"),
    ("round_to", {"x": 1.5, "digits": 0.5}, ToolError, "integer"),
])
def test_tool_errors(name, args, exc, fragment):
    with pytest.raises(exc) as info:
        business_registry().execute(name, args)
    assert fragment in info.value.message
    assert info.value.call_args == args


def test_error_carries_signature_help():
    with pytest.raises(ToolError) as info:
        business_registry().execute("add", {"x": 1})
    assert "add(a, b)" in info.value.signature_info


@given(st.floats(-1e6, 1e6, allow_nan=False), st.integers(0, 6))
def test_round_half_even_matches_decimal_literal(x, digits):
    from decimal import Decimal, ROUND_HALF_EVEN
    want = float(Decimal(repr(x)).quantize(Decimal(1).scaleb(-digits), rounding=ROUND_HALF_EVEN))
    assert round_half_even(x, digits) == want


def test_graph_tools_mutate_bound_graph():
    g = wg.WorkflowGraph()
    reg = ToolRegistry(graph_tools(g))
    assert set(reg.names) == {"add_start_node", "add_function_node", "add_condition_node",
                              "add_edge", "add_end_node"}
    reg.execute("add_start_node", {"initial_data": {"xs": [1]}})
    reg.execute("add_function_node", {"node_id": "s", "function": "sum_list",
                                      "input_keys": {"xs": "xs"}, "output_key": "t"})
    reg.execute("add_end_node", {})
    reg.execute("add_edge", {"from_node": wg.START_ID, "to_node": "s"})
    reg.execute("add_edge", {"from_node": "s", "to_node": wg.END_ID})
    assert wg.validate(g, ["sum_list"]).valid
    with pytest.raises(ToolError):
        reg.execute("add_edge", {"from_node": "s", "to_node": "missing"})


def test_session_registry_partitions():
    reg = session_registry(business_registry(["math"]), wg.WorkflowGraph())
    parts = {reg.partition_of(n) for n in reg.names}
    assert parts == {Partition.BUSINESS, Partition.GRAPH, Partition.TERMINAL}
    assert reg.names[-1] == "finish"
    only_g = reg.view([Partition.GRAPH, Partition.TERMINAL])
    assert all(reg.partition_of(n) is not Partition.BUSINESS for n in only_g.names)
    assert reg.execute("finish", {"answer": 6}) == "6"


def test_optional_params_may_be_omitted():
    spec = ToolSpec("f", "d", (Param("a", "number", "x"), Param("b", "number", "y", False)), "r")
    reg = ToolRegistry([(spec, lambda a, b=1.0: a + b)])
    assert reg.execute("f", {"a": 1}) == 2.0
