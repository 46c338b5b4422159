import pytest

from flowforge import graph as wg
from flowforge.executor import (
    AmbiguousSuccessor, DeadEnd, ExecLimits, InvalidGraph, LlmNodeUnsupported, LoopCapExceeded,
    NodeExprError, NodeToolError, UnboundKey, execute, run_tests,
)
from flowforge.tools import business_registry

from desk_oracles import iterative_sqrt, oracle


def test_every_desk_golden_graph_matches_its_oracle(desk):
    assert len(desk) >= 12
    for inst in desk:
        reg = business_registry(names=inst.toolset)
        for inputs, golden in inst.tests + inst.examples:
            answer, _ = execute(inst.golden_graph, inputs, reg)
            assert answer == oracle(inst.id, inputs) == golden, (inst.id, inputs)


def sqrt_loop():
    """Newton iteration toward sqrt(n) with a convergence check."""
    g = wg.WorkflowGraph()
    g.add_start_node({"n": 2, "x": 2, "two": 2, "digits": 3})
    g.add_function_node("target", "sqrt", {"x": "n"}, "target")
    g.add_function_node("ratio", "div", {"a": "n", "b": "x"}, "ratio")
    g.add_function_node("total", "add", {"a": "x", "b": "ratio"}, "total")
    g.add_function_node("update", "div", {"a": "total", "b": "two"}, "x")
    g.add_function_node("gap", "abs_diff", {"a": "x", "b": "target"}, "abs_diff")
    g.add_condition_node("check", "abs_diff < 0.001")
    g.add_function_node("round", "round_to", {"x": "x", "digits": "digits"}, "answer")
    g.add_end_node("answer")
    for a, b in [(wg.START_ID, "target"), ("target", "ratio"), ("ratio", "total"), ("total", "update"),
                 ("update", "gap"), ("gap", "check"), ("round", wg.END_ID)]:
        g.add_edge(a, b)
    g.add_edge("check", "round", "true")
    g.add_edge("check", "ratio", "false")
    return g


def test_iterating_graph_converges():
    reg = business_registry(["math"])
    answer, log = execute(sqrt_loop(), {}, reg)
    assert answer == "1.414" == str(iterative_sqrt(2))
    assert log.iterations > 1
    assert [c["outcome"] for c in log.conditions][-1] is True
    assert all(c["outcome"] is False for c in log.conditions[:-1])


def test_inputs_override_initial_data():
    reg = business_registry(["math"])
    assert execute(sqrt_loop(), {"n": 9, "x": 9}, reg)[0] == "3"


def test_loop_cap():
    reg = business_registry(["math"])
    with pytest.raises(LoopCapExceeded):
        execute(sqrt_loop(), {}, reg, ExecLimits(max_visits=5))


def test_run_log_is_jsonl():
    reg = business_registry(["math"])
    _, log = execute(sqrt_loop(), {}, reg)
    lines = log.dumps().splitlines()
    assert len(lines) == len(log.visited) + len(log.calls) + len(log.conditions)


def chain(fn="add", keys=None, end_key="out"):
    g = wg.WorkflowGraph()
    g.add_start_node({"a": 1, "b": 2})
    g.add_function_node("f", fn, keys or {"a": "a", "b": "b"}, "out")
    g.add_end_node(end_key)
    g.add_edge(wg.START_ID, "f")
    g.add_edge("f", wg.END_ID)
    return g


def test_linear():
    assert execute(chain(), {}, business_registry(["math"]))[0] == "3"


def test_last_write_default():
    g = chain()
    g.node(wg.END_ID).result_key = wg.LAST_WRITE
    assert execute(g, {"a": 5}, business_registry(["math"]))[0] == "7"


def test_invalid_graph_rejected_up_front():
    with pytest.raises(InvalidGraph):
        execute(chain(fn="teleport"), {}, business_registry(["math"]))


def test_tool_failure_names_the_node():
    with pytest.raises(NodeToolError) as info:
        execute(chain(fn="div"), {"b": 0}, business_registry(["math"]))
    assert info.value.node == "f"


def test_unbound_key_at_runtime():
    g = chain(keys={"a": "a", "b": "z"})
    with pytest.raises(UnboundKey):
        execute(g, {}, business_registry(["math"]), check=False)


def test_condition_errors_surface():
    g = wg.WorkflowGraph()
    g.add_start_node({"s": "text"})
    g.add_condition_node("c", "s > 1")
    g.add_end_node("s")
    g.add_edge(wg.START_ID, "c")
    g.add_edge("c", wg.END_ID, "true")
    g.add_edge("c", wg.END_ID, "false")
    with pytest.raises(NodeExprError):
        execute(g, {}, business_registry(["math"]))


def test_structural_faults_without_validation():
    reg = business_registry(["math"])
    g = wg.WorkflowGraph()
    g.add_start_node({"x": 1})
    g.add_condition_node("c", "x > 0")
    g.add_end_node("x")
    g.add_edge(wg.START_ID, "c")
    g.edges += [wg.Edge("c", wg.END_ID, "true"), wg.Edge("c", wg.START_ID, "true"), wg.Edge("c", wg.END_ID, "false")]
    with pytest.raises(AmbiguousSuccessor):
        execute(g, {}, reg, check=False)
    g = chain()
    g.edges.pop()
    with pytest.raises(DeadEnd):
        execute(g, {}, reg, check=False)


def fan_out(join: bool):
    g = wg.WorkflowGraph()
    g.add_start_node({"a": 2, "b": 3})
    g.add_function_node("left", "add", {"a": "a", "b": "b"}, "s")
    g.add_function_node("right", "mul", {"a": "a", "b": "b"}, "p")
    g.add_edge(wg.START_ID, "left")
    g.add_edge(wg.START_ID, "right")
    if join:
        g.add_function_node("both", "sub", {"a": "p", "b": "s"}, "d")
        g.add_edge("left", "both")
        g.add_edge("right", "both")
        g.add_end_node("d")
        g.add_edge("both", wg.END_ID)
    else:
        g.add_end_node()
        g.add_edge("left", wg.END_ID)
        g.add_edge("right", wg.END_ID)
    return g


def test_fan_out_runs_branches_in_edge_order():
    reg = business_registry(["math"])
    answer, log = execute(fan_out(join=False), {}, reg)
    assert answer == "6"  # last write comes from the second branch
    assert log.visited == [wg.START_ID, "left", "right", wg.END_ID]


def test_join_waits_for_every_branch():
    reg = business_registry(["math"])
    answer, log = execute(fan_out(join=True), {}, reg)
    assert answer == "1"
    assert log.visited == [wg.START_ID, "left", "right", "both", wg.END_ID]


def test_llm_node_unsupported():
    g = wg.WorkflowGraph()
    g.add_start_node({})
    g.add_llm_node("think")
    g.add_end_node()
    g.add_edge(wg.START_ID, "think")
    g.add_edge("think", wg.END_ID)
    with pytest.raises(LlmNodeUnsupported):
        execute(g, {}, business_registry(["math"]))


def test_run_tests_verdicts():
    reg = business_registry(["math"])
    out = run_tests(chain(fn="div"), [({"a": 1, "b": 2}, "0.5"), ({"a": 1, "b": 2}, "9"), ({"b": 0}, "x")], reg)
    assert [v for v, _, _ in out] == ["pass", "fail", "error"]
