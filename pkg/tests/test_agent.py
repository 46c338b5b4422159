import json

import pytest

from flowforge import graph as wg
from flowforge import prompts
from flowforge.agent import SessionLimits, run_enhanced_react, run_mixed, run_plan_execute, run_react
from flowforge.llm import ScriptedBackend
from flowforge.tools import business_registry, session_registry


def act(name, **args):
    return json.dumps({"reasoning": f"use {name}", "action": name, "action_input": args})


def plan(*steps):
    return json.dumps({"analysis": "do it", "steps": list(steps)})


@pytest.fixture
def reg():
    return session_registry(business_registry(["data"]))


def test_react_happy_path(reg):
    b = ScriptedBackend([act("sum_list", xs=[1, 2, 3]), act("finish", answer="6")])
    t = run_react("t", "sum [1,2,3]", reg, b)
    assert t.success and t.final_answer == "6"
    assert [s.partition for s in t.steps] == ["B", "T"]
    assert t.steps[0].observation == "6"
    system = b.calls[0][0].content
    assert system.startswith("You are a helpful AI assistant using the ReAct")
    assert "Name: sum_list" in system and "{functions_text}" not in system
    assert b.calls[1][-1].content == "Observation: 6"


def test_usage_is_summed_over_steps(reg):
    b = ScriptedBackend([act("sum_list", xs=[1]), act("finish", answer="1")])
    t = run_react("t", "q", reg, b)
    assert t.usage.output_tokens == sum(s.usage.output_tokens for s in t.steps) > 0


def test_tool_error_then_recovery(reg):
    b = ScriptedBackend([act("sum_list", values=[1, 2]), act("sum_list", xs=[1, 2]), act("finish", answer="3")])
    t = run_react("t", "q", reg, b)
    assert t.success
    assert t.steps[0].tool_retries == 1 and len(t.steps[0].errors) == 1
    feedback = b.calls[1][-1].content
    assert feedback.startswith("## Execution Error")
    assert "**Function called**: sum_list" in feedback
    assert "**Current retry count**: 1/3" in feedback
    assert "sum_list(xs)" in feedback


def test_tool_retries_exhausted(reg):
    b = ScriptedBackend([act("sum_list", values=[1])] * 4)
    t = run_react("t", "q", reg, b)
    assert t.reason == "ToolRetriesExhausted"
    assert not t.steps[-1].ok


def test_format_exhausted_step_is_recorded(reg):
    b = ScriptedBackend(["nope"] * 6)
    t = run_react("t", "q", reg, b)
    assert t.reason == "FormatExhausted"
    assert t.steps[0].format_retries == 5 and t.steps[0].action == ""


def test_step_limit(reg):
    b = ScriptedBackend([act("count", xs=[1])] * 5)
    t = run_react("t", "q", reg, b, SessionLimits(max_steps=3))
    assert t.reason == "StepLimit" and len(t.steps) == 3


def test_transcript_exhausted(reg):
    t = run_react("t", "q", reg, ScriptedBackend([act("count", xs=[1])]))
    assert t.reason == "TranscriptExhausted"


def test_finish_without_business_call_is_flagged(reg):
    t = run_react("t", "q", reg, ScriptedBackend([act("finish", answer="6")]))
    assert t.success and "no_business_call" in t.flags


def test_plan_execute_issues_step_instructions(reg):
    b = ScriptedBackend([plan("Step 1: sum the list", "Step 2: finish"),
                         act("sum_list", xs=[1, 2, 3]), act("finish", answer="6")])
    t = run_plan_execute("t", "sum it", reg, b)
    assert t.success and t.plan.steps == ("Step 1: sum the list", "Step 2: finish")
    assert b.calls[0][0].content.startswith("You are a strategic planner")
    first_exec = b.calls[1]
    assert first_exec[0].content.startswith("You are a helpful AI assistant executing a pre-planned task")
    assert first_exec[1].content.startswith("sum it\n\n## Plan")
    assert first_exec[2].content.startswith("Now execute Step 1: Step 1: sum the list")
    second = b.calls[2]
    assert second[-2].content == "Observation: 6"
    assert "Step 1: sum_list(xs=[1, 2, 3]) -> 6" in second[-1].content
    assert t.usage.output_tokens == t.plan_usage.output_tokens + sum(s.usage.output_tokens for s in t.steps)


def test_plan_format_failure(reg):
    t = run_plan_execute("t", "q", reg, ScriptedBackend(["x"] * 6))
    assert t.reason == "FormatExhausted" and t.plan is None


def test_graph_steps_get_graph_observation():
    g = wg.WorkflowGraph()
    reg = session_registry(business_registry(["data"]), g)
    b = ScriptedBackend([act("add_start_node", initial_data={"xs": [1]}), act("finish", answer="ok")])
    t = run_react("t", "q", reg, b, graph=g)
    obs = b.calls[1][-1].content
    assert obs.startswith("## Observation\n")
    assert "Nodes (1):" in obs and "Missing Elements:" in obs
    assert obs.endswith("What's your next action? (respond with JSON)")
    assert t.partitions() == ["G", "T"]


def test_mixed_mode_returns_built_graph():
    business = business_registry(names=["sum_list"])
    replies = [act("sum_list", xs=[1, 2, 3]),
               act("add_start_node", initial_data={"xs": [1, 2, 3]}),
               act("add_function_node", node_id="s", function="sum_list", input_keys={"xs": "xs"}, output_key="t"),
               act("add_end_node"),
               act("add_edge", from_node=wg.START_ID, to_node="s"),
               act("add_edge", from_node="s", to_node=wg.END_ID),
               act("finish", answer="6")]
    b = ScriptedBackend(replies)
    t, g = run_mixed("react", "t", "sum", business, b)
    assert t.success and wg.validate(g, ["sum_list"]).valid
    assert b.calls[0][1].content.endswith(prompts.MIXED_TASK_SUFFIX)


def test_enhanced_react_builds_after_the_fact():
    business = business_registry(names=["sum_list"])
    replies = [act("sum_list", xs=[1, 2, 3]), act("finish", answer="6"),
               act("add_start_node", initial_data={"xs": [1, 2, 3]}),
               act("add_function_node", node_id="s", function="sum_list", input_keys={"xs": "xs"}, output_key="t"),
               act("add_end_node"),
               act("add_edge", from_node=wg.START_ID, to_node="s"),
               act("add_edge", from_node="s", to_node=wg.END_ID),
               act("finish", answer="graph done")]
    b = ScriptedBackend(replies)
    t, g = run_enhanced_react("t", "sum", business, b)
    assert t.final_answer == "6"
    assert g is not None and wg.validate(g).valid
    assert {s.phase for s in t.steps} == {"main", "post_hoc"}
    assert b.calls[2][-1].content == prompts.POST_HOC_GRAPH


def test_enhanced_react_post_hoc_failure_is_flagged():
    business = business_registry(names=["sum_list"])
    b = ScriptedBackend([act("sum_list", xs=[1]), act("finish", answer="1"), act("sum_list", xs=[1])] + ["x"] * 3)
    t, g = run_enhanced_react("t", "sum", business, b, SessionLimits(max_tool_retries=1))
    assert g is None
    assert t.success
    assert any(f.startswith("post_hoc_failed:") for f in t.flags)
