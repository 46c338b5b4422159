"""Deterministic reply transcripts synthesized from golden graphs.

These drive the scripted backend: an "oracle policy" that executes the
golden workflow on the instance's example input and then rebuilds the graph
with the builder tools. Per-instance variants (chosen from a hash of the
instance id, never from the run seed) inject the failure patterns the
evaluator is meant to detect.
"""

from __future__ import annotations

import hashlib
import json
from typing import Any

from . import graph as wg
from .dataset import Instance
from .executor import execute
from .tools import BUILTIN_NAMES, ToolRegistry, builtin_suite, CATEGORIES

REACT_FORGET_GRAPH = "forget_graph"
PE_GRAPH_ONLY = "graph_only"


def action(reasoning: str, name: str, args: dict[str, Any]) -> str:
    return json.dumps({"reasoning": reasoning, "action": name, "action_input": args}, ensure_ascii=False)


def plan(analysis: str, steps: list[str]) -> str:
    return json.dumps({"analysis": analysis, "steps": steps}, ensure_ascii=False)


def _int_like(v: Any) -> Any:
    if isinstance(v, float) and v.is_integer():
        return int(v)
    if isinstance(v, list):
        return [_int_like(x) for x in v]
    if isinstance(v, dict):
        return {k: _int_like(x) for k, x in v.items()}
    return v


def business_calls(inst: Instance, registry: ToolRegistry) -> tuple[list[tuple[str, dict]], str]:
    """Tool calls made by the golden graph on the first example, and its answer."""
    assert inst.golden_graph is not None
    inputs = inst.examples[0][0] if inst.examples else inst.tests[0][0]
    answer, log = execute(inst.golden_graph, inputs, registry)
    return [(c["tool"], _int_like(c["args"])) for c in log.calls], answer


def exec_replies(calls: list[tuple[str, dict]], answer: str) -> list[str]:
    out = [action(f"Call {name} on the current data", name, args) for name, args in calls]
    out.append(action("I have processed the input with functions and obtained the result", "finish",
                      {"answer": answer}))
    return out


def exec_plan(calls: list[tuple[str, dict]]) -> str:
    steps = [f"Step {i}: Use {name} on the intermediate data" for i, (name, _) in enumerate(calls, 1)]
    steps.append(f"Step {len(calls) + 1}: Return the computed result")
    return plan("Apply the business functions in order to the example input", steps)


def build_actions(graph: wg.WorkflowGraph) -> list[tuple[str, dict]]:
    """Builder-tool calls that recreate ``graph`` node by node, then edge by edge."""
    calls: list[tuple[str, dict]] = []
    start, end = graph.start, graph.end
    if start is not None:
        calls.append(("add_start_node", {"initial_data": _int_like(start.initial_data or {})}))
    for n in graph.nodes:
        if n.kind is wg.NodeKind.FUNCTION_CALL:
            calls.append(("add_function_node", {"node_id": n.id, "function": n.function,
                                                "input_keys": dict(n.input_keys or {}),
                                                "output_key": n.output_key}))
        elif n.kind is wg.NodeKind.CONDITION:
            calls.append(("add_condition_node", {"node_id": n.id, "condition_expr": n.condition_expr}))
    if end is not None:
        args = {} if end.result_key in (None, wg.LAST_WRITE) else {"result_key": end.result_key}
        calls.append(("add_end_node", args))
    for e in graph.edges:
        args = {"from_node": e.source, "to_node": e.target}
        if e.label is not None:
            args["label"] = e.label
        calls.append(("add_edge", args))
    return calls


def build_replies(graph: wg.WorkflowGraph) -> list[str]:
    out = [action(f"Graph step: {name}", name, args) for name, args in build_actions(graph)]
    out.append(action("All steps in the plan have been executed, graph is complete", "finish",
                      {"answer": wg.describe(graph)}))
    return out


def build_plan(graph: wg.WorkflowGraph) -> str:
    steps = []
    for i, (name, args) in enumerate(build_actions(graph), 1):
        if name == "add_start_node":
            steps.append(f"Step {i}: Add start node with initial data containing {sorted(args['initial_data'])}")
        elif name == "add_function_node":
            steps.append(f"Step {i}: Add function node for {args['function']} with input_keys mapping "
                         f"{args['input_keys']}")
        elif name == "add_edge":
            steps.append(f"Step {i}: Add edge from {args['from_node']} to {args['to_node']}")
        else:
            steps.append(f"Step {i}: Call {name}")
    steps.append(f"Step {len(steps) + 1}: Call finish to complete graph building")
    return plan("The trace shows the tool sequence to be captured as a workflow", steps)


def _partners() -> dict[str, str]:
    """Swap table pairing each tool with another tool of identical parameter names."""
    groups: dict[tuple[str, ...], list[str]] = {}
    for cat in CATEGORIES:
        for spec, _ in builtin_suite(cat):
            groups.setdefault(tuple(p.name for p in spec.params), []).append(spec.name)
    table = {}
    for names in groups.values():
        for i, n in enumerate(names):
            if len(names) > 1:
                table[n] = names[(i + 1) % len(names)]
    return table


def mutated(graph: wg.WorkflowGraph) -> wg.WorkflowGraph:
    """A plausible but wrong copy: the first swappable call uses a look-alike tool."""
    g = wg.from_document(wg.to_document(graph))
    table = _partners()
    for n in g.nodes:
        if n.kind is wg.NodeKind.FUNCTION_CALL and n.function in table:
            n.function = table[n.function]
            break
    return g


def variant_bits(instance_id: str) -> int:
    return int.from_bytes(hashlib.sha256(instance_id.encode()).digest()[:4], "big")


def single_stage_variant(inst: Instance, mode: str) -> str | None:
    bits = variant_bits(inst.id)
    if mode == "react" and bits % 3 == 0:
        return REACT_FORGET_GRAPH
    if mode == "plan_execute" and bits % 3 == 1:
        return PE_GRAPH_ONLY
    return None


def wrap_in_prose(reply: str) -> str:
    return f"I will now take the next step.\n{reply}\nThat is my action."


def single_stage(inst: Instance, mode: str, registry: ToolRegistry) -> dict[str, list[str]]:
    calls, answer = business_calls(inst, registry)
    golden = inst.golden_graph
    assert golden is not None
    variant = single_stage_variant(inst, mode)
    execs = exec_replies(calls, answer)
    if mode == "react":
        if variant == REACT_FORGET_GRAPH:
            return {"main": execs}
        return {"main": execs[:-1] + build_replies(golden)[:-1] + execs[-1:]}
    if mode == "plan_execute":
        if variant == PE_GRAPH_ONLY:
            bad = mutated(golden)
            replies = build_replies(bad)
            return {"main": [build_plan(bad)] + replies[:-1] + [action("Done", "finish", {"answer": answer})]}
        return {"main": [exec_plan(calls)] + execs[:-1] + build_replies(golden)[:-1] + execs[-1:]}
    if mode == "enhanced_react":
        return {"main": execs + build_replies(golden)}
    raise ValueError(f"unknown mode {mode!r}")


def es_transcripts(inst: Instance, exec_strategy: str, build_strategy: str, n_rollouts: int,
                   registry: ToolRegistry) -> dict[str, list[str]]:
    """Rollout and build transcripts. For half of the instances rollout 1 recovers from a
    tool error; for a third of them rollout 2 never produces parseable output."""
    calls, answer = business_calls(inst, registry)
    golden = inst.golden_graph
    assert golden is not None
    out: dict[str, list[str]] = {}
    for i in range(n_rollouts):
        replies = exec_replies(calls, answer)
        if i == 0 and replies:
            replies[0] = wrap_in_prose(replies[0])
        if i == 1 and calls and variant_bits(inst.id) % 2 == 0:
            name, args = calls[0]
            wrong = {f"{k}_value": v for k, v in args.items()}
            replies.insert(0, action(f"Call {name}", name, wrong))
        if i == 2 and variant_bits(inst.id) % 3 == 2:
            replies = ["I am not sure what to do."] * 6
        if exec_strategy == "plan_execute":
            replies.insert(0, exec_plan(calls))
        out[f"rollout{i}"] = replies
    build = build_replies(golden)
    if build_strategy == "plan_and_build":
        build.insert(0, build_plan(golden))
    out["build"] = build
    return out


__all__ = ["action", "plan", "business_calls", "build_actions", "build_replies", "mutated",
           "single_stage", "es_transcripts", "BUILTIN_NAMES"]
