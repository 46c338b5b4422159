"""Single-stage agent strategies: ReAct, Plan-and-Execute and Enhanced ReAct.

The same session machinery also drives the graph-building stage of the
two-stage pipeline (see :mod:`flowforge.es`), with a different system prompt
and tool set.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from . import graph as wg
from . import prompts
from .codec import FormatExhausted, decode_with_recovery, parse_plan
from .llm import Backend, Conversation, LlmError, TranscriptExhausted
from .tools import Partition, ToolError, ToolRegistry, UnknownTool, session_registry
from .trace import Trace, TraceStep, args_text
from .values import canonical_text


@dataclass(frozen=True)
class SessionLimits:
    max_steps: int = 30
    max_tool_retries: int = 3
    max_format_retries: int = 5

    def __post_init__(self):
        if min(self.max_steps, self.max_tool_retries, self.max_format_retries) < 1:
            raise ValueError("session limits must all be >= 1")


class SessionEnd(Exception):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


def tool_error_message(exc: ToolError, retry_count: int, max_retries: int, order: list[str] | None) -> str:
    info = exc.signature_info
    if isinstance(exc, UnknownTool):
        info = f"**Error detail**: {exc.message}"
    return prompts.fill(prompts.TOOL_ERROR, function_name=exc.tool,
                        args_str=args_text(exc.call_args, order), error=exc.message,
                        signature_info=info, retry_count=retry_count, max_retries=max_retries)


class Session:
    """Decode-act-observe machinery shared by every strategy."""

    def __init__(self, conv: Conversation, registry: ToolRegistry, limits: SessionLimits,
                 trace: Trace, graph: wg.WorkflowGraph | None = None, phase: str = "main"):
        self.conv = conv
        self.registry = registry
        self.limits = limits
        self.trace = trace
        self.graph = graph
        self.phase = phase

    def _order(self, name: str) -> list[str] | None:
        if name in self.registry:
            return [p.name for p in self.registry.spec(name).params]
        return None

    def _record(self, **kw) -> TraceStep:
        step = TraceStep(index=len(self.trace.steps), phase=self.phase, **kw)
        self.trace.steps.append(step)
        return step

    def act(self) -> TraceStep:
        """One logical step: a decoded action plus any recovery retries."""
        lim = self.limits
        before = self.conv.usage
        fmt = tool_retries = 0
        errors: list[dict] = []
        action = None

        def delta():
            now = self.conv.usage
            return type(now)(now.prompt_tokens - before.prompt_tokens, now.output_tokens - before.output_tokens)

        try:
            raw, _ = self.conv.ask()
            dec = decode_with_recovery(self.conv, raw, max_retries=lim.max_format_retries - fmt)
            fmt += dec.retries
            while True:
                action = dec.value
                try:
                    result = self.registry.execute(action.action, action.action_input)
                    break
                except ToolError as exc:
                    errors.append({"action": action.action, "args": action.action_input, "error": exc.message})
                    tool_retries += 1
                    if tool_retries > lim.max_tool_retries:
                        self._record(reasoning=action.reasoning, action=action.action, args=action.action_input,
                                     observation=f"Error: {exc.message}",
                                     partition=self._tag(action.action), usage=delta(),
                                     format_retries=fmt, tool_retries=tool_retries - 1, ok=False, errors=errors)
                        raise SessionEnd("ToolRetriesExhausted")
                    self.conv.add_user(tool_error_message(exc, tool_retries, lim.max_tool_retries,
                                                          self._order(action.action)))
                    raw, _ = self.conv.ask()
                    dec = decode_with_recovery(self.conv, raw, max_retries=lim.max_format_retries - fmt)
                    fmt += dec.retries
        except FormatExhausted as exc:
            fmt += exc.retries
            self._record(reasoning="", action="", args={}, observation=f"Error: {exc}", partition=None,
                         usage=delta(), format_retries=fmt, tool_retries=tool_retries, ok=False, errors=errors)
            raise SessionEnd("FormatExhausted") from exc
        except LlmError as exc:
            reason = "TranscriptExhausted" if isinstance(exc, TranscriptExhausted) else "TransportError"
            used = delta()
            if used.prompt_tokens or used.output_tokens:
                self._record(reasoning=action.reasoning if action else "", action=action.action if action else "",
                             args=action.action_input if action else {}, observation=f"Error: {exc}",
                             partition=None, usage=used, format_retries=fmt, tool_retries=tool_retries,
                             ok=False, errors=errors)
            raise SessionEnd(reason) from exc
        return self._record(reasoning=action.reasoning, action=action.action, args=action.action_input,
                            observation=canonical_text(result), partition=self._tag(action.action),
                            usage=delta(), format_retries=fmt, tool_retries=tool_retries, errors=errors)

    def _tag(self, name: str) -> str | None:
        part = self.registry.partition_of(name)
        return part.value if part else None

    def observation(self, step: TraceStep) -> str:
        if step.partition == Partition.GRAPH.value and self.graph is not None:
            return prompts.fill(prompts.GRAPH_OBSERVATION, result_str=step.observation,
                                graph_state=wg.render_graph_state(self.graph),
                                missing_info=wg.render_missing(self.graph))
        return prompts.fill(prompts.BUSINESS_OBSERVATION, result=step.observation)

    def loop(self, after: Callable[[TraceStep], None] | None = None) -> TraceStep:
        """Run until ``finish``; raises SessionEnd on any limit."""
        for _ in range(self.limits.max_steps):
            step = self.act()
            if step.partition == Partition.TERMINAL.value:
                return step
            self.conv.add_user(self.observation(step))
            if after:
                after(step)
        raise SessionEnd("StepLimit")


def _finish(trace: Trace, step: TraceStep) -> None:
    trace.succeed(step.args.get("answer", ""))
    if not trace.business_steps() and "no_business_call" not in trace.flags:
        trace.flags.append("no_business_call")


def react_system(registry: ToolRegistry) -> str:
    return prompts.fill(prompts.REACT_SYSTEM, functions_text=registry.render_signatures())


def run_react(task_id: str, query: str, registry: ToolRegistry, backend: Backend,
              limits: SessionLimits = SessionLimits(), *, graph: wg.WorkflowGraph | None = None,
              strategy: str = "react", system: str | None = None,
              _keep: list | None = None) -> Trace:
    """Reason-act loop until ``finish`` or a limit."""
    if "finish" not in registry:
        raise ValueError("tool set must include finish")
    conv = Conversation(backend, system or react_system(registry))
    conv.add_user(query)
    trace = Trace(task_id, strategy, query)
    session = Session(conv, registry, limits, trace, graph)
    try:
        _finish(trace, session.loop())
    except SessionEnd as end:
        trace.fail(end.reason)
    if _keep is not None:
        _keep.append(session)
    return trace


def step_context(lines: list[str]) -> str:
    return "\n".join(lines) if lines else "None"


def run_planned(task_id: str, query: str, registry: ToolRegistry, backend: Backend,
                limits: SessionLimits, *, plan_system: str, exec_system: str, strategy: str,
                continue_template: str = prompts.PLAN_CONTINUE,
                graph: wg.WorkflowGraph | None = None) -> Trace:
    """Plan first, then execute the plan one instruction per action in one conversation."""
    if "finish" not in registry:
        raise ValueError("tool set must include finish")
    trace = Trace(task_id, strategy, query)
    pconv = Conversation(backend, plan_system)
    pconv.add_user(query)
    try:
        raw, _ = pconv.ask()
        plan = decode_with_recovery(pconv, raw, parse_plan, prompts.PLAN_FORMAT_RECOVERY,
                                    limits.max_format_retries).value
    except FormatExhausted:
        trace.plan_usage = pconv.usage
        trace.fail("FormatExhausted")
        return trace
    except LlmError as exc:
        trace.plan_usage = pconv.usage
        trace.fail("TranscriptExhausted" if isinstance(exc, TranscriptExhausted) else "TransportError")
        return trace
    trace.plan, trace.plan_usage = plan, pconv.usage

    conv = Conversation(backend, exec_system)
    conv.add_user(prompts.fill(prompts.PLAN_CONTEXT, task=query, analysis=plan.analysis,
                               steps="\n".join(plan.steps)))
    done: list[str] = []

    def instruct() -> None:
        k = len(done)
        if k < len(plan.steps):
            conv.add_user(prompts.fill(prompts.STEP_INSTRUCTION, step_number=k + 1,
                                       step_description=plan.steps[k],
                                       accumulated_step_context=step_context(done)))
        else:
            conv.add_user(prompts.fill(continue_template, accumulated_step_context=step_context(done)))

    def after(step: TraceStep) -> None:
        order = [p.name for p in registry.spec(step.action).params]
        done.append(f"Step {len(done) + 1}: {step.action}({args_text(step.args, order)}) -> {step.observation}")
        instruct()

    instruct()
    session = Session(conv, registry, limits, trace, graph)
    try:
        _finish(trace, session.loop(after))
    except SessionEnd as end:
        trace.fail(end.reason)
    return trace


def plan_systems(registry: ToolRegistry) -> tuple[str, str]:
    text = registry.render_signatures()
    return (prompts.fill(prompts.PLAN_SYSTEM, functions_text=text),
            prompts.fill(prompts.EXECUTE_SYSTEM, functions_text=text))


def run_plan_execute(task_id: str, query: str, registry: ToolRegistry, backend: Backend,
                     limits: SessionLimits = SessionLimits(), *, graph: wg.WorkflowGraph | None = None,
                     strategy: str = "plan_execute") -> Trace:
    plan_sys, exec_sys = plan_systems(registry)
    return run_planned(task_id, query, registry, backend, limits, plan_system=plan_sys,
                       exec_system=exec_sys, strategy=strategy, graph=graph)


def mixed_query(query: str) -> str:
    return query + prompts.MIXED_TASK_SUFFIX


def run_mixed(mode: str, task_id: str, query: str, business: ToolRegistry, backend: Backend,
              limits: SessionLimits = SessionLimits()) -> tuple[Trace, wg.WorkflowGraph | None]:
    """Single-stage run where business and graph tools are exposed together."""
    if mode == "enhanced_react":
        return run_enhanced_react(task_id, query, business, backend, limits)
    graph = wg.WorkflowGraph()
    registry = session_registry(business, graph)
    if mode == "react":
        trace = run_react(task_id, mixed_query(query), registry, backend, limits, graph=graph)
    elif mode == "plan_execute":
        trace = run_plan_execute(task_id, mixed_query(query), registry, backend, limits, graph=graph)
    else:
        raise ValueError(f"unknown single-stage mode {mode!r}")
    return trace, (None if graph.is_empty() else graph)


def run_enhanced_react(task_id: str, query: str, business: ToolRegistry, backend: Backend,
                       limits: SessionLimits = SessionLimits()) -> tuple[Trace, wg.WorkflowGraph | None]:
    """ReAct over B and G tools, with a graph-only follow-up when no graph was built."""
    graph = wg.WorkflowGraph()
    registry = session_registry(business, graph)
    kept: list[Session] = []
    trace = run_react(task_id, mixed_query(query), registry, backend, limits, graph=graph,
                      strategy="enhanced_react", _keep=kept)
    built = Partition.GRAPH.value in trace.partitions()
    if not trace.success or built:
        return trace, (None if graph.is_empty() else graph)
    session = kept[0]
    session.conv.add_user(prompts.POST_HOC_GRAPH)
    post = Session(session.conv, registry.view([Partition.GRAPH, Partition.TERMINAL]), limits,
                   trace, graph, phase="post_hoc")
    try:
        post.loop()
    except SessionEnd as end:
        trace.flags.append(f"post_hoc_failed:{end.reason}")
        return trace, None
    return trace, (None if graph.is_empty() else graph)
