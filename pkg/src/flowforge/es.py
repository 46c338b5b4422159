"""Execute-Summarize: solve with business tools, then rebuild a graph from the traces."""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass, field
from typing import Callable, Sequence

from . import graph as wg
from . import prompts
from .agent import SessionLimits, run_plan_execute, run_planned, run_react
from .llm import Backend, Usage
from .tools import Partition, ToolRegistry, session_registry
from .trace import Trace, args_text


class ExecStrategy(enum.Enum):
    REACT = "react"
    PLAN_EXECUTE = "plan_execute"


class BuildStrategy(enum.Enum):
    REACT = "react"
    PLAN_AND_BUILD = "plan_and_build"


class Selection(enum.Enum):
    ALL = "all"
    ALL_SUCCESS = "all_success"
    RANDOM_SUCCESS = "random_success"


class NoTracesToSummarize(ValueError):
    pass


@dataclass(frozen=True)
class ESConfig:
    exec_strategy: ExecStrategy = ExecStrategy.PLAN_EXECUTE
    build_strategy: BuildStrategy = BuildStrategy.REACT
    n_rollouts: int = 3
    selection: Selection = Selection.ALL_SUCCESS
    seed: int | None = None

    def __post_init__(self):
        if self.n_rollouts < 1:
            raise ValueError("n_rollouts must be >= 1")
        if self.selection is Selection.RANDOM_SUCCESS and self.seed is None:
            raise ValueError("random_success selection needs a seed")

    @property
    def label(self) -> str:
        e = "react" if self.exec_strategy is ExecStrategy.REACT else "pe"
        b = "react" if self.build_strategy is BuildStrategy.REACT else "pb"
        return f"es-{e}-{b}"


@dataclass
class ESResult:
    traces: list[Trace]
    selected: list[int]
    graph: wg.WorkflowGraph | None
    build_trace: Trace
    exec_usage: Usage = field(default_factory=Usage)
    summarize_usage: Usage = field(default_factory=Usage)

    @property
    def usage(self) -> Usage:
        return self.exec_usage + self.summarize_usage


BackendFactory = Callable[[str], Backend]


def run_execute_stage(task_id: str, query: str, business: ToolRegistry, backends: BackendFactory,
                      config: ESConfig, limits: SessionLimits = SessionLimits()) -> list[Trace]:
    """``n_rollouts`` independent sessions over business tools only.

    ``backends(label)`` supplies the backend for each session, labelled
    ``rollout0``, ``rollout1``, ...
    """
    if any(s.partition is Partition.GRAPH for s in business.specs()):
        raise ValueError("execute stage must not see graph-construction tools")
    registry = session_registry(business)
    traces = []
    for i in range(config.n_rollouts):
        backend = backends(f"rollout{i}")
        if config.exec_strategy is ExecStrategy.REACT:
            traces.append(run_react(task_id, query, registry, backend, limits, strategy="es-exec-react"))
        else:
            traces.append(run_plan_execute(task_id, query, registry, backend, limits, strategy="es-exec-pe"))
    return traces


def select_traces(traces: Sequence[Trace], selection: Selection, seed: int | None = None) -> list[int]:
    if selection is Selection.ALL:
        return list(range(len(traces)))
    wins = [i for i, t in enumerate(traces) if t.success]
    if selection is Selection.ALL_SUCCESS or not wins:
        return wins
    return [random.Random(seed).choice(wins)]


def _call_line(n: int, step, registry: ToolRegistry | None) -> str:
    order = None
    if registry is not None and step.action in registry:
        order = [p.name for p in registry.spec(step.action).params]
    return prompts.fill(prompts.TRACE_CALL_LINE, n=n, action=step.action,
                        args_str=args_text(step.args, order), observation=step.observation)


def format_trace_input(traces: Sequence[Trace], registry: ToolRegistry | None = None) -> str:
    """The summarize-stage user message for the selected traces."""
    if not traces:
        raise NoTracesToSummarize("no traces selected")
    sections = []
    for i, t in enumerate(traces, 1):
        calls = [s for s in t.steps if s.partition == Partition.BUSINESS.value and s.ok]
        lines = [_call_line(n, s, registry) for n, s in enumerate(calls, 1)]
        sections.append(prompts.fill(
            prompts.TRACE_SECTION, i=i, task_id=t.task_id, query=t.query,
            status="Success" if t.success else "Failed",
            final_answer=t.final_answer if t.final_answer is not None else "None",
            calls="\n".join(lines) if lines else "None"))
    return "\n\n".join([prompts.TRACE_INPUT_HEADER] + sections + [prompts.TRACE_INPUT_FOOTER])


def run_summarize_stage(trace_text: str, backend: Backend, build: BuildStrategy,
                        limits: SessionLimits = SessionLimits(),
                        task_id: str = "") -> tuple[wg.WorkflowGraph | None, Trace]:
    """Build a graph from trace text with graph tools and ``finish`` only."""
    graph = wg.WorkflowGraph()
    registry = session_registry(None, graph)
    tools_prompt = registry.render_signatures()
    if build is BuildStrategy.REACT:
        system = prompts.fill(prompts.GRAPH_SYSTEM, tools_prompt=tools_prompt)
        trace = run_react(task_id, trace_text, registry, backend, limits, graph=graph,
                          strategy="es-build-react", system=system)
    else:
        trace = run_planned(task_id, trace_text, registry, backend, limits,
                            plan_system=prompts.fill(prompts.GRAPH_PLAN_SYSTEM, tools_prompt=tools_prompt),
                            exec_system=prompts.fill(prompts.GRAPH_EXECUTE_SYSTEM, tools_prompt=tools_prompt),
                            strategy="es-build-pb", continue_template=prompts.GRAPH_PLAN_CONTINUE,
                            graph=graph)
    # the no-business flag is meaningless for a build session
    trace.flags = [f for f in trace.flags if f != "no_business_call"]
    return (graph if trace.success else None), trace


def run_es(task_id: str, query: str, business: ToolRegistry, backends: BackendFactory,
           config: ESConfig, limits: SessionLimits = SessionLimits()) -> ESResult:
    traces = run_execute_stage(task_id, query, business, backends, config, limits)
    selected = select_traces(traces, config.selection, config.seed)
    exec_usage = sum((t.usage for t in traces), Usage())
    if not selected:
        build = Trace(task_id, "es-build", "")
        build.fail("NoTracesToSummarize")
        return ESResult(traces, [], None, build, exec_usage, Usage())
    text = format_trace_input([traces[i] for i in selected], session_registry(business))
    graph, build = run_summarize_stage(text, backends("build"), config.build_strategy, limits, task_id)
    return ESResult(traces, selected, graph, build, exec_usage, build.usage)
