"""Deterministic interpreter for workflow graphs."""

from __future__ import annotations

import json
from collections import Counter, deque
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

from . import expr as cexpr
from . import graph as wg
from .tools import ToolError, ToolRegistry
from .values import canonical_text, normalize

DEFAULT_MAX_VISITS = 1000


class ExecError(Exception):
    node: str | None = None


class InvalidGraph(ExecError):
    def __init__(self, report: wg.ValidationReport):
        codes = ", ".join(sorted(report.codes()))
        super().__init__(f"graph failed validation: {codes}")
        self.report = report


class UnboundKey(ExecError):
    def __init__(self, key: str, node: str):
        super().__init__(f"node {node!r} reads unbound key {key!r}")
        self.key, self.node = key, node


class NodeToolError(ExecError):
    def __init__(self, node: str, error: ToolError):
        super().__init__(f"node {node!r}: {error.tool} failed: {error.message}")
        self.node, self.error = node, error


class NodeExprError(ExecError):
    def __init__(self, node: str, error: cexpr.ExprError):
        super().__init__(f"node {node!r}: {error}")
        self.node, self.error = node, error


class AmbiguousSuccessor(ExecError):
    def __init__(self, node: str, count: int):
        super().__init__(f"node {node!r} has {count} candidate successors")
        self.node = node


class DeadEnd(ExecError):
    def __init__(self, node: str):
        super().__init__(f"node {node!r} has no successor to follow")
        self.node = node


class LoopCapExceeded(ExecError):
    def __init__(self, cap: int):
        super().__init__(f"exceeded {cap} node visits")
        self.cap = cap


class LlmNodeUnsupported(ExecError):
    def __init__(self, node: str):
        super().__init__(f"LLM node {node!r} cannot be executed")
        self.node = node


@dataclass(frozen=True)
class ExecLimits:
    max_visits: int = DEFAULT_MAX_VISITS


@dataclass
class RunLog:
    visited: list[str] = field(default_factory=list)
    calls: list[dict[str, Any]] = field(default_factory=list)
    conditions: list[dict[str, Any]] = field(default_factory=list)
    writes: list[str] = field(default_factory=list)

    @property
    def iterations(self) -> int:
        """Largest number of times any single node was visited."""
        return max(Counter(self.visited).values(), default=0)

    def to_dict(self) -> dict:
        return {"visited": self.visited, "calls": self.calls, "conditions": self.conditions,
                "writes": self.writes, "iterations": self.iterations}

    def dumps(self) -> str:
        recs = [{"type": "visit", "node": n} for n in self.visited]
        recs += [{"type": "call", **c} for c in self.calls]
        recs += [{"type": "condition", **c} for c in self.conditions]
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in recs)


@dataclass
class DataStore:
    values: dict[str, Any] = field(default_factory=dict)
    log: list[str] = field(default_factory=list)

    def read(self, key: str, node: str) -> Any:
        if key not in self.values:
            raise UnboundKey(key, node)
        return self.values[key]

    def write(self, key: str, value: Any) -> None:
        self.values[key] = value
        self.log.append(key)


def _successors(graph: wg.WorkflowGraph, node: wg.Node, label: str | None) -> list[str]:
    outs = [e.target for e in graph.out_edges(node.id) if e.label == label]
    if not outs:
        raise DeadEnd(node.id)
    if len(outs) > 1 and label is not None:
        raise AmbiguousSuccessor(node.id, len(outs))
    return outs


def _is_join(graph: wg.WorkflowGraph, node_id: str) -> bool:
    return graph.node(node_id).kind is wg.NodeKind.END or len(graph.in_edges(node_id)) > 1


def execute(graph: wg.WorkflowGraph, inputs: Mapping[str, Any], registry: ToolRegistry,
            limits: ExecLimits = ExecLimits(), check: bool = True) -> tuple[str, RunLog]:
    """Run ``graph`` on ``inputs``; returns the canonical answer text and the run log.

    With ``check=False`` the validation pass is skipped and structural problems
    surface as runtime errors instead (DeadEnd and friends).

    A non-condition node with several unlabelled out-edges fans out: the branches
    run one after another in edge-insertion order, and a node where branches meet
    (or End) waits until every pending branch has reached it.
    """
    if check:
        report = wg.validate(graph, registry.names)
        if not report.valid:
            raise InvalidGraph(report)
    start = graph.start
    if start is None:
        raise InvalidGraph(wg.validate(graph, registry.names))
    store = DataStore(dict(normalize(start.initial_data or {})))
    store.values.update(normalize(dict(inputs)))
    log = RunLog()
    current = start.id
    pending: deque[str] = deque()
    deferred: list[str] = []
    while True:
        if pending and _is_join(graph, current):
            if current not in deferred:
                deferred.append(current)
            current = pending.popleft()
            continue
        if current in deferred:
            deferred.remove(current)
        elif deferred and graph.node(current).kind is wg.NodeKind.END:
            deferred.append(current)
            current = deferred.pop(0)
            continue
        if len(log.visited) >= limits.max_visits:
            raise LoopCapExceeded(limits.max_visits)
        node = graph.node(current)
        log.visited.append(node.id)
        if node.kind is wg.NodeKind.END:
            key = node.result_key
            if key in (None, wg.LAST_WRITE):
                if not store.log:
                    raise UnboundKey(wg.LAST_WRITE, node.id)
                key = store.log[-1]
            return canonical_text(store.read(key, node.id)), log
        if node.kind is wg.NodeKind.LLM:
            raise LlmNodeUnsupported(node.id)
        if node.kind is wg.NodeKind.FUNCTION_CALL:
            args = {p: store.read(k, node.id) for p, k in (node.input_keys or {}).items()}
            try:
                result = registry.execute(node.function or "", args)
            except ToolError as exc:
                raise NodeToolError(node.id, exc) from exc
            store.write(node.output_key or "", result)
            log.writes.append(node.output_key or "")
            log.calls.append({"node": node.id, "tool": node.function, "args": args, "result": result})
            nxt = _successors(graph, node, None)
        elif node.kind is wg.NodeKind.CONDITION:
            try:
                outcome = cexpr.evaluate(node.condition_expr or "", store.values)
            except cexpr.ExprError as exc:
                raise NodeExprError(node.id, exc) from exc
            log.conditions.append({"node": node.id, "expr": node.condition_expr, "outcome": outcome})
            nxt = _successors(graph, node, "true" if outcome else "false")
        else:
            nxt = _successors(graph, node, None)
        current = nxt[0]
        pending.extend(nxt[1:])


def run_tests(graph: wg.WorkflowGraph, tests: Iterable[tuple[Mapping[str, Any], Any]],
              registry: ToolRegistry, limits: ExecLimits = ExecLimits()) -> list[tuple[str, str | None, RunLog | None]]:
    """Execute each test independently: (verdict, detail, log) with verdict pass/fail/error."""
    out = []
    for inputs, golden in tests:
        try:
            answer, log = execute(graph, inputs, registry, limits)
        except ExecError as exc:
            out.append(("error", str(exc), None))
            continue
        ok = answer == canonical_text(golden)
        out.append(("pass" if ok else "fail", None if ok else f"got {answer!r}, want {canonical_text(golden)!r}", log))
    return out
