"""Workflow graph data model, builder operations, validation and rendering."""

from __future__ import annotations

import enum
import json
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Iterable

from . import expr as cexpr
from .values import canonical_text, normalize

START_ID = "__start__"
END_ID = "__end__"
LAST_WRITE = "__last_write__"


class GraphError(Exception):
    pass


class DuplicateStart(GraphError):
    pass


class DuplicateEnd(GraphError):
    pass


class DuplicateId(GraphError):
    pass


class UnknownNode(GraphError):
    pass


class DuplicateEdge(GraphError):
    pass


class SchemaError(GraphError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class NodeKind(enum.Enum):
    START = "start"
    END = "end"
    FUNCTION_CALL = "function_call"
    CONDITION = "condition"
    LLM = "llm"

    @property
    def display(self) -> str:
        return "BUSINESS" if self is NodeKind.FUNCTION_CALL else self.name


@dataclass
class Node:
    id: str
    kind: NodeKind
    function: str | None = None
    input_keys: dict[str, str] | None = None
    output_key: str | None = None
    condition_expr: str | None = None
    initial_data: dict[str, Any] | None = None
    result_key: str | None = None

    def to_dict(self) -> dict[str, Any]:
        doc: dict[str, Any] = {"id": self.id, "kind": self.kind.value}
        for name in ("function", "input_keys", "output_key", "condition_expr",
                     "initial_data", "result_key"):
            value = getattr(self, name)
            if value is not None:
                doc[name] = value
        return doc


@dataclass(frozen=True)
class Edge:
    source: str
    target: str
    label: str | None = None

    def to_dict(self) -> dict[str, Any]:
        doc = {"from": self.source, "to": self.target}
        if self.label is not None:
            doc["label"] = self.label
        return doc

    def __str__(self) -> str:
        tail = f" [{self.label}]" if self.label is not None else ""
        return f"{self.source} -> {self.target}{tail}"


@dataclass
class WorkflowGraph:
    """W = (N, E). Grows only through the ``add_*`` builder methods."""

    nodes: list[Node] = field(default_factory=list)
    edges: list[Edge] = field(default_factory=list)

    # -- lookup -----------------------------------------------------------
    def node(self, node_id: str) -> Node:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise UnknownNode(node_id)

    def has_node(self, node_id: str) -> bool:
        return any(n.id == node_id for n in self.nodes)

    @property
    def start(self) -> Node | None:
        return next((n for n in self.nodes if n.kind is NodeKind.START), None)

    @property
    def end(self) -> Node | None:
        return next((n for n in self.nodes if n.kind is NodeKind.END), None)

    def out_edges(self, node_id: str) -> list[Edge]:
        return [e for e in self.edges if e.source == node_id]

    def in_edges(self, node_id: str) -> list[Edge]:
        return [e for e in self.edges if e.target == node_id]

    def is_empty(self) -> bool:
        return not self.nodes

    # -- builder ----------------------------------------------------------
    def _insert(self, node: Node) -> str:
        if self.has_node(node.id):
            raise DuplicateId(f"node id {node.id!r} already exists")
        self.nodes.append(node)
        return node.id

    def add_start_node(self, initial_data: dict[str, Any] | None = None) -> str:
        if self.start is not None:
            raise DuplicateStart("graph already has a start node")
        data = normalize(dict(initial_data or {}))
        return self._insert(Node(START_ID, NodeKind.START, initial_data=data))

    def add_function_node(self, node_id: str, function: str,
                          input_keys: dict[str, str], output_key: str) -> str:
        return self._insert(Node(node_id, NodeKind.FUNCTION_CALL, function=function,
                                 input_keys=dict(input_keys), output_key=output_key))

    def add_condition_node(self, node_id: str, condition_expr: str) -> str:
        return self._insert(Node(node_id, NodeKind.CONDITION, condition_expr=condition_expr))

    def add_llm_node(self, node_id: str) -> str:
        return self._insert(Node(node_id, NodeKind.LLM))

    def add_end_node(self, result_key: str | None = None) -> str:
        if self.end is not None:
            raise DuplicateEnd("graph already has an end node")
        return self._insert(Node(END_ID, NodeKind.END, result_key=result_key or LAST_WRITE))

    def add_edge(self, source: str, target: str, label: str | None = None) -> Edge:
        for endpoint in (source, target):
            if not self.has_node(endpoint):
                raise UnknownNode(f"unknown node {endpoint!r}")
        edge = Edge(source, target, label)
        if edge in self.edges:
            raise DuplicateEdge(f"edge {edge} already exists")
        self.edges.append(edge)
        return edge


# --- validation ------------------------------------------------------------

VIOLATION_CODES = (
    "MissingStart", "MissingEnd", "DisconnectedNode", "DeadEndNode",
    "UnboundInput", "DuplicateId", "BadBranchLabels", "UnknownTool",
)


@dataclass(frozen=True)
class Violation:
    code: str
    ref: str
    message: str


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...]

    @property
    def valid(self) -> bool:
        return not self.violations

    def codes(self) -> set[str]:
        return {v.code for v in self.violations}


def reachable_from(graph: WorkflowGraph, root: str) -> set[str]:
    seen = {root}
    queue = deque([root])
    while queue:
        cur = queue.popleft()
        for e in graph.out_edges(cur):
            if e.target not in seen:
                seen.add(e.target)
                queue.append(e.target)
    return seen


def validate(graph: WorkflowGraph, known_tools: Iterable[str] | None = None) -> ValidationReport:
    """Collect every structural violation; never mutates ``graph``.

    ``known_tools=None`` skips the tool-registration check.
    """
    out: list[Violation] = []
    ids = [n.id for n in graph.nodes]
    seen: set[str] = set()
    for node_id in ids:
        if node_id in seen:
            out.append(Violation("DuplicateId", node_id, f"node id {node_id!r} is used more than once"))
        seen.add(node_id)

    starts = [n for n in graph.nodes if n.kind is NodeKind.START]
    ends = [n for n in graph.nodes if n.kind is NodeKind.END]
    if not starts:
        out.append(Violation("MissingStart", "", "graph has no start node"))
    elif len(starts) > 1:
        out.append(Violation("DuplicateId", starts[1].id, "graph has more than one start node"))
    if not ends:
        out.append(Violation("MissingEnd", "", "graph has no end node"))
    elif len(ends) > 1:
        out.append(Violation("DuplicateId", ends[1].id, "graph has more than one end node"))

    for e in graph.edges:
        for endpoint in (e.source, e.target):
            if endpoint not in seen:
                out.append(Violation("DisconnectedNode", str(e), f"edge endpoint {endpoint!r} does not exist"))

    if starts:
        reach = reachable_from(graph, starts[0].id)
        for node_id in ids:
            if node_id not in reach:
                out.append(Violation("DisconnectedNode", node_id,
                                     f"node {node_id!r} is not reachable from the start node"))

    for node in graph.nodes:
        outs = graph.out_edges(node.id)
        if node.kind is not NodeKind.END and not outs:
            out.append(Violation("DeadEndNode", node.id, f"node {node.id!r} has no outgoing edge"))
        labels = [e.label for e in outs]
        if node.kind is NodeKind.CONDITION:
            if sorted(labels, key=str) != ["false", "true"]:
                out.append(Violation("BadBranchLabels", node.id,
                                     f"condition {node.id!r} needs exactly one 'true' and one 'false' edge"))
        elif any(label is not None for label in labels):
            out.append(Violation("BadBranchLabels", node.id,
                                 f"labeled edge leaves non-condition node {node.id!r}"))

    produced = set((starts[0].initial_data or {}) if starts else {})
    produced |= {n.output_key for n in graph.nodes if n.kind is NodeKind.FUNCTION_CALL and n.output_key}
    tools = set(known_tools) if known_tools is not None else None
    for node in graph.nodes:
        if node.kind is NodeKind.FUNCTION_CALL:
            for param, key in (node.input_keys or {}).items():
                if key not in produced:
                    out.append(Violation("UnboundInput", node.id,
                                         f"input {param}={key!r} is never produced"))
            if tools is not None and node.function not in tools:
                out.append(Violation("UnknownTool", node.id, f"function {node.function!r} is not registered"))
        elif node.kind is NodeKind.CONDITION:
            try:
                names = cexpr.identifiers(cexpr.parse(node.condition_expr or ""))
            except cexpr.ExprSyntaxError as exc:
                out.append(Violation("UnboundInput", node.id, f"condition does not parse: {exc}"))
                continue
            for name in names:
                if name not in produced:
                    out.append(Violation("UnboundInput", node.id, f"condition reads {name!r}, never produced"))
        elif node.kind is NodeKind.END and node.result_key not in (None, LAST_WRITE):
            if node.result_key not in produced:
                out.append(Violation("UnboundInput", node.id, f"result key {node.result_key!r} is never produced"))
    return ValidationReport(tuple(out))


# --- rendering ---------------------------------------------------------------

def _node_line(node: Node) -> str:
    head = f"{node.id} ({node.kind.display})"
    if node.kind is NodeKind.FUNCTION_CALL:
        args = ", ".join(f"{p}={k}" for p, k in (node.input_keys or {}).items())
        return f"{head}: {node.function}({args}) -> {node.output_key}"
    if node.kind is NodeKind.CONDITION:
        return f"{head}: {node.condition_expr}"
    if node.kind is NodeKind.END and node.result_key not in (None, LAST_WRITE):
        return f"{head}: {node.result_key}"
    return head


def missing_elements(graph: WorkflowGraph) -> list[str]:
    items = []
    if graph.start is None:
        items.append("Start node (call add_start_node)")
    if graph.end is None:
        items.append("End node (call add_end_node)")
    for node in graph.nodes:
        outs, ins = graph.out_edges(node.id), graph.in_edges(node.id)
        if not outs and not ins:
            items.append(f"{node.id} has no edges (Every node must have edges)")
        elif not outs and node.kind is not NodeKind.END:
            items.append(f"{node.id} has no outgoing edge")
        elif not ins and node.kind is not NodeKind.START:
            items.append(f"{node.id} has no incoming edge")
        if node.kind is NodeKind.CONDITION and outs:
            labels = {e.label for e in outs}
            for want in ("true", "false"):
                if want not in labels:
                    items.append(f"{node.id} is missing its '{want}' branch")
    return items


def render_graph_state(graph: WorkflowGraph) -> str:
    lines = [f"Nodes ({len(graph.nodes)}):"]
    lines += [f"  - {_node_line(n)}" for n in graph.nodes]
    lines += ["", f"Edges ({len(graph.edges)}):"]
    lines += [f"  - {e}" for e in graph.edges]
    return "\n".join(lines)


def render_missing(graph: WorkflowGraph) -> str:
    items = missing_elements(graph)
    if not items:
        return "Missing Elements: None"
    return "\n".join(["Missing Elements:"] + [f"  - {item}" for item in items])


def render_state(graph: WorkflowGraph) -> str:
    """Observation-state text: node list, edge list, then missing elements."""
    return render_graph_state(graph) + "\n\n" + render_missing(graph)


# --- serialization -----------------------------------------------------------

_KIND_FIELDS = {
    NodeKind.START: {"initial_data"},
    NodeKind.END: {"result_key"},
    NodeKind.FUNCTION_CALL: {"function", "input_keys", "output_key"},
    NodeKind.CONDITION: {"condition_expr"},
    NodeKind.LLM: set(),
}
_ALL_FIELDS = {"function", "input_keys", "output_key", "condition_expr", "initial_data", "result_key"}


def to_document(graph: WorkflowGraph) -> dict[str, Any]:
    return {"nodes": [n.to_dict() for n in graph.nodes],
            "edges": [e.to_dict() for e in graph.edges]}


def serialize(graph: WorkflowGraph) -> str:
    return json.dumps(to_document(graph), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def _require(doc: dict, key: str, path: str, kind: type | tuple) -> Any:
    if key not in doc:
        raise SchemaError(f"{path}.{key}", "missing field")
    value = doc[key]
    if not isinstance(value, kind) or isinstance(value, bool) and kind is not bool:
        raise SchemaError(f"{path}.{key}", f"expected {getattr(kind, '__name__', kind)}")
    return value


def from_document(doc: Any) -> WorkflowGraph:
    if not isinstance(doc, dict):
        raise SchemaError("$", "expected an object")
    nodes_doc = _require(doc, "nodes", "$", list)
    edges_doc = _require(doc, "edges", "$", list)
    graph = WorkflowGraph()
    kinds = {k.value: k for k in NodeKind}
    for i, nd in enumerate(nodes_doc):
        path = f"$.nodes[{i}]"
        if not isinstance(nd, dict):
            raise SchemaError(path, "expected an object")
        node_id = _require(nd, "id", path, str)
        kind_text = _require(nd, "kind", path, str)
        if kind_text not in kinds:
            raise SchemaError(f"{path}.kind", f"unknown kind {kind_text!r}")
        kind = kinds[kind_text]
        extra = set(nd) - {"id", "kind"} - _ALL_FIELDS
        if extra:
            raise SchemaError(f"{path}.{sorted(extra)[0]}", "unknown field")
        wrong = (set(nd) & _ALL_FIELDS) - _KIND_FIELDS[kind]
        if wrong:
            raise SchemaError(f"{path}.{sorted(wrong)[0]}", f"field not allowed on {kind_text} node")
        node = Node(node_id, kind)
        if kind is NodeKind.FUNCTION_CALL:
            node.function = _require(nd, "function", path, str)
            keys = _require(nd, "input_keys", path, dict)
            for p, k in keys.items():
                if not isinstance(k, str):
                    raise SchemaError(f"{path}.input_keys.{p}", "expected str")
            node.input_keys = dict(keys)
            node.output_key = _require(nd, "output_key", path, str)
        elif kind is NodeKind.CONDITION:
            node.condition_expr = _require(nd, "condition_expr", path, str)
        elif kind is NodeKind.START:
            node.initial_data = normalize(dict(nd.get("initial_data") or {}))
        elif kind is NodeKind.END:
            rk = nd.get("result_key", LAST_WRITE)
            if not isinstance(rk, str):
                raise SchemaError(f"{path}.result_key", "expected str")
            node.result_key = rk
        graph.nodes.append(node)
    for i, ed in enumerate(edges_doc):
        path = f"$.edges[{i}]"
        if not isinstance(ed, dict):
            raise SchemaError(path, "expected an object")
        src = _require(ed, "from", path, str)
        dst = _require(ed, "to", path, str)
        label = ed.get("label")
        if label is not None and not isinstance(label, str):
            raise SchemaError(f"{path}.label", "expected str")
        graph.edges.append(Edge(src, dst, label))
    return graph


def deserialize(text: str) -> WorkflowGraph:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError("$", f"not JSON: {exc}") from exc
    return from_document(doc)


def describe(graph: WorkflowGraph) -> str:
    """Short human summary, e.g. for finish answers."""
    fns = [n.function for n in graph.nodes if n.kind is NodeKind.FUNCTION_CALL]
    return f"{len(graph.nodes)} nodes, {len(graph.edges)} edges: " + canonical_text(fns)
