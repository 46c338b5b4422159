"""White-box comparison of workflow graphs: canonical form, congruence,
FSM equivalence, bounded path sets, and trace fidelity."""

from __future__ import annotations

import hashlib
from collections import Counter, deque
from dataclasses import dataclass
from typing import Iterable, Sequence

from . import expr as cexpr
from . import graph as wg
from .trace import Trace

END_LABEL = "$end"


class InvalidGraph(ValueError):
    pass


class DepthExhausted(ValueError):
    pass


def _require_valid(graph: wg.WorkflowGraph) -> None:
    report = wg.validate(graph)
    if not report.valid:
        raise InvalidGraph(", ".join(sorted(report.codes())))


def _expr_text(source: str) -> str:
    try:
        return cexpr.to_source(cexpr.parse(source))
    except cexpr.ExprSyntaxError:
        return source


def signature(node: wg.Node) -> str:
    """Identity-free description of a node."""
    k = node.kind
    if k is wg.NodeKind.START:
        return "start{" + ",".join(sorted(node.initial_data or {})) + "}"
    if k is wg.NodeKind.END:
        return f"end({node.result_key})"
    if k is wg.NodeKind.FUNCTION_CALL:
        args = ",".join(f"{p}={v}" for p, v in sorted((node.input_keys or {}).items()))
        return f"call:{node.function}({args})->{node.output_key}"
    if k is wg.NodeKind.CONDITION:
        return f"cond:{_expr_text(node.condition_expr or '')}"
    return "llm"


@dataclass(frozen=True)
class CanonicalGraph:
    nodes: tuple[tuple[str, str], ...]  # (canonical id, signature), sorted by id
    edges: tuple[tuple[str, str, str], ...]  # (from, to, label or ""), sorted
    source: wg.WorkflowGraph

    def to_graph(self) -> wg.WorkflowGraph:
        """Rebuild a graph carrying the canonical ids and printed expressions."""
        old_of = self._old_ids()
        g = wg.WorkflowGraph()
        for cid, _sig in self.nodes:
            old = self.source.node(old_of[cid])
            node = wg.Node(cid, old.kind, old.function,
                           dict(old.input_keys) if old.input_keys is not None else None,
                           old.output_key,
                           _expr_text(old.condition_expr) if old.condition_expr is not None else None,
                           dict(old.initial_data) if old.initial_data is not None else None,
                           old.result_key)
            g.nodes.append(node)
        for src, dst, label in self.edges:
            g.edges.append(wg.Edge(src, dst, label or None))
        return g

    def _old_ids(self) -> dict[str, str]:
        return {cid: old for old, cid in canonical_ids(self.source).items()}


def refined_signatures(graph: wg.WorkflowGraph) -> dict[str, str]:
    """Signatures refined by successor structure, so ties mean look-alike subgraphs."""
    sigs = {n.id: signature(n) for n in graph.nodes}
    for _ in range(len(graph.nodes)):
        nxt = {}
        for n in graph.nodes:
            succ = sorted((e.label or "", sigs[e.target]) for e in graph.out_edges(n.id))
            blob = repr((signature(n), succ)).encode()
            nxt[n.id] = signature(n) + "#" + hashlib.sha256(blob).hexdigest()[:16]
        sigs = nxt
    return sigs


def canonical_ids(graph: wg.WorkflowGraph) -> dict[str, str]:
    """Map original id -> canonical id by breadth-first order from Start."""
    start = graph.start
    assert start is not None
    sigs = refined_signatures(graph)
    mapping: dict[str, str] = {}
    counter = 0

    def assign(node_id: str) -> None:
        nonlocal counter
        kind = graph.node(node_id).kind
        if kind is wg.NodeKind.START:
            mapping[node_id] = wg.START_ID
        elif kind is wg.NodeKind.END:
            mapping[node_id] = wg.END_ID
        else:
            counter += 1
            mapping[node_id] = f"n{counter:03d}"

    assign(start.id)
    queue = deque([start.id])
    while queue:
        cur = queue.popleft()
        outs = graph.out_edges(cur)
        ranked = sorted(range(len(outs)), key=lambda i: (outs[i].label or "", sigs[outs[i].target], i))
        for i in ranked:
            nxt = outs[i].target
            if nxt not in mapping:
                assign(nxt)
                queue.append(nxt)
    return mapping


def canonicalize(graph: wg.WorkflowGraph) -> CanonicalGraph:
    _require_valid(graph)
    ids = canonical_ids(graph)
    nodes = tuple(sorted((ids[n.id], signature(n)) for n in graph.nodes))
    edges = tuple(sorted((ids[e.source], ids[e.target], e.label or "") for e in graph.edges))
    return CanonicalGraph(nodes, edges, graph)


# --- congruence ------------------------------------------------------------------

def multiset_jaccard(a: Iterable, b: Iterable) -> float:
    ca, cb = Counter(a), Counter(b)
    union = sum((ca | cb).values())
    if union == 0:
        return 1.0
    return sum((ca & cb).values()) / union


@dataclass(frozen=True)
class CongruenceScore:
    node_overlap: float
    edge_overlap: float
    branch_topology_match: float

    @property
    def aggregate(self) -> float:
        return (self.node_overlap + self.edge_overlap + self.branch_topology_match) / 3


def _parts(graph: wg.WorkflowGraph):
    sigs = {n.id: signature(n) for n in graph.nodes}
    nodes = list(sigs.values())
    edges = [(sigs[e.source], sigs[e.target], e.label or "") for e in graph.edges]
    branches = []
    for n in graph.nodes:
        if n.kind is wg.NodeKind.CONDITION:
            outs = graph.out_edges(n.id)
            branches.append((len(outs), tuple(sorted(e.label or "" for e in outs))))
    return nodes, edges, branches


def structural_congruence(g1: wg.WorkflowGraph, g2: wg.WorkflowGraph) -> CongruenceScore:
    _require_valid(g1)
    _require_valid(g2)
    n1, e1, b1 = _parts(g1)
    n2, e2, b2 = _parts(g2)
    return CongruenceScore(multiset_jaccard(n1, n2), multiset_jaccard(e1, e2), multiset_jaccard(b1, b2))


# --- FSM view ----------------------------------------------------------------------

class Fsm:
    """Deterministic labelled transition system derived from a graph."""

    def __init__(self, graph: wg.WorkflowGraph):
        _require_valid(graph)
        self.initial = graph.start.id  # type: ignore[union-attr]
        self.moves: dict[str, dict[str, str | None]] = {}
        for n in graph.nodes:
            outs = graph.out_edges(n.id)
            if n.kind is wg.NodeKind.END:
                self.moves[n.id] = {END_LABEL: None}
            elif n.kind is wg.NodeKind.CONDITION:
                text = _expr_text(n.condition_expr or "")
                self.moves[n.id] = {f"{text}?{e.label}": e.target for e in outs}
            else:
                label = {wg.NodeKind.START: "start", wg.NodeKind.LLM: "llm"}.get(
                    n.kind, f"call:{n.function}")
                # a valid non-condition node has exactly one successor; keep the first otherwise
                self.moves[n.id] = {label: outs[0].target}

    def accepts(self, word: Sequence[str]) -> bool:
        """Whether ``word`` is a path of labels from the initial state."""
        state: str | None = self.initial
        for label in word:
            if state is None or label not in self.moves[state]:
                return False
            state = self.moves[state][label]
        return True


@dataclass(frozen=True)
class Equivalence:
    verdict: str  # "Equivalent" | "Different" | "Undecided"
    witness: tuple[str, ...] = ()

    @property
    def equivalent(self) -> bool:
        return self.verdict == "Equivalent"


def behavioral_equivalent(g1: wg.WorkflowGraph, g2: wg.WorkflowGraph, bound: int = 10_000) -> Equivalence:
    """Synchronized exploration of both FSMs; a Different verdict carries a witness word
    accepted by exactly one of them."""
    a, b = Fsm(g1), Fsm(g2)
    start = (a.initial, b.initial)
    seen = {start}
    queue: deque[tuple[tuple[str, str], tuple[str, ...]]] = deque([(start, ())])
    while queue:
        (p, q), path = queue.popleft()
        la, lb = a.moves[p], b.moves[q]
        diff = sorted(set(la) ^ set(lb))
        if diff:
            return Equivalence("Different", path + (diff[0],))
        for label in sorted(la):
            np_, nq = la[label], lb[label]
            if np_ is None or nq is None:
                continue
            pair = (np_, nq)
            if pair not in seen:
                if len(seen) >= bound:
                    return Equivalence("Undecided")
                seen.add(pair)
                queue.append((pair, path + (label,)))
    return Equivalence("Equivalent")


# --- bounded paths -------------------------------------------------------------------

def _back_edges(graph: wg.WorkflowGraph) -> set[int]:
    """Indices of DFS back edges (iterative DFS from Start in edge order)."""
    index = {id(e): i for i, e in enumerate(graph.edges)}
    start = graph.start.id  # type: ignore[union-attr]
    state: dict[str, int] = {start: 1}  # 1 on stack, 2 done
    back: set[int] = set()
    stack = [(start, iter(graph.out_edges(start)))]
    while stack:
        node, it = stack[-1]
        edge = next(it, None)
        if edge is None:
            state[node] = 2
            stack.pop()
            continue
        s = state.get(edge.target)
        if s == 1:
            back.add(index[id(edge)])
        elif s is None:
            state[edge.target] = 1
            stack.append((edge.target, iter(graph.out_edges(edge.target))))
    return back


def _check_condition_free_cycles(graph: wg.WorkflowGraph) -> None:
    # a cycle through only single-successor nodes can never reach End
    for n in graph.nodes:
        if n.kind is wg.NodeKind.CONDITION:
            continue
        seen, cur = set(), n.id
        while True:
            node = graph.node(cur)
            if node.kind in (wg.NodeKind.CONDITION, wg.NodeKind.END):
                break
            if cur in seen:
                raise DepthExhausted(f"cycle through {cur!r} has no condition node")
            seen.add(cur)
            outs = graph.out_edges(cur)
            if len(outs) != 1:
                break
            cur = outs[0].target


def bounded_paths(graph: wg.WorkflowGraph, depth: int = 1, max_paths: int = 10_000) -> set[tuple[str, ...]]:
    """Label words Start -> End taking each loop (back edge) at most ``depth`` times."""
    _require_valid(graph)
    _check_condition_free_cycles(graph)
    fsm = Fsm(graph)
    back = _back_edges(graph)
    edge_index = {(e.source, e.target, e.label): i for i, e in enumerate(graph.edges)}
    out: set[tuple[str, ...]] = set()
    stack = [(fsm.initial, (), Counter())]
    while stack:
        node, word, used = stack.pop()
        for label, target in sorted(fsm.moves[node].items()):
            if target is None:
                out.add(word + (label,))
                if len(out) > max_paths:
                    raise DepthExhausted(f"more than {max_paths} paths")
                continue
            n = graph.node(node)
            elabel = label.rsplit("?", 1)[1] if n.kind is wg.NodeKind.CONDITION else None
            i = edge_index[(node, target, elabel)]
            nxt = used
            if i in back:
                if used[i] >= depth:
                    continue
                nxt = used.copy()
                nxt[i] += 1
            stack.append((target, word + (label,), nxt))
    return out


@dataclass(frozen=True)
class PathReport:
    covered: frozenset
    missing: frozenset
    spurious: frozenset

    @property
    def coverage(self) -> float:
        total = len(self.covered) + len(self.missing)
        return len(self.covered) / total if total else 1.0


def path_sufficiency(golden: wg.WorkflowGraph, candidate: wg.WorkflowGraph, depth: int = 1) -> PathReport:
    gp, cp = bounded_paths(golden, depth), bounded_paths(candidate, depth)
    return PathReport(frozenset(gp & cp), frozenset(gp - cp), frozenset(cp - gp))


# --- fidelity ---------------------------------------------------------------------------

def _realizable(graph: wg.WorkflowGraph, a: str, b: str) -> bool:
    calls = [n for n in graph.nodes if n.kind is wg.NodeKind.FUNCTION_CALL]
    for u in (n for n in calls if n.function == a):
        seen: set[str] = set()
        queue = deque(e.target for e in graph.out_edges(u.id))
        while queue:
            cur = queue.popleft()
            if cur in seen:
                continue
            seen.add(cur)
            node = graph.node(cur)
            if node.kind is wg.NodeKind.FUNCTION_CALL:
                if node.function == b:
                    return True
                continue  # may not cross another call
            queue.extend(e.target for e in graph.out_edges(cur))
    return False


def fidelity(graph: wg.WorkflowGraph, trace: Trace | Sequence[str]) -> float:
    """Share of adjacent business-call pairs the graph can replay in order."""
    _require_valid(graph)
    calls = list(trace) if not isinstance(trace, Trace) else [s.action for s in trace.business_steps()]
    if not calls:
        raise ValueError("trace has no business calls")
    if len(calls) == 1:
        return 1.0 if any(n.function == calls[0] for n in graph.nodes) else 0.0
    pairs = list(zip(calls, calls[1:]))
    return sum(_realizable(graph, a, b) for a, b in pairs) / len(pairs)


def diagnose(golden: wg.WorkflowGraph, candidate: wg.WorkflowGraph | None,
             trace: Trace | None = None, depth: int = 1) -> dict:
    """Diagnostic record for one case; the final score is an unweighted mean."""
    if candidate is None or not wg.validate(candidate).valid:
        return {"available": False}
    cong = structural_congruence(golden, candidate)
    eq = behavioral_equivalent(golden, candidate)
    try:
        paths = path_sufficiency(golden, candidate, depth)
        path_part = {"covered": len(paths.covered), "missing": len(paths.missing),
                     "spurious": len(paths.spurious), "coverage": round(paths.coverage, 4)}
        cover = paths.coverage
    except DepthExhausted as exc:
        path_part, cover = {"error": str(exc)}, 0.0
    fid = None
    if trace is not None and trace.business_steps():
        fid = round(fidelity(candidate, trace), 4)
    score = (cong.aggregate + (1.0 if eq.equivalent else 0.0) + cover) / 3
    return {
        "available": True,
        "node_overlap": round(cong.node_overlap, 4),
        "edge_overlap": round(cong.edge_overlap, 4),
        "branch_topology_match": round(cong.branch_topology_match, 4),
        "congruence": round(cong.aggregate, 4),
        "equivalence": eq.verdict,
        "witness": list(eq.witness),
        "paths": path_part,
        "fidelity": fid,
        "score": round(score, 4),
    }
