"""Black-box evaluation, case records, and the metric and diagnostic tables."""

from __future__ import annotations

import enum
from dataclasses import asdict, dataclass, field
from decimal import Decimal
from fractions import Fraction
from typing import Any, Iterable, Mapping, Sequence

from . import graph as wg
from .executor import ExecLimits, run_tests
from .tools import ToolRegistry
from .trace import Trace

NO_GRAPH = "No Graph available for validation"
TRANSPORT_REASONS = ("TransportError", "TranscriptExhausted")


class MtiClass(str, enum.Enum):
    CLEAN = "Clean"
    INTERLEAVED = "Interleaved"
    INTERRUPTED = "Interrupted"
    FRONT_LOADED = "FrontLoaded"


class FailureClass(str, enum.Enum):
    EXEC_ONLY_NO_GRAPH = "ExecOnlyNoGraph"
    GRAPH_ONLY_NO_EXEC = "GraphOnlyNoExec"
    BOTH_PARTIAL_FAILED = "BothPartialFailed"
    EMPTY_ERROR = "EmptyError"


FAILURE_LABELS = {
    FailureClass.EXEC_ONLY_NO_GRAPH: "Exec only, no graph",
    FailureClass.GRAPH_ONLY_NO_EXEC: "Graph only, no exec",
    FailureClass.BOTH_PARTIAL_FAILED: "Both partial/failed",
    FailureClass.EMPTY_ERROR: "Empty/error",
}

COMPLETE_ERROR_FREE = "CompleteErrorFree"
INCOMPLETE_OR_ERRONEOUS = "IncompleteOrErroneous"


class CalledOnPassingCase(ValueError):
    pass


class UnknownBaseline(KeyError):
    pass


# --- rounding ---------------------------------------------------------------

def round_half_up(value: Fraction | float | int, digits: int) -> Decimal:
    """Round exactly, ties away from zero (5.665 -> 5.67, -0.05 -> -0.1)."""
    scaled = Fraction(value) * 10 ** digits
    whole = scaled.numerator // scaled.denominator  # floor
    rem = scaled - whole
    if rem > Fraction(1, 2) or (rem == Fraction(1, 2) and scaled > 0):
        whole += 1
    q = Decimal(1).scaleb(-digits)
    return (Decimal(whole) * q).quantize(q)


def percent(count: int, total: int, digits: int = 1) -> Decimal:
    if total <= 0:
        return round_half_up(0, digits)
    return round_half_up(Fraction(100 * count, total), digits)


def delta_percent(total: float, baseline: float, digits: int = 1) -> Decimal:
    if baseline == 0:
        raise ZeroDivisionError("baseline total is zero")
    return round_half_up(Fraction(100) * (Fraction(total) - Fraction(baseline)) / Fraction(baseline), digits)


def signed(d: Decimal) -> str:
    """Format a delta with an explicit sign, e.g. '-34.0' or '+22.6'."""
    return ("+" if d > 0 else "") + str(d) if d != 0 else str(abs(d))


# --- case records -------------------------------------------------------------

@dataclass
class CaseResult:
    instance_id: str
    mode: str
    category: str = ""
    verdicts: list[str] = field(default_factory=list)
    details: list[str | None] = field(default_factory=list)
    exec_complete: bool = False
    graph_produced: bool = False
    graph_valid: bool = False
    violations: list[str] = field(default_factory=list)
    mti_class: str | None = None
    failure_class: str | None = None
    trajectory_quality: str = INCOMPLETE_OR_ERRONEOUS
    business_steps: int = 0
    acted_steps: int = 0
    transport_abort: bool = False
    exec_tokens: int = 0
    summarize_tokens: int | None = None
    reasons: list[str] = field(default_factory=list)
    selected: list[int] = field(default_factory=list)
    whitebox: dict[str, Any] | None = None
    config_hash: str = ""

    @property
    def tests_passed(self) -> int:
        return sum(v == "pass" for v in self.verdicts)

    @property
    def case_pass(self) -> bool:
        return bool(self.verdicts) and all(v == "pass" for v in self.verdicts)

    @property
    def both_success(self) -> bool:
        return self.exec_complete and self.graph_valid

    @property
    def total_tokens(self) -> int:
        return self.exec_tokens + (self.summarize_tokens or 0)

    @property
    def pass_fraction(self) -> Fraction:
        return Fraction(self.tests_passed, len(self.verdicts)) if self.verdicts else Fraction(0)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "CaseResult":
        return cls(**dict(d))


def run_blackbox(graph: wg.WorkflowGraph | None, tests: Sequence[tuple[Mapping[str, Any], Any]],
                 registry: ToolRegistry, limits: ExecLimits = ExecLimits()) -> tuple[list[str], list[str | None]]:
    """Per-test verdicts ('pass' | 'fail' | 'error') and details."""
    if not tests:
        raise ValueError("tests must not be empty")
    if graph is None or graph.is_empty():
        return ["fail"] * len(tests), [NO_GRAPH] * len(tests)
    results = run_tests(graph, tests, registry, limits)
    return [r[0] for r in results], [r[1] for r in results]


def exec_completeness(trace: Trace) -> bool:
    if not trace.success or not trace.business_steps() or not trace.steps:
        return False
    last = trace.steps[-1]
    main_finishes = [s for s in trace.steps if s.partition == "T" and s.phase == "main"]
    final = main_finishes[-1] if main_finishes else last
    return final.partition == "T" and bool(str(final.args.get("answer", "")).strip())


def classify_mti(trace: Trace) -> MtiClass:
    """Classify the ordering of business (B) and graph (G) steps in one trace."""
    tags: list[str] = []
    finish_before_g = False
    for s in trace.steps:
        if s.partition == "T":
            if "G" not in tags and str(s.args.get("answer", "")).strip():
                finish_before_g = True
            continue
        if s.partition in ("B", "G"):
            tags.append(s.partition)
    if "G" not in tags or "B" not in tags:
        return MtiClass.CLEAN
    first_b = tags.index("B")
    last_b = len(tags) - 1 - tags[::-1].index("B")
    if "G" in tags[first_b:last_b]:
        return MtiClass.INTERLEAVED
    if tags[0] == "G":
        return MtiClass.FRONT_LOADED
    if not finish_before_g:
        return MtiClass.INTERRUPTED
    return MtiClass.CLEAN


def mti_rate(classes: Iterable[MtiClass | str]) -> tuple[int, int, Decimal]:
    items = [MtiClass(c) for c in classes]
    clean = sum(c is MtiClass.CLEAN for c in items)
    mti = len(items) - clean
    return clean, mti, percent(mti, len(items))


def classify_failure(case: CaseResult) -> FailureClass:
    if case.case_pass:
        raise CalledOnPassingCase(case.instance_id)
    if case.acted_steps == 0 or case.transport_abort:
        return FailureClass.EMPTY_ERROR
    if case.exec_complete and not case.graph_produced:
        return FailureClass.EXEC_ONLY_NO_GRAPH
    if case.graph_produced and case.business_steps == 0:
        return FailureClass.GRAPH_ONLY_NO_EXEC
    return FailureClass.BOTH_PARTIAL_FAILED


def acted(trace: Trace) -> int:
    return sum(1 for s in trace.steps if s.action)


# --- tables -----------------------------------------------------------------------

@dataclass(frozen=True)
class MetricsTable:
    cases: int
    tests: int
    cases_passed: int
    tests_passed: int
    exec_complete: int
    graph_valid: int
    both_success: int

    def crate(self, digits: int = 1) -> Decimal:
        return percent(self.cases_passed, self.cases, digits)

    def trate(self, digits: int = 1) -> Decimal:
        return percent(self.tests_passed, self.tests, digits)

    def rates(self, digits: int = 1) -> dict[str, Decimal]:
        return {
            "CRate": self.crate(digits),
            "TRate": self.trate(digits),
            "Exec. Compl.": percent(self.exec_complete, self.cases, digits),
            "Graph Valid.": percent(self.graph_valid, self.cases, digits),
            "Both Succ.": percent(self.both_success, self.cases, digits),
        }


def metrics_from_counts(cases_passed: int, cases: int, tests_passed: int = 0, tests: int = 0,
                        exec_complete: int = 0, graph_valid: int = 0, both_success: int = 0) -> MetricsTable:
    return MetricsTable(cases, tests, cases_passed, tests_passed, exec_complete, graph_valid, both_success)


def compute_metrics(results: Sequence[CaseResult]) -> MetricsTable:
    if not results:
        raise ValueError("no case results")
    return MetricsTable(
        cases=len(results),
        tests=sum(len(r.verdicts) for r in results),
        cases_passed=sum(r.case_pass for r in results),
        tests_passed=sum(r.tests_passed for r in results),
        exec_complete=sum(r.exec_complete for r in results),
        graph_valid=sum(r.graph_valid for r in results),
        both_success=sum(r.both_success for r in results),
    )


@dataclass(frozen=True)
class Cell:
    label: str
    cases: int
    mean_rate: Decimal  # mean of per-case pass fractions
    pooled_rate: Decimal  # passing tests over all tests in the cell


def _cell(label: str, members: Sequence[CaseResult], digits: int = 1) -> Cell:
    if not members:
        return Cell(label, 0, round_half_up(0, digits), round_half_up(0, digits))
    mean = sum((r.pass_fraction for r in members), Fraction(0)) / len(members)
    tests = sum(len(r.verdicts) for r in members)
    return Cell(label, len(members), round_half_up(100 * mean, digits),
                percent(sum(r.tests_passed for r in members), tests, digits))


def quadrant(results: Sequence[CaseResult], digits: int = 1) -> list[Cell]:
    """Execution success crossed with graph validity."""
    cells = []
    for ex in (True, False):
        for gv in (True, False):
            label = f"Execution {'✓' if ex else '✗'} + Graph {'✓' if gv else '✗'}"
            cells.append(_cell(label, [r for r in results if r.exec_complete == ex and r.graph_valid == gv], digits))
    return cells


def condition_on_execution(results: Sequence[CaseResult], digits: int = 1) -> list[Cell]:
    """Pass rates split by execution outcome and by trajectory quality."""
    cells = [
        _cell("Execution success", [r for r in results if r.exec_complete], digits),
        _cell("Execution failure", [r for r in results if not r.exec_complete], digits),
    ]
    for ex in (True, False):
        for q in (COMPLETE_ERROR_FREE, INCOMPLETE_OR_ERRONEOUS):
            members = [r for r in results if r.exec_complete == ex and r.trajectory_quality == q]
            cells.append(_cell(f"{'success' if ex else 'failure'} / {q}", members, digits))
    return cells


@dataclass(frozen=True)
class TokenRow:
    mode: str
    exec_mean: Fraction
    summarize_mean: Fraction | None
    total_mean: Fraction
    delta: Decimal | None


def token_report(by_mode: Mapping[str, Sequence[CaseResult]],
                 baselines: Mapping[str, str] | None = None) -> list[TokenRow]:
    """Mean output tokens per instance for each mode, with delta against a baseline mode."""
    means: dict[str, tuple[Fraction, Fraction | None, Fraction]] = {}
    for mode, rs in by_mode.items():
        n = len(rs) or 1
        ex = Fraction(sum(r.exec_tokens for r in rs), n)
        has_sum = any(r.summarize_tokens is not None for r in rs)
        sm = Fraction(sum(r.summarize_tokens or 0 for r in rs), n) if has_sum else None
        means[mode] = (ex, sm, ex + (sm or 0))
    rows = []
    for mode, (ex, sm, tot) in means.items():
        delta = None
        base = (baselines or {}).get(mode)
        if base is not None:
            if base not in means:
                raise UnknownBaseline(base)
            delta = delta_percent(tot, means[base][2])
        rows.append(TokenRow(mode, ex, sm, tot, delta))
    return rows


def failure_breakdown(results: Sequence[CaseResult]) -> dict[FailureClass, int]:
    counts = {fc: 0 for fc in FailureClass}
    for r in results:
        if not r.case_pass:
            counts[classify_failure(r)] += 1
    return counts
