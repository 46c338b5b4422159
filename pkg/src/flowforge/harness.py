"""Experiment runner: configs, per-case persistence, resume and reports."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Sequence

from . import graph as wg
from . import scripts
from .agent import SessionLimits, run_mixed
from .dataset import Instance, load_dataset, DESK_PATH
from .es import BuildStrategy, ESConfig, ExecStrategy, Selection, run_es
from .evaluation import (
    COMPLETE_ERROR_FREE, INCOMPLETE_OR_ERRONEOUS, NO_GRAPH, TRANSPORT_REASONS, CaseResult,
    FailureClass, MtiClass, acted, classify_failure, classify_mti, compute_metrics,
    condition_on_execution, exec_completeness, failure_breakdown, mti_rate, percent, quadrant,
    round_half_up, run_blackbox, signed, token_report,
)
from .executor import ExecLimits, run_tests
from .llm import Backend, BackendConfig, HttpBackend, ScriptedBackend
from .tools import ToolRegistry, business_registry
from .trace import Trace
from .whitebox import diagnose

SINGLE_STAGE = ("react", "plan_execute", "enhanced_react")
MODES = SINGLE_STAGE + ("es",)
MATRIX = ("react", "plan_execute", "es-react-react", "es-pe-react")
DISPLAY = {"react": "ReAct", "plan_execute": "P&E", "enhanced_react": "Enhanced ReAct",
           "es-react-react": "ES-ReAct", "es-pe-react": "ES-P&E"}
BASELINES = {"es-react-react": "react", "es-react-pb": "react", "es-pe-react": "plan_execute",
             "es-pe-pb": "plan_execute", "enhanced_react": "react"}
_ORDER = ("react", "plan_execute", "enhanced_react", "es-react-react", "es-react-pb", "es-pe-react", "es-pe-pb")


class HarnessError(Exception):
    pass


class ConfigError(HarnessError):
    pass


class EmptyRun(HarnessError):
    def __init__(self, path: Path | str):
        super().__init__(f"no case results under {path}")
        self.path = str(path)


@dataclass
class ExperimentConfig:
    dataset: str = str(DESK_PATH)
    instances: list[str] | None = None
    mode: str = "es"
    exec_strategy: str = "plan_execute"
    build_strategy: str = "react"
    rollouts: int = 3
    selection: str = "all_success"
    backend: str = "scripted"
    endpoint: str = BackendConfig.endpoint
    model: str = BackendConfig.model
    temperature: float = 0.0
    json_constraint: bool = False
    max_steps: int = SessionLimits.max_steps
    max_tool_retries: int = SessionLimits.max_tool_retries
    max_format_retries: int = SessionLimits.max_format_retries
    max_visits: int = ExecLimits.max_visits
    seed: int = 0
    out: str = "runs"
    jobs: int = 1

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.backend not in ("scripted", "http"):
            raise ConfigError(f"unknown backend {self.backend!r}")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        try:
            self.es_config(0)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ExperimentConfig":
        return cls(**d)

    @property
    def hash(self) -> str:
        """Stable across runs and platforms; output location and parallelism excluded."""
        doc = {k: v for k, v in self.to_dict().items() if k not in ("out", "jobs")}
        text = json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=True)
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def es_config(self, seed: int) -> ESConfig:
        return ESConfig(ExecStrategy(self.exec_strategy), BuildStrategy(self.build_strategy),
                        self.rollouts, Selection(self.selection), seed)

    @property
    def label(self) -> str:
        return self.es_config(0).label if self.mode == "es" else self.mode

    @property
    def limits(self) -> SessionLimits:
        return SessionLimits(self.max_steps, self.max_tool_retries, self.max_format_retries)


def matrix_configs(base: ExperimentConfig) -> list[ExperimentConfig]:
    """The four headline modes: ReAct, P&E, ES-ReAct and ES-P&E."""
    return [
        replace(base, mode="react"),
        replace(base, mode="plan_execute"),
        replace(base, mode="es", exec_strategy="react", build_strategy="react"),
        replace(base, mode="es", exec_strategy="plan_execute", build_strategy="react"),
    ]


def instance_seed(seed: int, instance_id: str) -> int:
    digest = hashlib.sha256(f"{seed}:{instance_id}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


# --- backends -----------------------------------------------------------------

BackendFactory = Callable[[Instance, ToolRegistry], Callable[[str], Backend]]


def scripted_factory(config: ExperimentConfig) -> BackendFactory:
    def make(inst: Instance, registry: ToolRegistry) -> Callable[[str], Backend]:
        if config.mode == "es":
            script = scripts.es_transcripts(inst, config.exec_strategy, config.build_strategy,
                                            config.rollouts, registry)
        else:
            script = scripts.single_stage(inst, config.mode, registry)
        backends = {label: ScriptedBackend(replies) for label, replies in script.items()}
        return lambda label: backends[label]
    return make


def http_factory(config: ExperimentConfig) -> BackendFactory:
    backend = HttpBackend(BackendConfig(endpoint=config.endpoint, model=config.model,
                                        temperature=config.temperature,
                                        json_constraint=config.json_constraint))
    return lambda inst, registry: (lambda label: backend)


def default_factory(config: ExperimentConfig) -> BackendFactory:
    return http_factory(config) if config.backend == "http" else scripted_factory(config)


# --- one case -----------------------------------------------------------------

@dataclass
class CaseArtifacts:
    result: CaseResult
    traces: dict[str, Trace] = field(default_factory=dict)
    graph: wg.WorkflowGraph | None = None
    runlogs: list[str] = field(default_factory=list)
    stage_usage: dict[str, Any] = field(default_factory=dict)
    run_error: bool = False


def _quality(traces: Sequence[Trace]) -> str:
    if traces and all(exec_completeness(t) and t.error_free() for t in traces):
        return COMPLETE_ERROR_FREE
    return INCOMPLETE_OR_ERRONEOUS


def _worst_mti(traces: Sequence[Trace]) -> str:
    for t in traces:
        c = classify_mti(t)
        if c is not MtiClass.CLEAN:
            return c.value
    return MtiClass.CLEAN.value


def _black_box(inst: Instance, graph: wg.WorkflowGraph | None, registry: ToolRegistry,
               limits: ExecLimits) -> tuple[list[str], list[str | None], list[str]]:
    verdicts, details = run_blackbox(graph, inst.tests, registry, limits)
    logs: list[str] = []
    if graph is not None and not graph.is_empty():
        logs = [log.dumps() if log is not None else "" for _, _, log in run_tests(graph, inst.tests, registry, limits)]
    return verdicts, details, logs


def run_case(inst: Instance, config: ExperimentConfig, backends: Callable[[str], Backend],
             registry: ToolRegistry) -> CaseArtifacts:
    limits = config.limits
    exec_limits = ExecLimits(config.max_visits)
    label = config.label
    res = CaseResult(inst.id, label, inst.category, config_hash=config.hash)
    art = CaseArtifacts(res)
    if config.mode == "es":
        seed = instance_seed(config.seed, inst.id)
        out = run_es(inst.id, inst.query(), registry, backends, config.es_config(seed), limits)
        for i, t in enumerate(out.traces):
            art.traces[f"rollout_{i}"] = t
        art.traces["build"] = out.build_trace
        graph = out.graph if out.graph is not None and not out.graph.is_empty() else None
        selected = [out.traces[i] for i in out.selected]
        res.exec_complete = any(exec_completeness(t) for t in out.traces)
        res.business_steps = sum(len(t.business_steps()) for t in out.traces)
        res.acted_steps = sum(acted(t) for t in out.traces) + acted(out.build_trace)
        res.transport_abort = (all(t.reason in TRANSPORT_REASONS for t in out.traces)
                               or out.build_trace.reason in TRANSPORT_REASONS)
        res.exec_tokens = out.exec_usage.output_tokens
        res.summarize_tokens = out.summarize_usage.output_tokens
        res.trajectory_quality = _quality(out.traces)
        res.selected = list(out.selected)
        res.mti_class = _worst_mti(list(out.traces) + [out.build_trace])
        res.reasons = sorted({t.reason for t in out.traces if t.reason is not None})
        if out.build_trace.reason is not None:
            res.reasons.append(f"build:{out.build_trace.reason}")
        source = selected[0] if selected else None
        art.stage_usage = {"execute": out.exec_usage.to_dict(), "summarize": out.summarize_usage.to_dict()}
    else:
        trace, graph = run_mixed(config.mode, inst.id, inst.query(), registry, backends("main"), limits)
        art.traces["main"] = trace
        res.exec_complete = exec_completeness(trace)
        res.business_steps = len(trace.business_steps())
        res.acted_steps = acted(trace)
        res.transport_abort = trace.reason in TRANSPORT_REASONS
        res.exec_tokens = trace.usage.output_tokens
        res.trajectory_quality = _quality([trace])
        res.mti_class = classify_mti(trace).value
        res.reasons = [trace.reason] if trace.reason is not None else []
        res.reasons += [f for f in trace.flags if f.startswith("post_hoc_failed")]
        source = trace
        art.stage_usage = {"execute": trace.usage.to_dict()}
    for t in art.traces.values():
        t.config_hash = config.hash
    art.graph = graph
    res.graph_produced = graph is not None
    if graph is not None:
        report = wg.validate(graph, registry.names)
        res.graph_valid = report.valid
        res.violations = sorted(report.codes())
    else:
        res.reasons.append(NO_GRAPH)
    res.verdicts, res.details, art.runlogs = _black_box(inst, graph, registry, exec_limits)
    if inst.golden_graph is not None:
        try:
            res.whitebox = diagnose(inst.golden_graph, graph, source)
        except ValueError as exc:
            res.whitebox = {"available": False, "error": str(exc)}
    if not res.case_pass:
        res.failure_class = classify_failure(res).value
    art.run_error = res.transport_abort
    return art


def error_case(inst: Instance, config: ExperimentConfig, exc: BaseException) -> CaseArtifacts:
    """Per-case crash: recorded as an EmptyError case, the run carries on."""
    res = CaseResult(inst.id, config.label, inst.category, config_hash=config.hash,
                     verdicts=["error"] * len(inst.tests), details=[str(exc)] * len(inst.tests),
                     reasons=[f"RunError: {type(exc).__name__}: {exc}", NO_GRAPH])
    res.failure_class = FailureClass.EMPTY_ERROR.value
    return CaseArtifacts(res, run_error=True)


# --- persistence --------------------------------------------------------------

def _dump(path: Path, doc: Any) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")


def write_case(case_dir: Path, art: CaseArtifacts) -> None:
    case_dir.mkdir(parents=True, exist_ok=True)
    h = art.result.config_hash
    for stale in case_dir.glob("*.jsonl"):
        stale.unlink()
    for name, trace in art.traces.items():
        trace.save(case_dir / f"{name}.trace.jsonl")
    if art.graph is not None:
        _dump(case_dir / "graph.json", {"config_hash": h, "graph": wg.to_document(art.graph)})
    elif (case_dir / "graph.json").exists():
        (case_dir / "graph.json").unlink()
    for k, text in enumerate(art.runlogs):
        header = json.dumps({"type": "header", "config_hash": h, "test": k}) + "\n"
        (case_dir / f"test_{k}.runlog.jsonl").write_text(header + text, encoding="utf-8")
    _dump(case_dir / "stage_usage.json", {"config_hash": h, **art.stage_usage})
    # written last: its presence marks the case as complete
    _dump(case_dir / "case.json", art.result.to_dict())


def load_case(path: Path) -> CaseResult:
    return CaseResult.from_dict(json.loads(path.read_text(encoding="utf-8")))


def load_graph_file(path: Path) -> wg.WorkflowGraph:
    """A graph document, a persisted graph.json wrapper, or an instance file's golden graph."""
    doc = json.loads(path.read_text(encoding="utf-8"))
    if isinstance(doc, dict) and "nodes" not in doc:
        for key in ("graph", "golden_graph"):
            if key in doc:
                doc = doc[key]
                break
    return wg.from_document(doc)


@dataclass
class RunSummary:
    run_dir: Path
    results: list[CaseResult]
    computed: list[str]
    run_errors: int


def select_instances(instances: list[Instance], wanted: list[str] | None) -> list[Instance]:
    if wanted is None:
        return instances
    by_id = {i.id: i for i in instances}
    missing = [w for w in wanted if w not in by_id]
    if missing:
        raise ConfigError(f"unknown instance id(s): {', '.join(missing)}")
    return [by_id[w] for w in wanted]


def run_experiment(config: ExperimentConfig, factory: BackendFactory | None = None,
                   instances: list[Instance] | None = None, write_report: bool = True) -> RunSummary:
    """Run one mode over the dataset into ``<out>/<label>/<instance id>/``."""
    if instances is None:
        instances = load_dataset(config.dataset)
    chosen = select_instances(instances, config.instances)
    factory = factory or default_factory(config)
    run_dir = Path(config.out) / config.label
    run_dir.mkdir(parents=True, exist_ok=True)
    _dump(run_dir / "manifest.json", {"config": {k: v for k, v in config.to_dict().items() if k not in ("out", "jobs")},
                                      "config_hash": config.hash, "label": config.label,
                                      "instances": [i.id for i in chosen]})

    def one(inst: Instance) -> tuple[CaseResult, bool, bool]:
        case_dir = run_dir / inst.id
        done = case_dir / "case.json"
        if done.exists():
            try:
                prev = load_case(done)
                if prev.config_hash == config.hash:
                    return prev, False, _is_run_error(prev)
            except (ValueError, TypeError):
                pass
        registry = business_registry(names=inst.toolset)
        try:
            art = run_case(inst, config, factory(inst, registry), registry)
        except Exception as exc:  # noqa: BLE001 - a case must never abort the run
            art = error_case(inst, config, exc)
            art.result.details[0] = traceback.format_exception_only(type(exc), exc)[-1].strip()
        write_case(case_dir, art)
        return art.result, True, art.run_error

    if config.jobs > 1:
        with ThreadPoolExecutor(max_workers=config.jobs) as pool:
            outs = list(pool.map(one, chosen))
    else:
        outs = [one(i) for i in chosen]
    summary = RunSummary(run_dir, [o[0] for o in outs], [r.instance_id for r, c, _ in outs if c],
                         sum(1 for o in outs if o[2]))
    if write_report:
        write_reports(run_dir)
    return summary


def _is_run_error(res: CaseResult) -> bool:
    return res.transport_abort or any(r.startswith("RunError") for r in res.reasons)


def run_matrix(base: ExperimentConfig, factory_for: Callable[[ExperimentConfig], BackendFactory] | None = None
               ) -> list[RunSummary]:
    instances = load_dataset(base.dataset)
    out = []
    for cfg in matrix_configs(base):
        fac = factory_for(cfg) if factory_for is not None else default_factory(cfg)
        out.append(run_experiment(cfg, fac, instances, write_report=False))
    write_reports(Path(base.out))
    return out


# --- reports ------------------------------------------------------------------

@dataclass
class RunGroup:
    label: str
    config_hash: str
    expected: int
    results: list[CaseResult]

    @property
    def name(self) -> str:
        return DISPLAY.get(self.label, self.label)


def collect(run_dir: Path | str) -> list[RunGroup]:
    """Group persisted CaseResults by mode; everything a report shows comes from disk."""
    root = Path(run_dir)
    if not root.is_dir():
        raise EmptyRun(root)
    groups: dict[str, RunGroup] = {}
    for path in sorted(root.rglob("case.json")):
        res = load_case(path)
        manifest = path.parent.parent / "manifest.json"
        if res.mode not in groups:
            expected, h = 0, res.config_hash
            if manifest.exists():
                m = json.loads(manifest.read_text(encoding="utf-8"))
                expected, h = len(m["instances"]), m["config_hash"]
            groups[res.mode] = RunGroup(res.mode, h, expected, [])
        groups[res.mode].results.append(res)
    if not groups:
        raise EmptyRun(root)
    for g in groups.values():
        g.results.sort(key=lambda r: r.instance_id)
        g.expected = max(g.expected, len(g.results))
    rank = {m: i for i, m in enumerate(_ORDER)}
    return sorted(groups.values(), key=lambda g: (rank.get(g.label, len(rank)), g.label))


def _md_table(header: list[str], rows: list[list[Any]]) -> list[str]:
    lines = ["| " + " | ".join(header) + " |", "|" + "|".join("---" for _ in header) + "|"]
    lines += ["| " + " | ".join(str(c) for c in r) + " |" for r in rows]
    return lines


def _coverage(g: RunGroup) -> str:
    n = len(g.results)
    text = f"{n}/{g.expected}"
    if n < g.expected:
        text += f" (partial, {percent(n, g.expected)}% coverage)"
    return text


def _mean(x) -> str:
    return str(round_half_up(x, 1))


def metric_rows(groups: list[RunGroup]) -> list[list[Any]]:
    rows = []
    for g in groups:
        m = compute_metrics(g.results)
        r = m.rates()
        rows.append([g.name, m.cases, m.tests, f"{m.cases_passed}/{m.cases}", f"{m.tests_passed}/{m.tests}",
                     r["CRate"], r["TRate"], r["Exec. Compl."], r["Graph Valid."], r["Both Succ."]])
    return rows


METRIC_HEADER = ["Mode", "Cases", "Tests", "Cases passed", "Tests passed",
                 "CRate", "TRate", "Exec. Compl.", "Graph Valid.", "Both Succ."]


def report_markdown(groups: list[RunGroup]) -> str:
    out = ["# FlowForge report", ""]
    out += ["## Runs", ""]
    out += _md_table(["Mode", "Config hash", "Coverage"],
                     [[g.name, g.config_hash, _coverage(g)] for g in groups])
    out += ["", "## Main results", ""]
    out += _md_table(METRIC_HEADER, metric_rows(groups))
    total_cases = max(len(g.results) for g in groups)
    total_tests = max(sum(len(r.verdicts) for r in g.results) for g in groups)
    out += ["", f"Total: {total_cases} cases ({total_tests} tests)"]

    out += ["", "## Multi-task interference", ""]
    rows = []
    for g in groups:
        clean, mti, rate = mti_rate(r.mti_class or MtiClass.CLEAN.value for r in g.results)
        rows.append([g.name, clean, mti, rate])
    out += _md_table(["Mode", "Clean", "MTI", "MTI rate"], rows)

    out += ["", "## Failure breakdown", ""]
    rows = []
    for g in groups:
        counts = failure_breakdown(g.results)
        failed = sum(counts.values())
        cells = [f"{counts[fc]} ({percent(counts[fc], failed) if failed else '0.0'}%)" for fc in FailureClass]
        rows.append([g.name, failed] + cells)
    out += _md_table(["Mode", "Failed"] + [fc.value for fc in FailureClass], rows)

    es_groups = [g for g in groups if g.label.startswith("es-")]
    for g in es_groups:
        out += ["", f"## Execution vs graph: {g.name}", ""]
        out += _md_table(["Cell", "Cases", "Mean pass rate", "Pooled pass rate"],
                         [[c.label, c.cases, c.mean_rate, c.pooled_rate] for c in quadrant(g.results)])
        out += [""]
        out += _md_table(["Condition", "Cases", "Mean pass rate", "Pooled pass rate"],
                         [[c.label, c.cases, c.mean_rate, c.pooled_rate]
                          for c in condition_on_execution(g.results)])

    out += ["", "## Token usage (mean output tokens per instance)", ""]
    by_mode = {g.label: g.results for g in groups}
    bases = {m: b for m, b in BASELINES.items() if m in by_mode and b in by_mode}
    rows = []
    for row in token_report(by_mode, bases):
        rows.append([DISPLAY.get(row.mode, row.mode), _mean(row.exec_mean),
                     _mean(row.summarize_mean) if row.summarize_mean is not None else "-",
                     _mean(row.total_mean),
                     f"{signed(row.delta)}% vs {DISPLAY.get(bases[row.mode], bases[row.mode])}"
                     if row.delta is not None else "-"])
    out += _md_table(["Mode", "Execute", "Summarize", "Total", "Delta"], rows)

    if es_groups:
        out += ["", "## Trace selections", ""]
        out += _md_table(["Mode", "Instance", "Selected rollouts"],
                         [[g.name, r.instance_id, "selection: " + (",".join(map(str, r.selected)) or "none")]
                          for g in es_groups for r in g.results])

    out += ["", "## White-box diagnostics", ""]
    rows = []
    for g in groups:
        for r in g.results:
            wb = r.whitebox or {}
            if not wb.get("available"):
                rows.append([g.name, r.instance_id, "-", "-", "-", "-", "-"])
                continue
            paths = wb.get("paths", {})
            rows.append([g.name, r.instance_id, wb["congruence"], wb["equivalence"],
                         paths.get("coverage", "-"), "-" if wb.get("fidelity") is None else wb["fidelity"],
                         wb["score"]])
    out += _md_table(["Mode", "Instance", "Congruence", "Equivalence", "Path coverage", "Fidelity", "Score"], rows)

    out += ["", "## Cases", ""]
    rows = []
    for g in groups:
        for r in g.results:
            rows.append([g.name, r.instance_id, r.category, f"{r.tests_passed}/{len(r.verdicts)}",
                         "yes" if r.exec_complete else "no", "yes" if r.graph_valid else "no",
                         r.mti_class or "-", r.failure_class or "-", "; ".join(r.reasons) or "-"])
    out += _md_table(["Mode", "Instance", "Category", "Tests", "Exec", "Graph", "MTI", "Failure", "Reasons"], rows)
    return "\n".join(out) + "\n"


def report_csv(groups: list[RunGroup]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["config_hash", "coverage"] + METRIC_HEADER)
    for g, row in zip(groups, metric_rows(groups)):
        w.writerow([g.config_hash, f"{len(g.results)}/{g.expected}"] + row)
    return buf.getvalue()


def report(run_dir: Path | str, fmt: str = "md") -> str:
    groups = collect(run_dir)
    if fmt == "md":
        return report_markdown(groups)
    if fmt == "csv":
        return report_csv(groups)
    raise ConfigError(f"unknown report format {fmt!r}")


def write_reports(run_dir: Path | str, figures: bool = True) -> list[Path]:
    root = Path(run_dir)
    groups = collect(root)
    paths = [root / "report.md", root / "report.csv"]
    paths[0].write_text(report_markdown(groups), encoding="utf-8")
    paths[1].write_text(report_csv(groups), encoding="utf-8")
    if figures:
        from .plots import render_figures
        paths += render_figures(groups, root / "figures")
    return paths


# --- stored-graph re-evaluation -----------------------------------------------

def reevaluate(run_dir: Path | str, dataset: str | None = None) -> list[tuple[str, str, list[str], list[str]]]:
    """Re-run black-box tests on stored graphs: (mode, instance, stored, fresh) verdicts."""
    root = Path(run_dir)
    out = []
    cache: dict[str, dict[str, Instance]] = {}
    for path in sorted(root.rglob("case.json")):
        res = load_case(path)
        manifest = path.parent.parent / "manifest.json"
        ds = dataset or (json.loads(manifest.read_text())["config"]["dataset"] if manifest.exists() else str(DESK_PATH))
        if ds not in cache:
            cache[ds] = {i.id: i for i in load_dataset(ds)}
        inst = cache[ds].get(res.instance_id)
        if inst is None:
            raise ConfigError(f"instance {res.instance_id!r} not in dataset {ds}")
        gpath = path.parent / "graph.json"
        graph = load_graph_file(gpath) if gpath.exists() else None
        fresh, _ = run_blackbox(graph, inst.tests, business_registry(names=inst.toolset))
        out.append((res.mode, res.instance_id, res.verdicts, fresh))
    if not out:
        raise EmptyRun(root)
    return out
