"""Command line entry point: ``flowforge run|eval|compare|report|replay``."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import graph as wg
from .dataset import DESK_PATH, DatasetError
from .harness import (
    ConfigError, EmptyRun, ExperimentConfig, HarnessError, load_graph_file, reevaluate,
    report, run_experiment, run_matrix, write_reports,
)
from .trace import Trace, pretty
from .whitebox import DepthExhausted, InvalidGraph, diagnose

EXIT_OK, EXIT_RUN_ERRORS, EXIT_CONFIG = 0, 1, 2


def _fail(message: str, code: int = EXIT_CONFIG) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


@click.group()
@click.version_option(package_name="flowforge")
def main() -> None:
    """Workflow synthesis and evaluation harness."""


@main.command()
@click.option("--dataset", default=str(DESK_PATH), show_default="bundled desk suite",
              help="Directory with index.json and one JSON file per instance.")
@click.option("--mode", type=click.Choice(["react", "plan_execute", "enhanced_react", "es", "matrix"]),
              default="es", show_default=True)
@click.option("--exec-strategy", type=click.Choice(["react", "plan_execute"]), default="plan_execute",
              show_default=True)
@click.option("--build-strategy", type=click.Choice(["react", "plan_and_build"]), default="react",
              show_default=True)
@click.option("--rollouts", type=int, default=3, show_default=True)
@click.option("--selection", type=click.Choice(["all", "all_success", "random_success"]),
              default="all_success", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--endpoint", default=None, help="Chat-completions URL; implies the HTTP backend.")
@click.option("--model", default="default", show_default=True)
@click.option("--backend", type=click.Choice(["scripted", "http"]), default=None,
              help="Defaults to http when --endpoint is given, scripted otherwise.")
@click.option("--json-constraint", type=click.Choice(["on", "off"]), default="off", show_default=True)
@click.option("--instance", "instances", multiple=True, help="Restrict to these instance ids.")
@click.option("--max-steps", type=int, default=30, show_default=True)
@click.option("--jobs", type=int, default=1, show_default=True)
@click.option("--out", default="runs", show_default=True)
@click.option("--figures/--no-figures", default=True, show_default=True)
def run(dataset, mode, exec_strategy, build_strategy, rollouts, selection, seed, endpoint, model, backend,
        json_constraint, instances, max_steps, jobs, out, figures):
    """Run an experiment and write per-case artifacts plus reports."""
    backend = backend or ("http" if endpoint else "scripted")
    kwargs = dict(dataset=dataset, instances=list(instances) or None,
                  mode="es" if mode == "matrix" else mode,
                  exec_strategy=exec_strategy, build_strategy=build_strategy, rollouts=rollouts,
                  selection=selection, backend=backend, model=model,
                  json_constraint=json_constraint == "on", max_steps=max_steps, seed=seed, out=out, jobs=jobs)
    if endpoint:
        kwargs["endpoint"] = endpoint
    try:
        config = ExperimentConfig(**kwargs)
        if mode == "matrix":
            summaries = run_matrix(config)
            root = Path(out)
        else:
            summaries = [run_experiment(config, write_report=False)]
            root = summaries[0].run_dir
        write_reports(root, figures=figures)
    except (ConfigError, DatasetError, ValueError) as exc:
        _fail(str(exc))
        return
    errors = sum(s.run_errors for s in summaries)
    for s in summaries:
        passed = sum(r.case_pass for r in s.results)
        click.echo(f"{s.run_dir}: {passed}/{len(s.results)} cases passed, "
                   f"{len(s.computed)} computed, {s.run_errors} run errors")
    click.echo(f"report: {root / 'report.md'}")
    sys.exit(EXIT_RUN_ERRORS if errors else EXIT_OK)


@main.command("eval")
@click.argument("run_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--dataset", default=None, help="Override the dataset recorded in the run manifest.")
def eval_cmd(run_dir, dataset):
    """Re-run black-box tests on stored graphs and compare with stored verdicts."""
    try:
        rows = reevaluate(run_dir, dataset)
    except (HarnessError, DatasetError) as exc:
        _fail(str(exc))
        return
    drift = 0
    for mode, inst, stored, fresh in rows:
        same = stored == fresh
        drift += not same
        passed = sum(v == "pass" for v in fresh)
        click.echo(f"{mode}\t{inst}\t{passed}/{len(fresh)}\t{'ok' if same else 'CHANGED'}")
    sys.exit(EXIT_RUN_ERRORS if drift else EXIT_OK)


@main.command()
@click.argument("golden", type=click.Path(exists=True, dir_okay=False))
@click.argument("candidate", type=click.Path(exists=True, dir_okay=False))
@click.option("--trace", "trace_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Source trace (JSONL) for the fidelity score.")
@click.option("--depth", type=int, default=1, show_default=True)
def compare(golden, candidate, trace_path, depth):
    """White-box comparison of a candidate graph against a golden graph."""
    try:
        g = load_graph_file(Path(golden))
        c = load_graph_file(Path(candidate))
        t = Trace.load(Path(trace_path)) if trace_path else None
        result = diagnose(g, c, t, depth)
    except (wg.GraphError, InvalidGraph, DepthExhausted, json.JSONDecodeError, ValueError) as exc:
        _fail(str(exc))
        return
    click.echo(json.dumps(result, indent=2, sort_keys=True))


@main.command("report")
@click.argument("run_dir", type=click.Path(file_okay=False))
@click.option("--format", "fmt", type=click.Choice(["md", "csv"]), default="md", show_default=True)
@click.option("--figures/--no-figures", default=False, show_default=True,
              help="Also write report files and PNG figures into the run directory.")
def report_cmd(run_dir, fmt, figures):
    """Recompute a report from the persisted case results."""
    try:
        text = report(run_dir, fmt)
        if figures:
            write_reports(run_dir)
    except EmptyRun as exc:
        _fail(str(exc))
        return
    click.echo(text, nl=False)


@main.command()
@click.argument("trace_file", type=click.Path(exists=True, dir_okay=False))
def replay(trace_file):
    """Pretty-print a stored trace."""
    try:
        trace = Trace.load(Path(trace_file))
    except (ValueError, KeyError) as exc:
        _fail(f"cannot read trace: {exc}")
        return
    click.echo(pretty(trace))


if __name__ == "__main__":
    main()
