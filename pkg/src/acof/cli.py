"""Command-line interface: run, report, export-cloud, replay, validate-config."""

from __future__ import annotations

import csv
import json
import logging
import math
import sys
from pathlib import Path

import click
import numpy as np

from .config import ConfigError, load_config, parse_config
from .core import ValidationError
from .evaluators import EvaluatorUnavailable, TemplateError
from .llmclient import ConfigurationError
from .metrics import MetricsReport, compute_report
from .orchestrator import Runner, is_replayable
from .runlog import LogError, ParsedLog, RunLogWriter, read_log

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_DIVERGED = 0, 1, 2, 3
REPLAY_TOL = 1e-12

logger = logging.getLogger("acof")


def _fail(message: str, code: int):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _load(config_path, overrides):
    try:
        cfg, raw = load_config(config_path, overrides)
    except (ConfigError, ValidationError, ValueError) as exc:
        _fail(str(exc), EXIT_CONFIG)
    return cfg, raw


def format_table(row: dict) -> str:
    cols = list(row)
    vals = ["-" if row[c] is None else str(row[c]) for c in cols]
    widths = [max(len(c), len(v)) for c, v in zip(cols, vals)]
    head = " | ".join(c.ljust(w) for c, w in zip(cols, widths))
    sep = "-+-".join("-" * w for w in widths)
    body = " | ".join(v.ljust(w) for v, w in zip(vals, widths))
    return "\n".join([head, sep, body]) + "\n"


def report_from_log(log: ParsedLog, k=None, min_cluster_size=None, min_samples=None,
                    include_seed=None) -> MetricsReport:
    cfg = parse_config(log.snapshot["config"])
    m = cfg.metrics
    return compute_report(
        log.records(),
        cfg.space,
        k=m.k if k is None else k,
        min_cluster_size=m.min_cluster_size if min_cluster_size is None else min_cluster_size,
        min_samples=m.min_samples if min_samples is None else min_samples,
        include_seed=m.regret_include_seed if include_seed is None else include_seed,
    )


def write_report(report: MetricsReport, out: Path, warnings=()):
    doc = {"report": report.to_dict(), "table": report.table_row(), "warnings": list(warnings)}
    out.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    out.with_suffix(".txt").write_text(format_table(report.table_row()))


@click.group()
@click.option("-v", "--verbose", count=True, help="More logging (-vv for debug).")
def main(verbose):
    """Actor-critic region-refinement optimizer for analog sizing."""
    level = logging.WARNING - 10 * verbose
    logging.basicConfig(level=max(level, logging.DEBUG), format="%(levelname)s %(name)s: %(message)s")


@main.command("validate-config")
@click.argument("config_path", type=click.Path(dir_okay=False))
@click.option("--set", "overrides", multiple=True, help="Override a dot-path key, e.g. budget.rounds=5.")
def validate_config(config_path, overrides):
    """Check a configuration file and print the resolved budget."""
    cfg, _ = _load(config_path, overrides)
    click.echo(f"ok: mode={cfg.mode} d={cfg.space.dim} total_budget={cfg.total_budget}")


@main.command()
@click.argument("config_path", type=click.Path(dir_okay=False))
@click.option("--set", "overrides", multiple=True, help="Override a dot-path key, e.g. budget.rounds=5.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default="runs/latest", show_default=True)
def run(config_path, overrides, out_dir):
    """Execute a run, streaming the log to OUT/run.jsonl and writing OUT/report.json."""
    cfg, raw = _load(config_path, overrides)
    out = Path(out_dir)
    try:
        timestamps = bool((raw.get("log") or {}).get("timestamps", True))
    except AttributeError:
        _fail("log: expected a mapping", EXIT_CONFIG)
    log_path = out / "run.jsonl"
    if log_path.exists():
        _fail(f"{log_path} already exists; choose another --out", EXIT_CONFIG)
    try:
        # fail fast on configuration problems before any budget is spent
        runner = Runner(cfg)
    except (ConfigurationError, EvaluatorUnavailable, TemplateError, ValueError) as exc:
        _fail(str(exc), EXIT_CONFIG)
    with RunLogWriter(log_path, timestamps=timestamps) as writer:
        runner.on_event = writer.write
        try:
            result = runner.run()
        except Exception as exc:  # partial log stays on disk
            logger.debug("run aborted", exc_info=True)
            _fail(f"run aborted after {len(runner.records)} evaluations: {exc}", EXIT_RUNTIME)
    write_report(result.report, out / "report.json")
    click.echo(format_table(result.report.table_row()), nl=False)
    click.echo(f"log: {log_path}  report: {out / 'report.json'}")


def _read(log_path) -> ParsedLog:
    try:
        log = read_log(log_path)
    except (OSError, LogError) as exc:
        _fail(str(exc), EXIT_CONFIG)
    for w in log.warnings:
        click.echo(f"warning: {w}", err=True)
    return log


@main.command()
@click.argument("log_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--k", type=int, default=None, help="Top-k size (default from the run config).")
@click.option("--min-cluster-size", type=int, default=None)
@click.option("--min-samples", type=int, default=None)
@click.option("--exclude-seed", is_flag=True, help="Leave the seeding steps out of the regret average.")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None,
              help="Report file (default: report.json next to the log).")
def report(log_path, k, min_cluster_size, min_samples, exclude_seed, out_path):
    """Recompute the metrics report from a run log alone."""
    log = _read(log_path)
    rep = report_from_log(log, k, min_cluster_size, min_samples, False if exclude_seed else None)
    out = Path(out_path) if out_path else Path(log_path).with_name("report.json")
    write_report(rep, out, log.warnings)
    click.echo(format_table(rep.table_row()), nl=False)


def _fmt(v: float) -> str:
    return repr(float(v))


@main.command("export-cloud")
@click.argument("log_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None,
              help="CSV file (default: cloud.csv next to the log).")
def export_cloud(log_path, out_path):
    """Write every attempted design in normalized coordinates as CSV."""
    log = _read(log_path)
    cfg = parse_config(log.snapshot["config"])
    out = Path(out_path) if out_path else Path(log_path).with_name("cloud.csv")
    records = log.records()
    with out.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "round", *cfg.space.names, "fom", "sim_valid", "phys_feasible"])
        for r in records:
            z = np.clip(cfg.space.to_unit(r.point.values), 0.0, 1.0)
            w.writerow([r.step, r.round, *map(_fmt, z), "" if r.fom is None else _fmt(r.fom),
                        int(r.meas.sim_valid), int(r.phys_feasible)])
    click.echo(f"{len(records)} rows -> {out}")


def _close(a, b) -> bool:
    if a is None or b is None:
        return a is b
    return math.isclose(a, b, rel_tol=REPLAY_TOL, abs_tol=REPLAY_TOL)


def first_divergence(old_events: list[dict], new_payloads: list[dict]):
    """(seq, reason) of the first eval that differs, or None."""
    for ev, new in zip(old_events, new_payloads):
        old = ev["payload"]
        if old["step"] != new["step"] or len(old["values"]) != len(new["values"]):
            return ev["seq"], f"step {old['step']}: structure differs"
        if not all(_close(a, b) for a, b in zip(old["values"], new["values"])):
            return ev["seq"], f"step {old['step']}: design point differs"
        if not _close(old["fom"], new["fom"]):
            return ev["seq"], f"step {old['step']}: fom differs ({old['fom']} vs {new['fom']})"
    if len(old_events) != len(new_payloads):
        seq = old_events[len(new_payloads)]["seq"] if len(old_events) > len(new_payloads) else None
        return seq, f"evaluation count differs ({len(old_events)} logged vs {len(new_payloads)} replayed)"
    return None


@main.command()
@click.argument("log_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("config_path", type=click.Path(dir_okay=False))
@click.option("--set", "overrides", multiple=True)
def replay(log_path, config_path, overrides):
    """Re-execute a deterministic run and compare it with its log."""
    log = _read(log_path)
    if not log.snapshot.get("replayable", False):
        _fail("non-replayable stack: the logged run used an LLM agent or an external simulator", EXIT_CONFIG)
    cfg, _ = _load(config_path, overrides)
    if not is_replayable(cfg):
        _fail("non-replayable stack: the config uses an LLM agent or an external simulator", EXIT_CONFIG)
    new = []
    runner = Runner(cfg, on_event=lambda kind, p: new.append(p) if kind in ("seed_eval", "eval") else None)
    runner.run()
    div = first_divergence(log.eval_events(), new)
    if div is not None:
        seq, reason = div
        click.echo(f"diverged at sequence {seq}: {reason}", err=True)
        sys.exit(EXIT_DIVERGED)
    click.echo(f"replay identical: {len(new)} evaluations")


if __name__ == "__main__":
    main()
