"""Command-line surface: simulate, detect, evaluate, run.

Exit codes: 0 success, 2 usage/validation problems (bad config or input
schema), 3 I/O failures.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import replace
from pathlib import Path

from . import __version__
from .config import ConfigError, DEFAULT_CONFIG_TOML, default_config, load_config
from .heatmap import heatmap_to_pgm
from .pipeline import run_detection
from .preprocess import registry_as_json
from .relations import rank_mrs
from .simulate import run_simulation
from .traceio import (
    SchemaError,
    read_ground_truth_json,
    read_positions_csv,
    read_trace_csv,
    read_verdicts_json,
    trace_run_id,
    write_ground_truth_json,
    write_heatmap_csv,
    write_localization_json,
    write_manifest_json,
    write_metrics_csv,
    write_positions_csv,
    write_ranking_json,
    write_trace_csv,
    write_verdicts_json,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _load_configs(args):
    if getattr(args, "config", None):
        try:
            scenario, params = load_config(args.config)
        except OSError as exc:
            raise CliError(f"cannot read config: {exc}", EXIT_IO) from exc
        except ConfigError as exc:
            raise CliError(f"invalid config: {exc}", EXIT_USAGE) from exc
    else:
        scenario, params = default_config()
    if getattr(args, "seed", None) is not None:
        scenario = replace(scenario, seed=args.seed)
    for attr, key in (
        ("window_s", "window_s"),
        ("tau", "tau"),
        ("alpha", "alpha"),
        ("corr", "correlation"),
        ("parallel", "parallel"),
    ):
        value = getattr(args, attr, None)
        if value is not None:
            params = replace(params, **{key: value})
    if getattr(args, "no_spline", False):
        params = replace(params, spline=False)
    try:
        scenario.validate()
        params.validate()
    except ValueError as exc:
        raise CliError(f"invalid configuration: {exc}", EXIT_USAGE) from exc
    return scenario, params


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(f"cannot create output directory: {exc}", EXIT_IO) from exc
    return out


def _manifest(args, out: Path, scenario, artifacts: dict, started: float) -> None:
    """Write out/manifest.json, merging artifacts from earlier stages."""
    path = out / "manifest.json"
    merged: dict = {}
    if path.exists():
        try:
            merged = json.loads(path.read_text()).get("artifacts", {})
        except (OSError, ValueError):
            merged = {}
    merged.update({k: str(v) for k, v in artifacts.items()})
    doc = {
        "tool": "uavlink",
        "version": __version__,
        "config": getattr(args, "config", None),
        "seed": scenario.seed if scenario else None,
        "out_dir": str(out),
        "artifacts": merged,
        "wall_clock_s": round(time.monotonic() - started, 3),
    }
    write_manifest_json(doc, path)


def cmd_simulate(args) -> int:
    started = time.monotonic()
    scenario, _ = _load_configs(args)
    out = _out_dir(args)
    result = run_simulation(scenario)
    artifacts = {
        "trace": out / "trace.csv",
        "positions": out / "positions.csv",
        "ground_truth": out / "ground_truth.json",
    }
    try:
        run_id = write_trace_csv(result.records, artifacts["trace"])
        write_positions_csv(result.position_times, result.positions, artifacts["positions"])
        write_ground_truth_json(result.ground_truth, run_id, artifacts["ground_truth"])
        _manifest(args, out, scenario, artifacts, started)
    except OSError as exc:
        raise CliError(f"write failed: {exc}", EXIT_IO) from exc
    print(f"simulate: {len(result.records)} trace records -> {out} (run {run_id})")
    return EXIT_OK


def cmd_detect(args) -> int:
    started = time.monotonic()
    scenario, params = _load_configs(args)
    out = _out_dir(args)
    try:
        records = read_trace_csv(args.trace)
        pos_times, positions = read_positions_csv(args.positions)
        run_id = trace_run_id(args.trace)
    except OSError as exc:
        raise CliError(f"cannot read inputs: {exc}", EXIT_IO) from exc
    except SchemaError as exc:
        raise CliError(str(exc), EXIT_USAGE) from exc

    detection = run_detection(
        records,
        pos_times,
        positions,
        params,
        packet_bytes=scenario.packet_bytes,
        queue_capacity=scenario.queue_capacity,
    )
    artifacts = {
        "metrics": out / "metrics.csv",
        "verdicts": out / "verdicts.json",
        "heatmap_csv": out / f"heatmap_{params.localize_metric}.csv",
        "heatmap_pgm": out / f"heatmap_{params.localize_metric}.pgm",
        "localization": out / "localization.json",
        "metric_registry": out / "metric_registry.json",
    }
    try:
        write_metrics_csv(detection.windows, artifacts["metrics"])
        param_doc = {
            "correlation": params.correlation,
            "window_len": params.window_len,
            "step": params.step,
            "tau": params.tau,
            "alpha": params.alpha,
            "window_s": params.window_s,
            "spline": params.spline,
        }
        write_verdicts_json(detection.verdicts, run_id, param_doc, artifacts["verdicts"])
        write_heatmap_csv(detection.heatmap, artifacts["heatmap_csv"])
        with open(artifacts["heatmap_pgm"], "wb") as fh:
            fh.write(heatmap_to_pgm(detection.heatmap))
        write_localization_json(detection.localization, artifacts["localization"])
        with open(artifacts["metric_registry"], "w") as fh:
            fh.write(registry_as_json())
        _manifest(args, out, scenario, artifacts, started)
    except OSError as exc:
        raise CliError(f"write failed: {exc}", EXIT_IO) from exc

    n_viol = sum(1 for v in detection.verdicts if v.violated)
    loc = detection.localization
    where = "no anomaly localized" if loc is None else (
        f"link {loc.link[0]}->{loc.link[1]} (node {loc.node}) at t={loc.onset_s:.1f}s"
    )
    print(f"detect: {n_viol} violating windows; {where} -> {out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    started = time.monotonic()
    out = _out_dir(args)
    try:
        verdicts, verdict_run = read_verdicts_json(args.verdicts)
        truth, truth_run = read_ground_truth_json(args.truth)
    except OSError as exc:
        raise CliError(f"cannot read inputs: {exc}", EXIT_IO) from exc
    except (SchemaError, KeyError, ValueError) as exc:
        raise CliError(f"invalid input: {exc}", EXIT_USAGE) from exc
    if verdict_run and truth_run and verdict_run != truth_run:
        raise CliError(
            f"run identifiers differ: verdicts {verdict_run!r} vs truth {truth_run!r}",
            EXIT_USAGE,
        )
    ranking = rank_mrs(verdicts, truth, grace_s=args.grace_s)
    artifacts = {"ranking": out / "ranking.json", "report": out / "report.txt"}
    lines = [f"{'MR':<5} {'precision':>10} {'recall':>8} {'mean delay s':>13} {'TP':>6} {'FP':>6}"]
    for p in ranking:
        lines.append(
            f"{p.mr:<5} "
            f"{'-' if p.precision is None else f'{p.precision:.3f}':>10} "
            f"{'-' if p.recall is None else f'{p.recall:.3f}':>8} "
            f"{'-' if p.mean_delay_s is None else f'{p.mean_delay_s:.1f}':>13} "
            f"{p.true_positives:>6} {p.false_positives:>6}"
        )
    detected = [p for p in ranking if p.recall]
    if detected:
        best = detected[0]
        lines.append(
            f"best relation: {best.mr} "
            f"(recall {best.recall:.2f}, mean delay {best.mean_delay_s:.1f} s)"
        )
    else:
        lines.append("best relation: none (no event detected)")
    report = "\n".join(lines) + "\n"
    try:
        write_ranking_json(ranking, artifacts["ranking"])
        with open(artifacts["report"], "w") as fh:
            fh.write(report)
        _manifest(args, out, None, artifacts, started)
    except OSError as exc:
        raise CliError(f"write failed: {exc}", EXIT_IO) from exc
    print(report, end="")
    return EXIT_OK


def cmd_run(args) -> int:
    out = _out_dir(args)
    rc = cmd_simulate(args)
    if rc != EXIT_OK:
        return rc
    args.trace = str(out / "trace.csv")
    args.positions = str(out / "positions.csv")
    rc = cmd_detect(args)
    if rc != EXIT_OK:
        return rc
    args.verdicts = str(out / "verdicts.json")
    args.truth = str(out / "ground_truth.json")
    return cmd_evaluate(args)


def cmd_print_config(_args) -> int:
    print(DEFAULT_CONFIG_TOML, end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uavlink",
        description="UAV chain network simulator and link anomaly detector",
    )
    parser.add_argument("--version", action="version", version=f"uavlink {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, detect_flags=True):
        p.add_argument("--config", help="scenario TOML (defaults to the built-in scenario)")
        p.add_argument("--seed", type=int, help="override the scenario seed")
        p.add_argument("--out-dir", default="out", help="output directory")
        if detect_flags:
            p.add_argument("--window-s", type=float, dest="window_s")
            p.add_argument("--tau", type=float)
            p.add_argument("--alpha", type=float)
            p.add_argument("--corr", choices=["spearman", "pearson"])
            p.add_argument("--no-spline", action="store_true", dest="no_spline")
            p.add_argument("--parallel", type=int, metavar="N")

    p = sub.add_parser("simulate", help="run the scenario and write trace artifacts")
    common(p, detect_flags=False)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("detect", help="run anomaly detection over a trace")
    common(p)
    p.add_argument("--trace", required=True, help="trace CSV")
    p.add_argument("--positions", required=True, help="positions CSV")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("evaluate", help="score verdicts against ground truth")
    p.add_argument("--verdicts", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--out-dir", default="out")
    p.add_argument("--grace-s", type=float, default=5.0, dest="grace_s")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("run", help="simulate, detect and evaluate in one go")
    common(p)
    p.add_argument("--grace-s", type=float, default=5.0, dest="grace_s")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("print-config", help="print the default scenario TOML")
    p.set_defaults(func=cmd_print_config)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
