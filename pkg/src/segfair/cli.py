"""Batch command-line surface: entropy | gradcheck | synth | train | experiment | report.

Every command is deterministic given its inputs; CSV outputs are
byte-identical across reruns with the same config and seed (wall-clock
timings go to a separate JSON, never into CSV).  Exit codes: 0 success,
1 runtime or domain error, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import (
    DataError,
    DatasetManifest,
    SynthSpec,
    generate_synthetic,
    load_dataset,
    random_weighted_graph,
    save_graph,
)
from .entropy import EntropyDomainError, se_gradient, se_gradient_fd, two_dim_se
from .fairness import UndefinedRateError
from .graph import GraphError, partition_by_sensitive
from .model import save_checkpoint
from .training import (
    METRIC_COLUMNS,
    VARIANT_PRESETS,
    ConfigError,
    MetricsReport,
    TrainConfig,
    TrainingError,
    fit,
)

OUT_ROOT_ENV = "SEGFAIR_OUT"

# Entrywise pass rule for the gradient harness: relative below the small-value
# threshold switches to an absolute comparison (FD noise floor).
GRAD_REL_TOL = 1e-5
GRAD_SMALL = 1e-6
GRAD_ABS_TOL = 1e-8


@dataclass(frozen=True)
class RunRecord:
    """One training run as emitted into the experiment CSV."""

    variant: str
    seed: int
    config_hash: str
    report: MetricsReport

    def csv_row(self) -> str:
        return f"{self.variant},{self.seed},{self.config_hash},{self.report.csv_row()}"

    @staticmethod
    def csv_header() -> str:
        return f"variant,seed,config_hash,{MetricsReport.csv_header()}"


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (GraphError, EntropyDomainError, DataError, TrainingError, UndefinedRateError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="segfair",
        description="Fair graph learning via partition structural-entropy maximization",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("entropy", help="partition entropy report for a graph directory")
    p.add_argument("--graph", required=True, help="directory with edges.txt and nodes.csv")
    p.add_argument("--sensitive-col", default="sensitive")
    p.add_argument("--format", choices=("csv", "text"), default="text")
    p.set_defaults(func=cmd_entropy)

    p = sub.add_parser("gradcheck", help="analytic-vs-finite-difference gradient suite")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--inject-fault", choices=("sign-flip",), help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("synth", help="generate a synthetic biased graph directory")
    p.add_argument("--spec", help="JSON file of generator parameters (defaults otherwise)")
    p.add_argument("--seed", type=int, help="override the spec seed")
    p.add_argument("--out", required=True, help="output graph directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="run one training config; writes a run directory")
    p.add_argument("--config", required=True, help="JSON with 'data' and 'train' sections")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", help=f"run directory (default under ${OUT_ROOT_ENV} or ./runs)")
    p.add_argument("--format", choices=("csv", "text"), default="text")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("experiment", help="multi-seed, multi-variant runs with aggregation")
    p.add_argument("--config", required=True, help="JSON with data/train/variants/seeds")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("report", help="aggregate a runs.csv written by `experiment`")
    p.add_argument("--runs", required=True, help="runs.csv path")
    p.add_argument("--format", choices=("csv", "text"), default="text")
    p.set_defaults(func=cmd_report)
    return parser


# -- entropy -------------------------------------------------------------


def cmd_entropy(args) -> int:
    graph_dir = Path(args.graph)
    node_file = graph_dir / "nodes.csv"
    if not node_file.exists():
        print(f"usage error: {node_file} not found", file=sys.stderr)
        return 2
    with open(node_file, newline="") as f:
        header = next(csv.reader(f))
    if args.sensitive_col not in header:
        print(
            f"usage error: column {args.sensitive_col!r} not in {node_file} header {header}",
            file=sys.stderr,
        )
        return 2
    manifest = DatasetManifest(
        name=str(graph_dir),
        label_column="label" if "label" in header else None,
        sensitive_column=args.sensitive_col,
    )
    g = load_dataset(manifest, base_dir=graph_dir)
    report = two_dim_se(g, partition_by_sensitive(g))
    pairs = [(k, getattr(report, k)) for k in ("h", "intra_term", "inter_term", "h_max", "gap")]
    if args.format == "csv":
        print(",".join(k for k, _ in pairs))
        print(",".join(f"{v:.12g}" for _, v in pairs))
    else:
        for k, v in pairs:
            print(f"{k:<12}{v:.12g}")
    return 0


# -- gradcheck -----------------------------------------------------------


def grad_errors(analytic: np.ndarray, fd: np.ndarray) -> tuple[float, float]:
    """(max relative error on normal entries, max absolute error on small ones)."""
    err = np.abs(analytic - fd)
    small = np.abs(analytic) < GRAD_SMALL
    denom = np.maximum(np.abs(analytic), np.abs(fd))
    max_rel = float((err[~small] / denom[~small]).max()) if (~small).any() else 0.0
    max_small = float(err[small].max()) if small.any() else 0.0
    return max_rel, max_small


def cmd_gradcheck(args) -> int:
    if args.trials <= 0:
        print("usage error: --trials must be positive", file=sys.stderr)
        return 2
    rng = np.random.default_rng(args.seed)
    max_rel = 0.0
    max_small = 0.0
    n_edges = 0
    for _ in range(args.trials):
        g = random_weighted_graph(rng)
        p = partition_by_sensitive(g)
        analytic = se_gradient(g, p).per_edge
        if args.inject_fault == "sign-flip":
            analytic = -analytic
        fd = se_gradient_fd(g, p, eps=1e-5).per_edge
        rel, small = grad_errors(analytic, fd)
        max_rel = max(max_rel, rel)
        max_small = max(max_small, small)
        n_edges += g.m
    ok = max_rel <= GRAD_REL_TOL and max_small <= GRAD_ABS_TOL
    print(
        f"trials={args.trials} edges={n_edges}"
        f" max_rel_error={max_rel:.3e} max_small_abs_error={max_small:.3e}"
        f" -> {'PASS' if ok else 'FAIL'}"
    )
    return 0 if ok else 1


# -- synth ---------------------------------------------------------------


def cmd_synth(args) -> int:
    if args.spec:
        try:
            blob = json.loads(Path(args.spec).read_text())
        except FileNotFoundError:
            raise DataError(f"spec file not found: {args.spec}")
        except json.JSONDecodeError as e:
            raise DataError(f"spec {args.spec} is not valid JSON: {e}")
        spec = SynthSpec.from_dict(blob)
    else:
        spec = SynthSpec()
    if args.seed is not None:
        spec = SynthSpec.from_dict({**spec.to_dict(), "seed": args.seed})
    g = generate_synthetic(spec)
    out = Path(args.out)
    save_graph(out, g)
    (out / "synth_spec.json").write_text(json.dumps(spec.to_dict(), indent=2, sort_keys=True) + "\n")
    pos = float(g.labels.mean())
    print(f"wrote {out}: n={g.n} edges={g.m} positive_ratio={pos:.4f}")
    return 0


# -- train ---------------------------------------------------------------


def _load_run_config(path) -> tuple[dict, TrainConfig]:
    try:
        blob = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"config {path} is not valid JSON: {e}")
    if "data" not in blob:
        raise ConfigError("config needs a 'data' section (graph_dir or synthetic)")
    cfg = TrainConfig.from_dict(blob.get("train", {}))
    return blob, cfg


def _load_graph_from_config(blob: dict, config_dir: Path):
    data = blob["data"]
    if "graph_dir" in data:
        manifest = DatasetManifest(
            name=data["graph_dir"],
            label_column=data.get("label_column", "label"),
            sensitive_column=data.get("sensitive_column", "sensitive"),
        )
        return load_dataset(manifest, base_dir=config_dir / data["graph_dir"])
    if "synthetic" in data:
        return generate_synthetic(SynthSpec.from_dict(data["synthetic"]))
    raise ConfigError("data section needs 'graph_dir' or 'synthetic'")


def _default_out_dir(kind: str, name: str) -> Path:
    root = Path(os.environ.get(OUT_ROOT_ENV, "runs"))
    return root / f"{kind}-{name}"


def cmd_train(args) -> int:
    blob, cfg = _load_run_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_overrides(seed=args.seed)
    g = _load_graph_from_config(blob, Path(args.config).parent)
    out = Path(args.out) if args.out else _default_out_dir("train", f"{cfg.config_hash()}-s{cfg.seed}")
    out.mkdir(parents=True, exist_ok=True)

    started = time.perf_counter()
    state, report = fit(g, cfg)
    wall = time.perf_counter() - started

    (out / "config.json").write_text(
        json.dumps({"data": blob["data"], "train": cfg.to_dict()}, indent=2, sort_keys=True) + "\n"
    )
    with open(out / "epochs.csv", "w") as f:
        f.write("epoch,loss_task,loss_cont,loss_se,loss_total,h_learner,val_acc\n")
        for r in state.history:
            f.write(
                f"{r.epoch},{r.loss_task:.10g},{r.loss_cont:.10g},{r.loss_se:.10g},"
                f"{r.loss_total:.10g},{r.h_learner:.10g},{r.val_acc:.10g}\n"
            )
    with open(out / "metrics.csv", "w") as f:
        f.write(MetricsReport.csv_header() + "\n")
        f.write(report.csv_row() + "\n")
    save_checkpoint(out / "checkpoint.npz", state.params, state.anchor_weights, cfg.config_hash())
    (out / "run_info.json").write_text(
        json.dumps(
            {"config_hash": cfg.config_hash(), "seed": cfg.seed, "wall_seconds": wall,
             "best_epoch": state.best_epoch},
            indent=2,
            sort_keys=True,
        )
        + "\n"
    )
    if args.format == "csv":
        print(MetricsReport.csv_header())
        print(report.csv_row())
    else:
        width = max(len(c) for c in MetricsReport.csv_header().split(","))
        for name, cell in zip(MetricsReport.csv_header().split(","), report.csv_row().split(",")):
            print(f"{name:<{width + 2}}{cell}")
        print(f"run directory: {out}")
    return 0


# -- experiment / report ---------------------------------------------------


def cmd_experiment(args) -> int:
    blob, base_cfg = _load_run_config(args.config)
    seeds = blob.get("seeds", [0])
    variants = blob.get("variants", ["full"])
    unknown = [v for v in variants if v not in VARIANT_PRESETS]
    if unknown:
        raise ConfigError(f"unknown variants {unknown}; known: {sorted(VARIANT_PRESETS)}")
    if not seeds:
        raise ConfigError("seeds list is empty")
    g = _load_graph_from_config(blob, Path(args.config).parent)
    out = Path(args.out) if args.out else _default_out_dir("experiment", base_cfg.config_hash())
    out.mkdir(parents=True, exist_ok=True)

    records = []
    timings = {}
    for variant in variants:
        for seed in seeds:
            cfg = base_cfg.with_overrides(seed=int(seed), **VARIANT_PRESETS[variant])
            started = time.perf_counter()
            _, report = fit(g, cfg)
            timings[f"{variant}-s{seed}"] = time.perf_counter() - started
            records.append(RunRecord(variant, int(seed), cfg.config_hash(), report))

    with open(out / "runs.csv", "w") as f:
        f.write(RunRecord.csv_header() + "\n")
        for r in records:
            f.write(r.csv_row() + "\n")
    rows = _aggregate([_record_dict(r) for r in records])
    with open(out / "aggregate.csv", "w") as f:
        f.write(_aggregate_csv(rows))
    (out / "run_info.json").write_text(json.dumps(timings, indent=2, sort_keys=True) + "\n")
    print(_aggregate_text(rows))
    print(f"experiment directory: {out}")
    return 0


def _record_dict(r: RunRecord) -> dict:
    d = {"variant": r.variant, "seed": r.seed}
    for c in METRIC_COLUMNS:
        d[c] = getattr(r.report, c)
    d["h"] = r.report.h
    d["gap"] = r.report.gap
    return d


def cmd_report(args) -> int:
    path = Path(args.runs)
    if not path.exists():
        raise DataError(f"runs file not found: {path}")
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        raw = list(reader)
    if not raw:
        raise DataError(f"{path}: no data rows")
    rows = []
    for r in raw:
        d = {"variant": r["variant"], "seed": int(r["seed"])}
        for c in METRIC_COLUMNS:
            d[c] = float(r[c]) / 100.0  # stored as percent
        d["h"] = float(r["h"])
        d["gap"] = float(r["gap"])
        rows.append(d)
    agg = _aggregate(rows)
    if args.format == "csv":
        print(_aggregate_csv(agg), end="")
    else:
        print(_aggregate_text(agg))
    return 0


def format_mean_std(mean: float, std: float) -> str:
    """Percent, two decimals, std subscripted: ``75.71_{0.47}``."""
    return f"{mean * 100.0:.2f}_{{{std * 100.0:.2f}}}"


def _aggregate(rows: list[dict]) -> list[dict]:
    """Mean/std per variant, preserving first-seen variant order."""
    order = []
    groups: dict[str, list[dict]] = {}
    for r in rows:
        if r["variant"] not in groups:
            order.append(r["variant"])
            groups[r["variant"]] = []
        groups[r["variant"]].append(r)
    out = []
    for variant in order:
        rs = groups[variant]
        agg = {"variant": variant, "seeds": len(rs)}
        for c in METRIC_COLUMNS:
            vals = np.array([r[c] for r in rs])
            agg[c] = format_mean_std(float(vals.mean()), float(vals.std()))
        for c in ("h", "gap"):
            vals = np.array([r[c] for r in rs])
            agg[c] = f"{vals.mean():.4f}"
        out.append(agg)
    return out


_AGG_COLUMNS = ("variant", "seeds") + METRIC_COLUMNS + ("h", "gap")


def _aggregate_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    buf.write(",".join(_AGG_COLUMNS) + "\n")
    for r in rows:
        buf.write(",".join(str(r[c]) for c in _AGG_COLUMNS) + "\n")
    return buf.getvalue()


def _aggregate_text(rows: list[dict]) -> str:
    widths = {c: len(c) for c in _AGG_COLUMNS}
    for r in rows:
        for c in _AGG_COLUMNS:
            widths[c] = max(widths[c], len(str(r[c])))
    lines = ["  ".join(f"{c:<{widths[c]}}" for c in _AGG_COLUMNS)]
    for r in rows:
        lines.append("  ".join(f"{str(r[c]):<{widths[c]}}" for c in _AGG_COLUMNS))
    return "\n".join(lines)


if __name__ == "__main__":
    sys.exit(main())
