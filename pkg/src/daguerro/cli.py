"""Command-line experiment runner.

Subcommands
-----------
generate  write ``X.csv``, ``truth.edgelist`` and ``meta.json`` for a
          synthetic problem
fit       train on a data directory; write ``adjacency.edgelist``,
          ``weights.csv``, ``theta.csv``, ``trace.jsonl`` and ``result.json``
eval      compare an estimated graph against a truth edge list, print JSON
sweep     run a grid of configs x seeds, aggregate metrics into a CSV

File formats
------------
``X.csv``           comma-separated, UTF-8, dot decimals; the first row is a
                    header of column names, each following row one observation
``*.edgelist``      one ``src,dst`` directed edge per line, 0-based indices
``weights.csv``     d x d float matrix, comma-separated, no header
``theta.csv``       a single comma-separated row of d floats
``meta.json`` / ``result.json``  versioned JSON records (``schema`` field)
``trace.jsonl``     one JSON record per outer iteration

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
failure.  ``DAGUERRO_THREADS`` caps the sweep worker pool.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import statistics
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import datagen, learner, metrics, sem
from .errors import ConfigError, DataError, NumericError

RESULT_SCHEMA = "daguerro-result-v1"
META_SCHEMA = "daguerro-data-v1"

FAMILY_FLAGS = {
    "er": datagen.ERDOS_RENYI,
    "sf": datagen.SCALE_FREE,
    "bp": datagen.BIPARTITE,
}
OPERATOR_FLAGS = {"sparsemax": "topk_sparsemax", "sparsemap": "sparsemap"}
ESTIMATOR_FLAGS = {"l0": sem.LINEAR_L0, "lars": sem.LARS}
LOSS_FLAGS = {"ev": learner.EV_GAUSSIAN, "mse": learner.MSE}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="daguerro", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a synthetic dataset")
    gen.add_argument("--family", choices=sorted(FAMILY_FLAGS), required=True)
    gen.add_argument("--d", type=int, required=True)
    gen.add_argument("--edges", type=int, required=True)
    gen.add_argument("--sem", choices=sorted(datagen.SEM_KINDS), default=datagen.GAUSS_EV)
    gen.add_argument("--n", type=int, default=1000)
    gen.add_argument("--noise-scale", type=float, default=1.0)
    gen.add_argument("--w-min", type=float, default=0.5)
    gen.add_argument("--w-max", type=float, default=2.0)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)

    fit = sub.add_parser("fit", help="train on a data directory")
    fit.add_argument("--data", required=True, help="directory with X.csv (truth.edgelist optional)")
    fit.add_argument("--out", default=None, help="output directory (default: the data directory)")
    _add_config_flags(fit)

    ev = sub.add_parser("eval", help="score an estimate against a truth edge list")
    ev.add_argument("--est", required=True, help="adjacency .edgelist or weights .csv")
    ev.add_argument("--truth", required=True, help="truth .edgelist")
    ev.add_argument("--d", type=int, default=None)
    ev.add_argument(
        "--postprocess",
        type=float,
        default=None,
        metavar="THRESH",
        help="threshold weights and break cycles before scoring (needs a weights .csv)",
    )

    sw = sub.add_parser("sweep", help="run a grid of configs x seeds")
    sw.add_argument("--grid", required=True, help="JSON grid file")
    sw.add_argument("--out", required=True, help="aggregate CSV path")
    sw.add_argument("--workdir", default=None, help="where per-run files go")
    return parser


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--operator", choices=sorted(OPERATOR_FLAGS), default="sparsemax")
    p.add_argument("--k", type=int, default=100, help="support size / active-set iterations")
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--lambda", dest="lam", type=float, default=0.01, help="sparsity strength")
    p.add_argument("--l2", type=float, default=5e-4, help="l2 strength on scores and weights")
    p.add_argument("--lr-outer", type=float, default=0.05)
    p.add_argument("--lr-inner", type=float, default=0.01)
    p.add_argument("--max-outer", type=int, default=5000)
    p.add_argument("--max-inner", type=int, default=1000)
    p.add_argument("--estimator", choices=sorted(ESTIMATOR_FLAGS), default="l0")
    p.add_argument("--regime", choices=[learner.JOINT, learner.BILEVEL], default=learner.BILEVEL)
    p.add_argument("--theta-init", choices=[learner.ZEROS, learner.VARIANCES],
                   default=learner.VARIANCES)
    p.add_argument("--loss", choices=sorted(LOSS_FLAGS), default="ev")
    p.add_argument("--seed", type=int, default=0)


def _config_from_flags(flags: dict) -> learner.LearnerConfig:
    return learner.LearnerConfig(
        operator=OPERATOR_FLAGS[flags.get("operator", "sparsemax")],
        k_or_iters=int(flags.get("k", 100)),
        tau=float(flags.get("tau", 1.0)),
        lam=float(flags.get("lam", flags.get("lambda", 0.01))),
        l2_theta=float(flags.get("l2", 5e-4)),
        l2_phi=float(flags.get("l2", 5e-4)),
        lr_outer=float(flags.get("lr_outer", 0.05)),
        lr_inner=float(flags.get("lr_inner", 0.01)),
        max_outer=int(flags.get("max_outer", 5000)),
        max_inner=int(flags.get("max_inner", 1000)),
        estimator=ESTIMATOR_FLAGS[flags.get("estimator", "l0")],
        regime=flags.get("regime", learner.BILEVEL),
        theta_init=flags.get("theta_init", learner.VARIANCES),
        loss=LOSS_FLAGS[flags.get("loss", "ev")],
        seed=int(flags.get("seed", 0)),
    )


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_generate(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    gspec = datagen.GraphSpec(FAMILY_FLAGS[args.family], args.d, args.edges, seed=args.seed)
    sspec = datagen.SemSpec(
        kind=args.sem,
        weight_range=(args.w_min, args.w_max),
        noise_scale=args.noise_scale,
        n=args.n,
        seed=args.seed,
    )
    A, _ = datagen.sample_dag(gspec)
    data = datagen.sample_data(A, sspec)
    datagen.save_csv(out / "X.csv", data.X)
    datagen.save_edgelist(out / "truth.edgelist", A)
    _write_json(
        out / "meta.json",
        {
            "schema": META_SCHEMA,
            "seed": args.seed,
            "family": gspec.family,
            "d": gspec.d,
            "expected_edges": gspec.expected_edges,
            "sem": sspec.kind,
            "n": sspec.n,
            "noise_scale": sspec.noise_scale,
            "weight_range": list(sspec.weight_range),
        },
    )
    print(f"wrote {out / 'X.csv'}, {out / 'truth.edgelist'}, {out / 'meta.json'}")
    return 0


def _run_fit(data_dir: Path, out_dir: Path, config: learner.LearnerConfig) -> dict:
    dataset = datagen.load_csv(data_dir / "X.csv")
    truth_path = data_dir / "truth.edgelist"
    truth = datagen.load_edgelist(truth_path, d=dataset.d) if truth_path.exists() else None
    started = time.perf_counter()
    graph, result = learner.fit(dataset, config)
    seconds = time.perf_counter() - started
    out_dir.mkdir(parents=True, exist_ok=True)
    datagen.save_edgelist(out_dir / "adjacency.edgelist", graph.A)
    with open(out_dir / "weights.csv", "w", encoding="utf-8") as fh:
        for row in graph.W:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
    with open(out_dir / "theta.csv", "w", encoding="utf-8") as fh:
        fh.write(",".join(f"{v:.17g}" for v in result.theta) + "\n")
    result.trace.to_jsonl(out_dir / "trace.jsonl")
    record = {
        "schema": RESULT_SCHEMA,
        "config": {k: getattr(config, k) for k in config.__dataclass_fields__},
        "seed": config.seed,
        "metrics": _metric_dict(graph.A, truth),
        "seconds": seconds,
        "adjacency": [[int(i), int(j)] for i, j in zip(*np.nonzero(graph.A))],
        "mode_permutation": list(map(int, result.trace.records[-1].mode_order))
        if result.trace.records
        else [],
        "trace_summary": {
            "iterations": result.trace.iterations,
            "final_loss": result.trace.final_loss(),
            "support_size": result.trace.records[-1].support_size
            if result.trace.records
            else 0,
            "stop_reason": result.trace.stop_reason,
            "trace_hash": result.trace.hash(),
        },
    }
    _write_json(out_dir / "result.json", record)
    return record


def _metric_dict(A_est: np.ndarray, truth: np.ndarray | None) -> dict:
    out = {"edges": int(A_est.sum())}
    if truth is not None:
        out["shd"] = metrics.shd(A_est, truth)
        out["sid"] = metrics.sid(A_est, truth)
        out["f1"] = metrics.f1(A_est, truth)
    return out


def cmd_fit(args) -> int:
    data_dir = Path(args.data)
    out_dir = Path(args.out) if args.out else data_dir
    config = _config_from_flags(vars(args))
    record = _run_fit(data_dir, out_dir, config)
    print(json.dumps(record["metrics"]))
    return 0


def _load_est(path: Path, d: int | None):
    """Estimate file: .csv means a weight matrix, anything else an edge list."""
    if path.suffix == ".csv":
        W = np.loadtxt(path, delimiter=",", ndmin=2)
        if W.ndim != 2 or W.shape[0] != W.shape[1]:
            raise DataError(f"{path}: expected a square weight matrix")
        return W
    return datagen.load_edgelist(path, d=d)


def cmd_eval(args) -> int:
    est_path, truth_path = Path(args.est), Path(args.truth)
    est = _load_est(est_path, args.d)
    if args.postprocess is not None:
        est = learner.postprocess_threshold(est, args.postprocess).A
    else:
        est = (np.asarray(est) != 0).astype(int)
        if not sem.is_acyclic(est):
            raise DataError(
                f"{est_path}: estimate contains a cycle; pass --postprocess THRESH to break it"
            )
    d = est.shape[0] if args.d is None else args.d
    truth = datagen.load_edgelist(truth_path, d=d)
    print(json.dumps(_metric_dict(est, truth)))
    return 0


def _sweep_task(task: dict) -> dict:
    """One (config, seed) run; returns a flat metric row (picklable)."""
    row = {"config": task["name"], "seed": task["seed"], "error": ""}
    try:
        run_dir = Path(task["dir"])
        data_dir = run_dir / "data"
        gen_args = argparse.Namespace(**task["generate"], out=str(data_dir))
        cmd_generate(gen_args)
        config = _config_from_flags({**task["flags"], "seed": task["seed"]})
        record = _run_fit(data_dir, run_dir, config)
        row.update(record["metrics"])
        row["seconds"] = record["seconds"]
    except Exception as exc:  # recorded per-row, the sweep continues
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


def _aggregate(rows: list[dict], metric_names: list[str]) -> list[dict]:
    grouped: dict[str, list[dict]] = {}
    for row in rows:
        grouped.setdefault(row["config"], []).append(row)
    out = []
    for name in sorted(grouped):
        ok = [r for r in grouped[name] if not r["error"]]
        for stat, fn in (
            ("mean", statistics.fmean),
            ("std", lambda v: statistics.pstdev(v) if len(v) > 1 else 0.0),
            ("median", statistics.median),
        ):
            agg = {"config": name, "statistic": stat, "runs": len(grouped[name]),
                   "failures": len(grouped[name]) - len(ok)}
            for m in metric_names:
                values = [r[m] for r in ok if m in r]
                agg[m] = fn(values) if values else math.nan
            out.append(agg)
    return out


def cmd_sweep(args) -> int:
    with open(args.grid, encoding="utf-8") as fh:
        try:
            grid = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{args.grid}: invalid JSON ({exc})") from None
    for key in ("data", "configs", "seeds"):
        if key not in grid:
            raise ConfigError(f"{args.grid}: missing {key!r}")
    out_path = Path(args.out)
    workdir = Path(args.workdir) if args.workdir else out_path.parent / (out_path.stem + ".runs")
    tasks = []
    for cfg in grid["configs"]:
        if "name" not in cfg:
            raise ConfigError("every sweep config needs a 'name'")
        flags = {k: v for k, v in cfg.items() if k != "name"}
        for seed in grid["seeds"]:
            gen = dict(grid["data"])
            gen.setdefault("noise_scale", 1.0)
            gen.setdefault("w_min", 0.5)
            gen.setdefault("w_max", 2.0)
            gen["family"] = gen.get("family", "er")
            gen["seed"] = int(seed)
            tasks.append(
                {
                    "name": cfg["name"],
                    "seed": int(seed),
                    "flags": flags,
                    "generate": gen,
                    "dir": str(workdir / cfg["name"] / f"seed{seed}"),
                }
            )
    workers = int(os.environ.get("DAGUERRO_THREADS", os.cpu_count() or 1))
    workers = max(1, min(workers, len(tasks)))
    if workers == 1:
        rows = [_sweep_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_task, tasks))
    rows.sort(key=lambda r: (r["config"], r["seed"]))
    metric_names = ["shd", "sid", "f1", "edges", "seconds"]
    agg = _aggregate(rows, metric_names)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    runs_path = out_path.with_suffix(".runs.csv")
    with open(runs_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=["config", "seed", *metric_names, "error"],
                                extrasaction="ignore")
        writer.writeheader()
        writer.writerows(rows)
    with open(out_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(
            fh, fieldnames=["config", "statistic", "runs", "failures", *metric_names]
        )
        writer.writeheader()
        writer.writerows(agg)
    print(f"wrote {out_path} and {runs_path}")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "generate": cmd_generate,
        "fit": cmd_fit,
        "eval": cmd_eval,
        "sweep": cmd_sweep,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
