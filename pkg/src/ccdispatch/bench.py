"""Benchmark of the four reformulations against the trained proxy."""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import BenchConfig
from .dataset import Dataset, generate_dataset, load_dataset
from .metrics import objective_cost_rate, violation_rate
from .proxy.model import MlpWeights, proxy_forward, save_weights
from .proxy.reduce import EqualityPartition, equality_partition
from .proxy.train import (TrainConfig, choose_parameter, prepare_training_set, select_safety_parameter,
                          train, write_training_log)
from .qp import QpStatus
from .reformulations import MethodParams, solve_method
from .vpp import CompactProblem, assemble_compact

log = logging.getLogger(__name__)

SOLVER_METHODS = ("sa", "cvar", "ro", "pr")
ALL_METHODS = SOLVER_METHODS + ("proxy",)
RESULT_COLUMNS = ("datapoint_id", "method", "parameter", "objective", "build_s", "solve_s", "status")
SWEEP_COLUMNS = ("method", "parameter", "objective", "in_violation", "out_violation", "n_points", "n_failed")
REPORT_COLUMNS = ("method", "parameter", "objective", "objective_cost_rate", "in_violation", "out_violation",
                  "build_s", "solve_s", "mean_time_s", "proxy_speedup", "n_points", "n_not_optimal")


@dataclass
class PointResult:
    point_id: int
    method: str
    parameter: float | None
    u: np.ndarray
    objective: float
    build_s: float
    solve_s: float
    status: str
    in_violation: float
    out_violation: float
    timed: bool = False


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path, columns, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row.get(c)) for c in columns])


def method_params(method: str, parameter, cfg: BenchConfig) -> MethodParams:
    return MethodParams(epsilon=cfg.epsilon, s=parameter if method == "ro" else None,
                        p=parameter if method == "pr" else None, norm_mode=cfg.norm_mode)


def solve_point(method, parameter, pt, cp: CompactProblem, cfg: BenchConfig, repeats: int = 1) -> PointResult:
    res = solve_method(method, cp, pt.x, pt.in_scen, method_params(method, parameter, cfg), repeats=repeats)
    return PointResult(pt.point_id, method, parameter, res.u, res.objective, res.build_time, res.solve_time,
                       res.status.value, violation_rate(cp, res.u, pt.x, pt.in_scen),
                       violation_rate(cp, res.u, pt.x, pt.out_scen), repeats > 1)


def proxy_point(weights: MlpWeights, p, pt, cp, part: EqualityPartition, repeats: int = 1) -> PointResult:
    """Proxy inference, timed end to end (aggregation, interior point, network, gauge map)."""
    times = []
    for _ in range(max(1, repeats)):
        t0 = time.perf_counter()
        u, _ = proxy_forward(weights, cp, pt.x, pt.in_scen, p, part)
        times.append(time.perf_counter() - t0)
    return PointResult(pt.point_id, "proxy", p, u, cp.objective(u), 0.0, float(np.mean(times)),
                       QpStatus.OPTIMAL.value, violation_rate(cp, u, pt.x, pt.in_scen),
                       violation_rate(cp, u, pt.x, pt.out_scen), repeats > 1)


def sweep_method(method, grid, points, cp, cfg: BenchConfig, weights_by_p=None, part=None) -> list:
    """Mean objective and violations per grid value."""
    rows = []
    for value in grid:
        results = []
        for pt in points:
            if method == "proxy":
                results.append(proxy_point(weights_by_p[value], value, pt, cp, part))
            else:
                results.append(solve_point(method, value, pt, cp, cfg))
        ok = [r for r in results if r.status == QpStatus.OPTIMAL.value]
        rows.append({
            "method": method, "parameter": value,
            "objective": float(np.mean([r.objective for r in ok])) if ok else float("nan"),
            "in_violation": float(np.mean([r.in_violation for r in ok])) if ok else float("nan"),
            "out_violation": float(np.mean([r.out_violation for r in ok])) if ok else float("nan"),
            "n_points": len(results), "n_failed": len(results) - len(ok),
        })
    return rows


def select_solver_parameter(method, grid, points, cp, cfg: BenchConfig):
    """Smallest grid value whose mean out-sample training violation is within epsilon."""
    rows = sweep_method(method, grid, points, cp, cfg)
    value, ok = choose_parameter([r["parameter"] for r in rows], [r["out_violation"] for r in rows],
                                 [r["objective"] for r in rows], cfg.epsilon)
    if not ok:
        log.warning("%s: no value in %s meets epsilon=%s; using %s", method, list(grid), cfg.epsilon, value)
    return value, ok, rows


def summarize(results: list, method: str, sa_objective: dict) -> dict:
    ok = [r for r in results if r.status == QpStatus.OPTIMAL.value]
    timed = [r for r in results if r.timed] or results
    rates = [objective_cost_rate(r.objective, sa_objective[r.point_id]) for r in ok
             if r.point_id in sa_objective]
    build = float(np.mean([r.build_s for r in timed]))
    solve = float(np.mean([r.solve_s for r in timed]))
    return {
        "method": method,
        "parameter": results[0].parameter if results else None,
        "objective": float(np.mean([r.objective for r in ok])) if ok else float("nan"),
        "objective_cost_rate": float(np.mean(rates)) if rates else float("nan"),
        "in_violation": float(np.mean([r.in_violation for r in ok])) if ok else float("nan"),
        "out_violation": float(np.mean([r.out_violation for r in ok])) if ok else float("nan"),
        "build_s": build,
        "solve_s": solve,
        "mean_time_s": build + solve,
        "n_points": len(results),
        "n_not_optimal": len(results) - len(ok),
    }


def _ensure_dataset(cfg: BenchConfig, out_dir: Path) -> Dataset:
    root = out_dir / "dataset"
    if (root / "manifest.json").exists():
        stored = json.loads((root / "manifest.json").read_text())["config"]
        if stored != json.loads(json.dumps(cfg.to_json())):
            raise ValueError(f"dataset under {root} was generated with a different config; "
                             "remove it or choose another --out")
        return load_dataset(root)
    log.info("generating dataset under %s", root)
    return generate_dataset(cfg, root)


def run_benchmark(cfg: BenchConfig, out_dir, dataset: Dataset | None = None) -> dict:
    """Select parameters on the training split, then compare all methods on the test split.

    Writes ``report.csv``, ``report.json``, ``results.csv``, ``sweep.csv``,
    ``training_log.csv`` and ``weights_p<p>.json`` into ``out_dir``.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    dataset = dataset or _ensure_dataset(cfg, out_dir)
    cp = assemble_compact(dataset.instance)
    part = equality_partition(cp)
    train_pts = dataset.split("train")
    test_pts = dataset.split("test")
    if not train_pts or not test_pts:
        raise ValueError("dataset needs at least one training and one test point")

    # offline selection on the training split
    t0 = time.perf_counter()
    s_star, s_ok, ro_rows = select_solver_parameter("ro", cfg.s_grid, train_pts, cp, cfg)
    train_cfg = TrainConfig(**{**cfg.train.__dict__, "seed": cfg.seed})
    p_star, proxy_report, models = select_safety_parameter(
        cfg.p_grid, dataset.train_points(), cp, part, cfg.epsilon, train_cfg)
    p_ok = any(r["p"] == p_star and r["out_violation"] <= cfg.epsilon for r in proxy_report)
    pr_rows = sweep_method("pr", cfg.p_grid, train_pts, cp, cfg)
    proxy_rows = [{"method": "proxy", "parameter": r["p"], "objective": r["objective"],
                   "in_violation": r["in_violation"], "out_violation": r["out_violation"],
                   "n_points": len(train_pts), "n_failed": 0} for r in proxy_report]
    selection_s = time.perf_counter() - t0
    best = models[p_star]
    weights = best.weights
    save_weights(weights, out_dir / f"weights_p{p_star:g}.json")
    write_training_log(best.log_rows, out_dir / "training_log.csv")

    # online test
    n_timed = len(test_pts) if cfg.timing_points is None else min(cfg.timing_points, len(test_pts))
    params = {"sa": None, "cvar": None, "ro": s_star, "pr": p_star}
    per_method = {m: [] for m in ALL_METHODS}
    for i, pt in enumerate(test_pts):
        repeats = cfg.timing_repeats if i < n_timed else 1
        for method in SOLVER_METHODS:
            per_method[method].append(solve_point(method, params[method], pt, cp, cfg, repeats))
        per_method["proxy"].append(proxy_point(weights, p_star, pt, cp, part, repeats))
        for method in ALL_METHODS:
            per_method[method][-1].timed = i < n_timed
    sa_obj = {r.point_id: r.objective for r in per_method["sa"] if r.status == QpStatus.OPTIMAL.value}
    summary = [summarize(per_method[m], m, sa_obj) for m in ALL_METHODS]
    proxy_time = summary[-1]["mean_time_s"]
    for row in summary:
        row["proxy_speedup"] = row["mean_time_s"] / proxy_time if proxy_time > 0 else float("inf")

    write_csv(out_dir / "report.csv", REPORT_COLUMNS, summary)
    write_csv(out_dir / "results.csv", RESULT_COLUMNS,
              [{"datapoint_id": r.point_id, "method": r.method, "parameter": r.parameter,
                "objective": r.objective, "build_s": r.build_s, "solve_s": r.solve_s, "status": r.status}
               for m in ALL_METHODS for r in per_method[m]])
    write_csv(out_dir / "sweep.csv", SWEEP_COLUMNS, pr_rows + proxy_rows + ro_rows)
    report = {
        "config": cfg.to_json(),
        "selected": {"s": s_star, "s_meets_epsilon": s_ok, "p": p_star, "p_meets_epsilon": p_ok},
        "methods": summary,
        "speedup": {row["method"]: row["proxy_speedup"] for row in summary if row["method"] != "proxy"},
        "solve_speedup": {row["method"]: row["solve_s"] / summary[-1]["solve_s"]
                          for row in summary if row["method"] != "proxy"},
        "timing": {
            "repeats": cfg.timing_repeats,
            "timed_points": n_timed,
            "note": "mean_time_s = build_s + solve_s; proxy time covers aggregation, interior point, "
                    "network and gauge map and is reported under solve_s",
        },
        "training": {"p": p_star, "initial_loss": best.initial_loss, "final_loss": best.final_loss,
                     "best_epoch": best.best_epoch},
        "proxy_selection": proxy_report,
        "norm_mode": cfg.norm_mode,
        "output_convention": cfg.output_convention,
        "selection_time_s": selection_s,
        "n_train": len(train_pts),
        "n_test": len(test_pts),
    }
    (out_dir / "report.json").write_text(json.dumps(report, indent=1, sort_keys=True) + "\n")
    return report


def train_at(cfg: BenchConfig, dataset: Dataset, p: float, targets=None):
    """Train one proxy at ``p`` on the training split."""
    cp = assemble_compact(dataset.instance)
    part = equality_partition(cp)
    data = prepare_training_set(cp, part, dataset.train_points(), p, targets)
    return train(data, TrainConfig(**{**cfg.train.__dict__, "p": p, "seed": cfg.seed}))
