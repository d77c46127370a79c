"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .bench import (RESULT_COLUMNS, SWEEP_COLUMNS, proxy_point, run_benchmark, solve_point, sweep_method,
                    train_at, write_csv)
from .config import BenchConfig, load_config
from .dataset import generate_dataset, load_dataset
from .proxy.model import load_weights, save_weights
from .proxy.reduce import equality_partition
from .proxy.train import TrainConfig, pr_target, select_safety_parameter, write_training_log
from .vpp import assemble_compact, generate_instance, save_instance

log = logging.getLogger("ccdispatch")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _grid(text: str) -> list:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"invalid grid {text!r}: expected comma-separated numbers") from exc
    if not values:
        raise argparse.ArgumentTypeError("grid is empty")
    return values


def _global_flags(parser, suppress: bool):
    # subcommands repeat the global flags with suppressed defaults so that a
    # flag given before the subcommand is not reset by the subparser
    default = (lambda value: argparse.SUPPRESS) if suppress else (lambda value: value)
    parser.add_argument("--config", type=Path, default=default(None),
                        help="experiment config JSON (default: built-in desk scale)")
    parser.add_argument("--seed", type=int, default=default(None), help="override the config seed")
    parser.add_argument("--out", type=Path, default=default(Path("out")), help="output directory (default: out)")
    parser.add_argument("-v", "--verbose", action="store_true", default=default(False))


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    _global_flags(common, suppress=True)
    parser = _Parser(prog="ccdispatch", description="Chance-constrained VPP dispatch benchmark.")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("gen-instance", parents=[common], help="write a random prosumer fleet")
    sub.add_parser("gen-dataset", parents=[common], help="write inputs and scenario sets")

    p_solve = sub.add_parser("solve", parents=[common], help="solve test points with one reformulation")
    p_solve.add_argument("--method", required=True, choices=["sa", "cvar", "ro", "pr"])
    p_solve.add_argument("--s", type=float, help="robust safety parameter (required for ro)")
    p_solve.add_argument("--p", type=float, help="polyhedron safety parameter (required for pr)")
    p_solve.add_argument("--point", type=int, help="solve only this data point id")

    p_targets = sub.add_parser("gen-targets", parents=[common], help="polyhedron targets for the training split")
    p_targets.add_argument("--p", type=float, required=True)

    p_train = sub.add_parser("train", parents=[common], help="train the proxy at one p")
    p_train.add_argument("--p", type=float, required=True)

    p_select = sub.add_parser("select-p", parents=[common], help="train per p and select the safe p")
    p_select.add_argument("--grid", type=_grid, help="comma-separated p values (default: config p_grid)")

    p_eval = sub.add_parser("eval", parents=[common], help="evaluate trained weights on the test split")
    p_eval.add_argument("--weights", type=Path, help="weights JSON (default: newest weights_p*.json in --out)")

    sub.add_parser("bench", parents=[common], help="full pipeline and report")

    p_sweep = sub.add_parser("sweep", parents=[common], help="parameter sweep on the training split")
    p_sweep.add_argument("--grid", type=_grid, required=True)
    p_sweep.add_argument("--method", choices=["pr", "ro", "proxy"], default="pr")
    return parser


def _dataset(cfg: BenchConfig, out: Path):
    root = out / "dataset"
    if not (root / "manifest.json").exists():
        raise FileNotFoundError(f"missing dataset under {root}; run `gen-dataset` first")
    return load_dataset(root)


def _check_p(p):
    if p is not None and not 0.0 <= p <= 1.0:
        raise UsageError(f"--p must lie in [0, 1], got {p}")


def cmd_gen_instance(args, cfg):
    inst = generate_instance(cfg.fleet, seed=[cfg.seed, 0])
    inst = dataclasses.replace(inst, output_convention=cfg.output_convention)
    path = args.out / "instance.json"
    save_instance(inst, path)
    print(path)


def cmd_gen_dataset(args, cfg):
    ds = generate_dataset(cfg, args.out / "dataset")
    print(f"{len(ds.points)} points written to {ds.root}")


def cmd_solve(args, cfg):
    if args.method == "ro" and args.s is None:
        raise UsageError("--method ro requires --s")
    if args.method == "pr" and args.p is None:
        raise UsageError("--method pr requires --p")
    _check_p(args.p)
    ds = _dataset(cfg, args.out)
    cp = assemble_compact(ds.instance)
    points = ds.split("test") if args.point is None else [pt for pt in ds.points if pt.point_id == args.point]
    if not points:
        raise UsageError(f"no data point with id {args.point}")
    parameter = {"ro": args.s, "pr": args.p}.get(args.method)
    rows = []
    for pt in points:
        r = solve_point(args.method, parameter, pt, cp, cfg)
        rows.append({"datapoint_id": r.point_id, "method": r.method, "parameter": r.parameter,
                     "objective": r.objective, "build_s": r.build_s, "solve_s": r.solve_s, "status": r.status})
    path = args.out / f"solve_{args.method}.csv"
    write_csv(path, RESULT_COLUMNS, rows)
    print(path)


def cmd_gen_targets(args, cfg):
    _check_p(args.p)
    ds = _dataset(cfg, args.out)
    cp = assemble_compact(ds.instance)
    rows = []
    for pt in ds.split("train"):
        u = pr_target(cp, pt.x, pt.in_scen, args.p)
        rows.append({"datapoint_id": pt.point_id, "u": None if u is None else u.tolist()})
    path = args.out / f"targets_p{args.p:g}.json"
    path.write_text(json.dumps({"p": args.p, "targets": rows}, indent=1) + "\n")
    print(path)


def _load_targets(out: Path, p: float, ids):
    path = out / f"targets_p{p:g}.json"
    if not path.exists():
        return None
    stored = {row["datapoint_id"]: row["u"] for row in json.loads(path.read_text())["targets"]}
    if set(stored) != set(ids) or any(v is None for v in stored.values()):
        return None
    return [np.asarray(stored[i]) for i in ids]


def cmd_train(args, cfg):
    _check_p(args.p)
    ds = _dataset(cfg, args.out)
    targets = _load_targets(args.out, args.p, [pt.point_id for pt in ds.split("train")])
    result = train_at(cfg, ds, args.p, targets)
    save_weights(result.weights, args.out / f"weights_p{args.p:g}.json")
    write_training_log(result.log_rows, args.out / "training_log.csv")
    print(f"p={args.p:g} initial loss {result.initial_loss:.6g} final loss {result.final_loss:.6g}")


def cmd_select_p(args, cfg):
    grid = args.grid or cfg.p_grid
    for p in grid:
        _check_p(p)
    ds = _dataset(cfg, args.out)
    cp = assemble_compact(ds.instance)
    part = equality_partition(cp)
    train_cfg = TrainConfig(**{**cfg.train.__dict__, "seed": cfg.seed})
    p_star, report, models = select_safety_parameter(grid, ds.train_points(), cp, part, cfg.epsilon, train_cfg)
    save_weights(models[p_star].weights, args.out / f"weights_p{p_star:g}.json")
    rows = [{"method": "proxy", "parameter": r["p"], "objective": r["objective"], "in_violation": r["in_violation"],
             "out_violation": r["out_violation"], "n_points": len(ds.split("train")), "n_failed": 0} for r in report]
    write_csv(args.out / "select_p.csv", SWEEP_COLUMNS, rows)
    (args.out / "selection.json").write_text(json.dumps({"p": p_star, "epsilon": cfg.epsilon, "grid": grid,
                                                        "report": report}, indent=1) + "\n")
    print(f"selected p={p_star:g}")


def cmd_eval(args, cfg):
    path = args.weights
    if path is None:
        found = sorted(args.out.glob("weights_p*.json"), key=lambda f: f.stat().st_mtime)
        if not found:
            raise FileNotFoundError(f"no weights in {args.out}; run `train` or `select-p` first")
        path = found[-1]
    weights = load_weights(path)
    if weights.p is None:
        raise ValueError(f"{path} does not record its safety parameter p")
    ds = _dataset(cfg, args.out)
    cp = assemble_compact(ds.instance)
    part = equality_partition(cp)
    res = [proxy_point(weights, weights.p, pt, cp, part) for pt in ds.split("test")]
    summary = {"weights": str(path), "p": weights.p, "n_points": len(res),
               "objective": float(np.mean([r.objective for r in res])),
               "in_violation": float(np.mean([r.in_violation for r in res])),
               "out_violation": float(np.mean([r.out_violation for r in res])),
               "mean_time_s": float(np.mean([r.solve_s for r in res]))}
    (args.out / "eval.json").write_text(json.dumps(summary, indent=1) + "\n")
    print(json.dumps(summary, indent=1))


def cmd_bench(args, cfg):
    report = run_benchmark(cfg, args.out)
    for row in report["methods"]:
        print(f"{row['method']:>6}  rate {row['objective_cost_rate']:.4f}  in {row['in_violation']:.4f}  "
              f"out {row['out_violation']:.4f}  time {row['mean_time_s']:.6f}s")


def cmd_sweep(args, cfg):
    ds = _dataset(cfg, args.out)
    cp = assemble_compact(ds.instance)
    if args.method == "pr":
        for p in args.grid:
            _check_p(p)
    if args.method == "ro" and any(s <= 0 for s in args.grid):
        raise UsageError("robust safety parameters must be positive")
    if args.method == "proxy":
        for p in args.grid:
            _check_p(p)
        part = equality_partition(cp)
        models = {p: train_at(cfg, ds, p).weights for p in args.grid}
        rows = sweep_method("proxy", args.grid, ds.split("train"), cp, cfg, models, part)
    else:
        rows = sweep_method(args.method, args.grid, ds.split("train"), cp, cfg)
    path = args.out / "sweep.csv"
    write_csv(path, SWEEP_COLUMNS, rows)
    print(path)


COMMANDS = {
    "gen-instance": cmd_gen_instance,
    "gen-dataset": cmd_gen_dataset,
    "solve": cmd_solve,
    "gen-targets": cmd_gen_targets,
    "train": cmd_train,
    "select-p": cmd_select_p,
    "eval": cmd_eval,
    "bench": cmd_bench,
    "sweep": cmd_sweep,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.seed)
        args.out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        print(f"ccdispatch {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError, RuntimeError, FloatingPointError) as exc:
        print(f"ccdispatch {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
