"""Supervised training of the proxy and selection of its safety parameter."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..metrics import objective_cost_rate, violation_rate  # noqa: F401  (re-exported for callers)
from ..qp import QpSettings, QpStatus, solve_qp
from ..reformulations import build_polyhedron_qp
from ..vpp import CompactProblem, ScenarioSet, _x_array, make_rng
from .aggregate import set_aggregate
from .model import MlpWeights, batch_backward, batch_forward, feature_vector, init_weights, proxy_forward
from .reduce import EqualityPartition, reduce_polyhedron

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    p: float = 0.5
    lr: float = 1e-3
    batch_size: int = 64
    epochs: int = 1500
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    hidden: int = 200
    val_fraction: float = 0.2

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"p must lie in [0, 1], got {self.p}")
        if not self.lr > 0:
            raise ValueError(f"learning rate must be positive, got {self.lr}")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValueError(f"val_fraction must lie in [0, 1), got {self.val_fraction}")


@dataclass
class TrainPoint:
    """One training input: the schedule vector and its in-sample scenarios."""

    point_id: int
    x: np.ndarray
    scen: ScenarioSet
    out_scen: ScenarioSet | None = None


@dataclass
class TrainingSet:
    """Per-sample arrays at a fixed ``p``; the reduced row matrix is shared."""

    p: float
    ids: np.ndarray
    raw_features: np.ndarray
    x: np.ndarray
    margins: np.ndarray
    interiors: np.ndarray
    targets: np.ndarray
    a_mat: np.ndarray
    part: EqualityPartition

    def __len__(self) -> int:
        return self.ids.size

    def subset(self, idx) -> "TrainingSet":
        idx = np.asarray(idx, dtype=int)
        return TrainingSet(self.p, self.ids[idx], self.raw_features[idx], self.x[idx], self.margins[idx],
                           self.interiors[idx], self.targets[idx], self.a_mat, self.part)


def pr_target(cp: CompactProblem, x, scen: ScenarioSet, p: float, settings: QpSettings | None = None):
    """Optimal dispatch of the polyhedron reformulation, or None if it fails."""
    feats = set_aggregate(cp.c_ineq, scen)
    sol = solve_qp(build_polyhedron_qp(cp, x, feats.phi_avg, feats.phi_max, p), settings)
    return sol.u if sol.status == QpStatus.OPTIMAL else None


def prepare_training_set(cp: CompactProblem, part: EqualityPartition, points, p: float,
                         targets=None) -> TrainingSet:
    """Assemble features, reduced sets and targets for every point.

    Points whose target solve fails are dropped with a warning.
    """
    rows = []
    for i, pt in enumerate(points):
        x = _x_array(pt.x)
        target = pr_target(cp, x, pt.scen, p) if targets is None else np.asarray(targets[i], dtype=float)
        if target is None:
            log.warning("dropping point %s: no polyhedron solution at p=%s", pt.point_id, p)
            continue
        feats = set_aggregate(cp.c_ineq, pt.scen)
        rp = reduce_polyhedron(cp, x, feats, p, part)
        rows.append((pt.point_id, feature_vector(x, feats), x, rp.margins, rp.interior, target, rp.a_mat))
    if not rows:
        raise ValueError(f"no usable training points at p={p}")
    ids, feats, xs, margins, interiors, targets_arr, a_mats = zip(*rows)
    return TrainingSet(p, np.asarray(ids), np.vstack(feats), np.vstack(xs), np.vstack(margins),
                       np.vstack(interiors), np.vstack(targets_arr), a_mats[0], part)


def dataset_loss(weights: MlpWeights, data: TrainingSet) -> float:
    u_full, _ = batch_forward(weights, data.raw_features, data.x, data.a_mat, data.margins, data.interiors,
                              data.part)
    return float(np.mean(np.sum((u_full - data.targets) ** 2, axis=1)))


def split_indices(n: int, val_fraction: float, seed) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic train/validation split; validation is empty for tiny sets."""
    n_val = int(math.floor(val_fraction * n))
    if n - n_val < 1:
        n_val = 0
    order = make_rng(seed).permutation(n)
    return np.sort(order[n_val:]), np.sort(order[:n_val])


@dataclass
class TrainResult:
    weights: MlpWeights
    log_rows: list = field(default_factory=list)
    initial_loss: float = float("nan")
    final_loss: float = float("nan")
    best_epoch: int = 0


def train(data: TrainingSet, cfg: TrainConfig) -> TrainResult:
    """Minibatch Adam on the mean squared distance to the targets.

    Returns the weights with the lowest validation loss (training loss when
    the validation split is empty).  ``log_rows`` holds
    ``(epoch, train_loss, val_loss)`` with epoch 0 at initialization.

    Raises
    ------
    FloatingPointError
        If the loss becomes non-finite.
    """
    train_idx, val_idx = split_indices(len(data), cfg.val_fraction, cfg.seed)
    train_set = data.subset(train_idx)
    val_set = data.subset(val_idx) if val_idx.size else None
    mean = train_set.raw_features.mean(axis=0)
    std = train_set.raw_features.std(axis=0)
    weights = init_weights(data.raw_features.shape[1], data.part.ind_idx.size, seed=cfg.seed,
                           hidden=cfg.hidden, feature_mean=mean, feature_std=std)
    weights.p = cfg.p
    rng = make_rng([cfg.seed, 1])
    moments = [np.zeros_like(a) for a in weights.params()]
    second = [np.zeros_like(a) for a in weights.params()]

    def evaluate(epoch):
        tr = dataset_loss(weights, train_set)
        va = dataset_loss(weights, val_set) if val_set is not None else float("nan")
        if not (math.isfinite(tr) and (val_set is None or math.isfinite(va))):
            raise FloatingPointError(
                f"non-finite loss at epoch {epoch} (train={tr}, val={va}, "
                f"max |w| = {max(np.max(np.abs(a)) for a in weights.params()):.3e})")
        return tr, va

    tr, va = evaluate(0)
    result = TrainResult(weights.copy(), [(0, tr, va)], initial_loss=tr)
    best = va if val_set is not None else tr
    step = 0
    n_train = len(train_set)
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n_train)
        for start in range(0, n_train, cfg.batch_size):
            batch = train_set.subset(order[start:start + cfg.batch_size])
            _, cache = batch_forward(weights, batch.raw_features, batch.x, batch.a_mat, batch.margins,
                                     batch.interiors, batch.part)
            loss, grads = batch_backward(cache, batch.targets)
            if not math.isfinite(loss):
                raise FloatingPointError(f"non-finite minibatch loss at epoch {epoch}, step {step}")
            step += 1
            corr1 = 1.0 - cfg.beta1 ** step
            corr2 = 1.0 - cfg.beta2 ** step
            for param, grad, m1, m2 in zip(weights.params(), grads, moments, second):
                m1 *= cfg.beta1
                m1 += (1.0 - cfg.beta1) * grad
                m2 *= cfg.beta2
                m2 += (1.0 - cfg.beta2) * grad ** 2
                param -= cfg.lr * (m1 / corr1) / (np.sqrt(m2 / corr2) + cfg.adam_eps)
        tr, va = evaluate(epoch)
        result.log_rows.append((epoch, tr, va))
        score = va if val_set is not None else tr
        if score < best:
            best = score
            result.weights = weights.copy()
            result.best_epoch = epoch
    result.weights.metadata.update({"best_epoch": result.best_epoch, "n_train": n_train,
                                    "n_val": int(val_idx.size), "epochs": cfg.epochs})
    result.final_loss = dataset_loss(result.weights, train_set)
    return result


def write_training_log(rows, path) -> None:
    with open(Path(path), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_loss"])
        for epoch, tr, va in rows:
            writer.writerow([epoch, repr(float(tr)), repr(float(va))])


def choose_parameter(grid, violations, objectives, epsilon: float):
    """Smallest grid value whose violation is at most ``epsilon``.

    Equal grid values are ordered by objective.  Returns ``(value, ok)``;
    when nothing qualifies the value is 1.0 and ``ok`` is False.
    """
    if len(grid) == 0:
        raise ValueError("parameter grid is empty")
    if not len(grid) == len(violations) == len(objectives):
        raise ValueError("grid, violations and objectives must have equal length")
    order = sorted(range(len(grid)), key=lambda i: (grid[i], objectives[i]))
    for i in order:
        if violations[i] <= epsilon:
            return float(grid[i]), True
    return 1.0, False


def evaluate_proxy(weights: MlpWeights, cp: CompactProblem, part: EqualityPartition, points, p: float):
    """Mean objective and mean in/out-sample violation of the proxy on ``points``."""
    objs, v_in, v_out = [], [], []
    for pt in points:
        u, _ = proxy_forward(weights, cp, pt.x, pt.scen, p, part)
        objs.append(cp.objective(u))
        v_in.append(violation_rate(cp, u, pt.x, pt.scen))
        if pt.out_scen is not None:
            v_out.append(violation_rate(cp, u, pt.x, pt.out_scen))
    return {
        "objective": float(np.mean(objs)),
        "in_violation": float(np.mean(v_in)),
        "out_violation": float(np.mean(v_out)) if v_out else float("nan"),
    }


def select_safety_parameter(p_grid, points, cp: CompactProblem, part: EqualityPartition, epsilon: float,
                            base_cfg: TrainConfig | None = None):
    """Train one model per grid value and keep the smallest safe ``p``.

    ``points`` are training points carrying both in- and out-sample
    scenarios.  Returns ``(p_star, report, models)`` where ``report`` lists
    one dict per grid value and ``models`` maps ``p`` to its
    :class:`TrainResult`.
    """
    grid = [float(p) for p in p_grid]
    if not grid:
        raise ValueError("p grid is empty")
    if any(not 0.0 <= p <= 1.0 for p in grid):
        raise ValueError(f"p grid must lie in [0, 1], got {grid}")
    base_cfg = base_cfg or TrainConfig()
    report, models = [], {}
    for p in grid:
        cfg = TrainConfig(**{**base_cfg.__dict__, "p": p})
        data = prepare_training_set(cp, part, points, p)
        result = train(data, cfg)
        models[p] = result
        metrics = evaluate_proxy(result.weights, cp, part, points, p)
        report.append({"p": p, **metrics, "initial_loss": result.initial_loss,
                       "final_loss": result.final_loss})
        log.info("p=%.4f out-sample violation %.4f objective %.4f", p, metrics["out_violation"],
                 metrics["objective"])
    p_star, ok = choose_parameter(grid, [r["out_violation"] for r in report],
                                  [r["objective"] for r in report], epsilon)
    if not ok:
        log.warning("no p in %s meets the violation target %.4f; falling back to p=1", grid, epsilon)
    if p_star not in models:
        # fallback p=1 outside the grid: train it so callers always get a model
        cfg = TrainConfig(**{**base_cfg.__dict__, "p": p_star})
        models[p_star] = train(prepare_training_set(cp, part, points, p_star), cfg)
    return p_star, report, models
