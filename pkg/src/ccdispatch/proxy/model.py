"""The proxy network: set features -> MLP -> gauge map -> equality completion."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..vpp import CompactProblem, _x_array, make_rng
from .aggregate import AggregatedFeatures, set_aggregate
from .gauge import gauge_scale, gauge_vjp
from .reduce import EqualityPartition, ReducedPolyhedron, reduce_polyhedron

HIDDEN_UNITS = 200


@dataclass
class MlpWeights:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    feature_mean: np.ndarray
    feature_std: np.ndarray
    p: float | None = None
    seed: int | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        h, d = self.w1.shape
        o = self.w2.shape[0]
        if self.b1.shape != (h,) or self.w2.shape != (o, h) or self.b2.shape != (o,):
            raise ValueError("inconsistent layer shapes")
        if self.feature_mean.shape != (d,) or self.feature_std.shape != (d,):
            raise ValueError("feature normalization must have one entry per input feature")
        if np.any(self.feature_std <= 0):
            raise ValueError("feature std must be positive")

    @property
    def dims(self) -> dict:
        return {"d": self.w1.shape[1], "h": self.w1.shape[0], "o": self.w2.shape[0]}

    def params(self):
        return [self.w1, self.b1, self.w2, self.b2]

    def copy(self) -> "MlpWeights":
        return MlpWeights(*(a.copy() for a in self.params()), self.feature_mean.copy(),
                          self.feature_std.copy(), self.p, self.seed, dict(self.metadata))

    def to_json(self) -> dict:
        return {
            "dims": self.dims,
            "w1": self.w1.tolist(),
            "b1": self.b1.tolist(),
            "w2": self.w2.tolist(),
            "b2": self.b2.tolist(),
            "feature_norm": {"mean": self.feature_mean.tolist(), "std": self.feature_std.tolist()},
            "p": self.p,
            "seed": self.seed,
            "metadata": self.metadata,
        }

    @classmethod
    def from_json(cls, data: dict) -> "MlpWeights":
        arr = lambda key: np.asarray(data[key], dtype=float)  # noqa: E731
        weights = cls(arr("w1"), arr("b1"), arr("w2"), arr("b2"),
                      np.asarray(data["feature_norm"]["mean"], dtype=float),
                      np.asarray(data["feature_norm"]["std"], dtype=float),
                      data.get("p"), data.get("seed"), data.get("metadata", {}))
        dims = data.get("dims")
        if dims is not None and dims != weights.dims:
            raise ValueError(f"stored dims {dims} disagree with arrays {weights.dims}")
        return weights


def save_weights(weights: MlpWeights, path) -> None:
    Path(path).write_text(json.dumps(weights.to_json()))


def load_weights(path) -> MlpWeights:
    return MlpWeights.from_json(json.loads(Path(path).read_text()))


def feature_vector(x, feats: AggregatedFeatures) -> np.ndarray:
    """Raw network input ``[x, phi_avg, phi_max]``."""
    return np.concatenate([_x_array(x), feats.phi_avg, feats.phi_max])


def init_weights(n_features: int, n_out: int, seed=0, hidden: int = HIDDEN_UNITS,
                 feature_mean=None, feature_std=None) -> MlpWeights:
    """Uniform(+-1/sqrt(fan_in)) initialization.  A zero feature std is replaced by 1."""
    rng = make_rng(seed)
    lim1 = 1.0 / np.sqrt(n_features)
    lim2 = 1.0 / np.sqrt(hidden)
    mean = np.zeros(n_features) if feature_mean is None else np.asarray(feature_mean, dtype=float)
    std = np.ones(n_features) if feature_std is None else np.asarray(feature_std, dtype=float).copy()
    std[std <= 0] = 1.0
    return MlpWeights(
        w1=rng.uniform(-lim1, lim1, (hidden, n_features)),
        b1=rng.uniform(-lim1, lim1, hidden),
        w2=rng.uniform(-lim2, lim2, (n_out, hidden)),
        b2=rng.uniform(-lim2, lim2, n_out),
        feature_mean=mean,
        feature_std=std,
        seed=seed if isinstance(seed, (int, np.integer)) else None,
    )


@dataclass
class BatchCache:
    """Intermediates of a batched forward pass, kept for the backward pass."""

    weights: MlpWeights
    part: EqualityPartition
    a_mat: np.ndarray
    margins: np.ndarray
    features: np.ndarray
    pre: np.ndarray
    hidden: np.ndarray
    u_hat: np.ndarray
    psi: np.ndarray
    row: np.ndarray
    u_full: np.ndarray


def batch_forward(weights: MlpWeights, raw_features, x, a_mat, margins, interiors,
                  part: EqualityPartition):
    """Forward pass for a batch sharing one reduced row matrix ``a_mat``.

    ``raw_features``, ``x``, ``margins`` and ``interiors`` carry one row per
    sample.  Returns ``(u_full, cache)``.
    """
    features = (np.atleast_2d(raw_features) - weights.feature_mean) / weights.feature_std
    pre = features @ weights.w1.T + weights.b1
    hidden = np.maximum(pre, 0.0)
    u_hat = hidden @ weights.w2.T + weights.b2
    scaled, psi, row = gauge_scale(u_hat, a_mat, np.atleast_2d(margins))
    u_ind = scaled + np.atleast_2d(interiors)
    u_full = part.complete(u_ind, np.atleast_2d(x))
    cache = BatchCache(weights, part, a_mat, np.atleast_2d(margins), features, pre, hidden, u_hat, psi,
                       row, u_full)
    return u_full, cache


def batch_backward(cache: BatchCache, targets):
    """Mean squared-distance loss over the batch and its weight gradients.

    The interior point depends only on the inputs, so it is a constant here.
    Returns ``(loss, [g_w1, g_b1, g_w2, g_b2])``.
    """
    targets = np.atleast_2d(targets)
    n_batch = targets.shape[0]
    diff = cache.u_full - targets
    loss = float(np.mean(np.sum(diff ** 2, axis=1)))
    g_full = 2.0 * diff / n_batch
    g_ind = cache.part.pullback(g_full)
    g_hat = gauge_vjp(cache.u_hat, g_ind, cache.psi, cache.row, cache.a_mat, cache.margins)
    w = cache.weights
    g_w2 = g_hat.T @ cache.hidden
    g_b2 = g_hat.sum(axis=0)
    g_hidden = g_hat @ w.w2
    g_pre = g_hidden * (cache.pre > 0)
    g_w1 = g_pre.T @ cache.features
    g_b1 = g_pre.sum(axis=0)
    return loss, [g_w1, g_b1, g_w2, g_b2]


@dataclass
class ProxyTrace:
    x: np.ndarray
    feats: AggregatedFeatures
    rp: ReducedPolyhedron
    cache: BatchCache

    @property
    def psi(self) -> float:
        return float(self.cache.psi[0])

    @property
    def u_hat(self) -> np.ndarray:
        return self.cache.u_hat[0]


def proxy_forward(weights: MlpWeights, cp: CompactProblem, x, scen, p: float, part: EqualityPartition):
    """Dispatch predicted by the proxy for one input and scenario set.

    Returns ``(u_full, trace)``.  Raises ``EmptyReducedSetError`` when the
    tightened set has no interior at this ``p``.
    """
    x = _x_array(x)
    feats = set_aggregate(cp.c_ineq, scen)
    rp = reduce_polyhedron(cp, x, feats, p, part)
    u_full, cache = batch_forward(weights, feature_vector(x, feats)[None, :], x[None, :], rp.a_mat,
                                  rp.margins[None, :], rp.interior[None, :], part)
    return u_full[0], ProxyTrace(x, feats, rp, cache)


def proxy_backward(trace: ProxyTrace, target):
    """Gradients of ``||u - target||^2`` w.r.t. ``[w1, b1, w2, b2]``."""
    _, grads = batch_backward(trace.cache, np.asarray(target, dtype=float)[None, :])
    return grads
