"""Gauge (Minkowski functional) map onto a polytope and its vector-Jacobian product.

Shapes follow numpy broadcasting: ``u_hat`` may be a single vector or a batch
of row vectors, with ``margins`` either one vector or one row per sample.
"""

from __future__ import annotations

import numpy as np

from .reduce import ReducedPolyhedron


def _gauge(u_hat, a_mat, margins):
    ratios = (u_hat @ a_mat.T) / margins
    idx = np.argmax(ratios, axis=-1)  # first maximum, i.e. lowest row on ties
    top = np.take_along_axis(ratios, np.expand_dims(idx, -1), axis=-1)[..., 0]
    return np.maximum(top, 0.0), idx


def minkowski_gauge(u_hat, rp: ReducedPolyhedron):
    """Gauge value ``psi`` of ``u_hat`` w.r.t. the set shifted to the interior point.

    Returns ``(psi, row)`` where ``row`` is the maximizing row (lowest index on
    ties).  ``psi`` is 0 when no row has a positive numerator.
    """
    psi, idx = _gauge(np.asarray(u_hat, dtype=float), rp.a_mat, rp.margins)
    if np.ndim(psi) == 0:
        return float(psi), int(idx)
    return psi, idx


def gauge_scale(u_hat, a_mat, margins):
    """``(u_ind - u0, psi, row)`` for a batch; the shared core of the forward pass."""
    psi, idx = _gauge(u_hat, a_mat, margins)
    denom = np.maximum(psi, 1.0)
    return u_hat / np.expand_dims(denom, -1), psi, idx


def gauge_map(u_hat, rp: ReducedPolyhedron) -> np.ndarray:
    """``u_hat / max(1, psi) + u0``: points inside the shifted set pass through,
    points outside are pulled back to its boundary along the ray from ``u0``."""
    scaled, _, _ = gauge_scale(np.asarray(u_hat, dtype=float), rp.a_mat, rp.margins)
    return scaled + rp.interior


def gauge_vjp(u_hat, upstream, psi, idx, a_mat, margins):
    """Batched vector-Jacobian product of the gauge map.

    For ``psi > 1`` the map is ``u_hat / psi`` with ``psi = a.u_hat / d`` and
    the transpose Jacobian acts as ``g / psi - (a / d) (u_hat . g) / psi**2``.
    At ``psi <= 1`` (the kink included) the identity branch is used.
    """
    u_hat = np.atleast_2d(u_hat)
    upstream = np.atleast_2d(upstream)
    psi = np.atleast_1d(psi)
    idx = np.atleast_1d(idx)
    margins = np.atleast_2d(margins)
    if margins.shape[0] == 1 and u_hat.shape[0] > 1:
        margins = np.broadcast_to(margins, (u_hat.shape[0], margins.shape[1]))
    out = upstream.copy()
    outer = psi > 1.0
    if np.any(outer):
        rows = np.flatnonzero(outer)
        a_over_d = a_mat[idx[rows]] / margins[rows, idx[rows]][:, None]
        p_o = psi[rows][:, None]
        dot = np.sum(u_hat[rows] * upstream[rows], axis=1, keepdims=True)
        out[rows] = upstream[rows] / p_o - a_over_d * dot / p_o ** 2
    return out


def gauge_map_jacobian_vec(u_hat, rp: ReducedPolyhedron, upstream) -> np.ndarray:
    """Transpose-Jacobian of :func:`gauge_map` applied to ``upstream``."""
    u_hat = np.asarray(u_hat, dtype=float)
    psi, idx = _gauge(u_hat, rp.a_mat, rp.margins)
    out = gauge_vjp(u_hat, np.asarray(upstream, dtype=float), psi, idx, rp.a_mat, rp.margins)
    return out[0] if u_hat.ndim == 1 else out
