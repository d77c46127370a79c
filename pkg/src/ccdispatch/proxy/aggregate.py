"""Permutation-invariant summary of a scenario set."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class AggregatedFeatures:
    phi_avg: np.ndarray
    phi_max: np.ndarray

    def blend(self, p: float) -> np.ndarray:
        """Row offsets ``p * phi_max + (1 - p) * phi_avg``."""
        return p * self.phi_max + (1.0 - p) * self.phi_avg


def set_aggregate(c_ineq, scen) -> AggregatedFeatures:
    """Mean and elementwise max of ``C eps_k`` over the scenarios.

    Each column is sorted before summation, so the mean is computed in a
    canonical order and does not depend on how the scenarios are listed; the
    max is order-free by construction.
    """
    eps = scen.eps if hasattr(scen, "eps") else np.atleast_2d(np.asarray(scen, dtype=float))
    if eps.shape[0] == 0:
        raise ValueError("cannot aggregate an empty scenario set")
    mapped = eps @ np.asarray(c_ineq).T            # (n_scen, n_rows)
    n_scen = mapped.shape[0]
    phi_max = mapped.max(axis=0)
    if n_scen == 1:
        phi_avg = mapped[0].copy()
    else:
        phi_avg = np.sort(mapped, axis=0).sum(axis=0) / n_scen
        # rounding can leave the mean a hair above the max when all values agree
        phi_avg = np.minimum(phi_avg, phi_max)
    return AggregatedFeatures(phi_avg, phi_max)
