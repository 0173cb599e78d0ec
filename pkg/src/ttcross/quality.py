"""Quasioptimality measurements and error bounds for cross interpolation."""

from __future__ import annotations

import math

import numpy as np
import scipy.linalg

from .cross import CrossFactorization, cross_to_tt, cross_values0
from .oracles import NoisyTTOracle, random_indices
from .tensor import chebyshev_norm, tt_to_dense

__all__ = [
    "ExactReferenceError",
    "matrix_bound",
    "measure_kappa",
    "quasiopt_ratio",
    "thm1_bound",
]


class ExactReferenceError(ZeroDivisionError):
    """``|A - X| = 0``: the reference approximation is exact, no ratio exists."""


def quasiopt_ratio(
    oracle: NoisyTTOracle,
    cf: CrossFactorization,
    samples: int | None = None,
    seed=None,
    reference: np.ndarray | None = None,
) -> float:
    """``|A - A~| / |A - X|`` in the Chebyshev norm.

    Parameters
    ----------
    oracle : NoisyTTOracle
        Provides the dense tensor ``A`` and the reference ``X``.
    cf : CrossFactorization
        The interpolant ``A~``.
    samples : int, optional
        If given, both norms are estimated on this many random entries
        instead of the full tensor.
    reference : ndarray, optional
        Overrides ``oracle.x`` as the reference approximation.

    Raises
    ------
    ExactReferenceError
        If the reference error is zero.
    """
    x = oracle.x if reference is None else np.asarray(reference, dtype=float)
    if samples is None:
        approx = tt_to_dense(cross_to_tt(cf))
        num = chebyshev_norm(oracle.dense - approx)
        den = chebyshev_norm(oracle.dense - x)
    else:
        idx = random_indices(oracle.shape, samples, seed)
        a = oracle.dense[tuple(idx.T)]
        num = chebyshev_norm(a - cross_values0(cf, idx))
        den = chebyshev_norm(a - x[tuple(idx.T)])
    if den == 0.0:
        raise ExactReferenceError("reference approximation is exact; ratio undefined")
    return num / den


def matrix_bound(r: int) -> float:
    """``(r + 1)^2``, the bound for a maximum-volume matrix cross of rank ``r``."""
    return float((r + 1) ** 2)


def thm1_bound(d: int, r: int, kappa: float, matrix_at_d2: bool = True) -> float:
    """``(2r + kappa r + 1)^ceil(log2 d) (r + 1)^2``.

    For ``d <= 2`` with ``matrix_at_d2`` the matrix bound ``(r + 1)^2`` is
    returned instead of the general formula.
    """
    if d < 1 or r < 0:
        raise ValueError("need d >= 1 and r >= 0")
    if d <= 2 and matrix_at_d2:
        return matrix_bound(r)
    levels = math.ceil(math.log2(d)) if d > 1 else 0
    return float((2 * r + kappa * r + 1) ** levels * (r + 1) ** 2)


def measure_kappa(cf: CrossFactorization, a_norm: float) -> float:
    """``max_k r_k |A| |inv(A_k)|`` with ``|.|`` the max-abs entry."""
    kappa = 0.0
    for a, lu in zip(cf.intersections, cf.lu):
        r = a.shape[0]
        if r == 0:
            continue
        inv = scipy.linalg.lu_solve(lu, np.eye(r), check_finite=False)
        kappa = max(kappa, r * a_norm * float(np.max(np.abs(inv))))
    return kappa
