"""Maximum-volume submatrices and matrix cross (skeleton) interpolation.

Row and column positions handled here are 0-based numpy integer arrays;
``format_index_sets`` renders them 1-based for diagnostics.
"""

from __future__ import annotations

import itertools
import warnings

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg

__all__ = [
    "CrossSkeleton",
    "NULL_THRESHOLD",
    "SingularMatrixError",
    "format_index_sets",
    "lu_factor_checked",
    "matrix_cross_adaptive",
    "maxvol_2d",
    "maxvol_rows",
    "skeleton_interpolate",
    "volume",
]

NULL_THRESHOLD = 1e-14
"""Relative pivot size below which a factorization is treated as singular."""

EntryFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


class SingularMatrixError(np.linalg.LinAlgError):
    """A (numerically) singular matrix where a nonsingular one is required.

    ``position`` names the offending column / elimination step, ``where`` is a
    free-form label (e.g. the separator of a tensor cross).
    """

    def __init__(self, message: str, position: int | None = None, where=None):
        super().__init__(message)
        self.position = position
        self.where = where


def lu_factor_checked(m: np.ndarray, threshold: float = NULL_THRESHOLD, where=None):
    """LU with partial pivoting that refuses machine-null pivots."""
    m = np.asarray(m, dtype=float)
    scale = np.max(np.abs(m)) if m.size else 0.0
    with warnings.catch_warnings():
        # singularity is reported below with more context
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(m, check_finite=False)
    diag = np.abs(np.diag(lu))
    bad = np.flatnonzero(diag <= threshold * scale) if scale > 0 else np.arange(diag.size)
    if bad.size:
        raise SingularMatrixError(
            f"pivot {bad[0] + 1} of a {m.shape[0]}x{m.shape[1]} block is machine null",
            position=int(bad[0]),
            where=where,
        )
    return lu, piv


def volume(m: np.ndarray) -> float:
    """``|det m|`` from the pivots of an LU factorization, 0 if numerically singular."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"volume needs a square matrix, got shape {m.shape}")
    if m.size == 0:
        return 1.0
    try:
        lu, _ = lu_factor_checked(m)
    except SingularMatrixError:
        return 0.0
    return float(np.prod(np.abs(np.diag(lu))))


def _best_pair_swap(coef: np.ndarray, rows: np.ndarray):
    """Largest 2x2 minor of ``coef`` over rows outside ``rows``.

    The minor on rows ``(a, b)`` and columns ``(j, l)`` is the factor by which
    the volume changes when ``a, b`` replace the chosen rows ``j, l``.
    """
    n, r = coef.shape
    free = np.setdiff1d(np.arange(n), rows)
    if r < 2 or free.size < 2:
        return 0.0, None
    jj, ll = np.triu_indices(r, 1)
    sub = coef[free]
    best, arg = 0.0, None
    for p in range(free.size - 1):
        a, rest = sub[p], sub[p + 1 :]
        minors = np.abs(a[jj] * rest[:, ll] - a[ll] * rest[:, jj])
        q = int(np.argmax(minors))
        if minors.flat[q] > best:
            b, c = divmod(q, jj.size)
            best = float(minors.flat[q])
            arg = (int(free[p]), int(free[p + 1 + b]), int(jj[c]), int(ll[c]))
    return best, arg


def maxvol_rows(
    m: np.ndarray, delta: float = 1e-2, max_iters: int = 1000, pair_swaps: bool = True
) -> np.ndarray:
    """Rows of a tall ``n x r`` matrix spanning a ``(1+delta)``-dominant submatrix.

    Starts from the rows chosen by LU with partial pivoting and then swaps in
    the row holding the largest coefficient of ``m @ inv(m[I])`` while that
    coefficient exceeds ``1 + delta``.  Every swap grows the volume by at least
    ``1 + delta``.

    With ``pair_swaps`` the single-row search is followed by a search over
    simultaneous two-row exchanges (2x2 minors of the coefficient matrix), and
    the two phases alternate until neither improves the volume by more than
    ``1 + delta``.  For ``r = 2`` this makes the result a ``(1+delta)``
    approximation of the true maximum volume, which single swaps alone do not
    guarantee.
    """
    m = np.asarray(m, dtype=float)
    n, r = m.shape
    if n < r:
        raise ValueError(f"maxvol_rows needs n >= r, got {n}x{r}")
    if r == 0:
        return np.zeros(0, dtype=np.int64)
    p, _, u = scipy.linalg.lu(m, check_finite=False)
    scale = np.max(np.abs(m))
    diag = np.abs(np.diag(u))
    bad = np.flatnonzero(diag <= NULL_THRESHOLD * scale) if scale > 0 else np.arange(r)
    if bad.size:
        raise SingularMatrixError(
            f"column {bad[0] + 1} is linearly dependent on the previous ones",
            position=int(bad[0]),
        )
    rows = np.argmax(p, axis=0)[:r].astype(np.int64)
    coef = np.linalg.solve(m[rows].T, m.T).T  # m @ inv(m[rows])
    for _ in range(max_iters):
        i, j = divmod(int(np.argmax(np.abs(coef))), r)
        if abs(coef[i, j]) > 1 + delta:
            u_row = coef[i].copy()
            u_row[j] -= 1.0
            coef -= np.outer(coef[:, j], u_row) / coef[i, j]
            rows[j] = i
            continue
        if not pair_swaps:
            break
        gain, swap = _best_pair_swap(coef, rows)
        if gain <= 1 + delta:
            break
        a, b, j, l = swap
        rows[j], rows[l] = a, b
        coef = np.linalg.solve(m[rows].T, m.T).T
    return rows


DOUBLE_EXCHANGE_LIMIT = 2_000_000
"""Largest number of two-row/two-column moves :func:`maxvol_2d` will scan."""


def _best_exchange(m: np.ndarray, rows: np.ndarray, cols: np.ndarray, double: bool):
    """Largest volume ratio over moves exchanging rows and columns of the cross.

    With ``B = inv(A[I, J])``, ``C = A[:, J] B``, ``R = B A[I, :]`` and the
    skeleton residual ``E = A - C A[I, :]``, putting rows ``P`` in place of
    positions ``S`` and columns ``Q`` in place of positions ``T`` multiplies
    the volume by ``|det [[B[T, S], R[T, Q]], [-C[P, S], E[P, Q]]]|``.
    Single moves exchange one row and one column; ``double`` adds moves that
    exchange two of each.
    """
    r = rows.size
    b = np.linalg.inv(m[np.ix_(rows, cols)])
    c = m[:, cols] @ b
    rr = b @ m[rows, :]
    e = m - c @ m[rows, :]
    # single moves: ratio[i, j, s, t] = C[i, s] R[t, j] + E[i, j] B[t, s]
    ratio = np.abs(c[:, None, :, None] * rr.T[None, :, None, :] + e[:, :, None, None] * b.T[None, None, :, :])
    q = int(np.argmax(ratio))
    i, j, s_, t = np.unravel_index(q, ratio.shape)
    best, move = float(ratio.flat[q]), ((int(i),), (int(j),), (int(s_),), (int(t),))
    if not double or r < 2:
        return best, move
    pi = np.array(list(itertools.combinations(range(m.shape[0]), 2)))
    qj = np.array(list(itertools.combinations(range(m.shape[1]), 2)))
    sp = np.array(list(itertools.combinations(range(r), 2)))
    if len(pi) * len(qj) * len(sp) ** 2 > DOUBLE_EXCHANGE_LIMIT:
        return best, move
    for s2 in sp:
        for t2 in sp:
            blk = np.empty((len(pi), len(qj), 4, 4))
            blk[:, :, :2, :2] = b[np.ix_(t2, s2)]
            blk[:, :, :2, 2:] = rr[t2][:, qj].transpose(1, 0, 2)[None]
            blk[:, :, 2:, :2] = -c[pi][:, :, s2][:, None]
            blk[:, :, 2:, 2:] = e[pi][:, :, qj].transpose(0, 2, 1, 3)
            dets = np.abs(np.linalg.det(blk))
            q = int(np.argmax(dets))
            if dets.flat[q] > best:
                a_, c_ = divmod(q, len(qj))
                best = float(dets.flat[q])
                move = (tuple(pi[a_].tolist()), tuple(qj[c_].tolist()), tuple(s2.tolist()), tuple(t2.tolist()))
    return best, move


def maxvol_2d(
    m: np.ndarray, r: int, delta: float = 1e-2, sweeps: int = 100, exchanges: bool = True
) -> tuple[np.ndarray, np.ndarray]:
    """Alternating row/column maxvol on a dense matrix.

    Columns are seeded by column-pivoted QR, then rows and columns are
    re-selected in turn until the pair stops changing.  A stable pair is then
    checked against moves that exchange one row and one column together and,
    when there are at most ``DOUBLE_EXCHANGE_LIMIT`` of them and ``exchanges``
    is set, two rows and two columns together.  A move that grows the volume
    by more than ``1 + delta`` restarts the alternation.  For ``r <= 2`` the
    double moves reach every submatrix, so the result is then within a factor
    ``1 + delta`` of the maximum volume.
    """
    m = np.asarray(m, dtype=float)
    if not 1 <= r <= min(m.shape):
        raise ValueError(f"rank {r} outside 1..{min(m.shape)}")
    _, _, perm = scipy.linalg.qr(m, mode="economic", pivoting=True)
    cols = np.sort(perm[:r])
    rows = None
    for _ in range(sweeps):
        new_rows = maxvol_rows(m[:, cols], delta)
        new_cols = maxvol_rows(m[new_rows, :].T, delta)
        stable = (
            rows is not None
            and set(new_rows.tolist()) == set(rows.tolist())
            and set(new_cols.tolist()) == set(cols.tolist())
        )
        rows, cols = new_rows, new_cols
        if stable:
            gain, (i, j, s, t) = _best_exchange(m, rows, cols, double=exchanges)
            if gain <= 1 + delta:
                break
            rows, cols = rows.copy(), cols.copy()
            rows[list(s)], cols[list(t)] = i, j
    return rows, cols


@dataclass
class CrossSkeleton:
    """Skeleton ``A ~ C inv(A[I, J]) R`` with ``C = A[:, J]`` and ``R = A[I, :]``.

    ``cols_block`` and ``rows_block`` may be ``None`` when the skeleton only
    carries index sets and an entry function (large implicit matrices).
    """

    rows: np.ndarray
    cols: np.ndarray
    core: np.ndarray
    entries: EntryFn | None = None
    cols_block: np.ndarray | None = None
    rows_block: np.ndarray | None = None
    converged: bool = True
    residual: float = 0.0
    lu: tuple | None = field(default=None, repr=False)

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.int64)
        self.cols = np.asarray(self.cols, dtype=np.int64)
        if self.rows.size and self.lu is None:
            self.lu = lu_factor_checked(self.core, where="skeleton")

    @property
    def rank(self) -> int:
        return int(self.rows.size)

    def _col_values(self, i: np.ndarray) -> np.ndarray:
        if self.cols_block is not None:
            return self.cols_block[i]
        ii, jj = np.meshgrid(i, self.cols, indexing="ij")
        return self.entries(ii.ravel(), jj.ravel()).reshape(ii.shape)

    def _row_values(self, j: np.ndarray) -> np.ndarray:
        if self.rows_block is not None:
            return self.rows_block[:, j]
        ii, jj = np.meshgrid(self.rows, j, indexing="ij")
        return self.entries(ii.ravel(), jj.ravel()).reshape(ii.shape)

    def evaluate(self, i, j) -> np.ndarray:
        """Approximation at entry pairs ``(i[t], j[t])``."""
        i = np.atleast_1d(np.asarray(i, dtype=np.int64))
        j = np.atleast_1d(np.asarray(j, dtype=np.int64))
        if self.rank == 0:
            return np.zeros(np.broadcast(i, j).shape)
        left = self._col_values(i)  # (m, r)
        right = scipy.linalg.lu_solve(self.lu, self._row_values(j))  # (r, m)
        return np.einsum("mr,rm->m", left, right)

    def to_dense(self, shape: tuple[int, int]) -> np.ndarray:
        if self.rank == 0:
            return np.zeros(shape)
        left = self._col_values(np.arange(shape[0]))
        right = scipy.linalg.lu_solve(self.lu, self._row_values(np.arange(shape[1])))
        return left @ right


def _dense_entries(a: np.ndarray) -> EntryFn:
    return lambda i, j: a[i, j]


def skeleton_interpolate(access, rows, cols) -> CrossSkeleton:
    """Cross interpolation of a matrix on rows ``rows`` and columns ``cols``.

    ``access`` is either a dense matrix or a function mapping two equal-length
    integer arrays ``(i, j)`` to the entries ``A[i, j]``.
    """
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    if rows.size != cols.size:
        raise ValueError(f"need |I| = |J|, got {rows.size} and {cols.size}")
    entries = _dense_entries(np.asarray(access, dtype=float)) if not callable(access) else access
    if rows.size == 0:
        return CrossSkeleton(rows, cols, np.zeros((0, 0)), entries=entries)
    ii, jj = np.meshgrid(rows, cols, indexing="ij")
    core = np.asarray(entries(ii.ravel(), jj.ravel()), dtype=float).reshape(ii.shape)
    return CrossSkeleton(rows, cols, core, entries=entries)


def matrix_cross_adaptive(
    access,
    dims: tuple[int, int],
    tol: float = 1e-12,
    rank_cap: int | None = None,
    seed_sets: tuple | None = None,
    verify_samples: int = 64,
    rng: np.random.Generator | int | None = None,
) -> CrossSkeleton:
    """Greedy cross approximation with random verification and restart.

    Each round draws a fresh random sample of ``verify_samples`` entries (the
    whole matrix if it is smaller) and measures the residual there.  If the
    largest residual is below ``tol`` times the running max-abs of all
    entries seen, the cross is returned.  Otherwise the worst sampled entry
    restarts a partial-pivoting search: its residual column is scanned for the
    pivot row, that row for the pivot column, and the pivot joins the cross.
    Seed sets, when given, are kept.  Hitting ``rank_cap`` with a failed
    verification returns a skeleton with ``converged=False``.
    """
    m, n = (int(x) for x in dims)
    entries = _dense_entries(np.asarray(access, dtype=float)) if not callable(access) else access
    rng = np.random.default_rng(rng)
    rank_cap = min(m, n) if rank_cap is None else min(rank_cap, m, n)
    rows: list[int] = []
    cols: list[int] = []
    if seed_sets is not None:
        rows = [int(x) for x in seed_sets[0]]
        cols = [int(x) for x in seed_sets[1]]
    skel = skeleton_interpolate(entries, rows, cols)
    scale = float(np.max(np.abs(skel.core))) if skel.rank else 0.0

    def residual(i, j):
        nonlocal scale
        vals = np.asarray(entries(i, j), dtype=float)
        if vals.size:
            scale = max(scale, float(np.max(np.abs(vals))))
        return vals - skel.evaluate(i, j)

    while True:
        if m * n <= verify_samples:
            flat = np.arange(m * n)
        else:
            flat = rng.choice(m * n, size=verify_samples, replace=False)
        si, sj = np.divmod(flat, n)
        res = residual(si, sj)
        worst = int(np.argmax(np.abs(res)))
        err = float(abs(res[worst]))
        if err <= tol * scale or scale == 0.0:
            skel.converged, skel.residual = True, err
            return skel
        if skel.rank >= rank_cap:
            skel.converged, skel.residual = False, err
            return skel
        j0 = int(sj[worst])
        col = residual(np.arange(m), np.full(m, j0))
        i_star = int(np.argmax(np.abs(col)))
        row = residual(np.full(n, i_star), np.arange(n))
        j_star = int(np.argmax(np.abs(row)))
        if abs(row[j_star]) <= NULL_THRESHOLD * scale:
            skel.converged, skel.residual = False, err
            return skel
        rows.append(i_star)
        cols.append(j_star)
        skel = skeleton_interpolate(entries, rows, cols)


def format_index_sets(rows, cols) -> str:
    """One-line 1-based rendering, e.g. ``I = [2, 3]; J = [1, 2]``."""
    return (
        f"I = {[int(x) + 1 for x in rows]}; J = {[int(x) + 1 for x in cols]}"
    )
