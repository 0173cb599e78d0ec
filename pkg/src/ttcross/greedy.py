"""Greedy construction of nested TT cross interpolation sets.

Two drivers are provided.  :func:`greedy_global` searches the whole residual
``A - A~`` (exhaustively or on a random sample) and inserts the worst entry at
every separator where it is new.  :func:`greedy_restricted` sweeps over the
separators and, at separator ``k``, searches only the supercore
``A(I^{<=k-1} i_k, i_{k+1} I^{>k+1})``, adding one cross per visit.

Both return a :class:`~ttcross.cross.CrossFactorization` whose ``trace``
records every visit.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np
import scipy.linalg

from .cross import (
    CrossFactorization,
    NestedCrossSets,
    build_cross,
    cross_values0,
)
from .maxvol import NULL_THRESHOLD, SingularMatrixError, lu_factor_checked, matrix_cross_adaptive
from .oracles import TensorOracle, _all_indices, random_indices

__all__ = ["greedy_global", "greedy_restricted"]


def _rank_caps(rank_cap, shape: Sequence[int]) -> list[int]:
    d = len(shape)
    if rank_cap is None:
        caps = [math.inf] * (d - 1)
    elif np.ndim(rank_cap) == 0:
        caps = [int(rank_cap)] * (d - 1)
    else:
        caps = [int(r) for r in rank_cap]
        if len(caps) != d - 1:
            raise ValueError(f"need {d - 1} rank caps, got {len(caps)}")
    if any(c < 1 for c in caps):
        raise ValueError("rank caps must be positive")
    return [
        int(min(c, math.prod(shape[: k + 1]), math.prod(shape[k + 1 :]))) for k, c in enumerate(caps)
    ]


def _one_d(oracle: TensorOracle) -> CrossFactorization:
    """For ``d = 1`` the interpolant is the whole fiber."""
    vals = oracle.values0(np.arange(oracle.shape[0])[:, None])
    sets = NestedCrossSets.empty(oracle.shape)
    return CrossFactorization(sets, [vals.reshape(1, -1, 1)], [], [], True, "converged")


def _first_nonzero(oracle: TensorOracle, rng: np.random.Generator, tries: int = 1000):
    """``(0, ..., 0)`` if nonzero there, else the largest of a random sample
    (of every entry when the tensor has at most ``tries`` of them)."""
    start = np.zeros((1, oracle.d), dtype=np.int64)
    if oracle.values0(start)[0] != 0.0:
        return start[0]
    if oracle.size <= tries:
        idx = _all_indices(oracle.shape)
    else:
        idx = random_indices(oracle.shape, tries, rng)
    vals = np.abs(oracle.values0(idx))
    best = int(np.argmax(vals))
    return idx[best] if vals[best] > 0.0 else None


class _Sweeper:
    """Incrementally maintained sets, blocks and intersections.

    Only ``G_k``, ``G_{k+1}`` and ``A_k`` change when a cross is added at
    separator ``k``, so they are extended in place.  With nested sets the
    interpolant restricted to the supercore at ``k`` equals
    ``G_k inv(A_k) G_{k+1}``, which is what the pivot search evaluates.
    """

    def __init__(self, oracle: TensorOracle, start):
        self.oracle = oracle
        self.shape = oracle.shape
        self.d = oracle.d
        self.scale = 0.0
        sets = NestedCrossSets.from_index(self.shape, np.asarray(start) + 1)
        self.left = sets.left
        self.right = sets.right
        self.left_pos = [{tuple(r): 0} for r in (s.tolist()[0] for s in self.left)]
        self.right_pos = [{tuple(r): 0} for r in (s.tolist()[0] for s in self.right)]
        cf = build_cross(self, sets)
        self.blocks = cf.blocks
        self.inter = cf.intersections
        self.lu = cf.lu

    # oracle access with running max-abs
    def values0(self, idx):
        vals = self.oracle.values0(idx)
        if vals.size:
            self.scale = max(self.scale, float(np.max(np.abs(vals))))
        return vals

    def rank(self, k: int) -> int:
        """``r_k`` with ``r_0 = r_d = 1``."""
        return 1 if k in (0, self.d) else self.left[k - 1].shape[0]

    def ranks(self) -> tuple[int, ...]:
        return tuple(s.shape[0] for s in self.left)

    def sets(self) -> NestedCrossSets:
        return NestedCrossSets(self.shape, [s.copy() for s in self.left], [s.copy() for s in self.right])

    def factorization(self) -> CrossFactorization:
        return CrossFactorization(
            self.sets(), [b.copy() for b in self.blocks], [a.copy() for a in self.inter], list(self.lu)
        )

    # supercore at separator k: rows (a, i_k), columns (i_{k+1}, b)
    def super_dims(self, k: int) -> tuple[int, int]:
        return self.rank(k - 1) * self.shape[k - 1], self.shape[k] * self.rank(k + 1)

    def super_indices(self, k: int, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        ra, nb = self.rank(k - 1), self.shape[k]
        a, ik = rows % ra, rows // ra
        ik1, b = cols % nb, cols // nb
        left = self.left[k - 2] if k > 1 else np.zeros((1, 0), dtype=np.int64)
        right = self.right[k] if k < self.d - 1 else np.zeros((1, 0), dtype=np.int64)
        return np.concatenate([left[a], ik[:, None], ik1[:, None], right[b]], axis=1)

    def super_approx(self, k: int, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        ra, nb = self.rank(k - 1), self.shape[k]
        gl = self.blocks[k - 1][rows % ra, rows // ra, :]  # (m, r_k)
        gr = self.blocks[k][:, cols % nb, cols // nb].T  # (m, r_k)
        gl = scipy.linalg.lu_solve(self.lu[k - 1], gl.T, trans=1, check_finite=False).T
        return np.einsum("mr,mr->m", gl, gr)

    def super_residual(self, k: int, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        exact = self.values0(self.super_indices(k, rows, cols))
        return exact - self.super_approx(k, rows, cols)

    def super_entries(self, k: int):
        """Callable ``(rows, cols) -> values`` on the supercore, for matrix cross."""
        return lambda i, j: self.values0(
            self.super_indices(k, np.asarray(i, dtype=np.int64), np.asarray(j, dtype=np.int64))
        )

    def set_positions(self, k: int) -> tuple[list[int], list[int]]:
        """Current ``I^{<=k}`` and ``I^{>k}`` as supercore row/column numbers."""
        ra, nb = self.rank(k - 1), self.shape[k]
        prev = self.left_pos[k - 2] if k > 1 else {(): 0}
        nxt = self.right_pos[k] if k < self.d - 1 else {(): 0}
        rows = [prev[tuple(x[:-1])] + ra * x[-1] for x in self.left[k - 1].tolist()]
        cols = [x[0] + nb * nxt[tuple(x[1:])] for x in self.right[k - 1].tolist()]
        return rows, cols

    def add_cross(self, k: int, row: int, col: int) -> bool:
        """Add supercore cross ``(row, col)`` at separator ``k``.

        Returns ``False`` (and leaves the state untouched) if ``A_k`` would
        become numerically singular.
        """
        idx = self.super_indices(k, np.array([row]), np.array([col]))[0]
        new_left, new_right = idx[:k], idx[k:]
        left = np.vstack([self.left[k - 1], new_left[None]])
        right = np.vstack([self.right[k - 1], new_right[None]])
        r = left.shape[0]
        a = np.empty((r, r))
        a[:-1, :-1] = self.inter[k - 1]
        full = np.concatenate([left, np.tile(new_right, (r, 1))], axis=1)
        a[:, -1] = self.values0(full)
        full = np.concatenate([np.tile(new_left, (r - 1, 1)), right[:-1]], axis=1)
        a[-1, :-1] = self.values0(full)
        try:
            lu = lu_factor_checked(a, NULL_THRESHOLD, where=k)
        except SingularMatrixError:
            return False
        self.left[k - 1], self.right[k - 1] = left, right
        self.left_pos[k - 1][tuple(new_left.tolist())] = r - 1
        self.right_pos[k - 1][tuple(new_right.tolist())] = r - 1
        self.inter[k - 1], self.lu[k - 1] = a, lu
        self._extend_blocks(k, new_left, new_right)
        return True

    def _extend_blocks(self, k: int, new_left, new_right) -> None:
        # G_k gains a column A(I^{<=k-1}, i_k, new_right)
        g = self.blocks[k - 1]
        prev = self.left[k - 2] if k > 1 else np.zeros((1, 0), dtype=np.int64)
        ra, n = prev.shape[0], self.shape[k - 1]
        full = np.empty((ra, n, self.d), dtype=np.int64)
        full[..., : k - 1] = prev[:, None, :]
        full[..., k - 1] = np.arange(n)[None, :]
        full[..., k:] = new_right
        col = self.values0(full.reshape(-1, self.d)).reshape(ra, n, 1)
        self.blocks[k - 1] = np.concatenate([g, col], axis=2)
        # G_{k+1} gains a row A(new_left, i_{k+1}, I^{>k+1})
        g = self.blocks[k]
        nxt = self.right[k] if k < self.d - 1 else np.zeros((1, 0), dtype=np.int64)
        rb, n = nxt.shape[0], self.shape[k]
        full = np.empty((n, rb, self.d), dtype=np.int64)
        full[..., :k] = new_left
        full[..., k] = np.arange(n)[:, None]
        full[..., k + 1 :] = nxt[None, :, :]
        row = self.values0(full.reshape(-1, self.d)).reshape(1, n, rb)
        self.blocks[k] = np.concatenate([g, row], axis=0)

    def replace_sets(self, k: int, rows: list[int], cols: list[int]) -> None:
        """Install a new cross at separator ``k`` given in supercore numbering."""
        # seeds come first, so only the entries past the current rank are new
        for t in range(self.rank(k), len(rows)):
            if not self.add_cross(k, int(rows[t]), int(cols[t])):
                break


def greedy_restricted(
    oracle: TensorOracle,
    tol: float = 1e-12,
    rank_cap=None,
    sweeps: int = 50,
    seed=None,
    inner: str = "single",
    verify_samples: int = 0,
    scan: str = "column-row",
) -> CrossFactorization:
    """Sweep over the separators adding crosses found in the supercores.

    Parameters
    ----------
    oracle : TensorOracle
        The tensor to interpolate.
    tol : float
        Relative stopping tolerance; a pivot is accepted when its residual
        exceeds ``max(tol, 1e-14)`` times the largest entry seen so far.
    rank_cap : int or sequence of int, optional
        Upper limit on each ``r_k``.
    sweeps : int
        Maximum number of sweeps; one sweep is a left-to-right and a
        right-to-left pass.
    seed : int or Generator, optional
        Seeds the random supercore samples.
    inner : {"single", "aca"}
        ``"single"`` adds at most one cross per supercore visit.  ``"aca"``
        runs an adaptive matrix cross on the supercore, keeping the current
        sets as seeds, until it reaches the tolerance or the rank cap.
    scan : {"column-row", "row-column", "rook"}
        How the worst sampled entry is refined into a pivot.  With
        ``"column-row"`` its residual column is scanned on left-to-right passes
        and its row on right-to-left passes; ``"row-column"`` swaps the two;
        ``"rook"`` alternates row and column scans until the pivot is the
        largest in both (at most three rounds).
    verify_samples : int
        If positive, every sweep that adds nothing is followed by a check of
        the full interpolant on this many random entries; the worst one, if
        above tolerance, is inserted at every separator where it is new.

    Returns
    -------
    CrossFactorization
        ``converged`` is ``False`` only when the sweep limit is hit.
        ``stop_reason`` is one of ``"converged"``, ``"rank_cap"``,
        ``"sweep_limit"`` and ``"zero"``.
    """
    if inner not in ("single", "aca"):
        raise ValueError(f"unknown inner strategy {inner!r}")
    if scan not in _SCANS:
        raise ValueError(f"unknown scan {scan!r}, expected one of {_SCANS}")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if sweeps < 1:
        raise ValueError("sweeps must be positive")
    rng = np.random.default_rng(seed)
    if oracle.d == 1:
        return _one_d(oracle)
    caps = _rank_caps(rank_cap, oracle.shape)
    start = _first_nonzero(oracle, rng)
    if start is None:
        cf = build_cross(oracle, NestedCrossSets.empty(oracle.shape))
        cf.stop_reason = "zero"
        return cf
    st = _Sweeper(oracle, start)
    thr = max(tol, NULL_THRESHOLD)
    trace: list[dict] = []
    d = oracle.d
    stop, done = "sweep_limit", 0
    for sweep in range(1, sweeps + 1):
        added, worst_sampled, capped = 0, 0.0, False
        blacklist: set = set()
        for direction, order in (("left", range(1, d)), ("right", range(d - 1, 0, -1))):
            for k in order:
                if st.rank(k) >= caps[k - 1]:
                    capped = True
                    trace.append(_visit(sweep, direction, k, None, 0.0, False, st, "cap"))
                    continue
                if inner == "aca":
                    got, est = _visit_aca(st, k, caps[k - 1], thr, rng)
                    worst_sampled = max(worst_sampled, est)
                    added += got
                    trace.append(_visit(sweep, direction, k, None, est, got > 0, st, "aca"))
                    continue
                m, n = st.super_dims(k)
                count = min(st.rank(k - 1) * st.shape[k - 1] + st.shape[k] * st.rank(k + 1), m * n)
                flat = np.sort(rng.choice(m * n, size=count, replace=False))
                rows, cols = np.divmod(flat, n)
                res = np.abs(st.super_residual(k, rows, cols))
                w = int(np.argmax(res))
                worst_sampled = max(worst_sampled, float(res[w]))
                piv_row, piv_col = _scan(st, k, rows[w], cols[w], direction, scan, m, n)
                piv = float(st.super_residual(k, np.array([piv_row]), np.array([piv_col]))[0])
                key = (k, piv_row, piv_col)
                accepted = False
                if abs(piv) > thr * st.scale and key not in blacklist:
                    accepted = st.add_cross(k, piv_row, piv_col)
                    if not accepted:
                        blacklist.add(key)
                        capped = True
                    added += accepted
                idx = st.super_indices(k, np.array([piv_row]), np.array([piv_col]))[0]
                trace.append(_visit(sweep, direction, k, idx, piv, accepted, st))
        done = sweep
        if added:
            continue
        if verify_samples > 0 and _verify_and_insert(st, verify_samples, thr, caps, rng, trace, sweep):
            continue
        if worst_sampled <= thr * st.scale and not capped:
            stop = "converged"
        else:
            stop = "rank_cap" if capped else "converged"
        break
    cf = st.factorization()
    cf.converged = stop != "sweep_limit"
    cf.stop_reason = stop
    cf.sweeps = done
    cf.trace = trace
    return cf


_SCANS = ("column-row", "row-column", "rook")


def _scan(st: _Sweeper, k: int, row: int, col: int, direction: str, scan: str, m: int, n: int):
    """Pivot search along the residual lines through ``(row, col)``.

    ``"column-row"`` scans the column on left-to-right passes and the row on
    right-to-left passes, ``"row-column"`` the other way round.  ``"rook"``
    alternates row and column scans (at most three rounds) regardless of the
    direction.
    """
    if scan == "rook":
        steps = "rcrcrc"
    elif (scan == "column-row") == (direction == "left"):
        steps = "c"
    else:
        steps = "r"
    for t, step in enumerate(steps):
        if step == "r":
            line = st.super_residual(k, np.full(n, row), np.arange(n))
            new, moved = int(np.argmax(np.abs(line))), "col"
        else:
            line = st.super_residual(k, np.arange(m), np.full(m, col))
            new, moved = int(np.argmax(np.abs(line))), "row"
        if t > 0 and new == (col if moved == "col" else row):
            break  # maximal in both its row and its column
        if moved == "col":
            col = new
        else:
            row = new
    return int(row), int(col)


def _visit(sweep, direction, k, idx, residual, accepted, st: _Sweeper, note=None) -> dict:
    rec = {
        "sweep": sweep,
        "direction": direction,
        "k": k,
        "pivot": None if idx is None else [int(x) + 1 for x in idx],
        "residual": float(residual),
        "accepted": bool(accepted),
        "ranks": list(st.ranks()),
        "calls": st.oracle.distinct,
    }
    if note:
        rec["note"] = note
    return rec


def _visit_aca(st: _Sweeper, k: int, cap: int, thr: float, rng) -> tuple[int, float]:
    m, n = st.super_dims(k)
    rows, cols = st.set_positions(k)
    before = st.rank(k)
    try:
        skel = matrix_cross_adaptive(
            st.super_entries(k),
            (m, n),
            tol=thr,
            rank_cap=cap,
            seed_sets=(rows, cols),
            verify_samples=st.rank(k - 1) * st.shape[k - 1] + st.shape[k] * st.rank(k + 1),
            rng=rng,
        )
    except SingularMatrixError:
        return 0, 0.0
    st.replace_sets(k, list(skel.rows), list(skel.cols))
    return st.rank(k) - before, float(skel.residual)


def _insertion_range(st, idx) -> tuple[int, int]:
    """``(a, b)``: prefixes of ``idx`` are in the left sets up to ``a``, tails in
    the right sets from ``b`` on; only separators ``a < k < b`` are new."""
    d = st.d
    a = 0
    while a < d - 1 and tuple(idx[: a + 1].tolist()) in st.left_pos[a]:
        a += 1
    b = d
    while b > 1 and tuple(idx[b - 1 :].tolist()) in st.right_pos[b - 2]:
        b -= 1
    return a, b


def _verify_and_insert(st: _Sweeper, count: int, thr, caps, rng, trace, sweep) -> bool:
    idx = random_indices(st.shape, count, rng)
    cf = st.factorization()
    res = np.abs(st.values0(idx) - cross_values0(cf, idx))
    w = int(np.argmax(res))
    if res[w] <= thr * st.scale:
        return False
    piv = idx[w]
    a, b = _insertion_range(st, piv)
    ks = range(a + 1, b)
    if not ks or any(st.rank(k) >= caps[k - 1] for k in ks):
        return False
    ok = _insert_full(st, piv, ks)
    trace.append(_visit(sweep, "verify", ks[0], piv, float(res[w]), ok, st))
    return ok


def _insert_full(st: _Sweeper, piv, ks) -> bool:
    """Insert the prefixes/tails of ``piv`` at separators ``ks`` and rebuild."""
    sets = st.sets()
    for k in ks:
        sets.left[k - 1] = np.vstack([sets.left[k - 1], piv[None, :k]])
        sets.right[k - 1] = np.vstack([sets.right[k - 1], piv[None, k:]])
    try:
        cf = build_cross(st, sets)
    except SingularMatrixError:
        return False
    st.left, st.right = sets.left, sets.right
    for k in ks:
        st.left_pos[k - 1][tuple(piv[:k].tolist())] = st.rank(k) - 1
        st.right_pos[k - 1][tuple(piv[k:].tolist())] = st.rank(k) - 1
    st.blocks, st.inter, st.lu = cf.blocks, cf.intersections, cf.lu
    return True


class _GlobalState(_Sweeper):
    """Empty-set state for the global greedy driver."""

    def __init__(self, oracle: TensorOracle):
        self.oracle = oracle
        self.shape = oracle.shape
        self.d = oracle.d
        self.scale = 0.0
        sets = NestedCrossSets.empty(self.shape)
        self.left, self.right = sets.left, sets.right
        self.left_pos = [{} for _ in range(self.d - 1)]
        self.right_pos = [{} for _ in range(self.d - 1)]
        cf = build_cross(self, sets)
        self.blocks, self.inter, self.lu = cf.blocks, cf.intersections, cf.lu


def greedy_global(
    oracle: TensorOracle,
    tol: float = 1e-12,
    rank_cap=None,
    pivot: str = "full",
    samples: int = 1000,
    seed=None,
    max_iter: int = 1000,
) -> CrossFactorization:
    """Greedy interpolation driven by the worst entry of the whole residual.

    Starting from empty sets (``A~ = 0``), each iteration finds ``i*`` with
    the largest ``|A(i*) - A~(i*)|``, exhaustively (``pivot="full"``, only
    below the dense limit) or over ``samples`` random entries
    (``pivot="random"``).  The prefixes and tails of ``i*`` are added at every
    separator where they are not present yet, and the interpolation is
    rebuilt.  A pivot whose insertion would make some ``A_k`` singular is
    rejected and excluded from later searches.

    Iteration stops when the worst residual is at most ``tol`` times the
    largest entry seen, or when the best admissible pivot would exceed
    ``rank_cap``.  If every pivot above tolerance is rejected the result has
    ``stop_reason="stalled"`` and ``converged=False``.
    """
    if pivot not in ("full", "random"):
        raise ValueError(f"unknown pivot strategy {pivot!r}")
    if tol <= 0:
        raise ValueError("tol must be positive")
    rng = np.random.default_rng(seed)
    if oracle.d == 1:
        return _one_d(oracle)
    caps = _rank_caps(rank_cap, oracle.shape)
    st = _GlobalState(oracle)
    thr = max(tol, NULL_THRESHOLD)
    full_idx = _all_indices(oracle.shape) if pivot == "full" else None
    rejected: set = set()
    trace: list[dict] = []
    stop = "sweep_limit"
    it = 0
    for it in range(1, max_iter + 1):
        idx = full_idx if full_idx is not None else random_indices(oracle.shape, samples, rng)
        res = np.abs(st.values0(idx) - cross_values0(st.factorization(), idx))
        order = np.argsort(-res, kind="stable")
        if res[order[0]] <= thr * st.scale or st.scale == 0.0:
            stop = "converged"
            break
        inserted = False
        for pos in order:
            if res[pos] <= thr * st.scale:
                break
            piv = idx[pos]
            key = tuple(piv.tolist())
            if key in rejected:
                continue
            a, b = _insertion_range(st, piv)
            ks = range(a + 1, b)
            if any(st.rank(k) >= caps[k - 1] for k in ks):
                stop = "rank_cap"
                break
            inserted = _insert_full(st, piv, ks)
            trace.append(_visit(it, "global", ks[0], piv, float(res[pos]), inserted, st))
            if inserted:
                break
            rejected.add(key)
        if not inserted:
            if stop != "rank_cap":
                stop = "stalled"
            break
    cf = st.factorization()
    cf.converged = stop in ("converged", "rank_cap")
    cf.stop_reason = stop
    cf.sweeps = it
    cf.trace = trace
    return cf
