"""The TT cross interpolation formula on nested index sets.

For separators ``k = 1..d-1`` the left set ``I^{<=k}`` holds ``r_k`` prefixes
``(i_1..i_k)`` and the right set ``I^{>k}`` holds ``r_k`` suffixes
``(i_{k+1}..i_d)``.  The interpolant is

    A~(i) = G_1(i_1) inv(A_1) G_2(i_2) inv(A_2) ... G_d(i_d)

with blocks ``G_k = A(I^{<=k-1}, i_k, I^{>k})`` of shape
``(r_{k-1}, n_k, r_k)`` and intersections ``A_k = A(I^{<=k}, I^{>k})``.

Sets are stored 0-based; ``to_dict``/``from_dict`` and violation reports are
1-based.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg

from .maxvol import NULL_THRESHOLD, SingularMatrixError, lu_factor_checked
from .tensor import TensorTrain

__all__ = [
    "CrossFactorization",
    "NestedCrossSets",
    "Violation",
    "block_indices",
    "build_cross",
    "check_nestedness",
    "cross_evaluate",
    "cross_to_tt",
    "cross_values0",
    "distinct_block_entries",
    "interpolation_residual_on_blocks",
    "parameter_count",
]


def _empty(width: int = 0) -> np.ndarray:
    return np.zeros((0, width), dtype=np.int64)


@dataclass
class NestedCrossSets:
    """Left and right interpolation sets for every separator.

    ``left[k-1]`` is an ``(r_k, k)`` array, ``right[k-1]`` an ``(r_k, d-k)``
    array, for ``k = 1..d-1``.
    """

    shape: tuple[int, ...]
    left: list[np.ndarray]
    right: list[np.ndarray]

    def __post_init__(self):
        self.shape = tuple(int(n) for n in self.shape)
        d = len(self.shape)
        if len(self.left) != d - 1 or len(self.right) != d - 1:
            raise ValueError(f"need {d - 1} left and right sets")
        self.left = [np.asarray(s, dtype=np.int64).reshape(-1, k + 1) for k, s in enumerate(self.left)]
        self.right = [
            np.asarray(s, dtype=np.int64).reshape(-1, d - k - 1) for k, s in enumerate(self.right)
        ]
        for k in range(d - 1):
            if self.left[k].shape[0] != self.right[k].shape[0]:
                raise ValueError(
                    f"separator {k + 1}: {self.left[k].shape[0]} left vs "
                    f"{self.right[k].shape[0]} right indices"
                )

    @property
    def d(self) -> int:
        return len(self.shape)

    @property
    def ranks(self) -> tuple[int, ...]:
        return tuple(s.shape[0] for s in self.left)

    def left_of(self, k: int) -> np.ndarray:
        """``I^{<=k}`` for ``k = 0..d-1``; ``I^{<=0}`` is the single empty prefix."""
        return np.zeros((1, 0), dtype=np.int64) if k == 0 else self.left[k - 1]

    def right_of(self, k: int) -> np.ndarray:
        """``I^{>k}`` for ``k = 1..d``; ``I^{>d}`` is the single empty suffix."""
        return np.zeros((1, 0), dtype=np.int64) if k == self.d else self.right[k - 1]

    @classmethod
    def empty(cls, shape: Sequence[int]) -> "NestedCrossSets":
        d = len(shape)
        return cls(shape, [_empty(k + 1) for k in range(d - 1)], [_empty(d - k - 1) for k in range(d - 1)])

    @classmethod
    def from_index(cls, shape: Sequence[int], idx) -> "NestedCrossSets":
        """Rank-1 sets cut from one 1-based multi-index."""
        idx0 = np.asarray(idx, dtype=np.int64) - 1
        d = len(shape)
        return cls(
            shape,
            [idx0[None, : k + 1] for k in range(d - 1)],
            [idx0[None, k + 1 :] for k in range(d - 1)],
        )

    def copy(self) -> "NestedCrossSets":
        return NestedCrossSets(self.shape, [s.copy() for s in self.left], [s.copy() for s in self.right])

    def to_dict(self) -> dict:
        return {
            "shape": list(self.shape),
            "ranks": list(self.ranks),
            "left": [(s + 1).tolist() for s in self.left],
            "right": [(s + 1).tolist() for s in self.right],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "NestedCrossSets":
        d = len(doc["shape"])
        left = [np.asarray(s, dtype=np.int64).reshape(-1, k + 1) - 1 for k, s in enumerate(doc["left"])]
        right = [np.asarray(s, dtype=np.int64).reshape(-1, d - k - 1) - 1 for k, s in enumerate(doc["right"])]
        return cls(doc["shape"], left, right)


@dataclass(frozen=True)
class Violation:
    """A nestedness or distinctness defect at separator ``k`` (1-based)."""

    k: int
    side: str  # "left", "right" or "duplicate-left"/"duplicate-right"
    index: tuple[int, ...]  # 1-based offending multi-index


def _rows_as_set(a: np.ndarray) -> set:
    return {tuple(r) for r in a.tolist()}


def check_nestedness(sets: NestedCrossSets) -> list[Violation]:
    """Every violation of two-side nestedness and of distinctness.

    A left index at separator ``k`` must have its prefix in ``I^{<=k-1}``; a
    right index at ``k`` must have its suffix in ``I^{>k+1}``.
    """
    out: list[Violation] = []
    d = sets.d
    for k in range(1, d):
        left, right = sets.left_of(k), sets.right_of(k)
        for side, arr in (("left", left), ("right", right)):
            seen = set()
            for row in arr.tolist():
                if tuple(row) in seen:
                    out.append(Violation(k, f"duplicate-{side}", tuple(x + 1 for x in row)))
                seen.add(tuple(row))
        if k > 1:
            prev = _rows_as_set(sets.left_of(k - 1))
            for row in left.tolist():
                if tuple(row[:-1]) not in prev:
                    out.append(Violation(k, "left", tuple(x + 1 for x in row)))
        if k < d - 1:
            nxt = _rows_as_set(sets.right_of(k + 1))
            for row in right.tolist():
                if tuple(row[1:]) not in nxt:
                    out.append(Violation(k, "right", tuple(x + 1 for x in row)))
    return out


def parameter_count(shape: Sequence[int], ranks: Sequence[int]) -> int:
    """``sum_k r_{k-1} n_k r_k - sum_k r_k^2`` with ``r_0 = r_d = 1``."""
    shape = [int(n) for n in shape]
    ranks = [int(r) for r in ranks]
    if len(ranks) != len(shape) - 1:
        raise ValueError(f"need {len(shape) - 1} ranks, got {len(ranks)}")
    full = [1, *ranks, 1]
    return sum(full[k] * n * full[k + 1] for k, n in enumerate(shape)) - sum(r * r for r in ranks)


def block_indices(sets: NestedCrossSets, k: int) -> np.ndarray:
    """0-based multi-indices of block ``G_k`` (``k = 1..d``), laid out so that
    ``values.reshape(r_{k-1}, n_k, r_k)`` gives the block."""
    left, right = sets.left_of(k - 1), sets.right_of(k)
    n = sets.shape[k - 1]
    a, b = left.shape[0], right.shape[0]
    full = np.empty((a, n, b, sets.d), dtype=np.int64)
    full[..., : k - 1] = left[:, None, None, :]
    full[..., k - 1] = np.arange(n)[None, :, None]
    full[..., k:] = right[None, None, :, :]
    return full.reshape(-1, sets.d)


def intersection_indices(sets: NestedCrossSets, k: int) -> np.ndarray:
    """0-based multi-indices of ``A_k``, laid out as an ``r_k x r_k`` matrix."""
    left, right = sets.left_of(k), sets.right_of(k)
    full = np.empty((left.shape[0], right.shape[0], sets.d), dtype=np.int64)
    full[..., :k] = left[:, None, :]
    full[..., k:] = right[None, :, :]
    return full.reshape(-1, sets.d)


@dataclass
class CrossFactorization:
    """Sampled blocks and factored intersections realizing the cross formula.

    ``blocks[k-1]`` is ``G_k``; ``intersections[k-1]`` is ``A_k`` and
    ``lu[k-1]`` its LU factorization with partial pivoting.  The remaining
    fields describe how the factorization was built.
    """

    sets: NestedCrossSets
    blocks: list[np.ndarray]
    intersections: list[np.ndarray]
    lu: list = field(repr=False, default_factory=list)
    converged: bool = True
    stop_reason: str = "built"
    sweeps: int = 0
    trace: list = field(default_factory=list, repr=False)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.sets.shape

    @property
    def d(self) -> int:
        return self.sets.d

    @property
    def ranks(self) -> tuple[int, ...]:
        return self.sets.ranks

    @property
    def is_zero(self) -> bool:
        return any(r == 0 for r in self.ranks)


def factor_intersections(intersections, threshold: float = NULL_THRESHOLD) -> list:
    return [lu_factor_checked(a, threshold, where=k) for k, a in enumerate(intersections, start=1)]


def build_cross(oracle, sets: NestedCrossSets) -> CrossFactorization:
    """Sample all blocks and intersections of ``sets`` from ``oracle``.

    Raises :class:`SingularMatrixError` naming the separator (``where``) if an
    intersection matrix is numerically singular.
    """
    d = sets.d
    ranks = [1, *sets.ranks, 1]
    blocks = []
    for k in range(1, d + 1):
        vals = oracle.values0(block_indices(sets, k)) if ranks[k - 1] * ranks[k] else np.zeros(0)
        blocks.append(vals.reshape(ranks[k - 1], sets.shape[k - 1], ranks[k]))
    inters = []
    for k in range(1, d):
        vals = oracle.values0(intersection_indices(sets, k)) if ranks[k] else np.zeros(0)
        inters.append(vals.reshape(ranks[k], ranks[k]))
    lu = [] if any(r == 0 for r in sets.ranks) else factor_intersections(inters)
    return CrossFactorization(sets, blocks, inters, lu)


def _solve_right(lu, v: np.ndarray) -> np.ndarray:
    """``v @ inv(A)`` for a batch of row vectors ``v``."""
    return scipy.linalg.lu_solve(lu, v.T, trans=1, check_finite=False).T


def cross_values0(cf: CrossFactorization, indices0: np.ndarray) -> np.ndarray:
    """Interpolant at an ``(m, d)`` array of 0-based multi-indices."""
    idx = np.asarray(indices0, dtype=np.int64).reshape(-1, cf.d)
    if cf.is_zero:
        return np.zeros(idx.shape[0])
    v = np.ones((idx.shape[0], 1))
    for k, block in enumerate(cf.blocks):
        v = np.einsum("mr,rms->ms", v, block[:, idx[:, k], :])
        if k < cf.d - 1:
            v = _solve_right(cf.lu[k], v)
    return v[:, 0]


def cross_evaluate(cf: CrossFactorization, idx) -> float | np.ndarray:
    """Interpolant at a 1-based multi-index or an ``(m, d)`` batch of them."""
    arr = np.asarray(idx, dtype=np.int64)
    single = arr.ndim == 1
    arr = arr.reshape(-1, cf.d)
    if np.any(arr < 1) or np.any(arr > np.asarray(cf.shape)):
        raise IndexError(f"multi-index out of range for shape {cf.shape}")
    vals = cross_values0(cf, arr - 1)
    return float(vals[0]) if single else vals


def cross_to_tt(cf: CrossFactorization) -> TensorTrain:
    """TT with cores ``G_k inv(A_k)`` (``k < d``) and ``G_d``."""
    if cf.is_zero:
        return TensorTrain([np.zeros((1, n, 1)) for n in cf.shape])
    cores = []
    for k, block in enumerate(cf.blocks):
        if k < cf.d - 1:
            r0, n, r1 = block.shape
            block = _solve_right(cf.lu[k], block.reshape(r0 * n, r1)).reshape(r0, n, r1)
        cores.append(block)
    return TensorTrain(cores)


def _block_union(cf: CrossFactorization) -> np.ndarray:
    if cf.is_zero:
        return _empty(cf.d)
    return np.unique(np.concatenate([block_indices(cf.sets, k) for k in range(1, cf.d + 1)]), axis=0)


def distinct_block_entries(cf: CrossFactorization) -> int:
    """Number of different tensor entries the formula is built from."""
    return int(_block_union(cf).shape[0])


def interpolation_residual_on_blocks(cf: CrossFactorization, oracle, relative: bool = False) -> float:
    """Max ``|A - A~|`` over every entry of every block ``G_k``.

    With ``relative=True`` the result is divided by the max-abs sampled value.
    """
    idx = _block_union(cf)
    if idx.shape[0] == 0:
        return 0.0
    exact = oracle.values0(idx)
    err = float(np.max(np.abs(exact - cross_values0(cf, idx))))
    if relative:
        scale = float(np.max(np.abs(exact)))
        return err / scale if scale > 0 else err
    return err


def unfolding_bound(shape: Sequence[int], k: int) -> int:
    """Largest possible rank at separator ``k``."""
    return min(math.prod(shape[:k]), math.prod(shape[k:]))


__all__ += ["SingularMatrixError", "intersection_indices", "unfolding_bound", "factor_intersections"]
