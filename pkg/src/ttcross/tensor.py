"""Dense and tensor-train representations.

Dense tensors are plain ``numpy.ndarray`` objects.  Whenever a tensor has to
be flattened (file I/O, unfoldings, linear indices) the little-endian order is
used: the first index runs fastest, i.e. ``order="F"`` in numpy terms.

Multi-indices passed to the public functions of this module are 1-based,
``1 <= i_k <= n_k``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

__all__ = [
    "DENSE_LIMIT",
    "DenseLimitError",
    "TensorTrain",
    "check_dense_size",
    "chebyshev_norm",
    "frobenius_norm",
    "from_flat",
    "load_tt",
    "random_tt",
    "save_tt",
    "to_flat",
    "tt_evaluate",
    "tt_svd",
    "tt_to_dense",
    "unfold",
]

DENSE_LIMIT = 2**24
"""Largest number of entries a dense tensor may have unless overridden."""


class DenseLimitError(ValueError):
    """Raised when an operation would materialize too many entries."""


def check_dense_size(shape: Sequence[int], limit: int | None = None) -> int:
    size = math.prod(int(n) for n in shape)
    limit = DENSE_LIMIT if limit is None else limit
    if size > limit:
        raise DenseLimitError(
            f"dense tensor of shape {tuple(shape)} has {size} entries, limit is {limit}"
        )
    return size


def to_flat(a: np.ndarray) -> np.ndarray:
    """Values of ``a`` in little-endian order (first index fastest)."""
    return np.asarray(a).ravel(order="F")


def from_flat(values: np.ndarray, shape: Sequence[int]) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.size != math.prod(shape):
        raise ValueError(f"{values.size} values do not fill shape {tuple(shape)}")
    return values.reshape(tuple(shape), order="F")


@dataclass(frozen=True)
class TensorTrain:
    """A tensor in the TT format.

    ``cores[k]`` has shape ``(r_{k-1}, n_k, r_k)`` with border ranks
    ``r_0 = r_d = 1``.
    """

    cores: tuple[np.ndarray, ...]

    def __init__(self, cores: Sequence[np.ndarray]):
        cores = tuple(np.asarray(c, dtype=float) for c in cores)
        if not cores:
            raise ValueError("a tensor train needs at least one core")
        for k, c in enumerate(cores):
            if c.ndim != 3:
                raise ValueError(f"core {k + 1} must be 3-way, got shape {c.shape}")
        if cores[0].shape[0] != 1 or cores[-1].shape[2] != 1:
            raise ValueError("border ranks must be 1")
        for k in range(len(cores) - 1):
            if cores[k].shape[2] != cores[k + 1].shape[0]:
                raise ValueError(
                    f"rank mismatch between cores {k + 1} and {k + 2}: "
                    f"{cores[k].shape[2]} != {cores[k + 1].shape[0]}"
                )
        object.__setattr__(self, "cores", cores)

    @property
    def d(self) -> int:
        return len(self.cores)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(c.shape[1] for c in self.cores)

    @property
    def ranks(self) -> tuple[int, ...]:
        """Inner ranks ``(r_1, ..., r_{d-1})``."""
        return tuple(c.shape[2] for c in self.cores[:-1])

    def values(self, indices: np.ndarray) -> np.ndarray:
        """Evaluate at a batch of 0-based multi-indices of shape ``(m, d)``."""
        indices = np.asarray(indices, dtype=np.int64).reshape(-1, self.d)
        v = np.ones((indices.shape[0], 1))
        for k, core in enumerate(self.cores):
            # (m, r) x (m, r, r') -> (m, r')
            v = np.einsum("mr,mrs->ms", v, core[:, indices[:, k], :].transpose(1, 0, 2))
        return v[:, 0]

    def scale(self, alpha: float) -> "TensorTrain":
        cores = list(self.cores)
        cores[0] = alpha * cores[0]
        return TensorTrain(cores)

    def __repr__(self) -> str:
        return f"TensorTrain(shape={self.shape}, ranks={self.ranks})"


def _as_batch(idx, shape: Sequence[int]) -> tuple[np.ndarray, bool]:
    """Convert 1-based index(es) to a 0-based ``(m, d)`` array."""
    arr = np.asarray(idx, dtype=np.int64)
    single = arr.ndim == 1
    arr = arr.reshape(-1, len(shape)) if arr.size else arr.reshape(0, len(shape))
    if arr.shape[1] != len(shape):
        raise IndexError(f"expected {len(shape)} indices per entry, got {arr.shape[1]}")
    dims = np.asarray(shape)
    if np.any(arr < 1) or np.any(arr > dims):
        raise IndexError(f"multi-index out of range for shape {tuple(shape)}")
    return arr - 1, single


def tt_evaluate(tt: TensorTrain, idx) -> float | np.ndarray:
    """Entry (or entries) of a tensor train at 1-based multi-index ``idx``.

    ``idx`` may be a single multi-index or an ``(m, d)`` array of them.
    """
    batch, single = _as_batch(idx, tt.shape)
    vals = tt.values(batch)
    return float(vals[0]) if single else vals


def tt_to_dense(tt: TensorTrain, limit: int | None = None) -> np.ndarray:
    check_dense_size(tt.shape, limit)
    res = tt.cores[0].reshape(tt.shape[0], -1)  # (n_1, r_1)
    for core in tt.cores[1:]:
        r, n, s = core.shape
        res = (res @ core.reshape(r, n * s)).reshape(-1, n, s)
        # new row index = old row + N * i_k keeps the first index fastest
        res = res.transpose(1, 0, 2).reshape(-1, s)
    # rows of ``res`` are ordered i_1 fastest, which is exactly order="F"
    return res.reshape(tt.shape, order="F")


def unfold(a: np.ndarray, k: int) -> np.ndarray:
    """The ``k``-th unfolding: rows group ``i_1..i_k``, columns ``i_{k+1}..i_d``.

    Row and column multi-indices are linearized little-endian.
    """
    a = np.asarray(a)
    d = a.ndim
    if not 1 <= k <= d - 1:
        raise ValueError(f"split position must be in 1..{d - 1}, got {k}")
    rows = math.prod(a.shape[:k])
    return a.reshape(rows, -1, order="F")


def chebyshev_norm(a: np.ndarray) -> float:
    a = np.asarray(a)
    return float(np.max(np.abs(a))) if a.size else 0.0


def frobenius_norm(a: np.ndarray) -> float:
    return float(np.linalg.norm(np.asarray(a).ravel()))


def tt_svd(
    a: np.ndarray,
    ranks: Sequence[int] | None = None,
    tol: float | None = None,
    limit: int | None = None,
) -> TensorTrain:
    """Approximate a dense tensor in the TT format by successive truncated SVDs.

    Exactly one of ``ranks`` (inner ranks ``r_1..r_{d-1}``) and ``tol`` must be
    given.  ``tol`` is a relative Frobenius accuracy; it is split evenly as
    ``tol * ||a|| / sqrt(d-1)`` over the ``d - 1`` truncations.  A rank that
    exceeds what the current reshaped matrix supports is clamped, and an
    all-zero tensor yields rank-1 zero cores.
    """
    if (ranks is None) == (tol is None):
        raise ValueError("give exactly one of ranks and tol")
    a = np.asarray(a, dtype=float)
    shape = a.shape
    d = a.ndim
    check_dense_size(shape, limit)
    if d == 1:
        return TensorTrain([a.reshape(1, -1, 1)])
    if ranks is not None:
        ranks = [int(r) for r in ranks]
        if len(ranks) != d - 1:
            raise ValueError(f"need {d - 1} ranks, got {len(ranks)}")
        for k, r in enumerate(ranks, start=1):
            bound = min(math.prod(shape[:k]), math.prod(shape[k:]))
            if not 1 <= r <= bound:
                raise ValueError(f"rank r_{k}={r} outside 1..{bound}")
    elif tol < 0:
        raise ValueError("tol must be non-negative")

    total = frobenius_norm(a)
    if total == 0.0:
        return TensorTrain([np.zeros((1, n, 1)) for n in shape])
    delta = 0.0 if tol is None else tol * total / math.sqrt(d - 1)

    cores = []
    r_prev = 1
    rest = a.reshape(-1, order="F")
    for k in range(d - 1):
        mat = rest.reshape(r_prev * shape[k], -1, order="F")
        u, s, vt = np.linalg.svd(mat, full_matrices=False)
        if ranks is not None:
            r = min(ranks[k], s.size)
        else:
            tail = np.sqrt(np.cumsum(s[::-1] ** 2))[::-1]  # tail[j] = ||s[j:]||
            r = int(np.count_nonzero(tail > delta)) or 1
        cores.append(u[:, :r].reshape(r_prev, shape[k], r, order="F"))
        rest = (s[:r, None] * vt[:r]).reshape(-1, order="F")
        r_prev = r
    cores.append(rest.reshape(r_prev, shape[-1], 1, order="F"))
    return TensorTrain(cores)


def random_tt(
    shape: Sequence[int], ranks: Sequence[int], seed: int | np.random.Generator | None = None
) -> TensorTrain:
    """TT with i.i.d. uniform ``[0, 1)`` cores.

    Draws come from ``numpy.random.default_rng(seed)`` (PCG64), core by core
    from the first to the last, each core filled in C order.  The same seed
    therefore always yields the same cores.
    """
    shape = [int(n) for n in shape]
    ranks = [int(r) for r in ranks]
    if len(ranks) != len(shape) - 1:
        raise ValueError(f"need {len(shape) - 1} ranks, got {len(ranks)}")
    if any(n < 1 for n in shape) or any(r < 1 for r in ranks):
        raise ValueError("mode sizes and ranks must be positive")
    rng = np.random.default_rng(seed)
    full = [1, *ranks, 1]
    return TensorTrain(
        [rng.random((full[k], n, full[k + 1])) for k, n in enumerate(shape)]
    )


# On-disk layout, version 1 (JSON text):
#   {"format": "tensor-train", "version": 1, "d": d,
#    "shape": [n_1, ..., n_d], "ranks": [1, r_1, ..., r_{d-1}, 1],
#    "cores": [[...], ...]}
# Core k is stored as a flat list of r_{k-1} * n_k * r_k floats in
# little-endian order: X(s_{k-1}, i_k, s_k) sits at
# s_{k-1} + r_{k-1} * (i_k + n_k * s_k), all indices 0-based.
TT_FORMAT = "tensor-train"


def save_tt(tt: TensorTrain, path: str | Path) -> None:
    doc = {
        "format": TT_FORMAT,
        "version": 1,
        "d": tt.d,
        "shape": list(tt.shape),
        "ranks": [1, *tt.ranks, 1],
        "cores": [to_flat(c).tolist() for c in tt.cores],
    }
    Path(path).write_text(json.dumps(doc))


def load_tt(path: str | Path) -> TensorTrain:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != TT_FORMAT or doc.get("version") != 1:
        raise ValueError(f"{path}: not a version-1 tensor-train file")
    shape, ranks = doc["shape"], doc["ranks"]
    if len(shape) != doc["d"] or len(ranks) != doc["d"] + 1:
        raise ValueError(f"{path}: inconsistent header")
    cores = [
        from_flat(vals, (ranks[k], shape[k], ranks[k + 1]))
        for k, vals in enumerate(doc["cores"])
    ]
    return TensorTrain(cores)
