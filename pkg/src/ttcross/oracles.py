"""Entry-on-demand tensors with call accounting.

An oracle wraps a vectorized function ``f(indices) -> values`` where
``indices`` is an ``(m, d)`` integer array of 1-based multi-indices.
Algorithms talk to oracles through :meth:`TensorOracle.values0`, which takes
0-based indices, memoizes results and counts calls.
"""

from __future__ import annotations

import math
import threading
from typing import Callable, Sequence

import numpy as np

from .tensor import (
    TensorTrain,
    check_dense_size,
    chebyshev_norm,
    random_tt,
    tt_to_dense,
)

__all__ = [
    "NoisyTTOracle",
    "TensorOracle",
    "estimate_chebyshev",
    "estimate_frobenius",
    "oracle_dense",
    "oracle_inverse_norm",
    "oracle_noisy_tt",
    "oracle_tt",
    "random_indices",
    "residual_oracle",
]


class TensorOracle:
    """A tensor whose entries are computed on demand.

    ``calls`` counts every requested entry, ``distinct`` the number of
    different multi-indices ever evaluated.  Repeated requests are served from
    a cache, so ``func`` sees each multi-index at most once.
    """

    def __init__(
        self,
        shape: Sequence[int],
        func: Callable[[np.ndarray], np.ndarray],
        name: str = "oracle",
        concurrency_safe: bool = True,
    ):
        self.shape = tuple(int(n) for n in shape)
        if not self.shape or min(self.shape) < 1:
            raise ValueError(f"invalid shape {shape}")
        self.func = func
        self.name = name
        self.concurrency_safe = concurrency_safe
        self.calls = 0
        self._cache: dict[bytes, float] = {}
        self._lock = threading.Lock()
        self._key = np.dtype((np.void, 8 * len(self.shape)))

    @property
    def d(self) -> int:
        return len(self.shape)

    @property
    def size(self) -> int:
        return math.prod(self.shape)

    @property
    def distinct(self) -> int:
        return len(self._cache)

    def reset_counters(self) -> None:
        with self._lock:
            self.calls = 0
            self._cache.clear()

    def raw(self, indices0: np.ndarray) -> np.ndarray:
        """Uncounted, uncached evaluation at 0-based indices."""
        indices0 = np.asarray(indices0, dtype=np.int64).reshape(-1, self.d)
        if indices0.shape[0] == 0:
            return np.zeros(0)
        return np.asarray(self.func(indices0 + 1), dtype=float).reshape(-1)

    def values0(self, indices0: np.ndarray) -> np.ndarray:
        """Counted, memoized evaluation at an ``(m, d)`` array of 0-based indices."""
        idx = np.ascontiguousarray(np.asarray(indices0, dtype=np.int64).reshape(-1, self.d))
        m = idx.shape[0]
        if m == 0:
            return np.zeros(0)
        keys = idx.view(self._key).ravel().tolist()
        with self._lock:
            self.calls += m
            cache = self._cache
            out = np.fromiter((cache.get(k, np.nan) for k in keys), dtype=float, count=m)
            missing = np.flatnonzero(np.isnan(out))
        if missing.size:
            # NaN is the "not cached" marker; a NaN-valued entry is simply recomputed
            new_keys = [keys[i] for i in missing]
            uniq = {}
            for pos, k in zip(missing.tolist(), new_keys):
                uniq.setdefault(k, pos)
            fresh = self.raw(idx[list(uniq.values())])
            with self._lock:
                cache.update(zip(uniq.keys(), fresh.tolist()))
            lookup = dict(zip(uniq.keys(), fresh.tolist()))
            out[missing] = [lookup[k] for k in new_keys]
        return out

    def evaluate(self, indices) -> np.ndarray:
        """Counted evaluation at 1-based indices, single or ``(m, d)`` batch."""
        arr = np.asarray(indices, dtype=np.int64)
        single = arr.ndim == 1
        arr = arr.reshape(-1, self.d)
        if np.any(arr < 1) or np.any(arr > np.asarray(self.shape)):
            raise IndexError(f"multi-index out of range for shape {self.shape}")
        vals = self.values0(arr - 1)
        return vals[0] if single else vals

    def __call__(self, idx) -> float:
        return float(self.evaluate(np.asarray(idx, dtype=np.int64).reshape(self.d)))

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.name!r}, shape={self.shape})"


def oracle_inverse_norm(shape: Sequence[int]) -> TensorOracle:
    """``A(i_1, ..., i_d) = 1 / sqrt(i_1^2 + ... + i_d^2)`` with 1-based indices."""

    def f(idx: np.ndarray) -> np.ndarray:
        return 1.0 / np.sqrt(np.sum(idx.astype(float) ** 2, axis=1))

    return TensorOracle(shape, f, name="inverse-norm")


def oracle_dense(a: np.ndarray, name: str = "dense") -> TensorOracle:
    a = np.asarray(a, dtype=float)
    return TensorOracle(a.shape, lambda idx: a[tuple((idx - 1).T)], name=name)


def oracle_tt(tt: TensorTrain, name: str = "tt") -> TensorOracle:
    return TensorOracle(tt.shape, lambda idx: tt.values(idx - 1), name=name)


class NoisyTTOracle(TensorOracle):
    """``A = X + mu * R`` with ``|X| = |R| = 1`` in the Chebyshev norm.

    ``X`` is a random TT (uniform ``[0, 1)`` cores) rescaled by the max-abs of
    its dense values; ``R`` is an i.i.d. uniform ``[0, 1)`` dense tensor
    rescaled the same way.  ``X`` is drawn first, then ``R``, from one
    ``default_rng(seed)`` stream.
    """

    def __init__(
        self,
        shape: Sequence[int],
        ranks: Sequence[int],
        mu: float,
        seed: int | None = None,
        limit: int | None = None,
    ):
        shape = tuple(int(n) for n in shape)
        check_dense_size(shape, limit)
        rng = np.random.default_rng(seed)
        tt = random_tt(shape, ranks, rng)
        dense_x = tt_to_dense(tt, limit)
        scale = chebyshev_norm(dense_x)
        self.generator = tt.scale(1.0 / scale)
        self.x = dense_x / scale
        noise = rng.random(shape)
        self.noise = noise / chebyshev_norm(noise)
        self.mu = float(mu)
        self.dense = self.x + self.mu * self.noise
        dense = self.dense
        super().__init__(shape, lambda idx: dense[tuple((idx - 1).T)], name="noisy-tt")

    @property
    def reference_error(self) -> float:
        """``|A - X|`` in the Chebyshev norm, measured on the dense values."""
        return chebyshev_norm(self.dense - self.x)


def oracle_noisy_tt(shape, ranks, mu: float, seed: int | None = None, limit: int | None = None):
    return NoisyTTOracle(shape, ranks, mu, seed, limit)


def random_indices(shape: Sequence[int], count: int, seed=None) -> np.ndarray:
    """``count`` i.i.d. uniform 0-based multi-indices, one ``integers`` draw per mode."""
    rng = np.random.default_rng(seed)
    return np.stack([rng.integers(0, n, size=count) for n in shape], axis=1)


def _all_indices(shape: Sequence[int]) -> np.ndarray:
    check_dense_size(shape)
    grids = np.meshgrid(*[np.arange(n) for n in shape], indexing="ij")
    return np.stack([g.ravel(order="F") for g in grids], axis=1)


def _sample_values(oracle: TensorOracle, samples: int | None, seed, indices) -> np.ndarray:
    if indices is None:
        if samples is None:
            indices = _all_indices(oracle.shape)
        else:
            if samples < 1:
                raise ValueError("sample count must be positive")
            indices = random_indices(oracle.shape, samples, seed)
    return oracle.raw(indices)


def estimate_chebyshev(
    oracle: TensorOracle, samples: int | None = 10**5, seed=None, indices=None
) -> float:
    """Max-abs over a random sample (the full index set when ``samples=None``).

    Evaluations here are not counted against the oracle.
    """
    vals = _sample_values(oracle, samples, seed, indices)
    return float(np.max(np.abs(vals)))


def estimate_frobenius(
    oracle: TensorOracle, samples: int | None = 10**5, seed=None, indices=None
) -> float:
    """``sqrt(N / m * sum |A(i)|^2)`` over ``m`` sampled entries of ``N`` total."""
    vals = _sample_values(oracle, samples, seed, indices)
    return float(math.sqrt(oracle.size / vals.size * float(np.sum(vals**2))))


class _ResidualOracle(TensorOracle):
    def __init__(self, base: TensorOracle, cf):
        from .cross import cross_values0

        self.base = base
        self.cf = cf
        super().__init__(
            base.shape,
            lambda idx: base.raw(idx - 1) - cross_values0(cf, idx - 1),
            name=f"residual({base.name})",
            concurrency_safe=base.concurrency_safe,
        )
        self._approx = cross_values0

    def values0(self, indices0):
        indices0 = np.asarray(indices0, dtype=np.int64).reshape(-1, self.d)
        return self.base.values0(indices0) - self._approx(self.cf, indices0)

    @property
    def calls(self):
        return self.base.calls

    @calls.setter
    def calls(self, value):
        pass

    @property
    def distinct(self):
        return self.base.distinct


def residual_oracle(oracle: TensorOracle, cf) -> TensorOracle:
    """``E = A - A~``; evaluations are charged to the underlying oracle."""
    return _ResidualOracle(oracle, cf)
