import itertools
import math
import threading

import numpy as np
import pytest

from ttcross.cross import NestedCrossSets, build_cross
from ttcross.oracles import (
    NoisyTTOracle,
    TensorOracle,
    estimate_chebyshev,
    estimate_frobenius,
    oracle_dense,
    oracle_inverse_norm,
    oracle_noisy_tt,
    oracle_tt,
    random_indices,
    residual_oracle,
)
from ttcross.tensor import chebyshev_norm, frobenius_norm, random_tt, tt_to_dense


def test_inverse_norm_values():
    assert oracle_inverse_norm((4,) * 4)([1, 1, 1, 1]) == 0.5
    assert oracle_inverse_norm((5, 5))([3, 4]) == pytest.approx(0.2, rel=1e-15)
    assert oracle_inverse_norm((2,) * 16)([1] * 16) == 0.25


def test_counters_total_and_distinct():
    o = oracle_inverse_norm((3, 3))
    o.evaluate([[1, 1], [2, 2], [1, 1]])
    assert o.calls == 3 and o.distinct == 2
    o([2, 2])
    assert o.calls == 4 and o.distinct == 2
    o.reset_counters()
    assert o.calls == 0 and o.distinct == 0


def test_function_sees_each_index_once():
    seen = []

    def f(idx):
        seen.extend(map(tuple, idx.tolist()))
        return idx.sum(axis=1).astype(float)

    o = TensorOracle((4, 4), f)
    o.values0(np.array([[0, 0], [1, 2], [0, 0], [1, 2]]))
    o.values0(np.array([[1, 2], [3, 3]]))
    assert sorted(seen) == [(1, 1), (2, 3), (4, 4)]


def test_deterministic_bit_identical():
    o = oracle_inverse_norm((7, 7, 7))
    idx = random_indices(o.shape, 50, seed=1)
    a = o.values0(idx)
    b = o.values0(idx)
    c = o.raw(idx)
    assert np.array_equal(a, b) and np.array_equal(a, c)


def test_out_of_range():
    o = oracle_inverse_norm((2, 2))
    with pytest.raises(IndexError):
        o([3, 1])


def test_concurrent_counting_exact():
    o = oracle_inverse_norm((50, 50))
    idx = random_indices(o.shape, 200, seed=3)

    def work():
        for _ in range(20):
            o.values0(idx)

    threads = [threading.Thread(target=work) for _ in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert o.calls == 4 * 20 * 200
    assert o.distinct == len({tuple(r) for r in idx.tolist()})


def test_dense_and_tt_oracles():
    a = np.random.default_rng(0).random((2, 3, 4))
    o = oracle_dense(a)
    assert o([2, 3, 4]) == a[1, 2, 3]
    tt = random_tt((2, 3, 4), (2, 2), seed=0)
    ot = oracle_tt(tt)
    assert ot([2, 1, 3]) == pytest.approx(tt_to_dense(tt)[1, 0, 2], rel=1e-14)


def test_noisy_oracle_normalization_and_decomposition():
    o = oracle_noisy_tt((2,) * 8, (3,) * 7, 1e-7, seed=4)
    assert isinstance(o, NoisyTTOracle)
    assert chebyshev_norm(o.x) == pytest.approx(1.0, rel=1e-15)
    assert chebyshev_norm(o.noise) == pytest.approx(1.0, rel=1e-15)
    diff = o.dense - o.x
    # exact up to the rounding of x + mu R, one unit in the last place of |A| <= 2
    assert np.max(np.abs(diff - 1e-7 * o.noise)) <= 2 * np.finfo(float).eps
    assert np.min(np.abs(diff)) <= 1e-7
    assert np.max(np.abs(diff)) == pytest.approx(1e-7, rel=1e-9)
    assert o.reference_error == pytest.approx(1e-7, rel=1e-9)


def test_noisy_oracle_zero_noise_and_seed():
    o = oracle_noisy_tt((2,) * 6, (2,) * 5, 0.0, seed=1)
    np.testing.assert_array_equal(o.dense, o.x)
    p = oracle_noisy_tt((2,) * 6, (2,) * 5, 0.0, seed=1)
    np.testing.assert_array_equal(o.dense, p.dense)
    idx = random_indices(o.shape, 10, seed=0)
    np.testing.assert_array_equal(o.values0(idx), o.x[tuple(idx.T)])


def test_noisy_oracle_dense_limit():
    with pytest.raises(ValueError):
        oracle_noisy_tt((2,) * 10, (2,) * 9, 1e-3, seed=0, limit=512)


def test_estimators_constant_tensor():
    o = TensorOracle((3, 4, 5), lambda idx: np.full(idx.shape[0], -2.0))
    assert estimate_chebyshev(o, samples=7, seed=0) == 2.0
    assert estimate_frobenius(o, samples=7, seed=0) == pytest.approx(2.0 * math.sqrt(60), rel=1e-14)


def test_estimators_full_index_set_exact():
    a = np.random.default_rng(2).standard_normal((3, 4, 2))
    o = oracle_dense(a)
    assert estimate_chebyshev(o, samples=None) == chebyshev_norm(a)
    assert estimate_frobenius(o, samples=None) == pytest.approx(frobenius_norm(a), rel=1e-13)


def test_estimators_do_not_count_and_are_seeded():
    o = oracle_inverse_norm((10,) * 5)
    a = estimate_frobenius(o, samples=1000, seed=5)
    assert a == estimate_frobenius(o, samples=1000, seed=5)
    assert o.calls == 0
    with pytest.raises(ValueError):
        estimate_chebyshev(o, samples=0)


def test_estimators_converge_with_samples():
    a = np.random.default_rng(3).random((6, 6, 6))
    o = oracle_dense(a)
    exact = frobenius_norm(a)
    errs = [abs(estimate_frobenius(o, samples=s, seed=1) - exact) / exact for s in (10, 10**5)]
    assert errs[1] < 0.01 and errs[1] < errs[0]


def test_residual_oracle():
    tt = random_tt((3, 3, 3), (2, 2), seed=0)
    o = oracle_tt(tt)
    empty = build_cross(o, NestedCrossSets.empty(o.shape))
    res = residual_oracle(o, empty)
    idx = np.array(list(itertools.product(range(3), repeat=3)))
    np.testing.assert_array_equal(res.values0(idx), o.values0(idx))

    sets = NestedCrossSets(
        o.shape,
        [np.array([[0], [1]]), np.array([[0, 0], [1, 1]])],
        [np.array([[0, 0], [1, 1]]), np.array([[0], [1]])],
    )
    cf = build_cross(o, sets)
    res = residual_oracle(o, cf)
    before = o.calls
    vals = res.values0(idx)
    assert np.max(np.abs(vals)) <= 1e-12 * np.max(np.abs(tt_to_dense(tt)))
    assert res.calls == o.calls and o.calls == before + idx.shape[0]
    # inside a block the residual vanishes
    assert abs(res([1, 3, 1])) <= 1e-13
