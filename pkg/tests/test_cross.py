import itertools

import numpy as np
import pytest

from ttcross.cross import (
    NestedCrossSets,
    SingularMatrixError,
    block_indices,
    build_cross,
    check_nestedness,
    cross_evaluate,
    cross_to_tt,
    cross_values0,
    distinct_block_entries,
    interpolation_residual_on_blocks,
    parameter_count,
)
from ttcross.maxvol import skeleton_interpolate
from ttcross.oracles import oracle_dense, oracle_noisy_tt, oracle_tt
from ttcross.quality import ExactReferenceError, matrix_bound, measure_kappa, quasiopt_ratio, thm1_bound
from ttcross.tensor import TensorTrain, random_tt, tt_to_dense


def all_indices(shape):
    return np.array(list(itertools.product(*[range(n) for n in shape])))


def sets_232():
    """Valid rank-(2, 2) nested sets for a 2x2x2 tensor."""
    return NestedCrossSets(
        (2, 2, 2),
        [np.array([[0], [1]]), np.array([[0, 0], [1, 1]])],
        [np.array([[0, 0], [1, 1]]), np.array([[0], [1]])],
    )


def test_parameter_count_examples():
    assert parameter_count((2, 2, 2), (2, 2)) == 8
    assert parameter_count((7,), ()) == 7
    m, n, r = 5, 7, 3
    assert parameter_count((m, n), (r,)) == (m + n) * r - r * r
    expected = 1 * 4 * 3 + 4 * (3 * 4 * 3) + 3 * 4 * 1 - 5 * 9
    assert parameter_count((4,) * 6, (3,) * 5) == expected
    d, n = 5, 6
    assert parameter_count((n,) * d, (1,) * (d - 1)) == d * n - (d - 1)
    with pytest.raises(ValueError):
        parameter_count((2, 2), (1, 1))


def test_nestedness_examples():
    assert check_nestedness(sets_232()) == []
    single = NestedCrossSets.from_index((3, 3, 3, 3), (1, 1, 1, 1))
    assert single.ranks == (1, 1, 1)
    assert check_nestedness(single) == []


def test_nestedness_mismatched_tail_reported_once():
    sets = NestedCrossSets(
        (3, 3, 3, 3),
        [np.array([[0]]), np.array([[0, 0]]), np.array([[0, 0, 0]])],
        [np.array([[0, 0, 2]]), np.array([[0, 2]]), np.array([[0]])],
    )
    report = check_nestedness(sets)
    assert len(report) == 1
    v = report[0]
    assert v.k == 2 and v.side == "right" and v.index == (1, 3)


def test_nestedness_duplicates_and_prefixes():
    sets = NestedCrossSets(
        (2, 2, 2),
        [np.array([[0], [0]]), np.array([[1, 0], [0, 1]])],
        [np.array([[0, 0], [1, 1]]), np.array([[0], [1]])],
    )
    sides = sorted(v.side for v in check_nestedness(sets))
    assert sides == ["duplicate-left", "left"]


def test_sets_dict_round_trip():
    sets = sets_232()
    back = NestedCrossSets.from_dict(sets.to_dict())
    assert back.to_dict() == sets.to_dict()
    assert sets.to_dict()["left"][0] == [[1], [2]]


def test_sets_require_equal_cardinalities():
    with pytest.raises(ValueError):
        NestedCrossSets((2, 2), [np.array([[0], [1]])], [np.array([[0]])])


def test_cross_matches_exact_tt_everywhere():
    tt = random_tt((2, 2, 2), (2, 2), seed=3)
    dense = tt_to_dense(tt)
    cf = build_cross(oracle_tt(tt), sets_232())
    for idx in itertools.product(range(2), repeat=3):
        val = cross_evaluate(cf, [i + 1 for i in idx])
        assert abs(val - dense[idx]) <= 1e-12 * np.max(np.abs(dense))


def test_cross_d1_raw_samples():
    a = np.array([3.0, -1.0, 2.5])
    cf = build_cross(oracle_dense(a), NestedCrossSets.empty((3,)))
    assert [cross_evaluate(cf, [i]) for i in (1, 2, 3)] == [3.0, -1.0, 2.5]


def test_cross_exact_on_blocks_for_generic_tensor():
    a = np.random.default_rng(0).random((3, 3, 3))
    o = oracle_dense(a)
    sets = NestedCrossSets(
        (3, 3, 3),
        [np.array([[0], [2]]), np.array([[0, 1], [2, 0]])],
        [np.array([[1, 1], [0, 2]]), np.array([[1], [2]])],
    )
    assert check_nestedness(sets) == []
    cf = build_cross(o, sets)
    for k in range(1, 4):
        idx = block_indices(sets, k)
        assert np.max(np.abs(cross_values0(cf, idx) - a[tuple(idx.T)])) <= 1e-13 * np.max(a)
    assert interpolation_residual_on_blocks(cf, o, relative=True) <= 1e-12


def test_broken_nestedness_breaks_interpolation():
    a = np.random.default_rng(1).random((3, 3, 3))
    o = oracle_dense(a)
    good = NestedCrossSets(
        (3, 3, 3),
        [np.array([[0], [2]]), np.array([[0, 1], [2, 0]])],
        [np.array([[1, 1], [0, 2]]), np.array([[1], [2]])],
    )
    bad = good.copy()
    bad.right[0] = np.array([[1, 1], [0, 0]])  # tail 0 is not in I^{>2}
    assert len(check_nestedness(bad)) == 1
    assert interpolation_residual_on_blocks(build_cross(o, good), o, relative=True) <= 1e-12
    assert interpolation_residual_on_blocks(build_cross(o, bad), o, relative=True) > 1e-6


def test_cross_to_tt_agrees_exhaustively():
    shape = (3, 3, 3, 3)
    a = np.random.default_rng(2).random(shape)
    sets = NestedCrossSets(
        shape,
        [np.array([[0], [1]]), np.array([[0, 2], [1, 0]]), np.array([[0, 2, 1], [1, 0, 0]])],
        [np.array([[1, 1, 1], [2, 0, 1]]), np.array([[1, 1], [0, 1]]), np.array([[1], [0]])],
    )
    assert check_nestedness(sets) == []
    cf = build_cross(oracle_dense(a), sets)
    tt = cross_to_tt(cf)
    assert tt.ranks == cf.ranks == (2, 2, 2)
    idx = all_indices(shape)
    direct = cross_values0(cf, idx)
    via_tt = tt_to_dense(tt)[tuple(idx.T)]
    assert np.max(np.abs(direct - via_tt)) <= 1e-12 * np.max(np.abs(direct))


def test_cross_to_tt_d2_is_matrix_skeleton():
    a = np.random.default_rng(4).random((4, 5))
    sets = NestedCrossSets((4, 5), [np.array([[1], [3]])], [np.array([[0], [4]])])
    tt = cross_to_tt(build_cross(oracle_dense(a), sets))
    skel = skeleton_interpolate(a, [1, 3], [0, 4]).to_dense(a.shape)
    np.testing.assert_allclose(tt_to_dense(tt), skel, rtol=1e-12, atol=1e-13)


def test_singular_intersection_names_separator():
    a = np.ones((2, 2, 2))
    with pytest.raises(SingularMatrixError) as info:
        build_cross(oracle_dense(a), sets_232())
    assert info.value.where == 1


def test_empty_sets_give_zero_interpolant():
    cf = build_cross(oracle_dense(np.ones((2, 3))), NestedCrossSets.empty((2, 3)))
    assert cf.is_zero
    assert np.all(cross_values0(cf, all_indices((2, 3))) == 0.0)
    assert np.all(tt_to_dense(cross_to_tt(cf)) == 0.0)


def test_cross_evaluate_range_check():
    cf = build_cross(oracle_dense(np.ones((2, 2))), NestedCrossSets.from_index((2, 2), (1, 1)))
    with pytest.raises(IndexError):
        cross_evaluate(cf, [3, 1])


def test_distinct_block_entries_equals_parameter_count_exact_rank():
    tt = random_tt((2, 2, 2), (2, 2), seed=0)
    cf = build_cross(oracle_tt(tt), sets_232())
    assert distinct_block_entries(cf) == parameter_count((2, 2, 2), (2, 2)) == 8


def test_thm1_bound_values():
    assert thm1_bound(2, 3, 50.0) == matrix_bound(3) == 16.0
    assert thm1_bound(2, 3, 50.0, matrix_at_d2=False) == (6 + 150 + 1) * 16
    assert thm1_bound(16, 5, 1.0) == 16**4 * 36
    assert thm1_bound(16, 5, 1.0) >= 2**21
    assert thm1_bound(8, 3, 2.0) == (6 + 6 + 1) ** 3 * 16


def test_measure_kappa_by_hand():
    a = np.random.default_rng(5).random((3, 3, 3))
    sets = NestedCrossSets(
        (3, 3, 3),
        [np.array([[0], [2]]), np.array([[0, 1], [2, 0]])],
        [np.array([[1, 1], [0, 2]]), np.array([[1], [2]])],
    )
    cf = build_cross(oracle_dense(a), sets)
    expected = max(2 * np.max(a) * np.max(np.abs(np.linalg.inv(m))) for m in cf.intersections)
    assert measure_kappa(cf, np.max(a)) == pytest.approx(expected, rel=1e-12)


def test_quasiopt_ratio_cases():
    o = oracle_noisy_tt((2, 2, 2), (1, 1), 0.0, seed=0)
    cf = build_cross(o, NestedCrossSets.from_index(o.shape, (1, 1, 1)))
    with pytest.raises(ExactReferenceError):
        quasiopt_ratio(o, cf)
    noisy = oracle_noisy_tt((2, 2, 2), (1, 1), 1e-2, seed=0)
    # an interpolant that equals X exactly: build it from the noiseless oracle
    assert quasiopt_ratio(noisy, cf) == pytest.approx(1.0, rel=1e-12)
    assert quasiopt_ratio(noisy, cf, samples=8, seed=0) <= 1.0 + 1e-12


def test_tt_evaluation_via_generator_cores():
    # a hand-built rank-1 tensor is reproduced from a single cross
    tt = TensorTrain([np.array([1.0, 2.0]).reshape(1, 2, 1), np.array([3.0, 4.0]).reshape(1, 2, 1)])
    cf = build_cross(oracle_tt(tt), NestedCrossSets.from_index((2, 2), (2, 2)))
    np.testing.assert_allclose(tt_to_dense(cross_to_tt(cf)), [[3.0, 4.0], [6.0, 8.0]], rtol=1e-14)
