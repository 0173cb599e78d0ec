"""Tensor-train cross interpolation on nested index sets."""

from .cross import (
    CrossFactorization,
    NestedCrossSets,
    build_cross,
    check_nestedness,
    cross_evaluate,
    cross_to_tt,
    distinct_block_entries,
    interpolation_residual_on_blocks,
    parameter_count,
)
from .greedy import greedy_global, greedy_restricted
from .maxvol import (
    CrossSkeleton,
    SingularMatrixError,
    matrix_cross_adaptive,
    maxvol_2d,
    maxvol_rows,
    skeleton_interpolate,
    volume,
)
from .oracles import (
    NoisyTTOracle,
    TensorOracle,
    estimate_chebyshev,
    estimate_frobenius,
    oracle_dense,
    oracle_inverse_norm,
    oracle_noisy_tt,
    oracle_tt,
    residual_oracle,
)
from .quality import ExactReferenceError, measure_kappa, quasiopt_ratio, thm1_bound
from .tensor import (
    DenseLimitError,
    TensorTrain,
    load_tt,
    random_tt,
    save_tt,
    tt_evaluate,
    tt_svd,
    tt_to_dense,
    unfold,
)

__version__ = "0.1.0"

__all__ = [
    "CrossFactorization",
    "CrossSkeleton",
    "DenseLimitError",
    "ExactReferenceError",
    "NestedCrossSets",
    "NoisyTTOracle",
    "SingularMatrixError",
    "TensorOracle",
    "TensorTrain",
    "build_cross",
    "check_nestedness",
    "cross_evaluate",
    "cross_to_tt",
    "distinct_block_entries",
    "estimate_chebyshev",
    "estimate_frobenius",
    "greedy_global",
    "greedy_restricted",
    "interpolation_residual_on_blocks",
    "load_tt",
    "matrix_cross_adaptive",
    "maxvol_2d",
    "maxvol_rows",
    "measure_kappa",
    "oracle_dense",
    "oracle_inverse_norm",
    "oracle_noisy_tt",
    "oracle_tt",
    "parameter_count",
    "quasiopt_ratio",
    "random_tt",
    "residual_oracle",
    "save_tt",
    "skeleton_interpolate",
    "thm1_bound",
    "tt_evaluate",
    "tt_svd",
    "tt_to_dense",
    "unfold",
    "volume",
]
