"""Experiment drivers behind the command-line interface.

Every driver takes an :class:`ExperimentConfig` and returns
:class:`RunRecord` objects; formatting lives in :mod:`ttcross.cli`.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field, fields
from typing import Any

import numpy as np

from .cross import cross_values0, distinct_block_entries, parameter_count
from .greedy import greedy_restricted
from .oracles import (
    TensorOracle,
    _all_indices,
    oracle_inverse_norm,
    oracle_noisy_tt,
    oracle_tt,
    random_indices,
)
from .quality import ExactReferenceError, measure_kappa, quasiopt_ratio, thm1_bound
from .tensor import DENSE_LIMIT, chebyshev_norm, random_tt

__all__ = [
    "CSV_COLUMNS",
    "ConfigError",
    "ExperimentConfig",
    "RunRecord",
    "cmd_interpolate",
    "cmd_quasiopt",
    "cmd_recover",
    "cmd_table",
    "log2_summary",
]

CSV_COLUMNS = ("d", "n", "r", "cheb_err", "frob_err", "seconds", "oracle_calls")
KINDS = ("interpolate", "quasiopt", "table", "recover")
ORACLES = ("inverse-norm", "random-tt")


class ConfigError(ValueError):
    """An experiment configuration that cannot be run."""


@dataclass
class ExperimentConfig:
    """Parameters of one CLI invocation.

    ``dims``, ``mode_size`` and ``ranks`` are lists so that ``table`` can
    sweep a grid; the other commands use the first ``dims``/``mode_size``
    entry and read ``ranks`` as one cap per separator (or one shared cap).
    """

    kind: str = "interpolate"
    dims: list[int] = field(default_factory=lambda: [16])
    mode_size: list[int] = field(default_factory=lambda: [32])
    ranks: list[int] = field(default_factory=lambda: [12])
    noise: float = 1e-7
    trials: int = 100
    seed: int = 0
    tol: float = 1e-12
    samples: int = 10**5
    sweeps: int = 50
    oracle: str = "inverse-norm"
    scan: str = "column-row"
    inner: str = "single"
    out: str | None = None
    format: str = "table"
    trace: bool = False

    @classmethod
    def from_mapping(cls, values: dict[str, Any]) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
        cfg = cls(**values)
        for name in ("dims", "mode_size", "ranks"):
            value = getattr(cfg, name)
            if isinstance(value, int):
                setattr(cfg, name, [value])
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment {self.kind!r}")
        if self.oracle not in ORACLES:
            raise ConfigError(f"unknown oracle {self.oracle!r}")
        if self.format not in ("table", "csv", "json"):
            raise ConfigError(f"unknown format {self.format!r}")
        for name in ("dims", "mode_size", "ranks"):
            vals = getattr(self, name)
            if any(int(v) < 1 for v in vals):
                raise ConfigError(f"{name} must be positive")
            if self.kind != "table" and not vals:
                raise ConfigError(f"{name} must not be empty")
        if self.kind != "table":
            d = self.dims[0]
            if len(self.ranks) not in (1, d - 1) and d > 1:
                raise ConfigError(f"give one rank or {d - 1} ranks for d={d}")
        for name in ("trials", "samples", "sweeps"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if not self.tol > 0:
            raise ConfigError("tol must be positive")
        if self.noise < 0:
            raise ConfigError("noise must be non-negative")

    @property
    def d(self) -> int:
        return int(self.dims[0])

    @property
    def n(self) -> int:
        return int(self.mode_size[0])

    def rank_list(self, d: int | None = None) -> list[int]:
        d = self.d if d is None else d
        return [int(self.ranks[0])] * (d - 1) if len(self.ranks) == 1 else [int(r) for r in self.ranks]


@dataclass
class RunRecord:
    """Outcome of one interpolation run."""

    command: str
    d: int
    n: int
    r: int
    seed: int
    ranks: list[int] = field(default_factory=list)
    cheb_err: float = math.nan
    frob_err: float = math.nan
    seconds: float = 0.0
    oracle_calls: int = 0
    total_calls: int = 0
    converged: bool = False
    stop_reason: str = ""
    sweeps: int = 0
    error: str | None = None
    extra: dict = field(default_factory=dict)
    trace: list = field(default_factory=list)

    def to_dict(self, with_trace: bool = False) -> dict:
        doc = asdict(self)
        if not with_trace:
            doc.pop("trace")
        return doc

    def csv_row(self) -> list:
        return [getattr(self, c) for c in CSV_COLUMNS]


def _sampled_errors(oracle: TensorOracle, cf, samples: int, seed) -> tuple[float, float]:
    """Relative Chebyshev and Frobenius errors on ``samples`` random entries
    (all entries if the tensor is that small)."""
    if oracle.size <= samples:
        idx = _all_indices(oracle.shape)
    else:
        idx = random_indices(oracle.shape, samples, seed)
    exact = oracle.raw(idx)
    diff = exact - cross_values0(cf, idx)
    cheb = float(np.max(np.abs(diff)) / np.max(np.abs(exact)))
    frob = float(np.linalg.norm(diff) / np.linalg.norm(exact))
    return cheb, frob


def _run(cfg: ExperimentConfig, oracle: TensorOracle, command: str, d: int, n: int, caps, seed) -> RunRecord:
    t0 = time.perf_counter()
    cf = greedy_restricted(
        oracle, tol=cfg.tol, rank_cap=caps, sweeps=cfg.sweeps, seed=seed, inner=cfg.inner, scan=cfg.scan
    )
    seconds = time.perf_counter() - t0
    cheb, frob = _sampled_errors(oracle, cf, cfg.samples, seed + 1)
    rec = RunRecord(
        command=command,
        d=d,
        n=n,
        r=max(caps) if caps else 1,
        seed=seed,
        ranks=list(cf.ranks),
        cheb_err=cheb,
        frob_err=frob,
        seconds=seconds,
        oracle_calls=oracle.distinct,
        total_calls=oracle.calls,
        converged=cf.converged,
        stop_reason=cf.stop_reason,
        sweeps=cf.sweeps,
        trace=cf.trace if cfg.trace else [],
    )
    rec.extra["cf"] = cf
    return rec


def _make_oracle(cfg: ExperimentConfig, d: int, n: int, caps, seed) -> TensorOracle:
    if cfg.oracle == "inverse-norm":
        return oracle_inverse_norm((n,) * d)
    return oracle_tt(random_tt((n,) * d, caps, seed))


def cmd_interpolate(cfg: ExperimentConfig, d: int | None = None, n: int | None = None, caps=None) -> RunRecord:
    """Run the restricted greedy sweep on one oracle and measure sampled errors."""
    d = cfg.d if d is None else d
    n = cfg.n if n is None else n
    caps = cfg.rank_list(d) if caps is None else caps
    oracle = _make_oracle(cfg, d, n, caps, cfg.seed)
    rec = _run(cfg, oracle, "interpolate", d, n, caps, cfg.seed)
    rec.extra.pop("cf")
    return rec


def cmd_recover(cfg: ExperimentConfig) -> RunRecord:
    """Recover an exact random TT and compare entry counts with the parameter count.

    The run succeeds (``converged``) when the relative Chebyshev error, taken
    over all entries when the tensor is small enough and over
    ``cfg.samples`` random entries otherwise, is at most ``cfg.tol``.
    """
    d, n, caps = cfg.d, cfg.n, cfg.rank_list()
    oracle = oracle_tt(random_tt((n,) * d, caps, cfg.seed))
    samples = oracle.size if oracle.size <= min(DENSE_LIMIT, 10**6) else cfg.samples
    sub = ExperimentConfig(**{**asdict(cfg), "samples": samples})
    rec = _run(sub, oracle, "recover", d, n, caps, cfg.seed)
    cf = rec.extra.pop("cf")
    entries = distinct_block_entries(cf)
    expected = parameter_count(oracle.shape, cf.ranks)
    rec.extra.update(
        formula_entries=entries,
        parameter_count=expected,
        entries_match=entries == expected,
        exhaustive=samples >= oracle.size,
    )
    rec.converged = rec.converged and rec.cheb_err <= cfg.tol
    return rec


def log2_summary(ratios, bin_width: float = 0.5) -> dict:
    """Mean, standard deviation and a histogram of ``log2`` ratios."""
    logs = np.log2(np.asarray(ratios, dtype=float))
    if logs.size == 0:
        return {"count": 0, "mean": math.nan, "std": math.nan, "bins": [], "counts": []}
    lo = math.floor(logs.min() / bin_width) * bin_width
    hi = math.ceil(logs.max() / bin_width) * bin_width
    edges = np.arange(lo, max(hi, lo + bin_width) + bin_width / 2, bin_width)
    counts, edges = np.histogram(logs, bins=edges)
    return {
        "count": int(logs.size),
        "mean": float(logs.mean()),
        "std": float(logs.std()),
        "bins": edges.tolist(),
        "counts": counts.tolist(),
    }


def cmd_quasiopt(cfg: ExperimentConfig) -> tuple[list[RunRecord], dict]:
    """Quasioptimality trials on ``A = X + mu R`` with seeds ``seed, seed+1, ...``.

    Each trial records the exact ratio ``|A - A~| / |A - X|``, the measured
    ``kappa`` and the corresponding bound.  Trials whose reference is exact
    (``mu = 0``) are kept in the record list but excluded from the summary.
    """
    d, n, caps = cfg.d, cfg.n, cfg.rank_list()
    records, ratios, excluded, violations = [], [], [], 0
    for t in range(cfg.trials):
        seed = cfg.seed + t
        oracle = oracle_noisy_tt((n,) * d, caps, cfg.noise, seed=seed)
        rec = _run(cfg, oracle, "quasiopt", d, n, caps, seed)
        cf = rec.extra.pop("cf")
        try:
            ratio = quasiopt_ratio(oracle, cf)
        except ExactReferenceError:
            excluded.append(seed)
            rec.extra["ratio"] = None
            records.append(rec)
            continue
        kappa = measure_kappa(cf, chebyshev_norm(oracle.dense))
        bound = thm1_bound(d, max(cf.ranks, default=1), kappa)
        violations += ratio > bound
        rec.extra.update(ratio=ratio, kappa=kappa, bound=bound)
        ratios.append(ratio)
        records.append(rec)
    summary = log2_summary(ratios)
    summary.update(excluded=excluded, bound_violations=int(violations), noise=cfg.noise)
    return records, summary


def cmd_table(cfg: ExperimentConfig) -> list[RunRecord]:
    """One interpolation run per ``(d, n, r)`` cell; failures are recorded."""
    records = []
    for d in cfg.dims:
        for n in cfg.mode_size:
            for r in cfg.ranks:
                try:
                    rec = cmd_interpolate(cfg, int(d), int(n), [int(r)] * (int(d) - 1))
                except Exception as exc:  # a failing cell must not sink the table
                    rec = RunRecord("table", int(d), int(n), int(r), cfg.seed, error=f"{type(exc).__name__}: {exc}")
                rec.command = "table"
                records.append(rec)
    return records
