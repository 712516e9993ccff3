"""From coincidence tables to matrix-element estimates: normalization,
mode-dependent loss correction, target nomination and Poisson resampling."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .bases import c_lambda
from .errors import DataFormatError, DimensionMismatchError, HdentError, NumericalError
from .qstate import SchmidtSpectrum, _as_spectrum
from .tables import CoincidenceTable

DEFAULT_COND_LIMIT = 1e12


@dataclass(frozen=True)
class DiagonalEstimate:
    """Estimates of <a_i b_j|rho|a_i b_j> for one setting."""

    label: str
    values: np.ndarray = field(repr=False)
    normalization: float = 1.0

    def __post_init__(self) -> None:
        v = np.array(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise DimensionMismatchError(f"estimate must be square, got {v.shape}")
        if np.any(v < 0):
            raise ValueError("estimates must be nonnegative")
        if abs(v.sum() - self.normalization) > 1e-9 * max(1.0, abs(self.normalization)):
            raise ValueError(f"estimates sum to {v.sum():.12g}, expected {self.normalization:.12g}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    @property
    def diagonal(self) -> np.ndarray:
        return np.diag(self.values).copy()

    def to_json(self) -> dict:
        return {
            "schema": 1,
            "label": self.label,
            "normalization": self.normalization,
            "values": self.values.tolist(),
        }


@dataclass(frozen=True)
class ResampleSpec:
    n_resamples: int = 1000
    seed: int = 0

    def __post_init__(self) -> None:
        if int(self.n_resamples) < 2:
            raise ValueError("n_resamples must be at least 2")


@dataclass(frozen=True)
class LossCorrection:
    values: np.ndarray
    pair_number: float
    consistency_spread: float  # max relative deviation of [M rho_B]_i^-1 from N
    condition_number: float


@dataclass(frozen=True)
class ResampleSummary:
    mean: dict[str, float]
    std: dict[str, float]
    n_ok: int
    n_failed: int
    failures: dict[str, int]

    def to_json(self) -> dict:
        return {
            "mean": self.mean,
            "std": self.std,
            "n_ok": self.n_ok,
            "n_failed": self.n_failed,
            "failures": self.failures,
        }


def _fractions(table: CoincidenceTable) -> np.ndarray:
    total = table.total
    if total <= 0:
        raise DataFormatError(f"table '{table.label}' has no counts")
    return table.counts / total


def estimate_standard(table: CoincidenceTable) -> DiagonalEstimate:
    return DiagonalEstimate(table.label, _fractions(table), 1.0)


def estimate_tilted(
    table: CoincidenceTable,
    lam: SchmidtSpectrum | Sequence[float],
    std_estimate: DiagonalEstimate | None,
) -> DiagonalEstimate:
    """c_lambda * N~_ij / sum N~, with c_lambda taken from the standard data of the same run."""
    if std_estimate is None:
        raise DataFormatError("tilted estimates need the standard-basis estimate of the same dataset")
    lam = _as_spectrum(lam)
    if table.dim != lam.d or std_estimate.dim != lam.d:
        raise DimensionMismatchError("table, lambda and standard estimate disagree on d")
    c = c_lambda(lam, std_estimate.values)
    return DiagonalEstimate(table.label, c * _fractions(table), c)


def loss_correct(table: CoincidenceTable, cond_limit: float = DEFAULT_COND_LIMIT) -> LossCorrection:
    """Undo mode-dependent loss using the singles.

    With M_ij = C_ij / (S_i^A S_j^B) one has M rho_B = 1/N and M^T rho_A = 1/N,
    so rho_B ~ M^-1 1, rho_A ~ M^-T 1, N = sum(M^-1) and
    <ij|rho|ij> = M_ij (M^-T 1)_i (M^-1 1)_j / N.
    """
    if not table.has_singles:
        raise DataFormatError(f"table '{table.label}' carries no singles")
    sa, sb = table.singles_a, table.singles_b
    if np.any(sa <= 0) or np.any(sb <= 0):
        raise NumericalError("loss correction needs strictly positive singles")
    m = table.counts / np.outer(sa, sb)
    cond = float(np.linalg.cond(m))
    if not np.isfinite(cond) or cond > cond_limit:
        raise NumericalError(f"loss-correction matrix ill-conditioned (cond = {cond:.3g})")
    ones = np.ones(table.dim)
    v = np.linalg.solve(m, ones)
    u = np.linalg.solve(m.T, ones)
    n_pairs = float(v.sum())
    corrected = m * np.outer(u, v) / n_pairs
    if np.any(corrected < -1e-12 * np.abs(corrected).max()):
        raise NumericalError("loss correction produced negative populations")
    corrected = np.clip(corrected, 0.0, None)
    corrected /= corrected.sum()
    per_row = 1.0 / (m @ (v / n_pairs))
    spread = float(np.max(np.abs(per_row - n_pairs)) / n_pairs)
    return LossCorrection(corrected, n_pairs, spread, cond)


def estimate_standard_corrected(table: CoincidenceTable, cond_limit: float = DEFAULT_COND_LIMIT) -> DiagonalEstimate:
    return DiagonalEstimate(table.label, loss_correct(table, cond_limit).values, 1.0)


def nominate_target(std_estimate: DiagonalEstimate) -> SchmidtSpectrum:
    """lambda_m = sqrt(<mm|rho|mm> / sum_n <nn|rho|nn>)."""
    diag = std_estimate.diagonal
    total = diag.sum()
    if total <= 0:
        raise DataFormatError("no counts on the standard-basis diagonal")
    return SchmidtSpectrum(np.sqrt(diag / total))


def resample_tables(tables: Sequence[CoincidenceTable], rng: np.random.Generator) -> list[CoincidenceTable]:
    """Redraw every count and single as Poisson(observed)."""
    out = []
    for t in tables:
        sa = None if t.singles_a is None else rng.poisson(t.singles_a).astype(float)
        sb = None if t.singles_b is None else rng.poisson(t.singles_b).astype(float)
        out.append(t.with_counts(rng.poisson(t.counts).astype(float), sa, sb))
    return out


def resample_pipeline(
    tables: Sequence[CoincidenceTable],
    spec: ResampleSpec,
    pipeline: Callable[[Sequence[CoincidenceTable]], Mapping[str, float]],
) -> ResampleSummary:
    """Rerun ``pipeline`` on parametric-bootstrap copies of ``tables``.

    Iteration r draws from a stream keyed on (seed, r). Failures are counted by
    exception type rather than dropped silently.
    """
    samples: dict[str, list[float]] = {}
    failures: Counter[str] = Counter()
    for r in range(int(spec.n_resamples)):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(spec.seed) & (2**64 - 1), r])))
        try:
            result = pipeline(resample_tables(tables, rng))
        except (HdentError, ArithmeticError, ValueError) as exc:
            failures[type(exc).__name__] += 1
            continue
        for key, value in result.items():
            if value is None:
                continue
            samples.setdefault(key, []).append(float(value))
    mean = {k: float(np.mean(v)) for k, v in samples.items()}
    std = {k: float(np.std(v, ddof=1)) if len(v) > 1 else math.nan for k, v in samples.items()}
    n_failed = sum(failures.values())
    return ResampleSummary(mean, std, int(spec.n_resamples) - n_failed, n_failed, dict(sorted(failures.items())))
