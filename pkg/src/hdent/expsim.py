"""Synthetic laboratory: setting probabilities, Poisson-sampled coincidence
tables with mode-dependent loss and flat accidentals, and rotated frames."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .bases import GlobalProductBasis, LocalBasis, mub_basis, standard_basis, tilted_basis
from .errors import DimensionMismatchError
from .qstate import DensityMatrix, SchmidtSpectrum
from .tables import CoincidenceTable


@dataclass(frozen=True)
class MeasurementSetting:
    basis: GlobalProductBasis
    label: str

    @property
    def dim(self) -> int:
        return self.basis.dim


@dataclass(frozen=True)
class LossModel:
    eta_a: np.ndarray
    eta_b: np.ndarray

    def __post_init__(self) -> None:
        a = np.array(self.eta_a, dtype=float).ravel()
        b = np.array(self.eta_b, dtype=float).ravel()
        if a.shape != b.shape:
            raise DimensionMismatchError("loss vectors have different lengths")
        if np.any(a <= 0) or np.any(b <= 0) or np.any(a > 1) or np.any(b > 1):
            raise ValueError("loss factors must lie in (0, 1]")
        object.__setattr__(self, "eta_a", a)
        object.__setattr__(self, "eta_b", b)

    @classmethod
    def lossless(cls, d: int) -> "LossModel":
        return cls(np.ones(d), np.ones(d))

    @property
    def dim(self) -> int:
        return self.eta_a.size


def standard_measurement(d: int) -> MeasurementSetting:
    s = standard_basis(d)
    return MeasurementSetting(GlobalProductBasis(s, s), "standard")


def tilted_measurement(lam: SchmidtSpectrum, k: int = 0) -> MeasurementSetting:
    b = tilted_basis(lam, k)
    prefix = "mub" if b.kind == "mub" else "tilt"
    return MeasurementSetting(GlobalProductBasis(b, b), f"{prefix}{k}")


def mub_measurement(d: int, k: int) -> MeasurementSetting:
    b = mub_basis(d, k)
    return MeasurementSetting(GlobalProductBasis(b, b), f"mub{k}")


def setting_probabilities(rho: DensityMatrix, setting: MeasurementSetting | GlobalProductBasis) -> np.ndarray:
    """p_ij = <a_i b_j|rho|a_i b_j> (B conjugated per the setting's convention)."""
    basis = setting.basis if isinstance(setting, MeasurementSetting) else setting
    d = basis.dim
    if rho.dims != (d, d):
        raise DimensionMismatchError(f"state dims {rho.dims} vs setting dim {d}")
    vecs = basis.product_vectors().reshape(d * d, d * d)
    probs = np.real(np.einsum("xa,ab,xb->x", vecs.conj(), rho.matrix, vecs)).reshape(d, d)
    return np.clip(probs, 0.0, None)


def marginals(rho: DensityMatrix, setting: MeasurementSetting | GlobalProductBasis) -> tuple[np.ndarray, np.ndarray]:
    """Local populations <a_i|rho_A|a_i> and <b_j|rho_B|b_j>."""
    basis = setting.basis if isinstance(setting, MeasurementSetting) else setting
    d = basis.dim
    r = rho.matrix.reshape(d, d, d, d)
    rho_a = np.einsum("ijkj->ik", r)
    rho_b = np.einsum("ijil->jl", r)
    a = basis.basis_a.vectors
    b = basis.b_vectors()
    pa = np.real(np.einsum("xi,ik,xk->x", a.conj(), rho_a, a))
    pb = np.real(np.einsum("xi,ik,xk->x", b.conj(), rho_b, b))
    return np.clip(pa, 0, None), np.clip(pb, 0, None)


def substream(seed: int, label: str) -> np.random.Generator:
    """Generator keyed on (seed, label) so new settings never shift old draws."""
    key = int.from_bytes(hashlib.sha256(label.encode()).digest()[:8], "little")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed) & (2**64 - 1), key])))


def _rates(probs, pair_rate, exposure, loss, accidental_rate, marg):
    probs = np.asarray(probs, dtype=float)
    if probs.ndim != 2 or probs.shape[0] != probs.shape[1]:
        raise DimensionMismatchError("probabilities must be a square matrix")
    if np.any(probs < 0):
        raise ValueError("probabilities must be nonnegative")
    d = probs.shape[0]
    loss = LossModel.lossless(d) if loss is None else loss
    if loss.dim != d:
        raise DimensionMismatchError("loss model dimension differs from table")
    n_pairs = pair_rate * exposure
    coinc = n_pairs * probs * np.outer(loss.eta_a, loss.eta_b) + accidental_rate * exposure
    pa, pb = (probs.sum(axis=1), probs.sum(axis=0)) if marg is None else marg
    singles_a = n_pairs * np.asarray(pa) * loss.eta_a
    singles_b = n_pairs * np.asarray(pb) * loss.eta_b
    return coinc, singles_a, singles_b, loss


def _meta(pair_rate, exposure, loss, accidental_rate, seed):
    return {
        "pair_rate": float(pair_rate),
        "exposure": float(exposure),
        "accidental_rate": float(accidental_rate),
        "accidental_model": "flat additive Poisson rate per cell",
        "seed": seed,
        "eta_A": loss.eta_a.tolist(),
        "eta_B": loss.eta_b.tolist(),
    }


def expected_counts(
    probs: np.ndarray,
    pair_rate: float,
    exposure: float = 1.0,
    loss: LossModel | None = None,
    accidental_rate: float = 0.0,
    label: str = "standard",
    marginals: tuple[np.ndarray, np.ndarray] | None = None,
) -> CoincidenceTable:
    """Noiseless table holding the Poisson means."""
    coinc, sa, sb, loss = _rates(probs, pair_rate, exposure, loss, accidental_rate, marginals)
    return CoincidenceTable(label, coinc, sa, sb, exposure, _meta(pair_rate, exposure, loss, accidental_rate, None))


def sample_counts(
    probs: np.ndarray,
    pair_rate: float,
    exposure: float = 1.0,
    loss: LossModel | None = None,
    accidental_rate: float = 0.0,
    seed: int = 0,
    label: str = "standard",
    marginals: tuple[np.ndarray, np.ndarray] | None = None,
) -> CoincidenceTable:
    """Poisson-sample coincidences and singles for one setting.

    Singles come from the pair marginals only (``marginals`` defaults to the
    row/column sums of ``probs``, which is exact for orthonormal settings).
    """
    if pair_rate < 0 or accidental_rate < 0 or exposure <= 0:
        raise ValueError("rates must be nonnegative and exposure positive")
    coinc, sa, sb, loss = _rates(probs, pair_rate, exposure, loss, accidental_rate, marginals)
    rng = substream(seed, label)
    counts = rng.poisson(coinc).astype(float)
    singles_a = rng.poisson(sa).astype(float)
    singles_b = rng.poisson(sb).astype(float)
    return CoincidenceTable(label, counts, singles_a, singles_b, exposure, _meta(pair_rate, exposure, loss, accidental_rate, int(seed)))


def rotated_standard_basis(d: int, theta: float, subspace: Sequence[int] = (0, 1)) -> LocalBasis:
    """|0'> = cos t|a> + sin t|b>, |1'> = sin t|a> - cos t|b> on the (a, b) plane."""
    a, b = (int(x) for x in subspace)
    if a == b or not (0 <= a < d and 0 <= b < d):
        raise ValueError(f"invalid subspace indices {subspace} for d={d}")
    vecs = np.eye(d, dtype=complex)
    c, s = np.cos(theta), np.sin(theta)
    vecs[a] = 0
    vecs[b] = 0
    vecs[a, a], vecs[a, b] = c, s
    vecs[b, a], vecs[b, b] = s, -c
    return LocalBasis(d, vecs, "rotated")
