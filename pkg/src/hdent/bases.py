"""Local measurement bases: standard, tilted (optionally with quadratic phases),
MUBs, the tilted-basis POVM completion and the tilted normalization c_lambda.

Vector j of the tilted family k has components

    omega^(j m + k m^2) * sqrt(lambda_m) / sqrt(sum_n lambda_n),   omega = exp(2 pi i / d)

so it is unit-norm but, for non-uniform lambda, generally not orthogonal to
its siblings.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DimensionMismatchError, IncompleteBasisError
from .qstate import DensityMatrix, SchmidtSpectrum, _as_spectrum


@dataclass(frozen=True)
class LocalBasis:
    """``vectors[j]`` is the j-th basis vector in standard-basis components."""

    dim: int
    vectors: np.ndarray = field(repr=False)
    kind: str = "standard"
    k: int | None = None
    lambda_ref: SchmidtSpectrum | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        vec = np.array(self.vectors, dtype=complex)
        if vec.shape != (self.dim, self.dim):
            raise DimensionMismatchError(f"expected {self.dim}x{self.dim} vectors, got {vec.shape}")
        vec.setflags(write=False)
        object.__setattr__(self, "vectors", vec)

    @property
    def label(self) -> str:
        return self.kind if self.k is None else f"{self.kind}{self.k}"

    def gram(self) -> np.ndarray:
        return self.vectors.conj() @ self.vectors.T

    def conjugate(self) -> np.ndarray:
        return self.vectors.conj()

    def to_json(self) -> dict:
        return {
            "schema": 1,
            "dim": self.dim,
            "kind": self.kind,
            "k": self.k,
            "lambda": None if self.lambda_ref is None else self.lambda_ref.to_list(),
            "vectors": [[[float(z.real), float(z.imag)] for z in v] for v in self.vectors],
        }


@dataclass(frozen=True)
class GlobalProductBasis:
    """Product basis |a_i> (x) |b_j>; with ``conjugate_b`` party B uses |b_j*>."""

    basis_a: LocalBasis
    basis_b: LocalBasis
    conjugate_b: bool = True

    def __post_init__(self) -> None:
        if self.basis_a.dim != self.basis_b.dim:
            raise DimensionMismatchError("local bases have different dimensions")

    @property
    def dim(self) -> int:
        return self.basis_a.dim

    def b_vectors(self) -> np.ndarray:
        return self.basis_b.conjugate() if self.conjugate_b else self.basis_b.vectors

    def product_vectors(self) -> np.ndarray:
        """Array of shape (d, d, d*d): entry [i, j] is |a_i> (x) |b_j(*)>."""
        a = self.basis_a.vectors
        b = self.b_vectors()
        d = self.dim
        return np.einsum("im,jn->ijmn", a, b).reshape(d, d, d * d)


def standard_basis(d: int) -> LocalBasis:
    return LocalBasis(int(d), np.eye(int(d), dtype=complex), "standard")


def _tilted_vectors(lam: np.ndarray, k: int) -> np.ndarray:
    d = lam.size
    m = np.arange(d)
    j = m[:, None]
    # reduce exponents mod d before exponentiating to keep phases exact-ish
    phase = np.exp(2j * np.pi * ((j * m[None, :] + k * m[None, :] ** 2) % d) / d)
    return phase * np.sqrt(lam)[None, :] / math.sqrt(float(np.sum(lam)))


def tilted_basis(lam: SchmidtSpectrum | Sequence[float], k: int = 0) -> LocalBasis:
    lam = _as_spectrum(lam)
    if k < 0:
        raise ValueError("tilt index k must be nonnegative")
    if not lam.strictly_positive:
        zeros = np.flatnonzero(lam.lambdas == 0).tolist()
        raise IncompleteBasisError(
            f"incomplete tilted basis: Schmidt coefficients vanish at indices {zeros}"
        )
    kind = "mub" if lam.is_uniform else "tilted"
    return LocalBasis(lam.d, _tilted_vectors(lam.lambdas, k), kind, int(k), lam)


def mub_basis(d: int, k: int) -> LocalBasis:
    """Fourier-type basis with quadratic phase k; for prime d and k = 0..d-1
    these plus the standard basis are d + 1 mutually unbiased bases.

    For d = 2 the quadratic phase omega^(k m^2) collapses onto the linear one,
    so the phase i^(k m^2) is used instead (giving |0> +- i|1> for k = 1).
    """
    lam = SchmidtSpectrum.uniform(d)
    if d == 2:
        m = np.arange(2)
        vecs = np.exp(1j * np.pi * (np.arange(2)[:, None] * m[None, :] + k * m[None, :] ** 2 / 2)) / math.sqrt(2)
        return LocalBasis(2, vecs, "mub", int(k), lam)
    return LocalBasis(int(d), _tilted_vectors(lam.lambdas, k), "mub", int(k), lam)


def tilted_povm(lam: SchmidtSpectrum | Sequence[float], k: int = 0) -> list[np.ndarray]:
    """d rank-one elements |j~><j~|/d followed by the completing element."""
    basis = tilted_basis(lam, k)
    d = basis.dim
    elems = [np.outer(v, v.conj()) / d for v in basis.vectors]
    elems.append(np.eye(d) - sum(elems))
    return elems


def c_lambda(lam: SchmidtSpectrum | Sequence[float], std_diag: np.ndarray) -> float:
    """d^2/(sum lambda)^2 * sum_{m,n} lambda_m lambda_n <mn|rho|mn>."""
    lam = _as_spectrum(lam)
    diag = np.asarray(std_diag, dtype=float)
    d = lam.d
    if diag.shape != (d, d):
        raise DimensionMismatchError(f"std_diag shape {diag.shape} != ({d}, {d})")
    if np.any(diag < 0):
        raise ValueError("standard-basis populations must be nonnegative")
    if diag.sum() > 1 + 1e-9:
        raise ValueError("standard-basis populations sum to more than one")
    l = lam.lambdas
    return float(d**2 / np.sum(l) ** 2 * (l @ diag @ l))


def tilted_setting(lam: SchmidtSpectrum | Sequence[float], k: int = 0) -> GlobalProductBasis:
    b = tilted_basis(lam, k)
    return GlobalProductBasis(b, b, conjugate_b=True)


def standard_setting(d: int) -> GlobalProductBasis:
    s = standard_basis(d)
    return GlobalProductBasis(s, s, conjugate_b=True)


def tilted_diagonal_sum(rho: DensityMatrix, lam: SchmidtSpectrum | Sequence[float], k: int = 0, *, check: bool = True) -> float:
    """sum_j <j~ j~*|rho|j~ j~*> evaluated directly on rho.

    ``check=False`` skips the completeness check so analytic sweeps can pass
    spectra containing zeros.
    """
    lam = _as_spectrum(lam)
    vecs = tilted_basis(lam, k).vectors if check else _tilted_vectors(lam.lambdas, k)
    d = lam.d
    if rho.dims != (d, d):
        raise DimensionMismatchError(f"state dims {rho.dims} vs lambda length {d}")
    prods = np.einsum("jm,jn->jmn", vecs, vecs.conj()).reshape(d, d * d)
    return float(np.real(np.einsum("ja,ab,jb->", prods.conj(), rho.matrix, prods)))
