"""Dense state substrate: density matrices, Schmidt spectra, canonical families
and the brute-force oracle quantities (fidelity, Schmidt decomposition,
entanglement entropy).

Indexing convention: a bipartite ket |m n> lives at flat index ``m * d_B + n``
(numpy ``kron`` order). All objects are immutable after construction.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DimensionMismatchError, InvalidStateError

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-12
PSD_TOL = -1e-10
NORMALIZATION_TOL = 1e-9
DEFAULT_DIM_CAP = 4096


@dataclass(frozen=True)
class DensityMatrix:
    dims: tuple[int, ...]
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        dims = tuple(int(x) for x in self.dims)
        if not dims or any(x < 1 for x in dims):
            raise InvalidStateError(f"invalid local dimensions {dims}")
        mat = np.array(self.matrix, dtype=complex)
        total = math.prod(dims)
        if mat.shape != (total, total):
            raise DimensionMismatchError(
                f"matrix shape {mat.shape} does not match dims {dims}"
            )
        if np.max(np.abs(mat - mat.conj().T)) > HERMITIAN_TOL:
            raise InvalidStateError("matrix is not Hermitian")
        if abs(np.trace(mat) - 1.0) > TRACE_TOL:
            raise InvalidStateError(f"trace {np.trace(mat).real:.3g} != 1")
        if np.linalg.eigvalsh(mat).min() < PSD_TOL:
            raise InvalidStateError("matrix is not positive semidefinite")
        mat.setflags(write=False)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "matrix", mat)

    @property
    def total_dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def local_dim(self) -> int:
        """Common local dimension; raises if the parties differ."""
        if len(set(self.dims)) != 1:
            raise DimensionMismatchError(f"unequal local dimensions {self.dims}")
        return self.dims[0]

    def element(self, bra: Sequence[int], ket: Sequence[int]) -> complex:
        """<bra|rho|ket> for multi-indices in the computational product basis."""
        return complex(self.matrix[_flat(bra, self.dims), _flat(ket, self.dims)])

    def product_diagonal(self) -> np.ndarray:
        """Populations <i j ...|rho|i j ...> reshaped to ``dims``."""
        return np.real(np.diag(self.matrix)).reshape(self.dims).copy()

    def expectation(self, vec: np.ndarray) -> float:
        """<v|rho|v> for a (not necessarily normalized) vector v."""
        v = np.asarray(vec, dtype=complex)
        return float(np.real(v.conj() @ self.matrix @ v))

    @classmethod
    def from_pure(cls, psi: np.ndarray, dims: Sequence[int]) -> "DensityMatrix":
        psi = np.asarray(psi, dtype=complex).ravel()
        norm = np.linalg.norm(psi)
        if abs(norm - 1.0) > NORMALIZATION_TOL:
            raise InvalidStateError(f"state vector norm {norm:.6g} != 1")
        psi = psi / norm
        mat = np.outer(psi, psi.conj())
        return cls(tuple(dims), 0.5 * (mat + mat.conj().T))


def _flat(index: Sequence[int], dims: Sequence[int]) -> int:
    return int(np.ravel_multi_index(tuple(index), tuple(dims)))


@dataclass(frozen=True)
class SchmidtSpectrum:
    """Nonnegative amplitudes lambda_m with sum of squares equal to one."""

    lambdas: np.ndarray

    def __post_init__(self) -> None:
        lam = np.array(self.lambdas, dtype=float).ravel()
        if lam.size < 1:
            raise InvalidStateError("empty Schmidt spectrum")
        if np.any(lam < 0) or not np.all(np.isfinite(lam)):
            raise InvalidStateError("Schmidt coefficients must be finite and nonnegative")
        if abs(float(np.sum(lam**2)) - 1.0) > NORMALIZATION_TOL:
            raise InvalidStateError(f"sum of squares {np.sum(lam**2):.12g} != 1")
        lam = lam / np.sqrt(np.sum(lam**2))
        lam.setflags(write=False)
        object.__setattr__(self, "lambdas", lam)

    @classmethod
    def normalized(cls, values: Sequence[float]) -> "SchmidtSpectrum":
        """Rescale arbitrary nonnegative amplitudes to unit 2-norm."""
        lam = np.asarray(values, dtype=float)
        norm = np.linalg.norm(lam)
        if norm == 0:
            raise InvalidStateError("all-zero Schmidt spectrum")
        return cls(lam / norm)

    @classmethod
    def uniform(cls, d: int) -> "SchmidtSpectrum":
        return cls(np.full(int(d), 1.0 / math.sqrt(d)))

    @property
    def d(self) -> int:
        return self.lambdas.size

    @property
    def order(self) -> np.ndarray:
        """Indices sorting lambda descending; ties keep the lower index first."""
        return np.argsort(-self.lambdas, kind="stable")

    @property
    def sorted_desc(self) -> np.ndarray:
        return self.lambdas[self.order]

    @property
    def strictly_positive(self) -> bool:
        return bool(np.all(self.lambdas > 0))

    @property
    def is_uniform(self) -> bool:
        return bool(np.allclose(self.lambdas, 1.0 / math.sqrt(self.d), atol=1e-12))

    def to_list(self) -> list[float]:
        return [float(x) for x in self.lambdas]


def _as_spectrum(lam: SchmidtSpectrum | Sequence[float]) -> SchmidtSpectrum:
    return lam if isinstance(lam, SchmidtSpectrum) else SchmidtSpectrum(np.asarray(lam))


def target_vector(lam: SchmidtSpectrum | Sequence[float]) -> np.ndarray:
    """|Phi> = sum_m lambda_m |m m> as a flat vector of length d^2."""
    lam = _as_spectrum(lam)
    d = lam.d
    psi = np.zeros(d * d, dtype=complex)
    psi[np.arange(d) * (d + 1)] = lam.lambdas
    return psi


def pure_target_state(lam: SchmidtSpectrum | Sequence[float]) -> DensityMatrix:
    lam = _as_spectrum(lam)
    return DensityMatrix.from_pure(target_vector(lam), (lam.d, lam.d))


def maximally_entangled(d: int) -> DensityMatrix:
    return pure_target_state(SchmidtSpectrum.uniform(d))


def _check_visibility(p: float) -> float:
    p = float(p)
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"visibility p={p} outside [0, 1]")
    return p


def isotropic_state(d: int, p: float) -> DensityMatrix:
    """p |Phi+><Phi+| + (1 - p) * identity / d^2."""
    p = _check_visibility(p)
    if d < 1:
        raise ValueError("d must be positive")
    phi = maximally_entangled(d).matrix
    mat = p * phi + (1.0 - p) * np.eye(d * d) / d**2
    return DensityMatrix((d, d), mat)


def dephased_state(lam: SchmidtSpectrum | Sequence[float], p: float) -> DensityMatrix:
    """p |Phi><Phi| + (1 - p)/d * sum_m |mm><mm|."""
    p = _check_visibility(p)
    lam = _as_spectrum(lam)
    d = lam.d
    mat = p * pure_target_state(lam).matrix
    idx = np.arange(d) * (d + 1)
    mat = np.array(mat)
    mat[idx, idx] += (1.0 - p) / d
    return DensityMatrix((d, d), mat)


def rank_k_mixture(d: int, k: int) -> DensityMatrix:
    """Uniform mixture of the maximally entangled states on every k-subset of levels."""
    if not 1 <= k <= d:
        raise ValueError(f"need 1 <= k <= d, got k={k}, d={d}")
    mat = np.zeros((d * d, d * d), dtype=complex)
    subsets = list(itertools.combinations(range(d), k))
    for alpha in subsets:
        psi = np.zeros(d * d, dtype=complex)
        psi[np.asarray(alpha) * (d + 1)] = 1.0 / math.sqrt(k)
        mat += np.outer(psi, psi.conj())
    return DensityMatrix((d, d), mat / len(subsets))


def ghz_vector(lam: SchmidtSpectrum | Sequence[float], n: int, cap: int = DEFAULT_DIM_CAP) -> np.ndarray:
    lam = _as_spectrum(lam)
    if n < 2:
        raise ValueError("GHZ states need n >= 2 parties")
    d = lam.d
    if d**n > cap:
        raise DimensionMismatchError(f"total dimension {d}^{n} exceeds cap {cap}")
    psi = np.zeros(d**n, dtype=complex)
    step = sum(d**k for k in range(n))  # flat index of |i i ... i> is i * step
    psi[np.arange(d) * step] = lam.lambdas
    return psi


def ghz_state(lam: SchmidtSpectrum | Sequence[float], n: int, cap: int = DEFAULT_DIM_CAP) -> DensityMatrix:
    lam = _as_spectrum(lam)
    return DensityMatrix.from_pure(ghz_vector(lam, n, cap), (lam.d,) * n)


def white_noise_mixture(rho: DensityMatrix, p: float) -> DensityMatrix:
    """p * rho + (1 - p) * identity / D."""
    p = _check_visibility(p)
    D = rho.total_dim
    return DensityMatrix(rho.dims, p * rho.matrix + (1.0 - p) * np.eye(D) / D)


def exact_fidelity(rho: DensityMatrix, target: DensityMatrix) -> float:
    """Tr(|Phi><Phi| rho) for a rank-one target, clamped to [0, 1]."""
    if rho.dims != target.dims:
        raise DimensionMismatchError(f"dims {rho.dims} vs target {target.dims}")
    evals, evecs = np.linalg.eigh(target.matrix)
    if np.sum(evals > 1e-9) != 1:
        raise InvalidStateError("target state is not rank one")
    phi = evecs[:, -1]
    return float(np.clip(rho.expectation(phi), 0.0, 1.0))


def fidelity_with_pure(rho: DensityMatrix, psi: np.ndarray) -> float:
    if psi.size != rho.total_dim:
        raise DimensionMismatchError("vector length does not match state dimension")
    return float(np.clip(rho.expectation(psi), 0.0, 1.0))


@dataclass(frozen=True)
class SchmidtDecomposition:
    spectrum: SchmidtSpectrum
    basis_a: np.ndarray  # columns are |phi_m>
    basis_b: np.ndarray  # columns are |chi_m>

    def reconstruct(self) -> np.ndarray:
        lam = self.spectrum.lambdas
        return np.einsum("m,im,jm->ij", lam, self.basis_a, self.basis_b).ravel()


def schmidt_decompose(psi: np.ndarray, dims: Sequence[int] | None = None) -> SchmidtDecomposition:
    psi = np.asarray(psi, dtype=complex).ravel()
    if dims is None:
        d = math.isqrt(psi.size)
        if d * d != psi.size:
            raise DimensionMismatchError("cannot infer equal local dimensions")
        dims = (d, d)
    da, db = int(dims[0]), int(dims[1])
    if da * db != psi.size:
        raise DimensionMismatchError(f"vector length {psi.size} != {da}*{db}")
    norm = np.linalg.norm(psi)
    if abs(norm - 1.0) > NORMALIZATION_TOL:
        raise InvalidStateError(f"state vector norm {norm:.6g} != 1")
    u, s, vh = np.linalg.svd(psi.reshape(da, db))
    return SchmidtDecomposition(SchmidtSpectrum(s), u[:, : s.size], vh[: s.size, :].T)


def entanglement_entropy(psi: np.ndarray, dims: Sequence[int] | None = None) -> float:
    """Von Neumann entropy of either reduced state, in ebits."""
    lam2 = schmidt_decompose(psi, dims).spectrum.lambdas ** 2
    lam2 = lam2[lam2 > 0]
    return float(max(0.0, -np.sum(lam2 * np.log2(lam2))))


def random_pure_vector(dim: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return v / np.linalg.norm(v)


def random_density_matrix(dims: Sequence[int], rng: np.random.Generator, rank: int | None = None) -> DensityMatrix:
    """Ginibre-distributed mixed state of the given rank (full rank by default)."""
    D = math.prod(dims)
    r = D if rank is None else int(rank)
    g = rng.normal(size=(D, r)) + 1j * rng.normal(size=(D, r))
    mat = g @ g.conj().T
    mat /= np.trace(mat).real
    return DensityMatrix(tuple(dims), 0.5 * (mat + mat.conj().T))
