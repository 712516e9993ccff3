"""Fidelity lower bounds from two-basis data, Schmidt-number thresholds,
entanglement-of-formation bounds, the multipartite GHZ bound and analytic sweeps.

Index conventions: the standard-basis populations D[m, n] = <mn|rho|mn>, the
target is sum_m lambda_m |mm>, and the tilted family k uses phases
omega^(j m + k m^2).
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from .bases import tilted_diagonal_sum
from .errors import DimensionMismatchError, IncompleteBasisError, UnsupportedModeError
from .estimate import DiagonalEstimate
from .qstate import (
    DensityMatrix,
    SchmidtSpectrum,
    _as_spectrum,
    isotropic_state,
    maximally_entangled,
)


@dataclass(frozen=True)
class FidelityBreakdown:
    f1: float
    f2_bound: float
    sigma_M: float
    gamma_penalty: float
    population_term: float  # sum lambda_m lambda_n <mn|rho|mn>
    M: int
    lam_sum: float

    @property
    def f_tilde(self) -> float:
        return self.f1 + self.f2_bound

    def recombination_residual(self, d: int) -> float:
        return abs(self.f2_bound - (self.lam_sum**2 / d * self.sigma_M - self.population_term - self.gamma_penalty))

    def to_json(self) -> dict:
        return {
            "f1": self.f1,
            "f2_bound": self.f2_bound,
            "sigma_M": self.sigma_M,
            "gamma_penalty": self.gamma_penalty,
            "M": self.M,
            "f_tilde": self.f_tilde,
        }


def b_k(lam: SchmidtSpectrum | Sequence[float], k: int) -> float:
    """Sum of the k largest lambda^2; B_0 = 0."""
    lam = _as_spectrum(lam)
    if not 0 <= k <= lam.d:
        raise ValueError(f"k={k} outside [0, {lam.d}]")
    if k == lam.d:
        return 1.0
    return float(np.sum(lam.sorted_desc[:k] ** 2))


def thresholds(lam: SchmidtSpectrum | Sequence[float]) -> list[float]:
    """[B_1, ..., B_{d-1}]."""
    lam = _as_spectrum(lam)
    return [b_k(lam, k) for k in range(1, lam.d)]


# F~ assembled from O(d^4) float terms carries ~1e-15 rounding; at tight points
# (F~ exactly B_k) an unguarded comparison would certify one dimension too many.
DECISION_TOL = 1e-12


def dimensionality(f_tilde: float, lam: SchmidtSpectrum | Sequence[float], tol: float = DECISION_TOL) -> int:
    """max{k : f_tilde > B_{k-1}} with B_0 = 0, floored at 1."""
    lam = _as_spectrum(lam)
    d_ent = 1
    for k in range(2, lam.d + 1):
        if f_tilde > b_k(lam, k - 1) + tol:
            d_ent = k
    return d_ent


def _phase_weight(e: np.ndarray, M: int, d: int) -> np.ndarray:
    """(1/M)|sum_{k<M} omega^(k e)| elementwise."""
    k = np.arange(M)
    phases = np.exp(2j * np.pi * ((np.multiply.outer(e, k)) % d) / d)
    return np.abs(phases.sum(axis=-1)) / M


def gamma_tilde(lam: SchmidtSpectrum | Sequence[float], m: int, mp: int, n: int, np_: int, M: int, d: int | None = None) -> float:
    lam = _as_spectrum(lam)
    d = lam.d if d is None else int(d)
    if d != lam.d:
        raise DimensionMismatchError("d does not match the length of lambda")
    if M < 1:
        raise ValueError("M must be at least 1")
    if not all(0 <= x < d for x in (m, mp, n, np_)):
        raise ValueError("indices out of range")
    if m == mp or m == n or n == np_ or np_ == mp:
        raise ValueError("gamma_tilde needs m!=m', m!=n, n!=n', n'!=m'")
    if (m - mp - n + np_) % d != 0:
        return 0.0
    l = lam.lambdas
    amp = math.sqrt(l[m] * l[mp] * l[n] * l[np_])
    e = np.array((m * m - mp * mp - n * n + np_ * np_) % d)
    return float(amp * _phase_weight(e, M, d))


@functools.lru_cache(maxsize=256)
def _gamma_tensor_cached(lam_key: tuple[float, ...], M: int) -> np.ndarray:
    l = np.array(lam_key)
    d = l.size
    m, mp, n, np_ = np.meshgrid(*(np.arange(d),) * 4, indexing="ij")
    admissible = (m != mp) & (m != n) & (n != np_) & (np_ != mp) & ((m - mp - n + np_) % d == 0)
    e = (m * m - mp * mp - n * n + np_ * np_) % d
    amp = np.sqrt(np.einsum("a,b,c,e->abce", l, l, l, l))
    g = np.where(admissible, amp * _phase_weight(e, M, d), 0.0)
    g.setflags(write=False)
    return g


def gamma_tensor(lam: SchmidtSpectrum | Sequence[float], M: int) -> np.ndarray:
    """gamma~[m, m', n, n'] over all index tuples (zero outside the admissible set)."""
    lam = _as_spectrum(lam)
    if M < 1:
        raise ValueError("M must be at least 1")
    return _gamma_tensor_cached(tuple(float(x) for x in lam.lambdas), int(M))


def _penalty(lam: SchmidtSpectrum, M: int, pops: np.ndarray) -> float:
    g = gamma_tensor(lam, M)
    root = np.sqrt(np.clip(pops, 0.0, None))
    # sum gamma[m,m',n,n'] sqrt(<m'n'|rho|m'n'> <mn|rho|mn>)
    return float(np.einsum("abce,be,ac->", g, root, root))


def _breakdown(lam: SchmidtSpectrum, pops: np.ndarray, tilted_sums: Sequence[float]) -> FidelityBreakdown:
    d = lam.d
    if pops.shape != (d, d):
        raise DimensionMismatchError(f"populations shape {pops.shape} vs d={d}")
    l = lam.lambdas
    M = len(tilted_sums)
    if M < 1:
        raise ValueError("at least one tilted setting is required")
    s = float(l.sum())
    sigma = float(np.mean(tilted_sums))
    f1 = float(np.sum(l**2 * np.diag(pops)))
    pop_term = float(l @ pops @ l)
    penalty = _penalty(lam, M, pops)
    f2 = s * s / d * sigma - pop_term - penalty
    return FidelityBreakdown(f1, f2, sigma, penalty, pop_term, M, s)


def fidelity_bound(
    std_estimate: DiagonalEstimate,
    tilted_estimates: Sequence[DiagonalEstimate],
    lam: SchmidtSpectrum | Sequence[float],
    M: int | None = None,
) -> FidelityBreakdown:
    """F~ from measured estimates; ``tilted_estimates[k]`` belongs to family k."""
    lam = _as_spectrum(lam)
    if M is not None and M != len(tilted_estimates):
        raise ValueError(f"M={M} but {len(tilted_estimates)} tilted estimates given")
    for est in (std_estimate, *tilted_estimates):
        if est.dim != lam.d:
            raise DimensionMismatchError(f"estimate '{est.label}' has d={est.dim}, lambda has d={lam.d}")
    sums = [float(np.trace(t.values)) for t in tilted_estimates]
    return _breakdown(lam, std_estimate.values, sums)


def fidelity_bound_exact(
    rho: DensityMatrix,
    lam: SchmidtSpectrum | Sequence[float],
    M: int = 1,
    *,
    check: bool = True,
) -> FidelityBreakdown:
    """Same bound evaluated on exact matrix elements of ``rho``."""
    lam = _as_spectrum(lam)
    if rho.dims != (lam.d, lam.d):
        raise DimensionMismatchError(f"state dims {rho.dims} vs lambda length {lam.d}")
    sums = [tilted_diagonal_sum(rho, lam, k, check=check) for k in range(int(M))]
    return _breakdown(lam, rho.product_diagonal(), sums)


def target_fidelity(rho: DensityMatrix, lam: SchmidtSpectrum | Sequence[float]) -> float:
    """<Phi|rho|Phi> for Phi = sum lambda_m |mm> (the quantity F~ bounds)."""
    lam = _as_spectrum(lam)
    d = lam.d
    idx = np.arange(d) * (d + 1)
    block = rho.matrix[np.ix_(idx, idx)]
    return float(np.real(lam.lambdas @ block @ lam.lambdas))


def _is_prime(n: int) -> bool:
    return n >= 2 and all(n % p for p in range(2, math.isqrt(n) + 1))


@dataclass(frozen=True)
class CertificationReport:
    d: int
    lam: SchmidtSpectrum
    M: int
    f_tilde: float
    f_tilde_sigma: float | None
    thresholds: list[float]
    d_ent: int
    eof_bound: float | None
    eof_sigma: float | None
    breakdown: FidelityBreakdown
    flags: dict[str, Any] = field(default_factory=dict)
    provenance: dict[str, Any] = field(default_factory=dict)

    @property
    def entanglement_certified(self) -> bool:
        return self.d_ent >= 2

    def to_json(self) -> dict:
        return {
            "schema": 1,
            "d": self.d,
            "lambda": self.lam.to_list(),
            "M": self.M,
            "f_tilde": self.f_tilde,
            "f_tilde_sigma": self.f_tilde_sigma,
            "thresholds": {f"B_{k}": b for k, b in enumerate(self.thresholds, start=1)},
            "d_ent": self.d_ent,
            "entanglement_certified": self.entanglement_certified,
            "eof_bound": self.eof_bound,
            "eof_sigma": self.eof_sigma,
            "breakdown": self.breakdown.to_json(),
            "flags": self.flags,
            "provenance": self.provenance,
        }


def certify(
    std_estimate: DiagonalEstimate,
    tilted_estimates: Sequence[DiagonalEstimate],
    lam: SchmidtSpectrum | Sequence[float],
    resample_sigma: dict[str, float] | None = None,
    provenance: dict[str, Any] | None = None,
) -> CertificationReport:
    lam = _as_spectrum(lam)
    br = fidelity_bound(std_estimate, tilted_estimates, lam)
    d = lam.d
    M = br.M
    flags: dict[str, Any] = {
        "nonprime_M_warning": M > 1 and not _is_prime(d),
        "incomplete_basis": not lam.strictly_positive,
        "uniform_target": lam.is_uniform,
        "negative_f_tilde": br.f_tilde < 0,
    }
    eof = eof_bound(std_estimate, br.f_tilde, d) if lam.is_uniform else None
    sigma = resample_sigma or {}
    return CertificationReport(
        d=d,
        lam=lam,
        M=M,
        f_tilde=br.f_tilde,
        f_tilde_sigma=sigma.get("f_tilde"),
        thresholds=thresholds(lam),
        d_ent=dimensionality(br.f_tilde, lam),
        eof_bound=eof,
        eof_sigma=sigma.get("eof_bound") if eof is not None else None,
        breakdown=br,
        flags=flags,
        provenance=dict(provenance or {}),
    )


# ---------------------------------------------------------------- algebra check


def sigma_parts(rho: DensityMatrix, lam: SchmidtSpectrum | Sequence[float]) -> tuple[float, float, float]:
    """Split sum_j <j~ j~*|rho|j~ j~*> (family 0) into population, (mm,nn)
    coherence and remaining-coherence parts using standard-basis elements only."""
    lam = _as_spectrum(lam)
    d = lam.d
    l = lam.lambdas
    s2 = float(l.sum()) ** 2
    r = rho.matrix.reshape(d, d, d, d)  # r[m, n, m', n'] = <mn|rho|m'n'>
    pops = np.real(np.einsum("mnmn->mn", r))
    s1 = d / s2 * float(l @ pops @ l)
    coh = np.real(np.einsum("mmnn->mn", r))
    off = ~np.eye(d, dtype=bool)
    s2_part = d / s2 * float(np.sum((np.outer(l, l) * coh)[off]))
    m, n, mp, np_ = np.meshgrid(*(np.arange(d),) * 4, indexing="ij")
    admissible = (m != mp) & (m != n) & (n != np_) & (np_ != mp)
    j = np.arange(d)
    c = np.exp(2j * np.pi * (np.multiply.outer((-m + n + mp - np_) % d, j) % d) / d).sum(axis=-1)
    amp = np.sqrt(np.einsum("a,b,c,e->abce", l, l, l, l))
    s3 = float(np.sum(np.where(admissible, amp * np.real(c * r), 0.0))) / s2
    return s1, s2_part, s3


def sigma_decomposition_check(rho: DensityMatrix, lam: SchmidtSpectrum | Sequence[float]) -> float:
    lam = _as_spectrum(lam)
    direct = tilted_diagonal_sum(rho, lam, 0)
    return abs(direct - sum(sigma_parts(rho, lam)))


# ---------------------------------------------------------------- EoF


def _i_prefactor(d: int) -> float:
    if d < 2:
        raise ValueError("need d >= 2")
    return math.sqrt(2.0 / (d * (d - 1)))


def _cross_root(pops: np.ndarray) -> float:
    """sum_{m != n} sqrt(<mn|rho|mn> <nm|rho|nm>)."""
    p = np.clip(pops, 0.0, None)
    prod = np.sqrt(p * p.T)
    return float(prod.sum() - np.trace(prod))


def i_quantity(rho: DensityMatrix, d: int | None = None) -> float:
    d = rho.local_dim if d is None else int(d)
    if rho.dims != (d, d):
        raise DimensionMismatchError("I(rho) needs two parties of equal dimension")
    r = rho.matrix.reshape(d, d, d, d)
    coh = np.abs(np.einsum("mmnn->mn", r))
    coh_sum = float(coh.sum() - np.trace(coh))
    return _i_prefactor(d) * (coh_sum - _cross_root(rho.product_diagonal()))


def eof_from_i(i_value: float) -> float:
    if i_value <= 0:
        return 0.0
    return float(-math.log2(1.0 - min(i_value, math.sqrt(2.0)) ** 2 / 2.0)) if i_value < math.sqrt(2.0) else math.inf


def i_lower(pops: np.ndarray, f_tilde: float, d: int) -> float:
    pops = np.asarray(pops, dtype=float)
    if pops.shape != (d, d):
        raise DimensionMismatchError(f"populations shape {pops.shape} vs d={d}")
    return _i_prefactor(d) * (d * f_tilde - float(np.trace(pops)) - _cross_root(pops))


def eof_bound(std_estimate: DiagonalEstimate | np.ndarray, f_tilde: float, d: int, lam: SchmidtSpectrum | None = None) -> float:
    """Lower bound on the entanglement of formation (ebits) from F~ against Phi+."""
    if lam is not None and not _as_spectrum(lam).is_uniform:
        raise UnsupportedModeError("the EoF bound is only available for the maximally entangled target")
    pops = std_estimate.values if isinstance(std_estimate, DiagonalEstimate) else np.asarray(std_estimate)
    return eof_from_i(i_lower(pops, f_tilde, d))


def eof_bound_exact(rho: DensityMatrix, M: int = 1) -> float:
    d = rho.local_dim
    f = fidelity_bound_exact(rho, SchmidtSpectrum.uniform(d), M).f_tilde
    return eof_from_i(i_lower(rho.product_diagonal(), f, d))


def f_of_M(lam: SchmidtSpectrum | Sequence[float] | None, d: int, M: int) -> float:
    """Penalty weight entering the critical visibility: f(M) = d * sum gamma~(M).

    This scaling makes (d(d-1)+f)/(d(d^2-1)+f) coincide with the zero crossing
    of the isotropic EoF bound."""
    lam = SchmidtSpectrum.uniform(d) if lam is None else _as_spectrum(lam)
    if lam.d != d:
        raise DimensionMismatchError("d does not match the length of lambda")
    if M < 1:
        raise ValueError("M must be at least 1")
    return float(d * gamma_tensor(lam, M).sum())


def p_crit(d: int, M: int) -> float:
    f = f_of_M(None, d, M)
    return (d * (d - 1) + f) / (d * (d * d - 1) + f)


def p_crit_bw(d: int) -> float:
    return (d * d - 3 * d + 4) / (d * d - 2 * d + 4)


# ---------------------------------------------------------------- GHZ


def ghz_fidelity_bound(rho: DensityMatrix, lam: SchmidtSpectrum | Sequence[float], n: int) -> float:
    """(sum lambda^(2/n))^n <0~|^n rho |0~>^n minus the coherences it cannot vouch for."""
    lam = _as_spectrum(lam)
    d = lam.d
    if rho.dims != (d,) * n:
        raise DimensionMismatchError(f"state dims {rho.dims} vs {n} parties of dimension {d}")
    if not lam.strictly_positive:
        raise IncompleteBasisError("incomplete tilted basis: Schmidt coefficients contain zeros")
    root = lam.lambdas ** (1.0 / n)
    s = float(np.sum(root**2))
    zero = root / math.sqrt(s)
    vec = functools.reduce(np.kron, [zero] * n).astype(complex)
    overlap = rho.expectation(vec)
    lam_alpha = functools.reduce(np.kron, [root] * n)  # prod_k lambda_{i_k}^(1/n)
    pops = np.clip(np.real(np.diag(rho.matrix)), 0.0, None)
    weights = lam_alpha * np.sqrt(pops)
    step = sum(d**k for k in range(n))
    diag_w = weights[np.arange(d) * step]
    penalty = float(weights.sum() ** 2 - diag_w.sum() ** 2)
    return float(s**n * overlap - penalty)


def ghz_exact_fidelity(rho: DensityMatrix, lam: SchmidtSpectrum | Sequence[float], n: int) -> float:
    lam = _as_spectrum(lam)
    d = lam.d
    step = sum(d**k for k in range(n))
    idx = np.arange(d) * step
    return float(np.real(lam.lambdas @ rho.matrix[np.ix_(idx, idx)] @ lam.lambdas))


# ---------------------------------------------------------------- sweeps


@dataclass(frozen=True)
class SweepPoint:
    x: float
    f_tilde: float
    d_ent: int
    eof_bound: float | None = None


def bisect_root(fn: Callable[[float], float], lo: float, hi: float, tol: float = 1e-9) -> float | None:
    """Smallest x in [lo, hi] with fn(x) > 0, assuming a single sign change."""
    flo, fhi = fn(lo), fn(hi)
    if flo > 0:
        return lo
    if fhi <= 0:
        return None
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if fn(mid) > 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def isotropic_f_tilde(d: int, p: float, M: int = 1) -> float:
    return fidelity_bound_exact(isotropic_state(d, p), SchmidtSpectrum.uniform(d), M).f_tilde


def isotropic_thresholds(d: int, M: int = 1, tol: float = 1e-9) -> dict[int, float | None]:
    """p_k: visibility above which F~ exceeds B_k = k/d, for k = 1..d-1."""
    out = {}
    for k in range(1, d):
        out[k] = bisect_root(lambda p: isotropic_f_tilde(d, p, M) - k / d, 0.0, 1.0, tol)
    return out


def isotropic_sweep(d: int, p_grid: Sequence[float], M: int = 1) -> list[SweepPoint]:
    lam = SchmidtSpectrum.uniform(d)
    pts = []
    for p in p_grid:
        rho = isotropic_state(d, float(p))
        f = fidelity_bound_exact(rho, lam, M).f_tilde
        eof = eof_from_i(i_lower(rho.product_diagonal(), f, d))
        pts.append(SweepPoint(float(p), f, dimensionality(f, lam), eof))
    return pts


def eof_zero_crossing(d: int, M: int = 1, tol: float = 1e-9) -> float | None:
    """Visibility at which the isotropic EoF bound becomes positive."""

    def lower(p: float) -> float:
        rho = isotropic_state(d, p)
        f = fidelity_bound_exact(rho, SchmidtSpectrum.uniform(d), M).f_tilde
        return i_lower(rho.product_diagonal(), f, d)

    return bisect_root(lower, 0.0, 1.0, tol)


def rotation_unitary(d: int, theta: float, subspace: Sequence[int] = (0, 1)) -> np.ndarray:
    """Columns |0'> = cos t|a> + sin t|b>, |1'> = -sin t|a> + cos t|b>."""
    a, b = subspace
    u = np.eye(d, dtype=complex)
    c, s = math.cos(theta), math.sin(theta)
    u[a, a], u[b, a] = c, s
    u[a, b], u[b, b] = -s, c
    return u


def rotated_state(theta: float, d: int = 3, subspace: Sequence[int] = (0, 1)) -> DensityMatrix:
    """Phi+ expressed in Bob's rotated frame: (1 x U^dag) rho (1 x U)."""
    u = np.kron(np.eye(d), rotation_unitary(d, theta, subspace))
    rho = maximally_entangled(d).matrix
    return DensityMatrix((d, d), u.conj().T @ rho @ u)


def rotation_point(theta: float, d: int = 3, M: int = 1) -> SweepPoint:
    """Adaptive pipeline in analytic mode: nominate lambda from the rotated
    standard-basis data, build the tilted basis, bound the fidelity."""
    rho = rotated_state(theta, d)
    diag = np.diag(rho.product_diagonal())
    lam = SchmidtSpectrum(np.sqrt(np.clip(diag, 0, None) / diag.sum()))
    f = fidelity_bound_exact(rho, lam, M, check=False).f_tilde
    return SweepPoint(float(theta), f, dimensionality(f, lam))


def rotation_sweep(theta_grid: Sequence[float], d: int = 3, M: int = 1) -> list[SweepPoint]:
    return [rotation_point(float(t), d, M) for t in theta_grid]


def rotation_threshold(d: int = 3, M: int = 1, tol: float = 1e-9) -> float | None:
    """Largest theta in [0, pi/2] up to which d_ent = d is still certified."""
    lo, hi = 0.0, math.pi / 2
    if rotation_point(lo, d, M).d_ent < d:
        return None
    if rotation_point(hi, d, M).d_ent == d:
        return hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if rotation_point(mid, d, M).d_ent == d:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
