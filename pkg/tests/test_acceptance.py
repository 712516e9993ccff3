"""Acceptance suite: one PASS/FAIL line per criterion, printed in the
terminal summary. Each test asserts exactly what its line reports."""

import itertools
import math
import time
from fractions import Fraction

import numpy as np
import pytest

from hdent import certify as cert
from hdent.bases import mub_basis, standard_basis, tilted_diagonal_sum
from hdent.cli import main
from hdent.estimate import ResampleSpec, estimate_standard, estimate_tilted, loss_correct, resample_pipeline
from hdent.expsim import (
    LossModel,
    expected_counts,
    marginals,
    sample_counts,
    setting_probabilities,
    standard_measurement,
    tilted_measurement,
)
from hdent.qstate import (
    DensityMatrix,
    SchmidtSpectrum,
    dephased_state,
    entanglement_entropy,
    ghz_state,
    isotropic_state,
    random_density_matrix,
    random_pure_vector,
    rank_k_mixture,
    white_noise_mixture,
)

from conftest import lambda_d11, noisy_state, random_spectrum, record


def test_criterion_01_soundness():
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    worst = -np.inf
    for d in range(2, 8):
        for _ in range(1000):
            rho = noisy_state(d, rng)
            lam = random_spectrum(d, rng)
            f = cert.target_fidelity(rho, lam)
            for M in sorted({1, 2, d}):
                worst = max(worst, cert.fidelity_bound_exact(rho, lam, M).f_tilde - f)
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-9 and elapsed < 120
    record(1, ok, f"max(F~ - F) = {worst:.3e} over 6000 states x M in {{1,2,d}}; {elapsed:.1f} s")
    assert ok


def test_criterion_02_tightness():
    rng = np.random.default_rng(2)
    dephased_err = 0.0
    for d in range(2, 9):
        for _ in range(50):
            lam = random_spectrum(d, rng)
            rho = dephased_state(lam, rng.uniform())
            dephased_err = max(dephased_err, abs(cert.fidelity_bound_exact(rho, lam, 1).f_tilde - cert.target_fidelity(rho, lam)))
    prime_err = 0.0
    for d in (3, 5, 7):
        for _ in range(50):
            rho = random_density_matrix((d, d), rng)
            lam = random_spectrum(d, rng)
            prime_err = max(prime_err, abs(cert.fidelity_bound_exact(rho, lam, d).f_tilde - cert.target_fidelity(rho, lam)))
    ok = dephased_err < 1e-10 and prime_err < 1e-9
    record(2, ok, f"dephased M=1 max|F~-F| = {dephased_err:.1e}; prime d, M=d max|F~-F| = {prime_err:.1e}")
    assert ok


def _iso_exact(d: int, p: Fraction) -> Fraction:
    return (p * d + 1 - p + p * d * (d - 1) - (d - 1) ** 2 * (1 - p)) / d**2


def test_criterion_03_isotropic_thresholds():
    p32 = cert.isotropic_thresholds(3, 1)[2]
    p71 = cert.isotropic_thresholds(7, 1)[1]
    p71m2 = cert.isotropic_thresholds(7, 2)[1]
    checks = [
        (p32, 10 / 13, 1e-6, "p_2(d=3)"),
        (p71, 43 / 85, 1e-6, "p_1(d=7,M=1)"),
        (p71m2, 0.3997, 5e-4, "p_1(d=7,M=2)"),
    ]
    parts = [f"{name} = {got:.6f} vs {want:.6f}" for got, want, _, name in checks]
    roots_ok = all(abs(got - want) < tol for got, want, tol, _ in checks)
    grid_ok = True
    for d in range(2, 11):
        lam = SchmidtSpectrum.uniform(d)
        for i in range(101):
            p = Fraction(i, 100)
            f = cert.fidelity_bound_exact(isotropic_state(d, float(p)), lam, 1).f_tilde
            ceiling = min(d, max(1, math.ceil(d * _iso_exact(d, p))))
            grid_ok &= cert.dimensionality(f, lam) == ceiling
    ok = roots_ok and grid_ok
    record(3, ok, "; ".join(parts) + f"; ceiling rule on 101-point grid d=2..10: {'ok' if grid_ok else 'mismatch'}")
    assert ok


def test_criterion_04_no_overcertification():
    over = []
    tight = []
    for d in range(2, 9):
        lam = SchmidtSpectrum.uniform(d)
        for k in range(1, d + 1):
            rho = rank_k_mixture(d, k)
            d_ent = cert.dimensionality(cert.fidelity_bound_exact(rho, lam, 1).f_tilde, lam)
            if d_ent > k:
                over.append((d, k, d_ent))
            if d_ent != k:
                tight.append((d, k, d_ent))
    ok = not over and not tight
    record(4, ok, f"rank-k mixtures d<=8: over-certified {len(over)}, not exact at F = B_k {len(tight)}")
    assert ok


def test_criterion_05_experimental_lambda():
    lam = lambda_d11()
    b7 = cert.b_k(lam, 7)
    b7u = cert.b_k(SchmidtSpectrum.uniform(11), 7)
    u = SchmidtSpectrum.uniform(11)
    d_ent = cert.dimensionality(0.748, u)
    ok = round(b7, 2) == 0.72 and round(b7u, 2) == 0.64 and d_ent == 9
    record(5, ok, f"B_7 tilted = {b7:.4f} (2 dp {round(b7, 2)} vs 0.72); B_7 uniform = {b7u:.4f}; d_ent(0.748) = {d_ent}")
    assert ok


def test_criterion_06_mub():
    worst = 0.0
    for d in (2, 3, 5, 7):
        bases = [standard_basis(d)] + [mub_basis(d, k) for k in range(d)]
        for b in bases:
            worst = max(worst, np.max(np.abs(b.gram() - np.eye(d))))
        for a, b in itertools.combinations(bases, 2):
            worst = max(worst, np.max(np.abs(np.abs(a.vectors.conj() @ b.vectors.T) ** 2 - 1 / d)))
    ok = worst < 1e-12
    record(6, ok, f"max deviation from orthonormal/unbiased over d in {{2,3,5,7}}: {worst:.1e}")
    assert ok


def test_criterion_07_loss_correction():
    rng = np.random.default_rng(7)
    noiseless = 0.0
    for _ in range(50):
        d = int(rng.integers(2, 7))
        rho = random_density_matrix((d, d), rng)
        setting = standard_measurement(d)
        probs = setting_probabilities(rho, setting)
        loss = LossModel(rng.uniform(0.05, 1, d), rng.uniform(0.05, 1, d))
        t = expected_counts(probs, 1e6, loss=loss, marginals=marginals(rho, setting))
        noiseless = max(noiseless, np.max(np.abs(loss_correct(t).values - probs)))

    eta_a, eta_b = [1, 0.5, 0.25], [0.9, 0.6, 0.3]
    states = {
        "isotropic p=0.8": isotropic_state(3, 0.8),
        "dephased": dephased_state(SchmidtSpectrum.normalized([1, 2, 3]), 0.5),
        "random": random_density_matrix((3, 3), np.random.default_rng(4)),
    }
    poisson = {}
    for name, rho in states.items():
        setting = standard_measurement(3)
        probs = setting_probabilities(rho, setting)
        t = sample_counts(probs, 1e6, loss=LossModel(eta_a, eta_b), seed=70, marginals=marginals(rho, setting))
        big = probs > 0.01
        poisson[name] = float(np.max(np.abs(loss_correct(t).values - probs)[big] / probs[big]))

    counts = rng.integers(10, 1000, (4, 4)).astype(float)
    from hdent.tables import CoincidenceTable

    raw = CoincidenceTable("standard", counts, counts.sum(axis=1), counts.sum(axis=0))
    unit = np.max(np.abs(loss_correct(raw).values - estimate_standard(raw).values))

    ok = noiseless < 1e-9 and max(poisson.values()) < 0.01 and unit < 1e-12
    pz = ", ".join(f"{k} {v:.2%}" for k, v in poisson.items())
    record(7, ok, f"noiseless max err {noiseless:.1e}; Poisson 1e6 pairs max rel err: {pz}; eta=1 vs raw {unit:.1e}")
    assert ok


def _bw_crossing(d):
    u = 1 / math.sqrt(d)
    idx = np.arange(d)
    m, mp, n, q = np.meshgrid(idx, idx, idx, idx, indexing="ij")
    mask = (m != mp) & (m != n) & (n != q) & (q != mp)

    def lower(p):
        rho = isotropic_state(d, p)
        pops = rho.product_diagonal()
        root = np.sqrt(pops)
        pen = u**2 * float(np.sum(np.where(mask, root[mp, q] * root[m, n], 0.0)))
        lam = np.full(d, u)
        f = np.sum(lam**2 * np.diag(pops)) + lam.sum() ** 2 / d * tilted_diagonal_sum(rho, lam) - lam @ pops @ lam - pen
        return cert.i_lower(pops, f, d)

    return cert.bisect_root(lower, 0, 1, 1e-10)


def test_criterion_08_eof():
    rng = np.random.default_rng(8)
    excess = -np.inf
    for d in (2, 3, 4):
        for _ in range(200):
            psi = random_pure_vector(d * d, rng)
            excess = max(excess, cert.eof_bound_exact(DensityMatrix.from_pure(psi, (d, d))) - entanglement_entropy(psi))
    formula_err = 0.0
    for d in range(3, 11):
        for M in (1, 2, 3):
            formula_err = max(formula_err, abs(cert.eof_zero_crossing(d, M, 1e-10) - cert.p_crit(d, M)))
    bw_err = max(abs(_bw_crossing(d) - cert.p_crit_bw(d)) for d in range(3, 11))
    ordered = all(cert.p_crit(d, 1) < cert.p_crit_bw(d) for d in range(3, 11))
    ok = excess <= 1e-9 and formula_err < 1e-6 and bw_err < 1e-6 and ordered
    record(8, ok, f"max(EoF bound - entropy) = {excess:.2e}; |crossing - p_crit(M)| = {formula_err:.1e}; "
                  f"|comparison crossing - p_crit^BW| = {bw_err:.1e}; p_crit(1) < p_crit^BW: {ordered}")
    assert ok


def test_criterion_09_multipartite():
    rng = np.random.default_rng(9)
    exact_err = 0.0
    for n in (2, 3):
        for d in (2, 3):
            lam = random_spectrum(d, rng, low=0.2)
            exact_err = max(exact_err, abs(cert.ghz_fidelity_bound(ghz_state(lam, n), lam, n) - 1))
    excess = best = -np.inf
    for i in range(200):
        d = 2 + i % 2
        lam = random_spectrum(d, rng, low=0.2)
        rho = white_noise_mixture(ghz_state(lam, 3), rng.uniform(0.9, 1))
        w = rng.uniform(0.9, 1)
        rho = DensityMatrix(rho.dims, w * rho.matrix + (1 - w) * random_density_matrix((d,) * 3, rng).matrix)
        bound = cert.ghz_fidelity_bound(rho, lam, 3)
        best = max(best, bound)
        excess = max(excess, bound - cert.ghz_exact_fidelity(rho, lam, 3))
    ok = exact_err < 1e-9 and excess <= 1e-9
    record(9, ok, f"|bound - 1| on GHZ = {exact_err:.1e}; max(bound - F) on 200 mixtures = {excess:.2e} (largest bound {best:.3f})")
    assert ok


def test_criterion_10_statistics(tmp_path):
    d = 5
    lam = SchmidtSpectrum.uniform(d)
    rho = isotropic_state(d, 0.8)
    probs = [setting_probabilities(rho, standard_measurement(d)), setting_probabilities(rho, tilted_measurement(lam))]

    def pipeline(ts):
        std = estimate_standard(ts[0])
        return {"f_tilde": cert.fidelity_bound(std, [estimate_tilted(ts[1], lam, std)], lam).f_tilde}

    scaled = []
    for pairs in (1e4, 1e5, 1e6):
        tables = [sample_counts(p, pairs, seed=10, label=lbl) for p, lbl in zip(probs, ("standard", "mub0"))]
        s = resample_pipeline(tables, ResampleSpec(400, 10), pipeline)
        total = sum(t.total for t in tables)
        scaled.append(s.std["f_tilde"] * math.sqrt(total))
    spread = max(scaled) / min(scaled) - 1

    def run(out):
        main(["simulate", "--family", "isotropic", "--d", "5", "--p", "0.8", "--M", "2", "--pairs", "1e5", "--seed", "42", "--out", str(out)])
        main(["certify", "--dir", str(out), "--resamples", "50", "--seed", "1", "--out", str(out / "report.json")])
        return {p.name: p.read_bytes() for p in sorted(out.iterdir())}

    identical = run(tmp_path / "a") == run(tmp_path / "b")
    ok = spread < 0.2 and identical
    record(10, ok, f"sigma*sqrt(N) spread over 100x exposure = {spread:.1%}; byte-identical reruns: {identical}")
    assert ok


def test_criterion_11_sigma_identity():
    rng = np.random.default_rng(11)
    worst = 0.0
    for d in range(2, 8):
        for _ in range(100):
            worst = max(worst, cert.sigma_decomposition_check(random_density_matrix((d, d), rng), random_spectrum(d, rng)))
    ok = worst < 1e-10
    record(11, ok, f"max residual over 600 states = {worst:.1e}")
    assert ok
