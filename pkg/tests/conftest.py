from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from hdent.qstate import DensityMatrix, SchmidtSpectrum, random_pure_vector

FIXTURES = Path(__file__).parent / "fixtures"
LAMBDA_D11 = FIXTURES / "lambda_d11.json"


def lambda_d11() -> SchmidtSpectrum:
    return SchmidtSpectrum.normalized(json.loads(LAMBDA_D11.read_text())["lambda"])


def noisy_state(d: int, rng: np.random.Generator) -> DensityMatrix:
    """p |psi><psi| + (1 - p) * random diagonal noise."""
    psi = random_pure_vector(d * d, rng)
    p = rng.uniform()
    noise = rng.dirichlet(np.ones(d * d))
    mat = p * np.outer(psi, psi.conj()) + (1 - p) * np.diag(noise)
    return DensityMatrix((d, d), 0.5 * (mat + mat.conj().T))


def random_spectrum(d: int, rng: np.random.Generator, low: float = 0.05) -> SchmidtSpectrum:
    return SchmidtSpectrum.normalized(rng.uniform(low, 1.0, d))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES: list[str] = []


def record(criterion: int, ok: bool, detail: str) -> None:
    line = f"criterion {criterion:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
