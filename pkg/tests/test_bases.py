import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hdent.bases import (
    c_lambda,
    mub_basis,
    standard_basis,
    tilted_basis,
    tilted_diagonal_sum,
    tilted_povm,
)
from hdent.errors import IncompleteBasisError
from hdent.qstate import SchmidtSpectrum, maximally_entangled, pure_target_state


def _unbiased(a, b):
    return np.max(np.abs(np.abs(a.vectors.conj() @ b.vectors.T) ** 2 - 1 / a.dim))


@pytest.mark.parametrize("d", [2, 3, 5, 7])
def test_mub_completeness_prime(d):
    bases = [standard_basis(d)] + [mub_basis(d, k) for k in range(d)]
    for b in bases:
        assert np.allclose(b.gram(), np.eye(d), atol=1e-12)
    for a, b in itertools.combinations(bases, 2):
        assert _unbiased(a, b) < 1e-12


def test_uniform_tilted_is_mub():
    b = tilted_basis(SchmidtSpectrum.uniform(4), 1)
    assert b.kind == "mub"
    assert np.allclose(b.vectors, mub_basis(4, 1).vectors)


def test_tilted_rejects_zero_lambda():
    with pytest.raises(IncompleteBasisError, match="incomplete tilted basis"):
        tilted_basis([0.6, 0.8, 0.0])


def test_tilted_vectors_unit_norm_not_orthogonal():
    b = tilted_basis(SchmidtSpectrum.normalized([1, 2, 3]))
    assert np.allclose(np.linalg.norm(b.vectors, axis=1), 1)
    assert not np.allclose(b.gram(), np.eye(3))


@settings(max_examples=30, deadline=None)
@given(vals=st.lists(st.floats(0.05, 1), min_size=2, max_size=6), k=st.integers(0, 5))
def test_povm_completion_is_positive(vals, k):
    elems = tilted_povm(SchmidtSpectrum.normalized(vals), k)
    assert np.allclose(sum(elems), np.eye(len(vals)))
    assert np.linalg.eigvalsh(elems[-1]).min() > -1e-12


def test_c_lambda_values():
    d = 3
    pops = np.eye(d) / d
    assert c_lambda(SchmidtSpectrum.uniform(d), pops) == pytest.approx(1)
    lam = SchmidtSpectrum.normalized([math.sqrt(0.8), math.sqrt(0.2)])
    pops = np.diag(lam.lambdas**2)
    expected = 4 / lam.lambdas.sum() ** 2 * np.sum(lam.lambdas**4)
    assert c_lambda(lam, pops) == pytest.approx(expected)


def test_tilted_sum_on_target_matches_tightness():
    # (sum lambda)^2 / d * Sigma = 1 on the target itself
    lam = SchmidtSpectrum.normalized([1, 2, 3, 4])
    s = tilted_diagonal_sum(pure_target_state(lam), lam)
    assert lam.lambdas.sum() ** 2 / 4 * s == pytest.approx(1)
    assert tilted_diagonal_sum(maximally_entangled(5), SchmidtSpectrum.uniform(5), 2) == pytest.approx(1)


def test_basis_json_shape():
    doc = mub_basis(3, 1).to_json()
    assert doc["schema"] == 1 and doc["k"] == 1
    assert len(doc["vectors"]) == 3 and len(doc["vectors"][0][0]) == 2
