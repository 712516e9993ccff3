import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hdent.bases import c_lambda, tilted_setting
from hdent.errors import DimensionMismatchError
from hdent.expsim import (
    LossModel,
    expected_counts,
    mub_measurement,
    rotated_standard_basis,
    sample_counts,
    setting_probabilities,
    standard_measurement,
    tilted_measurement,
)
from hdent.qstate import SchmidtSpectrum, maximally_entangled, pure_target_state, random_density_matrix


def test_standard_probabilities_of_phi_plus():
    p = setting_probabilities(maximally_entangled(3), standard_measurement(3))
    assert np.allclose(p, np.eye(3) / 3, atol=1e-14)


@pytest.mark.parametrize("d", [2, 3, 5])
def test_mub_settings_perfectly_correlated(d):
    for k in range(d):
        p = setting_probabilities(maximally_entangled(d), mub_measurement(d, k))
        assert np.allclose(p, np.eye(d) / d, atol=1e-12)


def test_tilted_probabilities_sum_to_c_lambda():
    lam = SchmidtSpectrum.normalized([math.sqrt(0.8), math.sqrt(0.2)])
    rho = pure_target_state(lam)
    p = setting_probabilities(rho, tilted_measurement(lam))
    assert p.sum() == pytest.approx(c_lambda(lam, rho.product_diagonal()), abs=1e-10)


@settings(max_examples=25, deadline=None)
@given(d=st.integers(2, 5), seed=st.integers(0, 2**32 - 1))
def test_orthonormal_probabilities_sum_to_one(d, seed):
    rho = random_density_matrix((d, d), np.random.default_rng(seed))
    for setting in (standard_measurement(d), mub_measurement(d, 1)):
        p = setting_probabilities(rho, setting)
        assert p.sum() == pytest.approx(1, abs=1e-10)
        assert p.min() >= 0 and p.max() <= 1


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatchError):
        setting_probabilities(maximally_entangled(3), standard_measurement(4))


def test_zero_rate_gives_zero_table():
    t = sample_counts(np.eye(3) / 3, 0.0, seed=1)
    assert t.total == 0 and t.singles_a.sum() == 0


def test_sampling_reproducible_and_label_keyed():
    probs = np.full((3, 3), 1 / 9)
    a = sample_counts(probs, 1e4, seed=7, label="standard")
    b = sample_counts(probs, 1e4, seed=7, label="standard")
    c = sample_counts(probs, 1e4, seed=7, label="tilt0")
    assert np.array_equal(a.counts, b.counts)
    assert not np.array_equal(a.counts, c.counts)


def test_sampling_mean_within_three_sigma():
    probs = np.array([[0.5, 0.1], [0.1, 0.3]])
    loss = LossModel([1.0, 0.5], [0.8, 0.6])
    mean = expected_counts(probs, 1e3, loss=loss, accidental_rate=2.0).counts
    draws = np.array([sample_counts(probs, 1e3, loss=loss, accidental_rate=2.0, seed=s).counts for s in range(1000)])
    sem = np.sqrt(mean / 1000)
    assert np.all(np.abs(draws.mean(axis=0) - mean) < 3 * sem + 1e-12)


def test_large_exposure_diagonal_statistics():
    t = sample_counts(np.eye(3) / 3, 3e6, seed=3)
    assert np.all(np.abs(np.diag(t.counts) - 1e6) < 5 * 1e3)
    assert np.all(t.counts[~np.eye(3, dtype=bool)] == 0)


def test_ratio_converges_to_probabilities():
    rho = random_density_matrix((3, 3), np.random.default_rng(5))
    probs = setting_probabilities(rho, standard_measurement(3))
    t = sample_counts(probs, 1e7, seed=11)
    big = probs > 0.01
    rel = np.abs(t.counts / t.total - probs)[big] / probs[big]
    assert rel.max() < 0.01


def test_loss_model_validation():
    with pytest.raises(ValueError):
        LossModel([1.0, 0.0], [1.0, 1.0])
    with pytest.raises(DimensionMismatchError):
        LossModel([1.0], [1.0, 1.0])


def test_rotated_basis():
    b0 = rotated_standard_basis(3, 0.0)
    assert np.allclose(np.abs(b0.vectors), np.eye(3))
    b = rotated_standard_basis(3, math.pi / 4)
    assert np.allclose(b.vectors[0], [1 / math.sqrt(2), 1 / math.sqrt(2), 0])
    rng = np.random.default_rng(0)
    for theta in rng.uniform(0, 2 * math.pi, 10):
        assert np.allclose(rotated_standard_basis(4, theta, (1, 3)).gram(), np.eye(4), atol=1e-12)
    with pytest.raises(ValueError):
        rotated_standard_basis(3, 0.1, (1, 1))
