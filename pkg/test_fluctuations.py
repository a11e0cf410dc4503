import math

import numpy as np
import pytest

import fluctuations
import meanfield
import metrics
import model as potentials
from errors import CoercivityError, InsufficientDataError, PreconditionError, UnsupportedModelError
from model import Domain, PotentialSpec
from particle import ParticleEnsemble
from rng_utils import stream


def _free(beta=1.0):
    return PotentialSpec(Domain.torus(), beta=beta)


# ==================== FIELDS ====================
def test_single_particle_field():
    spec = _free()
    ens = ParticleEnsemble(np.array([[0.3]]), spec, stream(0, "f"))
    field = fluctuations.compute_fluctuation_field(ens, meanfield.flat_density(spec), k_max=4)
    expected = np.exp(-2j * np.pi * np.arange(1, 5) * 0.3)
    assert np.allclose(field.coefficients, expected, atol=1e-12)
    assert field.mode(-2) == pytest.approx(np.conj(expected[1]))
    assert field.mode(0) == 0.0


def test_field_is_conjugate_symmetric():
    spec = _free()
    ens = ParticleEnsemble(np.random.default_rng(0).random((50, 1)), spec, stream(0, "f"))
    modes = fluctuations.compute_fluctuation_field(ens, meanfield.flat_density(spec), k_max=6).as_dict()
    assert all(modes[-k] == np.conj(modes[k]) for k in range(1, 7))


def test_evenly_spread_particles_have_no_fluctuation():
    spec = _free()
    n = 64
    ens = ParticleEnsemble(((np.arange(n) + 0.5) / n)[:, None], spec, stream(0, "f"))
    field = fluctuations.compute_fluctuation_field(ens, meanfield.flat_density(spec), k_max=16)
    assert np.max(np.abs(field.coefficients)) < 1e-10


def test_fields_live_on_the_torus():
    spec = potentials.desai_zwanzig(1.0)
    ens = ParticleEnsemble(np.zeros((3, 1)), spec, stream(0, "f"))
    with pytest.raises(UnsupportedModelError):
        fluctuations.compute_fluctuation_field(ens, None)


# ==================== THEORY ====================
def test_stationary_covariance_theory():
    free = fluctuations.stationary_covariance_theory(_free(2.0), k_max=3)
    assert all(v == pytest.approx(1.0 / (8.0 * math.pi**2 * 0.5)) for v in free.values())

    kuramoto = fluctuations.stationary_covariance_theory(potentials.kuramoto(1.0), k_max=2)
    assert kuramoto[1] == pytest.approx(1.0 / (4.0 * math.pi**2))
    assert kuramoto[2] == pytest.approx(1.0 / (8.0 * math.pi**2))


def test_normalized_mode_variance():
    weights = fluctuations.normalized_mode_variance(potentials.kuramoto(1.0), k_max=2)
    assert weights[1] == pytest.approx(2.0)
    assert weights[2] == pytest.approx(1.0)


def test_theory_needs_coercivity():
    with pytest.raises(CoercivityError):
        fluctuations.stationary_covariance_theory(potentials.kuramoto(2.0))
    with pytest.raises(CoercivityError):
        fluctuations.simulate_spde(potentials.kuramoto(2.5), k_max=2, t_end=0.01)


# ==================== SPDE ====================
def test_noiseless_spde_decays_exactly():
    spec = potentials.kuramoto(1.0)
    series = fluctuations.simulate_spde(spec, k_max=2, dt=0.01, t_end=0.5, noise=False, init=[1.0, 0.5j])
    spectrum = meanfield.linearized_spectrum_flat(spec, 2)
    assert series.times[-1] == pytest.approx(0.5)
    assert series.values[-1, 0] == pytest.approx(math.exp(0.5 * spectrum[1]), rel=1e-9)
    assert series.values[-1, 1] == pytest.approx(0.5j * math.exp(0.5 * spectrum[2]), rel=1e-9)


def test_spde_records_every_requested_step():
    series = fluctuations.simulate_spde(potentials.kuramoto(1.0), k_max=3, dt=0.01, t_end=1.0, record_every=30)
    assert series.times == pytest.approx([0.0, 0.3, 0.6, 0.9, 1.0])
    assert series.values.shape == (5, 3)
    assert len(series.header()) == 7


def test_spde_is_reproducible():
    spec = potentials.kuramoto(1.0)
    first = fluctuations.simulate_spde(spec, k_max=4, dt=1e-3, t_end=0.5, seed=9)
    second = fluctuations.simulate_spde(spec, k_max=4, dt=1e-3, t_end=0.5, seed=9)
    assert np.array_equal(first.values, second.values)


def test_spde_reaches_its_stationary_variance():
    spec = potentials.kuramoto(1.0)
    series = fluctuations.simulate_spde(spec, k_max=4, dt=1e-3, t_end=100.0, seed=3)
    stats = fluctuations.empirical_mode_covariance(series)
    expected = fluctuations.spde_stationary_variance(spec, 4)
    for k, s in stats.items():
        assert abs(s.variance - expected[k]) < 4.0 * s.stderr + 0.01 * expected[k]


def test_lagged_covariance_decays_at_the_mode_rate():
    spec = potentials.kuramoto(1.0)
    series = fluctuations.simulate_spde(spec, k_max=2, dt=1e-3, t_end=100.0, seed=4)
    rates = meanfield.linearized_spectrum_flat(spec, 2)
    variance = fluctuations.spde_stationary_variance(spec, 2)
    lagged = fluctuations.empirical_mode_covariance(series, lag=0.05)
    for k, s in lagged.items():
        expected = variance[k] * math.exp(rates[k] * 0.05)
        assert s.lag == pytest.approx(0.05)
        assert abs(s.variance - expected) < 4.0 * s.stderr + 0.02 * variance[k]
    assert lagged[1].variance < fluctuations.empirical_mode_covariance(series)[1].variance


def test_lag_must_be_nonnegative():
    series = fluctuations.simulate_spde(potentials.kuramoto(1.0), k_max=1, dt=1e-3, t_end=1.0)
    with pytest.raises(PreconditionError):
        fluctuations.empirical_mode_covariance(series, lag=-0.1)


def test_spde_variance_is_proportional_to_theory():
    spec = potentials.kuramoto(1.0)
    variance = fluctuations.spde_stationary_variance(spec, 8)
    theory = fluctuations.stationary_covariance_theory(spec, 8)
    ratios = [variance[k] / theory[k] for k in range(1, 9)]
    assert ratios == pytest.approx([4.0 * math.pi**2] * 8)


@pytest.mark.slow
def test_long_spde_run_matches_theory_ratios():
    spec = potentials.kuramoto(1.0)
    series = fluctuations.simulate_spde(spec, k_max=4, dt=1e-3, t_end=1000.0, seed=5)
    rows = fluctuations.covariance_comparison(fluctuations.empirical_mode_covariance(series),
                                              fluctuations.stationary_covariance_theory(spec, 4))
    ratios = np.array([row[4] for row in rows])
    assert ratios / ratios.mean() == pytest.approx(np.ones(4), rel=0.05)


# ==================== TIME SERIES ====================
def test_autocorrelation_time_of_white_noise():
    x = np.random.default_rng(0).standard_normal(20000)
    assert fluctuations.integrated_autocorrelation_time(x) == pytest.approx(1.0, abs=0.3)


def test_autocorrelation_time_of_ar1():
    rng = np.random.default_rng(1)
    phi = 0.9
    x = np.empty(100_000)
    x[0] = 0.0
    noise = rng.standard_normal(x.size)
    for i in range(1, x.size):
        x[i] = phi * x[i - 1] + noise[i]
    assert fluctuations.integrated_autocorrelation_time(x) == pytest.approx((1 + phi) / (1 - phi), rel=0.2)


def test_short_series_is_rejected():
    series = fluctuations.simulate_spde(potentials.kuramoto(1.0), k_max=1, dt=1e-3, t_end=0.01)
    with pytest.raises(InsufficientDataError):
        fluctuations.empirical_mode_covariance(series)


def test_free_particles_have_unit_mode_variance():
    spec = _free()
    series = fluctuations.stationary_particle_run(spec, 200, 1e-3, 40_000, k_max=4, seed=2, burn_in=0)
    stats = fluctuations.empirical_mode_covariance(series)
    weights = fluctuations.normalized_mode_variance(spec, 4)
    for row in fluctuations.covariance_comparison(stats, weights):
        k, variance, stderr, weight, ratio = row
        assert weight == pytest.approx(1.0)
        assert abs(variance - 1.0) < 5.0 * stderr + 0.02


@pytest.mark.slow
def test_kuramoto_fluctuations_follow_the_mode_weights():
    spec = potentials.kuramoto(1.0)
    series = fluctuations.stationary_particle_run(spec, 2000, 1e-3, 50_000, k_max=4, seed=1)
    stats = fluctuations.empirical_mode_covariance(series)
    rows = fluctuations.covariance_comparison(stats, fluctuations.normalized_mode_variance(spec, 4))
    for k, variance, stderr, weight, ratio in rows:
        assert ratio == pytest.approx(1.0, rel=0.1)


# ==================== LAW OF LARGE NUMBERS ====================
def test_iid_lln_expectation():
    single = metrics.hminus_s_norm({1: 1.0, -1: 1.0}, 2.0) ** 2
    assert fluctuations.iid_lln_expectation(1, 2.0, 1) == pytest.approx(single)
    assert fluctuations.iid_lln_expectation(10, 2.0, 8) == pytest.approx(fluctuations.iid_lln_expectation(1, 2.0, 8) / 10)


def test_lln_for_independent_particles():
    spec = _free()
    result = fluctuations.lln_decay_experiment(spec, [32, 128], s=2.0, replicas=200, seed=1, k_max=16, burn_in=0)
    for n, mean, stderr in result.rows:
        assert abs(mean - fluctuations.iid_lln_expectation(n, 2.0, 16)) < 4.0 * stderr
    assert result.slope == pytest.approx(-1.0, abs=0.3)


@pytest.mark.slow
def test_kuramoto_lln_rate():
    spec = potentials.kuramoto(1.0)
    result = fluctuations.lln_decay_experiment(spec, [32, 64, 128, 256, 512], s=2.0, replicas=50, seed=2, k_max=32)
    assert result.slope == pytest.approx(-1.0, abs=0.15)
