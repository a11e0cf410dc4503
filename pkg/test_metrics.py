import math

import numpy as np
import pytest

import meanfield
import metrics
import model as potentials
import particle
from errors import (
    DependencyError,
    InsufficientReplicasError,
    MeanZeroError,
    PreconditionError,
    UnsupportedModelError,
    WitnessIsMinimiserError,
)
from model import Confining, Domain, Interaction, PotentialSpec
from particle import EmpiricalMeasure


# ==================== WASSERSTEIN ====================
def test_wasserstein_between_point_masses():
    assert metrics.wasserstein2_1d(np.array([[0.0]]), np.array([[1.0]])) == pytest.approx(1.0)
    assert metrics.wasserstein2_1d(np.array([[0.3]]), np.array([[0.3]])) == pytest.approx(0.0)


def test_wasserstein_of_a_shift():
    x = np.random.default_rng(0).random((100, 1))
    assert metrics.wasserstein2_1d(x, x + 0.3) == pytest.approx(0.3)


def test_wasserstein_triangle_inequality():
    rng = np.random.default_rng(1)
    a, b, c = (rng.normal(size=(50, 1)) * s for s in (1.0, 2.0, 0.5))
    ab, bc, ac = metrics.wasserstein2_1d(a, b), metrics.wasserstein2_1d(b, c), metrics.wasserstein2_1d(a, c)
    assert ac <= ab + bc + 1e-12
    assert metrics.wasserstein2_1d(a, b) == pytest.approx(metrics.wasserstein2_1d(b, a))


def test_wasserstein_on_the_torus_uses_the_short_way_round():
    a = EmpiricalMeasure(np.array([[0.05]]), periodic=True)
    b = EmpiricalMeasure(np.array([[0.95]]), periodic=True)
    assert metrics.wasserstein2_1d(a, b) == pytest.approx(0.1)


def test_wasserstein_between_grid_densities():
    spec = potentials.kuramoto(1.0)
    flat = meanfield.flat_density(spec, 64)
    bump = meanfield.perturbed_flat(spec, 64, 0.5)
    assert metrics.wasserstein2_1d(flat, flat) == pytest.approx(0.0, abs=1e-12)
    assert metrics.wasserstein2_1d(flat, bump) > 0.0
    assert metrics.wasserstein2_1d(flat, bump) == pytest.approx(metrics.wasserstein2_1d(bump, flat), abs=1e-12)


def test_wasserstein_is_one_dimensional():
    with pytest.raises(UnsupportedModelError):
        metrics.wasserstein2_1d(np.zeros((4, 2)), np.ones((4, 2)))


def test_scaled_wasserstein():
    rng = np.random.default_rng(2)
    replicas = [rng.normal(size=(10, 1)) for _ in range(4)]
    same = metrics.scaled_wasserstein(replicas, replicas)
    assert same.value == 0.0
    shifted = metrics.scaled_wasserstein(replicas, [r + 0.2 for r in replicas])
    assert shifted.value == pytest.approx(0.2)
    assert not shifted.proxy
    assert metrics.scaled_wasserstein(replicas, replicas, coupled=False).proxy
    with pytest.raises(InsufficientReplicasError):
        metrics.scaled_wasserstein(replicas[:1], replicas[:1])


# ==================== RELATIVE ENTROPY ====================
def test_relative_entropy_vanishes_at_the_unique_minimiser():
    spec = potentials.kuramoto(1.0)
    result = metrics.relative_entropy_chaotic(meanfield.flat_density(spec), spec, 10)
    assert abs(result.value) < 1e-10
    assert result.surrogate


def test_relative_entropy_of_unstable_flat_state():
    spec = potentials.kuramoto(3.0)
    clustered = meanfield.find_steady_state(spec, meanfield.concentrated_density(spec))
    result = metrics.relative_entropy_chaotic(meanfield.flat_density(spec), spec, 10)
    assert result.value > 0.0
    assert result.value == pytest.approx(-clustered.energy, abs=1e-8)


# ==================== FISHER INFORMATION ====================
def test_fisher_information_without_interaction():
    spec = PotentialSpec(Domain.torus(), beta=2.0)
    assert metrics.fisher_info_chaotic_exact(meanfield.flat_density(spec), spec, 5) == 0.0
    assert metrics.fisher_info_chaotic_mc(meanfield.flat_density(spec), spec, 5, 100).mean == 0.0


def test_fisher_information_of_flat_kuramoto_pair():
    spec = potentials.kuramoto(1.0)
    assert metrics.fisher_info_chaotic_exact(meanfield.flat_density(spec), spec, 2) == pytest.approx(math.pi**2, rel=1e-10)


def test_fisher_information_large_n_limit():
    spec = potentials.kuramoto(1.0)
    flat = meanfield.flat_density(spec)
    limit = metrics.fisher_info_chaotic_exact(flat, spec, 10**12)
    assert limit == pytest.approx(2.0 * math.pi**2, rel=1e-9)


def test_fisher_information_needs_a_critical_point():
    spec = potentials.kuramoto(1.0)
    with pytest.raises(PreconditionError):
        metrics.fisher_info_chaotic_exact(meanfield.perturbed_flat(spec, 256, 0.2), spec, 4)


def test_monte_carlo_fisher_matches_exact_on_the_torus():
    spec = potentials.kuramoto(1.0)
    flat = meanfield.flat_density(spec)
    exact = metrics.fisher_info_chaotic_exact(flat, spec, 2) / 2
    estimate = metrics.fisher_info_chaotic_mc(flat, spec, 2, 200_000, seed=1)
    assert abs(estimate.mean - exact) < 4.0 * estimate.stderr


def test_monte_carlo_fisher_matches_exact_on_the_line():
    spec = potentials.desai_zwanzig(0.5)
    state = meanfield.find_steady_state(spec, meanfield.gibbs_density(spec))
    assert state.converged
    exact = metrics.fisher_info_chaotic_exact(state.density, spec, 8) / 8
    estimate = metrics.fisher_info_chaotic_mc(state.density, spec, 8, 100_000, seed=2)
    assert abs(estimate.mean - exact) < 4.0 * estimate.stderr


# ==================== LOG-SOBOLEV ====================
def test_witness_ratio_decays_like_one_over_n():
    spec = potentials.kuramoto(3.0)
    scan = metrics.lsi_scan(spec, [4, 8, 16, 32, 64], meanfield.flat_density(spec))
    assert scan.slope == pytest.approx(-1.0, abs=0.15)
    assert all(r.witness_ratio > 0 for r in scan.reports)
    assert scan.reports[0].regime == "degenerate-witness"


def test_minimiser_is_not_a_witness():
    spec = potentials.kuramoto(1.0)
    with pytest.raises(WitnessIsMinimiserError):
        metrics.lsi_witness_ratio(spec, 8, meanfield.flat_density(spec))


def test_two_scale_bound_without_interaction_is_the_single_site_constant():
    spec = PotentialSpec(Domain.torus(), beta=2.0)
    for n in (2, 10, 1000):
        assert metrics.two_scale_lsi_lower_bound(spec, n, 4.0 * math.pi**2) == pytest.approx(4.0 * math.pi**2)


def test_two_scale_bound_at_high_temperature():
    lam = 4.0 * math.pi**2
    assert metrics.two_scale_lsi_lower_bound(potentials.kuramoto(1e-9), 10, lam) == pytest.approx(lam, rel=1e-6)

    spec = potentials.kuramoto(0.05)
    bounds = {metrics.two_scale_lsi_lower_bound(spec, n, lam, uniform_in_n=True) for n in (4, 64, 1024)}
    assert len(bounds) == 1
    assert bounds.pop() > 0.0

    assert metrics.two_scale_lsi_lower_bound(potentials.kuramoto(3.0), 10, lam) < 0.0


def test_two_scale_bound_on_the_line_needs_weak_interaction():
    spec = potentials.desai_zwanzig(1.0)
    with pytest.raises(UnsupportedModelError):
        metrics.two_scale_lsi_lower_bound(spec, 10, 1.0)


def test_linearized_gap():
    assert metrics.linearized_gap(potentials.kuramoto(1.0)) == pytest.approx(2.0 * math.pi**2)
    assert metrics.linearized_gap(potentials.kuramoto(3.0)) == 0.0


# ==================== TALAGRAND ====================
def test_talagrand_margin_vanishes_at_the_minimiser():
    spec = potentials.kuramoto(1.0)
    flat = meanfield.flat_density(spec, 128)
    assert metrics.talagrand_check(spec, [flat], 1.0, [flat]) == [pytest.approx(0.0, abs=1e-12)]


def test_talagrand_holds_below_the_transition():
    spec = potentials.kuramoto(1.0)
    flat = meanfield.flat_density(spec, 128)
    samples = metrics.random_perturbations(spec, 20, 128, seed=3)
    lam = 0.5 * metrics.linearized_gap(spec)
    margins = metrics.talagrand_check(spec, samples, lam, [flat])
    assert min(margins) >= -1e-8
    assert metrics.talagrand_check(spec, samples, 0.0, [flat]) == pytest.approx(
        [meanfield.free_energy(s, spec) for s in samples], abs=1e-12
    )


def test_talagrand_needs_a_minimiser():
    spec = potentials.kuramoto(1.0)
    with pytest.raises(DependencyError):
        metrics.talagrand_check(spec, [meanfield.flat_density(spec, 64)], 1.0, [])


# ==================== PROPAGATION OF CHAOS ====================
def test_gronwall_bound():
    assert metrics.gronwall_bound(1.0, 0.0, 2.0, 100) == 0.0
    assert metrics.gronwall_bound(0.0, 2.0, 3.0, 4) == pytest.approx(1.5)
    assert metrics.gronwall_bound(1e-8, 2.0, 3.0, 4) == pytest.approx(1.5, rel=1e-7)
    assert metrics.gronwall_bound(2.0, 1.0, 1.0, 1) == pytest.approx((1.0 - math.exp(-1.0)) / 2.0)


def _convex_coupling(n_values, replicas, seed=6):
    """Final coupled distances for V = x^2/2, W = |x - y|^2/2 on the line"""
    spec = PotentialSpec(Domain.line(), Confining("quadratic", 1.0), Interaction("quadratic", 1.0), 1.0)
    dt, t_end = 0.002, 1.0
    flow = meanfield.solve_mckean_vlasov(meanfield.gaussian_density(spec), spec, dt, t_end)
    s = metrics.uniform_integrability_bound(flow, spec)
    finals = []
    for n in n_values:
        series = particle.synchronous_coupling_run(spec, n, dt, t_end, flow, seed=seed, replicas=replicas,
                                                   record_every=50)
        rows = metrics.coupling_against_bound(series, spec, s)
        assert not any(exceeded for *_, exceeded in rows), f"N={n} exceeds the Gronwall bound"
        finals.append(series.mean[-1])
    return finals


def test_coupled_distance_shrinks_like_inverse_root_n():
    n_values = [16, 64, 256]
    finals = _convex_coupling(n_values, replicas=20)
    assert finals[0] > finals[1] > finals[2]
    assert metrics.fit_loglog_slope(n_values, finals) == pytest.approx(-0.5, abs=0.15)


@pytest.mark.slow
def test_coupled_distance_rate_over_the_full_range():
    n_values = [16, 32, 64, 128, 256, 512, 1024]
    finals = _convex_coupling(n_values, replicas=20)
    assert metrics.fit_loglog_slope(n_values, finals) == pytest.approx(-0.5, abs=0.1)


def test_coupling_rows_flag_distances_above_the_bound():
    series = particle.CouplingSeries(np.array([0.0, 1.0]), np.array([[0.0, 5.0], [0.0, 5.0]]), 4)
    spec = PotentialSpec(Domain.line(), Confining("quadratic", 1.0), Interaction("quadratic", 1.0), 1.0)
    rows = metrics.coupling_against_bound(series, spec, 1.0)
    assert [row[4] for row in rows] == [False, True]
    assert rows[1][3] == pytest.approx(metrics.gronwall_bound(spec.k_v + spec.k_w * 0.75, 1.0, 1.0, 4))


def test_uniform_integrability_bound_of_flat_kuramoto():
    spec = potentials.kuramoto(1.0)
    flow = meanfield.solve_mckean_vlasov(meanfield.flat_density(spec, 64), spec, 1e-3, 0.01)
    assert metrics.uniform_integrability_bound(flow, spec) == pytest.approx(math.sqrt(2.0) * math.pi, rel=1e-10)


# ==================== NEGATIVE SOBOLEV NORM ====================
def test_hminus_s_norm():
    assert metrics.hminus_s_norm({}, 1.0) == 0.0
    single = metrics.hminus_s_norm({1: 1.0}, 2.0)
    assert single == pytest.approx((1.0 + 4.0 * math.pi**2) ** -1.0)
    assert metrics.hminus_s_norm({1: 1.0, -1: 1.0}, 3.0) < metrics.hminus_s_norm({1: 1.0, -1: 1.0}, 1.0)
    with pytest.raises(MeanZeroError):
        metrics.hminus_s_norm({0: 0.5, 1: 1.0}, 1.0)


# ==================== ENTROPY DECAY ====================
def test_entropy_decays_within_twice_the_predicted_time():
    spec = potentials.kuramoto(1.0)
    result = metrics.entropy_decay_check(spec, n=256, replicas=8, dt=1e-3, t_end=0.2, seed=4)
    assert result.values[0] > result.epsilon
    assert result.consistent
    assert not result.warnings


def test_entropy_decay_needs_a_spectral_gap():
    with pytest.raises(PreconditionError):
        metrics.entropy_decay_check(potentials.kuramoto(3.0), t_end=0.01)
