import math

import numpy as np
import pytest
from scipy import special

import meanfield
import model as potentials
from errors import ConfigError, PositivityError, PreconditionError, StepSizeError
from model import Confining, Domain, Interaction, PotentialSpec
from rng_utils import stream


def _ou(beta=1.0):
    return PotentialSpec(Domain.line(), Confining("quadratic", 1.0), Interaction(), beta)


# ==================== GRID DENSITIES ====================
def test_grid_size_must_be_a_power_of_two():
    with pytest.raises(ConfigError):
        meanfield.flat_density(potentials.kuramoto(1.0), 100)


def test_densities_are_normalised():
    spec = potentials.kuramoto(1.0)
    for rho in (meanfield.flat_density(spec, 64), meanfield.perturbed_flat(spec, 64, 0.5), meanfield.concentrated_density(spec, 64)):
        assert rho.validate().mass() == pytest.approx(1.0, abs=1e-12)


def test_inverse_cdf_sampling():
    spec = _ou()
    rho = meanfield.gaussian_density(spec, 256, mean=0.5, variance=0.25)
    x = rho.sample(100_000, stream(0, "sample"))
    assert x.mean() == pytest.approx(0.5, abs=0.01)
    assert x.var() == pytest.approx(0.25, rel=0.03)


def test_density_rows_round_trip():
    rho = meanfield.perturbed_flat(potentials.kuramoto(1.0), 32, 0.2)
    back = meanfield.GridDensity.from_rows(rho.to_rows(), periodic=True)
    assert np.array_equal(back.values, rho.values)
    assert back.dx == pytest.approx(rho.dx)


# ==================== FREE ENERGY ====================
def test_free_energy_of_flat_state():
    spec = potentials.kuramoto(1.0)
    assert meanfield.free_energy(meanfield.flat_density(spec, 128), spec) == pytest.approx(0.0, abs=1e-12)


def test_interaction_energy_of_first_harmonic():
    # rho = 1 + a cos(2 pi x): 1/2 int int W rho rho = -a^2 / 8
    spec = potentials.kuramoto(1.0)
    rho = meanfield.perturbed_flat(spec, 128, 0.4)
    assert meanfield.interaction_energy(rho, spec) == pytest.approx(-0.4**2 / 8.0, rel=1e-10)


def test_dissipation_needs_positive_torus_density():
    spec = potentials.kuramoto(1.0)
    rho = meanfield.flat_density(spec, 64)
    values = rho.values.copy()
    values[3] = 0.0
    with pytest.raises(PositivityError):
        meanfield.dissipation(rho.with_values(values).normalized(), spec)


# ==================== STEADY STATES ====================
def test_flat_state_is_a_fixed_point():
    spec = potentials.kuramoto(1.0)
    state = meanfield.find_steady_state(spec, meanfield.flat_density(spec))
    assert state.converged
    assert state.iterations == 1


def test_clustered_kuramoto_state():
    spec = potentials.kuramoto(3.0)
    state = meanfield.find_steady_state(spec, meanfield.perturbed_flat(spec, 256, 0.1))
    assert state.converged
    assert np.max(np.abs(meanfield.self_consistency_map(state.density, spec))) < 1e-9
    assert meanfield.dissipation(state.density, spec) < 1e-8
    assert meanfield.order_parameter(state.density) == pytest.approx(meanfield.kuramoto_order_parameter(3.0), abs=1e-6)
    assert state.energy < meanfield.free_energy(meanfield.flat_density(spec), spec)


def test_kuramoto_order_parameter():
    assert meanfield.kuramoto_order_parameter(1.5) == 0.0
    r = meanfield.kuramoto_order_parameter(4.0)
    assert r > 0.5
    assert special.i1(4.0 * r) / special.i0(4.0 * r) == pytest.approx(r, abs=1e-12)


def test_damping_must_be_in_range():
    spec = potentials.kuramoto(1.0)
    with pytest.raises(PreconditionError):
        meanfield.find_steady_state(spec, meanfield.flat_density(spec), damping=1.5)


def test_reference_free_energy_finds_the_clustered_minimiser():
    spec = potentials.kuramoto(3.0)
    energy, minimiser = meanfield.reference_free_energy(spec, 128)
    assert energy < 0.0
    assert meanfield.order_parameter(minimiser) > 0.5


def test_properties_follow_beta_sharp():
    below = meanfield.check_properties(potentials.kuramoto(1.0), m=128)
    assert below.a and below.b
    assert below.c_witness is None

    above = meanfield.check_properties(potentials.kuramoto(3.0), m=128)
    assert not above.a and not above.b
    assert above.c_witness is not None
    assert meanfield.order_parameter(above.c_witness) < 1e-6


# ==================== PDE ====================
def test_torus_flow_conserves_mass_and_dissipates_energy():
    spec = potentials.kuramoto(3.0)
    flow = meanfield.solve_mckean_vlasov(meanfield.perturbed_flat(spec, 256, 0.3), spec, 1e-3, 0.1, record_every=1)
    assert all(rho.mass() == pytest.approx(1.0, abs=1e-12) for rho in flow.densities)
    assert np.all(np.diff(flow.energies) <= 1e-8)
    assert flow.energies[-1] < flow.energies[0]


def test_energy_decays_at_the_dissipation_rate():
    spec = _ou()
    rho = meanfield.gaussian_density(spec, 512, variance=2.0, half_width=12.0)
    dt = 1e-4
    dissipation = meanfield.dissipation(rho, spec)
    assert dissipation == pytest.approx(0.5, rel=1e-3)
    after = meanfield.mckean_vlasov_step(rho, spec, dt)
    rate = (meanfield.free_energy(rho, spec) - meanfield.free_energy(after, spec)) / dt
    assert rate == pytest.approx(dissipation, rel=0.05)


def test_line_flow_relaxes_to_the_gibbs_density():
    spec = _ou()
    rho0 = meanfield.gaussian_density(spec, 256, mean=1.0, variance=0.5)
    flow = meanfield.solve_mckean_vlasov(rho0, spec, 0.005, 20.0, record_every=4000)
    final = flow.densities[-1]
    exact = np.exp(-final.nodes**2 / 2.0) / math.sqrt(2.0 * math.pi)
    assert np.sum(np.abs(final.values - exact)) * final.dx < 1e-6


def test_cfl_violation_is_reported():
    spec = potentials.kuramoto(3.0)
    with pytest.raises(StepSizeError):
        meanfield.mckean_vlasov_step(meanfield.perturbed_flat(spec, 256, 0.3), spec, 1.0)


def test_t_end_must_be_a_multiple_of_dt():
    spec = potentials.kuramoto(1.0)
    with pytest.raises(ConfigError):
        meanfield.solve_mckean_vlasov(meanfield.flat_density(spec, 64), spec, 0.3, 1.0)


# ==================== SPECTRUM ====================
def test_linearized_spectrum_changes_sign_at_beta_sharp():
    assert meanfield.linearized_spectrum_flat(potentials.kuramoto(2.0), 1)[1] == pytest.approx(0.0, abs=1e-10)
    assert meanfield.linearized_spectrum_flat(potentials.kuramoto(1.9), 1)[1] < 0.0
    assert meanfield.linearized_spectrum_flat(potentials.kuramoto(2.1), 1)[1] > 0.0
    assert meanfield.linearized_spectrum_flat(potentials.kuramoto(1.0), 1)[1] == pytest.approx(-2.0 * math.pi**2)


@pytest.mark.parametrize("beta", [1.0, 3.0])
def test_grid_eigenvalue_matches_the_analytic_one(beta):
    spec = potentials.kuramoto(beta)
    analytic = meanfield.linearized_spectrum_flat(spec, 1)[1]
    assert meanfield.grid_leading_eigenvalue(spec, 128) == pytest.approx(analytic, rel=0.01)


# ==================== PHASE SCAN ====================
def test_kuramoto_phase_scan():
    scan = meanfield.scan_phase_transition(potentials.kuramoto(1.0), [1.5, 2.5, 3.0], m=128)
    r = {row.beta: row.r for row in scan.rows}
    assert r[1.5] < 1e-6
    assert r[2.5] > 0.1
    assert r[3.0] == pytest.approx(meanfield.kuramoto_order_parameter(3.0), abs=1e-5)
    assert scan.beta_c == 2.5
    assert all(row.converged for row in scan.rows)
    assert [row.lambda1 > 0 for row in scan.rows] == [False, True, True]


@pytest.mark.slow
def test_kuramoto_scan_over_the_full_grid():
    betas = [round(1.0 + 0.1 * i, 12) for i in range(21)]
    scan = meanfield.scan_phase_transition(potentials.kuramoto(1.0), betas)
    r = {row.beta: row.r for row in scan.rows}
    assert all(r[b] < 1e-6 for b in betas if b <= 1.9)
    assert all(r[b] > 0.1 for b in betas if b >= 2.5)
    assert 2.0 <= scan.beta_c <= 2.5


def test_bichromatic_orders_below_beta_sharp():
    spec = potentials.bichromatic(1.8)
    assert potentials.beta_sharp(spec) == pytest.approx(2.0)
    row = meanfield.scan_phase_transition(spec, [1.8]).rows[0]
    assert row.converged
    assert row.r > 0.1
    assert row.energy_gap > 0.0
    assert row.lambda1 < 0.0


def test_repulsive_interaction_never_orders():
    spec = PotentialSpec(Domain.torus(), Confining(), Interaction.cosine_sum(-1.0), 1.0)
    scan = meanfield.scan_phase_transition(spec, [1.0, 3.0, 4.0], m=64)
    assert all(row.r < 1e-8 for row in scan.rows)
    assert scan.beta_c is None


def test_desai_zwanzig_magnetises_at_low_temperature():
    scan = meanfield.scan_phase_transition(potentials.desai_zwanzig(1.0), [0.2, 5.0], m=256)
    high, low = scan.rows
    assert high.r < 1e-6
    assert low.r > 0.5
    assert math.isnan(high.lambda1)
    assert scan.beta_c == 5.0


def test_scan_rows_do_not_depend_on_worker_count():
    spec = potentials.kuramoto(1.0)
    serial = meanfield.scan_phase_transition(spec, [1.0, 2.5], m=64)
    threaded = meanfield.scan_phase_transition(spec, [1.0, 2.5], m=64, workers=2)
    assert serial.to_rows() == threaded.to_rows()
