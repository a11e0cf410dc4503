"""
Distances and information functionals.

Wasserstein distances (1-D), relative entropy and Fisher information of
chaotic states against the Gibbs measure, log-Sobolev witness ratios and
lower bounds, Talagrand margins and the Gronwall bound for propagation of
chaos.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import ot
from numpy.typing import NDArray
from scipy.interpolate import CubicSpline

import meanfield
import model as potentials
from errors import (
    DependencyError,
    InsufficientReplicasError,
    MeanZeroError,
    PreconditionError,
    UnsupportedModelError,
    WitnessIsMinimiserError,
)
from particle import EmpiricalMeasure, ParticleEnsemble, initial_ensemble, mean_interaction_gradient, step_euler_maruyama
from rng_utils import stream

logger = logging.getLogger(__name__)

CRITICAL_RESIDUAL = 1e-6
WITNESS_FLOOR = 1e-10
QUANTILE_OVERSAMPLING = 4
MC_BLOCK = 2_000_000


# ==================== WASSERSTEIN ====================
def _as_measure(obj):
    if isinstance(obj, (EmpiricalMeasure, meanfield.GridDensity)):
        return obj
    if isinstance(obj, ParticleEnsemble):
        return EmpiricalMeasure(obj.positions, obj.model.domain.periodic)
    points = np.asarray(obj, dtype=float)
    return EmpiricalMeasure(points.reshape(points.shape[0], -1))


def _check_1d(measure):
    if isinstance(measure, EmpiricalMeasure) and measure.points.shape[1] != 1:
        raise UnsupportedModelError("Wasserstein distances are implemented in one dimension only")


def _quantiles(measure, u):
    if isinstance(measure, meanfield.GridDensity):
        return measure.quantile(u)
    atoms = np.sort(measure.points[:, 0])
    return atoms[np.minimum((u * atoms.size).astype(int), atoms.size - 1)]


def _cyclic_cost(a, b):
    """min over cyclic shifts s of mean |a_i - b_{i+s}|^2 (minimum image), a and b sorted in [0, 1)"""
    n = a.size
    index = (np.arange(n)[None, :] + np.arange(n)[:, None]) % n
    gap = a[None, :] - b[index]
    gap = gap - np.round(gap)
    return float(np.min(np.mean(gap * gap, axis=1)))


def wasserstein2_1d(mu, nu, periodic=None):
    """
    Quadratic Wasserstein distance between 1-D measures.

    Empirical measures on the line are compared by exact 1-D optimal
    transport (POT); grid densities by integrating the squared difference of
    quantile functions. On the torus the quantile alignment is minimised over
    cyclic shifts.

    Raises:
        UnsupportedModelError: dimension > 1
    """
    mu, nu = _as_measure(mu), _as_measure(nu)
    _check_1d(mu)
    _check_1d(nu)
    if periodic is None:
        periodic = bool(getattr(mu, "periodic", False) or getattr(nu, "periodic", False))
    empirical = isinstance(mu, EmpiricalMeasure) and isinstance(nu, EmpiricalMeasure)
    if empirical and not periodic:
        cost = ot.lp.emd2_1d(mu.points[:, 0], nu.points[:, 0], mu.weights, nu.weights, metric="sqeuclidean")
        return math.sqrt(max(float(cost), 0.0))
    sizes = [m.size for m in (mu, nu)]
    if empirical and sizes[0] == sizes[1]:
        return math.sqrt(_cyclic_cost(np.sort(np.mod(mu.points[:, 0], 1.0)), np.sort(np.mod(nu.points[:, 0], 1.0))))
    q = QUANTILE_OVERSAMPLING * max(sizes)
    u = (np.arange(q) + 0.5) / q
    a, b = _quantiles(mu, u), _quantiles(nu, u)
    if periodic:
        return math.sqrt(_cyclic_cost(np.sort(np.mod(a, 1.0)), np.sort(np.mod(b, 1.0))))
    return math.sqrt(float(np.mean((a - b) ** 2)))


@dataclass
class ScaledDistance:
    value: float
    stderr: float
    proxy: bool = False


def _replica_positions(replicas):
    arrays = [r.positions if isinstance(r, ParticleEnsemble) else np.asarray(r, dtype=float) for r in replicas]
    return [a.reshape(a.shape[0], -1) for a in arrays]


def scaled_wasserstein(a, b, coupled=True, periodic=False):
    """
    Estimate the scaled distance d2 / sqrt(N) between two symmetric N-particle laws from
    replicas matched by index.

    coupled=True treats replica r of ``a`` and ``b`` as a coupling (e.g. the
    output of a synchronous run), which upper-bounds the distance. Otherwise
    each replica pair is compared through the 1-D distance of its pooled
    empirical measures, a biased proxy flagged with ``proxy=True``.
    """
    xs, ys = _replica_positions(a), _replica_positions(b)
    if min(len(xs), len(ys)) < 2:
        raise InsufficientReplicasError(f"Need at least 2 replicas, got {min(len(xs), len(ys))}")
    if len(xs) != len(ys) or any(x.shape != y.shape for x, y in zip(xs, ys)):
        raise PreconditionError("Replica sets must match in count and particle number")
    if isinstance(a[0], ParticleEnsemble):
        periodic = a[0].model.domain.periodic
    values = []
    for x, y in zip(xs, ys):
        if coupled:
            gap = x - y
            if periodic:
                gap = gap - np.round(gap)
            values.append(math.sqrt(float(np.mean(np.sum(gap * gap, axis=1)))))
        else:
            values.append(wasserstein2_1d(EmpiricalMeasure(x, periodic), EmpiricalMeasure(y, periodic)))
    values = np.asarray(values)
    return ScaledDistance(float(values.mean()), float(values.std(ddof=1) / math.sqrt(values.size)), proxy=not coupled)


# ==================== RELATIVE ENTROPY ====================
@dataclass
class RelativeEntropy:
    """Scaled relative entropy of rho^{(x)N} against M_N; the reference uses the mean-field limit"""
    value: float
    reference_energy: float
    surrogate: bool = True


def relative_entropy_chaotic(rho, spec, n, reference=None):
    """
    Energy per particle of rho^{(x)N} minus the lowest mean-field free energy.

    Args:
        reference: lowest free energy, when already known

    Raises:
        DependencyError: no converged steady state to serve as the reference
    """
    if reference is None:
        reference, _ = meanfield.reference_free_energy(spec, rho.size)
        if reference is None:
            raise DependencyError("No converged steady state available for the reference free energy")
    value = meanfield.energy_per_particle_product(rho, spec, n) - reference
    return RelativeEntropy(float(value), float(reference))


# ==================== FISHER INFORMATION ====================
def _require_critical(rho, spec):
    residual = float(np.max(np.abs(meanfield.self_consistency_map(rho, spec))))
    if residual >= CRITICAL_RESIDUAL:
        raise PreconditionError(f"Density is not a critical point: self-consistency residual {residual:.3e} >= {CRITICAL_RESIDUAL}")


def fisher_info_chaotic_exact(rho, spec, n):
    """
    Fisher information of rho^{(x)N} against M_N at a critical point rho:

        beta^2 [(1 - 1/N) int (|W'|^2 * rho - |W' * rho|^2) rho + (1/N) int |W' * rho|^2 rho]

    Divide by N for the scaled quantity.
    """
    _require_critical(rho, spec)
    if spec.interaction.family == "zero":
        return 0.0
    w = spec.interaction
    second_moment = meanfield.convolve_kernel(rho, lambda r: w.derivative(r) ** 2)
    mean_force = meanfield.convolve_gradient(rho, spec)
    variance_term = float(np.sum((second_moment - mean_force**2) * rho.values) * rho.dx)
    mean_term = float(np.sum(mean_force**2 * rho.values) * rho.dx)
    return spec.beta**2 * ((1.0 - 1.0 / n) * variance_term + mean_term / n)


@dataclass
class FisherEstimate:
    mean: float
    stderr: float
    n_samples: int


def _force_interpolant(rho, spec):
    force = meanfield.convolve_gradient(rho, spec)
    if rho.periodic:
        nodes = np.append(rho.nodes, 1.0)
        return CubicSpline(nodes, np.append(force, force[0]), bc_type="periodic")
    return CubicSpline(rho.nodes, force)


def fisher_info_chaotic_mc(rho, spec, n, n_samples, seed=0):
    """
    Monte Carlo estimate of the scaled Fisher information: sample mean of

        (beta^2 / N) sum_i |-(W' * rho)(X_i) + (1/N) sum_j W'(X_i - X_j)|^2,   X_i iid ~ rho.
    """
    _require_critical(rho, spec)
    if spec.interaction.family == "zero":
        return FisherEstimate(0.0, 0.0, n_samples)
    rng = stream(seed, "fisher", n)
    force = _force_interpolant(rho, spec)
    chunk = max(1, MC_BLOCK // n)
    values = []
    for start in range(0, n_samples, chunk):
        size = min(chunk, n_samples - start)
        x = rho.sample(size * n, rng).reshape(size, n, 1)
        residual = mean_interaction_gradient(spec, x) - force(x)
        values.append(spec.beta**2 / n * np.sum(residual**2, axis=(1, 2)))
    values = np.concatenate(values)
    return FisherEstimate(float(values.mean()), float(values.std(ddof=1) / math.sqrt(values.size)), n_samples)


# ==================== LOG-SOBOLEV ====================
@dataclass
class LsiReport:
    n: int
    witness_ratio: float
    lower_bound: float
    regime: str

    def as_tuple(self):
        return (self.n, self.witness_ratio, self.lower_bound, self.regime)


def lsi_witness_ratio(spec, n, witness, reference=None, lambda_single=None):
    """
    Fisher over entropy along a critical witness: an upper bound for the
    N-particle log-Sobolev constant.

    Raises:
        WitnessIsMinimiserError: the witness has (numerically) zero entropy
    """
    entropy = relative_entropy_chaotic(witness, spec, n, reference).value
    if entropy < WITNESS_FLOOR:
        raise WitnessIsMinimiserError(f"Relative entropy {entropy:.3e} of the witness is below {WITNESS_FLOOR}; it is a minimiser")
    ratio = fisher_info_chaotic_exact(witness, spec, n) / n / entropy
    lower = math.nan
    if lambda_single is not None:
        lower = two_scale_lsi_lower_bound(spec, n, lambda_single, weak_interaction=not spec.domain.compact)
    if lower > 0:
        regime = "high-temperature"
    elif spec.k_v + spec.k_w > 0:
        regime = "convex-far-field"
    else:
        regime = "degenerate-witness"
    return LsiReport(n, ratio, lower, regime)


@dataclass
class LsiScan:
    reports: list
    slope: float

    header = ("N", "witness_ratio", "lower_bound", "regime")

    def to_rows(self):
        return [r.as_tuple() for r in self.reports]


def fit_loglog_slope(x, y):
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])


def lsi_scan(spec, n_values, witness, lambda_single=None):
    """Witness ratios over N and their fitted log-log slope"""
    reference, _ = meanfield.reference_free_energy(spec, witness.size)
    if reference is None:
        raise DependencyError("No converged steady state available for the reference free energy")
    reports = [lsi_witness_ratio(spec, n, witness, reference, lambda_single) for n in n_values]
    slope = fit_loglog_slope([r.n for r in reports], [r.witness_ratio for r in reports])
    logger.info(f"LSI witness ratio slope over N={list(n_values)}: {slope:.3f}")
    return LsiScan(reports, slope)


def two_scale_lsi_lower_bound(spec, n, lambda_single, weak_interaction=False, epsilon=1.0, uniform_in_n=False):
    """
    Two-scale lower bound

        exp(-2 beta (||W|| + ||V||)) lambda_single - beta ((N - 1)/N) ||D^2_xy W||

    With weak_interaction both W terms carry the factor epsilon. With
    uniform_in_n the factor (N - 1)/N is replaced by its supremum 1.
    Nonpositive values carry no guarantee and are logged as such.
    """
    if not spec.domain.compact and not weak_interaction:
        raise UnsupportedModelError("Unbounded domain: the two-scale bound needs weak_interaction=True")
    if math.isinf(spec.beta):
        raise PreconditionError("The two-scale bound needs a finite beta")
    norms = potentials.sup_norms(spec)
    eps = epsilon if weak_interaction else 1.0
    factor = 1.0 if uniform_in_n else (n - 1) / n
    holley_stroock = math.exp(-2.0 * spec.beta * (eps * norms["W"] + norms["V"]))
    bound = holley_stroock * lambda_single - spec.beta * factor * eps * norms["D2W"]
    if bound <= 0:
        logger.warning(f"Two-scale LSI bound {bound:.4g} at beta={spec.beta}, N={n}: no guarantee")
    return bound


def linearized_gap(spec, k_max=potentials.DEFAULT_K_MAX):
    """min_k 4 pi^2 k^2 (beta^{-1} + W_hat(k)), clipped at 0"""
    spectrum = meanfield.linearized_spectrum_flat(spec, k_max)
    return max(0.0, -max(spectrum.values()))


# ==================== TALAGRAND ====================
def talagrand_check(spec, samples, lam, minimisers):
    """
    Margins E(rho) - min E - (lam / 2) min_{mu in minimisers} d2(rho, mu)^2.

    Raises:
        DependencyError: empty minimiser set
    """
    if not minimisers:
        raise DependencyError("Talagrand check needs at least one minimiser")
    lowest = min(meanfield.free_energy(mu, spec) for mu in minimisers)
    margins = []
    for rho in samples:
        distance = min(wasserstein2_1d(rho, mu) for mu in minimisers)
        margins.append(meanfield.free_energy(rho, spec) - lowest - 0.5 * lam * distance**2)
    return margins


def random_perturbations(spec, count, m=meanfield.DEFAULT_GRID, seed=0, max_amplitude=0.5, modes=3):
    """Densities 1 + sum_k a_k cos(2 pi k x + phi_k), sum |a_k| <= max_amplitude"""
    rng = stream(seed, "perturbations")
    base = meanfield.flat_density(spec, m)
    out = []
    for _ in range(count):
        amplitudes = rng.dirichlet(np.ones(modes)) * rng.uniform(0.0, max_amplitude)
        phases = rng.uniform(0.0, 2.0 * np.pi, size=modes)
        profile = 1.0 + sum(a * np.cos(2.0 * np.pi * (k + 1) * base.nodes + p) for k, (a, p) in enumerate(zip(amplitudes, phases)))
        out.append(base.with_values(profile).normalized())
    return out


# ==================== PROPAGATION OF CHAOS ====================
def gronwall_bound(k, t, s, n):
    """(1 - e^{-K t/2}) / K * S / sqrt(N), continuous at K = 0 where it is (t/2) S / sqrt(N)"""
    if abs(k) < 1e-12:
        factor = 0.5 * t
    else:
        factor = -math.expm1(-0.5 * k * t) / k
    return factor * s / math.sqrt(n)


def coupling_against_bound(series, spec, s, sigmas=3.0):
    """
    Rows (time, mean distance, stderr, Gronwall bound, exceeded) for a
    coupling series; ``exceeded`` marks means above bound + sigmas * stderr.
    """
    n = series.n_particles
    k = spec.k_v + spec.k_w * (1.0 - 1.0 / n)
    rows = []
    for t, mean, err in series.to_rows():
        bound = gronwall_bound(k, t, s, n)
        rows.append((t, mean, err, bound, bool(mean > bound + sigmas * err)))
    return rows


def uniform_integrability_bound(flow, spec):
    """S = max_t (int |W'|^2 * rho(t) rho(t))^{1/2} over the solved flow"""
    w = spec.interaction
    best = 0.0
    for rho in flow.densities:
        second_moment = meanfield.convolve_kernel(rho, lambda r: w.derivative(r) ** 2)
        best = max(best, float(np.sum(second_moment * rho.values) * rho.dx))
    return math.sqrt(best)


# ==================== NEGATIVE SOBOLEV NORM ====================
def hminus_s_norm(coefficients, s):
    """
    (sum_{k != 0} (1 + 4 pi^2 k^2)^{-s} |h_hat(k)|^2)^{1/2}

    Raises:
        MeanZeroError: nonzero k = 0 coefficient
    """
    if not s > 0:
        raise PreconditionError(f"s must be positive, got {s}")
    if abs(coefficients.get(0, 0.0)) > 1e-14:
        raise MeanZeroError(f"Field is not mean-zero: h_hat(0) = {coefficients[0]}")
    total = sum((1.0 + 4.0 * np.pi**2 * k * k) ** (-s) * abs(v) ** 2 for k, v in coefficients.items() if k != 0)
    return math.sqrt(total)


# ==================== ENTROPY DECAY ====================
@dataclass
class EntropyDecay:
    times: NDArray
    values: NDArray
    epsilon: float
    rate: float
    hit_time: float
    predicted_time: float
    warnings: list = field(default_factory=list)

    @property
    def consistent(self):
        return math.isfinite(self.hit_time) and self.hit_time <= 2.0 * self.predicted_time

    def to_rows(self):
        return [(float(t), float(v)) for t, v in zip(self.times, self.values)]


def _histogram_density(positions, m, spec):
    nodes, dx = meanfield.make_grid(spec, m)
    # bins centred on the nodes x_j = j / m
    wrapped = np.mod(positions + 0.5 * dx, 1.0) - 0.5 * dx
    counts, _ = np.histogram(wrapped, bins=m, range=(-0.5 * dx, 1.0 - 0.5 * dx))
    return meanfield.GridDensity(nodes, counts / (counts.sum() * dx), dx, True)


def entropy_decay_check(spec, n=256, replicas=8, dt=1e-3, t_end=0.5, epsilon=0.05, seed=0,
                        amplitude=0.8, bins=64, record_every=10):
    """
    Qualitative entropy contraction along the particle flow.

    Replicas start i.i.d. from a perturbed flat density. At each recorded
    time the pooled positions are binned and the scaled relative entropy of
    the binned density's product state is compared with exp(-lambda t / 2),
    lambda the linearised gap. The run passes when the entropy falls below
    epsilon no later than twice the predicted time.
    """
    rate = linearized_gap(spec)
    if rate <= 0:
        raise PreconditionError("Entropy decay needs a positive linearised gap (beta < beta_sharp)")
    reference, _ = meanfield.reference_free_energy(spec, bins)
    if reference is None:
        raise DependencyError("No converged steady state available for the reference free energy")
    start = meanfield.perturbed_flat(spec, meanfield.DEFAULT_GRID, amplitude)
    ensembles = [initial_ensemble(spec, n, seed, start, f"entropy/{n}/{r}") for r in range(replicas)]
    n_steps = int(round(t_end / dt))
    times, values = [], []
    for step in range(n_steps + 1):
        if step % record_every == 0:
            pooled = np.concatenate([e.positions[:, 0] for e in ensembles])
            rho = _histogram_density(pooled, bins, spec)
            times.append(step * dt)
            values.append(relative_entropy_chaotic(rho, spec, n, reference).value)
        if step < n_steps:
            ensembles = [step_euler_maruyama(e, dt) for e in ensembles]
    times, values = np.asarray(times), np.asarray(values)
    below = np.nonzero(values < epsilon)[0]
    hit = float(times[below[0]]) if below.size else math.inf
    predicted = 2.0 / rate * math.log(max(values[0], epsilon) / epsilon)
    result = EntropyDecay(times, values, epsilon, rate, hit, predicted)
    if not result.consistent:
        message = f"Entropy reached {epsilon} at t={hit}, later than twice the predicted {predicted:.4f}"
        logger.warning(message)
        result.warnings.append(message)
    return result
