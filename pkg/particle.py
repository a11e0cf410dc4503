"""
N-particle system

    dX^i = -grad V(X^i) dt - (1/N) sum_j grad_1 W(X^i, X^j) dt + sqrt(2 / beta) dB^i

Euler-Maruyama stepping, Gibbs sampling of exp(-beta H_N) / Z_N, empirical
measures and the synchronous coupling with the mean-field flow.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from numpy.typing import NDArray

from errors import (
    ConfigError,
    DomainError,
    MixingFailureError,
    NumericalBlowupError,
    PreconditionError,
    UnsupportedModelError,
)
from meanfield import convolve_at
from rng_utils import stream

logger = logging.getLogger(__name__)

MIN_ACCEPTANCE = 0.01
PAIR_BLOCK = 512


# ==================== ENSEMBLES ====================
@dataclass(frozen=True, eq=False)
class ParticleEnsemble:
    """Positions (N x d), time, model and the RNG stream that drives the noise"""
    positions: NDArray
    model: object
    rng: np.random.Generator
    stream_name: str = ""
    time: float = 0.0

    def __post_init__(self):
        positions = np.asarray(self.positions, dtype=float)
        if positions.ndim == 1:
            positions = positions[:, None]
        if positions.ndim != 2 or positions.shape[0] < 1:
            raise PreconditionError(f"Positions must be an N x d array with N >= 1, got shape {positions.shape}")
        self.model.domain.check(positions)
        if self.model.domain.periodic and (positions.min() < 0.0 or positions.max() >= 1.0):
            raise DomainError("Torus coordinates must lie in [0, 1)")
        object.__setattr__(self, "positions", positions)

    @property
    def n_particles(self):
        return self.positions.shape[0]

    @property
    def dim(self):
        return self.positions.shape[1]

    def advanced(self, positions, dt):
        return replace(self, positions=positions, time=self.time + dt)


@dataclass(frozen=True, eq=False)
class EmpiricalMeasure:
    """(1/N) sum_i delta_{x_i}"""
    points: NDArray
    periodic: bool = False

    @property
    def size(self):
        return self.points.shape[0]

    @property
    def weights(self):
        return np.full(self.size, 1.0 / self.size)

    def mean(self):
        return self.points.mean(axis=0)

    def fourier_modes(self, k_max):
        """(1/N) sum_j e^{-2 pi i k x_j} for k = 0..k_max (1-D)"""
        k = np.arange(k_max + 1)
        return np.exp(-2j * np.pi * np.outer(k, self.points[:, 0])).mean(axis=1)


def empirical_measure(ens):
    return EmpiricalMeasure(ens.positions.copy(), ens.model.domain.periodic)


def initial_ensemble(spec, n, seed=0, density=None, stream_name=None, rng=None):
    """
    i.i.d. draw of N particles.

    From ``density`` (a 1-D GridDensity) when given; otherwise uniform on the
    torus or box and standard Gaussian on the line.
    """
    if n < 1:
        raise PreconditionError("N must be at least 1")
    name = stream_name or f"init/{n}"
    rng = rng if rng is not None else stream(seed, *name.split("/"))
    d = spec.domain.dim
    if density is not None:
        if d != 1:
            raise UnsupportedModelError("Grid densities are one-dimensional")
        x = density.sample(n, rng)[:, None]
    elif spec.domain.periodic:
        x = rng.random((n, 1))
    elif spec.domain.compact:
        h = spec.domain.half_width
        x = rng.uniform(-h, h, size=(n, d))
    else:
        x = rng.standard_normal((n, d))
    return ParticleEnsemble(spec.domain.reduce(x), spec, rng, name)


# ==================== FORCES AND ENERGY ====================
def mean_interaction_gradient(spec, x, y=None):
    """
    (1/N) sum_j grad_1 W(x_i, y_j) for x of shape (..., N, d).

    Quadratic and cosine-sum interactions use their exact factorised forms;
    other interactions are summed pairwise in blocks.
    """
    x = np.asarray(x, dtype=float)
    y = x if y is None else np.asarray(y, dtype=float)
    w = spec.interaction
    if w.family == "zero":
        return np.zeros_like(x)
    if w.family == "quadratic":
        return w.strength * (x - y.mean(axis=-2, keepdims=True))
    if w.family == "cosine_sum":
        out = np.zeros_like(x)
        for m, c in enumerate(w.coefficients, start=1):
            phase_x = 2.0 * np.pi * m * x
            phase_y = 2.0 * np.pi * m * y
            cos_mean = np.cos(phase_y).mean(axis=-2, keepdims=True)
            sin_mean = np.sin(phase_y).mean(axis=-2, keepdims=True)
            out += c * 2.0 * np.pi * m * (np.sin(phase_x) * cos_mean - np.cos(phase_x) * sin_mean)
        return out
    if x.ndim > 2:
        return np.stack([mean_interaction_gradient(spec, xb, yb) for xb, yb in zip(x, np.broadcast_to(y, x.shape[:-2] + y.shape[-2:]))])
    out = np.empty_like(x)
    for start in range(0, x.shape[0], PAIR_BLOCK):
        r = spec.domain.difference(x[start:start + PAIR_BLOCK, None, :], y[None, :, :])
        out[start:start + PAIR_BLOCK] = w.gradient(r).mean(axis=1)
    return out


def drift(spec, x):
    """-grad V(x_i) - (1/N) sum_j grad_1 W(x_i, x_j)"""
    return -(spec.confining.gradient(x) + mean_interaction_gradient(spec, x))


def _pair_energy(spec, x):
    """sum_{i, j} W(x_i, x_j) for x of shape (..., N, d)"""
    w = spec.interaction
    n = x.shape[-2]
    if w.family == "zero":
        return np.zeros(x.shape[:-2])
    if w.family == "quadratic":
        total = x.sum(axis=-2)
        return w.strength * (n * np.sum(x * x, axis=(-2, -1)) - np.sum(total * total, axis=-1))
    if w.family == "cosine_sum":
        energy = np.zeros(x.shape[:-2])
        for m, c in enumerate(w.coefficients, start=1):
            energy -= c * np.abs(np.exp(2j * np.pi * m * x[..., 0]).sum(axis=-1)) ** 2
        return energy
    if x.ndim > 2:
        return np.array([_pair_energy(spec, xb) for xb in x])
    energy = 0.0
    for start in range(0, n, PAIR_BLOCK):
        r = spec.domain.difference(x[start:start + PAIR_BLOCK, None, :], x[None, :, :])
        energy += float(w.value(r).sum())
    return energy


def energy(spec, x):
    """H_N(x) = sum_i V(x_i) + (1/2N) sum_{i,j} W(x_i, x_j), batched over leading axes"""
    n = x.shape[-2]
    return spec.confining.value(x).sum(axis=-1) + _pair_energy(spec, x) / (2.0 * n)


def hamiltonian(ens):
    return float(energy(ens.model, ens.positions))


def order_parameter(ens):
    """|mean e^{2 pi i x}| on the torus, |mean x| otherwise"""
    x = ens.positions[:, 0]
    if ens.model.domain.periodic:
        return float(abs(np.exp(2j * np.pi * x).mean()))
    return float(abs(x.mean()))


# ==================== DYNAMICS ====================
def _checked_drift(spec, x):
    b = drift(spec, x)
    finite = np.all(np.isfinite(b), axis=-1)
    if not finite.all():
        index = int(np.argmin(finite))
        raise NumericalBlowupError(f"Non-finite drift at particle {index} (position {x[index]})", particle_index=index)
    return b


def step_euler_maruyama(ens, dt):
    """
    X <- X + drift dt + sqrt(2 beta^{-1} dt) G, then torus wrap or box folding.

    Noise is drawn from the ensemble's stream in particle order, also at
    zero temperature, so the stream position only depends on the step count.
    """
    if not dt > 0:
        raise PreconditionError(f"dt must be positive, got {dt}")
    spec = ens.model
    x = ens.positions
    b = _checked_drift(spec, x)
    noise = ens.rng.standard_normal(x.shape)
    moved = x + b * dt + math.sqrt(2.0 * spec.temperature * dt) * noise
    return ens.advanced(spec.domain.reduce(moved), dt)


def run_trajectory(ens, dt, n_steps, record_every=1):
    """
    Advance n_steps Euler-Maruyama steps.

    Returns:
        (final ensemble, rows of (time, energy per particle, order parameter))
    """
    rows = [(ens.time, hamiltonian(ens) / ens.n_particles, order_parameter(ens))]
    for step in range(1, n_steps + 1):
        ens = step_euler_maruyama(ens, dt)
        if step % record_every == 0 or step == n_steps:
            rows.append((ens.time, hamiltonian(ens) / ens.n_particles, order_parameter(ens)))
    return ens, rows


# ==================== GIBBS SAMPLING ====================
@dataclass
class GibbsSamples:
    positions: NDArray  # (samples, N, d)
    model: object
    scheme: str
    acceptance_rate: float
    warnings: list = field(default_factory=list)

    @property
    def n_samples(self):
        return self.positions.shape[0]

    def ensembles(self, seed=0):
        return [
            ParticleEnsemble(x, self.model, stream(seed, "stationary", self.positions.shape[1], i), f"stationary/{i}")
            for i, x in enumerate(self.positions)
        ]

    def energies(self):
        return energy(self.model, self.positions)


def _log_proposal(spec, h, start, end_raw, grad_start):
    """log q(end | start) up to a constant, for the Langevin proposal"""
    displacement = end_raw - start + h * grad_start
    return -spec.beta / (4.0 * h) * np.sum(displacement * displacement, axis=(-2, -1))


def sample_gibbs(spec, n, n_samples, scheme="MALA", step=0.01, burn_in=1000, seed=0,
                 thin=1, n_chains=1, init=None, strict=False):
    """
    Sample Z_N^{-1} exp(-beta H_N) with ULA or MALA.

    Chains advance together as one batch with independent accept/reject.
    The Langevin proposal is y = x - h grad H(x) + sqrt(2h / beta) xi.
    In a box, proposals leaving the box are rejected (MALA) or folded (ULA).

    Args:
        init: optional (n_chains, N, d) or (N, d) starting positions
        strict: raise MixingFailureError instead of warning when the MALA
            acceptance rate drops below 1%

    Returns:
        GibbsSamples with n_samples states
    """
    scheme = scheme.upper()
    if scheme not in ("ULA", "MALA"):
        raise ConfigError(f"Unknown sampling scheme '{scheme}'")
    if not step > 0 or burn_in < 0 or thin < 1 or n_chains < 1 or n_samples < 1:
        raise PreconditionError("Need step > 0, burn_in >= 0, thin >= 1, n_chains >= 1, n_samples >= 1")
    if math.isinf(spec.beta):
        raise PreconditionError("Gibbs sampling needs a finite beta")
    rng = stream(seed, "gibbs", n)
    d = spec.domain.dim
    if init is None:
        x = np.stack([initial_ensemble(spec, n, rng=rng).positions for _ in range(n_chains)])
    else:
        x = np.broadcast_to(np.asarray(init, dtype=float).reshape(-1, n, d), (n_chains, n, d)).copy()
    sigma = math.sqrt(2.0 * step / spec.beta)
    domain = spec.domain
    box = domain.compact and not domain.periodic

    h_x = energy(spec, x)
    g_x = -drift(spec, x)
    n_records = -(-n_samples // n_chains)
    n_total = burn_in + n_records * thin
    samples = np.empty((n_records * n_chains, n, d))
    accepted = proposed = 0
    record = 0
    for it in range(1, n_total + 1):
        y_raw = x - step * g_x + sigma * rng.standard_normal(x.shape)
        if scheme == "ULA":
            x = domain.reduce(y_raw)
            g_x = -drift(spec, x)
        else:
            u = rng.random(n_chains)
            inside = np.ones(n_chains, dtype=bool)
            if box:
                inside = np.all(np.abs(y_raw) <= domain.half_width, axis=(-2, -1))
            y = domain.reduce(y_raw)
            h_y = energy(spec, y)
            g_y = -drift(spec, y)
            log_alpha = (
                -spec.beta * (h_y - h_x)
                + _log_proposal(spec, step, y_raw, x, g_y)
                - _log_proposal(spec, step, x, y_raw, g_x)
            )
            accept = inside & (np.log(u) < log_alpha)
            x = np.where(accept[:, None, None], y, x)
            h_x = np.where(accept, h_y, h_x)
            g_x = np.where(accept[:, None, None], g_y, g_x)
            if it > burn_in:
                accepted += int(accept.sum())
                proposed += n_chains
        if it > burn_in and (it - burn_in) % thin == 0:
            samples[record * n_chains:(record + 1) * n_chains] = x
            record += 1

    rate = accepted / proposed if proposed else 1.0
    warnings = []
    if scheme == "MALA" and rate < MIN_ACCEPTANCE:
        message = f"MALA acceptance rate {rate:.4f} below {MIN_ACCEPTANCE}: chain is not mixing (N={n}, step={step})"
        if strict:
            raise MixingFailureError(message)
        logger.warning(message)
        warnings.append(message)
    logger.info(f"Gibbs sampling N={n} scheme={scheme}: {n_samples} samples, acceptance {rate:.3f}")
    return GibbsSamples(samples[:n_samples], spec, scheme, rate, warnings)


# ==================== SYNCHRONOUS COUPLING ====================
@dataclass
class CouplingSeries:
    """Coupled distances (1/N sum_i |X_i - Y_i|^2)^{1/2}, one row per replica"""
    times: NDArray
    distances: NDArray  # (replicas, times)
    n_particles: int

    @property
    def mean(self):
        return self.distances.mean(axis=0)

    @property
    def stderr(self):
        r = self.distances.shape[0]
        if r < 2:
            return np.full(self.times.shape, math.nan)
        return self.distances.std(axis=0, ddof=1) / math.sqrt(r)

    def to_rows(self):
        return [(float(t), float(m), float(s)) for t, m, s in zip(self.times, self.mean, self.stderr)]


def _check_flow_grid(flow, dt, n_steps):
    expected = np.arange(n_steps + 1) * dt
    if len(flow.times) < n_steps + 1 or not np.allclose(flow.times[: n_steps + 1], expected, rtol=0.0, atol=1e-9 * max(1.0, expected[-1])):
        raise ConfigError(
            f"Mean-field flow time grid does not match the particle grid (dt={dt}, {n_steps} steps); "
            f"solve the flow with the same dt and record_every=1"
        )


def _coupled_replica(spec, n, dt, n_steps, flow, init, seed, replica, record_every):
    rng = stream(seed, "coupling", n, replica)
    start = init.sample(n, rng)[:, None]
    x = spec.domain.reduce(start)
    y = x.copy()
    sigma = math.sqrt(2.0 * spec.temperature * dt)
    distances = [0.0]
    for k in range(n_steps):
        noise = rng.standard_normal(x.shape)
        bx = _checked_drift(spec, x)
        by = -(spec.confining.gradient(y) + convolve_at(flow.densities[k], spec, y[:, 0])[:, None])
        x = spec.domain.reduce(x + bx * dt + sigma * noise)
        y = spec.domain.reduce(y + by * dt + sigma * noise)
        if (k + 1) % record_every == 0 or k + 1 == n_steps:
            gap = spec.domain.difference(x, y)
            distances.append(math.sqrt(float(np.mean(np.sum(gap * gap, axis=-1)))))
    return distances


def synchronous_coupling_run(spec, n, dt, t_end, flow, seed=0, init=None, replicas=1, record_every=1, workers=1):
    """
    Drive interacting particles X and mean-field particles Y (drift
    -grad V - grad W * rho(t)) with the same initial points and Brownian
    increments, and record their coupled distance.

    Raises:
        ConfigError: the flow was not solved on the same time grid
    """
    if spec.domain.dim != 1:
        raise UnsupportedModelError("Synchronous coupling uses a 1-D mean-field flow")
    n_steps = int(round(t_end / dt))
    _check_flow_grid(flow, dt, n_steps)
    init = init if init is not None else flow.densities[0]
    run = lambda r: _coupled_replica(spec, n, dt, n_steps, flow, init, seed, r, record_every)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(run, range(replicas)))
    else:
        rows = [run(r) for r in range(replicas)]
    steps = [0] + [k for k in range(1, n_steps + 1) if k % record_every == 0 or k == n_steps]
    return CouplingSeries(np.asarray(steps) * dt, np.asarray(rows), n)
