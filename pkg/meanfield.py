"""
Mean-field (McKean-Vlasov) analysis on 1-D grids.

Densities live on M equispaced nodes of the torus [0, 1) or of the truncated
line [-L, L] (cell centres). The module solves

    d rho / dt = beta^{-1} rho'' + (rho (V' + W' * rho))'

evaluates the free energy and its dissipation, finds steady states through
the self-consistency map, and scans for phase transitions.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from numpy.typing import NDArray
from scipy import fft as sfft
from scipy import linalg, optimize, special

import model as potentials
from errors import (
    ConfigError,
    PositivityError,
    PreconditionError,
    StepSizeError,
    UnsupportedModelError,
)
from rng_utils import stream

logger = logging.getLogger(__name__)

DEFAULT_GRID = 256
MASS_TOL = 1e-10
NEGATIVE_TOL = 1e-12
DEFAULT_DAMPING = 0.5
DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 20000
CRITICAL_TOL = 1e-8
ENERGY_GAP_TOL = 1e-6


# ==================== GRID DENSITY ====================
@dataclass(frozen=True, eq=False)
class GridDensity:
    """Probability density sampled on M equispaced nodes (M a power of two)"""
    nodes: NDArray
    values: NDArray
    dx: float
    periodic: bool

    @property
    def size(self):
        return self.values.size

    def mass(self):
        return float(np.sum(self.values) * self.dx)

    def validate(self):
        m = self.size
        if m < 2 or m & (m - 1):
            raise PreconditionError(f"Grid size must be a power of two, got {m}")
        if np.any(self.values < 0):
            raise PreconditionError(f"Density has negative values (min {self.values.min():.3e})")
        if abs(self.mass() - 1.0) > MASS_TOL:
            raise PreconditionError(f"Density mass {self.mass():.12f} differs from 1")
        return self

    def with_values(self, values):
        return replace(self, values=np.asarray(values, dtype=float))

    def normalized(self):
        return self.with_values(self.values / self.mass())

    def edges(self):
        return np.append(self.nodes - 0.5 * self.dx, self.nodes[-1] + 0.5 * self.dx)

    def cdf(self):
        """CDF at the cell edges (piecewise-constant density)"""
        return np.concatenate([[0.0], np.cumsum(self.values) * self.dx])

    def quantile(self, u):
        q = np.interp(np.asarray(u, dtype=float), self.cdf() / self.mass(), self.edges())
        return np.mod(q, 1.0) if self.periodic else q

    def sample(self, n, rng):
        """Inverse-CDF draws"""
        return self.quantile(rng.random(n))

    def mean(self):
        return float(np.sum(self.nodes * self.values) * self.dx)

    def fourier_modes(self, k_max):
        """rho_hat(k) = int rho e^{-2 pi i k x} dx for k = 0..k_max"""
        k = np.arange(k_max + 1)
        return np.exp(-2j * np.pi * np.outer(k, self.nodes)) @ self.values * self.dx

    def to_rows(self):
        return [(float(x), float(v)) for x, v in zip(self.nodes, self.values)]

    @classmethod
    def from_rows(cls, rows, periodic):
        data = np.asarray(rows, dtype=float)
        nodes, values = data[:, 0], data[:, 1]
        return cls(nodes, values, float(nodes[1] - nodes[0]), periodic)


def _check_grid_size(m):
    if m < 2 or m & (m - 1):
        raise ConfigError(f"Grid size M must be a power of two, got {m}")


def _require_1d(spec):
    if spec.domain.dim != 1:
        raise UnsupportedModelError("The mean-field solver is one-dimensional")
    if math.isinf(spec.beta):
        raise PreconditionError("Mean-field operations need a finite beta")


def make_grid(spec, m=DEFAULT_GRID, half_width=None):
    """Nodes and spacing for the torus (x_j = j/M) or the truncated line (cell centres)"""
    _require_1d(spec)
    _check_grid_size(m)
    if spec.domain.periodic:
        return np.arange(m) / m, 1.0 / m
    width = float(half_width) if half_width is not None else spec.truncation()
    dx = 2.0 * width / m
    return -width + (np.arange(m) + 0.5) * dx, dx


def density_from_function(spec, f, m=DEFAULT_GRID, half_width=None):
    nodes, dx = make_grid(spec, m, half_width)
    values = np.asarray(f(nodes), dtype=float)
    if np.any(values < 0) or not np.all(np.isfinite(values)):
        raise PreconditionError("Initial profile must be finite and nonnegative")
    return GridDensity(nodes, values, dx, spec.domain.periodic).normalized()


def flat_density(spec, m=DEFAULT_GRID, half_width=None):
    return density_from_function(spec, np.ones_like, m, half_width)


def perturbed_flat(spec, m=DEFAULT_GRID, amplitude=0.1, mode=1, phase=0.0):
    return density_from_function(spec, lambda x: 1.0 + amplitude * np.cos(2.0 * np.pi * mode * x + phase), m)


def gaussian_density(spec, m=DEFAULT_GRID, mean=0.0, variance=1.0, half_width=None):
    return density_from_function(spec, lambda x: np.exp(-((x - mean) ** 2) / (2.0 * variance)), m, half_width)


def gibbs_density(spec, m=DEFAULT_GRID, half_width=None):
    """exp(-beta V) / Z, the steady state when W = 0"""
    nodes, dx = make_grid(spec, m, half_width)
    exponent = -spec.beta * spec.confining.value(nodes[:, None])
    values = np.exp(exponent - exponent.max())
    return GridDensity(nodes, values, dx, spec.domain.periodic).normalized()


def concentrated_density(spec, m=DEFAULT_GRID, concentration=5.0):
    """A clustered start: von Mises bump on the torus, narrow Gaussian in the right well on the line"""
    if spec.domain.periodic:
        return density_from_function(spec, lambda x: np.exp(concentration * np.cos(2.0 * np.pi * x)), m)
    return gaussian_density(spec, m, mean=1.0, variance=1.0 / (4.0 * concentration))


# ==================== CONVOLUTIONS ====================
def convolve_kernel(rho, kernel):
    """(k * rho)(x_i) = sum_j k(x_i - x_j) rho_j dx for a function k of the difference"""
    if rho.periodic:
        # circular convolution; k is evaluated on [0, 1) and must be 1-periodic
        table = kernel(rho.nodes)
        return np.real(sfft.ifft(sfft.fft(table) * sfft.fft(rho.values))) * rho.dx
    r = rho.nodes[:, None] - rho.nodes[None, :]
    return kernel(r) @ rho.values * rho.dx


def convolve(rho, spec):
    """(W * rho) at the nodes"""
    if spec.interaction.family == "zero":
        return np.zeros(rho.size)
    return convolve_kernel(rho, spec.interaction.profile)


def convolve_gradient(rho, spec):
    """(grad_1 W * rho) at the nodes"""
    if spec.interaction.family == "zero":
        return np.zeros(rho.size)
    return convolve_kernel(rho, spec.interaction.derivative)


def convolve_at(rho, spec, points, derivative=True, block=4096):
    """(grad_1 W * rho)(p), or (W * rho)(p), at arbitrary 1-D points p"""
    w = spec.interaction
    f = w.derivative if derivative else w.profile
    points = np.asarray(points, dtype=float)
    flat = points.reshape(-1)
    out = np.empty_like(flat)
    for start in range(0, flat.size, block):
        chunk = flat[start:start + block]
        r = spec.domain.difference(chunk[:, None], rho.nodes[None, :])
        out[start:start + block] = f(r) @ rho.values * rho.dx
    return out.reshape(points.shape)


def _confining_on(rho, spec):
    return spec.confining.value(rho.nodes[:, None])


def _confining_gradient_on(rho, spec):
    return spec.confining.gradient(rho.nodes[:, None])[:, 0]


def _derivative(values, dx, periodic):
    """Spectral derivative on the torus, fourth-order centred differences on the line"""
    if periodic:
        k = sfft.fftfreq(values.size, d=dx)
        spectrum = sfft.fft(values) * (2j * np.pi * k)
        if values.size % 2 == 0:
            spectrum[values.size // 2] = 0.0
        return np.real(sfft.ifft(spectrum))
    out = np.gradient(values, dx, edge_order=2)
    out[2:-2] = (values[:-4] - 8.0 * values[1:-3] + 8.0 * values[3:-1] - values[4:]) / (12.0 * dx)
    return out


# ==================== FREE ENERGY ====================
def entropy(rho):
    """int rho log rho, with 0 log 0 = 0"""
    v = rho.values
    positive = v > 0
    return float(np.sum(v[positive] * np.log(v[positive])) * rho.dx)


def interaction_energy(rho, spec):
    """1/2 int int W(x, y) rho(x) rho(y)"""
    return float(0.5 * np.sum(convolve(rho, spec) * rho.values) * rho.dx)


def confinement_energy(rho, spec):
    return float(np.sum(_confining_on(rho, spec) * rho.values) * rho.dx)


def free_energy(rho, spec):
    """Mean-field free energy beta^{-1} int rho log rho + 1/2 int int W rho rho + int V rho"""
    _require_1d(spec)
    return spec.temperature * entropy(rho) + interaction_energy(rho, spec) + confinement_energy(rho, spec)


def energy_per_particle_product(rho, spec, n):
    """Energy per particle of the product state rho^{(x)N}, up to the constant diagonal W(0) / (2N)"""
    _require_1d(spec)
    if n < 1:
        raise PreconditionError("N must be at least 1")
    return (
        spec.temperature * entropy(rho)
        + confinement_energy(rho, spec)
        + (1.0 - 1.0 / n) * interaction_energy(rho, spec)
    )


def velocity(rho, spec):
    """-(V' + W' * rho) at the nodes"""
    return -(_confining_gradient_on(rho, spec) + convolve_gradient(rho, spec))


def dissipation(rho, spec):
    """
    int |beta^{-1} (log rho)' + W' * rho + V'|^2 rho dx.

    Raises:
        PositivityError: a node of a torus density is zero
    """
    _require_1d(spec)
    v = rho.values
    if rho.periodic and np.any(v <= 0):
        raise PositivityError("Dissipation needs a strictly positive density on the torus")
    positive = v > 0
    log_rho = np.where(positive, np.log(np.where(positive, v, 1.0)), 0.0)
    flux = spec.temperature * _derivative(log_rho, rho.dx, rho.periodic) - velocity(rho, spec)
    return float(np.sum(np.where(positive, flux**2 * v, 0.0)) * rho.dx)


# ==================== SELF-CONSISTENCY ====================
def gibbs_image(rho, spec):
    """exp(-beta (W * rho + V)) / Z as a density on rho's grid"""
    phi = spec.beta * (convolve(rho, spec) + _confining_on(rho, spec))
    # exponent shifted by its maximum; Z absorbs the shift
    exponent = -(phi - phi.min())
    values = np.exp(exponent)
    return rho.with_values(values / (np.sum(values) * rho.dx))


def self_consistency_map(rho, spec):
    """Residual T(rho) = rho - exp(-beta (W * rho + V)) / Z, as nodal values"""
    _require_1d(spec)
    return rho.values - gibbs_image(rho, spec).values


@dataclass
class SteadyState:
    density: GridDensity
    converged: bool
    iterations: int
    residuals: list = field(default_factory=list)
    energy: float = math.nan

    @property
    def residual(self):
        return self.residuals[-1] if self.residuals else math.inf


def find_steady_state(spec, init, damping=DEFAULT_DAMPING, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER):
    """
    Damped fixed-point iteration rho <- (1 - theta) rho + theta exp(-beta (W * rho + V)) / Z.

    Stops when the sup-norm residual drops below tol. Running out of
    iterations is reported through ``converged=False``, not raised.
    """
    _require_1d(spec)
    if not 0.0 < damping <= 1.0:
        raise PreconditionError(f"Damping must lie in (0, 1], got {damping}")
    init.validate()
    rho = init
    residuals = []
    converged = False
    iterations = 0
    for iterations in range(1, int(max_iter) + 1):
        image = gibbs_image(rho, spec)
        residual = float(np.max(np.abs(rho.values - image.values)))
        residuals.append(residual)
        if residual < tol:
            converged = True
            break
        rho = rho.with_values((1.0 - damping) * rho.values + damping * image.values)
    if not converged:
        logger.warning(f"Fixed-point iteration did not converge in {max_iter} steps (residual {residuals[-1]:.3e}, beta={spec.beta})")
    return SteadyState(rho, converged, iterations, residuals, free_energy(rho, spec))


def order_parameter(rho):
    """|rho_hat(1)| on the torus, |int x rho| on the line"""
    if rho.periodic:
        return float(abs(rho.fourier_modes(1)[1]))
    return abs(rho.mean())


def kuramoto_order_parameter(beta, coupling=1.0):
    """
    Order parameter of the clustered steady state of W = -coupling cos(2 pi r).

    Solves r = I1(beta c r) / I0(beta c r) by bisection; 0 when beta c <= 2.
    """
    k = beta * coupling
    if k <= 2.0:
        return 0.0
    g = lambda r: special.i1e(k * r) / special.i0e(k * r) - r
    return float(optimize.bisect(g, 1e-12, 1.0, xtol=1e-15))


def multistart_initial_states(spec, m=DEFAULT_GRID, seed=0, amplitude=0.1, n_random=4):
    """Flat (or exp(-beta V)), its two first-harmonic perturbations and random-phase perturbations"""
    rng = stream(seed, "multistart")
    base = flat_density(spec, m) if spec.domain.periodic else gibbs_density(spec, m)
    x = base.nodes
    if spec.domain.periodic:
        shape = lambda: np.cos(2.0 * np.pi * x)
    else:
        shape = lambda: np.tanh(2.0 * x)
    starts = [base]
    for sign in (1.0, -1.0):
        starts.append(base.with_values(base.values * (1.0 + sign * amplitude * shape())).normalized())
    for _ in range(n_random):
        if spec.domain.periodic:
            phases = rng.uniform(0.0, 2.0 * np.pi, size=3)
            bump = sum(np.cos(2.0 * np.pi * (j + 1) * x + phases[j]) / (j + 1) for j in range(3))
        else:
            centre = rng.uniform(-1.5, 1.5)
            bump = 2.0 * np.exp(-((x - centre) ** 2) / 0.3) - 1.0
        start = base.values * (1.0 + amplitude * bump)
        starts.append(base.with_values(np.clip(start, 0.0, None)).normalized())
    return starts


def multistart_steady_states(spec, m=DEFAULT_GRID, seed=0, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER):
    return [find_steady_state(spec, start, tol=tol, max_iter=max_iter) for start in multistart_initial_states(spec, m, seed)]


def critical_states(states, spec):
    """Converged states with vanishing dissipation"""
    return [s for s in states if s.converged and dissipation(s.density, spec) < CRITICAL_TOL]


def reference_free_energy(spec, m=DEFAULT_GRID, seed=0, states=None):
    """
    Lowest free energy over the multi-start steady states.

    Returns:
        (energy, minimiser) or (None, None) when nothing converged
    """
    states = critical_states(states if states is not None else multistart_steady_states(spec, m, seed), spec)
    if not states:
        return None, None
    best = min(states, key=lambda s: s.energy)
    return best.energy, best.density


# ==================== PDE SOLVER ====================
def _bernoulli(z):
    small = np.abs(z) < 1e-10
    safe = np.where(small, 1.0, z)
    return np.where(small, 1.0 - 0.5 * z, safe / np.expm1(safe))


def _minmod(a, b):
    return np.where(a * b > 0, np.sign(a) * np.minimum(np.abs(a), np.abs(b)), 0.0)


def _torus_step(rho, spec, dt, u):
    v = rho.values
    u_face = 0.5 * (u + np.roll(u, -1))
    slope = _minmod(v - np.roll(v, 1), np.roll(v, -1) - v)
    left = v + 0.5 * slope
    right = np.roll(v - 0.5 * slope, -1)
    flux = np.where(u_face > 0, u_face * left, u_face * right)
    transported = v - dt / rho.dx * (flux - np.roll(flux, 1))
    k = np.arange(rho.size)
    symbol = (4.0 / rho.dx**2) * np.sin(np.pi * k / rho.size) ** 2
    return np.real(sfft.ifft(sfft.fft(transported) / (1.0 + dt * spec.temperature * symbol)))


def _line_step(rho, spec, dt):
    """Implicit finite volume with exponentially fitted fluxes and no-flux walls"""
    phi = _confining_on(rho, spec) + convolve(rho, spec)
    z = spec.beta * np.diff(phi)
    scale = spec.temperature / rho.dx**2
    a = scale * _bernoulli(z)
    b = scale * _bernoulli(-z)
    m = rho.size
    diag = np.zeros(m)
    diag[:-1] -= a
    diag[1:] -= b
    banded = np.zeros((3, m))
    banded[0, 1:] = -dt * b
    banded[1, :] = 1.0 - dt * diag
    banded[2, :-1] = -dt * a
    return linalg.solve_banded((1, 1), banded, rho.values)


def mckean_vlasov_step(rho, spec, dt):
    """
    One time step of the McKean-Vlasov equation.

    Torus: explicit conservative (minmod-limited upwind) transport with the
    FFT convolution, then implicit diffusion in Fourier space.
    Line: implicit finite volume, no flux through the walls.

    Raises:
        StepSizeError: max |drift| dt / dx > 1
    """
    _require_1d(spec)
    if dt <= 0:
        raise PreconditionError("dt must be positive")
    u = velocity(rho, spec)
    cfl = float(np.max(np.abs(u)) * dt / rho.dx)
    if cfl > 1.0:
        raise StepSizeError(f"CFL number {cfl:.3f} exceeds 1; reduce dt below {dt / cfl:.3e}")
    values = _torus_step(rho, spec, dt, u) if rho.periodic else _line_step(rho, spec, dt)
    lowest = float(values.min())
    if lowest < -NEGATIVE_TOL:
        logger.warning(f"Clipping negative density {lowest:.3e} after McKean-Vlasov step")
    values = np.clip(values, 0.0, None)
    return rho.with_values(values / (np.sum(values) * rho.dx))


@dataclass
class MeanFieldFlow:
    times: NDArray
    densities: list
    energies: NDArray

    def at_step(self, n):
        return self.densities[n]

    def to_rows(self):
        return [(float(t), float(e), order_parameter(r)) for t, e, r in zip(self.times, self.energies, self.densities)]


def solve_mckean_vlasov(rho0, spec, dt, t_end, record_every=1):
    """
    Integrate from rho0 over [0, t_end] with a fixed step.

    Returns:
        MeanFieldFlow holding every ``record_every``-th state
    """
    n_steps = int(round(t_end / dt))
    if n_steps < 0 or abs(n_steps * dt - t_end) > 1e-9 * max(1.0, t_end):
        raise ConfigError(f"t_end={t_end} is not a multiple of dt={dt}")
    rho = rho0.validate()
    times, densities, energies = [0.0], [rho], [free_energy(rho, spec)]
    for n in range(1, n_steps + 1):
        rho = mckean_vlasov_step(rho, spec, dt)
        if n % record_every == 0 or n == n_steps:
            times.append(n * dt)
            densities.append(rho)
            energies.append(free_energy(rho, spec))
    return MeanFieldFlow(np.asarray(times), densities, np.asarray(energies))


# ==================== LINEARISED SPECTRUM ====================
def _require_flat(spec):
    _require_1d(spec)
    if not spec.is_flat_torus:
        raise UnsupportedModelError("Spectra are computed at the flat state: torus with V = 0")
    if not spec.interaction.is_periodic:
        raise UnsupportedModelError("Interaction must be translation invariant and periodic")


def linearized_spectrum_flat(spec, k_max=potentials.DEFAULT_K_MAX):
    """lambda_k = -4 pi^2 k^2 (beta^{-1} + W_hat(k)) for 1 <= |k| <= k_max"""
    _require_flat(spec)
    w_hat = potentials.fourier_coefficients(spec, k_max)
    return {
        k: -4.0 * np.pi**2 * k * k * (spec.temperature + w_hat[k])
        for k in range(-k_max, k_max + 1)
        if k != 0
    }


def flat_operator_matrix(spec, m=DEFAULT_GRID):
    """Finite-difference linearisation at the flat state: beta^{-1} D2 + D2 C_W"""
    _require_flat(spec)
    nodes, dx = make_grid(spec, m)
    column = np.zeros(m)
    column[0], column[1], column[-1] = -2.0, 1.0, 1.0
    second = linalg.circulant(column) / dx**2
    conv = linalg.circulant(spec.interaction.profile(nodes)) * dx
    return spec.temperature * second + second @ conv


def grid_spectrum_flat(spec, m=DEFAULT_GRID, k_max=4):
    """Eigenvalues of flat_operator_matrix, labelled by the dominant frequency of their eigenvector"""
    eigenvalues, vectors = linalg.eig(flat_operator_matrix(spec, m))
    magnitude = np.abs(sfft.fft(vectors, axis=0))
    # fold frequency -k onto k
    folded = magnitude[: m // 2 + 1].copy()
    folded[1: m // 2] += magnitude[m - 1: m // 2: -1]
    frequency = np.argmax(folded, axis=0)
    spectrum = {}
    for value, k in zip(eigenvalues.real, frequency):
        if 1 <= k <= k_max:
            spectrum[int(k)] = max(spectrum.get(int(k), -math.inf), float(value))
    return spectrum


def grid_leading_eigenvalue(spec, m=DEFAULT_GRID):
    """Grid counterpart of the k = 1 eigenvalue of linearized_spectrum_flat"""
    return grid_spectrum_flat(spec, m, k_max=1)[1]


# ==================== PROPERTIES A / B / C ====================
@dataclass
class PropertyReport:
    a: bool
    b: bool
    beta_sharp: float
    c_witness: GridDensity | None
    energies: list

    def summary(self):
        return {
            "A": self.a,
            "B": self.b,
            "beta_sharp": self.beta_sharp,
            "C_witness": self.c_witness is not None,
            "energies": self.energies,
        }


def check_properties(spec, k_max=potentials.DEFAULT_K_MAX, m=DEFAULT_GRID, seed=0):
    """
    A and B hold iff beta < beta_sharp (flat case). For C there is no
    decision procedure: search the multi-start steady states for a critical
    point whose energy exceeds the lowest one by more than ENERGY_GAP_TOL.
    """
    _require_flat(spec)
    threshold = potentials.beta_sharp(spec, k_max)
    stable = spec.beta < threshold
    states = critical_states(multistart_steady_states(spec, m, seed), spec)
    energies = [s.energy for s in states]
    witness = None
    if states:
        lowest = min(energies)
        top = max(states, key=lambda s: s.energy)
        if top.energy > lowest + ENERGY_GAP_TOL:
            witness = top.density
    logger.info(f"Properties at beta={spec.beta}: A=B={stable}, beta_sharp={threshold}, C-witness={'found' if witness is not None else 'none'}")
    return PropertyReport(stable, stable, threshold, witness, energies)


# ==================== PHASE SCAN ====================
@dataclass
class ScanRow:
    beta: float
    r: float
    energy_gap: float
    lambda1: float
    converged: bool

    def as_tuple(self):
        return (self.beta, self.r, self.energy_gap, self.lambda1, self.converged)


@dataclass
class PhaseScan:
    rows: list
    beta_c: float | None

    header = ("beta", "r", "energy_gap", "lambda1", "converged")

    def to_rows(self):
        return [row.as_tuple() for row in self.rows]


def _symmetric_state(spec, m, tol, max_iter):
    if spec.domain.periodic and spec.confining.family == "zero":
        return flat_density(spec, m)
    return find_steady_state(spec, gibbs_density(spec, m), tol=tol, max_iter=max_iter).density


def _perturbed_start(spec, m, amplitude):
    if spec.domain.periodic:
        return perturbed_flat(spec, m, amplitude)
    base = gibbs_density(spec, m)
    return base.with_values(base.values * (1.0 + amplitude * np.tanh(2.0 * base.nodes))).normalized()


def _scan_row(spec, amplitude, m, tol, max_iter, damping):
    symmetric = _symmetric_state(spec, m, tol, max_iter)
    candidates = [
        find_steady_state(spec, start, damping, tol, max_iter)
        for start in (_perturbed_start(spec, m, amplitude), concentrated_density(spec, m))
    ]
    converged = [c for c in candidates if c.converged]
    best = min(converged or candidates, key=lambda s: s.energy if s.converged else s.residual)
    gap = free_energy(symmetric, spec) - best.energy
    lambda1 = linearized_spectrum_flat(spec, 1)[1] if spec.is_flat_torus else math.nan
    return ScanRow(spec.beta, order_parameter(best.density), gap, lambda1, best.converged)


def scan_phase_transition(spec, betas, amplitude=0.1, m=DEFAULT_GRID, tol=DEFAULT_TOL,
                          max_iter=DEFAULT_MAX_ITER, damping=DEFAULT_DAMPING, workers=1):
    """
    Steady-state scan over inverse temperatures.

    Each row starts from the perturbed symmetric state and from a
    concentrated state and keeps the lowest-energy converged result. Rows
    are independent and run on ``workers`` threads; non-convergence is
    recorded in the row. The estimated beta_c is the first beta whose order
    parameter exceeds 10 * tol.
    """
    _require_1d(spec)
    models = [spec.with_beta(float(b)) for b in betas]
    run = lambda s: _scan_row(s, amplitude, m, tol, max_iter, damping)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(run, models))
    else:
        rows = [run(s) for s in models]
    beta_c = next((row.beta for row in rows if row.r > 10.0 * tol), None)
    for row in rows:
        if not row.converged:
            logger.warning(f"Phase scan row beta={row.beta} did not converge")
    logger.info(f"Phase scan over {len(rows)} temperatures: estimated beta_c = {beta_c}")
    return PhaseScan(rows, beta_c)
