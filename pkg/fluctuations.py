"""
Equilibrium fluctuations on the flat torus.

The fluctuation field eta^N = sqrt(N) (mu^N - rho_beta) is tracked through
its Fourier modes k = 1..k_max. Below the transition its stationary law is
Gaussian with per-mode weight 1 / (8 pi^2 (beta^{-1} + W_hat(k))); the
limiting SPDE is simulated mode by mode as an Ornstein-Uhlenbeck process.

Normalisations: a stationary particle run has E|eta_hat(k)|^2 =
beta^{-1} / (beta^{-1} + W_hat(k)) (equal to 1 for i.i.d. particles), while
the SPDE with noise intensity 2 pi |k| and unit complex increments has
E|h_hat(k)|^2 = 1 / (2 (beta^{-1} + W_hat(k))). Both are proportional to the
theoretical weights, so comparisons are made as ratios across modes.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy import fft as sfft
from scipy import signal

import meanfield
import model as potentials
from errors import CoercivityError, InsufficientDataError, PreconditionError, UnsupportedModelError
from metrics import fit_loglog_slope, hminus_s_norm
from particle import sample_gibbs, step_euler_maruyama
from rng_utils import stream

logger = logging.getLogger(__name__)

DEFAULT_K_MAX = 16
MIN_TAU_MULTIPLE = 20
BATCH_TAU_MULTIPLE = 10
WINDOW_FACTOR = 5.0


# ==================== FIELDS ====================
@dataclass
class FluctuationField:
    """Modes k = 1..k_max of a real field; negative modes follow by conjugation"""
    coefficients: NDArray
    n: int
    time: float = 0.0

    @property
    def k_max(self):
        return self.coefficients.size

    def mode(self, k):
        if k == 0:
            return 0.0
        value = self.coefficients[abs(k) - 1]
        return value if k > 0 else np.conj(value)

    def as_dict(self):
        """Symmetric map k -> coefficient for 1 <= |k| <= k_max"""
        out = {}
        for k, value in enumerate(self.coefficients, start=1):
            out[k] = complex(value)
            out[-k] = complex(np.conj(value))
        return out


def _require_torus(spec):
    if not spec.domain.periodic:
        raise UnsupportedModelError("Fluctuation fields are defined on the torus")


def empirical_modes(positions, k_max):
    """(1/N) sum_j e^{-2 pi i k x_j} for k = 1..k_max, batched over leading axes of (..., N)"""
    k = np.arange(1, k_max + 1)
    return np.exp(-2j * np.pi * positions[..., None] * k).mean(axis=-2)


def compute_fluctuation_field(ens, rho_beta, k_max=DEFAULT_K_MAX):
    """eta_hat(k) = sqrt(N) ((1/N) sum_j e^{-2 pi i k X_j} - rho_hat(k))"""
    _require_torus(ens.model)
    reference = rho_beta.fourier_modes(k_max)[1:]
    n = ens.n_particles
    values = math.sqrt(n) * (empirical_modes(ens.positions[:, 0], k_max) - reference)
    return FluctuationField(values, n, ens.time)


# ==================== THEORY ====================
def _coercive_coefficients(spec, k_max):
    _require_torus(spec)
    if not spec.is_flat_torus:
        raise UnsupportedModelError("Explicit fluctuation theory is for the flat state (V = 0)")
    threshold = potentials.beta_sharp(spec, max(k_max, 1))
    if spec.beta >= threshold:
        raise CoercivityError(f"beta={spec.beta} >= beta_sharp={threshold}: beta^{{-1}} + W_hat(k) is not positive for every k")
    return potentials.fourier_coefficients(spec, k_max)


def stationary_covariance_theory(spec, k_max=DEFAULT_K_MAX):
    """c(k) = 1 / (8 pi^2 (beta^{-1} + W_hat(k))) for k = 1..k_max"""
    w_hat = _coercive_coefficients(spec, k_max)
    return {k: 1.0 / (8.0 * np.pi**2 * (spec.temperature + w_hat[k])) for k in range(1, k_max + 1)}


def normalized_mode_variance(spec, k_max=DEFAULT_K_MAX):
    """E|eta_hat(k)|^2 for the particle field: beta^{-1} / (beta^{-1} + W_hat(k))"""
    w_hat = _coercive_coefficients(spec, k_max)
    return {k: spec.temperature / (spec.temperature + w_hat[k]) for k in range(1, k_max + 1)}


# ==================== TIME SERIES ====================
@dataclass
class FluctuationSeries:
    times: NDArray
    values: NDArray  # (len(times), k_max) complex
    n: int | None = None

    @property
    def k_max(self):
        return self.values.shape[1]

    def field(self, i):
        return FluctuationField(self.values[i], self.n or 0, float(self.times[i]))

    def to_rows(self):
        """time, then real and imaginary part of every mode"""
        rows = []
        for t, modes in zip(self.times, self.values):
            row = [float(t)]
            for v in modes:
                row.extend((float(v.real), float(v.imag)))
            rows.append(row)
        return rows

    def header(self):
        names = ["time"]
        for k in range(1, self.k_max + 1):
            names.extend((f"re_{k}", f"im_{k}"))
        return names


def integrated_autocorrelation_time(x, c=WINDOW_FACTOR):
    """
    Integrated autocorrelation time (in samples) with automatic windowing:
    tau(W) = 1 + 2 sum_{t=1}^{W} acf(t), W the first lag with W >= c tau(W).
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 4:
        raise InsufficientDataError("Need at least 4 samples for an autocorrelation time")
    centred = x - x.mean()
    size = sfft.next_fast_len(2 * n)
    spectrum = sfft.rfft(centred, size)
    acf = sfft.irfft(spectrum * np.conj(spectrum), size)[:n]
    if acf[0] <= 0:
        return 1.0
    acf = acf / acf[0]
    taus = 2.0 * np.cumsum(acf) - 1.0
    window = np.arange(n) >= c * taus
    lag = int(np.argmax(window)) if window.any() else n - 1
    return max(1.0, float(taus[lag]))


@dataclass
class ModeStatistics:
    mean: complex
    variance: float
    stderr: float
    tau: float
    lag: float = 0.0


def _lag_samples(series, lag):
    if lag < 0:
        raise PreconditionError(f"lag must be nonnegative, got {lag}")
    if lag == 0:
        return 0
    if len(series.times) < 2:
        raise InsufficientDataError("A lagged covariance needs at least two recorded times")
    return int(round(lag / (series.times[1] - series.times[0])))


def empirical_mode_covariance(series, k_max=None, lag=0.0):
    """
    Time-averaged mean and covariance Re E[(h(t) - m) conj(h(t + lag) - m)]
    per mode (the variance E|h - m|^2 at lag 0), with batch-means standard
    errors (batches of at least 10 autocorrelation times). The lag is rounded
    to a whole number of recorded intervals.

    Raises:
        InsufficientDataError: fewer than 20 autocorrelation times recorded
    """
    k_max = k_max or series.k_max
    shift = _lag_samples(series, lag)
    stats = {}
    for k in range(1, k_max + 1):
        x = series.values[:, k - 1]
        tau = max(integrated_autocorrelation_time(x.real), integrated_autocorrelation_time(x.imag))
        if x.size - shift < MIN_TAU_MULTIPLE * tau:
            raise InsufficientDataError(f"Mode {k}: {x.size - shift} lagged samples is fewer than {MIN_TAU_MULTIPLE} autocorrelation times ({tau:.1f})")
        mean = complex(x.mean())
        centred = x - mean
        product = (centred[: x.size - shift] * np.conj(centred[shift:])).real
        batch = int(math.ceil(BATCH_TAU_MULTIPLE * tau))
        n_batches = product.size // batch
        if n_batches < 2:
            raise InsufficientDataError(f"Mode {k}: too few batches of length {batch}")
        means = product[: n_batches * batch].reshape(n_batches, batch).mean(axis=1)
        stats[k] = ModeStatistics(mean, float(product.mean()), float(means.std(ddof=1) / math.sqrt(n_batches)), tau,
                                  shift * float(series.times[1] - series.times[0]) if shift else 0.0)
    return stats


def covariance_comparison(stats, theory):
    """Rows (k, empirical_var, stderr, theory_weight, ratio) for the modes in both maps"""
    return [
        (k, s.variance, s.stderr, theory[k], s.variance / theory[k])
        for k, s in sorted(stats.items())
        if k in theory
    ]


def stationary_particle_run(spec, n, dt, n_steps, k_max=DEFAULT_K_MAX, seed=0, record_every=1,
                            step=0.05, burn_in=500, rho_beta=None):
    """
    Euler-Maruyama run started from a MALA sample of the Gibbs measure,
    recording the fluctuation field every ``record_every`` steps.
    """
    _require_torus(spec)
    rho_beta = rho_beta if rho_beta is not None else meanfield.flat_density(spec)
    ens = sample_gibbs(spec, n, 1, "MALA", step, burn_in, seed).ensembles(seed)[0]
    times, values = [], []
    for i in range(n_steps + 1):
        if i % record_every == 0:
            field = compute_fluctuation_field(ens, rho_beta, k_max)
            times.append(field.time)
            values.append(field.coefficients)
        if i < n_steps:
            ens = step_euler_maruyama(ens, dt)
    return FluctuationSeries(np.asarray(times), np.asarray(values), n)


# ==================== SPDE ====================
def simulate_spde(spec, k_max=DEFAULT_K_MAX, dt=1e-3, t_end=1.0, seed=0, noise=True, init=None, record_every=1):
    """
    Spectral Galerkin simulation of the limiting fluctuation SPDE.

    Each mode follows dh = lambda_k h dt + 2 pi |k| d xi_k with the exact
    Ornstein-Uhlenbeck transition, run as an AR(1) filter over the whole
    horizon; xi_k are independent complex Brownian motions with
    E|xi_k(t)|^2 = t. Without ``init`` the modes start from their stationary
    law (or from 0 when noise is off).
    """
    _coercive_coefficients(spec, k_max)
    spectrum = meanfield.linearized_spectrum_flat(spec, k_max)
    lam = np.array([spectrum[k] for k in range(1, k_max + 1)])
    sigma = 2.0 * np.pi * np.arange(1, k_max + 1)
    decay = np.exp(lam * dt)
    spread = sigma * np.sqrt(-np.expm1(2.0 * lam * dt) / (-2.0 * lam))
    stationary = sigma / np.sqrt(-2.0 * lam)
    n_steps = int(round(t_end / dt))
    recorded = np.arange(0, n_steps + 1, record_every)
    if recorded[-1] != n_steps:
        recorded = np.append(recorded, n_steps)
    values = np.empty((recorded.size, k_max), dtype=complex)

    def complex_normal(rng, size=None):
        return (rng.standard_normal(size) + 1j * rng.standard_normal(size)) / math.sqrt(2.0)

    for j, k in enumerate(range(1, k_max + 1)):
        rng = stream(seed, "spde", k)
        if init is not None:
            h0 = complex(np.asarray(init, dtype=complex)[j])
        elif noise:
            h0 = complex(stationary[j] * complex_normal(rng))
        else:
            h0 = 0j
        if noise:
            increments = spread[j] * complex_normal(rng, n_steps)
        else:
            increments = np.zeros(n_steps, dtype=complex)
        # h_i = decay h_{i-1} + increment_i, started from h_0
        path = signal.lfilter([1.0], [1.0, -decay[j]], increments, zi=[decay[j] * h0])[0]
        path = np.concatenate(([h0], path))
        values[:, j] = path[recorded]
    return FluctuationSeries(recorded * dt, values)


def spde_stationary_variance(spec, k_max=DEFAULT_K_MAX):
    """sigma_k^2 / (2 |lambda_k|) = 1 / (2 (beta^{-1} + W_hat(k)))"""
    _coercive_coefficients(spec, k_max)
    spectrum = meanfield.linearized_spectrum_flat(spec, k_max)
    return {k: (2.0 * np.pi * k) ** 2 / (-2.0 * spectrum[k]) for k in range(1, k_max + 1)}


# ==================== LAW OF LARGE NUMBERS ====================
def iid_lln_expectation(n, s, k_max):
    """E||mu^N - Lebesgue||^2_{H^{-s}} for N i.i.d. uniform points, modes |k| <= k_max"""
    k = np.arange(1, k_max + 1)
    return float(2.0 * np.sum((1.0 + 4.0 * np.pi**2 * k * k) ** (-s)) / n)


@dataclass
class LlnResult:
    rows: list  # (N, mean, stderr)
    slope: float

    header = ("N", "mean_sq_norm", "stderr")


def lln_decay_experiment(spec, n_values, s=2.0, replicas=20, seed=0, k_max=64, step=0.05, burn_in=500, rho_beta=None):
    """
    E||mu^N - rho_beta||^2_{H^{-s}} over N from independent MALA chains, and
    its fitted log-log slope.

    Raises:
        MixingFailureError: a sampler stops accepting moves
    """
    _require_torus(spec)
    if replicas < 2:
        raise PreconditionError("Need at least 2 replicas for a standard error")
    if s <= 1.5:
        logger.warning(f"s={s} is not above d/2 + 1; the C/N rate is not guaranteed")
    rho_beta = rho_beta if rho_beta is not None else meanfield.flat_density(spec)
    reference = rho_beta.fourier_modes(k_max)[1:]
    rows = []
    for n in n_values:
        samples = sample_gibbs(spec, n, replicas, "MALA", step, burn_in, seed, n_chains=replicas, strict=True)
        norms = []
        for x in samples.positions:
            field = FluctuationField(empirical_modes(x[:, 0], k_max) - reference, n)
            norms.append(hminus_s_norm(field.as_dict(), s) ** 2)
        norms = np.asarray(norms)
        rows.append((n, float(norms.mean()), float(norms.std(ddof=1) / math.sqrt(norms.size))))
        logger.info(f"LLN N={n}: mean squared H^-{s} norm {rows[-1][1]:.4e} +- {rows[-1][2]:.1e}")
    slope = fit_loglog_slope([r[0] for r in rows], [r[1] for r in rows])
    return LlnResult(rows, slope)
