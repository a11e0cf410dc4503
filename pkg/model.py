"""
Potential families for weakly interacting diffusions.

A ``PotentialSpec`` bundles the state space, the confining potential V, the
interaction potential W and the inverse temperature beta. Everything here is
immutable and the module-level operations are pure, so specs can be shared
between threads freely.

Fourier convention on the unit torus: W_hat(k) = int_0^1 W(x) e^{-2 pi i k x} dx.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np
from numpy.typing import NDArray
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from errors import ConfigError, DomainError, UnsupportedModelError
from store import read_table

logger = logging.getLogger(__name__)

DEFAULT_K_MAX = 64
H_STABILITY_TOL = 1e-12
LINE_TAIL = 1e-14
QUADRATURE_NODES = 1024
HESSIAN_TOL = 1e-6


class DomainKind(str, Enum):
    TORUS = "torus"
    LINE = "line"
    BOX = "box"


# ==================== DOMAIN ====================
@dataclass(frozen=True)
class Domain:
    """
    State space Omega.

    torus: [0, 1) with period 1 (1-D)
    line: the real line, truncated to [-half_width, half_width] on grids
    box: [-half_width, half_width]^dim with reflecting walls, dim <= 3
    """
    kind: DomainKind
    dim: int = 1
    half_width: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", DomainKind(self.kind))
        if self.kind in (DomainKind.TORUS, DomainKind.LINE) and self.dim != 1:
            raise ConfigError(f"{self.kind.value} domain is one-dimensional, got dim={self.dim}")
        if not 1 <= self.dim <= 3:
            raise ConfigError(f"Box dimension must be 1, 2 or 3, got {self.dim}")
        if self.kind == DomainKind.BOX and not (self.half_width and self.half_width > 0):
            raise ConfigError("Box domain needs a positive half_width")

    @classmethod
    def torus(cls):
        return cls(DomainKind.TORUS)

    @classmethod
    def line(cls, half_width=None):
        return cls(DomainKind.LINE, 1, half_width)

    @classmethod
    def box(cls, dim, half_width):
        return cls(DomainKind.BOX, dim, half_width)

    @property
    def periodic(self):
        return self.kind == DomainKind.TORUS

    @property
    def compact(self):
        return self.kind != DomainKind.LINE

    def check(self, points):
        """Raise DomainError unless every point lies in Omega"""
        if points.shape[-1] != self.dim:
            raise DomainError(f"Expected {self.dim}-dimensional points, got shape {points.shape}")
        if not np.all(np.isfinite(points)):
            raise DomainError("Point coordinates must be finite")
        if self.kind == DomainKind.BOX and np.any(np.abs(points) > self.half_width + 1e-12):
            raise DomainError(f"Point outside box [-{self.half_width}, {self.half_width}]^{self.dim}")

    def reduce(self, points):
        """Map coordinates back into Omega (wrap on the torus, fold in the box)"""
        if self.kind == DomainKind.TORUS:
            wrapped = np.mod(points, 1.0)
            return np.where(wrapped >= 1.0, 0.0, wrapped)
        if self.kind == DomainKind.BOX:
            return reflect_into_box(points, self.half_width)
        return points

    def difference(self, x, y):
        """x - y, taken as the minimum image on the torus"""
        r = x - y
        if self.kind == DomainKind.TORUS:
            r = r - np.round(r)
        return r


def reflect_into_box(points, half_width):
    """Fold coordinates into [-h, h] by repeated reflection at the walls"""
    width = 2.0 * half_width
    folded = np.mod(points + half_width, 2.0 * width)
    folded = np.where(folded > width, 2.0 * width - folded, folded)
    return folded - half_width


# ==================== TABULATED FUNCTIONS ====================
def _table_splines(x, values, periodic):
    """Value spline plus a spline of the centred differences of the table"""
    x = np.asarray(x, dtype=float)
    values = np.asarray(values, dtype=float)
    if x.ndim != 1 or x.shape != values.shape or x.size < 4:
        raise ConfigError("Tabulated potentials need at least 4 (x, value) rows")
    if np.any(np.diff(x) <= 0):
        raise ConfigError("Tabulated x values must be strictly increasing")
    if periodic:
        h = x[1] - x[0]
        slope = (np.roll(values, -1) - np.roll(values, 1)) / (2.0 * h)
        curvature = (np.roll(values, -1) - 2.0 * values + np.roll(values, 1)) / h**2
        xp = np.append(x, x[0] + 1.0)
        close = lambda a: np.append(a, a[0])
        return (
            CubicSpline(xp, close(values), bc_type="periodic"),
            CubicSpline(xp, close(slope), bc_type="periodic"),
            CubicSpline(xp, close(curvature), bc_type="periodic"),
        )
    slope = np.gradient(values, x, edge_order=2)
    curvature = np.gradient(slope, x, edge_order=2)
    return (
        CubicSpline(x, values, bc_type="clamped"),
        CubicSpline(x, slope, bc_type="clamped"),
        CubicSpline(x, curvature, bc_type="clamped"),
    )


def _eval_table(spline, x, lo, hi, periodic):
    if periodic:
        return spline(np.mod(x, 1.0))
    if np.any(x < lo - 1e-12) or np.any(x > hi + 1e-12):
        raise DomainError(f"Point outside tabulated range [{lo}, {hi}]")
    return spline(x)


# ==================== CONFINING POTENTIAL ====================
@dataclass(frozen=True, eq=False)
class Confining:
    """Confining potential V: zero | quadratic (a|x|^2/2) | double_well ((1-|x|^2)^2) | custom"""
    family: str = "zero"
    a: float = 1.0
    table_x: NDArray | None = None
    table_v: NDArray | None = None
    periodic: bool = False
    _splines: tuple | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.family not in ("zero", "quadratic", "double_well", "custom"):
            raise ConfigError(f"Unknown confining family '{self.family}'")
        if self.family == "custom":
            object.__setattr__(self, "_splines", _table_splines(self.table_x, self.table_v, self.periodic))

    @classmethod
    def custom(cls, x, values, periodic=False):
        return cls("custom", table_x=np.asarray(x, float), table_v=np.asarray(values, float), periodic=periodic)

    def _table(self, which, x):
        return _eval_table(self._splines[which], x[..., 0], self.table_x[0], self.table_x[-1], self.periodic)

    def value(self, x):
        if self.family == "zero":
            return np.zeros(x.shape[:-1])
        if self.family == "quadratic":
            return 0.5 * self.a * np.sum(x * x, axis=-1)
        if self.family == "double_well":
            return (1.0 - np.sum(x * x, axis=-1)) ** 2
        return self._table(0, x)

    def gradient(self, x):
        if self.family == "zero":
            return np.zeros_like(x)
        if self.family == "quadratic":
            return self.a * x
        if self.family == "double_well":
            return -4.0 * x * (1.0 - np.sum(x * x, axis=-1, keepdims=True))
        return self._table(1, x)[..., None]

    def hessian_lower_bound(self):
        if self.family == "zero":
            return 0.0
        if self.family == "quadratic":
            return float(self.a)
        if self.family == "double_well":
            # d^2/dx^2 (1-x^2)^2 = 12x^2 - 4
            return -4.0
        return float(np.min(self._splines[2](self.table_x)))


# ==================== INTERACTION POTENTIAL ====================
@dataclass(frozen=True, eq=False)
class Interaction:
    """
    Translation-invariant interaction W(x, y) = w(x - y).

    zero | quadratic (strength*|r|^2/2) | cosine_sum (sum_m c_m * (-cos 2 pi m r)) | custom
    """
    family: str = "zero"
    strength: float = 1.0
    coefficients: tuple = ()
    table_r: NDArray | None = None
    table_w: NDArray | None = None
    periodic: bool = False
    _splines: tuple | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.family not in ("zero", "quadratic", "cosine_sum", "custom"):
            raise ConfigError(f"Unknown interaction family '{self.family}'")
        object.__setattr__(self, "coefficients", tuple(float(c) for c in self.coefficients))
        if self.family == "custom":
            object.__setattr__(self, "_splines", _table_splines(self.table_r, self.table_w, self.periodic))

    @classmethod
    def cosine_sum(cls, *coefficients):
        return cls("cosine_sum", coefficients=coefficients)

    @classmethod
    def custom(cls, r, values, periodic=False):
        return cls("custom", table_r=np.asarray(r, float), table_w=np.asarray(values, float), periodic=periodic)

    @property
    def is_periodic(self):
        return self.family in ("zero", "cosine_sum") or (self.family == "custom" and self.periodic)

    def _modes(self):
        m = np.arange(1, len(self.coefficients) + 1, dtype=float)
        return m, np.asarray(self.coefficients)

    def _table(self, which, r):
        return _eval_table(self._splines[which], r, self.table_r[0], self.table_r[-1], self.periodic)

    def profile(self, r):
        """w(r) for scalar (1-D) differences r, or |r|-based for quadratic"""
        if self.family == "zero":
            return np.zeros(np.shape(r))
        if self.family == "quadratic":
            return 0.5 * self.strength * np.asarray(r) ** 2
        if self.family == "cosine_sum":
            m, c = self._modes()
            return -np.sum(c * np.cos(2.0 * np.pi * m * np.asarray(r)[..., None]), axis=-1)
        return self._table(0, np.asarray(r))

    def derivative(self, r):
        """w'(r), so that grad_1 W(x, y) = w'(x - y)"""
        if self.family == "zero":
            return np.zeros(np.shape(r))
        if self.family == "quadratic":
            return self.strength * np.asarray(r, dtype=float)
        if self.family == "cosine_sum":
            m, c = self._modes()
            return np.sum(c * 2.0 * np.pi * m * np.sin(2.0 * np.pi * m * np.asarray(r)[..., None]), axis=-1)
        return self._table(1, np.asarray(r))

    def second_derivative(self, r):
        if self.family == "zero":
            return np.zeros(np.shape(r))
        if self.family == "quadratic":
            return np.full(np.shape(r), float(self.strength))
        if self.family == "cosine_sum":
            m, c = self._modes()
            return np.sum(c * (2.0 * np.pi * m) ** 2 * np.cos(2.0 * np.pi * m * np.asarray(r)[..., None]), axis=-1)
        return self._table(2, np.asarray(r))

    def value(self, r):
        """W on vector differences r of shape (..., d)"""
        if self.family == "quadratic":
            return 0.5 * self.strength * np.sum(r * r, axis=-1)
        return self.profile(r[..., 0])

    def gradient(self, r):
        if self.family == "quadratic":
            return self.strength * r
        return self.derivative(r[..., 0])[..., None]

    def hessian_lower_bound(self, r_samples):
        # D^2 W(x, y) = w''(x - y) [[1, -1], [-1, 1]]: eigenvalues 0 and 2 w''
        if self.family == "zero":
            return 0.0
        if self.family == "quadratic":
            return min(0.0, 2.0 * float(self.strength))
        return min(0.0, 2.0 * float(np.min(self.second_derivative(r_samples))))


# ==================== POTENTIAL SPEC ====================
@dataclass(frozen=True, eq=False)
class PotentialSpec:
    """Domain, V, W and inverse temperature beta (beta=inf means zero noise)"""
    domain: Domain
    confining: Confining = field(default_factory=Confining)
    interaction: Interaction = field(default_factory=Interaction)
    beta: float = 1.0
    k_v: float | None = None
    k_w: float | None = None

    def __post_init__(self):
        beta = float(self.beta)
        if math.isnan(beta) or beta <= 0:
            raise ConfigError(f"beta must be strictly positive, got {self.beta}")
        object.__setattr__(self, "beta", beta)
        if self.interaction.family == "quadratic" and self.domain.periodic:
            raise ConfigError("Quadratic interaction is not periodic; use it on the line or in a box")
        if self.domain.dim > 1 and "custom" in (self.confining.family, self.interaction.family):
            raise ConfigError("Tabulated potentials are one-dimensional")
        if self.domain.dim > 1 and self.interaction.family == "cosine_sum":
            raise ConfigError("Cosine-sum interactions are one-dimensional")
        if self.k_v is None:
            object.__setattr__(self, "k_v", self.confining.hessian_lower_bound())
        if self.k_w is None:
            object.__setattr__(self, "k_w", self.interaction.hessian_lower_bound(_difference_samples(self)))

    @property
    def temperature(self):
        """beta^{-1}"""
        return 0.0 if math.isinf(self.beta) else 1.0 / self.beta

    @property
    def is_flat_torus(self):
        return self.domain.periodic and self.confining.family == "zero"

    def with_beta(self, beta):
        return replace(self, beta=beta, k_v=None, k_w=None)

    def truncation(self):
        """Half-width of the computational interval (line) or box"""
        if self.domain.kind == DomainKind.TORUS:
            return 0.5
        if self.domain.half_width is not None:
            return float(self.domain.half_width)
        return line_half_width(self)

    def describe(self):
        return {
            "domain": self.domain.kind.value,
            "dim": self.domain.dim,
            "confining": self.confining.family,
            "interaction": self.interaction.family,
            "beta": self.beta,
            "K_V": self.k_v,
            "K_W": self.k_w,
        }


def _difference_samples(spec, n=2048):
    if spec.domain.periodic:
        return np.linspace(-0.5, 0.5, n)
    if spec.interaction.family == "custom":
        return np.linspace(spec.interaction.table_r[0], spec.interaction.table_r[-1], n)
    return np.linspace(-2.0, 2.0, n)


# ==================== NAMED MODELS ====================
def kuramoto(beta, domain=None):
    """Noisy Kuramoto / mean-field XY model: torus, V=0, W=-cos(2 pi (x-y))"""
    return PotentialSpec(domain or Domain.torus(), Confining(), Interaction.cosine_sum(1.0), beta)


def bichromatic(beta):
    """W = -cos(2 pi r) - cos(4 pi r) on the torus; discontinuous transition"""
    return PotentialSpec(Domain.torus(), Confining(), Interaction.cosine_sum(1.0, 1.0), beta)


def desai_zwanzig(beta, strength=2.0, half_width=None):
    """Double-well confinement with quadratic interaction strength*|x-y|^2/2 on the line"""
    return PotentialSpec(Domain.line(half_width), Confining("double_well"), Interaction("quadratic", strength), beta)


# ==================== POINT OPERATIONS ====================
def _as_points(spec, x):
    x = np.asarray(x, dtype=float)
    if spec.domain.dim == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        return x[..., None], True
    return x, False


def confining_value(spec, x):
    points, squeeze = _as_points(spec, x)
    spec.domain.check(points)
    return spec.confining.value(points)


def interaction_value(spec, x, y):
    px, squeeze = _as_points(spec, x)
    py, _ = _as_points(spec, y)
    spec.domain.check(px)
    spec.domain.check(py)
    return spec.interaction.value(spec.domain.difference(px, py))


def grad_confining(spec, x):
    """
    Gradient of the confining potential at x.

    Raises:
        DomainError: x outside Omega (or outside a tabulated range)
    """
    points, squeeze = _as_points(spec, x)
    spec.domain.check(points)
    grad = spec.confining.gradient(points)
    return grad[..., 0] if squeeze else grad


def grad1_interaction(spec, x, y):
    """Gradient of W(x, y) in its first slot"""
    px, squeeze = _as_points(spec, x)
    py, _ = _as_points(spec, y)
    spec.domain.check(px)
    spec.domain.check(py)
    grad = spec.interaction.gradient(spec.domain.difference(px, py))
    return grad[..., 0] if squeeze else grad


# ==================== FOURIER DATA ====================
def _require_periodic(spec):
    if not spec.domain.periodic:
        raise UnsupportedModelError("Fourier coefficients are defined on the torus only")
    if not spec.interaction.is_periodic:
        raise UnsupportedModelError(f"Interaction '{spec.interaction.family}' is not a periodic function of x - y")


def fourier_coefficients(spec, k_max=DEFAULT_K_MAX):
    """
    Fourier coefficients W_hat(k) for |k| <= k_max.

    Analytic for cosine sums (W_hat(+-m) = -c_m / 2); periodic trapezoidal
    quadrature on QUADRATURE_NODES nodes for tabulated interactions.

    Returns:
        dict k -> float, symmetric in k
    """
    _require_periodic(spec)
    k_max = int(k_max)
    if k_max < 1:
        raise ConfigError("k_max must be a positive integer")
    w = spec.interaction
    coefficients = {k: 0.0 for k in range(-k_max, k_max + 1)}
    if w.family == "cosine_sum":
        for m, c in enumerate(w.coefficients, start=1):
            if m <= k_max:
                coefficients[m] = coefficients[-m] = -0.5 * c
    elif w.family == "custom":
        n = max(QUADRATURE_NODES, 4 * k_max)
        nodes = np.arange(n) / n
        spectrum = np.fft.fft(w.profile(nodes)) / n
        for k in range(0, k_max + 1):
            coefficients[k] = coefficients[-k] = float(spectrum[k].real)
    return coefficients


def beta_sharp(spec, k_max=DEFAULT_K_MAX):
    """
    Spectral threshold at which the flat state loses linear stability:
    1 / (-min_{k != 0} W_hat(k)), or +inf when no mode is negative.
    """
    coefficients = fourier_coefficients(spec, k_max)
    lowest = min(value for k, value in coefficients.items() if k != 0)
    if lowest >= 0:
        return math.inf
    return 1.0 / (-lowest)


def is_h_stable(spec, k_max=DEFAULT_K_MAX):
    coefficients = fourier_coefficients(spec, k_max)
    return all(value >= -H_STABILITY_TOL for k, value in coefficients.items() if k != 0)


def reconstruct_interaction(coefficients, r):
    """Inverse Fourier sum of W_hat on points r"""
    r = np.asarray(r, dtype=float)
    total = np.zeros_like(r, dtype=complex)
    for k, value in coefficients.items():
        total += value * np.exp(2j * np.pi * k * r)
    return total.real


# ==================== SIZES AND NORMS ====================
def line_half_width(spec):
    """
    Smallest L with exp(-beta (V(L) - min V)) < LINE_TAIL on both sides.

    Raises:
        UnsupportedModelError: V does not grow (no finite truncation exists)
    """
    if spec.domain.kind != DomainKind.LINE:
        raise UnsupportedModelError("Truncation width is only defined on the line")
    if spec.domain.half_width is not None:
        return float(spec.domain.half_width)
    beta = min(spec.beta, 1e6)
    target = math.log(1.0 / LINE_TAIL) / beta
    v = spec.confining
    if v.family == "custom":
        lo, hi = float(v.table_x[0]), float(v.table_x[-1])
        grid = np.linspace(lo, hi, 4096)
        values = v.value(grid[:, None])
        v_min = values.min()
        outside = np.abs(grid)[values - v_min > target]
        return float(outside.min()) if outside.size else max(abs(lo), abs(hi))
    if v.family == "zero":
        raise UnsupportedModelError("V = 0 on the line has no finite truncation; set half_width explicitly")
    core = np.linspace(-4.0, 4.0, 801)
    v_min = float(v.value(core[:, None]).min())
    widths = []
    for sign in (1.0, -1.0):
        f = lambda L: float(v.value(np.array([[sign * L]]))[0]) - v_min - target
        upper = 1.0
        while f(upper) < 0:
            upper *= 2.0
            if upper > 1e8:
                raise UnsupportedModelError("Confining potential grows too slowly for truncation")
        widths.append(brentq(f, 0.0, upper) if f(0.0) < 0 else 0.0)
    return max(widths)


def sample_domain(spec, n=1024):
    """Sample points covering Omega (grid for compact / truncated domains)"""
    if spec.domain.periodic:
        return (np.arange(n) / n)[:, None]
    h = spec.truncation()
    if spec.domain.dim == 1:
        return np.linspace(-h, h, n)[:, None]
    per_axis = max(8, int(round(n ** (1.0 / spec.domain.dim))))
    axes = [np.linspace(-h, h, per_axis)] * spec.domain.dim
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, spec.domain.dim)


def interaction_profile(spec, r):
    """(w, w', w'') on 1-D differences r"""
    w = spec.interaction
    return w.profile(r), w.derivative(r), w.second_derivative(r)


def cross_hessian_bound(spec, n=2048):
    """||D^2_xy W||_inf; for W(x, y) = w(x - y) this is sup |w''|"""
    return sup_norms(spec, n)["D2W"]


def sup_norms(spec, n=2048):
    """
    Grid estimates of ||W||_inf, ||V||_inf and ||D^2_xy W||_inf.

    On the line the supremum is taken over the truncated interval only.
    """
    points = sample_domain(spec, n)
    v_norm = float(np.max(np.abs(spec.confining.value(points))))
    if spec.domain.periodic:
        r = np.linspace(-0.5, 0.5, n)
    else:
        reach = 2.0 * spec.truncation() * math.sqrt(spec.domain.dim)
        r = np.linspace(-reach, reach, n)
    w = spec.interaction
    if w.family == "custom" and not w.periodic:
        r = r[(r >= w.table_r[0]) & (r <= w.table_r[-1])]
    w_norm = float(np.max(np.abs(w.profile(r))))
    cross = float(np.max(np.abs(w.second_derivative(r))))
    return {"W": w_norm, "V": v_norm, "D2W": cross}


# ==================== ASSUMPTION CHECKS ====================
def check_assumptions(spec, n_samples=1000, seed=0):
    """
    Check the standing assumptions on sampled points.

    Returns:
        list of (level, message) tuples; level is "warning" or "error"
    """
    findings = []
    rng = np.random.default_rng(seed)
    points = sample_domain(spec, 1024)
    lo, hi = points.min(axis=0), points.max(axis=0)
    x = rng.uniform(lo, hi, size=(n_samples, spec.domain.dim))
    y = rng.uniform(lo, hi, size=(n_samples, spec.domain.dim))
    w = spec.interaction
    try:
        wxy = w.value(spec.domain.difference(x, y))
        wyx = w.value(spec.domain.difference(y, x))
        asymmetry = float(np.max(np.abs(wxy - wyx)))
        if asymmetry > 1e-12:
            findings.append(("error", f"W is not symmetric: max |W(x,y)-W(y,x)| = {asymmetry:.3e}"))
        # a constant diagonal (W(0) = -sum c_m for cosine sums) only shifts H_N
        diagonal = w.value(spec.domain.difference(x, x))
        spread = float(np.ptp(diagonal))
        if spread > 1e-12:
            findings.append(("error", f"W(x,x) is not constant: spread {spread:.3e}"))
    except DomainError as e:
        findings.append(("error", f"W table does not cover the sampled differences: {e}"))
        return findings

    values = spec.confining.value(points)
    if not np.all(np.isfinite(values)):
        findings.append(("error", "V is not finite on the sampled domain"))
    if spec.domain.dim == 1:
        h = points[1, 0] - points[0, 0]
        second = np.diff(values, 2) / h**2
        if second.size and second.min() < spec.k_v - HESSIAN_TOL - 10 * h**2 * max(1.0, abs(spec.k_v)):
            findings.append(("warning", f"V violates K_V={spec.k_v:g}-convexity on the grid (min V''={second.min():.4g})"))
    r = _difference_samples(spec)
    hr = r[1] - r[0]
    w_second = np.diff(w.profile(r), 2) / hr**2
    if w_second.size and min(0.0, 2.0 * w_second.min()) < spec.k_w - HESSIAN_TOL - 10 * hr**2 * max(1.0, abs(spec.k_w)):
        findings.append(("warning", f"W violates K_W={spec.k_w:g}-convexity on the grid (min 2w''={2 * w_second.min():.4g})"))

    # Doubling-type growth bound |grad_1 W| <= C (1 + |W| + V(x) + V(y)):
    # only checkable as "the sampled ratio does not blow up towards the edge"
    if not spec.domain.compact and spec.domain.dim == 1:
        v_shift = spec.confining.value(x) - values.min() + spec.confining.value(y) - values.min()
        ratio = np.abs(w.gradient(x - y)[..., 0]) / (1.0 + np.abs(wxy) + v_shift)
        inner = np.abs(x[:, 0]) < 0.5 * hi[0]
        if inner.any() and (~inner).any() and ratio[~inner].max() > 10.0 * max(ratio[inner].max(), 1e-12):
            findings.append(("warning", "Growth bound on grad_1 W looks violated towards the edge of the sampled domain"))
    for level, message in findings:
        logger.warning(f"Assumption check [{level}]: {message}")
    return findings


# ==================== CONFIG ====================
MODEL_KEYS = {"domain", "confining", "interaction", "beta", "k_v", "k_w"}
REQUIRED_MODEL_KEYS = ["domain", "confining", "interaction", "beta"]
BLOCK_KEYS = {
    "domain": {"kind", "dim", "half_width"},
    "confining": {"family", "a", "table", "periodic"},
    "interaction": {"family", "strength", "coefficients", "table", "periodic"},
}


def _block(value, name):
    """Sub-blocks may be given as a bare family/kind string"""
    if isinstance(value, str):
        return {"kind" if name == "domain" else "family": value}
    if not isinstance(value, dict):
        raise ConfigError(f"model.{name} must be a string or an object")
    unknown = sorted(set(value) - BLOCK_KEYS[name])
    if unknown:
        raise ConfigError(f"model.{name}: unknown keys {', '.join(unknown)}")
    return value


def _is_real(value):
    return isinstance(value, (int, float)) and not isinstance(value, bool) and math.isfinite(value)


def _number(block, key, name, default):
    """Finite number from a config block as float; ``default`` when the key is absent"""
    if key not in block:
        return default
    value = block[key]
    if not _is_real(value):
        path = f"model.{name}.{key}" if name else f"model.{key}"
        raise ConfigError(f"{path} must be a number, got {value!r}")
    return float(value)


def parse_beta(value):
    if isinstance(value, str) and value.lower() in ("inf", "infinity"):
        return math.inf
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"model.beta must be a number or \"inf\", got {value!r}")
    return float(value)


def from_config(block, base_dir="."):
    """
    Build a PotentialSpec from the ``model`` block of an experiment config.

    Custom potentials name a two-column CSV (x, value) relative to base_dir.
    """
    if not isinstance(block, dict):
        raise ConfigError("model must be an object")
    missing = [key for key in REQUIRED_MODEL_KEYS if key not in block]
    if missing:
        raise ConfigError(f"model: missing required keys {', '.join('model.' + k for k in missing)}")
    unknown = sorted(set(block) - MODEL_KEYS)
    if unknown:
        raise ConfigError(f"model: unknown keys {', '.join(unknown)}")

    d = _block(block["domain"], "domain")
    kind = d.get("kind")
    if not isinstance(kind, str) or kind not in {k.value for k in DomainKind}:
        raise ConfigError(f"model.domain.kind must be torus, line or box, got {kind!r}")
    dim = d.get("dim", 1)
    if isinstance(dim, bool) or not isinstance(dim, int):
        raise ConfigError(f"model.domain.dim must be an integer, got {dim!r}")
    domain = Domain(DomainKind(kind), dim, _number(d, "half_width", "domain", None))

    def table(sub, name):
        if not isinstance(sub.get("table"), str):
            raise ConfigError(f"model.{name}: custom family needs a 'table' CSV path")
        return read_table(Path(base_dir) / sub["table"])

    v = _block(block["confining"], "confining")
    if v.get("family") == "custom":
        confining = Confining.custom(*table(v, "confining"), periodic=bool(v.get("periodic", domain.periodic)))
    else:
        confining = Confining(v.get("family", "zero"), _number(v, "a", "confining", 1.0))

    w = _block(block["interaction"], "interaction")
    family = w.get("family", "zero")
    if family == "custom":
        interaction = Interaction.custom(*table(w, "interaction"), periodic=bool(w.get("periodic", domain.periodic)))
    elif family == "cosine_sum":
        coefficients = w.get("coefficients", [1.0])
        if not isinstance(coefficients, list) or not coefficients or not all(_is_real(c) for c in coefficients):
            raise ConfigError(f"model.interaction.coefficients must be a nonempty list of numbers, got {coefficients!r}")
        interaction = Interaction.cosine_sum(*(float(c) for c in coefficients))
    else:
        interaction = Interaction(family, _number(w, "strength", "interaction", 1.0))

    return PotentialSpec(domain, confining, interaction, parse_beta(block["beta"]),
                         _number(block, "k_v", None, None), _number(block, "k_w", None, None))
