"""Bloch-vector Liouvillian of a driven, measured, noisy two-level system.

The averaged dynamics is ``ds/dt = L s`` with ``L = L0(omega, alpha) +
Lgamma(gamma)``.  This module builds ``L``, propagates Bloch vectors (matrix
exponential and an RK4 reference integrator), and evaluates the closed-form
survival probabilities and their short-time Taylor coefficients.

All rates share the unit of ``omega``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np

from .errors import (
    NonConvergent,
    NonFiniteEntry,
    NotPositiveSemidefinite,
    StepTooLarge,
    ValidationError,
    VariantMismatch,
)

Variant = Literal["noiseless", "diagonal", "full"]
VARIANTS = ("noiseless", "diagonal", "full")

PSD_RTOL = 1e-12
EXC_RTOL = 1e-9
KAPPA_MAX = 1e8
ODE_DT = 1e-4
NORM_TOL = 1e-8
GAP_RTOL = 1e-6

INITIAL_STATE = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class NoiseCovariance:
    """Upper triangle of the white-noise covariance ``gamma_ij`` (i, j in x, y, z)."""

    g11: float = 0.0
    g22: float = 0.0
    g33: float = 0.0
    g12: float = 0.0
    g13: float = 0.0
    g23: float = 0.0

    @classmethod
    def zeros(cls) -> NoiseCovariance:
        return cls()

    @classmethod
    def diagonal(cls, g11=0.0, g22=0.0, g33=0.0) -> NoiseCovariance:
        return cls(g11=g11, g22=g22, g33=g33)

    @classmethod
    def from_matrix(cls, m) -> NoiseCovariance:
        """Build from a 3x3 array; only the upper triangle is read."""
        m = np.asarray(m, dtype=float)
        if m.shape != (3, 3):
            raise ValidationError(f"expected a 3x3 matrix, got shape {m.shape}")
        return cls(m[0, 0], m[1, 1], m[2, 2], m[0, 1], m[0, 2], m[1, 2])

    def matrix(self) -> np.ndarray:
        return np.array(
            [
                [self.g11, self.g12, self.g13],
                [self.g12, self.g22, self.g23],
                [self.g13, self.g23, self.g33],
            ],
            dtype=float,
        )

    def entries(self) -> dict:
        return {k: float(getattr(self, k)) for k in ("g11", "g22", "g33", "g12", "g13", "g23")}

    def scaled(self, factor: float) -> NoiseCovariance:
        return NoiseCovariance(**{k: v * factor for k, v in self.entries().items()})

    @property
    def is_zero(self) -> bool:
        return not any(self.entries().values())

    @property
    def is_diagonal(self) -> bool:
        return self.g12 == 0.0 and self.g13 == 0.0 and self.g23 == 0.0

    @property
    def x_decoupled(self) -> bool:
        """True when the x-axis noise is uncorrelated with y and z."""
        return self.g12 == 0.0 and self.g13 == 0.0


def validate_noise_covariance(gamma: NoiseCovariance) -> NoiseCovariance:
    """Check that ``gamma`` is finite and positive semidefinite.

    The PSD slack is ``1e-12`` times the largest diagonal entry.  Returns
    ``gamma`` unchanged on success.
    """
    m = gamma.matrix()
    if not np.all(np.isfinite(m)):
        bad = [k for k, v in gamma.entries().items() if not math.isfinite(v)]
        raise NonFiniteEntry(f"non-finite noise covariance entries: {', '.join(bad)}")
    diag = np.diag(m)
    if np.any(diag < 0.0):
        raise NotPositiveSemidefinite(diag.min(), 0.0)
    tol = PSD_RTOL * diag.max()
    lmin = np.linalg.eigvalsh(m)[0]
    if lmin < -tol:
        raise NotPositiveSemidefinite(lmin, tol)
    return gamma


@dataclass(frozen=True)
class ModelParams:
    """Rabi frequency, measurement strength and noise covariance."""

    omega: float
    alpha: float
    gamma: NoiseCovariance = field(default_factory=NoiseCovariance)

    def __post_init__(self):
        for name in ("omega", "alpha"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise NonFiniteEntry(f"{name} must be finite, got {v!r}")
            if v < 0.0:
                raise ValidationError(f"{name} must be non-negative, got {v!r}")
        validate_noise_covariance(self.gamma)

    def with_alpha(self, alpha: float) -> ModelParams:
        return replace(self, alpha=alpha)

    def restricted(self, variant: Variant) -> ModelParams:
        """Drop the noise components a closed-form variant does not model."""
        g = self.gamma
        if variant == "noiseless":
            return replace(self, gamma=NoiseCovariance())
        if variant == "diagonal":
            return replace(self, gamma=NoiseCovariance.diagonal(g.g11, g.g22, g.g33))
        if variant == "full":
            return replace(self, gamma=replace(g, g12=0.0, g13=0.0))
        raise ValueError(f"unknown variant {variant!r}")

    @property
    def alpha_dn(self) -> float:
        """Measurement strength renormalized by the y and z noise."""
        return self.alpha - 4.0 * (self.gamma.g22 - self.gamma.g33)


def check_variant(p: ModelParams, variant: Variant) -> None:
    """Raise VariantMismatch unless ``p`` lies in the exact regime of ``variant``."""
    g = p.gamma
    if variant == "noiseless":
        if not g.is_zero:
            raise VariantMismatch("noiseless variant requires gamma = 0")
    elif variant == "diagonal":
        if not g.is_diagonal:
            raise VariantMismatch("diagonal variant requires g12 = g13 = g23 = 0")
    elif variant == "full":
        if not g.x_decoupled:
            raise VariantMismatch("full closed form is exact only for g12 = g13 = 0")
    else:
        raise VariantMismatch(f"unknown variant {variant!r}")


@dataclass(frozen=True)
class Liouvillian:
    """Real 3x3 generator split into its noiseless and noise parts."""

    l0: np.ndarray
    lgamma: np.ndarray
    omega: float = 1.0

    @property
    def m(self) -> np.ndarray:
        return self.l0 + self.lgamma

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.m, 2))


def noiseless_part(omega: float, alpha: float) -> np.ndarray:
    return np.array(
        [
            [-alpha / 2.0, 0.0, 0.0],
            [0.0, -alpha / 2.0, -2.0 * omega],
            [0.0, 2.0 * omega, 0.0],
        ]
    )


def noise_part(gamma: NoiseCovariance) -> np.ndarray:
    g = gamma
    return 2.0 * np.array(
        [
            [-(g.g22 + g.g33), g.g12, g.g13],
            [g.g12, -(g.g11 + g.g33), g.g23],
            [g.g13, g.g23, -(g.g11 + g.g22)],
        ]
    )


def build_liouvillian(p: ModelParams) -> Liouvillian:
    return Liouvillian(noiseless_part(p.omega, p.alpha), noise_part(p.gamma), p.omega)


def _as_matrix(L) -> np.ndarray:
    return L.m if isinstance(L, Liouvillian) else np.asarray(L, dtype=float)


def expm_series(a: np.ndarray, tol: float = 1e-17, max_terms: int = 40) -> np.ndarray:
    """Matrix exponential by Taylor series with scaling and squaring."""
    norm = np.linalg.norm(a, 1)
    squarings = max(0, int(math.ceil(math.log2(norm / 0.5)))) if norm > 0.5 else 0
    b = a / 2.0**squarings
    result = np.eye(a.shape[0])
    term = np.eye(a.shape[0])
    for k in range(1, max_terms + 1):
        term = term @ b / k
        result = result + term
        if np.linalg.norm(term, 1) <= tol * np.linalg.norm(result, 1):
            break
    else:
        raise NonConvergent(f"Taylor series did not converge in {max_terms} terms")
    for _ in range(squarings):
        result = result @ result
    return result


def near_defective(w, cond, scale, kappa_max=KAPPA_MAX) -> bool:
    """Eigenvector basis too ill-conditioned to trust a spectral evaluation.

    Matrices rounded a few ulps off an exceptional point have a computed
    condition number stalling near ``1 / sqrt(eps)``, so a near-coalescent
    eigenvalue pair with ``cond > sqrt(kappa_max)`` also counts.
    """
    if cond > kappa_max:
        return True
    gap = min(abs(w[i] - w[j]) for i in range(len(w)) for j in range(i + 1, len(w)))
    return gap <= GAP_RTOL * scale and cond > math.sqrt(kappa_max)


def eigvec_condition(vecs) -> float:
    with np.errstate(divide="ignore", over="ignore"):
        cond = float(np.linalg.cond(vecs))
    return cond if np.isfinite(cond) else math.inf


def propagate_bloch(L, s0=INITIAL_STATE, t=1.0, kappa_max: float = KAPPA_MAX) -> np.ndarray:
    """Return ``exp(L t) s0``.

    Uses the eigendecomposition of ``L`` when its eigenvector matrix is well
    conditioned and the series exponential near exceptional points (see
    :func:`near_defective`).
    ``t`` may be a scalar (result shape ``(3,)``) or a 1-D array (``(n, 3)``).
    """
    m = _as_matrix(L)
    s0 = np.asarray(s0, dtype=float)
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(ts < 0):
        raise ValueError("propagation time must be non-negative")

    w, vecs = np.linalg.eig(m)
    scale = float(np.linalg.norm(m, 2))
    if not near_defective(w, eigvec_condition(vecs), scale, kappa_max):
        coef = np.linalg.solve(vecs, s0.astype(complex))
        out = (vecs[None, :, :] * (np.exp(np.outer(ts, w)) * coef)[:, None, :]).sum(axis=2).real
    else:
        out = np.array([expm_series(m * tk) @ s0 for tk in ts])
    return out[0] if np.ndim(t) == 0 else out


def propagate_bloch_ode(L, s0=INITIAL_STATE, t_grid=(0.0, 1.0), dt: float | None = None) -> np.ndarray:
    """Reference integrator: classical fixed-step RK4 for ``ds/dt = L s``.

    Each grid interval is split into equal steps no longer than ``dt``
    (default ``1e-4 / omega``).  For a linear right-hand side one RK4 step is
    the fourth-order Taylor polynomial of ``h L``; that one-step map is formed
    once per interval and applied repeatedly.  Returns shape ``(len(t_grid), 3)``.
    """
    m = _as_matrix(L)
    omega = L.omega if isinstance(L, Liouvillian) and L.omega > 0 else 1.0
    if dt is None:
        dt = ODE_DT / omega
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or t_grid.size == 0 or t_grid[0] < 0 or np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must be a strictly increasing non-negative sequence")
    if dt * np.linalg.norm(m, 2) > 0.1:
        raise StepTooLarge(f"dt*||L|| = {dt * np.linalg.norm(m, 2):.3g} exceeds 0.1")

    eye = np.eye(3)

    def rk4_map(h):
        hm = h * m
        return eye + hm @ (eye + hm @ (eye / 2 + hm @ (eye / 6 + hm / 24)))

    out = np.empty((t_grid.size, 3))
    s = np.asarray(s0, dtype=float).copy()
    t_prev = 0.0
    for k, tk in enumerate(t_grid):
        span = tk - t_prev
        if span > 0:
            n = max(1, int(math.ceil(span / dt - 1e-9)))
            s = np.linalg.matrix_power(rk4_map(span / n), n) @ s
        out[k] = s
        t_prev = tk
    return out


def survival_probability(s) -> np.ndarray | float:
    """Probability ``(1 + z) / 2`` of finding the initial state ``|0>``."""
    s = np.asarray(s, dtype=float)
    p = 0.5 * (1.0 + s[..., 2])
    return float(p) if p.ndim == 0 else p


def _z_closed_form(t, decay, a_dn, disc, eps):
    """``exp(-decay t) [cosh(sqrt(D) t/4) + a_dn/sqrt(D) sinh(sqrt(D) t/4)]``."""
    t = np.asarray(t, dtype=float)
    if abs(disc) < eps:
        return np.exp(-decay * t) * (1.0 + a_dn * t / 4.0)
    r = math.sqrt(abs(disc)) / 4.0
    x = r * t
    if disc < 0:
        sinc = np.where(x == 0, 1.0, np.sin(x) / np.where(x == 0, 1.0, x))
        return np.exp(-decay * t) * (np.cos(x) + a_dn * t / 4.0 * sinc)
    # real branch: small x keeps the cosh/sinh form, large x splits into
    # exponentials so nothing overflows at very strong measurement
    c = a_dn / (4.0 * r)
    small = x < 1.0
    xs = np.where(small, x, 0.0)
    sinhc = np.where(xs == 0, 1.0, np.sinh(xs) / np.where(xs == 0, 1.0, xs))
    near = np.exp(-decay * t) * (np.cosh(xs) + a_dn * t / 4.0 * sinhc)
    far = 0.5 * (1.0 + c) * np.exp((r - decay) * t) + 0.5 * (1.0 - c) * np.exp(-(r + decay) * t)
    return np.where(small, near, far)


def survival_closed_form(p: ModelParams, t, variant: Variant = "full", strong_limit: bool = False):
    """Closed-form survival probability of ``|0>`` for the three noise variants.

    ``noiseless`` needs ``gamma = 0``, ``diagonal`` needs a diagonal ``gamma``
    and ``full`` needs ``g12 = g13 = 0``; outside those regimes
    :class:`VariantMismatch` is raised.  With ``strong_limit=True`` the
    ``alpha -> infinity`` limit ``(1 + exp(-2 (g11 + g22) t)) / 2`` is returned.
    """
    check_variant(p, variant)
    g = p.gamma
    s = g.g11 + g.g22
    if strong_limit:
        z = np.exp(-2.0 * s * np.asarray(t, dtype=float))
    else:
        a_dn = p.alpha_dn
        disc = a_dn**2 - 64.0 * (p.omega**2 - g.g23**2)
        eps = EXC_RTOL * p.omega**2
        z = _z_closed_form(t, (a_dn + 8.0 * s) / 4.0, a_dn, disc, eps)
    out = np.clip(0.5 * (1.0 + z), 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ShortTimeExpansion:
    """``P(t) ~ c0 + c1 t + c2 t**2 + c3 t**3``."""

    c0: float
    c1: float
    c2: float
    c3: float

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return self.c0 + t * (self.c1 + t * (self.c2 + t * self.c3))

    def as_tuple(self):
        return (self.c0, self.c1, self.c2, self.c3)


def short_time_expansion(p: ModelParams, variant: Variant = "full") -> ShortTimeExpansion:
    check_variant(p, variant)
    g = p.gamma
    s = g.g11 + g.g22
    w2 = p.omega**2 - g.g23**2
    c3 = (w2 * (p.alpha + 4.0 * (3.0 * g.g11 + 2.0 * g.g22 + g.g33)) - 4.0 * s**3) / 6.0
    return ShortTimeExpansion(1.0, -s, -(w2 - s**2), c3)
