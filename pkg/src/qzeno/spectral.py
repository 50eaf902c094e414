"""Liouvillian spectrum: eigenvalues, exceptional points, decay rates and the
measurement-strength window in which noise slows the long-time decay."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import VariantMismatch
from .model import (
    EXC_RTOL,
    KAPPA_MAX,
    Liouvillian,
    ModelParams,
    Variant,
    build_liouvillian,
    check_variant,
    eigvec_condition,
    near_defective,
)

IM_TOL = 1e-9


@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigenpairs of a 3x3 Liouvillian.

    Eigenvalues are ordered by descending ``|Re|`` (ties: ascending ``Im``) so
    the last one is the slowest-decaying mode.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    defective: bool
    condition_number: float

    @property
    def slowest(self) -> complex:
        return complex(self.eigenvalues[-1])


def sort_eigenvalues(values, vectors=None):
    values = np.asarray(values, dtype=complex)
    # round before sorting so rounding noise cannot swap a conjugate pair
    key_re = np.round(-np.abs(values.real), 12)
    key_im = np.round(values.imag, 12)
    order = np.lexsort((key_im, key_re))
    if vectors is None:
        return values[order]
    return values[order], vectors[:, order]


def eigenvalues_closed_form(p: ModelParams, variant: Variant = "full") -> np.ndarray:
    """``(lambda1, lambda2, lambda3)`` from the closed-form expressions.

    ``lambda1`` is the x mode, ``lambda2`` / ``lambda3`` the coupled (y, z)
    pair with ``lambda3`` the slower one.  Below the exceptional point the
    pair is complex with ``Im lambda3 > 0``.
    """
    check_variant(p, variant)
    g = p.gamma
    a_dn = p.alpha_dn
    s = g.g11 + g.g22
    disc = a_dn**2 - 64.0 * (p.omega**2 - g.g23**2)
    if abs(disc) < EXC_RTOL * p.omega**2:
        root = 0j
    elif disc < 0:
        root = 1j * math.sqrt(-disc)
    else:
        root = complex(math.sqrt(disc))
    lam1 = complex(-a_dn / 2.0 - 4.0 * g.g22)
    lam2 = -(a_dn + 8.0 * s + root) / 4.0
    lam3 = -(a_dn + 8.0 * s - root) / 4.0
    return np.array([lam1, lam2, lam3])


def eigenvalues_numeric(L, kappa_max: float = KAPPA_MAX) -> SpectralDecomposition:
    """LAPACK eigen-solution of ``L`` with eigenvector conditioning.

    ``defective`` is set when the unit-column eigenvector matrix has a
    2-norm condition number above ``kappa_max``, or when two eigenvalues sit
    within ``1e-6 * ||L||`` of each other with a condition number above
    ``sqrt(kappa_max)``.  The second test catches matrices rounded a few ulps
    off an exceptional point, whose computed condition number stalls near
    ``1 / sqrt(eps)``.
    """
    m = L.m if isinstance(L, Liouvillian) else np.asarray(L, dtype=float)
    w, vecs = np.linalg.eig(m)
    w, vecs = sort_eigenvalues(w, vecs)
    cond = eigvec_condition(vecs)
    defective = near_defective(w, cond, float(np.linalg.norm(m, 2)), kappa_max)
    return SpectralDecomposition(w, vecs, defective, cond)


def exceptional_point(p: ModelParams, variant: Variant = "full") -> float | None:
    """Measurement strength at which the (y, z) eigenvalue pair coalesces.

    Returns ``None`` when ``|g23| >= omega`` (the pair never turns complex) or
    when the coalescence would need ``alpha <= 0``.
    """
    check_variant(p, variant)
    g = p.gamma
    if abs(g.g23) >= p.omega:
        return None
    a_exc = 4.0 * (2.0 * math.sqrt(p.omega**2 - g.g23**2) + g.g22 - g.g33)
    return a_exc if a_exc > 0 else None


def decay_rate(p: ModelParams, variant: Variant = "full") -> float:
    """Long-time decay rate ``|Re lambda3|`` of the survival probability."""
    return abs(eigenvalues_closed_form(p, variant)[2].real)


@dataclass(frozen=True)
class Enhancement:
    interval: tuple[float, float] | None
    a: bool
    b: bool
    c: bool

    @property
    def enhanced(self) -> bool:
        return self.a and self.b and self.c


def enhancement_interval(p: ModelParams, variant: Variant = "full") -> Enhancement:
    """Window ``(alpha1, alpha2)`` where noise lowers the long-time decay rate.

    Conditions: (a) ``g33 > g22``; (b) ``omega > ((g11+g22)(g11+g33) - g23**2)
    / (g33 - g22)``; (c) ``alpha1 < alpha < alpha2``.  The interval is ``None``
    unless (a) and (b) hold.  ``alpha2`` is infinite when ``g11 + g22 = 0``.
    """
    if variant not in ("diagonal", "full"):
        raise VariantMismatch("enhancement interval is defined for diagonal and full noise")
    check_variant(p, variant)
    g = p.gamma
    w = p.omega
    cond_a = g.g33 > g.g22
    prod = (g.g11 + g.g22) * (g.g11 + g.g33)
    cond_b = cond_a and w * (g.g33 - g.g22) > prod - g.g23**2
    if not (cond_a and cond_b):
        return Enhancement(None, cond_a, cond_b, False)

    spread = 2.0 * g.g11 + g.g22 + g.g33
    alpha1 = 4.0 * (g.g22 - g.g33 + math.sqrt(4.0 * (w**2 - g.g23**2) + spread**2))
    if prod > 0:
        r = 1.0 - g.g23**2 / prod
        alpha2 = 2.0 * ((g.g22 - g.g33) * r + spread * math.sqrt(r * r + 4.0 * w**2 / prod))
    else:
        alpha2 = math.inf
    return Enhancement((alpha1, alpha2), True, True, alpha1 < p.alpha < alpha2)


@dataclass(frozen=True)
class RegimeReport:
    alpha_exc: float | None
    regime: str
    decay_rate: float
    enhancement: str
    interval: tuple[float, float] | None
    conditions: tuple[bool, bool, bool]
    slowest: complex
    outside_weak_noise_regime: bool = False


def classify_regime(p: ModelParams, variant: Variant = "full") -> RegimeReport:
    """Oscillatory vs Zeno regime plus the noise-enhancement verdict."""
    a_exc = exceptional_point(p, variant)
    lam3 = eigenvalues_closed_form(p, variant)[2]
    regime = "oscillatory" if abs(lam3.imag) > IM_TOL * p.omega else "zeno"
    if variant == "noiseless":
        enh = Enhancement(None, False, False, False)
    else:
        enh = enhancement_interval(p, variant)
    return RegimeReport(
        alpha_exc=a_exc,
        regime=regime,
        decay_rate=abs(lam3.real),
        enhancement="enhanced" if enh.enhanced else "suppressed",
        interval=enh.interval,
        conditions=(enh.a, enh.b, enh.c),
        slowest=complex(lam3),
        outside_weak_noise_regime=abs(p.gamma.g23) >= p.omega,
    )


def offdiag_perturbation_error(p: ModelParams) -> float:
    """Largest eigenvalue error of the closed form that ignores ``g12``, ``g13``.

    Compares the exact spectrum of ``L`` against the full-noise closed form
    evaluated with ``g12 = g13 = 0``, using the best one-to-one matching.
    """
    exact = np.linalg.eigvals(build_liouvillian(p).m)
    approx = eigenvalues_closed_form(replace(p, gamma=replace(p.gamma, g12=0.0, g13=0.0)), "full")
    return min(
        float(np.max(np.abs(exact[list(perm)] - approx)))
        for perm in itertools.permutations(range(3))
    )
