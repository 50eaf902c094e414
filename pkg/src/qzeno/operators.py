"""Two-level operators and the Kraus pair of the partial measurement."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def identity() -> np.ndarray:
    return np.eye(2, dtype=complex)


def sigma_x() -> np.ndarray:
    return np.array([[0, 1], [1, 0]], dtype=complex)


def sigma_y() -> np.ndarray:
    return np.array([[0, -1j], [1j, 0]], dtype=complex)


def sigma_z() -> np.ndarray:
    return np.array([[1, 0], [0, -1]], dtype=complex)


def projector_one() -> np.ndarray:
    """``P1 = |1><1| = (I - sigma_z) / 2``."""
    return (identity() - sigma_z()) / 2


PAULIS = (sigma_x, sigma_y, sigma_z)


def density_from_bloch(s) -> np.ndarray:
    x, y, z = s
    return 0.5 * (identity() + x * sigma_x() + y * sigma_y() + z * sigma_z())


def bloch_from_density(rho) -> np.ndarray:
    return np.array([np.trace(rho @ p()).real for p in PAULIS])


@dataclass(frozen=True)
class KrausPair:
    """Readout-0 and readout-1 Kraus operators for measurement angle ``theta``."""

    m0: np.ndarray
    m1: np.ndarray
    theta: float

    def completeness(self) -> np.ndarray:
        return self.m0.conj().T @ self.m0 + self.m1.conj().T @ self.m1


def kraus_operators(theta: float) -> KrausPair:
    """``M0 = diag(1, cos theta)``, ``M1 = diag(0, sin theta)``."""
    return KrausPair(
        np.diag([1.0, math.cos(theta)]).astype(complex),
        np.diag([0.0, math.sin(theta)]).astype(complex),
        theta,
    )


def _expm_hermitian(h: np.ndarray, t: float) -> np.ndarray:
    """``exp(-i h t)`` for Hermitian ``h`` via its eigendecomposition."""
    w, v = np.linalg.eigh(h)
    return (v * np.exp(-1j * w * t)) @ v.conj().T


def detector_unitary(theta: float) -> np.ndarray:
    """Joint system-detector unitary ``exp(-i H_int dt)``.

    ``H_int dt = theta (I - sigma_z)/2 (x) sigma_y`` with the system as the
    first tensor factor; basis index is ``2 * system + detector``.
    """
    h = np.kron(projector_one(), sigma_y())
    return _expm_hermitian(h, theta)


def derive_kraus_from_detector(theta: float) -> KrausPair:
    """Kraus operators ``M_r = <r|V|0>_d`` extracted from the detector model."""
    if not 0.0 <= theta <= math.pi / 2 + 1e-15:
        raise ValueError(f"measurement angle must lie in [0, pi/2], got {theta}")
    v = detector_unitary(theta).reshape(2, 2, 2, 2)  # (sys_out, det_out, sys_in, det_in)
    return KrausPair(v[:, 0, :, 0].copy(), v[:, 1, :, 0].copy(), theta)
