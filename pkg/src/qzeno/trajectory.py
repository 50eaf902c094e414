"""Stochastic trajectories of the noisy, continuously measured qubit.

Each trajectory alternates an exact unitary step under ``H = omega sigma_x +
xi . sigma`` (``xi`` Gaussian with covariance ``gamma / dt``) with a sampled
two-outcome partial measurement.  Averaging the survival probability over
trajectories reproduces the Lindblad dynamics of :mod:`qzeno.model` up to an
``O(dt)`` splitting bias.

Random numbers come from per-trajectory counter-based streams keyed by
``(master_seed, trajectory index)``; ensemble sums are reduced in a fixed
order so a result depends only on the seed, never on the thread count.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _accel, _kernels
from .errors import FactorizationFailure, StepTooLarge, ValidationError, ZeroProbabilityBranch
from .model import INITIAL_STATE, ModelParams, NoiseCovariance, validate_noise_covariance

MAX_RECORDS = 2000
STEP_GUARD = 0.01
BLOCK = 64
ZERO_PIVOT = 1e-12


def noise_factor(gamma: NoiseCovariance, tol: float = ZERO_PIVOT) -> np.ndarray:
    """Pivoted Cholesky factor ``C`` with ``C @ C.T == gamma``.

    Pivots below ``tol * max(diag)`` end the factorization, leaving zero
    columns, so rank-deficient (e.g. partly zero diagonal) covariances work.
    """
    m = gamma.matrix()
    scale = float(np.max(np.diag(m)))
    factor = np.zeros((3, 3))
    if scale <= 0.0:
        if np.any(m != 0.0):
            raise FactorizationFailure("covariance with zero diagonal must vanish")
        return factor
    a = m.copy()
    perm = np.arange(3)
    for k in range(3):
        j = k + int(np.argmax(np.diag(a)[k:]))
        if j != k:
            a[[k, j]] = a[[j, k]]
            a[:, [k, j]] = a[:, [j, k]]
            factor[[k, j]] = factor[[j, k]]
            perm[[k, j]] = perm[[j, k]]
        d = a[k, k]
        if d <= tol * scale:
            if np.max(np.abs(a[k:, k:])) > math.sqrt(tol) * scale:
                raise FactorizationFailure("noise covariance is not positive semidefinite")
            break
        factor[k, k] = math.sqrt(d)
        factor[k + 1 :, k] = a[k + 1 :, k] / factor[k, k]
        a[k + 1 :, k + 1 :] -= np.outer(factor[k + 1 :, k], factor[k + 1 :, k])
    out = np.empty_like(factor)
    out[perm] = factor
    return out


def _rng(rng):
    # anything exposing random() / standard_normal() is used as-is
    return rng if hasattr(rng, "random") else np.random.default_rng(rng)


def sample_noise_increment(gamma: NoiseCovariance, dt: float, rng=None, size: int | None = None) -> np.ndarray:
    """White-noise sample ``xi`` for a step ``dt``: covariance ``gamma / dt``.

    Returns shape ``(3,)``, or ``(size, 3)`` independent draws when ``size`` is given.
    """
    if dt <= 0:
        raise ValidationError("dt must be positive")
    g = _rng(rng).standard_normal(3 if size is None else (size, 3))
    return g @ noise_factor(gamma).T / math.sqrt(dt)


def unitary_step(s, omega: float, xi, dt: float) -> np.ndarray:
    """Rotate ``s`` about ``(omega + xi1, xi2, xi3)`` by ``2 |n| dt``."""
    n = np.array([omega, 0.0, 0.0]) + np.asarray(xi, dtype=float)
    return _kernels.rotate_np(np.asarray(s, dtype=float), n, dt)


def measurement_step(s, theta: float, rng=None) -> tuple[np.ndarray, int]:
    """Sample a readout and return the normalized post-measurement state."""
    s = np.asarray(s, dtype=float)
    p1 = math.sin(theta) ** 2 * 0.5 * (1.0 - s[2])
    r = int(_rng(rng).random() < p1)
    if (p1 if r else 1.0 - p1) < 1e-15:
        raise ZeroProbabilityBranch(f"readout {r} has probability {p1 if r else 1 - p1:.3g}")
    out, _ = _kernels.measure_np(s[None, :], math.cos(theta), math.sin(theta) ** 2, np.array([1.0 - r]))
    return out[0], r


@dataclass(frozen=True)
class TrajectoryConfig:
    dt: float
    t_max: float
    n_traj: int = 1
    master_seed: int = 42
    record_stride: int | None = None

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValidationError(f"dt must be positive, got {self.dt!r}")
        if not (self.t_max > 0 and math.isfinite(self.t_max)):
            raise ValidationError(f"t_max must be positive, got {self.t_max!r}")
        if self.n_traj < 1:
            raise ValidationError("n_traj must be at least 1")
        if not 0 <= self.master_seed < 2**64:
            raise ValidationError("master_seed must be an unsigned 64-bit integer")
        if self.record_stride is not None and self.record_stride < 1:
            raise ValidationError("record_stride must be at least 1")

    @property
    def n_steps(self) -> int:
        return max(1, int(math.ceil(self.t_max / self.dt - 1e-9)))

    @property
    def stride(self) -> int:
        if self.record_stride is not None:
            return self.record_stride
        low = max(1, math.ceil(self.n_steps / (MAX_RECORDS - 1)))
        # prefer a stride that lands a record on the final step
        for s in range(low, 2 * low + 1):
            if self.n_steps % s == 0:
                return s
        return low

    @property
    def t_grid(self) -> np.ndarray:
        return np.arange(self.n_steps // self.stride + 1) * (self.stride * self.dt)

    def check_step(self, p: ModelParams) -> None:
        rate = max(p.omega, p.alpha, *(abs(v) for v in p.gamma.entries().values()))
        if self.dt * rate > STEP_GUARD:
            raise StepTooLarge(f"dt * max rate = {self.dt * rate:.3g} exceeds {STEP_GUARD}")


@dataclass(frozen=True)
class Trajectory:
    t_grid: np.ndarray
    states: np.ndarray
    readouts: np.ndarray | None = None


@dataclass(frozen=True)
class EnsembleResult:
    t_grid: np.ndarray
    p_mean: np.ndarray
    p_stderr: np.ndarray
    n_traj: int
    master_seed: int
    dt: float = math.nan
    backend: str = field(default="", compare=False)


def _backend(name):
    if name is None:
        return "numba" if _accel.HAVE_NUMBA else "numpy"
    if name == "numba" and not _accel.HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is unavailable or disabled")
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    return name


def _kernel_args(p: ModelParams, cfg: TrajectoryConfig, s0):
    validate_noise_covariance(p.gamma)
    cfg.check_step(p)
    chol = noise_factor(p.gamma)
    theta = math.sqrt(p.alpha * cfg.dt)
    s0 = np.ascontiguousarray(s0, dtype=float)
    if s0.shape != (3,) or np.linalg.norm(s0) > 1 + 1e-8:
        raise ValidationError("initial Bloch vector must be a 3-vector with |s| <= 1")
    return float(p.omega), chol, float(cfg.dt), theta, cfg.n_steps, cfg.stride, s0, bool(np.any(chol))


def run_trajectory(
    p: ModelParams,
    cfg: TrajectoryConfig,
    traj_index: int = 0,
    s0=INITIAL_STATE,
    return_readouts: bool = False,
    backend: str | None = None,
) -> Trajectory:
    """Single trajectory ``traj_index`` of the ensemble seeded by ``cfg.master_seed``.

    States are recorded every ``cfg.stride`` steps (first row is ``s0``).  With
    ``return_readouts`` the per-step detector outcomes are returned as well.
    """
    omega, chol, dt, theta, n_steps, stride, s0, noisy = _kernel_args(p, cfg, s0)
    kernel = _kernels.trajectory_numba if _backend(backend) == "numba" else _kernels.trajectory_numpy
    states, readouts = kernel(omega, chol, dt, theta, n_steps, stride, np.uint64(cfg.master_seed), traj_index, s0, noisy)
    return Trajectory(cfg.t_grid, states, readouts if return_readouts else None)


def tree_sum(rows: np.ndarray) -> np.ndarray:
    """Pairwise sum over axis 0 in a fixed order."""
    rows = np.asarray(rows)
    while rows.shape[0] > 1:
        if rows.shape[0] % 2:
            rows = np.concatenate([rows, np.zeros_like(rows[:1])])
        rows = rows[0::2] + rows[1::2]
    return rows[0]


def run_ensemble(
    p: ModelParams,
    cfg: TrajectoryConfig,
    s0=INITIAL_STATE,
    threads: int | None = None,
    backend: str | None = None,
    block: int = BLOCK,
) -> EnsembleResult:
    """Mean survival probability over ``cfg.n_traj`` trajectories.

    ``p_stderr`` is the sample standard deviation over ``sqrt(n_traj)``
    (zero for a single trajectory).  Trajectories are grouped in blocks of
    ``block``; blocks run in parallel on the numba backend and their sums are
    combined by :func:`tree_sum`.
    """
    omega, chol, dt, theta, n_steps, stride, s0, noisy = _kernel_args(p, cfg, s0)
    name = _backend(backend)
    seed = np.uint64(cfg.master_seed)
    if name == "numba":
        previous = _accel.get_threads()
        _accel.set_threads(threads)
        try:
            sums, sumsq = _kernels.ensemble_numba(omega, chol, dt, theta, n_steps, stride, seed, cfg.n_traj, block, s0, noisy)
        finally:
            _accel.set_threads(previous)
    else:
        sums, sumsq = _kernels.ensemble_numpy(omega, chol, dt, theta, n_steps, stride, seed, cfg.n_traj, block, s0, noisy)

    n = cfg.n_traj
    total = tree_sum(sums)
    total_sq = tree_sum(sumsq)
    mean = total / n
    if n > 1:
        var = np.maximum(total_sq - total * mean, 0.0) / (n - 1)
        stderr = np.sqrt(var / n)
    else:
        stderr = np.zeros_like(mean)
    return EnsembleResult(cfg.t_grid, np.clip(mean, 0.0, 1.0), stderr, n, int(cfg.master_seed), dt, name)
