"""Trajectory kernels: numba versions and pure-numpy equivalents.

One time step of a trajectory is

1. noise ``xi = C g / sqrt(dt)`` from two Box-Muller pairs (draws 0..3),
2. exact rotation of the Bloch vector about ``(omega + xi1, xi2, xi3)`` by
   ``2 |n| dt``,
3. the two-outcome partial measurement with angle ``theta`` (draw 4).

Both backends consume the same counter-based draws.  The numba backend runs
trajectory blocks in parallel; the numpy backend vectorizes over trajectories.
Per-block sums of ``P`` and ``P**2`` are always accumulated in trajectory
order so the final reduction does not depend on the thread count.
"""
import math

import numpy as np

from ._accel import njit, prange
from ._rng import DRAWS_PER_STEP, TWO_PI, stream_key, stream_keys, uniform, uniform_vec

# ---------------------------------------------------------------- numba


@njit(inline="always")
def _rotate(x, y, z, nx, ny, nz, dt):
    norm = math.sqrt(nx * nx + ny * ny + nz * nz)
    if norm == 0.0:
        return x, y, z
    kx = nx / norm
    ky = ny / norm
    kz = nz / norm
    phi = 2.0 * norm * dt
    c = math.cos(phi)
    s = math.sin(phi)
    dot = (kx * x + ky * y + kz * z) * (1.0 - c)
    rx = x * c + (ky * z - kz * y) * s + kx * dot
    ry = y * c + (kz * x - kx * z) * s + ky * dot
    rz = z * c + (kx * y - ky * x) * s + kz * dot
    return rx, ry, rz


@njit(inline="always")
def _measure(x, y, z, cos_t, sin2_t, u):
    p1 = sin2_t * 0.5 * (1.0 - z)
    if u < p1:
        return 0.0, 0.0, -1.0, 1
    p0 = 1.0 - p1
    f = cos_t / p0
    zn = ((1.0 + z) - cos_t * cos_t * (1.0 - z)) / (2.0 * p0)
    return x * f, y * f, zn, 0


@njit(inline="always")
def _noise(key, base, chol, inv_sqrt_dt):
    u0 = 1.0 - uniform(key, base)
    u1 = uniform(key, base + 1)
    u2 = 1.0 - uniform(key, base + 2)
    u3 = uniform(key, base + 3)
    r0 = math.sqrt(-2.0 * math.log(u0))
    r1 = math.sqrt(-2.0 * math.log(u2))
    g0 = r0 * math.cos(TWO_PI * u1)
    g1 = r0 * math.sin(TWO_PI * u1)
    g2 = r1 * math.cos(TWO_PI * u3)
    xi0 = (chol[0, 0] * g0 + chol[0, 1] * g1 + chol[0, 2] * g2) * inv_sqrt_dt
    xi1 = (chol[1, 0] * g0 + chol[1, 1] * g1 + chol[1, 2] * g2) * inv_sqrt_dt
    xi2 = (chol[2, 0] * g0 + chol[2, 1] * g1 + chol[2, 2] * g2) * inv_sqrt_dt
    return xi0, xi1, xi2


@njit(cache=True)
def trajectory_numba(omega, chol, dt, theta, n_steps, stride, seed, index, s0, noisy):
    n_rec = n_steps // stride + 1
    states = np.empty((n_rec, 3))
    readouts = np.empty(n_steps, dtype=np.int8)
    key = stream_key(seed, index)
    cos_t = math.cos(theta)
    sin2_t = math.sin(theta) ** 2
    inv_sqrt_dt = 1.0 / math.sqrt(dt)
    x, y, z = s0[0], s0[1], s0[2]
    states[0, 0] = x
    states[0, 1] = y
    states[0, 2] = z
    for k in range(n_steps):
        base = k * DRAWS_PER_STEP
        if noisy:
            xi0, xi1, xi2 = _noise(key, base, chol, inv_sqrt_dt)
        else:
            xi0, xi1, xi2 = 0.0, 0.0, 0.0
        x, y, z = _rotate(x, y, z, omega + xi0, xi1, xi2, dt)
        x, y, z, r = _measure(x, y, z, cos_t, sin2_t, uniform(key, base + 4))
        readouts[k] = r
        if (k + 1) % stride == 0:
            j = (k + 1) // stride
            states[j, 0] = x
            states[j, 1] = y
            states[j, 2] = z
    return states, readouts


@njit(parallel=True, cache=True)
def ensemble_numba(omega, chol, dt, theta, n_steps, stride, seed, n_traj, block, s0, noisy):
    n_rec = n_steps // stride + 1
    n_blocks = (n_traj + block - 1) // block
    sums = np.zeros((n_blocks, n_rec))
    sumsq = np.zeros((n_blocks, n_rec))
    cos_t = math.cos(theta)
    sin2_t = math.sin(theta) ** 2
    inv_sqrt_dt = 1.0 / math.sqrt(dt)
    p_init = 0.5 * (1.0 + s0[2])
    for b in prange(n_blocks):
        stop = min((b + 1) * block, n_traj)
        for i in range(b * block, stop):
            key = stream_key(seed, i)
            x, y, z = s0[0], s0[1], s0[2]
            sums[b, 0] += p_init
            sumsq[b, 0] += p_init * p_init
            for k in range(n_steps):
                base = k * DRAWS_PER_STEP
                if noisy:
                    xi0, xi1, xi2 = _noise(key, base, chol, inv_sqrt_dt)
                    x, y, z = _rotate(x, y, z, omega + xi0, xi1, xi2, dt)
                else:
                    x, y, z = _rotate(x, y, z, omega, 0.0, 0.0, dt)
                x, y, z, r = _measure(x, y, z, cos_t, sin2_t, uniform(key, base + 4))
                if (k + 1) % stride == 0:
                    j = (k + 1) // stride
                    p = 0.5 * (1.0 + z)
                    sums[b, j] += p
                    sumsq[b, j] += p * p
    return sums, sumsq


# ---------------------------------------------------------------- numpy


def rotate_np(s, n, dt):
    """Rotate Bloch vectors ``s`` (..., 3) about axes ``n`` (..., 3) by ``2|n| dt``."""
    norm = np.sqrt(np.sum(n * n, axis=-1, keepdims=True))
    safe = np.where(norm == 0.0, 1.0, norm)
    k = n / safe
    phi = 2.0 * norm * dt
    c = np.cos(phi)
    sn = np.sin(phi)
    dot = np.sum(k * s, axis=-1, keepdims=True) * (1.0 - c)
    out = s * c + np.cross(k, s) * sn + k * dot
    return np.where(norm == 0.0, s, out)


def measure_np(s, cos_t, sin2_t, u):
    z = s[..., 2]
    p1 = sin2_t * 0.5 * (1.0 - z)
    clicked = u < p1
    p0 = 1.0 - p1
    f = cos_t / p0
    zn = ((1.0 + z) - cos_t * cos_t * (1.0 - z)) / (2.0 * p0)
    out = np.stack([s[..., 0] * f, s[..., 1] * f, zn], axis=-1)
    out[clicked] = (0.0, 0.0, -1.0)
    return out, clicked.astype(np.int8)


def noise_np(keys, base, chol, inv_sqrt_dt):
    u0 = 1.0 - uniform_vec(keys, base)
    u1 = uniform_vec(keys, base + 1)
    u2 = 1.0 - uniform_vec(keys, base + 2)
    u3 = uniform_vec(keys, base + 3)
    r0 = np.sqrt(-2.0 * np.log(u0))
    r1 = np.sqrt(-2.0 * np.log(u2))
    g = np.stack([r0 * np.cos(TWO_PI * u1), r0 * np.sin(TWO_PI * u1), r1 * np.cos(TWO_PI * u3)], axis=-1)
    return (g @ chol.T) * inv_sqrt_dt


def _run_np(omega, chol, dt, theta, n_steps, stride, keys, s0, noisy, on_record, keep_readouts=False):
    cos_t = math.cos(theta)
    sin2_t = math.sin(theta) ** 2
    inv_sqrt_dt = 1.0 / math.sqrt(dt)
    s = np.broadcast_to(np.asarray(s0, dtype=float), (keys.size, 3)).copy()
    drive = np.array([omega, 0.0, 0.0])
    readouts = np.empty((n_steps, keys.size), dtype=np.int8) if keep_readouts else None
    on_record(0, s)
    for k in range(n_steps):
        base = k * DRAWS_PER_STEP
        n = drive + noise_np(keys, base, chol, inv_sqrt_dt) if noisy else np.broadcast_to(drive, s.shape)
        s = rotate_np(s, n, dt)
        s, r = measure_np(s, cos_t, sin2_t, uniform_vec(keys, base + 4))
        if keep_readouts:
            readouts[k] = r
        if (k + 1) % stride == 0:
            on_record((k + 1) // stride, s)
    return readouts


def trajectory_numpy(omega, chol, dt, theta, n_steps, stride, seed, index, s0, noisy):
    states = np.empty((n_steps // stride + 1, 3))

    def record(j, s):
        states[j] = s[0]

    readouts = _run_np(omega, chol, dt, theta, n_steps, stride, stream_keys(seed, [index]), s0, noisy, record, True)
    return states, readouts[:, 0]


def ensemble_numpy(omega, chol, dt, theta, n_steps, stride, seed, n_traj, block, s0, noisy, chunk_blocks=16):
    n_rec = n_steps // stride + 1
    n_blocks = (n_traj + block - 1) // block
    sums = np.zeros((n_blocks, n_rec))
    sumsq = np.zeros((n_blocks, n_rec))
    for first in range(0, n_blocks, chunk_blocks):
        last = min(first + chunk_blocks, n_blocks)
        idx = np.arange(first * block, min(last * block, n_traj))
        starts = np.arange(0, idx.size, block)

        def record(j, s, first=first, last=last, starts=starts):
            p = 0.5 * (1.0 + s[:, 2])
            sums[first:last, j] = np.add.reduceat(p, starts)
            sumsq[first:last, j] = np.add.reduceat(p * p, starts)

        _run_np(omega, chol, dt, theta, n_steps, stride, stream_keys(seed, idx), s0, noisy, record)
    return sums, sumsq
