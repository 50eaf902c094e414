"""Parameter sweeps: survival-vs-time families, decay rate vs measurement
strength, and brute-force maps of where noise slows the long-time decay."""
from __future__ import annotations

import datetime as _dt
import json
from dataclasses import dataclass, field, replace

import numpy as np

from . import __version__
from .errors import ValidationError, VariantMismatch
from .model import ModelParams, NoiseCovariance, survival_closed_form
from .spectral import decay_rate, enhancement_interval, exceptional_point
from .trajectory import TrajectoryConfig, run_ensemble

CLOSED_FORMS = ("noiseless", "diagonal", "full")
AXES = ("alpha", "time", "omega")
REFINE_TOL = 1e-4


@dataclass(frozen=True)
class SweepSpec:
    axis: str
    start: float
    stop: float
    n_points: int
    params: ModelParams
    variants: tuple = CLOSED_FORMS
    mc_config: TrajectoryConfig | None = None

    def __post_init__(self):
        if self.axis not in AXES:
            raise ValidationError(f"axis must be one of {AXES}, got {self.axis!r}")
        if self.n_points < 2:
            raise ValidationError("a sweep needs at least 2 points")
        if not self.start < self.stop:
            raise ValidationError("sweep start must be below stop")
        unknown = set(self.variants) - set(CLOSED_FORMS) - {"montecarlo"}
        if unknown:
            raise ValidationError(f"unknown variants: {sorted(unknown)}")
        if "montecarlo" in self.variants and self.mc_config is None:
            raise ValidationError("the montecarlo variant needs mc_config")

    @property
    def values(self) -> np.ndarray:
        return np.linspace(self.start, self.stop, self.n_points)


@dataclass
class SweepResult:
    axis: str
    values: np.ndarray
    series: dict
    markers: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "axis": self.axis,
            "values": [float(v) for v in self.values],
            "series": {k: [float(v) for v in s] for k, s in self.series.items()},
            "markers": self.markers,
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, d: dict) -> SweepResult:
        return cls(
            d["axis"],
            np.asarray(d["values"], dtype=float),
            {k: np.asarray(v, dtype=float) for k, v in d["series"].items()},
            d.get("markers", {}),
            d.get("metadata", {}),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> SweepResult:
        return cls.from_dict(json.loads(text))


def params_to_dict(p: ModelParams) -> dict:
    return {"omega": p.omega, "alpha": p.alpha, "gamma": p.gamma.entries()}


def params_from_dict(d: dict) -> ModelParams:
    return ModelParams(d["omega"], d["alpha"], NoiseCovariance(**d.get("gamma", {})))


def _metadata(spec: SweepSpec) -> dict:
    meta = {
        "params": params_to_dict(spec.params),
        "variants": list(spec.variants),
        "tool_version": __version__,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "seed": None,
    }
    if spec.mc_config is not None:
        meta["seed"] = int(spec.mc_config.master_seed)
    return meta


def _check_finite(series: dict):
    for name, s in series.items():
        if not np.all(np.isfinite(s)):
            raise ArithmeticError(f"sweep series {name!r} contains non-finite values")


def sweep_survival_vs_time(spec: SweepSpec, threads: int | None = None) -> SweepResult:
    """Survival probability on a time grid for each requested variant.

    Closed-form variants use the noise components they model (see
    :meth:`ModelParams.restricted`).  The ``montecarlo`` variant runs an
    ensemble up to ``spec.stop``; when the grid spacing is a multiple of
    ``dt`` the recorded samples fall exactly on the grid, otherwise they are
    linearly interpolated.
    """
    if spec.axis != "time":
        raise ValidationError("survival sweeps run along the time axis")
    t = spec.values
    if t[0] < 0:
        raise ValidationError("time grid must be non-negative")
    series = {}
    for v in spec.variants:
        if v in CLOSED_FORMS:
            series[v] = np.atleast_1d(survival_closed_form(spec.params.restricted(v), t, v))
    meta = _metadata(spec)
    if "montecarlo" in spec.variants:
        cfg = spec.mc_config
        step = (t[1] - t[0]) / cfg.dt
        aligned = t[0] == 0.0 and abs(step - round(step)) < 1e-9 and round(step) >= 1
        cfg = replace(cfg, t_max=float(t[-1]), record_stride=int(round(step)) if aligned else cfg.record_stride)
        res = run_ensemble(spec.params, cfg, threads=threads)
        if aligned and res.t_grid.size == t.size:
            mean, err = res.p_mean, res.p_stderr
        else:
            mean = np.interp(t, res.t_grid, res.p_mean)
            err = np.interp(t, res.t_grid, res.p_stderr)
        series["montecarlo"] = mean
        series["montecarlo_stderr"] = err
        meta["n_traj"] = res.n_traj
        meta["dt"] = res.dt
        meta["backend"] = res.backend
    _check_finite(series)
    return SweepResult("time", t, series, {}, meta)


def _with_axis(p: ModelParams, axis: str, value: float) -> ModelParams:
    return replace(p, alpha=value) if axis == "alpha" else replace(p, omega=value)


def sweep_decay_rate_vs_alpha(spec: SweepSpec) -> SweepResult:
    """Long-time decay rate per closed-form variant along ``alpha`` (or ``omega``).

    Markers hold each variant's exceptional point and, for the noisy variants,
    the enhancement interval (both evaluated at the fixed parameters).
    """
    if spec.axis not in ("alpha", "omega"):
        raise ValidationError("decay-rate sweeps run along alpha or omega")
    if "montecarlo" in spec.variants:
        raise ValidationError("decay-rate sweeps are closed-form only")
    xs = spec.values
    series, markers = {}, {}
    for v in spec.variants:
        base = spec.params.restricted(v)
        series[v] = np.array([decay_rate(_with_axis(base, spec.axis, x), v) for x in xs])
        markers[f"alpha_exc_{v}"] = exceptional_point(base, v)
        if v != "noiseless":
            markers[f"interval_{v}"] = enhancement_interval(base, v).interval
    _check_finite(series)
    return SweepResult(spec.axis, xs, series, markers, _metadata(spec))


@dataclass(frozen=True)
class RegionMap:
    alphas: np.ndarray
    enhanced: np.ndarray
    intervals: list


def _refine(f, lo, hi, tol=REFINE_TOL):
    """Bisect for the sign change of ``f`` in ``[lo, hi]``."""
    flo = f(lo) > 0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if (f(mid) > 0) == flo:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def scan_enhancement_region(p: ModelParams, variant: str, alphas) -> RegionMap:
    """Brute-force map of ``decay_rate(variant) < decay_rate(noiseless)`` on a grid.

    Each maximal run of enhanced grid points becomes an interval whose
    endpoints are refined by bisection to ``1e-4`` (in the unit of omega).
    Needs ``g12 = g13 = 0``, where the closed forms are exact.
    """
    if not p.gamma.x_decoupled:
        raise VariantMismatch("enhancement scans require g12 = g13 = 0")
    if variant not in ("diagonal", "full"):
        raise VariantMismatch("scan a noisy variant: diagonal or full")
    base = p.restricted(variant)
    clean = p.restricted("noiseless")
    alphas = np.asarray(alphas, dtype=float)

    def gap(a):
        return decay_rate(base.with_alpha(a), variant) - decay_rate(clean.with_alpha(a), "noiseless")

    diffs = np.array([gap(a) for a in alphas])
    mask = diffs < 0
    intervals = []
    edges = np.flatnonzero(np.diff(mask.astype(np.int8)))
    start = alphas[0] if mask[0] else None
    for i in edges:
        point = _refine(gap, alphas[i], alphas[i + 1])
        if mask[i + 1]:
            start = point
        else:
            intervals.append((start, point))
            start = None
    if start is not None:
        intervals.append((start, alphas[-1]))
    return RegionMap(alphas, mask, [(float(a), float(b)) for a, b in intervals])
