"""Command-line entry point.

    qzeno <subcommand> --config run.json [--out PATH] [--format csv|json]
          [--seed N] [--threads N]

The config is a flat JSON object; ``gamma`` is the only nested object.  With
``unit_omega`` (default true) every rate in the config is read in units of
``omega`` and every time in units of ``1 / omega``.
"""
from __future__ import annotations

import argparse
import io
import json
import math
import os
import sys
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .errors import ParseError, ValidationError
from .model import (
    VARIANTS,
    ModelParams,
    NoiseCovariance,
    build_liouvillian,
    propagate_bloch,
    survival_closed_form,
    survival_probability,
)
from .operators import derive_kraus_from_detector, kraus_operators
from .spectral import (
    classify_regime,
    eigenvalues_closed_form,
    eigenvalues_numeric,
    enhancement_interval,
)
from .sweep import (
    SweepSpec,
    scan_enhancement_region,
    sweep_decay_rate_vs_alpha,
    sweep_survival_vs_time,
)
from .trajectory import TrajectoryConfig, run_ensemble

SUBCOMMANDS = ("spectrum", "evolve", "montecarlo", "sweep-decay", "sweep-survival", "regions", "validate", "kraus-check")
GAMMA_KEYS = ("g11", "g22", "g33", "g12", "g13", "g23")

_DEFAULTS = {
    "omega": 1.0,
    "alpha": 0.0,
    "gamma": None,
    "variant": None,
    "variants": None,
    "start": None,
    "stop": None,
    "n_points": None,
    "dt": 1e-3,
    "t_max": 10.0,
    "n_traj": 10_000,
    "seed": 42,
    "record_stride": None,
    "threads": None,
    "out": None,
    "format": "csv",
    "unit_omega": True,
}
_NUMBER_KEYS = ("omega", "alpha", "start", "stop", "dt", "t_max")
_INT_KEYS = ("n_points", "n_traj", "seed", "record_stride", "threads")


@dataclass
class RunConfig:
    """Parsed run configuration with physical units already applied."""

    params: ModelParams
    variant: str
    variants: tuple
    start: float | None
    stop: float | None
    n_points: int | None
    dt: float
    t_max: float
    n_traj: int
    seed: int
    record_stride: int | None
    threads: int | None
    out: str | None
    format: str
    unit_omega: bool
    raw: dict = field(default_factory=dict)

    @property
    def time_unit(self) -> float:
        return 1.0 / self.params.omega if self.unit_omega and self.params.omega > 0 else 1.0

    @property
    def rate_unit(self) -> float:
        return self.params.omega if self.unit_omega and self.params.omega > 0 else 1.0

    def trajectory_config(self, t_max: float | None = None) -> TrajectoryConfig:
        return TrajectoryConfig(
            dt=self.dt,
            t_max=self.t_max if t_max is None else t_max,
            n_traj=self.n_traj,
            master_seed=self.seed,
            record_stride=self.record_stride,
        )

    def echo(self) -> dict:
        return dict(sorted(self.raw.items()))


def _line_of(text: str, key: str) -> int | None:
    for n, line in enumerate(text.splitlines(), 1):
        if f'"{key}"' in line:
            return n
    return None


def _fail(text, key, message):
    line = _line_of(text, key)
    where = f" (line {line})" if line else ""
    raise ParseError(f"config key {key!r}{where}: {message}")


def _infer_variant(g: NoiseCovariance) -> str:
    if g.is_zero:
        return "noiseless"
    return "diagonal" if g.is_diagonal else "full"


def parse_config(text: str) -> RunConfig:
    """Parse and validate a JSON run configuration.

    Raises :class:`ParseError` for malformed text, unknown keys or wrong
    types and :class:`ValidationError` for unphysical parameters.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ParseError("config must be a JSON object")
    unknown = sorted(set(doc) - set(_DEFAULTS))
    if unknown:
        _fail(text, unknown[0], "unknown key")
    raw = {**_DEFAULTS, **doc}

    for key in _NUMBER_KEYS:
        v = raw[key]
        if v is not None and (isinstance(v, bool) or not isinstance(v, (int, float))):
            _fail(text, key, f"expected a number, got {v!r}")
    for key in _INT_KEYS:
        v = raw[key]
        if v is not None and (isinstance(v, bool) or not isinstance(v, int)):
            _fail(text, key, f"expected an integer, got {v!r}")
    if not isinstance(raw["unit_omega"], bool):
        _fail(text, "unit_omega", "expected true or false")
    if raw["format"] not in ("csv", "json"):
        _fail(text, "format", "expected 'csv' or 'json'")

    gamma_doc = raw["gamma"] or {}
    if not isinstance(gamma_doc, dict):
        _fail(text, "gamma", "expected an object of g11..g23 entries")
    for key, v in gamma_doc.items():
        if key not in GAMMA_KEYS:
            _fail(text, key, f"unknown gamma entry (allowed: {', '.join(GAMMA_KEYS)})")
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            _fail(text, key, f"expected a number, got {v!r}")

    omega = float(raw["omega"])
    unit_omega = raw["unit_omega"]
    scale = omega if unit_omega and omega > 0 else 1.0
    gamma = NoiseCovariance(**{k: float(v) * scale for k, v in gamma_doc.items()})
    params = ModelParams(omega, float(raw["alpha"]) * scale, gamma)

    variant = raw["variant"] or _infer_variant(gamma)
    if variant not in VARIANTS:
        _fail(text, "variant", f"expected one of {VARIANTS}")
    variants = raw["variants"]
    if variants is None:
        variants = VARIANTS
    elif not isinstance(variants, list) or not all(isinstance(v, str) for v in variants):
        _fail(text, "variants", "expected a list of variant names")
    tscale = 1.0 / scale
    cfg = RunConfig(
        params=params,
        variant=variant,
        variants=tuple(variants),
        start=raw["start"],
        stop=raw["stop"],
        n_points=raw["n_points"],
        dt=float(raw["dt"]) * tscale,
        t_max=float(raw["t_max"]) * tscale,
        n_traj=raw["n_traj"],
        seed=raw["seed"],
        record_stride=raw["record_stride"],
        threads=raw["threads"],
        out=raw["out"],
        format=raw["format"],
        unit_omega=unit_omega,
        raw=doc,
    )
    cfg.trajectory_config()  # validates the Monte-Carlo fields
    return cfg


# ---------------------------------------------------------------- output


def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    return format(float(v), ".17g")


def write_csv(header, rows) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(fmt(v) for v in row) + "\n")
    return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else ("inf" if f > 0 else "-inf" if f < 0 else "nan")
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def write_json(cfg: RunConfig, subcommand: str, data: dict) -> str:
    doc = {
        "meta": {
            "tool": "qzeno",
            "version": __version__,
            "subcommand": subcommand,
            "seed": cfg.seed,
            "config": cfg.echo(),
        },
        "data": _jsonable(data),
    }
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


@dataclass
class Output:
    header: list
    rows: list
    data: dict


# ---------------------------------------------------------------- commands


def _grid(cfg: RunConfig, start, stop, n, in_time=False):
    unit = cfg.time_unit if in_time else cfg.rate_unit
    a = (cfg.start if cfg.start is not None else start) * unit
    b = (cfg.stop if cfg.stop is not None else stop) * unit
    return a, b, cfg.n_points if cfg.n_points is not None else n


def cmd_spectrum(cfg: RunConfig) -> Output:
    p = cfg.params
    closed = eigenvalues_closed_form(p, cfg.variant)
    numeric = eigenvalues_numeric(build_liouvillian(p))
    report = classify_regime(p, cfg.variant)
    data = {
        "variant": cfg.variant,
        "eigenvalues": closed.real,
        "eigenvalues_imag": closed.imag,
        "numeric_eigenvalues": numeric.eigenvalues.real,
        "numeric_eigenvalues_imag": numeric.eigenvalues.imag,
        "defective": numeric.defective,
        "condition_number": numeric.condition_number,
        "alpha_exc": report.alpha_exc,
        "regime": report.regime,
        "decay_rate": report.decay_rate,
        "enhancement": report.enhancement,
        "interval": report.interval,
        "conditions": report.conditions,
    }
    rows = [(f"closed_{k + 1}", v.real, v.imag) for k, v in enumerate(closed)]
    rows += [(f"numeric_{k + 1}", v.real, v.imag) for k, v in enumerate(numeric.eigenvalues)]
    return Output(["mode", "re", "im"], rows, data)


def cmd_evolve(cfg: RunConfig) -> Output:
    a, b, n = _grid(cfg, 0.0, 6.0, 601, in_time=True)
    t = np.linspace(a, b, n)
    states = propagate_bloch(build_liouvillian(cfg.params), t=t)
    p = survival_probability(states)
    closed = survival_closed_form(cfg.params.restricted(cfg.variant), t, cfg.variant)
    rows = [(ti, *s, pi, ci) for ti, s, pi, ci in zip(t, states, p, closed)]
    data = {"t": t, "x": states[:, 0], "y": states[:, 1], "z": states[:, 2], "p": p, "p_closed": closed}
    return Output(["t", "x", "y", "z", "p", "p_closed"], rows, data)


def cmd_montecarlo(cfg: RunConfig) -> Output:
    res = run_ensemble(cfg.params, cfg.trajectory_config(), threads=cfg.threads)
    p = cfg.params
    analytic = survival_closed_form(p.restricted("full"), res.t_grid, "full")
    rows = list(zip(res.t_grid, res.p_mean, res.p_stderr, analytic))
    data = {
        "t": res.t_grid,
        "p_mean": res.p_mean,
        "p_stderr": res.p_stderr,
        "p_analytic": analytic,
        "n_traj": res.n_traj,
        "dt": res.dt,
    }
    return Output(["t", "p_mean", "p_stderr", "p_analytic"], rows, data)


def _near(values, target):
    if target is None or not (values[0] <= target <= values[-1]):
        return -1
    return int(np.argmin(np.abs(values - target)))


def cmd_sweep_decay(cfg: RunConfig) -> Output:
    a, b, n = _grid(cfg, 0.0, 16.0, 1000)
    res = sweep_decay_rate_vs_alpha(SweepSpec("alpha", a, b, n, cfg.params, VARIANTS))
    xs = res.values
    tags = {"noiseless": "nonoise", "diagonal": "dn", "full": "fn"}
    exc = {v: _near(xs, res.markers[f"alpha_exc_{v}"]) for v in VARIANTS}
    rows = []
    for i, x in enumerate(xs):
        flags = [f"exc_{tags[v]}" for v in VARIANTS if exc[v] == i]
        for v in ("diagonal", "full"):
            iv = res.markers[f"interval_{v}"]
            if iv is not None and iv[0] < x < iv[1]:
                flags.append(f"enh_{tags[v]}")
        rows.append((x, res.series["noiseless"][i], res.series["diagonal"][i], res.series["full"][i], ";".join(flags)))
    data = {"alpha": xs, **{f"rate_{tags[v]}": res.series[v] for v in VARIANTS}, "markers": res.markers}
    return Output(["alpha", "rate_nonoise", "rate_dn", "rate_fn", "flags"], rows, data)


def cmd_sweep_survival(cfg: RunConfig) -> Output:
    a, b, n = _grid(cfg, 0.0, 6.0, 601, in_time=True)
    mc = cfg.trajectory_config(t_max=b) if "montecarlo" in cfg.variants else None
    spec = SweepSpec("time", a, b, n, cfg.params, tuple(cfg.variants), mc)
    res = sweep_survival_vs_time(spec, threads=cfg.threads)
    names = {"noiseless": "p_nonoise", "diagonal": "p_dn", "full": "p_fn", "montecarlo": "p_mc", "montecarlo_stderr": "p_mc_stderr"}
    keys = [k for k in names if k in res.series]
    rows = [(t, *(res.series[k][i] for k in keys)) for i, t in enumerate(res.values)]
    data = {"t": res.values, **{names[k]: res.series[k] for k in keys}}
    return Output(["t", *(names[k] for k in keys)], rows, data)


def cmd_regions(cfg: RunConfig) -> Output:
    a, b, n = _grid(cfg, 0.0, 16.0, 1000)
    alphas = np.linspace(a, b, n)
    p = cfg.params.restricted("full")
    maps = {v: scan_enhancement_region(p, v, alphas) for v in ("diagonal", "full")}
    closed = {v: enhancement_interval(p.restricted(v), v) for v in ("diagonal", "full")}
    rows = list(zip(alphas, maps["diagonal"].enhanced, maps["full"].enhanced))
    data = {
        "alpha": alphas,
        "enh_dn": maps["diagonal"].enhanced,
        "enh_fn": maps["full"].enhanced,
        "scan_intervals": {v: m.intervals for v, m in maps.items()},
        "closed_form": {v: {"interval": e.interval, "conditions": [e.a, e.b]} for v, e in closed.items()},
    }
    return Output(["alpha", "enh_dn", "enh_fn"], rows, data)


def cmd_validate(cfg: RunConfig) -> Output:
    p = cfg.params
    data = {"valid": True, "variant": cfg.variant, "params": asdict(p)}
    return Output(["key", "value"], [("valid", True), ("variant", cfg.variant)], data)


def cmd_kraus_check(cfg: RunConfig) -> Output:
    n = cfg.n_points if cfg.n_points is not None else 101
    rows = []
    for theta in np.linspace(0.0, math.pi / 2, n):
        derived = derive_kraus_from_detector(theta)
        ref = kraus_operators(theta)
        dev = max(np.max(np.abs(derived.m0 - ref.m0)), np.max(np.abs(derived.m1 - ref.m1)))
        comp = np.max(np.abs(derived.completeness() - np.eye(2)))
        rows.append((theta, dev, comp))
    arr = np.array(rows)
    data = {"theta": arr[:, 0], "max_deviation": arr[:, 1], "completeness_error": arr[:, 2], "worst": float(arr[:, 1:].max())}
    return Output(["theta", "max_deviation", "completeness_error"], rows, data)


COMMANDS = {
    "spectrum": cmd_spectrum,
    "evolve": cmd_evolve,
    "montecarlo": cmd_montecarlo,
    "sweep-decay": cmd_sweep_decay,
    "sweep-survival": cmd_sweep_survival,
    "regions": cmd_regions,
    "validate": cmd_validate,
    "kraus-check": cmd_kraus_check,
}


def dispatch(subcommand: str, cfg: RunConfig) -> str:
    """Run ``subcommand`` and return the rendered output text."""
    if subcommand not in COMMANDS:
        raise ValueError(f"unknown subcommand {subcommand!r}")
    out = COMMANDS[subcommand](cfg)
    if cfg.format == "json":
        return write_json(cfg, subcommand, out.data)
    return write_csv(out.header, out.rows)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qzeno", description=__doc__.splitlines()[0])
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", help="JSON run configuration (default: all defaults)")
    parser.add_argument("--out", help="output file (default: stdout)")
    parser.add_argument("--format", choices=("csv", "json"))
    parser.add_argument("--seed", type=int, help="unsigned 64-bit master seed")
    parser.add_argument("--threads", type=int, help="worker threads (env ZENO_THREADS)")
    parser.add_argument("--version", action="version", version=f"qzeno {__version__}")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        text = "{}"
        if args.config:
            with open(args.config, encoding="utf-8") as fh:
                text = fh.read()
        cfg = parse_config(text)
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ValidationError("--seed must be an unsigned 64-bit integer")
            cfg.seed = args.seed
        if args.format:
            cfg.format = args.format
        threads = args.threads if args.threads is not None else os.environ.get("ZENO_THREADS")
        if threads is not None:
            try:
                cfg.threads = int(threads)
            except ValueError:
                raise ValidationError(f"thread count must be an integer, got {threads!r}") from None
        if cfg.threads is not None and cfg.threads < 1:
            raise ValidationError("thread count must be at least 1")
        out = args.out or cfg.out
        rendered = dispatch(args.subcommand, cfg)
        if out:
            with open(out, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(rendered)
        else:
            sys.stdout.write(rendered)
    except (ValidationError, ParseError, OSError) as exc:
        print(f"qzeno: error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        print(f"qzeno: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
