"""Experiment configuration, dispatch and result emission for the command line."""

from dataclasses import asdict, dataclass, fields
import csv
import hashlib
import io
import json
import math
from pathlib import Path
import time

import numpy as np

from . import analysis
from .kernel import (
    Grid1D,
    KernelSpec,
    ResolutionError,
    kernel_closed_form,
    kernel_values,
    self_similarity_residual,
    semigroup_residual,
)
from .solver import (
    INITIAL_KINDS,
    PRESETS,
    InitialCondition,
    PicardNotConverged,
    SimConfig,
    SolverDivergence,
    evolve_mild,
    factorial_envelope,
    noise_for,
    picard_solve,
    preset,
)

COMMANDS = ("verify-kernel", "simulate", "picard-demo", "regularity-sweep", "moments", "appendix-check")
FORMATS = ("csv", "json")


class ConfigError(ValueError):
    """Invalid or incomplete experiment configuration."""


@dataclass(frozen=True)
class ExperimentConfig:
    command: str
    seed: int
    lam: float = 2.0
    rho: float = 1.0
    preset: str = "additive"
    sigma0: float = 1.0
    initial: str = "auto"
    amplitude: float = 1.0
    grid_l: float = 16.0
    grid_n: int = 1024
    dt: float = 1e-3
    horizon: float = 0.5
    t: float = 1.0
    p: float = 2.0
    n_replicates: int = 100
    out: str = "results"
    format: str = "csv"

    def resolved(self):
        """Every field, defaults included, under its config-file key."""
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        return dict(sorted(d.items()))

    @property
    def config_hash(self):
        """Git-style blob hash of the canonical resolved configuration, output path excluded."""
        d = self.resolved()
        d.pop("out")
        body = json.dumps(d, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha1(b"blob %d\0" % len(body) + body).hexdigest()

    @property
    def experiment_id(self):
        return f"{self.command}-{self.config_hash[:12]}"

    @property
    def n_steps(self):
        return int(round(self.horizon / self.dt))

    def initial_condition(self):
        kind = self.initial
        if kind == "auto":
            kind = "smooth_cosine" if self.rho == 1.0 else "hoelder_rough"
        return InitialCondition(kind, amplitude=self.amplitude, rho=self.rho, seed=self.seed)

    def coefficients(self):
        if self.preset == "additive":
            return preset("additive", sigma0=self.sigma0)
        return preset(self.preset)

    def sim_config(self):
        spec = KernelSpec(self.lam, Grid1D(self.grid_l, self.grid_n))
        return SimConfig(spec, self.dt, self.n_steps, self.coefficients(), self.initial_condition(), seed=self.seed)


_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}
_KEY_ALIASES = {"lambda": "lam"}


def _field_name(key):
    key = key.strip().replace("-", "_")
    return _KEY_ALIASES.get(key, key)


def _coerce(name, raw, where):
    kind = _FIELD_TYPES[name]
    if kind in ("str", str):
        return str(raw).strip()
    try:
        if kind in ("int", int):
            value = float(raw)
            if not value.is_integer():
                raise ValueError
            return int(value)
        value = float(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: key '{name if name != 'lam' else 'lambda'}' expects a number, got {raw!r}") from None
    if not math.isfinite(value):
        raise ConfigError(f"{where}: key '{name if name != 'lam' else 'lambda'}' must be finite, got {raw!r}")
    return value


def parse_config_text(text, source="<config>"):
    """Parse ``key = value`` lines (``#`` starts a comment) into typed fields."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{source} line {lineno}: expected 'key = value', got {line.strip()!r}")
        key, raw = (s.strip() for s in body.split("=", 1))
        name = _field_name(key)
        if name not in _FIELD_TYPES:
            raise ConfigError(f"{source} line {lineno}: unknown key '{key}'")
        out[name] = _coerce(name, raw, f"{source} line {lineno}")
    return out


def _read_file(path):
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    text = path.read_text()
    if path.suffix == ".json":
        data = json.loads(text)
        data = data.get("config", data)
        out = {}
        for key, raw in data.items():
            name = _field_name(key)
            if name not in _FIELD_TYPES:
                raise ConfigError(f"{path}: unknown key '{key}'")
            out[name] = _coerce(name, raw, str(path))
        return out
    return parse_config_text(text, str(path))


def validate(cfg):
    """Field-level checks; raises ConfigError naming the offending key."""
    if cfg.command not in COMMANDS:
        raise ConfigError(f"command: unknown command {cfg.command!r}; choose from {', '.join(COMMANDS)}")
    lam_ok = 1.0 < cfg.lam <= 2.0 or (cfg.command == "verify-kernel" and 0.0 < cfg.lam <= 2.0)
    if not lam_ok:
        raise ConfigError(
            f"lambda: {cfg.lam} is outside the admissible range (1, 2]"
            + (" (verify-kernel also accepts (0, 1])" if cfg.command == "verify-kernel" else "")
        )
    if not 0.0 < cfg.rho <= 1.0:
        raise ConfigError(f"rho: {cfg.rho} is outside (0, 1]")
    if cfg.preset not in PRESETS:
        raise ConfigError(f"preset: unknown preset {cfg.preset!r}; choose from {', '.join(sorted(PRESETS))}")
    if cfg.initial != "auto" and cfg.initial not in INITIAL_KINDS:
        raise ConfigError(f"initial: unknown initial condition {cfg.initial!r}; choose from auto, {', '.join(INITIAL_KINDS)}")
    if cfg.initial not in ("auto", "hoelder_rough") and cfg.rho != 1.0:
        raise ConfigError(f"rho: {cfg.initial} initial data is smooth, rho must be 1")
    if cfg.grid_n < 4 or cfg.grid_n % 2:
        raise ConfigError(f"grid_n: must be an even integer >= 4, got {cfg.grid_n}")
    for name in ("grid_l", "dt", "horizon", "t"):
        if not getattr(cfg, name) > 0:
            raise ConfigError(f"{name}: must be positive, got {getattr(cfg, name)}")
    if abs(cfg.n_steps * cfg.dt - cfg.horizon) > 1e-9 * cfg.horizon or cfg.n_steps < 1:
        raise ConfigError(f"horizon: {cfg.horizon} is not a whole number of steps of dt={cfg.dt}")
    if cfg.p < 1:
        raise ConfigError(f"p: must be >= 1, got {cfg.p}")
    if cfg.n_replicates < 1:
        raise ConfigError(f"n_replicates: must be >= 1, got {cfg.n_replicates}")
    if cfg.command in ("moments", "regularity-sweep") and cfg.n_replicates < 100:
        raise ConfigError(f"n_replicates: {cfg.command} needs at least 100, got {cfg.n_replicates}")
    if not 0 <= cfg.seed < 2 ** 64:
        raise ConfigError(f"seed: must be a 64-bit unsigned integer, got {cfg.seed}")
    if cfg.format not in FORMATS:
        raise ConfigError(f"format: choose from {', '.join(FORMATS)}, got {cfg.format!r}")
    return cfg


def load_config(path=None, overrides=None):
    """Resolve a configuration from an optional file plus flag overrides (flags win)."""
    values = _read_file(path) if path is not None else {}
    for key, raw in (overrides or {}).items():
        if raw is None:
            continue
        name = _field_name(key)
        if name not in _FIELD_TYPES:
            raise ConfigError(f"unknown option '{key}'")
        values[name] = _coerce(name, raw, "command line")
    if "command" not in values:
        raise ConfigError("command: missing")
    if "seed" not in values:
        raise ConfigError("seed: missing; every experiment needs an explicit seed")
    return validate(ExperimentConfig(**values))


# -- experiments -------------------------------------------------------------------


def _row(quantity, index, value, stderr=None):
    return {"quantity": quantity, "index": index, "value": float(value),
            "stderr": None if stderr is None else float(stderr)}


def _verify_kernel(cfg):
    spec = KernelSpec(cfg.lam, Grid1D(cfg.grid_l, cfg.grid_n))
    kv = kernel_values(spec, cfg.t)
    rows = [
        _row("mass", 0, kv.mass),
        _row("min_value", 0, float(np.min(kv.values))),
        _row("self_similarity_residual", 0, self_similarity_residual(spec, cfg.t)),
        _row("semigroup_residual", 0, semigroup_residual(spec, cfg.t / 2, cfg.t / 2)),
    ]
    if cfg.lam in (1.0, 2.0):
        exact = kernel_closed_form(cfg.lam, cfg.t, spec.grid.x)
        rows.append(_row("closed_form_sup_error", 0, float(np.max(np.abs(kv.values - exact)))))
    return rows


def _simulate(cfg):
    sim = cfg.sim_config()
    traj = evolve_mild(sim, noise_for(sim, 0))
    u = traj.snapshots[-1]
    rows = [_row("x", j, v) for j, v in enumerate(sim.grid.x)]
    rows += [_row("u_T", j, v) for j, v in enumerate(u)]
    rows.append(_row("sup_abs_u", 0, float(np.max(np.abs(traj.snapshots)))))
    return rows


def _picard_demo(cfg):
    sim = cfg.sim_config()
    noise = noise_for(sim, 0)
    res = picard_solve(sim, noise)
    rows = [_row("distance", n, d) for n, d in enumerate(res.distances, start=1)]
    rows.append(_row("iterations", 0, res.iterations))
    euler = evolve_mild(sim, noise)
    rows.append(_row("sup_diff_vs_euler", 0, float(np.max(np.abs(res.trajectory.snapshots - euler.snapshots)))))
    if sum(d > 0 for d in res.distances[2:]) >= 2:
        c, r = factorial_envelope(res.distances)
        rows += [_row("envelope_c", 0, c), _row("envelope_R", 0, r)]
    return rows


def default_lags(sim):
    """Seven geometric lags per direction spanning 1.5 decades.

    Time lags end at T/4. Space lags end at 0.3 (T/2)^{1/lam}, below the
    scale where the field decorrelates at the earliest base time; on coarse
    grids they are floored at one cell and the span shrinks.
    """
    h_max = max(int(round(sim.n_steps / 4)), 4)
    steps = np.unique(np.round(np.geomspace(max(h_max / 10 ** 1.5, 1), h_max, 7)).astype(int))
    z_max = 0.3 * (sim.horizon / 2) ** (1.0 / sim.spec.lam)
    n_max = max(int(round(z_max / sim.grid.dx)), 4)
    n_max = min(n_max, sim.grid.n_points // 4)
    cells = np.unique(np.round(np.geomspace(max(n_max / 10 ** 1.5, 1), n_max, 7)).astype(int))
    return steps * sim.dt, cells * sim.grid.dx


def _regularity_sweep(cfg):
    sim = cfg.sim_config()
    time_lags, space_lags = default_lags(sim)
    tables = analysis.increment_tables(
        sim, [("time", cfg.p, time_lags), ("space", cfg.p, space_lags)], cfg.n_replicates, cfg.seed
    )
    rows = []
    for tab in tables:
        fit = analysis.fit_holder_exponent(tab)
        d = tab.direction
        rows += [_row(f"{d}_lag", i, h) for i, h in enumerate(tab.lags)]
        rows += [_row(f"{d}_moment", i, m, s) for i, (m, s) in enumerate(zip(tab.moments, tab.stderr))]
        rows.append(_row(f"{d}_gamma", 0, fit.estimated_gamma, fit.stderr))
        rows.append(_row(f"{d}_bound", 0, fit.theoretical_bound))
    return rows


def _moments(cfg):
    sim = cfg.sim_config()
    est = analysis.estimate_moments(sim, cfg.p, sim.horizon, cfg.n_replicates, cfg.seed)
    rows = [_row("moment", j, v, s) for j, (v, s) in enumerate(zip(est.values, est.stderr))]
    rows.append(_row("sup_moment", est.argmax, est.sup_over_grid, est.sup_stderr))
    return rows


def holder_trials(q, n_instances, seed, size=16):
    """Random instances of the weighted Hoelder inequality; returns (violations, worst lhs/rhs)."""
    rng = np.random.default_rng([seed, int(round(q * 1000))])
    violations = 0
    worst = 0.0
    for _ in range(n_instances):
        f = rng.standard_normal(size)
        h = rng.standard_normal(size)
        mu = rng.uniform(0.0, 1.0, size)
        res = analysis.weighted_holder_check(f, h, mu, q)
        violations += not res.passed
        if res.rhs > 0:
            worst = max(worst, res.lhs / res.rhs)
    return violations, worst


GRONWALL_MATRIX = (
    # (theta, alpha, beta, M, saturate)
    (0.25, 0.0, 1.0, 1.0, True),
    (1 / 3, 0.0, 1.0, 1.0, True),
    (0.5, 0.0, 1.0, 1.0, True),
    (1.0, 0.0, 1.0, 1.0, True),
    (0.25, 1.0, 1.0, 1.0, False),
    (1 / 3, 1.0, 1.0, 1.0, False),
    (0.5, 1.0, 1.0, 1.0, False),
    (1.0, 1.0, 1.0, 1.0, False),
)


def _appendix_check(cfg):
    rows = []
    for i, q in enumerate((1.5, 2.0, 3.0, 7.0)):
        bad, worst = holder_trials(q, 10_000, cfg.seed)
        rows += [_row("holder_q", i, q), _row("holder_violations", i, bad), _row("holder_worst_ratio", i, worst)]
    t_grid = np.linspace(0.0, 1.0, 11)[1:]
    for i, (theta, a, b, M, sat) in enumerate(GRONWALL_MATRIX):
        res = analysis.gronwall_property_check(theta, a, b, M, t_grid, 10, seed=cfg.seed, saturate=sat)
        rows += [
            _row("gronwall_theta", i, theta),
            _row("gronwall_passed", i, float(res.passed)),
            _row("gronwall_worst_margin", i, res.worst_margin),
            _row("gronwall_first_violation_n", i, res.first_violation[0] if res.first_violation else 0),
        ]
    return rows


_DISPATCH = {
    "verify-kernel": _verify_kernel,
    "simulate": _simulate,
    "picard-demo": _picard_demo,
    "regularity-sweep": _regularity_sweep,
    "moments": _moments,
    "appendix-check": _appendix_check,
}


# -- output ----------------------------------------------------------------------------


def format_results(cfg, rows):
    """Serialise result rows; identical inputs give identical bytes."""
    if cfg.format == "json":
        doc = {"experiment": cfg.experiment_id, "config_hash": cfg.config_hash, "results": rows}
        return json.dumps(doc, indent=1, sort_keys=True) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["experiment", "config_hash", "quantity", "index", "value", "stderr"])
    for r in rows:
        w.writerow([cfg.experiment_id, cfg.config_hash, r["quantity"], r["index"], repr(r["value"]),
                    "" if r["stderr"] is None else repr(r["stderr"])])
    return buf.getvalue()


def run(cfg):
    """Run one experiment and write ``results.<format>`` and ``manifest.json`` under ``cfg.out``.

    Returns the manifest dictionary.
    """
    out = Path(cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"out: cannot create output directory {out}: {exc}") from None
    start = time.perf_counter()
    rows = _DISPATCH[cfg.command](cfg)
    wall = time.perf_counter() - start
    results_name = f"results.{cfg.format}"
    (out / results_name).write_text(format_results(cfg, rows))
    manifest = {
        "experiment": cfg.experiment_id,
        "config_hash": cfg.config_hash,
        "config": cfg.resolved(),
        "results_file": results_name,
        "n_results": len(rows),
        "wall_time_s": wall,
        "workers": analysis.worker_count(),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return manifest


NUMERICAL_ERRORS = (ResolutionError, SolverDivergence, PicardNotConverged, ArithmeticError)
