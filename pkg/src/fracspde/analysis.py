"""Monte Carlo moment and regularity estimation, plus the Gronwall-type iteration and weighted Hoelder inequality checks."""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import math
import os

import numpy as np
from scipy import integrate, special

from . import _accel
from .solver import SolverDivergence, evolve_batch


# -- theoretical exponents ---------------------------------------------------------


@dataclass(frozen=True)
class ExponentBounds:
    alpha_max: float
    beta_max: float


def theoretical_exponents(lam, rho):
    """Upper limits of the time and space Hoelder exponents.

    alpha < min(rho / lam, (lam - 1) / (2 lam)),  beta < min(rho, (lam - 1) / 2).
    """
    if not 1.0 < lam <= 2.0:
        raise ValueError(f"lambda must lie in (1, 2], got {lam}")
    if not 0.0 < rho <= 1.0:
        raise ValueError(f"rho must lie in (0, 1], got {rho}")
    return ExponentBounds(min(rho / lam, (lam - 1.0) / (2.0 * lam)), min(rho, (lam - 1.0) / 2.0))


def remark_exponents(lam):
    """Interior-time exponents ((lam - 1) / (2 lam), (lam - 1) / 2), independent of the initial data."""
    if not 1.0 < lam <= 2.0:
        raise ValueError(f"lambda must lie in (1, 2], got {lam}")
    return ExponentBounds((lam - 1.0) / (2.0 * lam), (lam - 1.0) / 2.0)


# -- replicate plumbing ------------------------------------------------------------


def worker_count():
    """Worker pool size: FRACSPDE_THREADS if set, else the CPU count."""
    env = os.environ.get("FRACSPDE_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _chunks(n_replicates, chunk):
    return [range(s, min(s + chunk, n_replicates)) for s in range(0, n_replicates, chunk)]


def _map_chunks(fn, chunks, workers=None):
    # results come back in chunk order so merged sums do not depend on scheduling
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(chunks) == 1:
        return [fn(c) for c in chunks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, chunks))


def _mesh_step(value, dt, what):
    k = round(value / dt)
    if abs(k * dt - value) > 1e-9 * max(1.0, abs(value)):
        raise ValueError(f"{what}={value} is not a multiple of the mesh spacing {dt}")
    return k


def _run_chunk(config, reps, seed, on_state, last_step):
    try:
        for m, u in evolve_batch(config, reps, seed):
            on_state(m, u)
            if m >= last_step:
                break
    except SolverDivergence as exc:
        replicate = None if exc.replicate is None else reps[exc.replicate]
        raise SolverDivergence(exc.step, replicate) from exc


# -- moments -------------------------------------------------------------------------


@dataclass
class MomentEstimate:
    p: float
    t: float
    sup_over_grid: float
    values: np.ndarray = field(repr=False)
    stderr: np.ndarray = field(repr=False)
    n_replicates: int
    argmax: int

    @property
    def sup_stderr(self):
        return float(self.stderr[self.argmax])


def estimate_moments(config, p, t, n_replicates, seed, chunk=250, workers=None):
    """Per-grid-point Monte Carlo estimates of E|u(t, x_j)|^p and their supremum.

    ``p`` may also be a sequence; the moments are then accumulated from the
    same replicates in one pass and a list of estimates is returned.
    """
    ps = [float(q) for q in np.atleast_1d(p)]
    if min(ps) < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    if n_replicates < 100:
        raise ValueError("n_replicates must be at least 100")
    m_t = _mesh_step(t, config.dt, "t")
    if not 0 <= m_t <= config.n_steps:
        raise ValueError(f"t={t} outside [0, {config.horizon}]")
    n = config.grid.n_points

    def work(reps):
        acc = np.zeros((len(ps), n))
        acc2 = np.zeros((len(ps), n))

        def on_state(m, u):
            if m == m_t:
                for i, q in enumerate(ps):
                    a = np.abs(u) ** q
                    acc[i] += a.sum(axis=0)
                    acc2[i] += (a * a).sum(axis=0)

        _run_chunk(config, reps, seed, on_state, m_t)
        return acc, acc2

    parts = _map_chunks(work, _chunks(n_replicates, chunk), workers)
    s1 = sum(pt[0] for pt in parts)
    s2 = sum(pt[1] for pt in parts)
    mean = s1 / n_replicates
    var = np.maximum(s2 / n_replicates - mean ** 2, 0.0) * n_replicates / (n_replicates - 1)
    err = np.sqrt(var / n_replicates)
    out = []
    for i, q in enumerate(ps):
        j = int(np.argmax(mean[i]))
        out.append(MomentEstimate(q, float(t), float(mean[i, j]), mean[i], err[i], n_replicates, j))
    return out if np.ndim(p) else out[0]


# -- increments ----------------------------------------------------------------------


@dataclass
class IncrementTable:
    direction: str
    p: float
    lags: np.ndarray
    moments: np.ndarray
    stderr: np.ndarray
    lam: float
    rho: float
    n_replicates: int
    base_times: tuple = ()
    mean_moments: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.lags = np.asarray(self.lags, dtype=float)
        self.moments = np.asarray(self.moments, dtype=float)
        self.stderr = np.asarray(self.stderr, dtype=float)
        if self.direction not in ("time", "space"):
            raise ValueError(f"direction must be 'time' or 'space', got {self.direction!r}")
        if np.any(np.diff(self.lags) <= 0):
            raise ValueError("lags must be strictly increasing")


def default_base_times(config, max_lag_steps, window=(0.5, 1.0), n_base=4):
    """Evenly spaced base step indices in [window[0] T, window[1] T - max lag]."""
    lo = int(math.ceil(window[0] * config.n_steps))
    hi = int(math.floor(window[1] * config.n_steps)) - max_lag_steps
    if hi < lo:
        raise ValueError("base window too short for the largest lag")
    return tuple(sorted(set(np.linspace(lo, hi, n_base).round().astype(int).tolist())))


def increment_table(config, direction, p, lags, n_replicates, seed, base_times=None,
                    window=(0.5, 1.0), n_base=4, chunk=100, workers=None, use_numba=None):
    """Sup over base points of E|u(t + h, x) - u(t, x)|^p (time) or E|u(t, x + z) - u(t, x)|^p (space).

    Every lag is evaluated on the same replicates (common random numbers).
    ``base_times`` are step indices; by default ``n_base`` of them spread over
    ``window`` (fractions of the horizon), leaving room for the largest lag.
    All grid points serve as base abscissae.
    """
    return increment_tables(config, [(direction, p, lags)], n_replicates, seed, base_times=base_times,
                            window=window, n_base=n_base, chunk=chunk, workers=workers,
                            use_numba=use_numba)[0]


def increment_tables(config, requests, n_replicates, seed, base_times=None, window=(0.5, 1.0),
                     n_base=4, chunk=100, workers=None, use_numba=None):
    """Several increment tables from one set of trajectories.

    ``requests`` is a sequence of (direction, p, lags). All tables share the
    base times and the replicates.
    """
    plans = []
    for direction, p, lags in requests:
        if direction not in ("time", "space"):
            raise ValueError(f"direction must be 'time' or 'space', got {direction!r}")
        lags = np.asarray(lags, dtype=float)
        step = config.dt if direction == "time" else config.grid.dx
        steps = np.array([_mesh_step(h, step, "lag") for h in lags])
        if np.any(steps < 0) or np.any(np.diff(steps) <= 0):
            raise ValueError("lags must be non-negative and strictly increasing")
        if direction == "space" and steps[-1] >= config.grid.n_points:
            raise ValueError("spatial lag exceeds the box")
        plans.append((direction, float(p), lags, steps))
    max_shift = max((int(st[-1]) for d, _, _, st in plans if d == "time"), default=0)
    if base_times is None:
        base_times = default_base_times(config, max_shift, window, n_base)
    base_times = tuple(int(b) for b in base_times)
    if min(base_times) < 0 or max(base_times) + max_shift > config.n_steps:
        raise ValueError("base time plus lag runs past the horizon")
    n = config.grid.n_points
    nb = len(base_times)
    last = max(base_times) + max_shift
    # time requests keyed by absolute step: (plan, base, lag) triples to update
    due = {}
    for k, (d, _, _, steps) in enumerate(plans):
        if d == "time":
            for b, mb in enumerate(base_times):
                for i, s in enumerate(steps):
                    due.setdefault(mb + int(s), []).append((k, b, i))

    def work(reps):
        acc = [np.zeros((nb, len(st), n)) for _, _, _, st in plans]
        acc2 = [np.zeros((nb, len(st), n)) for _, _, _, st in plans]
        stored = {}

        def on_state(m, u):
            if m in base_times:
                b = base_times.index(m)
                stored[m] = u.copy()
                for k, (d, p, _, steps) in enumerate(plans):
                    if d == "space":
                        for i, s in enumerate(steps):
                            _accel.shift_power_sum(acc[k][b, i], acc2[k][b, i], u, int(s), p, use_numba)
            for k, b, i in due.get(m, ()):
                _accel.abs_power_sum(acc[k][b, i], acc2[k][b, i], u, stored[base_times[b]], plans[k][1], use_numba)

        _run_chunk(config, reps, seed, on_state, last)
        return acc, acc2

    parts = _map_chunks(work, _chunks(n_replicates, chunk), workers)
    tables = []
    for k, (direction, p, lags, steps) in enumerate(plans):
        s1 = sum(pt[0][k] for pt in parts)
        s2 = sum(pt[1][k] for pt in parts)
        mean = s1 / n_replicates
        var = np.maximum(s2 / n_replicates - mean ** 2, 0.0) * n_replicates / (n_replicates - 1)
        err = np.sqrt(var / n_replicates)
        n_lag = len(lags)
        flat = mean.transpose(1, 0, 2).reshape(n_lag, -1)
        flat_err = err.transpose(1, 0, 2).reshape(n_lag, -1)
        idx = np.argmax(flat, axis=1)
        tables.append(IncrementTable(
            direction=direction,
            p=p,
            lags=lags,
            moments=flat[np.arange(n_lag), idx],
            stderr=flat_err[np.arange(n_lag), idx],
            lam=config.spec.lam,
            rho=config.initial.rho,
            n_replicates=n_replicates,
            base_times=tuple(b * config.dt for b in base_times),
            mean_moments=flat.mean(axis=1),
        ))
    return tables


@dataclass(frozen=True)
class HolderFit:
    direction: str
    estimated_gamma: float
    stderr: float
    theoretical_bound: float
    intercept: float
    n_points: int


def fit_holder_exponent(table, use="sup"):
    """Weighted least squares of log moment on log lag; gamma = slope / p.

    Weights are the inverse delta-method variances (moment / stderr)^2 when the
    table carries positive standard errors, otherwise uniform. ``use="mean"``
    fits the base-point-averaged moments instead of the supremum.
    """
    moments = table.moments if use == "sup" else table.mean_moments
    lags = table.lags
    if len(lags) < 4:
        raise ValueError("need at least 4 lags")
    if np.any(moments <= 0):
        raise ValueError("all moments must be positive to take logarithms")
    x = np.log(lags)
    y = np.log(moments)
    X = np.column_stack([np.ones_like(x), x])
    weighted = use == "sup" and np.all(table.stderr > 0)
    w = (moments / table.stderr) ** 2 if weighted else np.ones_like(x)
    XtW = X.T * w
    cov = np.linalg.inv(XtW @ X)
    coef = cov @ (XtW @ y)
    if not weighted:
        resid = y - X @ coef
        dof = max(len(x) - 2, 1)
        cov = cov * max(float(resid @ resid) / dof, np.finfo(float).eps)
    slope = coef[1]
    bounds = theoretical_exponents(table.lam, table.rho)
    bound = bounds.alpha_max if table.direction == "time" else bounds.beta_max
    return HolderFit(
        direction=table.direction,
        estimated_gamma=float(slope / table.p),
        stderr=float(math.sqrt(cov[1, 1]) / table.p),
        theoretical_bound=bound,
        intercept=float(coef[0]),
        n_points=len(lags),
    )


# -- Gronwall-type iteration ---------------------------------------------------------


def gronwall_envelope(theta, alpha, beta, M, t, n):
    """(alpha + alpha exp(2 beta t^theta / theta) + M / n! (2 beta t^theta / theta)^n) / 2."""
    if not theta > 0:
        raise ValueError("theta must be positive")
    if alpha < 0 or beta < 0 or M < 0:
        raise ValueError("alpha, beta and M must be non-negative")
    z = 2.0 * beta * t ** theta / theta
    if z == 0.0:
        tail = M if n == 0 else 0.0
    else:
        tail = M * math.exp(n * math.log(z) - math.lgamma(n + 1))
    return 0.5 * (alpha + alpha * math.exp(z) + tail)


class _PowerSeries:
    """sum_i c_i t^{e_i}, closed under t -> int_0^t f(s) (t - s)^{theta - 1} ds."""

    def __init__(self, coeffs, powers):
        self.coeffs = np.asarray(coeffs, dtype=float)
        self.powers = np.asarray(powers, dtype=float)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return np.sum(self.coeffs * t[..., None] ** self.powers, axis=-1)

    def volterra(self, alpha, beta, theta):
        # int_0^t s^e (t-s)^{theta-1} ds = B(e + 1, theta) t^{e + theta}
        c = beta * self.coeffs * special.beta(self.powers + 1.0, theta)
        return _PowerSeries(np.append(c, alpha), np.append(self.powers + theta, 0.0))


def random_initial_profile(M, T, degree, rng, saturate=False):
    """Non-negative polynomial on [0, T] with sup <= M, as a Bernstein combination."""
    w = np.ones(degree + 1) if saturate else rng.uniform(0.0, 1.0, degree + 1)
    coeffs = np.zeros(degree + 1)
    for j in range(degree + 1):
        # M w_j C(d, j) s^j (1 - s)^{d - j},  s = t / T
        for i in range(degree - j + 1):
            k = j + i
            coeffs[k] += M * w[j] * math.comb(degree, j) * math.comb(degree - j, i) * (-1) ** i
    powers = np.arange(degree + 1, dtype=float)
    return _PowerSeries(coeffs / T ** powers, powers)


@dataclass
class GronwallCheck:
    passed: bool
    worst_margin: float
    worst_n: int
    worst_t: float
    first_violation: tuple = None
    values: np.ndarray = field(default=None, repr=False)
    envelopes: np.ndarray = field(default=None, repr=False)


def _volterra_quad(f, t, theta):
    # adaptive QUADPACK rule with the algebraic weight (t - s)^{theta - 1} built in
    if t == 0.0:
        return 0.0
    if theta == 1.0:
        val, _ = integrate.quad(f, 0.0, t, limit=200, epsabs=0.0, epsrel=1e-12)
    else:
        val, _ = integrate.quad(f, 0.0, t, weight="alg", wvar=(0.0, theta - 1.0), limit=200, epsabs=0.0, epsrel=1e-12)
    return val


def gronwall_property_check(theta, alpha, beta, M, t_grid, n_max, seed=0, f0=None, degree=4,
                            saturate=False, rtol=1e-9):
    """Iterate f_n(t) = alpha + beta int_0^t f_{n-1}(s) (t - s)^{theta - 1} ds and test the envelope.

    f_0 is a random non-negative polynomial bounded by M (all ones in the
    Bernstein basis, i.e. f_0 = M, when ``saturate``), or ``f0`` if given as
    (coefficients, powers). Each f_n(t) on ``t_grid`` comes from adaptive
    quadrature with the singular weight; the closed-form iterate is used only
    to evaluate the integrand of the next level and to cross-check the
    quadrature. The check passes when f_n(t) <= envelope(t, n) * (1 + rtol)
    for every grid time and 1 <= n <= n_max. ``worst_margin`` is the smallest
    (envelope - f_n) / envelope observed.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if np.any(t_grid < 0):
        raise ValueError("t_grid must be non-negative")
    T = float(t_grid.max())
    rng = np.random.default_rng(seed)
    if f0 is not None:
        f = _PowerSeries(*f0)
    else:
        f = random_initial_profile(M, T, degree, rng, saturate=saturate)
    values = np.zeros((n_max, t_grid.size))
    envs = np.zeros_like(values)
    worst = (math.inf, 0, 0.0)
    first = None
    for n in range(1, n_max + 1):
        quad_vals = np.array([alpha + beta * _volterra_quad(f, t, theta) for t in t_grid])
        f = f.volterra(alpha, beta, theta)
        closed = f(t_grid)
        scale = np.maximum(np.abs(closed), 1e-300)
        if np.any(np.abs(quad_vals - closed) > 1e-7 * scale + 1e-300):
            raise ArithmeticError(f"quadrature disagrees with the exact iterate at n={n}")
        env = np.array([gronwall_envelope(theta, alpha, beta, M, t, n) for t in t_grid])
        values[n - 1] = quad_vals
        envs[n - 1] = env
        with np.errstate(divide="ignore", invalid="ignore"):
            margin = np.where(env > 0, (env - quad_vals) / env, np.where(quad_vals > 0, -np.inf, 0.0))
        i = int(np.argmin(margin))
        if margin[i] < worst[0]:
            worst = (float(margin[i]), n, float(t_grid[i]))
        if first is None and margin[i] < -rtol:
            first = (n, float(t_grid[i]))
    return GronwallCheck(
        passed=first is None,
        worst_margin=worst[0],
        worst_n=worst[1],
        worst_t=worst[2],
        first_violation=first,
        values=values,
        envelopes=envs,
    )


# -- weighted Hoelder inequality -----------------------------------------------------


@dataclass(frozen=True)
class HolderInequality:
    passed: bool
    lhs: float
    rhs: float


def weighted_holder_check(f, h, mu, q):
    """|sum f |h| mu|^q <= (sum |f|^q |h| mu) (sum |h| mu)^{q - 1} for a discrete measure mu."""
    if not q > 1:
        raise ValueError(f"q must exceed 1, got {q}")
    f = np.asarray(f, dtype=float)
    h = np.abs(np.asarray(h, dtype=float))
    mu = np.asarray(mu, dtype=float)
    if not (f.shape == h.shape == mu.shape):
        raise ValueError("f, h and mu must have the same shape")
    if np.any(mu < 0):
        raise ValueError("mu must be a non-negative measure")
    nu = h * mu
    lhs = abs(float(np.sum(f * nu))) ** q
    rhs = float(np.sum(np.abs(f) ** q * nu)) * float(np.sum(nu)) ** (q - 1.0)
    return HolderInequality(lhs <= rhs * (1.0 + 1e-12), lhs, rhs)
