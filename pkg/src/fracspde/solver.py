"""Mild-solution integrators for du = Delta_lam u dt + b dt + sigma W(dx, dt).

Two discretisations of the mild formulation are provided:

* ``evolve_mild``: exponential Euler in Fourier space,
  u_{m+1}^ = e^{-dt |xi|^lam} (u_m^ + dt b^(u_m) + (sigma(u_m) dW_m / dx)^).
* ``picard_iterate``: one substitution of the Picard map, written as an
  explicit sum over the whole past with kernel lags t_m - t_l. The noise
  term uses the same left-point kernel; the drift uses the exact cell
  integral of the kernel, int_{t_l}^{t_{l+1}} G(t_m - s) ds.

Both converge to the same mild solution; under a frozen noise realisation
the fixed point of the second differs from the first by O(dt).
"""

from dataclasses import dataclass, field, replace
import math

import numpy as np

from . import _accel
from .kernel import Grid1D, KernelSpec
from .noise import NoiseBatch, NoiseField


class SolverDivergence(FloatingPointError):
    """Non-finite values appeared while time stepping."""

    def __init__(self, step, replicate=None):
        where = f"step {step}" if replicate is None else f"step {step}, replicate {replicate}"
        super().__init__(f"non-finite solution values at {where}")
        self.step = step
        self.replicate = replicate


class PicardNotConverged(RuntimeError):
    def __init__(self, distances, tol):
        super().__init__(
            f"Picard iteration did not reach tol={tol} in {len(distances)} iterations "
            f"(last distance {distances[-1]:.3e})"
        )
        self.distances = list(distances)


# -- coefficients ----------------------------------------------------------


@dataclass(frozen=True)
class Coefficients:
    """Reaction term b(t, x, u) and noise amplitude sigma(t, x, u).

    Both callables are vectorised over numpy arrays. ``sigma_value`` set to a
    float marks additive noise and ``drift_free`` marks b == 0; the time
    steppers use these to skip work.
    """

    b: object
    sigma: object
    lipschitz_constant: float
    growth_constant: float
    name: str = "custom"
    sigma_value: float = None
    drift_free: bool = False
    translation_invariant: bool = True


def _zeros(t, x, u):
    return np.zeros_like(u)


def additive(sigma0=1.0):
    s = float(sigma0)
    return Coefficients(
        b=_zeros,
        sigma=lambda t, x, u: np.full_like(u, s),
        lipschitz_constant=1.0,
        growth_constant=max(abs(s), 1e-300),
        name="additive",
        sigma_value=s,
        drift_free=True,
    )


def affine():
    # clipping keeps sigma Lipschitz and of linear growth while avoiding overflow
    return Coefficients(
        b=lambda t, x, u: -u,
        sigma=lambda t, x, u: np.clip(1.0 + 0.5 * u, -50.0, 50.0),
        lipschitz_constant=1.0,
        growth_constant=1.5,
        name="affine",
    )


def bounded_smooth():
    return Coefficients(
        b=lambda t, x, u: np.cos(u),
        sigma=lambda t, x, u: 1.0 + 0.5 * np.sin(u),
        lipschitz_constant=1.0,
        growth_constant=2.5,
        name="bounded-smooth",
    )


def zero():
    return Coefficients(
        b=_zeros, sigma=_zeros, lipschitz_constant=1.0, growth_constant=1.0,
        name="zero", sigma_value=0.0, drift_free=True,
    )


def forcing(b0=1.0):
    c = float(b0)
    return Coefficients(
        b=lambda t, x, u: np.full_like(u, c),
        sigma=_zeros,
        lipschitz_constant=1.0,
        growth_constant=max(abs(c), 1e-300),
        name="forcing",
        sigma_value=0.0,
    )


PRESETS = {
    "additive": additive,
    "affine": affine,
    "bounded-smooth": bounded_smooth,
    "zero": zero,
    "forcing": forcing,
}


def preset(name, **kwargs):
    try:
        return PRESETS[name](**kwargs)
    except KeyError:
        raise ValueError(f"unknown coefficient preset {name!r}; choose from {sorted(PRESETS)}") from None


@dataclass(frozen=True)
class CoefficientCheck:
    passed: bool
    worst_growth_ratio: float
    worst_sigma_lipschitz: float
    worst_b_lipschitz: float


def check_coefficients(coeffs, n_samples=10_000, seed=0, scale=10.0):
    """Randomised spot-check of the growth and Lipschitz bounds.

    Samples (t, x, u) triples and pairs; reports the largest observed ratio
    of each side to its bound (all must be <= 1 to pass).
    """
    rng = np.random.default_rng(seed)
    t = rng.uniform(0.0, 1.0, n_samples)
    x = rng.uniform(-scale, scale, n_samples)
    u = rng.normal(0.0, scale, n_samples)
    v = u + rng.normal(0.0, 1.0, n_samples)
    s = np.clip(t + rng.normal(0.0, 0.1, n_samples), 0.0, None)
    y = x + rng.normal(0.0, 0.5, n_samples)
    C, K = coeffs.growth_constant, coeffs.lipschitz_constant
    growth = (np.abs(coeffs.b(t, x, u)) + np.abs(coeffs.sigma(t, x, u))) / (C * (1.0 + np.abs(u)))
    tiny = 1e-300
    sig = np.abs(coeffs.sigma(t, x, u) - coeffs.sigma(t, x, v)) / (K * np.abs(u - v) + tiny)
    bl = np.abs(coeffs.b(s, x, u) - coeffs.b(t, y, v)) / (K * (np.abs(t - s) + np.abs(x - y) + np.abs(u - v)) + tiny)
    eps = 1e-12
    worst = (float(growth.max()), float(sig.max()), float(bl.max()))
    return CoefficientCheck(all(w <= 1.0 + eps for w in worst), *worst)


# -- initial data -----------------------------------------------------------


INITIAL_KINDS = ("constant", "smooth_cosine", "hoelder_rough", "random_field")


@dataclass(frozen=True)
class InitialCondition:
    """Initial profile u_0 on the grid.

    kinds: ``constant`` (value ``amplitude``), ``smooth_cosine``
    (amplitude * cos(2 pi x / 2L)), ``hoelder_rough`` (lacunary series
    sum_k 2^{-rho k} cos(2 pi 2^k x / 2L + phi_k), 2^K <= N/8, scaled by
    ``amplitude`` when nonzero) and ``random_field`` (bounded random-phase
    cosine series). The two random kinds draw their phases from
    (``seed``, replicate), so every replicate sees an independent profile.
    """

    kind: str = "constant"
    amplitude: float = 0.0
    rho: float = 1.0
    seed: int = 0
    shift: float = 0.0

    def __post_init__(self):
        if self.kind not in INITIAL_KINDS:
            raise ValueError(f"unknown initial condition {self.kind!r}; choose from {INITIAL_KINDS}")
        if not 0.0 < self.rho <= 1.0:
            raise ValueError(f"rho must lie in (0, 1], got {self.rho}")
        if self.kind != "hoelder_rough" and self.rho != 1.0:
            raise ValueError(f"{self.kind} initial data is smooth; rho must be 1")

    @property
    def is_random(self):
        return self.kind in ("random_field", "hoelder_rough")

    def lacunary_phases(self, grid, replicate=0):
        n_terms = int(math.floor(math.log2(grid.n_points / 8))) + 1
        rng = np.random.default_rng([self.seed, 0x1ACE, replicate])
        return rng.uniform(0.0, 2.0 * np.pi, n_terms)

    def values(self, grid, replicate=0):
        x = grid.x - self.shift
        two_l = 2.0 * grid.half_width
        if self.kind == "constant":
            return np.full(grid.n_points, float(self.amplitude))
        if self.kind == "smooth_cosine":
            return self.amplitude * np.cos(2.0 * np.pi * x / two_l)
        if self.kind == "hoelder_rough":
            phases = self.lacunary_phases(grid, replicate)
            out = np.zeros(grid.n_points)
            for k, phi in enumerate(phases):
                out += 2.0 ** (-self.rho * k) * np.cos(2.0 * np.pi * 2 ** k * x / two_l + phi)
            return self.amplitude * out if self.amplitude else out
        rng = np.random.default_rng([self.seed, 0xF1E1D, replicate])
        k = np.arange(1, 9)
        phases = rng.uniform(0.0, 2.0 * np.pi, k.size)
        weights = rng.uniform(-1.0, 1.0, k.size) / k ** 2
        return self.amplitude * np.cos(2.0 * np.pi * np.outer(x, k) / two_l + phases) @ weights

    def batch_values(self, grid, replicates):
        if self.is_random:
            return np.array([self.values(grid, r) for r in replicates])
        return np.broadcast_to(self.values(grid), (len(replicates), grid.n_points)).copy()


# -- configuration and trajectories ----------------------------------------------


@dataclass(frozen=True)
class SimConfig:
    spec: KernelSpec
    dt: float
    n_steps: int
    coefficients: Coefficients
    initial: InitialCondition = InitialCondition()
    seed: int = 0
    noise_level: int = 0

    def __post_init__(self):
        if not 1.0 < self.spec.lam <= 2.0:
            raise ValueError(f"lambda must lie in (1, 2] for the stochastic equation, got {self.spec.lam}")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.n_steps < 1:
            raise ValueError(f"n_steps must be >= 1, got {self.n_steps}")
        if self.noise_level < 0:
            raise ValueError(f"noise_level must be >= 0, got {self.noise_level}")

    @property
    def grid(self):
        return self.spec.grid

    @property
    def horizon(self):
        return self.n_steps * self.dt

    @property
    def times(self):
        return self.dt * np.arange(self.n_steps + 1)

    def refine(self, factor=2):
        """Same problem on a mesh with dt / factor and dx / factor.

        A configuration whose noise is drawn ``noise_level`` refinements down
        keeps the same Brownian sheet when refined by a power of two.
        """
        levels = int(round(math.log2(factor))) if factor > 1 and 2 ** round(math.log2(factor)) == factor else 0
        return replace(
            self,
            spec=KernelSpec(self.spec.lam, self.grid.refine(factor)),
            dt=self.dt / factor,
            n_steps=self.n_steps * factor,
            noise_level=max(self.noise_level - levels, 0),
        )


@dataclass
class Trajectory:
    snapshots: np.ndarray = field(repr=False)
    config: SimConfig
    seed: int = None

    @property
    def times(self):
        return self.config.times


def _propagators(config):
    g = config.grid
    a = np.abs(g.rfrequencies) ** config.spec.lam
    decay = np.exp(-config.dt * a)
    # exact cell integral of the semigroup: (1 - e^{-dt a}) / a, with limit dt at a = 0
    with np.errstate(divide="ignore", invalid="ignore"):
        phi = np.where(a > 0, -np.expm1(-config.dt * a) / a, config.dt)
    return a, decay, phi


def _check_noise(config, noise):
    if noise.grid != config.grid:
        raise ValueError(f"noise grid {noise.grid} does not match configuration grid {config.grid}")
    if not math.isclose(noise.dt, config.dt, rel_tol=1e-12) or noise.n_steps != config.n_steps:
        raise ValueError(
            f"noise mesh (dt={noise.dt}, n_steps={noise.n_steps}) does not match "
            f"configuration (dt={config.dt}, n_steps={config.n_steps})"
        )


def _step_forcing(coeffs, t, x, u, dw, dt, dx):
    """Fourier transforms of dt * b(u) and sigma(u) dW / dx (either may be None)."""
    noise_field = None
    if coeffs.sigma_value is not None:
        if coeffs.sigma_value != 0.0:
            noise_field = coeffs.sigma_value * dw / dx
    else:
        noise_field = coeffs.sigma(t, x, u) * dw / dx
    drift = None if coeffs.drift_free else dt * coeffs.b(t, x, u)
    if noise_field is None and drift is None:
        return None
    if noise_field is None:
        total = drift
    elif drift is None:
        total = noise_field
    else:
        total = drift + noise_field
    return np.fft.rfft(total, axis=-1)


def _stream(config, u0, next_increment, n_rows):
    """Exponential Euler time stepping; yields (m, u_m) for m = 0..n_steps."""
    g = config.grid
    x = g.x
    n = g.n_points
    _, decay, _ = _propagators(config)
    u = np.array(u0, dtype=float)
    u_hat = np.fft.rfft(u, axis=-1)
    yield 0, u
    for m in range(config.n_steps):
        f_hat = _step_forcing(config.coefficients, m * config.dt, x, u, next_increment(m), config.dt, g.dx)
        if f_hat is not None:
            u_hat = u_hat + f_hat
        u_hat = decay * u_hat
        u = np.fft.irfft(u_hat, n=n, axis=-1)
        if not np.all(np.isfinite(u)):
            bad = None
            if u.ndim == 2:
                bad = int(np.nonzero(~np.all(np.isfinite(u), axis=1))[0][0])
            raise SolverDivergence(m + 1, bad)
        yield m + 1, u


def evolve_mild(config, noise):
    """Exponential-Euler trajectory driven by one noise realisation."""
    _check_noise(config, noise)
    u0 = config.initial.values(config.grid, noise.replicate)
    snaps = np.empty((config.n_steps + 1, config.grid.n_points))
    for m, u in _stream(config, u0, lambda m: noise.increments[m], 1):
        snaps[m] = u
    return Trajectory(snaps, config, seed=noise.seed)


def noise_for(config, replicate=0, seed=None):
    """The NoiseField driving replicate ``replicate`` of ``config`` in batch runs."""
    seed = config.seed if seed is None else seed
    return NoiseBatch(config.grid, config.dt, config.n_steps, seed, range(replicate, replicate + 1),
                      config.noise_level).field(0)


def evolve_batch(config, replicates, seed=None):
    """Exponential Euler for a block of independent replicates.

    Yields (m, u_m) with u_m of shape (len(replicates), N). Replicate r is
    driven by the same increments as ``noise_for(config, r)``.
    """
    seed = config.seed if seed is None else seed
    batch = NoiseBatch(config.grid, config.dt, config.n_steps, seed, replicates, config.noise_level)
    u0 = config.initial.batch_values(config.grid, replicates)
    return _stream(config, u0, batch.step, len(replicates))


# -- Picard iteration -----------------------------------------------------------


def free_evolution(config, replicate=0, seed=None):
    """u^0(t_m, x) = (G(t_m) * u_0)(x) on the whole mesh."""
    g = config.grid
    a, _, _ = _propagators(config)
    u0_hat = np.fft.rfft(config.initial.values(g, replicate))
    decay_m = np.exp(-np.outer(config.times, a))
    snaps = np.fft.irfft(decay_m * u0_hat, n=g.n_points, axis=-1)
    return Trajectory(snaps, config, seed=config.seed if seed is None else seed)


def _same_mesh(a, b):
    return a.grid == b.grid and math.isclose(a.dt, b.dt, rel_tol=1e-12) and a.n_steps == b.n_steps


def picard_iterate(previous, config, noise, use_numba=None):
    """One application of the Picard map to ``previous`` under frozen noise.

    u^{n+1}(t_m) = G(t_m) * u_0
                   + sum_{l<m} G(t_m - t_l) * sigma(u^n_l) dW_l / dx
                   + sum_{l<m} [int_{t_l}^{t_{l+1}} G(t_m - s) ds] * b(u^n_l)

    Each spatial convolution is carried out as a multiplication by the
    kernel's discrete Fourier transform.
    """
    _check_noise(config, noise)
    if not _same_mesh(previous.config, config) or previous.snapshots.shape != (config.n_steps + 1, config.grid.n_points):
        raise ValueError("previous iterate is not defined on the configuration's mesh")
    g = config.grid
    coeffs = config.coefficients
    a, decay, phi = _propagators(config)
    x = g.x
    n_modes = a.size
    forcing = np.zeros((config.n_steps, n_modes), dtype=complex)
    for l in range(config.n_steps):
        u = previous.snapshots[l]
        t = l * config.dt
        if coeffs.sigma_value is None or coeffs.sigma_value != 0.0:
            forcing[l] += decay * np.fft.rfft(coeffs.sigma(t, x, u) * noise.increments[l] / g.dx)
        if not coeffs.drift_free:
            forcing[l] += phi * np.fft.rfft(coeffs.b(t, x, u))
    lags = np.arange(config.n_steps)
    decay_powers = np.exp(-np.outer(lags * config.dt, a))
    conv = _accel.volterra_sum(decay_powers, forcing, use_numba=use_numba)
    u0_hat = np.fft.rfft(config.initial.values(g, noise.replicate))
    free = np.exp(-np.outer(config.times, a)) * u0_hat
    snaps = np.fft.irfft(free + conv, n=g.n_points, axis=-1)
    if not np.all(np.isfinite(snaps)):
        raise SolverDivergence(int(np.nonzero(~np.all(np.isfinite(snaps), axis=1))[0][0]))
    return Trajectory(snaps, config, seed=noise.seed)


@dataclass
class PicardResult:
    trajectory: Trajectory
    distances: list
    converged: bool

    @property
    def iterations(self):
        return len(self.distances)


def picard_solve(config, noise, tol=1e-6, max_iter=30, raise_on_failure=True, use_numba=None):
    """Iterate the Picard map from u^0 until sup |u^{n+1} - u^n| < tol.

    ``distances[n - 1]`` is sup over the mesh of |u^n - u^{n-1}|.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    current = free_evolution(config, noise.replicate, noise.seed)
    distances = []
    for _ in range(max_iter):
        nxt = picard_iterate(current, config, noise, use_numba=use_numba)
        distances.append(float(np.max(np.abs(nxt.snapshots - current.snapshots))))
        current = nxt
        if distances[-1] < tol:
            return PicardResult(current, distances, True)
    if raise_on_failure:
        raise PicardNotConverged(distances, tol)
    return PicardResult(current, distances, False)


def factorial_envelope(distances, n_min=3):
    """Least-squares fit of log M_n = log c + n log R - log n! over n >= n_min.

    Returns (c, R).
    """
    n = np.arange(1, len(distances) + 1)
    d = np.asarray(distances, dtype=float)
    mask = (n >= n_min) & (d > 0)
    if mask.sum() < 2:
        raise ValueError("need at least two positive distances beyond n_min")
    y = np.log(d[mask]) + np.array([math.lgamma(k + 1) for k in n[mask]])
    slope, intercept = np.polyfit(n[mask], y, 1)
    return float(np.exp(intercept)), float(np.exp(slope))
