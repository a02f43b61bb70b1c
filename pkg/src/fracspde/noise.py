"""Discrete space-time white noise and Brownian-sheet statistics.

Each increment dW[m, j] ~ N(0, dt * dx) is a pure function of
(seed, step m, replicate r, cell j): the Philox stream keyed by (seed, m)
is laid out replicate-major, so any replicate can be regenerated alone by
advancing the counter. Normals come from Box-Muller on pairs of raw words.
"""

from dataclasses import dataclass, field

import numpy as np

from ._accel import box_muller as _box_muller

_MASK64 = (1 << 64) - 1


def _check_seed(seed):
    seed = int(seed)
    if not 0 <= seed <= _MASK64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed


def _bitgen(seed, step):
    return np.random.Philox(key=np.array([seed, step], dtype=np.uint64))


def standard_normal_block(seed, step, n_cells, replicates):
    """Standard normals for cells 0..n_cells-1 of the given replicates at one step.

    ``replicates`` is a ``range`` (generated in one sweep) or any iterable of
    non-negative indices. Returns shape (len(replicates), n_cells).
    """
    seed = _check_seed(seed)
    if n_cells % 2:
        raise ValueError("n_cells must be even")
    # one raw word per cell; rows padded to whole 4-word counter blocks
    stride = 4 * (-(-n_cells // 4))
    if isinstance(replicates, range) and replicates.step == 1:
        bg = _bitgen(seed, step)
        if replicates.start:
            bg.advance(stride // 4 * replicates.start)
        raw = bg.random_raw(stride * len(replicates)).reshape(len(replicates), stride)
        return _box_muller(raw[:, :n_cells].ravel()).reshape(len(replicates), n_cells)
    rows = []
    for r in replicates:
        bg = _bitgen(seed, step)
        bg.advance(stride // 4 * int(r))
        rows.append(_box_muller(bg.random_raw(stride)[:n_cells]))
    return np.array(rows).reshape(-1, n_cells)


@dataclass
class NoiseField:
    """Increments dW[m, j] of one Brownian-sheet realisation on the space-time mesh."""

    grid: object
    dt: float
    n_steps: int
    increments: np.ndarray = field(repr=False)
    seed: int = None
    replicate: int = 0

    @property
    def variance(self):
        """Configured variance dt * dx of each increment."""
        return self.dt * self.grid.dx

    def coarsen(self):
        """Aggregate 2 x 2 blocks of (step, cell): the same sheet on a mesh with (2 dt, 2 dx)."""
        from .kernel import Grid1D

        if self.n_steps % 2 or self.grid.n_points % 4:
            raise ValueError("coarsening needs an even step count and N divisible by 4")
        w = self.increments
        agg = w[0::2] + w[1::2]
        agg = agg[:, 0::2] + agg[:, 1::2]
        return NoiseField(
            grid=Grid1D(self.grid.half_width, self.grid.n_points // 2),
            dt=2.0 * self.dt,
            n_steps=self.n_steps // 2,
            increments=agg,
            seed=self.seed,
            replicate=self.replicate,
        )


def sample_noise(grid, dt, n_steps, seed, replicate=0):
    """One realisation of i.i.d. N(0, dt dx) increments, shape (n_steps, N)."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1, got {n_steps}")
    scale = np.sqrt(dt * grid.dx)
    n = grid.n_points
    inc = np.empty((n_steps, n))
    for m in range(n_steps):
        inc[m] = scale * standard_normal_block(seed, m, n, [replicate])[0]
    return NoiseField(grid, dt, n_steps, inc, seed=_check_seed(seed), replicate=replicate)


@dataclass
class NoiseBatch:
    """Streams increments for a block of replicates, one time step at a time.

    With ``level = k > 0`` the increments are those of the mesh refined k
    times (dt / 2^k, N 2^k cells) summed over 2^k x 2^k blocks, so a coarse
    run and a refined run see the same Brownian sheet.
    """

    grid: object
    dt: float
    n_steps: int
    seed: int
    replicates: range
    level: int = 0

    @property
    def n_replicates(self):
        return len(self.replicates)

    @property
    def variance(self):
        return self.dt * self.grid.dx

    def step(self, m):
        """Increments at step m, shape (n_replicates, N)."""
        if not 0 <= m < self.n_steps:
            raise IndexError(f"step {m} outside 0..{self.n_steps - 1}")
        n = self.grid.n_points
        if self.level == 0:
            z = standard_normal_block(self.seed, m, n, self.replicates)
            return np.sqrt(self.variance) * z
        f = 2 ** self.level
        scale = np.sqrt(self.variance) / f
        w = [scale * standard_normal_block(self.seed, m * f + i, n * f, self.replicates) for i in range(f)]
        # same order as repeated NoiseField.coarsen: per level, time pairs then cell pairs
        while len(w) > 1:
            w = [w[i] + w[i + 1] for i in range(0, len(w), 2)]
            w = [b[:, 0::2] + b[:, 1::2] for b in w]
        return w[0]

    def field(self, index):
        """The NoiseField of the index-th replicate in this batch."""
        r = self.replicates[index]
        out = sample_noise(self.grid.refine(2 ** self.level), self.dt / 2 ** self.level,
                           self.n_steps * 2 ** self.level, self.seed, replicate=r)
        for _ in range(self.level):
            out = out.coarsen()
        return out


def sheet_covariance(s, t, x, y):
    """E[W(t, x) W(s, y)] = (s ^ t)(|x| + |y| - |x - y|) / 2."""
    if s < 0 or t < 0:
        raise ValueError("times must be non-negative")
    return 0.5 * min(s, t) * (abs(x) + abs(y) - abs(x - y))


def _mesh_index(value, step, what):
    k = round(value / step)
    if abs(k * step - value) > 1e-9 * max(1.0, abs(value)):
        raise ValueError(f"{what}={value} is not aligned with the mesh spacing {step}")
    return k


def _sheet_weights(grid, x):
    # signed indicator of the cells between the origin and x
    n = grid.n_points
    k = _mesh_index(x, grid.dx, "x")
    w = np.zeros(n)
    if k > 0:
        w[n // 2 : n // 2 + k] = 1.0
    elif k < 0:
        w[n // 2 + k : n // 2] = -1.0
    return w


@dataclass(frozen=True)
class CovarianceRow:
    t: float
    x: float
    s: float
    y: float
    analytic: float
    empirical: float
    stderr: float


def empirical_sheet_covariance(grid, dt, n_steps, n_replicates, points, seed, chunk=1000):
    """Monte Carlo covariance of the reconstructed sheet W(t, x) at pairs of mesh points.

    ``points`` is a sequence of (t, x, s, y). W(t, x) is the signed sum of the
    increments in [0, t) x [0, x) (x > 0) or -[0, t) x [x, 0) (x < 0).
    """
    if n_replicates < 100:
        raise ValueError("n_replicates must be at least 100")
    horizon = n_steps * dt
    pairs = []
    for t, x, s, y in points:
        for tt, xx in ((t, x), (s, y)):
            if not (0 <= tt <= horizon + 1e-12) or not (-grid.half_width <= xx <= grid.half_width - grid.dx + 1e-12):
                raise ValueError(f"point (t={tt}, x={xx}) outside the sampled box")
        pairs.append((_mesh_index(t, dt, "t"), _sheet_weights(grid, x), _mesh_index(s, dt, "t"), _sheet_weights(grid, y)))
    m_max = max(max(p[0], p[2]) for p in pairs)
    total = np.zeros(len(pairs))
    total2 = np.zeros(len(pairs))
    for start in range(0, n_replicates, chunk):
        reps = range(start, min(start + chunk, n_replicates))
        batch = NoiseBatch(grid, dt, n_steps, seed, reps)
        # column sums over time, recorded at every step index used
        needed = sorted({p[0] for p in pairs} | {p[2] for p in pairs})
        cum = np.zeros((len(reps), grid.n_points))
        snap = {0: cum.copy()}
        for m in range(m_max):
            cum += batch.step(m)
            if m + 1 in needed:
                snap[m + 1] = cum.copy()
        for i, (mt, wx, ms, wy) in enumerate(pairs):
            prod = (snap[mt] @ wx) * (snap[ms] @ wy)
            total[i] += prod.sum()
            total2[i] += (prod * prod).sum()
    mean = total / n_replicates
    var = np.maximum(total2 / n_replicates - mean ** 2, 0.0)
    err = np.sqrt(var / (n_replicates - 1))
    return [
        CovarianceRow(t, x, s, y, sheet_covariance(s, t, x, y), float(mean[i]), float(err[i]))
        for i, (t, x, s, y) in enumerate(points)
    ]
