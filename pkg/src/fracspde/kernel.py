"""Fractional heat kernel G_lam(t, x) on a periodic grid.

Fourier convention: G_lam(t, x) = int exp(2 pi i x xi) exp(-t |xi|^lam) dxi,
so the lam = 2 kernel is sqrt(pi/t) exp(-pi^2 x^2 / t), and the generator
Delta_lam has symbol -|xi|^lam (for lam = 2 this is d^2/dx^2 / (4 pi^2)).

The real line is truncated to the periodic box [-L, L) sampled at N points.
Kernel samples are the inverse DFT of the sampled symbol, i.e. the
periodised, band-limited kernel.
"""

from dataclasses import dataclass, field
import math

import numpy as np
from scipy import integrate
from scipy.signal import czt


class ResolutionError(ValueError):
    """Grid too coarse or too small to resolve the kernel at the requested time."""


@dataclass(frozen=True)
class Grid1D:
    """Periodic truncation [-L, L) of the real line with N points."""

    half_width: float
    n_points: int

    def __post_init__(self):
        if not self.half_width > 0:
            raise ValueError(f"half_width must be positive, got {self.half_width}")
        if self.n_points < 2 or self.n_points % 2:
            raise ValueError(f"n_points must be a positive even integer, got {self.n_points}")

    @property
    def dx(self):
        return 2.0 * self.half_width / self.n_points

    @property
    def x(self):
        return -self.half_width + self.dx * np.arange(self.n_points)

    @property
    def frequencies(self):
        """xi_k = k / (2L) for k = -N/2 .. N/2 - 1, in increasing order."""
        n = self.n_points
        return np.arange(-n // 2, n // 2) / (2.0 * self.half_width)

    @property
    def rfrequencies(self):
        """Non-negative frequencies k / (2L), k = 0 .. N/2 (rfft layout)."""
        return np.arange(self.n_points // 2 + 1) / (2.0 * self.half_width)

    def refine(self, factor=2):
        return Grid1D(self.half_width, self.n_points * factor)


@dataclass(frozen=True)
class KernelSpec:
    lam: float
    grid: Grid1D

    def __post_init__(self):
        if not 0.0 < self.lam <= 2.0:
            raise ValueError(f"lambda must lie in (0, 2], got {self.lam}")


@dataclass(frozen=True)
class KernelValues:
    t: float
    values: np.ndarray = field(repr=False)
    spec: KernelSpec = None

    @property
    def mass(self):
        return self.spec.grid.dx * math.fsum(self.values)


def heat_symbol(lam, xi, t):
    """exp(-t |xi|^lam)."""
    return np.exp(-t * np.abs(xi) ** lam)


def check_resolution(spec, t):
    """Reject grids that cannot resolve G_lam(t, .).

    Requires L >= 8 t^(1/lam) (wrap-around of the tails) and
    N >= 2L max(8, 4 t^(-1/lam)) (spacing at most min(1/8, t^(1/lam)/4)).
    """
    if not t > 0:
        raise ValueError(f"time must be positive, got t={t}")
    width = t ** (1.0 / spec.lam)
    g = spec.grid
    if g.half_width < 8.0 * width:
        raise ResolutionError(
            f"half-width L={g.half_width} below 8 t^(1/lambda)={8.0 * width:.6g} "
            f"(lambda={spec.lam}, t={t})"
        )
    n_min = 2.0 * g.half_width * max(8.0, 4.0 / width)
    if g.n_points < n_min:
        raise ResolutionError(
            f"n_points N={g.n_points} below 2L max(8, 4 t^(-1/lambda))={n_min:.6g} "
            f"(lambda={spec.lam}, t={t})"
        )


def _from_half_spectrum(coeffs, n):
    # centred grid samples (x_j = -L + j dx) of (1/2L) sum_k c_k e^{2 pi i xi_k x}
    return np.fft.fftshift(np.fft.irfft(coeffs, n=n))


def _symmetrize(v):
    # v[j] = v[N - j] exactly; v[0] is the x = -L = L point
    w = v.copy()
    w[1:] = 0.5 * (v[1:] + v[:0:-1])
    return w


def kernel_values(spec, t, check=True):
    """Samples of G_lam(t, x_j) on the grid."""
    if not t > 0:
        raise ValueError(f"time must be positive, got t={t}")
    if check:
        check_resolution(spec, t)
    g = spec.grid
    s = heat_symbol(spec.lam, g.rfrequencies, t)
    vals = _symmetrize(_from_half_spectrum(s, g.n_points) / g.dx)
    return KernelValues(t=t, values=vals, spec=spec)


def kernel_derivative_values(spec, t, m, check=True):
    """Samples of d^m/dx^m G_lam(t, x_j) by spectral differentiation."""
    if check:
        check_resolution(spec, t)
    g = spec.grid
    xi = g.rfrequencies
    c = heat_symbol(spec.lam, xi, t) * (2j * np.pi * xi) ** m
    if m % 2:
        c[-1] = 0.0  # unpaired Nyquist mode has no odd part
    return _from_half_spectrum(c, g.n_points) / g.dx


def kernel_closed_form(lam, t, x):
    """Exact G_lam(t, x) for the Cauchy (lam = 1) and Gaussian (lam = 2) cases."""
    if not t > 0:
        raise ValueError(f"time must be positive, got t={t}")
    x = np.asarray(x, dtype=float)
    if lam == 2:
        return np.sqrt(np.pi / t) * np.exp(-np.pi ** 2 * x ** 2 / t)
    if lam == 1:
        return 2.0 * t / (t ** 2 + 4.0 * np.pi ** 2 * x ** 2)
    raise ValueError(f"closed form only known for lambda in {{1, 2}}, got {lam}")


def evaluate_series(spec, coeffs, y0, dy, n_out):
    """Trigonometric interpolant (1/2L) sum_k c_k e^{2 pi i xi_k y} at y0 + j dy.

    ``coeffs`` is a real even half spectrum (rfft layout). Evaluated with a
    chirp-z transform; coefficients below 1e-30 of the peak are dropped.
    """
    g = spec.grid
    c = np.asarray(coeffs, dtype=float).copy()
    c[1:-1] *= 2.0
    keep = np.nonzero(np.abs(c) > 1e-30 * np.abs(c).max())[0]
    c = c[: keep[-1] + 1]
    omega = 2.0 * np.pi / (2.0 * g.half_width)
    w = np.exp(1j * omega * dy)
    a = np.exp(-1j * omega * y0)
    return czt(c, m=n_out, w=w, a=a).real / (2.0 * g.half_width)


def self_similarity_residual(spec, t):
    """sup_j |G(t, x_j) - t^(-1/lam) G(1, t^(-1/lam) x_j)|.

    The time-1 kernel is interpolated at the rescaled abscissae through its
    trigonometric interpolant. Grid points whose rescaled abscissa falls
    outside the box are skipped (nothing there to interpolate).
    """
    check_resolution(spec, 1.0)
    vt = kernel_values(spec, t).values
    g = spec.grid
    c = t ** (-1.0 / spec.lam)
    s1 = heat_symbol(spec.lam, g.rfrequencies, 1.0)
    rescaled = c * evaluate_series(spec, s1, -c * g.half_width, c * g.dx, g.n_points)
    inside = np.abs(c * g.x) < g.half_width
    return float(np.max(np.abs(vt - rescaled)[inside]))


def periodic_convolve(spec, f, h):
    """dx * sum_l f[l] h[j - l] for fields on the centred grid."""
    g = spec.grid
    n = g.n_points
    fh = np.fft.rfft(np.fft.ifftshift(f)) * np.fft.rfft(np.fft.ifftshift(h))
    return g.dx * np.fft.fftshift(np.fft.irfft(fh, n=n))


def semigroup_residual(spec, s, t):
    """sup-norm of G(s) * G(t) - G(s + t), with * the discrete periodic convolution."""
    gs = kernel_values(spec, s).values
    gt = kernel_values(spec, t).values
    gst = kernel_values(spec, s + t).values
    return float(np.max(np.abs(periodic_convolve(spec, gs, gt) - gst)))


@dataclass(frozen=True)
class DerivativeBound:
    m: int
    times: tuple
    constants: tuple
    witness: float
    passed: bool


def derivative_bound_check(spec, m, t, sweep=(0.25, 0.5, 1.0, 2.0, 4.0)):
    """Smallest C_m with |d^m G(t,x)| <= t^{-(1+m)/lam} C_m / (1 + t^{-2/lam} x^2) on the grid.

    The constant is computed at each time t * sweep[i]; the check passes when
    these agree within a factor of 2. ``witness`` is the constant at ``t``.
    """
    if m not in (0, 1, 2):
        raise ValueError(f"derivative order must be 0, 1 or 2, got {m}")
    times = tuple(t * f for f in sweep)
    if t not in times:
        times = tuple(sorted(times + (t,)))
    x = spec.grid.x
    consts = []
    for tau in times:
        d = kernel_derivative_values(spec, tau, m)
        scale = tau ** (-1.0 / spec.lam)
        envelope = tau ** (-(1.0 + m) / spec.lam) / (1.0 + (scale * x) ** 2)
        consts.append(float(np.max(np.abs(d) / envelope)))
    witness = consts[times.index(t)]
    passed = max(consts) <= 2.0 * min(consts)
    return DerivativeBound(m=m, times=times, constants=tuple(consts), witness=witness, passed=passed)


@dataclass(frozen=True)
class ScalingFit:
    slope: float
    constant: float
    times: tuple
    values: tuple


def l2_time_scaling(spec, times):
    """Fit log J(t) = log C + slope log t with J(t) = int G(t, x)^2 dx.

    Continuum values: slope = -1/lam, C = int exp(-2 |xi|^lam) dxi
    (Plancherel applied to the symbol).
    """
    times = np.asarray(sorted(set(float(t) for t in times)))
    if times.size < 3:
        raise ValueError("need at least 3 distinct times")
    dx = spec.grid.dx
    j = np.array([dx * np.sum(kernel_values(spec, t).values ** 2) for t in times])
    slope, intercept = np.polyfit(np.log(times), np.log(j), 1)
    return ScalingFit(float(slope), float(np.exp(intercept)), tuple(times), tuple(j))


def l2_constant(lam):
    """int exp(-2 |xi|^lam) dxi = 2 Gamma(1 + 1/lam) 2^(-1/lam)."""
    return 2.0 * math.gamma(1.0 + 1.0 / lam) * 2.0 ** (-1.0 / lam)


def _kernel_at_one(lam, y):
    # G_lam(1, y) by Fourier-weighted quadrature (QAWF)
    if y == 0:
        return 2.0 * math.gamma(1.0 + 1.0 / lam)
    val, _ = integrate.quad(lambda s: np.exp(-s ** lam), 0.0, np.inf, weight="cos", wvar=2 * np.pi * y)
    return 2.0 * val


def tail_decay_exponent(lam, y1=16.0, y2=32.0):
    """Numerical power-law decay rate of G_lam(1, y); inf for super-polynomial tails."""
    g0 = _kernel_at_one(lam, 0.0)
    g1 = _kernel_at_one(lam, y1)
    g2 = _kernel_at_one(lam, y2)
    if g2 <= 1e-12 * g0 or g1 <= 1e-12 * g0:
        return math.inf
    return math.log(g1 / g2) / math.log(y2 / y1)


@dataclass(frozen=True)
class Integrability:
    alpha: float
    lam: float
    time_exponent: float
    tail_decay: float
    space_finite: bool
    overall_finite: bool


def power_integrability_exponent(lam, alpha):
    """Finiteness of int_0^T dt int dx G_lam(t, x)^alpha.

    Self-similarity gives int G^alpha(t, x) dx = t^{(1-alpha)/lam} int G^alpha(1, y) dy.
    The spatial factor is finite iff alpha times the tail decay rate exceeds 1;
    the time factor iff (1 - alpha)/lam > -1.
    """
    if not 0.0 < lam <= 2.0:
        raise ValueError(f"lambda must lie in (0, 2], got {lam}")
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    time_exponent = (1.0 - alpha) / lam
    decay = tail_decay_exponent(lam)
    space_finite = alpha * decay > 1.0
    return Integrability(
        alpha=alpha,
        lam=lam,
        time_exponent=time_exponent,
        tail_decay=decay,
        space_finite=space_finite,
        overall_finite=space_finite and time_exponent > -1.0,
    )


def apply_fractional_laplacian(spec, values):
    """Delta_lam applied spectrally: mode k is multiplied by -|xi_k|^lam."""
    values = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(values)):
        raise ValueError("field contains non-finite values")
    g = spec.grid
    sym = -np.abs(g.rfrequencies) ** spec.lam
    return np.fft.irfft(sym * np.fft.rfft(values, axis=-1), n=g.n_points, axis=-1)
