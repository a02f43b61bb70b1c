"""Hot inner loops, compiled with numba when available.

Set ``FRACSPDE_NUMBA=0`` to force the pure-numpy path (useful for debugging
and for the comparison benchmark). Both paths compute the same quantities;
the test suite checks them against each other.
"""

import math
import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

USE_NUMBA = numba is not None and os.environ.get("FRACSPDE_NUMBA", "1") not in ("0", "false", "no")


_TWO_53 = 2.0 ** -53


def _box_muller_np(raw):
    u1 = ((raw[0::2] >> np.uint64(11)).astype(np.float64) + 0.5) * _TWO_53
    u2 = ((raw[1::2] >> np.uint64(11)).astype(np.float64) + 0.5) * _TWO_53
    r = np.sqrt(-2.0 * np.log(u1))
    z = np.empty(raw.size, dtype=np.float64)
    z[0::2] = r * np.cos(2.0 * np.pi * u2)
    z[1::2] = r * np.sin(2.0 * np.pi * u2)
    return z


def _volterra_sum_np(decay_powers, forcing):
    # out[m] = sum_{l < m} decay_powers[m - 1 - l] * forcing[l]
    n_steps = forcing.shape[0]
    out = np.zeros((n_steps + 1,) + forcing.shape[1:], dtype=forcing.dtype)
    for m in range(1, n_steps + 1):
        out[m] = np.einsum("l...,l...->...", decay_powers[m - 1::-1], forcing[:m])
    return out


def _abs_power_sum_np(acc, acc2, a, b, p):
    d = np.abs(a - b) ** p
    acc += d.sum(axis=0)
    acc2 += (d * d).sum(axis=0)


def _shift_power_sum_np(acc, acc2, u, shift, p):
    d = np.abs(np.roll(u, -shift, axis=-1) - u) ** p
    acc += d.sum(axis=0)
    acc2 += (d * d).sum(axis=0)


if USE_NUMBA:

    @numba.njit(cache=True, nogil=True)
    def _box_muller_nb(raw):
        z = np.empty(raw.size, dtype=np.float64)
        for i in range(0, raw.size, 2):
            u1 = ((raw[i] >> np.uint64(11)) + 0.5) * _TWO_53
            u2 = ((raw[i + 1] >> np.uint64(11)) + 0.5) * _TWO_53
            r = math.sqrt(-2.0 * math.log(u1))
            z[i] = r * math.cos(2.0 * math.pi * u2)
            z[i + 1] = r * math.sin(2.0 * math.pi * u2)
        return z

    @numba.njit(cache=True, nogil=True)
    def _volterra_sum_nb(decay_powers, forcing):
        n_steps, n_modes = forcing.shape
        out = np.zeros((n_steps + 1, n_modes), dtype=forcing.dtype)
        for m in range(1, n_steps + 1):
            for l in range(m):
                e = decay_powers[m - 1 - l]
                f = forcing[l]
                for k in range(n_modes):
                    out[m, k] += e[k] * f[k]
        return out

    @numba.njit(cache=True, nogil=True)
    def _abs_power_sum_nb(acc, acc2, a, b, p):
        n_rep, n = a.shape
        square = p == 2.0
        for r in range(n_rep):
            for j in range(n):
                e = a[r, j] - b[r, j]
                d = e * e if square else abs(e) ** p
                acc[j] += d
                acc2[j] += d * d

    @numba.njit(cache=True, nogil=True)
    def _shift_power_sum_nb(acc, acc2, u, shift, p):
        n_rep, n = u.shape
        square = p == 2.0
        for r in range(n_rep):
            for j in range(n):
                jj = j + shift
                if jj >= n:
                    jj -= n
                e = u[r, jj] - u[r, j]
                d = e * e if square else abs(e) ** p
                acc[j] += d
                acc2[j] += d * d


def box_muller(raw, use_numba=None):
    """Standard normals from pairs of raw 64-bit words (53-bit uniforms, cos and sin branches)."""
    use = USE_NUMBA if use_numba is None else (use_numba and numba is not None)
    if use:
        return _box_muller_nb(np.ascontiguousarray(raw))
    return _box_muller_np(raw)


def volterra_sum(decay_powers, forcing, use_numba=None):
    """Discrete Volterra sum along the leading (time) axis.

    ``decay_powers[j]`` multiplies the forcing ``j + 1`` steps in the past;
    returns an array with one more row than ``forcing`` (row 0 is zero).
    """
    use = USE_NUMBA if use_numba is None else (use_numba and numba is not None)
    if use and forcing.ndim == 2:
        return _volterra_sum_nb(np.ascontiguousarray(decay_powers), np.ascontiguousarray(forcing))
    return _volterra_sum_np(decay_powers, forcing)


def abs_power_sum(acc, acc2, a, b, p, use_numba=None):
    """Accumulate sum_r |a[r] - b[r]|^p and its square into ``acc``/``acc2`` in place."""
    use = USE_NUMBA if use_numba is None else (use_numba and numba is not None)
    if use:
        _abs_power_sum_nb(acc, acc2, a, b, float(p))
    else:
        _abs_power_sum_np(acc, acc2, a, b, p)


def shift_power_sum(acc, acc2, u, shift, p, use_numba=None):
    """Accumulate sum_r |u[r, j + shift] - u[r, j]|^p (periodic in j) in place."""
    use = USE_NUMBA if use_numba is None else (use_numba and numba is not None)
    if use:
        _shift_power_sum_nb(acc, acc2, u, int(shift), float(p))
    else:
        _shift_power_sum_np(acc, acc2, u, int(shift), p)
