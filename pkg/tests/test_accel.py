import os
import subprocess
import sys

import numpy as np
import pytest

from fracspde import _accel

pytestmark = pytest.mark.skipif(not _accel.USE_NUMBA, reason="numba not installed or disabled")


def test_box_muller_paths_agree():
    raw = np.random.Philox(key=np.array([3, 0], dtype=np.uint64)).random_raw(10_000)
    a = _accel.box_muller(raw, use_numba=True)
    b = _accel.box_muller(raw, use_numba=False)
    assert np.max(np.abs(a - b)) < 1e-14
    assert abs(b.mean()) < 0.05 and b.var() == pytest.approx(1.0, abs=0.05)


def test_volterra_sum_paths_agree():
    rng = np.random.default_rng(0)
    powers = np.exp(-rng.uniform(0, 1, (12, 9)))
    forcing = rng.standard_normal((12, 9)) + 1j * rng.standard_normal((12, 9))
    a = _accel.volterra_sum(powers, forcing, use_numba=True)
    b = _accel.volterra_sum(powers, forcing, use_numba=False)
    np.testing.assert_allclose(a, b, rtol=1e-13, atol=1e-14)
    assert np.all(a[0] == 0)
    # direct definition for one row
    m = 5
    ref = sum(powers[m - 1 - l] * forcing[l] for l in range(m))
    np.testing.assert_allclose(a[m], ref, rtol=1e-13)


@pytest.mark.parametrize("p", [1.0, 2.0, 3.5])
def test_power_sums_paths_agree(p):
    rng = np.random.default_rng(1)
    u = rng.standard_normal((7, 32))
    v = rng.standard_normal((7, 32))
    accs = []
    for use in (True, False):
        acc, acc2 = np.zeros(32), np.zeros(32)
        _accel.abs_power_sum(acc, acc2, u, v, p, use_numba=use)
        s, s2 = np.zeros(32), np.zeros(32)
        _accel.shift_power_sum(s, s2, u, 5, p, use_numba=use)
        accs.append((acc, acc2, s, s2))
    for x, y in zip(*accs):
        np.testing.assert_allclose(x, y, rtol=1e-12)
    np.testing.assert_allclose(accs[1][2], (np.abs(np.roll(u, -5, axis=1) - u) ** p).sum(axis=0))


def test_env_flag_disables_numba():
    env = dict(os.environ, FRACSPDE_NUMBA="0")
    out = subprocess.run([sys.executable, "-c", "from fracspde import _accel; print(_accel.USE_NUMBA)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "False"
