import numpy as np
import pytest
from hypothesis import given, strategies as st

from fracspde.kernel import Grid1D
from fracspde.noise import (
    NoiseBatch,
    empirical_sheet_covariance,
    sample_noise,
    sheet_covariance,
    standard_normal_block,
)


def test_increment_moments():
    g = Grid1D(4.0, 1024)
    dt = 1e-3
    w = sample_noise(g, dt, 1000, seed=7).increments
    assert w.shape == (1000, 1024)
    var = dt * g.dx
    assert abs(w.mean()) < 5 * np.sqrt(var / w.size)
    # sample variance of 1e6 normals is within 0.5% with overwhelming probability
    assert w.var() == pytest.approx(var, rel=5e-3)
    z = w.ravel() / np.sqrt(var)
    assert abs(np.mean(z ** 3)) < 0.02
    assert np.mean(z ** 4) == pytest.approx(3.0, abs=0.05)


def test_variance_halves_with_dt():
    g = Grid1D(4.0, 256)
    a = sample_noise(g, 1e-3, 400, seed=1).increments.var()
    b = sample_noise(g, 5e-4, 400, seed=1).increments.var()
    assert a / b == pytest.approx(2.0, rel=0.03)


def test_determinism_and_seed_dependence():
    g = Grid1D(2.0, 64)
    a = sample_noise(g, 0.01, 20, seed=3).increments
    b = sample_noise(g, 0.01, 20, seed=3).increments
    c = sample_noise(g, 0.01, 20, seed=4).increments
    assert np.array_equal(a, b)
    assert not np.allclose(a, c)
    with pytest.raises(ValueError):
        sample_noise(g, 0.01, 20, seed=-1)
    with pytest.raises(ValueError):
        sample_noise(g, 0.0, 20, seed=1)


def test_replicates_independent_of_batching():
    g = Grid1D(2.0, 64)
    full = NoiseBatch(g, 0.01, 5, seed=11, replicates=range(0, 10))
    part = NoiseBatch(g, 0.01, 5, seed=11, replicates=range(4, 7))
    for m in range(5):
        np.testing.assert_array_equal(full.step(m)[4:7], part.step(m))
    single = sample_noise(g, 0.01, 5, seed=11, replicate=5).increments
    np.testing.assert_array_equal(single, np.array([full.step(m)[5] for m in range(5)]))
    # a non-contiguous replicate list gives the same rows
    rows = standard_normal_block(11, 2, 64, [9, 0, 5])
    np.testing.assert_array_equal(rows, standard_normal_block(11, 2, 64, range(10))[[9, 0, 5]])


def test_coarsen_is_aggregation():
    g = Grid1D(2.0, 64)
    f = sample_noise(g, 0.01, 8, seed=2)
    c = f.coarsen()
    assert c.grid == Grid1D(2.0, 32) and c.dt == 0.02 and c.n_steps == 4
    w = f.increments
    assert c.increments[1, 3] == pytest.approx(w[2, 6] + w[2, 7] + w[3, 6] + w[3, 7], abs=1e-15)
    assert c.variance == pytest.approx(4 * f.variance)


def test_nested_batch_matches_coarsened_fine_noise():
    g = Grid1D(2.0, 32)
    for level in (1, 2):
        batch = NoiseBatch(g, 0.04, 3, seed=5, replicates=range(2, 4), level=level)
        fine = sample_noise(g.refine(2 ** level), 0.04 / 2 ** level, 3 * 2 ** level, seed=5, replicate=3)
        for _ in range(level):
            fine = fine.coarsen()
        got = np.array([batch.step(m)[1] for m in range(3)])
        np.testing.assert_array_equal(got, fine.increments)
        np.testing.assert_array_equal(batch.field(1).increments, fine.increments)


def test_nested_batch_variance():
    g = Grid1D(4.0, 256)
    batch = NoiseBatch(g, 1e-3, 1, seed=8, replicates=range(400), level=1)
    w = batch.step(0)
    assert w.var() == pytest.approx(batch.variance, rel=0.02)


def test_sheet_covariance_formula():
    assert sheet_covariance(1.0, 2.0, 0.5, 1.0) == pytest.approx(0.5)
    assert sheet_covariance(1.0, 1.0, 1.0, -1.0) == 0.0
    assert sheet_covariance(0.3, 0.7, -0.5, -0.2) == pytest.approx(0.3 * 0.2)
    with pytest.raises(ValueError):
        sheet_covariance(-1.0, 1.0, 0.0, 0.0)


@given(s=st.floats(0, 5), t=st.floats(0, 5), x=st.floats(-5, 5), y=st.floats(-5, 5))
def test_sheet_covariance_symmetric_and_bounded(s, t, x, y):
    c = sheet_covariance(s, t, x, y)
    assert c == pytest.approx(sheet_covariance(t, s, y, x))
    # Cauchy-Schwarz against the variances t |x| and s |y|
    assert c * c <= sheet_covariance(t, t, x, x) * sheet_covariance(s, s, y, y) * (1 + 1e-12) + 1e-15


def test_empirical_sheet_covariance():
    g = Grid1D(1.0, 32)
    points = [(0.5, 0.5, 0.5, 0.5), (0.25, 0.5, 0.5, 0.25), (0.5, 0.5, 0.5, -0.5), (0.5, -0.25, 0.25, -0.5)]
    rows = empirical_sheet_covariance(g, 0.05, 10, 4000, points, seed=21)
    for r in rows:
        assert abs(r.empirical - r.analytic) <= 4 * r.stderr + 1e-12
    with pytest.raises(ValueError):
        empirical_sheet_covariance(g, 0.05, 10, 50, points, seed=1)
    with pytest.raises(ValueError):
        empirical_sheet_covariance(g, 0.05, 10, 100, [(0.51, 0.5, 0.5, 0.5)], seed=1)
