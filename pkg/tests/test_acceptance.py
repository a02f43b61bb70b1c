"""Acceptance criteria 1-10, one PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py`` (the lines appear in the
terminal summary) or ``python tests/test_acceptance.py``. Statistical
criteria use fixed seeds, so every run reproduces the same numbers.
"""

import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from fracspde.analysis import (
    estimate_moments,
    fit_holder_exponent,
    gronwall_property_check,
    increment_tables,
)
from fracspde.harness import GRONWALL_MATRIX, holder_trials
from fracspde.kernel import (
    Grid1D,
    KernelSpec,
    kernel_closed_form,
    kernel_values,
    l2_time_scaling,
    power_integrability_exponent,
    self_similarity_residual,
    semigroup_residual,
)
from fracspde.noise import sample_noise
from fracspde.solver import InitialCondition, SimConfig, evolve_mild, noise_for, picard_solve, preset

pytestmark = pytest.mark.acceptance


def _record(k, passed, detail, elapsed):
    line = f"CRITERION {k:2d}: {'PASS' if passed else 'FAIL'}  ({elapsed:.1f} s)  {detail}"
    ACCEPTANCE_LINES[k] = line
    print(line, flush=True)
    return passed


# -- 1. kernel identities ---------------------------------------------------------


def test_criterion_01_kernel_identities():
    start = time.perf_counter()
    worst = {"mass": 0.0, "min": math.inf, "selfsim": 0.0, "semigroup": 0.0, "cf2": 0.0, "cf1": 0.0}
    spec = KernelSpec(1.5, Grid1D(256.0, 2 ** 18))
    for lam in (1.1, 1.5, 2.0):
        spec = KernelSpec(lam, Grid1D(256.0, 2 ** 18))
        for t in (0.1, 1.0, 5.0):
            kv = kernel_values(spec, t)
            worst["mass"] = max(worst["mass"], abs(kv.mass - 1.0))
            worst["min"] = min(worst["min"], float(kv.values.min()))
            worst["selfsim"] = max(worst["selfsim"], self_similarity_residual(spec, t))
            worst["semigroup"] = max(worst["semigroup"], semigroup_residual(spec, t / 2, t / 2))
            if lam == 2.0:
                err = np.max(np.abs(kv.values - kernel_closed_form(2, t, spec.grid.x)))
                worst["cf2"] = max(worst["cf2"], float(err))
    cauchy = KernelSpec(1.0, Grid1D(1024.0, 2 ** 21))
    for t in (0.1, 1.0, 5.0):
        v = kernel_values(cauchy, t).values
        worst["cf1"] = max(worst["cf1"], float(np.max(np.abs(v - kernel_closed_form(1, t, cauchy.grid.x)))))
    elapsed = time.perf_counter() - start
    checks = (
        worst["mass"] <= 1e-6 and worst["min"] >= -1e-8 and worst["selfsim"] < 1e-5
        and worst["semigroup"] < 1e-5 and worst["cf2"] < 1e-8 and worst["cf1"] < 1e-6
    )
    detail = ("mass err {mass:.1e}, min {min:.1e}, self-sim {selfsim:.1e}, semigroup {semigroup:.1e}, "
              "lam=2 closed form {cf2:.1e}, lam=1 closed form {cf1:.1e}").format(**worst)
    assert _record(1, checks and elapsed < 10.0, detail, elapsed)


# -- 2. L2 time scaling --------------------------------------------------------------


def test_criterion_02_l2_scaling():
    start = time.perf_counter()
    times = (0.05, 0.1, 0.2, 0.4, 0.8)
    slopes = {}
    const2 = None
    for lam in (1.25, 1.5, 2.0):
        fit = l2_time_scaling(KernelSpec(lam, Grid1D(64.0, 2 ** 16)), times)
        slopes[lam] = fit.slope
        if lam == 2.0:
            const2 = fit.constant
    elapsed = time.perf_counter() - start
    slope_err = max(abs(s + 1.0 / lam) for lam, s in slopes.items())
    const_err = abs(const2 - math.sqrt(math.pi / 2))
    ok = slope_err < 1e-3 and const_err < 1e-4 and elapsed < 10.0
    detail = f"max slope error {slope_err:.1e}, lam=2 constant error {const_err:.1e}"
    assert _record(2, ok, detail, elapsed)


# -- 3. integrability classification -----------------------------------------------


def test_criterion_03_integrability():
    start = time.perf_counter()
    finite = [(2.0, 1.5), (2.0, 2.0)] + [(1.0, lam) for lam in (0.5, 1.0, 1.5, 2.0)]
    infinite = [(2.5, 1.5), (3.0, 1.5), (3.0, 2.0), (4.0, 2.0)]
    ok = all(power_integrability_exponent(lam, a).overall_finite for a, lam in finite)
    ok &= not any(power_integrability_exponent(lam, a).overall_finite for a, lam in infinite)
    # alpha = 2 with lam <= 1: the time factor diverges
    for lam in (0.8, 1.0):
        r = power_integrability_exponent(lam, 2.0)
        ok &= (not r.overall_finite) and r.time_exponent <= -1.0
    elapsed = time.perf_counter() - start
    detail = f"{len(finite)} finite, {len(infinite) + 2} infinite cases classified"
    assert _record(3, ok and elapsed < 10.0, detail, elapsed)


# -- 4. deterministic solver oracle ---------------------------------------------------


def test_criterion_04_deterministic_oracle():
    start = time.perf_counter()
    spec = KernelSpec(1.5, Grid1D(16.0, 1024))
    cfg = SimConfig(spec, 1e-3, 500, preset("zero"), InitialCondition("smooth_cosine", amplitude=1.0))
    traj = evolve_mild(cfg, noise_for(cfg))
    xi = 1.0 / (2 * spec.grid.half_width)
    expected = np.exp(-cfg.times[:, None] * xi ** 1.5) * traj.snapshots[0]
    mode_err = float(np.max(np.abs(traj.snapshots - expected)))
    cfg = SimConfig(spec, 1e-3, 500, preset("forcing"), InitialCondition("constant", 0.0))
    traj = evolve_mild(cfg, noise_for(cfg))
    force_err = float(np.max(np.abs(traj.snapshots - cfg.times[:, None])))
    elapsed = time.perf_counter() - start
    ok = mode_err < 1e-12 and force_err < 1e-8 and elapsed < 30.0
    assert _record(4, ok, f"single mode error {mode_err:.1e}, constant forcing error {force_err:.1e}", elapsed)


# -- 5. additive-noise variance --------------------------------------------------------


def test_criterion_05_additive_variance():
    start = time.perf_counter()
    T = 0.25
    spec = KernelSpec(2.0, Grid1D(4.0, 1024))
    cfg = SimConfig(spec, 2.5e-4, 1000, preset("additive", sigma0=1.0), InitialCondition("constant", 0.0), seed=5)
    est = estimate_moments(cfg, 2, T, 1000, seed=5)
    j0 = spec.grid.n_points // 2  # x0 = 0
    target = 2.0 * math.sqrt(math.pi / 2) * math.sqrt(T)
    value, err = float(est.values[j0]), float(est.stderr[j0])
    elapsed = time.perf_counter() - start
    z = (value - target) / err
    ok = abs(z) <= 4.0
    assert _record(5, ok, f"Var u(T,0) = {value:.4f} +- {err:.4f}, target {target:.4f}, z = {z:+.2f}", elapsed)


# -- 6. Picard convergence ---------------------------------------------------------------


def _picard_case(seed):
    coarse = SimConfig(KernelSpec(2.0, Grid1D(16.0, 1024)), 1 / 32, 16, preset("affine"),
                       InitialCondition("smooth_cosine", amplitude=1.0), seed=seed)
    fine = coarse.refine(2)
    fine_noise = sample_noise(fine.grid, fine.dt, fine.n_steps, seed)
    coarse_noise = fine_noise.coarsen()
    res = picard_solve(coarse, coarse_noise, tol=1e-6, max_iter=15, raise_on_failure=False)
    d = res.distances
    monotone = all(b < a for a, b in zip(d[2:], d[3:]))
    diff_coarse = float(np.max(np.abs(res.trajectory.snapshots - evolve_mild(coarse, coarse_noise).snapshots)))
    res_f = picard_solve(fine, fine_noise, tol=1e-6, max_iter=40)
    diff_fine_full = np.abs(res_f.trajectory.snapshots - evolve_mild(fine, fine_noise).snapshots)
    diff_fine = float(np.max(diff_fine_full[::2, ::2]))
    return res.converged, res.iterations, monotone, diff_coarse, diff_fine


def test_criterion_06_picard():
    start = time.perf_counter()
    parts = []
    ok = True
    for seed in (1, 2, 3):
        conv, its, mono, dc, df = _picard_case(seed)
        ok &= conv and its <= 15 and mono and df < dc
        parts.append(f"seed {seed}: {its} it, monotone={mono}, euler gap {dc:.3f} -> {df:.3f}")
    elapsed = time.perf_counter() - start
    assert _record(6, ok, "; ".join(parts), elapsed)


# -- 7. moment bound under refinement ---------------------------------------------------------


def test_criterion_07_moment_refinement():
    start = time.perf_counter()
    ok = True
    parts = []
    for lam in (1.5, 2.0):
        coarse = SimConfig(KernelSpec(lam, Grid1D(4.0, 256)), 2e-3, 250, preset("bounded-smooth"),
                           InitialCondition("smooth_cosine", amplitude=1.0), seed=1, noise_level=1)
        fine = coarse.refine(2)
        ec = estimate_moments(coarse, (2, 4), 0.5, 500, seed=1)
        ef = estimate_moments(fine, (2, 4), 0.5, 500, seed=1)
        for c, f in zip(ec, ef):
            finite = math.isfinite(c.sup_over_grid) and math.isfinite(f.sup_over_grid)
            ratio = f.sup_over_grid / c.sup_over_grid
            ok &= finite and abs(ratio - 1.0) <= 0.2
            parts.append(f"lam={lam} p={c.p:g}: {c.sup_over_grid:.3f} -> {f.sup_over_grid:.3f} (x{ratio:.3f})")
    elapsed = time.perf_counter() - start
    assert _record(7, ok, "; ".join(parts), elapsed)


# -- 8. Hoelder exponents, smooth data ------------------------------------------------------------


HOLDER_DESIGNS = {
    # lam: (dt, time lag steps, space lag cells, time band, space band)
    2.0: (1e-4, [40, 70, 125, 222, 395, 703, 1250], [5, 9, 16, 28, 50, 89, 158], (0.20, 0.30), (0.43, 0.57)),
    1.5: (5e-5, [79, 141, 250, 445, 791, 1406, 2500], [5, 9, 16, 28, 50, 89, 158], (0.11, 0.22), (0.18, 0.32)),
}


def _holder_run(lam):
    dt, steps, cells, tband, sband = HOLDER_DESIGNS[lam]
    cfg = SimConfig(KernelSpec(lam, Grid1D(0.5, 1024)), dt, int(round(0.5 / dt)), preset("additive", sigma0=1.0),
                    InitialCondition("smooth_cosine", amplitude=1.0), seed=1)
    dx = cfg.grid.dx
    reqs = [("time", 2.0, np.array(steps) * dt), ("space", 2.0, np.array(cells) * dx),
            ("time", 4.0, np.array(steps) * dt), ("space", 4.0, np.array(cells) * dx)]
    fits = [fit_holder_exponent(t) for t in increment_tables(cfg, reqs, 400, seed=1)]
    ok = tband[0] <= fits[0].estimated_gamma <= tband[1] and sband[0] <= fits[1].estimated_gamma <= sband[1]
    detail = (f"lam={lam}: time {fits[0].estimated_gamma:.3f}+-{fits[0].stderr:.3f} in {list(tband)}, "
              f"space {fits[1].estimated_gamma:.3f}+-{fits[1].stderr:.3f} in {list(sband)} "
              f"(p=4: {fits[2].estimated_gamma:.3f}, {fits[3].estimated_gamma:.3f})")
    return ok, detail


def test_criterion_08_holder_exponents():
    start = time.perf_counter()
    results = [_holder_run(lam) for lam in (2.0, 1.5)]
    elapsed = time.perf_counter() - start
    assert _record(8, all(r[0] for r in results), "; ".join(r[1] for r in results), elapsed)


# -- 9. rough initial data ----------------------------------------------------------------------


def test_criterion_09_rough_initial_data():
    start = time.perf_counter()
    dt = 5e-4
    steps = np.unique(np.round(np.geomspace(6, 200, 7)).astype(int))
    cfg = SimConfig(KernelSpec(2.0, Grid1D(0.25, 32768)), dt, int(steps[-1]), preset("additive", sigma0=0.1),
                    InitialCondition("hoelder_rough", rho=0.1, seed=1), seed=1)
    (tab,) = increment_tables(cfg, [("time", 2.0, steps * dt)], 400, seed=1, base_times=(0,))
    fit = fit_holder_exponent(tab)
    elapsed = time.perf_counter() - start
    ok = 0.03 <= fit.estimated_gamma <= 0.08
    detail = f"time gamma {fit.estimated_gamma:.3f}+-{fit.stderr:.3f} in [0.03, 0.08] (bound {fit.theoretical_bound:.3f})"
    assert _record(9, ok, detail, elapsed)


# -- 10. inequality property suites ---------------------------------------------------------------


@pytest.mark.xfail(strict=True, reason="the Gronwall-type envelope is violated for theta < 1; see README")
def test_criterion_10_appendix_properties():
    start = time.perf_counter()
    holder = {q: holder_trials(q, 10_000, seed=0)[0] for q in (1.5, 2.0, 3.0, 7.0)}
    t_grid = np.linspace(0.0, 1.0, 11)[1:]
    gron = []
    for theta, a, b, M, sat in GRONWALL_MATRIX:
        res = gronwall_property_check(theta, a, b, M, t_grid, 10, seed=0, saturate=sat)
        gron.append((theta, a, sat, res))
    elapsed = time.perf_counter() - start
    holder_ok = all(v == 0 for v in holder.values())
    gron_ok = all(r.passed for *_, r in gron)
    failed = sorted({f"{th:.3g}" for th, _, _, r in gron if not r.passed})
    firsts = ", ".join(
        f"theta={th:.3g}{' sat' if sat else ''} n={r.first_violation[0]}"
        for th, _, sat, r in gron if not r.passed
    )
    detail = (f"Hoelder violations {sum(holder.values())} in 4x10^4; Gronwall fails for theta in {{{', '.join(failed)}}} "
              f"[{firsts}], worst margin {min(r.worst_margin for *_, r in gron):.1f}")
    assert _record(10, holder_ok and gron_ok and elapsed < 60.0, detail, elapsed)


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
