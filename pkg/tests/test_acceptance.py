"""One test per acceptance criterion, each at its stated tolerance.

Every test records a PASS/FAIL line that is printed in the terminal summary.
"""

import json
import math
import time

import numpy as np
import pytest

from abpiso import abp, cones, fixtures, logsobolev as ls, manifold, pipelines, studies, surface
from abpiso.cli import run
from abpiso.euclid import SampleStream, ball_volume, brendle_constant, sphere_area
from abpiso.pipelines import RunConfig
from conftest import ACCEPTANCE_LINES, Solved


def record(number, title, ok, detail):
    ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'} criterion {number}: {title} ({detail})")
    print(ACCEPTANCE_LINES[-1])
    assert ok, detail


def test_criterion_01_constants():
    start = time.perf_counter()
    exact_one = all(brendle_constant(n, 1) == 1.0 and brendle_constant(n, 2) == 1.0 for n in range(1, 11))
    worst = max(abs((n + 2) * ball_volume(n + 2) - 2 * ball_volume(n) * ball_volume(2))
                / (2 * ball_volume(n) * ball_volume(2)) for n in range(1, 11))
    b23 = abs(brendle_constant(2, 3) - math.sqrt(2 / 3))
    elapsed = time.perf_counter() - start
    ok = exact_one and worst <= 1e-12 and b23 <= 1e-12 and elapsed < 1.0
    record(1, "dimensional constants", ok,
           f"b=1 exact: {exact_one}, identity rel err {worst:.1e}, b23 err {b23:.1e}, {elapsed:.3f}s")


def test_criterion_02_two_point_cone_measure():
    start = time.perf_counter()
    pts = pipelines.two_point_set()
    target = 5 * math.pi / 3
    est = cones.restricted_union_measure(pts, 1.0, 100_000, SampleStream(7))
    exact = cones.restricted_union_measure_exact_2d(pts, 1.0)
    elapsed = time.perf_counter() - start
    ok = abs(est.value - target) <= 3 * est.standard_error and abs(exact - target) <= 1e-10 and elapsed < 5
    record(2, "two-point restricted cone measure", ok,
           f"MC {est.value:.5f} +- {est.standard_error:.4f}, exact err {abs(exact - target):.1e}, {elapsed:.2f}s")


def test_criterion_03_half_sphere_sweep():
    start = time.perf_counter()
    rows = studies.half_sphere_sweep(SampleStream(2024), configs=100, samples=20_000)
    elapsed = time.perf_counter() - start
    failing = [r for r in rows if not r.holds]
    worst = min(r.margin / r.standard_error if r.standard_error else math.inf for r in rows)
    dims = sorted({r.dim for r in rows})
    ok = not failing and elapsed < 120 and len({r.config for r in rows}) == 100
    record(3, "random configurations cover half the sphere", ok,
           f"{len(rows)} rows over dims {dims}, {len(failing)} failing, worst z {worst:.2f}, {elapsed:.1f}s")


def test_criterion_04_solver_convergence():
    start = time.perf_counter()
    coarse, fine = studies.convergence_study((0.04, 0.02))
    elapsed = time.perf_counter() - start
    ratio = coarse.max_error / fine.max_error
    record(4, "second-order solve convergence", ratio >= 3 and elapsed < 30,
           f"errors {coarse.max_error:.2e} -> {fine.max_error:.2e}, ratio {ratio:.2f}, {elapsed:.1f}s")


def test_criterion_05_image_measure(half_disk_02):
    start = time.perf_counter()
    s = half_disk_02
    half = math.pi / 2
    est = abp.image_measure(s.mesh, s.u, 100_000, SampleStream(42), s.ctx)
    main_ok = abs(est.value - half) <= max(3 * est.standard_error, 0.03 * half)
    parts = [f"half-disk {est.value:.4f}"]
    ok = main_ok
    h = 0.02
    for name, mesh in (("quarter_wedge", fixtures.quarter_wedge(h)), ("perturbed", fixtures.perturbed_half_disk(0.2, h))):
        f = Solved(mesh)
        e = abp.image_measure(f.mesh, f.u, 100_000, SampleStream(43), f.ctx)
        good = e.value >= half - 3 * e.standard_error - h
        ok &= good
        parts.append(f"{name} {e.value:.4f}")
    elapsed = time.perf_counter() - start
    ok &= elapsed < 120
    record(5, "gradient image covers half the ball", ok, ", ".join(parts) + f", {elapsed:.1f}s")


def test_criterion_06_chain_and_equality(half_disk_02):
    s = half_disk_02
    rep = abp.abp_chain(s.mesh, s.u, s.contact, 100_000, SampleStream(42), s.grad, s.hessian)
    values = [rep.half_ball, rep.image_measure, rep.det_integral, rep.amgm_integral, rep.domain_volume]
    spread = max(values) / min(values) - 1
    fine = Solved(fixtures.half_disk(0.01))
    r02 = abp.relative_quotient_codim0(s.mesh)[2]
    r01 = abp.relative_quotient_codim0(fine.mesh)[2]
    d02 = abp.equality_diagnostics(s.mesh, s.u, s.contact, s.grad, s.hessian).hessian_deviation
    d01 = abp.equality_diagnostics(fine.mesh, fine.u, fine.contact, fine.grad, fine.hessian).hessian_deviation
    ok = (spread <= 0.05 and rep.holds and abs(r02 - 1) <= 0.02 and abs(r01 - 1) < abs(r02 - 1)
          and d02 <= 0.1 and d01 < d02)
    record(6, "inequality chain and equality case", ok,
           f"chain spread {spread:.3f}, ratio {r02:.6f} -> {r01:.6f}, Hessian dev {d02:.3f} -> {d01:.3f}")


def test_criterion_07_flat_surface_equality(flat_r4):
    start = time.perf_counter()
    sol, _ = flat_r4
    q = manifold.quotient_report(sol.mesh, sol.curvature)
    bound = manifold.area_lower_bound(4, 2)
    analytic = abs(bound - math.pi / 2)
    ok = abs(q.ratio - 1) <= 0.02 and analytic <= 1e-10
    parts = [f"ratio {q.ratio:.6f}", f"area bound err {analytic:.1e}"]
    ctx = manifold.PhiContext.build(sol)
    for k, t in enumerate((0.5, 0.9)):
        rep = manifold.volume_bound_check(sol, 100_000, SampleStream(77).fork(k), t, ctx)
        se3 = 3 * rep.standard_error
        good = rep.lower_margin >= -se3 and rep.upper_margin >= -se3
        ok &= good
        parts.append(f"t={t}: {rep.estimate:.4f} in [{rep.lower:.4f}, {rep.upper:.4f}] +- {se3:.4f}")
    elapsed = time.perf_counter() - start
    ok &= elapsed < 120
    record(7, "flat half-disk in R^4 equality", ok, ", ".join(parts) + f", {elapsed:.1f}s")


def test_criterion_08_jacobian(flat_r4, cap):
    flat = manifold.jacobian_bound_samples(flat_r4[0], 100_000, SampleStream(81))
    sol = cap[0]
    delta = 10 * 0.02
    c = manifold.jacobian_bound_samples(sol, 100_000, SampleStream(82), delta)
    ok = flat.near_one_fraction >= 0.95 and 1 - c.outside_fraction >= 0.95
    record(8, "Jacobian of the normal map", ok,
           f"flat near-one {flat.near_one_fraction:.4f}, cap inside {1 - c.outside_fraction:.4f} at delta {delta:.3f}")


def test_criterion_09_michael_simon(flat_r4):
    start = time.perf_counter()
    sol, _ = flat_r4
    ratios = {name: manifold.michael_simon_eval(sol.mesh, sol.curvature, f).ratio
              for name, f in pipelines.michael_simon_profiles(sol.mesh).items()}
    elapsed = time.perf_counter() - start
    ok = len(ratios) == 3 and min(ratios.values()) >= 1 - 1e-2 and elapsed < 30
    record(9, "Sobolev-type inequality on the flat half-disk", ok,
           ", ".join(f"{k} {v:.4f}" for k, v in ratios.items()) + f", {elapsed:.2f}s")


def test_criterion_10_log_sobolev(free_disk):
    mesh, curv = free_disk
    margins = {}
    for name, f in pipelines.logsob_profiles(mesh).items():
        margins[name] = ls.logsob_check(ls.solve_weighted(mesh, curv, f)).margin
    f = pipelines.logsob_profiles(mesh)["gaussian_inner"]
    c = 3.7
    a, b = ls.logsob_values(mesh, curv, f), ls.logsob_values(mesh, curv, c * f)
    shift = c * a.mass * math.log(c)
    scale_err = max(abs(b.lhs - (c * a.lhs + shift)), abs(b.rhs - (c * a.rhs + shift)))
    ones = np.ones(len(mesh.vertices))
    gaps = [ls.gaussian_corollary_eval(mesh, curv, phi, x0).dual_path_gap
            for phi, x0 in ((ones, [0, 0, 0]), (1 + 0.5 * np.exp(-np.sum(mesh.vertices ** 2, axis=1) / 8), [0.5, 0.5, 0]))]
    sym = abs(ls.gaussian_corollary_eval(mesh, curv, ones, [0.0, 0.0, 0.0]).boundary_term)
    ok = len(margins) == 4 and min(margins.values()) >= -1e-3 and scale_err <= 1e-10 and max(gaps) <= 1e-6 \
        and sym <= 1e-10
    record(10, "log-Sobolev inequality and Gaussian form", ok,
           "margins " + ", ".join(f"{k} {v:.4f}" for k, v in margins.items())
           + f", scaling err {scale_err:.1e}, dual path {max(gaps):.1e}, symmetric boundary term {sym:.1e}")


def test_criterion_11_determinism():
    cfg = RunConfig("all", 20260101)
    first, _ = run(cfg)
    second, _ = run(RunConfig("all", 20260101))
    a = json.dumps(first.numerics(), sort_keys=True)
    b = json.dumps(second.numerics(), sort_keys=True)
    record(11, "identical configurations give identical numerics", a == b,
           f"{len(first.checks)} checks compared, runtimes {first.runtime_seconds:.1f}s and {second.runtime_seconds:.1f}s")
    # the default run is also expected to pass end to end
    assert first.passed, [c.name for c in first.checks if not c.passed] + first.errors
