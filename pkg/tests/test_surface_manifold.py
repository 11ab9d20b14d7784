import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from abpiso import domain, fixtures, manifold, surface
from abpiso.euclid import DomainError, SampleStream, ball_volume
from abpiso.mesh import PreconditionError, normalize_codim0


def rotation(dim, seed):
    q, _ = np.linalg.qr(np.random.default_rng(seed).normal(size=(dim, dim)))
    return q


def test_frames_are_orthonormal():
    for mesh in (fixtures.flat_half_disk_embedded(0.1, 4), fixtures.sphere_cap(0.1), fixtures.unit_sphere(2)):
        assert surface.frame_defect(mesh) <= 1e-10
        assert not surface.validate_surface(mesh)


def test_estimated_frames_span_the_analytic_tangents():
    mesh = fixtures.sphere_cap(0.05)
    t, _ = surface.estimate_frames(mesh.vertices, mesh.cells)
    # projection of the analytic tangents onto the estimated plane
    proj = np.einsum("vik,vjk->vij", mesh.tangents, t)
    sv = np.linalg.svd(proj, compute_uv=False)
    assert sv.min() > 0.999


def test_flat_surface_has_zero_curvature():
    mesh = fixtures.flat_half_disk_embedded(0.05, 3)
    curv = surface.curvature(mesh)
    assert np.max(curv.norms()) < 1e-10
    assert np.max(np.abs(curv.second_form)) < 1e-10


def test_sphere_mean_curvature_points_inward_with_norm_two():
    for level in (2, 3):
        mesh = fixtures.unit_sphere(level)
        curv = surface.curvature(mesh)
        assert np.allclose(curv.norms(), 2.0, atol=1e-8)
        assert np.allclose(curv.mean_curvature, -2 * mesh.vertices, atol=1e-8)


def test_cap_mean_curvature_converges_in_the_mean():
    errs = []
    for h in (0.1, 0.05):
        mesh = fixtures.sphere_cap(h)
        curv = surface.curvature(mesh)
        errs.append(float(mesh.masses() @ np.abs(curv.norms() - 2.0) / mesh.masses().sum()))
    assert errs[1] < errs[0]
    assert errs[1] < 0.02


def test_cylinder_principal_curvatures():
    for r in (1.0, 2.0):
        mesh = fixtures.cylinder_patch(0.05, radius=r)
        curv = surface.curvature(mesh)
        interior = ~mesh.boundary_vertices()
        lam = np.sort(np.abs(np.linalg.eigvalsh(curv.second_form[interior, 0])), axis=1)
        assert np.median(lam[:, 1]) == pytest.approx(1 / r, rel=0.01)
        assert np.median(lam[:, 0]) == pytest.approx(0.0, abs=0.01)
        assert np.median(curv.norms()[interior]) == pytest.approx(1 / r, rel=0.01)


def test_trace_of_second_form_matches_mean_curvature():
    mesh = fixtures.sphere_cap(0.05)
    curv = surface.curvature(mesh)
    traced = np.einsum("vaii->va", curv.second_form)
    H_frame = np.einsum("vk,vak->va", curv.mean_curvature, mesh.normals)
    assert np.median(np.abs(traced - H_frame)) < 0.01


def test_normalize_examples():
    mesh = fixtures.flat_half_disk_embedded(0.02, 4)
    curv = surface.curvature(mesh)
    _, _, s = manifold.normalize_submanifold(mesh, curv)
    assert s == pytest.approx(1.0, abs=1e-3)
    big = mesh.scaled(2.0)
    _, _, s2 = manifold.normalize_submanifold(big, surface.curvature(big))
    assert s2 == pytest.approx(s / 2, rel=1e-8)
    cap = fixtures.sphere_cap(0.05)
    scaled, c2, _ = manifold.normalize_submanifold(cap, surface.curvature(cap))
    t = manifold.totals(scaled, c2)
    assert t.sigma_length + t.mean_curvature_integral == pytest.approx(2 * t.area, rel=1e-10)


def test_normalize_rejects_empty_left_side():
    mesh = fixtures.free_half_disk(0.1)
    with pytest.raises(PreconditionError):
        manifold.normalize_submanifold(mesh, surface.curvature(mesh))


def test_unnormalised_solve_reports_the_defect():
    mesh = fixtures.flat_half_disk_embedded(0.1, 4).scaled(2.0)
    with pytest.raises(PreconditionError, match="compatibility defect"):
        manifold.solve_submanifold_neumann(mesh, surface.curvature(mesh))


def quadratic_gap(sol):
    x = sol.mesh.vertices
    q = 0.5 * np.sum(x ** 2, axis=1)
    mass = sol.mesh.masses()
    return float(np.max(np.abs(sol.values - (q - mass @ q / mass.sum()))))


def test_flat_solutions_are_the_quadratic(flat_r4):
    sol, _ = flat_r4
    assert quadratic_gap(sol) < 1e-3
    closed, _ = manifold.prepare(fixtures.full_disk_embedded(0.02, 4))
    assert quadratic_gap(closed) < 1e-3


def test_flat_solution_agrees_with_planar_solve(flat_r4):
    sol, s = flat_r4
    planar, s0 = normalize_codim0(fixtures.half_disk(0.02))
    u = domain.solve_mixed_neumann(planar)
    assert s == pytest.approx(s0, rel=1e-12)
    assert np.allclose(sol.mesh.vertices[:, :2], planar.vertices, atol=1e-14)
    # the two solves lump vertex masses differently, so they agree to O(h^2)
    assert np.max(np.abs(sol.values - u.values)) < planar.mesh_size ** 2


def test_cap_solve_contract(cap):
    sol, _ = cap
    assert sol.field.info["compatibility_residual"] <= 1e-8
    assert sol.field.info["linear_residual"] <= 1e-10


def test_quotient_examples(flat_r4, cap):
    sol, _ = flat_r4
    q = manifold.quotient_report(sol.mesh, sol.curvature)
    assert q.variant == "relative"
    assert q.lhs == pytest.approx(0.5, rel=1e-3) and q.rhs == pytest.approx(0.5, rel=1e-3)
    assert q.ratio == pytest.approx(1.0, abs=2e-4)
    assert q.minimal_ratio == pytest.approx(q.ratio)
    disk = fixtures.full_disk_embedded(0.02, 4)
    qd = manifold.quotient_report(disk, surface.curvature(disk))
    assert qd.variant == "closed"
    assert qd.ratio == pytest.approx(1.0, abs=2e-4)
    csol, _ = cap
    assert manifold.quotient_report(csol.mesh, csol.curvature).ratio >= 1.0


def test_quotient_rigid_and_scale_invariance():
    mesh = fixtures.sphere_cap(0.1)
    base = manifold.quotient_report(mesh, surface.curvature(mesh)).ratio
    moved = mesh.rigid(rotation(3, 1), np.array([0.3, -2.0, 1.0]))
    assert manifold.quotient_report(moved, surface.curvature(moved)).ratio == pytest.approx(base, abs=1e-10)
    big = mesh.scaled(3.0)
    assert manifold.quotient_report(big, surface.curvature(big)).ratio == pytest.approx(base, abs=1e-10)


def test_phi_membership_examples(flat_r4):
    sol, _ = flat_r4
    ctx = manifold.PhiContext.build(sol)
    v = manifold.phi_membership([0.3, 0.4, 0.0, 0.0], sol, 0.0, ctx)
    assert v.accepted
    assert np.allclose(v.normal_part, 0.0)
    xi = np.array([0.0, 0.0, 0.3, 0.4])
    v = manifold.phi_membership(xi, sol, 0.0, ctx)
    assert v.witness == int(np.argmin(sol.values))
    assert v.accepted
    assert np.allclose(v.normal_part, [0.3, 0.4])
    for bad in ([0.6, 0.0, 0.8, 0.0], [0.0, 1.2, 0.0, 0.0]):
        with pytest.raises(DomainError):
            manifold.phi_membership(bad, sol, 0.0, ctx)
    with pytest.raises(DomainError):
        manifold.phi_membership([0.1, 0.1, 0.0, 0.0], sol, 0.5, ctx)


def test_area_bound_in_the_equality_case():
    bound = manifold.area_lower_bound(4, 2)
    assert bound == pytest.approx(0.5 * 4 * ball_volume(4) / (2 * ball_volume(2)), rel=1e-15)
    assert abs(bound - math.pi / 2) <= 1e-10
    assert manifold.area_lower_bound(4, 2, closed=True) == pytest.approx(math.pi, abs=1e-10)


def test_volume_bounds_on_flat_and_cap(flat_r4, cap):
    for sol, _ in (flat_r4, cap):
        ctx = manifold.PhiContext.build(sol) if sol.mesh.codim >= 2 else None
        for t in (0.5, 0.9):
            rep = manifold.volume_bound_check(sol, 20_000, SampleStream(3).fork(int(10 * t)), t, ctx)
            slack = 3 * rep.standard_error + sol.mesh.mesh_size
            assert rep.lower_margin >= -slack
            assert rep.upper_margin >= -3 * rep.standard_error
            assert rep.counts[manifold.AMBIGUOUS_CORNER] >= 0
    rep = manifold.volume_bound_check(cap[0], 100, SampleStream(0), 0.5)
    assert rep.lifted


def test_closed_flat_disk_area_margin():
    sol, _ = manifold.prepare(fixtures.full_disk_embedded(0.05, 4))
    rep = manifold.volume_bound_check(sol, 5_000, SampleStream(8), 0.5)
    assert rep.area_bound == pytest.approx(math.pi, abs=1e-10)
    assert abs(rep.area_margin) < 0.01


def test_jacobian_reports(flat_r4, cap):
    rep = manifold.jacobian_bound_samples(flat_r4[0], 20_000, SampleStream(4))
    assert rep.near_one_fraction >= 0.95
    crep = manifold.jacobian_bound_samples(cap[0], 20_000, SampleStream(5))
    assert crep.outside_fraction <= 0.05


def test_affine_data_has_zero_jacobian():
    mesh = fixtures.flat_half_disk_embedded(0.05, 4)
    curv = surface.curvature(mesh)
    values = 0.3 * mesh.vertices[:, 0] - 0.2 * mesh.vertices[:, 1]
    derivs = surface.intrinsic_derivatives(mesh, values)
    sol = manifold.SurfaceSolution(mesh, curv, domain.ScalarField(mesh, values), derivs)
    rep = manifold.jacobian_bound_samples(sol, 2_000, SampleStream(6), delta=1e-6)
    assert max(abs(rep.det_min), abs(rep.det_max)) < 1e-8


def test_michael_simon_examples(flat_r4):
    sol, _ = flat_r4
    mesh = sol.mesh
    r = np.linalg.norm(mesh.vertices, axis=1)
    sigma = mesh.vertices_with_label("sigma")
    rmax = r[sigma].min()
    plateau = np.clip((rmax - r) / 0.05, 0.0, 1.0)
    plateau[sigma] = 0.0
    bump = np.clip(1 - (r / rmax) ** 2, 0, None) ** 2
    bump[sigma] = 0.0
    for f in (plateau, bump):
        assert manifold.michael_simon_eval(mesh, sol.curvature, f).ratio >= 0.99
    zero = manifold.michael_simon_eval(mesh, sol.curvature, np.zeros(len(r)))
    assert zero.exact_zero and zero.lhs == zero.rhs == 0.0


def test_michael_simon_preconditions(flat_r4):
    sol, _ = flat_r4
    f = np.zeros(len(sol.mesh.vertices))
    f[5] = -1.0
    with pytest.raises(PreconditionError, match="vertex 5"):
        manifold.michael_simon_eval(sol.mesh, sol.curvature, f)
    g = np.zeros_like(f)
    k = int(np.flatnonzero(sol.mesh.vertices_with_label("sigma"))[0])
    g[k] = 1.0
    with pytest.raises(PreconditionError, match=f"vertex {k}"):
        manifold.michael_simon_eval(sol.mesh, sol.curvature, g)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.3, 4.0))
def test_quotient_invariance_property(seed, scale):
    mesh = fixtures.flat_half_disk_embedded(0.2, 4)
    base = manifold.quotient_report(mesh, surface.curvature(mesh)).ratio
    moved = mesh.rigid(rotation(4, seed), np.random.default_rng(seed).normal(size=4)).scaled(scale)
    assert manifold.quotient_report(moved, surface.curvature(moved)).ratio == pytest.approx(base, abs=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 0.9), st.floats(0, 2 * math.pi), st.floats(0, 2 * math.pi))
def test_normal_part_is_orthogonal_to_tangents(r, a, b):
    sol = _flat_cache()
    xi = r * np.array([math.cos(a) * 0.6, math.sin(a) * 0.6, 0.8 * math.cos(b), 0.8 * math.sin(b)])
    v = manifold.phi_membership(xi, sol)
    frame = sol.mesh.normals[v.witness]
    y = v.normal_part @ frame
    assert np.allclose(sol.mesh.tangents[v.witness] @ y, 0.0, atol=1e-10)


_CACHE = {}


def _flat_cache():
    if "s" not in _CACHE:
        _CACHE["s"] = manifold.prepare(fixtures.flat_half_disk_embedded(0.1, 4))[0]
    return _CACHE["s"]
