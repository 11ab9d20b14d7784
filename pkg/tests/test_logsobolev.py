import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from abpiso import fixtures, logsobolev as ls, surface
from abpiso.euclid import SampleStream
from abpiso.mesh import PreconditionError


def gaussian(mesh, centre, s):
    return np.exp(-np.sum((mesh.vertices - np.asarray(centre)) ** 2, axis=1) / (2 * s))


@pytest.fixture(scope="module")
def constant(free_disk):
    mesh, curv = free_disk
    area = mesh.masses().sum()
    return ls.solve_weighted(mesh, curv, np.full(len(mesh.vertices), 1 / area)), area


@pytest.fixture(scope="module")
def centred(free_disk):
    mesh, curv = free_disk
    return ls.solve_weighted(mesh, curv, gaussian(mesh, [0, 0, 0], 2.0))


def test_constant_weight_gives_zero_solution(constant):
    prob, area = constant
    assert np.max(np.abs(prob.u)) <= 1e-8
    assert prob.alpha == pytest.approx(math.log(area), abs=1e-12)
    assert prob.mass == pytest.approx(1.0, abs=1e-12)


def test_constant_weight_margin_in_closed_form(constant):
    prob, area = constant
    chk = ls.logsob_check(prob)
    want = math.log(2) - (math.log(1 / area) + 2 + math.log(4 * math.pi))
    assert chk.margin == pytest.approx(want, abs=1e-10)
    assert chk.margin > 0


def test_bump_compatibility_and_residual(centred):
    assert centred.compatibility_residual <= 1e-8
    assert centred.linear_residual <= 1e-10
    w = centred.mesh.masses()
    assert w @ centred.f_unit == pytest.approx(1.0, abs=1e-12)


def test_nonpositive_weight_is_named(free_disk):
    mesh, curv = free_disk
    f = np.ones(len(mesh.vertices))
    f[17] = 0.0
    with pytest.raises(PreconditionError, match="vertex 17"):
        ls.solve_weighted(mesh, curv, f)
    f[17] = -2.0
    with pytest.raises(PreconditionError, match="vertex 17"):
        ls.logsob_values(mesh, curv, f)


def test_relative_boundary_is_rejected():
    mesh = fixtures.flat_half_disk_embedded(0.1, 3)
    curv = surface.curvature(mesh)
    with pytest.raises(PreconditionError, match="Sigma"):
        ls.solve_weighted(mesh, curv, np.ones(len(mesh.vertices)))
    with pytest.raises(PreconditionError):
        ls.gaussian_corollary_eval(mesh, curv, np.ones(len(mesh.vertices)), [0, 0, 0])


@pytest.mark.parametrize("centre,s", [((0, 0, 0), 2.0), ((0, 3, 0), 1.0), ((2, 1.5, 0), 0.5), ((0, 0, 0), 1.0)])
def test_inequality_holds_for_gaussian_weights(free_disk, centre, s):
    mesh, curv = free_disk
    prob = ls.solve_weighted(mesh, curv, gaussian(mesh, centre, s))
    assert prob.compatibility_residual <= 1e-8
    assert ls.logsob_check(prob).margin >= -1e-3


@pytest.mark.parametrize("c", [3.7, 0.01, 250.0])
def test_scaling_rule(free_disk, c):
    mesh, curv = free_disk
    f = gaussian(mesh, [0, 1, 0], 1.5)
    a = ls.logsob_values(mesh, curv, f)
    b = ls.logsob_values(mesh, curv, c * f)
    shift = c * a.mass * math.log(c)
    assert b.lhs == pytest.approx(c * a.lhs + shift, rel=1e-10, abs=1e-10)
    assert b.rhs == pytest.approx(c * a.rhs + shift, rel=1e-10, abs=1e-10)
    assert b.margin == pytest.approx(c * a.margin, rel=1e-8, abs=1e-10)


def test_component_sum_is_below_total(free_disk):
    mesh, curv = free_disk
    chk = ls.logsob_values(mesh, curv, gaussian(mesh, [0, 0, 0], 2.0))
    assert chk.component_rhs == pytest.approx(chk.rhs)


def test_symmetric_centre_has_no_boundary_term(free_disk):
    mesh, curv = free_disk
    for x0 in ([0, 0, 0], [1.5, 0, 0]):
        g = ls.gaussian_corollary_eval(mesh, curv, np.ones(len(mesh.vertices)), x0)
        assert abs(g.boundary_term) <= 1e-10
        assert abs(g.truncation_term) <= 1e-8
        assert g.margin >= -1e-3


def test_normal_cone_centre_makes_boundary_term_nonpositive(free_disk):
    mesh, curv = free_disk
    g = ls.gaussian_corollary_eval(mesh, curv, np.ones(len(mesh.vertices)), [0, 1, 0])
    assert g.boundary_term < 0
    assert g.margin >= -1e-3
    assert g.margin - g.boundary_term >= -1e-3


def test_gaussian_dual_path(free_disk):
    mesh, curv = free_disk
    phi = 1 + 0.5 * np.exp(-np.sum(mesh.vertices ** 2, axis=1) / 8)
    g = ls.gaussian_corollary_eval(mesh, curv, phi, [0.5, 0.5, 0.0])
    assert g.dual_path_gap <= 1e-6
    # lumped quadrature next to the boundary is first order; this is a diagnostic
    assert g.integration_by_parts_defect <= 0.02 * abs(g.divergence_term)


def test_weighted_jacobian_constant_weight_has_zero_determinant(constant):
    prob, _ = constant
    rep = ls.weighted_jacobian_samples(prob, 5_000, SampleStream(12))
    assert rep.gated == rep.samples
    assert np.max(np.abs(rep.ratios)) <= 1e-8
    assert rep.violation_fraction == 0.0
    assert rep.rhs_min > 0


def test_weighted_jacobian_gaussian_weight(centred):
    rep = ls.weighted_jacobian_samples(centred, 20_000, SampleStream(13), delta=0.2)
    assert rep.violation_fraction <= 0.05
    assert rep.rhs_min > 0


def test_weighted_image_slices(centred):
    for est in ls.image_slices(centred, (0.5, 1.0, 2.0, 3.0), 4_000, SampleStream(14)):
        assert est.holds


@settings(max_examples=15, deadline=None)
@given(st.floats(-3, 3), st.floats(0, 4), st.floats(0.5, 4))
def test_inequality_property(cx, cy, s):
    mesh, curv = _coarse()
    f = gaussian(mesh, [cx, cy, 0.0], s)
    assert ls.logsob_values(mesh, curv, f).margin >= -1e-2


_CACHE = {}


def _coarse():
    if "m" not in _CACHE:
        mesh = fixtures.free_half_disk(0.05)
        _CACHE["m"] = (mesh, surface.curvature(mesh))
    return _CACHE["m"]
