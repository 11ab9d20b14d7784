import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from abpiso.cones import (LabeledPointSet, PreconditionError, argmin_contact, generalized_cone_contains,
                          lift_equivalence, load_point_set, per_point_half_check, point_cone_measure_exact_2d,
                          random_convex_configuration, restricted_union_measure,
                          restricted_union_measure_exact_2d, save_point_set, sigma_validity, tie_fraction)
from abpiso.euclid import DomainError, SampleStream, sphere_area

PAIR = np.array([[1.0, 0.0], [-1.0, 0.0]])


def pair(u=(0.0, 0.0)):
    return LabeledPointSet(PAIR, np.array(u), PAIR.copy())


def brute_contains(points, u, base, xi):
    return all(np.dot(points[j] - points[base], xi) <= u[j] - u[base] + 1e-12 for j in range(len(points)))


def test_membership_examples():
    assert generalized_cone_contains(pair(), 0, [1.0, 0.0])
    # <(-2, 0), xi> = 1.2 exceeds u(-1,0) - u(1,0) = 1
    assert not generalized_cone_contains(pair((0.0, 1.0)), 0, [-0.6, 0.8])
    single = LabeledPointSet([[0.3, 0.2]], [5.0])
    assert generalized_cone_contains(single, 0, [100.0, -3.0])


def test_membership_dimension_mismatch():
    with pytest.raises(DomainError):
        generalized_cone_contains(pair(), 0, [1.0, 0.0, 0.0])


def test_lift_equivalence_special_cases():
    for u in [(0.0, 0.0), (2.5, 2.5)]:
        pts = pair(u)
        for xi in ([1.0, 0.0], [-1.0, 0.3], [0.0, 1.0]):
            assert lift_equivalence(pts, 0, xi)
            assert generalized_cone_contains(pts, 0, xi) == (np.dot(PAIR[1] - PAIR[0], xi) <= 1e-12)


def test_lift_equivalence_random_trials():
    s = SampleStream(123)
    pts = s.normal((10_000, 4, 3))
    us = s.normal((10_000, 4))
    xis = 2 * s.normal((10_000, 3))
    assert all(lift_equivalence(LabeledPointSet(pts[k], us[k]), k % 4, xis[k]) for k in range(10_000))


def test_sigma_validity_examples():
    assert sigma_validity(pair()).tolist() == [True, True]
    line = LabeledPointSet([[-1.0, 0.0], [0.0, 0.0], [1.0, 0.0]], [0, 0, 0], [[-1, 0], [1, 0], [1, 0]])
    assert sigma_validity(line).tolist() == [True, False, True]
    assert sigma_validity(LabeledPointSet([[0.0, 0.0]], [0.0], [[0.0, 1.0]])).tolist() == [True]


def test_argmin_examples():
    assert argmin_contact(pair((0.0, 1.0)), [1.0, 0.0]) == (0, False)
    assert argmin_contact(pair(), [0.0, 1.0])[1] is True
    assert argmin_contact(LabeledPointSet([[2.0, 1.0]], [0.0]), [1.0, 1.0]) == (0, False)


def test_empty_set_rejected():
    with pytest.raises(DomainError):
        LabeledPointSet(np.zeros((0, 2)), np.zeros(0))


def test_restricted_measure_examples_exact():
    assert restricted_union_measure_exact_2d(pair(), 1.0) == pytest.approx(2 * math.pi, abs=1e-10)
    assert restricted_union_measure_exact_2d(pair((0.0, 1.0)), 1.0) == pytest.approx(5 * math.pi / 3, abs=1e-10)
    single = LabeledPointSet([[0.0, 0.0]], [0.0], [[0.6, 0.8]])
    assert restricted_union_measure_exact_2d(single, 2.0) == pytest.approx(2 * math.pi, abs=1e-10)


def test_restricted_measure_examples_monte_carlo():
    s = SampleStream(9)
    for pts, want in [(pair(), 2 * math.pi), (pair((0.0, 1.0)), 5 * math.pi / 3)]:
        est = restricted_union_measure(pts, 1.0, 100_000, s.fork(len(str(want))))
        assert abs(est.value - want) <= 3 * est.standard_error + 1e-12
    single = LabeledPointSet([[0.0, 0.0, 0.0]], [0.0], [[0.0, 0.0, 1.0]])
    est = restricted_union_measure(single, 1.0, 50_000, s.fork(5))
    assert abs(est.value - 2 * math.pi) <= 3 * est.standard_error


def test_invalid_sigma_names_the_point():
    line = LabeledPointSet([[-1.0, 0.0], [0.0, 0.0], [1.0, 0.0]], [0, 0, 0], [[-1, 0], [1, 0], [1, 0]])
    with pytest.raises(PreconditionError, match="point 1"):
        restricted_union_measure(line, 1.0, 100, SampleStream(0))
    with pytest.raises(PreconditionError):
        restricted_union_measure(LabeledPointSet(PAIR, [0.0, 0.0]), 1.0, 100, SampleStream(0))


def test_per_point_examples():
    assert point_cone_measure_exact_2d(pair(), 0, 1.0, True) == pytest.approx(math.pi, abs=1e-10)
    assert point_cone_measure_exact_2d(pair(), 0, 1.0, False) == pytest.approx(math.pi, abs=1e-10)
    assert point_cone_measure_exact_2d(pair((0.0, 1.0)), 0, 1.0, True) == pytest.approx(math.pi, abs=1e-10)
    assert point_cone_measure_exact_2d(pair((0.0, 1.0)), 0, 1.0, False) == pytest.approx(4 * math.pi / 3, abs=1e-10)
    chk = per_point_half_check(pair((0.0, 1.0)), 0, 1.0, 100_000, SampleStream(4))
    assert abs(chk.ratio - 0.75) <= 3 * chk.ratio_se
    assert abs(chk.full.value - 4 * math.pi / 3) <= 3 * chk.full.standard_error
    single = LabeledPointSet([[0.0, 0.0]], [0.0], [[1.0, 0.0]])
    assert point_cone_measure_exact_2d(single, 0, 1.0, True) == pytest.approx(math.pi, abs=1e-10)
    assert point_cone_measure_exact_2d(single, 0, 1.0, False) == pytest.approx(2 * math.pi, abs=1e-10)


def test_monte_carlo_matches_exact_arcs_on_random_planar_sets():
    s = SampleStream(77)
    for k in range(5):
        pts = random_convex_configuration(s.fork(k), 2, 6)
        for rho in (0.5, 2.0):
            exact = restricted_union_measure_exact_2d(pts, rho)
            est = restricted_union_measure(pts, rho, 40_000, s.fork(100 + k))
            assert abs(est.value - exact) <= 4 * est.standard_error + 1e-9
            assert exact >= math.pi * rho - 1e-10


def test_coverage_and_ties_on_random_configurations():
    s = SampleStream(31)
    for k in range(5):
        pts = random_convex_configuration(s.fork(k), 3, 12)
        ties, found = tie_fraction(pts, 1.0, 20_000, s.fork(50 + k))
        assert found == 1.0
        assert ties < 0.01


def test_point_set_round_trip(tmp_path):
    pts = random_convex_configuration(SampleStream(3), 3, 7)
    path = tmp_path / "pts.txt"
    save_point_set(pts, path)
    back = load_point_set(path)
    assert np.array_equal(back.points, pts.points)
    assert np.array_equal(back.u, pts.u)
    assert np.allclose(back.sigma, pts.sigma, atol=1e-15)


def test_point_set_file_rejects_ragged_records(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("1 0 0 1 0\n-1 0 1\n")
    with pytest.raises(DomainError):
        load_point_set(path)


coords = st.floats(-3, 3, allow_nan=False)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(coords, coords, coords), min_size=1, max_size=6), st.tuples(coords, coords),
       st.data())
def test_membership_matches_brute_force_and_lift(rows, xi, data):
    points = np.array([r[:2] for r in rows])
    u = np.array([r[2] for r in rows])
    pts = LabeledPointSet(points, u)
    base = data.draw(st.integers(0, len(rows) - 1))
    assert generalized_cone_contains(pts, base, xi) == brute_contains(points, u, base, np.array(xi))
    assert lift_equivalence(pts, base, xi)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(coords, coords), min_size=1, max_size=6), st.tuples(coords, coords),
       st.floats(0.1, 5), st.floats(0.1, 5), st.data())
def test_zero_data_cones_scale(rows, xi, rho, rho2, data):
    pts = LabeledPointSet(np.array(rows), np.zeros(len(rows)))
    base = data.draw(st.integers(0, len(rows) - 1))
    xi = np.array(xi)
    if np.linalg.norm(xi) == 0:
        return
    a = rho * xi / np.linalg.norm(xi)
    b = rho2 * xi / np.linalg.norm(xi)
    assert generalized_cone_contains(pts, base, a, 0.0) == generalized_cone_contains(pts, base, b, 0.0)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32), st.integers(2, 4), st.integers(1, 10), st.floats(0.2, 3))
def test_half_sphere_bound_property(seed, dim, count, rho):
    s = SampleStream(seed)
    pts = random_convex_configuration(s.fork(0), dim, count)
    est = restricted_union_measure(pts, rho, 4000, s.fork(1))
    half = 0.5 * sphere_area(dim) * rho ** (dim - 1)
    assert est.value >= half - 3 * est.standard_error - 1e-12
    assert est.value <= 2 * half + 3 * est.standard_error


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32), st.integers(2, 8), st.floats(0.2, 3))
def test_exact_half_circle_bound_property(seed, count, rho):
    pts = random_convex_configuration(SampleStream(seed), 2, count)
    assert restricted_union_measure_exact_2d(pts, rho) >= math.pi * rho - 1e-9
    for i in range(count):
        full = point_cone_measure_exact_2d(pts, i, rho, False)
        if full > 1e-9:
            assert point_cone_measure_exact_2d(pts, i, rho, True) >= 0.5 * full - 1e-9
