import math

import numpy as np
import pytest

from curves import circle_arc, periodic_extend, straight_line
from errors import InvalidInput, InvalidRadius, NotC1Periodic, ResolutionExceeded
from lift import (
    Monodromy,
    circle_lift_closed_form,
    closure_defect,
    closure_defects,
    colatitude_to_latitude,
    contact_trace,
    flat_limit_deviation,
    geodesic_distance,
    injectivity_threshold_constant,
    latitude_circle_length,
    latitude_for_curvature,
    lift,
    monodromy,
    read_spherical_csv,
    rotation_angle_axis,
    sigma,
    threshold_quadratic_residual,
    tol_lift,
    write_spherical_csv,
)


def test_circle_closed_form_unit_values():
    latitude, length = circle_lift_closed_form(1.0, 1.0)
    assert latitude == pytest.approx(math.pi / 4)
    assert length == pytest.approx(math.pi * math.sqrt(2.0))
    assert length == pytest.approx(4.442883, abs=1e-6)


def test_threshold_constant():
    a = injectivity_threshold_constant()
    assert 3.9 < a < 4.0
    assert abs(threshold_quadratic_residual(a)) < 1e-12
    assert sigma(1.0 / a, 1.0) == pytest.approx(1.0, abs=1e-12)
    # sigma scales with l: the fixed point moves to l / a for any l
    assert sigma(2.5 / a, 2.5) == pytest.approx(2.5, abs=1e-12)
    with pytest.raises(InvalidRadius):
        sigma(0.0, 1.0)


def test_lift_stays_on_sphere(sine_arch_curve):
    r = 1.5
    spherical = lift(sine_arch_curve, r)
    assert np.allclose(np.linalg.norm(spherical.points, axis=1), r, rtol=1e-12)
    assert np.allclose(np.linalg.norm(spherical.tangents, axis=1), 1.0)
    assert np.max(np.abs(np.sum(spherical.points * spherical.tangents, axis=1))) < 1e-12
    assert spherical.curvature_residual <= tol_lift(sine_arch_curve.kappa)
    assert spherical.length == pytest.approx(sine_arch_curve.length)


def test_lift_starts_in_the_reference_frame(sine_arch_curve):
    spherical = lift(sine_arch_curve, 2.0)
    assert np.allclose(spherical.points[0], [2.0, 0.0, 0.0])
    assert np.allclose(spherical.tangents[0], [0.0, 1.0, 0.0])


def test_straight_line_lifts_to_a_great_circle_arc():
    line = straight_line(1.0, n=256)
    assert closure_defect(line, 2.0) == pytest.approx(1.0, abs=1e-10)
    spherical = lift(line, 2.0)
    assert np.allclose(spherical.points[:, 2], 0.0, atol=1e-12)


def test_circle_lift_latitude_and_monodromy_angle():
    circle = circle_arc(1.0, n=4096)
    spherical = lift(circle, 1.0)
    # small circle of latitude pi/4 about (sin, 0, cos)(pi/4)
    axis = np.array([1.0, 0.0, 1.0]) / math.sqrt(2.0)
    heights = spherical.points @ axis
    assert np.allclose(heights, math.sin(math.pi / 4), atol=1e-9)

    M = monodromy(circle, 1.0)
    assert M.angle == pytest.approx(2 * math.pi * (math.sqrt(2.0) - 1.0), abs=1e-8)
    assert np.allclose(np.abs(M.axis @ axis), 1.0, atol=1e-9)


def test_monodromy_power_matches_periodic_extension(sine_arch_curve):
    r = 3.0
    M = monodromy(sine_arch_curve, r)
    three = lift(periodic_extend(sine_arch_curve, 3), r)
    assert np.allclose(three.frame(-1), M.power(3), atol=1e-9)


def test_monodromy_needs_periodic_curve():
    arc = circle_arc(1.0, n=128, arc_length=1.0)
    with pytest.raises(NotC1Periodic):
        monodromy(arc, 1.0)


def test_monodromy_dict_roundtrip(sine_arch_curve):
    M = monodromy(sine_arch_curve, 2.0)
    back = Monodromy.from_dict(M.to_dict())
    assert np.array_equal(back.matrix, M.matrix)
    assert back.angle == M.angle


def test_rotation_angle_axis_of_known_rotation():
    c, s = math.cos(0.3), math.sin(0.3)
    R = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    angle, axis = rotation_angle_axis(R)
    assert angle == pytest.approx(0.3)
    assert np.allclose(axis, [0.0, 0.0, 1.0])
    assert rotation_angle_axis(np.eye(3))[1] is None


def test_closure_defects_batch_matches_single(sine_arch_curve):
    radii = [1.0, 2.0, 5.0]
    batch = closure_defects(sine_arch_curve, radii)
    assert np.allclose(batch, [closure_defect(sine_arch_curve, r) for r in radii], rtol=0, atol=1e-12)


def test_invalid_and_too_small_radius(sine_arch_curve):
    with pytest.raises(InvalidRadius):
        lift(sine_arch_curve, 0.0)
    with pytest.raises(ResolutionExceeded):
        lift(sine_arch_curve, 1e-4)


def test_contact_trace_mirrors_the_lift(sine_arch_curve):
    spherical = lift(sine_arch_curve, 2.0)
    trace = contact_trace(spherical)
    assert np.allclose(trace.points[:, 2], -spherical.points[:, 2])
    assert np.allclose(trace.kappa_g, -spherical.kappa_g)
    assert trace.r == spherical.r


def test_flat_limit(sine_arch_curve):
    near = flat_limit_deviation(sine_arch_curve, 10.0)
    far = flat_limit_deviation(sine_arch_curve, 100.0)
    assert far < near
    assert far < 1e-2


def test_latitude_conventions():
    theta = 0.4
    assert latitude_circle_length(2.0, theta) == pytest.approx(
        latitude_circle_length(2.0, math.pi / 2 - theta, convention="colatitude"))
    assert colatitude_to_latitude(math.pi / 2 - theta) == pytest.approx(theta)
    assert latitude_for_curvature(1.0, 1.0) == pytest.approx(math.pi / 4)


def test_geodesic_distance_is_arclength():
    a = np.array([1.0, 0.0, 0.0])
    b = np.array([0.0, 1.0, 0.0])
    assert geodesic_distance(a, b, 1.0) == pytest.approx(math.pi / 2)
    assert geodesic_distance(2 * a, -2 * a, 2.0) == pytest.approx(2 * math.pi)


def test_spherical_csv_is_lossless(tmp_path, sine_arch_curve):
    spherical = lift(sine_arch_curve, 2.0)
    path = write_spherical_csv(spherical, tmp_path / "lift.csv")
    assert path.read_text().splitlines()[0] == "s,x,y,z,tx,ty,tz,kappa_g"
    back = read_spherical_csv(path, r=2.0)
    assert np.array_equal(back.points, spherical.points)
    assert np.array_equal(back.tangents, spherical.tangents)
    assert back.ds == pytest.approx(spherical.ds, rel=1e-12)


def test_spherical_csv_header_is_checked(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("s,x,y,z\n0,1,0,0\n")
    with pytest.raises(InvalidInput):
        read_spherical_csv(bad)


@pytest.mark.parametrize("r", [0.5, 2.0])
def test_straight_line_closure_defects(r):
    full = straight_line(2 * math.pi * r, n=2048)
    half = straight_line(math.pi * r, n=2048)
    assert closure_defect(full, r) == pytest.approx(0.0, abs=1e-8 * r)
    assert closure_defect(half, r) == pytest.approx(math.pi * r, abs=1e-8 * r)
    # a full great circle brings the frame back
    assert np.allclose(monodromy(full, r).matrix, np.eye(3), atol=1e-9)
    assert monodromy(full, r).angle < 1e-6


def test_shrinking_radius_widens_the_apex_angle(sine_arch_curve):
    # r / 6 at least triples the monodromy angle
    wide = monodromy(sine_arch_curve, 12.0).angle
    narrow = monodromy(sine_arch_curve, 2.0).angle
    assert narrow >= 3 * wide


def test_flat_limit_decays_like_one_over_r(sine_arch_curve):
    radii = np.array([10.0, 20.0, 40.0, 80.0, 160.0])
    deviations = np.array([flat_limit_deviation(sine_arch_curve, r) for r in radii])
    assert np.all(np.diff(deviations) < 0)
    scaled = radii * deviations
    assert scaled.max() <= 1.1 * scaled.min()
