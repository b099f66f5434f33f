import math

import numpy as np
import pytest

from closure import (
    ClosureCertificate,
    apex_and_clearance,
    apex_angle_from_sides,
    concatenate_rotated,
    enclosed_area,
    find_closing_radius,
    is_simple,
    loop_for_certificate,
    pick_copy_count,
    polygon_area,
    read_certificate,
    scan_monodromy_angle,
    write_certificate,
)
from curves import circle_arc, straight_line
from errors import InvalidInput, NoClosureInBracket, RequiresSimpleLoop, SeamMismatch
from lift import Monodromy, SphericalCurve, injectivity_threshold_constant, lift
from verify_theorems import latitude_loop


def test_certificate_closes_a_simple_symmetric_loop(certificate):
    cert = certificate
    assert 1 <= cert.n <= 6
    assert cert.closed
    assert cert.seam_gap < 1e-6 * cert.r
    assert cert.simple
    assert cert.symmetry_residual < 1e-8 * cert.r
    assert abs(abs(cert.psi) - 2 * math.pi / cert.n) < 1e-8
    assert cert.final_bracket[0] <= cert.r <= cert.final_bracket[1]


def test_certificate_clearance_bound(certificate):
    assert certificate.clearance_ok
    assert certificate.b_r > certificate.clearance_bound


def test_certificate_json_is_lossless(tmp_path, certificate):
    path = write_certificate(certificate, tmp_path / "certificate.json")
    back = read_certificate(path)
    assert back.to_dict() == certificate.to_dict()
    assert isinstance(back, ClosureCertificate)


def test_loop_rebuilt_from_certificate(sine_arch_curve, certificate):
    loop = loop_for_certificate(sine_arch_curve, certificate)
    assert np.array_equal(loop.points, certificate.loop.points)
    assert loop.closed


def test_no_closure_in_narrow_bracket(sine_arch_curve):
    with pytest.raises(NoClosureInBracket):
        find_closing_radius(sine_arch_curve, (15.0, 16.0), n_max=2)


def test_invalid_bracket(sine_arch_curve):
    with pytest.raises(InvalidInput):
        find_closing_radius(sine_arch_curve, (2.0, 1.0))


def test_straight_line_monodromy_angle_is_length_over_radius():
    radii, psi, _ = scan_monodromy_angle(straight_line(1.0, n=256), [4.0, 2.0, 3.0])
    assert np.allclose(radii, [2.0, 3.0, 4.0])
    assert np.allclose(psi, 1.0 / radii, atol=1e-10)


def test_semicircle_injectivity_switch():
    semicircle = circle_arc(1.0, n=1024, arc_length=math.pi, clockwise=True,
                            heading=math.pi / 2, start=(-1.0, 0.0))
    a = injectivity_threshold_constant()
    simple, witness = is_simple(lift(semicircle, 0.95 * math.pi / a))
    assert not simple
    assert len(witness["arcs"]) == 2
    simple, witness = is_simple(lift(semicircle, 1.05 * math.pi))
    assert simple and witness is None


def test_enclosed_area_of_latitude_loop():
    theta = 0.5
    loop = latitude_loop(1.0, theta, 2048)
    assert enclosed_area(loop) == pytest.approx(2 * math.pi * (1 - math.sin(theta)), rel=1e-8)
    assert polygon_area(loop.points, 1.0) == pytest.approx(2 * math.pi * (1 - math.sin(theta)), rel=1e-5)


def test_enclosed_area_requires_closed_loop(sine_arch_curve):
    with pytest.raises(RequiresSimpleLoop):
        enclosed_area(lift(sine_arch_curve, 2.0))


def test_octant_area():
    octant = np.eye(3)
    assert polygon_area(octant, 1.0) == pytest.approx(math.pi / 2)
    assert polygon_area(2 * octant, 2.0) == pytest.approx(2 * math.pi)


def test_apex_angle_degenerate_case():
    assert apex_angle_from_sides(math.pi / 2, math.pi / 2, 1.0) == pytest.approx(math.pi / 2)


def test_pick_copy_count_gap():
    for a in np.linspace(1e-3, math.pi, 997):
        n = pick_copy_count(a)
        assert a / 3 <= 2 * math.pi / n <= a + 1e-15
    assert pick_copy_count(math.pi) == 2
    with pytest.raises(InvalidInput):
        pick_copy_count(0.0)
    with pytest.raises(InvalidInput):
        pick_copy_count(4.0)


def test_seam_mismatch_for_wrong_monodromy(sine_arch_curve):
    piece = lift(sine_arch_curve, 2.0)
    with pytest.raises(SeamMismatch):
        concatenate_rotated(piece, Monodromy.from_matrix(np.eye(3), piece.length), 2)


def _great_circle(r, normal_axis, samples):
    """Great circle through (r, 0, 0) starting along the remaining axis"""
    phi = np.linspace(0.0, 2 * math.pi, samples + 1)
    other = np.zeros(3)
    other[normal_axis] = 1.0
    along = np.cross(other, [1.0, 0.0, 0.0])
    along = -along if normal_axis == 1 else along
    points = r * (np.outer(np.cos(phi), [1.0, 0.0, 0.0]) + np.outer(np.sin(phi), along))
    tangents = np.outer(-np.sin(phi), [1.0, 0.0, 0.0]) + np.outer(np.cos(phi), along)
    return points, tangents


def test_figure_eight_is_not_simple():
    r, samples = 1.5, 512
    first, t_first = _great_circle(r, 2, samples)
    second, t_second = _great_circle(r, 1, samples)
    eight = SphericalCurve(r=r, points=np.concatenate([first[:-1], second]),
                           tangents=np.concatenate([t_first[:-1], t_second]),
                           kappa_g=np.zeros(2 * samples + 1), ds=2 * math.pi * r / samples,
                           closed=True)
    simple, witness = is_simple(eight)
    assert not simple
    point = np.array(witness["point"])
    crossings = np.array([[r, 0.0, 0.0], [-r, 0.0, 0.0]])
    assert np.min(np.linalg.norm(crossings - point, axis=1)) <= 3 * eight.ds


def test_great_circle_is_simple_and_bounds_a_hemisphere():
    r = 2.0
    circle = latitude_loop(r, 0.0, 2048)
    assert is_simple(circle) == (True, None)
    assert enclosed_area(circle) == pytest.approx(2 * math.pi * r * r, rel=1e-8)


def test_four_quarter_circles_close():
    r = 1.5
    quarter = lift(straight_line(math.pi * r / 2, n=512), r)
    quarter_turn = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    loop = concatenate_rotated(quarter, Monodromy.from_matrix(quarter_turn, quarter.length), 4)
    assert loop.seam_gap <= 1e-9 * r
    assert loop.closed
    assert np.allclose(loop.points[:, 2], 0.0, atol=1e-12)
    assert is_simple(loop)[0]


def test_apex_is_the_fixed_point_nearer_the_piece():
    # a clockwise unit circle lifts to the small circle about (1, 0, -1) / sqrt 2
    piece = lift(circle_arc(1.0, n=1024, arc_length=1.0, clockwise=True), 1.0)
    M = Monodromy.from_matrix(piece.frame(-1), piece.length)
    apex, b_r, _ = apex_and_clearance(piece, M)
    assert np.allclose(apex, np.array([1.0, 0.0, -1.0]) / math.sqrt(2.0), atol=1e-6)
    assert b_r == pytest.approx(math.pi / 4, abs=1e-6)
