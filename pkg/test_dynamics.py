import csv
import math
from dataclasses import replace

import numpy as np
import pytest

from carve import GroovedBody
from curves import circle_arc, periodic_extend, straight_line
from dynamics import (
    TRAJECTORY_CSV_HEADER,
    ResistanceModel,
    closure_distance,
    contact_track,
    embed_plane,
    full_rhs,
    mob_minimality_test,
    parageodesic_solve,
    printed_theta_rhs,
    reduced_theta_rhs,
    simulate_rolling,
    write_trajectory_csv,
)
from errors import ContactLost, InvalidInput, PoleSingularity, StallDetected, TrackingLost
from lift import lift
from verify_theorems import QUICK, check_dynamics_oracles

ALPHA = 0.3
RADIUS = 0.5


@pytest.fixture(scope="module")
def plane():
    return embed_plane(ALPHA)


@pytest.fixture(scope="module")
def ball():
    return GroovedBody.ball(RADIUS, level=3)


@pytest.fixture(scope="module")
def downhill(plane, ball):
    return simulate_rolling(ball, plane, ResistanceModel.coulomb(0.0, RADIUS),
                            straight_line(4.0, n=512), duration=2.0, step=0.005)


def test_plane_embedding(plane):
    E = plane.embedding
    assert np.allclose(E.T @ E, np.eye(2))
    assert np.allclose(E.T @ plane.normal, 0.0)
    assert plane.height(plane.embed([1.0, 2.0])) == pytest.approx(0.0, abs=1e-15)
    # +u runs downhill
    assert plane.embed([1.0, 0.0])[2] < 0
    assert np.allclose(plane.J @ plane.J @ E, -E)
    for alpha in (0.0, math.pi / 2, -0.1):
        with pytest.raises(InvalidInput):
            embed_plane(alpha)


def test_resistance_models():
    assert ResistanceModel.coulomb(0.1, 0.5).force(3.0, 2.0) == pytest.approx(0.4)
    table = ResistanceModel.velocity_table([0.0, 1.0, 2.0], [0.0, 0.5, 0.6])
    assert table.force(1.5, 10.0) == pytest.approx(0.55)
    assert table.force(-0.5, 10.0) == pytest.approx(0.25)
    with pytest.raises(InvalidInput):
        ResistanceModel.coulomb(-0.1, 1.0)
    with pytest.raises(InvalidInput):
        ResistanceModel.velocity_table([0.0, 1.0], [0.5, 0.1])
    with pytest.raises(InvalidInput):
        ResistanceModel(kind="viscous")


def test_ball_accelerates_at_five_sevenths(downhill):
    expected = 5.0 / 7.0 * math.sin(ALPHA)
    assert 2 * downhill.s[-1] / downhill.t[-1] ** 2 == pytest.approx(expected, rel=1e-10)
    assert downhill.speed[-1] == pytest.approx(expected * downhill.t[-1], rel=1e-10)
    assert not downhill.reached_end


def test_rotations_stay_orthogonal(downhill):
    assert downhill.orthogonality_drift() < 1e-12
    q = downhill.quaternions()
    assert np.allclose(np.linalg.norm(q, axis=1), 1.0)


def test_energy_without_resistance(downhill):
    scale = float(np.max(downhill.ekin))
    assert np.max(np.abs(downhill.energy - downhill.energy[0])) <= 1e-9 * scale


def test_dynamics_oracles_on_the_sine_arch():
    rows = check_dynamics_oracles(QUICK)
    assert [row["check"] for row in rows if not row["pass"]] == []


def test_reaches_the_end_of_a_short_target(plane, ball):
    traj = simulate_rolling(ball, plane, ResistanceModel.coulomb(0.0, RADIUS),
                            straight_line(0.1, n=128), duration=5.0, step=0.01)
    assert traj.reached_end
    assert traj.s[-1] < 0.1


def test_uphill_start_stalls(plane, ball):
    uphill = straight_line(1.0, n=256, heading=math.pi)
    with pytest.raises(StallDetected):
        simulate_rolling(ball, plane, ResistanceModel.coulomb(0.0, RADIUS), uphill,
                         duration=1.0, step=0.01)
    with pytest.raises(StallDetected) as info:
        simulate_rolling(ball, plane, ResistanceModel.coulomb(0.0, RADIUS), uphill,
                         duration=5.0, step=0.01, v0=0.1)
    assert info.value.t > 0


def test_invalid_simulation_settings(plane, ball):
    line = straight_line(1.0, n=256)
    with pytest.raises(InvalidInput):
        simulate_rolling(ball, plane, ResistanceModel.coulomb(0.0, RADIUS), line, duration=0.0, step=0.01)
    with pytest.raises(InvalidInput):
        simulate_rolling(ball, plane, ResistanceModel.coulomb(0.0, RADIUS), line, duration=1.0,
                         step=0.01, v0=-1.0)


def test_off_center_barycenter_leaves_wedge(plane, ball):
    lopsided = replace(ball, barycenter=np.array([0.0, 0.0, 0.05]))
    with pytest.raises(TrackingLost):
        simulate_rolling(lopsided, plane, ResistanceModel.coulomb(0.0, RADIUS),
                         straight_line(1.0, n=256), duration=0.5, step=0.01)


def test_oversized_mesh_penetrates(plane, ball):
    swollen = replace(ball, vertices=ball.vertices * 1.1)
    with pytest.raises(TrackingLost):
        simulate_rolling(swollen, plane, ResistanceModel.coulomb(0.0, RADIUS),
                         straight_line(1.0, n=256), duration=0.5, step=0.01)


def test_ball_contact_track(plane, downhill):
    track = contact_track(downhill, plane)
    assert len(track.t) == len(downhill.contact_steps)
    assert track.max_deviation < 0.25 * RADIUS
    assert track.report()["samples"] == len(track.t)


def test_rebuilt_mesh_meets_the_predicted_contact(plane, downhill):
    track = contact_track(downhill, plane)
    assert len(track.reduced_offset) == len(track.t)
    assert np.max(track.reduced_offset) <= 3 * downhill.mesh_tolerance
    assert track.report()["max_reduced_offset"] == pytest.approx(np.max(track.reduced_offset))

    # a reduced state running 0.2 ahead of the rebuilt body misses the mesh by ~0.04
    ahead = contact_track(replace(downhill, s=downhill.s + 0.2), plane)
    assert np.max(ahead.reduced_offset) > 3 * downhill.mesh_tolerance


def test_step_halving_converges(plane, ball, sine_arch_curve):
    arch = periodic_extend(sine_arch_curve, 3)
    runs = [simulate_rolling(ball, plane, ResistanceModel.coulomb(0.0, RADIUS), arch,
                             duration=2.0, step=step) for step in (0.04, 0.02, 0.01)]
    coarse = np.max(np.linalg.norm(runs[0].positions - runs[1].positions[::2], axis=1))
    fine = np.max(np.linalg.norm(runs[1].positions[::2] - runs[2].positions[::4], axis=1))
    assert fine > 0
    assert math.log2(coarse / fine) >= 2


def test_empty_contact_set_is_lost(plane, downhill):
    broken = replace(downhill, contact_sets=[np.empty((0, 3))] + downhill.contact_sets[1:])
    with pytest.raises(ContactLost):
        contact_track(broken, plane)


def test_trajectory_csv(tmp_path, downhill):
    path = write_trajectory_csv(downhill, tmp_path / "trajectory.csv")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == TRAJECTORY_CSV_HEADER
    assert len(rows) == len(downhill.t) + 1
    assert float(rows[-1][1]) == downhill.s[-1]


# ----------------------------------------------------------------------------
# Parageodesics
# ----------------------------------------------------------------------------

def test_reduced_equation_matches_full_system():
    for kappa, theta, dtheta in [(0.3, 1.0, 0.2), (-1.2, 2.0, -0.7), (0.0, 0.6, 0.0)]:
        dphi = math.sqrt(1 - dtheta ** 2) / math.sin(theta)
        full, _ = full_rhs(kappa, theta, dtheta, dphi)
        assert reduced_theta_rhs(kappa, theta, dtheta) == pytest.approx(full, abs=1e-14)
    assert printed_theta_rhs(0.3, 1.0, 0.2) != pytest.approx(reduced_theta_rhs(0.3, 1.0, 0.2))


def test_geodesic_control_runs_a_great_circle():
    sol = parageodesic_solve(lambda t: 0.0, 1.0, 1.0, init=(math.pi / 2, 0.0))
    assert sol.endpoint_distance == pytest.approx(1.0, abs=1e-10)
    assert np.allclose(sol.theta, math.pi / 2, atol=1e-12)
    assert sol.residual <= 1e-8


def test_constant_control_matches_the_lift():
    kappa, lam = 0.7, 1.0
    sol = parageodesic_solve(lambda t: kappa, lam, 1.0, init=(math.pi / 2, 0.0), samples=1001)
    reference = lift(circle_arc(1.0 / kappa, n=1000, arc_length=lam), 1.0)
    assert np.max(np.linalg.norm(sol.points - reference.points, axis=1)) <= 1e-8


def test_equilibrium_latitude():
    theta0 = 1.0
    sol = parageodesic_solve(lambda t: 1.0 / math.tan(theta0), 1.0, 1.0, init=(theta0, 0.0))
    assert np.allclose(sol.theta, theta0, atol=1e-9)


def test_parageodesic_errors():
    with pytest.raises(PoleSingularity):
        parageodesic_solve(lambda t: 0.0, 1.0, 1.0, init=(0.0, 0.0))
    with pytest.raises(InvalidInput):
        parageodesic_solve(lambda t: 0.0, 4.0, 1.0, init=(math.pi / 2, 0.0))
    with pytest.raises(InvalidInput):
        parageodesic_solve(lambda t: 0.0, 1.0, 1.0, init=(math.pi / 2, 1.5))


def test_closure_distance_of_a_geodesic():
    distance, retries = closure_distance(lambda t: 0.0, 1.0, 1.0)
    assert distance == pytest.approx(1.0, abs=1e-10)
    assert retries == 0


# ----------------------------------------------------------------------------
# Man-over-board
# ----------------------------------------------------------------------------

def test_mob_constant_curvature_is_minimal():
    report = mob_minimality_test(0.3, 0.5, 1.0, trials=100, seed=0, bumps=5)
    assert report["pass"]
    assert report["f_min_sampled"] >= report["f_const"] - 1e-9
    assert report["f_const_alt"] < report["f_const"]
    assert report["bumps"] == {"passed": 5, "count": 5}


def test_mob_threads_do_not_change_the_report():
    single = mob_minimality_test(0.3, 0.5, 1.0, trials=100, seed=3, bumps=0)
    pooled = mob_minimality_test(0.3, 0.5, 1.0, trials=100, seed=3, threads=4, bumps=0)
    assert single == pooled


def test_mob_rejects_bad_input():
    with pytest.raises(InvalidInput):
        mob_minimality_test(0.3, 4.0, 1.0, trials=100)
    with pytest.raises(InvalidInput):
        mob_minimality_test(0.3, 0.5, 1.0, trials=10)
