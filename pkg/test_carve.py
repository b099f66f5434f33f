import json
import math
from dataclasses import replace

import numpy as np
import pytest

from carve import (
    STL_HEADER,
    GroovedBody,
    GrooveSpec,
    barycenter_wedge_check,
    cap_volume,
    carve,
    check_watertight,
    contact_segment_at,
    count_ray_hits,
    drift_bound,
    export_mesh,
    floor_vertex_offset,
    groove_cross_section,
    groove_prism_estimate,
    groove_volume_bound,
    groove_volume_oracle,
    icosphere,
    mass_properties,
    mesh_body,
    read_stl,
    shape_function,
    wedge_sweep,
    write_sidecar,
)
from errors import GrooveOverlap, InvalidInput, MeshInvalid
from verify_theorems import QUICK, check_carving_bounds, latitude_loop

RADIUS = 1.0
DEPTH = 0.01


@pytest.fixture(scope="module")
def spec():
    return GrooveSpec.for_depth(RADIUS, DEPTH)


@pytest.fixture(scope="module")
def body(spec):
    return carve(latitude_loop(spec.r_loop, 0.5, 512), spec, resolution=3)


def test_cap_volume():
    assert cap_volume(1.0, 1.0) == pytest.approx(2 * math.pi / 3)
    assert cap_volume(2.0, 1.0) == pytest.approx(4 * math.pi / 3)
    assert cap_volume(0.0, 1.0) == 0.0
    with pytest.raises(InvalidInput):
        cap_volume(2.5, 1.0)


def test_contact_width_sets_flat_half_width():
    spec = GrooveSpec.for_contact_width(1.0, 0.05)
    assert spec.delta == pytest.approx(0.05, rel=1e-9)
    assert spec.r_loop == pytest.approx(1.0, rel=1e-12)
    assert spec.radius == pytest.approx(1.0 + spec.h, rel=1e-12)
    assert spec.chord_half_width >= spec.b


def test_depth_and_width_agree(spec):
    again = GrooveSpec.for_contact_width(spec.r_loop, spec.b)
    assert again.h == pytest.approx(spec.h, rel=1e-6)


def test_invalid_groove_specs():
    with pytest.raises(InvalidInput):
        GrooveSpec(radius=1.0, b=0.05, h=2.0, epsilon=1.0)
    with pytest.raises(InvalidInput):
        GrooveSpec.for_contact_width(1.0, 2.0)
    with pytest.raises(InvalidInput):
        GrooveSpec.for_depth(1.0, 0.0)
    with pytest.raises(InvalidInput):
        GrooveSpec.for_contact_width(1.0, 0.05, beta=-0.1)


def test_contact_half_width_below_epsilon(spec):
    assert 0 < spec.delta / spec.radius < spec.epsilon
    # the depth fits epsilon = 0.011 but the flat half-width (~0.12 R) does not
    with pytest.raises(InvalidInput) as info:
        GrooveSpec.for_depth(1.0, 0.01, epsilon=0.011)
    assert info.value.details["field"] == "delta"
    explicit = GrooveSpec.build(1.0, 0.01, 0.001)
    assert explicit.delta / explicit.radius < explicit.epsilon


def test_profile_is_a_plane_then_the_ball(spec):
    psi = np.linspace(-spec.psi_flat, spec.psi_flat, 101)
    assert np.allclose(spec.profile(psi) * np.cos(psi), spec.floor_ratio, rtol=0, atol=1e-14)

    wide = np.linspace(-2 * spec.psi_outer, 2 * spec.psi_outer, 2001)
    values = spec.profile(wide)
    assert np.all(values <= 1.0)
    assert np.all(values <= spec.floor_ratio / np.cos(wide) + 1e-15)
    assert np.all(values[np.abs(wide) >= spec.psi_outer] == 1.0)


def test_icosphere():
    vertices, faces = icosphere(2)
    assert len(faces) == 320
    assert np.allclose(np.linalg.norm(vertices, axis=1), 1.0)
    check_watertight(faces, len(vertices))
    with pytest.raises(InvalidInput):
        icosphere(-1)


def test_open_mesh_rejected():
    vertices, faces = icosphere(1)
    with pytest.raises(MeshInvalid):
        check_watertight(faces[1:], len(vertices))


def test_mass_properties_of_sphere_mesh():
    vertices, faces = icosphere(4)
    props = mass_properties(vertices, faces)
    assert props.volume == pytest.approx(4 * math.pi / 3, rel=5e-3)
    assert props.volume < 4 * math.pi / 3
    assert np.allclose(props.barycenter, 0.0, atol=1e-12)
    assert np.allclose(props.inertia, props.inertia[0, 0] * np.eye(3), atol=1e-12)
    assert props.inertia[0, 0] == pytest.approx(0.4 * props.volume, rel=1e-2)


def test_ball_has_exact_mass_properties():
    ball = GroovedBody.ball(2.0, level=2)
    assert ball.volume == pytest.approx(4 * math.pi / 3 * 8)
    assert np.allclose(ball.inertia, 0.4 * ball.mass * 4.0 * np.eye(3))
    assert ball.drift == 0.0
    assert ball.loop is None


def test_groove_volume_inside_shell_band(body, spec):
    loop = body.loop
    groove = body.ball_volume - body.volume
    assert 0 < groove < groove_volume_bound(spec, loop)
    assert groove == pytest.approx(groove_prism_estimate(spec, loop), rel=0.05)


def test_great_circle_oracle_below_prism_estimate(spec):
    equator = latitude_loop(spec.r_loop, 0.0, 512)
    oracle = groove_volume_oracle(spec)
    prism = groove_prism_estimate(spec, equator)
    assert 0 < oracle < prism
    assert oracle == pytest.approx(prism, rel=0.02)


def test_barycenter_drift(body, spec):
    groove = body.ball_volume - body.volume
    offset = float(np.linalg.norm(body.ball_barycenter))
    assert 0 < body.drift < drift_bound(groove, spec.radius, body.volume, offset)
    # material leaves the upper band, so the barycenter sinks
    assert body.barycenter[2] < 0


def test_barycenter_stays_in_wedge(body):
    segment = contact_segment_at(body, 0)
    barycenter, drift, inside = barycenter_wedge_check(body, segment, 0.0)
    assert inside
    assert drift == body.drift
    assert np.array_equal(barycenter, body.barycenter)


def test_wedge_sweep_over_the_loop(body):
    assert wedge_sweep(body, 0.1) == (True, None)
    pushed = replace(body, barycenter=body.barycenter + np.array([0.5, 0.0, 0.0]))
    inside, first_outside = wedge_sweep(pushed, 0.0)
    assert not inside
    assert first_outside is not None


def test_floor_is_flat(body, spec):
    assert floor_vertex_offset(body) <= 1e-9 * spec.radius
    count = len(body.loop.points) - 1
    for index in np.random.default_rng(11).choice(count, size=100, replace=False):
        half_width, offset = groove_cross_section(body, int(index))
        assert half_width == pytest.approx(spec.delta, rel=2e-2)
        assert offset <= 1e-9 * spec.radius


def test_body_is_star_shaped(body):
    directions = np.random.default_rng(7).normal(size=(10_000, 3))
    assert np.all(count_ray_hits(body, directions) == 1)


def test_groove_overlap_detected(spec):
    circle = latitude_loop(spec.r_loop, 0.0, 512)
    almost = replace(circle, points=circle.points[:-3], tangents=circle.tangents[:-3],
                     kappa_g=circle.kappa_g[:-3], closed=False)
    with pytest.raises(GrooveOverlap):
        shape_function(almost, spec)


def test_stl_export(tmp_path, body):
    path = export_mesh(body, tmp_path / "body.stl")
    raw = path.read_bytes()
    assert raw.startswith(STL_HEADER)
    normals, triangles = read_stl(path)
    assert len(triangles) == len(body.faces)
    assert np.allclose(triangles, body.vertices[body.faces].astype(np.float32))
    assert np.allclose(np.linalg.norm(normals, axis=1), 1.0, atol=1e-6)

    (tmp_path / "short.stl").write_bytes(raw[:-10])
    with pytest.raises(MeshInvalid):
        read_stl(tmp_path / "short.stl")


def test_sidecar(tmp_path, body, spec):
    data = json.loads(write_sidecar(body, tmp_path / "body.json").read_text())
    assert data["h"] == spec.h
    assert data["faces"] == len(body.faces)
    assert data["delta"] == pytest.approx(spec.delta)
    assert data["drift"] == pytest.approx(body.drift)


@pytest.mark.parametrize("value", [1.0, 0.5])
def test_constant_shape_meshes_a_ball(value):
    body = mesh_body(value, resolution=5, radius=2.0)
    assert body.volume == pytest.approx(4 * math.pi / 3 * (2.0 * value) ** 3, rel=5e-3)


def test_icosahedron_stl_size(tmp_path):
    path = export_mesh(mesh_body(1.0, resolution=0), tmp_path / "ico.stl")
    assert path.stat().st_size == 84 + 20 * 50


def test_carving_suite_reports_the_cap_estimates():
    rows = check_carving_bounds(QUICK)
    literal = [row for row in rows if row["tol"] == "informational"]
    assert len(literal) == 6
    assert all(row["pass"] for row in literal)
    volumes = [row for row in literal if row["anchor"] == "groove volume"]
    # v(h) * l at h = r / 100 on the latitude-0.5 loop
    length = 2 * math.pi * math.cos(0.5) * GrooveSpec.for_depth(1.0, 0.01).r_loop
    assert volumes[0]["expected"] == pytest.approx(cap_volume(0.01, 1.0) * length, rel=1e-6)
