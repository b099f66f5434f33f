import math

import numpy as np
import pytest
from scipy.integrate import quad

from curves import (
    FunctionSpec,
    arclength_reparam,
    circle_arc,
    function_from_preset,
    periodic_extend,
    read_curve_csv,
    read_function_table,
    require_c1_periodic,
    signed_curvature,
    straight_line,
    write_curve_csv,
    write_function_table,
)
from errors import InvalidInput, NotC1Periodic
from forge import find_preset, load_curve_presets

AMPLITUDE = 0.2


def test_presets_registry_has_sine_arch_corpus():
    names = [p["name"] for p in load_curve_presets()["curves"]]
    for amp in ("0.1", "0.2", "0.3"):
        assert f"sine_arch_{amp}" in names


def test_sine_arch_length_matches_quadrature(sine_arch):
    expected, _ = quad(lambda x: math.sqrt(1.0 + (AMPLITUDE * math.pi * math.sin(2 * math.pi * x)) ** 2),
                       0.0, 1.0, epsabs=1e-14)
    curve = arclength_reparam(sine_arch, 512)
    assert curve.length == pytest.approx(expected, rel=1e-6)
    assert np.allclose(curve.points[0], [0.0, 0.0])
    assert np.allclose(curve.points[-1], [1.0, 0.0], atol=1e-12)


def test_sine_arch_samples_are_unit_speed(sine_arch_curve):
    chords = np.linalg.norm(np.diff(sine_arch_curve.points, axis=0), axis=1)
    assert np.allclose(chords, sine_arch_curve.ds, rtol=1e-4)
    assert np.allclose(np.linalg.norm(sine_arch_curve.tangents, axis=1), 1.0)


def test_sine_arch_curvature_matches_closed_form(sine_arch):
    curve = arclength_reparam(sine_arch, 4096)
    x = curve.points[:, 0]
    d1 = AMPLITUDE * math.pi * np.sin(2 * math.pi * x)
    d2 = 2 * AMPLITUDE * math.pi ** 2 * np.cos(2 * math.pi * x)
    expected = d2 / (1.0 + d1 ** 2) ** 1.5
    scale = np.max(np.abs(expected))
    assert np.max(np.abs(curve.kappa - expected)) < 1e-3 * scale
    assert np.max(np.abs(signed_curvature(curve) - expected)) < 1e-3 * scale


def test_sine_arch_is_c1_periodic(sine_arch, sine_arch_curve):
    assert sine_arch.periodic_compatible
    assert sine_arch_curve.periodic
    require_c1_periodic(sine_arch_curve)


def test_semicircle_turns_clockwise():
    curve = arclength_reparam(function_from_preset(find_preset("semicircle")), 1024)
    interior = curve.kappa[50:-50]
    assert curve.length == pytest.approx(math.pi, rel=1e-3)
    assert np.mean(interior) == pytest.approx(-1.0, abs=1e-2)


def test_circle_and_line_oracles():
    arc = circle_arc(2.0, n=256, arc_length=math.pi, clockwise=True)
    assert np.allclose(arc.kappa, -0.5)
    assert np.allclose(signed_curvature(arc)[2:-2], -0.5, atol=1e-9)

    line = straight_line(3.0, n=64, heading=0.25)
    assert np.allclose(line.kappa, 0.0)
    assert line.length == 3.0
    assert line.periodic


def test_periodic_extend_adds_seams_as_knots(sine_arch_curve):
    extended = periodic_extend(sine_arch_curve, 3)
    n = sine_arch_curve.n
    assert extended.n == 3 * n
    assert extended.length == pytest.approx(3 * sine_arch_curve.length)
    assert {n, 2 * n} <= set(extended.knot_indices)
    assert np.allclose(extended.points[2 * n], sine_arch_curve.points[0] + 2 * sine_arch_curve.translation)
    assert periodic_extend(sine_arch_curve, 1) is sine_arch_curve


def test_periodic_extend_rejects_mismatched_slopes():
    parabola = function_from_preset({"name": "parabola", "kind": "polynomial",
                                     "params": {"coefficients": [0.0, 0.0, 1.0]},
                                     "domain": [0.0, 1.0]})
    assert not parabola.periodic_compatible
    with pytest.raises(NotC1Periodic):
        periodic_extend(arclength_reparam(parabola, 256), 2)


def test_function_spec_validation():
    with pytest.raises(InvalidInput):
        FunctionSpec.from_samples(np.linspace(0, 1, 8), np.zeros(8))
    x = np.linspace(0, 1, 32)
    with pytest.raises(InvalidInput):
        FunctionSpec.from_samples(x[::-1], np.zeros(32))
    with pytest.raises(InvalidInput):
        FunctionSpec.from_callable(np.sin, 1.0, 1.0)
    with pytest.raises(InvalidInput):
        function_from_preset({"kind": "spiral"})


def test_c2_bound_of_sine_arch(sine_arch):
    # sup |f''| = 2 A pi^2 dominates sup |f| and sup |f'|
    assert sine_arch.c2_bound == pytest.approx(2 * AMPLITUDE * math.pi ** 2, rel=1e-4)
    assert sine_arch.c1_bound == pytest.approx(AMPLITUDE * math.pi, rel=1e-6)


def test_curve_csv_is_lossless(tmp_path, sine_arch_curve):
    path = write_curve_csv(sine_arch_curve, tmp_path / "curve.csv")
    back = read_curve_csv(path)
    assert np.array_equal(back.points, sine_arch_curve.points)
    assert np.array_equal(back.kappa, sine_arch_curve.kappa)
    assert back.periodic
    assert back.c1_bound == pytest.approx(AMPLITUDE * math.pi, rel=1e-3)


def _rewrite(path, data):
    np.savetxt(path, data, fmt="%.17g", delimiter=",", header="s,x,y,kappa", comments="")


def test_curve_csv_must_be_an_arclength_grid(tmp_path, sine_arch_curve):
    path = write_curve_csv(sine_arch_curve, tmp_path / "curve.csv")
    data = np.loadtxt(path, delimiter=",", skiprows=1)

    uneven = data.copy()
    uneven[10, 0] += 0.3 * (data[1, 0] - data[0, 0])
    _rewrite(tmp_path / "uneven.csv", uneven)
    with pytest.raises(InvalidInput, match="uniform grid"):
        read_curve_csv(tmp_path / "uneven.csv")

    stretched = data.copy()
    stretched[:, 1:3] *= 1.01
    _rewrite(tmp_path / "stretched.csv", stretched)
    with pytest.raises(InvalidInput, match="arclength"):
        read_curve_csv(tmp_path / "stretched.csv")


def test_closed_circle_csv_has_no_slope_bound(tmp_path):
    path = write_curve_csv(circle_arc(1.0, 256), tmp_path / "circle.csv")
    assert read_curve_csv(path).c1_bound is None


def test_function_table_roundtrip_keeps_samples(tmp_path, sine_arch):
    path = write_function_table(sine_arch, tmp_path / "table.csv")
    back = read_function_table(path)
    assert np.array_equal(back.x, sine_arch.x)
    assert np.array_equal(back.y, sine_arch.y)
    assert back.evaluate(np.array([0.25]))[0] == pytest.approx(AMPLITUDE * 0.5, abs=1e-6)
