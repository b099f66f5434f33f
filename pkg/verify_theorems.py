#!/usr/bin/env python3
"""
Verification suite

Runs the quantitative checks of the pipeline and reports one row per check:
{check, anchor, expected, got, tol, pass}. Checks are grouped by tag:

    closed-forms     threshold constant, circle lifts, monodromy angle,
                     law of cosines, cap volume, integer-gap helper
    gegenbsp-inj     threshold constant and the semicircle injectivity switch
    closure-defect   F_r > l/3 for random graphs at r = sqrt(2) l
    closing-radius   sine-arch certificates, symmetry, resolution stability,
                     clearance bound
    carving          cap/groove volumes and barycenter drift
    dynamics         ball acceleration, energy conservation / dissipation
    parageodesic     constant-curvature solution against the lift
    tracking         end-to-end roll of a carved sine-arch body
    mob              constant-curvature minimality
    all              everything above

Usage:
    python3 verify_theorems.py closed-forms gegenbsp-inj
"""

import json
import logging
import math
import sys
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Sequence, Tuple

import numpy as np
from rich import box
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table
from scipy.integrate import quad

from carve import (
    GrooveSpec,
    GroovedBody,
    cap_volume,
    carve,
    drift_bound,
    groove_volume_bound,
    wedge_sweep,
)
from closure import (
    apex_angle_from_sides,
    find_closing_radius,
    is_simple,
    pick_copy_count,
)
from curves import (
    FunctionSpec,
    arclength_reparam,
    circle_arc,
    function_from_preset,
    periodic_extend,
    straight_line,
)
from dynamics import (
    ResistanceModel,
    contact_track,
    embed_plane,
    mob_minimality_test,
    parageodesic_solve,
    simulate_rolling,
)
from errors import ForgeError, InvalidInput
from lift import (
    SphericalCurve,
    circle_lift_closed_form,
    closure_defect,
    contact_trace,
    injectivity_threshold_constant,
    lift,
    loop_length_about,
    monodromy,
    sigma,
    threshold_quadratic_residual,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SuiteSettings:
    samples: int = 4096
    closure_n_max: int = 64
    tracking_n_max: int = 6
    tracking_b: float = 0.08
    carve_resolution: int = 4
    sim_step: float = 0.005
    random_curves: int = 10
    mob_trials: int = 500
    mob_bumps: int = 50
    seed: int = 0


QUICK = SuiteSettings(samples=512, closure_n_max=8, tracking_b=0.12, carve_resolution=3,
                      sim_step=0.01, random_curves=3, mob_trials=100, mob_bumps=5)

SINE_ARCH_PRESETS = [
    {"name": f"sine_arch_{a}", "kind": "sine_arch", "params": {"amplitude": a}, "domain": [0.0, 1.0]}
    for a in (0.1, 0.2, 0.3)
]


def _check(name: str, anchor: str, expected: Any, got: Any, tol: Any, passed: bool) -> Dict[str, Any]:
    def plain(value):
        if isinstance(value, (np.floating, np.integer)):
            return value.item()
        return value

    return {"check": name, "anchor": anchor, "expected": plain(expected), "got": plain(got),
            "tol": plain(tol), "pass": bool(passed)}


def _rel(a: float, b: float) -> float:
    return abs(a - b) / abs(b)


# ----------------------------------------------------------------------------
# Closed forms
# ----------------------------------------------------------------------------

def check_threshold_constant(settings: SuiteSettings) -> List[Dict]:
    a = injectivity_threshold_constant()
    residual = threshold_quadratic_residual(a)
    fixed = sigma(1.0 / a, 1.0)
    return [
        _check("threshold constant a in (3.9; 4)", "injectivity threshold constant",
               "(3.9, 4)", a, 0.0, 3.9 < a < 4.0),
        _check("A^2 + A - 4 = 0", "injectivity threshold constant", 0.0, residual, 1e-12,
               abs(residual) <= 1e-12),
        _check("sigma(l / a) = l at l = 1", "injectivity threshold constant", 1.0, fixed, 1e-12,
               abs(fixed - 1.0) <= 1e-12),
    ]


def _plane_fit(curve: SphericalCurve, reference: np.ndarray) -> Tuple[float, np.ndarray]:
    """Latitude and axis of a sampled small circle, from the plane through its points"""
    centered = curve.points - curve.points.mean(axis=0)
    normal = np.linalg.svd(centered, full_matrices=False)[2][-1]
    if np.dot(normal, reference) < 0:
        normal = -normal
    latitude = float(np.arcsin(np.clip(np.mean(curve.points @ normal) / curve.r, -1.0, 1.0)))
    return latitude, normal


def check_circle_lifts(settings: SuiteSettings) -> List[Dict]:
    rows = []
    for r, R in ((1.0, 1.0), (2.0, 1.0), (1.0, 3.0)):
        latitude, length = circle_lift_closed_form(r, R)
        spherical = lift(circle_arc(R, n=settings.samples), r)
        normal0 = np.cross(spherical.points[0], spherical.tangents[0])
        got_lat, axis = _plane_fit(spherical, normal0)
        got_len = loop_length_about(spherical, axis)
        rows.append(_check(f"circle lift length r={r:g} R={R:g}", "circle lift closed form",
                           length, got_len, 1e-6, _rel(got_len, length) <= 1e-6))
        rows.append(_check(f"circle lift latitude r={r:g} R={R:g}", "circle lift closed form",
                           latitude, got_lat, 1e-8, abs(got_lat - latitude) <= 1e-8))
    return rows


def check_monodromy_angle(settings: SuiteSettings) -> List[Dict]:
    expected = 2.0 * math.pi * (math.sqrt(2.0) - 1.0)
    got = monodromy(circle_arc(1.0, n=settings.samples), 1.0).angle
    return [_check("monodromy angle, unit circle on unit sphere", "circle lift closed form",
                   expected, got, 1e-8, abs(got - expected) <= 1e-8)]


def _isosceles_base(b: float, apex: float, r: float) -> float:
    """base length of the spherical triangle with legs b at the pole and apex angle apex"""
    q1 = np.array([np.sin(b / r), 0.0, np.cos(b / r)])
    q2 = np.array([np.sin(b / r) * np.cos(apex), np.sin(b / r) * np.sin(apex), np.cos(b / r)])
    return float(r * np.arctan2(np.linalg.norm(np.cross(q1, q2)), np.dot(q1, q2)))


def check_law_of_cosines(settings: SuiteSettings) -> List[Dict]:
    rng = np.random.default_rng(settings.seed)
    worst = 0.0
    for _ in range(200):
        r = rng.uniform(0.5, 5.0)
        b = rng.uniform(0.05, 0.95) * math.pi / 2 * r
        apex = rng.uniform(0.05, math.pi - 0.05)
        F = _isosceles_base(b, apex, r)
        worst = max(worst, abs(apex_angle_from_sides(F, b, r) - apex))
    degenerate = apex_angle_from_sides(math.pi / 2, math.pi / 2, 1.0)
    return [
        _check("apex angle from sides (synthetic)", "spherical law of cosines", 0.0, worst, 1e-9,
               worst <= 1e-9),
        _check("apex angle F/r = b/r = pi/2", "spherical law of cosines", math.pi / 2, degenerate,
               1e-9, abs(degenerate - math.pi / 2) <= 1e-9),
    ]


def check_cap_volume(settings: SuiteSettings) -> List[Dict]:
    worst = 0.0
    for r, h in ((1.0, 0.01), (1.0, 0.5), (2.5, 0.3), (1.0, 2.0)):
        oracle, _ = quad(lambda z: math.pi * (r * r - z * z), r - h, r, epsabs=1e-15, epsrel=1e-14)
        worst = max(worst, abs(cap_volume(h, r) - oracle) / oracle)
    return [_check("cap volume against quadrature", "spherical cap volume", 0.0, worst, 1e-12,
                   worst <= 1e-12)]


def check_integer_gap(settings: SuiteSettings) -> List[Dict]:
    grid = np.append(np.arange(1, int(math.pi * 1000) + 1) * 1e-3, math.pi)
    failures = 0
    for a in grid:
        n = pick_copy_count(float(a))
        if not (a / 3.0 <= 2.0 * math.pi / n <= a):
            failures += 1
    return [_check("2 pi / n in [a/3; a] on a 1e-3 grid", "integer gap", 0, failures, 0,
                   failures == 0)]


# ----------------------------------------------------------------------------
# Injectivity and closure defect
# ----------------------------------------------------------------------------

def _semicircle(samples: int):
    return circle_arc(1.0, n=samples, arc_length=math.pi, clockwise=True,
                      heading=math.pi / 2, start=(-1.0, 0.0))


def check_semicircle_threshold(settings: SuiteSettings) -> List[Dict]:
    semicircle = _semicircle(settings.samples)
    length = semicircle.length
    a = injectivity_threshold_constant()
    below, _ = is_simple(lift(semicircle, 0.95 * length / a))
    above, _ = is_simple(lift(semicircle, 1.05 * length))
    return [
        _check("semicircle lift at 0.95 l/a is not simple", "injectivity threshold", False, below,
               0, not below),
        _check("semicircle lift at 1.05 l is simple", "injectivity above the curve length", True,
               above, 0, above),
    ]


def _random_unit_length_graph(rng: np.random.Generator, samples: int) -> FunctionSpec:
    modes = np.arange(1, 6)
    coeffs = rng.normal(size=len(modes)) * 0.15 / modes ** 2
    phases = rng.uniform(0.0, 2.0 * math.pi, size=len(modes))

    def f(x):
        x = np.asarray(x, dtype=float)
        return np.sum(coeffs[:, None] * np.sin(np.pi * modes[:, None] * x[None, :] + phases[:, None]), axis=0)

    def df(x):
        x = np.asarray(x, dtype=float)
        return np.sum((coeffs * np.pi * modes)[:, None]
                      * np.cos(np.pi * modes[:, None] * x[None, :] + phases[:, None]), axis=0)

    base = FunctionSpec.from_callable(f, 0.0, 1.0, deriv=df)
    scale = 1.0 / arclength_reparam(base, samples).length
    # scaling the graph by `scale` keeps it a graph: g(x) = scale f(x / scale)
    return FunctionSpec.from_callable(lambda x: scale * f(np.asarray(x) / scale), 0.0, scale,
                                      deriv=lambda x: df(np.asarray(x) / scale), tag="random")


def check_closure_defect_bound(settings: SuiteSettings) -> List[Dict]:
    rng = np.random.default_rng(settings.seed)
    values = []
    for _ in range(settings.random_curves):
        curve = arclength_reparam(_random_unit_length_graph(rng, settings.samples), settings.samples)
        values.append(closure_defect(curve, math.sqrt(2.0) * curve.length) / curve.length)
    worst = float(min(values))
    return [_check(f"F_r / l > 1/3 at r = sqrt(2) l ({len(values)} random graphs)",
                   "closure defect lower bound", "> 1/3", worst, 0.0, worst > 1.0 / 3.0)]


# ----------------------------------------------------------------------------
# Closing radius
# ----------------------------------------------------------------------------

def check_sine_arch_closure(settings: SuiteSettings) -> List[Dict]:
    rows = []
    for preset in SINE_ARCH_PRESETS:
        f = function_from_preset(preset)
        name = preset["name"]
        try:
            cert = find_closing_radius(arclength_reparam(f, settings.samples), (1.0, 20.0),
                                       n_max=settings.closure_n_max)
            fine = find_closing_radius(arclength_reparam(f, 2 * settings.samples), (1.0, 20.0),
                                       n_max=settings.closure_n_max)
        except ForgeError as exc:
            rows.append(_check(f"{name}: closing radius found", "simple closed lifts", "certificate",
                               exc.code, 0, False))
            continue
        r = cert.r
        rows.append(_check(f"{name}: seam gap", "simple closed lifts", 0.0, cert.seam_gap, 1e-6 * r,
                           cert.seam_gap < 1e-6 * r))
        rows.append(_check(f"{name}: loop is simple", "simple closed lifts", True, cert.simple, 0,
                           cert.simple))
        rows.append(_check(f"{name}: {cert.n}-fold symmetry", "simple closed lifts", 0.0,
                           cert.symmetry_residual, 1e-8 * r, cert.symmetry_residual < 1e-8 * r))
        moved = _rel(fine.r, r)
        rows.append(_check(f"{name}: radius stable under doubled resolution", "simple closed lifts",
                           0.0, moved, 1e-6, fine.n == cert.n and moved < 1e-6))
        rows.append(_check(f"{name}: b_r > r arctan(1/(rD))", "clearance bound", cert.clearance_bound,
                           cert.b_r, 0.0, cert.clearance_ok))
    return rows


# ----------------------------------------------------------------------------
# Carving
# ----------------------------------------------------------------------------

def latitude_loop(r: float, latitude: float, samples: int) -> SphericalCurve:
    """Closed constant-latitude loop about the z axis"""
    phi = np.linspace(0.0, 2.0 * math.pi, samples + 1)
    c, s = math.cos(latitude), math.sin(latitude)
    points = r * np.column_stack([c * np.cos(phi), c * np.sin(phi), np.full_like(phi, s)])
    tangents = np.column_stack([-np.sin(phi), np.cos(phi), np.zeros_like(phi)])
    return SphericalCurve(r=r, points=points, tangents=tangents,
                          kappa_g=np.full(samples + 1, math.tan(latitude) / r),
                          ds=2.0 * math.pi * r * c / samples, closed=True, source_tag="latitude")


def check_carving_bounds(settings: SuiteSettings) -> List[Dict]:
    rows = check_cap_volume(settings)
    radius = 1.0
    drifts = []
    for h in (radius / 100, radius / 200, radius / 400):
        spec = GrooveSpec.for_depth(radius, h)
        loop = latitude_loop(spec.r_loop, 0.5, settings.samples)
        body = carve(loop, spec, settings.carve_resolution)
        groove = body.ball_volume - body.volume
        volume_bound = groove_volume_bound(spec, loop)
        rows.append(_check(f"groove volume inside the carved shell band, h = {h:g}", "groove volume",
                           volume_bound, groove, 0.0, 0.0 < groove < volume_bound))
        offset = float(np.linalg.norm(body.ball_barycenter))
        bound = drift_bound(groove, radius, body.volume, offset)
        rows.append(_check(f"drift below the removed first moment, h = {h:g}", "barycenter drift",
                           bound, body.drift, 0.0, body.drift < bound))
        length = loop.length
        rows.append(_check(f"cap estimate v(h) * l, h = {h:g} (informational)", "groove volume",
                           cap_volume(h, radius) * length, groove, "informational", True))
        rows.append(_check(f"drift estimate pi h^2 r^2 l, h = {h:g} (informational)", "barycenter drift",
                           math.pi * h * h * radius * radius * length, body.drift, "informational", True))
        drifts.append(body.drift / h)
    decreasing = all(a > b for a, b in zip(drifts, drifts[1:]))
    rows.append(_check("drift / h decreases with h", "barycenter drift", "decreasing", drifts, 0.0,
                       decreasing))
    return rows


# ----------------------------------------------------------------------------
# Dynamics
# ----------------------------------------------------------------------------

def check_dynamics_oracles(settings: SuiteSettings) -> List[Dict]:
    rows = []
    alpha, gravity, radius = 0.3, 1.0, 0.5
    plane = embed_plane(alpha)
    ball = GroovedBody.ball(radius, settings.carve_resolution)

    line = straight_line(4.0, n=settings.samples)
    traj = simulate_rolling(ball, plane, ResistanceModel.coulomb(0.0, radius), line,
                            duration=2.0, step=settings.sim_step, gravity=gravity)
    accel = 2.0 * traj.s[-1] / traj.t[-1] ** 2
    expected = 5.0 / 7.0 * gravity * math.sin(alpha)
    rows.append(_check("ball downhill acceleration 5/7 g sin(alpha)", "rolling equation of motion",
                       expected, accel, 1e-8, abs(accel - expected) <= 1e-8))

    arch = periodic_extend(arclength_reparam(function_from_preset(SINE_ARCH_PRESETS[1]),
                                             settings.samples), 3)
    traj = simulate_rolling(ball, plane, ResistanceModel.coulomb(0.0, radius), arch,
                            duration=3.0, step=settings.sim_step, gravity=gravity)
    scale = float(np.max(traj.ekin))
    drift = float(np.max(np.abs(traj.energy - traj.energy[0]))) / scale
    rows.append(_check("energy conserved without resistance", "kinetic energy balance", 0.0, drift,
                       1e-6, drift <= 1e-6))

    traj = simulate_rolling(ball, plane, ResistanceModel.coulomb(0.05, radius), arch,
                            duration=3.0, step=settings.sim_step, gravity=gravity)
    rise = float(np.max(np.diff(traj.energy)))
    rows.append(_check("energy nonincreasing with resistance", "kinetic energy balance", "<= 0",
                       rise, 1e-12 * scale, rise <= 1e-12 * scale))
    return rows


def check_parageodesic(settings: SuiteSettings) -> List[Dict]:
    kappa, lam, steps = 0.7, 1.0, 1000
    sol = parageodesic_solve(lambda t: kappa, lam, 1.0, init=(math.pi / 2, 0.0), samples=steps + 1)
    reference = lift(circle_arc(1.0 / kappa, n=steps, arc_length=lam), 1.0)
    gap = float(np.max(np.linalg.norm(sol.points - reference.points, axis=1)))
    return [
        _check("constant-curvature parageodesic equals the lift", "parageodesic equation", 0.0, gap,
               1e-8, gap <= 1e-8),
        _check("parageodesic first-integral residual", "parageodesic equation", 0.0, sol.residual,
               1e-8, sol.residual <= 1e-8),
    ]


# ----------------------------------------------------------------------------
# End-to-end tracking and man-over-board
# ----------------------------------------------------------------------------

def check_end_to_end_tracking(settings: SuiteSettings) -> List[Dict]:
    curve = arclength_reparam(function_from_preset(SINE_ARCH_PRESETS[1]), settings.samples)
    cert = find_closing_radius(curve, (0.5, 20.0), n_max=settings.tracking_n_max)
    alpha = 0.2
    spec = GrooveSpec.for_contact_width(cert.r, settings.tracking_b * cert.r,
                                        beta=alpha * curve.c1_bound)
    body = carve(contact_trace(cert.loop), spec, settings.carve_resolution)
    inside, first_outside = wedge_sweep(body, spec.beta)

    plane = embed_plane(alpha)
    target = periodic_extend(curve, 3)
    traj = simulate_rolling(body, plane, ResistanceModel.coulomb(0.0, spec.r_loop), target,
                            duration=40.0, step=settings.sim_step)
    track = contact_track(traj, plane)
    allowed = body.delta + 0.02 * cert.r
    offset = float(np.max(track.reduced_offset))
    return [
        _check(f"barycenter inside the wedge beta = alpha * a = {spec.beta:.4g}", "wedge stability",
               None, first_outside, 0, inside),
        _check("contact track within delta + 2% r", "tracking", allowed, track.max_deviation, 0.0,
               track.max_deviation <= allowed),
        _check("fitted curve parameter strictly increasing", "tracking", True, track.increasing, 0,
               track.increasing),
        _check("rolled over the whole target", "tracking", True, traj.reached_end, 0,
               traj.reached_end),
        _check("rebuilt mesh meets the contact predicted by s(t)", "tracking", 0.0, offset,
               3 * body.mesh_tolerance, offset <= 3 * body.mesh_tolerance),
    ]


def check_mob(settings: SuiteSettings, threads: int = 1) -> List[Dict]:
    report = mob_minimality_test(0.3, 0.5, 1.0, trials=settings.mob_trials, seed=settings.seed,
                                 threads=threads, bumps=settings.mob_bumps)
    bumps = report["bumps"]
    return [
        _check(f"no sampled control beats constant curvature ({report['trials']} trials)",
               "man-over-board minimality", report["f_const"], report["f_min_sampled"], 1e-9,
               report["pass"]),
        _check("positive bumps decrease the end-point distance", "man-over-board minimality",
               bumps["count"], bumps["passed"], 0, bumps["passed"] == bumps["count"]),
    ]


# ----------------------------------------------------------------------------
# Suite
# ----------------------------------------------------------------------------

SUITE: Dict[str, List[Callable]] = {
    "closed-forms": [check_threshold_constant, check_circle_lifts, check_monodromy_angle,
                     check_law_of_cosines, check_cap_volume, check_integer_gap],
    "gegenbsp-inj": [check_threshold_constant, check_semicircle_threshold],
    "closure-defect": [check_closure_defect_bound],
    "closing-radius": [check_sine_arch_closure],
    "carving": [check_carving_bounds],
    "dynamics": [check_dynamics_oracles],
    "parageodesic": [check_parageodesic],
    "tracking": [check_end_to_end_tracking],
    "mob": [check_mob],
}


def verify_theorems(selection: Sequence[str], threads: int = 1,
                    settings: SuiteSettings = SuiteSettings()) -> List[Dict[str, Any]]:
    """Run the tagged checks; a check that raises is reported as failed"""
    tags = list(SUITE) if "all" in selection else list(selection)
    unknown = [t for t in tags if t not in SUITE]
    if unknown:
        raise InvalidInput(f"unknown verification tag '{unknown[0]}'", field="suite",
                           known=sorted(SUITE) + ["all"])

    seen, rows = set(), []
    for tag in tags:
        for fn in SUITE[tag]:
            if fn in seen:
                continue
            seen.add(fn)
            logger.info("running %s", fn.__name__)
            try:
                rows.extend(fn(settings, threads) if fn is check_mob else fn(settings))
            except ForgeError as exc:
                rows.append(_check(fn.__name__, tag, "no error", exc.code, 0, False))
    return rows


def _fmt(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    if isinstance(value, list):
        return "[" + ", ".join(_fmt(v) for v in value) + "]"
    return str(value)


def render_report(rows: Sequence[Dict[str, Any]]) -> Table:
    table = Table(title="Verification", box=box.ROUNDED, title_style="bold cyan")
    table.add_column("Check", style="white")
    table.add_column("Expected", justify="right")
    table.add_column("Got", justify="right")
    table.add_column("Tol", justify="right")
    table.add_column("", width=4)
    for row in rows:
        mark = "[green]PASS[/green]" if row["pass"] else "[red]FAIL[/red]"
        table.add_row(row["check"], _fmt(row["expected"]), _fmt(row["got"]), _fmt(row["tol"]), mark)
    return table


def main(argv: Sequence[str] = ()) -> int:
    logging.basicConfig(level=logging.INFO, format="%(message)s",
                        handlers=[RichHandler(show_path=False)])
    tags = [a for a in argv if a != "--quick"]
    settings = QUICK if "--quick" in argv else SuiteSettings()
    rows = verify_theorems(tags or ["closed-forms"], settings=settings)
    console = Console()
    console.print(render_report(rows))
    print(json.dumps(rows, indent=2))
    return 0 if all(r["pass"] for r in rows) else 2


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
