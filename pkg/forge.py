#!/usr/bin/env python3
"""
Trajectoid Forge
================

Command-line front end for the whole pipeline:

    lift      lift a planar target curve onto a sphere of radius r
    close     find the closing radius and write the certificate + loop
    carve     carve the groove along a certified loop, write STL + sidecar
    simulate  roll the body (or a plain ball) down the inclined plane
    mob       constant-curvature minimality test
    verify    run the verification suite

Usage:
    python3 forge.py close --preset sine_arch_0.2 --bracket 1,20 --nmax 64
    python3 forge.py carve --cert out/certificate.json --b 0.05
    python3 forge.py verify --suite closed-forms

Every run writes its artifacts plus run.json (effective config, versions,
wall time) to the output directory. Domain errors exit with 2 and leave an
error.json next to the manifest.
"""

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from rich.console import Console
from rich.logging import RichHandler

from carve import GrooveSpec, GroovedBody, carve, export_mesh, wedge_sweep, write_sidecar
from closure import find_closing_radius, loop_for_certificate, read_certificate, write_certificate
from curves import (
    CURVE_CSV_HEADER,
    TABLE_CSV_HEADER,
    PlanarCurve,
    arclength_reparam,
    function_from_preset,
    periodic_extend,
    read_curve_csv,
    read_function_table,
    write_curve_csv,
)
from dynamics import (
    ResistanceModel,
    contact_track,
    embed_plane,
    mob_minimality_test,
    simulate_rolling,
    write_trajectory_csv,
)
from errors import ForgeError, InvalidInput
from lift import contact_trace, lift, monodromy, read_spherical_csv, write_spherical_csv

# Base directory for the registries shipped next to the code
APP_DIR = Path(__file__).parent
DEFAULTS_FILE = APP_DIR / "forge_defaults.json"
PRESETS_FILE = APP_DIR / "curve_presets.json"

COMMANDS = ("lift", "close", "carve", "simulate", "mob", "verify")
EXIT_OK = 0
EXIT_IO = 1
EXIT_DOMAIN = 2
EXIT_USAGE = 64

logger = logging.getLogger("forge")
console = Console()


def print_header(text):
    """Print a section header"""
    console.rule(f"[bold magenta]{text}")


def print_step(step_num, text):
    """Print a numbered step"""
    console.print(f"[bold cyan][Step {step_num}][/bold cyan] {text}")


def print_success(text):
    console.print(f"[green]✓ {text}[/green]")


def print_error(text):
    console.print(f"[red]✗ {text}[/red]")


def print_info(text):
    console.print(f"[yellow]→ {text}[/yellow]")


def load_defaults():
    """Load default parameters from forge_defaults.json"""
    with open(DEFAULTS_FILE, "r", encoding="utf-8") as f:
        return json.load(f)


def load_curve_presets():
    """Load the named target curves from curve_presets.json"""
    with open(PRESETS_FILE, "r", encoding="utf-8") as f:
        return json.load(f)


def find_preset(key: str) -> Dict[str, Any]:
    """Preset by name or numeric id"""
    for preset in load_curve_presets()["curves"]:
        if preset["name"] == key or str(preset["id"]) == str(key):
            return preset
    raise InvalidInput(f"unknown curve preset '{key}'", field="preset")


# ----------------------------------------------------------------------------
# Configuration
# ----------------------------------------------------------------------------

@dataclass
class RunConfig:
    command: str
    curve: Optional[str] = None
    preset: Optional[str] = None
    samples: int = 4096
    r: float = 1.0
    bracket: List[float] = field(default_factory=lambda: [1.0, 20.0])
    n_max: int = 64
    grid: int = 96
    cert: Optional[str] = None
    loop: Optional[str] = None
    b: Optional[float] = 0.05
    h: Optional[float] = None
    beta: Optional[float] = None
    resolution: int = 4
    alpha: float = 0.2
    rho: float = 0.0
    step: float = 0.001
    duration: float = 1.0
    v0: float = 0.0
    gravity: float = 1.0
    periods: int = 3
    R: float = 0.3
    lam: float = 0.5
    trials: int = 500
    seed: int = 0
    bumps: int = 50
    suite: List[str] = field(default_factory=lambda: ["all"])
    out: str = "forge_out"
    threads: int = 1

    def validate(self) -> None:
        """All lengths positive, bracket nonempty; raises InvalidInput with the field path"""
        positive = ["r", "step", "duration", "gravity", "R", "lam"]
        for name in positive:
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and np.isfinite(value) and value > 0):
                raise InvalidInput(f"{name} must be positive", field=name, value=value)
        for name in ("b", "h"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise InvalidInput(f"{name} must be positive", field=name, value=value)
        if len(self.bracket) != 2 or not 0 < self.bracket[0] < self.bracket[1]:
            raise InvalidInput("bracket must be lo,hi with 0 < lo < hi", field="bracket",
                               value=self.bracket)
        for name in ("samples", "n_max", "grid", "periods", "threads", "resolution"):
            if int(getattr(self, name)) < 1:
                raise InvalidInput(f"{name} must be a positive integer", field=name,
                                   value=getattr(self, name))
        for name in ("rho", "v0", "beta"):
            value = getattr(self, name)
            if value is not None and value < 0:
                raise InvalidInput(f"{name} must be nonnegative", field=name, value=value)
        if not 0 < self.alpha < np.pi / 2:
            raise InvalidInput("alpha must lie in (0; pi/2)", field="alpha", value=self.alpha)


# defaults file layout -> RunConfig field names
_DEFAULT_KEYS = {
    ("lift", "r"): "r",
    ("close", "bracket"): "bracket",
    ("close", "n_max"): "n_max",
    ("close", "grid"): "grid",
    ("carve", "b"): "b",
    ("carve", "h"): "h",
    ("carve", "beta"): "beta",
    ("carve", "resolution"): "resolution",
    ("simulate", "alpha"): "alpha",
    ("simulate", "rho"): "rho",
    ("simulate", "step"): "step",
    ("simulate", "duration"): "duration",
    ("simulate", "v0"): "v0",
    ("simulate", "gravity"): "gravity",
    ("simulate", "periods"): "periods",
    ("mob", "R"): "R",
    ("mob", "lambda"): "lam",
    ("mob", "trials"): "trials",
    ("mob", "seed"): "seed",
    ("mob", "bumps"): "bumps",
}


def _flatten_defaults(defaults: Dict[str, Any], command: str) -> Dict[str, Any]:
    flat = {k: v for k, v in defaults.items() if not isinstance(v, dict)}
    for (section, key), name in _DEFAULT_KEYS.items():
        if key in defaults.get(section, {}):
            flat[name] = defaults[section][key]
    # the mob radius shares the name r with the lift radius
    if command == "mob" and "r" in defaults.get("mob", {}):
        flat["r"] = defaults["mob"]["r"]
    return flat


def build_config(args: argparse.Namespace) -> RunConfig:
    """flags > --config file > forge_defaults.json; TRAJFORGE_OUT overrides the output dir"""
    values: Dict[str, Any] = _flatten_defaults(load_defaults(), args.command)
    if args.config:
        with open(args.config, "r", encoding="utf-8") as f:
            values.update(json.load(f))

    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise InvalidInput(f"unknown config field '{unknown[0]}'", field=unknown[0])

    for name in known - {"command"}:
        flag = getattr(args, name, None)
        if flag is not None:
            values[name] = flag
    if os.environ.get("TRAJFORGE_OUT"):
        values["out"] = os.environ["TRAJFORGE_OUT"]

    values["command"] = args.command
    config = RunConfig(**values)
    config.bracket = [float(v) for v in config.bracket]
    config.validate()
    return config


def prepare_output(out: str) -> Path:
    """Create the output directory and make sure it is writable before computing"""
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    if not os.access(path, os.W_OK):
        raise OSError(f"output directory {path} is not writable")
    return path


def package_versions() -> Dict[str, str]:
    versions = {"python": sys.version.split()[0]}
    for name in ("numpy", "scipy", "rich"):
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = "unknown"
    return versions


# ----------------------------------------------------------------------------
# Inputs
# ----------------------------------------------------------------------------

def load_target(config: RunConfig) -> PlanarCurve:
    """Target curve from a CSV (s,x,y,kappa or x,f) or from a named preset"""
    if config.curve:
        path = Path(config.curve)
        with open(path, "r", encoding="utf-8") as fh:
            header = fh.readline().strip()
        if header == CURVE_CSV_HEADER:
            return read_curve_csv(path)
        if header == TABLE_CSV_HEADER:
            return arclength_reparam(read_function_table(path), config.samples)
        raise InvalidInput(f"{path}: unrecognized CSV header '{header}'", field="curve")
    if config.preset:
        return arclength_reparam(function_from_preset(find_preset(config.preset)), config.samples)
    raise InvalidInput("a target curve is required (--curve or --preset)", field="curve")


def load_loop(config: RunConfig):
    """(certificate, closed loop) from --cert plus --loop, a sibling loop.csv or the target curve"""
    if not config.cert:
        raise InvalidInput("a closure certificate is required (--cert)", field="cert")
    cert_path = Path(config.cert)
    cert = read_certificate(cert_path)
    loop_path = Path(config.loop) if config.loop else cert_path.with_name("loop.csv")
    if loop_path.exists():
        return cert, read_spherical_csv(loop_path, r=cert.r, closed=True)
    return cert, loop_for_certificate(load_target(config), cert)


def wedge_angle(config: RunConfig, slope_bound: Optional[float]) -> float:
    """--beta if given, else alpha times the target's sup |f'|"""
    if config.beta is not None:
        return config.beta
    if slope_bound is None:
        raise InvalidInput("target slope bound unknown; pass --beta", field="beta")
    return config.alpha * slope_bound


def groove_for(config: RunConfig, r_loop: float, slope_bound: Optional[float]) -> GrooveSpec:
    beta = wedge_angle(config, slope_bound)
    if config.h is None:
        return GrooveSpec.for_contact_width(r_loop, config.b, beta=beta)
    if config.b is None:
        return GrooveSpec.for_depth(r_loop + config.h, config.h, beta=beta)
    return GrooveSpec.build(r_loop + config.h, config.b, config.h, beta=beta)


def write_json(data: Dict[str, Any], path: Path) -> Path:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2)
        fh.write("\n")
    return path


# ----------------------------------------------------------------------------
# Stages
# ----------------------------------------------------------------------------

def stage_lift(config: RunConfig, out: Path) -> List[Path]:
    print_step(1, "Loading target curve")
    curve = load_target(config)
    print_info(f"{curve.tag}: length {curve.length:.9g}, {curve.n} steps")

    print_step(2, f"Lifting onto the sphere r = {config.r:g}")
    spherical = lift(curve, config.r)
    artifacts = [write_spherical_csv(spherical, out / "lift.csv")]
    summary = {
        "r": config.r,
        "length": spherical.length,
        "seam_gap": spherical.seam_gap,
        "curvature_residual": spherical.curvature_residual,
    }
    if curve.periodic and curve.seam_tangent_gap < curve.seam_tol:
        summary["monodromy"] = monodromy(curve, config.r).to_dict()
    artifacts.append(write_json(summary, out / "lift.json"))
    print_success(f"closure defect F_r = {spherical.seam_gap:.9g}")
    return artifacts


def stage_close(config: RunConfig, out: Path) -> List[Path]:
    print_step(1, "Loading target curve")
    curve = load_target(config)

    print_step(2, f"Searching radii in [{config.bracket[0]:g}, {config.bracket[1]:g}], n <= {config.n_max}")
    cert = find_closing_radius(curve, tuple(config.bracket), n_max=config.n_max, grid=config.grid)
    artifacts = [
        write_certificate(cert, out / "certificate.json"),
        write_spherical_csv(cert.loop, out / "loop.csv"),
        write_curve_csv(curve, out / "curve.csv"),
    ]
    print_success(f"r = {cert.r:.12g} with n = {cert.n} copies, seam gap {cert.seam_gap:.3e}")
    return artifacts


def _carve_body(config: RunConfig, target: Optional[PlanarCurve] = None) -> GroovedBody:
    cert, loop = load_loop(config)
    slope_bound = cert.c1_bound
    if slope_bound is None and config.beta is None and (target or config.curve or config.preset):
        slope_bound = (target or load_target(config)).c1_bound
    spec = groove_for(config, cert.r, slope_bound)
    print_info(f"groove: R = {spec.radius:.9g}, h = {spec.h:.6g}, delta = {spec.delta:.6g}, "
               f"beta = {spec.beta:.6g}")
    return carve(contact_trace(loop), spec, config.resolution)


def stage_carve(config: RunConfig, out: Path) -> List[Path]:
    print_step(1, "Carving the groove along the certified loop")
    body = _carve_body(config)

    print_step(2, f"Checking the barycenter against the wedge of opening {body.spec.beta:.6g}")
    inside, first_outside = wedge_sweep(body, body.spec.beta)
    if inside:
        print_success("barycenter inside the wedge over every contact segment")
    else:
        print_error(f"barycenter leaves the wedge at loop sample {first_outside}")

    print_step(3, "Exporting mesh")
    wedge = {"inside_wedge": inside, "first_outside": first_outside}
    artifacts = [export_mesh(body, out / "body.stl"), write_sidecar(body, out / "body.json", wedge)]
    print_success(f"{len(body.faces)} faces, barycenter drift {body.drift:.3e}")
    return artifacts


def stage_simulate(config: RunConfig, out: Path) -> List[Path]:
    print_step(1, "Preparing body and target")
    curve = load_target(config)
    if config.cert:
        body = _carve_body(config, curve)
        lever = body.spec.r_loop
    else:
        print_info(f"no certificate given: rolling a plain ball of radius {config.r:g}")
        body = GroovedBody.ball(config.r, config.resolution)
        lever = config.r
    target = periodic_extend(curve, config.periods)

    print_step(2, f"Rolling for t <= {config.duration:g} at alpha = {config.alpha:g}")
    plane = embed_plane(config.alpha)
    model = ResistanceModel.coulomb(config.rho, lever)
    traj = simulate_rolling(body, plane, model, target, config.duration, config.step,
                            v0=config.v0, gravity=config.gravity)
    track = contact_track(traj, plane)

    summary = {
        "reached_end": traj.reached_end,
        "t_end": float(traj.t[-1]),
        "s_end": float(traj.s[-1]),
        "energy_drift": float(np.max(np.abs(traj.energy - traj.energy[0]))),
        "orthogonality_drift": traj.orthogonality_drift(),
        "contact_track": track.report(),
    }
    artifacts = [write_trajectory_csv(traj, out / "trajectory.csv"),
                 write_json(summary, out / "simulation.json")]
    print_success(f"max deviation from target {track.max_deviation:.3e}")
    return artifacts


def stage_mob(config: RunConfig, out: Path) -> Tuple[List[Path], bool]:
    print_step(1, f"Sampling {config.trials} controls (seed {config.seed})")
    report = mob_minimality_test(config.R, config.lam, config.r, trials=config.trials,
                                 seed=config.seed, threads=config.threads, bumps=config.bumps)
    path = write_json(report, out / "mob.json")
    if report["pass"]:
        print_success(f"F_const = {report['f_const']:.12g} <= min sampled {report['f_min_sampled']:.12g}")
    else:
        print_error(f"a sampled control beats the constant: {report['f_min_sampled']:.12g}")
    return [path], bool(report["pass"])


def stage_verify(config: RunConfig, out: Path) -> Tuple[List[Path], bool]:
    from verify_theorems import render_report, verify_theorems

    print_step(1, f"Running suite: {', '.join(config.suite)}")
    checks = verify_theorems(config.suite, threads=config.threads)
    console.print(render_report(checks))
    ok = all(c["pass"] for c in checks)
    return [write_json({"pass": ok, "checks": checks}, out / "verify.json")], ok


def run_stage(config: RunConfig, out: Path) -> Tuple[bool, List[Path], Optional[str]]:
    """(success, artifacts, error message)"""
    if config.command == "lift":
        return True, stage_lift(config, out), None
    if config.command == "close":
        return True, stage_close(config, out), None
    if config.command == "carve":
        return True, stage_carve(config, out), None
    if config.command == "simulate":
        return True, stage_simulate(config, out), None
    if config.command == "mob":
        artifacts, ok = stage_mob(config, out)
        return ok, artifacts, None if ok else "constant-curvature control was beaten"
    if config.command == "verify":
        artifacts, ok = stage_verify(config, out)
        return ok, artifacts, None if ok else "verification checks failed"
    raise InvalidInput(f"unknown command '{config.command}'", field="command")


def write_manifest(config: RunConfig, out: Path, artifacts: Sequence[Path], status: int,
                   started: datetime, wall: float) -> Path:
    manifest = {
        "command": config.command,
        "config": asdict(config),
        "versions": package_versions(),
        "started": started.isoformat(),
        "wall_time": wall,
        "exit_status": status,
        "artifacts": [p.name for p in artifacts],
    }
    return write_json(manifest, out / "run.json")


# ----------------------------------------------------------------------------
# Command line
# ----------------------------------------------------------------------------

class ForgeArgumentParser(argparse.ArgumentParser):
    """Usage problems exit with 64 instead of argparse's 2"""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",")]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got '{text}'") from exc


def parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    """Parse command-line arguments"""
    parser = ForgeArgumentParser(prog="forge", description="Trajectoid Forge")
    parser.add_argument("command", choices=COMMANDS, help="pipeline stage")
    parser.add_argument("--config", help="JSON file with RunConfig fields")
    parser.add_argument("--out", help="output directory (TRAJFORGE_OUT overrides)")
    parser.add_argument("--threads", type=int, help="worker cap for Monte-Carlo trials")
    parser.add_argument("--verbose", action="store_true", help="debug logging")

    parser.add_argument("--curve", help="target curve CSV (s,x,y,kappa or x,f)")
    parser.add_argument("--preset", help="named target from curve_presets.json")
    parser.add_argument("--samples", type=int, help="arclength steps per period")
    parser.add_argument("--r", type=float, help="sphere radius (lift, ball, mob)")
    parser.add_argument("--bracket", type=_floats, help="radius bracket lo,hi")
    parser.add_argument("--nmax", dest="n_max", type=int, help="largest copy count")
    parser.add_argument("--grid", type=int, help="initial radius scan size")

    parser.add_argument("--cert", help="closure certificate JSON")
    parser.add_argument("--loop", help="closed loop CSV (default: loop.csv next to the certificate)")
    parser.add_argument("--b", type=float, help="flat contact half-width")
    parser.add_argument("--h", type=float, help="groove depth")
    parser.add_argument("--beta", type=float, help="wedge opening angle")
    parser.add_argument("--resolution", type=int, help="icosphere level")

    parser.add_argument("--alpha", type=float, help="slope angle of the plane")
    parser.add_argument("--rho", type=float, help="rolling resistance coefficient")
    parser.add_argument("--step", type=float, help="time step")
    parser.add_argument("--duration", type=float, help="simulated time")
    parser.add_argument("--v0", type=float, help="initial speed")
    parser.add_argument("--gravity", type=float, help="gravitational acceleration")
    parser.add_argument("--periods", type=int, help="target periods to roll along")

    parser.add_argument("--R", type=float, help="man-over-board control bound")
    parser.add_argument("--lam", "--lambda", dest="lam", type=float, help="path length")
    parser.add_argument("--trials", type=int, help="random controls")
    parser.add_argument("--seed", type=int, help="random seed")
    parser.add_argument("--bumps", type=int, help="bump perturbations")
    parser.add_argument("--suite", type=lambda t: t.split(","), help="verification tags")
    return parser.parse_args(argv)


def setup_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=console, rich_tracebacks=True, show_path=False)],
        force=True,
    )


def report_error(error: ForgeError, target: Path) -> None:
    print_error(f"{error.code}: {error.message}")
    try:
        target.mkdir(parents=True, exist_ok=True)
        write_json(error.to_dict(), target / "error.json")
    except OSError:
        logger.error("could not write error.json to %s", target)


def run(config: RunConfig) -> int:
    """Run one stage and write its artifacts plus run.json (or error.json); returns the exit status"""
    started = datetime.now(timezone.utc)
    clock = time.perf_counter()
    out = None
    try:
        out = prepare_output(config.out)
        success, artifacts, message = run_stage(config, out)
        status = EXIT_OK if success else EXIT_DOMAIN
        write_manifest(config, out, artifacts, status, started, time.perf_counter() - clock)
        if success:
            print_success(f"artifacts written to {out}")
        else:
            print_error(message)
        return status

    except ForgeError as e:
        report_error(e, out if out is not None else Path(config.out))
        return EXIT_DOMAIN
    except OSError as e:
        print_error(f"I/O error: {e}")
        return EXIT_IO
    except KeyboardInterrupt:
        print_error("cancelled by user")
        return EXIT_IO


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main orchestration function"""
    args = parse_args(argv)
    setup_logging(args.verbose)
    print_header(f"Trajectoid Forge: {args.command}")

    try:
        config = build_config(args)
    except ForgeError as e:
        report_error(e, Path(os.environ.get("TRAJFORGE_OUT") or args.out or "."))
        return EXIT_DOMAIN
    except OSError as e:
        print_error(f"I/O error: {e}")
        return EXIT_IO
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
