#!/usr/bin/env python3
"""
Planar target curves

Builds the arclength-parametrized curves a trajectoid has to follow:
graphs of C^2 functions (FunctionSpec -> PlanarCurve), a few parametric
oracle curves (lines, circle arcs), their periodic extensions, and the
signed curvature that the lift consumes.

Conventions:
    - arclength grid s_i = i * ds, i = 0..n, with length = n * ds
    - counterclockwise turning has positive curvature
    - piecewise-C^2 inputs keep their knots; curvature is never
      differenced across a knot
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import CubicSpline, PchipInterpolator

from errors import DegenerateCurve, InvalidInput, NotC1Periodic, NotFunctionLike

logger = logging.getLogger(__name__)

TOL_DERIV = 1e-8          # absolute, on tangent components / slopes
MIN_FUNCTION_SAMPLES = 16
DEFAULT_SAMPLES = 4096
SLOPE_GUARD = 1e12        # sampled |f'| above this is a vertical tangent
MAX_DENSIFY_PASSES = 40
ARCLENGTH_GRID_TOL = 1e-9   # relative spread of the s steps
ARCLENGTH_CHORD_TOL = 1e-3  # relative, chord against s step


@dataclass(frozen=True, eq=False)
class FunctionSpec:
    """Samples of f: [start; start + E] -> R plus endpoint slopes"""

    x: np.ndarray
    y: np.ndarray
    slope_start: float
    slope_end: float
    tag: Optional[str] = None
    knots: Tuple[float, ...] = ()
    func: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, repr=False)
    deriv: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, repr=False)

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if x.ndim != 1 or x.shape != y.shape:
            raise InvalidInput("x and y samples must be 1-d arrays of equal length")
        if len(x) < MIN_FUNCTION_SAMPLES:
            raise InvalidInput(f"need at least {MIN_FUNCTION_SAMPLES} samples", samples=len(x))
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise InvalidInput("function samples must be finite")
        if np.any(np.diff(x) <= 0):
            raise InvalidInput("sample abscissae must be strictly increasing")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

        if self.func is None:
            bc = "not-a-knot"
            if np.isfinite(self.slope_start) and np.isfinite(self.slope_end):
                bc = ((1, float(self.slope_start)), (1, float(self.slope_end)))
            spline = CubicSpline(x, y, bc_type=bc)
            object.__setattr__(self, "func", spline)
            object.__setattr__(self, "deriv", spline.derivative())
        elif self.deriv is None:
            xs = np.linspace(x[0], x[-1], max(len(x), 4097))
            spline = CubicSpline(xs, self.func(xs))
            object.__setattr__(self, "deriv", spline.derivative())

    @classmethod
    def from_callable(cls, func: Callable, start: float, stop: float, samples: int = 256,
                      deriv: Optional[Callable] = None, tag: Optional[str] = None,
                      knots: Sequence[float] = ()) -> "FunctionSpec":
        if not stop > start:
            raise InvalidInput("domain length must be positive", start=start, stop=stop)
        x = np.linspace(start, stop, samples)
        with np.errstate(divide="ignore", invalid="ignore"):
            y = np.asarray(func(x), dtype=float)
            if deriv is not None:
                slopes = np.asarray(deriv(np.array([start, stop])), dtype=float)
            else:
                slopes = np.array([np.nan, np.nan])
        spec = cls(x=x, y=y, slope_start=float(slopes[0]), slope_end=float(slopes[1]),
                   tag=tag, knots=tuple(knots), func=func, deriv=deriv)
        if deriv is None:
            ends = spec.slope(np.array([start, stop]))
            object.__setattr__(spec, "slope_start", float(ends[0]))
            object.__setattr__(spec, "slope_end", float(ends[1]))
        return spec

    @classmethod
    def from_samples(cls, x: Sequence[float], y: Sequence[float],
                     slope_start: Optional[float] = None, slope_end: Optional[float] = None,
                     tag: Optional[str] = None) -> "FunctionSpec":
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        spec = cls(x=x, y=y,
                   slope_start=np.nan if slope_start is None else float(slope_start),
                   slope_end=np.nan if slope_end is None else float(slope_end),
                   tag=tag)
        if slope_start is None or slope_end is None:
            ends = spec.slope(np.array([x[0], x[-1]]))
            object.__setattr__(spec, "slope_start", float(ends[0]))
            object.__setattr__(spec, "slope_end", float(ends[1]))
        return spec

    @property
    def start(self) -> float:
        return float(self.x[0])

    @property
    def stop(self) -> float:
        return float(self.x[-1])

    @property
    def domain_length(self) -> float:
        return self.stop - self.start

    @property
    def periodic_compatible(self) -> bool:
        return bool(np.isfinite(self.slope_start) and np.isfinite(self.slope_end)
                    and abs(self.slope_start - self.slope_end) < TOL_DERIV)

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        with np.errstate(invalid="ignore"):
            return np.asarray(self.func(np.asarray(x, dtype=float)), dtype=float)

    def slope(self, x: np.ndarray) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.asarray(self.deriv(np.asarray(x, dtype=float)), dtype=float)

    def _dense(self, count: int = 8193) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        xs = np.linspace(self.start, self.stop, count)
        return xs, self.evaluate(xs), self.slope(xs)

    @property
    def c1_bound(self) -> float:
        """sup |f'| (the a-priori C^1 bound a)"""
        return float(np.max(np.abs(self._dense()[2])))

    @property
    def c2_bound(self) -> float:
        """max(sup|f|, sup|f'|, sup|f''|), a bound D with |kappa| <= D"""
        xs, ys, slopes = self._dense()
        if not np.all(np.isfinite(slopes)):
            return float("inf")
        second = np.gradient(slopes, xs, edge_order=2)
        return float(max(np.max(np.abs(ys)), np.max(np.abs(slopes)), np.max(np.abs(second))))


@dataclass(frozen=True, eq=False)
class PlanarCurve:
    """Uniform arclength samples of a planar curve"""

    points: np.ndarray
    tangents: np.ndarray
    kappa: np.ndarray
    length: float
    periodic: bool = False
    translation: Optional[np.ndarray] = None
    knot_indices: Tuple[int, ...] = ()
    tag: Optional[str] = None
    c1_bound: Optional[float] = None
    c2_bound: Optional[float] = None
    seam_tol: float = TOL_DERIV

    @property
    def n(self) -> int:
        """number of arclength steps"""
        return len(self.points) - 1

    @property
    def ds(self) -> float:
        return self.length / self.n

    @property
    def s(self) -> np.ndarray:
        return np.linspace(0.0, self.length, self.n + 1)

    @property
    def seam_tangent_gap(self) -> float:
        return float(np.linalg.norm(self.tangents[-1] - self.tangents[0]))


def _angle_rate(angle: np.ndarray, ds: float, knot_indices: Sequence[int] = ()) -> np.ndarray:
    """d(angle)/ds by central differences, one-sided at the ends and at knots"""
    angle = np.unwrap(angle)
    rate = np.zeros_like(angle)
    bounds = [0, *sorted(knot_indices), len(angle) - 1]
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        segment = angle[lo:hi + 1]
        if len(segment) >= 3:
            rate[lo:hi + 1] = np.gradient(segment, ds, edge_order=2)
        elif len(segment) == 2:
            rate[lo:hi + 1] = (segment[1] - segment[0]) / ds
    return rate


def _densify(f: FunctionSpec, xd: np.ndarray, max_chord: float) -> Tuple[np.ndarray, np.ndarray]:
    yd = f.evaluate(xd)
    for _ in range(MAX_DENSIFY_PASSES):
        chords = np.hypot(np.diff(xd), np.diff(yd))
        coarse = chords > max_chord
        if not coarse.any():
            break
        mids = 0.5 * (xd[:-1][coarse] + xd[1:][coarse])
        xd = np.sort(np.concatenate([xd, mids]))
        yd = f.evaluate(xd)
    return xd, yd


def arclength_reparam(f: FunctionSpec, n: int = DEFAULT_SAMPLES) -> PlanarCurve:
    """Graph of f as an arclength-parametrized curve c_f with c_f(0) = (start, f(start))"""
    if n < 2:
        raise InvalidInput("need at least 2 arclength steps", n=n)
    steps = np.diff(f.y) / np.diff(f.x)
    if not np.all(np.isfinite(steps)) or np.max(np.abs(steps)) > SLOPE_GUARD:
        raise NotFunctionLike("sampled slope exceeds the vertical-tangent guard",
                              max_slope=float(np.max(np.abs(steps))))

    xd = np.linspace(f.start, f.stop, 16 * n + 1)
    rough = float(np.sum(np.hypot(np.diff(xd), np.diff(f.evaluate(xd)))))
    xd, yd = _densify(f, xd, rough / n / 8.0)
    if not np.all(np.isfinite(yd)):
        raise InvalidInput("function evaluates to non-finite values on its domain")

    s_dense = np.concatenate([[0.0], np.cumsum(np.hypot(np.diff(xd), np.diff(yd)))])
    total = float(s_dense[-1])
    x_of_s = PchipInterpolator(s_dense, xd)

    s = np.linspace(0.0, total, n + 1)
    x = np.clip(x_of_s(s), f.start, f.stop)
    x[0], x[-1] = f.start, f.stop
    y = f.evaluate(x)
    angle = np.arctan(f.slope(x))
    if not np.all(np.isfinite(angle)):
        raise NotFunctionLike("tangent direction undefined on the graph")

    ds = total / n
    knot_indices = tuple(sorted({
        int(round(np.interp(k, xd, s_dense) / ds)) for k in f.knots
        if f.start < k < f.stop
    } - {0, n}))

    periodic = f.periodic_compatible
    points = np.column_stack([x, y])
    curve = PlanarCurve(
        points=points,
        tangents=np.column_stack([np.cos(angle), np.sin(angle)]),
        kappa=_angle_rate(angle, ds, knot_indices),
        length=total,
        periodic=periodic,
        translation=points[-1] - points[0] if periodic else None,
        knot_indices=knot_indices,
        tag=f.tag,
        c1_bound=f.c1_bound,
        c2_bound=f.c2_bound,
    )
    logger.debug("arclength_reparam: tag=%s n=%d length=%.12g periodic=%s",
                 f.tag, n, total, periodic)
    return curve


def signed_curvature(c: PlanarCurve) -> np.ndarray:
    """Signed curvature recomputed from the sample points alone"""
    if len(c.points) < 3:
        raise InvalidInput("curvature needs at least 3 samples", samples=len(c.points))
    chords = np.linalg.norm(np.diff(c.points, axis=0), axis=1)
    if np.any(chords <= 1e-12 * c.ds):
        raise DegenerateCurve("repeated sample points", index=int(np.argmin(chords)))

    bounds = [0, *sorted(c.knot_indices), c.n]
    angle = np.empty(c.n + 1)
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        seg = c.points[lo:hi + 1]
        if len(seg) >= 3:
            d = np.gradient(seg, c.ds, axis=0, edge_order=2)
        else:
            d = np.repeat(np.diff(seg, axis=0), len(seg), axis=0)
        angle[lo:hi + 1] = np.arctan2(d[:, 1], d[:, 0])
    return _angle_rate(angle, c.ds, c.knot_indices)


def require_c1_periodic(k: PlanarCurve) -> None:
    gap = k.seam_tangent_gap
    if gap >= k.seam_tol:
        raise NotC1Periodic("tangent at the end differs from tangent at the start",
                            tangent_gap=gap, tolerance=k.seam_tol)


def periodic_extend(k: PlanarCurve, copies: int) -> PlanarCurve:
    """Concatenate `copies` translates of k by v = k(end) - k(start)"""
    if copies < 1:
        raise InvalidInput("copies must be a positive integer", copies=copies)
    require_c1_periodic(k)
    if copies == 1:
        return k

    v = k.points[-1] - k.points[0]
    n = k.n
    points = np.concatenate([k.points[:-1] + j * v for j in range(copies)]
                            + [k.points[-1:] + (copies - 1) * v])
    tangents = np.concatenate([np.tile(k.tangents[:-1], (copies, 1)), k.tangents[-1:]])
    kappa = np.concatenate([np.tile(k.kappa[:-1], copies), k.kappa[-1:]])
    knots = set()
    for j in range(copies):
        knots.update(j * n + i for i in k.knot_indices)
        if j > 0:
            knots.add(j * n)

    return PlanarCurve(
        points=points,
        tangents=tangents,
        kappa=kappa,
        length=copies * k.length,
        periodic=True,
        translation=points[-1] - points[0],
        knot_indices=tuple(sorted(knots)),
        tag=k.tag,
        c1_bound=k.c1_bound,
        c2_bound=k.c2_bound,
        seam_tol=k.seam_tol,
    )


# ----------------------------------------------------------------------------
# Parametric oracle curves
# ----------------------------------------------------------------------------

def straight_line(length: float, n: int = 1024, heading: float = 0.0,
                  start: Tuple[float, float] = (0.0, 0.0)) -> PlanarCurve:
    if length <= 0:
        raise InvalidInput("line length must be positive", length=length)
    s = np.linspace(0.0, length, n + 1)
    direction = np.array([np.cos(heading), np.sin(heading)])
    points = np.asarray(start, dtype=float) + np.outer(s, direction)
    return PlanarCurve(
        points=points,
        tangents=np.tile(direction, (n + 1, 1)),
        kappa=np.zeros(n + 1),
        length=float(length),
        periodic=True,
        translation=points[-1] - points[0],
        tag="line",
        c1_bound=0.0,
        c2_bound=0.0,
    )


def circle_arc(radius: float, n: int = 1024, arc_length: Optional[float] = None,
               clockwise: bool = False, heading: float = 0.0,
               start: Tuple[float, float] = (0.0, 0.0)) -> PlanarCurve:
    """Arc of a circle of given radius, full circle by default"""
    if radius <= 0:
        raise InvalidInput("circle radius must be positive", radius=radius)
    length = 2 * np.pi * radius if arc_length is None else float(arc_length)
    s = np.linspace(0.0, length, n + 1)
    turn = -1.0 if clockwise else 1.0
    theta = heading + turn * s / radius
    # center sits on the left (ccw) or right (cw) of the initial heading
    offset = turn * radius * np.array([np.sin(heading), -np.cos(heading)])
    center = np.asarray(start, dtype=float) - offset
    points = center + turn * radius * np.column_stack([np.sin(theta), -np.cos(theta)])
    tangents = np.column_stack([np.cos(theta), np.sin(theta)])
    periodic = bool(np.linalg.norm(tangents[-1] - tangents[0]) < TOL_DERIV)
    return PlanarCurve(
        points=points,
        tangents=tangents,
        kappa=np.full(n + 1, turn / radius),
        length=length,
        periodic=periodic,
        translation=points[-1] - points[0] if periodic else None,
        tag="circle",
    )


# ----------------------------------------------------------------------------
# Named function families (see curve_presets.json)
# ----------------------------------------------------------------------------

def function_from_preset(preset: Dict[str, Any], samples: int = 256) -> FunctionSpec:
    """Build a FunctionSpec from a curve_presets.json entry"""
    kind = preset["kind"]
    params = preset.get("params", {})
    start, stop = preset.get("domain", [0.0, 1.0])

    if kind == "sine_arch":
        amp = float(params["amplitude"])
        period = stop - start
        w = np.pi / period

        def func(x):
            return amp * np.sin(w * (x - start)) ** 2

        def deriv(x):
            return amp * w * np.sin(2 * w * (x - start))

    elif kind == "sine":
        amp = float(params["amplitude"])
        w = 2 * np.pi * float(params.get("frequency", 1.0))

        def func(x):
            return amp * np.sin(w * x)

        def deriv(x):
            return amp * w * np.cos(w * x)

    elif kind == "semicircle":
        rho = float(params.get("radius", 1.0))
        start, stop = -rho, rho

        def func(x):
            return np.sqrt(np.maximum(rho * rho - x * x, 0.0))

        def deriv(x):
            return -x / np.sqrt(rho * rho - x * x)

    elif kind == "flat":
        level = float(params.get("level", 0.0))

        def func(x):
            return np.full_like(np.asarray(x, dtype=float), level)

        def deriv(x):
            return np.zeros_like(np.asarray(x, dtype=float))

    elif kind == "polynomial":
        poly = np.polynomial.Polynomial(params["coefficients"])
        func, deriv = poly, poly.deriv()

    else:
        raise InvalidInput(f"unknown curve preset kind '{kind}'", kind=kind)

    return FunctionSpec.from_callable(func, start, stop, samples=samples, deriv=deriv,
                                      tag=preset.get("name", kind))


# ----------------------------------------------------------------------------
# CSV import / export
# ----------------------------------------------------------------------------

CURVE_CSV_HEADER = "s,x,y,kappa"
TABLE_CSV_HEADER = "x,f"


def write_curve_csv(curve: PlanarCurve, path: Path) -> Path:
    path = Path(path)
    data = np.column_stack([curve.s, curve.points, curve.kappa])
    np.savetxt(path, data, fmt="%.17g", delimiter=",", header=CURVE_CSV_HEADER,
               comments="", newline="\n", encoding="utf-8")
    return path


def read_curve_csv(path: Path, tag: Optional[str] = None) -> PlanarCurve:
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
    if header != CURVE_CSV_HEADER:
        raise InvalidInput(f"{path}: expected header '{CURVE_CSV_HEADER}'", header=header)
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    s, points, kappa = data[:, 0], data[:, 1:3], data[:, 3]
    if len(s) < 3:
        raise InvalidInput(f"{path}: need at least 3 samples")
    steps = np.diff(s)
    ds = float(np.mean(steps))
    if not ds > 0 or np.max(np.abs(steps - ds)) > ARCLENGTH_GRID_TOL * ds:
        raise InvalidInput(f"{path}: s is not a uniform grid", field="curve",
                           spread=float(np.max(np.abs(steps - ds))))
    chords = np.linalg.norm(np.diff(points, axis=0), axis=1)
    if np.max(np.abs(chords - ds)) > ARCLENGTH_CHORD_TOL * ds:
        raise InvalidInput(f"{path}: points are not spaced by arclength s", field="curve",
                           chord_error=float(np.max(np.abs(chords - ds)) / ds))

    d = np.gradient(points, s, axis=0, edge_order=2)
    tangents = d / np.linalg.norm(d, axis=1)[:, None]
    seam_tol = 1e-6
    periodic = bool(np.linalg.norm(tangents[-1] - tangents[0]) < seam_tol)
    return PlanarCurve(
        points=points,
        tangents=tangents,
        kappa=kappa,
        length=float(s[-1] - s[0]),
        periodic=periodic,
        translation=points[-1] - points[0] if periodic else None,
        tag=tag or path.stem,
        c1_bound=graph_slope_bound(tangents),
        c2_bound=float(np.max(np.abs(kappa))),
        seam_tol=seam_tol,
    )


def graph_slope_bound(tangents: np.ndarray) -> Optional[float]:
    """sup |dy/dx| along unit tangents; None when x does not increase strictly (not a graph)"""
    tangents = np.asarray(tangents, dtype=float)
    if np.any(tangents[:, 0] <= 0):
        return None
    return float(np.max(np.abs(tangents[:, 1] / tangents[:, 0])))


def read_function_table(path: Path) -> FunctionSpec:
    """x,f table -> FunctionSpec (slopes from a not-a-knot spline)"""
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
    if header != TABLE_CSV_HEADER:
        raise InvalidInput(f"{path}: expected header '{TABLE_CSV_HEADER}'", header=header)
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return FunctionSpec.from_samples(data[:, 0], data[:, 1], tag=path.stem)


def write_function_table(f: FunctionSpec, path: Path) -> Path:
    path = Path(path)
    np.savetxt(path, np.column_stack([f.x, f.y]), fmt="%.17g", delimiter=",",
               header=TABLE_CSV_HEADER, comments="", newline="\n", encoding="utf-8")
    return path
