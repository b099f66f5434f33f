#!/usr/bin/env python3
"""
Spherical r-lift of a planar curve

A ball of radius r rolling along a planar curve c without slipping or
pivoting traces a curve on its own surface with the same arclength and the
same signed (geodesic) curvature. lift() integrates that curve from the
standard frame x(0) = (r,0,0), x'(0) = (0,1,0):

    x'' = kappa(s) * (x cross x') / r - x / r^2

The frame F = [x/r, T, x/r cross T] moves with body angular velocity
(kappa, 0, 1/r), so the frame after one period is the monodromy rotation.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np

from curves import DEFAULT_SAMPLES, FunctionSpec, PlanarCurve, arclength_reparam, require_c1_periodic
from errors import InvalidInput, InvalidRadius, ResolutionExceeded

logger = logging.getLogger(__name__)

MAX_LIFT_STEPS = 1 << 22
MAX_STEP_OVER_RADIUS = 0.25
AXIS_EPS = 1e-12


def tol_lift(kappa: np.ndarray) -> float:
    return 1e-7 * max(1.0, float(np.max(np.abs(kappa))))


@dataclass(frozen=True, eq=False)
class SphericalCurve:
    """Arclength samples of a curve on the sphere of radius r"""

    r: float
    points: np.ndarray
    tangents: np.ndarray
    kappa_g: np.ndarray
    ds: float
    source_tag: Optional[str] = None
    knot_indices: Tuple[int, ...] = ()
    closed: bool = False
    curvature_residual: float = float("nan")

    @property
    def n(self) -> int:
        return len(self.points) - 1

    @property
    def length(self) -> float:
        return self.n * self.ds

    @property
    def s(self) -> np.ndarray:
        return np.linspace(0.0, self.length, self.n + 1)

    @property
    def normals(self) -> np.ndarray:
        """left normals x cross T / r"""
        return np.cross(self.points, self.tangents) / self.r

    def frame(self, i: int) -> np.ndarray:
        e1 = self.points[i] / self.r
        e2 = self.tangents[i]
        return np.column_stack([e1, e2, np.cross(e1, e2)])

    @property
    def seam_gap(self) -> float:
        return geodesic_distance(self.points[0], self.points[-1], self.r)


@dataclass(frozen=True, eq=False)
class Monodromy:
    """Rotation carrying the start frame of one period to its end frame"""

    matrix: np.ndarray
    angle: float
    axis: Optional[np.ndarray]
    period: float

    @classmethod
    def from_matrix(cls, matrix: np.ndarray, period: float) -> "Monodromy":
        matrix = np.asarray(matrix, dtype=float)
        angle, axis = rotation_angle_axis(matrix)
        return cls(matrix=matrix, angle=angle, axis=axis, period=float(period))

    def power(self, j: int) -> np.ndarray:
        return np.linalg.matrix_power(self.matrix, j)

    def to_dict(self) -> Dict:
        return {
            "matrix": [float(v) for v in self.matrix.ravel()],
            "angle": float(self.angle),
            "axis": None if self.axis is None else [float(v) for v in self.axis],
            "period": float(self.period),
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "Monodromy":
        axis = data.get("axis")
        return cls(matrix=np.array(data["matrix"], dtype=float).reshape(3, 3),
                   angle=float(data["angle"]),
                   axis=None if axis is None else np.array(axis, dtype=float),
                   period=float(data.get("period", float("nan"))))


def rotation_angle_axis(matrix: np.ndarray) -> Tuple[float, Optional[np.ndarray]]:
    """Principal angle in [0; pi] and unit axis (None for the identity)"""
    cos_phi = float(np.clip((np.trace(matrix) - 1.0) / 2.0, -1.0, 1.0))
    phi = float(np.arccos(cos_phi))
    if phi <= AXIS_EPS:
        return phi, None
    # symmetric part is cos(phi) I + (1 - cos(phi)) a a^T, skew part gives the sign
    outer = 0.5 * (matrix + matrix.T) - cos_phi * np.eye(3)
    j = int(np.argmax(np.diag(outer)))
    axis = outer[:, j] / np.linalg.norm(outer[:, j])
    skew = 0.5 * np.array([matrix[2, 1] - matrix[1, 2],
                           matrix[0, 2] - matrix[2, 0],
                           matrix[1, 0] - matrix[0, 1]])
    if np.dot(skew, axis) < 0:
        axis = -axis
    return phi, axis


def geodesic_distance(a: np.ndarray, b: np.ndarray, r: float) -> Union[float, np.ndarray]:
    """Great-circle distance between points of the sphere of radius r"""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    cross = np.linalg.norm(np.cross(a, b), axis=-1)
    dot = np.sum(a * b, axis=-1)
    return r * np.arctan2(cross, dot)


# ----------------------------------------------------------------------------
# Integration
# ----------------------------------------------------------------------------

def _midpoint_kappa(kappa: np.ndarray, knot_indices: Sequence[int]) -> np.ndarray:
    """kappa at s_i + ds/2: cubic inside a knot segment, linear next to its ends"""
    n = len(kappa) - 1
    mid = 0.5 * (kappa[:-1] + kappa[1:])
    bounds = [0, *sorted(knot_indices), n]
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        i = np.arange(lo + 1, hi - 1)
        if len(i):
            mid[i] = (-kappa[i - 1] + 9.0 * kappa[i] + 9.0 * kappa[i + 1] - kappa[i + 2]) / 16.0
    return mid


def _check_resolution(n: int, ds: float, radii: np.ndarray) -> None:
    if np.any(~np.isfinite(radii)) or np.any(radii <= 0):
        raise InvalidRadius("lift radius must be positive", radii=[float(v) for v in radii])
    if n > MAX_LIFT_STEPS:
        raise ResolutionExceeded("too many lift steps", steps=n, limit=MAX_LIFT_STEPS)
    if ds > MAX_STEP_OVER_RADIUS * float(np.min(radii)):
        raise ResolutionExceeded("arclength step too coarse for the radius",
                                 ds=ds, radius=float(np.min(radii)))


def _integrate(kappa: np.ndarray, knot_indices: Sequence[int], ds: float,
               radii: np.ndarray, keep_path: bool = False):
    """RK4 over a batch of radii; returns end (x, T) or full paths"""
    radii = np.atleast_1d(np.asarray(radii, dtype=float))
    n = len(kappa) - 1
    _check_resolution(n, ds, radii)

    kappa = np.asarray(kappa, dtype=float)
    k_mid = _midpoint_kappa(kappa, knot_indices)
    batch = len(radii)
    r = radii[:, None]
    inv_r2 = 1.0 / (r * r)

    x = np.zeros((batch, 3))
    x[:, 0] = radii
    t = np.zeros((batch, 3))
    t[:, 1] = 1.0
    if keep_path:
        xs = np.empty((batch, n + 1, 3))
        ts = np.empty((batch, n + 1, 3))
        xs[:, 0], ts[:, 0] = x, t

    def accel(xv, tv, k):
        return k * np.cross(xv, tv) / r - xv * inv_r2

    h = ds
    for i in range(n):
        k0, km, k1 = kappa[i], k_mid[i], kappa[i + 1]
        a1 = accel(x, t, k0)
        t2 = t + 0.5 * h * a1
        a2 = accel(x + 0.5 * h * t, t2, km)
        t3 = t + 0.5 * h * a2
        a3 = accel(x + 0.5 * h * t2, t3, km)
        t4 = t + h * a3
        a4 = accel(x + h * t3, t4, k1)
        x = x + (h / 6.0) * (t + 2.0 * t2 + 2.0 * t3 + t4)
        t = t + (h / 6.0) * (a1 + 2.0 * a2 + 2.0 * a3 + a4)

        # back onto |x| = r, <x,T> = 0, |T| = 1
        x *= r / np.linalg.norm(x, axis=1, keepdims=True)
        t -= np.sum(t * x, axis=1, keepdims=True) * x * inv_r2
        t /= np.linalg.norm(t, axis=1, keepdims=True)

        if keep_path:
            xs[:, i + 1], ts[:, i + 1] = x, t

    if keep_path:
        return xs, ts
    return x, t


def _end_frames(x: np.ndarray, t: np.ndarray, radii: np.ndarray) -> np.ndarray:
    e1 = x / np.asarray(radii, dtype=float)[:, None]
    return np.stack([e1, t, np.cross(e1, t)], axis=2)


def lift_end_frames(c: PlanarCurve, radii: Sequence[float]) -> np.ndarray:
    """Frames [x/r, T, x/r cross T] after one traversal of c, shape (B, 3, 3)"""
    radii = np.atleast_1d(np.asarray(radii, dtype=float))
    x, t = _integrate(c.kappa, c.knot_indices, c.ds, radii)
    return _end_frames(x, t, radii)


def geodesic_curvature(points: np.ndarray, tangents: np.ndarray, r: float, ds: float) -> np.ndarray:
    """<dT/ds, x cross T / r> with 5-point differences inside, 2nd order at the ends"""
    dt = np.gradient(tangents, ds, axis=0, edge_order=2)
    if len(tangents) >= 5:
        dt[2:-2] = (tangents[:-4] - 8.0 * tangents[1:-3]
                    + 8.0 * tangents[3:-1] - tangents[4:]) / (12.0 * ds)
    normals = np.cross(points, tangents) / r
    return np.sum(dt * normals, axis=1)


def _residual_mask(n: int, knot_indices: Sequence[int]) -> np.ndarray:
    mask = np.ones(n + 1, dtype=bool)
    mask[:2] = False
    mask[-2:] = False
    for k in knot_indices:
        mask[max(k - 2, 0):k + 3] = False
    return mask


def lift(c: PlanarCurve, r: float) -> SphericalCurve:
    """The r-lift of c on the same arclength grid"""
    r = float(r)
    xs, ts = _integrate(c.kappa, c.knot_indices, c.ds, np.array([r]), keep_path=True)
    points, tangents = xs[0], ts[0]
    kappa_g = geodesic_curvature(points, tangents, r, c.ds)

    mask = _residual_mask(c.n, c.knot_indices)
    residual = float(np.max(np.abs(kappa_g[mask] - c.kappa[mask]))) if mask.any() else 0.0
    if residual > tol_lift(c.kappa):
        logger.warning("lift r=%.6g: geodesic curvature residual %.3e above tolerance %.3e",
                       r, residual, tol_lift(c.kappa))
    else:
        logger.debug("lift r=%.6g: n=%d residual=%.3e", r, c.n, residual)

    return SphericalCurve(
        r=r,
        points=points,
        tangents=tangents,
        kappa_g=kappa_g,
        ds=c.ds,
        source_tag=c.tag,
        knot_indices=c.knot_indices,
        curvature_residual=residual,
    )


def _as_curve(f: Union[FunctionSpec, PlanarCurve], n: int) -> PlanarCurve:
    if isinstance(f, FunctionSpec):
        return arclength_reparam(f, n)
    return f


def closure_defect(f: Union[FunctionSpec, PlanarCurve], r: float, n: int = DEFAULT_SAMPLES) -> float:
    """F_r: geodesic distance between the lift's end point and its start"""
    c = _as_curve(f, n)
    x, _ = _integrate(c.kappa, c.knot_indices, c.ds, np.array([float(r)]))
    start = np.array([float(r), 0.0, 0.0])
    return float(geodesic_distance(start, x[0], float(r)))


def closure_defects(c: PlanarCurve, radii: Sequence[float]) -> np.ndarray:
    radii = np.atleast_1d(np.asarray(radii, dtype=float))
    x, _ = _integrate(c.kappa, c.knot_indices, c.ds, radii)
    start = np.zeros_like(x)
    start[:, 0] = radii
    return geodesic_distance(start, x, radii)


def monodromy(c: PlanarCurve, r: float) -> Monodromy:
    require_c1_periodic(c)
    frame = lift_end_frames(c, [r])[0]
    return Monodromy.from_matrix(frame, c.length)


# ----------------------------------------------------------------------------
# Closed forms
# ----------------------------------------------------------------------------

def circle_lift_closed_form(r: float, R: float) -> Tuple[float, float]:
    """(latitude arctan(r/R), loop length 2 pi / sqrt(1/r^2 + 1/R^2))"""
    if not r > 0:
        raise InvalidRadius("ball radius must be positive", r=r)
    if not R > 0:
        raise InvalidInput("circle radius must be positive", R=R)
    latitude = float(np.arctan2(r, R))
    loop_length = float(2.0 * np.pi / np.sqrt(1.0 / r ** 2 + 1.0 / R ** 2))
    return latitude, loop_length


def injectivity_threshold_constant() -> float:
    """a = pi sqrt((sqrt(17) - 1) / 2); for r < length / a a half-circle graph lifts non-injectively"""
    a = float(np.pi * np.sqrt((np.sqrt(17.0) - 1.0) / 2.0))
    residual = threshold_quadratic_residual(a)
    if abs(residual) > 1e-12:
        logger.warning("threshold constant quadratic residual %.3e", residual)
    return a


def threshold_quadratic_residual(a: float) -> float:
    """A^2 + A - 4 for A = a^2 / pi^2 (the value of l^2 / (pi^2 r^2) at r = l / a)"""
    A = a * a / (np.pi * np.pi)
    return float(A * A + A - 4.0)


def sigma(r: float, length: float) -> float:
    """2 pi r / sqrt(1 + l^2 / (pi^2 r^2)); its fixed point sigma(l / a) = l defines a"""
    if not r > 0:
        raise InvalidRadius("ball radius must be positive", r=r)
    return float(2.0 * np.pi * r / np.sqrt(1.0 + length ** 2 / (np.pi ** 2 * r ** 2)))


def colatitude_to_latitude(colatitude: float) -> float:
    return float(np.pi / 2.0 - colatitude)


def latitude_circle_length(r: float, angle: float, convention: str = "latitude") -> float:
    """Length of a constant-latitude circle; 'latitude' uses 2 pi r cos, 'colatitude' 2 pi r sin"""
    if convention == "latitude":
        return float(2.0 * np.pi * r * np.cos(angle))
    if convention == "colatitude":
        return float(2.0 * np.pi * r * np.sin(angle))
    raise InvalidInput(f"unknown angle convention '{convention}'", convention=convention)


def latitude_for_curvature(r: float, kappa: float) -> float:
    """Latitude of the circle of geodesic curvature kappa: tan(theta) / r = kappa"""
    return float(np.arctan(kappa * r))


# ----------------------------------------------------------------------------
# Measurements on sampled lifts
# ----------------------------------------------------------------------------

def loop_length_about(curve: SphericalCurve, axis: np.ndarray) -> float:
    """Source arclength per revolution about axis, from a least-squares azimuth slope"""
    axis = np.asarray(axis, dtype=float) / np.linalg.norm(axis)
    helper = np.array([1.0, 0.0, 0.0]) if abs(axis[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(axis, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(axis, e1)
    azimuth = np.unwrap(np.arctan2(curve.points @ e2, curve.points @ e1))
    slope = np.polyfit(curve.s, azimuth, 1)[0]
    return float(2.0 * np.pi / abs(slope))


def tangent_plane_embedding(c: PlanarCurve, r: float) -> np.ndarray:
    """c placed in the tangent plane at (r,0,0) the way the lift starts: heading -> y, left -> z"""
    heading = np.arctan2(c.tangents[0, 1], c.tangents[0, 0])
    rel = c.points - c.points[0]
    cos_h, sin_h = np.cos(heading), np.sin(heading)
    along = rel[:, 0] * cos_h + rel[:, 1] * sin_h
    left = -rel[:, 0] * sin_h + rel[:, 1] * cos_h
    return np.column_stack([np.full(len(rel), float(r)), along, left])


def flat_limit_deviation(c: PlanarCurve, r: float) -> float:
    return float(np.max(np.linalg.norm(lift(c, r).points - tangent_plane_embedding(c, r), axis=1)))


def contact_trace(curve: SphericalCurve) -> SphericalCurve:
    """Mirror z -> -z: the loop a body must carry to roll along the source curve.

    lift() measures turning against x cross T (seen from outside the ball);
    the contact point of a rolling ball turns as seen from inside.
    """
    flip = np.array([1.0, 1.0, -1.0])
    return SphericalCurve(
        r=curve.r,
        points=curve.points * flip,
        tangents=curve.tangents * flip,
        kappa_g=-curve.kappa_g,
        ds=curve.ds,
        source_tag=curve.source_tag,
        knot_indices=curve.knot_indices,
        closed=curve.closed,
        curvature_residual=curve.curvature_residual,
    )


# ----------------------------------------------------------------------------
# CSV import / export
# ----------------------------------------------------------------------------

SPHERICAL_CSV_HEADER = "s,x,y,z,tx,ty,tz,kappa_g"


def write_spherical_csv(curve: SphericalCurve, path: Path) -> Path:
    path = Path(path)
    data = np.column_stack([curve.s, curve.points, curve.tangents, curve.kappa_g])
    np.savetxt(path, data, fmt="%.17g", delimiter=",", header=SPHERICAL_CSV_HEADER,
               comments="", newline="\n", encoding="utf-8")
    return path


def read_spherical_csv(path: Path, r: Optional[float] = None, closed: bool = False) -> SphericalCurve:
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
    if header != SPHERICAL_CSV_HEADER:
        raise InvalidInput(f"{path}: unexpected header", header=header)
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    points = data[:, 1:4]
    radius = float(np.mean(np.linalg.norm(points, axis=1))) if r is None else float(r)
    return SphericalCurve(
        r=radius,
        points=points,
        tangents=data[:, 4:7],
        kappa_g=data[:, 7],
        ds=float(data[-1, 0] - data[0, 0]) / (len(data) - 1),
        source_tag=path.stem,
        closed=closed,
    )
