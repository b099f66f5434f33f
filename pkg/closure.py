#!/usr/bin/env python3
"""
Closing radius search

For a C^1-periodic planar curve k the lift of one period ends in the frame
M (the monodromy). The lift of n periods is the concatenation of M^j applied
to the one-period piece, so it closes up when M^n = I, i.e. when the
unwrapped rotation angle psi(r) of M equals 2 pi / n. psi is continuous in r
with psi -> 0 for r -> infinity, so a sign change of psi(r) - 2 pi / n on a
radius grid brackets a closing radius (intermediate value argument).
"""

import json
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree

from curves import PlanarCurve, require_c1_periodic
from errors import (
    InvalidInput,
    NoClosureInBracket,
    NoSimpleClosure,
    RequiresSimpleLoop,
    SeamMismatch,
)
from lift import (
    Monodromy,
    SphericalCurve,
    geodesic_distance,
    lift,
    lift_end_frames,
    rotation_angle_axis,
    tol_lift,
)

logger = logging.getLogger(__name__)

ANGLE_TOL = 1e-10
AXIS_STATIONARITY_TOL = 1e-6
SEAM_GAP_REL = 1e-6
SMALL_ANGLE = 1e-6
ADJACENT_EXCLUSION = 7
MAX_BISECTION_STEPS = 200
MAX_SCAN_POINTS = 4096


# ----------------------------------------------------------------------------
# Certificate
# ----------------------------------------------------------------------------

@dataclass
class ClosureCertificate:
    r: float
    n: int
    seam_gap: float
    simple: bool
    b_r: float
    a_r: float
    apex: List[float]
    witnesses: List[Dict[str, Any]] = field(default_factory=list)
    psi: float = float("nan")
    bracket: List[float] = field(default_factory=list)
    bracket_values: List[float] = field(default_factory=list)
    final_bracket: List[float] = field(default_factory=list)
    axis_motion: float = 0.0
    lipschitz: float = float("nan")
    seam_tangent_gap: float = 0.0
    symmetry_residual: float = 0.0
    clearance_bound: float = float("nan")
    b_r_near_tie: bool = False
    samples: int = 0
    source_tag: Optional[str] = None
    c1_bound: Optional[float] = None
    monodromy: Dict[str, Any] = field(default_factory=dict)
    loop: Optional[SphericalCurve] = field(default=None, repr=False, compare=False)
    piece: Optional[SphericalCurve] = field(default=None, repr=False, compare=False)

    @property
    def closed(self) -> bool:
        return self.seam_gap <= SEAM_GAP_REL * self.r

    @property
    def clearance_ok(self) -> bool:
        return bool(self.b_r > self.clearance_bound)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(replace(self, loop=None, piece=None))
        data.pop("loop")
        data.pop("piece")
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ClosureCertificate":
        known = {k: v for k, v in data.items() if k in cls.__dataclass_fields__}
        return cls(**known)


def write_certificate(cert: ClosureCertificate, path: Path) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(cert.to_dict(), fh, indent=2)
        fh.write("\n")
    return path


def read_certificate(path: Path) -> ClosureCertificate:
    with open(path, "r", encoding="utf-8") as fh:
        return ClosureCertificate.from_dict(json.load(fh))


# ----------------------------------------------------------------------------
# Monodromy angle along a radius scan
# ----------------------------------------------------------------------------

def _skew_vector(matrix: np.ndarray) -> np.ndarray:
    return 0.5 * np.array([matrix[2, 1] - matrix[1, 2],
                           matrix[0, 2] - matrix[2, 0],
                           matrix[1, 0] - matrix[0, 1]])


def _wrap(angle: float) -> float:
    return float((angle + np.pi) % (2.0 * np.pi) - np.pi)


def _signed_angle(matrix: np.ndarray, ref_axis: np.ndarray) -> Tuple[float, np.ndarray]:
    """Rotation angle in (-pi; pi] signed against ref_axis, with the matching axis"""
    phi, axis = rotation_angle_axis(matrix)
    if axis is None or phi < SMALL_ANGLE:
        cos_phi = (np.trace(matrix) - 1.0) / 2.0
        return float(np.arctan2(np.dot(_skew_vector(matrix), ref_axis), cos_phi)), ref_axis
    if np.dot(axis, ref_axis) < 0:
        return -phi, -axis
    return phi, axis


def unwrap_monodromy_angles(frames: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Continuous psi and signed axes for frames ordered by increasing radius.

    psi at the largest radius is taken in [0; pi]; smaller radii follow by
    axis continuity.
    """
    count = len(frames)
    psi = np.empty(count)
    axes = np.empty((count, 3))
    phi, axis = rotation_angle_axis(frames[-1])
    psi[-1] = phi
    axes[-1] = np.array([0.0, 0.0, 1.0]) if axis is None else axis
    for i in range(count - 2, -1, -1):
        signed, axes[i] = _signed_angle(frames[i], axes[i + 1])
        psi[i] = psi[i + 1] + _wrap(signed - psi[i + 1])
    return psi, axes


def scan_monodromy_angle(k: PlanarCurve, radii: Sequence[float]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(radii ascending, psi, axes)"""
    require_c1_periodic(k)
    radii = np.sort(np.asarray(radii, dtype=float))
    psi, axes = unwrap_monodromy_angles(lift_end_frames(k, radii))
    return radii, psi, axes


def _scan(k: PlanarCurve, lo: float, hi: float, points: int):
    while True:
        radii, psi, axes = scan_monodromy_angle(k, np.geomspace(lo, hi, points))
        step = float(np.max(np.abs(np.diff(psi)))) if points > 1 else 0.0
        if step < np.pi / 2 or points >= MAX_SCAN_POINTS:
            return radii, psi, axes
        logger.debug("psi jumps by %.3f on a %d-point grid, refining", step, points)
        points *= 2


# ----------------------------------------------------------------------------
# Bisection of all brackets at once
# ----------------------------------------------------------------------------

@dataclass
class _Bracket:
    n: int
    target: float
    r_lo: float
    r_hi: float
    g_lo: float
    g_hi: float
    psi_lo: float
    axis_lo: np.ndarray
    axis_hi: np.ndarray
    grid: Tuple[float, float] = (0.0, 0.0)
    grid_values: Tuple[float, float] = (0.0, 0.0)
    root: Optional[float] = None
    psi_root: float = float("nan")


def _find_brackets(radii: np.ndarray, psi: np.ndarray, axes: np.ndarray, n_max: int) -> List[_Bracket]:
    brackets = []
    for n in range(1, n_max + 1):
        for sign in (1.0, -1.0):
            target = sign * 2.0 * np.pi / n
            g = psi - target
            for i in np.nonzero(g[:-1] * g[1:] <= 0)[0]:
                brackets.append(_Bracket(
                    n=n, target=target,
                    r_lo=float(radii[i]), r_hi=float(radii[i + 1]),
                    g_lo=float(g[i]), g_hi=float(g[i + 1]),
                    psi_lo=float(psi[i]), axis_lo=axes[i].copy(), axis_hi=axes[i + 1].copy(),
                    grid=(float(radii[i]), float(radii[i + 1])),
                    grid_values=(float(g[i]), float(g[i + 1])),
                ))
    return brackets


def _bisect_all(k: PlanarCurve, brackets: List[_Bracket]) -> None:
    for b in brackets:
        if abs(b.g_lo) <= ANGLE_TOL:
            b.root, b.psi_root = b.r_lo, b.target + b.g_lo
        elif abs(b.g_hi) <= ANGLE_TOL:
            b.root, b.psi_root = b.r_hi, b.target + b.g_hi

    for step in range(MAX_BISECTION_STEPS):
        active = [b for b in brackets if b.root is None]
        if not active:
            break
        mids = np.array([0.5 * (b.r_lo + b.r_hi) for b in active])
        frames = lift_end_frames(k, mids)
        for b, mid, frame in zip(active, mids, frames):
            signed, axis = _signed_angle(frame, b.axis_lo)
            psi_mid = b.psi_lo + _wrap(signed - b.psi_lo)
            g = psi_mid - b.target
            if abs(g) <= ANGLE_TOL or (b.r_hi - b.r_lo) <= 4e-16 * mid:
                b.root, b.psi_root = float(mid), float(psi_mid)
            elif np.sign(g) == np.sign(b.g_lo):
                b.r_lo, b.g_lo, b.psi_lo, b.axis_lo = float(mid), float(g), float(psi_mid), axis
            else:
                b.r_hi, b.g_hi, b.axis_hi = float(mid), float(g), axis
    for b in brackets:
        if b.root is None:
            logger.warning("n=%d: bisection stopped at width %.3e", b.n, b.r_hi - b.r_lo)
            b.root, b.psi_root = 0.5 * (b.r_lo + b.r_hi), b.target + b.g_lo
    logger.debug("bisection finished %d brackets after %d rounds", len(brackets), step + 1)


def _axis_motion(b: _Bracket) -> float:
    cos = np.clip(np.dot(b.axis_lo, b.axis_hi), -1.0, 1.0)
    return float(np.arccos(cos))


# ----------------------------------------------------------------------------
# Loop assembly and geometry
# ----------------------------------------------------------------------------

def concatenate_rotated(loop_piece: SphericalCurve, M: Monodromy, n: int) -> SphericalCurve:
    """Concatenate M^j applied to the piece for j = 0..n-1"""
    if n < 1:
        raise InvalidInput("copy count must be positive", n=n)
    r = loop_piece.r
    if n == 1:
        return replace(loop_piece, closed=loop_piece.seam_gap <= SEAM_GAP_REL * r)

    tol = 10.0 * tol_lift(loop_piece.kappa_g)
    mismatch = float(np.max(np.abs(loop_piece.frame(-1) - M.matrix @ loop_piece.frame(0))))
    if mismatch > tol:
        raise SeamMismatch("piece end frame is not M applied to its start frame",
                           mismatch=mismatch, tolerance=tol)

    m = loop_piece.n
    points, tangents, kappa = [], [], []
    power = np.eye(3)
    for _ in range(n):
        points.append(loop_piece.points[:-1] @ power.T)
        tangents.append(loop_piece.tangents[:-1] @ power.T)
        kappa.append(loop_piece.kappa_g[:-1])
        last = power
        power = M.matrix @ power
    points.append(loop_piece.points[-1:] @ last.T)
    tangents.append(loop_piece.tangents[-1:] @ last.T)
    kappa.append(loop_piece.kappa_g[-1:])

    knots = set(range(m, n * m, m))
    for j in range(n):
        knots.update(j * m + i for i in loop_piece.knot_indices)

    loop = SphericalCurve(
        r=r,
        points=np.concatenate(points),
        tangents=np.concatenate(tangents),
        kappa_g=np.concatenate(kappa),
        ds=loop_piece.ds,
        source_tag=loop_piece.source_tag,
        knot_indices=tuple(sorted(knots)),
        curvature_residual=loop_piece.curvature_residual,
    )
    return replace(loop, closed=loop.seam_gap <= SEAM_GAP_REL * r)


def _distinct_points(loop: SphericalCurve) -> np.ndarray:
    return loop.points[:-1] if loop.closed else loop.points


def is_simple(loop: SphericalCurve, tol: Optional[float] = None) -> Tuple[bool, Optional[Dict[str, Any]]]:
    """No two non-adjacent samples within tol (3 ds by default); witness is the first pair"""
    tol = 3.0 * loop.ds if tol is None else float(tol)
    points = _distinct_points(loop)
    count = len(points)
    pairs = cKDTree(points).query_pairs(tol, output_type="ndarray")
    if len(pairs):
        gap = np.abs(pairs[:, 1] - pairs[:, 0])
        if loop.closed:
            gap = np.minimum(gap, count - gap)
        pairs = pairs[gap > ADJACENT_EXCLUSION]
    if not len(pairs):
        return True, None

    order = np.lexsort((pairs[:, 1], pairs[:, 0]))
    i, j = (int(v) for v in pairs[order[0]])
    mid = 0.5 * (points[i] + points[j])
    mid *= loop.r / np.linalg.norm(mid)
    witness = {
        "arcs": [i, j],
        "point": [float(v) for v in mid],
        "distance": float(np.linalg.norm(points[i] - points[j])),
    }
    return False, witness


def enclosed_area(loop: SphericalCurve) -> float:
    """Area of the smaller region bounded by a simple closed loop (Gauss-Bonnet)"""
    simple, witness = is_simple(loop)
    if not loop.closed or not simple:
        raise RequiresSimpleLoop("enclosed area needs a simple closed loop",
                                 closed=loop.closed, witness=witness)
    r = loop.r
    points = loop.points[:-1]
    tangents = loop.tangents[:-1]
    # cyclic 5-point derivative of the tangent across all seams
    dt = (np.roll(tangents, 2, axis=0) - 8.0 * np.roll(tangents, 1, axis=0)
          + 8.0 * np.roll(tangents, -1, axis=0) - np.roll(tangents, -2, axis=0)) / (12.0 * loop.ds)
    kappa_g = np.sum(dt * np.cross(points, tangents) / r, axis=1)
    turning = float(np.sum(kappa_g) * loop.ds)

    total = 4.0 * np.pi * r * r
    left = (r * r * (2.0 * np.pi - turning)) % total
    return float(min(left, total - left))


def polygon_area(points: np.ndarray, r: float) -> float:
    """Smaller region bounded by a closed spherical polygon, by summed triangle excess"""
    points = np.asarray(points, dtype=float)
    if np.allclose(points[0], points[-1]):
        points = points[:-1]
    unit = points / np.linalg.norm(points, axis=1, keepdims=True)

    candidates = np.vstack([np.eye(3), -np.eye(3)])
    clearance = [np.min(np.linalg.norm(unit - c, axis=1)) for c in candidates]
    ref = candidates[int(np.argmax(clearance))]

    b = unit
    c = np.roll(unit, -1, axis=0)
    numer = np.sum(ref * np.cross(b, c), axis=1)
    denom = 1.0 + b @ ref + np.sum(b * c, axis=1) + c @ ref
    excess = float(np.sum(2.0 * np.arctan2(numer, denom)))

    total = 4.0 * np.pi
    left = excess % total
    return float(r * r * min(left, total - left))


def apex_angle_from_sides(F: float, b: float, r: float) -> float:
    """Apex angle of the isosceles spherical triangle with legs b and base F"""
    sb = np.sin(b / r)
    cos_a = (np.cos(F / r) - np.cos(b / r) ** 2) / (sb * sb)
    return float(np.arccos(np.clip(cos_a, -1.0, 1.0)))


def pick_copy_count(a: float) -> int:
    """Smallest n with 2 pi / n <= a; then also 2 pi / n >= a / 3"""
    if not 0.0 < a <= np.pi:
        raise InvalidInput("apex angle must lie in (0; pi]", a=a)
    n = int(np.ceil(2.0 * np.pi / a - 1e-12))
    return max(n, 1)


def symmetry_residual(loop: SphericalCurve, M: np.ndarray, n: int) -> float:
    """max | M copy_j - copy_{j+1 mod n} | over the copies of a closed n-copy loop"""
    m = loop.n // n
    copies = [loop.points[j * m:(j + 1) * m] for j in range(n)]
    worst = 0.0
    for j in range(n):
        moved = copies[j] @ M.T
        worst = max(worst, float(np.max(np.linalg.norm(moved - copies[(j + 1) % n], axis=1))))
    return worst


def apex_and_clearance(piece: SphericalCurve, M: Monodromy) -> Tuple[np.ndarray, float, bool]:
    """Fixed point p of M on the sphere nearest the piece and min distance b_r from p to it"""
    axis = np.array([0.0, 0.0, 1.0]) if M.axis is None else M.axis
    best = None
    # +z first so an exact tie keeps the upper fixed point
    for candidate in sorted((axis, -axis), key=lambda a: -a[2]):
        apex = piece.r * candidate
        dist = geodesic_distance(np.broadcast_to(apex, piece.points.shape), piece.points, piece.r)
        if best is None or np.min(dist) < np.min(best[1]):
            best = apex, dist
    apex, dist = best
    b_r = float(np.min(dist))
    near = np.nonzero(dist <= b_r + 1e-9)[0]
    near_tie = bool(len(near) > 1 and np.max(np.diff(near)) > 1)
    return apex, b_r, near_tie


# ----------------------------------------------------------------------------
# Search
# ----------------------------------------------------------------------------

def find_closing_radius(k: PlanarCurve, r_bracket: Tuple[float, float], n_max: int = 64,
                        grid: int = 96) -> ClosureCertificate:
    """Largest radius (then smallest n) whose n-copy lift loop is simple and closed"""
    require_c1_periodic(k)
    lo, hi = (float(v) for v in r_bracket)
    if not (0.0 < lo < hi and np.isfinite(hi)):
        raise InvalidInput("radius bracket must satisfy 0 < lo < hi", bracket=[lo, hi])
    if n_max < 1:
        raise InvalidInput("n_max must be positive", n_max=n_max)

    radii, psi, axes = _scan(k, lo, hi, grid)
    lipschitz = float(np.max(np.abs(np.diff(psi)) / np.diff(radii))) if len(radii) > 1 else 0.0
    logger.info("scanned %d radii on [%.6g, %.6g]: psi in [%.6g, %.6g]",
                len(radii), lo, hi, psi.min(), psi.max())

    brackets = _find_brackets(radii, psi, axes, n_max)
    if not brackets:
        raise NoClosureInBracket("psi(r) never reaches 2 pi / n in the bracket",
                                 psi_min=float(psi.min()), psi_max=float(psi.max()),
                                 bracket=[lo, hi], n_max=n_max)
    _bisect_all(k, brackets)

    candidates = []
    for b in brackets:
        motion = _axis_motion(b)
        if b.n > 1 and motion >= AXIS_STATIONARITY_TOL:
            logger.warning("n=%d r=%.12g rejected: axis moved %.3e rad", b.n, b.root, motion)
            continue
        candidates.append((b, motion))
    candidates.sort(key=lambda item: (-item[0].root, item[0].n))

    witnesses = []
    closed_any = False
    for b, motion in candidates:
        piece = lift(k, b.root)
        M = Monodromy.from_matrix(piece.frame(-1), k.length)
        loop = concatenate_rotated(piece, M, b.n)
        if not loop.closed:
            logger.debug("n=%d r=%.12g: seam gap %.3e too large", b.n, b.root, loop.seam_gap)
            continue
        closed_any = True
        simple, witness = is_simple(loop)
        if not simple:
            witnesses.append({"r": b.root, "n": b.n, **witness})
            logger.debug("n=%d r=%.12g: loop not simple at %s", b.n, b.root, witness["arcs"])
            continue

        apex, b_r, near_tie = apex_and_clearance(piece, M)
        D = k.c2_bound if k.c2_bound is not None else float(np.max(np.abs(k.kappa)))
        bound = float(b.root * np.arctan(1.0 / (b.root * D))) if D > 0 else float("inf")
        tangent_gap = float(np.linalg.norm(loop.tangents[-1] - loop.tangents[0]))
        cert = ClosureCertificate(
            r=float(b.root),
            n=int(b.n),
            seam_gap=float(loop.seam_gap),
            simple=True,
            b_r=b_r,
            a_r=float(M.angle),
            apex=[float(v) for v in apex],
            witnesses=witnesses,
            psi=float(b.psi_root),
            bracket=[float(b.grid[0]), float(b.grid[1])],
            bracket_values=[float(b.grid_values[0]), float(b.grid_values[1])],
            final_bracket=[float(b.r_lo), float(b.r_hi)],
            axis_motion=motion,
            lipschitz=lipschitz,
            seam_tangent_gap=tangent_gap,
            symmetry_residual=symmetry_residual(loop, M.matrix, b.n),
            clearance_bound=bound,
            b_r_near_tie=near_tie,
            samples=k.n,
            source_tag=k.tag,
            c1_bound=k.c1_bound,
            monodromy=M.to_dict(),
            loop=loop,
            piece=piece,
        )
        if not cert.clearance_ok:
            logger.warning("clearance b_r=%.6g below r arctan(1/(rD))=%.6g", b_r, bound)
        logger.info("closing radius r=%.12g with n=%d copies (seam gap %.3e)",
                    cert.r, cert.n, cert.seam_gap)
        return cert

    if not closed_any:
        raise NoClosureInBracket("no bracketed radius produced a closed loop",
                                 psi_min=float(psi.min()), psi_max=float(psi.max()),
                                 bracket=[lo, hi], n_max=n_max)
    raise NoSimpleClosure("every closing radius gives a self-intersecting loop",
                          witnesses=witnesses)


def loop_for_certificate(k: PlanarCurve, cert: ClosureCertificate) -> SphericalCurve:
    """Rebuild the closed loop of a certificate read back from JSON"""
    piece = lift(k, cert.r)
    M = Monodromy.from_matrix(piece.frame(-1), k.length)
    return concatenate_rotated(piece, M, cert.n)
