#!/usr/bin/env python3
"""
Grooved star-shaped bodies

A closed simple loop on the sphere is turned into a solid that rolls along it:
a ball of radius R = r_loop + h with a shallow groove of depth h whose floor
is a plane (in every cross-section) touching the sphere of radius r_loop
along the loop. The boundary in direction u sits at R * S(u) * u.

Groove profile across the loop, psi = angular distance from the loop:

    P(psi) = (1 - h/R) / cos(psi)        floor plane
    S(psi) = smooth_min(P(psi), 1, k)    C^1, never above P or 1

The blend width k is chosen so the floor stays exactly planar out to
psi_w - m (psi_w = arccos(1 - h/R), m = 0.2 b/R); its half-width there is
delta = (R - h) tan(psi_w - m).
"""

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Optional, Tuple, Union

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq
from scipy.spatial import cKDTree

from errors import GrooveOverlap, InvalidInput, MeshInvalid, ResolutionExceeded
from lift import SphericalCurve

logger = logging.getLogger(__name__)

MARGIN_FRACTION = 0.2
CROSS_SECTION_VERTICES = 16
MIN_VERTICES_ACROSS = 4
STL_HEADER = b"trajectoid-forge v1"

STL_DTYPE = np.dtype([
    ("normal", "<f4", (3,)),
    ("vertices", "<f4", (3, 3)),
    ("attr", "<u2"),
])


def cap_volume(h: float, r: float) -> float:
    """v(h) = pi h^2 (3r - h) / 3"""
    if not 0.0 <= h <= 2.0 * r:
        raise InvalidInput("cap height must lie in [0; 2r]", h=h, r=r)
    return math.pi * h * h * (3.0 * r - h) / 3.0


# ----------------------------------------------------------------------------
# Groove specification
# ----------------------------------------------------------------------------

def _flat_half_width(radius: float, h: float, b: float) -> float:
    psi_w = math.acos(1.0 - h / radius)
    return (radius - h) * math.tan(psi_w - MARGIN_FRACTION * b / radius)


@dataclass(frozen=True)
class GrooveSpec:
    """Ball radius, flat half-width b, depth h, relative depth bound epsilon, wedge angle beta"""

    radius: float
    b: float
    h: float
    epsilon: float
    beta: float = 0.0

    def __post_init__(self):
        if not (self.radius > 0 and 0 < self.h < self.radius and self.b > 0):
            raise InvalidInput("groove needs radius > 0, 0 < h < radius, b > 0",
                               radius=self.radius, h=self.h, b=self.b)
        if 1.0 - self.h / self.radius < 1.0 - self.epsilon:
            raise InvalidInput("depth exceeds the relative bound epsilon",
                               h=self.h, radius=self.radius, epsilon=self.epsilon)
        if self.chord_half_width < self.b:
            raise InvalidInput("groove narrower than the flat contact segment",
                               chord_half_width=self.chord_half_width, b=self.b)
        if self.psi_flat <= 0:
            raise InvalidInput("blend margin swallows the flat floor", b=self.b, h=self.h)
        if not 0 < self.delta / self.radius < self.epsilon:
            raise InvalidInput("contact half-width must satisfy 0 < delta / R < epsilon",
                               field="delta", delta=self.delta, radius=self.radius,
                               epsilon=self.epsilon)
        if self.beta < 0:
            raise InvalidInput("wedge angle must be nonnegative", field="beta", beta=self.beta)

    @classmethod
    def for_contact_width(cls, r_loop: float, b: float, beta: float = 0.0,
                          epsilon: Optional[float] = None) -> "GrooveSpec":
        """Depth h such that the flat floor of the ball r_loop + h has half-width b"""
        if not (r_loop > 0 and 0 < b < r_loop):
            raise InvalidInput("need 0 < b < r_loop", r_loop=r_loop, b=b)

        def excess(h):
            return _flat_half_width(r_loop + h, h, b) - b

        lo = 1e-14 * r_loop
        while excess(lo) > 0:
            lo *= 1e-3
        h = brentq(excess, lo, r_loop, xtol=1e-15 * r_loop, rtol=1e-14)
        radius = r_loop + h
        return cls.build(radius, b, h, beta, epsilon)

    @classmethod
    def for_depth(cls, radius: float, h: float, beta: float = 0.0,
                  epsilon: Optional[float] = None) -> "GrooveSpec":
        """Ball radius and depth given; b is the resulting flat half-width"""
        if not (radius > 0 and 0 < h < radius):
            raise InvalidInput("need 0 < h < radius", radius=radius, h=h)
        psi_w = math.acos(1.0 - h / radius)
        b = brentq(lambda w: _flat_half_width(radius, h, w) - w,
                   0.0, radius * psi_w / MARGIN_FRACTION, xtol=1e-15 * radius)
        return cls.build(radius, b, h, beta, epsilon)

    @classmethod
    def build(cls, radius: float, b: float, h: float, beta: float = 0.0,
              epsilon: Optional[float] = None) -> "GrooveSpec":
        """epsilon defaults to twice the relative chord half-width, which bounds both h and delta"""
        if epsilon is None and 0 < h < radius:
            epsilon = 2.0 * math.sqrt(h * (2.0 * radius - h)) / radius
        return cls(radius=float(radius), b=float(b), h=float(h),
                   epsilon=float(epsilon if epsilon is not None else 1.0), beta=float(beta))

    @property
    def r_loop(self) -> float:
        return self.radius - self.h

    @property
    def floor_ratio(self) -> float:
        return 1.0 - self.h / self.radius

    @property
    def chord_half_width(self) -> float:
        """w = sqrt(h (2R - h))"""
        return math.sqrt(self.h * (2.0 * self.radius - self.h))

    @property
    def psi_wall(self) -> float:
        return math.acos(self.floor_ratio)

    @property
    def margin(self) -> float:
        return MARGIN_FRACTION * self.b / self.radius

    @property
    def psi_flat(self) -> float:
        return self.psi_wall - self.margin

    @property
    def blend(self) -> float:
        return 1.0 - self.floor_ratio / math.cos(self.psi_flat)

    @property
    def psi_outer(self) -> float:
        """angular half-width of the whole groove, where P = 1 + k"""
        return math.acos(self.floor_ratio / (1.0 + self.blend))

    @property
    def delta(self) -> float:
        return self.r_loop * math.tan(self.psi_flat)

    def profile(self, psi: np.ndarray) -> np.ndarray:
        """radial fraction S as a function of the angular distance from the loop"""
        shape = np.shape(psi)
        psi = np.atleast_1d(np.abs(np.asarray(psi, dtype=float)))
        out = np.ones_like(psi)
        inside = psi < self.psi_outer
        plane = self.floor_ratio / np.cos(psi[inside])
        k = self.blend
        w = np.maximum(k - np.abs(plane - 1.0), 0.0) / k
        out[inside] = np.minimum(plane, 1.0) - w * w * k / 4.0
        return out.reshape(shape)

    def cross_section_area(self) -> float:
        """area cut from a disk of radius R by the profile (polar area)"""
        R = self.radius
        value, _ = quad(lambda p: 0.5 * R * R * (1.0 - float(self.profile(p)) ** 2),
                        -self.psi_outer, self.psi_outer,
                        points=[-self.psi_flat, self.psi_flat], limit=200)
        return float(value)

    def to_dict(self) -> Dict:
        return {"radius": self.radius, "b": self.b, "h": self.h, "epsilon": self.epsilon,
                "beta": self.beta, "delta": self.delta}


def groove_volume_oracle(spec: GrooveSpec) -> float:
    """Exact groove volume for a great-circle loop"""
    R = spec.radius
    value, _ = quad(lambda p: (1.0 - float(spec.profile(p)) ** 3) * math.cos(p),
                    -spec.psi_outer, spec.psi_outer,
                    points=[-spec.psi_flat, spec.psi_flat], limit=200)
    return float(2.0 * math.pi * R ** 3 / 3.0 * value)


def groove_prism_estimate(spec: GrooveSpec, loop: SphericalCurve) -> float:
    """cross-section area times loop length on the ball"""
    return spec.cross_section_area() * loop.length * spec.radius / loop.r


# ----------------------------------------------------------------------------
# Shape function
# ----------------------------------------------------------------------------

def _arc_distance(u: np.ndarray, a: np.ndarray, b: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Angular distance from unit vectors u to great-circle arcs a-b, plus the foot point"""
    normal = np.cross(a, b)
    norm = np.linalg.norm(normal, axis=1, keepdims=True)
    normal = normal / np.where(norm > 0, norm, 1.0)
    height = np.sum(u * normal, axis=1)
    proj = u - height[:, None] * normal
    proj_norm = np.linalg.norm(proj, axis=1, keepdims=True)
    foot = proj / np.where(proj_norm > 0, proj_norm, 1.0)
    within = ((np.sum(np.cross(a, foot) * normal, axis=1) >= 0)
              & (np.sum(np.cross(foot, b) * normal, axis=1) >= 0)
              & (norm[:, 0] > 0) & (proj_norm[:, 0] > 0))

    da = np.arctan2(np.linalg.norm(np.cross(u, a), axis=1), np.sum(u * a, axis=1))
    db = np.arctan2(np.linalg.norm(np.cross(u, b), axis=1), np.sum(u * b, axis=1))
    end_dist = np.minimum(da, db)
    end_foot = np.where((da <= db)[:, None], a, b)
    dist = np.where(within, np.arcsin(np.clip(np.abs(height), 0.0, 1.0)), end_dist)
    return dist, np.where(within[:, None], foot, end_foot)


class ShapeFunction:
    """S: unit directions -> radial fraction; S == 1 away from the loop"""

    def __init__(self, loop: Optional[SphericalCurve], spec: Optional[GrooveSpec]):
        self.loop = loop
        self.spec = spec
        if loop is None:
            self._units = None
            return
        units = loop.points / np.linalg.norm(loop.points, axis=1, keepdims=True)
        self._closed = bool(loop.closed)
        self._units = units[:-1] if self._closed else units
        self._tree = cKDTree(self._units)

    @property
    def radius(self) -> float:
        return 1.0 if self.spec is None else self.spec.radius

    @property
    def band(self) -> float:
        """angular half-width of the region where S < 1"""
        return 0.0 if self.spec is None else self.spec.psi_outer

    def distance(self, u: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """angular distance to the loop polyline and the nearest loop direction"""
        u = np.atleast_2d(np.asarray(u, dtype=float))
        count = len(self._units)
        _, idx = self._tree.query(u)
        if self._closed:
            prev, nxt = (idx - 1) % count, (idx + 1) % count
        else:
            prev, nxt = np.maximum(idx - 1, 0), np.minimum(idx + 1, count - 1)
        d1, f1 = _arc_distance(u, self._units[prev], self._units[idx])
        d2, f2 = _arc_distance(u, self._units[idx], self._units[nxt])
        closer = d1 <= d2
        return np.where(closer, d1, d2), np.where(closer[:, None], f1, f2)

    def __call__(self, u: np.ndarray) -> np.ndarray:
        u = np.atleast_2d(np.asarray(u, dtype=float))
        if self._units is None:
            return np.ones(len(u))
        psi, _ = self.distance(u)
        return self.spec.profile(psi)

    def clearance(self) -> float:
        """smallest angular distance between loop samples far apart along the loop"""
        if self._units is None:
            return math.pi
        step = self.loop.ds / self.loop.r
        stride = max(1, int(self.band / (4.0 * step)))
        units = self._units[::stride]
        count = len(units)
        along = max(int(math.ceil(4.0 * self.band / (stride * step))), 8)
        pairs = cKDTree(units).query_pairs(2.0 * self.band + 1e-15, output_type="ndarray")
        if not len(pairs):
            return math.pi
        gap = np.abs(pairs[:, 1] - pairs[:, 0])
        if self._closed:
            gap = np.minimum(gap, count - gap)
        far = pairs[gap > along]
        if not len(far):
            return math.pi
        chord = np.linalg.norm(units[far[:, 0]] - units[far[:, 1]], axis=1)
        return float(2.0 * np.arcsin(np.min(chord) / 2.0))


def shape_function(loop: Optional[SphericalCurve], spec: Optional[GrooveSpec]) -> ShapeFunction:
    """Groove shape for a simple closed loop; (None, None) gives the plain ball"""
    shape = ShapeFunction(loop, spec)
    if loop is not None:
        clearance = shape.clearance()
        if clearance < 2.0 * spec.psi_outer:
            raise GrooveOverlap("groove overlaps itself",
                                clearance=clearance * spec.radius,
                                groove_width=2.0 * spec.psi_outer * spec.radius)
        logger.debug("shape function: delta=%.6g psi_outer=%.6g clearance=%.6g",
                     spec.delta, spec.psi_outer, clearance)
    return shape


# ----------------------------------------------------------------------------
# Meshing
# ----------------------------------------------------------------------------

def icosahedron() -> Tuple[np.ndarray, np.ndarray]:
    t = (1.0 + math.sqrt(5.0)) / 2.0
    vertices = np.array([
        [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
        [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
        [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
    ], dtype=float)
    faces = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ], dtype=np.int64)
    return vertices / np.linalg.norm(vertices, axis=1, keepdims=True), faces


def _edge_table(faces: np.ndarray, vertex_count: int) -> Tuple[np.ndarray, np.ndarray]:
    """unique undirected edges (E, 2) and per-face edge ids for (0-1, 1-2, 2-0)"""
    a = faces
    b = np.roll(faces, -1, axis=1)
    lo, hi = np.minimum(a, b).ravel(), np.maximum(a, b).ravel()
    keys, inverse = np.unique(lo * vertex_count + hi, return_inverse=True)
    edges = np.column_stack([keys // vertex_count, keys % vertex_count])
    return edges, inverse.reshape(-1, 3)


def _split_marked(vertices: np.ndarray, faces: np.ndarray, mark: np.ndarray,
                  edges: np.ndarray, face_edges: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Red split for faces with 3 marked edges, green for faces with 1"""
    mids = vertices[edges[mark, 0]] + vertices[edges[mark, 1]]
    mids /= np.linalg.norm(mids, axis=1, keepdims=True)
    mid_index = np.full(len(edges), -1, dtype=np.int64)
    mid_index[mark] = len(vertices) + np.arange(int(mark.sum()))
    vertices = np.vstack([vertices, mids])

    count = mark[face_edges].sum(axis=1)
    keep = faces[count == 0]

    red = count == 3
    f, m = faces[red], mid_index[face_edges[red]]
    red_faces = np.concatenate([
        np.column_stack([f[:, 0], m[:, 0], m[:, 2]]),
        np.column_stack([f[:, 1], m[:, 1], m[:, 0]]),
        np.column_stack([f[:, 2], m[:, 2], m[:, 1]]),
        m,
    ])

    green = count == 1
    f, fe = faces[green], face_edges[green]
    k = np.argmax(mark[fe], axis=1)
    rows = np.arange(len(f))
    v0, v1, v2 = f[rows, k], f[rows, (k + 1) % 3], f[rows, (k + 2) % 3]
    m = mid_index[fe[rows, k]]
    green_faces = np.concatenate([np.column_stack([v0, m, v2]), np.column_stack([m, v1, v2])])

    return vertices, np.concatenate([keep, red_faces, green_faces])


def icosphere(level: int) -> Tuple[np.ndarray, np.ndarray]:
    """Unit sphere mesh with 20 * 4^level faces"""
    if level < 0:
        raise InvalidInput("subdivision level must be >= 0", level=level)
    vertices, faces = icosahedron()
    for _ in range(level):
        edges, face_edges = _edge_table(faces, len(vertices))
        vertices, faces = _split_marked(vertices, faces, np.ones(len(edges), dtype=bool),
                                        edges, face_edges)
    return vertices, faces


def _edge_angles(vertices: np.ndarray, edges: np.ndarray) -> np.ndarray:
    a, b = vertices[edges[:, 0]], vertices[edges[:, 1]]
    return np.arctan2(np.linalg.norm(np.cross(a, b), axis=1), np.sum(a * b, axis=1))


def refine_band(vertices: np.ndarray, faces: np.ndarray, distance: Callable[[np.ndarray], np.ndarray],
                band: float, target: float, max_passes: int = 12) -> Tuple[np.ndarray, np.ndarray]:
    """Split edges longer than target whose ends come within band of the loop"""
    psi = distance(vertices)
    for _ in range(max_passes):
        edges, face_edges = _edge_table(faces, len(vertices))
        near = (psi[edges[:, 0]] < band) | (psi[edges[:, 1]] < band)
        mark = near & (_edge_angles(vertices, edges) > target)
        if not mark.any():
            break
        while True:
            count = mark[face_edges].sum(axis=1)
            upgrade = count == 2
            if not upgrade.any():
                break
            mark[face_edges[upgrade].ravel()] = True
        old = len(vertices)
        vertices, faces = _split_marked(vertices, faces, mark, edges, face_edges)
        psi = np.concatenate([psi, distance(vertices[old:])])
        logger.debug("refined %d edges, mesh now %d faces", int(mark.sum()), len(faces))
    return vertices, faces


def check_watertight(faces: np.ndarray, vertex_count: int) -> None:
    a = faces
    b = np.roll(faces, -1, axis=1)
    directed = (a * vertex_count + b).ravel()
    if len(np.unique(directed)) != len(directed):
        raise MeshInvalid("inconsistent face orientation (repeated directed edge)")
    lo, hi = np.minimum(a, b).ravel(), np.maximum(a, b).ravel()
    _, counts = np.unique(lo * vertex_count + hi, return_counts=True)
    if np.any(counts != 2):
        raise MeshInvalid("mesh is not closed", open_edges=int(np.sum(counts != 2)))
    used = len(np.unique(faces))
    euler = used - len(counts) + len(faces)
    if euler != 2:
        raise MeshInvalid("Euler characteristic is not 2", euler=int(euler))


# ----------------------------------------------------------------------------
# Mass properties
# ----------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class MassProperties:
    volume: float
    barycenter: np.ndarray
    inertia: np.ndarray  # about the barycenter, unit density


def mass_properties(vertices: np.ndarray, faces: np.ndarray) -> MassProperties:
    """Signed tetrahedra with apex at the origin; compensated sums"""
    a, b, c = vertices[faces[:, 0]], vertices[faces[:, 1]], vertices[faces[:, 2]]
    det = np.sum(a * np.cross(b, c), axis=1)
    volume = math.fsum(det) / 6.0
    s = a + b + c
    first = np.array([math.fsum(det * s[:, i]) for i in range(3)]) / 24.0
    barycenter = first / volume

    second = np.empty((3, 3))
    for i in range(3):
        for j in range(i, 3):
            term = s[:, i] * s[:, j] + a[:, i] * a[:, j] + b[:, i] * b[:, j] + c[:, i] * c[:, j]
            second[i, j] = second[j, i] = math.fsum(det * term) / 120.0
    inertia_origin = np.trace(second) * np.eye(3) - second
    shift = volume * (np.dot(barycenter, barycenter) * np.eye(3) - np.outer(barycenter, barycenter))
    return MassProperties(volume=volume, barycenter=barycenter, inertia=inertia_origin - shift)


# ----------------------------------------------------------------------------
# Bodies
# ----------------------------------------------------------------------------

@dataclass(eq=False)
class GroovedBody:
    vertices: np.ndarray
    faces: np.ndarray
    radius: float
    volume: float
    barycenter: np.ndarray
    inertia: np.ndarray
    ball_volume: float
    ball_barycenter: np.ndarray
    spec: Optional[GrooveSpec] = None
    shape: Optional[ShapeFunction] = field(default=None, repr=False)
    delta: float = 0.0
    mesh_tolerance: float = 0.0

    @property
    def mass(self) -> float:
        return self.volume

    @property
    def loop(self) -> Optional[SphericalCurve]:
        return None if self.shape is None else self.shape.loop

    @property
    def drift(self) -> float:
        return float(np.linalg.norm(self.barycenter - self.ball_barycenter))

    @classmethod
    def ball(cls, radius: float, level: int = 4) -> "GroovedBody":
        """Plain ball with exact (analytic) mass properties"""
        units, faces = icosphere(level)
        volume = 4.0 / 3.0 * math.pi * radius ** 3
        return cls(
            vertices=units * radius,
            faces=faces,
            radius=float(radius),
            volume=volume,
            barycenter=np.zeros(3),
            inertia=0.4 * volume * radius ** 2 * np.eye(3),
            ball_volume=volume,
            ball_barycenter=np.zeros(3),
            mesh_tolerance=radius * _max_edge(units, faces) ** 2 / 4.0,
        )

    def support(self, direction: np.ndarray) -> Tuple[float, int]:
        """max <v, direction> over the vertices and its vertex index"""
        heights = self.vertices @ np.asarray(direction, dtype=float)
        i = int(np.argmax(heights))
        return float(heights[i]), i

    def sidecar(self) -> Dict:
        spec = self.spec
        return {
            "r": self.radius,
            "r_loop": None if spec is None else spec.r_loop,
            "b": None if spec is None else spec.b,
            "h": None if spec is None else spec.h,
            "epsilon": None if spec is None else spec.epsilon,
            "beta": None if spec is None else spec.beta,
            "delta": self.delta,
            "volume": self.volume,
            "barycenter": [float(v) for v in self.barycenter],
            "ball_barycenter": [float(v) for v in self.ball_barycenter],
            "drift": self.drift,
            "faces": int(len(self.faces)),
            "vertices": int(len(self.vertices)),
            "mesh_tolerance": self.mesh_tolerance,
        }


def _max_edge(units: np.ndarray, faces: np.ndarray) -> float:
    edges, _ = _edge_table(faces, len(units))
    return float(np.max(_edge_angles(units, edges)))


ShapeLike = Union[ShapeFunction, Callable[[np.ndarray], np.ndarray], float]


def mesh_body(S: ShapeLike, resolution: int = 4, radius: Optional[float] = None,
              max_refine: int = 12) -> GroovedBody:
    """Icosphere of the given level, refined near the groove, pushed out to R S(u) u"""
    units, faces = icosphere(resolution)
    if isinstance(S, ShapeFunction):
        shape = S
        radius = shape.radius if radius is None else radius
        evaluate = shape
    else:
        shape = None
        radius = 1.0 if radius is None else radius
        evaluate = (lambda u, value=float(S): np.full(len(u), value)) if np.isscalar(S) else S

    if shape is not None and shape.loop is not None:
        band = shape.band
        target = 2.0 * band / CROSS_SECTION_VERTICES
        units, faces = refine_band(units, faces, lambda u: shape.distance(u)[0],
                                   band * 1.5, target, max_refine)
        edges, _ = _edge_table(faces, len(units))
        psi = shape.distance(units)[0]
        near = (psi[edges[:, 0]] < band) | (psi[edges[:, 1]] < band)
        coarsest = float(np.max(_edge_angles(units, edges[near]))) if near.any() else 0.0
        if coarsest > 0 and 2.0 * band / coarsest < MIN_VERTICES_ACROSS:
            raise ResolutionExceeded("groove is too narrow for the mesh",
                                     vertices_across=2.0 * band / coarsest,
                                     minimum=MIN_VERTICES_ACROSS)
        band_edge = coarsest
    else:
        band_edge = 0.0

    values = np.asarray(evaluate(units), dtype=float)
    if np.any(values <= 0) or np.any(values > 1.0 + 1e-12) or not np.all(np.isfinite(values)):
        raise InvalidInput("shape function must take values in (0; 1]")
    vertices = units * (radius * values)[:, None]
    check_watertight(faces, len(vertices))

    props = mass_properties(vertices, faces)
    ball = mass_properties(units * radius, faces)
    spec = None if shape is None else shape.spec
    body = GroovedBody(
        vertices=vertices,
        faces=faces,
        radius=float(radius),
        volume=props.volume,
        barycenter=props.barycenter,
        inertia=props.inertia,
        ball_volume=ball.volume,
        ball_barycenter=ball.barycenter,
        spec=spec,
        shape=shape,
        delta=0.0 if spec is None else spec.delta,
        mesh_tolerance=radius * (band_edge or _max_edge(units, faces)) ** 2 / 4.0,
    )
    logger.info("meshed body: %d faces, volume %.9g, drift %.3e", len(faces), body.volume, body.drift)
    return body


def carve(loop: SphericalCurve, spec: GrooveSpec, resolution: int = 4) -> GroovedBody:
    return mesh_body(shape_function(loop, spec), resolution)


# ----------------------------------------------------------------------------
# Checks
# ----------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ContactSegment:
    """Flat floor segment: center, unit lateral direction, half-width, outward normal"""

    center: np.ndarray
    direction: np.ndarray
    half_width: float
    normal: np.ndarray


def contact_segment_at(body: GroovedBody, index: int) -> ContactSegment:
    loop = body.loop
    if loop is None or body.spec is None:
        raise InvalidInput("body has no groove")
    normal = loop.points[index] / np.linalg.norm(loop.points[index])
    lateral = np.cross(normal, loop.tangents[index])
    return ContactSegment(center=body.spec.r_loop * normal, direction=lateral / np.linalg.norm(lateral),
                          half_width=body.delta, normal=normal)


def in_wedge(point: np.ndarray, segment: ContactSegment, beta: float) -> bool:
    w = np.asarray(point, dtype=float) - segment.center
    y = float(np.dot(w, segment.direction))
    z = float(np.dot(w, -segment.normal))
    return bool(z > 0 and abs(y) <= segment.half_width + z * math.tan(beta / 2.0))


def barycenter_wedge_check(body: GroovedBody, contact_segment: ContactSegment,
                           beta: float) -> Tuple[np.ndarray, float, bool]:
    """(B(h), |B(h) - B(0)|, B(h) inside the wedge of opening beta over the segment)"""
    check_watertight(body.faces, len(body.vertices))
    return body.barycenter, body.drift, in_wedge(body.barycenter, contact_segment, beta)


def wedge_sweep(body: GroovedBody, beta: float) -> Tuple[bool, Optional[int]]:
    """Wedge check at every loop sample; (all inside, first sample outside)"""
    count = len(body.loop.points) - (1 if body.loop.closed else 0)
    check_watertight(body.faces, len(body.vertices))
    for i in range(count):
        if not in_wedge(body.barycenter, contact_segment_at(body, i), beta):
            return False, i
    return True, None


def groove_volume_bound(spec: GrooveSpec, loop: SphericalCurve) -> float:
    """Shell R - h <= |x| <= R over the band of half-width psi_outer around a simple closed loop"""
    R = spec.radius
    shell = (R ** 3 - (R - spec.h) ** 3) / 3.0
    # band solid angle is 2 sin(psi) times the angular length, whatever the loop curvature
    return shell * 2.0 * math.sin(spec.psi_outer) * loop.length / loop.r


def drift_bound(groove_volume: float, radius: float, body_volume: float, ball_offset: float = 0.0) -> float:
    """|B(h) - B(0)| from the first moment of the removed material"""
    return groove_volume * (radius + ball_offset) / body_volume


def groove_cross_section(body: GroovedBody, index: int, samples: int = 4001) -> Tuple[float, float]:
    """(flat half-width, max floor offset from the plane) across the loop at a sample"""
    spec, loop = body.spec, body.loop
    p = loop.points[index] / np.linalg.norm(loop.points[index])
    lateral = np.cross(p, loop.tangents[index])
    lateral /= np.linalg.norm(lateral)
    psi = np.linspace(-spec.psi_outer, spec.psi_outer, samples)
    u = np.cos(psi)[:, None] * p + np.sin(psi)[:, None] * lateral
    height = spec.radius * body.shape(u) * np.cos(psi)
    offset = np.abs(height - spec.r_loop)
    floor = offset <= 1e-9 * spec.radius
    half_width = float(np.max(spec.r_loop * np.tan(np.abs(psi[floor])))) if floor.any() else 0.0
    return half_width, float(np.max(offset[floor])) if floor.any() else float("inf")


def floor_vertex_offset(body: GroovedBody) -> float:
    """max distance of flat-floor mesh vertices from their local floor plane"""
    spec = body.spec
    units = body.vertices / np.linalg.norm(body.vertices, axis=1, keepdims=True)
    psi, foot = body.shape.distance(units)
    floor = psi < spec.psi_flat
    heights = np.sum(body.vertices[floor] * foot[floor], axis=1)
    return float(np.max(np.abs(heights - spec.r_loop))) if floor.any() else 0.0


def ray_triangle_hits(tri: np.ndarray, origin: np.ndarray, direction: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(hit mask, ray parameter t) of origin + t direction against triangles (Moller-Trumbore)"""
    v0, v1, v2 = tri[:, 0], tri[:, 1], tri[:, 2]
    e1, e2 = v1 - v0, v2 - v0
    p = np.cross(direction, e2)
    det = np.sum(e1 * p, axis=1)
    ok = np.abs(det) > 1e-300
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    tvec = origin - v0
    u = np.sum(tvec * p, axis=1) * inv
    q = np.cross(tvec, e1)
    v = (q @ direction) * inv
    t = np.sum(e2 * q, axis=1) * inv
    return ok & (u >= 0) & (v >= 0) & (u + v <= 1), t


def count_ray_hits(body: GroovedBody, directions: np.ndarray) -> np.ndarray:
    """Number of boundary crossings of rays from the origin"""
    directions = np.asarray(directions, dtype=float)
    directions = directions / np.linalg.norm(directions, axis=1, keepdims=True)
    tri = body.vertices[body.faces]
    units = tri / np.linalg.norm(tri, axis=2, keepdims=True)
    centers = units.mean(axis=1)
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    reach = float(np.max(np.linalg.norm(units - centers[:, None, :], axis=2))) * 1.01

    tree = cKDTree(centers)
    hits = np.zeros(len(directions), dtype=int)
    for i, candidates in enumerate(tree.query_ball_point(directions, reach)):
        if not candidates:
            continue
        mask, t = ray_triangle_hits(tri[candidates], np.zeros(3), directions[i])
        hits[i] = int(np.sum(mask & (t > 0)))
    return hits


# ----------------------------------------------------------------------------
# STL
# ----------------------------------------------------------------------------

def export_mesh(body: GroovedBody, path: Path) -> Path:
    """Binary little-endian STL"""
    path = Path(path)
    check_watertight(body.faces, len(body.vertices))
    tri = body.vertices[body.faces]
    normals = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    lengths = np.linalg.norm(normals, axis=1, keepdims=True)
    normals = normals / np.where(lengths > 0, lengths, 1.0)

    records = np.zeros(len(tri), dtype=STL_DTYPE)
    records["normal"] = normals
    records["vertices"] = tri
    header = STL_HEADER.ljust(80, b"\0")
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(np.array([len(tri)], dtype="<u4").tobytes())
            fh.write(records.tobytes())
    except OSError as exc:
        raise OSError(f"cannot write STL {path}: {exc.strerror}") from exc
    return path


def read_stl(path: Path) -> Tuple[np.ndarray, np.ndarray]:
    """(normals (F, 3), triangles (F, 3, 3)) as float32"""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise OSError(f"cannot read STL {path}: {exc.strerror}") from exc
    count = int(np.frombuffer(raw, dtype="<u4", count=1, offset=80)[0])
    if len(raw) != 84 + 50 * count:
        raise MeshInvalid(f"{path}: size does not match triangle count", count=count, size=len(raw))
    records = np.frombuffer(raw, dtype=STL_DTYPE, count=count, offset=84)
    return records["normal"].copy(), records["vertices"].copy()


def write_sidecar(body: GroovedBody, path: Path, extra: Optional[Dict] = None) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({**body.sidecar(), **(extra or {})}, fh, indent=2)
        fh.write("\n")
    return path
