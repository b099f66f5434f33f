#!/usr/bin/env python3
"""
Rolling on an inclined plane, contact tracking and the parageodesic problem

Plane: the image of I_alpha = [(cos a, 0, -sin a), (0, 1, 0)], outward normal
n = (sin a, 0, cos a); the body lives in <x, n> >= 0 and gravity potential is
g * x_3.

A body carved along a loop rolls along the target curve c with one degree of
freedom, the arclength s of the contact point. With the contact frame in the
world F_w = [-n, c', -n x c'] and on the body F_b = [x/d, T, x/d x T] the
orientation is U = F_w F_b^T and the body origin sits at I_alpha c(s) + d n.
This rolls without slipping and without pivoting when the body carries the
mirror image of the lift (curvature -kappa, see lift.contact_trace).

Reduced equation of motion (Lagrange, position-dependent effective mass):

    m_eff(s) s'' + m_eff'(s) s'^2 / 2 = -m g z_B'(s) - F(s') sign(s')
"""

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline
from scipy.spatial import cKDTree
from scipy.spatial.transform import Rotation

from carve import GroovedBody, ray_triangle_hits
from curves import PlanarCurve
from errors import ContactLost, InvalidInput, PoleSingularity, StallDetected, TrackingLost
from lift import contact_trace, lift

logger = logging.getLogger(__name__)

POLE_GUARD = 1e-8
ODE_RTOL = 1e-11
ODE_ATOL = 1e-12
TOL_MOB = 1e-9


# ----------------------------------------------------------------------------
# Plane and resistance
# ----------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class InclinedPlane:
    alpha: float
    embedding: np.ndarray   # I_alpha, 3x2
    J: np.ndarray           # quarter turn inside the plane, 3x3
    normal: np.ndarray

    def embed(self, uv: np.ndarray) -> np.ndarray:
        return np.asarray(uv, dtype=float) @ self.embedding.T

    def project(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=float) @ self.embedding

    def height(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=float) @ self.normal


def embed_plane(alpha: float) -> InclinedPlane:
    if not 0.0 < alpha < np.pi / 2:
        raise InvalidInput("slope angle must lie in (0; pi/2)", alpha=alpha)
    embedding = np.array([[np.cos(alpha), 0.0],
                          [0.0, 1.0],
                          [-np.sin(alpha), 0.0]])
    quarter = np.array([[0.0, -1.0], [1.0, 0.0]])
    return InclinedPlane(
        alpha=float(alpha),
        embedding=embedding,
        J=embedding @ quarter @ embedding.T,
        normal=np.array([np.sin(alpha), 0.0, np.cos(alpha)]),
    )


@dataclass(frozen=True, eq=False)
class ResistanceModel:
    """kind 'coulomb' (F = N rho / lever) or 'velocity' (tabulated, nondecreasing)"""

    kind: str = "coulomb"
    rho: float = 0.0
    lever: float = 1.0
    speeds: Optional[np.ndarray] = None
    forces: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind == "coulomb":
            if self.rho < 0 or self.lever <= 0:
                raise InvalidInput("need rho >= 0 and a positive lever arm",
                                   rho=self.rho, lever=self.lever)
        elif self.kind == "velocity":
            speeds = np.asarray(self.speeds, dtype=float)
            forces = np.asarray(self.forces, dtype=float)
            if speeds.shape != forces.shape or len(speeds) < 2:
                raise InvalidInput("velocity table needs matching speed/force columns")
            if np.any(np.diff(speeds) <= 0) or np.any(np.diff(forces) < 0) or np.any(forces < 0):
                raise InvalidInput("resistance must be nonnegative and nondecreasing in speed")
            object.__setattr__(self, "speeds", speeds)
            object.__setattr__(self, "forces", forces)
        else:
            raise InvalidInput(f"unknown resistance kind '{self.kind}'", kind=self.kind)

    @classmethod
    def coulomb(cls, rho: float, lever: float) -> "ResistanceModel":
        return cls(kind="coulomb", rho=float(rho), lever=float(lever))

    @classmethod
    def velocity_table(cls, speeds: Sequence[float], forces: Sequence[float]) -> "ResistanceModel":
        return cls(kind="velocity", speeds=np.asarray(speeds), forces=np.asarray(forces))

    def force(self, speed: float, normal_force: float) -> float:
        if self.kind == "coulomb":
            return normal_force * self.rho / self.lever
        return float(np.interp(abs(speed), self.speeds, self.forces))


# ----------------------------------------------------------------------------
# Trajectory
# ----------------------------------------------------------------------------

@dataclass(eq=False)
class SimTrajectory:
    t: np.ndarray
    s: np.ndarray
    speed: np.ndarray
    positions: np.ndarray
    rotations: np.ndarray
    ekin: np.ndarray
    epot: np.ndarray
    alpha: float
    mass: float
    reached_end: bool = False
    contact_steps: List[int] = field(default_factory=list)
    contact_sets: List[np.ndarray] = field(default_factory=list, repr=False)
    target: Optional[PlanarCurve] = field(default=None, repr=False)
    delta: float = 0.0
    mesh_tolerance: float = 0.0
    vertices: Optional[np.ndarray] = field(default=None, repr=False)
    faces: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def energy(self) -> np.ndarray:
        return self.ekin + self.epot

    @property
    def u(self) -> np.ndarray:
        """reparametrization time -> curve parameter"""
        return self.s

    def quaternions(self) -> np.ndarray:
        """unit quaternions (w, x, y, z)"""
        xyzw = Rotation.from_matrix(self.rotations).as_quat()
        return np.column_stack([xyzw[:, 3], xyzw[:, :3]])

    def orthogonality_drift(self) -> float:
        eye = np.eye(3)
        gram = np.einsum("nji,njk->nik", self.rotations, self.rotations)
        return float(np.max(np.abs(gram - eye)))


TRAJECTORY_CSV_HEADER = ["t", "s", "speed", "x", "y", "z", "q0", "q1", "q2", "q3", "ekin", "epot"]


def write_trajectory_csv(traj: SimTrajectory, path: Path) -> Path:
    path = Path(path)
    data = np.column_stack([traj.t, traj.s, traj.speed, traj.positions, traj.quaternions(),
                            traj.ekin, traj.epot])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRAJECTORY_CSV_HEADER)
        for row in data:
            writer.writerow([repr(float(v)) for v in row])
    return path


# ----------------------------------------------------------------------------
# Rolling kinematics
# ----------------------------------------------------------------------------

def _orthonormal_frames(e1: np.ndarray, e2: np.ndarray) -> np.ndarray:
    """Gram-Schmidt on (e1, e2), columns (e1, e2, e1 x e2)"""
    e1 = e1 / np.linalg.norm(e1, axis=-1, keepdims=True)
    e2 = e2 - np.sum(e2 * e1, axis=-1, keepdims=True) * e1
    e2 = e2 / np.linalg.norm(e2, axis=-1, keepdims=True)
    return np.stack([e1, e2, np.cross(e1, e2)], axis=-1)


class _RollingGeometry:
    """Body trace and world contact frames sampled on the target grid"""

    def __init__(self, body: GroovedBody, plane: InclinedPlane, target: PlanarCurve):
        self.plane = plane
        self.target = target
        if body.loop is not None:
            loop = body.loop
            if abs(loop.ds - target.ds) > 1e-9 * target.ds:
                raise InvalidInput("target and groove loop use different arclength steps",
                                   target_ds=target.ds, loop_ds=loop.ds)
            count = loop.n if loop.closed else len(loop.points)
            idx = np.arange(target.n + 1) % count
            self.d = body.spec.r_loop
            trace_points = loop.points[idx] * (self.d / loop.r)
            trace_tangents = loop.tangents[idx]
        else:
            self.d = body.radius
            trace = contact_trace(lift(target, self.d))
            trace_points, trace_tangents = trace.points, trace.tangents
        self.trace_points = trace_points
        self.trace_tangents = trace_tangents
        self.world_points = plane.embed(target.points)
        self.world_tangents = plane.embed(target.tangents)

    def frames(self, s: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """(U, body origin, contact point, world tangent) at arclengths s"""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        ds = self.target.ds
        j = np.clip(np.floor(s / ds).astype(int), 0, self.target.n - 1)
        w = (s / ds - j)[:, None]

        xb = (1 - w) * self.trace_points[j] + w * self.trace_points[j + 1]
        tb = (1 - w) * self.trace_tangents[j] + w * self.trace_tangents[j + 1]
        contact = (1 - w) * self.world_points[j] + w * self.world_points[j + 1]
        tw = (1 - w) * self.world_tangents[j] + w * self.world_tangents[j + 1]

        n = self.plane.normal
        body_frames = _orthonormal_frames(xb, tb)
        world_frames = _orthonormal_frames(np.broadcast_to(-n, tw.shape), tw)
        U = np.einsum("nij,nkj->nik", world_frames, body_frames)
        origin = contact + self.d * n
        return U, origin, contact, world_frames[:, :, 1]

    def sampled(self) -> Tuple[np.ndarray, np.ndarray]:
        """(U, origin) exactly at the grid samples"""
        n = self.plane.normal
        body_frames = _orthonormal_frames(self.trace_points, self.trace_tangents)
        world_frames = _orthonormal_frames(np.broadcast_to(-n, self.world_tangents.shape),
                                           self.world_tangents)
        U = np.einsum("nij,nkj->nik", world_frames, body_frames)
        return U, self.world_points + self.d * n


def _effective_mass(geometry: _RollingGeometry, body: GroovedBody) -> np.ndarray:
    """a^T I_P a / d^2 with a = -(x cross T)/d, I_P the inertia about the contact point"""
    d = geometry.d
    x = geometry.trace_points
    axis = -np.cross(x, geometry.trace_tangents) / d
    p = x - body.barycenter
    p2 = np.sum(p * p, axis=1)
    ap = np.sum(axis * p, axis=1)
    aa = np.sum(axis * axis, axis=1)
    inertia_term = np.einsum("ni,ij,nj->n", axis, body.inertia, axis)
    return (inertia_term + body.mass * (p2 * aa - ap * ap)) / (d * d)


@dataclass(frozen=True, eq=False)
class _ReducedModel:
    z_spline: CubicSpline
    dz_spline: CubicSpline
    m_spline: CubicSpline
    dm_spline: CubicSpline
    mass: float
    gravity: float
    normal_force: float
    resistance: ResistanceModel
    s_max: float

    def energy(self, s, v):
        ekin = 0.5 * self.m_spline(s) * v * v
        epot = self.mass * self.gravity * self.z_spline(s)
        return ekin, epot

    def acceleration(self, s: float, v: float) -> float:
        m_eff = float(self.m_spline(s))
        drive = -self.mass * self.gravity * float(self.dz_spline(s)) \
            - 0.5 * float(self.dm_spline(s)) * v * v
        resist = self.resistance.force(v, self.normal_force)
        if v > 0:
            net = drive - resist
        elif v < 0:
            net = drive + resist
        elif abs(drive) > resist:
            net = drive - np.sign(drive) * resist
        else:
            net = 0.0
        return net / m_eff


def _reduced_model(geometry: _RollingGeometry, body: GroovedBody, plane: InclinedPlane,
                   model: ResistanceModel, gravity: float) -> _ReducedModel:
    U, origin = geometry.sampled()
    bary = origin + np.einsum("nij,j->ni", U, body.barycenter)
    s = geometry.target.s
    z = CubicSpline(s, bary[:, 2])
    m_eff = CubicSpline(s, _effective_mass(geometry, body))
    return _ReducedModel(
        z_spline=z, dz_spline=z.derivative(),
        m_spline=m_eff, dm_spline=m_eff.derivative(),
        mass=body.mass, gravity=gravity,
        normal_force=body.mass * gravity * np.cos(plane.alpha),
        resistance=model,
        s_max=float(s[-1]),
    )


def _rk4_step(model: _ReducedModel, s: float, v: float, h: float) -> Tuple[float, float]:
    k1s, k1v = v, model.acceleration(s, v)
    k2s, k2v = v + 0.5 * h * k1v, model.acceleration(s + 0.5 * h * k1s, v + 0.5 * h * k1v)
    k3s, k3v = v + 0.5 * h * k2v, model.acceleration(s + 0.5 * h * k2s, v + 0.5 * h * k2v)
    k4s, k4v = v + h * k3v, model.acceleration(s + h * k3s, v + h * k3v)
    return (s + h / 6.0 * (k1s + 2 * k2s + 2 * k3s + k4s),
            v + h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v))


def _wedge_ok(bary: np.ndarray, contact: np.ndarray, tangent: np.ndarray, plane: InclinedPlane,
              delta: float, beta: float, tol: float) -> bool:
    w = bary - contact
    z = float(np.dot(w, plane.normal))
    y = float(np.dot(w, np.cross(plane.normal, tangent)))
    return z > 0 and abs(y) <= delta + z * np.tan(beta / 2.0) + tol


def simulate_rolling(body: GroovedBody, plane: InclinedPlane, model: ResistanceModel,
                     target: PlanarCurve, duration: float, step: float, v0: float = 0.0,
                     gravity: float = 1.0, contact_every: int = 0,
                     beta: Optional[float] = None) -> SimTrajectory:
    """Integrate the reduced rolling equation and rebuild (v(t), U(t)) along the way"""
    if duration <= 0 or step <= 0:
        raise InvalidInput("duration and step must be positive", duration=duration, step=step)
    if v0 < 0:
        raise InvalidInput("initial speed must be nonnegative", v0=v0)
    beta = (body.spec.beta if body.spec is not None else 0.0) if beta is None else beta

    geometry = _RollingGeometry(body, plane, target)
    reduced = _reduced_model(geometry, body, plane, model, gravity)
    steps = int(np.ceil(duration / step - 1e-9))
    if contact_every <= 0:
        contact_every = max(1, steps // 200)
    contact_tol = max(body.mesh_tolerance, 1e-12 * body.radius)
    wedge_tol = 1e-9 * body.radius

    t_list, s_list, v_list = [0.0], [0.0], [float(v0)]
    if v0 == 0 and reduced.acceleration(0.0, 0.0) <= 0:
        raise StallDetected("body does not start rolling", t=0.0)

    reached_end = False
    s, v = 0.0, float(v0)
    for i in range(1, steps + 1):
        s_new, v_new = _rk4_step(reduced, s, v, step)
        t = i * step
        if v_new <= 0:
            raise StallDetected("speed reached zero", t=t, s=s_new)
        if s_new >= reduced.s_max:
            logger.info("reached the end of the target curve at t=%.6g", t)
            reached_end = True
            break
        s, v = s_new, v_new
        t_list.append(t)
        s_list.append(s)
        v_list.append(v)

    t_arr, s_arr, v_arr = np.array(t_list), np.array(s_list), np.array(v_list)
    U, origin, contact, tangent = geometry.frames(s_arr)
    bary = origin + np.einsum("nij,j->ni", U, body.barycenter)
    ekin, epot = reduced.energy(s_arr, v_arr)

    for i in range(len(t_arr)):
        if not _wedge_ok(bary[i], contact[i], tangent[i], plane, body.delta, beta, wedge_tol):
            raise TrackingLost("barycenter left the wedge over the contact segment", t=float(t_arr[i]))

    contact_steps, contact_sets = [], []
    for i in range(0, len(t_arr), contact_every):
        world = origin[i] + body.vertices @ U[i].T
        heights = plane.height(world)
        if heights.min() < -3.0 * contact_tol:
            raise TrackingLost("body penetrates the plane", t=float(t_arr[i]),
                               depth=float(-heights.min()))
        contact_steps.append(i)
        contact_sets.append(world[heights <= contact_tol])

    logger.info("simulated %d steps, s(end)=%.6g, speed(end)=%.6g", len(t_arr) - 1, s_arr[-1], v_arr[-1])
    return SimTrajectory(
        t=t_arr, s=s_arr, speed=v_arr, positions=origin, rotations=U,
        ekin=ekin, epot=epot, alpha=plane.alpha, mass=body.mass, reached_end=reached_end,
        contact_steps=contact_steps, contact_sets=contact_sets, target=target,
        delta=body.delta, mesh_tolerance=body.mesh_tolerance,
        vertices=body.vertices, faces=body.faces,
    )


# ----------------------------------------------------------------------------
# Contact track
# ----------------------------------------------------------------------------

@dataclass(eq=False)
class ContactTrack:
    t: np.ndarray
    points: np.ndarray          # contact set barycenters in plane coordinates
    u: np.ndarray               # fitted curve parameter
    deviations: np.ndarray      # lateral distance to the target
    half_widths: np.ndarray
    reduced_offset: np.ndarray  # mesh height over the contact predicted by s(t)
    delta: float

    @property
    def max_deviation(self) -> float:
        return float(np.max(self.deviations)) if len(self.deviations) else 0.0

    @property
    def increasing(self) -> bool:
        return bool(np.all(np.diff(self.u) > 0))

    def report(self) -> Dict:
        return {
            "samples": int(len(self.t)),
            "max_deviation": self.max_deviation,
            "max_half_width": float(np.max(self.half_widths)) if len(self.half_widths) else 0.0,
            "delta": self.delta,
            "u_increasing": self.increasing,
            "max_reduced_offset": float(np.max(self.reduced_offset)) if len(self.reduced_offset) else 0.0,
        }


class _MeshSurface:
    """Body mesh in body coordinates with a face lookup by centroid"""

    def __init__(self, vertices: np.ndarray, faces: np.ndarray):
        self.tri = vertices[faces]
        centers = self.tri.mean(axis=1)
        self.reach = float(np.max(np.linalg.norm(self.tri - centers[:, None, :], axis=2))) * 1.5
        self.tree = cKDTree(centers)

    def gap(self, point: np.ndarray, direction: np.ndarray) -> float:
        """Distance from point to the mesh along +-direction, inf when the line misses"""
        candidates = self.tree.query_ball_point(point, self.reach)
        if not candidates:
            return float("inf")
        mask, t = ray_triangle_hits(self.tri[candidates], point, direction)
        return float(np.min(np.abs(t[mask]))) if mask.any() else float("inf")


def contact_track(traj: SimTrajectory, plane: InclinedPlane) -> ContactTrack:
    """Contact set barycenters against the target; reduced_offset is the height of the
    rebuilt mesh over the contact predicted by s(t)"""
    target = traj.target
    tree = cKDTree(target.points)
    surface = _MeshSurface(traj.vertices, traj.faces) if traj.faces is not None else None
    times, points, us, devs, widths, offsets = [], [], [], [], [], []
    for step, world in zip(traj.contact_steps, traj.contact_sets):
        t = float(traj.t[step])
        if len(world) == 0:
            raise ContactLost("no mesh vertex touches the plane", t=t)
        planar = plane.project(world)
        center = planar.mean(axis=0)

        _, j = tree.query(center)
        j = int(min(max(j, 0), target.n - 1))
        a, b = target.points[j], target.points[j + 1]
        seg = b - a
        frac = float(np.clip(np.dot(center - a, seg) / np.dot(seg, seg), 0.0, 1.0))
        if frac == 0.0 and j > 0:
            a, b = target.points[j - 1], target.points[j]
            seg = b - a
            frac = float(np.clip(np.dot(center - a, seg) / np.dot(seg, seg), 0.0, 1.0))
            j -= 1
        foot = a + frac * seg
        tangent = seg / np.linalg.norm(seg)
        lateral = np.array([-tangent[1], tangent[0]])
        offsets_lateral = (planar - center) @ lateral

        times.append(t)
        points.append(center)
        us.append((j + frac) * target.ds)
        devs.append(float(np.linalg.norm(center - foot)))
        widths.append(0.5 * float(offsets_lateral.max() - offsets_lateral.min()))
        if surface is not None:
            s_pred = float(traj.s[step])
            k = int(min(np.floor(s_pred / target.ds), target.n - 1))
            w = s_pred / target.ds - k
            predicted = plane.embed((1 - w) * target.points[k] + w * target.points[k + 1])
            U = traj.rotations[step]
            offsets.append(surface.gap(U.T @ (predicted - traj.positions[step]), U.T @ plane.normal))

    return ContactTrack(
        t=np.array(times), points=np.array(points), u=np.array(us),
        deviations=np.array(devs), half_widths=np.array(widths),
        reduced_offset=np.array(offsets), delta=traj.delta,
    )


# ----------------------------------------------------------------------------
# Parageodesics on the unit sphere
# ----------------------------------------------------------------------------

def full_rhs(kappa: float, theta: float, dtheta: float, dphi: float) -> Tuple[float, float]:
    """(theta'', phi'') for a unit-speed curve of geodesic curvature kappa (left normal)"""
    s, c = np.sin(theta), np.cos(theta)
    ddtheta = s * c * dphi * dphi - kappa * s * dphi
    ddphi = -2.0 * c / s * dtheta * dphi + kappa * dtheta / s
    return ddtheta, ddphi


def reduced_theta_rhs(kappa: float, theta: float, dtheta: float, orientation: float = 1.0) -> float:
    """theta'' after eliminating phi' through sin(theta) phi' = orientation sqrt(1 - theta'^2)"""
    root = np.sqrt(max(0.0, 1.0 - dtheta * dtheta))
    return np.cos(theta) / np.sin(theta) * (1.0 - dtheta * dtheta) - kappa * orientation * root


def printed_theta_rhs(kappa: float, theta: float, dtheta: float) -> float:
    """-kappa sin(theta) sqrt(1 - theta'^2) - sin(theta) cos(theta) (1 - theta'^2), kept for comparison"""
    root = np.sqrt(max(0.0, 1.0 - dtheta * dtheta))
    return -kappa * np.sin(theta) * root - np.sin(theta) * np.cos(theta) * (1.0 - dtheta * dtheta)


@dataclass(eq=False)
class ParageodesicSolution:
    t: np.ndarray          # arclength on the sphere of radius r
    theta: np.ndarray
    phi: np.ndarray
    dtheta: np.ndarray     # d theta / d tau, tau = t / r
    dphi: np.ndarray
    r: float
    orientation: float
    residual: float

    @property
    def points(self) -> np.ndarray:
        st = np.sin(self.theta)
        return self.r * np.column_stack([st * np.cos(self.phi), st * np.sin(self.phi), np.cos(self.theta)])

    @property
    def endpoint_distance(self) -> float:
        a, b = self.points[0] / self.r, self.points[-1] / self.r
        return float(self.r * np.arctan2(np.linalg.norm(np.cross(a, b)), np.dot(a, b)))


def parageodesic_solve(kappa: Callable[[float], float], lam: float, r: float,
                       init: Tuple[float, float], orientation: float = 1.0, phi0: float = 0.0,
                       samples: int = 201, check_length: bool = True) -> ParageodesicSolution:
    """Curve of geodesic curvature kappa(t), t in [0; lam], on the sphere of radius r"""
    theta0, dtheta0 = (float(v) for v in init)
    if abs(dtheta0) > 1.0:
        raise InvalidInput("|theta'(0)| must not exceed 1", dtheta0=dtheta0)
    if r <= 0 or lam <= 0:
        raise InvalidInput("need positive length and radius", lam=lam, r=r)
    if check_length and lam >= np.pi * r:
        raise InvalidInput("length must stay below pi r", lam=lam, r=r)
    if abs(np.sin(theta0)) < POLE_GUARD:
        raise PoleSingularity("start point sits on a coordinate pole", t=0.0)

    orientation = 1.0 if orientation >= 0 else -1.0
    dphi0 = orientation * np.sqrt(1.0 - dtheta0 ** 2) / np.sin(theta0)

    def rhs(tau, y):
        theta, _, dtheta, dphi = y
        ddtheta, ddphi = full_rhs(r * kappa(r * tau), theta, dtheta, dphi)
        return [dtheta, dphi, ddtheta, ddphi]

    def near_pole(tau, y):
        return abs(np.sin(y[0])) - POLE_GUARD

    near_pole.terminal = True
    near_pole.direction = -1

    tau_end = lam / r
    grid = np.linspace(0.0, tau_end, samples)
    sol = solve_ivp(rhs, (0.0, tau_end), [theta0, phi0, dtheta0, dphi0], method="DOP853",
                    t_eval=grid, rtol=ODE_RTOL, atol=ODE_ATOL, events=near_pole)
    if sol.status == 1:
        raise PoleSingularity("curve runs into a coordinate pole", t=float(sol.t_events[0][0] * r))
    if not sol.success:
        raise InvalidInput(f"parageodesic integration failed: {sol.message}")

    theta, phi, dtheta, dphi = sol.y
    first_integral = np.abs(dtheta ** 2 + np.sin(theta) ** 2 * dphi ** 2 - 1.0)
    mismatch = []
    for tau, th, dth, dph in zip(sol.t, theta, dtheta, dphi):
        k = r * kappa(r * tau)
        full, _ = full_rhs(k, th, dth, dph)
        sign = 1.0 if np.sin(th) * dph >= 0 else -1.0
        mismatch.append(abs(full - reduced_theta_rhs(k, th, dth, sign)))
    residual = float(max(first_integral.max(), max(mismatch)))

    return ParageodesicSolution(t=sol.t * r, theta=theta, phi=phi, dtheta=dtheta, dphi=dphi,
                                r=float(r), orientation=orientation, residual=residual)


def closure_distance(kappa: Callable[[float], float], lam: float, r: float) -> Tuple[float, int]:
    """F_r of a control, starting on the equator; re-centered headings on pole hits"""
    headings = (0.0, np.pi / 4, -np.pi / 4, np.pi / 2)
    for retries, heading in enumerate(headings):
        try:
            sol = parageodesic_solve(kappa, lam, r, init=(np.pi / 2, -np.sin(heading)), samples=2)
            return sol.endpoint_distance, retries
        except PoleSingularity:
            continue
    raise PoleSingularity("every start heading runs into a pole", lam=lam, r=r)


# ----------------------------------------------------------------------------
# Man-over-board minimality
# ----------------------------------------------------------------------------

FOURIER_MODES = 4


def _fourier(rng: np.random.Generator, lam: float) -> Tuple[Callable, Callable]:
    """random trigonometric polynomial g on [0; lam] and its derivative"""
    a = rng.normal(size=FOURIER_MODES + 1)
    b = rng.normal(size=FOURIER_MODES + 1)
    w = 2.0 * np.pi * np.arange(FOURIER_MODES + 1) / lam

    def g(t):
        return float(a[0] + np.sum(a[1:] * np.cos(w[1:] * t) + b[1:] * np.sin(w[1:] * t)))

    def dg(t):
        return float(np.sum(-a[1:] * w[1:] * np.sin(w[1:] * t) + b[1:] * w[1:] * np.cos(w[1:] * t)))

    return g, dg


def _sup(func: Callable, lam: float) -> float:
    grid = np.linspace(0.0, lam, 513)
    return max(float(np.max(np.abs([func(t) for t in grid]))), 1e-300)


def _bounded_control(seed: int, lam: float, bound: float) -> Callable[[float], float]:
    """|kappa| <= bound"""
    rng = np.random.default_rng(seed)
    g, _ = _fourier(rng, lam)
    scale = rng.uniform(0.0, 1.0) * bound / _sup(g, lam)
    return lambda t: scale * g(t)


def _derivative_control(seed: int, lam: float, R: float) -> Callable[[float], float]:
    """kappa = g' with sup |g| <= R"""
    rng = np.random.default_rng(seed)
    g, dg = _fourier(rng, lam)
    scale = rng.uniform(0.0, 1.0) * R / _sup(g, lam)
    return lambda t: scale * dg(t)


def _run_trials(make: Callable[[int], Callable], lam: float, r: float, seeds: Sequence[int],
                threads: int) -> Tuple[np.ndarray, int]:
    def one(seed):
        return closure_distance(make(seed), lam, r)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, seeds))
    else:
        results = [one(seed) for seed in seeds]
    values = np.array([v for v, _ in results])
    return values, int(sum(retries for _, retries in results))


def bump_monotonicity(lam: float, r: float, base: float, count: int = 50,
                      amplitude: float = 0.01) -> Tuple[int, int]:
    """Positive bumps on a constant control must bring the end point closer: (passed, count)"""
    f_base, _ = closure_distance(lambda t: base, lam, r)
    width = 0.05 * lam
    passed = 0
    for center in np.linspace(0.1 * lam, 0.9 * lam, count):
        bumped = (lambda t, c=center: base + amplitude * np.exp(-((t - c) / width) ** 2))
        f_bump, _ = closure_distance(bumped, lam, r)
        if f_bump < f_base:
            passed += 1
    return passed, count


def mob_minimality_test(R: float, lam: float, r: float, trials: int = 500, seed: int = 0,
                        threads: int = 1, bumps: int = 50) -> Dict:
    """Random admissible controls against the extremal constant curvature R / lam"""
    if lam >= np.pi * r:
        raise InvalidInput("length must stay below pi r", lam=lam, r=r)
    if trials < 100:
        raise InvalidInput("need at least 100 trials", trials=trials)
    if R < 0:
        raise InvalidInput("control bound must be nonnegative", R=R)

    K = R / lam
    seeds = [seed ^ i for i in range(trials)]
    f_const, _ = closure_distance(lambda t: K, lam, r)
    f_const_alt, _ = closure_distance(lambda t: 2.0 * K, lam, r)

    sampled, retries = _run_trials(lambda sd: _bounded_control(sd, lam, K), lam, r, seeds, threads)
    literal, literal_retries = _run_trials(lambda sd: _derivative_control(sd, lam, R), lam, r, seeds, threads)
    passed_bumps, bump_count = bump_monotonicity(lam, r, 0.5 * K, bumps) if bumps else (0, 0)

    ok = bool(sampled.min() >= f_const - TOL_MOB)
    report = {
        "R": float(R),
        "lambda": float(lam),
        "r": float(r),
        "trials": int(trials),
        "seed": int(seed),
        "kappa_const": K,
        "f_const": f_const,
        "f_min_sampled": float(sampled.min()),
        "f_median_sampled": float(np.median(sampled)),
        "f_max_sampled": float(sampled.max()),
        "pass": ok,
        "kappa_const_alt": 2.0 * K,
        "f_const_alt": f_const_alt,
        "literal_class": {
            "f_min": float(literal.min()),
            "beating_constant": int(np.sum(literal < f_const - TOL_MOB)),
            "retries": literal_retries,
        },
        "bumps": {"passed": passed_bumps, "count": bump_count},
        "retries": retries,
    }
    logger.info("mob: f_const=%.12g f_min=%.12g pass=%s", f_const, report["f_min_sampled"], ok)
    return report
