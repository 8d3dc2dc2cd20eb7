"""Synthetic ground truth for round-trip validation.

The inverse-dynamics oracle here deliberately shares no code with
:mod:`skinwrench.estimator`: it rebuilds link poses from homogeneous
matrices, computes Newton-Euler balances about each center of mass and sums
subtree wrenches in the root frame.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.spatial import Delaunay, cKDTree
from scipy.spatial.transform import Rotation

from .model import CHILD_ON_PARENT, FIXED, Multibody, load_model, propagate_kinematics
from .skinfield import PressureFrame, SkinPatch
from .spatial import ProperKinematics, Wrench

GRAVITY = (0.0, 0.0, -9.81)
DISK = "disk"
GAUSSIAN = "gaussian"
GAUSSIAN_REACH = 6.0  # truncation radius in standard deviations


class ScenarioError(ValueError):
    pass


# ------------------------------------------------------------------ oracle

@dataclass(frozen=True, eq=False)
class OracleResult:
    cut_wrenches: dict[str, Wrench]   # as the sensor reports them
    torques: dict[str, float]
    phi: dict[str, Wrench]            # net wrench per link, link frame
    joint_wrenches: dict[str, np.ndarray] = field(default_factory=dict)  # parent on child, child frame


def _homogeneous_poses(m: Multibody, q: Mapping[str, float]) -> dict[str, np.ndarray]:
    poses = {m.root: np.eye(4)}
    pending = [m.root]
    while pending:
        parent = pending.pop()
        for j in m.children[parent]:
            local = np.eye(4)
            rot = j.origin.rotation
            if j.kind != FIXED:
                rot = rot @ Rotation.from_rotvec(j.axis * q.get(j.name, 0.0)).as_matrix()
            local[:3, :3] = rot
            local[:3, 3] = j.origin.translation
            poses[j.child] = poses[parent] @ local
            pending.append(j.child)
    return poses


def _newton_euler(mass, com, inertia_origin, acc, ang_vel, ang_acc):
    """Net non-gravitational wrench about the link origin, from the COM balance."""
    c = np.asarray(com)
    inertia_com = inertia_origin - mass * (c @ c * np.eye(3) - np.outer(c, c))
    a_com = acc + np.cross(ang_acc, c) + np.cross(ang_vel, np.cross(ang_vel, c))
    force = mass * a_com
    torque_com = inertia_com @ ang_acc + np.cross(ang_vel, inertia_com @ ang_vel)
    return force, torque_com + np.cross(c, force)


def inverse_dynamics_oracle(m: Multibody, state, external: Mapping[str, Wrench] | None = None) -> OracleResult:
    """Cut readings, joint torques and net wrenches for the given motion and loads."""
    external = external or {}
    poses = _homogeneous_poses(m, state.q)
    phi, balance_world = {}, {}
    for link in m.links:
        k = state.kinematics[link.name]
        I = link.inertia
        f, mu = _newton_euler(I.mass, I.com, I.inertia, k.proper_acc[:3], k.ang_vel, k.proper_acc[3:])
        phi[link.name] = Wrench(f, mu, link.name)
        ext = external.get(link.name)
        if ext is not None:
            if ext.frame != link.name:
                raise ValueError(f"external wrench on {link.name!r} given in {ext.frame!r}")
            f, mu = f - ext.force, mu - ext.moment
        R, p = poses[link.name][:3, :3], poses[link.name][:3, 3]
        fw = R @ f
        balance_world[link.name] = (fw, R @ mu + np.cross(p, fw))

    torques, cut_wrenches, joint_wrenches = {}, {}, {}
    for j in m.joints:
        members = set()
        frontier = [j.child]
        while frontier:
            name = frontier.pop()
            members.add(name)
            frontier.extend(c.child for c in m.children[name])
        fw = sum(balance_world[n][0] for n in members)
        mw = sum(balance_world[n][1] for n in members)
        R, p = poses[j.child][:3, :3], poses[j.child][:3, 3]
        f_child = R.T @ fw
        mu_child = R.T @ (mw - np.cross(p, fw))
        joint_wrenches[j.name] = np.concatenate([f_child, mu_child])
        torques[j.name] = 0.0 if j.kind == FIXED else float(j.axis @ mu_child)
        cut = m.cut.get(j.name)
        if cut is not None:
            sign = -1.0 if cut.sign == CHILD_ON_PARENT else 1.0
            if cut.frame == j.child:
                f_out, mu_out = f_child, mu_child
            else:
                Rp, pp = poses[j.parent][:3, :3], poses[j.parent][:3, 3]
                f_out = Rp.T @ fw
                mu_out = Rp.T @ (mw - np.cross(pp, fw))
            cut_wrenches[j.name] = Wrench(sign * f_out, sign * mu_out, cut.frame)
    return OracleResult(cut_wrenches, torques, phi, joint_wrenches)


def support_wrench(m: Multibody, state, external: Mapping[str, Wrench]) -> Wrench:
    """Root-frame wrench at the root origin that balances the whole body."""
    poses = _homogeneous_poses(m, state.q)
    total_f, total_mu = np.zeros(3), np.zeros(3)
    for link in m.links:
        k = state.kinematics[link.name]
        I = link.inertia
        f, mu = _newton_euler(I.mass, I.com, I.inertia, k.proper_acc[:3], k.ang_vel, k.proper_acc[3:])
        ext = external.get(link.name)
        if ext is not None:
            f, mu = f - ext.force, mu - ext.moment
        R, p = poses[link.name][:3, :3], poses[link.name][:3, 3]
        fw = R @ f
        total_f += fw
        total_mu += R @ mu + np.cross(p, fw)
    return Wrench(total_f, total_mu, m.root)


# -------------------------------------------------------------- footprints

@dataclass(frozen=True)
class FootprintSpec:
    """Continuous load on a patch.

    ``angle`` is measured between the force line and the surface plane, so
    ``pi/2`` is normal incidence; the tangential part points along +u.
    """

    shape: str
    center: tuple[float, float]
    scale: float
    peak: float
    angle: float = math.pi / 2

    def __post_init__(self):
        if self.shape not in (DISK, GAUSSIAN):
            raise ValueError(f"unknown footprint shape {self.shape!r}")
        if not self.scale > 0:
            raise ValueError("footprint scale must be positive")
        if not self.peak >= 0:
            raise ValueError("footprint peak must be non-negative")
        if not 0.0 <= self.angle <= math.pi / 2:
            raise ValueError("incidence angle must lie in [0, pi/2]")

    @classmethod
    def from_dict(cls, d: dict) -> "FootprintSpec":
        return cls(d["shape"], tuple(d["center"]), d["scale"], d["peak"], d.get("angle", math.pi / 2))

    def pressure(self, uv: np.ndarray) -> np.ndarray:
        """Magnitude of the applied traction at chart points."""
        d2 = ((np.atleast_2d(uv) - np.asarray(self.center)) ** 2).sum(axis=1)
        if self.shape == DISK:
            return np.where(d2 <= self.scale ** 2, self.peak, 0.0)
        return self.peak * np.exp(-0.5 * d2 / self.scale ** 2)

    @property
    def reach(self) -> float:
        return self.scale if self.shape == DISK else GAUSSIAN_REACH * self.scale


class PatchSurface:
    """Piecewise-linear surface through the taxel centers.

    Outside the centers' hull the affine map of the nearest center's
    triangle is extended, which is exact for flat patches.
    """

    def __init__(self, patch: SkinPatch):
        uv, pos, nrm = patch.uv, patch.positions, patch.normals
        self.tri = Delaunay(uv)
        self.tree = cKDTree(uv)
        self.pos, self.nrm, self.uv = pos, nrm, uv
        jac = []
        for simp in self.tri.simplices:
            duv = uv[simp[1:]] - uv[simp[0]]
            jac.append(np.linalg.solve(duv, pos[simp[1:]] - pos[simp[0]]))
        self.jac = np.array(jac)  # (n_tri, 2, 3): rows dr/du, dr/dv
        self.fallback = np.array([self.tri.vertex_to_simplex[i] for i in range(len(uv))])

    def evaluate(self, uv: np.ndarray):
        """Positions, unit normals, unit +u tangents and area factors."""
        simplex = self.tri.find_simplex(uv)
        outside = simplex < 0
        if np.any(outside):
            _, nearest = self.tree.query(uv[outside])
            simplex = simplex.copy()
            simplex[outside] = self.fallback[nearest]
        T = self.tri.transform[simplex]
        b = np.einsum("ijk,ik->ij", T[:, :2, :], uv - T[:, 2, :])
        bary = np.column_stack([b, 1.0 - b.sum(axis=1)])
        verts = self.tri.simplices[simplex]
        pos = np.einsum("ij,ijk->ik", bary, self.pos[verts])
        nrm = np.einsum("ij,ijk->ik", bary, self.nrm[verts])
        nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
        J = self.jac[simplex]
        tan = J[:, 0, :] - np.einsum("ij,ij->i", J[:, 0, :], nrm)[:, None] * nrm
        tan /= np.linalg.norm(tan, axis=1, keepdims=True)
        area = np.linalg.norm(np.cross(J[:, 0, :], J[:, 1, :]), axis=1)
        return pos, nrm, tan, area


def footprint_truth(patch: SkinPatch, fp: FootprintSpec, n_radial: int = 48, n_angular: int = 96,
                    surface: PatchSurface | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Total force and moment (link origin) of the continuous footprint.

    Polar Gauss-Legendre quadrature about the footprint center, so the disk
    edge is integrated exactly.
    """
    if fp.peak == 0.0:
        return np.zeros(3), np.zeros(3)
    surface = surface or PatchSurface(patch)
    x, w = np.polynomial.legendre.leggauss(n_radial)
    rho = 0.5 * fp.reach * (x + 1.0)
    w_rho = 0.5 * fp.reach * w * rho
    phi = 2.0 * np.pi * np.arange(n_angular) / n_angular
    R, PHI = np.meshgrid(rho, phi, indexing="ij")
    uv = np.asarray(fp.center) + np.column_stack([(R * np.cos(PHI)).ravel(), (R * np.sin(PHI)).ravel()])
    weight = np.repeat(w_rho, n_angular) * (2.0 * np.pi / n_angular)
    pos, nrm, tan, area = surface.evaluate(uv)
    mag = fp.pressure(uv) * weight * area
    direction = math.sin(fp.angle) * nrm + math.cos(fp.angle) * tan
    traction = mag[:, None] * direction
    return traction.sum(axis=0), np.cross(pos, traction).sum(axis=0)


def synthesize_pressures(patch: SkinPatch, fp: FootprintSpec, timestamp: float = 0.0,
                         surface: PatchSurface | None = None) -> tuple[PressureFrame, np.ndarray, np.ndarray]:
    """Taxel readings (normal component at each center) plus the true force and moment."""
    u1, u2, v1, v2 = patch.chart
    cu, cv = fp.center
    if not (u1 <= cu <= u2 and v1 <= cv <= v2):
        raise ValueError("footprint center lies outside the chart")
    pressures = fp.pressure(patch.uv) * math.sin(fp.angle)
    force, moment = footprint_truth(patch, fp, surface=surface)
    return PressureFrame(patch.link, pressures, timestamp), force, moment


def quantize_and_noise(frame: PressureFrame, bits: int, ceiling: float, seed=None, sigma: float = 0.0) -> PressureFrame:
    """Uniform ``2**bits``-level quantization of ``[0, ceiling]`` after optional Gaussian noise."""
    if not 1 <= bits <= 16:
        raise ValueError("bits must lie in [1, 16]")
    p = np.array(frame.pressures, dtype=float)
    if sigma > 0.0:
        p = p + np.random.default_rng(seed).normal(0.0, sigma, size=p.shape)
    step = ceiling / (2 ** bits - 1)
    levels = np.clip(np.round(np.clip(p, 0.0, ceiling) / step), 0, 2 ** bits - 1)
    return PressureFrame(frame.link, levels * step, frame.timestamp)


# --------------------------------------------------------------- scenarios

@dataclass(frozen=True, eq=False)
class InjectedContact:
    id: str
    link: str
    start: float = -math.inf
    end: float = math.inf
    point: np.ndarray | None = None
    wrench: np.ndarray | None = None      # [f; mu] at ``point``, link axes
    footprint: FootprintSpec | None = None
    kind: str = "full"                    # hypothesis written to the log

    def active(self, t: float) -> bool:
        return self.start <= t <= self.end

    def link_wrench(self) -> Wrench:
        w = np.asarray(self.wrench, dtype=float)
        p = np.zeros(3) if self.point is None else np.asarray(self.point, dtype=float)
        return Wrench(w[:3], w[3:] + np.cross(p, w[:3]), self.link)


@dataclass(frozen=True, eq=False)
class TrajectoryPoint:
    t: float
    q: dict
    qd: dict
    qdd: dict
    base_rotation: np.ndarray
    base_acc: np.ndarray
    base_ang_vel: np.ndarray
    base_ang_acc: np.ndarray

    def base_kinematics(self, frame: str, gravity) -> ProperKinematics:
        lin = self.base_rotation.T @ (self.base_acc - np.asarray(gravity, dtype=float))
        return ProperKinematics(np.concatenate([lin, self.base_ang_acc]), self.base_ang_vel, frame)


@dataclass(frozen=True, eq=False)
class NoiseSpec:
    bits: int | None = None
    ceiling: float = 180e3
    sigma: float = 0.0


@dataclass(frozen=True, eq=False)
class Scenario:
    model: Multibody
    trajectory: tuple[TrajectoryPoint, ...]
    contacts: tuple[InjectedContact, ...] = ()
    noise: NoiseSpec = NoiseSpec()
    seed: int = 0
    gravity: tuple[float, float, float] = GRAVITY
    support: bool = True

    def __post_init__(self):
        times = [p.t for p in self.trajectory]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ScenarioError("trajectory times must be strictly increasing")
        ids = [c.id for c in self.contacts]
        if len(set(ids)) != len(ids):
            raise ScenarioError("duplicate contact ids")
        for c in self.contacts:
            if c.link not in self.model.link:
                raise ScenarioError(f"contact {c.id!r} references unknown link {c.link!r}")
            if c.footprint is not None and c.link not in self.model.patches:
                raise ScenarioError(f"footprint contact {c.id!r} on {c.link!r}, which has no skin patch")
            if c.footprint is None and c.wrench is None:
                raise ScenarioError(f"contact {c.id!r} needs a wrench or a footprint")

    @classmethod
    def from_dict(cls, d: dict, base_dir: Path | None = None) -> "Scenario":
        try:
            model_doc = d["model"]
            if isinstance(model_doc, str):
                model_doc = Path(base_dir or ".", model_doc)
            model = load_model(model_doc)
            traj = []
            for p in d.get("trajectory", []):
                base = p.get("base", {})
                traj.append(TrajectoryPoint(
                    float(p["t"]), dict(p.get("q", {})), dict(p.get("qd", {})), dict(p.get("qdd", {})),
                    np.array(base.get("rotation", np.eye(3).ravel()), dtype=float).reshape(3, 3),
                    np.array(base.get("acc", [0.0, 0.0, 0.0]), dtype=float),
                    np.array(base.get("ang_vel", [0.0, 0.0, 0.0]), dtype=float),
                    np.array(base.get("ang_acc", [0.0, 0.0, 0.0]), dtype=float),
                ))
            contacts = []
            for i, c in enumerate(d.get("contacts", [])):
                fp = c.get("footprint")
                contacts.append(InjectedContact(
                    str(c.get("id", f"c{i}")), c["link"],
                    float(c.get("start", -math.inf)), float(c.get("end", math.inf)),
                    None if c.get("point") is None else np.array(c["point"], dtype=float),
                    None if c.get("wrench") is None else np.array(c["wrench"], dtype=float),
                    None if fp is None else FootprintSpec.from_dict(fp),
                    c.get("kind", "full"),
                ))
            noise = d.get("noise", {})
            return cls(
                model, tuple(traj), tuple(contacts),
                NoiseSpec(noise.get("bits"), float(noise.get("ceiling", 180e3)), float(noise.get("sigma", 0.0))),
                int(d.get("seed", 0)), tuple(d.get("gravity", GRAVITY)), bool(d.get("support", True)),
            )
        except ScenarioError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ScenarioError(f"invalid scenario: {exc}") from exc


def _vec(a) -> list[float]:
    return [float(x) for x in np.asarray(a).ravel()]


def generate_log(s: Scenario, seed: int | None = None) -> tuple[list[dict], list[dict]]:
    """Sensor-log frames and the matching ground-truth sidecar records."""
    m = s.model
    seed = s.seed if seed is None else seed
    surfaces = {link: PatchSurface(p) for link, p in m.patches.items()}
    frames, truth = [], []
    for step, point in enumerate(s.trajectory):
        t = point.t
        state = propagate_kinematics(m, point.base_kinematics(m.root, s.gravity), point.q, point.qd, point.qdd)
        external: dict[str, Wrench] = {}
        contact_truth: dict[str, dict] = {}
        pressures = {link: np.zeros(len(p)) for link, p in m.patches.items()}
        hypotheses = []
        for c in s.contacts:
            if not c.active(t):
                continue
            if c.footprint is not None:
                frame, force, moment = synthesize_pressures(m.patches[c.link], c.footprint, t, surfaces[c.link])
                pressures[c.link] += frame.pressures
                w = Wrench(force, moment, c.link)
            else:
                w = c.link_wrench()
                h = {"id": c.id, "link": c.link, "kind": c.kind,
                     "position": _vec(np.zeros(3) if c.point is None else c.point)}
                if c.kind == "norm":
                    f = np.asarray(c.wrench[:3], dtype=float)
                    h["normal"] = _vec(f / np.linalg.norm(f))
                hypotheses.append(h)
            external[c.link] = external[c.link] + w if c.link in external else w
            contact_truth[c.id] = {"link": c.link, "wrench": _vec(w.vector)}
        if s.support:
            sup = support_wrench(m, state, external)
            external[m.root] = external[m.root] + sup if m.root in external else sup
            contact_truth["support"] = {"link": m.root, "wrench": _vec(sup.vector)}
            hypotheses.insert(0, {"id": "support", "link": m.root, "kind": "full", "position": [0.0, 0.0, 0.0]})
        oracle = inverse_dynamics_oracle(m, state, external)

        skin = {}
        for k, (link, p) in enumerate(pressures.items()):
            frame = PressureFrame(link, p, t)
            if s.noise.bits is not None:
                frame = quantize_and_noise(frame, s.noise.bits, s.noise.ceiling, [seed, step, k], s.noise.sigma)
            skin[link] = _vec(frame.pressures)
        base = state.kinematics[m.root]
        frames.append({
            "t": t,
            "q": {j.name: float(point.q.get(j.name, 0.0)) for j in m.joints},
            "qd": {j.name: float(point.qd.get(j.name, 0.0)) for j in m.joints},
            "qdd": {j.name: float(point.qdd.get(j.name, 0.0)) for j in m.joints},
            "base": {"proper_acc": _vec(base.proper_acc), "ang_vel": _vec(base.ang_vel)},
            "ft": {name: _vec(w.vector) for name, w in oracle.cut_wrenches.items()},
            "skin": skin,
            "contacts": hypotheses,
        })
        truth.append({
            "t": t,
            "contacts": contact_truth,
            "external": {link: _vec(w.vector) for link, w in external.items()},
            "torques": oracle.torques,
        })
    return frames, truth


def write_jsonl(path: Path, records: Sequence[dict]) -> None:
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps(r))
            fh.write("\n")


def sidecar_path(log_path: Path) -> Path:
    log_path = Path(log_path)
    return log_path.with_name(log_path.stem + ".truth.jsonl")


# ------------------------------------------------------------------ fixtures

def flat_grid_patch(link: str, nu: int, nv: int, pitch: float, radius: float, origin=(0.0, 0.0, 0.0),
                    normal=(0.0, 0.0, 1.0), area: float | None = None) -> SkinPatch:
    """Rectangular taxel grid in a plane parallel to xy; u maps to x and v to y."""
    from .skinfield import Taxel

    area = math.pi * radius ** 2 if area is None else area
    o = np.asarray(origin, dtype=float)
    taxels = []
    for j in range(nv):
        for i in range(nu):
            u, v = i * pitch, j * pitch
            taxels.append(Taxel(j * nu + i, (u, v), o + (u, v, 0.0), normal, radius, area))
    return SkinPatch(link, tuple(taxels))


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    return Rotation.random(random_state=rng).as_matrix()


def random_inertia(rng: np.random.Generator):
    from .spatial import SpatialInertia

    mass = rng.uniform(0.2, 3.0)
    com = rng.uniform(-0.2, 0.2, 3)
    principal = rng.uniform(0.01, 0.1, 3)
    # triangle inequality keeps the principal moments physical
    principal = np.array([principal[1] + principal[2], principal[0] + principal[2], principal[0] + principal[1]]) * 0.5
    R = random_rotation(rng)
    return SpatialInertia.from_com_inertia(mass, com, R @ np.diag(principal) @ R.T)


def random_multibody(rng: np.random.Generator, n_links: int, cuts: Sequence[int] = (), chain: bool = False,
                     fixed_fraction: float = 0.0) -> Multibody:
    """Random tree; joint ``k`` attaches link ``k+1``. ``cuts`` lists joint indices with sensors."""
    from .model import Joint, Link, SensorCut
    from .spatial import SpatialTransform

    links = [Link(f"l{i}", random_inertia(rng)) for i in range(n_links)]
    joints, sensor_cuts = [], []
    for k in range(n_links - 1):
        child = k + 1
        parent = k if chain else int(rng.integers(0, child))
        kind = FIXED if (rng.random() < fixed_fraction or k in cuts) else "revolute"
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        origin = SpatialTransform(random_rotation(rng), rng.uniform(-0.4, 0.4, 3), f"l{child}", f"l{parent}")
        joints.append(Joint(f"j{k}", f"l{parent}", f"l{child}", kind, axis, origin))
        if k in cuts:
            frame = f"l{child}" if rng.random() < 0.5 else f"l{parent}"
            sign = "parent_on_child" if rng.random() < 0.5 else CHILD_ON_PARENT
            sensor_cuts.append(SensorCut(f"j{k}", frame, sign))
    return Multibody(links, joints, sensor_cuts)


def random_state(rng: np.random.Generator, m: Multibody, gravity=GRAVITY):
    """Random base motion and joint trajectory sample, propagated to every link."""
    R = random_rotation(rng)
    lin = R.T @ (rng.normal(size=3) - np.asarray(gravity))
    base = ProperKinematics(np.concatenate([lin, rng.normal(size=3)]), rng.normal(size=3), m.root)
    n = len(m.joints)
    return propagate_kinematics(m, base, rng.uniform(-np.pi, np.pi, n), rng.normal(size=n), rng.normal(size=n))


def random_wrench(rng: np.random.Generator, link: str, scale: float = 10.0) -> Wrench:
    return Wrench(rng.normal(scale=scale, size=3), rng.normal(scale=scale / 5, size=3), link)
