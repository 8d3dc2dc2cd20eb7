"""Kinematic tree, model files and submodel decomposition."""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

import jsonschema
import numpy as np
from scipy.spatial.transform import Rotation

from .skinfield import DegenerateTriangulationError, SkinPatch
from .spatial import (
    ProperKinematics,
    SpatialInertia,
    SpatialTransform,
    Twist,
    Wrench,
    apply_inertia,
    compose_transform,
    dual_cross,
    rotation_about,
)

REVOLUTE = "revolute"
FIXED = "fixed"
PARENT_ON_CHILD = "parent_on_child"
CHILD_ON_PARENT = "child_on_parent"


class ModelError(ValueError):
    """Model document is malformed or violates a structural invariant."""


@dataclass(frozen=True, eq=False)
class Link:
    name: str
    inertia: SpatialInertia

    @property
    def frame(self) -> str:
        return self.name


@dataclass(frozen=True, eq=False)
class Joint:
    """Joint between ``parent`` and ``child``.

    ``origin`` is the child frame pose in the parent frame at zero position;
    a revolute joint rotates the child about ``axis`` (child coordinates).
    """

    name: str
    parent: str
    child: str
    kind: str
    axis: np.ndarray
    origin: SpatialTransform

    def __post_init__(self):
        if self.parent == self.child:
            raise ModelError(f"joint {self.name!r} connects {self.parent!r} to itself")
        if self.kind not in (REVOLUTE, FIXED):
            raise ModelError(f"joint {self.name!r}: unsupported kind {self.kind!r}")
        axis = np.array(self.axis, dtype=float)
        if self.kind == REVOLUTE and abs(np.linalg.norm(axis) - 1.0) > 1e-10:
            raise ModelError(f"joint {self.name!r}: axis must be unit length")
        axis.setflags(write=False)
        object.__setattr__(self, "axis", axis)
        if self.origin.from_frame != self.child or self.origin.to_frame != self.parent:
            raise ModelError(f"joint {self.name!r}: origin must map {self.child!r} to {self.parent!r}")

    @property
    def motion_subspace(self) -> np.ndarray:
        if self.kind == FIXED:
            return np.zeros(6)
        return np.concatenate([np.zeros(3), self.axis])

    def transform(self, q: float = 0.0) -> SpatialTransform:
        """Child-to-parent transform at position ``q``."""
        if self.kind == FIXED or q == 0.0:
            return self.origin
        rot = self.origin.rotation @ rotation_about(self.axis, q)
        return SpatialTransform(rot, self.origin.translation, self.child, self.parent)


@dataclass(frozen=True)
class SensorCut:
    """Six-axis sensor on ``joint``; readings are expressed in link ``frame``.

    ``sign`` names which side's wrench is reported: ``parent_on_child`` is the
    wrench the parent exerts on the child.
    """

    joint: str
    frame: str
    sign: str = PARENT_ON_CHILD


@dataclass(frozen=True)
class Submodel:
    id: int
    links: tuple[str, ...]
    base: str
    # (cut joint, acting link D outside, receiving link L inside)
    cuts: tuple[tuple[str, str, str], ...]

    def __contains__(self, link: str) -> bool:
        return link in self.links


class Multibody:
    def __init__(self, links: Sequence[Link], joints: Sequence[Joint],
                 sensor_cuts: Sequence[SensorCut] = (), patches: Mapping[str, SkinPatch] | None = None):
        self.links = tuple(links)
        self.joints = tuple(joints)
        self.sensor_cuts = tuple(sensor_cuts)
        self.patches = dict(patches or {})
        self.link = {l.name: l for l in self.links}
        self.joint = {j.name: j for j in self.joints}
        if len(self.link) != len(self.links):
            raise ModelError("duplicate link names")
        if len(self.joint) != len(self.joints):
            raise ModelError("duplicate joint names")
        self._check_tree()
        self._check_cuts()
        for name, patch in self.patches.items():
            if name not in self.link or patch.link != name:
                raise ModelError(f"patch references unknown link {name!r}")

    def _check_tree(self) -> None:
        if len(self.joints) != len(self.links) - 1:
            raise ModelError(f"{len(self.links)} links need {len(self.links) - 1} joints, got {len(self.joints)}")
        self.parent_joint: dict[str, Joint] = {}
        self.children: dict[str, list[Joint]] = {l.name: [] for l in self.links}
        for j in self.joints:
            for end in (j.parent, j.child):
                if end not in self.link:
                    raise ModelError(f"joint {j.name!r} references unknown link {end!r}")
            if j.child in self.parent_joint:
                raise ModelError(f"link {j.child!r} has more than one parent joint")
            self.parent_joint[j.child] = j
            self.children[j.parent].append(j)
        roots = [l.name for l in self.links if l.name not in self.parent_joint]
        if len(roots) != 1:
            raise ModelError("joints do not form a connected tree (cycle or disconnected links)")
        self.root = roots[0]
        # breadth-first order from the root: parents before children
        self.order: list[str] = []
        self.depth = {self.root: 0}
        queue = deque([self.root])
        while queue:
            name = queue.popleft()
            self.order.append(name)
            for j in self.children[name]:
                self.depth[j.child] = self.depth[name] + 1
                queue.append(j.child)
        if len(self.order) != len(self.links):
            raise ModelError("joints do not form a connected tree (cycle or disconnected links)")

    def _check_cuts(self) -> None:
        seen = set()
        for cut in self.sensor_cuts:
            if cut.joint not in self.joint:
                raise ModelError(f"sensor cut references unknown joint {cut.joint!r}")
            if cut.joint in seen:
                raise ModelError(f"duplicate sensor cut on joint {cut.joint!r}")
            seen.add(cut.joint)
            j = self.joint[cut.joint]
            if cut.frame not in (j.parent, j.child):
                raise ModelError(f"sensor cut {cut.joint!r}: frame {cut.frame!r} is not a side of the joint")
            if cut.sign not in (PARENT_ON_CHILD, CHILD_ON_PARENT):
                raise ModelError(f"sensor cut {cut.joint!r}: unknown sign convention {cut.sign!r}")
        self.cut = {c.joint: c for c in self.sensor_cuts}

    @property
    def n_links(self) -> int:
        return len(self.links)

    def subtree(self, link: str) -> list[str]:
        """Links in the subtree rooted at ``link`` (inclusive)."""
        out, stack = [], [link]
        while stack:
            name = stack.pop()
            out.append(name)
            stack.extend(j.child for j in self.children[name])
        return out

    def neighbors(self, link: str) -> list[tuple[Joint, str]]:
        out = [(j, j.child) for j in self.children[link]]
        if link in self.parent_joint:
            j = self.parent_joint[link]
            out.append((j, j.parent))
        return out

    def joint_positions(self, q) -> dict[str, float]:
        """Accept a mapping by joint name or a sequence aligned with ``joints``."""
        if q is None:
            return {j.name: 0.0 for j in self.joints}
        if isinstance(q, Mapping):
            unknown = set(q) - set(self.joint)
            if unknown:
                raise ModelError(f"unknown joints {sorted(unknown)}")
            return {j.name: float(q.get(j.name, 0.0)) for j in self.joints}
        q = np.asarray(q, dtype=float)
        if q.shape != (len(self.joints),):
            raise ModelError(f"expected {len(self.joints)} joint values, got {q.shape}")
        return {j.name: float(v) for j, v in zip(self.joints, q)}


@dataclass(frozen=True, eq=False)
class FrameState:
    """Per-link proper kinematics and poses in the root link frame."""

    kinematics: dict[str, ProperKinematics]
    poses: dict[str, SpatialTransform]
    q: dict[str, float] = field(default_factory=dict)

    def transform(self, to_link: str, from_link: str) -> SpatialTransform:
        """``to_X^from`` built from the root poses."""
        if to_link == from_link:
            return SpatialTransform.identity(to_link)
        return compose_transform(self.poses[to_link].inverse(), self.poses[from_link])


# ---------------------------------------------------------------- loading

def _schema() -> dict:
    return json.loads(resources.files(__package__).joinpath("model.schema.json").read_text())


def _origin(d: dict | None, child: str, parent: str) -> SpatialTransform:
    d = d or {}
    xyz = d.get("xyz", [0.0, 0.0, 0.0])
    if "rotation" in d:
        rot = np.array(d["rotation"], dtype=float).reshape(3, 3)
    elif "rpy" in d:
        rot = Rotation.from_euler("xyz", d["rpy"]).as_matrix()
    else:
        rot = np.eye(3)
    try:
        return SpatialTransform(rot, xyz, child, parent)
    except ValueError as exc:
        raise ModelError(f"joint origin {parent}->{child}: {exc}") from exc


def load_model(document) -> Multibody:
    """Build a validated :class:`Multibody` from a dict, JSON text or file path."""
    if isinstance(document, (str, Path)) and not str(document).lstrip().startswith("{"):
        document = Path(document).read_text()
    if isinstance(document, str):
        document = json.loads(document)
    try:
        jsonschema.validate(document, _schema())
    except jsonschema.ValidationError as exc:
        raise ModelError(f"model schema violation at {list(exc.absolute_path)}: {exc.message}") from exc

    links = []
    for d in document["links"]:
        try:
            inertia = SpatialInertia(
                d["mass"],
                d.get("com", [0.0, 0.0, 0.0]),
                np.array(d.get("inertia", [0.0] * 9), dtype=float).reshape(3, 3),
            )
        except ValueError as exc:
            raise ModelError(f"link {d['name']!r}: {exc}") from exc
        links.append(Link(d["name"], inertia))
    names = {l.name for l in links}

    joints = []
    for d in document["joints"]:
        for end in (d["parent"], d["child"]):
            if end not in names:
                raise ModelError(f"joint {d['name']!r} references unknown link {end!r}")
        axis = d.get("axis", [0.0, 0.0, 1.0] if d["type"] == REVOLUTE else [0.0, 0.0, 0.0])
        joints.append(Joint(d["name"], d["parent"], d["child"], d["type"], axis,
                            _origin(d.get("origin"), d["child"], d["parent"])))

    cuts = [SensorCut(c["joint"], c["frame"], c.get("sign", PARENT_ON_CHILD))
            for c in document.get("sensor_cuts", [])]
    patches = {}
    for p in document.get("patches", []):
        if p["link"] in patches:
            raise ModelError(f"more than one patch on link {p['link']!r}")
        if p["link"] not in names:
            raise ModelError(f"patch references unknown link {p['link']!r}")
        try:
            patches[p["link"]] = SkinPatch.from_dict(p)
        except DegenerateTriangulationError:
            raise
        except ValueError as exc:
            raise ModelError(f"patch on {p['link']!r}: {exc}") from exc
    return Multibody(links, joints, cuts, patches)


def dump_model(m: Multibody) -> dict:
    def origin(t: SpatialTransform) -> dict:
        return {"xyz": t.translation.tolist(), "rotation": t.rotation.ravel().tolist()}

    return {
        "links": [{"name": l.name, "mass": l.inertia.mass, "com": l.inertia.com.tolist(),
                   "inertia": l.inertia.inertia.ravel().tolist()} for l in m.links],
        "joints": [{"name": j.name, "parent": j.parent, "child": j.child, "type": j.kind,
                    "axis": j.axis.tolist(), "origin": origin(j.origin)} for j in m.joints],
        "sensor_cuts": [{"joint": c.joint, "frame": c.frame, "sign": c.sign} for c in m.sensor_cuts],
        "patches": [p.to_dict() for p in m.patches.values()],
    }


# ---------------------------------------------------------- decomposition

def decompose(m: Multibody) -> list[Submodel]:
    """Split the tree at every sensor cut; one submodel per connected component."""
    cut_joints = set(m.cut)
    label: dict[str, int] = {}
    components: list[list[str]] = []
    for start in m.order:
        if start in label:
            continue
        idx = len(components)
        members = []
        stack = [start]
        label[start] = idx
        while stack:
            name = stack.pop()
            members.append(name)
            for j, other in m.neighbors(name):
                if j.name not in cut_joints and other not in label:
                    label[other] = idx
                    stack.append(other)
        components.append(members)

    out = []
    for idx, members in enumerate(components):
        members = sorted(members, key=m.order.index)
        cuts = []
        for name in members:
            for j, other in m.neighbors(name):
                if j.name in cut_joints:
                    cuts.append((j.name, other, name))
        base = min(members, key=lambda n: (m.depth[n], m.order.index(n)))
        out.append(Submodel(idx, tuple(members), base, tuple(cuts)))
    return out


def outside_neighbors(m: Multibody, sm: Submodel, link: str) -> list[str]:
    """Links joined to ``link`` that belong to a different submodel."""
    return [other for _, other in m.neighbors(link) if other not in sm.links]


# ------------------------------------------------------------- kinematics

def propagate_kinematics(m: Multibody, base: ProperKinematics, q=None, qd=None, qdd=None) -> FrameState:
    """Outward recursion of angular velocity and proper acceleration.

    ``base`` is expressed in the root link frame. Joint values may be given
    by name or in ``m.joints`` order; missing values are zero.
    """
    if base.frame != m.root:
        raise ModelError(f"base kinematics must be in root frame {m.root!r}, got {base.frame!r}")
    q, qd, qdd = m.joint_positions(q), m.joint_positions(qd), m.joint_positions(qdd)
    kin = {m.root: base}
    poses = {m.root: SpatialTransform.identity(m.root)}
    for name in m.order[1:]:
        j = m.parent_joint[name]
        X = j.transform(q[j.name])
        R, p = X.rotation, X.translation
        parent = kin[j.parent]
        w_p = parent.ang_vel
        dw_p = parent.proper_acc[3:]
        a_p = parent.proper_acc[:3]
        w = R.T @ w_p
        dw = R.T @ dw_p
        a = R.T @ (a_p + np.cross(dw_p, p) + np.cross(w_p, np.cross(w_p, p)))
        if j.kind == REVOLUTE:
            dw = dw + j.axis * qdd[j.name] + np.cross(w, j.axis * qd[j.name])
            w = w + j.axis * qd[j.name]
        kin[name] = ProperKinematics(np.concatenate([a, dw]), w, name)
        poses[name] = compose_transform(poses[j.parent], X)
    return FrameState(kin, poses, q)


def net_wrench(link: Link, k: ProperKinematics) -> Wrench:
    """``M alpha + [0; w] x* M [0; w]`` in the link frame."""
    if k.frame != link.frame:
        raise ValueError(f"kinematics in {k.frame!r} for link {link.name!r}")
    spin = np.concatenate([np.zeros(3), k.ang_vel])
    momentum = apply_inertia(link.inertia, spin, link.frame)
    return apply_inertia(link.inertia, k.proper_acc, link.frame) + dual_cross(Twist.from_vector(spin, link.frame), momentum)
