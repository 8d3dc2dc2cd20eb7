"""External wrench estimation per submodel and joint-torque recovery."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .model import (
    CHILD_ON_PARENT,
    FrameState,
    Multibody,
    SensorCut,
    Submodel,
    decompose,
    net_wrench,
)
from .skinfield import SkinContact
from .spatial import FrameMismatchError, SpatialTransform, Wrench, compose_transform, transform_wrench

FULL = "full"
FORCE = "force"
NORM = "norm"
KNOWN = "known"
WIDTH = {FULL: 6, FORCE: 3, NORM: 1, KNOWN: 0}
PINV_RCOND = 1e-10


class EstimationError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ContactSpec:
    """A contact hypothesis on ``link``.

    ``frame`` is the contact frame pose in the link frame. Unknowns are
    expressed in the contact frame; ``normal`` (contact coordinates) is the
    force direction for ``norm`` contacts and ``known`` carries the measured
    wrench (link or contact frame).
    """

    link: str
    kind: str
    frame: SpatialTransform
    normal: np.ndarray | None = None
    known: Wrench | None = None

    def __post_init__(self):
        if self.kind not in WIDTH:
            raise EstimationError(f"unknown contact kind {self.kind!r}")
        if self.frame.to_frame != self.link:
            raise EstimationError(f"contact frame must map into link {self.link!r}")
        if self.kind == NORM:
            if self.normal is None:
                raise EstimationError("force-norm contact needs a surface normal")
            n = np.array(self.normal, dtype=float)
            if abs(np.linalg.norm(n) - 1.0) > 1e-10:
                raise EstimationError("surface normal must be unit length")
            n.setflags(write=False)
            object.__setattr__(self, "normal", n)
        if self.kind == KNOWN:
            if self.known is None:
                raise EstimationError("known contact needs a wrench")
            if self.known.frame not in (self.link, self.frame.from_frame):
                raise EstimationError(f"known wrench frame {self.known.frame!r} is neither link nor contact frame")

    @staticmethod
    def _frame(link: str, position=None, rotation=None, name: str | None = None) -> SpatialTransform:
        return SpatialTransform(
            np.eye(3) if rotation is None else rotation,
            np.zeros(3) if position is None else position,
            name or f"{link}/contact",
            link,
        )

    @classmethod
    def full(cls, link, position=None, rotation=None, name=None) -> "ContactSpec":
        return cls(link, FULL, cls._frame(link, position, rotation, name))

    @classmethod
    def force(cls, link, position=None, rotation=None, name=None) -> "ContactSpec":
        return cls(link, FORCE, cls._frame(link, position, rotation, name))

    @classmethod
    def norm(cls, link, position, normal, name=None) -> "ContactSpec":
        return cls(link, NORM, cls._frame(link, position, None, name), normal=np.asarray(normal, dtype=float))

    @classmethod
    def known_wrench(cls, link, wrench: Wrench, name=None) -> "ContactSpec":
        return cls(link, KNOWN, cls._frame(link, None, None, name), known=wrench)

    @property
    def width(self) -> int:
        return WIDTH[self.kind]

    def known_in_link(self) -> Wrench:
        if self.known.frame == self.link:
            return self.known
        return transform_wrench(self.frame, self.known)


@dataclass(frozen=True, eq=False)
class ContactProblem:
    A: np.ndarray
    b: np.ndarray
    layout: tuple[tuple[int, str, slice], ...]
    contacts: tuple[ContactSpec, ...]
    base: str

    @property
    def unknowns(self) -> int:
        return self.A.shape[1]


@dataclass(frozen=True, eq=False)
class ContactEstimate:
    spec: ContactSpec
    wrench: Wrench
    magnitude: float | None = None  # signed scalar of a force-norm contact

    @property
    def pulling(self) -> bool:
        return self.magnitude is not None and self.magnitude < 0.0


@dataclass(frozen=True, eq=False)
class ContactSolution:
    contacts: tuple[ContactEstimate, ...]
    x: np.ndarray
    residual: np.ndarray
    residual_norm: float
    rank: int
    unknowns: int

    @property
    def rank_deficient(self) -> bool:
        return self.rank < self.unknowns


@dataclass(frozen=True, eq=False)
class JointTorques:
    torques: dict[str, float]
    wrenches: dict[str, Wrench] = field(default_factory=dict)  # parent on child, child frame

    def __getitem__(self, joint: str) -> float:
        return self.torques[joint]

    def as_array(self, joints: Sequence[str]) -> np.ndarray:
        return np.array([self.torques[j] for j in joints])


def single_body_external_wrench(link, kinematics, sensed: Wrench) -> Wrench:
    """Newton-Euler balance of one body: ``phi - f_s``."""
    phi = net_wrench(link, kinematics)
    if sensed.frame != phi.frame:
        raise FrameMismatchError(f"sensed wrench in {sensed.frame!r}, body frame {phi.frame!r}")
    return phi - sensed


def contact_columns(c: ContactSpec, base_from_contact: SpatialTransform | None = None) -> np.ndarray:
    """Columns of ``A`` for one contact; ``base_from_contact`` defaults to the link frame."""
    X = (base_from_contact or c.frame).force_matrix()
    if c.kind == FULL:
        return X
    if c.kind == FORCE:
        return X[:, :3]
    if c.kind == NORM:
        return X[:, :3] @ c.normal[:, None]
    return np.zeros((6, 0))


def cut_wrench_on(m: Multibody, state: FrameState, cut: SensorCut, reading: Wrench, receiver: str) -> Wrench:
    """Wrench that the far side of ``cut`` exerts on ``receiver``, in the receiver frame."""
    joint = m.joint[cut.joint]
    if reading.frame != cut.frame:
        raise FrameMismatchError(f"reading for {cut.joint!r} in {reading.frame!r}, expected {cut.frame!r}")
    if receiver not in (joint.parent, joint.child):
        raise EstimationError(f"{receiver!r} is not a side of {cut.joint!r}")
    on_child = reading if cut.sign != CHILD_ON_PARENT else -reading
    on_receiver = on_child if receiver == joint.child else -on_child
    return transform_wrench(state.transform(receiver, cut.frame), on_receiver)


def assemble_problem(m: Multibody, sm: Submodel, state: FrameState,
                     cut_measurements: Mapping[str, Wrench], contacts: Sequence[ContactSpec]) -> ContactProblem:
    base = sm.base
    blocks, layout = [], []
    col = 0
    b = np.zeros(6)
    for link in sm.links:
        phi = net_wrench(m.link[link], state.kinematics[link])
        b += transform_wrench(state.transform(base, link), phi).vector
    for joint, acting, receiving in sm.cuts:
        if joint not in cut_measurements:
            raise EstimationError(f"missing measurement for sensor cut {joint!r}")
        f = cut_wrench_on(m, state, m.cut[joint], cut_measurements[joint], receiving)
        b -= transform_wrench(state.transform(base, receiving), f).vector
    for i, c in enumerate(contacts):
        if c.link not in sm.links:
            raise EstimationError(f"contact on {c.link!r} is outside submodel {sm.id}")
        X = compose_transform(state.transform(base, c.link), c.frame)
        if c.kind == KNOWN:
            b -= transform_wrench(state.transform(base, c.link), c.known_in_link()).vector
        cols = contact_columns(c, X)
        blocks.append(cols)
        layout.append((i, c.kind, slice(col, col + cols.shape[1])))
        col += cols.shape[1]
    A = np.hstack(blocks) if blocks else np.zeros((6, 0))
    return ContactProblem(A, b, tuple(layout), tuple(contacts), base)


def min_norm_solve(A: np.ndarray, b: np.ndarray, rcond: float = PINV_RCOND) -> tuple[np.ndarray, int]:
    """Minimum-norm least-squares solution through a truncated SVD."""
    if A.shape[1] == 0:
        return np.zeros(0), 0
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    keep = s > rcond * s[0] if s.size and s[0] > 0 else np.zeros_like(s, dtype=bool)
    coeffs = (U[:, keep].T @ b) / s[keep]
    return Vt[keep].T @ coeffs, int(keep.sum())


def solve_problem(p: ContactProblem) -> ContactSolution:
    x, rank = min_norm_solve(p.A, p.b)
    residual = p.A @ x - p.b
    estimates = []
    for i, kind, span in p.layout:
        c = p.contacts[i]
        xi = x[span]
        magnitude = None
        if kind == KNOWN:
            wrench = c.known_in_link()
        else:
            if kind == FULL:
                local = Wrench.from_vector(xi, c.frame.from_frame)
            elif kind == FORCE:
                local = Wrench(xi, np.zeros(3), c.frame.from_frame)
            else:
                magnitude = float(xi[0])
                local = Wrench(c.normal * magnitude, np.zeros(3), c.frame.from_frame)
            wrench = transform_wrench(c.frame, local)
        estimates.append(ContactEstimate(c, wrench, magnitude))
    return ContactSolution(tuple(estimates), x, residual, float(np.linalg.norm(residual)), rank, p.unknowns)


def _external_by_link(m: Multibody, external, skin_contacts: Iterable[SkinContact]) -> dict[str, Wrench]:
    """Sum every external wrench acting on each link, in the link frame."""
    out = {l.name: Wrench.zero(l.name) for l in m.links}
    items = external.items() if isinstance(external, Mapping) else ((w.frame, w) for w in external)
    for link, w in items:
        if w.frame != link:
            raise FrameMismatchError(f"external wrench on {link!r} expressed in {w.frame!r}")
        out[link] = out[link] + w
    for k in skin_contacts:
        out[k.link] = out[k.link] + k.wrench
    return out


def joint_torques(m: Multibody, state: FrameState, external=None, skin_contacts: Iterable[SkinContact] = ()) -> JointTorques:
    """Inward recursion of joint wrenches and their projection on the joint axes.

    The wrench a parent exerts on child ``F`` is the sum over the subtree at
    ``F`` of ``phi_L`` minus every external wrench on ``L`` (estimated or
    measured by the skin), expressed in ``F``.
    """
    ext = _external_by_link(m, external or {}, skin_contacts)
    acc = {}
    for name in reversed(m.order):
        w = net_wrench(m.link[name], state.kinematics[name]) - ext[name]
        for j in m.children[name]:
            w = w + transform_wrench(m.joint[j.name].transform(state.q[j.name]), acc[j.child])
        acc[name] = w
    torques, wrenches = {}, {}
    for j in m.joints:
        f = acc[j.child]
        wrenches[j.name] = f
        torques[j.name] = float(j.motion_subspace @ f.vector)
    return JointTorques(torques, wrenches)


def joint_wrench_from_parent_side(m: Multibody, state: FrameState, joint: str, external=None,
                                  skin_contacts: Iterable[SkinContact] = ()) -> Wrench:
    """Wrench the child exerts on the parent across ``joint``, in the parent frame.

    Sums over every link outside the child subtree; on consistent data it is
    the reaction of :func:`joint_torques`' wrench.
    """
    ext = _external_by_link(m, external or {}, skin_contacts)
    j = m.joint[joint]
    inside = set(m.subtree(j.child))
    total = Wrench.zero(j.parent)
    for name in m.order:
        if name in inside:
            continue
        w = net_wrench(m.link[name], state.kinematics[name]) - ext[name]
        total = total + transform_wrench(state.transform(j.parent, name), w)
    return total


def skin_known_contacts(skin_contacts: Iterable[SkinContact]) -> list[ContactSpec]:
    return [ContactSpec.known_wrench(k.link, k.wrench, name=f"{k.link}/skin{i}") for i, k in enumerate(skin_contacts)]


def estimate_frame(m: Multibody, state: FrameState, cut_measurements: Mapping[str, Wrench],
                   skin_contacts: Sequence[SkinContact], unknown_contacts: Sequence[ContactSpec],
                   submodels: Sequence[Submodel] | None = None) -> tuple[list[ContactSolution], JointTorques]:
    """Decompose, assemble and solve every submodel, then recover joint torques.

    Skin contacts enter as known wrenches; ``unknown_contacts`` are estimated.
    """
    submodels = decompose(m) if submodels is None else submodels
    owner = {link: sm for sm in submodels for link in sm.links}
    per_sm: dict[int, list[ContactSpec]] = {sm.id: [] for sm in submodels}
    for c in list(unknown_contacts) + skin_known_contacts(skin_contacts):
        if c.link not in owner:
            raise EstimationError(f"contact on unknown link {c.link!r}")
        per_sm[owner[c.link].id].append(c)
    solutions = []
    estimated: dict[str, Wrench] = {}
    for sm in submodels:
        sol = solve_problem(assemble_problem(m, sm, state, cut_measurements, per_sm[sm.id]))
        solutions.append(sol)
        for est in sol.contacts:
            if est.spec.kind != KNOWN:
                prev = estimated.get(est.spec.link)
                estimated[est.spec.link] = est.wrench if prev is None else prev + est.wrench
    return solutions, joint_torques(m, state, estimated, skin_contacts)
