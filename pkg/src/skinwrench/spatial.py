"""6D spatial algebra in [linear; angular] ordering.

Forces are ``[f; mu]`` with the moment taken about the frame origin, motions
are ``[v; omega]``. A :class:`SpatialTransform` from ``B`` to ``A`` stores
``A_R_B`` and ``A_o_B``; applying it to a wrench gives
``[R f; o x (R f) + R mu]``.

Every value type is immutable. Frame identifiers are plain strings and are
checked on every operation; a mismatch raises :class:`FrameMismatchError`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

ORTHONORMAL_TOL = 1e-10
SYMMETRY_TOL = 1e-12


class FrameMismatchError(ValueError):
    """Raised when two quantities expressed in different frames are combined."""


def _frozen(values, shape: tuple[int, ...], name: str) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.shape != shape:
        raise ValueError(f"{name} must have shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    arr.setflags(write=False)
    return arr


def _check_frame(frame: str, name: str = "frame") -> str:
    if not isinstance(frame, str) or not frame:
        raise ValueError(f"{name} must be a non-empty string")
    return frame


def _same_frame(a: str, b: str, what: str) -> None:
    if a != b:
        raise FrameMismatchError(f"{what}: frame {a!r} != {b!r}")


def skew(u: Iterable[float]) -> np.ndarray:
    """Matrix ``u^`` such that ``u^ @ v == np.cross(u, v)``."""
    x, y, z = np.asarray(u, dtype=float)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


@dataclass(frozen=True, eq=False)
class Wrench:
    force: np.ndarray
    moment: np.ndarray
    frame: str

    def __post_init__(self):
        object.__setattr__(self, "force", _frozen(self.force, (3,), "force"))
        object.__setattr__(self, "moment", _frozen(self.moment, (3,), "moment"))
        _check_frame(self.frame)

    @classmethod
    def zero(cls, frame: str) -> "Wrench":
        return cls(np.zeros(3), np.zeros(3), frame)

    @classmethod
    def from_vector(cls, vec, frame: str) -> "Wrench":
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (6,):
            raise ValueError(f"wrench vector must have 6 entries, got {vec.shape}")
        return cls(vec[:3], vec[3:], frame)

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.force, self.moment])

    def __add__(self, other: "Wrench") -> "Wrench":
        _same_frame(self.frame, other.frame, "wrench sum")
        return Wrench(self.force + other.force, self.moment + other.moment, self.frame)

    def __sub__(self, other: "Wrench") -> "Wrench":
        _same_frame(self.frame, other.frame, "wrench difference")
        return Wrench(self.force - other.force, self.moment - other.moment, self.frame)

    def __neg__(self) -> "Wrench":
        return Wrench(-self.force, -self.moment, self.frame)

    def __mul__(self, scale: float) -> "Wrench":
        return Wrench(scale * self.force, scale * self.moment, self.frame)

    __rmul__ = __mul__

    def __repr__(self) -> str:
        return f"Wrench(force={self.force.tolist()}, moment={self.moment.tolist()}, frame={self.frame!r})"


@dataclass(frozen=True, eq=False)
class Twist:
    linear: np.ndarray
    angular: np.ndarray
    frame: str

    def __post_init__(self):
        object.__setattr__(self, "linear", _frozen(self.linear, (3,), "linear"))
        object.__setattr__(self, "angular", _frozen(self.angular, (3,), "angular"))
        _check_frame(self.frame)

    @classmethod
    def from_vector(cls, vec, frame: str) -> "Twist":
        vec = np.asarray(vec, dtype=float)
        return cls(vec[:3], vec[3:], frame)

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.linear, self.angular])


@dataclass(frozen=True, eq=False)
class SpatialTransform:
    """Pose of frame ``from_frame`` expressed in frame ``to_frame``.

    ``rotation`` is ``to_R_from`` and ``translation`` is the origin of
    ``from_frame`` in ``to_frame`` coordinates.
    """

    rotation: np.ndarray
    translation: np.ndarray
    from_frame: str
    to_frame: str

    def __post_init__(self):
        rot = _frozen(self.rotation, (3, 3), "rotation")
        if np.max(np.abs(rot.T @ rot - np.eye(3))) > ORTHONORMAL_TOL:
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(rot) - 1.0) > ORTHONORMAL_TOL:
            raise ValueError("rotation determinant is not +1")
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", _frozen(self.translation, (3,), "translation"))
        _check_frame(self.from_frame, "from_frame")
        _check_frame(self.to_frame, "to_frame")

    @classmethod
    def identity(cls, frame: str, to_frame: str | None = None) -> "SpatialTransform":
        return cls(np.eye(3), np.zeros(3), frame, to_frame or frame)

    def inverse(self) -> "SpatialTransform":
        rt = self.rotation.T
        return SpatialTransform(rt, -rt @ self.translation, self.to_frame, self.from_frame)

    def force_matrix(self) -> np.ndarray:
        """6x6 matrix ``to_X^from`` acting on ``[f; mu]``."""
        r = self.rotation
        out = np.zeros((6, 6))
        out[:3, :3] = r
        out[3:, :3] = skew(self.translation) @ r
        out[3:, 3:] = r
        return out

    def motion_matrix(self) -> np.ndarray:
        """6x6 matrix acting on ``[v; omega]``."""
        r = self.rotation
        out = np.zeros((6, 6))
        out[:3, :3] = r
        out[:3, 3:] = skew(self.translation) @ r
        out[3:, 3:] = r
        return out

    def apply_point(self, point) -> np.ndarray:
        return self.rotation @ np.asarray(point, dtype=float) + self.translation

    def __matmul__(self, other: "SpatialTransform") -> "SpatialTransform":
        return compose_transform(self, other)


@dataclass(frozen=True, eq=False)
class SpatialInertia:
    """Mass, center of mass and rotational inertia about the frame origin."""

    mass: float
    com: np.ndarray
    inertia: np.ndarray

    def __post_init__(self):
        mass = float(self.mass)
        if not np.isfinite(mass) or mass < 0.0:
            raise ValueError("mass must be finite and non-negative")
        inertia = _frozen(self.inertia, (3, 3), "inertia")
        if np.max(np.abs(inertia - inertia.T)) > SYMMETRY_TOL * max(1.0, np.max(np.abs(inertia))):
            raise ValueError("inertia must be symmetric")
        if np.min(np.linalg.eigvalsh(inertia)) < -1e-12 * max(1.0, np.max(np.abs(inertia))):
            raise ValueError("inertia must be positive semidefinite")
        object.__setattr__(self, "mass", mass)
        object.__setattr__(self, "com", _frozen(self.com, (3,), "com"))
        object.__setattr__(self, "inertia", inertia)

    @classmethod
    def from_com_inertia(cls, mass: float, com, inertia_com) -> "SpatialInertia":
        """Build from the inertia about the center of mass (parallel-axis shift)."""
        c = np.asarray(com, dtype=float)
        shift = mass * (np.dot(c, c) * np.eye(3) - np.outer(c, c))
        return cls(mass, c, np.asarray(inertia_com, dtype=float) + shift)

    def matrix(self) -> np.ndarray:
        m = self.mass
        mc = m * skew(self.com)
        out = np.zeros((6, 6))
        out[:3, :3] = m * np.eye(3)
        out[:3, 3:] = -mc
        out[3:, :3] = mc
        out[3:, 3:] = self.inertia
        return out


@dataclass(frozen=True, eq=False)
class ProperKinematics:
    """Sensor proper acceleration ``[R^T (a - g); omega_dot]`` and angular velocity."""

    proper_acc: np.ndarray
    ang_vel: np.ndarray
    frame: str

    def __post_init__(self):
        object.__setattr__(self, "proper_acc", _frozen(self.proper_acc, (6,), "proper_acc"))
        object.__setattr__(self, "ang_vel", _frozen(self.ang_vel, (3,), "ang_vel"))
        _check_frame(self.frame)

    @classmethod
    def static(cls, frame: str, gravity=(0.0, 0.0, -9.81), rotation=None) -> "ProperKinematics":
        """Resting frame whose orientation in the inertial frame is ``rotation``."""
        rot = np.eye(3) if rotation is None else np.asarray(rotation, dtype=float)
        lin = -rot.T @ np.asarray(gravity, dtype=float)
        return cls(np.concatenate([lin, np.zeros(3)]), np.zeros(3), frame)


def transform_wrench(X: SpatialTransform, f: Wrench) -> Wrench:
    _same_frame(f.frame, X.from_frame, "transform_wrench")
    force = X.rotation @ f.force
    moment = np.cross(X.translation, force) + X.rotation @ f.moment
    return Wrench(force, moment, X.to_frame)


def transform_twist(X: SpatialTransform, v: Twist) -> Twist:
    _same_frame(v.frame, X.from_frame, "transform_twist")
    ang = X.rotation @ v.angular
    lin = X.rotation @ v.linear + np.cross(X.translation, ang)
    return Twist(lin, ang, X.to_frame)


def compose_transform(X1: SpatialTransform, X2: SpatialTransform) -> SpatialTransform:
    """``X1 o X2``: maps ``X2.from_frame`` to ``X1.to_frame``."""
    _same_frame(X1.from_frame, X2.to_frame, "compose_transform")
    return SpatialTransform(
        X1.rotation @ X2.rotation,
        X1.translation + X1.rotation @ X2.translation,
        X2.from_frame,
        X1.to_frame,
    )


def dual_cross(v: Twist, f: Wrench) -> Wrench:
    """``v x* f`` with the block matrix ``[[w^, 0], [v^, w^]]``."""
    _same_frame(v.frame, f.frame, "dual_cross")
    force = np.cross(v.angular, f.force)
    moment = np.cross(v.linear, f.force) + np.cross(v.angular, f.moment)
    return Wrench(force, moment, f.frame)


def apply_inertia(M: SpatialInertia, a, frame: str) -> Wrench:
    """Wrench ``M a`` for a 6D acceleration/velocity ``a = [lin; ang]``.

    The coupling blocks are ``-m c^`` (top right) and ``m c^`` (bottom left),
    i.e. force ``m (a_lin + a_ang x c)`` and moment about the origin
    ``m c x a_lin + I a_ang``.
    """
    a = np.asarray(a, dtype=float)
    lin, ang = a[:3], a[3:]
    m, c = M.mass, M.com
    force = m * lin + m * np.cross(ang, c)
    moment = m * np.cross(c, lin) + M.inertia @ ang
    return Wrench(force, moment, frame)


def power(f: Wrench, v: Twist) -> float:
    _same_frame(f.frame, v.frame, "power")
    return float(f.force @ v.linear + f.moment @ v.angular)


def rotation_about(axis, angle: float) -> np.ndarray:
    """Rodrigues rotation about a unit ``axis``."""
    k = skew(axis)
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)
