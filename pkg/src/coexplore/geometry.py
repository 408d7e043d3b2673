"""Planar poses, rigid 3D transforms, and rotation helpers.

Angle convention: yaw is measured counter-clockwise from the world +x axis
and is always stored normalized to [-pi, pi).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

TWO_PI = 2.0 * math.pi


class DegenerateGeometryError(ValueError):
    """Raised when a geometric operation is undefined (e.g. coincident poses)."""


def normalize_angle(a: float) -> float:
    """Wrap an angle to [-pi, pi) via ((a + pi) mod 2pi) - pi."""
    if not math.isfinite(a):
        raise ValueError(f"angle must be finite, got {a!r}")
    return (a + math.pi) % TWO_PI - math.pi


def normalize_angles(a: np.ndarray) -> np.ndarray:
    """Vectorized normalize_angle."""
    a = np.asarray(a, dtype=float)
    if not np.all(np.isfinite(a)):
        raise ValueError("angles must be finite")
    return np.mod(a + math.pi, TWO_PI) - math.pi


@dataclass(frozen=True)
class Pose2D:
    """Planar robot pose (meters, meters, radians)."""

    x: float
    y: float
    yaw: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "yaw", normalize_angle(float(self.yaw)))
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))

    @property
    def xy(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def distance_to(self, other: "Pose2D") -> float:
        return math.hypot(other.x - self.x, other.y - self.y)

    def heading_to(self, other: "Pose2D") -> float:
        return math.atan2(other.y - self.y, other.x - self.x)


def skew(v: np.ndarray) -> np.ndarray:
    """Cross-product matrix: skew(v) @ w == cross(v, w)."""
    return np.array(
        [
            [0.0, -v[2], v[1]],
            [v[2], 0.0, -v[0]],
            [-v[1], v[0], 0.0],
        ]
    )


def so3_exp(w: np.ndarray) -> np.ndarray:
    """Axis-angle vector to rotation matrix."""
    return Rotation.from_rotvec(np.asarray(w, dtype=float)).as_matrix()


def so3_log(R: np.ndarray) -> np.ndarray:
    """Rotation matrix to axis-angle vector (inverse of so3_exp)."""
    return Rotation.from_matrix(np.asarray(R, dtype=float)).as_rotvec()


def so3_right_jacobian_inv(w: np.ndarray) -> np.ndarray:
    """Inverse right Jacobian of SO(3), used for pose-graph residual Jacobians."""
    theta = float(np.linalg.norm(w))
    K = skew(w)
    if theta < 1e-8:
        return np.eye(3) + 0.5 * K + (1.0 / 12.0) * (K @ K)
    coef = 1.0 / (theta * theta) - (1.0 + math.cos(theta)) / (2.0 * theta * math.sin(theta))
    return np.eye(3) + 0.5 * K + coef * (K @ K)


@dataclass
class RigidTransform:
    """Rigid body transform: p' = rotation @ p + translation."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self) -> None:
        self.rotation = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        self.translation = np.asarray(self.translation, dtype=float).reshape(3)
        err = np.abs(self.rotation @ self.rotation.T - np.eye(3)).max()
        if err > 1e-7 or abs(np.linalg.det(self.rotation) - 1.0) > 1e-7:
            raise ValueError("rotation must be a proper orthonormal matrix")

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls()

    @classmethod
    def from_yaw_xy(cls, yaw: float, x: float = 0.0, y: float = 0.0, z: float = 0.0) -> "RigidTransform":
        c, s = math.cos(yaw), math.sin(yaw)
        R = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        return cls(R, np.array([x, y, z]))

    @classmethod
    def from_axis_angle(cls, w: np.ndarray, t: np.ndarray | None = None) -> "RigidTransform":
        return cls(so3_exp(np.asarray(w, dtype=float)), np.zeros(3) if t is None else t)

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """self then applied after other: (self*other)(p) = self(other(p))."""
        return RigidTransform(self.rotation @ other.rotation, self.rotation @ other.translation + self.translation)

    def __matmul__(self, other: "RigidTransform") -> "RigidTransform":
        return self.compose(other)

    def inverse(self) -> "RigidTransform":
        Rt = self.rotation.T
        return RigidTransform(Rt, -Rt @ self.translation)

    def apply(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            return self.rotation @ pts + self.translation
        return pts @ self.rotation.T + self.translation

    def almost_equal(self, other: "RigidTransform", tol_t: float = 1e-9, tol_r: float = 1e-9) -> bool:
        dr = float(np.linalg.norm(so3_log(self.rotation.T @ other.rotation)))
        dt = float(np.linalg.norm(self.translation - other.translation))
        return dt <= tol_t and dr <= tol_r

    def copy(self) -> "RigidTransform":
        return RigidTransform(self.rotation.copy(), self.translation.copy())


def yaw_rotation_2d(yaw: float) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s], [s, c]])
