"""Rigid transforms, pinhole projection and the servoing error."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class FrameTransform:
    """4x4 homogeneous rigid transform."""

    __slots__ = ("matrix",)

    def __init__(self, matrix):
        m = np.asarray(matrix, dtype=float)
        if m.shape != (4, 4):
            raise ValueError("transform must be a 4x4 matrix")
        r = m[:3, :3]
        if not np.allclose(r @ r.T, np.eye(3), atol=1e-9):
            raise ValueError("rotation block must be orthonormal")
        if np.linalg.det(r) < 0.0:
            raise ValueError("rotation block must be proper (det +1)")
        if not np.allclose(m[3], [0.0, 0.0, 0.0, 1.0], atol=1e-12):
            raise ValueError("last row must be (0, 0, 0, 1)")
        self.matrix = m

    @classmethod
    def identity(cls) -> "FrameTransform":
        return cls(np.eye(4))

    @classmethod
    def from_rotation_translation(cls, rotation, translation) -> "FrameTransform":
        m = np.eye(4)
        m[:3, :3] = np.asarray(rotation, dtype=float)
        m[:3, 3] = np.asarray(translation, dtype=float)
        return cls(m)

    @classmethod
    def rotation_z(cls, angle: float, translation=(0.0, 0.0, 0.0)) -> "FrameTransform":
        c, s = math.cos(angle), math.sin(angle)
        return cls.from_rotation_translation(
            [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]], translation)

    def __matmul__(self, other: "FrameTransform") -> "FrameTransform":
        return FrameTransform(self.matrix @ other.matrix)

    def inverse(self) -> "FrameTransform":
        r = self.matrix[:3, :3]
        t = self.matrix[:3, 3]
        m = np.eye(4)
        m[:3, :3] = r.T
        m[:3, 3] = -r.T @ t
        return FrameTransform(m)

    def apply(self, point) -> np.ndarray:
        p = np.asarray(point, dtype=float)
        return self.matrix[:3, :3] @ p + self.matrix[:3, 3]

    def __repr__(self) -> str:
        return f"FrameTransform({self.matrix.tolist()})"


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole parameters: principal point, focal length, aspect ratio."""

    c_u: float
    c_v: float
    focal: float
    aspect: float = 1.0

    def __post_init__(self):
        if self.focal <= 0.0:
            raise ValueError("focal length must be positive")
        if self.aspect <= 0.0:
            raise ValueError("aspect ratio must be positive")


class BehindCameraError(ValueError):
    pass


def project(intr: CameraIntrinsics, c_in_camera) -> tuple[float, float]:
    """Normalized image coordinates (p_y, p_z) of a camera-frame point.

    The camera x axis is the optical axis; p_y = c_y/c_x and p_z = c_z/c_x,
    equivalently (o_x - c_u)/(f*alpha) and (o_y - c_v)/f in pixels.
    """
    c = np.asarray(c_in_camera, dtype=float)
    if c[0] <= 0.0:
        raise BehindCameraError(f"point at c_x={c[0]} is behind the camera")
    return float(c[1] / c[0]), float(c[2] / c[0])


def to_pixels(intr: CameraIntrinsics, p: tuple[float, float]) -> tuple[float, float]:
    return (intr.c_u + intr.focal * intr.aspect * p[0],
            intr.c_v + intr.focal * p[1])


def from_pixels(intr: CameraIntrinsics, o: tuple[float, float]) -> tuple[float, float]:
    return ((o[0] - intr.c_u) / (intr.focal * intr.aspect),
            (o[1] - intr.c_v) / intr.focal)


def back_project(intr: CameraIntrinsics, p: tuple[float, float],
                 depth: float) -> np.ndarray:
    """Camera-frame point of an image observation at known depth c_x."""
    if depth <= 0.0:
        raise ValueError("depth must be positive")
    return np.array([depth, depth * p[0], depth * p[1]])


def object_center(p: tuple[float, float], depth: float,
                  servo_from_body: FrameTransform,
                  body_from_camera: FrameTransform) -> np.ndarray:
    """Servo-frame object center from an image observation and a depth.

    The unit-depth ray (1, p_y, p_z) is carried through the rigid chain and
    the result is scaled by the depth measured along the servo x axis.
    """
    if depth <= 0.0:
        raise ValueError("depth must be positive")
    ray = np.array([1.0, p[0], p[1]])
    return depth * (servo_from_body @ body_from_camera).apply(ray)


def servo_error(reference, center) -> np.ndarray:
    """Reference minus measured object center, all in the servo frame."""
    return np.asarray(reference, dtype=float) - np.asarray(center, dtype=float)
