"""Minimal 3D vector and rotation math for the simulated scene.

Rotations are unit quaternions. Angles are degrees everywhere in the public
API; radians never leak out. The angle extraction uses atan2 rather than
acos because acos is ill-conditioned near the identity and scenario tests
compare recovered angles against commanded ones at tight tolerances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class Vec3:
    x: float = 0.0
    y: float = 0.0
    z: float = 0.0

    def __add__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x + other.x, self.y + other.y, self.z + other.z)

    def __sub__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x - other.x, self.y - other.y, self.z - other.z)

    def __neg__(self) -> "Vec3":
        return Vec3(-self.x, -self.y, -self.z)

    def scale(self, k: float) -> "Vec3":
        return Vec3(self.x * k, self.y * k, self.z * k)

    def dot(self, other: "Vec3") -> float:
        return self.x * other.x + self.y * other.y + self.z * other.z

    def cross(self, other: "Vec3") -> "Vec3":
        return Vec3(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )

    def length(self) -> float:
        return math.sqrt(self.dot(self))

    def normalized(self) -> "Vec3":
        n = self.length()
        if n == 0.0:
            raise ValueError("cannot normalize a zero vector")
        return self.scale(1.0 / n)

    def to_list(self) -> list[float]:
        return [self.x, self.y, self.z]

    @staticmethod
    def from_list(v) -> "Vec3":
        return Vec3(float(v[0]), float(v[1]), float(v[2]))


def vec_lerp(a: Vec3, b: Vec3, t: float) -> Vec3:
    return Vec3(a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t, a.z + (b.z - a.z) * t)


def angle_between_deg(a: Vec3, b: Vec3) -> float:
    """Angle between two vectors in degrees, in [0, 180]."""
    la, lb = a.length(), b.length()
    if la == 0.0 or lb == 0.0:
        raise ValueError("angle of a zero vector is undefined")
    # atan2(|a x b|, a . b) is stable for near-parallel vectors
    return math.degrees(math.atan2(a.cross(b).length(), a.dot(b)))


@dataclass(frozen=True)
class Rotation:
    """Unit quaternion (w, x, y, z); identity by default."""

    w: float = 1.0
    x: float = 0.0
    y: float = 0.0
    z: float = 0.0

    @staticmethod
    def identity() -> "Rotation":
        return Rotation()

    @staticmethod
    def from_axis_angle(axis: Vec3, degrees: float) -> "Rotation":
        half = math.radians(degrees) / 2.0
        u = axis.normalized()
        s = math.sin(half)
        return Rotation(math.cos(half), u.x * s, u.y * s, u.z * s)

    def normalized(self) -> "Rotation":
        n = math.sqrt(self.w**2 + self.x**2 + self.y**2 + self.z**2)
        if n == 0.0:
            raise ValueError("zero quaternion")
        return Rotation(self.w / n, self.x / n, self.y / n, self.z / n)

    def __mul__(self, other: "Rotation") -> "Rotation":
        w1, x1, y1, z1 = self.w, self.x, self.y, self.z
        w2, x2, y2, z2 = other.w, other.x, other.y, other.z
        return Rotation(
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        )

    def rotate(self, v: Vec3) -> Vec3:
        # q v q* expanded to avoid building intermediate quaternions
        u = Vec3(self.x, self.y, self.z)
        uv = u.cross(v)
        uuv = u.cross(uv)
        return v + uv.scale(2.0 * self.w) + uuv.scale(2.0)

    def angle_deg(self) -> float:
        """Shortest-arc angle to the identity rotation, degrees in [0, 180]."""
        s = math.sqrt(self.x**2 + self.y**2 + self.z**2)
        return math.degrees(2.0 * math.atan2(s, abs(self.w)))

    def up(self) -> Vec3:
        return self.rotate(Vec3(0.0, 1.0, 0.0))

    def forward(self) -> Vec3:
        return self.rotate(Vec3(0.0, 0.0, 1.0))

    def to_list(self) -> list[float]:
        return [self.w, self.x, self.y, self.z]

    @staticmethod
    def from_list(q) -> "Rotation":
        return Rotation(float(q[0]), float(q[1]), float(q[2]), float(q[3])).normalized()


def rotation_from_json(obj) -> Rotation:
    """Accept {"quat": [w,x,y,z]} or {"axis": [x,y,z], "deg": a}."""
    if isinstance(obj, dict):
        if "quat" in obj:
            return Rotation.from_list(obj["quat"])
        if "axis" in obj and "deg" in obj:
            return Rotation.from_axis_angle(Vec3.from_list(obj["axis"]), float(obj["deg"]))
    raise ValueError(f"unrecognized rotation value: {obj!r}")


def rotation_to_json(r: Rotation) -> dict:
    return {"quat": r.to_list()}
