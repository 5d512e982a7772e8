"""Rigid-body pose algebra on SO(3)/SE(3) plus the axis and symmetry helpers
used throughout the planner.

Conventions: rotations are 3x3 row-major matrices acting on column vectors,
translations are 3-vectors in meters, and a Pose maps object-frame points into
the parent frame via ``R @ p + t``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum
from typing import Iterable, Iterator, Sequence

import numpy as np

ORTHONORMAL_TOL = 1e-9
# Composition chains re-orthonormalize once accumulated drift passes this.
DRIFT_TOL = 1e-12


def _as_rotation(matrix: np.ndarray) -> np.ndarray:
    r = np.array(matrix, dtype=float)
    if r.shape != (3, 3):
        raise ValueError(f"rotation must be 3x3, got {r.shape}")
    err = np.abs(r.T @ r - np.eye(3)).max()
    if err > ORTHONORMAL_TOL:
        raise ValueError(f"rotation not orthonormal (max deviation {err:.3e})")
    if abs(np.linalg.det(r) - 1.0) > 1e-6:
        raise ValueError("rotation must have determinant +1")
    r.flags.writeable = False
    return r


@dataclass(frozen=True)
class Pose:
    """A rigid transform: 3x3 rotation plus translation in meters."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "rotation", _as_rotation(self.rotation))
        t = np.array(self.translation, dtype=float).reshape(3)
        t.flags.writeable = False
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.eye(3), np.zeros(3))

    def transform_points(self, points: np.ndarray) -> np.ndarray:
        """Map object-frame points (N, 3) into the parent frame."""
        return np.asarray(points) @ self.rotation.T + self.translation

    def transform_point(self, point: np.ndarray) -> np.ndarray:
        return self.rotation @ np.asarray(point, dtype=float) + self.translation

    def almost_equal(self, other: "Pose", tol: float = 1e-9) -> bool:
        return (
            np.abs(self.rotation - other.rotation).max() <= tol
            and np.abs(self.translation - other.translation).max() <= tol
        )


def orthonormalize(matrix: np.ndarray) -> np.ndarray:
    """Nearest rotation matrix (polar factor) of an almost-orthonormal matrix."""
    u, _, vt = np.linalg.svd(np.asarray(matrix, dtype=float))
    r = u @ vt
    if np.linalg.det(r) < 0:
        u = u.copy()
        u[:, -1] = -u[:, -1]
        r = u @ vt
    return r


def compose(outer: Pose, inner: Pose) -> Pose:
    """outer then inner: returns the pose of inner's frame seen from outer's parent."""
    r = outer.rotation @ inner.rotation
    drift = np.abs(r.T @ r - np.eye(3)).max()
    if drift > DRIFT_TOL:
        r = orthonormalize(r)
    return Pose(r, outer.rotation @ inner.translation + outer.translation)


def invert(pose: Pose) -> Pose:
    rt = pose.rotation.T
    return Pose(rt, -(rt @ pose.translation))


def relative(reference: Pose, target: Pose) -> Pose:
    """Pose of target expressed in reference's frame."""
    return compose(invert(reference), target)


def rot_x(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rotation_about(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues rotation about an arbitrary unit axis."""
    a = np.asarray(axis, dtype=float)
    n = np.linalg.norm(a)
    if n < 1e-12:
        raise ValueError("rotation axis must be nonzero")
    a = a / n
    k = np.array([[0.0, -a[2], a[1]], [a[2], 0.0, -a[0]], [-a[1], a[0], 0.0]])
    return np.eye(3) + math.sin(angle) * k + (1.0 - math.cos(angle)) * (k @ k)


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform random rotation via a normalized Gaussian quaternion."""
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def geodesic_angle(rot_a: np.ndarray, rot_b: np.ndarray) -> float:
    """Angle of the relative rotation between two orientations, in [0, pi].

    atan2 of the sine term (skew part) against the cosine term (trace); the
    pure-trace arccos form loses half the significand near zero and pi.
    """
    rel = np.asarray(rot_a).T @ np.asarray(rot_b)
    cos_term = (float(np.trace(rel)) - 1.0) / 2.0
    skew = np.array(
        [rel[2, 1] - rel[1, 2], rel[0, 2] - rel[2, 0], rel[1, 0] - rel[0, 1]]
    )
    return math.atan2(float(np.linalg.norm(skew)) / 2.0, cos_term)


def yaw_of(rotation: np.ndarray) -> float:
    """Heading of the rotated x-axis in the horizontal plane."""
    return math.atan2(rotation[1, 0], rotation[0, 0])


class Axis(IntEnum):
    X = 0
    Y = 1
    Z = 2


@dataclass(frozen=True)
class SignedAxis:
    """One of the six object-frame axis directions."""

    axis: Axis
    sign: int

    def __post_init__(self) -> None:
        if self.sign not in (-1, 1):
            raise ValueError("sign must be +1 or -1")

    @property
    def vector(self) -> np.ndarray:
        v = np.zeros(3)
        v[self.axis] = float(self.sign)
        return v

    def __neg__(self) -> "SignedAxis":
        return SignedAxis(self.axis, -self.sign)

    def __str__(self) -> str:
        return ("+" if self.sign > 0 else "-") + self.axis.name.lower()


# Tie-break order for reference_axis: +z, +x, +y, -x, -y, -z.
SIGNED_AXES: tuple[SignedAxis, ...] = (
    SignedAxis(Axis.Z, 1),
    SignedAxis(Axis.X, 1),
    SignedAxis(Axis.Y, 1),
    SignedAxis(Axis.X, -1),
    SignedAxis(Axis.Y, -1),
    SignedAxis(Axis.Z, -1),
)


def reference_axis(pose: Pose) -> SignedAxis:
    """The object axis currently pointing most upward.

    Scans the six signed axes in the fixed tie-break order and keeps the one
    whose world image has the largest z component. For any rotation the best
    score is at least 1/sqrt(3).
    """
    best = SIGNED_AXES[0]
    best_score = -2.0
    for cand in SIGNED_AXES:
        # world z component of the rotated axis, without the full matmul
        score = cand.sign * pose.rotation[2, cand.axis]
        if score > best_score:
            best = cand
            best_score = score
    return best


class SymmetryGroup:
    """A finite set of rotations a shape maps onto itself with.

    Always contains the identity; closure under composition is checked
    pairwise at construction.
    """

    def __init__(self, rotations: Iterable[np.ndarray], check: bool = True):
        elems = [_as_rotation(e) for e in rotations]
        if not elems:
            raise ValueError("symmetry group needs at least the identity")
        if check:
            self._check_group(elems)
        self.rotations: tuple[np.ndarray, ...] = tuple(elems)

    @staticmethod
    def _check_group(elems: Sequence[np.ndarray], tol: float = 1e-6) -> None:
        def index_of(r: np.ndarray) -> int:
            for i, e in enumerate(elems):
                if np.abs(e - r).max() < tol:
                    return i
            return -1

        if index_of(np.eye(3)) < 0:
            raise ValueError("symmetry group must contain the identity")
        for a in elems:
            for b in elems:
                if index_of(a @ b) < 0:
                    raise ValueError("symmetry group not closed under composition")

    def __len__(self) -> int:
        return len(self.rotations)

    def __iter__(self) -> Iterator[np.ndarray]:
        return iter(self.rotations)

    @staticmethod
    def identity_only() -> "SymmetryGroup":
        return SymmetryGroup([np.eye(3)], check=False)

    @staticmethod
    def cyclic(axis: Axis, order: int) -> "SymmetryGroup":
        """Rotations by multiples of 2*pi/order about one object axis."""
        unit = np.zeros(3)
        unit[axis] = 1.0
        elems = [rotation_about(unit, 2.0 * math.pi * k / order) for k in range(order)]
        return SymmetryGroup([np.round(e, 15) for e in elems])

    @staticmethod
    def cube_rotations() -> "SymmetryGroup":
        """All 24 signed axis permutations with determinant +1."""
        elems = []
        for perm in ((0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)):
            for sx in (1.0, -1.0):
                for sy in (1.0, -1.0):
                    for sz in (1.0, -1.0):
                        m = np.zeros((3, 3))
                        m[0, perm[0]] = sx
                        m[1, perm[1]] = sy
                        m[2, perm[2]] = sz
                        if np.linalg.det(m) > 0.5:
                            elems.append(m)
        return SymmetryGroup(elems)


def symmetry_equivalents(pose: Pose, group: SymmetryGroup) -> list[Pose]:
    """All poses indistinguishable from `pose` for a shape with this symmetry."""
    return [Pose(pose.rotation @ s, pose.translation) for s in group]


def pose_to_lists(pose: Pose) -> dict:
    """JSON-friendly encoding: row-major 9-element rotation, 3-element translation."""
    return {
        "rotation": [float(v) for v in pose.rotation.reshape(9)],
        "translation": [float(v) for v in pose.translation],
    }


def pose_from_lists(obj: dict) -> Pose:
    rot = np.array(obj["rotation"], dtype=float)
    if rot.size != 9:
        raise ValueError("rotation must have 9 elements")
    trans = np.array(obj["translation"], dtype=float)
    if trans.size != 3:
        raise ValueError("translation must have 3 elements")
    return Pose(rot.reshape(3, 3), trans)
