"""Rigid block models: cuboid unions, surface samples, symmetry groups.

Blocks are unions of axis-aligned cuboids in their own object frame. That is
enough for regular building blocks and keeps collision checks exact. Surface
point clouds (for the pose metrics) come from dart-thinned stratified face
grids, which gives a blue-noise-like spread without a true Poisson solver.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from typing import Sequence

import numpy as np

from .geometry import (
    Pose,
    SymmetryGroup,
    pose_from_lists,
    pose_to_lists,
)

SURFACE_TOL = 1e-6


@dataclass(frozen=True)
class Cuboid:
    """One axis-aligned box of a block, placed by a local pose."""

    half_extents: np.ndarray
    pose: Pose

    def __post_init__(self) -> None:
        he = np.array(self.half_extents, dtype=float).reshape(3)
        if (he <= 0).any():
            raise ValueError("half extents must be positive")
        object.__setattr__(self, "half_extents", he)


def box_signed_distance(points: np.ndarray, half_extents: np.ndarray) -> np.ndarray:
    """Signed distance to an origin-centered axis-aligned box, vectorized."""
    q = np.abs(np.asarray(points, dtype=float)) - half_extents
    outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
    inside = np.minimum(np.max(q, axis=-1), 0.0)
    return outside + inside


def union_surface_distance(points: np.ndarray, primitives: Sequence[Cuboid]) -> np.ndarray:
    """|signed distance| to the union of cuboids (min over members)."""
    dists = []
    for prim in primitives:
        inv = prim.pose
        local = (np.asarray(points) - inv.translation) @ inv.rotation
        dists.append(box_signed_distance(local, prim.half_extents))
    return np.abs(np.min(np.stack(dists), axis=0))


def _face_grid(half_extents: np.ndarray, spacing: float, rng: np.random.Generator) -> np.ndarray:
    """Jittered stratified grid on all six faces of an origin-centered box."""
    pts = []
    for axis in range(3):
        u, v = (axis + 1) % 3, (axis + 2) % 3
        for dim in (u, v):
            if 2.0 * half_extents[dim] < spacing:
                raise ValueError("spacing too coarse")
        nu = max(1, int(np.ceil(2.0 * half_extents[u] / spacing)))
        nv = max(1, int(np.ceil(2.0 * half_extents[v] / spacing)))
        cu = 2.0 * half_extents[u] / nu
        cv = 2.0 * half_extents[v] / nv
        centers_u = -half_extents[u] + cu * (np.arange(nu) + 0.5)
        centers_v = -half_extents[v] + cv * (np.arange(nv) + 0.5)
        uu, vv = np.meshgrid(centers_u, centers_v, indexing="ij")
        # jitter stays small enough to keep in-face neighbors 0.5*spacing apart
        ju = max(0.0, (cu - 0.5 * spacing) / 2.0)
        jv = max(0.0, (cv - 0.5 * spacing) / 2.0)
        uu = uu + rng.uniform(-ju, ju, size=uu.shape)
        vv = vv + rng.uniform(-jv, jv, size=vv.shape)
        for sign in (-1.0, 1.0):
            face = np.zeros((uu.size, 3))
            face[:, axis] = sign * half_extents[axis]
            face[:, u] = uu.ravel()
            face[:, v] = vv.ravel()
            pts.append(face)
    return np.vstack(pts)


def sample_surface(
    primitives: Sequence[Cuboid],
    target_spacing: float,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Surface samples of the cuboid union, object frame, (n, 3).

    Stratified face grids thinned by dart rejection: accepted points keep a
    mutual distance of at least half the target spacing, and points buried
    strictly inside another cuboid are dropped.
    """
    if target_spacing <= 0:
        raise ValueError("target_spacing must be positive")
    if rng is None:
        rng = np.random.default_rng(0)
    candidates = []
    for k, prim in enumerate(primitives):
        local = _face_grid(prim.half_extents, target_spacing, rng)
        world = prim.pose.transform_points(local)
        if len(primitives) > 1:
            keep = np.ones(len(world), dtype=bool)
            for j, other in enumerate(primitives):
                if j == k:
                    continue
                rel = (world - other.pose.translation) @ other.pose.rotation
                keep &= box_signed_distance(rel, other.half_extents) > -SURFACE_TOL
            world = world[keep]
        candidates.append(world)
    candidates = np.vstack(candidates)

    min_dist = 0.5 * target_spacing
    accepted = np.empty((len(candidates), 3))
    count = 0
    for p in candidates:
        if count and (np.linalg.norm(accepted[:count] - p, axis=1) < min_dist).any():
            continue
        accepted[count] = p
        count += 1
    return accepted[:count].copy()


def max_pairwise_distance(points: np.ndarray, chunk: int = 512) -> float:
    """Largest distance between any two of the points."""
    points = np.asarray(points, dtype=float)
    best = 0.0
    for start in range(0, len(points), chunk):
        block = points[start : start + chunk]
        d2 = ((block[:, None, :] - points[None, :, :]) ** 2).sum(axis=2)
        best = max(best, float(d2.max()))
    return float(np.sqrt(best))


def detect_symmetry(primitives: Sequence[Cuboid], tol: float = 1e-9) -> SymmetryGroup:
    """Rotations from the 24-element cube group that map the union onto itself.

    Only supports primitives with identity local rotation (true of every
    bundled model); a rotated primitive would need a mesh-level check.
    """
    for prim in primitives:
        if not np.allclose(prim.pose.rotation, np.eye(3), atol=tol):
            raise ValueError("symmetry detection needs axis-aligned primitives")
    centers = np.array([p.pose.translation for p in primitives])
    extents = np.array([p.half_extents for p in primitives])

    def maps_onto_self(rot: np.ndarray) -> bool:
        new_centers = centers @ rot.T
        new_extents = extents @ np.abs(rot).T
        for c, e in zip(new_centers, new_extents):
            match = (np.abs(centers - c).max(axis=1) < 1e-9) & (
                np.abs(extents - e).max(axis=1) < 1e-9
            )
            if not match.any():
                return False
        return True

    kept = [r for r in SymmetryGroup.cube_rotations() if maps_onto_self(r)]
    return SymmetryGroup(kept)


@dataclass(frozen=True)
class BlockModel:
    """A block shape: primitives, symmetry, surface samples, diameter."""

    id: str
    primitives: tuple[Cuboid, ...]
    symmetry: SymmetryGroup
    surface_points: np.ndarray
    diameter: float
    sampling_spacing: float
    sampling_seed: int

    @staticmethod
    def build(
        model_id: str,
        primitives: Sequence[Cuboid],
        symmetry: SymmetryGroup,
        spacing: float,
        seed: int = 0,
    ) -> "BlockModel":
        if not primitives:
            raise ValueError("block needs at least one primitive")
        pts = sample_surface(primitives, spacing, np.random.default_rng(seed))
        return BlockModel(
            id=model_id,
            primitives=tuple(primitives),
            symmetry=symmetry,
            surface_points=pts,
            diameter=max_pairwise_distance(pts),
            sampling_spacing=spacing,
            sampling_seed=seed,
        )


@dataclass(frozen=True)
class BlockInstance:
    """A block model placed in the world."""

    model_id: str
    pose: Pose


def model_from_dict(entry: dict) -> BlockModel:
    prims = [
        Cuboid(np.array(p["half_extents"], dtype=float), pose_from_lists(p["pose"]))
        for p in entry["primitives"]
    ]
    symmetry = SymmetryGroup(
        [np.array(r, dtype=float).reshape(3, 3) for r in entry["symmetry"]]
    )
    return BlockModel.build(
        entry["id"],
        prims,
        symmetry,
        float(entry["sampling"]["spacing"]),
        int(entry["sampling"].get("seed", 0)),
    )


def model_to_dict(model: BlockModel) -> dict:
    return {
        "id": model.id,
        "primitives": [
            {"half_extents": [float(v) for v in p.half_extents], "pose": pose_to_lists(p.pose)}
            for p in model.primitives
        ],
        "symmetry": [[float(v) for v in r.reshape(9)] for r in model.symmetry],
        "sampling": {"spacing": model.sampling_spacing, "seed": model.sampling_seed},
    }


def scene_to_dict(scene: Sequence[BlockInstance]) -> dict:
    return {
        "format_version": 1,
        "blocks": [
            {"model": inst.model_id, **pose_to_lists(inst.pose)} for inst in scene
        ],
    }


def scene_from_dict(doc: dict) -> list[BlockInstance]:
    try:
        return [
            BlockInstance(str(b["model"]), pose_from_lists(b)) for b in doc["blocks"]
        ]
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed scene: {exc}") from exc


def load_scene(path) -> list[BlockInstance]:
    with open(path) as fh:
        return scene_from_dict(json.load(fh))


def save_scene(scene: Sequence[BlockInstance], path) -> None:
    with open(path, "w") as fh:
        json.dump(scene_to_dict(scene), fh, indent=1)
        fh.write("\n")


def load_library(path=None) -> list[BlockModel]:
    """Block models from a JSON library file (bundled file by default)."""
    if path is None:
        text = resources.files("blockassembly").joinpath("data/standard_blocks.json").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    doc = json.loads(text)
    models = [model_from_dict(entry) for entry in doc["models"]]
    ids = [m.id for m in models]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate model ids in block library")
    return models


_STANDARD: list[BlockModel] | None = None


def standard_library() -> list[BlockModel]:
    """The eight bundled block models (cached)."""
    global _STANDARD
    if _STANDARD is None:
        _STANDARD = load_library()
    return _STANDARD


def library_index(models: Sequence[BlockModel]) -> dict[str, BlockModel]:
    return {m.id: m for m in models}


def block_obbs(model: BlockModel, pose: Pose):
    """World-frame collision boxes of a placed block."""
    from .collision import Obb

    out = []
    for prim in model.primitives:
        out.append(
            Obb(
                pose.rotation @ prim.pose.translation + pose.translation,
                prim.half_extents,
                pose.rotation @ prim.pose.rotation,
            )
        )
    return out


def support_offset(model: BlockModel, rotation: np.ndarray) -> float:
    """Height of the object origin above the lowest point at this orientation."""
    lowest = np.inf
    for prim in model.primitives:
        axes = rotation @ prim.pose.rotation
        center_z = (rotation @ prim.pose.translation)[2]
        drop = float(np.abs(axes[2]) @ prim.half_extents)
        lowest = min(lowest, center_z - drop)
    return -lowest


def extent_along(model: BlockModel, rotation: np.ndarray, direction: np.ndarray) -> float:
    """Width of the block along a world direction at the given orientation."""
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    hi, lo = -np.inf, np.inf
    for prim in model.primitives:
        axes = rotation @ prim.pose.rotation
        c = float((rotation @ prim.pose.translation) @ d)
        reach = float(np.abs(d @ axes) @ prim.half_extents)
        hi = max(hi, c + reach)
        lo = min(lo, c - reach)
    return hi - lo
