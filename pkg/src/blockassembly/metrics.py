"""Pose accuracy metrics: ADD, ADD-S, n degree n cm, and recall tables."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .blocks import BlockModel
from .geometry import Pose, SymmetryGroup, geodesic_angle, symmetry_equivalents

ADD_FRACTIONS = (0.02, 0.05, 0.10)


def add_error(est: Pose, gt: Pose, points: np.ndarray) -> float:
    """Mean distance between corresponding transformed model points."""
    points = np.asarray(points, dtype=float)
    if points.size == 0:
        raise ValueError("point set is empty")
    return float(np.mean(np.linalg.norm(est.transform_points(points) - gt.transform_points(points), axis=1)))


def adds_error(est: Pose, gt: Pose, points: np.ndarray, chunk: int = 512) -> float:
    """Mean distance from each ground-truth point to its nearest estimated point."""
    points = np.asarray(points, dtype=float)
    if points.size == 0:
        raise ValueError("point set is empty")
    est_pts = est.transform_points(points)
    gt_pts = gt.transform_points(points)
    total = 0.0
    for start in range(0, len(gt_pts), chunk):
        block = gt_pts[start : start + chunk]
        d2 = ((block[:, None, :] - est_pts[None, :, :]) ** 2).sum(axis=2)
        total += float(np.sqrt(d2.min(axis=1)).sum())
    return total / len(gt_pts)


def translation_error(est: Pose, gt: Pose) -> float:
    # symmetry equivalents share the translation, so no minimization needed
    return float(np.linalg.norm(est.translation - gt.translation))


def ncm_ndeg(est: Pose, gt: Pose, symmetry: SymmetryGroup, n_deg: float, n_cm: float) -> bool:
    """True when some symmetry-equivalent ground truth is within both bounds."""
    for eq in symmetry_equivalents(gt, symmetry):
        angle = np.degrees(geodesic_angle(est.rotation, eq.rotation))
        dist = np.linalg.norm(est.translation - eq.translation)
        if angle <= n_deg and dist <= n_cm * 0.01:
            return True
    return False


@dataclass(frozen=True)
class PoseRecord:
    object_id: str
    estimated: Pose
    ground_truth: Pose


@dataclass(frozen=True)
class RecallRow:
    object_id: str
    count: int
    add_fractions: tuple[float, ...]  # recall at each ADD_FRACTIONS threshold
    deg5cm5: float
    cm2: float


@dataclass(frozen=True)
class RecallTable:
    rows: tuple[RecallRow, ...]
    mean: RecallRow

    def to_text(self) -> str:
        header = ["object", "n", "add2%d", "add5%d", "add10%d", "5d5cm", "2cm"]
        lines = ["  ".join(f"{h:>16s}" if i == 0 else f"{h:>7s}" for i, h in enumerate(header))]
        for row in (*self.rows, self.mean):
            cells = [f"{row.object_id:>16s}", f"{row.count:>7d}"]
            for v in (*row.add_fractions, row.deg5cm5, row.cm2):
                cells.append(f"{v:7.4f}")
            lines.append("  ".join(cells))
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        lines = ["object,count,add_002d,add_005d,add_010d,deg5cm5,cm2"]
        for row in (*self.rows, self.mean):
            vals = ",".join(f"{v:.4f}" for v in (*row.add_fractions, row.deg5cm5, row.cm2))
            lines.append(f"{row.object_id},{row.count},{vals}")
        return "\n".join(lines) + "\n"


def score_record(record: PoseRecord, model: BlockModel) -> dict:
    """Per-record pass/fail flags for every table column."""
    symmetric = len(model.symmetry.rotations) > 1
    err_fn = adds_error if symmetric else add_error
    err = err_fn(record.estimated, record.ground_truth, model.surface_points)
    return {
        "add": tuple(err <= f * model.diameter for f in ADD_FRACTIONS),
        "deg5cm5": ncm_ndeg(record.estimated, record.ground_truth, model.symmetry, 5.0, 5.0),
        "cm2": translation_error(record.estimated, record.ground_truth) <= 0.02,
    }


def build_recall_table(records: Sequence[PoseRecord], library: dict[str, BlockModel]) -> RecallTable:
    """Recall fractions per object plus an unweighted mean row.

    Symmetric objects (nontrivial group) are scored with ADD-S, the rest with
    ADD; the 2 cm column thresholds the translation error alone.
    """
    by_object: dict[str, list[PoseRecord]] = {}
    for rec in records:
        if rec.object_id not in library:
            raise KeyError(f"unknown object id {rec.object_id!r}")
        by_object.setdefault(rec.object_id, []).append(rec)

    rows = []
    for object_id in sorted(by_object):
        model = library[object_id]
        flags = [score_record(r, model) for r in by_object[object_id]]
        n = len(flags)
        add_rec = tuple(sum(f["add"][i] for f in flags) / n for i in range(len(ADD_FRACTIONS)))
        rows.append(
            RecallRow(
                object_id=object_id,
                count=n,
                add_fractions=add_rec,
                deg5cm5=sum(f["deg5cm5"] for f in flags) / n,
                cm2=sum(f["cm2"] for f in flags) / n,
            )
        )

    if not rows:
        empty = RecallRow("mean", 0, tuple(0.0 for _ in ADD_FRACTIONS), 0.0, 0.0)
        return RecallTable(rows=(), mean=empty)

    mean = RecallRow(
        object_id="mean",
        count=sum(r.count for r in rows),
        add_fractions=tuple(
            float(np.mean([r.add_fractions[i] for r in rows])) for i in range(len(ADD_FRACTIONS))
        ),
        deg5cm5=float(np.mean([r.deg5cm5 for r in rows])),
        cm2=float(np.mean([r.cm2 for r in rows])),
    )
    return RecallTable(rows=tuple(rows), mean=mean)
