"""Detection scoring: IoU, per-class average precision, mAP50.

Average precision uses the all-points interpolation of the precision
envelope over recall, matching current VOC-style detector tooling. Matching
is greedy in confidence order within each class, one truth box per match.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

from .dataset import BoundingBox, Dataset
from .errors import ContractError, DataError


@dataclass(frozen=True)
class Detection:
    """One predicted box with its confidence."""

    image_id: str
    class_id: int
    box: BoundingBox
    confidence: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise ContractError(f"confidence must be in [0, 1], got {self.confidence}")


@dataclass(frozen=True)
class EvalResult:
    """Per-class AP plus their mean over classes present in the ground truth."""

    per_class_ap: dict[int, float]
    map50: float

    def to_json(self) -> str:
        doc = {
            "per_class_ap": {str(k): v for k, v in sorted(self.per_class_ap.items())},
            "map50": self.map50,
        }
        return json.dumps(doc, indent=2) + "\n"


def corner_iou(
    a: tuple[float, float, float, float], b: tuple[float, float, float, float]
) -> float:
    """Intersection-over-union of two (x1, y1, x2, y2) boxes; 0 if disjoint."""
    ix1, iy1 = max(a[0], b[0]), max(a[1], b[1])
    ix2, iy2 = min(a[2], b[2]), min(a[3], b[3])
    iw, ih = ix2 - ix1, iy2 - iy1
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    area_a = (a[2] - a[0]) * (a[3] - a[1])
    area_b = (b[2] - b[0]) * (b[3] - b[1])
    return inter / (area_a + area_b - inter)


def iou(a: BoundingBox, b: BoundingBox) -> float:
    return corner_iou(a.corners(), b.corners())


def evaluate(
    preds: list[Detection], truth: Dataset, iou_threshold: float = 0.5
) -> EvalResult:
    """Greedy-matched per-class AP and their mean.

    Predictions sort by descending confidence (ties by image id, then input
    order); each matches at most one unmatched truth box of its class in its
    image, taking the highest-IoU candidate at or above the threshold.
    Classes appearing only in predictions are ignored.
    """
    truth_boxes: dict[int, dict[str, list[BoundingBox]]] = {}
    npos: dict[int, int] = {}
    for record in truth.records:
        for box in record.boxes:
            truth_boxes.setdefault(box.class_id, {}).setdefault(record.id, []).append(box)
            npos[box.class_id] = npos.get(box.class_id, 0) + 1
    if not npos:
        raise ContractError("ground truth contains no boxes")

    per_class_ap: dict[int, float] = {}
    for class_id in sorted(npos):
        class_preds = sorted(
            (p for i, p in enumerate(preds) if p.class_id == class_id),
            key=lambda p: (-p.confidence, p.image_id),
        )
        tp_flags = _match_class(class_preds, truth_boxes[class_id], iou_threshold)
        per_class_ap[class_id] = _average_precision(tp_flags, npos[class_id])

    map50 = sum(per_class_ap.values()) / len(per_class_ap)
    return EvalResult(per_class_ap=per_class_ap, map50=map50)


def _match_class(
    class_preds: list[Detection],
    truths_by_image: dict[str, list[BoundingBox]],
    iou_threshold: float,
) -> list[bool]:
    matched: dict[str, list[bool]] = {
        img: [False] * len(boxes) for img, boxes in truths_by_image.items()
    }
    flags = []
    for pred in class_preds:
        candidates = truths_by_image.get(pred.image_id, [])
        best_iou, best_idx = 0.0, -1
        for idx, truth_box in enumerate(candidates):
            if matched[pred.image_id][idx]:
                continue
            overlap = iou(pred.box, truth_box)
            if overlap >= iou_threshold and overlap > best_iou:
                best_iou, best_idx = overlap, idx
        if best_idx >= 0:
            matched[pred.image_id][best_idx] = True
            flags.append(True)
        else:
            flags.append(False)
    return flags


def _average_precision(tp_flags: list[bool], n_truth: int) -> float:
    """Area under the precision envelope over recall, all points."""
    if not tp_flags or n_truth == 0:
        return 0.0
    recalls, precisions = [0.0], [1.0]
    tp = fp = 0
    for flag in tp_flags:
        tp += flag
        fp += not flag
        recalls.append(tp / n_truth)
        precisions.append(tp / (tp + fp))
    # Monotone non-increasing envelope of precision, right to left.
    for i in range(len(precisions) - 2, -1, -1):
        precisions[i] = max(precisions[i], precisions[i + 1])
    area = 0.0
    for i in range(1, len(recalls)):
        area += (recalls[i] - recalls[i - 1]) * precisions[i]
    return area


def load_predictions_csv(path: str | Path) -> list[Detection]:
    """Read `image_id,class_id,cx,cy,w,h,confidence` rows (normalized coords)."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"predictions file not found: {path}")
    preds = []
    with path.open(newline="") as fh:
        for lineno, row in enumerate(csv.DictReader(fh), start=2):
            try:
                preds.append(
                    Detection(
                        image_id=row["image_id"],
                        class_id=int(row["class_id"]),
                        box=BoundingBox(
                            class_id=int(row["class_id"]),
                            cx=float(row["cx"]),
                            cy=float(row["cy"]),
                            w=float(row["w"]),
                            h=float(row["h"]),
                        ),
                        confidence=float(row["confidence"]),
                    )
                )
            except (KeyError, ValueError, ContractError) as exc:
                raise DataError(f"{path}:{lineno}: bad prediction row: {exc}") from exc
    return preds


def write_predictions_csv(preds: list[Detection], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["image_id", "class_id", "cx", "cy", "w", "h", "confidence"])
        for p in preds:
            writer.writerow(
                [
                    p.image_id,
                    p.class_id,
                    f"{p.box.cx:.6f}",
                    f"{p.box.cy:.6f}",
                    f"{p.box.w:.6f}",
                    f"{p.box.h:.6f}",
                    f"{p.confidence:.6f}",
                ]
            )
    return path
