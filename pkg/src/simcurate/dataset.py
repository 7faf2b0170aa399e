"""Dataset domain model and on-disk formats.

A dataset is a JSON manifest listing image records with YOLO-format label
files and optional mask/depth side-channels. Records are kept sorted by id
so subset protocols that talk about "the first N images" are reproducible.
"""

from __future__ import annotations

import json
import logging
import math
import os
import random
import shutil
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

from PIL import Image

from .errors import ContractError, DataError

log = logging.getLogger(__name__)

ROLES = ("train", "val", "ref", "test")
PROVENANCES = ("rendered", "genai_context", "genai_random")

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box in normalized center/size coordinates."""

    class_id: int
    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self) -> None:
        if self.class_id < 0:
            raise ContractError(f"class_id must be >= 0, got {self.class_id}")
        if not (0.0 <= self.cx <= 1.0 and 0.0 <= self.cy <= 1.0):
            raise ContractError(f"box center ({self.cx}, {self.cy}) outside [0, 1]")
        if not (0.0 < self.w <= 1.0 and 0.0 < self.h <= 1.0):
            raise ContractError(f"box size ({self.w}, {self.h}) outside (0, 1]")

    def corners(self) -> tuple[float, float, float, float]:
        """(x1, y1, x2, y2) in the same normalized units."""
        return (
            self.cx - self.w / 2.0,
            self.cy - self.h / 2.0,
            self.cx + self.w / 2.0,
            self.cy + self.h / 2.0,
        )

    def to_pixels(self, width: int, height: int) -> tuple[float, float, float, float]:
        x1, y1, x2, y2 = self.corners()
        return (x1 * width, y1 * height, x2 * width, y2 * height)


@dataclass(frozen=True)
class ImageRecord:
    """One image plus its annotation artifacts and provenance."""

    id: str
    image_path: Path
    width: int
    height: int
    boxes: tuple[BoundingBox, ...] = ()
    mask_path: Path | None = None
    depth_path: Path | None = None
    provenance: str = "rendered"

    def __post_init__(self) -> None:
        if self.provenance not in PROVENANCES:
            raise ContractError(f"unknown provenance {self.provenance!r}")


@dataclass(frozen=True)
class Dataset:
    """An id-ordered collection of records with a split role."""

    name: str
    role: str
    records: tuple[ImageRecord, ...]
    depth_scale: float = 1.0

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise ContractError(f"unknown role {self.role!r}")
        ordered = tuple(sorted(self.records, key=lambda r: r.id))
        ids = [r.id for r in ordered]
        for a, b in zip(ids, ids[1:]):
            if a == b:
                raise DataError(f"duplicate record id {a!r} in dataset {self.name!r}")
        object.__setattr__(self, "records", ordered)

    def __len__(self) -> int:
        return len(self.records)

    def ids(self) -> list[str]:
        return [r.id for r in self.records]

    def subset(self, ids: set[str], name: str | None = None) -> "Dataset":
        picked = tuple(r for r in self.records if r.id in ids)
        if len(picked) != len(ids):
            missing = ids - {r.id for r in picked}
            raise ContractError(f"ids not in dataset: {sorted(missing)[:5]}")
        return replace(self, name=name or self.name, records=picked)


@dataclass(frozen=True)
class SplitSpec:
    """Seeded train/val split parameters."""

    train_fraction: float = 0.8
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 < self.train_fraction < 1.0:
            raise ContractError(f"train_fraction must be in (0, 1), got {self.train_fraction}")

    def train_size(self, n: int) -> int:
        return int(math.floor(self.train_fraction * n + 0.5))


def load_dataset(manifest_path: str | Path, jobs: int = 1) -> Dataset:
    """Load a dataset manifest, validating files and dimension invariants."""
    manifest_path = Path(manifest_path)
    if not manifest_path.is_file():
        raise DataError(f"manifest not found: {manifest_path}")
    try:
        doc = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"malformed manifest {manifest_path}: {exc}") from exc

    base = manifest_path.parent
    entries = doc.get("records", [])
    depth_scale = float(doc.get("depth_scale", 1.0))

    def build(entry: dict) -> ImageRecord:
        return _load_record(entry, base)

    if jobs > 1 and len(entries) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(build, entries))
    else:
        records = [build(e) for e in entries]

    try:
        return Dataset(
            name=str(doc.get("name", manifest_path.parent.name)),
            role=str(doc.get("role", "train")),
            records=tuple(records),
            depth_scale=depth_scale,
        )
    except ContractError as exc:
        raise DataError(f"invalid manifest {manifest_path}: {exc}") from exc


def _load_record(entry: dict, base: Path) -> ImageRecord:
    rec_id = str(entry["id"])
    image_path = _resolve(entry["image"], base, rec_id, "image")
    width, height = _image_size(image_path)

    boxes: tuple[BoundingBox, ...] = ()
    labels = entry.get("labels")
    if labels:
        labels_path = _resolve(labels, base, rec_id, "labels")
        boxes = tuple(parse_yolo_labels(labels_path))

    mask_path = depth_path = None
    if entry.get("mask"):
        mask_path = _resolve(entry["mask"], base, rec_id, "mask")
        _check_dims(mask_path, width, height, rec_id, "mask")
    if entry.get("depth"):
        depth_path = _resolve(entry["depth"], base, rec_id, "depth")
        _check_dims(depth_path, width, height, rec_id, "depth")

    try:
        return ImageRecord(
            id=rec_id,
            image_path=image_path,
            width=width,
            height=height,
            boxes=boxes,
            mask_path=mask_path,
            depth_path=depth_path,
            provenance=str(entry.get("provenance", "rendered")),
        )
    except ContractError as exc:
        raise DataError(f"record {rec_id!r}: {exc}") from exc


def _resolve(value: str, base: Path, rec_id: str, kind: str) -> Path:
    path = Path(value)
    if not path.is_absolute():
        path = (base / path).resolve()
    if not path.is_file():
        raise DataError(f"record {rec_id!r}: {kind} file not found: {path}")
    return path


def _image_size(path: Path) -> tuple[int, int]:
    try:
        with Image.open(path) as im:
            return im.size
    except OSError as exc:
        raise DataError(f"cannot read image {path}: {exc}") from exc


def _check_dims(path: Path, width: int, height: int, rec_id: str, kind: str) -> None:
    w, h = _image_size(path)
    if (w, h) != (width, height):
        raise DataError(
            f"record {rec_id!r}: {kind} is {w}x{h} but image is {width}x{height}"
        )


def parse_yolo_labels(path: Path) -> list[BoundingBox]:
    """Parse one `class cx cy w h` line per box, clamping float overshoot."""
    boxes = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 5:
            raise DataError(f"{path}:{lineno}: expected 5 fields, got {len(parts)}")
        try:
            class_id = int(parts[0])
            cx, cy, w, h = (float(p) for p in parts[1:])
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from exc
        boxes.append(_clamped_box(class_id, cx, cy, w, h, path, lineno))
    return boxes


def _clamped_box(
    class_id: int, cx: float, cy: float, w: float, h: float, path: Path, lineno: int
) -> BoundingBox:
    x1 = max(0.0, cx - w / 2.0)
    y1 = max(0.0, cy - h / 2.0)
    x2 = min(1.0, cx + w / 2.0)
    y2 = min(1.0, cy + h / 2.0)
    if x2 <= x1 or y2 <= y1:
        raise DataError(f"{path}:{lineno}: box lies outside the image")
    if (x1, y1, x2, y2) != (cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0):
        log.warning("%s:%d: box extends past image bounds, clamped", path, lineno)
    try:
        return BoundingBox(
            class_id=class_id,
            cx=(x1 + x2) / 2.0,
            cy=(y1 + y2) / 2.0,
            w=x2 - x1,
            h=y2 - y1,
        )
    except ContractError as exc:
        raise DataError(f"{path}:{lineno}: {exc}") from exc


def split_dataset(dataset: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    """Deterministic seeded partition into train/val datasets."""
    if not dataset.records:
        raise ContractError("cannot split an empty dataset")
    shuffled = list(dataset.records)
    random.Random(spec.seed).shuffle(shuffled)
    n_train = spec.train_size(len(shuffled))
    train_ids = {r.id for r in shuffled[:n_train]}
    train = Dataset(
        name=f"{dataset.name}-train",
        role="train",
        records=tuple(r for r in dataset.records if r.id in train_ids),
        depth_scale=dataset.depth_scale,
    )
    val = Dataset(
        name=f"{dataset.name}-val",
        role="val",
        records=tuple(r for r in dataset.records if r.id not in train_ids),
        depth_scale=dataset.depth_scale,
    )
    return train, val


def write_dataset(dataset: Dataset, out_dir: str | Path, copy_files: bool = True) -> Path:
    """Write labels and a manifest under out_dir; copy media unless told not to.

    In reference mode (copy_files=False) the manifest points at the original
    image/mask/depth files; label files are always written fresh.
    """
    out_dir = Path(out_dir)
    new_records = []
    for record in dataset.records:
        if copy_files:
            record = replace(
                record,
                image_path=_copy_into(record.image_path, out_dir / "images", record.id),
                mask_path=(
                    _copy_into(record.mask_path, out_dir / "masks", record.id)
                    if record.mask_path
                    else None
                ),
                depth_path=(
                    _copy_into(record.depth_path, out_dir / "depth", record.id)
                    if record.depth_path
                    else None
                ),
            )
        new_records.append(record)

    written = replace(dataset, records=tuple(new_records))
    return write_manifest(written, out_dir / "manifest.json")


def write_manifest(dataset: Dataset, manifest_path: str | Path) -> Path:
    """Serialize the manifest and its label files next to each other.

    Labels always land in <manifest dir>/labels/<id>.txt; image/mask/depth
    paths are relativized against the manifest's directory.
    """
    manifest_path = Path(manifest_path)
    base = manifest_path.parent
    labels_dir = base / "labels"
    labels_dir.mkdir(parents=True, exist_ok=True)

    entries = []
    for record in dataset.records:
        labels_path = labels_dir / f"{record.id}.txt"
        write_yolo_labels(record.boxes, labels_path)
        entries.append(
            {
                "id": record.id,
                "image": _relativize(record.image_path, base),
                "labels": _relativize(labels_path, base),
                "mask": _relativize(record.mask_path, base) if record.mask_path else None,
                "depth": _relativize(record.depth_path, base) if record.depth_path else None,
                "provenance": record.provenance,
            }
        )

    doc = {
        "name": dataset.name,
        "role": dataset.role,
        "depth_scale": dataset.depth_scale,
        "records": entries,
    }
    manifest_path.write_text(json.dumps(doc, indent=2) + "\n")
    return manifest_path


def write_yolo_labels(boxes: tuple[BoundingBox, ...], path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [
        f"{b.class_id} {b.cx:.6f} {b.cy:.6f} {b.w:.6f} {b.h:.6f}" for b in boxes
    ]
    path.write_text("\n".join(lines) + ("\n" if lines else ""))


def _copy_into(src: Path, directory: Path, rec_id: str) -> Path:
    directory.mkdir(parents=True, exist_ok=True)
    dst = directory / f"{rec_id}{src.suffix.lower()}"
    try:
        shutil.copyfile(src, dst)
    except OSError as exc:
        raise DataError(f"cannot copy {src} -> {dst}: {exc}") from exc
    return dst


def _relativize(path: Path, base: Path) -> str:
    try:
        return str(Path(path).resolve().relative_to(base.resolve()))
    except ValueError:
        return os.path.relpath(Path(path).resolve(), base.resolve())


def ingest_directory(
    root: str | Path,
    name: str | None = None,
    role: str = "train",
    depth_scale: float = 1.0,
    id_pad: int = 6,
) -> Dataset:
    """Build a dataset from an images/labels/masks/depth directory layout.

    Numeric image stems become zero-padded ids so render frame indices sort
    stably; labels, masks and depth maps are matched by stem and optional.
    """
    root = Path(root)
    images_dir = root / "images"
    if not images_dir.is_dir():
        raise DataError(f"no images directory under {root}")

    image_files = sorted(
        p for p in images_dir.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES
    )
    if not image_files:
        raise DataError(f"no images found under {images_dir}")

    records = []
    for path in image_files:
        stem = path.stem
        rec_id = stem.zfill(id_pad) if stem.isdigit() else stem
        width, height = _image_size(path)
        labels_path = root / "labels" / f"{stem}.txt"
        boxes = tuple(parse_yolo_labels(labels_path)) if labels_path.is_file() else ()
        mask_path = root / "masks" / f"{stem}.png"
        depth_path = root / "depth" / f"{stem}.png"
        record = ImageRecord(
            id=rec_id,
            image_path=path.resolve(),
            width=width,
            height=height,
            boxes=boxes,
            mask_path=mask_path.resolve() if mask_path.is_file() else None,
            depth_path=depth_path.resolve() if depth_path.is_file() else None,
        )
        if record.mask_path:
            _check_dims(record.mask_path, width, height, rec_id, "mask")
        if record.depth_path:
            _check_dims(record.depth_path, width, height, rec_id, "depth")
        records.append(record)

    return Dataset(
        name=name or root.name,
        role=role,
        records=tuple(records),
        depth_scale=depth_scale,
    )
