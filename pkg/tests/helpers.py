"""Shared test helpers: a deterministic structured-image corpus and synthetic
dataset directories in the ingest layout (images/ labels/ masks/ depth/)."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image

from simcurate.dataset import Dataset


def bilinear_upsample(base: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    h, w = shape
    bh, bw = base.shape
    ys = np.linspace(0, bh - 1, h)
    xs = np.linspace(0, bw - 1, w)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, bh - 1)
    x1 = np.minimum(x0 + 1, bw - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    top = base[np.ix_(y0, x0)] * (1 - fx) + base[np.ix_(y0, x1)] * fx
    bot = base[np.ix_(y1, x0)] * (1 - fx) + base[np.ix_(y1, x1)] * fx
    return top * (1 - fy) + bot * fy


def make_fixture_corpus(n: int = 24, height: int = 128, width: int = 128, seed: int = 20250808):
    """Structured test images: gratings, blobs, smooth noise, ramps.

    Every image carries a broadband low-frequency texture layer so the hash
    coefficients stay well separated from their median; peak intensities are
    capped so a 1.2x brightness scale clips only small highlights.
    """
    rng = np.random.default_rng(seed)
    images = []
    for k in range(n):
        yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
        kind = k % 4
        if kind == 0:
            theta = rng.uniform(0, np.pi)
            freq = rng.uniform(1.5, 3.5)
            phase = rng.uniform(0, 2 * np.pi)
            u = (xx * np.cos(theta) + yy * np.sin(theta)) / max(height, width)
            img = 0.5 + 0.42 * np.sin(2 * np.pi * freq * u + phase)
        elif kind == 1:
            img = np.zeros((height, width))
            for _ in range(int(rng.integers(2, 5))):
                cx = rng.uniform(0.15, 0.85) * width
                cy = rng.uniform(0.15, 0.85) * height
                s = rng.uniform(0.08, 0.2) * max(height, width)
                img += rng.uniform(0.5, 1.0) * np.exp(
                    -((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * s * s)
                )
            img = img / img.max()
        elif kind == 2:
            img = 0.9 * bilinear_upsample(rng.uniform(0, 1, size=(5, 7)), (height, width))
        else:
            gdir = rng.uniform(0, 2 * np.pi)
            ramp = xx * np.cos(gdir) + yy * np.sin(gdir)
            ramp = (ramp - ramp.min()) / (ramp.max() - ramp.min())
            waves = 0.5 + 0.5 * np.sin(
                2 * np.pi * rng.uniform(1.5, 3.0) * ramp + rng.uniform(0, 6.0)
            )
            img = 0.85 * (0.6 * ramp + 0.4 * waves)
        texture = bilinear_upsample(rng.uniform(0, 1, size=(9, 9)), (height, width))
        img = np.clip(0.65 * img + 0.35 * texture, 0.0, 1.0)
        tint = rng.uniform(0.55, 0.88, size=3)
        rgb = np.clip(np.rint(img[..., None] * tint[None, None, :] * 255.0), 0, 255)
        images.append(rgb.astype(np.uint8))
    return images


def make_record_files(
    root: Path,
    index: int,
    size: int = 48,
    with_mask: bool = True,
    with_depth: bool = True,
    with_labels: bool = True,
    seed: int = 0,
) -> str:
    """One synthetic record: gradient background, one box-shaped target."""
    rng = np.random.default_rng(seed * 100003 + index)
    h = w = size
    yy, xx = np.mgrid[0:h, 0:w]
    background = (
        40 + 120 * xx / w + 60 * yy / h + rng.integers(0, 30, size=(h, w))
    ).astype(np.uint8)
    image = np.stack([background] * 3, axis=-1)
    image[..., 0] = np.clip(image[..., 0] + rng.integers(0, 40), 0, 255)

    bw = int(rng.integers(size // 4, size // 2))
    bh = int(rng.integers(size // 4, size // 2))
    x0 = int(rng.integers(1, w - bw - 1))
    y0 = int(rng.integers(1, h - bh - 1))
    color = rng.integers(0, 256, size=3, dtype=np.uint8)
    image[y0 : y0 + bh, x0 : x0 + bw] = color

    stem = f"{index:06d}"
    (root / "images").mkdir(parents=True, exist_ok=True)
    Image.fromarray(image).save(root / "images" / f"{stem}.png")

    if with_labels:
        (root / "labels").mkdir(exist_ok=True)
        cx = (x0 + bw / 2) / w
        cy = (y0 + bh / 2) / h
        (root / "labels" / f"{stem}.txt").write_text(
            f"0 {cx:.6f} {cy:.6f} {bw / w:.6f} {bh / h:.6f}\n"
        )
    if with_mask:
        (root / "masks").mkdir(exist_ok=True)
        mask = np.zeros((h, w), dtype=np.uint8)
        mask[y0 : y0 + bh, x0 : x0 + bw] = 255
        Image.fromarray(mask).save(root / "masks" / f"{stem}.png")
    if with_depth:
        (root / "depth").mkdir(exist_ok=True)
        depth = (1000 + 40 * xx + 25 * yy).astype(np.uint16)
        Image.fromarray(depth).save(root / "depth" / f"{stem}.png")
    return stem


def make_pool_dir(root: Path, n: int, size: int = 48, seed: int = 0, **kwargs) -> Path:
    for index in range(n):
        make_record_files(root, index, size=size, seed=seed, **kwargs)
    return root


def dataset_signature(ds: Dataset) -> tuple:
    """Structural identity for round-trip comparisons: paths excluded."""
    return (
        ds.name,
        ds.role,
        round(ds.depth_scale, 9),
        tuple(
            (
                r.id,
                r.width,
                r.height,
                r.provenance,
                r.mask_path is not None,
                r.depth_path is not None,
                tuple(
                    (b.class_id, round(b.cx, 6), round(b.cy, 6), round(b.w, 6), round(b.h, 6))
                    for b in r.boxes
                ),
            )
            for r in ds.records
        ),
    )


def write_manifest_json(path: Path, records: list[dict], **top) -> Path:
    doc = {"name": top.get("name", "test"), "role": top.get("role", "train")}
    doc.update(top)
    doc["records"] = records
    path.write_text(json.dumps(doc, indent=2))
    return path
