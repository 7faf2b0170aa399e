#!/usr/bin/env python3
"""Generate a synthetic demo dataset in the ingest layout.

Writes a rendered-style pool (images + YOLO labels + masks + 16-bit depth)
and a small reference set, so the full pipeline can be exercised offline:

    python scripts/make_demo_dataset.py --out demo --pool-size 600 --refs 5
    simcurate ingest --dir demo/pool --out demo/pool/manifest.json
"""

import argparse
from pathlib import Path

import numpy as np
from PIL import Image


def write_record(root: Path, index: int, size: int, rng) -> None:
    h = w = size
    yy, xx = np.mgrid[0:h, 0:w]
    background = (40 + 120 * xx / w + 60 * yy / h + rng.integers(0, 30, size=(h, w))).astype(
        np.uint8
    )
    image = np.stack([background] * 3, axis=-1)
    image[..., 0] = np.clip(image[..., 0] + rng.integers(0, 40), 0, 255)

    bw = int(rng.integers(size // 4, size // 2))
    bh = int(rng.integers(size // 4, size // 2))
    x0 = int(rng.integers(1, w - bw - 1))
    y0 = int(rng.integers(1, h - bh - 1))
    image[y0 : y0 + bh, x0 : x0 + bw] = rng.integers(0, 256, size=3, dtype=np.uint8)

    stem = f"{index:06d}"
    Image.fromarray(image).save(root / "images" / f"{stem}.png")
    (root / "labels" / f"{stem}.txt").write_text(
        f"0 {(x0 + bw / 2) / w:.6f} {(y0 + bh / 2) / h:.6f} {bw / w:.6f} {bh / h:.6f}\n"
    )
    mask = np.zeros((h, w), dtype=np.uint8)
    mask[y0 : y0 + bh, x0 : x0 + bw] = 255
    Image.fromarray(mask).save(root / "masks" / f"{stem}.png")
    depth = (1000 + 40 * xx + 25 * yy).astype(np.uint16)
    Image.fromarray(depth).save(root / "depth" / f"{stem}.png")


def write_reference(root: Path, index: int, size: int, rng) -> None:
    h = w = size
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    theta = rng.uniform(0, np.pi)
    u = (xx * np.cos(theta) + yy * np.sin(theta)) / size
    img = 0.5 + 0.35 * np.sin(2 * np.pi * rng.uniform(1.5, 3.5) * u)
    img += 0.15 * rng.standard_normal((h, w))
    rgb = np.clip(np.rint(img[..., None] * rng.uniform(0.5, 0.9, 3) * 255), 0, 255)
    Image.fromarray(rgb.astype(np.uint8)).save(root / "images" / f"{index:06d}.png")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", type=Path, required=True, help="output root directory")
    parser.add_argument("--pool-size", type=int, default=600)
    parser.add_argument("--refs", type=int, default=5)
    parser.add_argument("--size", type=int, default=48, help="image side length in pixels")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    pool = args.out / "pool"
    for sub in ("images", "labels", "masks", "depth"):
        (pool / sub).mkdir(parents=True, exist_ok=True)
    for index in range(args.pool_size):
        write_record(pool, index, args.size, rng)

    ref = args.out / "ref"
    (ref / "images").mkdir(parents=True, exist_ok=True)
    for index in range(args.refs):
        write_reference(ref, index, args.size, rng)

    print(f"wrote {args.pool_size} pool records and {args.refs} references under {args.out}")


if __name__ == "__main__":
    main()
