#!/usr/bin/env python3
"""Hash robustness calibration over an image directory.

Reports Hamming-distance statistics for each hash algorithm under the
perturbations the curation pipeline cares about (brightness scaling and 2x
downscaling) plus the separation between distinct images. When OpenCV is
installed the script also runs an independently constructed DCT hash
(cv2 resize + cv2 DCT + median threshold) as a cross-check.

    python scripts/phash_robustness_stats.py --images demo/ref/images
"""

import argparse
import itertools
from pathlib import Path

import numpy as np
from PIL import Image

from simcurate import features


def load_images(directory: Path) -> list[np.ndarray]:
    paths = sorted(
        p for p in directory.iterdir() if p.suffix.lower() in (".png", ".jpg", ".jpeg")
    )
    return [np.asarray(Image.open(p).convert("RGB")) for p in paths]


def brightness_scaled(rgb: np.ndarray, factor: float) -> np.ndarray:
    return np.clip(np.rint(rgb.astype(np.float64) * factor), 0, 255).astype(np.uint8)


def downscale_2x(rgb: np.ndarray) -> np.ndarray:
    h, w = rgb.shape[:2]
    return np.asarray(Image.fromarray(rgb).resize((w // 2, h // 2), Image.BOX))


def stats(label: str, distances: list[int]) -> None:
    arr = np.asarray(distances)
    print(
        f"  {label:<22} min={arr.min():3d}  mean={arr.mean():6.2f}  max={arr.max():3d}"
    )


def reference_dct_hash(rgb: np.ndarray):
    import cv2

    gray = cv2.cvtColor(rgb, cv2.COLOR_RGB2GRAY)
    small = cv2.resize(gray.astype(np.float32), (32, 32), interpolation=cv2.INTER_AREA)
    block = cv2.dct(small)[:8, :8].flatten()
    return block > np.median(block)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--images", type=Path, required=True)
    parser.add_argument("--factor", type=float, default=1.2, help="brightness scale factor")
    parser.add_argument("--bits", type=int, default=64, choices=features.HASH_BIT_DEPTHS)
    args = parser.parse_args()

    images = load_images(args.images)
    if len(images) < 2:
        raise SystemExit("need at least 2 images")
    print(f"{len(images)} images from {args.images}")

    for algorithm in features.HASH_ALGORITHMS:
        def hash_of(rgb):
            return features.compute_hash(features.to_gray(rgb), algorithm, args.bits)

        hashes = [hash_of(im) for im in images]
        print(f"{algorithm} ({args.bits} bits):")
        stats(
            f"brightness x{args.factor}",
            [
                features.hamming(h, hash_of(brightness_scaled(im, args.factor)))
                for im, h in zip(images, hashes)
            ],
        )
        stats(
            "downscale 2x",
            [features.hamming(h, hash_of(downscale_2x(im))) for im, h in zip(images, hashes)],
        )
        stats(
            "distinct pairs",
            [
                features.hamming(a, b)
                for a, b in itertools.combinations(hashes, 2)
            ],
        )

    try:
        import cv2  # noqa: F401
    except ImportError:
        print("opencv not installed; skipping independent reference cross-check")
        return

    print("independent reference DCT hash (cv2):")
    ref_hashes = [reference_dct_hash(im) for im in images]
    stats(
        f"brightness x{args.factor}",
        [
            int(np.count_nonzero(h != reference_dct_hash(brightness_scaled(im, args.factor))))
            for im, h in zip(images, ref_hashes)
        ],
    )
    stats(
        "downscale 2x",
        [
            int(np.count_nonzero(h != reference_dct_hash(downscale_2x(im))))
            for im, h in zip(images, ref_hashes)
        ],
    )
    stats(
        "distinct pairs",
        [
            int(np.count_nonzero(a != b))
            for a, b in itertools.combinations(ref_hashes, 2)
        ],
    )


if __name__ == "__main__":
    main()
