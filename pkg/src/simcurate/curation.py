"""Scoring of synthetic pools against a real reference set, and subset building.

Every pool image gets a distance to the reference set (brightness delta or
perceptual-hash Hamming distance, aggregated over references). Ranking keeps
a fixed id-ordered seed identical across methods and grows nested subsets by
ascending distance.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import random
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from . import features
from .dataset import Dataset
from .errors import ContractError, DataError

log = logging.getLogger(__name__)

METHODS = ("brightness", "phash")
AGGREGATIONS = ("min", "mean", "median")


@dataclass(frozen=True)
class CurationScore:
    """Distance of one pool image to the reference set."""

    image_id: str
    method: str
    aggregation: str
    distance: float

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ContractError(f"unknown method {self.method!r}")
        if self.aggregation not in AGGREGATIONS:
            raise ContractError(f"unknown aggregation {self.aggregation!r}")
        if self.distance < 0:
            raise ContractError(f"distance must be >= 0, got {self.distance}")


@dataclass(frozen=True)
class SubsetPlan:
    """Seed-then-grow subset sizes: seed, seed+step, ... up to max_size."""

    seed_size: int = 400
    step: int = 200
    max_size: int = 2000

    def __post_init__(self) -> None:
        if self.seed_size < 1 or self.step < 1:
            raise ContractError("seed_size and step must be >= 1")
        if self.seed_size > self.max_size:
            raise ContractError(
                f"seed_size {self.seed_size} exceeds max_size {self.max_size}"
            )

    def sizes(self) -> list[int]:
        return list(range(self.seed_size, self.max_size + 1, self.step))

    @classmethod
    def parse(cls, text: str) -> "SubsetPlan":
        """Parse a seed:step:max string like 400:200:2000."""
        try:
            seed, step, top = (int(p) for p in text.split(":"))
        except ValueError as exc:
            raise ContractError(f"bad plan {text!r}, expected seed:step:max") from exc
        return cls(seed_size=seed, step=step, max_size=top)


class FeatureCache:
    """Content-addressed sidecar for per-image features.

    Keys combine the file digest with the method parameters, so edits to an
    image or a change of hash algorithm invalidate stale entries naturally.
    """

    def __init__(self, path: str | Path | None):
        self.path = Path(path) if path else None
        self._entries: dict[str, str] = {}
        self._dirty = False
        if self.path and self.path.is_file():
            try:
                self._entries = json.loads(self.path.read_text())
            except (json.JSONDecodeError, OSError):
                log.warning("ignoring unreadable feature cache %s", self.path)

    def get(self, key: str) -> str | None:
        return self._entries.get(key)

    def put(self, key: str, value: str) -> None:
        self._entries[key] = value
        self._dirty = True

    def save(self) -> None:
        if self.path and self._dirty:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text(json.dumps(self._entries, indent=0, sort_keys=True))
            self._dirty = False


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()[:24]


def _load_gray(path: Path) -> np.ndarray:
    with Image.open(path) as im:
        return features.to_gray(np.asarray(im.convert("RGB")))


def score_against_ref(
    pool: Dataset,
    ref: Dataset,
    method: str = "phash",
    aggregation: str = "min",
    hash_algorithm: str = "dct_phash",
    bit_depth: int = 64,
    jobs: int = 1,
    cache: FeatureCache | None = None,
) -> list[CurationScore]:
    """Distance of every pool image to the reference set.

    The aggregation runs over all pairwise distances to the references, so
    results do not depend on reference ordering or on the degree of
    parallelism.
    """
    if method not in METHODS:
        raise ContractError(f"unknown method {method!r}")
    if aggregation not in AGGREGATIONS:
        raise ContractError(f"unknown aggregation {aggregation!r}")
    if not ref.records:
        raise ContractError("reference set is empty")
    if not pool.records:
        raise ContractError("pool is empty")

    cache = cache or FeatureCache(None)
    params = f"{method}:{hash_algorithm}:{bit_depth}" if method == "phash" else method

    def feature_of(path: Path):
        key = f"{_digest(path)}:{params}"
        cached = cache.get(key)
        if cached is not None:
            if method == "brightness":
                return float(cached)
            return features.PerceptualHash.from_hex(cached, hash_algorithm, bit_depth)
        gray = _load_gray(path)
        if method == "brightness":
            value = features.brightness(gray)
            cache.put(key, repr(value))
            return value
        value = features.compute_hash(gray, hash_algorithm, bit_depth)
        cache.put(key, value.to_hex())
        return value

    # Reference features are shared by every pool image; compute them once,
    # serially, before fanning out.
    ref_features = [feature_of(r.image_path) for r in ref.records]

    def score_one(record) -> CurationScore:
        feat = feature_of(record.image_path)
        if method == "brightness":
            dists = [abs(feat - rf) for rf in ref_features]
        else:
            dists = [float(features.hamming(feat, rf)) for rf in ref_features]
        return CurationScore(
            image_id=record.id,
            method=method,
            aggregation=aggregation,
            distance=_aggregate(dists, aggregation),
        )

    if jobs > 1 and len(pool.records) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as executor:
            scores = list(executor.map(score_one, pool.records))
    else:
        scores = [score_one(r) for r in pool.records]

    cache.save()
    return scores


def _aggregate(distances: list[float], aggregation: str) -> float:
    if aggregation == "min":
        return min(distances)
    if aggregation == "mean":
        return float(statistics.fmean(distances))
    return float(statistics.median(distances))


def rank_and_select(
    scores: list[CurationScore],
    pool: Dataset,
    plan: SubsetPlan,
    seed_selection: str = "first",
    selection_seed: int = 0,
) -> list[Dataset]:
    """Build nested subsets: a fixed seed plus top-ranked additions.

    The default seed is the first seed_size records by id for every method,
    so method comparisons share an identical starting subset; "random" draws
    a seeded sample instead. Remaining records join in ascending distance
    order with ties broken by id.
    """
    if seed_selection not in ("first", "random"):
        raise ContractError(f"unknown seed_selection {seed_selection!r}")
    if plan.max_size > len(pool.records):
        raise ContractError(
            f"plan max_size {plan.max_size} exceeds pool size {len(pool.records)}"
        )
    by_id = {s.image_id: s.distance for s in scores}
    missing = [r.id for r in pool.records if r.id not in by_id]
    if missing:
        raise ContractError(f"scores missing for pool ids: {missing[:5]}")

    ordered = pool.records  # already id-sorted by Dataset invariant
    if seed_selection == "random":
        seed_ids = random.Random(selection_seed).sample(
            [r.id for r in ordered], plan.seed_size
        )
    else:
        seed_ids = [r.id for r in ordered[: plan.seed_size]]
    seed_set = set(seed_ids)
    ranked_rest = sorted(
        (r.id for r in ordered if r.id not in seed_set),
        key=lambda rid: (by_id[rid], rid),
    )

    subsets = []
    for size in plan.sizes():
        member_ids = set(seed_ids) | set(ranked_rest[: size - plan.seed_size])
        subsets.append(pool.subset(member_ids, name=f"{pool.name}-n{size}"))
    return subsets


def write_scores_csv(scores: list[CurationScore], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["image_id", "method", "aggregation", "distance"])
        for s in scores:
            writer.writerow([s.image_id, s.method, s.aggregation, repr(s.distance)])
    return path


def read_scores_csv(path: str | Path) -> list[CurationScore]:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"scores file not found: {path}")
    scores = []
    with path.open(newline="") as fh:
        for row in csv.DictReader(fh):
            try:
                scores.append(
                    CurationScore(
                        image_id=row["image_id"],
                        method=row["method"],
                        aggregation=row["aggregation"],
                        distance=float(row["distance"]),
                    )
                )
            except (KeyError, ValueError, ContractError) as exc:
                raise DataError(f"bad score row {row!r} in {path}: {exc}") from exc
    return scores
