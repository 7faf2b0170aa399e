"""Background randomization through a pluggable generation backend.

For each admitted record the pipeline loads image/depth/mask, derives canny
edges, requests a generated variant (depth+canny conditioned, prompted),
then pastes the original target pixels back through the binary mask so the
annotations stay valid. Prompts come from a captioning endpoint, a fixed
non-industrial pool, or a text file.
"""

from __future__ import annotations

import base64
import io
import logging
import random
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import requests
from PIL import Image

from . import features
from .dataset import Dataset, ImageRecord, write_manifest
from .errors import BackendError, BackendRetryableError, ContractError

log = logging.getLogger(__name__)

PROMPT_MODES = ("context_aware", "random_pool", "file")

NEGATIVE_CONTEXT = "bad, deformed, ugly"
NEGATIVE_RANDOM = "bad, deformed, ugly, abstract"

# Deliberately non-industrial scenes, so generated backgrounds cannot overlap
# the target domain.
RANDOM_PROMPT_POOL = (
    "A scene on the moon, craters, astronaut",
    "A dense forest with sunlight filtering through the trees",
    "A snow-covered mountain range with clear blue skies",
    "An underwater coral reef teeming with fish",
    "A peaceful meadow with wildflowers and tall grass swaying in the breeze",
    "A peaceful beach with waves gently lapping the shore",
    "A desert landscape with sand dunes and clear night sky",
    "A grassy hillside with grazing animals under a bright blue sky",
)


@dataclass(frozen=True)
class GenerationRequest:
    """One unit of work for the generation backend."""

    image: np.ndarray = field(repr=False)
    depth: np.ndarray = field(repr=False)
    canny: np.ndarray = field(repr=False)
    prompt: str
    negative_prompt: str
    control_scale: float = 0.5
    guidance_scale: float = 5.0
    steps: int = 50
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 < self.control_scale <= 1.0:
            raise ContractError(f"control_scale must be in (0, 1], got {self.control_scale}")
        shape = self.image.shape[:2]
        if self.depth.shape[:2] != shape or self.canny.shape[:2] != shape:
            raise ContractError(
                f"image/depth/canny dimensions differ: {shape}, "
                f"{self.depth.shape[:2]}, {self.canny.shape[:2]}"
            )


@dataclass(frozen=True)
class GenerationResult:
    """Backend output plus the mask-composited final image."""

    generated: np.ndarray = field(repr=False)
    composited: np.ndarray = field(repr=False)
    request: GenerationRequest
    backend_latency: float


def composite(original: np.ndarray, generated: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Target pixels from the original, everything else from the generated image."""
    if original.shape != generated.shape or mask.shape[:2] != original.shape[:2]:
        raise ContractError(
            f"composite dimension mismatch: {original.shape}, {generated.shape}, {mask.shape}"
        )
    on = mask.astype(bool)
    return np.where(on[..., None] if original.ndim == 3 else on, original, generated)


class PromptProvider:
    """Prompt source for the augmentation loop.

    context_aware captions a randomly chosen reference image (captions are
    cached per reference). random_pool draws uniformly from the fixed scene
    pool. file cycles through the lines of a prompt file.
    """

    def __init__(
        self,
        mode: str,
        pool: tuple[str, ...] = RANDOM_PROMPT_POOL,
        negative: str | None = None,
        captioner=None,
        prompt_lines: tuple[str, ...] = (),
    ):
        if mode not in PROMPT_MODES:
            raise ContractError(f"unknown prompt mode {mode!r}")
        if mode == "random_pool" and not pool:
            raise ContractError("random_pool mode needs a nonempty prompt pool")
        if mode == "context_aware" and captioner is None:
            raise ContractError("context_aware mode needs a captioning endpoint")
        if mode == "file" and not prompt_lines:
            raise ContractError("file mode needs a nonempty prompt file")
        self.mode = mode
        self.pool = tuple(pool)
        self.negative = negative if negative is not None else (
            NEGATIVE_RANDOM if mode == "random_pool" else NEGATIVE_CONTEXT
        )
        self.captioner = captioner
        self.prompt_lines = tuple(prompt_lines)
        self._line_cursor = 0
        self._caption_cache: dict[str, str] = {}

    @classmethod
    def random_pool(cls, negative: str | None = None) -> "PromptProvider":
        return cls(mode="random_pool", negative=negative)

    @classmethod
    def context_aware(cls, captioner, negative: str | None = None) -> "PromptProvider":
        return cls(mode="context_aware", captioner=captioner, negative=negative)

    @classmethod
    def from_file(cls, path: str | Path, negative: str | None = None) -> "PromptProvider":
        lines = tuple(
            line.strip() for line in Path(path).read_text().splitlines() if line.strip()
        )
        if not lines:
            raise ContractError(f"prompt file {path} is empty")
        return cls(mode="file", prompt_lines=lines, negative=negative)


def make_prompt(
    provider: PromptProvider,
    record: ImageRecord,
    ref: Dataset | None,
    rng: random.Random,
) -> tuple[str, str]:
    """Produce (prompt, negative_prompt) for one record."""
    if provider.mode == "random_pool":
        return rng.choice(provider.pool), provider.negative
    if provider.mode == "file":
        line = provider.prompt_lines[provider._line_cursor % len(provider.prompt_lines)]
        provider._line_cursor += 1
        return line, provider.negative
    if ref is None or not ref.records:
        raise ContractError("context_aware mode needs a nonempty reference set")
    ref_record = rng.choice(ref.records)
    cached = provider._caption_cache.get(ref_record.id)
    if cached is None:
        cached = provider.captioner(_load_rgb(ref_record.image_path))
        provider._caption_cache[ref_record.id] = cached
    return cached, provider.negative


class MockBackend:
    """Deterministic offline stand-in: a solid color derived from the seed."""

    def __init__(self, caption_text: str = "a workbench with scattered metal parts"):
        self.caption_text = caption_text

    def generate(self, request: GenerationRequest) -> np.ndarray:
        color = np.random.default_rng(request.seed).integers(0, 256, size=3, dtype=np.uint8)
        return np.broadcast_to(color, request.image.shape).copy()

    def caption(self, image: np.ndarray) -> str:
        return self.caption_text


class HttpBackend:
    """Client for the generation wire protocol (POST /generate, /caption)."""

    def __init__(self, base_url: str, timeout: float = 120.0, session=None):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.session = session or requests.Session()

    def generate(self, request: GenerationRequest) -> np.ndarray:
        body = {
            "image_b64": _b64_png(request.image),
            "depth_b64": _b64_png(request.depth),
            "canny_b64": _b64_png(request.canny),
            "prompt": request.prompt,
            "negative_prompt": request.negative_prompt,
            "control_scale": request.control_scale,
            "guidance_scale": request.guidance_scale,
            "steps": request.steps,
            "seed": request.seed,
        }
        try:
            resp = self.session.post(
                f"{self.base_url}/generate", json=body, timeout=self.timeout
            )
        except requests.RequestException as exc:
            raise BackendRetryableError(f"generate request failed: {exc}") from exc
        if resp.status_code == 503:
            raise BackendRetryableError("backend busy (503)")
        if resp.status_code != 200:
            raise BackendError(f"generate returned HTTP {resp.status_code}")
        try:
            generated = np.asarray(Image.open(io.BytesIO(resp.content)).convert("RGB"))
        except OSError as exc:
            raise BackendError(f"generate returned undecodable image: {exc}") from exc
        return generated

    def caption(self, image: np.ndarray) -> str:
        try:
            resp = self.session.post(
                f"{self.base_url}/caption",
                json={"image_b64": _b64_png(image)},
                timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise BackendRetryableError(f"caption request failed: {exc}") from exc
        if resp.status_code == 503:
            raise BackendRetryableError("backend busy (503)")
        if resp.status_code != 200:
            raise BackendError(f"caption returned HTTP {resp.status_code}")
        try:
            return str(resp.json()["caption"])
        except (ValueError, KeyError) as exc:
            raise BackendError(f"caption returned malformed body: {exc}") from exc


@dataclass
class AugmentReport:
    """Outcome ledger for one augmentation run."""

    output_ids: list[str] = field(default_factory=list)
    skipped: list[tuple[str, str]] = field(default_factory=list)
    rejected: list[str] = field(default_factory=list)
    record_seconds: dict[str, float] = field(default_factory=dict)
    total_seconds: float = 0.0


@dataclass(frozen=True)
class AugmentParams:
    """Knobs for one augmentation run."""

    control_scale: float = 0.5
    guidance_scale: float = 5.0
    steps: int = 50
    canny_low: float = features.CANNY_LOW_DEFAULT
    canny_high: float = features.CANNY_HIGH_DEFAULT
    canny_sigma: float = features.CANNY_SIGMA_DEFAULT
    retries: int = 2
    retry_wait: float = 0.5
    id_suffix: str = "_aug"
    save_raw: bool = False


def augment_dataset(
    dataset: Dataset,
    provider: PromptProvider,
    backend,
    out_dir: str | Path,
    ref: Dataset | None = None,
    master_seed: int = 0,
    jobs: int = 1,
    params: AugmentParams = AugmentParams(),
) -> tuple[Dataset, AugmentReport]:
    """Run background randomization over every record with mask and depth.

    Records lacking mask or depth are rejected at admission; backend failures
    are retried a bounded number of times, then skip-logged so a long batch
    survives transient errors. Outputs are ordered by input id regardless of
    completion order, and per-image seeds are master_seed + index so no two
    requests in one run share a seed.
    """
    out_dir = Path(out_dir)
    started = time.perf_counter()
    report = AugmentReport()

    admitted = []
    for record in dataset.records:
        if record.mask_path is None or record.depth_path is None:
            report.rejected.append(record.id)
            log.warning("record %s rejected: missing mask or depth", record.id)
        else:
            admitted.append(record)

    # Prompts and seeds are assigned serially in id order before any backend
    # call, so results are invariant to the worker count.
    rng = random.Random(master_seed)
    work = []
    for index, record in enumerate(admitted):
        image = _load_rgb(record.image_path)
        depth = _load_single_channel(record.depth_path)
        mask = _load_single_channel(record.mask_path) > 0
        edges = features.canny(
            features.to_gray(image),
            t_low=params.canny_low,
            t_high=params.canny_high,
            sigma=params.canny_sigma,
        )
        prompt, negative = make_prompt(provider, record, ref, rng)
        request = GenerationRequest(
            image=image,
            depth=depth,
            canny=edges.to_image(),
            prompt=prompt,
            negative_prompt=negative,
            control_scale=params.control_scale,
            guidance_scale=params.guidance_scale,
            steps=params.steps,
            seed=master_seed + index,
        )
        work.append((record, mask, request))

    def run_one(item) -> tuple[ImageRecord, GenerationResult | None, str | None]:
        record, mask, request = item
        t0 = time.perf_counter()
        attempts = params.retries + 1
        for attempt in range(attempts):
            try:
                generated = backend.generate(request)
                if generated.shape != request.image.shape:
                    raise BackendError(
                        f"backend returned shape {generated.shape}, "
                        f"expected {request.image.shape}"
                    )
                result = GenerationResult(
                    generated=generated,
                    composited=composite(request.image, generated, mask),
                    request=request,
                    backend_latency=time.perf_counter() - t0,
                )
                return record, result, None
            except BackendRetryableError as exc:
                if attempt + 1 < attempts:
                    time.sleep(params.retry_wait)
                    continue
                return record, None, f"retries exhausted: {exc}"
            except BackendError as exc:
                return record, None, str(exc)
        return record, None, "unreachable"

    if jobs > 1 and len(work) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as executor:
            outcomes = list(executor.map(run_one, work))
    else:
        outcomes = [run_one(item) for item in work]

    provenance = "genai_random" if provider.mode == "random_pool" else "genai_context"
    out_records = []
    for record, result, error in outcomes:
        if result is None:
            report.skipped.append((record.id, error or "unknown"))
            log.warning("record %s skipped: %s", record.id, error)
            continue
        out_records.append(
            _write_output(record, result, out_dir, provenance, params)
        )
        report.output_ids.append(record.id + params.id_suffix)
        report.record_seconds[record.id] = result.backend_latency

    augmented = Dataset(
        name=f"{dataset.name}-{provenance}",
        role=dataset.role,
        records=tuple(out_records),
        depth_scale=dataset.depth_scale,
    )
    write_manifest(augmented, out_dir / "manifest.json")
    report.total_seconds = time.perf_counter() - started
    return augmented, report


def _write_output(
    record: ImageRecord,
    result: GenerationResult,
    out_dir: Path,
    provenance: str,
    params: AugmentParams,
) -> ImageRecord:
    new_id = record.id + params.id_suffix
    image_path = out_dir / "images" / f"{new_id}.png"
    _save_png(result.composited, image_path)
    mask_path = out_dir / "masks" / f"{new_id}.png"
    _save_png(_load_single_channel(record.mask_path), mask_path)
    depth_path = out_dir / "depth" / f"{new_id}.png"
    _save_png(_load_single_channel(record.depth_path), depth_path)
    if params.save_raw:
        _save_png(result.generated, out_dir / "raw" / f"{new_id}.png")
    return replace(
        record,
        id=new_id,
        image_path=image_path,
        mask_path=mask_path,
        depth_path=depth_path,
        provenance=provenance,
    )


def _load_rgb(path: Path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"))


def _load_single_channel(path: Path) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im)
    if arr.ndim == 3:
        arr = arr[..., 0]
    if arr.dtype == np.int32:  # 16-bit PNGs decoded via PIL mode "I"
        arr = arr.astype(np.uint16)
    return arr


def _save_png(array: np.ndarray, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(array).save(path, format="PNG")


def _b64_png(array: np.ndarray) -> str:
    buf = io.BytesIO()
    Image.fromarray(array).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def decode_b64_png(text: str) -> np.ndarray:
    """Inverse of the wire encoding used by the generation protocol."""
    return np.asarray(Image.open(io.BytesIO(base64.b64decode(text))))
