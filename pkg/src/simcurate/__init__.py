"""simcurate: dataset curation and background randomization for sim-to-real
object detection.

Pipeline surface: ingest rendered pools, score them against a small set of
real reference images (brightness or perceptual hashing), grow nested
training subsets from the best-ranked images, background-randomize records
through a diffusion backend while preserving annotations, evaluate external
detector predictions with mAP50, and chart accuracy against time overhead.
"""

from .curation import CurationScore, SubsetPlan, rank_and_select, score_against_ref
from .dataset import (
    BoundingBox,
    Dataset,
    ImageRecord,
    SplitSpec,
    ingest_directory,
    load_dataset,
    split_dataset,
    write_dataset,
)
from .errors import BackendError, BackendRetryableError, ContractError, DataError
from .evaluation import Detection, EvalResult, evaluate, iou
from .features import (
    EdgeMap,
    PerceptualHash,
    average_hash,
    brightness,
    canny,
    compute_hash,
    difference_hash,
    hamming,
    phash,
    to_gray,
)
from .genai import (
    AugmentParams,
    GenerationRequest,
    GenerationResult,
    HttpBackend,
    MockBackend,
    PromptProvider,
    augment_dataset,
    composite,
    make_prompt,
)
from .report import ExperimentRecord, TimingLedger, emit_report, ingest_training_results

__version__ = "0.1.0"

__all__ = [
    "AugmentParams",
    "BackendError",
    "BackendRetryableError",
    "BoundingBox",
    "ContractError",
    "CurationScore",
    "DataError",
    "Dataset",
    "Detection",
    "EdgeMap",
    "EvalResult",
    "ExperimentRecord",
    "GenerationRequest",
    "GenerationResult",
    "HttpBackend",
    "ImageRecord",
    "MockBackend",
    "PerceptualHash",
    "PromptProvider",
    "SplitSpec",
    "SubsetPlan",
    "TimingLedger",
    "augment_dataset",
    "average_hash",
    "brightness",
    "canny",
    "composite",
    "compute_hash",
    "difference_hash",
    "emit_report",
    "evaluate",
    "hamming",
    "ingest_directory",
    "ingest_training_results",
    "iou",
    "load_dataset",
    "make_prompt",
    "phash",
    "rank_and_select",
    "score_against_ref",
    "split_dataset",
    "to_gray",
    "write_dataset",
]
