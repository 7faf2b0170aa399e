import random

import numpy as np
import pytest
from PIL import Image

from helpers import make_pool_dir
from simcurate import dataset, genai
from simcurate.errors import BackendError, BackendRetryableError, ContractError


@pytest.fixture
def pool(tmp_path):
    return dataset.ingest_directory(make_pool_dir(tmp_path / "pool", n=4), name="pool")


class CountingBackend(genai.MockBackend):
    """Mock that records the requests it served."""

    def __init__(self, **kwargs):
        super().__init__(**kwargs)
        self.requests = []

    def generate(self, request):
        self.requests.append(request)
        return super().generate(request)


class FailingBackend(genai.MockBackend):
    """Fails deterministically for seeds in a configured residue class."""

    def __init__(self, modulus=10, residue=0, retryable=False):
        super().__init__()
        self.modulus = modulus
        self.residue = residue
        self.retryable = retryable

    def generate(self, request):
        if request.seed % self.modulus == self.residue:
            if self.retryable:
                raise BackendRetryableError("synthetic transient failure")
            raise BackendError("synthetic corrupt response")
        return super().generate(request)


class FlakyOnceBackend(genai.MockBackend):
    """Raises a retryable error on the first attempt for every seed."""

    def __init__(self):
        super().__init__()
        self.seen = set()

    def generate(self, request):
        if request.seed not in self.seen:
            self.seen.add(request.seed)
            raise BackendRetryableError("first attempt always fails")
        return super().generate(request)


class TestComposite:
    def test_all_on_mask_returns_original(self):
        rng = np.random.default_rng(0)
        original = rng.integers(0, 256, (6, 6, 3)).astype(np.uint8)
        generated = rng.integers(0, 256, (6, 6, 3)).astype(np.uint8)
        out = genai.composite(original, generated, np.ones((6, 6), dtype=np.uint8))
        assert np.array_equal(out, original)

    def test_all_off_mask_returns_generated(self):
        rng = np.random.default_rng(1)
        original = rng.integers(0, 256, (6, 6, 3)).astype(np.uint8)
        generated = rng.integers(0, 256, (6, 6, 3)).astype(np.uint8)
        out = genai.composite(original, generated, np.zeros((6, 6), dtype=np.uint8))
        assert np.array_equal(out, generated)

    def test_checkerboard_against_per_pixel_oracle(self):
        rng = np.random.default_rng(2)
        original = rng.integers(0, 256, (8, 8, 3)).astype(np.uint8)
        generated = rng.integers(0, 256, (8, 8, 3)).astype(np.uint8)
        mask = np.indices((8, 8)).sum(axis=0) % 2 == 0
        out = genai.composite(original, generated, mask)
        for i in range(8):
            for j in range(8):
                expected = original[i, j] if mask[i, j] else generated[i, j]
                assert (out[i, j] == expected).all()

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ContractError):
            genai.composite(
                np.zeros((4, 4, 3), dtype=np.uint8),
                np.zeros((5, 4, 3), dtype=np.uint8),
                np.zeros((4, 4), dtype=np.uint8),
            )


class TestPrompts:
    def test_random_pool_draws_from_exact_pool(self):
        provider = genai.PromptProvider.random_pool()
        rng = random.Random(3)
        seen = set()
        for _ in range(60):
            prompt, negative = genai.make_prompt(provider, None, None, rng)
            assert prompt in genai.RANDOM_PROMPT_POOL
            assert negative == "bad, deformed, ugly, abstract"
            seen.add(prompt)
        assert "A scene on the moon, craters, astronaut" in seen

    def test_pool_has_eight_prompts(self):
        assert len(genai.RANDOM_PROMPT_POOL) == 8

    def test_context_aware_uses_captioner_and_caches(self, pool):
        calls = []

        def captioner(image):
            calls.append(image.shape)
            return "a fixed caption"

        provider = genai.PromptProvider.context_aware(captioner=captioner)
        rng = random.Random(0)
        prompts = [genai.make_prompt(provider, None, pool, rng) for _ in range(10)]
        assert all(p == ("a fixed caption", "bad, deformed, ugly") for p in prompts)
        assert len(calls) <= len(pool)  # one captioning call per distinct ref image

    def test_file_mode_reads_lines_in_order(self, tmp_path):
        path = tmp_path / "prompts.txt"
        path.write_text("first scene\nsecond scene\nthird scene\n")
        provider = genai.PromptProvider.from_file(path)
        rng = random.Random(0)
        lines = [genai.make_prompt(provider, None, None, rng)[0] for _ in range(3)]
        assert lines == ["first scene", "second scene", "third scene"]

    def test_empty_prompt_file_rejected(self, tmp_path):
        path = tmp_path / "empty.txt"
        path.write_text("\n\n")
        with pytest.raises(ContractError):
            genai.PromptProvider.from_file(path)

    def test_context_aware_requires_captioner(self):
        with pytest.raises(ContractError):
            genai.PromptProvider(mode="context_aware")

    def test_negative_override(self):
        provider = genai.PromptProvider.random_pool(negative="none at all")
        prompt, negative = genai.make_prompt(provider, None, None, random.Random(1))
        assert negative == "none at all"


class TestAugment:
    def test_masked_pixels_and_boxes_preserved(self, pool, tmp_path):
        provider = genai.PromptProvider.random_pool()
        augmented, run = genai.augment_dataset(
            pool, provider, genai.MockBackend(), tmp_path / "out", master_seed=5
        )
        assert len(augmented) == len(pool)
        assert not run.skipped and not run.rejected
        for src, out in zip(pool.records, augmented.records):
            assert out.id == src.id + "_aug"
            assert out.boxes == src.boxes
            assert out.provenance == "genai_random"
            original = np.asarray(Image.open(src.image_path).convert("RGB"))
            composited = np.asarray(Image.open(out.image_path).convert("RGB"))
            mask = np.asarray(Image.open(src.mask_path)) > 0
            assert np.array_equal(composited[mask], original[mask])
            assert composited.shape == original.shape
            # mask and depth side-channels carry over pixel-identical
            assert np.array_equal(np.asarray(Image.open(out.mask_path)), np.asarray(Image.open(src.mask_path)))
            assert np.array_equal(np.asarray(Image.open(out.depth_path)), np.asarray(Image.open(src.depth_path)))

    def test_deterministic_output_trees(self, pool, tmp_path):
        trees = []
        for run_dir in ("a", "b"):
            provider = genai.PromptProvider.random_pool()
            genai.augment_dataset(
                pool, provider, genai.MockBackend(), tmp_path / run_dir, master_seed=7
            )
            tree = {
                p.relative_to(tmp_path / run_dir): p.read_bytes()
                for p in sorted((tmp_path / run_dir).rglob("*"))
                if p.is_file()
            }
            trees.append(tree)
        assert trees[0] == trees[1]

    def test_seed_freshness(self, pool, tmp_path):
        backend = CountingBackend()
        genai.augment_dataset(
            pool, genai.PromptProvider.random_pool(), backend, tmp_path / "out",
            master_seed=100,
        )
        seeds = [r.seed for r in backend.requests]
        assert len(seeds) == len(set(seeds)) == len(pool)

    def test_missing_mask_rejected_at_admission(self, tmp_path):
        make_pool_dir(tmp_path / "p", n=3)
        (tmp_path / "p" / "masks" / "000001.png").unlink()
        pool = dataset.ingest_directory(tmp_path / "p", name="p")
        augmented, run = genai.augment_dataset(
            pool, genai.PromptProvider.random_pool(), genai.MockBackend(), tmp_path / "out"
        )
        assert run.rejected == ["000001"]
        assert len(augmented) == 2

    def test_totality_with_failing_backend(self, tmp_path):
        pool = dataset.ingest_directory(make_pool_dir(tmp_path / "p", n=20), name="p")
        backend = FailingBackend(modulus=10, residue=3)
        augmented, run = genai.augment_dataset(
            pool, genai.PromptProvider.random_pool(), backend, tmp_path / "out",
            master_seed=0,
        )
        assert len(augmented) + len(run.skipped) == len(pool)
        assert len(run.skipped) == 2  # seeds 3 and 13 fail

    def test_retryable_failures_recover(self, pool, tmp_path):
        backend = FlakyOnceBackend()
        params = genai.AugmentParams(retries=2, retry_wait=0.0)
        augmented, run = genai.augment_dataset(
            pool, genai.PromptProvider.random_pool(), backend, tmp_path / "out",
            params=params,
        )
        assert not run.skipped
        assert len(augmented) == len(pool)

    def test_retries_exhausted_skips(self, pool, tmp_path):
        backend = FailingBackend(modulus=1, residue=0, retryable=True)
        params = genai.AugmentParams(retries=1, retry_wait=0.0)
        augmented, run = genai.augment_dataset(
            pool, genai.PromptProvider.random_pool(), backend, tmp_path / "out",
            params=params,
        )
        assert len(augmented) == 0
        assert len(run.skipped) == len(pool)

    def test_jobs_do_not_change_outputs(self, pool, tmp_path):
        trees = []
        for run_dir, jobs in (("j1", 1), ("j4", 4)):
            genai.augment_dataset(
                pool, genai.PromptProvider.random_pool(), genai.MockBackend(),
                tmp_path / run_dir, master_seed=11, jobs=jobs,
            )
            trees.append(
                {
                    p.relative_to(tmp_path / run_dir): p.read_bytes()
                    for p in sorted((tmp_path / run_dir).rglob("*"))
                    if p.is_file()
                }
            )
        assert trees[0] == trees[1]

    def test_wrong_shape_from_backend_is_skipped(self, pool, tmp_path):
        class WrongShapeBackend(genai.MockBackend):
            def generate(self, request):
                return np.zeros((2, 2, 3), dtype=np.uint8)

        augmented, run = genai.augment_dataset(
            pool, genai.PromptProvider.random_pool(), WrongShapeBackend(), tmp_path / "out"
        )
        assert len(augmented) == 0
        assert len(run.skipped) == len(pool)

    def test_debug_raw_persists_precomposite(self, pool, tmp_path):
        params = genai.AugmentParams(save_raw=True)
        genai.augment_dataset(
            pool, genai.PromptProvider.random_pool(), genai.MockBackend(),
            tmp_path / "out", params=params,
        )
        raws = list((tmp_path / "out" / "raw").glob("*.png"))
        assert len(raws) == len(pool)

    def test_output_manifest_loads(self, pool, tmp_path):
        genai.augment_dataset(
            pool, genai.PromptProvider.random_pool(), genai.MockBackend(), tmp_path / "out"
        )
        again = dataset.load_dataset(tmp_path / "out" / "manifest.json")
        assert len(again) == len(pool)
        assert all(r.provenance == "genai_random" for r in again.records)
