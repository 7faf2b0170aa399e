"""Protocol conformance: the primary toolkit's backend contract suite runs
unmodified against the live tiny-mode service, through the same HTTP client
the augmentation pipeline uses. Pixel-content assertions stay off, exactly
as for any real model."""

from simcurate import contract
from simcurate.genai import HttpBackend


def test_generation_contract(tiny_server):
    contract.check_generation_contract(HttpBackend(tiny_server), check_pixels=False)


def test_steps_contract(tiny_server):
    contract.check_steps_honored(HttpBackend(tiny_server))


def test_caption_contract(tiny_server):
    contract.check_caption_contract(HttpBackend(tiny_server))


def test_full_contract(tiny_server):
    contract.run_backend_contract(HttpBackend(tiny_server), check_pixels=False)


def test_end_to_end_augment_through_live_service(tiny_server, tmp_path):
    """The primary pipeline augments a small dataset against the service."""
    import numpy as np
    from PIL import Image

    from simcurate import dataset, genai

    root = tmp_path / "pool"
    rng = np.random.default_rng(0)
    for sub in ("images", "labels", "masks", "depth"):
        (root / sub).mkdir(parents=True)
    for i in range(3):
        image = rng.integers(0, 256, (24, 24, 3)).astype(np.uint8)
        Image.fromarray(image).save(root / "images" / f"{i}.png")
        (root / "labels" / f"{i}.txt").write_text("0 0.5 0.5 0.25 0.25\n")
        mask = np.zeros((24, 24), dtype=np.uint8)
        mask[9:15, 9:15] = 255
        Image.fromarray(mask).save(root / "masks" / f"{i}.png")
        Image.fromarray(rng.integers(0, 4000, (24, 24)).astype(np.uint16)).save(
            root / "depth" / f"{i}.png"
        )

    pool = dataset.ingest_directory(root, name="pool")
    backend = genai.HttpBackend(tiny_server)
    augmented, run = genai.augment_dataset(
        pool, genai.PromptProvider.random_pool(), backend, tmp_path / "out", master_seed=1
    )
    assert len(augmented) == 3 and not run.skipped

    for src, dst in zip(pool.records, augmented.records):
        original = np.asarray(Image.open(src.image_path).convert("RGB"))
        composited = np.asarray(Image.open(dst.image_path).convert("RGB"))
        mask = np.asarray(Image.open(src.mask_path)) > 0
        assert np.array_equal(composited[mask], original[mask])
        assert dst.boxes == src.boxes
