"""Backend contract checks, runnable against any generation backend.

The same checks validate the offline mock and a live wire-protocol service:
pixel-content assertions are opt-in because a real diffusion model keeps
only the structural guarantees (dimensions, determinism at fixed seed).
"""

from __future__ import annotations

import numpy as np

from .genai import GenerationRequest


def make_probe_request(
    height: int = 24, width: int = 32, seed: int = 3, steps: int = 50
) -> GenerationRequest:
    """A small, fully deterministic request fixture."""
    rng = np.random.default_rng(2718)
    yy, xx = np.mgrid[0:height, 0:width]
    image = np.stack(
        [
            (30 + 6 * xx + rng.integers(0, 20, (height, width))).clip(0, 255),
            (40 + 5 * yy).clip(0, 255) * np.ones((height, width), dtype=int),
            (200 - 4 * xx).clip(0, 255) * np.ones((height, width), dtype=int),
        ],
        axis=-1,
    ).astype(np.uint8)
    depth = (500 + 30 * xx + 20 * yy).astype(np.uint16)
    canny = np.zeros((height, width), dtype=np.uint8)
    canny[height // 2, :] = 255
    canny[:, width // 3] = 255
    return GenerationRequest(
        image=image,
        depth=depth,
        canny=canny,
        prompt="a calm meadow at noon",
        negative_prompt="bad, deformed, ugly",
        control_scale=0.5,
        guidance_scale=5.0,
        steps=steps,
        seed=seed,
    )


def check_generation_contract(backend, check_pixels: bool = False) -> None:
    """Dimensions, dtype, per-seed determinism; optionally pixel behavior."""
    request = make_probe_request(seed=11)
    generated = backend.generate(request)
    assert isinstance(generated, np.ndarray), "generate must return an array"
    assert generated.shape == request.image.shape, (
        f"generated shape {generated.shape} != input {request.image.shape}"
    )
    assert generated.dtype == np.uint8, f"generated dtype {generated.dtype} != uint8"

    again = backend.generate(make_probe_request(seed=11))
    assert np.array_equal(generated, again), "same request must reproduce identical pixels"

    if check_pixels:
        other = backend.generate(make_probe_request(seed=12))
        assert not np.array_equal(generated, other), "distinct seeds must differ"


def check_steps_honored(backend) -> None:
    """A steps=1 request still returns a dimension-correct image."""
    request = make_probe_request(seed=5, steps=1)
    generated = backend.generate(request)
    assert generated.shape == request.image.shape


def check_caption_contract(backend) -> None:
    """Caption of a probe image is a nonempty string, stable per image."""
    image = make_probe_request().image
    caption = backend.caption(image)
    assert isinstance(caption, str) and caption.strip(), "caption must be a nonempty string"
    assert backend.caption(image) == caption, "caption must be stable for one image"


def run_backend_contract(backend, check_pixels: bool = False) -> None:
    check_generation_contract(backend, check_pixels=check_pixels)
    check_steps_honored(backend)
    check_caption_contract(backend)
