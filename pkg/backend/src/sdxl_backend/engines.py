"""Generation and captioning engines.

TinyEngine and TinyCaptioner are procedural CPU stand-ins that honor the
full request surface (dimensions, conditioning channels, prompt, seed) with
strict determinism; they exist so protocol and contract tests run without
model weights. The real SDXL pipeline lives in diffusion.py.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .config import BackendConfig


class TinyEngine:
    """Deterministic procedural image synthesis with depth/canny conditioning.

    The output is a seeded low-frequency color field whose palette follows
    the prompt and whose luminance is modulated by the depth map; canny
    lines are painted on top. control_scale weights the conditioning, so
    structural cues survive at the default scale of 0.5.
    """

    def __init__(self, config: BackendConfig):
        self.config = config

    def generate(
        self,
        image: np.ndarray,
        depth: np.ndarray,
        canny: np.ndarray,
        prompt: str,
        negative_prompt: str,
        control_scale: float,
        guidance_scale: float,
        steps: int,
        seed: int,
    ) -> np.ndarray:
        height, width = image.shape[:2]
        rng = np.random.default_rng(seed)

        # Low-frequency noise field; more steps -> a finer base grid.
        grid = 4 + min(int(steps), 12)
        field = _bilinear(rng.uniform(0.0, 1.0, size=(grid, grid)), (height, width))

        palette = _prompt_palette(prompt)
        base = field[..., None] * palette[0][None, None, :] + (1.0 - field[..., None]) * (
            palette[1][None, None, :]
        )

        depth_f = depth.astype(np.float64)
        span = depth_f.max() - depth_f.min()
        depth_norm = (depth_f - depth_f.min()) / span if span > 0 else np.zeros_like(depth_f)
        luminance = 1.0 - control_scale * 0.6 * depth_norm
        out = base * luminance[..., None]

        edge = canny.astype(np.float64) / 255.0
        out = out * (1.0 - control_scale * 0.8 * edge[..., None])

        return np.clip(np.rint(out * 255.0), 0, 255).astype(np.uint8)


class TinyCaptioner:
    """Deterministic caption templated from simple image statistics."""

    BRIGHTNESS_WORDS = ("a dark", "a dim", "a softly lit", "a bright")
    HUE_WORDS = ("red-tinted", "green-tinted", "blue-tinted", "gray")

    def __init__(self, config: BackendConfig):
        self.config = config

    def caption(self, image: np.ndarray) -> str:
        mean = image.reshape(-1, image.shape[-1]).mean(axis=0)
        level = min(int(mean.mean() / 64), 3)
        channel_spread = mean.max() - mean.min()
        if channel_spread < 8:
            hue = 3
        else:
            hue = int(np.argmax(mean))
        detail = "cluttered" if image.std() > 40 else "plain"
        return (
            f"{self.BRIGHTNESS_WORDS[level]} {self.HUE_WORDS[hue]} scene "
            f"with a {detail} background"
        )


def _prompt_palette(prompt: str) -> tuple[np.ndarray, np.ndarray]:
    digest = hashlib.sha256(prompt.encode("utf-8")).digest()
    first = np.frombuffer(digest[:3], dtype=np.uint8).astype(np.float64) / 255.0
    second = np.frombuffer(digest[3:6], dtype=np.uint8).astype(np.float64) / 255.0
    return 0.25 + 0.75 * first, 0.25 + 0.75 * second


def _bilinear(base: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
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


def build_engines(config: BackendConfig):
    """(generator, captioner) for the configured mode."""
    if config.mode == "tiny":
        return TinyEngine(config), TinyCaptioner(config)
    if config.mode == "sdxl":
        from .diffusion import BlipCaptioner, SdxlEngine

        return SdxlEngine(config), BlipCaptioner(config)
    raise ValueError(f"unknown backend mode {config.mode!r}")
