"""Real-model engines: SDXL + ControlNet (depth, canny) + IP-Adapter, and a
BLIP captioner. Imported only in sdxl mode; requires the [diffusion] extra
and resolvable model weights."""

from __future__ import annotations

import numpy as np
from PIL import Image

from .config import BackendConfig


class SdxlEngine:
    """Depth+canny conditioned SDXL with the original image fed through the
    IP-Adapter, so scene composition survives background regeneration."""

    def __init__(self, config: BackendConfig):
        try:
            import torch
            from diffusers import ControlNetModel, StableDiffusionXLControlNetPipeline
        except ImportError as exc:  # pragma: no cover - needs the diffusion extra
            raise RuntimeError(
                "sdxl mode needs the [diffusion] extra (torch, diffusers)"
            ) from exc

        self.torch = torch
        self.config = config
        dtype = torch.float16 if config.device.startswith("cuda") else torch.float32
        controlnets = [
            ControlNetModel.from_pretrained(config.controlnet_depth, torch_dtype=dtype),
            ControlNetModel.from_pretrained(config.controlnet_canny, torch_dtype=dtype),
        ]
        self.pipe = StableDiffusionXLControlNetPipeline.from_pretrained(
            config.base_model, controlnet=controlnets, torch_dtype=dtype
        ).to(config.device)
        self.pipe.load_ip_adapter(
            config.ip_adapter, subfolder="sdxl_models", weight_name=config.ip_adapter_weights
        )

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
        torch = self.torch
        height, width = image.shape[:2]
        depth_image = _to_rgb_pil(_normalize_16bit(depth))
        canny_image = _to_rgb_pil(canny)
        self.pipe.set_ip_adapter_scale(control_scale)
        generator = torch.Generator(device=self.config.device).manual_seed(seed)
        result = self.pipe(
            prompt=prompt,
            negative_prompt=negative_prompt,
            image=[depth_image, canny_image],
            ip_adapter_image=Image.fromarray(image),
            controlnet_conditioning_scale=[control_scale, control_scale],
            guidance_scale=guidance_scale,
            num_inference_steps=steps,
            generator=generator,
            height=height,
            width=width,
        ).images[0]
        return np.asarray(result.convert("RGB"))


class BlipCaptioner:
    """Image-to-text captioning through a BLIP checkpoint."""

    def __init__(self, config: BackendConfig):
        try:
            from transformers import BlipForConditionalGeneration, BlipProcessor
        except ImportError as exc:  # pragma: no cover - needs the diffusion extra
            raise RuntimeError("sdxl mode needs transformers for captioning") from exc
        self.processor = BlipProcessor.from_pretrained(config.caption_model)
        self.model = BlipForConditionalGeneration.from_pretrained(config.caption_model).to(
            config.device
        )
        self.device = config.device

    def caption(self, image: np.ndarray) -> str:
        inputs = self.processor(Image.fromarray(image), return_tensors="pt").to(self.device)
        output = self.model.generate(**inputs, max_new_tokens=40)
        return self.processor.decode(output[0], skip_special_tokens=True).strip()


def _normalize_16bit(array: np.ndarray) -> np.ndarray:
    data = array.astype(np.float64)
    span = data.max() - data.min()
    if span <= 0:
        return np.zeros(array.shape, dtype=np.uint8)
    return np.rint(255.0 * (data - data.min()) / span).astype(np.uint8)


def _to_rgb_pil(single_channel: np.ndarray) -> Image.Image:
    return Image.fromarray(np.stack([single_channel.astype(np.uint8)] * 3, axis=-1))
