"""Service configuration: model identifiers, device, concurrency, defaults."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class BackendConfig:
    """Everything a run needs to be attributable and reproducible.

    Checkpoint identifiers are configuration, not code, so deployments can
    pin whatever adapter versions they actually served.
    """

    mode: str = "tiny"  # "tiny" (procedural CPU) or "sdxl" (diffusers pipeline)
    device: str = "cpu"
    max_concurrent: int = 1

    base_model: str = "stabilityai/stable-diffusion-xl-base-1.0"
    controlnet_depth: str = "diffusers/controlnet-depth-sdxl-1.0"
    controlnet_canny: str = "diffusers/controlnet-canny-sdxl-1.0"
    ip_adapter: str = "h94/IP-Adapter"
    ip_adapter_weights: str = "ip-adapter_sdxl.bin"
    caption_model: str = "Salesforce/blip-image-captioning-base"

    # Request-level defaults, overridable per request.
    control_scale: float = 0.5
    guidance_scale: float = 5.0
    steps: int = 50

    def model_identifiers(self) -> dict[str, str]:
        if self.mode == "tiny":
            return {
                "base_model": "tiny-procedural",
                "caption_model": "tiny-procedural",
            }
        return {
            "base_model": self.base_model,
            "controlnet_depth": self.controlnet_depth,
            "controlnet_canny": self.controlnet_canny,
            "ip_adapter": self.ip_adapter,
            "caption_model": self.caption_model,
        }
