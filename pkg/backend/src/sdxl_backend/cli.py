"""Command line: `sdxl-backend serve` starts the generation service."""

from __future__ import annotations

import argparse
import logging
import sys

from .config import BackendConfig
from .server import serve


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = argparse.ArgumentParser(prog="sdxl-backend")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("serve", help="run the generation/captioning service")
    p.add_argument("--mode", choices=("tiny", "sdxl"), default="tiny")
    p.add_argument("--host", default="0.0.0.0")
    p.add_argument("--port", type=int, default=8676)
    p.add_argument("--device", default="cpu")
    p.add_argument("--max-concurrent", type=int, default=1)
    p.add_argument("--base-model", default=BackendConfig.base_model)
    p.add_argument("--controlnet-depth", default=BackendConfig.controlnet_depth)
    p.add_argument("--controlnet-canny", default=BackendConfig.controlnet_canny)
    p.add_argument("--ip-adapter", default=BackendConfig.ip_adapter)
    p.add_argument("--caption-model", default=BackendConfig.caption_model)

    args = parser.parse_args(sys.argv[1:] if argv is None else argv)
    if args.command != "serve":
        parser.print_help()
        return 64

    config = BackendConfig(
        mode=args.mode,
        device=args.device,
        max_concurrent=args.max_concurrent,
        base_model=args.base_model,
        controlnet_depth=args.controlnet_depth,
        controlnet_canny=args.controlnet_canny,
        ip_adapter=args.ip_adapter,
        caption_model=args.caption_model,
    )
    serve(config, host=args.host, port=args.port)
    return 0


if __name__ == "__main__":
    sys.exit(main())
