"""Command line entry: lm-bridge --model M [--adapters P] [--port 8080]."""

from __future__ import annotations

import argparse
import sys

import uvicorn

from .app import create_app
from .config import BridgeConfig, BridgeError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lm-bridge",
        description="Serve a causal LM as an HTTP scoring backend.",
    )
    parser.add_argument("--model", required=True, help="model id, or stub / stub:SEED")
    parser.add_argument("--adapters", default=None, help="path to a merged-adapter file")
    parser.add_argument("--port", type=int, default=8080)
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--max-len", type=int, default=512, dest="max_len",
                        help="max context+target ids per /logprobs request")
    parser.add_argument("--device", default="cpu")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = BridgeConfig(
            model=args.model,
            adapters=args.adapters,
            max_len=args.max_len,
            device=args.device,
            host=args.host,
            port=args.port,
        )
        app = create_app(cfg)
    except BridgeError as exc:
        print(f"lm-bridge: {exc}", file=sys.stderr)
        return 1
    uvicorn.run(app, host=cfg.host, port=cfg.port, log_level="info")
    return 0


if __name__ == "__main__":
    sys.exit(main())
