"""Command line entry point: serve one classifier over the wire protocol."""

from __future__ import annotations

import argparse
import sys

from .oracle import MIN_SIZE, MODEL_BUILDERS, TorchOracle
from .protocol import BridgeServer


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="modelbridge",
        description="Serve a torchvision classifier as a newline-JSON gradient oracle.",
    )
    parser.add_argument(
        "--model",
        default="resnet50",
        choices=sorted(MODEL_BUILDERS),
        help="architecture to serve",
    )
    parser.add_argument(
        "--weights",
        default="auto",
        help="'auto' (pretrained, falling back to a seeded random init), "
        "'random', or a path to a saved state dict",
    )
    parser.add_argument(
        "--listen",
        default="127.0.0.1:0",
        metavar="HOST:PORT",
        help="address to bind (port 0 picks a free one)",
    )
    parser.add_argument(
        "--size",
        type=int,
        default=224,
        metavar="N",
        help=f"served square input size in pixels, at least {MIN_SIZE}",
    )
    args = parser.parse_args(argv)

    host, sep, port_text = args.listen.rpartition(":")
    if not sep or not host:
        print(f"error: --listen needs HOST:PORT, got {args.listen!r}", file=sys.stderr)
        return 2
    try:
        port = int(port_text)
    except ValueError:
        print(f"error: bad port {port_text!r}", file=sys.stderr)
        return 2

    def log(message: str) -> None:
        print(message, file=sys.stderr, flush=True)

    try:
        oracle = TorchOracle(args.model, weights=args.weights, size=args.size, log=log)
        server = BridgeServer(oracle, host, port)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    bound_host, bound_port = server.address
    print(f"listening on {bound_host}:{bound_port}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
