"""Entry point: `python -m evolen_bridge --dataset mnist` serves the evaluator
protocol on stdio; `--tcp HOST:PORT` serves a socket instead."""

from __future__ import annotations

import argparse
import sys

from .data import DatasetUnavailable, open_dataset
from .server import serve_stdio, serve_tcp


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="evolen-bridge", description=__doc__)
    parser.add_argument(
        "--dataset",
        default="synthetic",
        choices=["synthetic", "mnist", "fashion_mnist", "cifar10", "cifar100"],
        help="training data served to requests (default: synthetic, no download needed)",
    )
    parser.add_argument("--data-dir", help="dataset cache directory (default: $EVOLEN_DATA_DIR)")
    parser.add_argument("--no-download", action="store_true", help="fail instead of downloading")
    parser.add_argument("--tcp", metavar="HOST:PORT", help="serve a TCP socket instead of stdio")
    args = parser.parse_args(argv)

    dataset = open_dataset(args.dataset, root=args.data_dir, download=not args.no_download)
    try:
        if args.tcp:
            host, _, port = args.tcp.rpartition(":")
            serve_tcp(host or "127.0.0.1", int(port), dataset)
        else:
            serve_stdio(dataset)
    except DatasetUnavailable as e:
        print(f"dataset unavailable: {e}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        pass
    return 0


if __name__ == "__main__":
    sys.exit(main())
