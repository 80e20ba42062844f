"""Command-line entry point for hidden-state extraction."""

from __future__ import annotations

import argparse
import sys

from .extract import DEFAULT_MODELS, BridgeConfig, BridgeError, extract


def build_parser():
    parser = argparse.ArgumentParser(
        prog="svdd-bridge",
        description="Extract per-layer speech foundation model hidden "
                    "states into SVDF feature files.")
    parser.add_argument("manifest", help="5-column TSV trial manifest")
    parser.add_argument("--model", default="wavlm",
                        choices=sorted(DEFAULT_MODELS))
    parser.add_argument("--variant", default="",
                        help="Hugging Face model id override, e.g. to pick "
                             "a different size variant")
    parser.add_argument("--out-dir", default="features")
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--layers", type=int, nargs="*", default=(),
                        help="layer indices to keep (default: all; "
                             "0 is the pre-transformer projection)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = BridgeConfig(model=args.model, variant=args.variant,
                       manifest=args.manifest, out_dir=args.out_dir,
                       device=args.device, layers=tuple(args.layers))
    try:
        written = extract(cfg)
    except (BridgeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {len(written)} feature files to {args.out_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
