"""Command line: extract VIDEO OUT [--weights PATH], make-weights."""

from __future__ import annotations

import argparse
import sys

from .encoder import SetupError, make_weights
from .extract import extract
from .video import VideoError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="featextract",
        description="Export mouth-region video features in the AVF1 format",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="encode one video into a feature file")
    p.add_argument("video")
    p.add_argument("out")
    p.add_argument("--weights", default="encoder_weights.npz")
    p.add_argument("--cascade", default=None,
                   help="optional Haar cascade XML for face detection")
    p.set_defaults(command="extract")

    p = sub.add_parser("make-weights", help="write a deterministic encoder weight file")
    p.add_argument("--out", required=True)
    p.add_argument("--dv", type=int, default=768)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(command="make-weights")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "make-weights":
            make_weights(args.out, feature_dim=args.dv, seed=args.seed)
            print(f"wrote encoder weights ({args.dv} dims) to {args.out}")
            return 0
        report = extract(args.video, args.out, args.weights, args.cascade)
        message = (f"wrote {report.frames} frames x {report.feature_dim} dims to {args.out}")
        if report.fallback_frames:
            message += f" ({report.fallback_frames} frames used the previous crop)"
        print(message)
        return 0
    except SetupError as exc:
        print(f"setup error: {exc}", file=sys.stderr)
        return 2
    except (VideoError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
