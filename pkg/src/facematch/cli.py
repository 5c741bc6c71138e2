"""``facematch`` command line: enroll, identify, bench.

Exit codes: 0 success, 1 operational error, 2 usage error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from facematch import bench, gallery, pipeline
from facematch.core import DEFAULT_DIM, DEFAULT_MIN_CHUNK, DEFAULT_THRESHOLD, SearchConfig
from facematch.errors import FaceMatchError
from facematch.provider import MockProvider

log = logging.getLogger("facematch")


def _int_list(text: str) -> list[int]:
    try:
        values = [int(v) for v in text.replace(" ", "").split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values or any(v < 1 for v in values):
        raise argparse.ArgumentTypeError(f"expected positive integers, got {text!r}")
    return values


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _threshold(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not value >= 0 or value == float("inf"):
        raise argparse.ArgumentTypeError(f"threshold must be finite and >= 0, got {text}")
    return value


def cmd_enroll(args: argparse.Namespace) -> int:
    images = Path(args.images)
    if not images.is_dir():
        raise FaceMatchError(f"{images}: not a directory")
    target = Path(args.gallery)
    existing = None
    if args.append and target.exists():
        existing = gallery.load(target)
        if args.dim is not None and args.dim != existing.dim:
            raise FaceMatchError(f"--dim {args.dim} does not match {target} (dim {existing.dim})")
        dim = existing.dim
    else:
        dim = args.dim or DEFAULT_DIM
    provider = MockProvider(dim=dim, seed=args.seed)
    before = len(existing) if existing is not None else 0
    g = gallery.build_from_directory(images, provider, existing)
    gallery.save(g, target)
    print(f"enrolled {len(g) - before} records ({len(g)} total) -> {target}")
    return 0


def cmd_identify(args: argparse.Namespace) -> int:
    g = gallery.load(args.gallery)
    frames = Path(args.frames)
    if not frames.is_dir():
        raise FaceMatchError(f"{frames}: not a directory")
    config = SearchConfig(threshold=args.threshold, workers=args.workers, min_chunk=args.min_chunk)
    provider = MockProvider(dim=g.dim, seed=args.seed)
    out = open(args.report, "w", encoding="utf-8") if args.report else sys.stdout
    try:
        summary = pipeline.run(
            pipeline.DirectorySource(frames), provider, g.snapshot(), config, pipeline.JsonLinesSink(out)
        )
    finally:
        if out is not sys.stdout:
            out.close()
    print(
        f"frames={summary.frames} faces={summary.faces} accepted={summary.accepted} "
        f"frame_errors={summary.frame_errors} p50_ms={summary.p50_ms:.3f} "
        f"p95_ms={summary.p95_ms:.3f} max_ms={summary.max_ms:.3f}",
        file=sys.stderr,
    )
    return 0 if summary.complete else 1


def cmd_bench(args: argparse.Namespace) -> int:
    spec = bench.BenchSpec(
        gallery_sizes=args.sizes,
        worker_counts=args.workers,
        probes_per_point=args.probes,
        dim=args.dim,
        seed=args.seed,
        warmup_iters=args.warmup,
        min_chunk=args.min_chunk,
    )
    out = Path(args.out)
    # fail on an unwritable destination before spending time measuring
    try:
        out.open("a").close()
    except OSError as exc:
        raise FaceMatchError(f"{out}: {exc}") from exc

    def progress(row: bench.BenchRow) -> None:
        print(
            f"size={row.gallery_size} workers={row.workers} mean_us={row.mean_search_us:.1f}",
            file=sys.stderr,
        )

    rows = bench.run_bench(spec, progress=None if args.quiet else progress)
    try:
        out.write_text(bench.format_csv(rows, spec), encoding="utf-8")
    except OSError as exc:
        raise FaceMatchError(f"{out}: {exc}") from exc
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="facematch", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("enroll", help="build or extend a gallery from a directory of images")
    p.add_argument("--images", required=True, metavar="DIR", help="images with .faces sidecars")
    p.add_argument("--gallery", required=True, metavar="FILE", help="EMBG gallery file to write")
    p.add_argument("--dim", type=_positive_int, help="embedding dimension (default 128)")
    p.add_argument("--append", action="store_true", help="extend FILE instead of replacing it")
    p.add_argument("--seed", type=int, default=0, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_enroll)

    p = sub.add_parser("identify", help="tag the faces in a directory of frames")
    p.add_argument("--gallery", required=True, metavar="FILE")
    p.add_argument("--frames", required=True, metavar="DIR")
    p.add_argument("--threshold", type=_threshold, default=DEFAULT_THRESHOLD, metavar="T",
                   help=f"accept distances <= T (default {DEFAULT_THRESHOLD})")
    p.add_argument("--workers", type=_positive_int, default=1, metavar="W", help="search threads")
    p.add_argument("--min-chunk", type=_positive_int, default=DEFAULT_MIN_CHUNK, help=argparse.SUPPRESS)
    p.add_argument("--report", metavar="FILE", help="JSON-lines output (default stdout)")
    p.add_argument("--seed", type=int, default=0, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_identify)

    p = sub.add_parser("bench", help="measure search speedup across gallery sizes and worker counts")
    p.add_argument("--sizes", type=_int_list, required=True, metavar="LIST", help="e.g. 1000,10000,100000")
    p.add_argument("--workers", type=_int_list, required=True, metavar="LIST", help="e.g. 1,2,4,8")
    p.add_argument("--probes", type=_positive_int, default=100, metavar="N", help="timed searches per cell")
    p.add_argument("--dim", type=_positive_int, default=DEFAULT_DIM, metavar="N")
    p.add_argument("--seed", type=int, default=0, metavar="S")
    p.add_argument("--warmup", type=int, default=3, metavar="N", help="untimed searches per cell")
    p.add_argument("--min-chunk", type=_positive_int, default=DEFAULT_MIN_CHUNK, metavar="N")
    p.add_argument("--out", required=True, metavar="CSV")
    p.add_argument("-q", "--quiet", action="store_true")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (FaceMatchError, OSError, ValueError) as exc:
        print(f"facematch {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
