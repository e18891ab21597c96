"""Command-line entry points.

Exit codes: 0 success, 2 validation problems (bad manifest, bad
arguments, missing inputs), 3 runtime failures. The default thread
count comes from BIMOMENT_THREADS when the flag is absent.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .cubeio import CubeParseError
from .pipeline import (
    ManifestError,
    PipelineError,
    csp_from_cubes,
    fiber_from_cubes,
    generate_cubes,
    moments_from_csps,
    pca_from_moments,
    render_csp_file,
    run_manifest,
    segment_cube,
)

__all__ = ["main"]

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3

THREADS_ENV = "BIMOMENT_THREADS"


def _default_threads() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw is None:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _parse_res(text: str):
    parts = text.split(",")
    try:
        vals = [int(p) for p in parts]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad resolution {text!r}") from None
    if len(vals) == 1:
        return (vals[0], vals[0])
    if len(vals) == 2:
        return (vals[0], vals[1])
    raise argparse.ArgumentTypeError("resolution is R or R1,R2")


def _parse_window(text: str):
    if text == "auto":
        return "auto"
    parts = text.split(",")
    if len(parts) != 4:
        raise argparse.ArgumentTypeError('window is "auto" or min1,max1,min2,max2')
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad window {text!r}") from None


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bimoment",
        description="Continuous scatterplot peeling and moment-track analysis.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="execute a full manifest-driven analysis")
    p.add_argument("--manifest", required=True, help="manifest JSON path")
    p.add_argument("--out", default=None, help="run directory (overrides manifest)")
    p.add_argument("--strict", action="store_true",
                   help="deterministic artifacts: timings nulled, bytes reproducible")
    p.add_argument("--threads", type=int, default=_default_threads())
    p.add_argument("--seed", type=int, default=0,
                   help="seed for any randomized inputs (reserved; runs are seed-free)")

    p = sub.add_parser("gen", help="emit a synthetic series as cube files")
    p.add_argument("--kind", required=True, choices=("rotation", "scaling"))
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--n", type=int, default=64, help="vertices per axis")
    p.add_argument("--b", type=float, default=None,
                   help="scaling shift in [-0.5, 0]; drawn from --seed when omitted")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--label", default=None, help="state label (defaults to kind)")

    p = sub.add_parser("segment", help="power-diagram labels from a cube's atoms")
    p.add_argument("--f1", required=True, help="cube file supplying grid and atoms")
    p.add_argument("--out", required=True, help="output path prefix")
    p.add_argument("--weights", default="covalent-radius",
                   choices=("covalent-radius", "uniform"))

    p = sub.add_parser("csp", help="continuous scatterplot of one cube pair")
    p.add_argument("--f1", required=True)
    p.add_argument("--f2", required=True)
    p.add_argument("--out", required=True, help="output path prefix")
    p.add_argument("--res", type=_parse_res, default=(64, 64))
    p.add_argument("--window", type=_parse_window, default="auto")
    p.add_argument("--padding", type=float, default=0.0)
    p.add_argument("--labels", default=None, help="labels prefix; adds per-segment peels")
    p.add_argument("--threads", type=int, default=_default_threads())

    p = sub.add_parser("moments", help="moment table over stored scatterplots")
    p.add_argument("--csp", required=True, nargs="+", help="CSP path prefixes")
    p.add_argument("--out", required=True, help="output path prefix")
    p.add_argument("--pooling", default="per-order",
                   choices=("per-order", "per-component"))

    p = sub.add_parser("pca", help="fit the embedding and write tracks")
    p.add_argument("--moments", required=True, help="moments JSON path")
    p.add_argument("--out", required=True, help="output path prefix")

    p = sub.add_parser("fiber", help="extract the preimage surface of a polygon")
    p.add_argument("--f1", required=True)
    p.add_argument("--f2", required=True)
    p.add_argument("--polygon", required=True, help="polygon JSON path")
    p.add_argument("--out", required=True, help="mesh output path")
    p.add_argument("--format", default="obj", choices=("obj", "json"))

    p = sub.add_parser("render", help="PNG of a stored scatterplot")
    p.add_argument("--csp", required=True, help="CSP path prefix")
    p.add_argument("--out", required=True, help="PNG output path")

    p = sub.add_parser("serve", help="serve a completed run directory over HTTP")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--fiber-timeout", type=float, default=30.0,
                   help="seconds before an extraction request returns 504")
    p.add_argument("--ui-dir", default=None,
                   help="static browser client directory to serve at /")

    return parser


def _dispatch(args) -> int:
    if args.command == "run":
        report = run_manifest(
            args.manifest, out_dir=args.out, strict=args.strict, threads=args.threads
        )
        c = report["counts"]
        print(
            f"run ok: {c['series']} series, {c['steps']} steps, {c['csps']} CSPs, "
            f"{c['moment_rows']} moment rows, {c['tracks']} tracks"
        )
        print(f"mass residual {report['mass']['global_residual_rel']:.3e}")
        return EXIT_OK

    if args.command == "gen":
        index = generate_cubes(
            args.kind, args.steps, args.out,
            n=args.n, b=args.b, seed=args.seed, state_label=args.label,
        )
        print(f"wrote {index}")
        return EXIT_OK

    if args.command == "segment":
        bin_path, json_path = segment_cube(args.f1, args.out, weights=args.weights)
        print(f"wrote {bin_path} {json_path}")
        return EXIT_OK

    if args.command == "csp":
        written = csp_from_cubes(
            args.f1, args.f2, args.out, args.res,
            window=args.window, padding=args.padding,
            labels_prefix=args.labels, threads=args.threads,
        )
        print(f"wrote {len(written)} files under {Path(args.out).parent}")
        return EXIT_OK

    if args.command == "moments":
        csv_path, json_path = moments_from_csps(args.csp, args.out, pooling=args.pooling)
        print(f"wrote {csv_path} {json_path}")
        return EXIT_OK

    if args.command == "pca":
        json_path, csv_path = pca_from_moments(args.moments, args.out)
        print(f"wrote {json_path} {csv_path}")
        return EXIT_OK

    if args.command == "fiber":
        path = fiber_from_cubes(args.f1, args.f2, args.polygon, args.out, fmt=args.format)
        print(f"wrote {path}")
        return EXIT_OK

    if args.command == "render":
        path = render_csp_file(args.csp, args.out)
        print(f"wrote {path}")
        return EXIT_OK

    if args.command == "serve":
        import uvicorn

        from .service import create_app

        app = create_app(
            args.data_dir, fiber_timeout_s=args.fiber_timeout, ui_dir=args.ui_dir
        )
        uvicorn.run(app, host=args.host, port=args.port, log_level="info")
        return EXIT_OK

    raise AssertionError(f"unhandled command {args.command}")


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 for usage errors, which matches the validation code
        return int(exc.code or 0)
    try:
        return _dispatch(args)
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ManifestError, CubeParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except FileNotFoundError as exc:
        print(f"error: missing input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except json.JSONDecodeError as exc:
        print(f"error: bad JSON input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # runtime catch-all so scripts get a stable code
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
