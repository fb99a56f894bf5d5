"""Command line entry point.

Each subcommand runs one pipeline step on a workspace directory and prints
its summary as JSON on stdout. Failures print {"error": {...}} on stderr;
exit code 1 for rejected inputs, 2 for unexpected faults.
"""

from __future__ import annotations

import argparse
import json
import sys

from .config import load_config, override_seeds
from .errors import TvTomoError
from . import pipeline

__all__ = ["main"]


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tvtomo",
        description="TV-regularized tilt reconstruction with an error-free "
                    "choice of the regularization weight.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="TOML run configuration")
        p.add_argument("--out", default=".", help="workspace directory (default: .)")
        p.add_argument("--seed", type=int, default=None,
                       help="override the phantom/noise/rule seeds with "
                            "seed, seed+1, seed+2")

    p = sub.add_parser("phantom", help="generate the test volume and object masks")
    common(p)
    p = sub.add_parser("simulate", help="project the phantom and add counting noise")
    common(p)
    p = sub.add_parser("choose", help="pick the regularization weight from the data")
    common(p)
    p = sub.add_parser("reconstruct", help="solve for one or more weights")
    common(p)
    p.add_argument("--lambdas", default=None,
                   help="comma-separated weights, overriding the config")
    p.add_argument("--jobs", type=int, default=1,
                   help="number of parallel solves (default 1)")
    p = sub.add_parser("analyze", help="hit counts and ideal-threshold sweep")
    common(p)
    p = sub.add_parser("significance", help="score a candidate feature volume")
    common(p)
    p.add_argument("--feature", required=True,
                   help="feature volume (base path of .raw/.json)")
    p.add_argument("--lam", type=float, default=None,
                   help="weight to score at (default: the chosen one)")
    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    return parser


def _parse_lambdas(text):
    if text is None:
        return None
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise TvTomoError(f"could not parse --lambdas value: {text!r}")


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "serve":
            from .service import create_app
            import uvicorn

            uvicorn.run(create_app(), host=args.host, port=args.port)
            return 0
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = override_seeds(cfg, args.seed)
        if args.command == "phantom":
            summary = pipeline.run_phantom(cfg, args.out)
        elif args.command == "simulate":
            summary = pipeline.run_simulate(cfg, args.out)
        elif args.command == "choose":
            summary = pipeline.run_choose(cfg, args.out)
        elif args.command == "reconstruct":
            summary = pipeline.run_reconstruct(
                cfg, args.out, lambdas=_parse_lambdas(args.lambdas), jobs=args.jobs
            )
        elif args.command == "analyze":
            summary = pipeline.run_analyze(cfg, args.out)
        else:
            summary = pipeline.run_significance(
                cfg, args.out, feature=args.feature, lam=args.lam
            )
    except TvTomoError as exc:
        body = {"error": {"category": exc.category, "message": str(exc)}}
        print(json.dumps(body, sort_keys=True), file=sys.stderr)
        return 1
    except Exception as exc:  # pragma: no cover - defensive
        body = {"error": {"category": "internal", "message": f"{type(exc).__name__}: {exc}"}}
        print(json.dumps(body, sort_keys=True), file=sys.stderr)
        return 2
    print(json.dumps(summary, sort_keys=True, indent=1))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
