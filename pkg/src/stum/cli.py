"""``stum`` command line: synth, train, eval, roundtrip, export and run.

Exit codes: 0 success, 1 usage error, 2 runtime failure, 3 acceptance gates failed.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import os
import sys
from pathlib import Path

from . import pipeline
from .config import ConfigError, RunConfig, load_config

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME, EXIT_GATES = 0, 1, 2, 3

log = logging.getLogger("stum")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON run configuration (unknown keys are rejected)")
    p.add_argument("--preset", choices=("desk", "paper-scale"), help="base preset (default: desk)")
    p.add_argument("--seed", type=int, help="override the run seed")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="stum", description="Time-cue self-supervised audiovisual embedding pipeline.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="synthesize a dataset directory")
    _common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true", help="overwrite a non-empty output directory")

    p = sub.add_parser("train", help="train encoders (and decoders) on a dataset")
    _common(p)
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--out", required=True, help="checkpoint directory")
    p.add_argument("--mode", choices=("visual", "joint"))
    p.add_argument("--epochs", type=int)
    p.add_argument("--force", action="store_true")

    p = sub.add_parser("eval", help="evaluate a checkpoint and write report.json")
    _common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True, help="report path")

    p = sub.add_parser("roundtrip", help="encode one modality and decode another")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--input", required=True, help="STUMT1 blob: [3,S,S] image or [64,64] spectrogram (or a batch)")
    p.add_argument("--in-modality", required=True, choices=("image", "audio"))
    p.add_argument("--out-modality", required=True, choices=("image", "audio"))
    p.add_argument("--out", required=True, help="output blob; PNG previews are written alongside")
    p.add_argument("-v", "--verbose", action="store_true")

    p = sub.add_parser("export", help="export test-item embeddings as CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("-v", "--verbose", action="store_true")

    p = sub.add_parser("run", help="synth, train and eval into one directory")
    _common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=("visual", "joint"))
    p.add_argument("--epochs", type=int)
    p.add_argument("--force", action="store_true")
    return parser


def _config(args) -> RunConfig:
    cfg = load_config(args.config, args.preset)
    if args.seed is not None:
        cfg.seed = args.seed
    if getattr(args, "mode", None):
        cfg.train.mode = args.mode
    if getattr(args, "epochs", None) is not None:
        if args.epochs < 0:
            raise ConfigError("--epochs must be >= 0")
        cfg.train.epochs = args.epochs
    return cfg.validate()


def thread_limit():
    """Honour ``STUM_THREADS`` by capping the BLAS thread pool."""
    value = os.environ.get("STUM_THREADS")
    if not value:
        return contextlib.nullcontext()
    try:
        n = int(value)
    except ValueError:
        raise UsageError(f"STUM_THREADS must be an integer, got {value!r}") from None
    if n < 1:
        raise UsageError("STUM_THREADS must be >= 1")
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def _report_exit(report: dict) -> int:
    failed = [k for k, g in report["gates"].items() if not g["passed"]]
    for k, g in sorted(report["gates"].items()):
        print(f"{'PASS' if g['passed'] else 'FAIL'} {k}: {g['value']} ({g['op']} {g['threshold']})")
    return EXIT_GATES if failed else EXIT_OK


def _dispatch(args) -> int:
    if args.command == "synth":
        ds = pipeline.synth(_config(args), args.out, args.force)
        print(json.dumps(ds.summary(), indent=2))
        return EXIT_OK
    if args.command == "train":
        ckpt = pipeline.train(_config(args), args.data, args.out, args.force)
        hist = ckpt.meta.get("encoder_history", [])
        if hist:
            print(f"final encoder loss {hist[-1]['loss']:.6f} after {len(hist)} epochs")
        print(f"checkpoint written to {args.out}")
        return EXIT_OK
    if args.command == "eval":
        return _report_exit(pipeline.evaluate(_config(args), args.data, args.ckpt, args.out))
    if args.command == "roundtrip":
        out = pipeline.roundtrip(args.ckpt, args.input, args.in_modality, args.out_modality, args.out)
        print(f"wrote {args.out} with shape {list(out.shape)}")
        return EXIT_OK
    if args.command == "export":
        print(f"wrote {pipeline.export(args.data, args.ckpt, args.out)}")
        return EXIT_OK
    if args.command == "run":
        cfg = _config(args)
        root = Path(args.out)
        pipeline._prepare_out_dir(root, args.force)
        pipeline.synth(cfg, root / "dataset")
        pipeline.train(cfg, root / "dataset", root / "checkpoint")
        return _report_exit(pipeline.evaluate(cfg, root / "dataset", root / "checkpoint", root / "report.json"))
    raise UsageError(f"unknown command {args.command!r}")  # pragma: no cover


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with thread_limit():
            return _dispatch(args)
    except (UsageError, ConfigError, pipeline.OutputExistsError) as exc:
        print(f"stum: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - every runtime failure maps to one exit code
        log.debug("runtime failure", exc_info=True)
        print(f"stum: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
