"""Command-line interface: analyze, evaluate, fit and losscheck.

Exit codes: 0 success, 1 validation/configuration error, 2 data error
(strict mode), 3 internal error.  The run report is printed to stdout
as JSON and also written to ``<out>/run_report.json``; payload files
are fully deterministic, while the run report carries the wall-clock
duration.  Set EXPOSURE_LOG=debug|info|warning|error for log
verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import pipeline
from .errors import ConfigError, DataError, ObbkitError
from .formats import ClassMap, FrameMeta, load_class_map
from .losses import LossParams

logger = logging.getLogger("obbkit")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; remap onto the documented contract
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--format", choices=("csv", "json"), default="csv", help="report format")
    p.add_argument("--out", type=Path, default=Path("."), help="output directory")
    p.add_argument("--strict", action="store_true", help="escalate malformed records to a fatal error")


def _add_meta_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--meta", type=Path, help="sidecar metadata JSON (video_id, width, height, fps, frame_count)")
    p.add_argument("--width", type=float, help="frame width in pixels (overrides --meta)")
    p.add_argument("--height", type=float, help="frame height in pixels (overrides --meta)")
    p.add_argument("--fps", type=float, help="frame rate (overrides --meta)")
    p.add_argument("--frames", type=int, help="frame count (overrides --meta)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="obbkit", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="brand exposure metrics from a detection stream")
    p.add_argument("--detections", type=Path, required=True, help="JSON-lines detection file")
    p.add_argument("--classes", type=Path, help="class map file (one name per line)")
    _add_meta_flags(p)
    p.add_argument("--conf-threshold", type=float, default=0.5, help="drop detections below this confidence")
    p.add_argument("--top-k", type=int, default=5, help="ranking length")
    p.add_argument("--min-run", type=int, default=1, help="suppress visible runs shorter than this many frames")
    p.add_argument("--max-gap", type=int, default=0, help="bridge invisible gaps up to this many frames")
    p.add_argument("--jobs", type=int, default=pipeline.default_jobs(), help="worker processes (does not change results)")
    _add_common(p)

    p = sub.add_parser("evaluate", help="mAP/precision/recall of predictions against a labeled split")
    p.add_argument("--labels", type=Path, required=True, help="split directory containing images/ and labels/")
    p.add_argument("--detections", type=Path, required=True, help="JSON-lines predictions file")
    p.add_argument("--classes", type=Path, help="class map file")
    _add_meta_flags(p)
    p.add_argument("--iou-threshold", type=float, default=0.5, help="matching IoU threshold")
    p.add_argument("--box-mode", choices=("obb", "hbb"), default="obb", help="match on rotated or enclosing boxes")
    p.add_argument(
        "--conf-threshold",
        type=float,
        default=None,
        help="fixed P/R operating point (default: max-F1 point)",
    )
    p.add_argument("--interpolation", choices=("all_points", "11point"), default="all_points", help="AP interpolation")
    _add_common(p)

    p = sub.add_parser("fit", help="tightness-ratio vs orientation analysis")
    p.add_argument("--labels", type=Path, help="split directory containing images/ and labels/")
    p.add_argument("--detections", type=Path, help="JSON-lines predictions file")
    p.add_argument("--classes", type=Path, help="class map file")
    _add_meta_flags(p)
    p.add_argument("--bin-width", type=float, default=None, help="orientation bin width in degrees (default: emit 15 and 5)")
    _add_common(p)

    p = sub.add_parser("losscheck", help="run the loss fixture and gradient suite")
    p.add_argument("--gamma", type=float, default=None, help="override the focusing exponent")
    p.add_argument("--alpha", type=float, default=None, help="override the negative-weight scale")
    p.add_argument("--lambda-box", type=float, default=None)
    p.add_argument("--lambda-cls", type=float, default=None)
    p.add_argument("--lambda-dfl", type=float, default=None)
    p.add_argument("--params", type=Path, help="JSON file with loss parameters")
    p.add_argument("--out", type=Path, default=None, help="directory for the JSON report (optional)")
    return parser


def _resolve_meta(args, require_dims: bool, default_fps: float = 1.0) -> FrameMeta | None:
    base: dict = {}
    if args.meta is not None:
        meta = FrameMeta.from_json_file(args.meta)
        base = {
            "width": meta.width,
            "height": meta.height,
            "fps": meta.fps,
            "frame_count": meta.frame_count,
            "video_id": meta.video_id,
        }
    if args.width is not None:
        base["width"] = args.width
    if args.height is not None:
        base["height"] = args.height
    if args.fps is not None:
        base["fps"] = args.fps
    if args.frames is not None:
        base["frame_count"] = args.frames
    if "width" not in base or "height" not in base:
        if require_dims:
            raise ConfigError("frame dimensions required: pass --meta or --width/--height")
        return None
    base.setdefault("fps", default_fps)
    base.setdefault("frame_count", 0)
    return FrameMeta(**base)


def _load_classes(args) -> ClassMap | None:
    if getattr(args, "classes", None) is None:
        return None
    if not args.classes.is_file():
        raise ConfigError(f"class map file not found: {args.classes}")
    return load_class_map(args.classes)


def _config_echo(args) -> dict:
    echo = {}
    for key in sorted(vars(args)):
        if key == "command":
            continue
        val = getattr(args, key)
        echo[key] = str(val) if isinstance(val, Path) else val
    return echo


def _loss_params(args) -> LossParams:
    values = {}
    if args.params is not None:
        with open(args.params, encoding="utf-8") as fh:
            loaded = json.load(fh)
        if not isinstance(loaded, dict):
            raise ConfigError(f"{args.params}: loss parameter file must be a JSON object")
        allowed = {"gamma", "alpha", "lambda_box", "lambda_cls", "lambda_dfl"}
        unknown = set(loaded) - allowed
        if unknown:
            raise ConfigError(f"unknown loss parameters {sorted(unknown)}")
        values.update(loaded)
    for name in ("gamma", "alpha", "lambda_box", "lambda_cls", "lambda_dfl"):
        flag = getattr(args, name)
        if flag is not None:
            values[name] = flag
    return LossParams(**values)


def _setup_logging() -> None:
    level_name = os.environ.get("EXPOSURE_LOG", "warning").upper()
    level = getattr(logging, level_name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")


def _dispatch(args) -> int:
    echo = _config_echo(args)
    if args.command == "analyze":
        meta = _resolve_meta(args, require_dims=True)
        cfg = pipeline.AnalyzeConfig(
            detections=args.detections,
            meta=meta,
            out_dir=args.out,
            class_map=_load_classes(args),
            conf_threshold=args.conf_threshold,
            top_k=args.top_k,
            min_run=args.min_run,
            max_gap=args.max_gap,
            fmt=args.format,
            jobs=args.jobs,
            strict=args.strict,
        )
        report = pipeline.run_analyze(cfg, echo)
    elif args.command == "evaluate":
        meta = _resolve_meta(args, require_dims=True)
        if not args.labels.is_dir():
            raise ConfigError(f"labels directory not found: {args.labels}")
        cfg = pipeline.EvaluateConfig(
            labels_dir=args.labels,
            detections=args.detections,
            meta=meta,
            out_dir=args.out,
            class_map=_load_classes(args),
            iou_threshold=args.iou_threshold,
            box_mode=args.box_mode,
            conf_threshold=args.conf_threshold,
            interpolation=args.interpolation,
            fmt=args.format,
            strict=args.strict,
        )
        report = pipeline.run_evaluate(cfg, echo)
    elif args.command == "fit":
        meta = _resolve_meta(args, require_dims=args.labels is not None)
        cfg = pipeline.FitConfig(
            out_dir=args.out,
            labels_dir=args.labels,
            detections=args.detections,
            meta=meta,
            class_map=_load_classes(args),
            bin_width=args.bin_width,
            fmt=args.format,
            strict=args.strict,
        )
        report = pipeline.run_fit(cfg, echo)
    elif args.command == "losscheck":
        cfg = pipeline.LossCheckConfig(params=_loss_params(args), out_dir=args.out)
        report, passed = pipeline.run_losscheck(cfg, echo)
        for check in report.summary["checks"]:
            status = "PASS" if check["passed"] else "FAIL"
            print(
                f"[{status}] {check['name']}: expected {check['expected']:.12g}, "
                f"actual {check['actual']:.12g} (tol {check['tol']:g})"
            )
        if not passed:
            failed = [c["name"] for c in report.summary["checks"] if not c["passed"]]
            print(f"losscheck failed: {len(failed)} fixture(s): {', '.join(failed)}", file=sys.stderr)
            return EXIT_CONFIG
        return EXIT_OK
    else:  # pragma: no cover - argparse enforces the choices
        raise ConfigError(f"unknown command {args.command!r}")

    print(json.dumps(report.to_payload(), indent=2))
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _dispatch(args)
    except ConfigError as exc:
        logger.error("configuration error: %s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        logger.error("data error: %s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ObbkitError as exc:
        logger.error("error: %s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001 - exit-code contract for internal errors
        logger.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


def entrypoint() -> None:
    raise SystemExit(main())
