"""Command-line entry point: simulate, detect16, detect8, eval, pipeline, benchmark.

Exit codes: 0 success, 1 usage error (bad flags, missing paths, bad config),
2 data error (unreadable frames, detections or ground truth).
"""
from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

from . import kernels
from .benchmark import benchmark_frame, format_results, run_benchmark
from .cloud_io import FrameParseError, decimate_planes, read_sequence, write_sequence
from .config import ConfigError, Settings, load_settings
from .detect import EIGHT_PLANE, MODES, SIXTEEN_PLANE, DetectionFrame, PipelineConfig, detect, read_detections, write_detections
from .evaluate import AlignmentError, compute_error_series, format_summary, write_error_csv, write_gnuplot, write_summary
from .simulate import SCENARIOS, frame_times, generate_scenario, read_ground_truth, simulate_sequence, write_ground_truth

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2

FRAMES_DIR = "frames"
GT_FILE = "ground_truth.csv"
DETECTIONS_FILE = "detections.jsonl"
ERRORS_CSV = "errors.csv"
ERRORS_DAT = "errors.dat"
SUMMARY_FILE = "summary.txt"

log = logging.getLogger("sparsedet")


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser, *flags: str) -> None:
    p.add_argument("--config", type=Path, help="INI file overriding the packaged defaults")
    if "input" in flags:
        p.add_argument("--input", type=Path, required=True, help="sequence directory")
    if "output" in flags:
        p.add_argument("--output", type=Path, required=True, help="output directory")
    if "scenario" in flags:
        p.add_argument("--scenario", choices=SCENARIOS, default="approach")
    if "mode" in flags:
        p.add_argument("--mode", choices=MODES, help="pipeline variant (default from config)")
    if "seed" in flags:
        p.add_argument("--seed", type=int, help="noise seed (default from config)")
    if "frames" in flags:
        p.add_argument("--frames", type=int, help="number of frames (default from config)")
    if "parallel" in flags:
        p.add_argument("--parallel", type=int, default=1, metavar="N", help="worker processes (output is unchanged)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sparsedet", description="Obstacle boxes from sparse lidar, with a simulator and evaluator.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="raycast a scenario into frames and ground_truth.csv")
    _common(p, "output", "scenario", "seed", "frames", "parallel")

    for name, mode in (("detect16", SIXTEEN_PLANE), ("detect8", EIGHT_PLANE)):
        p = sub.add_parser(name, help=f"run the {mode} pipeline over a frame directory")
        _common(p, "input", "output", "parallel")
        if mode == EIGHT_PLANE:
            p.add_argument("--decimate", nargs="?", const="config", metavar="KEEP",
                           help="drop rings first (even|odd|ring list; bare flag uses the config)")

    p = sub.add_parser("eval", help="score detections against ground truth")
    _common(p, "input", "output")
    p.add_argument("--detections", type=Path, help=f"detections file (default INPUT/{DETECTIONS_FILE})")

    p = sub.add_parser("pipeline", help="simulate, detect and evaluate in one go")
    _common(p, "output", "scenario", "mode", "seed", "frames", "parallel")

    p = sub.add_parser("benchmark", help="single-frame latency of both pipelines per kernel backend")
    _common(p, "seed")
    p.add_argument("--repeat", type=int, default=10)
    p.add_argument("--backend", choices=kernels.available_backends(), action="append",
                   help="restrict to a backend (repeatable)")
    return parser


# --- helpers ----------------------------------------------------------------


def _settings(args) -> Settings:
    if args.config is not None and not args.config.is_file():
        raise UsageError(f"config file not found: {args.config}")
    try:
        return load_settings(args.config)
    except ConfigError as exc:
        raise UsageError(f"bad config: {exc}") from exc


def _frames_dir(path: Path) -> Path:
    if not path.is_dir():
        raise UsageError(f"input directory not found: {path}")
    sub = path / FRAMES_DIR
    return sub if sub.is_dir() else path


def _load_frames(path: Path):
    try:
        return read_sequence(_frames_dir(path))
    except (FrameParseError, ValueError) as exc:
        raise DataError(str(exc)) from exc


def _detect_one(job):
    cloud, config, keep = job
    if keep is not None:
        cloud = decimate_planes(cloud, keep)
    return detect(cloud, config)


def run_detection(clouds, config: PipelineConfig, keep=None, parallel: int = 1) -> list[DetectionFrame]:
    jobs = [(c, config, keep) for c in clouds]
    if parallel > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            return list(pool.map(_detect_one, jobs, chunksize=max(1, len(jobs) // (4 * parallel))))
    return [_detect_one(j) for j in jobs]


def _simulate(settings: Settings, scenario: str, seed: int, frames: int, out: Path):
    try:
        scene = generate_scenario(scenario, settings.scenario)
    except ValueError as exc:
        raise UsageError(f"bad scenario parameters: {exc}") from exc
    times = frame_times(scene, count=frames)
    seq = simulate_sequence(scene, settings.lidar, times, seed=seed)
    out.mkdir(parents=True, exist_ok=True)
    write_sequence([rec for rec, _ in seq], out / FRAMES_DIR)
    write_ground_truth([gt for _, gt in seq], out / GT_FILE)
    return seq


def _evaluate(truth_dir: Path, detections: Sequence[DetectionFrame], timestamps, settings: Settings, out: Path):
    gt_path = truth_dir / GT_FILE
    if not gt_path.is_file():
        raise UsageError(f"ground truth not found: {gt_path}")
    try:
        truths = read_ground_truth(gt_path, timestamps=timestamps)
        if not detections:
            detections = [DetectionFrame(t.timestamp) for t in truths]
        series = compute_error_series(truths, detections, settings.max_match_distance)
    except (AlignmentError, ValueError) as exc:
        raise DataError(str(exc)) from exc
    out.mkdir(parents=True, exist_ok=True)
    write_error_csv(series, out / ERRORS_CSV)
    write_gnuplot(series, out / ERRORS_DAT)
    return series


# --- commands ---------------------------------------------------------------


def cmd_simulate(args, settings: Settings) -> int:
    seed = settings.seed if args.seed is None else args.seed
    frames = settings.frames if args.frames is None else args.frames
    if frames < 1:
        raise UsageError("--frames must be >= 1")
    seq = _simulate(settings, args.scenario, seed, frames, args.output)
    print(f"wrote {len(seq)} frames and {GT_FILE} to {args.output}")
    return EXIT_OK


def cmd_detect(args, settings: Settings, mode: str) -> int:
    records = _load_frames(args.input)
    keep = None
    if mode == EIGHT_PLANE and args.decimate is not None:
        keep = settings.decimation_keep if args.decimate == "config" else args.decimate
    try:
        frames = run_detection([r.cloud for r in records], settings.pipeline_config(mode), keep, args.parallel)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    args.output.mkdir(parents=True, exist_ok=True)
    write_detections(frames, args.output / DETECTIONS_FILE)
    print(f"wrote {len(frames)} detection frames to {args.output / DETECTIONS_FILE}")
    return EXIT_OK


def cmd_eval(args, settings: Settings) -> int:
    if not args.input.is_dir():
        raise UsageError(f"input directory not found: {args.input}")
    det_path = args.detections or (args.input / DETECTIONS_FILE)
    if not det_path.is_file():
        raise UsageError(f"detections file not found: {det_path}")
    try:
        detections = read_detections(det_path)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    frames_dir = args.input / FRAMES_DIR
    if frames_dir.is_dir():
        timestamps = [r.timestamp for r in _load_frames(args.input)]
    else:
        timestamps = [d.timestamp for d in detections]
    series = _evaluate(args.input, detections, timestamps, settings, args.output)
    text = format_summary(series, "evaluation")
    write_summary(series, args.output / SUMMARY_FILE, "evaluation")
    print(text)
    return EXIT_OK


def cmd_pipeline(args, settings: Settings) -> int:
    mode = args.mode or settings.mode
    seed = settings.seed if args.seed is None else args.seed
    frames = settings.frames if args.frames is None else args.frames
    if frames < 1:
        raise UsageError("--frames must be >= 1")
    seq = _simulate(settings, args.scenario, seed, frames, args.output)
    keep = settings.decimation_keep if mode == EIGHT_PLANE else None
    # detect on the frames as stored so the run equals simulate + detect + eval
    records = _load_frames(args.output)
    dets = run_detection([r.cloud for r in records], settings.pipeline_config(mode), keep, args.parallel)
    write_detections(dets, args.output / DETECTIONS_FILE)
    series = _evaluate(args.output, dets, [rec.timestamp for rec, _ in seq], settings, args.output)
    title = f"scenario={args.scenario} mode={mode} seed={seed} frames={frames}"
    write_summary(series, args.output / SUMMARY_FILE, title)
    print(format_summary(series, title))
    return EXIT_OK


def cmd_benchmark(args, settings: Settings) -> int:
    if args.repeat < 1:
        raise UsageError("--repeat must be >= 1")
    seed = settings.seed if args.seed is None else args.seed
    cloud = benchmark_frame(seed, settings.lidar)
    configs = {m: settings.pipeline_config(m) for m in MODES}
    print(format_results(run_benchmark(configs, cloud, args.backend, args.repeat)))
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits on --help and on errors
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        settings = _settings(args)
        if args.command == "simulate":
            return cmd_simulate(args, settings)
        if args.command == "detect16":
            return cmd_detect(args, settings, SIXTEEN_PLANE)
        if args.command == "detect8":
            return cmd_detect(args, settings, EIGHT_PLANE)
        if args.command == "eval":
            return cmd_eval(args, settings)
        if args.command == "pipeline":
            return cmd_pipeline(args, settings)
        return cmd_benchmark(args, settings)
    except UsageError as exc:
        print(f"sparsedet: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"sparsedet: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
