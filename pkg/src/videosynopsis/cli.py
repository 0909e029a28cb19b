"""Command-line pipeline driver.

Each stage of the pipeline is exposed as a subcommand so evaluation
workflows can re-run any stage from its on-disk inputs:

    init       write a config file with every default spelled out
    extract    frames + detections -> tube CSV, background samples, log
    synopsize  tube CSV -> schedule JSON + metrics report
    render     schedule + tubes + frames -> synopsis frames + manifest
    score      any schedule JSON + tubes -> metrics report
    sweep      tube CSV -> one report per collision threshold

Exit codes: 0 success, 1 internal error, 2 bad input.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .core import VideoMeta
from .frames import (
    FrameSequence,
    ImageDirectoryFrames,
    RawVideoFrames,
    read_image,
    write_image,
)
from .grouping import GroupingConfig, build_groups, dump_pair_table
from .ingest import (
    AnnotationError,
    BackgroundSampleStore,
    EmptyFrameConfig,
    FileDetectionSource,
    parse_annotations,
    run_extraction,
    serialize_annotations,
)
from .metrics import format_report, format_sweep_table, score_schedule
from .render import SegmentationConfig, generate_background, render_synopsis
from .scheduler import (
    SchedulerConfig,
    rearrange,
    schedule_from_dict,
    schedule_to_dict,
)

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_BAD_INPUT = 2


@dataclasses.dataclass
class PipelineConfig:
    """Aggregate of every stage's knobs plus the source-video geometry."""

    video: VideoMeta
    grouping: GroupingConfig
    scheduler: SchedulerConfig
    segmentation: SegmentationConfig
    empty_frame: EmptyFrameConfig
    frame_source: str = "directory"  # or "raw"
    threads: int = 1

    @classmethod
    def defaults(cls) -> "PipelineConfig":
        return cls(
            video=VideoMeta(width=1280, height=720, frame_count=1000, fps=30.0),
            grouping=GroupingConfig(),
            scheduler=SchedulerConfig(),
            segmentation=SegmentationConfig(),
            empty_frame=EmptyFrameConfig(),
        )

    def to_dict(self) -> dict:
        data = dataclasses.asdict(self)
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        empty = dict(data.get("empty_frame", {}))
        if "aspect_ratio_range" in empty:
            empty["aspect_ratio_range"] = tuple(empty["aspect_ratio_range"])
        sched = dict(data.get("scheduler", {}))
        if sched.get("shift_levels") is not None:
            sched["shift_levels"] = tuple((float(t), int(s)) for t, s in sched["shift_levels"])
        return cls(
            video=VideoMeta(**data["video"]),
            grouping=GroupingConfig(**data.get("grouping", {})),
            scheduler=SchedulerConfig(**sched),
            segmentation=SegmentationConfig(**data.get("segmentation", {})),
            empty_frame=EmptyFrameConfig(**empty),
            frame_source=data.get("frame_source", "directory"),
            threads=int(data.get("threads", 1)),
        )

    @classmethod
    def load(cls, path: str | Path | None) -> "PipelineConfig":
        if path is None:
            return cls.defaults()
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"config not found: {path}")
        return cls.from_dict(json.loads(path.read_text()))


def _dump_json(data: dict, path: Path) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _open_frames(path: str, cfg: PipelineConfig) -> FrameSequence:
    if cfg.frame_source == "raw":
        return RawVideoFrames(path, cfg.video.width, cfg.video.height)
    return ImageDirectoryFrames(path)


def _load_tubes(path: str, cfg: PipelineConfig):
    tube_path = Path(path)
    if not tube_path.is_file():
        raise FileNotFoundError(f"tubes not found: {tube_path}")
    with open(tube_path) as fh:
        return parse_annotations(fh, cfg.video)


def _save_store(store: BackgroundSampleStore, path: Path) -> None:
    samples = store.samples
    pixels = np.stack([p for p, _ in samples])
    grid = pixels.shape[1:3]
    validity = np.stack(
        [np.ones(grid, dtype=bool) if v is None else v for _, v in samples]
    )
    np.savez_compressed(path, samples=pixels, validity=validity, capacity=store.capacity)


def _load_store(path: Path) -> BackgroundSampleStore:
    if not path.is_file():
        raise FileNotFoundError(f"background samples not found: {path}")
    data = np.load(path)
    store = BackgroundSampleStore(int(data["capacity"]))
    for pixels, validity in zip(data["samples"], data["validity"]):
        store.push(pixels, None if validity.all() else validity)
    return store


def cmd_init(args: argparse.Namespace) -> int:
    cfg = PipelineConfig.defaults()
    if args.width or args.height or args.frame_count:
        cfg = dataclasses.replace(
            cfg,
            video=VideoMeta(
                width=args.width or 1280,
                height=args.height or 720,
                frame_count=args.frame_count or 1000,
                fps=args.fps,
            ),
        )
    _dump_json(cfg.to_dict(), Path(args.out))
    print(f"wrote default config to {args.out}")
    return EXIT_OK


def cmd_extract(args: argparse.Namespace) -> int:
    cfg = PipelineConfig.load(args.config)
    detections_path = Path(args.detections)
    if not detections_path.is_file():
        raise FileNotFoundError(f"detections not found: {detections_path}")
    frames = _open_frames(args.frames, cfg)
    with open(detections_path) as fh:
        source = FileDetectionSource(fh, cfg.video)

    result = run_extraction(frames, source, cfg.empty_frame, cfg.video)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "tubes.csv", "w") as fh:
        serialize_annotations(result.tubes, fh)
    if len(result.store):
        _save_store(result.store, out_dir / "background_samples.npz")
    log_rows = [
        {
            "frame": r.frame,
            "mode": r.mode,
            "queried": r.queried,
            "judged_empty": r.judged_empty,
        }
        for r in result.log
    ]
    _dump_json({"frames": log_rows}, out_dir / "extraction_log.json")
    print(
        f"extracted {len(result.tubes)} tubes; detector queried on "
        f"{result.detector_queries}/{len(result.log)} frames"
    )
    return EXIT_OK


def cmd_synopsize(args: argparse.Namespace) -> int:
    cfg = PipelineConfig.load(args.config)
    tubes = _load_tubes(args.tubes, cfg)
    groups = build_groups(tubes, cfg.grouping)
    schedule = rearrange(groups, {t.id: t for t in tubes}, cfg.scheduler)
    report = score_schedule(schedule, tubes, cfg.video)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.pair_table:
        with open(args.pair_table, "w") as fh:
            dump_pair_table(tubes, fh)
    _dump_json(schedule_to_dict(schedule), out_dir / "schedule.json")
    _dump_json(report.to_dict(), out_dir / "metrics.json")
    (out_dir / "metrics.txt").write_text(format_report(report) + "\n")
    print(format_report(report))
    return EXIT_OK


def cmd_render(args: argparse.Namespace) -> int:
    cfg = PipelineConfig.load(args.config)
    if args.threads:
        cfg = dataclasses.replace(cfg, threads=args.threads)
    tubes = _load_tubes(args.tubes, cfg)
    by_id = {t.id: t for t in tubes}
    schedule_path = Path(args.schedule)
    if not schedule_path.is_file():
        raise FileNotFoundError(f"schedule not found: {schedule_path}")
    schedule = schedule_from_dict(json.loads(schedule_path.read_text()), by_id)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if schedule.synopsis_length == 0:
        print("warning: schedule is empty, no frames to render", file=sys.stderr)
        _dump_json({"synopsis_length": 0, "frames": {}}, out_dir / "manifest.json")
        return EXIT_OK

    frames = _open_frames(args.frames, cfg)
    if args.background:
        background = read_image(args.background)
    else:
        # extract writes the sample store beside the tube file
        samples = (
            Path(args.samples)
            if args.samples
            else Path(args.tubes).parent / "background_samples.npz"
        )
        background = generate_background(_load_store(samples))

    ext = args.image_format
    write_image(out_dir / f"background.{ext}", background)
    manifest: dict[str, list[list[int]]] = {}
    rendered = render_synopsis(schedule, by_id, frames, background, cfg.segmentation)
    digits = max(6, len(str(schedule.synopsis_length)))

    def emit(item):
        write_image(out_dir / f"frame_{item.index:0{digits}d}.{ext}", item.pixels)
        return item.index, [[tid, src] for tid, src in item.contributions]

    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            for index, contribs in pool.map(emit, rendered):
                manifest[str(index)] = contribs
    else:
        for item in rendered:
            index, contribs = emit(item)
            manifest[str(index)] = contribs
    _dump_json(
        {"synopsis_length": schedule.synopsis_length, "frames": manifest},
        out_dir / "manifest.json",
    )
    print(f"rendered {schedule.synopsis_length} frames to {out_dir}")
    return EXIT_OK


def cmd_score(args: argparse.Namespace) -> int:
    cfg = PipelineConfig.load(args.config)
    tubes = _load_tubes(args.tubes, cfg)
    by_id = {t.id: t for t in tubes}
    schedule_path = Path(args.schedule)
    if not schedule_path.is_file():
        raise FileNotFoundError(f"schedule not found: {schedule_path}")
    schedule = schedule_from_dict(json.loads(schedule_path.read_text()), by_id)
    report = score_schedule(schedule, tubes, cfg.video)
    if args.out:
        _dump_json(report.to_dict(), Path(args.out))
    print(format_report(report))
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = PipelineConfig.load(args.config)
    tubes = _load_tubes(args.tubes, cfg)
    by_id = {t.id: t for t in tubes}
    groups = build_groups(tubes, cfg.grouping)
    thresholds = [float(v) for v in args.thresholds.split(",") if v.strip()]
    if not thresholds:
        raise ValueError("no thresholds given")

    rows = []
    for threshold in thresholds:
        sched_cfg = dataclasses.replace(
            cfg.scheduler, collision_threshold=threshold, shift_levels=None
        )
        schedule = rearrange(groups, by_id, sched_cfg)
        report = score_schedule(schedule, tubes, cfg.video)
        rows.append((threshold, report))

    table = format_sweep_table(rows)
    print(table)
    if args.out_dir:
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "sweep.txt").write_text(table + "\n")
        _dump_json(
            {
                "levels": [
                    {"threshold": threshold, **report.to_dict()}
                    for threshold, report in rows
                ]
            },
            out_dir / "sweep.json",
        )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="videosynopsis",
        description="Condense a static-camera video by rearranging object tubes.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init", help="write a config file with all defaults")
    p.add_argument("--out", default="config.json")
    p.add_argument("--width", type=int, default=0)
    p.add_argument("--height", type=int, default=0)
    p.add_argument("--frame-count", type=int, default=0)
    p.add_argument("--fps", type=float, default=30.0)
    p.set_defaults(func=cmd_init)

    p = sub.add_parser("extract", help="run the frame/detection extraction stage")
    p.add_argument("--frames", required=True, help="frame directory or raw RGB24 file")
    p.add_argument("--detections", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("synopsize", help="group, schedule, and score tubes")
    p.add_argument("--tubes", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--pair-table", default=None, help="dump per-pair grouping costs as CSV")
    p.set_defaults(func=cmd_synopsize)

    p = sub.add_parser("render", help="synthesize synopsis frames")
    p.add_argument("--schedule", required=True)
    p.add_argument("--tubes", required=True)
    p.add_argument("--frames", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--samples", default=None, help="background sample NPZ from extract")
    p.add_argument("--background", default=None, help="explicit background image")
    p.add_argument("--image-format", default="ppm")
    p.add_argument("--threads", type=int, default=0, help="cap render worker count")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("score", help="score any schedule JSON against a tube file")
    p.add_argument("--schedule", required=True)
    p.add_argument("--tubes", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("sweep", help="rearrange at several collision thresholds")
    p.add_argument("--tubes", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--thresholds", required=True, help="comma-separated threshold list")
    p.add_argument("--out-dir", default=None)
    p.set_defaults(func=cmd_sweep)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (
        AnnotationError,
        FileNotFoundError,
        json.JSONDecodeError,
        KeyError,
        ValueError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
