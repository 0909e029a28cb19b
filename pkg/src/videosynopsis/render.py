"""Synopsis frame synthesis: background, per-object masks, stitching."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Mapping, Sequence

import numpy as np

from .core import BoundingBox, SynopsisSchedule, Tube, tube_placements
from .frames import FrameSequence
from .ingest import BackgroundSampleStore, median_background
from .pixelops import binary_close, binary_open, channel_mean_absdiff, largest_component

__all__ = [
    "SegmentationConfig",
    "ObjectMask",
    "RenderedFrame",
    "RenderError",
    "generate_background",
    "segment",
    "stitch_frame",
    "render_synopsis",
]


class RenderError(RuntimeError):
    pass


@dataclass(frozen=True)
class SegmentationConfig:
    initial_threshold: int = 80
    min_foreground_ratio: float = 0.15
    threshold_decrement: int = 10
    morphology_kernel: int = 2
    threshold_floor: int = 20

    def __post_init__(self) -> None:
        if not self.initial_threshold > self.threshold_floor >= 1:
            raise ValueError("need initial_threshold > threshold_floor >= 1")
        if not 0.0 < self.min_foreground_ratio < 1.0:
            raise ValueError("min_foreground_ratio must be in (0, 1)")
        if self.threshold_decrement < 1:
            raise ValueError("threshold_decrement must be >= 1")
        if self.morphology_kernel < 0:
            raise ValueError("morphology_kernel must be >= 0")


@dataclass(frozen=True)
class ObjectMask:
    """Crop-sized binary mask; the filled largest foreground contour.

    ``is_fallback`` marks degenerate segmentations where the adaptive
    threshold bottomed out without finding a plausible object, in which case
    the mask may be the whole box.
    """

    pixels: np.ndarray
    is_fallback: bool = False

    @property
    def foreground_ratio(self) -> float:
        return float(self.pixels.mean())


def generate_background(store: BackgroundSampleStore) -> np.ndarray:
    """Synopsis background: validity-aware median of the collected samples."""
    return median_background(store)


def segment(
    crop: np.ndarray,
    background_crop: np.ndarray,
    previous_crop: np.ndarray | None,
    cfg: SegmentationConfig,
) -> ObjectMask:
    """Foreground mask of one object crop.

    Two difference cues are summed: the crop against the generated
    background, and the crop against the same image region one tube frame
    earlier (motion), which recovers foreground areas that happen to match
    the background's colors.  The binarization threshold starts high and
    drops until the mask covers a plausible share of the box, then the
    largest connected component, holes filled, becomes the mask.
    """
    if crop.shape != background_crop.shape:
        raise ValueError(f"crop {crop.shape} vs background {background_crop.shape}")
    combined = channel_mean_absdiff(crop, background_crop)
    if previous_crop is not None:
        if previous_crop.shape != crop.shape:
            raise ValueError(f"crop {crop.shape} vs previous {previous_crop.shape}")
        combined = np.minimum(combined + channel_mean_absdiff(crop, previous_crop), 255.0)

    threshold = cfg.initial_threshold
    fg = combined > threshold
    while fg.mean() < cfg.min_foreground_ratio and threshold > cfg.threshold_floor:
        threshold = max(threshold - cfg.threshold_decrement, cfg.threshold_floor)
        fg = combined > threshold

    fg = binary_close(binary_open(fg, cfg.morphology_kernel), cfg.morphology_kernel)
    component = largest_component(fg)
    if component is None:
        return ObjectMask(pixels=np.ones(crop.shape[:2], dtype=bool), is_fallback=True)
    mask = ObjectMask(pixels=component, is_fallback=False)
    if mask.foreground_ratio < cfg.min_foreground_ratio:
        return ObjectMask(pixels=component, is_fallback=True)
    return mask


def stitch_frame(
    background: np.ndarray,
    placed_objects: Sequence[tuple[np.ndarray, ObjectMask, tuple[int, int]]],
) -> np.ndarray:
    """Paint object crops onto a copy of the background, in list order.

    Each entry is (crop, mask, (left, top)); masked pixels overwrite, later
    entries win in overlaps, everything outside all masks stays bit-identical
    to the background.
    """
    out = background.copy()
    height, width = background.shape[:2]
    for crop, mask, (left, top) in placed_objects:
        ch, cw = crop.shape[:2]
        if mask.pixels.shape != (ch, cw):
            raise RenderError(f"mask {mask.pixels.shape} does not fit crop {(ch, cw)}")
        if left < 0 or top < 0 or left + cw > width or top + ch > height:
            raise RenderError(
                f"object at ({left}, {top}) size {cw}x{ch} exceeds the "
                f"{width}x{height} frame"
            )
        region = out[top : top + ch, left : left + cw]
        region[mask.pixels] = crop[mask.pixels]
    return out


@dataclass(frozen=True)
class RenderedFrame:
    index: int
    pixels: np.ndarray
    contributions: tuple[tuple[int, int], ...]  # (tube id, source frame)


def _crop(pixels: np.ndarray, box: BoundingBox) -> np.ndarray:
    return pixels[box.top : box.bottom, box.left : box.right]


def render_synopsis(
    schedule: SynopsisSchedule,
    tubes: Mapping[int, Tube],
    frames: FrameSequence,
    background: np.ndarray,
    cfg: SegmentationConfig,
) -> Iterator[RenderedFrame]:
    """Yield synopsis frames in order.

    For every synopsis frame, each tube with a box mapped there contributes a
    segmented crop from its source frame; paint order is ascending synopsis
    start of the owning group, ties by tube id.
    """
    starts = tube_placements(schedule)
    group_start: dict[int, int] = {}
    for group, s in schedule.placements:
        for tid, _ in group.members:
            group_start[tid] = s

    per_frame: dict[int, list[tuple[tuple[int, int], int, int]]] = {}
    for tid, tube_start in starts.items():
        if tid not in tubes:
            raise RenderError(f"schedule references unknown tube {tid}")
        tube = tubes[tid]
        paint_key = (group_start[tid], tid)
        for k in range(tube.length):
            per_frame.setdefault(tube_start + k, []).append((paint_key, tid, k))

    for s in range(schedule.synopsis_length):
        entries = sorted(per_frame.get(s, []))
        placed = []
        contributions = []
        source_cache: dict[int, np.ndarray] = {}
        for _, tid, k in entries:
            tube = tubes[tid]
            box = tube.boxes[k]
            for needed in {box.frame} | ({tube.boxes[k - 1].frame} if k > 0 else set()):
                if needed not in source_cache:
                    try:
                        source_cache[needed] = frames.frame(needed)
                    except (IndexError, KeyError) as exc:
                        raise RenderError(
                            f"source frame {needed} for tube {tid} unavailable: {exc}"
                        ) from None
            crop = _crop(source_cache[box.frame], box)
            previous = None
            if k > 0:
                # Same image region, previous tube frame: a motion cue rather
                # than a re-crop at the previous box position.
                previous = _crop(source_cache[tube.boxes[k - 1].frame], box)
            mask = segment(crop, _crop(background, box), previous, cfg)
            placed.append((crop, mask, (box.left, box.top)))
            contributions.append((tid, box.frame))
        yield RenderedFrame(
            index=s,
            pixels=stitch_frame(background, placed),
            contributions=tuple(contributions),
        )
