"""Domain types and bounding-box geometry shared by the whole pipeline.

Everything here is immutable after construction and all functions are pure,
so values can be shared freely across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterator, Mapping

import numpy as np

__all__ = [
    "BoundingBox",
    "Tube",
    "VideoMeta",
    "TubeGroup",
    "SynopsisSchedule",
    "intersection_area",
    "iom",
    "center_distance",
    "common_frames",
    "group_extent",
    "tube_placements",
]


@dataclass(frozen=True)
class BoundingBox:
    """One axis-aligned detection at one source frame.

    ``frame`` is a 0-based source frame index.  ``left``/``top`` are the
    top-left corner in pixels; the box spans columns ``[left, left+width)``
    and rows ``[top, top+height)``.
    """

    frame: int
    left: int
    top: int
    width: int
    height: int

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise ValueError(
                f"box at frame {self.frame} has non-positive size "
                f"{self.width}x{self.height}"
            )
        if self.left < 0 or self.top < 0:
            raise ValueError(
                f"box at frame {self.frame} has negative origin "
                f"({self.left}, {self.top})"
            )
        if self.frame < 0:
            raise ValueError(f"negative frame index {self.frame}")

    @property
    def right(self) -> int:
        """Exclusive right edge."""
        return self.left + self.width

    @property
    def bottom(self) -> int:
        """Exclusive bottom edge."""
        return self.top + self.height

    @property
    def area(self) -> int:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return self.left + self.width / 2, self.top + self.height / 2


@dataclass(frozen=True)
class VideoMeta:
    """Source-video geometry; denominators for density and coverage."""

    width: int
    height: int
    frame_count: int
    fps: float = 30.0

    def __post_init__(self) -> None:
        if min(self.width, self.height, self.frame_count) <= 0 or self.fps <= 0:
            raise ValueError("video metadata fields must all be positive")

    def contains(self, box: BoundingBox) -> bool:
        return box.right <= self.width and box.bottom <= self.height


@dataclass(frozen=True)
class Tube:
    """Chronologically ordered boxes of one tracked object.

    Boxes must be strictly increasing in frame index.  Gaps are legal right
    after parsing but every algorithm downstream of ingest assumes gapless
    tubes (one box per frame from ``start`` to ``end``).
    """

    id: int
    class_label: str
    boxes: tuple[BoundingBox, ...]

    def __post_init__(self) -> None:
        if not self.boxes:
            raise ValueError(f"tube {self.id} has no boxes")
        frames = [b.frame for b in self.boxes]
        if any(b >= a for a, b in zip(frames[1:], frames)):
            raise ValueError(f"tube {self.id} frames are not strictly increasing")

    @property
    def start(self) -> int:
        return self.boxes[0].frame

    @property
    def end(self) -> int:
        return self.boxes[-1].frame

    @property
    def length(self) -> int:
        """Number of frames containing the tube (box count)."""
        return len(self.boxes)

    @property
    def span(self) -> int:
        return self.end - self.start + 1

    @property
    def is_gapless(self) -> bool:
        return self.length == self.span

    def frames(self) -> Iterator[int]:
        return (b.frame for b in self.boxes)

    # Dense coordinate arrays, cached because the grouping and scheduling
    # inner loops evaluate pairwise costs over frame ranges.
    @cached_property
    def _coords(self) -> np.ndarray:
        return np.array(
            [(b.frame, b.left, b.top, b.width, b.height) for b in self.boxes],
            dtype=np.int64,
        )

    @property
    def frame_array(self) -> np.ndarray:
        return self._coords[:, 0]

    @property
    def lefts(self) -> np.ndarray:
        return self._coords[:, 1]

    @property
    def tops(self) -> np.ndarray:
        return self._coords[:, 2]

    @property
    def widths(self) -> np.ndarray:
        return self._coords[:, 3]

    @property
    def heights(self) -> np.ndarray:
        return self._coords[:, 4]


@dataclass(frozen=True)
class TubeGroup:
    """Tubes locked to fixed relative time offsets.

    ``members`` holds ``(tube_id, offset)`` pairs where ``offset`` is the
    tube's source start minus the group's earliest source start; rearranging
    a group moves all members together, never the offsets.
    """

    members: tuple[tuple[int, int], ...]
    source_start: int

    def __post_init__(self) -> None:
        if not self.members:
            raise ValueError("group has no members")
        offsets = [off for _, off in self.members]
        if min(offsets) != 0:
            raise ValueError("group must contain a member at offset 0")
        ids = [tid for tid, _ in self.members]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate tube id inside a group")

    @property
    def tube_ids(self) -> tuple[int, ...]:
        return tuple(tid for tid, _ in self.members)

    @property
    def size(self) -> int:
        return len(self.members)


@dataclass(frozen=True)
class SynopsisSchedule:
    """Per-group synopsis start frames plus the synopsis length."""

    placements: tuple[tuple[TubeGroup, int], ...]
    synopsis_length: int

    def __post_init__(self) -> None:
        starts = [s for _, s in self.placements]
        if any(s < 0 for s in starts):
            raise ValueError("negative synopsis start")
        if any(b < a for a, b in zip(starts, starts[1:])):
            raise ValueError("placements must be ordered by synopsis start")
        if self.synopsis_length < 0:
            raise ValueError("negative synopsis length")

    @property
    def groups(self) -> tuple[TubeGroup, ...]:
        return tuple(g for g, _ in self.placements)


def intersection_area(a: BoundingBox, b: BoundingBox) -> int:
    """Pixel area of the rectangle intersection; 0 when disjoint."""
    w = min(a.right, b.right) - max(a.left, b.left)
    h = min(a.bottom, b.bottom) - max(a.top, b.top)
    if w <= 0 or h <= 0:
        return 0
    return w * h


def iom(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over minimum: overlap area divided by the smaller box."""
    return intersection_area(a, b) / min(a.area, b.area)


def center_distance(a: BoundingBox, b: BoundingBox) -> float:
    """Euclidean distance between box centers."""
    ax, ay = a.center
    bx, by = b.center
    return math.hypot(ax - bx, ay - by)


def common_frames(t1: Tube, t2: Tube) -> set[int]:
    """Source frames where both tubes have a box."""
    return set(t1.frames()) & set(t2.frames())


def group_extent(group: TubeGroup, tubes: Mapping[int, Tube]) -> int:
    """Temporal extent of a group in frames: max member offset + length."""
    return max(off + tubes[tid].length for tid, off in group.members)


def tube_placements(schedule: SynopsisSchedule) -> dict[int, int]:
    """Synopsis start frame of every tube in the schedule.

    Within a placed group, tube ``k`` starts at the group's synopsis start
    plus its frozen offset.  Raises if a tube id occurs in more than one
    placement.
    """
    starts: dict[int, int] = {}
    for group, s in schedule.placements:
        for tid, off in group.members:
            if tid in starts:
                raise ValueError(f"tube {tid} appears in more than one group")
            starts[tid] = s + off
    return starts
