"""Greedy group rearrangement: assign every group a synopsis start frame.

Groups are processed in batches, sorted by source start.  Each group enters
at the batch's start frame and is shifted forward, a few frames at a time,
until its weighted collision cost against every already-placed group drops
under the threshold.  A group that stretches the output video sees its
collision weight decayed, so it stops fleeing collisions that are cheaper
than more video.  After each batch the entry frame is re-estimated from the
per-frame box-count histogram of everything placed so far.
"""

from __future__ import annotations

import math
from bisect import insort
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .core import SynopsisSchedule, Tube, TubeGroup, group_extent

__all__ = [
    "SchedulerConfig",
    "PlacedGroup",
    "SchedulerTrace",
    "group_collision",
    "box_count_histogram",
    "calculate_start",
    "rearrange",
    "schedule_to_dict",
    "schedule_from_dict",
]


@dataclass(frozen=True)
class SchedulerConfig:
    batch_size: int = 8
    decay_rate: float = 0.9
    collision_threshold: float = 0.1
    shift_step: int = 3
    startframe_skip_fraction: float = 0.15
    startframe_back_off: int = 30
    first_batch_size: int | None = None
    # Optional coarse-to-fine ladder of (threshold, step) pairs, highest
    # threshold first; the last threshold must equal collision_threshold.
    shift_levels: tuple[tuple[float, int], ...] | None = None

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0.0 < self.decay_rate <= 1.0:
            raise ValueError("decay_rate must be in (0, 1]")
        if self.collision_threshold <= 0:
            raise ValueError("collision_threshold must be > 0")
        if self.shift_step < 1:
            raise ValueError("shift_step must be >= 1")
        if not 0.0 <= self.startframe_skip_fraction < 1.0:
            raise ValueError("startframe_skip_fraction must be in [0, 1)")
        if self.startframe_back_off < 0:
            raise ValueError("startframe_back_off must be >= 0")
        if self.first_batch_size is not None and self.first_batch_size < 1:
            raise ValueError("first_batch_size must be >= 1")
        if self.shift_levels is not None:
            thresholds = [t for t, _ in self.shift_levels]
            if not thresholds or thresholds[-1] != self.collision_threshold:
                raise ValueError("last shift level must sit at collision_threshold")
            if any(b >= a for a, b in zip(thresholds, thresholds[1:])):
                raise ValueError("shift level thresholds must strictly decrease")
            if any(s < 1 for _, s in self.shift_levels):
                raise ValueError("shift level steps must be >= 1")

    @property
    def effective_first_batch(self) -> int:
        # A larger first batch gives the box-count histogram enough mass for
        # a meaningful threshold before the first start-frame estimate.
        return self.first_batch_size or max(self.batch_size, 10)

    @property
    def ladder(self) -> tuple[tuple[float, int], ...]:
        if self.shift_levels is not None:
            return self.shift_levels
        return ((self.collision_threshold, self.shift_step),)


@dataclass
class PlacedGroup:
    """A group with a tentative synopsis start and its collision weight."""

    group: TubeGroup
    synopsis_start: int
    weight: float = 1.0
    index: int = -1  # position in the rearrange input, for trace identity
    member_offsets: np.ndarray = field(repr=False, default=None)  # type: ignore[assignment]
    member_lengths: np.ndarray = field(repr=False, default=None)  # type: ignore[assignment]

    @classmethod
    def place(
        cls, group: TubeGroup, tubes: Mapping[int, Tube], start: int, index: int = -1
    ) -> "PlacedGroup":
        offsets = np.array([off for _, off in group.members], dtype=np.int64)
        lengths = np.array([tubes[tid].length for tid, _ in group.members], dtype=np.int64)
        return cls(
            group=group,
            synopsis_start=start,
            index=index,
            member_offsets=offsets,
            member_lengths=lengths,
        )

    @property
    def extent(self) -> int:
        return int((self.member_offsets + self.member_lengths).max())

    @property
    def end(self) -> int:
        """Exclusive synopsis end frame."""
        return self.synopsis_start + self.extent

    @property
    def box_count(self) -> int:
        return int(self.member_lengths.sum())


def _tube_pair_collision(
    t1: Tube, s1: int, t2: Tube, s2: int
) -> float:
    """Summed per-frame IoM of two tubes over their synopsis-time overlap."""
    lo = max(s1, s2)
    hi = min(s1 + t1.length, s2 + t2.length) - 1
    if lo > hi:
        return 0.0
    n = hi - lo + 1
    i1 = lo - s1
    i2 = lo - s2
    l1 = t1.lefts[i1 : i1 + n]
    l2 = t2.lefts[i2 : i2 + n]
    tp1 = t1.tops[i1 : i1 + n]
    tp2 = t2.tops[i2 : i2 + n]
    w1 = t1.widths[i1 : i1 + n]
    w2 = t2.widths[i2 : i2 + n]
    h1 = t1.heights[i1 : i1 + n]
    h2 = t2.heights[i2 : i2 + n]
    iw = np.minimum(l1 + w1, l2 + w2) - np.maximum(l1, l2)
    ih = np.minimum(tp1 + h1, tp2 + h2) - np.maximum(tp1, tp2)
    inter = np.clip(iw, 0, None) * np.clip(ih, 0, None)
    smaller = np.minimum(w1 * h1, w2 * h2)
    return float((inter / smaller).sum())


def group_collision(g1: PlacedGroup, g2: PlacedGroup, tubes: Mapping[int, Tube]) -> float:
    """Collision cost between two tentatively placed groups.

    Tube boxes are re-indexed by each tube's synopsis placement; the summed
    pairwise collision is normalized by the larger group's box count, so big
    groups are not penalized merely for containing more boxes.
    """
    total = 0.0
    for (id1, off1) in g1.group.members:
        t1 = tubes[id1]
        s1 = g1.synopsis_start + off1
        for (id2, off2) in g2.group.members:
            t2 = tubes[id2]
            s2 = g2.synopsis_start + off2
            total += _tube_pair_collision(t1, s1, t2, s2)
    return total / max(g1.box_count, g2.box_count)


def box_count_histogram(placed: Sequence[PlacedGroup]) -> np.ndarray:
    """Number of boxes present in each synopsis frame of the placed groups."""
    if not placed:
        return np.zeros(0, dtype=np.int64)
    length = max(pg.end for pg in placed)
    hist = np.zeros(length, dtype=np.int64)
    for pg in placed:
        for off, tube_len in zip(pg.member_offsets, pg.member_lengths):
            a = pg.synopsis_start + int(off)
            hist[a : a + int(tube_len)] += 1
    return hist


def calculate_start(placed: Sequence[PlacedGroup], cfg: SchedulerConfig) -> int:
    """Entry frame for the next batch, from the box-count histogram.

    Skips the sparse opening stretch of the synopsis, then finds the first
    frame whose box count falls under the halfway point between the
    histogram's maximum and mean, and backs off a fixed number of frames so
    the thinly filled region before it can still be used.
    """
    if not placed:
        return 0
    hist = box_count_histogram(placed)
    length = len(hist)
    threshold = (hist.max() + hist.mean()) / 2.0
    skip = math.ceil(cfg.startframe_skip_fraction * length)
    for s in range(skip, length):
        if hist[s] < threshold:
            return max(0, s - cfg.startframe_back_off)
    return max(0, length - cfg.startframe_back_off)


class SchedulerTrace:
    """Event log of one rearrangement run.

    ``events`` is a flat list of tuples mirroring the algorithm's steps;
    ``checks`` records, for every (group, opponent) pair examined, the final
    collision cost, the group's weight, and the group's position at the
    moment the pair cleared the threshold, so feasibility can be re-verified
    after the fact.
    """

    def __init__(self) -> None:
        self.events: list[tuple] = []
        self.checks: list[tuple[int, int, float, float, int]] = []

    def add(self, *event: object) -> None:
        self.events.append(tuple(event))


def _sort_key(pg: PlacedGroup) -> tuple[int, int, int]:
    return (pg.synopsis_start, pg.group.source_start, pg.group.members[0][0])


def rearrange(
    groups: Sequence[TubeGroup],
    tubes: Mapping[int, Tube],
    cfg: SchedulerConfig,
    trace: SchedulerTrace | None = None,
) -> SynopsisSchedule:
    """Assign synopsis start frames to all groups (greedy, batched).

    ``groups`` must be sorted by source start, as the grouping stage emits
    them; relative offsets inside each group are never altered.
    """
    if any(b.source_start < a.source_start for a, b in zip(groups, groups[1:])):
        raise ValueError("groups must be sorted by source start")
    if not groups:
        return SynopsisSchedule(placements=(), synopsis_length=0)

    video_length = max(group_extent(g, tubes) for g in groups)
    ladder = cfg.ladder
    gate = ladder[-1][0]

    placed: list[PlacedGroup] = []
    start_frame = 0
    i = 0
    batch = cfg.effective_first_batch
    if trace is not None:
        trace.add("batch", start_frame)

    while i < len(groups):
        for gi in range(i, min(i + batch, len(groups))):
            pg = PlacedGroup.place(groups[gi], tubes, start_frame, index=gi)
            if trace is not None:
                trace.add("init", gi, start_frame)
            for opp in list(placed):
                oi = opp.index
                cost = group_collision(pg, opp, tubes)
                if trace is not None:
                    trace.add("cost", gi, oi, cost, pg.weight)
                while cost * pg.weight > gate:
                    weighted = cost * pg.weight
                    step = next(s for t, s in ladder if weighted > t)
                    pg.synopsis_start += step
                    if trace is not None:
                        trace.add("shift", gi, pg.synopsis_start)
                    if pg.end > video_length:
                        video_length = pg.end
                        pg.weight *= cfg.decay_rate
                        if trace is not None:
                            trace.add("extend", gi, video_length, pg.weight)
                    cost = group_collision(pg, opp, tubes)
                    if trace is not None:
                        trace.add("cost", gi, oi, cost, pg.weight)
                # The length check also runs when no shift happened for this
                # opponent, e.g. a late batch start frame already pushing
                # this group past the current video length.
                if pg.end > video_length:
                    video_length = pg.end
                    pg.weight *= cfg.decay_rate
                    if trace is not None:
                        trace.add("extend", gi, video_length, pg.weight)
                if trace is not None:
                    trace.checks.append((gi, oi, cost, pg.weight, pg.synopsis_start))
            insort(placed, pg, key=_sort_key)
            if trace is not None:
                trace.add("accept", gi, pg.synopsis_start, pg.weight)
        i += batch
        batch = cfg.batch_size
        start_frame = calculate_start(placed, cfg)
        if trace is not None and i < len(groups):
            trace.add("batch", start_frame)

    synopsis_length = max(pg.end for pg in placed)
    placements = tuple(
        (pg.group, pg.synopsis_start) for pg in sorted(placed, key=_sort_key)
    )
    return SynopsisSchedule(placements=placements, synopsis_length=synopsis_length)


def schedule_to_dict(schedule: SynopsisSchedule) -> dict:
    """Wire format of a schedule: JSON-ready dict.

    Layout: ``{synopsis_length, placements: [{group_index, tube_ids,
    synopsis_start, per_tube_starts}]}``; this is also the format accepted
    from third parties for metric scoring.
    """
    placements = []
    for index, (group, start) in enumerate(schedule.placements):
        placements.append(
            {
                "group_index": index,
                "tube_ids": list(group.tube_ids),
                "synopsis_start": start,
                "per_tube_starts": {str(tid): start + off for tid, off in group.members},
            }
        )
    return {"synopsis_length": schedule.synopsis_length, "placements": placements}


def schedule_from_dict(data: dict, tubes: Mapping[int, Tube]) -> SynopsisSchedule:
    """Rebuild a schedule from its wire format, validated against the tubes.

    Third-party schedules are accepted: group offsets are re-derived from
    ``per_tube_starts`` and the earliest member defines the group start.
    """
    entries = []
    max_end = 0
    for placement in data["placements"]:
        per_tube = {int(tid): int(s) for tid, s in placement["per_tube_starts"].items()}
        if not per_tube:
            raise ValueError("placement without tubes in schedule file")
        for tid in per_tube:
            if tid not in tubes:
                raise ValueError(f"schedule references tube {tid} absent from the tube set")
        start = min(per_tube.values())
        members = tuple(
            sorted(((tid, s - start) for tid, s in per_tube.items()), key=lambda m: (m[1], m[0]))
        )
        source_start = min(tubes[tid].start for tid in per_tube)
        entries.append((TubeGroup(members=members, source_start=source_start), start))
        for tid, s in per_tube.items():
            max_end = max(max_end, s + tubes[tid].length)
    entries.sort(key=lambda e: e[1])
    length = int(data["synopsis_length"])
    if entries and length < max_end:
        offender = next(
            tid
            for placement in data["placements"]
            for tid, s in (
                (int(t), int(v)) for t, v in placement["per_tube_starts"].items()
            )
            if s + tubes[tid].length == max_end
        )
        raise ValueError(
            f"synopsis_length {length} cuts off tube {offender} ending at {max_end}"
        )
    return SynopsisSchedule(placements=tuple(entries), synopsis_length=length)
