"""Evaluation metrics for a synopsis run.

Compression is measured by the frame condensation ratio and its normalized
variant, information loss by the collision area, event-order preservation by
the chronological disorder ratio, and extraction quality by the missed
object rate.  Dataset-side statistics (density, coverage, minimum achievable
condensation) make the compression numbers comparable across videos.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .core import SynopsisSchedule, Tube, VideoMeta, tube_placements

__all__ = [
    "MetricsReport",
    "frame_condensation_ratio",
    "collision_area",
    "chronological_disorder_ratio",
    "normalized_fr",
    "missed_object_rate",
    "dataset_stats",
    "collision_level",
    "score_schedule",
    "format_report",
    "format_sweep_table",
]


def frame_condensation_ratio(synopsis_length: int, source_length: int) -> float:
    """Synopsis frames over source frames; 1 means no compression."""
    if source_length <= 0:
        raise ValueError("source length must be positive")
    if synopsis_length <= 0:
        raise ValueError("synopsis length must be positive")
    return synopsis_length / source_length


def _pair_intersection_sum(t1: Tube, s1: int, t2: Tube, s2: int) -> int:
    """Total intersection pixels of two placed tubes over synopsis time."""
    lo = max(s1, s2)
    hi = min(s1 + t1.length, s2 + t2.length) - 1
    if lo > hi:
        return 0
    n = hi - lo + 1
    i1 = lo - s1
    i2 = lo - s2
    l1, l2 = t1.lefts[i1 : i1 + n], t2.lefts[i2 : i2 + n]
    tp1, tp2 = t1.tops[i1 : i1 + n], t2.tops[i2 : i2 + n]
    w1, w2 = t1.widths[i1 : i1 + n], t2.widths[i2 : i2 + n]
    h1, h2 = t1.heights[i1 : i1 + n], t2.heights[i2 : i2 + n]
    iw = np.minimum(l1 + w1, l2 + w2) - np.maximum(l1, l2)
    ih = np.minimum(tp1 + h1, tp2 + h2) - np.maximum(tp1, tp2)
    return int((np.clip(iw, 0, None) * np.clip(ih, 0, None)).sum())


def collision_area(
    schedule: SynopsisSchedule,
    tubes: Mapping[int, Tube],
    exclude_intra_group: bool = False,
) -> int:
    """Total overlapping pixels across all box pairs and synopsis frames.

    All pairs of distinct tubes count, including pairs inside one group
    (their source-time occlusions travel with them); set
    ``exclude_intra_group`` to drop same-group pairs for analysis.
    """
    starts = tube_placements(schedule)
    group_of: dict[int, int] = {}
    for gi, (group, _) in enumerate(schedule.placements):
        for tid, _ in group.members:
            group_of[tid] = gi
    ids = sorted(starts)
    total = 0
    for a in range(len(ids)):
        for b in range(a + 1, len(ids)):
            ta, tb = ids[a], ids[b]
            if exclude_intra_group and group_of[ta] == group_of[tb]:
                continue
            total += _pair_intersection_sum(tubes[ta], starts[ta], tubes[tb], starts[tb])
    return total


def chronological_disorder_ratio(
    schedule: SynopsisSchedule, tubes: Mapping[int, Tube]
) -> float | None:
    """Fraction of tube pairs whose synopsis order inverts their source order.

    Ties in either ordering do not count as disorder.  Undefined (None) for
    fewer than two tubes.
    """
    starts = tube_placements(schedule)
    ids = sorted(starts)
    n = len(ids)
    if n < 2:
        return None
    inversions = 0
    for a in range(n):
        for b in range(a + 1, n):
            src = tubes[ids[a]].start - tubes[ids[b]].start
            syn = starts[ids[a]] - starts[ids[b]]
            if src * syn < 0:
                inversions += 1
    return inversions / (n * (n - 1) // 2)


def normalized_fr(fr: float, coverage: float, density: float) -> float:
    """Condensation ratio normalized by scene coverage and density.

    ``density`` is a fraction (0.029 for a video whose boxes fill 2.9% of
    its pixel-time volume), so the denominator ``100 * density`` recovers
    the percent figure the dataset tables quote.
    """
    if density <= 0:
        raise ValueError("density must be positive")
    return fr * coverage / (100.0 * density)


def missed_object_rate(ground_truth_boxes: int, missed_boxes: int) -> float:
    """Share of annotated boxes lost to frames wrongly declared empty."""
    if ground_truth_boxes <= 0:
        raise ValueError("ground truth box count must be positive")
    if not 0 <= missed_boxes <= ground_truth_boxes:
        raise ValueError("missed count must lie in [0, total]")
    return missed_boxes / ground_truth_boxes


def dataset_stats(
    tubes: Sequence[Tube], meta: VideoMeta
) -> tuple[float, float, float]:
    """(density percent, coverage fraction, minimum achievable FR).

    Density is the share of the video's pixel-time volume occupied by boxes;
    coverage the share of frame pixels ever covered by any box; minimum FR
    the longest tube's length over the video length.
    """
    if not tubes:
        return 0.0, 0.0, 0.0
    total_area = sum(box.area for tube in tubes for box in tube.boxes)
    density = total_area / (meta.width * meta.height * meta.frame_count) * 100.0
    canvas = np.zeros((meta.height, meta.width), dtype=bool)
    for tube in tubes:
        for box in tube.boxes:
            canvas[box.top : box.bottom, box.left : box.right] = True
    coverage = float(canvas.sum()) / (meta.width * meta.height)
    minimum_fr = max(t.length for t in tubes) / meta.frame_count
    return density, coverage, minimum_fr


def collision_level(ca: int, tubes: Sequence[Tube]) -> float:
    """Collision area as a fraction of the total tube pixels."""
    if not tubes:
        raise ValueError("tube set is empty")
    total = sum(box.area for tube in tubes for box in tube.boxes)
    return ca / total


@dataclass(frozen=True)
class MetricsReport:
    fr: float
    ca: int
    cdr: float | None
    nfr: float
    density: float  # percent
    coverage: float  # fraction
    minimum_fr: float
    collision_level: float
    mor: float | None = None

    def to_dict(self) -> dict:
        return {
            "fr": self.fr,
            "ca": self.ca,
            "cdr": self.cdr,
            "nfr": self.nfr,
            "density_percent": self.density,
            "coverage": self.coverage,
            "minimum_fr": self.minimum_fr,
            "collision_level": self.collision_level,
            "mor": self.mor,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def score_schedule(
    schedule: SynopsisSchedule,
    tubes: Sequence[Tube],
    meta: VideoMeta,
    exclude_intra_group: bool = False,
    mor: float | None = None,
) -> MetricsReport:
    """Full metric suite for one schedule against one tube set."""
    by_id = {t.id: t for t in tubes}
    ca = collision_area(schedule, by_id, exclude_intra_group=exclude_intra_group)
    density, coverage, minimum_fr = dataset_stats(tubes, meta)
    fr = frame_condensation_ratio(schedule.synopsis_length, meta.frame_count)
    return MetricsReport(
        fr=fr,
        ca=ca,
        cdr=chronological_disorder_ratio(schedule, by_id),
        nfr=normalized_fr(fr, coverage, density / 100.0),
        density=density,
        coverage=coverage,
        minimum_fr=minimum_fr,
        collision_level=collision_level(ca, tubes),
        mor=mor,
    )


def _fmt(value: float | None, digits: int = 3) -> str:
    return "-" if value is None else f"{value:.{digits}f}"


def format_report(report: MetricsReport) -> str:
    """Aligned plain-text rendering of one report."""
    rows = [
        ("FR", _fmt(report.fr)),
        ("CA (pixels)", str(report.ca)),
        ("CA (x10^7)", f"{report.ca / 1e7:.3f}"),
        ("CDR", _fmt(report.cdr)),
        ("NFR", _fmt(report.nfr)),
        ("MOR", _fmt(report.mor, 4)),
        ("Density (%)", f"{report.density:.2f}"),
        ("Coverage", f"{report.coverage:.2f}"),
        ("Minimum FR", _fmt(report.minimum_fr)),
        ("Collision level", f"{report.collision_level:.4f}"),
    ]
    width = max(len(name) for name, _ in rows)
    return "\n".join(f"{name:<{width}}  {value}" for name, value in rows)


def format_sweep_table(rows: Sequence[tuple[float, MetricsReport]]) -> str:
    """Threshold-sweep table: one line per collision threshold."""
    header = (
        f"{'threshold':>10}  {'level':>7}  {'CA(x10^7)':>10}  "
        f"{'FR':>6}  {'NFR':>6}  {'CDR':>6}"
    )
    lines = [header, "-" * len(header)]
    for threshold, report in rows:
        lines.append(
            f"{threshold:>10.4f}  {report.collision_level:>7.4f}  "
            f"{report.ca / 1e7:>10.4f}  {report.fr:>6.3f}  {report.nfr:>6.3f}  "
            f"{_fmt(report.cdr):>6}"
        )
    return "\n".join(lines)
