"""Partition tubes into groups of related or occluding tubes.

Two tubes belong together when their concurrency-weighted average distance
falls below a distance threshold, or when their summed per-frame overlap
(intersection over minimum) exceeds a collision threshold.  Linked pairs are
merged transitively into maximal groups.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import IO, Sequence

import numpy as np

from .core import Tube, TubeGroup

__all__ = [
    "GroupingConfig",
    "average_distance",
    "weight_f",
    "concurrency_weight",
    "weighted_distance",
    "total_collision",
    "pair_costs",
    "linked",
    "build_groups",
    "pair_table",
    "dump_pair_table",
]


@dataclass(frozen=True)
class GroupingConfig:
    """Thresholds for the pair link predicate.

    ``distance_threshold`` is in pixels (applied to the weighted average
    distance); ``collision_threshold`` is a dimensionless overlap sum.
    """

    distance_threshold: float = 100.0
    collision_threshold: float = 5.0

    def __post_init__(self) -> None:
        if self.distance_threshold <= 0 or self.collision_threshold <= 0:
            raise ValueError("grouping thresholds must be strictly positive")


def _require_gapless(*tubes: Tube) -> None:
    for t in tubes:
        if not t.is_gapless:
            raise ValueError(f"tube {t.id} has frame gaps; interpolate before grouping")


def _overlap(t1: Tube, t2: Tube) -> tuple[int, int, int] | None:
    """Common-frame interval as (n, index into t1, index into t2)."""
    lo = max(t1.start, t2.start)
    hi = min(t1.end, t2.end)
    if lo > hi:
        return None
    return hi - lo + 1, lo - t1.start, lo - t2.start


def pair_costs(t1: Tube, t2: Tube) -> tuple[float | None, float]:
    """Average center distance and total collision of a pair in one pass.

    Returns ``(None, 0.0)`` for non-concurrent tubes: the distance is an
    empty average and the collision sum is empty.
    """
    _require_gapless(t1, t2)
    ov = _overlap(t1, t2)
    if ov is None:
        return None, 0.0
    n, i1, i2 = ov
    l1 = t1.lefts[i1 : i1 + n]
    l2 = t2.lefts[i2 : i2 + n]
    tp1 = t1.tops[i1 : i1 + n]
    tp2 = t2.tops[i2 : i2 + n]
    w1 = t1.widths[i1 : i1 + n]
    w2 = t2.widths[i2 : i2 + n]
    h1 = t1.heights[i1 : i1 + n]
    h2 = t2.heights[i2 : i2 + n]

    dx = (l1 + w1 / 2.0) - (l2 + w2 / 2.0)
    dy = (tp1 + h1 / 2.0) - (tp2 + h2 / 2.0)
    dist = float(np.hypot(dx, dy).mean())

    iw = np.minimum(l1 + w1, l2 + w2) - np.maximum(l1, l2)
    ih = np.minimum(tp1 + h1, tp2 + h2) - np.maximum(tp1, tp2)
    inter = np.clip(iw, 0, None) * np.clip(ih, 0, None)
    smaller = np.minimum(w1 * h1, w2 * h2)
    collision = float((inter / smaller).sum())
    return dist, collision


def average_distance(t1: Tube, t2: Tube) -> float | None:
    """Mean center-to-center distance over common frames; None when none."""
    return pair_costs(t1, t2)[0]


def weight_f(x: float) -> float:
    """Decreasing concurrency weight ``(1 + 1/(1+e^(x/2)))^4`` on [0, 1]."""
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"concurrency ratio {x} outside [0, 1]")
    return (1.0 + 1.0 / (1.0 + math.exp(x / 2.0))) ** 4


def concurrency_weight(t1: Tube, t2: Tube) -> float | None:
    """Weight for a pair from its shared-frame ratio; None if non-concurrent.

    The ratio is the number of common frames over the length of the shorter
    tube, so a short tube fully inside a long one counts as fully concurrent.
    """
    _require_gapless(t1, t2)
    ov = _overlap(t1, t2)
    if ov is None:
        return None
    return weight_f(ov[0] / min(t1.length, t2.length))


def weighted_distance(t1: Tube, t2: Tube) -> float | None:
    """Average distance scaled by the concurrency weight; None if undefined."""
    d = average_distance(t1, t2)
    if d is None:
        return None
    w = concurrency_weight(t1, t2)
    assert w is not None
    return d * w


def total_collision(t1: Tube, t2: Tube) -> float:
    """Sum of per-frame intersection-over-minimum over common frames."""
    return pair_costs(t1, t2)[1]


def linked(t1: Tube, t2: Tube, cfg: GroupingConfig) -> bool:
    """Pair link predicate: close on (weighted) average, or heavily occluding.

    Non-concurrent pairs have an undefined weighted distance and can only be
    linked through the collision term, which is zero for them, so they are
    never linked.
    """
    d, c = pair_costs(t1, t2)
    if c > cfg.collision_threshold:
        return True
    if d is None:
        return False
    w = concurrency_weight(t1, t2)
    assert w is not None
    return d * w < cfg.distance_threshold


class _UnionFind:
    def __init__(self, items: Sequence[int]):
        self.parent = {i: i for i in items}

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def build_groups(tubes: Sequence[Tube], cfg: GroupingConfig) -> list[TubeGroup]:
    """Merge linked pairs transitively into groups; singletons otherwise.

    Equivalent to connected components of the pair link graph.  The result
    partitions the input (every tube id in exactly one group) and is sorted
    by group start in the source video.
    """
    ids = [t.id for t in tubes]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate tube ids in grouping input")

    uf = _UnionFind(ids)
    for i in range(len(tubes)):
        for j in range(i + 1, len(tubes)):
            if linked(tubes[i], tubes[j], cfg):
                uf.union(tubes[i].id, tubes[j].id)

    by_id = {t.id: t for t in tubes}
    components: dict[int, list[int]] = {}
    for tid in ids:
        components.setdefault(uf.find(tid), []).append(tid)

    groups = []
    for member_ids in components.values():
        start = min(by_id[tid].start for tid in member_ids)
        members = tuple(
            sorted(
                ((tid, by_id[tid].start - start) for tid in member_ids),
                key=lambda m: (m[1], m[0]),
            )
        )
        groups.append(TubeGroup(members=members, source_start=start))
    groups.sort(key=lambda g: (g.source_start, g.members[0][0]))
    return groups


def pair_table(tubes: Sequence[Tube]) -> list[dict[str, object]]:
    """Per-pair (D, W, DW, C) rows for threshold tuning."""
    rows: list[dict[str, object]] = []
    for i in range(len(tubes)):
        for j in range(i + 1, len(tubes)):
            t1, t2 = tubes[i], tubes[j]
            d, c = pair_costs(t1, t2)
            w = concurrency_weight(t1, t2)
            rows.append(
                {
                    "tube_a": t1.id,
                    "tube_b": t2.id,
                    "distance": d,
                    "weight": w,
                    "weighted_distance": None if d is None or w is None else d * w,
                    "collision": c,
                }
            )
    return rows


def dump_pair_table(tubes: Sequence[Tube], stream: IO[str]) -> None:
    """Write the pair cost table as CSV (empty cells for undefined values)."""
    writer = csv.writer(stream)
    writer.writerow(["tube_a", "tube_b", "distance", "weight", "weighted_distance", "collision"])
    for row in pair_table(tubes):
        writer.writerow(
            [
                row["tube_a"],
                row["tube_b"],
                "" if row["distance"] is None else f"{row['distance']:.6f}",
                "" if row["weight"] is None else f"{row['weight']:.6f}",
                "" if row["weighted_distance"] is None else f"{row['weighted_distance']:.6f}",
                f"{row['collision']:.6f}",
            ]
        )
