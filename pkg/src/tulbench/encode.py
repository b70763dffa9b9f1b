"""
Fixed-length encodings of sub-trajectories built from their venue IDs.

The default ``max`` sampler keeps the ``d`` largest distinct venue IDs, which
is also the size-``d`` subset with the largest sum. ``min`` and ``median``
exist for ablations. Every encoding is stored in descending order.
"""

from __future__ import annotations

from enum import Enum
from typing import FrozenSet, Iterable, List, Sequence, Tuple

import numpy as np

from .model import EncodedTrajectory, SubTrajectory

MAX_DIMENSION = 3


class Sampler(str, Enum):
    MAX = "max"
    MIN = "min"
    MEDIAN = "median"


def _check_dimension(d: int) -> None:
    if d not in (1, 2, 3):
        raise ValueError(f"d must be 1, 2 or 3, got {d!r}")


def select_venues(venues: Iterable[int], d: int, sampler=Sampler.MAX) -> Tuple[int, ...]:
    """Pick ``d`` venue IDs from ``venues`` and return them descending.

    Duplicates collapse first. With fewer than ``d`` distinct IDs all of them
    are taken and the last one picked is repeated to fill the vector.
    The median sampler takes the ``d`` ranks nearest the middle rank of the
    sorted distinct IDs, preferring the lower rank on ties.
    """
    _check_dimension(d)
    sampler = Sampler(sampler)
    distinct = sorted(set(int(v) for v in venues))
    if not distinct:
        raise ValueError("cannot encode an empty trajectory")
    if sampler is Sampler.MAX:
        picked = distinct[::-1][:d]
    elif sampler is Sampler.MIN:
        picked = distinct[:d]
    else:
        mid = (len(distinct) - 1) / 2
        ranks = sorted(range(len(distinct)), key=lambda i: (abs(i - mid), i))[:d]
        picked = [distinct[i] for i in ranks]
    picked = picked + [picked[-1]] * (d - len(picked))
    return tuple(sorted(picked, reverse=True))


def encode(traj: SubTrajectory, d: int, sampler=Sampler.MAX) -> EncodedTrajectory:
    return EncodedTrajectory(select_venues(traj.venues, d, sampler), traj.user)


def venue_set(traj: SubTrajectory) -> FrozenSet[int]:
    return frozenset(traj.venues)


def encode_many(trajs: Sequence[SubTrajectory], d: int,
                sampler=Sampler.MAX) -> Tuple[np.ndarray, np.ndarray]:
    """Encode a batch into ``(points, labels)``: an ``(n, d)`` int64 array and its labels."""
    _check_dimension(d)
    points = np.empty((len(trajs), d), dtype=np.int64)
    for i, t in enumerate(trajs):
        points[i] = select_venues(t.venues, d, sampler)
    labels = np.fromiter((t.user for t in trajs), dtype=np.int64, count=len(trajs))
    return points, labels


def as_encodings(points: np.ndarray, labels: Sequence[int]) -> List[EncodedTrajectory]:
    return [EncodedTrajectory(tuple(p), int(l)) for p, l in zip(points.tolist(), labels)]
