"""
Preprocessing: raw check-ins to a filtered, relabeled SegmentedDataset.

Stages run in this order::

    segment -> filter_trajectories -> filter_users -> relabel -> sort

Calendar buckets are computed in UTC. Weeks are ISO-8601 weeks (Monday
start, keyed ``YYYY-Www``), months are calendar months (``YYYY-MM``) and days
are calendar dates (``YYYY-MM-DD``).
"""

from __future__ import annotations

import json
import logging
import os
import warnings
from collections import Counter
from dataclasses import dataclass, replace
from datetime import date, timedelta
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

from .model import (TIMESCALES, CheckinRecord, IdMaps, SegmentedDataset,
                    SubTrajectory)

logger = logging.getLogger(__name__)

DEFAULT_MIN_CHECKINS = {"daily": 3, "weekly": 5, "monthly": 10}
RELABEL_ORDERS = ("user_time", "user_venue_time")

_EPOCH = date(1970, 1, 1)


@dataclass(frozen=True)
class PipelineConfig:
    """Preprocessing knobs.

    ``min_checkins`` defaults to 3/5/10 for daily/weekly/monthly.
    ``relabel_order`` picks the traversal used for first-appearance
    numbering: ``"user_time"`` visits each user's check-ins chronologically,
    ``"user_venue_time"`` visits them grouped by raw venue key.
    """

    timescale: str = "daily"
    min_checkins: Optional[int] = None
    min_trajectories_per_user: int = 10
    relabel: bool = True
    relabel_order: str = "user_time"

    def __post_init__(self):
        if self.timescale not in TIMESCALES:
            raise ValueError(f"timescale must be one of {TIMESCALES}, got {self.timescale!r}")
        if self.min_checkins is None:
            object.__setattr__(self, "min_checkins", DEFAULT_MIN_CHECKINS[self.timescale])
        if self.min_checkins < 1:
            raise ValueError("min_checkins must be >= 1")
        if self.min_trajectories_per_user < 1:
            raise ValueError("min_trajectories_per_user must be >= 1")
        if self.relabel_order not in RELABEL_ORDERS:
            raise ValueError(f"relabel_order must be one of {RELABEL_ORDERS}")


def key_order(keys: Iterable) -> Callable:
    """Sort key for raw IDs: numeric if every key is an integer literal, else lexical."""
    keys = list(keys)

    def numeric(k):
        if isinstance(k, int):
            return True
        try:
            int(k)
            return True
        except (TypeError, ValueError):
            return False

    if all(numeric(k) for k in keys):
        return lambda k: (int(k), str(k))
    return str


class _IntervalKeys:
    """Caches bucket keys per UTC day; millions of records share few days."""

    def __init__(self, timescale: str):
        if timescale not in TIMESCALES:
            raise ValueError(f"unknown timescale {timescale!r}")
        self.timescale = timescale
        self._cache: Dict[int, str] = {}

    def __call__(self, t: int) -> str:
        day = t // 86400
        key = self._cache.get(day)
        if key is None:
            d = _EPOCH + timedelta(days=day)
            if self.timescale == "daily":
                key = d.isoformat()
            elif self.timescale == "weekly":
                year, week, _ = d.isocalendar()
                key = f"{year:04d}-W{week:02d}"
            else:
                key = f"{d.year:04d}-{d.month:02d}"
            self._cache[day] = key
        return key


def interval_key(t: int, timescale: str) -> str:
    return _IntervalKeys(timescale)(t)


def segment(records: Sequence[CheckinRecord], timescale: str) -> List[SubTrajectory]:
    """Split check-ins into one sub-trajectory per (user, calendar bucket).

    Output is ordered by user (see :func:`key_order`) then bucket; inside a
    bucket check-ins are time-sorted, ties keep input order.
    """
    keyer = _IntervalKeys(timescale)
    buckets: Dict[Tuple, List[CheckinRecord]] = {}
    for r in records:
        buckets.setdefault((r.user, keyer(r.time)), []).append(r)
    user_key = key_order({u for u, _ in buckets})
    out = []
    for user, ikey in sorted(buckets, key=lambda b: (user_key(b[0]), b[1])):
        checkins = sorted(buckets[(user, ikey)], key=lambda c: c.time)
        out.append(SubTrajectory(user, ikey, tuple(checkins)))
    return out


def filter_trajectories(trajs: Sequence[SubTrajectory], min_checkins: int) -> List[SubTrajectory]:
    return [t for t in trajs if len(t) >= min_checkins]


def filter_users(trajs: Sequence[SubTrajectory], min_trajectories: int) -> List[SubTrajectory]:
    """Drop every trajectory of users with fewer than ``min_trajectories``.

    Applied once; no fix-point iteration is needed since nothing downstream
    removes trajectories.
    """
    counts = Counter(t.user for t in trajs)
    return [t for t in trajs if counts[t.user] >= min_trajectories]


def relabel(trajs: Sequence[SubTrajectory],
            order: str = "user_time") -> Tuple[List[SubTrajectory], IdMaps]:
    """Replace raw user and venue keys with sequential integers from 0.

    All check-ins are visited sorted by (raw user key, time) and both users
    and venues are numbered by first appearance in that walk. A venue that
    a user discovers late therefore tends to carry a large ID, and a venue
    already seen by an earlier user keeps that user's number.
    """
    if order not in RELABEL_ORDERS:
        raise ValueError(f"relabel order must be one of {RELABEL_ORDERS}")
    flat = [(ti, ci, c) for ti, t in enumerate(trajs) for ci, c in enumerate(t.checkins)]
    user_key = key_order({c.user for _, _, c in flat})
    if order == "user_time":
        walk = sorted(flat, key=lambda x: (user_key(x[2].user), x[2].time))
    else:
        venue_key = key_order({c.venue for _, _, c in flat})
        walk = sorted(flat, key=lambda x: (user_key(x[2].user), venue_key(x[2].venue), x[2].time))

    users: Dict = {}
    venues: Dict = {}
    for _, _, c in walk:
        if c.user not in users:
            users[c.user] = len(users)
        if c.venue not in venues:
            venues[c.venue] = len(venues)

    out = []
    for t in trajs:
        u = users[t.user]
        checkins = tuple(CheckinRecord(u, c.time, venues[c.venue], c.lat, c.lon)
                         for c in t.checkins)
        out.append(SubTrajectory(u, t.interval_key, checkins))
    return out, IdMaps(tuple(users), tuple(venues))


def build_dataset(records: Iterable[CheckinRecord], config: PipelineConfig) -> SegmentedDataset:
    records = list(records)
    trajs = segment(records, config.timescale)
    logger.info("segmented %d check-ins into %d %s sub-trajectories",
                len(records), len(trajs), config.timescale)
    trajs = filter_trajectories(trajs, config.min_checkins)
    trajs = filter_users(trajs, config.min_trajectories_per_user)
    id_maps = IdMaps()
    if config.relabel:
        trajs, id_maps = relabel(trajs, config.relabel_order)
    user_key = key_order({t.user for t in trajs})
    trajs.sort(key=lambda t: (user_key(t.user), t.checkins[0].time))
    if not trajs:
        warnings.warn("no trajectories survived filtering; dataset is empty", stacklevel=2)
    return SegmentedDataset(config.timescale, tuple(trajs), id_maps)


def restore_original_ids(dataset: SegmentedDataset) -> List[CheckinRecord]:
    """Map a relabeled dataset's check-ins back to raw keys."""
    users, venues = dataset.id_maps.users, dataset.id_maps.venues
    return [replace(c, user=users[c.user], venue=venues[c.venue]) for c in dataset.records()]


def save_dataset(dataset: SegmentedDataset, path: str) -> Tuple[str, str]:
    """Write ``<path>.tsv`` (one check-in per line) and ``<path>.json`` (counts + id maps).

    TSV columns: dense user, interval key, epoch seconds, dense venue.
    Coordinates are not persisted. Output is byte-identical for equal input.
    """
    tsv_path, json_path = f"{path}.tsv", f"{path}.json"
    with open(tsv_path, "w", encoding="utf-8", newline="\n") as fh:
        for t in dataset.trajectories:
            for c in t.checkins:
                fh.write(f"{c.user}\t{t.interval_key}\t{c.time}\t{c.venue}\n")
    meta = dataset.summary()
    meta["id_maps"] = dataset.id_maps.to_dict()
    with open(json_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return tsv_path, json_path


def _maybe_int(text: str):
    try:
        return int(text)
    except ValueError:
        return text


def load_dataset(path: str) -> SegmentedDataset:
    """Read a dataset written by :func:`save_dataset` (``path`` without suffix)."""
    if path.endswith(".tsv") or path.endswith(".json"):
        path = os.path.splitext(path)[0]
    with open(f"{path}.json", encoding="utf-8") as fh:
        meta = json.load(fh)
    trajs: List[SubTrajectory] = []
    current: Optional[Tuple] = None
    checkins: List[CheckinRecord] = []
    with open(f"{path}.tsv", encoding="utf-8") as fh:
        for line in fh:
            user, ikey, time, venue = line.rstrip("\n").split("\t")
            rec = CheckinRecord(_maybe_int(user), int(time), _maybe_int(venue))
            if (rec.user, ikey) != current:
                if checkins:
                    trajs.append(SubTrajectory(current[0], current[1], tuple(checkins)))
                current, checkins = (rec.user, ikey), []
            checkins.append(rec)
    if checkins:
        trajs.append(SubTrajectory(current[0], current[1], tuple(checkins)))
    return SegmentedDataset(
        meta["timescale"], tuple(trajs), IdMaps.from_dict(meta["id_maps"]),
        meta["user_count"], meta["venue_count"], meta["checkin_count"],
        meta["trajectory_count"])
