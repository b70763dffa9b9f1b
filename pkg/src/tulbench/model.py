"""
Shared domain types for trajectory-user linking.

Everything here is immutable once built, so instances can be handed to
worker threads without copying.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

UserKey = Union[str, int]
VenueKey = Union[str, int]

TIMESCALES = ("daily", "weekly", "monthly")


@dataclass(frozen=True)
class CheckinRecord:
    """One visit event: ``user`` checked in at ``venue`` at ``time``.

    ``time`` is integer seconds since the Unix epoch (UTC). Keys are opaque
    strings straight out of a raw file and dense integers after relabeling.
    """

    user: UserKey
    time: int
    venue: VenueKey
    lat: Optional[float] = None
    lon: Optional[float] = None

    def __post_init__(self):
        if self.lat is not None and not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude out of range: {self.lat}")
        if self.lon is not None and not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"longitude out of range: {self.lon}")

    @property
    def datetime(self) -> datetime:
        return datetime.fromtimestamp(self.time, tz=timezone.utc)

    def to_dict(self) -> dict:
        return {"user": self.user, "time": self.time, "venue": self.venue,
                "lat": self.lat, "lon": self.lon}

    @classmethod
    def from_dict(cls, data: Mapping) -> "CheckinRecord":
        return cls(data["user"], int(data["time"]), data["venue"],
                   data.get("lat"), data.get("lon"))


@dataclass(frozen=True)
class SubTrajectory:
    """Check-ins of one user inside one calendar bucket, oldest first."""

    user: UserKey
    interval_key: str
    checkins: Tuple[CheckinRecord, ...]

    def __post_init__(self):
        object.__setattr__(self, "checkins", tuple(self.checkins))
        times = [c.time for c in self.checkins]
        if any(c.user != self.user for c in self.checkins):
            raise ValueError("sub-trajectory mixes users")
        if any(a > b for a, b in zip(times, times[1:])):
            raise ValueError("check-ins must be sorted by time")

    def __len__(self) -> int:
        return len(self.checkins)

    @property
    def venues(self) -> List[VenueKey]:
        return [c.venue for c in self.checkins]

    def to_dict(self) -> dict:
        return {"user": self.user, "interval_key": self.interval_key,
                "checkins": [c.to_dict() for c in self.checkins]}

    @classmethod
    def from_dict(cls, data: Mapping) -> "SubTrajectory":
        return cls(data["user"], data["interval_key"],
                   tuple(CheckinRecord.from_dict(c) for c in data["checkins"]))


@dataclass(frozen=True)
class EncodedTrajectory:
    """A ``d``-vector of venue IDs standing in for a sub-trajectory."""

    vector: Tuple[int, ...]
    label: int

    def __post_init__(self):
        object.__setattr__(self, "vector", tuple(int(v) for v in self.vector))
        if not 1 <= len(self.vector) <= 3:
            raise ValueError(f"encoding dimension must be 1..3, got {len(self.vector)}")
        if any(v < 0 for v in self.vector):
            raise ValueError("venue IDs must be non-negative")
        if any(a < b for a, b in zip(self.vector, self.vector[1:])):
            raise ValueError("encoding must be ordered descending")

    @property
    def d(self) -> int:
        return len(self.vector)

    def to_dict(self) -> dict:
        return {"vector": list(self.vector), "label": self.label}

    @classmethod
    def from_dict(cls, data: Mapping) -> "EncodedTrajectory":
        return cls(tuple(data["vector"]), data["label"])


@dataclass(frozen=True)
class IdMaps:
    """Bijections between raw keys and dense IDs.

    ``users[i]`` is the raw key that received dense user ID ``i``; same for
    venues. Empty lists mean no relabeling happened.
    """

    users: Tuple[UserKey, ...] = ()
    venues: Tuple[VenueKey, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "users", tuple(self.users))
        object.__setattr__(self, "venues", tuple(self.venues))

    def user_index(self) -> Dict[UserKey, int]:
        return {k: i for i, k in enumerate(self.users)}

    def venue_index(self) -> Dict[VenueKey, int]:
        return {k: i for i, k in enumerate(self.venues)}

    def to_dict(self) -> dict:
        return {"users": list(self.users), "venues": list(self.venues)}

    @classmethod
    def from_dict(cls, data: Mapping) -> "IdMaps":
        return cls(tuple(data.get("users", ())), tuple(data.get("venues", ())))


@dataclass(frozen=True)
class SegmentedDataset:
    """A preprocessed dataset: one timescale, filtered and relabeled.

    Counts are recomputed from ``trajectories`` on construction; passing
    inconsistent counts raises.
    """

    timescale: str
    trajectories: Tuple[SubTrajectory, ...]
    id_maps: IdMaps = field(default_factory=IdMaps)
    user_count: int = -1
    venue_count: int = -1
    checkin_count: int = -1
    trajectory_count: int = -1

    def __post_init__(self):
        if self.timescale not in TIMESCALES:
            raise ValueError(f"unknown timescale {self.timescale!r}")
        object.__setattr__(self, "trajectories", tuple(self.trajectories))
        users = set()
        venues = set()
        n_checkins = 0
        for t in self.trajectories:
            users.add(t.user)
            venues.update(t.venues)
            n_checkins += len(t)
        actual = {"user_count": len(users), "venue_count": len(venues),
                  "checkin_count": n_checkins,
                  "trajectory_count": len(self.trajectories)}
        for name, value in actual.items():
            given = getattr(self, name)
            if given == -1:
                object.__setattr__(self, name, value)
            elif given != value:
                raise ValueError(f"{name}={given} disagrees with data ({value})")

    @property
    def labels(self) -> List[UserKey]:
        return [t.user for t in self.trajectories]

    def user_checkin_counts(self) -> Dict[UserKey, int]:
        counts: Dict[UserKey, int] = {}
        for t in self.trajectories:
            counts[t.user] = counts.get(t.user, 0) + len(t)
        return counts

    def top_users(self, n: int) -> List[UserKey]:
        """The ``n`` most active users by check-in count, ties by user ID."""
        counts = self.user_checkin_counts()
        ranked = sorted(counts, key=lambda u: (-counts[u], u))
        return ranked[:n]

    def restrict_users(self, users) -> "SegmentedDataset":
        """Keep only the trajectories of ``users``. IDs are not renumbered."""
        keep = set(users)
        return SegmentedDataset(
            self.timescale,
            tuple(t for t in self.trajectories if t.user in keep),
            self.id_maps,
        )

    def records(self) -> List[CheckinRecord]:
        return [c for t in self.trajectories for c in t.checkins]

    def summary(self) -> dict:
        return {"timescale": self.timescale, "checkin_count": self.checkin_count,
                "venue_count": self.venue_count,
                "trajectory_count": self.trajectory_count,
                "user_count": self.user_count}

    def to_dict(self) -> dict:
        out = self.summary()
        out["id_maps"] = self.id_maps.to_dict()
        out["trajectories"] = [t.to_dict() for t in self.trajectories]
        return out

    @classmethod
    def from_dict(cls, data: Mapping) -> "SegmentedDataset":
        return cls(
            data["timescale"],
            tuple(SubTrajectory.from_dict(t) for t in data["trajectories"]),
            IdMaps.from_dict(data.get("id_maps", {})),
            data["user_count"], data["venue_count"],
            data["checkin_count"], data["trajectory_count"],
        )


@dataclass(frozen=True)
class FoldMetrics:
    acc_at: Dict[int, float]
    macro_p: float
    macro_r: float
    macro_f1: float
    query_count: int = 0
    search_space_size: int = 0
    mean_query_time: float = 0.0

    def to_dict(self) -> dict:
        return {"acc_at": {str(k): v for k, v in sorted(self.acc_at.items())},
                "macro_p": self.macro_p, "macro_r": self.macro_r,
                "macro_f1": self.macro_f1, "query_count": self.query_count,
                "search_space_size": self.search_space_size,
                "mean_query_time": self.mean_query_time}

    @classmethod
    def from_dict(cls, data: Mapping) -> "FoldMetrics":
        return cls({int(k): v for k, v in data["acc_at"].items()},
                   data["macro_p"], data["macro_r"], data["macro_f1"],
                   data.get("query_count", 0), data.get("search_space_size", 0),
                   data.get("mean_query_time", 0.0))


def harmonic_mean(p: float, r: float) -> float:
    return 0.0 if p + r == 0 else 2.0 * p * r / (p + r)


@dataclass(frozen=True)
class MetricsReport:
    """Cross-validated classification quality and timing.

    ``macro_p``, ``macro_r`` and every ``acc_at`` entry are unweighted means
    over folds. ``macro_f1`` is the harmonic mean of the two averaged macros,
    while ``macro_f1_fold_mean`` is the plain average of per-fold F1 values.
    ``mean_query_time`` is in milliseconds; ``query_count`` sums test
    queries over folds and ``search_space_size`` is the largest training
    set any fold searched.
    """

    acc_at: Dict[int, float]
    macro_p: float
    macro_r: float
    macro_f1: float
    per_fold: Tuple[FoldMetrics, ...] = ()
    mean_query_time: float = 0.0
    query_count: int = 0
    search_space_size: int = 0
    macro_f1_fold_mean: float = math.nan

    def __post_init__(self):
        object.__setattr__(self, "per_fold", tuple(self.per_fold))
        object.__setattr__(self, "acc_at", dict(sorted(self.acc_at.items())))
        if math.isnan(self.macro_f1_fold_mean):
            object.__setattr__(self, "macro_f1_fold_mean", self.macro_f1)

    def check(self) -> None:
        """Raise ``AssertionError`` if the report breaks its own invariants."""
        ks = sorted(self.acc_at)
        for a, b in zip(ks, ks[1:]):
            assert self.acc_at[a] <= self.acc_at[b], "ACC@k must grow with k"
        for v in [*self.acc_at.values(), self.macro_p, self.macro_r, self.macro_f1]:
            assert 0.0 <= v <= 1.0
        assert abs(self.macro_f1 - harmonic_mean(self.macro_p, self.macro_r)) <= 1e-12

    @classmethod
    def from_folds(cls, folds: Sequence[FoldMetrics]) -> "MetricsReport":
        if not folds:
            raise ValueError("no folds to aggregate")
        n = len(folds)
        ks = sorted(folds[0].acc_at)
        acc = {k: math.fsum(f.acc_at[k] for f in folds) / n for k in ks}
        p = math.fsum(f.macro_p for f in folds) / n
        r = math.fsum(f.macro_r for f in folds) / n
        queries = sum(f.query_count for f in folds)
        total_ms = math.fsum(f.mean_query_time * f.query_count for f in folds)
        return cls(
            acc_at=acc, macro_p=p, macro_r=r, macro_f1=harmonic_mean(p, r),
            per_fold=tuple(folds),
            mean_query_time=total_ms / queries if queries else 0.0,
            query_count=queries,
            search_space_size=max(f.search_space_size for f in folds),
            macro_f1_fold_mean=math.fsum(f.macro_f1 for f in folds) / n,
        )

    def metric_fields(self) -> dict:
        """Everything except wall-clock timing; stable across reruns."""
        d = self.to_dict()
        d.pop("mean_query_time")
        for fold in d["per_fold"]:
            fold.pop("mean_query_time")
        return d

    def to_dict(self) -> dict:
        return {"acc_at": {str(k): v for k, v in self.acc_at.items()},
                "macro_p": self.macro_p, "macro_r": self.macro_r,
                "macro_f1": self.macro_f1,
                "macro_f1_fold_mean": self.macro_f1_fold_mean,
                "mean_query_time": self.mean_query_time,
                "query_count": self.query_count,
                "search_space_size": self.search_space_size,
                "per_fold": [f.to_dict() for f in self.per_fold]}

    @classmethod
    def from_dict(cls, data: Mapping) -> "MetricsReport":
        return cls(
            acc_at={int(k): v for k, v in data["acc_at"].items()},
            macro_p=data["macro_p"], macro_r=data["macro_r"],
            macro_f1=data["macro_f1"],
            per_fold=tuple(FoldMetrics.from_dict(f) for f in data.get("per_fold", ())),
            mean_query_time=data.get("mean_query_time", 0.0),
            query_count=data.get("query_count", 0),
            search_space_size=data.get("search_space_size", 0),
            macro_f1_fold_mean=data.get("macro_f1_fold_mean", math.nan),
        )

    def csv_row(self) -> dict:
        row = {f"acc_at_{k}": v for k, v in self.acc_at.items()}
        row.update(macro_p=self.macro_p, macro_r=self.macro_r,
                   macro_f1=self.macro_f1,
                   macro_f1_fold_mean=self.macro_f1_fold_mean,
                   mean_query_time_ms=self.mean_query_time,
                   query_count=self.query_count,
                   search_space_size=self.search_space_size,
                   n_folds=len(self.per_fold))
        return row
