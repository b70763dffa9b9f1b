"""
Synthetic check-in corpora with a planted identifying venue per user.

Every user shares a common pool of venues with everyone else and also owns a
few private venues, the first of which acts as their home. A user's first
check-in always goes to a shared venue. After first-appearance relabeling,
each user's private venues therefore receive IDs above the shared ones they
had already visited.

When a home is planted, the user's first day runs: one shared venue, then
every other private venue, then home. Home is therefore the last private
venue the user discovers and carries the largest private ID. Every later day
contains at least one home visit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Dict, List, Tuple, Union

import numpy as np

from .model import CheckinRecord

Range = Union[int, Tuple[int, int]]


def _as_range(value: Range) -> Tuple[int, int]:
    lo, hi = (value, value) if isinstance(value, int) else tuple(value)
    return int(lo), int(hi)


@dataclass(frozen=True)
class SyntheticSpec:
    """Shape of a generated corpus.

    ``trajectories_per_user`` counts active days per user.
    ``checkins_per_trajectory`` and ``day_gap`` are inclusive ranges or fixed
    ints. ``day_gap`` is the spacing between consecutive active days.
    With ``plant_home`` set and ``p_private > 0``, every active day includes
    at least one visit to the user's home venue; the first day is stretched
    if it is too short to hold the discovery sequence.
    """

    n_users: int = 100
    venues_shared: int = 50
    venues_private_per_user: int = 3
    trajectories_per_user: Range = 12
    checkins_per_trajectory: Range = (3, 8)
    p_private: float = 0.4
    seed: int = 7
    plant_home: bool = True
    day_gap: Range = 1
    start: str = "2010-01-04"

    def __post_init__(self):
        for name in ("n_users", "venues_shared", "venues_private_per_user"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        for name in ("trajectories_per_user", "checkins_per_trajectory", "day_gap"):
            lo, hi = _as_range(getattr(self, name))
            if lo < 1 or hi < lo:
                raise ValueError(f"{name} must be a range of positive ints, got {(lo, hi)}")
        if not 0.0 <= self.p_private <= 1.0:
            raise ValueError("p_private must be within [0, 1]")

    @classmethod
    def from_dict(cls, data: dict) -> "SyntheticSpec":
        data = dict(data)
        for name in ("trajectories_per_user", "checkins_per_trajectory", "day_gap"):
            if isinstance(data.get(name), list):
                data[name] = tuple(data[name])
        return cls(**data)

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in self.__dict__.items()}


@dataclass
class SyntheticCorpus:
    records: List[CheckinRecord]
    ledger: Dict[str, object] = field(default_factory=dict)


def _user_key(i: int) -> str:
    return str(1000 + i)


def generate_synthetic(spec: SyntheticSpec) -> SyntheticCorpus:
    """Emit raw records for ``spec`` plus a ledger of what was emitted."""
    rng = np.random.default_rng(spec.seed)
    t_lo, t_hi = _as_range(spec.trajectories_per_user)
    c_lo, c_hi = _as_range(spec.checkins_per_trajectory)
    g_lo, g_hi = _as_range(spec.day_gap)
    origin = int(datetime.fromisoformat(spec.start).replace(tzinfo=timezone.utc).timestamp()) // 86400

    records: List[CheckinRecord] = []
    per_user_days: Dict[str, int] = {}
    venues_seen = set()
    private_visits = 0
    days_with_private = 0
    for i in range(spec.n_users):
        user = _user_key(i)
        private = [f"p{i}-{j}" for j in range(spec.venues_private_per_user)]
        n_days = int(rng.integers(t_lo, t_hi + 1))
        per_user_days[user] = n_days
        day = origin + int(rng.integers(0, 7))
        for t in range(n_days):
            n = int(rng.integers(c_lo, c_hi + 1))
            planted = spec.plant_home and spec.p_private > 0
            prefix = []
            if t == 0:
                prefix = [f"s{int(rng.integers(spec.venues_shared))}"]
                if planted:
                    prefix += private[1:] + private[:1]
                n = max(n, len(prefix))
            picks = prefix + [
                private[int(rng.integers(len(private)))] if rng.random() < spec.p_private
                else f"s{int(rng.integers(spec.venues_shared))}"
                for _ in range(n - len(prefix))
            ]
            if planted and private[0] not in picks:
                picks[int(rng.integers(n))] = private[0]
            seconds = np.sort(rng.choice(np.arange(8 * 3600, 22 * 3600), size=n, replace=False))
            n_private = sum(1 for v in picks if v.startswith("p"))
            private_visits += n_private
            days_with_private += n_private > 0
            for s, v in zip(seconds, picks):
                records.append(CheckinRecord(user, day * 86400 + int(s), v))
                venues_seen.add(v)
            day += int(rng.integers(g_lo, g_hi + 1))

    ledger = {
        "checkin_count": len(records),
        "unique_users": spec.n_users,
        "unique_venues": len(venues_seen),
        "trajectories": sum(per_user_days.values()),
        "trajectories_per_user": per_user_days,
        "private_visits": private_visits,
        "trajectories_with_private": days_with_private,
    }
    return SyntheticCorpus(records, ledger)
