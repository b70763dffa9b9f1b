"""
Analyses over preprocessed datasets: venue-set uniqueness, hyperparameter
and encoding-size sweeps, timescale comparison, user-count scaling, and
query timing.

Every analysis returns plain Python data. The ``*_rows`` helpers turn it
into tidy records, one per grid point, for :func:`write_csv` and
:func:`write_json`.

"Top users" always means users ranked by check-in count, descending, with
ties broken by ascending user ID.
"""

from __future__ import annotations

import csv
import json
import logging
import os
import platform
import time
import warnings
from dataclasses import dataclass
from itertools import combinations
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .classify import KnnIndex, jaccard_distance, rank_labels_batch
from .encode import Sampler, encode_many
from .evaluate import cross_validate, report_csv_columns, stratified_folds
from .model import TIMESCALES, MetricsReport, SegmentedDataset

logger = logging.getLogger(__name__)


def _venue_sets(dataset: SegmentedDataset, users: Sequence) -> Dict:
    wanted = set(users)
    sets: Dict = {u: set() for u in users}
    for t in dataset.trajectories:
        if t.user in wanted:
            sets[t.user].update(t.venues)
    return {u: frozenset(s) for u, s in sets.items()}


def _top(dataset: SegmentedDataset, top_n: int) -> List:
    if dataset.trajectory_count == 0:
        raise ValueError("dataset is empty")
    if not 1 <= top_n <= dataset.user_count:
        raise ValueError(f"top_n={top_n} outside [1, {dataset.user_count}]")
    return dataset.top_users(top_n)


def jaccard_matrix(dataset: SegmentedDataset, top_n: int = 25) -> Tuple[List, np.ndarray]:
    """Pairwise Jaccard distances between the top users' venue sets."""
    users = _top(dataset, top_n)
    sets = _venue_sets(dataset, users)
    m = np.zeros((len(users), len(users)))
    for i, j in combinations(range(len(users)), 2):
        m[i, j] = m[j, i] = jaccard_distance(sets[users[i]], sets[users[j]])
    return users, m


@dataclass(frozen=True)
class UniquenessStats:
    mean_jaccard: float
    venue_user_ratio: float
    venue_set_sizes: Dict

    def to_dict(self) -> dict:
        return {"mean_jaccard": self.mean_jaccard,
                "venue_user_ratio": self.venue_user_ratio,
                "venue_set_sizes": {str(u): n for u, n in self.venue_set_sizes.items()}}


def uniqueness_stats(dataset: SegmentedDataset, top_n: int = 25) -> UniquenessStats:
    """Mean off-diagonal Jaccard distance among the top users, plus venue/user ratio."""
    users, m = jaccard_matrix(dataset, top_n)
    n = len(users)
    mean = float(m[np.triu_indices(n, 1)].mean()) if n > 1 else 0.0
    sets = _venue_sets(dataset, users)
    return UniquenessStats(mean, dataset.venue_count / dataset.user_count,
                           {u: len(sets[u]) for u in users})


def venue_distribution(dataset: SegmentedDataset, n_users: int = 10,
                       selection: str = "first") -> Dict:
    """Sorted distinct venue IDs of ``n_users`` users, for box plots.

    ``selection="first"`` takes the lowest user IDs, ``"top"`` the most active.
    """
    if selection == "first":
        users = sorted({t.user for t in dataset.trajectories})[:n_users]
    elif selection == "top":
        users = _top(dataset, n_users)
    else:
        raise ValueError("selection must be 'first' or 'top'")
    return {u: sorted(s) for u, s in _venue_sets(dataset, users).items()}


def sweep_k(dataset: SegmentedDataset, d: int = 1, k_values: Sequence[int] = (1, 3, 5, 7, 9, 11, 13, 15),
            seed: int = 0, sampler=Sampler.MAX, n_folds: int = 3, workers: int = 1) -> Dict[int, float]:
    """Cross-validated error rate (1 - ACC@1) for each ``k``."""
    out = {}
    for k in k_values:
        if k < 1:
            raise ValueError("k must be positive")
        report = cross_validate(dataset, d, sampler, k, (1,), seed, n_folds, workers=workers)
        out[k] = 1.0 - report.acc_at[1]
    return out


def sweep_d(dataset: SegmentedDataset, d_values: Sequence[int] = (1, 2, 3), sampler=Sampler.MAX,
            k: int = 3, seed: int = 0, K_list=(1, 5), n_folds: int = 3,
            workers: int = 1) -> Dict[int, MetricsReport]:
    return {d: cross_validate(dataset, d, sampler, k, K_list, seed, n_folds, workers=workers)
            for d in d_values}


def interval_comparison(datasets: Mapping[str, SegmentedDataset], k: int = 3, d: int = 1,
                        seed: int = 0, sampler=Sampler.MAX, n_users: Optional[int] = None,
                        K_list=(1, 5), workers: int = 1) -> Dict[str, MetricsReport]:
    """Evaluate the three timescales of one source on the same number of users.

    Each dataset is cut to its top ``N`` users, where ``N`` is the smallest
    user count among the three unless ``n_users`` is given.
    """
    missing = [t for t in TIMESCALES if t not in datasets]
    if missing:
        raise ValueError(f"missing timescales: {missing}")
    empty = [t for t in TIMESCALES if datasets[t].user_count == 0]
    if empty:
        raise ValueError(f"no users survive preprocessing at timescale(s) {empty}")
    smallest = min(datasets[t].user_count for t in TIMESCALES)
    n = smallest if n_users is None else n_users
    if n > smallest:
        raise ValueError(f"N={n} exceeds the smallest user count ({smallest})")
    out = {}
    for t in TIMESCALES:
        ds = datasets[t]
        ds = ds.restrict_users(ds.top_users(n))
        out[t] = cross_validate(ds, d, sampler, k, K_list, seed, workers=workers)
    return out


def default_user_grid(user_count: int) -> List[int]:
    grid = []
    n = 10
    while n <= min(user_count, 100_000):
        grid.append(n)
        n *= 10
    return grid


def scaling_curve(dataset: SegmentedDataset, user_counts: Optional[Sequence[int]] = None,
                  k: int = 3, d: int = 1, seed: int = 0, sampler=Sampler.MAX,
                  K_list=(1, 5), workers: int = 1) -> Dict[int, MetricsReport]:
    """Metrics on the top-``N`` users for each ``N`` (default 10, 100, 1000, ...)."""
    counts = default_user_grid(dataset.user_count) if user_counts is None else list(user_counts)
    if counts != sorted(counts):
        raise ValueError("user counts must be ascending")
    out = {}
    for n in counts:
        if n > dataset.user_count:
            warnings.warn(f"skipping N={n}: dataset has {dataset.user_count} users", stacklevel=2)
            continue
        ds = dataset.restrict_users(dataset.top_users(n))
        out[n] = cross_validate(ds, d, sampler, k, K_list, seed, workers=workers)
    return out


def machine_description() -> dict:
    return {"platform": platform.platform(), "machine": platform.machine(),
            "processor": platform.processor(), "cpu_count": os.cpu_count(),
            "python": platform.python_version()}


@dataclass(frozen=True)
class TimingProfile:
    queries: int
    search_space: int
    mean_query_ms: float
    build_ms: float
    runs: int
    machine: dict

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def timing_profile(dataset: SegmentedDataset, k: int = 3, d: int = 1, seed: int = 0,
                   sampler=Sampler.MAX, depth: int = 5, runs: int = 3,
                   workers: int = 1) -> TimingProfile:
    """Warm per-query classification time on fold 0 of a 3-fold split.

    The index is built once and excluded from timing; the reported time is
    the mean over ``runs`` passes of the whole test fold.
    """
    points, labels = encode_many(dataset.trajectories, d, sampler)
    train, test = stratified_folds(labels.tolist(), 3, seed).train_test(0)
    index = KnnIndex(points[train], labels[train])
    queries = points[test]
    elapsed = []
    for _ in range(runs):
        t0 = time.perf_counter()
        rank_labels_batch(index, queries, min(k, index.size), depth, workers)
        elapsed.append(time.perf_counter() - t0)
    mean_ms = 1000.0 * float(np.mean(elapsed)) / len(test)
    return TimingProfile(int(test.size), int(train.size), mean_ms,
                         1000.0 * index.build_seconds, runs, machine_description())


def report_rows(results: Mapping, key: str) -> List[dict]:
    """Tidy rows for a ``{grid value: MetricsReport}`` mapping."""
    rows = []
    for value, report in results.items():
        row = {key: value}
        row.update(report.csv_row())
        rows.append(row)
    return rows


def report_columns(key: str, results: Mapping) -> List[str]:
    ks = sorted({k for r in results.values() for k in r.acc_at}) or [1]
    return [key] + report_csv_columns(ks)


def matrix_rows(users: Sequence, matrix: np.ndarray) -> Tuple[List[str], List[dict]]:
    columns = ["user"] + [str(u) for u in users]
    rows = []
    for u, line in zip(users, matrix):
        row = {"user": u}
        row.update({str(v): float(x) for v, x in zip(users, line)})
        rows.append(row)
    return columns, rows


def write_csv(rows: Sequence[dict], path: str, columns: Sequence[str]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(columns), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({c: row.get(c, "") for c in columns})


def write_json(doc, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")
