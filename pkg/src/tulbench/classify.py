"""
Exact k-nearest-neighbour classification over integer encodings.

Training points are stored in a canonical order (lexicographic by
coordinates, then label). A neighbour's ``train_index`` is its position in
that order, and every neighbour list is sorted by
``(squared distance, train_index)``, so results do not depend on the order
the training set was supplied in.

Squared Euclidean distances are exact int64. For ``d == 1`` the index is
the sorted value array and lookups are binary searches. For ``d >= 2`` a
``scipy.spatial.cKDTree`` proposes candidates that are then re-ranked
exactly. If there is a tie at the k-th place, an exact ball query collects
every point tied at that boundary.
"""

from __future__ import annotations

import math
import struct
import time
from dataclasses import dataclass
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree

from .model import EncodedTrajectory

# float64 squared distances stay exact below this bound for d <= 3
MAX_COORDINATE = 2 ** 25

INDEX_MAGIC = b"TULKNN\x00\x00"
INDEX_VERSION = 1
_HEADER = struct.Struct("<8sHBQ")


@dataclass(frozen=True)
class Neighbor:
    label: int
    sq_distance: int
    train_index: int

    @property
    def distance(self) -> float:
        return math.sqrt(self.sq_distance)


class KnnIndex:
    """Immutable exact nearest-neighbour index over labelled integer points.

    Build from raw arrays, or from ``EncodedTrajectory`` objects with
    :func:`build_index`.
    """

    def __init__(self, points, labels):
        t0 = time.perf_counter()
        points = np.asarray(points, dtype=np.int64)
        labels = np.asarray(labels, dtype=np.int64)
        if points.ndim != 2 or points.shape[0] == 0:
            raise ValueError("training set must be a non-empty (n, d) array")
        if points.shape[1] not in (1, 2, 3):
            raise ValueError(f"dimension must be 1..3, got {points.shape[1]}")
        if labels.shape != (points.shape[0],):
            raise ValueError("one label per training point required")
        if points.min() < 0 or points.max() >= MAX_COORDINATE:
            raise ValueError(f"coordinates must lie in [0, {MAX_COORDINATE})")

        keys = [labels] + [points[:, j] for j in range(points.shape[1] - 1, -1, -1)]
        order = np.lexsort(keys)
        self.points = points[order]
        self.labels = labels[order]
        self.source_positions = order
        self.points.setflags(write=False)
        self.labels.setflags(write=False)
        self.source_positions.setflags(write=False)
        self._tree = None
        if self.dimension == 1:
            self._values = self.points[:, 0]
        else:
            self._tree = cKDTree(self.points.astype(np.float64))
        self.build_seconds = time.perf_counter() - t0

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def dimension(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.size

    def _check(self, queries, k: int) -> np.ndarray:
        q = np.asarray(queries, dtype=np.int64)
        if q.ndim == 1:
            q = q.reshape(1, -1) if q.shape[0] == self.dimension else q.reshape(-1, 1)
        if q.ndim != 2 or q.shape[1] != self.dimension:
            raise ValueError(f"query dimension {q.shape[-1]} does not match index ({self.dimension})")
        if not 1 <= k <= self.size:
            raise ValueError(f"k must be in [1, {self.size}], got {k}")
        return q

    def query(self, queries, k: int, workers: int = 1) -> Tuple[np.ndarray, np.ndarray]:
        """The ``k`` nearest neighbours of each query row.

        Returns ``(train_index, sq_distance)``: two ``(n_queries, k)`` int64
        arrays sorted by ``(sq_distance, train_index)`` along each row.
        """
        q = self._check(queries, k)
        if q.shape[0] == 0:
            empty = np.empty((0, k), dtype=np.int64)
            return empty, empty.copy()
        if self.dimension == 1:
            return self._query_sorted(q[:, 0], k)
        return self._query_tree(q, k, workers)

    def _sq(self, pos: np.ndarray, q: np.ndarray) -> np.ndarray:
        diff = self.points[pos] - q[:, None, :]
        return np.einsum("ijk,ijk->ij", diff, diff)

    @staticmethod
    def _rank(pos, d2):
        order = np.lexsort((pos, d2), axis=1)
        return np.take_along_axis(pos, order, 1), np.take_along_axis(d2, order, 1)

    def _query_sorted(self, q: np.ndarray, k: int):
        v = self._values
        n = self.size
        start = np.searchsorted(v, q, side="left")
        pos = start[:, None] + np.arange(-k, k)[None, :]
        valid = (pos >= 0) & (pos < n)
        safe = np.clip(pos, 0, n - 1)
        d2 = (v[safe] - q[:, None]) ** 2
        big = np.iinfo(np.int64).max
        d2 = np.where(valid, d2, big)
        pos = np.where(valid, safe, big)
        pos, d2 = self._rank(pos, d2)
        pos, d2 = pos[:, :k].copy(), d2[:, :k].copy()

        # everything within the k-th distance must be exactly k points
        delta = np.rint(np.sqrt(d2[:, -1].astype(np.float64))).astype(np.int64)
        lo = np.searchsorted(v, q - delta, side="left")
        hi = np.searchsorted(v, q + delta, side="right")
        for r in np.nonzero(hi - lo != k)[0]:
            pos[r], d2[r] = self._sorted_boundary(q[r], k, d2[r, -1], delta[r], lo[r], hi[r])
        return pos, d2

    def _sorted_boundary(self, q, k, bound, delta, lo, hi):
        v = self._values
        if delta == 0:
            chosen = np.arange(lo, lo + k)
        else:
            left_end = np.searchsorted(v, q - delta, side="right")
            right_start = np.searchsorted(v, q + delta, side="left")
            inner = np.arange(left_end, right_start)
            edge = np.concatenate([np.arange(lo, left_end), np.arange(right_start, hi)])
            chosen = np.concatenate([inner, edge[:k - inner.size]])
        d2 = (v[chosen] - q) ** 2
        order = np.lexsort((chosen, d2))
        return chosen[order], d2[order]

    def _query_tree(self, q: np.ndarray, k: int, workers: int):
        n = self.size
        m = min(k + 1, n)
        _, pos = self._tree.query(q.astype(np.float64), k=m, workers=workers)
        pos = np.asarray(pos, dtype=np.int64).reshape(q.shape[0], m)
        pos, d2 = self._rank(pos, self._sq(pos, q))
        if m == k:
            return pos, d2
        tied = np.nonzero(d2[:, k - 1] == d2[:, k])[0]
        pos, d2 = pos[:, :k].copy(), d2[:, :k].copy()
        for r in tied:
            pos[r], d2[r] = self._tree_boundary(q[r], k, d2[r, -1], workers)
        return pos, d2

    def _tree_boundary(self, q, k, bound, workers):
        radius = math.sqrt(bound) * (1 + 1e-9) + 1e-6
        cand = np.asarray(self._tree.query_ball_point(q.astype(np.float64), radius,
                                                      workers=workers), dtype=np.int64)
        diff = self.points[cand] - q
        d2 = np.einsum("ij,ij->i", diff, diff)
        keep = d2 <= bound
        cand, d2 = cand[keep], d2[keep]
        order = np.lexsort((cand, d2))[:k]
        return cand[order], d2[order]

    def save(self, path: str) -> None:
        """Versioned binary dump: header, canonical points, labels, source positions."""
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(INDEX_MAGIC, INDEX_VERSION, self.dimension, self.size))
            fh.write(np.ascontiguousarray(self.points, dtype="<i8").tobytes())
            fh.write(np.ascontiguousarray(self.labels, dtype="<i8").tobytes())
            fh.write(np.ascontiguousarray(self.source_positions, dtype="<i8").tobytes())

    @classmethod
    def load(cls, path: str) -> "KnnIndex":
        with open(path, "rb") as fh:
            raw = fh.read()
        if len(raw) < _HEADER.size:
            raise ValueError(f"{path}: truncated index header")
        magic, version, d, n = _HEADER.unpack_from(raw)
        if magic != INDEX_MAGIC:
            raise ValueError(f"{path}: not a k-NN index file")
        if version != INDEX_VERSION:
            raise ValueError(f"{path}: unsupported index version {version}")
        if d not in (1, 2, 3):
            raise ValueError(f"{path}: bad dimension {d}")
        expected = _HEADER.size + 8 * n * (d + 2)
        if len(raw) != expected:
            raise ValueError(f"{path}: expected {expected} bytes for {n} points, found {len(raw)}")
        body = np.frombuffer(raw, dtype="<i8", offset=_HEADER.size).astype(np.int64)
        points = body[:n * d].reshape(n, d)
        labels = body[n * d:n * (d + 1)]
        source = body[n * (d + 1):]
        index = cls(points, labels)
        if not np.array_equal(index.points, points):
            raise ValueError(f"{path}: points are not in canonical order")
        index.source_positions = source
        index.source_positions.setflags(write=False)
        return index


def build_index(encodings: Sequence[EncodedTrajectory]) -> KnnIndex:
    if not encodings:
        raise ValueError("cannot build an index from an empty training set")
    dims = {e.d for e in encodings}
    if len(dims) != 1:
        raise ValueError(f"mixed encoding dimensions: {sorted(dims)}")
    points = np.array([e.vector for e in encodings], dtype=np.int64)
    labels = np.array([e.label for e in encodings], dtype=np.int64)
    return KnnIndex(points, labels)


def query_knn(index: KnnIndex, q, k: int) -> List[Neighbor]:
    pos, d2 = index.query(np.asarray(q, dtype=np.int64).reshape(1, -1), k)
    labels = index.labels[pos[0]]
    return [Neighbor(int(l), int(s), int(p)) for l, s, p in zip(labels, d2[0], pos[0])]


def vote(labels: Sequence[int], distances: Sequence[float]) -> int:
    """Majority label of a neighbour list ordered nearest first.

    Ties go to the smaller summed distance, then to the label of the single
    nearest neighbour, then to the smaller label.
    """
    counts: Dict[int, int] = {}
    sums: Dict[int, float] = {}
    for l, dist in zip(labels, distances):
        counts[l] = counts.get(l, 0) + 1
        sums[l] = sums.get(l, 0.0) + dist
    nearest = labels[0]
    return min(counts, key=lambda l: (-counts[l], sums[l], l != nearest, l))


def _ranked(labels: Sequence[int], distances: Sequence[float], k: int, depth: int) -> List[int]:
    """Label ranking over a neighbour pool whose first ``k`` entries are the voters."""
    voters, voter_dist = labels[:k], distances[:k]
    top = vote(voters, voter_dist)
    counts: Dict[int, int] = {}
    closest: Dict[int, float] = {}
    for l, dist in zip(voters, voter_dist):
        counts[l] = counts.get(l, 0) + 1
        closest.setdefault(l, dist)
    rest = sorted((l for l in counts if l != top), key=lambda l: (-counts[l], closest[l], l))
    out = [top] + rest
    seen = set(out)
    for l in labels[k:]:
        if len(out) >= depth:
            break
        if l not in seen:
            seen.add(l)
            out.append(l)
    return out[:depth]


def predict(index: KnnIndex, q, k: int = 3) -> int:
    pos, d2 = index.query(np.asarray(q, dtype=np.int64).reshape(1, -1), k)
    return vote(index.labels[pos[0]].tolist(), np.sqrt(d2[0]).tolist())


def rank_labels(index: KnnIndex, q, k: int = 3, depth: int = 5) -> List[int]:
    """Up to ``depth`` distinct labels, best first.

    Rank 1 is :func:`predict`. The other voters' labels follow by vote
    count, then distance of their nearest member, then label value. If the
    voters show fewer than ``depth`` labels, the walk continues outward
    through farther neighbours and appends new labels as they appear.
    """
    return rank_labels_batch(index, np.asarray(q, dtype=np.int64).reshape(1, -1), k, depth)[0]


def predict_batch(index: KnnIndex, queries, k: int = 3, workers: int = 1) -> np.ndarray:
    pos, d2 = index.query(queries, k, workers)
    labels = index.labels[pos].tolist()
    dists = np.sqrt(d2).tolist()
    return np.array([vote(l, d) for l, d in zip(labels, dists)], dtype=np.int64)


def rank_labels_batch(index: KnnIndex, queries, k: int = 3, depth: int = 5,
                      workers: int = 1) -> List[List[int]]:
    if depth < 1:
        raise ValueError("ranking depth must be >= 1")
    queries = index._check(queries, k)
    n = index.size
    pool = min(n, max(k, k + 4 * (depth - 1)))
    out: List[Optional[List[int]]] = [None] * queries.shape[0]
    todo = np.arange(queries.shape[0])
    while todo.size:
        pos, d2 = index.query(queries[todo], pool, workers)
        labels = index.labels[pos].tolist()
        dists = np.sqrt(d2).tolist()
        retry = []
        for row, l, dist in zip(todo.tolist(), labels, dists):
            ranked = _ranked(l, dist, k, depth)
            if len(ranked) < depth and pool < n:
                retry.append(row)
            else:
                out[row] = ranked
        todo = np.array(retry, dtype=np.int64)
        pool = min(n, pool * 4)
    return out


def jaccard_distance(a: FrozenSet, b: FrozenSet) -> float:
    union = len(a | b)
    if union == 0:
        return 0.0
    return (union - len(a & b)) / union


class JaccardIndex:
    """Set-based k-NN using Jaccard distance, with an inverted venue index.

    Only training sets that share a venue with the query are scored; the
    rest sit at distance 1 and are taken in training order when needed.
    """

    def __init__(self, train_sets: Sequence[Tuple[Iterable[int], int]]):
        if not train_sets:
            raise ValueError("cannot build an index from an empty training set")
        self.sets = [frozenset(s) for s, _ in train_sets]
        self.labels = [l for _, l in train_sets]
        self._postings: Dict[int, List[int]] = {}
        for i, s in enumerate(self.sets):
            for v in s:
                self._postings.setdefault(v, []).append(i)

    def __len__(self) -> int:
        return len(self.sets)

    def neighbors(self, query_set, k: int) -> List[Tuple[float, int]]:
        """``(distance, train_index)`` pairs of the ``k`` nearest sets."""
        query_set = frozenset(query_set)
        if not query_set:
            raise ValueError("query set is empty")
        if not 1 <= k <= len(self.sets):
            raise ValueError(f"k must be in [1, {len(self.sets)}], got {k}")
        overlap: Dict[int, int] = {}
        for v in query_set:
            for i in self._postings.get(v, ()):
                overlap[i] = overlap.get(i, 0) + 1
        scored = []
        for i, inter in overlap.items():
            union = len(query_set) + len(self.sets[i]) - inter
            scored.append(((union - inter) / union, i))
        scored.sort()
        if len(scored) < k:
            filler = (i for i in range(len(self.sets)) if i not in overlap)
            for i in filler:
                scored.append((1.0, i))
                if len(scored) == k:
                    break
            scored.sort()
        return scored[:k]

    def predict(self, query_set, k: int = 3) -> int:
        nb = self.neighbors(query_set, k)
        return vote([self.labels[i] for _, i in nb], [dist for dist, _ in nb])

    def rank(self, query_set, k: int = 3, depth: int = 5) -> List[int]:
        """Same ranking rule as :func:`rank_labels`, on Jaccard neighbours."""
        n = len(self.sets)
        pool = min(n, max(k, k + 4 * (depth - 1)))
        while True:
            nb = self.neighbors(query_set, pool)
            ranked = _ranked([self.labels[i] for _, i in nb], [dist for dist, _ in nb], k, depth)
            if len(ranked) >= depth or pool == n:
                return ranked
            pool = min(n, pool * 4)


def predict_jaccard(train_sets: Sequence[Tuple[Iterable[int], int]], query_set, k: int = 3) -> int:
    return JaccardIndex(train_sets).predict(query_set, k)
