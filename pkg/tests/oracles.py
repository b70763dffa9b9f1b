"""Slow, obviously-correct reference implementations used only by the tests."""

from datetime import date, datetime, timezone
from itertools import combinations

import numpy as np


def brute_knn(points, labels, q, k):
    """Linear scan over the raw input.

    Ties are ranked by coordinates, then label, then input position, the
    same total order the index promises. Returns input positions and
    squared distances of the ``k`` nearest.
    """
    points = np.asarray(points, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    d2 = ((points - np.asarray(q, dtype=np.int64)) ** 2).sum(axis=1)
    keys = [np.arange(len(points)), labels] + [points[:, j] for j in range(points.shape[1] - 1, -1, -1)] + [d2]
    order = np.lexsort(keys)[:k]
    return order.tolist(), d2[order].tolist()


def best_subset(venues, d):
    """Exhaustive argmax-sum over all size-d subsets of the distinct venues."""
    distinct = sorted(set(venues))
    best = max(combinations(distinct, d), key=sum)
    return tuple(sorted(best, reverse=True))


def iso_week_key(day: date) -> str:
    """ISO week from the Thursday rule, without calling isocalendar()."""
    thursday = date.fromordinal(day.toordinal() + 3 - day.weekday())
    week = (thursday.toordinal() - date(thursday.year, 1, 1).toordinal()) // 7 + 1
    return f"{thursday.year:04d}-W{week:02d}"


def naive_macro(preds, truths):
    classes = sorted(set(truths))
    precisions, recalls = [], []
    for c in classes:
        tp = fp = fn = 0
        for p, t in zip(preds, truths):
            if p == c and t == c:
                tp += 1
            elif p == c:
                fp += 1
            elif t == c:
                fn += 1
        precisions.append(tp / (tp + fp) if tp + fp else 0.0)
        recalls.append(tp / (tp + fn) if tp + fn else 0.0)
    p = sum(precisions) / len(classes)
    r = sum(recalls) / len(classes)
    f1 = 0.0 if p + r == 0 else 2 * p * r / (p + r)
    return p, r, f1


def naive_acc(ranked, truths, k):
    hits = 0
    for row, t in zip(ranked, truths):
        for label in row[:k]:
            if label == t:
                hits += 1
                break
    return hits / len(truths)


def _bucket(t, timescale):
    d = datetime.fromtimestamp(t, tz=timezone.utc).date()
    if timescale == "daily":
        return d.isoformat()
    if timescale == "weekly":
        return iso_week_key(d)
    return f"{d.year:04d}-{d.month:02d}"


def reference_pipeline(records, timescale, min_checkins, min_trajs):
    """Counts from a plain dict-of-lists pass; returns the post-filter counts."""
    groups = {}
    for r in records:
        groups.setdefault((r.user, _bucket(r.time, timescale)), []).append(r)
    kept = {key: rs for key, rs in groups.items() if len(rs) >= min_checkins}
    per_user = {}
    for user, _ in kept:
        per_user[user] = per_user.get(user, 0) + 1
    kept = {key: rs for key, rs in kept.items() if per_user[key[0]] >= min_trajs}
    venues = {r.venue for rs in kept.values() for r in rs}
    return {
        "checkin_count": sum(len(rs) for rs in kept.values()),
        "venue_count": len(venues),
        "trajectory_count": len(kept),
        "user_count": len({u for u, _ in kept}),
    }


def brute_jaccard_predict(train_sets, query, k):
    scored = []
    for i, (s, label) in enumerate(train_sets):
        union = len(s | query)
        dist = (union - len(s & query)) / union
        scored.append((dist, i, label))
    scored.sort()
    top = scored[:k]
    votes, sums = {}, {}
    for dist, _, label in top:
        votes[label] = votes.get(label, 0) + 1
        sums[label] = sums.get(label, 0.0) + dist
    nearest = top[0][2]
    return min(votes, key=lambda l: (-votes[l], sums[l], l != nearest, l))
