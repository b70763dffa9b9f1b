"""
Metrics and stratified k-fold cross-validation.

Macro precision and recall average over every class present in the ground
truth. A class that is never predicted contributes precision 0. Macro-F1 is
the harmonic mean of Macro-P and Macro-R, not the mean of per-class F1.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from collections import Counter
from dataclasses import dataclass
from typing import Dict, Hashable, List, Sequence, Tuple

import numpy as np

from .classify import JaccardIndex, KnnIndex, rank_labels_batch
from .encode import Sampler, encode_many
from .model import FoldMetrics, MetricsReport, SegmentedDataset, harmonic_mean

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ConfusionCounts:
    """Per-class true positive, false positive and false negative tallies."""

    tp: Dict[Hashable, int]
    fp: Dict[Hashable, int]
    fn: Dict[Hashable, int]
    truth_classes: Tuple[Hashable, ...]

    @property
    def classes(self) -> Tuple[Hashable, ...]:
        return tuple(self.tp)


def confusion_counts(predictions: Sequence, truths: Sequence) -> ConfusionCounts:
    if len(predictions) != len(truths):
        raise ValueError(f"{len(predictions)} predictions for {len(truths)} truths")
    classes = list(dict.fromkeys([*truths, *predictions]))
    tp = dict.fromkeys(classes, 0)
    fp = dict.fromkeys(classes, 0)
    fn = dict.fromkeys(classes, 0)
    for p, t in zip(predictions, truths):
        if p == t:
            tp[t] += 1
        else:
            fp[p] += 1
            fn[t] += 1
    return ConfusionCounts(tp, fp, fn, tuple(dict.fromkeys(truths)))


def macro_metrics(counts: ConfusionCounts) -> Tuple[float, float, float]:
    """``(Macro-P, Macro-R, Macro-F1)`` over the ground-truth classes."""
    classes = counts.truth_classes
    if not classes:
        raise ValueError("no classes to average over")
    precision = []
    recall = []
    for c in classes:
        tp, fp, fn = counts.tp[c], counts.fp[c], counts.fn[c]
        precision.append(tp / (tp + fp) if tp + fp else 0.0)
        recall.append(tp / (tp + fn) if tp + fn else 0.0)
    p = math.fsum(precision) / len(classes)
    r = math.fsum(recall) / len(classes)
    return p, r, harmonic_mean(p, r)


def acc_at_k(ranked: Sequence[Sequence], truths: Sequence, k: int) -> float:
    """Share of rows whose truth shows up in the first ``k`` ranked labels."""
    if len(ranked) != len(truths):
        raise ValueError(f"{len(ranked)} rankings for {len(truths)} truths")
    if not truths:
        raise ValueError("no rows to score")
    hits = sum(1 for row, t in zip(ranked, truths) if t in row[:k])
    return hits / len(truths)


@dataclass(frozen=True)
class FoldAssignment:
    fold_of: np.ndarray
    n_folds: int
    seed: int

    def train_test(self, fold: int) -> Tuple[np.ndarray, np.ndarray]:
        test = self.fold_of == fold
        return np.nonzero(~test)[0], np.nonzero(test)[0]


def stratified_folds(labels: Sequence, n_folds: int = 3, seed: int = 0) -> FoldAssignment:
    """Deal each user's trajectories round-robin into folds after a seeded shuffle.

    Each user also gets a seeded starting fold, so the remainder trajectories
    don't all pile into fold 0.
    """
    if n_folds < 2:
        raise ValueError("need at least two folds")
    labels = list(labels)
    by_label: Dict = {}
    for i, l in enumerate(labels):
        by_label.setdefault(l, []).append(i)
    short = [l for l, idx in by_label.items() if len(idx) < n_folds]
    if short:
        raise ValueError(f"{len(short)} labels have fewer than {n_folds} samples, e.g. {short[0]!r}")
    rng = np.random.default_rng(seed)
    fold_of = np.empty(len(labels), dtype=np.int64)
    for l in sorted(by_label):
        idx = np.array(by_label[l], dtype=np.int64)
        idx = idx[rng.permutation(idx.size)]
        start = int(rng.integers(n_folds))
        fold_of[idx] = (start + np.arange(idx.size)) % n_folds
    return FoldAssignment(fold_of, n_folds, seed)


def _fold_metrics(ranked, truths, ks, elapsed, search_space) -> FoldMetrics:
    preds = [r[0] for r in ranked]
    p, r, f1 = macro_metrics(confusion_counts(preds, truths))
    return FoldMetrics(
        acc_at={kk: acc_at_k(ranked, truths, kk) for kk in ks},
        macro_p=p, macro_r=r, macro_f1=f1,
        query_count=len(truths), search_space_size=search_space,
        mean_query_time=1000.0 * elapsed / len(truths),
    )


def cross_validate(dataset: SegmentedDataset, d: int = 1, sampler=Sampler.MAX, k: int = 3,
                   K_list: Sequence[int] = (1, 5), seed: int = 0, n_folds: int = 3,
                   metric: str = "euclidean", workers: int = 1,
                   folds: Sequence[int] = None) -> MetricsReport:
    """Stratified k-fold evaluation of the k-NN linker on ``dataset``.

    Per fold the training trajectories are encoded and indexed, every test
    trajectory is ranked, and the metrics are computed. Timing covers
    classification only; index construction is excluded. ``metric="jaccard"``
    classifies raw venue sets instead of encodings (``d`` and ``sampler``
    unused). ``folds`` limits evaluation to a subset of fold numbers.
    """
    if dataset.trajectory_count == 0:
        raise ValueError("cannot cross-validate an empty dataset")
    if metric not in ("euclidean", "jaccard"):
        raise ValueError(f"unknown metric {metric!r}")
    ks = sorted(set(K_list))
    depth = max(ks)
    trajs = dataset.trajectories
    truths_all = np.array(dataset.labels, dtype=np.int64)
    assignment = stratified_folds(truths_all.tolist(), n_folds, seed)
    if metric == "euclidean":
        points, _ = encode_many(trajs, d, sampler)
    else:
        sets = [frozenset(t.venues) for t in trajs]

    results = []
    for fold in (range(n_folds) if folds is None else folds):
        train, test = assignment.train_test(fold)
        k_eff = min(k, train.size)
        truths = truths_all[test].tolist()
        if metric == "euclidean":
            index = KnnIndex(points[train], truths_all[train])
            t0 = time.perf_counter()
            ranked = rank_labels_batch(index, points[test], k_eff, depth, workers)
            elapsed = time.perf_counter() - t0
        else:
            index = JaccardIndex([(sets[i], int(truths_all[i])) for i in train])
            t0 = time.perf_counter()
            ranked = [index.rank(sets[i], k_eff, depth) for i in test]
            elapsed = time.perf_counter() - t0
        fm = _fold_metrics(ranked, truths, ks, elapsed, int(train.size))
        logger.info("fold %d: ACC@1=%.4f Macro-F1=%.4f (%d queries, %.3f ms/query)",
                    fold, fm.acc_at[ks[0]], fm.macro_f1, fm.query_count, fm.mean_query_time)
        results.append(fm)
    report = MetricsReport.from_folds(results)
    report.check()
    return report


def report_csv_columns(ks: Sequence[int]) -> List[str]:
    return ([f"acc_at_{k}" for k in sorted(ks)]
            + ["macro_p", "macro_r", "macro_f1", "macro_f1_fold_mean",
               "mean_query_time_ms", "query_count", "search_space_size", "n_folds"])


def write_report_json(report: MetricsReport, path: str, extra: dict = None) -> None:
    doc = dict(extra or {})
    doc["report"] = report.to_dict()
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_reports_csv(rows: Sequence[Tuple[dict, MetricsReport]], path: str,
                      key_columns: Sequence[str] = ()) -> None:
    """One CSV row per report, ``key_columns`` (e.g. ``d``) first."""
    ks = sorted({k for _, r in rows for k in r.acc_at}) or [1, 5]
    columns = list(key_columns) + report_csv_columns(ks)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        for keys, report in rows:
            row = dict(keys)
            row.update(report.csv_row())
            writer.writerow({c: row.get(c, "") for c in columns})
