"""Small hand-checkable cases, one or two asserts each, across every module."""

import csv
import io
import json
import os
from collections import Counter

import numpy as np
import pytest

from tulbench import cli
from tulbench.analyze import (interval_comparison, jaccard_matrix, scaling_curve, sweep_d,
                              sweep_k, timing_profile, uniqueness_stats)
from tulbench.classify import JaccardIndex, KnnIndex, predict, query_knn, rank_labels, vote
from tulbench.encode import select_venues, venue_set
from tulbench.evaluate import (acc_at_k, confusion_counts, cross_validate, macro_metrics,
                               stratified_folds)
from tulbench.ingest import ColumnSchema, parse_canonical, parse_with_schema, summarize
from tulbench.model import CheckinRecord, IdMaps, SegmentedDataset, SubTrajectory
from tulbench.pipeline import (PipelineConfig, build_dataset, filter_trajectories, filter_users,
                               relabel, segment)
from tulbench.synthetic import SyntheticSpec, generate_synthetic

from conftest import rec, ts, write_canonical

CONFIGS = os.path.join(os.path.dirname(__file__), os.pardir, "configs")


def _dataset(per_user_venues, timescale="daily"):
    """Dense dataset straight from ``{user: [[venues of day 0], [venues of day 1], ...]}``."""
    trajs = []
    for u, days in per_user_venues.items():
        for day, venues in enumerate(days):
            base = 1_262_304_000 + day * 86400
            trajs.append(SubTrajectory(u, f"d{day:03d}", tuple(
                CheckinRecord(u, base + i, v) for i, v in enumerate(venues))))
    return SegmentedDataset(timescale, tuple(trajs), IdMaps())


# ingest

def test_canonical_line_field_mapping():
    r, = parse_canonical(io.BytesIO(b"0\t2010-10-19T23:55:27Z\t30.23\t-97.79\t22847\n"))
    assert (r.user, r.time, r.venue) == ("0", ts("2010-10-19T23:55:27Z"), "22847")


def test_empty_input():
    assert list(parse_canonical(io.BytesIO(b""))) == []
    s = summarize([])
    assert (s.checkin_count, s.unique_venues, s.unique_users) == (0, 0, 0)


def test_csv_with_header_one_row():
    schema = ColumnSchema(user=0, venue=1, time=2, delimiter=",", has_header=True)
    recs = list(parse_with_schema(io.BytesIO(b"uid,placeid,datetime\nu1,p1,2010-01-01T00:00:00\n"),
                                  schema))
    assert len(recs) == 1 and recs[0].venue == "p1"


def test_summary_three_records():
    recs = [CheckinRecord("a", 0, "x"), CheckinRecord("a", 1, "y"), CheckinRecord("b", 2, "z")]
    s = summarize(recs)
    assert (s.checkin_count, s.unique_venues, s.unique_users) == (3, 3, 2)


def test_summary_matches_generator_ledger():
    corpus = generate_synthetic(SyntheticSpec(n_users=30, trajectories_per_user=6, seed=4))
    assert 900 <= len(corpus.records) <= 1100
    s = summarize(corpus.records)
    assert (s.checkin_count, s.unique_venues, s.unique_users) == (
        corpus.ledger["checkin_count"], corpus.ledger["unique_venues"], corpus.ledger["unique_users"])


# pipeline

def test_day_boundary_straddle():
    trajs = segment([rec("u", "2010-01-04T23:59:00Z", "a"), rec("u", "2010-01-05T00:01:00Z", "b")],
                    "daily")
    assert len(trajs) == 2


def test_sunday_monday_split_weekly():
    trajs = segment([rec("u", "2010-01-03T12:00:00Z", "a"), rec("u", "2010-01-04T12:00:00Z", "b")],
                    "weekly")
    assert [t.interval_key for t in trajs] == ["2009-W53", "2010-W01"]


def test_filter_trajectories_by_length():
    trajs = _dataset({0: [[1, 2], [1, 2, 3], [1, 2, 3, 4]]}).trajectories
    assert [len(t) for t in filter_trajectories(trajs, 3)] == [3, 4]
    assert filter_trajectories(trajs, 1) == list(trajs)


def test_filter_trajectories_histogram_tail(planted_corpus):
    trajs = segment(planted_corpus.records, "daily")
    hist = Counter(len(t) for t in trajs)
    for m in (1, 4, 6, 9):
        assert len(filter_trajectories(trajs, m)) == sum(c for n, c in hist.items() if n >= m)


def test_filter_users_threshold():
    trajs = _dataset({0: [[1]] * 10, 1: [[2]] * 9}).trajectories
    assert {t.user for t in filter_users(trajs, 10)} == {0}
    assert filter_users(trajs, 1) == list(trajs)


def test_surviving_users_match_planted_counts():
    corpus = generate_synthetic(SyntheticSpec(n_users=40, trajectories_per_user=(5, 15), seed=8))
    ds = build_dataset(corpus.records, PipelineConfig("daily"))
    planted = {u for u, n in corpus.ledger["trajectories_per_user"].items() if n >= 10}
    assert set(ds.id_maps.users) == planted


def test_first_appearance_numbering():
    recs = [rec("u", f"2010-01-01T0{i}:00:00Z", v) for i, v in enumerate("XYXZ")]
    trajs, maps = relabel(segment(recs, "daily"))
    assert trajs[0].venues == [0, 1, 0, 2]


def test_shared_venue_keeps_first_users_id():
    recs = [rec("1", "2010-01-01T08:00:00Z", "a"), rec("1", "2010-01-01T09:00:00Z", "b"),
            rec("2", "2010-01-01T07:00:00Z", "b"), rec("2", "2010-01-01T08:00:00Z", "c")]
    trajs, maps = relabel(segment(recs, "daily"))
    assert trajs[1].venues == [1, 2]


def test_exclusive_venue_gets_users_max_id():
    recs = []
    for u, own in (("1", "home1"), ("2", "home2")):
        for day in (1, 2, 3):
            recs += [rec(u, f"2010-01-0{day}T08:00:00Z", "shared1"),
                     rec(u, f"2010-01-0{day}T09:00:00Z", "shared2"),
                     rec(u, f"2010-01-0{day}T10:00:00Z", own)]
    trajs, maps = relabel(segment(recs, "daily"))
    for t in trajs:
        own = maps.venues.index(f"home{maps.users[t.user]}")
        assert max(t.venues) == own


def test_empty_records_empty_dataset():
    with pytest.warns(UserWarning):
        assert build_dataset([], PipelineConfig()).trajectory_count == 0


# encode

@pytest.mark.parametrize("venues,d,sampler,want", [
    ([5, 9, 2], 1, "max", (9,)),
    ([5, 9, 2], 3, "max", (9, 5, 2)),
    ([7, 7, 7], 3, "max", (7, 7, 7)),
    (list(range(1, 10)), 3, "median", (6, 5, 4)),
])
def test_sampler_cases(venues, d, sampler, want):
    assert select_venues(venues, d, sampler) == want


def test_venue_set_cases():
    t = SubTrajectory(0, "k", tuple(CheckinRecord(0, i, v) for i, v in enumerate([3, 3, 4])))
    assert venue_set(t) == {3, 4}
    assert venue_set(SubTrajectory(0, "k", ())) == frozenset()
    draws = np.random.default_rng(0).integers(0, 30, size=100).tolist()
    t = SubTrajectory(0, "k", tuple(CheckinRecord(0, i, v) for i, v in enumerate(draws)))
    assert sorted(venue_set(t)) == np.unique(draws).tolist()


# classify

def test_single_point_index():
    index = KnnIndex([[4, 2]], [7])
    assert query_knn(index, [100, 0], 1)[0].label == 7


def test_hand_distances_d1():
    index = KnnIndex([[2], [9], [14]], [0, 1, 2])
    got = query_knn(index, [10], 2)
    assert [(n.label, n.sq_distance) for n in got] == [(1, 1), (2, 16)]
    assert [n.distance for n in got] == [1.0, 4.0]


def test_query_on_training_point():
    index = KnnIndex([[5, 1], [3, 3], [8, 0]], [0, 1, 2])
    assert query_knn(index, [3, 3], 1)[0].sq_distance == 0


def test_vote_cases():
    assert vote(["A", "A", "B"], [1, 2, 3]) == "A"
    assert vote(["A", "B", "C"], [1, 2, 3]) == "A"
    index = KnnIndex([[1], [5]], [3, 4])
    assert predict(index, [4], 1) == 4


def test_rank_cases():
    index = KnnIndex([[0], [1], [2], [3], [4]], [0, 0, 1, 5, 6])
    assert rank_labels(index, [0], 3, 2) == [0, 1]
    index = KnnIndex([[0], [1], [2], [3], [4]], [0, 0, 0, 1, 1])
    assert rank_labels(index, [0], 3, 2) == [0, 1]
    assert rank_labels(index, [3], 3, 1) == [predict(index, [3], 3)]


def test_jaccard_cases():
    idx = JaccardIndex([({1, 2}, "A"), ({9}, "B")])
    assert idx.predict({1, 2}, 1) == "A"
    assert idx.predict({9}, 1) == "B"


# evaluate

def test_confusion_cases():
    c = confusion_counts(["A", "B", "C"], ["A", "B", "C"])
    assert set(c.fp.values()) == {0} and set(c.fn.values()) == {0}
    c = confusion_counts(["A", "B", "B"], ["A", "A", "B"])
    assert (c.tp["A"], c.fn["A"], c.fp["B"], c.tp["B"]) == (1, 1, 1, 1)


def test_macro_cases():
    assert macro_metrics(confusion_counts([0, 1, 2], [0, 1, 2])) == (1.0, 1.0, 1.0)
    # class 0 always right, class 1 always wrong (predicted as 0)
    _, r, _ = macro_metrics(confusion_counts([0, 0, 0, 0], [0, 0, 1, 1]))
    assert r == 0.5
    p, r, f1 = macro_metrics(confusion_counts([0, 1, 1, 0], [0, 1, 0, 1]))
    assert p == r == f1 == 0.5


def test_acc_cases():
    assert acc_at_k([[1, 2], [2, 1]], [1, 2], 1) == 1.0
    assert acc_at_k([[3, 1, 2]], [1], 1) == 0.0
    assert acc_at_k([[3, 1, 2]], [1], 5) == 1.0


def test_fold_sizes():
    folds = stratified_folds([0] * 9 + [1] * 10, 3, seed=2)
    assert sorted(np.bincount(folds.fold_of[:9], minlength=3)) == [3, 3, 3]
    assert sorted(np.bincount(folds.fold_of[9:], minlength=3)) == [3, 3, 4]
    assert stratified_folds([0] * 9 + [1] * 10, 3, seed=2).fold_of.tolist() == folds.fold_of.tolist()


def test_single_user_is_perfect(single_user_daily):
    assert single_user_daily.user_count == 1
    r = cross_validate(single_user_daily, seed=0)
    assert r.acc_at == {1: 1.0, 5: 1.0} and (r.macro_p, r.macro_r, r.macro_f1) == (1.0, 1.0, 1.0)
    assert set(sweep_k(single_user_daily, k_values=(1, 3, 5), seed=0).values()) == {0.0}
    assert {d: x.macro_f1 for d, x in sweep_d(single_user_daily, seed=0).items()} == {1: 1.0, 2: 1.0, 3: 1.0}


# synthetic and analyze

def test_one_user_spec():
    corpus = generate_synthetic(SyntheticSpec(n_users=1))
    assert {r.user for r in corpus.records} == {"1000"}


def test_ablation_near_chance():
    ds = build_dataset(generate_synthetic(SyntheticSpec(p_private=0.0)).records, PipelineConfig())
    assert cross_validate(ds, seed=0).acc_at[1] < 5 / ds.user_count


def test_uniqueness_extremes():
    disjoint = _dataset({0: [[1, 2]], 1: [[3, 4]]})
    assert uniqueness_stats(disjoint, 2).mean_jaccard == 1.0
    same = _dataset({0: [[1, 2]], 1: [[2, 1]]})
    assert uniqueness_stats(same, 2).mean_jaccard == 0.0


def test_hand_built_jaccard_matrix():
    ds = _dataset({0: [[1, 2, 3]], 1: [[3, 4]], 2: [[1, 2, 3, 4]], 3: [[5]], 4: [[2, 3, 5, 6]]})
    users, m = jaccard_matrix(ds, 5)
    sets = {0: {1, 2, 3}, 1: {3, 4}, 2: {1, 2, 3, 4}, 3: {5}, 4: {2, 3, 5, 6}}
    for i, a in enumerate(users):
        for j, b in enumerate(users):
            want = 1 - len(sets[a] & sets[b]) / len(sets[a] | sets[b])
            assert m[i, j] == pytest.approx(want)
    assert np.all(np.diag(m) == 0)


def test_small_k_beats_large_k(planted_daily):
    errors = sweep_k(planted_daily, k_values=(3, 15), seed=0)
    assert errors[3] <= errors[15]


def test_exact_match_neighbour_gives_zero_error():
    # every user's days share one venue set nobody else visits
    ds = _dataset({u: [[10 * u + 1, 10 * u + 2]] * 6 for u in range(5)})
    assert sweep_k(ds, k_values=(1,), seed=0) == {1: 0.0}


def test_monthly_beats_daily_on_synthetic():
    recs = generate_synthetic(SyntheticSpec(n_users=30, trajectories_per_user=150, day_gap=(2, 3),
                                            p_private=0.2, plant_home=False, seed=1)).records
    datasets = {t: build_dataset(recs, PipelineConfig(t)) for t in ("daily", "weekly", "monthly")}
    r = interval_comparison(datasets, seed=0)
    assert r["monthly"].macro_f1 >= r["daily"].macro_f1
    again = interval_comparison(datasets, seed=0)
    assert {t: x.metric_fields() for t, x in again.items()} == {t: x.metric_fields() for t, x in r.items()}


def test_scaling_trend_and_full_population():
    ds = build_dataset(generate_synthetic(SyntheticSpec(n_users=1000, p_private=0.3, plant_home=False,
                                                        seed=5)).records, PipelineConfig())
    curve = scaling_curve(ds, [10, 1000], seed=0)
    assert curve[10].macro_f1 >= curve[1000].macro_f1
    assert curve[1000].metric_fields() == cross_validate(ds, seed=0).metric_fields()


def test_timing_smoke(small_daily):
    prof = timing_profile(small_daily, runs=1)
    assert 0 < prof.mean_query_ms < float("inf") and prof.build_ms > 0


# cli

def test_cli_unknown_format_lists_schemas(capsys, tmp_path):
    with pytest.raises(SystemExit) as exc:
        cli.main(["ingest", str(tmp_path / "x"), "--format", "myspace"])
    assert exc.value.code == cli.EXIT_CONFIG
    assert "brightkite" in capsys.readouterr().err


def test_cli_missing_file_names_path(capsys, tmp_path):
    assert cli.main(["ingest", str(tmp_path / "gone.txt")]) != 0
    assert "gone.txt" in capsys.readouterr().err


def test_cli_preprocess_rerun_is_byte_identical_and_unfiltered(tmp_path, capsys):
    corpus = generate_synthetic(SyntheticSpec(n_users=8, seed=2))
    raw = str(write_canonical(corpus.records, tmp_path / "raw.tsv"))
    for name in ("a", "b"):
        assert cli.main(["preprocess", raw, "--out", str(tmp_path / name)]) == 0
    for ext in (".tsv", ".json"):
        assert (tmp_path / f"a{ext}").read_bytes() == (tmp_path / f"b{ext}").read_bytes()
    assert cli.main(["preprocess", raw, "--min-checkins", "1", "--min-trajs", "1",
                     "--out", str(tmp_path / "all")]) == 0
    meta = json.loads((tmp_path / "all.json").read_text())
    assert meta["checkin_count"] == len(corpus.records)


def test_cli_bad_d_fails_before_work(tmp_path, capsys):
    raw = tmp_path / "raw.tsv"
    raw.write_text("")
    assert cli.main(["run", "--dataset", str(raw), "--seed", "0", "-d", "5",
                     "--out", str(tmp_path / "out")]) == cli.EXIT_CONFIG
    assert not (tmp_path / "out").exists()


def test_cli_sweep_d_jaccard_and_default_synth(tmp_path):
    spec = os.path.join(CONFIGS, "synthetic.json")
    assert cli.main(["analyze", "synth", "--spec", spec, "--seed", "0",
                     "--out", str(tmp_path)]) == 0
    rows = list(csv.DictReader(open(tmp_path / "synth" / "sweep_d.csv")))
    assert [r["d"] for r in rows] == ["1", "2", "3"]
    assert float(rows[0]["acc_at_1"]) >= 0.95

    corpus = generate_synthetic(SyntheticSpec.from_dict(json.load(open(spec))))
    raw = str(write_canonical(corpus.records, tmp_path / "raw.tsv"))
    assert cli.main(["analyze", "jaccard", "--input", raw, "--top", "25", "--seed", "0",
                     "--out", str(tmp_path)]) == 0
    with open(tmp_path / "jaccard" / "jaccard.csv") as fh:
        table = list(csv.reader(fh))
    assert len(table) == 26 and all(len(row) == 26 for row in table)
