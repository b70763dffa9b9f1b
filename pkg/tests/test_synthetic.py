import pytest

from tulbench.pipeline import PipelineConfig, build_dataset, interval_key
from tulbench.synthetic import SyntheticSpec, generate_synthetic


def test_ledger_matches_records(planted_corpus):
    recs = planted_corpus.records
    ledger = planted_corpus.ledger
    assert ledger["checkin_count"] == len(recs)
    assert ledger["unique_users"] == len({r.user for r in recs}) == 100
    assert ledger["unique_venues"] == len({r.venue for r in recs})
    assert ledger["private_visits"] == sum(r.venue.startswith("p") for r in recs)
    days = {(r.user, interval_key(r.time, "daily")) for r in recs}
    assert ledger["trajectories"] == len(days) == 1200


def test_same_seed_same_corpus():
    a = generate_synthetic(SyntheticSpec(n_users=5, seed=3))
    b = generate_synthetic(SyntheticSpec(n_users=5, seed=3))
    c = generate_synthetic(SyntheticSpec(n_users=5, seed=4))
    assert a.records == b.records and a.records != c.records


def test_home_gets_largest_private_id(planted_daily):
    ids = planted_daily.id_maps.venues
    for user_id, raw_user in enumerate(planted_daily.id_maps.users):
        i = int(raw_user) - 1000
        private = {ids.index(f"p{i}-{j}") for j in range(3) if f"p{i}-{j}" in ids}
        assert max(private) == ids.index(f"p{i}-0")
    for t in planted_daily.trajectories:
        i = int(planted_daily.id_maps.users[t.user]) - 1000
        assert ids.index(f"p{i}-0") in t.venues


def test_no_private_visits_when_disabled():
    corpus = generate_synthetic(SyntheticSpec(n_users=10, p_private=0.0))
    assert corpus.ledger["private_visits"] == 0
    assert all(r.venue.startswith("s") for r in corpus.records)


def test_spec_roundtrip_and_validation():
    spec = SyntheticSpec(checkins_per_trajectory=(4, 6), day_gap=(1, 3))
    assert SyntheticSpec.from_dict(spec.to_dict()) == spec
    for bad in (dict(n_users=0), dict(p_private=1.5), dict(checkins_per_trajectory=(5, 2))):
        with pytest.raises(ValueError):
            SyntheticSpec(**bad)


def test_day_gap_controls_weekly_grouping():
    spec = SyntheticSpec(n_users=3, trajectories_per_user=14, day_gap=7, seed=1)
    ds = build_dataset(generate_synthetic(spec).records, PipelineConfig("weekly", 1, 1))
    assert ds.trajectory_count == 42
