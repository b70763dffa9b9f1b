import os
import sys
from datetime import datetime, timezone

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from tulbench.model import CheckinRecord  # noqa: E402
from tulbench.pipeline import PipelineConfig, build_dataset  # noqa: E402
from tulbench.synthetic import SyntheticSpec, generate_synthetic  # noqa: E402


def ts(text):
    """Epoch seconds for an ISO-8601 UTC string."""
    return int(datetime.fromisoformat(text.replace("Z", "+00:00")).replace(tzinfo=timezone.utc).timestamp())


def rec(user, when, venue):
    return CheckinRecord(user, ts(when), venue)


def write_canonical(records, path):
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            when = datetime.fromtimestamp(r.time, tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
            fh.write(f"{r.user}\t{when}\t0.0\t0.0\t{r.venue}\n")
    return path


@pytest.fixture(scope="session")
def planted_corpus():
    return generate_synthetic(SyntheticSpec())


@pytest.fixture(scope="session")
def planted_daily(planted_corpus):
    return build_dataset(planted_corpus.records, PipelineConfig("daily"))


@pytest.fixture(scope="session")
def small_daily():
    corpus = generate_synthetic(SyntheticSpec(n_users=20, seed=3))
    return build_dataset(corpus.records, PipelineConfig("daily"))


@pytest.fixture(scope="session")
def single_user_daily():
    corpus = generate_synthetic(SyntheticSpec(n_users=1, trajectories_per_user=12, seed=5))
    return build_dataset(corpus.records, PipelineConfig("daily"))


# acceptance criteria get one pass/fail line each at the end of the run
_ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(n, title): acceptance criterion")


def pytest_runtest_logreport(report):
    marker = dict(report.user_properties).get("acceptance")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        outcome = "SKIP" if report.skipped else ("PASS" if report.passed else "FAIL")
        prev = _ACCEPTANCE.get(report.nodeid)
        if prev is None or prev[1] == "PASS":
            _ACCEPTANCE[report.nodeid] = (marker, outcome)


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("acceptance")
        if m is not None:
            item.user_properties.append(("acceptance", f"criterion {m.args[0]}: {m.args[1]}"))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for label, outcome in sorted(_ACCEPTANCE.values()):
        terminalreporter.write_line(f"{outcome:4s}  {label}")
