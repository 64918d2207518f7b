import os
import sys

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def small_corpus():
    from enginectx.synth import generate_corpus
    return generate_corpus(32, seed=11, duration_s=3.0)


@pytest.fixture(scope="session")
def small_chain(small_corpus):
    from enginectx.chain import default_spec, train_chain
    spec = default_spec(hyperparams={"n_estimators": 15}, segments_per_clip=3)
    return train_chain(spec, small_corpus, seed=5)


ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE] = []


@pytest.fixture
def record_criterion(request):
    """Record one pass/fail line per acceptance criterion, then assert it."""
    lines = request.config.stash[ACCEPTANCE]

    def record(number: int, ok: bool, detail: str) -> None:
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append((number, line))
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
