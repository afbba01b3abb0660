import warnings

import numpy as np
import pytest

from playvalue.featurize import build_feature_table
from playvalue.ingest import extract_ball_carrier_sequences
from playvalue.synthgen import GeneratorConfig, generate_corpus


@pytest.fixture(scope="session")
def small_corpus():
    return generate_corpus(GeneratorConfig(seed=7, weeks=3, plays_per_week=12, games_per_week=2))


@pytest.fixture(scope="session")
def small_sequences(small_corpus):
    sequences, report = extract_ball_carrier_sequences(small_corpus.plays)
    return sequences


@pytest.fixture(scope="session")
def small_table(small_sequences):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return build_feature_table(small_sequences)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_KEY = pytest.StashKey[dict]()


@pytest.fixture(scope="session")
def acceptance_log(request):
    """Criterion number -> (passed, detail), printed after the run."""
    return request.config.stash.setdefault(ACCEPTANCE_KEY, {})


def pytest_terminal_summary(terminalreporter, config):
    log = config.stash.get(ACCEPTANCE_KEY, {})
    if not log:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(log):
        passed, detail = log[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
