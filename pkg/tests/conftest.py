import numpy as np
import pytest

from fwqa.data import prepare
from fwqa.models import ModelConfig
from fwqa.synth import SynthConfig, synth_generate


@pytest.fixture(scope="session")
def small_who():
    """A 300-video Who corpus with prepared train/val splits at toy dims."""
    data = synth_generate(SynthConfig.who(n_videos=300, seed=5))
    cfg = ModelConfig.toy()
    tr = prepare(data.train, data.features, data.table, cfg.n_frames)
    va = prepare(data.val, data.features, data.table, cfg.n_frames)
    return data, cfg, tr, va


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_VERDICTS = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_VERDICTS] = []


@pytest.fixture
def verdict(request):
    """``verdict(n, ok, detail)`` records one PASS/FAIL line and fails the test when not ok."""
    lines = request.config.stash[_VERDICTS]

    def record(criterion, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'}  criterion {criterion}: {detail}"
        lines.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_VERDICTS, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda l: int(l.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
