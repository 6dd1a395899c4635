import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from flamseg import micronet, synth

settings.register_profile("flamseg", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("flamseg")


def three_section_plan(rid="t3", seed=0, kinds=("voice", "picked", "strummed"), durs=(6.0, 6.0, 6.0),
                       palmas=(False, False, False), **kw):
    secs = [synth.Section(k, d, p) for k, d, p in zip(kinds, durs, palmas)]
    return synth.RecordingPlan(rid, secs, seed=seed, **kw)


@pytest.fixture(scope="session")
def short_plan():
    return three_section_plan("short", seed=3, durs=(4.0, 4.0, 4.0), palmas=(False, True, False))


@pytest.fixture(scope="session")
def short_clip(short_plan):
    return synth.synth_recording(short_plan)


@pytest.fixture(scope="session")
def random_cnn_models():
    return {t: micronet.CnnModel.init(seed=i, task=t) for i, t in enumerate(("vocal", "guitar", "palmas"))}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# PASS/FAIL lines of the acceptance suite, echoed in the terminal summary
ACCEPTANCE_LINES = []


def record_criterion(number, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {number:2d}: {detail}"
    ACCEPTANCE_LINES.append((number, line))
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
