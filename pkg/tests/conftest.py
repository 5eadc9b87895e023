import numpy as np
import pytest

from emerbench.synth import SynthSpec, generate_synthetic
from emerbench.signal_model import validate_manifest


SMALL = SynthSpec(n_subjects=3, n_sessions=1, n_trials=5, classes=3, eeg_channels=4, trial_seconds=6.0, seed=7)


@pytest.fixture(scope="session")
def small_manifest(tmp_path_factory):
    root = tmp_path_factory.mktemp("small")
    return generate_synthetic(SMALL, root)


@pytest.fixture(scope="session")
def small_recordings(small_manifest):
    return validate_manifest(small_manifest)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# -- acceptance verdicts -------------------------------------------------------------

_VERDICTS = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """Context manager factory: times a criterion and records one PASS/FAIL line."""
    import contextlib
    import time

    verdicts = request.config.stash.setdefault(_VERDICTS, [])

    @contextlib.contextmanager
    def run(number, title, budget=None):
        start = time.perf_counter()
        detail = {}
        try:
            yield detail
            elapsed = time.perf_counter() - start
            if budget is not None:
                assert elapsed < budget, f"took {elapsed:.2f} s, budget {budget:g} s"
        except BaseException as exc:
            elapsed = time.perf_counter() - start
            verdicts.append((number, f"FAIL criterion {number:2d}: {title} [{elapsed:.2f} s] {str(exc).splitlines()[0] if str(exc) else type(exc).__name__}"))
            raise
        extra = f" ({detail['note']})" if "note" in detail else ""
        verdicts.append((number, f"PASS criterion {number:2d}: {title} [{elapsed:.2f} s]{extra}"))

    return run


def pytest_terminal_summary(terminalreporter, config):
    verdicts = config.stash.get(_VERDICTS, [])
    if verdicts:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(verdicts):
            terminalreporter.write_line(line)
