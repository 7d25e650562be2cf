import numpy as np
import pytest

from miemph.core import ChannelSet, Trial, TrialSet
from miemph.synth import default_separable_profile, generate_trialset


def make_trialset(n_trials=3, n_channels=4, n_samples=2500, fs=250.0, seed=0, labels=None):
    rng = np.random.default_rng(seed)
    labels = labels if labels is not None else [i % 3 for i in range(n_trials)]
    trials = [Trial(rng.normal(size=(n_channels, n_samples)), fs, lab) for lab in labels]
    return TrialSet(ChannelSet.numbered(n_channels), tuple(trials), fs)


@pytest.fixture
def small_set():
    return make_trialset()


@pytest.fixture(scope="session")
def tiny_synth():
    """Separable profile with 4 trials per class."""
    cfg = default_separable_profile(3)
    from dataclasses import replace

    return generate_trialset(replace(cfg, trials_per_class=4))


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for number in sorted(results):
            terminalreporter.write_line(results[number])
