import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from miemph.core import Epoch
from miemph.emphasis import (
    MODES,
    EmphasisConfig,
    SilentChannelError,
    apply_emphasis,
    channel_band_power,
    compute_weights,
    weights_from_power,
)

FS = 250.0
T4 = np.arange(1000) / FS


def _epoch(data):
    return Epoch(np.asarray(data, float), FS, 6.0, 10.0, 0, "S01", 1)


def test_identical_channels_give_unit_weights():
    x = np.random.default_rng(0).normal(size=1000)
    w = compute_weights(_epoch(np.tile(x, (5, 1))))
    np.testing.assert_array_equal(w.weights, np.ones(5))


def test_power_ratio_of_two_sinusoids():
    data = np.zeros((4, 1000))
    data[0] = 2 * np.sin(2 * np.pi * 12 * T4)
    data[1] = np.sin(2 * np.pi * 12 * T4)
    p = channel_band_power(data, FS, 8, 30)
    assert p[0] / p[1] == pytest.approx(4.0, rel=1e-9)


def test_db_raw_of_single_sinusoid():
    data = 2 * np.sin(2 * np.pi * 10 * T4)[None]
    w = compute_weights(_epoch(data), EmphasisConfig(9, 11, "db-raw"))
    assert w.weights[0] == pytest.approx(3.010299956639812, abs=0.05)


def test_db_raw_rejects_silent_channel():
    data = np.zeros((3, 1000))
    data[0] = np.sin(2 * np.pi * 12 * T4)
    with pytest.raises(SilentChannelError) as err:
        compute_weights(_epoch(data), EmphasisConfig(mode="db-raw"))
    assert err.value.channel == 1
    for mode in ("linear-mean-norm", "minmax"):
        w = compute_weights(_epoch(data), EmphasisConfig(mode=mode))
        assert w.weights[1] == 0.0


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(1e-6, 1e6), min_size=2, max_size=60))
def test_mean_norm_averages_to_one(power):
    w = weights_from_power(np.array(power), "linear-mean-norm")
    assert np.mean(w) == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(1, 10**6), min_size=2, max_size=60, unique=True))
def test_ranking_is_mode_independent(power):
    # distinct integers keep ties from appearing through rounding
    power = np.array(power) * 1e-3
    orders = [np.argsort(weights_from_power(power, m), kind="stable") for m in MODES]
    for o in orders[1:]:
        np.testing.assert_array_equal(o, orders[0])


def test_minmax_of_equal_powers():
    np.testing.assert_array_equal(weights_from_power(np.full(4, 2.0), "minmax"), np.ones(4))


def test_apply_identity_and_scaling():
    x = np.random.default_rng(1).normal(size=(3, 50))
    np.testing.assert_array_equal(apply_emphasis(x, np.ones(3)), x)
    out = apply_emphasis(np.ones((2, 7)), np.array([2.0, 0.5]))
    np.testing.assert_array_equal(out, [[2.0] * 7, [0.5] * 7])
    with pytest.raises(ValueError):
        apply_emphasis(x, np.ones(2))


def test_bad_config():
    with pytest.raises(ValueError):
        EmphasisConfig(mode="nope")
    with pytest.raises(ValueError):
        EmphasisConfig(30, 8)
