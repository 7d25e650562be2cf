import numpy as np
import pytest
from dataclasses import replace

from miemph.core import (
    CLASS_NAMES,
    ChannelCountError,
    ChannelSet,
    EmptyTrialSetError,
    MalformedHeaderError,
    NonFiniteError,
    Trial,
    TrialSet,
    UnknownLabelError,
    WindowRangeError,
    dump_binary,
    dump_csv,
    extract_epoch,
    load_trialset,
    parse_binary,
    parse_csv,
    save_trialset,
)
from miemph.synth import default_separable_profile, generate_trialset

from conftest import make_trialset


def _four_trial_synth():
    cfg = replace(default_separable_profile(11), trials_per_class=2)
    ts = generate_trialset(cfg)
    return ts.subset(range(4))


def test_binary_round_trip_of_synth_file(tmp_path):
    ts = _four_trial_synth()
    path = tmp_path / "s.mieeg"
    save_trialset(ts, path)
    back = load_trialset(path)
    assert len(back) == 4
    assert all(t.data.shape == (60, 2500) for t in back)
    assert back.fs == 250.0
    assert dump_binary(back) == path.read_bytes()
    for a, b in zip(ts, back):
        assert a.label == b.label and a.subject_id == b.subject_id and a.session_id == b.session_id
        np.testing.assert_array_equal(b.data, a.data.astype(np.float32))


def test_csv_round_trip_matches_binary(tmp_path):
    ts = make_trialset(n_trials=3, n_channels=3, n_samples=40)
    back = parse_csv(dump_csv(ts))
    assert dump_binary(back) == dump_binary(ts)
    assert back.channels == ts.channels


def test_csv_accepts_class_names():
    text = "subject,session,label,channel,s0,s1\nA,1,Spherical,c0,0.5,1.0\nA,1,Spherical,c1,2,3\n"
    ts = parse_csv(text)
    assert ts[0].label == 1 and CLASS_NAMES[1] == "Spherical"
    assert ts.channels.labels == ("c0", "c1")


def test_empty_trial_list_rejected():
    with pytest.raises(EmptyTrialSetError, match="no trials"):
        TrialSet(ChannelSet.numbered(2), (), 250.0)
    with pytest.raises(EmptyTrialSetError, match="no trials"):
        parse_csv("subject,session,label,channel,s0\n")


def test_label_three_rejected():
    raw = bytearray(dump_binary(make_trialset(n_trials=1, n_channels=2, n_samples=10)))
    raw[20] = 3  # label byte of the first trial, right after the 20-byte header
    with pytest.raises(UnknownLabelError, match="unknown label"):
        parse_binary(bytes(raw))
    with pytest.raises(UnknownLabelError, match="unknown label"):
        parse_csv("subject,session,label,channel,s0\nA,1,3,c0,1.0\n")


def test_malformed_header_and_truncation():
    raw = dump_binary(make_trialset(n_trials=2, n_channels=2, n_samples=10))
    with pytest.raises(MalformedHeaderError):
        parse_binary(b"XXXXXX" + raw[6:])
    with pytest.raises(ChannelCountError, match="trial 1"):
        parse_binary(raw[:-4])
    with pytest.raises(MalformedHeaderError):
        parse_binary(raw + b"\0")


def test_channel_count_mismatch_names_trial():
    text = "subject,session,label,channel,s0\nA,1,0,c0,1\nA,1,0,c1,1\nA,1,0,c0,1\n"
    with pytest.raises(ChannelCountError, match="trial 1"):
        parse_csv(text)


def test_non_finite_rejected():
    with pytest.raises(NonFiniteError):
        Trial(np.array([[1.0, np.nan]]), 250.0, 0)
    with pytest.raises(NonFiniteError):
        parse_csv("subject,session,label,channel,s0,s1\nA,1,0,c0,1,inf\n")


def test_trial_data_is_read_only():
    t = Trial(np.zeros((2, 5)), 250.0, 0)
    with pytest.raises(ValueError):
        t.data[0, 0] = 1.0


def test_epoch_extraction():
    trial = make_trialset(n_trials=1, n_channels=2)[0]
    ep = extract_epoch(trial, 6.0, 10.0)
    assert ep.n_samples == 1000
    np.testing.assert_array_equal(ep.data, trial.data[:, 1500:2500])
    whole = extract_epoch(trial, 0.0, trial.duration)
    np.testing.assert_array_equal(whole.data, trial.data)
    with pytest.raises(WindowRangeError):
        extract_epoch(trial, 6.0, trial.duration + 1.0)
