import csv
import io
import json

import numpy as np
import pytest

from miemph import cli
from miemph.core import Trial, TrialSet, load_trialset, save_trialset
from miemph.net.checkpoint import load_checkpoint

from conftest import make_trialset


@pytest.fixture
def sessions(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    s1, s2 = d / "s1.mieeg", d / "s2.mieeg"
    assert cli.main(["synth", "--seed", "1", "--trials-per-class", "5", "--out", str(s1)]) == 0
    assert cli.main(["synth", "--seed", "2", "--session", "2", "--trials-per-class", "5",
                     "--out", str(s2)]) == 0
    return s1, s2


def test_synth_writes_150_trials_deterministically(tmp_path):
    a, b = tmp_path / "a.mieeg", tmp_path / "b.mieeg"
    assert cli.main(["synth", "--profile", "separable", "--seed", "7", "--out", str(a)]) == 0
    assert cli.main(["synth", "--profile", "separable", "--seed", "7", "--out", str(b)]) == 0
    assert len(load_trialset(a)) == 150
    assert a.read_bytes() == b.read_bytes()


def test_synth_without_out_exits_2(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["synth"])
    assert exc.value.code == 2
    assert "usage" in capsys.readouterr().err


def test_synth_seed_from_environment(tmp_path, monkeypatch):
    a, b = tmp_path / "a.mieeg", tmp_path / "b.mieeg"
    monkeypatch.setenv("MIEMPH_SEED", "7")
    assert cli.main(["synth", "--trials-per-class", "2", "--out", str(a)]) == 0
    monkeypatch.delenv("MIEMPH_SEED")
    assert cli.main(["synth", "--trials-per-class", "2", "--seed", "7", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_synth_bad_profile_exits_2(tmp_path):
    profile = tmp_path / "p.json"
    profile.write_text(json.dumps({"motifs": [{"label": 5, "channels": [0], "freq": 10,
                                               "rest_amp": 1, "mi_amp": 2}]}))
    assert cli.main(["synth", "--profile-file", str(profile), "--out", str(tmp_path / "x")]) == 2


def test_import_csv_to_binary(tmp_path):
    ts = make_trialset(n_trials=2, n_channels=3, n_samples=30)
    src, dst = tmp_path / "in.csv", tmp_path / "out.mieeg"
    save_trialset(ts, src)
    assert cli.main(["import", "--in", str(src), "--out", str(dst)]) == 0
    back = load_trialset(dst)
    np.testing.assert_array_equal(back[1].data, ts[1].data.astype(np.float32))
    assert cli.main(["import", "--in", str(tmp_path / "missing.csv"), "--out", str(dst)]) == 1
    (tmp_path / "bad.csv").write_text("subject,session,label,channel,s0\nA,1,7,c0,1\n")
    assert cli.main(["import", "--in", str(tmp_path / "bad.csv"), "--out", str(dst)]) == 3


def test_run_intra_writes_artifacts(sessions, tmp_path):
    s1, _ = sessions
    out = tmp_path / "run"
    rc = cli.main(["run", "--mode", "intra", "--data", str(s1), "--epochs", "1", "--out-dir", str(out)])
    assert rc == 0
    rows = list(csv.DictReader(io.StringIO((out / "report.csv").read_text())))
    assert [r["fold"] for r in rows] == ["0", "1", "2", "3", "4", "mean"]
    assert "Proposed Method" in (out / "report.txt").read_text()
    model = load_checkpoint(out / "model_fold0.minet")
    assert model.spec.n_channels == 60 and model.spec.in_samples == 500
    weights = list(csv.DictReader(io.StringIO((out / "weights.csv").read_text())))
    assert len(weights) == 15 * 60
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 0 and manifest["config"]["epochs"] == 1
    assert set(manifest["outputs"]) >= {"report.csv", "model_fold4.minet", "weights.csv"}


def test_run_inter_and_leakage(sessions, tmp_path):
    s1, s2 = sessions
    rc = cli.main(["run", "--mode", "inter", "--train", str(s1), "--valid", str(s2), "--epochs", "1",
                   "--out-dir", str(tmp_path / "inter")])
    assert rc == 0
    assert (tmp_path / "inter" / "model_inter.minet").exists()
    rc = cli.main(["run", "--mode", "inter", "--train", str(s1), "--valid", str(s1), "--epochs", "1",
                   "--out-dir", str(tmp_path / "leak")])
    assert rc == 3
    copy = tmp_path / "copy.mieeg"
    copy.write_bytes(s1.read_bytes())
    rc = cli.main(["run", "--mode", "inter", "--train", str(s1), "--valid", str(copy), "--epochs", "1",
                   "--out-dir", str(tmp_path / "leak2")])
    assert rc == 3


def test_run_cv_source_defaults_to_validation(sessions, tmp_path):
    s1, s2 = sessions
    out = tmp_path / "cv"
    assert cli.main(["run", "--train", str(s1), "--valid", str(s2), "--epochs", "0", "--out-dir", str(out)]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert list(manifest["inputs"]) == [str(s2)]


def test_db_raw_silent_channel_exits_3(tmp_path, capsys):
    ts = make_trialset(n_trials=15, n_channels=3)
    data = [t.data.copy() for t in ts]
    for d in data:
        d[1] = 0.0
    silent = TrialSet(ts.channels, tuple(Trial(d, 250.0, t.label) for d, t in zip(data, ts)), 250.0)
    path = tmp_path / "silent.mieeg"
    save_trialset(silent, path)
    rc = cli.main(["run", "--data", str(path), "--emphasis-mode", "db-raw", "--epochs", "1",
                   "--out-dir", str(tmp_path / "o")])
    assert rc == 3
    assert "ch1" in capsys.readouterr().err


def test_config_errors_exit_2(sessions, tmp_path):
    s1, _ = sessions
    bad = tmp_path / "cfg.json"
    bad.write_text(json.dumps({"nonsense": 1}))
    assert cli.main(["run", "--data", str(s1), "--config", str(bad)]) == 2
    assert cli.main(["run", "--data", str(tmp_path / "missing.mieeg")]) == 2
    assert cli.main(["run", "--mode", "inter", "--train", str(s1)]) == 2
    assert cli.main(["run", "--data", str(s1), "--lr", "-1"]) == 2


def test_seed_precedence(sessions, tmp_path, monkeypatch):
    s1, _ = sessions
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"seed": 5, "epochs": 0}))

    def seed_of(args, name):
        out = tmp_path / name
        assert cli.main(["run", "--data", str(s1), "--config", str(cfg), "--out-dir", str(out)] + args) == 0
        return json.loads((out / "manifest.json").read_text())["seed"]

    assert seed_of([], "a") == 5
    monkeypatch.setenv("MIEMPH_SEED", "6")
    assert seed_of([], "b") == 6
    assert seed_of(["--seed", "7"], "c") == 7


def test_divergence_exits_4(sessions, tmp_path, capsys):
    s1, _ = sessions
    rc = cli.main(["run", "--data", str(s1), "--epochs", "2", "--lr", "1e30",
                   "--out-dir", str(tmp_path / "d")])
    assert rc == 4
    assert "diverged" in capsys.readouterr().err


def test_psd_dump_row_count(sessions, tmp_path):
    s1, _ = sessions
    out = tmp_path / "psd.csv"
    assert cli.main(["psd-dump", "--data", str(s1), "--trials", "0", "--out", str(out)]) == 0
    rows = list(csv.DictReader(io.StringIO(out.read_text())))
    assert len(rows) == 60 * 501
    assert rows[0].keys() == {"subject", "trial", "channel", "freq_hz", "power"}


def test_psd_dump_band_and_empty_selection(sessions, tmp_path):
    s1, _ = sessions
    out = tmp_path / "band.csv"
    assert cli.main(["psd-dump", "--data", str(s1), "--trials", "1,2", "--f1", "8", "--f2", "30",
                     "--out", str(out)]) == 0
    freqs = [float(r["freq_hz"]) for r in csv.DictReader(io.StringIO(out.read_text()))]
    assert min(freqs) >= 8 and max(freqs) <= 30
    assert len(freqs) == 2 * 60 * 89
    empty = tmp_path / "empty.csv"
    assert cli.main(["psd-dump", "--data", str(s1), "--trials", "", "--out", str(empty)]) == 0
    assert empty.read_text() == "subject,trial,channel,freq_hz,power\n"
    assert cli.main(["psd-dump", "--data", str(s1), "--trials", "999", "--out", str(empty)]) == 3


def test_report_command(tmp_path, capsys):
    src = tmp_path / "r.csv"
    src.write_text("subject,mode,fold,trial_acc,window_acc,n_trials\n"
                   + "".join(f"01,intra,{i},{a},{a},30\n" for i, a in enumerate([0.6, 0.7, 0.8, 0.6, 0.7])))
    assert cli.main(["report", "--in", str(src)]) == 0
    assert "68.00% (± 7.48)" in capsys.readouterr().out
    assert cli.main(["report", "--in", str(tmp_path / "missing.csv")]) == 1
    (tmp_path / "bad.csv").write_text("a,b\n1,2\n")
    assert cli.main(["report", "--in", str(tmp_path / "bad.csv")]) == 3
