import numpy as np
import pytest

from miemph.core import Trial, TrialSet
from miemph.evaluate import (
    EvalConfig,
    FoldResult,
    Fitted,
    LeakageError,
    Metrics,
    Report,
    SubjectRow,
    TooFewTrialsError,
    check_sessions_disjoint,
    compute_metrics,
    inter_session_eval,
    intra_session_eval,
    make_folds,
    render_report,
    report_from_csv,
)
from miemph.pipeline import WindowSet

from conftest import make_trialset


def test_stratified_folds_150():
    labels = np.repeat([0, 1, 2], 50)
    plan = make_folds(labels, 5, seed=0)
    for k in range(5):
        train, test = plan.split(k)
        assert len(test) == 30
        assert np.bincount(labels[test]).tolist() == [10, 10, 10]
        assert not set(train) & set(test)
        assert len(train) + len(test) == 150
    again = make_folds(labels, 5, seed=0)
    np.testing.assert_array_equal(plan.assignments, again.assignments)


def test_too_few_trials_per_class():
    with pytest.raises(TooFewTrialsError):
        make_folds([0, 0, 0, 0], 5)


def _fake_windows(ts):
    n = len(ts)
    return WindowSet(np.zeros((3 * n, 1, 1, 1)), np.repeat(ts.labels, 3), np.repeat(np.arange(n), 3))


def _always_zero(train_ws, val_ws, cfg):
    return Fitted(lambda ws: np.tile([1.0, 0.0, 0.0], (len(ws), 1)))


def _oracle(train_ws, val_ws, cfg):
    return Fitted(lambda ws: np.eye(3)[ws.y])


def test_always_class_zero_scores_one_third():
    ts = make_trialset(n_trials=30, n_channels=1, n_samples=10)
    row = intra_session_eval(ts, EvalConfig(), fit=_always_zero, windows=_fake_windows(ts))
    assert len(row.folds) == 5
    assert row.mean == pytest.approx(1 / 3, abs=1e-12)


def test_oracle_scores_one():
    ts = make_trialset(n_trials=30, n_channels=1, n_samples=10)
    row = intra_session_eval(ts, EvalConfig(), fit=_oracle, windows=_fake_windows(ts))
    assert row.mean == 1.0 and row.std == 0.0


def test_folds_are_checked_for_leakage():
    ts = make_trialset(n_trials=30, n_channels=1, n_samples=10)
    seen = []

    def spy(train_ws, val_ws, cfg):
        seen.append((set(train_ws.trial_ids), set(val_ws.trial_ids)))
        return _oracle(train_ws, val_ws, cfg)

    row = intra_session_eval(ts, EvalConfig(), fit=spy, windows=_fake_windows(ts))
    for (fit_ids, val_ids), fold in zip(seen, row.folds):
        test_ids = set(fold.test_trials.tolist())
        assert not fit_ids & test_ids and not val_ids & test_ids and not fit_ids & val_ids


def test_inter_session_rejects_reused_session():
    ts = make_trialset(n_trials=6, n_channels=2, n_samples=2500)
    with pytest.raises(LeakageError):
        inter_session_eval(ts, ts, EvalConfig(), fit=_oracle)
    copy = TrialSet(ts.channels, tuple(Trial(t.data, t.fs, t.label, "S01", 2) for t in ts), ts.fs)
    with pytest.raises(LeakageError, match="identical trial"):
        check_sessions_disjoint(ts, copy)


def test_inter_session_with_oracle():
    s1 = make_trialset(n_trials=6, n_channels=2, seed=1)
    s2 = make_trialset(n_trials=6, n_channels=2, seed=2)
    s2 = TrialSet(s2.channels, tuple(Trial(t.data, t.fs, t.label, "S01", 2) for t in s2), s2.fs)
    row = inter_session_eval(s1, s2, EvalConfig(), fit=_oracle)
    assert row.mean == 1.0
    assert row.folds[0].windows.trial_ids.tolist() == list(range(6, 12))


def _row(subject, accs):
    folds = [FoldResult(i, np.array([]), np.array([]), Metrics(a, a, (), 30, 90), np.zeros((0, 3)), None)
             for i, a in enumerate(accs)]
    return SubjectRow(subject, "intra", folds)


def test_render_population_std():
    text = render_report(Report("intra", [_row("01", [0.60, 0.70, 0.80, 0.60, 0.70])]))
    assert "68.00% (± 7.48)" in text
    assert "Proposed Method" in text


def test_render_average_row():
    text = render_report(Report("intra", [_row("01", [0.6]), _row("02", [0.7])]))
    avg = [line for line in text.splitlines() if line.startswith("Avg.")][0]
    assert "65.00%" in avg


def test_empty_folds_rejected():
    with pytest.raises(ValueError):
        render_report(Report("intra", [SubjectRow("01", "intra", [])]))


def test_csv_round_trip():
    report = Report("intra", [_row("01", [0.6, 0.7, 0.8, 0.6, 0.7])])
    text = render_report(report, "csv")
    lines = text.splitlines()
    assert lines[0] == "subject,mode,fold,trial_acc,window_acc,n_trials"
    assert len(lines) == 7 and lines[-1].split(",")[2] == "mean"
    assert render_report(report_from_csv(text)) == render_report(report)


def test_metrics():
    ws = WindowSet(np.zeros((4, 1, 1, 1)), np.array([0, 0, 1, 1]), np.array([0, 0, 1, 1]))
    probs = np.array([[0.9, 0.1, 0], [0.4, 0.6, 0], [0.2, 0.8, 0], [0.3, 0.7, 0]])
    m = compute_metrics(probs, ws)
    assert m.trial_accuracy == 1.0 and m.window_accuracy == 0.75 and m.n_trials == 2
