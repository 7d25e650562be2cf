"""Intra-session cross-validation, inter-session transfer, and reports.

Accuracy is counted per trial: window probabilities are averaged within a
trial before the argmax. The ``(± x)`` figures are population standard
deviations, over folds for a subject row and over subject means for the
``Avg.`` row.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .core import DataError, N_CLASSES, TrialSet
from .net.model import Model
from .net.train import History, TrainConfig, new_model, train, trial_predictions
from .pipeline import PipelineConfig, WindowSet, preprocess
from .synth.rng import derive_seed

log = logging.getLogger(__name__)


class LeakageError(DataError):
    pass


class TooFewTrialsError(ValueError):
    pass


@dataclass(frozen=True)
class EvalConfig:
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    n_folds: int = 5
    stratified: bool = True
    val_fraction: float = 0.2
    seed: int = 0


@dataclass(frozen=True, eq=False)
class FoldPlan:
    n_folds: int
    assignments: np.ndarray
    stratified: bool
    seed: int

    def split(self, fold: int) -> tuple[np.ndarray, np.ndarray]:
        test = np.flatnonzero(self.assignments == fold)
        train_idx = np.flatnonzero(self.assignments != fold)
        return train_idx, test


def make_folds(labels, n: int = 5, seed: int = 0, stratified: bool = True) -> FoldPlan:
    """Assign trials to ``n`` folds, round-robin over a seeded shuffle.

    When stratified, each class is dealt separately and the dealer position
    carries over between classes, so both per-class and total fold sizes
    differ by at most one.
    """
    labels = np.asarray(labels, dtype=int)
    if n < 2:
        raise ValueError("need at least 2 folds")
    if len(labels) < n:
        raise TooFewTrialsError(f"{len(labels)} trials cannot fill {n} folds")
    rng = np.random.default_rng(derive_seed(seed, "folds"))
    assignments = np.empty(len(labels), dtype=int)
    if stratified:
        pos = 0
        for cls in np.unique(labels):
            members = np.flatnonzero(labels == cls)
            if len(members) < n:
                raise TooFewTrialsError(f"class {cls} has {len(members)} trials, fewer than {n} folds")
            members = rng.permutation(members)
            assignments[members] = (pos + np.arange(len(members))) % n
            pos = (pos + len(members)) % n
    else:
        order = rng.permutation(len(labels))
        assignments[order] = np.arange(len(labels)) % n
    return FoldPlan(n, assignments, stratified, seed)


def inner_split(labels, train_idx, fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Carve a stratified validation subset out of the training trials."""
    if fraction <= 0:
        return np.asarray(train_idx), np.array([], dtype=int)
    rng = np.random.default_rng(seed)
    labels = np.asarray(labels)
    val = []
    for cls in np.unique(labels[train_idx]):
        members = rng.permutation(train_idx[labels[train_idx] == cls])
        val.extend(members[: int(round(fraction * len(members)))])
    val = np.sort(np.asarray(val, dtype=int))
    return np.setdiff1d(train_idx, val), val


@dataclass(frozen=True)
class Metrics:
    trial_accuracy: float
    window_accuracy: float
    per_class_accuracy: tuple[float, ...]
    n_trials: int
    n_windows: int


def compute_metrics(probs, windows: WindowSet) -> Metrics:
    preds = trial_predictions(probs, windows.trial)
    truth = {int(t): int(l) for t, l in zip(windows.trial, windows.y)}
    ids = sorted(preds)
    hits = np.array([preds[t] == truth[t] for t in ids])
    true = np.array([truth[t] for t in ids])
    per_class = tuple(
        float(hits[true == c].mean()) if np.any(true == c) else float("nan") for c in range(N_CLASSES)
    )
    return Metrics(
        trial_accuracy=float(hits.mean()),
        window_accuracy=float(np.mean(np.asarray(probs).argmax(axis=1) == windows.y)),
        per_class_accuracy=per_class,
        n_trials=len(ids),
        n_windows=len(windows),
    )


@dataclass(eq=False)
class FoldResult:
    fold: int
    train_trials: np.ndarray
    test_trials: np.ndarray
    metrics: Metrics
    window_probs: np.ndarray
    windows: WindowSet
    model: Model | None = None
    history: History | None = None


@dataclass(eq=False)
class Fitted:
    predict: Callable[[WindowSet], np.ndarray]
    model: Model | None = None
    history: History | None = None


Fitter = Callable[[WindowSet, WindowSet, TrainConfig], Fitted]


def cnn_fitter(train_ws: WindowSet, val_ws: WindowSet, cfg: TrainConfig) -> Fitted:
    model = new_model(train_ws.x.shape[2], train_ws.x.shape[3], cfg)
    best, history = train(model, train_ws, val_ws, cfg)
    return Fitted(lambda ws: best.predict_proba(ws.x), best, history)


@dataclass
class SubjectRow:
    subject: str
    mode: str
    folds: list[FoldResult] = field(default_factory=list)

    @property
    def accuracies(self) -> np.ndarray:
        return np.array([f.metrics.trial_accuracy for f in self.folds])

    @property
    def mean(self) -> float:
        return float(self.accuracies.mean())

    @property
    def std(self) -> float:
        return float(self.accuracies.std(ddof=0))


@dataclass
class Report:
    mode: str
    rows: list[SubjectRow]

    @property
    def grand_mean(self) -> float:
        return float(np.mean([r.mean for r in self.rows]))

    @property
    def grand_std(self) -> float:
        return float(np.std([r.mean for r in self.rows], ddof=0))


def _check_disjoint(a, b, what: str):
    common = set(np.asarray(a).tolist()) & set(np.asarray(b).tolist())
    if common:
        raise LeakageError(f"{what} share trials {sorted(common)[:5]}")


def intra_session_eval(trials: TrialSet, cfg: EvalConfig = EvalConfig(),
                       fit: Fitter = cnn_fitter, windows: WindowSet | None = None) -> SubjectRow:
    """K-fold cross-validation within one session.

    Each fold trains on the remaining folds (minus an inner validation
    subset used for snapshot selection) and scores the held-out fold.
    """
    sessions = {t.session_id for t in trials}
    subjects = sorted({t.subject_id for t in trials})
    if len(subjects) != 1:
        raise DataError(f"intra-session evaluation needs one subject, got {subjects}")
    if len(sessions) != 1:
        log.info("pooling sessions %s into one cross-validation set", sorted(sessions))
    labels = trials.labels
    plan = make_folds(labels, cfg.n_folds, cfg.seed, cfg.stratified)
    ws = windows if windows is not None else preprocess(trials, cfg.pipeline, dtype=cfg.train.dtype)
    row = SubjectRow(subjects[0], "intra")
    for k in range(plan.n_folds):
        train_idx, test_idx = plan.split(k)
        fit_idx, val_idx = inner_split(labels, train_idx, cfg.val_fraction, derive_seed(cfg.seed, f"val/{k}"))
        _check_disjoint(train_idx, test_idx, f"fold {k} train and test")
        _check_disjoint(val_idx, test_idx, f"fold {k} validation and test")
        train_cfg = replace(cfg.train, seed=derive_seed(cfg.seed, f"train/{k}"))
        fitted = fit(ws.subset_trials(fit_idx), ws.subset_trials(val_idx), train_cfg)
        test_ws = ws.subset_trials(test_idx)
        probs = np.asarray(fitted.predict(test_ws))
        metrics = compute_metrics(probs, test_ws)
        log.info("fold %d: trial acc %.4f (%d trials)", k, metrics.trial_accuracy, metrics.n_trials)
        row.folds.append(FoldResult(k, train_idx, test_idx, metrics, probs, test_ws,
                                    fitted.model, fitted.history))
    return row


def _trial_digest(trial) -> bytes:
    return np.ascontiguousarray(trial.data, dtype="<f4").tobytes()


def check_sessions_disjoint(session1: TrialSet, session2: TrialSet) -> None:
    if session1 is session2:
        raise LeakageError("the same session was passed for training and testing")
    ids1 = {(t.subject_id, t.session_id) for t in session1}
    ids2 = {(t.subject_id, t.session_id) for t in session2}
    if ids1 & ids2:
        raise LeakageError(f"sessions overlap on (subject, session) ids {sorted(ids1 & ids2)}")
    seen = {_trial_digest(t) for t in session1}
    for i, t in enumerate(session2):
        if _trial_digest(t) in seen:
            raise LeakageError("identical trial found in both sessions", i)


def inter_session_eval(session1: TrialSet, session2: TrialSet, cfg: EvalConfig = EvalConfig(),
                       fit: Fitter = cnn_fitter) -> SubjectRow:
    """Train on all of session 1, test on all of session 2."""
    check_sessions_disjoint(session1, session2)
    n1 = len(session1)
    ws1 = preprocess(session1, cfg.pipeline, dtype=cfg.train.dtype)
    ws2 = preprocess(session2, cfg.pipeline, trial_ids=np.arange(n1, n1 + len(session2)),
                     dtype=cfg.train.dtype)
    labels = session1.labels
    fit_idx, val_idx = inner_split(labels, np.arange(n1), cfg.val_fraction, derive_seed(cfg.seed, "val/inter"))
    train_cfg = replace(cfg.train, seed=derive_seed(cfg.seed, "train/inter"))
    fitted = fit(ws1.subset_trials(fit_idx), ws1.subset_trials(val_idx), train_cfg)
    probs = np.asarray(fitted.predict(ws2))
    metrics = compute_metrics(probs, ws2)
    subject = session1[0].subject_id
    row = SubjectRow(subject, "inter")
    row.folds.append(FoldResult(0, np.arange(n1), np.arange(n1, n1 + len(session2)), metrics,
                                probs, ws2, fitted.model, fitted.history))
    return row


# -- rendering ---------------------------------------------------------------

TITLES = {
    "intra": "Intra-session classification performance",
    "inter": "Inter-session classification performance",
}


def _cell(mean: float, std: float) -> str:
    return f"{100 * mean:.2f}% (± {100 * std:.2f})"


def render_report(report: Report, format: str = "text") -> str:
    if not report.rows or any(len(r.folds) == 0 for r in report.rows):
        raise ValueError("report has no folds")
    if format == "csv":
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["subject", "mode", "fold", "trial_acc", "window_acc", "n_trials"])
        for row in report.rows:
            for f in row.folds:
                m = f.metrics
                w.writerow([row.subject, row.mode, f.fold, f"{m.trial_accuracy:.6f}",
                            f"{m.window_accuracy:.6f}", m.n_trials])
            accs = [f.metrics.window_accuracy for f in row.folds]
            w.writerow([row.subject, row.mode, "mean", f"{row.mean:.6f}", f"{np.mean(accs):.6f}",
                        sum(f.metrics.n_trials for f in row.folds)])
        return out.getvalue()
    if format != "text":
        raise ValueError(f"unknown report format {format!r}")
    title = TITLES.get(report.mode, f"{report.mode} classification performance")
    lines = [
        title,
        "trial-level accuracy; (± x) is the population std over folds, over subjects for Avg.",
        "",
        f"{'':<10}{'Proposed Method':>20}",
    ]
    for row in report.rows:
        lines.append(f"{'Sub ' + row.subject:<10}{_cell(row.mean, row.std):>20}")
    lines.append(f"{'Avg.':<10}{_cell(report.grand_mean, report.grand_std):>20}")
    return "\n".join(lines) + "\n"


def report_from_csv(text: str) -> Report:
    """Rebuild a report from its CSV form (fold rows only)."""
    reader = csv.DictReader(io.StringIO(text))
    rows: dict[str, SubjectRow] = {}
    mode = None
    for rec in reader:
        if rec["fold"] == "mean":
            continue
        mode = mode or rec["mode"]
        row = rows.setdefault(rec["subject"], SubjectRow(rec["subject"], rec["mode"]))
        metrics = Metrics(float(rec["trial_acc"]), float(rec["window_acc"]), (), int(rec["n_trials"]), 0)
        row.folds.append(FoldResult(int(rec["fold"]), np.array([]), np.array([]), metrics,
                                    np.zeros((0, N_CLASSES)), None))
    if not rows:
        raise ValueError("report CSV has no fold rows")
    return Report(mode, list(rows.values()))
