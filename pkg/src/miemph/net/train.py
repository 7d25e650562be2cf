"""Mini-batch training with best-validation snapshot selection."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ..synth.rng import derive_seed
from .model import Model, ModelSpec
from .optim import AdamState, adam_step

log = logging.getLogger(__name__)

PRECISIONS = {"f32": np.float32, "f64": np.float64}


class TrainingDivergedError(RuntimeError):
    pass


class EmptyTrainingSetError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 32
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    seed: int = 0
    dropout_p: float = 0.5
    precision: str = "f32"

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.learning_rate <= 0:
            raise ValueError("epochs >= 0, batch_size >= 1 and learning_rate > 0 required")
        if self.optimizer != "adam":
            raise ValueError(f"unsupported optimizer {self.optimizer!r}")
        if not (0 <= self.dropout_p < 1):
            raise ValueError("dropout_p must lie in [0, 1)")
        if self.precision not in PRECISIONS:
            raise ValueError(f"precision must be one of {sorted(PRECISIONS)}")

    @property
    def dtype(self):
        return np.dtype(PRECISIONS[self.precision])


@dataclass
class History:
    epoch: list[int] = field(default_factory=list)
    train_loss: list[float] = field(default_factory=list)
    train_acc: list[float] = field(default_factory=list)
    val_acc: list[float] = field(default_factory=list)
    first_batch_loss: float | None = None
    best_epoch: int | None = None

    def __len__(self):
        return len(self.epoch)

    def to_csv(self) -> str:
        lines = ["epoch,train_loss,train_acc,val_acc"]
        for row in zip(self.epoch, self.train_loss, self.train_acc, self.val_acc):
            lines.append("{},{!r},{!r},{!r}".format(*row))
        return "\n".join(lines) + "\n"


def aggregate_trial_prediction(window_probs) -> int:
    """Mean of the windows' probability vectors, then argmax.

    Near-ties (within 1e-12) go to the lowest class id.
    """
    probs = np.asarray(window_probs, dtype=np.float64)
    if probs.ndim != 2 or len(probs) == 0:
        raise ValueError("need at least one window probability vector")
    mean = probs.mean(axis=0)
    return int(np.flatnonzero(mean >= mean.max() - 1e-12)[0])


def trial_predictions(probs, trial_ids) -> dict:
    """Map trial id -> aggregated class over its windows."""
    trial_ids = np.asarray(trial_ids)
    return {int(t): aggregate_trial_prediction(probs[trial_ids == t]) for t in np.unique(trial_ids)}


def trial_accuracy(probs, trial_ids, labels) -> float:
    preds = trial_predictions(probs, trial_ids)
    truth = {int(t): int(l) for t, l in zip(trial_ids, labels)}
    return float(np.mean([preds[t] == truth[t] for t in preds]))


def new_model(n_channels: int, in_samples: int, cfg: TrainConfig, **spec_kw) -> Model:
    spec = ModelSpec(n_channels=n_channels, in_samples=in_samples, dropout_p=cfg.dropout_p, **spec_kw)
    rng = np.random.default_rng(derive_seed(cfg.seed, "init"))
    return Model.initialize(spec, rng, cfg.dtype)


def train(model: Model, train_windows, val_windows, cfg: TrainConfig):
    """Fit ``model`` and return ``(best_model, history)``.

    The returned model is a snapshot with the highest validation trial
    accuracy (earliest epoch on ties). Without validation windows, the last
    epoch is returned.
    """
    if len(train_windows) == 0:
        raise EmptyTrainingSetError("empty training set")
    history = History()
    if cfg.epochs == 0:
        return model, history
    if val_windows is not None and len(val_windows):
        overlap = set(np.unique(train_windows.trial)) & set(np.unique(val_windows.trial))
        if overlap:
            raise ValueError(f"train and validation share trials {sorted(overlap)[:5]}")

    shuffle_rng = np.random.default_rng(derive_seed(cfg.seed, "shuffle"))
    dropout_rng = np.random.default_rng(derive_seed(cfg.seed, "dropout"))
    state = AdamState(lr=cfg.learning_rate)
    x, y = train_windows.x, train_windows.y
    n = len(y)
    best, best_acc = None, -1.0

    for epoch in range(1, cfg.epochs + 1):
        order = shuffle_rng.permutation(n)
        losses, correct = [], 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            probs, cache = model.forward(x[idx], training=True, rng=dropout_rng)
            grads, loss = model.backward(cache, y[idx])
            if not math.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
                raise TrainingDivergedError(f"non-finite loss or gradient at epoch {epoch}")
            if history.first_batch_loss is None:
                history.first_batch_loss = loss
            with np.errstate(over="ignore", invalid="ignore"):
                adam_step(model.params, grads, state)
            if not all(np.all(np.isfinite(v)) for v in model.params.values()):
                raise TrainingDivergedError(f"non-finite parameters after update at epoch {epoch}")
            model.bump()
            losses.append(loss * len(idx))
            correct += int(np.sum(probs.argmax(axis=1) == y[idx]))

        if val_windows is not None and len(val_windows):
            val_probs = model.predict_proba(val_windows.x)
            val_acc = trial_accuracy(val_probs, val_windows.trial, val_windows.y)
        else:
            val_acc = float("nan")
        history.epoch.append(epoch)
        history.train_loss.append(float(np.sum(losses) / n))
        history.train_acc.append(correct / n)
        history.val_acc.append(val_acc)
        log.debug("epoch %d loss %.4f train %.3f val %.3f", epoch, history.train_loss[-1],
                  history.train_acc[-1], val_acc)
        if math.isnan(val_acc) or val_acc > best_acc:
            best, best_acc = model.copy(), val_acc
            history.best_epoch = epoch
    return best, history
