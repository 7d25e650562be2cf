"""Trial -> network-input preprocessing: filter, epoch, window, emphasize."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import TrialSet, extract_epoch
from .dsp import FirSpec, WindowSpec, design_bandpass_fir, filtfilt, slide_windows
from .emphasis import EmphasisConfig, SilentChannelError, compute_weights, apply_emphasis


@dataclass(frozen=True)
class PipelineConfig:
    band: tuple[float, float] = (8.0, 30.0)
    order: int = 30
    epoch: tuple[float, float] = (6.0, 10.0)
    window: WindowSpec = field(default_factory=WindowSpec)
    emphasis: EmphasisConfig = field(default_factory=EmphasisConfig)
    filter_first: bool = True


@dataclass(frozen=True, eq=False)
class WindowSet:
    """Network inputs ``x`` (N, 1, K, W) with per-window labels and source trial."""

    x: np.ndarray
    y: np.ndarray
    trial: np.ndarray
    weights: np.ndarray | None = None
    weight_ids: np.ndarray | None = None

    def __len__(self):
        return len(self.y)

    def subset_trials(self, trial_ids) -> "WindowSet":
        ids = np.asarray(list(trial_ids))
        keep = np.isin(self.trial, ids)
        weights, weight_ids = self.weights, self.weight_ids
        if weights is not None and weight_ids is not None:
            wkeep = np.isin(weight_ids, ids)
            weights, weight_ids = weights[wkeep], weight_ids[wkeep]
        return WindowSet(self.x[keep], self.y[keep], self.trial[keep], weights, weight_ids)

    def weights_for(self, trial_id) -> np.ndarray:
        """Emphasis weights (K,) of one trial."""
        pos = np.flatnonzero(self.weight_ids == trial_id)
        if len(pos) == 0:
            raise KeyError(f"no weights for trial {trial_id}")
        return self.weights[pos[0]]

    @property
    def trial_ids(self) -> np.ndarray:
        return np.unique(self.trial)


def preprocess(trialset: TrialSet, cfg: PipelineConfig = PipelineConfig(),
               trial_ids=None, dtype=np.float32) -> WindowSet:
    """Windows for every trial; ``trial_ids`` tags them (defaults to 0..n-1).

    Emphasis weights are computed per trial from that trial's own filtered
    MI epoch. The (n_trials, K) weight matrix rides along on the result,
    row-aligned with ``weight_ids``.
    """
    kernel = design_bandpass_fir(FirSpec(cfg.order, cfg.band[0], cfg.band[1], trialset.fs))
    ids = np.arange(len(trialset)) if trial_ids is None else np.asarray(trial_ids)
    xs, ys, owners, weights = [], [], [], []
    for tid, trial in zip(ids, trialset):
        if cfg.filter_first:
            filtered = type(trial)(filtfilt(kernel, trial.data), trial.fs, trial.label,
                                   trial.subject_id, trial.session_id)
            epoch = extract_epoch(filtered, *cfg.epoch)
        else:
            raw = extract_epoch(trial, *cfg.epoch)
            epoch = type(raw)(filtfilt(kernel, raw.data), raw.fs, raw.t0, raw.t1,
                              raw.label, raw.subject_id, raw.session_id)
        try:
            w = compute_weights(epoch, cfg.emphasis)
        except SilentChannelError as exc:
            name = trialset.channels.labels[exc.channel]
            raise SilentChannelError(exc.channel, name) from None
        weights.append(w.weights)
        for win in slide_windows(epoch, cfg.window):
            xs.append(apply_emphasis(win, w))
            ys.append(trial.label)
            owners.append(tid)
    x = np.stack(xs)[:, None].astype(dtype)
    return WindowSet(x, np.asarray(ys, dtype=int), np.asarray(owners), np.asarray(weights), ids.copy())
