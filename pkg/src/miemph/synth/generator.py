"""Synthetic motor-imagery EEG with planted class-specific band motifs.

Each trial is 1/f background noise on every channel plus, on the channels of
its class motif, a sinusoid whose amplitude is ``rest_amp`` before the MI
window and ``mi_amp`` inside it. Phases are random per trial and channel.
All randomness comes from xoshiro256** streams keyed by
``(seed, trial, channel)``, so a trial's content does not depend on how many
other trials are generated.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import jsonschema
import numpy as np
from scipy import signal as sps

from ..core import ChannelSet, N_CLASSES, Trial, TrialSet
from .rng import Xoshiro256StarStar, mix_seed

# 3 poles / 3 zeros approximating a -10 dB/decade slope (J. O. Smith's pinking filter)
PINK_B = np.array([0.049922035, -0.095993537, 0.050612699, -0.004408786])
PINK_A = np.array([1.0, -2.494956002, 2.017265875, -0.522189400])
WARMUP = 500

_NOISE_STREAM = 0
_MOTIF_STREAM = 1
_ORDER_STREAM = 2


class MotifError(ValueError):
    pass


@dataclass(frozen=True)
class ClassMotif:
    label: int
    channels: tuple[int, ...]
    freq: float
    rest_amp: float
    mi_amp: float

    @property
    def modulation(self) -> str:
        return "amplify" if self.mi_amp >= self.rest_amp else "attenuate"


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    n_channels: int = 60
    fs: float = 250.0
    trial_s: float = 10.0
    mi_window: tuple[float, float] = (6.0, 10.0)
    trials_per_class: int = 50
    noise: float = 1.0
    motifs: tuple[ClassMotif, ...] = ()
    subject_id: str = "S01"
    session_id: int = 1
    amp_jitter: float = 0.2
    freq_jitter: float = 0.0
    amp_scale: float = 1.0
    freq_shift: float = 0.0

    def validate(self) -> None:
        if self.n_channels < 1 or self.trials_per_class < 1:
            raise MotifError("n_channels and trials_per_class must be positive")
        if not (0 <= self.mi_window[0] < self.mi_window[1] <= self.trial_s):
            raise MotifError(f"MI window {self.mi_window} outside trial of {self.trial_s} s")
        if self.noise < 0:
            raise MotifError("noise amplitude must be non-negative")
        for m in self.motifs:
            if m.label not in range(N_CLASSES):
                raise MotifError(f"motif label {m.label} not a class id")
            if not (0 < m.freq < self.fs / 2):
                raise MotifError(f"motif frequency {m.freq} Hz outside (0, {self.fs / 2})")
            if m.rest_amp < 0 or m.mi_amp < 0:
                raise MotifError("motif amplitudes must be non-negative")
            if not m.channels or any(not (0 <= c < self.n_channels) for c in m.channels):
                raise MotifError(f"motif channels {m.channels} outside 0..{self.n_channels - 1}")

    def perturbed(self, *, session_id: int, seed: int, amp_scale: float = 1.0,
                  freq_shift: float = 0.0, freq_jitter: float | None = None) -> "SynthConfig":
        """Same motifs, another session: new seed plus amplitude/frequency drift."""
        return replace(
            self,
            session_id=session_id,
            seed=seed,
            amp_scale=amp_scale,
            freq_shift=freq_shift,
            freq_jitter=self.freq_jitter if freq_jitter is None else freq_jitter,
        )


def default_separable_profile(seed: int = 0) -> SynthConfig:
    """Three classes on disjoint channel triplets at 10, 20 and 13 Hz."""
    return SynthConfig(
        seed=seed,
        noise=1.0,
        motifs=(
            ClassMotif(0, (5, 6, 7), 10.0, rest_amp=0.5, mi_amp=1.5),
            ClassMotif(1, (25, 26, 27), 20.0, rest_amp=0.5, mi_amp=1.5),
            ClassMotif(2, (45, 46, 47), 13.0, rest_amp=0.5, mi_amp=1.5),
        ),
    )


def _pink_inband_rms(fs: float, f1: float = 8.0, f2: float = 30.0) -> float:
    # RMS of unit-variance white noise after the pinking filter, restricted to [f1, f2]
    freqs = np.linspace(f1, f2, 2048)
    _, h = sps.freqz(PINK_B, PINK_A, worN=freqs, fs=fs)
    return float(np.sqrt(np.trapezoid(2.0 / fs * np.abs(h) ** 2, freqs)))


def label_sequence(cfg: SynthConfig) -> np.ndarray:
    """Balanced labels in a seed-determined order."""
    labels = np.repeat(np.arange(N_CLASSES), cfg.trials_per_class)
    keys = Xoshiro256StarStar([mix_seed(cfg.seed, _ORDER_STREAM)]).uniform(len(labels))[0]
    return labels[np.argsort(keys, kind="stable")]


def generate_trialset(cfg: SynthConfig, chunk: int = 30) -> TrialSet:
    cfg.validate()
    fs = cfg.fs
    n_samples = int(round(cfg.trial_s * fs))
    mi_start = int(round(cfg.mi_window[0] * fs))
    mi_stop = int(round(cfg.mi_window[1] * fs))
    labels = label_sequence(cfg)
    noise_gain = cfg.noise / _pink_inband_rms(fs)
    t = np.arange(n_samples) / fs
    by_label = {m.label: m for m in cfg.motifs}
    n_ch = cfg.n_channels

    trials = []
    for start in range(0, len(labels), chunk):
        idx = range(start, min(start + chunk, len(labels)))
        seeds = [mix_seed(cfg.seed, _NOISE_STREAM, i, c) for i in idx for c in range(n_ch)]
        white = Xoshiro256StarStar(seeds).normal(n_samples + WARMUP)
        pink = sps.lfilter(PINK_B, PINK_A, white, axis=-1)[:, WARMUP:] * noise_gain
        pink = pink.reshape(len(idx), n_ch, n_samples)
        for j, i in enumerate(idx):
            data = pink[j]
            motif = by_label.get(int(labels[i]))
            if motif is not None:
                rnd = Xoshiro256StarStar([mix_seed(cfg.seed, _MOTIF_STREAM, i)]).uniform(
                    2 + len(motif.channels)
                )[0]
                gain = cfg.amp_scale * (1 + cfg.amp_jitter * (2 * rnd[0] - 1))
                freq = motif.freq + cfg.freq_shift + cfg.freq_jitter * (2 * rnd[1] - 1)
                envelope = np.full(n_samples, motif.rest_amp)
                envelope[mi_start:mi_stop] = motif.mi_amp
                envelope *= gain
                for c, phase in zip(motif.channels, rnd[2:]):
                    data[c] += envelope * np.sin(2 * np.pi * (freq * t + phase))
            trials.append(Trial(data, fs, int(labels[i]), cfg.subject_id, cfg.session_id))
    return TrialSet(ChannelSet.numbered(n_ch), tuple(trials), fs)


# -- profile files -----------------------------------------------------------

PROFILE_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "miemph synthetic profile",
    "type": "object",
    "properties": {
        "seed": {"type": "integer", "minimum": 0},
        "n_channels": {"type": "integer", "minimum": 1},
        "fs": {"type": "number", "exclusiveMinimum": 0},
        "trial_s": {"type": "number", "exclusiveMinimum": 0},
        "mi_window": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
        "trials_per_class": {"type": "integer", "minimum": 1},
        "noise": {"type": "number", "minimum": 0},
        "subject_id": {"type": "string"},
        "session_id": {"type": "integer", "minimum": 0, "maximum": 255},
        "amp_jitter": {"type": "number", "minimum": 0, "maximum": 1},
        "freq_jitter": {"type": "number", "minimum": 0},
        "amp_scale": {"type": "number", "minimum": 0},
        "freq_shift": {"type": "number"},
        "motifs": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {
                    "label": {"type": "integer", "enum": [0, 1, 2]},
                    "channels": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1},
                    "freq": {"type": "number", "exclusiveMinimum": 0},
                    "rest_amp": {"type": "number", "minimum": 0},
                    "mi_amp": {"type": "number", "minimum": 0},
                    "modulation": {"enum": ["attenuate", "amplify"]},
                },
                "required": ["label", "channels", "freq", "rest_amp", "mi_amp"],
                "additionalProperties": False,
            },
        },
    },
    "additionalProperties": False,
}


def profile_to_dict(cfg: SynthConfig) -> dict:
    d = asdict(cfg)
    d["mi_window"] = list(cfg.mi_window)
    d["motifs"] = [
        {**asdict(m), "channels": list(m.channels), "modulation": m.modulation} for m in cfg.motifs
    ]
    return d


def profile_from_dict(d: dict) -> SynthConfig:
    try:
        jsonschema.validate(d, PROFILE_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise MotifError(f"invalid profile: {exc.message}") from None
    motifs = []
    for m in d.get("motifs", []):
        motif = ClassMotif(m["label"], tuple(m["channels"]), m["freq"], m["rest_amp"], m["mi_amp"])
        if "modulation" in m and m["modulation"] != motif.modulation:
            raise MotifError(
                f"motif for class {motif.label} declares {m['modulation']} "
                f"but rest_amp={motif.rest_amp}, mi_amp={motif.mi_amp}"
            )
        motifs.append(motif)
    fields = {k: v for k, v in d.items() if k != "motifs"}
    if "mi_window" in fields:
        fields["mi_window"] = tuple(fields["mi_window"])
    cfg = SynthConfig(**fields, motifs=tuple(motifs))
    cfg.validate()
    return cfg


def load_profile(path) -> SynthConfig:
    return profile_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def save_profile(cfg: SynthConfig, path) -> None:
    Path(path).write_text(json.dumps(profile_to_dict(cfg), indent=2) + "\n", encoding="utf-8")
