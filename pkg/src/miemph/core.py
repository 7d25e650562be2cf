"""Trial-level EEG data model and on-disk formats.

Two formats are supported:

* binary (``.mieeg``), little-endian::

      b"MIEEG1" | u16 version=1 | u32 n_channels | u32 fs_hz | u32 n_trials
      per trial: u8 label | u8 session_id | u16 len + UTF-8 subject_id
                 | u32 n_samples | n_channels * n_samples f32, channel-major

* CSV, one row per (trial, channel)::

      subject,session,label,channel,s0,s1,...

  A new trial starts whenever the channel column cycles back to the first
  channel name. Labels may be ids (0, 1, 2) or class names.

Samples are f32 on disk and float64 in memory.
"""

from __future__ import annotations

import csv
import io
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

CLASS_NAMES = ("Cylindrical", "Spherical", "Lumbrical")
N_CLASSES = len(CLASS_NAMES)

MAGIC = b"MIEEG1"
VERSION = 1
_HEADER = struct.Struct("<6sHIII")
_TRIAL_HEAD = struct.Struct("<BBH")


class DataError(ValueError):
    """Base class for invalid dataset content."""

    def __init__(self, message: str, trial_index: int | None = None):
        self.trial_index = trial_index
        if trial_index is not None:
            message = f"trial {trial_index}: {message}"
        super().__init__(message)


class MalformedHeaderError(DataError):
    pass


class ChannelCountError(DataError):
    pass


class UnknownLabelError(DataError):
    pass


class NonFiniteError(DataError):
    pass


class EmptyTrialSetError(DataError):
    pass


class SamplingRateError(DataError):
    pass


class WindowRangeError(ValueError):
    pass


@dataclass(frozen=True)
class ChannelSet:
    labels: tuple[str, ...]

    def __post_init__(self):
        if len(self.labels) < 1:
            raise ValueError("channel set must contain at least one channel")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("channel labels must be unique")

    @property
    def count(self) -> int:
        return len(self.labels)

    @classmethod
    def numbered(cls, count: int) -> "ChannelSet":
        return cls(tuple(f"ch{i}" for i in range(count)))


def _freeze(data) -> np.ndarray:
    if isinstance(data, np.ndarray) and data.dtype == np.float64 and not data.flags.writeable:
        return data
    arr = np.array(data, dtype=np.float64, copy=True)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class Trial:
    """One labelled recording, ``data`` shaped (channels, samples)."""

    data: np.ndarray
    fs: float
    label: int
    subject_id: str = "S01"
    session_id: int = 1

    def __post_init__(self):
        object.__setattr__(self, "data", _freeze(self.data))
        if self.data.ndim != 2:
            raise ValueError(f"trial data must be 2-D, got shape {self.data.shape}")
        if self.label not in range(N_CLASSES):
            raise UnknownLabelError(f"unknown label {self.label!r}")
        if not np.all(np.isfinite(self.data)):
            raise NonFiniteError("NaN or Inf in payload")
        if self.fs <= 0:
            raise ValueError("sampling rate must be positive")

    @property
    def n_channels(self) -> int:
        return self.data.shape[0]

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]

    @property
    def duration(self) -> float:
        return self.n_samples / self.fs


@dataclass(frozen=True, eq=False)
class Epoch:
    data: np.ndarray
    fs: float
    t0: float
    t1: float
    label: int
    subject_id: str
    session_id: int

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True, eq=False)
class TrialSet:
    channels: ChannelSet
    trials: tuple[Trial, ...]
    fs: float = field(default=250.0)

    def __post_init__(self):
        object.__setattr__(self, "trials", tuple(self.trials))
        validate_trials(self.trials, self.channels.count, self.fs)

    def __len__(self):
        return len(self.trials)

    def __iter__(self):
        return iter(self.trials)

    def __getitem__(self, idx):
        return self.trials[idx]

    @property
    def labels(self) -> np.ndarray:
        return np.array([t.label for t in self.trials], dtype=int)

    def subset(self, indices: Iterable[int]) -> "TrialSet":
        return TrialSet(self.channels, tuple(self.trials[i] for i in indices), self.fs)

    def with_labels(self, labels: Sequence[int]) -> "TrialSet":
        trials = tuple(
            Trial(t.data, t.fs, int(lab), t.subject_id, t.session_id)
            for t, lab in zip(self.trials, labels)
        )
        return TrialSet(self.channels, trials, self.fs)


def validate_trials(trials: Sequence[Trial], n_channels: int, fs: float) -> None:
    if len(trials) == 0:
        raise EmptyTrialSetError("no trials")
    for i, trial in enumerate(trials):
        if trial.n_channels != n_channels:
            raise ChannelCountError(
                f"expected {n_channels} channels, got {trial.n_channels}", i
            )
        if trial.fs != fs:
            raise SamplingRateError(f"sampling rate {trial.fs} != {fs}", i)


def extract_epoch(trial: Trial, t0: float, t1: float) -> Epoch:
    """Slice samples ``[round(t0*fs), round(t1*fs))`` out of a trial."""
    if not (0 <= t0 < t1 <= trial.duration + 1e-9):
        raise WindowRangeError(
            f"window [{t0}, {t1}] s outside trial of {trial.duration} s"
        )
    start = int(round(t0 * trial.fs))
    stop = int(round(t1 * trial.fs))
    return Epoch(
        data=trial.data[:, start:stop],
        fs=trial.fs,
        t0=t0,
        t1=t1,
        label=trial.label,
        subject_id=trial.subject_id,
        session_id=trial.session_id,
    )


# -- binary format -----------------------------------------------------------


def dump_binary(trialset: TrialSet) -> bytes:
    fs = trialset.fs
    if fs != int(fs):
        raise ValueError("binary format stores integer sampling rates only")
    buf = io.BytesIO()
    buf.write(_HEADER.pack(MAGIC, VERSION, trialset.channels.count, int(fs), len(trialset)))
    for trial in trialset:
        sid = trial.subject_id.encode("utf-8")
        buf.write(_TRIAL_HEAD.pack(trial.label, trial.session_id, len(sid)))
        buf.write(sid)
        buf.write(struct.pack("<I", trial.n_samples))
        buf.write(np.ascontiguousarray(trial.data, dtype="<f4").tobytes())
    return buf.getvalue()


def parse_binary(raw: bytes, channel_labels: Sequence[str] | None = None) -> TrialSet:
    if len(raw) < _HEADER.size:
        raise MalformedHeaderError("file shorter than header")
    magic, version, n_channels, fs, n_trials = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise MalformedHeaderError(f"bad magic {magic!r}")
    if version != VERSION:
        raise MalformedHeaderError(f"unsupported version {version}")
    if n_channels < 1:
        raise MalformedHeaderError("zero channels")
    if n_trials == 0:
        raise EmptyTrialSetError("no trials")
    pos = _HEADER.size
    trials = []
    for i in range(n_trials):
        try:
            label, session, sid_len = _TRIAL_HEAD.unpack_from(raw, pos)
            pos += _TRIAL_HEAD.size
            subject = raw[pos : pos + sid_len].decode("utf-8")
            pos += sid_len
            (n_samples,) = struct.unpack_from("<I", raw, pos)
            pos += 4
        except (struct.error, UnicodeDecodeError) as exc:
            raise MalformedHeaderError(f"truncated trial header ({exc})", i) from None
        nbytes = 4 * n_channels * n_samples
        if pos + nbytes > len(raw):
            raise ChannelCountError("payload shorter than n_channels x n_samples", i)
        payload = np.frombuffer(raw, dtype="<f4", count=n_channels * n_samples, offset=pos)
        pos += nbytes
        if label >= N_CLASSES:
            raise UnknownLabelError(f"unknown label {label}", i)
        if not np.all(np.isfinite(payload)):
            raise NonFiniteError("NaN or Inf in payload", i)
        data = payload.reshape(n_channels, n_samples).astype(np.float64)
        data.flags.writeable = False
        trials.append(Trial(data, float(fs), int(label), subject, int(session)))
    if pos != len(raw):
        raise MalformedHeaderError(f"{len(raw) - pos} trailing bytes after last trial")
    labels = channel_labels or ChannelSet.numbered(n_channels).labels
    return TrialSet(ChannelSet(tuple(labels)), tuple(trials), float(fs))


# -- CSV format --------------------------------------------------------------


def _parse_label(token: str, trial_index: int) -> int:
    token = token.strip()
    if token in CLASS_NAMES:
        return CLASS_NAMES.index(token)
    lowered = [n.lower() for n in CLASS_NAMES]
    if token.lower() in lowered:
        return lowered.index(token.lower())
    try:
        value = int(token)
    except ValueError:
        raise UnknownLabelError(f"unknown label {token!r}", trial_index) from None
    if value not in range(N_CLASSES):
        raise UnknownLabelError(f"unknown label {value}", trial_index)
    return value


def dump_csv(trialset: TrialSet) -> str:
    n_samples = max(t.n_samples for t in trialset)
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["subject", "session", "label", "channel"] + [f"s{i}" for i in range(n_samples)])
    for trial in trialset:
        for name, row in zip(trialset.channels.labels, trial.data):
            values = [repr(float(np.float32(v))) for v in row]
            writer.writerow([trial.subject_id, trial.session_id, trial.label, name] + values)
    return out.getvalue()


def parse_csv(text: str, fs: float = 250.0) -> TrialSet:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise MalformedHeaderError("empty file") from None
    if [h.strip() for h in header[:4]] != ["subject", "session", "label", "channel"] or len(header) < 5:
        raise MalformedHeaderError(f"bad CSV header {header[:5]!r}")

    blocks: list[list[list[str]]] = []
    first_channel = None
    for row in reader:
        if not row:
            continue
        if first_channel is None:
            first_channel = row[3]
        if row[3] == first_channel or not blocks:
            blocks.append([])
        blocks[-1].append(row)
    if not blocks:
        raise EmptyTrialSetError("no trials")

    channel_names = tuple(r[3] for r in blocks[0])
    trials = []
    for i, block in enumerate(blocks):
        names = tuple(r[3] for r in block)
        if len(names) != len(channel_names):
            raise ChannelCountError(
                f"expected {len(channel_names)} channels, got {len(names)}", i
            )
        if names != channel_names:
            raise ChannelCountError("channel names differ from first trial", i)
        keys = {(r[0], r[1], r[2]) for r in block}
        if len(keys) != 1:
            raise MalformedHeaderError("subject/session/label vary within trial", i)
        subject, session, label = block[0][:3]
        label_id = _parse_label(label, i)
        try:
            rows = [[float(v) for v in r[4:] if v != ""] for r in block]
            session_id = int(session)
        except ValueError as exc:
            raise MalformedHeaderError(str(exc), i) from None
        if len({len(r) for r in rows}) != 1:
            raise ChannelCountError("channels have unequal sample counts", i)
        data = np.asarray(rows, dtype=np.float32).astype(np.float64)
        if not np.all(np.isfinite(data)):
            raise NonFiniteError("NaN or Inf in payload", i)
        trials.append(Trial(data, float(fs), label_id, subject, session_id))
    return TrialSet(ChannelSet(channel_names), tuple(trials), float(fs))


def load_trialset(path, format: str | None = None, fs: float = 250.0) -> TrialSet:
    """Read a TrialSet from ``path``.

    ``format`` is ``"binary"`` or ``"csv"``; when omitted it is inferred from
    the suffix. ``fs`` is only used for CSV, which carries no rate.
    """
    path = Path(path)
    fmt = format or ("csv" if path.suffix.lower() == ".csv" else "binary")
    if fmt == "binary":
        return parse_binary(path.read_bytes())
    if fmt == "csv":
        return parse_csv(path.read_text(encoding="utf-8"), fs=fs)
    raise ValueError(f"unknown format {fmt!r}")


def save_trialset(trialset: TrialSet, path, format: str | None = None) -> None:
    path = Path(path)
    fmt = format or ("csv" if path.suffix.lower() == ".csv" else "binary")
    if fmt == "binary":
        path.write_bytes(dump_binary(trialset))
    elif fmt == "csv":
        path.write_text(dump_csv(trialset), encoding="utf-8")
    else:
        raise ValueError(f"unknown format {fmt!r}")
