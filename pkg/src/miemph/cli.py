"""Command-line entry point.

Exit codes: 0 success, 1 I/O failure, 2 bad configuration, 3 bad data
(including leakage between train and test), 4 training diverged.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from . import __version__
from .core import DataError, WindowRangeError, extract_epoch, load_trialset, save_trialset
from .dsp import FirSpec, WindowSpec, design_bandpass_fir, filtfilt, periodogram
from .emphasis import MODES, EmphasisConfig, SilentChannelError
from .evaluate import (
    EvalConfig,
    Report,
    check_sessions_disjoint,
    inter_session_eval,
    intra_session_eval,
    render_report,
    report_from_csv,
)
from .net.checkpoint import save_checkpoint
from .net.model import ShapeError
from .net.train import TrainConfig, TrainingDivergedError
from .pipeline import PipelineConfig
from .synth import MotifError, default_separable_profile, generate_trialset, load_profile

log = logging.getLogger("miemph")

EXIT_OK, EXIT_IO, EXIT_CONFIG, EXIT_DATA, EXIT_DIVERGED = 0, 1, 2, 3, 4
SEED_ENV = "MIEMPH_SEED"
PROFILES = {"separable": default_separable_profile}


class ConfigError(ValueError):
    pass


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# -- run configuration -------------------------------------------------------


@dataclass
class RunConfig:
    mode: str = "intra"
    data: str | None = None
    train: str | None = None
    valid: str | None = None
    out_dir: str = "run"
    cv_source: str = "validation"
    band: tuple[float, float] = (8.0, 30.0)
    order: int = 30
    epoch_window: tuple[float, float] = (6.0, 10.0)
    win_length: float = 2.0
    overlap: float = 0.5
    emphasis_mode: str = "linear-mean-norm"
    filter_first: bool = True
    epochs: int = 100
    batch_size: int = 32
    lr: float = 1e-3
    precision: str = "f32"
    dropout: float = 0.5
    folds: int = 5
    val_fraction: float = 0.2
    seed: int = 0

    @classmethod
    def merge(cls, file_values: dict, cli_values: dict, env_seed: str | None) -> "RunConfig":
        """Defaults < config file < MIEMPH_SEED < command-line flags."""
        known = {f.name for f in fields(cls)}
        unknown = set(file_values) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        values = dict(file_values)
        if env_seed is not None:
            try:
                values["seed"] = int(env_seed)
            except ValueError:
                raise ConfigError(f"{SEED_ENV}={env_seed!r} is not an integer") from None
        values.update({k: v for k, v in cli_values.items() if k in known and v is not None})
        for key in ("band", "epoch_window"):
            if key in values:
                values[key] = tuple(float(v) for v in values[key])
        cfg = cls(**values)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.mode not in ("intra", "inter"):
            raise ConfigError(f"mode must be intra or inter, got {self.mode!r}")
        if self.cv_source not in ("validation", "training", "both"):
            raise ConfigError("cv-source must be validation, training or both")
        if self.emphasis_mode not in MODES:
            raise ConfigError(f"emphasis mode must be one of {MODES}")
        if self.mode == "inter" and not (self.train and self.valid):
            raise ConfigError("inter mode needs --train and --valid")
        if self.mode == "intra" and not self.cv_paths():
            raise ConfigError(f"intra mode with cv-source {self.cv_source} needs a dataset path")
        for path in [self.data, self.train, self.valid]:
            if path is not None and not Path(path).is_file():
                raise ConfigError(f"dataset not found: {path}")
        try:
            self.eval_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def cv_paths(self) -> list[str]:
        if self.data:
            return [self.data]
        chosen = {
            "validation": [self.valid],
            "training": [self.train],
            "both": [self.train, self.valid],
        }[self.cv_source]
        return [p for p in chosen if p] if all(chosen) else []

    def eval_config(self) -> EvalConfig:
        pipeline = PipelineConfig(
            band=self.band,
            order=self.order,
            epoch=self.epoch_window,
            window=WindowSpec(self.win_length, self.overlap),
            emphasis=EmphasisConfig(self.band[0], self.band[1], self.emphasis_mode),
            filter_first=self.filter_first,
        )
        FirSpec(self.order, self.band[0], self.band[1], 250.0)
        train = TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.lr,
            seed=self.seed,
            dropout_p=self.dropout,
            precision=self.precision,
        )
        return EvalConfig(pipeline, train, self.folds, True, self.val_fraction, self.seed)


# -- commands ----------------------------------------------------------------


def cmd_synth(args) -> int:
    try:
        if args.profile_file:
            cfg = load_profile(args.profile_file)
        else:
            cfg = PROFILES[args.profile]()
        overrides = {
            "seed": args.seed if args.seed is not None else _env_seed(cfg.seed),
            "session_id": args.session,
            "subject_id": args.subject,
            "trials_per_class": args.trials_per_class,
            "amp_scale": args.amp_scale,
            "freq_shift": args.freq_shift,
            "freq_jitter": args.freq_jitter,
        }
        cfg = type(cfg)(**{**asdict_shallow(cfg), **{k: v for k, v in overrides.items() if v is not None}})
        cfg.validate()
        trialset = generate_trialset(cfg)
    except (MotifError, ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        save_trialset(trialset, args.out, args.format)
    except OSError as exc:
        print(f"error: cannot write {args.out}: {exc}", file=sys.stderr)
        return EXIT_IO
    log.info("wrote %d trials to %s", len(trialset), args.out)
    return EXIT_OK


def asdict_shallow(obj) -> dict:
    return {f.name: getattr(obj, f.name) for f in fields(obj)}


def _env_seed(default: int) -> int:
    value = os.environ.get(SEED_ENV)
    if value is None:
        return default
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"{SEED_ENV}={value!r} is not an integer") from None


def cmd_import(args) -> int:
    try:
        trialset = load_trialset(args.input, args.in_format, fs=args.fs)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    try:
        save_trialset(trialset, args.out, args.out_format)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


def _parse_trial_selection(text: str | None):
    if text is None:
        return None
    text = text.strip()
    if not text:
        return []
    return [int(t) for t in text.split(",") if t.strip()]


def cmd_psd_dump(args) -> int:
    try:
        trialset = load_trialset(args.data, fs=args.fs)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    try:
        selection = _parse_trial_selection(args.trials)
    except ValueError:
        print("error: --trials must be a comma-separated list of integers", file=sys.stderr)
        return EXIT_CONFIG
    indices = range(len(trialset)) if selection is None else selection
    if any(not (0 <= i < len(trialset)) for i in indices):
        print(f"error: trial index out of range (0..{len(trialset) - 1})", file=sys.stderr)
        return EXIT_DATA
    if args.label is not None:
        indices = [i for i in indices if trialset[i].label == args.label]
    f1 = args.f1 if args.f1 is not None else 0.0
    f2 = args.f2 if args.f2 is not None else trialset.fs / 2
    try:
        kernel = None if args.no_filter else design_bandpass_fir(
            FirSpec(args.order, args.band[0], args.band[1], trialset.fs)
        )
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    try:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["subject", "trial", "channel", "freq_hz", "power"])
        for i in indices:
            trial = trialset[i]
            data = trial.data if kernel is None else filtfilt(kernel, trial.data)
            try:
                epoch = extract_epoch(type(trial)(data, trial.fs, trial.label, trial.subject_id,
                                                  trial.session_id), *args.epoch_window)
            except WindowRangeError as exc:
                print(f"error: {exc}", file=sys.stderr)
                return EXIT_DATA
            psd = periodogram(epoch.data, epoch.fs)
            keep = (psd.freqs >= f1) & (psd.freqs <= f2)
            freqs = psd.freqs[keep]
            for name, power in zip(trialset.channels.labels, psd.power[:, keep]):
                for f, p in zip(freqs, power):
                    writer.writerow([trial.subject_id, i, name, repr(float(f)), repr(float(p))])
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


def _weights_csv(rows) -> str:
    lines = ["subject,trial,channel,weight"]
    for subject, trial, channel, weight in rows:
        lines.append(f"{subject},{trial},{channel},{weight!r}")
    return "\n".join(lines) + "\n"


def cmd_run(args) -> int:
    try:
        file_values = json.loads(Path(args.config).read_text()) if args.config else {}
        cli_values = {k: v for k, v in vars(args).items() if k not in ("func", "config", "verbose")}
        cfg = RunConfig.merge(file_values, cli_values, os.environ.get(SEED_ENV))
        eval_cfg = cfg.eval_config()
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out_dir = Path(cfg.out_dir)
    try:
        if cfg.mode == "inter":
            if Path(cfg.train).resolve() == Path(cfg.valid).resolve():
                print("error: training and validation sessions are the same file (leakage)", file=sys.stderr)
                return EXIT_DATA
            session1 = load_trialset(cfg.train)
            session2 = load_trialset(cfg.valid)
            check_sessions_disjoint(session1, session2)
            row = inter_session_eval(session1, session2, eval_cfg)
            inputs = [cfg.train, cfg.valid]
            channels = session1.channels.labels
        else:
            paths = cfg.cv_paths()
            sets = [load_trialset(p) for p in paths]
            trials = sets[0]
            if len(sets) > 1:
                trials = type(trials)(trials.channels, trials.trials + sets[1].trials, trials.fs)
            row = intra_session_eval(trials, eval_cfg)
            inputs = paths
            channels = trials.channels.labels
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except SilentChannelError as exc:
        print(f"error: {exc} (use another --emphasis-mode)", file=sys.stderr)
        return EXIT_DATA
    except (DataError, WindowRangeError, ShapeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TrainingDivergedError as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED

    report = Report(cfg.mode, [row])
    outputs = {}
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "report.csv").write_text(render_report(report, "csv"), encoding="utf-8")
        (out_dir / "report.txt").write_text(render_report(report, "text"), encoding="utf-8")
        outputs["report.csv"] = out_dir / "report.csv"
        outputs["report.txt"] = out_dir / "report.txt"
        weight_rows = []
        for fold in row.folds:
            tag = f"fold{fold.fold}" if cfg.mode == "intra" else "inter"
            if fold.model is not None:
                path = out_dir / f"model_{tag}.minet"
                save_checkpoint(fold.model, path)
                outputs[path.name] = path
            if fold.history is not None:
                path = out_dir / f"history_{tag}.csv"
                path.write_text(fold.history.to_csv(), encoding="utf-8")
                outputs[path.name] = path
            ws = fold.windows
            for tid in sorted(int(t) for t in ws.trial_ids):
                weight_rows.extend(
                    (row.subject, tid, ch, float(w))
                    for ch, w in zip(channels, ws.weights_for(tid))
                )
        weight_rows.sort(key=lambda r: r[1])
        (out_dir / "weights.csv").write_text(_weights_csv(weight_rows), encoding="utf-8")
        outputs["weights.csv"] = out_dir / "weights.csv"
        manifest = {
            "tool": "miemph",
            "version": __version__,
            "command": "run",
            "config": _jsonable(asdict(cfg)),
            "seed": cfg.seed,
            "inputs": {str(p): sha256_file(p) for p in inputs},
            "outputs": {name: sha256_file(p) for name, p in sorted(outputs.items())},
        }
        (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    print(render_report(report, "text"), end="")
    return EXIT_OK


def _jsonable(value):
    if isinstance(value, tuple):
        return list(value)
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    return value


def cmd_report(args) -> int:
    try:
        text = Path(args.input).read_text(encoding="utf-8")
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        report = report_from_csv(text)
        rendered = render_report(report, args.format)
    except (ValueError, KeyError) as exc:
        print(f"error: malformed report: {exc}", file=sys.stderr)
        return EXIT_DATA
    if args.out:
        Path(args.out).write_text(rendered, encoding="utf-8")
    else:
        print(rendered, end="")
    return EXIT_OK


# -- argument parsing --------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="miemph", description="Frequency-emphasis motor-imagery decoding")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic TrialSet")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--profile", choices=sorted(PROFILES), default="separable")
    src.add_argument("--profile-file", help="JSON profile")
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=["binary", "csv"], default=None)
    p.add_argument("--seed", type=int)
    p.add_argument("--session", type=int)
    p.add_argument("--subject")
    p.add_argument("--trials-per-class", type=int)
    p.add_argument("--amp-scale", type=float, help="session drift: motif amplitude factor")
    p.add_argument("--freq-shift", type=float, help="session drift: motif frequency offset (Hz)")
    p.add_argument("--freq-jitter", type=float, help="per-trial uniform frequency jitter (Hz)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("import", help="convert between CSV and binary TrialSet files")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--in-format", choices=["binary", "csv"])
    p.add_argument("--out-format", choices=["binary", "csv"])
    p.add_argument("--fs", type=float, default=250.0, help="sampling rate for CSV input")
    p.set_defaults(func=cmd_import)

    p = sub.add_parser("run", help="preprocess, train and evaluate")
    p.add_argument("--config", help="JSON file with run options")
    p.add_argument("--mode", choices=["intra", "inter"])
    p.add_argument("--data", help="single session to cross-validate (intra)")
    p.add_argument("--train", help="session 1 / training set")
    p.add_argument("--valid", help="session 2 / validation set")
    p.add_argument("--out-dir")
    p.add_argument("--cv-source", choices=["validation", "training", "both"])
    p.add_argument("--band", type=float, nargs=2, metavar=("F_LOW", "F_HIGH"))
    p.add_argument("--order", type=int)
    p.add_argument("--epoch-window", type=float, nargs=2, metavar=("T0", "T1"))
    p.add_argument("--win-length", type=float)
    p.add_argument("--overlap", type=float)
    p.add_argument("--emphasis-mode", choices=MODES)
    p.add_argument("--filter-first", dest="filter_first", action="store_true", default=None)
    p.add_argument("--epoch-first", dest="filter_first", action="store_false",
                   help="extract the MI epoch before filtering")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--precision", choices=["f32", "f64"])
    p.add_argument("--dropout", type=float)
    p.add_argument("--folds", type=int)
    p.add_argument("--val-fraction", type=float)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("psd-dump", help="per-channel periodogram CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--out")
    p.add_argument("--fs", type=float, default=250.0)
    p.add_argument("--trials", help="comma-separated trial indices; empty selects none")
    p.add_argument("--label", type=int, choices=[0, 1, 2])
    p.add_argument("--f1", type=float)
    p.add_argument("--f2", type=float)
    p.add_argument("--band", type=float, nargs=2, default=(8.0, 30.0))
    p.add_argument("--order", type=int, default=30)
    p.add_argument("--epoch-window", type=float, nargs=2, default=(6.0, 10.0))
    p.add_argument("--no-filter", action="store_true")
    p.set_defaults(func=cmd_psd_dump)

    p = sub.add_parser("report", help="render a report CSV as text")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--format", choices=["text", "csv"], default="text")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
