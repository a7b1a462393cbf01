"""Command-line surface: synth, preprocess, train, extract, eval, qrs, hrv, plot.

Every subcommand exits 0 on success and nonzero with a one-line
machine-parseable error otherwise (distinct codes per failure class). All
file writes are atomic. FECG_THREADS caps BLAS-level parallelism.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

import numpy as np

from . import __version__
from .analysis import (HRV_METRICS, PeakList, engzee_detect, eval_extraction,
                       hrv_report, match_peaks)
from .configfile import (ConfigError, dataclass_to_kv, kv_to_dataclass,
                         load_config, parse_kv, save_config, serialize_kv)
from .cyclegan import (CycleGanModel, LossWeights, SegmentDataset, TrainConfig,
                       extract_fecg, train)
from .errors import FecgError, FormatError
from .nn import count_params
from .preprocess import (PreprocessConfig, preprocess_fecg, preprocess_mecg,
                         stitch_segments)
from .plotting import emit_plot
from .records import (RecordFile, load_segment_batch, read_record,
                      save_segment_batch, write_record)
from .signals import Signal
from .synth import MixtureSpec, gen_coincidence_stress, gen_recording

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_MISSING_FILE = 3
EXIT_CONFIG = 4
EXIT_FORMAT = 5


def _cap_threads():
    cap = os.environ.get("FECG_THREADS")
    if not cap:
        return
    try:
        import threadpoolctl
        threadpoolctl.threadpool_limits(limits=max(1, int(cap)))
    except (ImportError, ValueError):
        pass


def _atomic_text(path, body: str):
    import tempfile
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".out-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(body)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_kv(path, mapping: dict):
    _atomic_text(path, serialize_kv({k: repr(v) if isinstance(v, float) else str(v)
                                     for k, v in mapping.items()}))


# ---------------------------------------------------------------------------

def _cmd_synth(args) -> int:
    if args.config:
        spec = load_config(MixtureSpec, args.config)
    else:
        spec = MixtureSpec()
    spec.seed = args.seed
    if args.duration is not None:
        spec.duration_s = args.duration
    rec = gen_coincidence_stress(spec) if args.coincidence else gen_recording(spec)
    os.makedirs(args.out, exist_ok=True)
    ext = args.format
    labels = [f"abd{i}" for i in range(rec.abdominal.channel_count)]
    abdominal = RecordFile(
        record_id=f"synth-{spec.seed}", sample_rate_hz=spec.rate_hz,
        channel_labels=labels, data=rec.abdominal.as_array(),
        annotations=rec.maternal_peaks.indices)
    fetal = RecordFile(
        record_id=f"synth-{spec.seed}-fetal", sample_rate_hz=spec.rate_hz,
        channel_labels=["fecg"], data=rec.fetal_truth.samples[None, :],
        annotations=rec.fetal_peaks.indices)
    write_record(abdominal, os.path.join(args.out, f"abdominal.{ext}"), fmt=ext)
    write_record(fetal, os.path.join(args.out, f"fetal_truth.{ext}"), fmt=ext)
    save_config(spec, os.path.join(args.out, "mixture.cfg"))
    print(f"wrote abdominal.{ext} fetal_truth.{ext} mixture.cfg to {args.out}")
    return EXIT_OK


def _cmd_preprocess(args) -> int:
    cfg = load_config(PreprocessConfig, args.config) if args.config else PreprocessConfig()
    os.makedirs(args.out, exist_ok=True)
    wrote = []
    if args.mecg:
        rec = read_record(args.mecg)
        batch = preprocess_mecg(rec.to_multisignal(), cfg)
        path = os.path.join(args.out, "mecg_segments.fseg")
        save_segment_batch(batch, path)
        wrote.append((path, batch))
    if args.fecg:
        rec = read_record(args.fecg)
        batch = preprocess_fecg(rec.channel(0), cfg)
        path = os.path.join(args.out, "fecg_segments.fseg")
        save_segment_batch(batch, path)
        wrote.append((path, batch))
    if not wrote:
        raise ConfigError("nothing to do: pass --mecg and/or --fecg")
    for path, batch in wrote:
        print(f"{path}: {batch.n_segments} segments of {batch.segment_len} "
              f"x {batch.channel_count} ch")
    return EXIT_OK


def _parse_weights(text: str) -> LossWeights:
    parts = [float(v) for v in text.split(",")]
    if len(parts) == 3:
        return LossWeights(*parts)
    if len(parts) == 4:
        return LossWeights(parts[0], parts[1], parts[2], cycle=parts[3])
    raise ConfigError("--weights expects 'p,q,r' or 'p,q,r,cycle'")


def _cmd_train(args) -> int:
    model = CycleGanModel(n_blocks=args.blocks, seed=args.seed,
                          learning_rate=args.lr)
    if args.dry_run:
        print(f"generator parameters: {count_params(model.G1)}")
        print(f"discriminator parameters: {count_params(model.D1)}")
        print(f"total parameters: "
              f"{sum(count_params(net) for net in (model.G1, model.G2, model.D1, model.D2))}")
        return EXIT_OK
    mecg = load_segment_batch(args.mecg_segments)
    fecg = load_segment_batch(args.fecg_segments)
    if mecg.n_segments != fecg.n_segments:
        raise FormatError("mECG and fECG segment batches are not aligned")
    x = np.ascontiguousarray(mecg.data.transpose(0, 2, 1), dtype=np.float32)
    y = np.ascontiguousarray(fecg.data.transpose(0, 2, 1), dtype=np.float32)
    n_val = max(1, int(round(len(x) * args.val_fraction)))
    if n_val >= len(x):
        raise ConfigError("validation fraction leaves no training data")
    dataset = SegmentDataset(x[:-n_val], y[:-n_val], x[-n_val:], y[-n_val:])
    cfg = TrainConfig(epochs=args.epochs, learning_rate=args.lr,
                      batch_size=args.batch_size, seed=args.seed)
    os.makedirs(args.out, exist_ok=True)
    ckpt = os.path.join(args.out, "checkpoint.fecg")
    log = os.path.join(args.out, "train_log.csv")
    history = train(model, dataset, cfg, weights=_parse_weights(args.weights),
                    checkpoint_path=ckpt, log_path=log)
    best = max(h["val_pcc"] for h in history)
    print(f"trained {cfg.epochs} epochs; best validation PCC {best:.4f}; "
          f"checkpoint at {ckpt}")
    return EXIT_OK


def _cmd_extract(args) -> int:
    cfg = load_config(PreprocessConfig, args.config) if args.config else PreprocessConfig()
    model = CycleGanModel.load(args.checkpoint)
    rec = read_record(args.mecg)
    batch = preprocess_mecg(rec.to_multisignal(), cfg)
    segments = np.ascontiguousarray(batch.data.transpose(0, 2, 1), dtype=np.float32)
    pred = extract_fecg(model, segments)
    os.makedirs(args.out, exist_ok=True)
    seg_batch = batch.__class__(pred.transpose(0, 2, 1), batch.sample_rate_hz,
                                normalized=True, start_indices=batch.start_indices)
    save_segment_batch(seg_batch, os.path.join(args.out, "fecg_extracted.fseg"))
    stitched = stitch_segments(pred, batch.start_indices, cfg.target_rate_hz)
    out_rec = RecordFile(record_id=f"extracted-{os.path.basename(args.mecg)}",
                         sample_rate_hz=cfg.target_rate_hz,
                         channel_labels=["fecg"],
                         data=stitched.samples[None, :])
    write_record(out_rec, os.path.join(args.out, "fecg_extracted.bin"), fmt="bin")
    print(f"extracted {pred.shape[0]} segments "
          f"({pred.shape[0] * (cfg.segment_len - cfg.segment_overlap) / cfg.target_rate_hz:.1f} s of stride)")
    return EXIT_OK


def _cmd_eval(args) -> int:
    truth = load_segment_batch(args.truth)
    predicted = load_segment_batch(args.predicted)
    inputs = load_segment_batch(args.input) if args.input else None
    report = eval_extraction(truth, predicted, inputs=inputs)
    os.makedirs(args.out, exist_ok=True)
    csv_path = os.path.join(args.out, "eval_report.csv")
    agg = report.as_dict()
    cols = ["fold", "rmse", "mae", "pcc", "spec_corr", "spec_rmse"]
    rows = [["1", agg["rmse"], agg["mae"], agg["pcc"], agg["spec_corr"],
             agg["spec_rmse"]],
            ["aggregate", agg["rmse"], agg["mae"], agg["pcc"],
             agg["spec_corr"], agg["spec_rmse"]]]
    body = ",".join(cols) + "\n" + "\n".join(
        ",".join(str(v) for v in row) for row in rows) + "\n"
    _atomic_text(csv_path, body)
    _write_kv(os.path.join(args.out, "eval_report.kv"), agg)
    print(" ".join(f"{k}={v:.6g}" for k, v in agg.items()))
    return EXIT_OK


def _load_peaks(args) -> tuple[PeakList, RecordFile | None]:
    if args.record:
        rec = read_record(args.record)
        if args.detect or rec.annotations is None:
            return engzee_detect(rec.channel(0)), rec
        return PeakList(rec.annotations, rec.sample_rate_hz), rec
    if not args.peaks or not args.rate:
        raise ConfigError("need --record, or --peaks together with --rate")
    with open(args.peaks) as fh:
        idx = [int(line) for line in fh.read().split()]
    return PeakList(np.asarray(idx), args.rate), None


def _cmd_qrs(args) -> int:
    rec = read_record(args.record)
    detected = engzee_detect(rec.channel(0))
    os.makedirs(args.out, exist_ok=True)
    _atomic_text(os.path.join(args.out, "peaks.txt"),
                 "\n".join(str(i) for i in detected.indices) + "\n")
    msg = f"detected {len(detected)} peaks"
    if rec.annotations is not None:
        truth = PeakList(rec.annotations, rec.sample_rate_hz)
        score = match_peaks(detected, truth, tolerance_ms=args.tolerance_ms,
                            n_samples=rec.n_samples)
        _write_kv(os.path.join(args.out, "qrs_score.kv"), {
            "tp": score.tp, "fp": score.fp, "fn": score.fn, "tn": score.tn,
            "precision": score.precision, "recall": score.recall,
            "f1": score.f1, "accuracy": score.accuracy,
        })
        msg += (f"; vs annotations: precision={score.precision:.4f} "
                f"recall={score.recall:.4f} f1={score.f1:.4f}")
    print(msg)
    return EXIT_OK


def _cmd_hrv(args) -> int:
    peaks, _ = _load_peaks(args)
    report = hrv_report(peaks)
    os.makedirs(args.out, exist_ok=True)
    _write_kv(os.path.join(args.out, "hrv.kv"), report.as_dict())
    print(" ".join(f"{k}={getattr(report, k):.6g}" for k in HRV_METRICS))
    return EXIT_OK


def _cmd_plot(args) -> int:
    truth = read_record(args.truth).channel(0)
    extracted = read_record(args.extracted).channel(0)
    n = min(len(truth), len(extracted))
    if args.length:
        n = min(n, args.length)
    start = args.start
    if start + n > min(len(truth), len(extracted)):
        start = 0
    emit_plot(Signal(truth.samples[start:start + n], truth.sample_rate_hz),
              Signal(extracted.samples[start:start + n], extracted.sample_rate_hz),
              args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fecg",
        description="Fetal ECG extraction pipeline: synthesis, preprocessing, "
                    "adversarial training, extraction, and analytics.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic recording")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--duration", type=float, default=None, help="seconds")
    p.add_argument("--config", help="MixtureSpec config file")
    p.add_argument("--coincidence", action="store_true",
                   help="phase-lock fetal beats onto maternal beats")
    p.add_argument("--format", choices=("bin", "csv"), default="bin")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("preprocess", help="condition records into segment batches")
    p.add_argument("--mecg", help="abdominal record file")
    p.add_argument("--fecg", help="reference fetal record file")
    p.add_argument("--config", help="PreprocessConfig config file")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_preprocess)

    p = sub.add_parser("train", help="train the extraction model")
    p.add_argument("--mecg-segments")
    p.add_argument("--fecg-segments")
    p.add_argument("--epochs", type=int, default=150)
    p.add_argument("--lr", type=float, default=1e-5)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--blocks", type=int, default=13)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--weights", default="2,4,1",
                   help="loss weights 'p,q,r' or 'p,q,r,cycle'")
    p.add_argument("--val-fraction", type=float, default=0.2)
    p.add_argument("--dry-run", action="store_true",
                   help="print parameter counts and exit")
    p.add_argument("--out", default=".")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("extract", help="run the trained model on a record")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--mecg", required=True)
    p.add_argument("--config", help="PreprocessConfig config file")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_extract)

    p = sub.add_parser("eval", help="score extracted segments against truth")
    p.add_argument("--truth", required=True, help="truth segment batch (.fseg)")
    p.add_argument("--predicted", required=True)
    p.add_argument("--input", help="abdominal segment batch for spectral metrics")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("qrs", help="detect R peaks, score against annotations")
    p.add_argument("--record", required=True)
    p.add_argument("--tolerance-ms", type=float, default=31.25)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_qrs)

    p = sub.add_parser("hrv", help="heart-rate-variability report")
    p.add_argument("--record", help="record with annotations (or use --detect)")
    p.add_argument("--detect", action="store_true",
                   help="run the detector even if annotations exist")
    p.add_argument("--peaks", help="plain text peak indices")
    p.add_argument("--rate", type=float, help="sample rate for --peaks")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_hrv)

    p = sub.add_parser("plot", help="SVG overlay of truth vs extracted")
    p.add_argument("--truth", required=True)
    p.add_argument("--extracted", required=True)
    p.add_argument("--start", type=int, default=0)
    p.add_argument("--length", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_plot)
    return parser


def _fail(code: int, err: BaseException) -> int:
    msg = str(err).replace('"', "'")
    print(f'fecg-error code={code} kind={type(err).__name__} msg="{msg}"',
          file=sys.stderr)
    return code


def main(argv=None) -> int:
    _cap_threads()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except FileNotFoundError as err:
        return _fail(EXIT_MISSING_FILE, err)
    except ConfigError as err:
        return _fail(EXIT_CONFIG, err)
    except FormatError as err:
        return _fail(EXIT_FORMAT, err)
    except (FecgError, ValueError, FloatingPointError, OSError) as err:
        return _fail(EXIT_ERROR, err)


if __name__ == "__main__":
    sys.exit(main())
