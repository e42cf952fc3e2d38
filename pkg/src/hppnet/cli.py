"""Command-line entry point: transcribe, train, eval, synth, inspect.

Failures print a single line ``error: <kind>: <message>`` on stderr and exit
with status 1; argparse usage errors exit with status 2.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import tensor as tn
from .data import make_dataset, load_manifest_samples, write_manifest
from .decode import FRAME_THRESHOLD, ONSET_THRESHOLD, decode
from .dsp import CqtConfig, WavFormatError, cqt, load_audio, write_wav
from .metrics import dumps, evaluate
from .midi import MidiFormatError, read_midi, write_midi
from .model import HEADS, VARIANTS, HPPNet, ModelConfig, Posteriorgram
from .train import TrainConfig, TrainingDiverged, evaluate_model, train_loop

SEGMENT_SECONDS = 20.0
OVERLAP_SECONDS = 1.0

_ERROR_KINDS = [
    (tn.CheckpointError, "version"),
    (WavFormatError, "wav"),
    (MidiFormatError, "midi"),
    (TrainingDiverged, "diverged"),
    (FileNotFoundError, "not-found"),
    (tn.DimensionError, "dimension"),
    (ValueError, "invalid"),
    (OSError, "io"),
]


def stitched_posteriorgram(model: HPPNet, spec: np.ndarray, frame_period: float,
                           seg_frames: int, overlap_frames: int) -> Posteriorgram:
    """Run overlapping segments and splice them at the middle of each overlap.

    Frames in the first half of an overlap come from the earlier segment, the
    rest from the later one, so an onset is never reported twice.
    """
    T = spec.shape[0]
    step = seg_frames - overlap_frames
    out = {h: np.zeros((T, model.cfg.n_keys)) for h in HEADS}
    starts = list(range(0, max(1, T - overlap_frames), step))
    for k, s in enumerate(starts):
        e = min(T, s + seg_frames)
        post = model.predict(spec[s:e], frame_period)
        lo = 0 if k == 0 else s + overlap_frames // 2
        hi = e if k == len(starts) - 1 else starts[k + 1] + overlap_frames // 2
        for h in HEADS:
            out[h][lo:hi] = getattr(post, h)[lo - s:hi - s]
    return Posteriorgram(*(out[h] for h in HEADS), frame_period=frame_period)


def cmd_transcribe(args) -> int:
    model = HPPNet.load(args.model)
    cfg = CqtConfig()
    spec = cqt(load_audio(args.input), cfg).values
    fp = cfg.frame_period
    post = stitched_posteriorgram(model, spec, fp, int(round(SEGMENT_SECONDS / fp)),
                                  int(round(OVERLAP_SECONDS / fp)))
    notes = decode(post, args.onset_thresh, args.frame_thresh)
    write_midi(notes, args.output)
    print(len(notes))
    return 0


def cmd_eval(args) -> int:
    if args.ref and args.est:
        print(dumps(evaluate(read_midi(args.ref), read_midi(args.est))))
        return 0
    if not (args.model and args.manifest):
        raise ValueError("eval needs --ref and --est, or --model and --manifest")
    model = HPPNet.load(args.model)
    samples = load_manifest_samples(args.manifest, args.split)
    if not samples:
        raise ValueError(f"no {args.split!r} rows in {args.manifest}")
    agg = {"note": [], "note_with_offset": [], "frame": []}
    for s in samples:
        est = decode(model.predict(s.spectrogram.values), args.onset_thresh, args.frame_thresh)
        for k, score in evaluate(s.notes, est, s.n_frames).items():
            agg[k].append([score["p"], score["r"], score["f1"]])
    print(json.dumps({k: dict(zip(("p", "r", "f1"), np.mean(v, axis=0).round(6).tolist()))
                      for k, v in agg.items()}))
    return 0


def cmd_synth(args) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for i, s in enumerate(make_dataset(args.clips, args.notes, args.seed, args.seconds)):
        stem = f"clip{i:04d}"
        write_wav(s.audio, out / f"{stem}.wav")
        write_midi(s.notes, out / f"{stem}.mid")
        rows.append({"path_audio": f"{stem}.wav", "path_midi": f"{stem}.mid",
                     "split": args.split})
    write_manifest(rows, out / "manifest.csv")
    print(len(rows))
    return 0


def cmd_train(args) -> int:
    cfg = TrainConfig.from_text(Path(args.config).read_text(encoding="utf-8"))
    if cfg.manifest:
        train = load_manifest_samples(cfg.manifest, "train")
        valid = load_manifest_samples(cfg.manifest, "validation") or train
    else:
        train = valid = make_dataset(cfg.synth_clips, cfg.synth_notes, cfg.synth_seed,
                                     cfg.synth_seconds)
    if not train:
        raise ValueError("no training clips")
    res = train_loop(cfg, train, valid)
    final = res.history[-1] if res.history else evaluate_model(
        res.model, valid, cfg.onset_thresh, cfg.frame_thresh)
    print(json.dumps({"checkpoint": str(res.best_checkpoint), "log": str(res.log_path),
                      "note_f1": final["note_f1"], "frame_f1": final["frame_f1"]}))
    return 0


def cmd_inspect(args) -> int:
    if args.model:
        model = HPPNet.load(args.model)
    else:
        model = HPPNet(ModelConfig.for_variant(args.variant))
    width = max(len(name) for name, _, _ in model.param_table())
    for name, shape, size in model.param_table():
        print(f"{name:<{width}}  {'x'.join(map(str, shape)):>12}  {size:>9}")
    print(f"total {model.cfg.variant} {model.param_count()}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hppnet", description="Piano transcription with HPPNet.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("transcribe", help="audio file to MIDI")
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--onset-thresh", type=float, default=ONSET_THRESHOLD)
    p.add_argument("--frame-thresh", type=float, default=FRAME_THRESHOLD)
    p.set_defaults(func=cmd_transcribe)

    p = sub.add_parser("eval", help="score MIDI against MIDI, or a model on a manifest")
    p.add_argument("--ref")
    p.add_argument("--est")
    p.add_argument("--model")
    p.add_argument("--manifest")
    p.add_argument("--split", default="test")
    p.add_argument("--onset-thresh", type=float, default=ONSET_THRESHOLD)
    p.add_argument("--frame-thresh", type=float, default=FRAME_THRESHOLD)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="write synthetic wav/mid pairs and a manifest")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--clips", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--notes", type=int, default=20)
    p.add_argument("--seconds", type=float, default=10.0)
    p.add_argument("--split", default="train", choices=("train", "validation", "test"))
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train from a key=value config file")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("inspect", help="parameter table of a checkpoint or a fresh variant")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--model")
    g.add_argument("--variant", choices=VARIANTS)
    p.set_defaults(func=cmd_inspect)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except Exception as exc:  # one parsable line instead of a traceback
        kind = next((k for cls, k in _ERROR_KINDS if isinstance(exc, cls)), "internal")
        msg = " ".join(str(exc).split()) or type(exc).__name__
        print(f"error: {kind}: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
