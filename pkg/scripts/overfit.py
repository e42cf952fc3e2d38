"""Overfit the tiny variant on a handful of synthetic clips and report F1.

Writes best.hppn, metrics.jsonl and run.json into --out; the acceptance suite
re-scores best.hppn from run.json instead of retraining when they exist.
"""
import argparse
import json
import logging
import time
from pathlib import Path

from hppnet.data import make_dataset
from hppnet.model import HPPNet
from hppnet.train import TrainConfig, evaluate_model, train_loop


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--clips", type=int, default=8)
    ap.add_argument("--notes", type=int, default=20)
    ap.add_argument("--seconds", type=float, default=10.0)
    ap.add_argument("--steps", type=int, default=800)
    ap.add_argument("--batch", type=int, default=4)
    ap.add_argument("--crop", type=int, default=64, help="training crop in frames, 0 for whole clips")
    ap.add_argument("--eval-every", type=int, default=100)
    ap.add_argument("--patience", type=int, default=3)
    ap.add_argument("--lr", type=float, default=6e-4)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="runs/overfit")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    t0 = time.time()
    data = make_dataset(args.clips, args.notes, seed=args.seed, duration=args.seconds)
    for s in data:
        s.spectrogram
    print(f"dataset ready in {time.time() - t0:.1f}s", flush=True)
    cfg = TrainConfig(batch_size=args.batch, max_steps=args.steps, eval_every=args.eval_every,
                      patience=args.patience, crop_frames=args.crop, learning_rate=args.lr,
                      seed=args.seed, variant="tiny", out_dir=args.out)
    res = train_loop(cfg, data)
    best = max(res.history, key=lambda e: e["note_f1"])
    run = {
        "args": vars(args),
        "variant": cfg.variant,
        "steps": res.history[-1]["step"],
        "best_step": best["step"],
        "seconds_elapsed": round(time.time() - t0, 1),
        "best": evaluate_model(HPPNet.load(res.best_checkpoint), data),
    }
    Path(args.out, "run.json").write_text(json.dumps(run, indent=2) + "\n")
    print(json.dumps(run["best"]))
    print(f"total {run['seconds_elapsed']:.0f}s")


if __name__ == "__main__":
    main()
