"""Adam training loop with validation-based checkpoint selection."""
from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import tensor as tn
from .data import PianoRollTargets, Sample
from .decode import decode
from .loss import LossBreakdown, total_loss
from .metrics import frame_score, note_score, notes_to_roll
from .model import HPPNet, ModelConfig

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    batch_size: int = 4
    learning_rate: float = 6e-4
    max_steps: int = 1000
    eval_every: int = 100
    patience: int = 5
    seed: int = 0
    variant: str = "tiny"
    crop_frames: int = 0  # 0 trains on whole clips
    clip_grad_norm: float = 0.0  # 0 disables clipping
    onset_thresh: float = 0.4
    frame_thresh: float = 0.4
    out_dir: str = "runs/default"
    # data source: a manifest CSV, or synthetic clips when empty
    manifest: str = ""
    synth_clips: int = 8
    synth_notes: int = 20
    synth_seconds: float = 10.0
    synth_seed: int = 0
    model: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")

    def model_config(self) -> ModelConfig:
        return ModelConfig.for_variant(self.variant, **self.model)

    @classmethod
    def from_text(cls, text: str) -> "TrainConfig":
        """Parse key=value lines; model keys are passed through to ModelConfig."""
        own = {f.name: f.type for f in fields(cls) if f.name != "model"}
        model_keys = {f.name: f.type for f in fields(ModelConfig)}
        kw: dict = {}
        model: dict = {}
        for line in text.splitlines():
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, val = line.partition("=")
            key, val = key.strip(), val.strip()
            if not sep:
                raise ValueError(f"config line without '=': {line!r}")
            if key in own:
                kw[key] = _coerce(own[key], val)
            elif key in model_keys and key != "variant":
                model[key] = _coerce(model_keys[key], val)
            else:
                raise ValueError(f"unknown config key {key!r}")
        return cls(model=model, **kw)


def _coerce(type_name, val: str):
    t = str(type_name)
    if "tuple" in t:
        return tuple(int(x) for x in val.split(",") if x)
    if t == "int":
        return int(val)
    if t == "float":
        return float(val)
    return val


# -------------------------------------------------------------------- Adam


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_step(params: dict[str, tn.Tensor], grads: dict[str, np.ndarray | None],
              state: AdamState, lr: float) -> None:
    """In-place Adam update with bias correction. Missing grads count as zero."""
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        m, v = state.m[name], state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.data = p.data - lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


# -------------------------------------------------------------- batching


def stack_targets(targets: list[PianoRollTargets]) -> PianoRollTargets:
    return PianoRollTargets(*(np.stack([getattr(t, k) for t in targets]) for k in "nfov"))


def make_batch(samples: list[Sample], idx, rng: np.random.Generator, crop: int):
    xs, ts = [], []
    T = min(samples[i].n_frames for i in idx)
    if crop:
        T = min(T, crop)
    for i in idx:
        s = samples[i]
        t0 = int(rng.integers(0, s.n_frames - T + 1))
        xs.append(s.spectrogram.values[t0:t0 + T])
        ts.append(s.targets.crop(t0, t0 + T))
    return np.stack(xs), stack_targets(ts)


def evaluate_model(model: HPPNet, samples: list[Sample], onset_thresh: float = 0.4,
                   frame_thresh: float = 0.4) -> dict:
    """Mean note/frame F1 over samples, each transcribed as a whole clip."""
    note_f, frame_f = [], []
    for s in samples:
        post = model.predict(s.spectrogram.values)
        est = decode(post, onset_thresh, frame_thresh)
        note_f.append(note_score(s.notes, est).f1)
        frame_f.append(frame_score(s.targets.f, notes_to_roll(est, s.n_frames)).f1)
    return {"note_f1": float(np.mean(note_f)), "frame_f1": float(np.mean(frame_f))}


def _first_bad_grad(model: HPPNet) -> str:
    for name, p in model.params.items():
        if p.grad is not None and not np.all(np.isfinite(p.grad)):
            return name
    return "<none: loss itself non-finite>"


def train_step(model: HPPNet, state: AdamState, x: np.ndarray, targets: PianoRollTargets,
               lr: float, clip_norm: float = 0.0) -> LossBreakdown:
    model.zero_grad()
    loss, parts = total_loss(model(x), targets)
    tn.backward(loss)
    if not math.isfinite(parts.total):
        raise TrainingDiverged(f"non-finite loss at step {state.step + 1}; first bad gradient: "
                               f"{_first_bad_grad(model)}")
    grads = {k: p.grad for k, p in model.params.items()}
    bad = [k for k, g in grads.items() if g is not None and not np.all(np.isfinite(g))]
    if bad:
        raise TrainingDiverged(f"non-finite gradient at step {state.step + 1}: {bad[0]}")
    if clip_norm > 0:
        norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values() if g is not None))
        if norm > clip_norm:
            grads = {k: None if g is None else g * (clip_norm / norm) for k, g in grads.items()}
    adam_step(model.params, grads, state, lr)
    return parts


@dataclass
class TrainResult:
    best_checkpoint: Path
    log_path: Path
    history: list[dict]
    model: HPPNet


def train_loop(cfg: TrainConfig, train: list[Sample], valid: list[Sample] | None = None,
               model: HPPNet | None = None) -> TrainResult:
    """Shuffled mini-batch Adam; keeps the checkpoint with best validation note F1."""
    valid = train if valid is None else valid
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    best_path = out / "best.hppn"
    log_path = out / "metrics.jsonl"
    log_path.write_text("")
    rng = np.random.default_rng(cfg.seed)
    model = model or HPPNet(cfg.model_config(), seed=cfg.seed)
    model.save(best_path)
    state = AdamState()
    history: list[dict] = []
    best_f1, stale = -1.0, 0
    order: list[int] = []
    running: list[LossBreakdown] = []
    t_start = time.time()

    for step in range(1, cfg.max_steps + 1):
        if len(order) < cfg.batch_size:
            order += list(rng.permutation(len(train)))
        idx, order = order[:cfg.batch_size], order[cfg.batch_size:]
        x, targets = make_batch(train, idx, rng, cfg.crop_frames)
        running.append(train_step(model, state, x, targets, cfg.learning_rate, cfg.clip_grad_norm))

        if step % cfg.eval_every == 0 or step == cfg.max_steps:
            scores = evaluate_model(model, valid, cfg.onset_thresh, cfg.frame_thresh)
            entry = {"step": step}
            for k in ("onset", "frame", "offset", "velocity", "total"):
                entry[f"loss_{k}"] = float(np.mean([getattr(r, k) for r in running]))
            entry.update(scores)
            entry["elapsed"] = round(time.time() - t_start, 1)
            running = []
            history.append(entry)
            with open(log_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps({k: v for k, v in entry.items() if k != "elapsed"}) + "\n")
            log.info("step %d loss %.2f note_f1 %.3f frame_f1 %.3f (%.0fs)", step,
                     entry["loss_total"], entry["note_f1"], entry["frame_f1"], entry["elapsed"])
            if scores["note_f1"] > best_f1:
                best_f1, stale = scores["note_f1"], 0
                model.save(best_path)
            else:
                stale += 1
                if stale >= cfg.patience:
                    log.info("early stop at step %d", step)
                    break
    return TrainResult(best_path, log_path, history, model)
