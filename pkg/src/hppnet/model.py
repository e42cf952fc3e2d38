"""HPPNet: harmonic dilated convolutions plus frequency-grouped LSTM heads.

Activations are laid out [batch, channel, time, freq]. Kernel sizes and
dilations are written (time, freq) throughout, so the HD-Conv kernel (1, 3)
spans three frequency bins and the block dilation (1, 12) skips an octave of
semitone bins after pooling.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import tensor as tn
from .dsp import harmonic_offset
from .tensor import LSTMWeights, Parameter, Tensor

HEADS = ("onset", "frame", "offset", "velocity")
VARIANTS = ("base", "sp", "tiny")


def default_hd_dilations(bins_per_octave: int = 48) -> tuple[int, ...]:
    return tuple(harmonic_offset(k, bins_per_octave) for k in range(2, 10))


@dataclass
class ModelConfig:
    variant: str = "base"
    channels: int = 128
    lstm_units: int = 64
    conv_stack_filters: int = 16
    conv_stack_repeat: int = 3
    conv_stack_kernel: tuple[int, int] = (7, 7)
    hd_dilations: tuple[int, ...] = field(default_factory=default_hd_dilations)
    hd_kernel: int = 3
    block_count: int = 4
    block_kernel: tuple[int, int] = (5, 3)
    block_dilation: tuple[int, int] = (1, 12)
    pool: int = 4
    n_keys: int = 88
    n_bins: int = 352
    norm_eps: float = 1e-5

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        self.hd_dilations = tuple(int(d) for d in self.hd_dilations)
        self.conv_stack_kernel = tuple(self.conv_stack_kernel)
        self.block_kernel = tuple(self.block_kernel)
        self.block_dilation = tuple(self.block_dilation)
        span = max(self.hd_dilations, default=0) * (self.hd_kernel - 1) + 1
        if span > self.n_bins:
            raise ValueError(f"HD-Conv span {span} exceeds {self.n_bins} bins")
        if self.n_bins != self.n_keys * self.pool:
            raise ValueError("n_bins must equal n_keys * pool")

    @classmethod
    def for_variant(cls, variant: str, **overrides) -> "ModelConfig":
        if variant == "tiny":
            base = dict(channels=48, lstm_units=48)
        else:
            base = dict(channels=128, lstm_units=64)
        base.update(overrides)
        return cls(variant=variant, **base)

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            lines.append(f"{f.name}={v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ModelConfig":
        kw = {}
        types = {f.name: f.type for f in fields(cls)}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, val = line.partition("=")
            key, val = key.strip(), val.strip()
            if key not in types:
                raise ValueError(f"unknown model config key {key!r}")
            t = str(types[key])
            if "tuple" in t:
                kw[key] = tuple(int(x) for x in val.split(",") if x)
            elif t == "float":
                kw[key] = float(val)
            elif t == "int":
                kw[key] = int(val)
            else:
                kw[key] = val
        return cls(**kw)


@dataclass
class Posteriorgram:
    onset: np.ndarray
    frame: np.ndarray
    offset: np.ndarray
    velocity: np.ndarray
    frame_period: float = 0.02

    @property
    def n_frames(self) -> int:
        return self.onset.shape[0]


class HPPNet:
    """Parameters plus forward passes for one variant."""

    def __init__(self, cfg: ModelConfig, seed: int = 0):
        self.cfg = cfg
        self.params: dict[str, Tensor] = {}
        rng = np.random.default_rng(seed)
        if cfg.variant == "sp":
            self._init_acoustic("acoustic_onset", rng)
            self._init_acoustic("acoustic_rest", rng)
            self._init_head("onset", cfg.channels, rng)
            for name in HEADS[1:]:
                self._init_head(name, 2 * cfg.channels, rng)
        else:
            self._init_acoustic("acoustic", rng)
            for name in HEADS:
                self._init_head(name, cfg.channels, rng)

    # ------------------------------------------------------------- params

    def _add(self, name: str, arr: np.ndarray) -> None:
        if name in self.params:
            raise ValueError(f"duplicate parameter {name}")
        self.params[name] = Tensor(arr, requires_grad=True)

    def _conv(self, name, cin, cout, kernel, rng):
        bound = 1.0 / np.sqrt(cin * kernel[0] * kernel[1])
        self._add(f"{name}.weight", rng.uniform(-bound, bound, (cout, cin, *kernel)))
        self._add(f"{name}.bias", rng.uniform(-bound, bound, cout))

    def _norm(self, name, c):
        self._add(f"{name}.gamma", np.ones(c))
        self._add(f"{name}.beta", np.zeros(c))

    def _init_acoustic(self, prefix: str, rng) -> None:
        cfg = self.cfg
        cin = 1
        for i in range(cfg.conv_stack_repeat):
            self._conv(f"{prefix}.conv{i}", cin, cfg.conv_stack_filters, cfg.conv_stack_kernel, rng)
            self._norm(f"{prefix}.norm{i}", cfg.conv_stack_filters)
            cin = cfg.conv_stack_filters
        for j, _ in enumerate(cfg.hd_dilations):
            self._conv(f"{prefix}.hd{j}", cin, cfg.channels, (1, cfg.hd_kernel), rng)
        for i in range(cfg.block_count):
            self._conv(f"{prefix}.block{i}", cfg.channels, cfg.channels, cfg.block_kernel, rng)
            self._norm(f"{prefix}.block_norm{i}", cfg.channels)

    def _init_head(self, name: str, din: int, rng) -> None:
        H = self.cfg.lstm_units
        bound = 1.0 / np.sqrt(H)
        for d in ("fwd", "bwd"):
            p = f"{name}_head.lstm.{d}"
            self._add(f"{p}.w_ih", rng.uniform(-bound, bound, (4 * H, din)))
            self._add(f"{p}.w_hh", rng.uniform(-bound, bound, (4 * H, H)))
            b = np.zeros(4 * H)
            b[H:2 * H] = 1.0  # forget gate
            self._add(f"{p}.b", b)
        lb = 1.0 / np.sqrt(2 * H)
        self._add(f"{name}_head.linear.weight", rng.uniform(-lb, lb, (1, 2 * H)))
        self._add(f"{name}_head.linear.bias", rng.uniform(-lb, lb, 1))

    def parameters(self) -> list[Parameter]:
        return [Parameter(k, v) for k, v in self.params.items()]

    def param_count(self) -> int:
        return int(sum(t.size for t in self.params.values()))

    def param_table(self) -> list[tuple[str, tuple[int, ...], int]]:
        return [(k, v.shape, v.size) for k, v in self.params.items()]

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.grad = None

    # ------------------------------------------------------------ forward

    def acoustic_forward(self, x: Tensor, prefix: str = "acoustic") -> Tensor:
        """[B, 1, T, n_bins] log-CQT -> [B, C, T, n_keys] feature map."""
        cfg = self.cfg
        if x.ndim != 4 or x.shape[1] != 1 or x.shape[3] != cfg.n_bins:
            raise tn.DimensionError(
                f"acoustic model expects [B,1,T,{cfg.n_bins}] input, got {x.shape}")
        P = self.params
        h = x
        for i in range(cfg.conv_stack_repeat):
            h = tn.conv2d(h, P[f"{prefix}.conv{i}.weight"], P[f"{prefix}.conv{i}.bias"])
            h = tn.instance_norm(tn.relu(h), P[f"{prefix}.norm{i}.gamma"],
                                 P[f"{prefix}.norm{i}.beta"], cfg.norm_eps)
        hd = None
        for j, d in enumerate(cfg.hd_dilations):
            y = tn.conv2d(h, P[f"{prefix}.hd{j}.weight"], P[f"{prefix}.hd{j}.bias"], (1, d))
            hd = y if hd is None else tn.add(hd, y)
        h = tn.max_pool_freq(hd, cfg.pool)
        for i in range(cfg.block_count):
            h = tn.conv2d(h, P[f"{prefix}.block{i}.weight"], P[f"{prefix}.block{i}.bias"],
                          cfg.block_dilation)
            h = tn.instance_norm(tn.relu(h), P[f"{prefix}.block_norm{i}.gamma"],
                                 P[f"{prefix}.block_norm{i}.beta"], cfg.norm_eps)
        return h

    def fg_lstm_head(self, fm: Tensor, name: str) -> Tensor:
        """One shared BiLSTM run over each key's channel vector along time.

        [B, C, T, K] -> [B, T, K] probabilities.
        """
        B, C, T, K = fm.shape
        P = self.params
        seq = tn.reshape(tn.transpose(fm, (0, 3, 2, 1)), (B * K, T, C))
        p = f"{name}_head.lstm"
        h = tn.bilstm_seq(
            seq,
            LSTMWeights(P[f"{p}.fwd.w_ih"], P[f"{p}.fwd.w_hh"], P[f"{p}.fwd.b"]),
            LSTMWeights(P[f"{p}.bwd.w_ih"], P[f"{p}.bwd.w_hh"], P[f"{p}.bwd.b"]),
        )
        y = tn.linear(h, P[f"{name}_head.linear.weight"], P[f"{name}_head.linear.bias"])
        y = tn.transpose(tn.reshape(y, (B, K, T)), (0, 2, 1))
        return tn.sigmoid(y)

    def forward_base(self, x: Tensor) -> dict[str, Tensor]:
        fm = self.acoustic_forward(x, "acoustic")
        return {name: self.fg_lstm_head(fm, name) for name in HEADS}

    def forward_sp(self, x: Tensor) -> dict[str, Tensor]:
        fm_on = self.acoustic_forward(x, "acoustic_onset")
        fm_rest = self.acoustic_forward(x, "acoustic_rest")
        shared = tn.concat([fm_rest, tn.detach(fm_on)], axis=1)
        out = {"onset": self.fg_lstm_head(fm_on, "onset")}
        for name in HEADS[1:]:
            out[name] = self.fg_lstm_head(shared, name)
        return out

    def forward(self, x) -> dict[str, Tensor]:
        """Batch of log-CQT frames, [B, T, n_bins] or [B, 1, T, n_bins]."""
        if not isinstance(x, Tensor):
            x = Tensor(x)
        if x.ndim == 3:
            x = tn.reshape(x, (x.shape[0], 1, x.shape[1], x.shape[2]))
        if self.cfg.variant == "sp":
            return self.forward_sp(x)
        return self.forward_base(x)

    __call__ = forward

    def predict(self, spec_values: np.ndarray, frame_period: float = 0.02) -> Posteriorgram:
        with tn.no_grad():
            out = self.forward(np.asarray(spec_values)[None])
        return Posteriorgram(*(out[h].data[0].astype(np.float64) for h in HEADS),
                             frame_period=frame_period)

    # -------------------------------------------------------- persistence

    def save(self, path) -> None:
        path = Path(path)
        tn.save_checkpoint(self.parameters(), path)
        config_path(path).write_text(self.cfg.to_text(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "HPPNet":
        path = Path(path)
        cfg_file = config_path(path)
        if not cfg_file.exists():
            raise tn.CheckpointError(f"{path}: missing model config {cfg_file.name}")
        model = cls(ModelConfig.from_text(cfg_file.read_text(encoding="utf-8")))
        model.load_params(tn.load_checkpoint(path))
        return model

    def load_params(self, params: list[Parameter]) -> None:
        names = [p.name for p in params]
        if names != list(self.params):
            raise tn.CheckpointError("checkpoint parameters do not match the model config")
        for p in params:
            if p.tensor.shape != self.params[p.name].shape:
                raise tn.CheckpointError(
                    f"{p.name}: checkpoint shape {p.tensor.shape} != {self.params[p.name].shape}")
            self.params[p.name] = Tensor(p.tensor.data, requires_grad=True)


def config_path(ckpt_path) -> Path:
    ckpt_path = Path(ckpt_path)
    return ckpt_path.with_name(ckpt_path.name + ".cfg")
