"""Dense numpy tensors with a reverse-mode gradient tape.

Every op is a plain function returning a new :class:`Tensor`. When any input
requires grad (and grad mode is on), the result records its parents plus a
closure mapping the output gradient to parent gradients. :func:`backward`
walks that graph in reverse topological order and frees it afterwards.

The heavy kernels (``conv2d``, ``bilstm_seq``, ``instance_norm``) carry their
own hand-written backward passes instead of being composed from primitives.
"""
from __future__ import annotations

import contextlib
import math
import struct
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

_DTYPE = np.dtype(np.float32)
_GRAD_ENABLED = True

# im2col buffers are split along time so that no single buffer exceeds this
# many elements.
_COLS_BUDGET = 24_000_000
# total column elements a conv may hold on to between forward and backward
_KEEP_BUDGET = 80_000_000


class DimensionError(ValueError):
    """Raised when tensor extents are incompatible with an op."""


class ContractError(RuntimeError):
    """Raised when an API precondition that is not about shapes is violated."""


def get_default_dtype() -> np.dtype:
    return _DTYPE


def set_default_dtype(dtype) -> None:
    global _DTYPE
    dtype = np.dtype(dtype)
    if dtype not in (np.float32, np.float64):
        raise ValueError(f"unsupported dtype {dtype}")
    _DTYPE = dtype


@contextlib.contextmanager
def default_dtype(dtype):
    prev = _DTYPE
    set_default_dtype(dtype)
    try:
        yield
    finally:
        set_default_dtype(prev)


@contextlib.contextmanager
def no_grad():
    global _GRAD_ENABLED
    prev, _GRAD_ENABLED = _GRAD_ENABLED, False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.array(data, dtype=dtype or _DTYPE, copy=True)
        if arr.ndim == 0:
            arr = arr.reshape(())
        self.data: np.ndarray = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "Tensor":
        t = cls.__new__(cls)
        t.data = arr
        t.requires_grad = False
        t.grad = None
        t._parents = ()
        t._backward = None
        return t

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _raise_not_scalar(self)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        rg = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}{rg})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(_as_tensor(other)))

    def __rsub__(self, other):
        return add(_as_tensor(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def backward(self) -> None:
        backward(self)


def _raise_not_scalar(t: Tensor):
    raise ContractError(f"expected a scalar tensor, got shape {t.shape}")


@dataclass
class Parameter:
    """A named trainable tensor."""

    name: str
    tensor: Tensor


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(arr: np.ndarray, parents: Sequence[Tensor], backward_fn) -> Tensor:
    out = Tensor._wrap(arr)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ---------------------------------------------------------------- backward


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every reachable leaf.

    Repeated calls accumulate. The recorded graph is released afterwards, so
    a second call on the same loss only reaches leaves directly.
    """
    if loss.data.size != 1 or loss.ndim > 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ContractError("loss does not depend on any tensor requiring grad")

    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        parent_grads = node._backward(g)
        for p, pg in zip(node._parents, parent_grads):
            if pg is None or not p.requires_grad:
                continue
            key = id(p)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
        node._parents = ()
        node._backward = None


# ------------------------------------------------------------- elementwise


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    sa, sb = a.shape, b.shape
    return _result(a.data + b.data, (a, b),
                   lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    ad, bd = a.data, b.data
    return _result(ad * bd, (a, b),
                   lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)))


def neg(a: Tensor) -> Tensor:
    return _result(-a.data, (a,), lambda g: (-g,))


def square(a: Tensor) -> Tensor:
    ad = a.data
    return _result(ad * ad, (a,), lambda g: (2.0 * g * ad,))


def log(a: Tensor) -> Tensor:
    ad = a.data
    return _result(np.log(ad), (a,), lambda g: (g / ad,))


def clamp(a: Tensor, lo: float, hi: float) -> Tensor:
    """Clip values; gradient passes only where the input was inside [lo, hi]."""
    ad = a.data
    inside = (ad >= lo) & (ad <= hi)
    return _result(np.clip(ad, lo, hi), (a,), lambda g: (g * inside,))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _result(a.data * mask, (a,), lambda g: (g * mask,))


def _sigmoid_np(x: np.ndarray) -> np.ndarray:
    # the tanh form is overflow-free and much faster than scipy's expit in float32
    return 0.5 * np.tanh(0.5 * x) + 0.5


def sigmoid(a: Tensor) -> Tensor:
    s = _sigmoid_np(a.data)
    return _result(s, (a,), lambda g: (g * s * (1.0 - s),))


def tanh(a: Tensor) -> Tensor:
    t = np.tanh(a.data)
    return _result(t, (a,), lambda g: (g * (1.0 - t * t),))


def elementwise(a: Tensor, fn: str) -> Tensor:
    try:
        op = {"relu": relu, "sigmoid": sigmoid, "tanh": tanh}[fn]
    except KeyError:
        raise ValueError(f"unknown elementwise fn {fn!r}") from None
    return op(a)


# ---------------------------------------------------------- shape / reduce


def sum(a: Tensor, axis=None) -> Tensor:  # noqa: A001 - mirrors numpy naming
    shape = a.shape

    def bw(g):
        if axis is None:
            return (np.broadcast_to(g, shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)

    return _result(np.asarray(a.data.sum(axis=axis)), (a,), bw)


def mean(a: Tensor, axis=None) -> Tensor:
    n = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return mul(sum(a, axis), 1.0 / n)


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    old = a.shape
    return _result(a.data.reshape(shape).copy(), (a,), lambda g: (g.reshape(old),))


def transpose(a: Tensor, axes: Sequence[int]) -> Tensor:
    inv = np.argsort(axes)
    return _result(np.ascontiguousarray(a.data.transpose(axes)), (a,),
                   lambda g: (np.ascontiguousarray(g.transpose(inv)),))


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def bw(g):
        idx = [slice(None)] * g.ndim
        out = []
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            idx[axis] = slice(lo, hi)
            out.append(g[tuple(idx)].copy())
        return out

    return _result(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), bw)


def detach(a: Tensor) -> Tensor:
    """Same values, no gradient path back to ``a``."""
    return Tensor._wrap(a.data.copy())


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight.T + bias`` over the last axis of ``x``."""
    if x.shape[-1] != weight.shape[1]:
        raise DimensionError(
            f"linear: input features {x.shape[-1]} != weight in-features {weight.shape[1]}")
    xd, wd = x.data, weight.data
    out = xd @ wd.T
    parents: tuple[Tensor, ...] = (x, weight)
    if bias is not None:
        out = out + bias.data
        parents += (bias,)

    def bw(g):
        g2 = g.reshape(-1, g.shape[-1])
        grads = [g @ wd, g2.T @ xd.reshape(-1, xd.shape[-1])]
        if bias is not None:
            grads.append(g2.sum(axis=0))
        return grads

    return _result(out, parents, bw)


# ----------------------------------------------------------------- conv2d


def _check_conv_shapes(x: Tensor, k: Tensor, b: Tensor | None, dilation) -> None:
    if x.ndim != 4:
        raise DimensionError(f"conv2d: input must be 4-D [B,Cin,T,F], got rank {x.ndim}")
    if k.ndim != 4:
        raise DimensionError(f"conv2d: kernel must be 4-D [Cout,Cin,Kt,Kf], got rank {k.ndim}")
    if x.shape[1] != k.shape[1]:
        raise DimensionError(
            f"conv2d: channel axis mismatch, input Cin={x.shape[1]} vs kernel Cin={k.shape[1]}")
    if b is not None and b.shape != (k.shape[0],):
        raise DimensionError(f"conv2d: bias axis must have {k.shape[0]} entries, got {b.shape}")
    for name, kk, d, n in (("time", k.shape[2], dilation[0], x.shape[2]),
                           ("freq", k.shape[3], dilation[1], x.shape[3])):
        if kk % 2 == 0:
            raise DimensionError(f"conv2d: 'same' padding needs an odd kernel on the {name} axis")
        span = (kk - 1) * d + 1
        if span > n + (span - 1):
            raise DimensionError(f"conv2d: dilated kernel span {span} exceeds padded {name} axis")


def _time_chunks(T: int, rows: int, F: int) -> list[tuple[int, int]]:
    step = max(1, _COLS_BUDGET // max(1, rows * F))
    return [(t0, min(T, t0 + step)) for t0 in range(0, T, step)]


def conv2d(x: Tensor, kernel: Tensor, bias: Tensor | None = None,
           dilation: tuple[int, int] = (1, 1)) -> Tensor:
    """Dilated 2-D cross-correlation with zero 'same' padding.

    ``x`` is [B, Cin, T, F], ``kernel`` is [Cout, Cin, Kt, Kf]; the output keeps
    the T and F extents of the input.
    """
    _check_conv_shapes(x, kernel, bias, dilation)
    B, Cin, T, F = x.shape
    Cout, _, Kt, Kf = kernel.shape
    dt, df = dilation
    pt, pf = (Kt - 1) * dt // 2, (Kf - 1) * df // 2
    xp = np.pad(x.data, ((0, 0), (0, 0), (pt, pt), (pf, pf)))
    # columns unroll only the frequency taps; each time tap is a shifted view
    rows = Cin * Kf
    w_taps = [np.ascontiguousarray(kernel.data[:, :, i, :]).reshape(Cout, rows) for i in range(Kt)]
    chunks = _time_chunks(T, rows, F)

    def cols_for(b: int, t0: int, t1: int) -> np.ndarray:
        n = t1 - t0 + 2 * pt
        cols = np.empty((Cin, Kf, n, F), dtype=xp.dtype)
        for j in range(Kf):
            cols[:, j] = xp[b, :, t0:t0 + n, j * df:j * df + F]
        return cols.reshape(rows, n * F)

    keep = kernel.requires_grad and _GRAD_ENABLED and B * rows * (T + 2 * pt) * F <= _KEEP_BUDGET
    saved: dict[tuple[int, int], np.ndarray] = {}
    out = np.empty((B, Cout, T, F), dtype=x.data.dtype)
    for b in range(B):
        for t0, t1 in chunks:
            n = (t1 - t0) * F
            cols = cols_for(b, t0, t1)
            if keep:
                saved[b, t0] = cols
            acc = w_taps[0] @ cols[:, :n]
            for i in range(1, Kt):
                acc += w_taps[i] @ cols[:, i * dt * F:i * dt * F + n]
            out[b, :, t0:t1, :] = acc.reshape(Cout, t1 - t0, F)
    if bias is not None:
        out += bias.data[None, :, None, None]

    def bw(g):
        gk = [np.zeros_like(w) for w in w_taps] if kernel.requires_grad else None
        gx = None
        for b in range(B):
            for t0, t1 in chunks:
                n = (t1 - t0) * F
                gb = np.ascontiguousarray(g[b, :, t0:t1, :]).reshape(Cout, n)
                if gk is not None:
                    cols = saved[b, t0] if keep else cols_for(b, t0, t1)
                    for i in range(Kt):
                        gk[i] += gb @ cols[:, i * dt * F:i * dt * F + n].T
        if x.requires_grad:
            # with odd kernels and symmetric padding the input gradient is a
            # 'same' correlation of g with the flipped, channel-swapped kernel
            flipped = Tensor._wrap(np.ascontiguousarray(
                kernel.data[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)))
            with no_grad():
                gx = conv2d(Tensor._wrap(g), flipped, None, dilation).data
        grads = [
            gx,
            None if gk is None else np.stack([k.reshape(Cout, Cin, Kf) for k in gk], axis=2),
        ]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return grads

    parents = (x, kernel) if bias is None else (x, kernel, bias)
    return _result(out, parents, bw)


# ------------------------------------------------------------------ pooling


def max_pool_freq(x: Tensor, pool: int) -> Tensor:
    """Non-overlapping max over ``pool`` adjacent bins of the last axis.

    Ties send the gradient to the lowest-index maximum of each window.
    """
    if x.ndim != 4:
        raise DimensionError(f"max_pool_freq: expected [B,C,T,F], got rank {x.ndim}")
    B, C, T, F = x.shape
    if F % pool:
        raise DimensionError(f"max_pool_freq: freq axis {F} not divisible by pool {pool}")
    win = x.data.reshape(B, C, T, F // pool, pool)
    arg = win.argmax(axis=-1)
    out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]

    def bw(g):
        gw = np.zeros_like(win)
        np.put_along_axis(gw, arg[..., None], g[..., None], axis=-1)
        return (gw.reshape(B, C, T, F),)

    return _result(out, (x,), bw)


# ------------------------------------------------------------ normalization


def instance_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-(batch, channel) normalization over the T x F plane, then affine."""
    if x.ndim != 4:
        raise DimensionError(f"instance_norm: expected [B,C,T,F], got rank {x.ndim}")
    B, C, T, F = x.shape
    if gamma.shape != (C,) or beta.shape != (C,):
        raise DimensionError(f"instance_norm: channel axis has {C} entries, affine params "
                             f"{gamma.shape}/{beta.shape}")
    if T * F < 2:
        raise DimensionError("instance_norm: plane must hold at least 2 cells")
    xd = x.data
    mu = xd.mean(axis=(2, 3), keepdims=True)
    xc = xd - mu
    var = (xc * xc).mean(axis=(2, 3), keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    ga = gamma.data[None, :, None, None]
    out = xhat * ga + beta.data[None, :, None, None]

    def bw(g):
        gxhat = g * ga
        m1 = gxhat.mean(axis=(2, 3), keepdims=True)
        m2 = (gxhat * xhat).mean(axis=(2, 3), keepdims=True)
        gx = inv * (gxhat - m1 - xhat * m2)
        return gx, (g * xhat).sum(axis=(0, 2, 3)), g.sum(axis=(0, 2, 3))

    return _result(out, (x, gamma, beta), bw)


# -------------------------------------------------------------------- LSTM


@dataclass
class LSTMWeights:
    """Weights of one LSTM direction. Gate order along the 4H axis: i, f, g, o."""

    w_ih: Tensor  # [4H, Din]
    w_hh: Tensor  # [4H, H]
    b: Tensor  # [4H]

    def tensors(self) -> tuple[Tensor, Tensor, Tensor]:
        return self.w_ih, self.w_hh, self.b


def _lstm_forward(xw: np.ndarray, w_hh: np.ndarray, reverse: bool):
    N, T, G = xw.shape
    H = G // 4
    h = np.zeros((N, H), xw.dtype)
    c = np.zeros((N, H), xw.dtype)
    hs = np.empty((N, T, H), xw.dtype)
    cache = []
    steps = range(T - 1, -1, -1) if reverse else range(T)
    for t in steps:
        z = xw[:, t] + h @ w_hh.T
        s = _sigmoid_np(z)
        i, f, o = s[:, :H], s[:, H:2 * H], s[:, 3 * H:]
        gg = np.tanh(z[:, 2 * H:3 * H])
        c_prev, h_prev = c, h
        c = f * c_prev + i * gg
        tc = np.tanh(c)
        h = o * tc
        hs[:, t] = h
        cache.append((t, i, f, gg, o, c_prev, h_prev, tc))
    return hs, cache


def _lstm_backward(dh_seq: np.ndarray, w_hh: np.ndarray, cache):
    N, T, H = dh_seq.shape
    dxw = np.empty((N, T, 4 * H), dh_seq.dtype)
    dw_hh = np.zeros_like(w_hh)
    dh_next = np.zeros((N, H), dh_seq.dtype)
    dc_next = np.zeros((N, H), dh_seq.dtype)
    for t, i, f, gg, o, c_prev, h_prev, tc in reversed(cache):
        dh = dh_seq[:, t] + dh_next
        do = dh * tc
        dc = dc_next + dh * o * (1.0 - tc * tc)
        dz = np.concatenate([
            dc * gg * i * (1.0 - i),
            dc * c_prev * f * (1.0 - f),
            dc * i * (1.0 - gg * gg),
            do * o * (1.0 - o),
        ], axis=1)
        dc_next = dc * f
        dw_hh += dz.T @ h_prev
        dh_next = dz @ w_hh
        dxw[:, t] = dz
    return dxw, dw_hh


def bilstm_seq(x: Tensor, fwd: LSTMWeights, bwd: LSTMWeights) -> Tensor:
    """Bidirectional LSTM over [N, T, Din] with zero initial state.

    All N sequences share the weights. Output is [N, T, 2H] with the forward
    direction in the first H features.
    """
    if x.ndim != 3:
        raise DimensionError(f"bilstm_seq: expected [N,T,Din], got rank {x.ndim}")
    N, T, D = x.shape
    for w in (fwd, bwd):
        G, Din = w.w_ih.shape
        if Din != D:
            raise DimensionError(f"bilstm_seq: feature axis {D} != w_ih in-features {Din}")
        if w.w_hh.shape != (G, G // 4) or w.b.shape != (G,):
            raise DimensionError("bilstm_seq: inconsistent hidden size across weights")
    xd = x.data
    x2 = xd.reshape(N * T, D)
    runs = []
    for w, rev in ((fwd, False), (bwd, True)):
        xw = (x2 @ w.w_ih.data.T + w.b.data).reshape(N, T, -1)
        runs.append(_lstm_forward(xw, w.w_hh.data, rev))
    out = np.concatenate([runs[0][0], runs[1][0]], axis=2)
    H = runs[0][0].shape[2]

    def bw(g):
        grads: list[np.ndarray | None] = [np.zeros_like(xd) if x.requires_grad else None]
        for k, w in enumerate((fwd, bwd)):
            hs, cache = runs[k]
            dxw, dw_hh = _lstm_backward(np.ascontiguousarray(g[:, :, k * H:(k + 1) * H]),
                                        w.w_hh.data, cache)
            dxw2 = dxw.reshape(N * T, -1)
            if grads[0] is not None:
                grads[0] += (dxw2 @ w.w_ih.data).reshape(N, T, D)
            grads += [dxw2.T @ x2, dw_hh, dxw2.sum(axis=0)]
        return grads

    parents = (x, *fwd.tensors(), *bwd.tensors())
    return _result(out, parents, bw)


# -------------------------------------------------------------- checkpoint

CHECKPOINT_MAGIC = b"HPPN"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(params: Iterable[Parameter], path) -> None:
    """Write parameters in order as little-endian float32 records."""
    params = list(params)
    names = [p.name for p in params]
    if len(set(names)) != len(names):
        raise CheckpointError("parameter names must be unique")
    chunks = [CHECKPOINT_MAGIC, struct.pack("<II", CHECKPOINT_VERSION, len(params))]
    for p in params:
        raw = p.name.encode("utf-8")
        shape = p.tensor.shape
        chunks.append(struct.pack("<H", len(raw)) + raw)
        chunks.append(struct.pack("<B", len(shape)) + struct.pack(f"<{len(shape)}I", *shape))
        chunks.append(np.ascontiguousarray(p.tensor.data, dtype="<f4").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


def load_checkpoint(path) -> list[Parameter]:
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: bad magic {buf[:4]!r}")
    version, count = struct.unpack_from("<II", buf, 4)
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    pos = 12
    out = []
    try:
        for _ in range(count):
            (n,) = struct.unpack_from("<H", buf, pos)
            name = buf[pos + 2:pos + 2 + n].decode("utf-8")
            pos += 2 + n
            (rank,) = struct.unpack_from("<B", buf, pos)
            shape = struct.unpack_from(f"<{rank}I", buf, pos + 1)
            pos += 1 + 4 * rank
            size = math.prod(shape)
            if pos + 4 * size > len(buf):
                raise CheckpointError(f"{path}: truncated data for {name}")
            data = np.frombuffer(buf, dtype="<f4", count=size, offset=pos).reshape(shape)
            pos += 4 * size
            out.append(Parameter(name, Tensor(data.astype(np.float32), requires_grad=True,
                                              dtype=np.float32)))
    except struct.error as exc:
        raise CheckpointError(f"{path}: truncated checkpoint") from exc
    if pos != len(buf):
        raise CheckpointError(f"{path}: {len(buf) - pos} trailing bytes")
    return out
