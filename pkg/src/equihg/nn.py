"""Parameterized layers, losses, the Adam optimizer and checkpoint I/O."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .tensor import Tensor

ACTIVATIONS = {"silu": T.silu, "relu": T.relu}


class Module:
    """Minimal parameter container: parameters are Tensor attributes, children are Module attributes."""

    def named_parameters(self, prefix: str = ""):
        for key, value in vars(self).items():
            if isinstance(value, Tensor) and value.requires_grad:
                yield prefix + key, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{prefix}{key}.")
            elif isinstance(value, (list, tuple)):
                for k, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{prefix}{key}.{k}.")

    def parameters(self) -> dict[str, Tensor]:
        return dict(self.named_parameters())

    def zero_grad(self):
        for p in self.parameters().values():
            p.zero_grad()

    def num_parameters(self) -> int:
        return int(np.sum([p.data.size for p in self.parameters().values()]))


class Linear(Module):
    """``y = x W^T + b`` with W ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)) and b = 0."""

    def __init__(self, fan_in: int, fan_out: int, rng: np.random.Generator, bias: bool = True):
        if fan_in < 1 or fan_out < 1:
            raise ValueError(f"Linear dims must be positive, got {fan_in}->{fan_out}")
        bound = 1.0 / np.sqrt(fan_in)
        self.weight = Tensor(rng.uniform(-bound, bound, size=(fan_out, fan_in)), requires_grad=True)
        self.bias = Tensor(np.zeros(fan_out), requires_grad=True) if bias else None
        self.fan_in, self.fan_out = fan_in, fan_out

    def __call__(self, x: Tensor) -> Tensor:
        y = T.matmul(x, T.transpose(self.weight))
        return y + self.bias if self.bias is not None else y


class Mlp(Module):
    """Linear layers with an activation between consecutive layers (none after the last)."""

    def __init__(self, dims, rng: np.random.Generator, activation: str = "silu"):
        dims = list(dims)
        if len(dims) < 2:
            raise ValueError("Mlp needs at least an input and an output dimension")
        self.layers = [Linear(a, b, rng) for a, b in zip(dims[:-1], dims[1:])]
        self.activation = activation
        self.dims = dims

    def __call__(self, x: Tensor) -> Tensor:
        act = ACTIVATIONS[self.activation]
        for k, layer in enumerate(self.layers):
            x = layer(x)
            if k < len(self.layers) - 1:
                x = act(x)
        return x


def mse_loss(pred, target) -> Tensor:
    pred, target = T.as_tensor(pred), T.as_tensor(target)
    if pred.shape != target.shape:
        raise T.ShapeError(f"mse_loss: pred {pred.shape} vs target {target.shape}")
    if pred.data.size == 0:
        raise ValueError("mse_loss needs at least one element")
    return T.mean(T.square(pred - target))


def mae_metric(pred, target) -> float:
    pred = np.asarray(pred, dtype=np.float64).reshape(-1)
    target = np.asarray(target, dtype=np.float64).reshape(-1)
    if pred.shape != target.shape:
        raise ValueError(f"mae_metric: length {len(pred)} vs {len(target)}")
    if not len(pred):
        raise ValueError("mae_metric needs at least one element")
    return float(np.mean(np.abs(pred - target)))


@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict, state: AdamState) -> None:
    """One bias-corrected Adam update in place; parameters with no grad are skipped.

    Raises FloatingPointError without touching anything if any gradient is non-finite.
    """
    live = {name: p for name, p in params.items() if p.grad is not None}
    for name, p in live.items():
        if p.grad.shape != p.data.shape:
            raise T.ShapeError(f"adam_step: grad shape {p.grad.shape} != param shape {p.data.shape} for {name}")
        if not np.all(np.isfinite(p.grad)):
            raise FloatingPointError(f"non-finite gradient for parameter {name}")
    state.t += 1
    c1 = 1.0 - state.beta1 ** state.t
    c2 = 1.0 - state.beta2 ** state.t
    for name, p in live.items():
        g = p.grad
        m = state.m.get(name)
        v = state.v.get(name)
        m = (1.0 - state.beta1) * g if m is None else state.beta1 * m + (1.0 - state.beta1) * g
        v = (1.0 - state.beta2) * g * g if v is None else state.beta2 * v + (1.0 - state.beta2) * g * g
        state.m[name], state.v[name] = m, v
        if state.lr:
            p.data = p.data - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


# -- checkpoints ----------------------------------------------------------------
MAGIC = b"EQHG1"


class CheckpointError(ValueError):
    pass


def _records(params: dict, state: AdamState | None):
    for name, arr in params.items():
        yield name, np.asarray(arr.data if isinstance(arr, Tensor) else arr, dtype=np.float64)
    if state is not None:
        yield "optim/t", np.array(float(state.t))
        yield "optim/lr", np.array(state.lr)
        yield "optim/betas_eps", np.array([state.beta1, state.beta2, state.eps])
        for name in params:
            if name in state.m:
                yield f"optim/m/{name}", state.m[name]
                yield f"optim/v/{name}", state.v[name]


def save_checkpoint(path, params: dict, meta: dict | None = None, state: AdamState | None = None) -> Path:
    """Write magic, a JSON metadata block, then named little-endian float64 arrays."""
    path = Path(path)
    blob = json.dumps(meta or {}, sort_keys=True).encode("utf-8")
    records = list(_records(params, state))
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(struct.pack("<I", len(records)))
        for name, arr in records:
            raw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return path


def load_checkpoint(path):
    """Return ``(meta, params, adam_state_or_None)``; params map names to float64 arrays."""
    data = Path(path).read_bytes()
    if data[:5] != MAGIC:
        raise CheckpointError(f"{path}: not an EQHG1 checkpoint")
    pos = 5

    def take(n):
        nonlocal pos
        if pos + n > len(data):
            raise CheckpointError(f"{path}: truncated checkpoint")
        chunk = data[pos:pos + n]
        pos += n
        return chunk

    (meta_len,) = struct.unpack("<I", take(4))
    meta = json.loads(take(meta_len).decode("utf-8"))
    (count,) = struct.unpack("<I", take(4))
    arrays = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<I", take(4))
        name = take(nlen).decode("utf-8")
        (rank,) = struct.unpack("<I", take(4))
        dims = struct.unpack(f"<{rank}Q", take(8 * rank))
        size = int(np.prod(dims)) if rank else 1
        arrays[name] = np.frombuffer(take(8 * size), dtype="<f8").astype(np.float64).reshape(dims)
    params = {k: v for k, v in arrays.items() if not k.startswith("optim/")}
    state = None
    if "optim/t" in arrays:
        b1, b2, eps = arrays["optim/betas_eps"]
        state = AdamState(lr=float(arrays["optim/lr"]), beta1=float(b1), beta2=float(b2), eps=float(eps),
                          t=int(arrays["optim/t"]))
        for k, v in arrays.items():
            if k.startswith("optim/m/"):
                state.m[k[len("optim/m/"):]] = v
            elif k.startswith("optim/v/"):
                state.v[k[len("optim/v/"):]] = v
    return meta, params, state
