"""Mini-batch training with target normalization and best-validation checkpointing."""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import tensor as T
from .model import ModelConfig, build_model, collate, prepare
from .nn import AdamState, adam_step, load_checkpoint, mae_metric, save_checkpoint

log = logging.getLogger(__name__)

CHECKPOINT_NAME = "best.eqhg"
METRICS_NAME = "metrics.csv"


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 400
    batch_size: int = 16
    lr: float = 1e-4
    seed: int = 0
    target_name: str = "gap"
    eval_every: int = 1
    out_dir: str = "runs/default"
    threads: int | None = None  # None: read EQUIHG_THREADS (0 = single-threaded, deterministic)

    def __post_init__(self):
        for name in ("epochs", "batch_size", "eval_every"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.lr < 0:
            raise ValueError("lr must be non-negative")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


@dataclass(frozen=True)
class Normalizer:
    mean: float
    std: float

    def normalize(self, y):
        return (np.asarray(y, dtype=np.float64) - self.mean) / self.std

    def denormalize(self, z):
        return np.asarray(z, dtype=np.float64) * self.std + self.mean


def fit_normalizer(records, target_name: str) -> Normalizer:
    """Mean and population standard deviation of one target over the training split."""
    values = np.array([r.targets[target_name] for r in records], dtype=np.float64)
    if len(values) < 2:
        raise ValueError("need at least 2 records to fit a normalizer")
    std = float(values.std())
    if not std > 0:
        raise ValueError(f"target {target_name!r} has zero variance on the training split")
    return Normalizer(float(values.mean()), std)


@dataclass
class TrainResult:
    checkpoint: Path | None
    log: list = field(default_factory=list)  # (epoch, train_loss, val_mae)
    model: object = None
    normalizer: Normalizer | None = None
    model_cfg: ModelConfig | None = None


def _threads(cfg: TrainConfig) -> int:
    if cfg.threads is not None:
        return max(0, int(cfg.threads))
    return max(0, int(os.environ.get("EQUIHG_THREADS", "0") or 0))


def _targets(records, name: str) -> np.ndarray:
    return np.array([r.targets[name] for r in records], dtype=np.float64)


def predict_graphs(model, graphs, batch_size: int = 64) -> np.ndarray:
    out = []
    with T.no_grad():
        for k in range(0, len(graphs), batch_size):
            out.append(model(collate(graphs[k:k + batch_size])).data)
    return np.concatenate(out) if out else np.zeros(0)


def _chunk_grads(model, graphs, targets, total: int):
    """Gradients of sum((pred - y)^2) / total over one chunk; returns (loss_part, grads by name)."""
    pred = model(collate(graphs))
    loss = T.sum(T.square(pred - targets)) * (1.0 / total)
    grads = T.compute_grads(loss)
    names = {id(p): n for n, p in model.parameters().items()}
    return loss.item(), {names[k]: g for k, (_, g) in grads.items()}


def _step(model, params, state, graphs, targets, pool, workers: int) -> float:
    for p in params.values():
        p.grad = None
    if pool is None or len(graphs) < 2:
        pred = model(collate(graphs))
        loss = T.mean(T.square(pred - targets))
        value = loss.item()
        if np.isfinite(value):
            T.backward(loss)
    else:
        bounds = np.linspace(0, len(graphs), min(workers, len(graphs)) + 1).astype(int)
        jobs = [
            pool.submit(_chunk_grads, model, graphs[a:b], targets[a:b], len(graphs))
            for a, b in zip(bounds[:-1], bounds[1:])
        ]
        value = 0.0
        # Accumulate in chunk order so the sum does not depend on thread timing.
        for job in jobs:
            part, grads = job.result()
            value += part
            for name, g in grads.items():
                p = params[name]
                p.grad = g.copy() if p.grad is None else p.grad + g
    if not np.isfinite(value):
        return value
    adam_step(params, state)
    return value


def model_meta(model_cfg: ModelConfig, train_cfg: TrainConfig, normalizer: Normalizer, **extra) -> dict:
    meta = {
        "model": model_cfg.to_dict(),
        "train": asdict(train_cfg),
        "normalizer": {"mean": normalizer.mean, "std": normalizer.std},
    }
    meta.update(extra)
    return meta


def train(model_cfg: ModelConfig, train_cfg: TrainConfig, train_records, val_records, data_meta: dict | None = None) -> TrainResult:
    """Fit ``model_cfg`` on ``train_records``; keep the checkpoint with the lowest validation MAE.

    Test records are never passed here. Writes ``metrics.csv`` and ``best.eqhg``
    into ``train_cfg.out_dir``.
    """
    if not train_records:
        raise ValueError("empty training split")
    if not val_records:
        raise ValueError("empty validation split")
    out_dir = Path(train_cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    target = train_cfg.target_name
    normalizer = fit_normalizer(train_records, target)
    train_graphs = [prepare(r.molecule, model_cfg) for r in train_records]
    val_graphs = [prepare(r.molecule, model_cfg) for r in val_records]
    y_train = normalizer.normalize(_targets(train_records, target))
    y_val = _targets(val_records, target)

    model = build_model(model_cfg)
    params = model.parameters()
    state = AdamState(lr=train_cfg.lr)
    workers = _threads(train_cfg)
    pool = ThreadPoolExecutor(workers) if workers > 0 else None

    ckpt = out_dir / CHECKPOINT_NAME
    metrics = out_dir / METRICS_NAME
    rows = []
    best = np.inf
    best_path = None
    meta_extra = {"target": target, "data": data_meta or {}}
    try:
        with open(metrics, "w") as fh:
            fh.write("epoch,train_loss,val_mae\n")
            for epoch in range(1, train_cfg.epochs + 1):
                order = np.random.default_rng([train_cfg.seed, epoch]).permutation(len(train_graphs))
                total, count = 0.0, 0
                for k in range(0, len(order), train_cfg.batch_size):
                    idx = order[k:k + train_cfg.batch_size]
                    value = _step(model, params, state, [train_graphs[i] for i in idx], y_train[idx], pool, workers)
                    if not np.isfinite(value):
                        raise TrainingError(
                            f"non-finite loss at epoch {epoch}, batch {k // train_cfg.batch_size}; "
                            f"best checkpoint kept at {best_path} (val MAE {best})"
                        )
                    total += value * len(idx)
                    count += len(idx)
                if epoch % train_cfg.eval_every and epoch != train_cfg.epochs:
                    continue
                train_loss = total / count
                val_mae = mae_metric(normalizer.denormalize(predict_graphs(model, val_graphs)), y_val)
                rows.append((epoch, train_loss, val_mae))
                fh.write(f"{epoch},{train_loss!r},{val_mae!r}\n")
                fh.flush()
                log.info("epoch %d train_loss %.6g val_mae %.6g", epoch, train_loss, val_mae)
                if val_mae < best:
                    best = val_mae
                    meta = model_meta(model_cfg, train_cfg, normalizer, epoch=epoch, val_mae=val_mae, **meta_extra)
                    best_path = save_checkpoint(ckpt, params, meta, state)
    finally:
        if pool is not None:
            pool.shutdown()
    return TrainResult(best_path, rows, model, normalizer, model_cfg)


def load_model(checkpoint, expected_kind: str | None = None):
    """Rebuild a model from a checkpoint; returns ``(model, model_cfg, normalizer, meta)``."""
    meta, arrays, _ = load_checkpoint(checkpoint)
    if "model" not in meta:
        raise ValueError(f"{checkpoint}: checkpoint carries no model metadata")
    cfg = ModelConfig.from_dict(meta["model"])
    if expected_kind is not None and cfg.kind != expected_kind:
        raise ValueError(f"checkpoint model kind {cfg.kind!r} does not match requested kind {expected_kind!r}")
    model = build_model(cfg)
    params = model.parameters()
    if set(params) != set(arrays):
        missing = sorted(set(params) ^ set(arrays))[:5]
        raise ValueError(f"{checkpoint}: parameter names do not match a {cfg.kind} model ({missing} ...)")
    for name, p in params.items():
        if arrays[name].shape != p.shape:
            raise ValueError(f"{checkpoint}: shape mismatch for {name}: {arrays[name].shape} vs {p.shape}")
        p.data = arrays[name].copy()
    norm = Normalizer(**meta["normalizer"])
    return model, cfg, norm, meta


def evaluate(checkpoint, records, split: str = "test", target_name: str | None = None,
             expected_kind: str | None = None, report_path=None) -> dict:
    """Denormalized MAE of a checkpoint over ``records``; optionally writes the JSON report."""
    if not records:
        raise ValueError(f"cannot evaluate on an empty {split} split")
    model, cfg, norm, meta = load_model(checkpoint, expected_kind)
    target = target_name or meta.get("target", "gap")
    graphs = [prepare(r.molecule, cfg) for r in records]
    pred = norm.denormalize(predict_graphs(model, graphs))
    report = {"target": target, "split": split, "mae": mae_metric(pred, _targets(records, target)), "n": len(records)}
    if report_path is not None:
        Path(report_path).write_text(json.dumps(report) + "\n")
    return report
