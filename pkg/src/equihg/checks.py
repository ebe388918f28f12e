"""Symmetry and gradient property checks on real molecules with fresh random parameters."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import tensor as T
from .chemio import split_dataset
from .geo import EgnnEncoder, raw_atom_features
from .hypergraph import build_radius_graph
from .model import ModelConfig, build_model, collate, prepare
from .tensor import Tensor
from .trainer import TrainConfig, train

TOLERANCES = {"equivariance": 1e-5, "coordinates": 1e-5, "permutation": 1e-10, "gradcheck": 1e-5}


@dataclass
class CheckResult:
    name: str
    max_deviation: float
    tolerance: float
    count: int

    @property
    def passed(self) -> bool:
        return bool(self.max_deviation <= self.tolerance)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: max deviation {self.max_deviation:.3e} (tol {self.tolerance:.0e}, n={self.count})"


def random_orthogonal(rng: np.random.Generator, allow_reflection: bool = True) -> np.ndarray:
    """Haar-random 3x3 orthogonal matrix; proper rotation unless a reflection is drawn."""
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    if allow_reflection and rng.random() < 0.5:
        q = q @ np.diag([1.0, 1.0, -1.0])
    return q


def rigid_motion(coords: np.ndarray, rot: np.ndarray, shift: np.ndarray) -> np.ndarray:
    return coords @ rot.T + shift


def equivariance_check(molecules, cfg: ModelConfig, transforms: int = 10, seed: int = 0) -> CheckResult:
    """max |pred(g x) - pred(x)| over molecules and random rotations/reflections + translations."""
    model = build_model(cfg)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for mol in molecules:
        copies = [mol]
        for _ in range(transforms):
            rot = random_orthogonal(rng)
            shift = rng.uniform(-10.0, 10.0, size=3)
            copies.append(mol.with_coords(rigid_motion(mol.coords, rot, shift)))
        with T.no_grad():
            pred = model(collate([prepare(m, cfg) for m in copies])).data
        worst = max(worst, float(np.max(np.abs(pred[1:] - pred[0]))))
    return CheckResult(f"E(3) invariance ({cfg.kind})", worst, TOLERANCES["equivariance"], len(molecules) * transforms)


def coordinate_stream_check(molecules, cfg: ModelConfig, transforms: int = 10, seed: int = 0) -> CheckResult:
    """max ||x'(Rx + t) - (R x'(x) + t)||_inf for the EGNN coordinate stream after all layers."""
    encoder = EgnnEncoder(cfg.hidden, max(cfg.geo_layers, 1), np.random.default_rng(cfg.seed), cfg.activation)
    rng = np.random.default_rng(seed)
    worst = 0.0

    def run(coords):
        edges = build_radius_graph(coords, cfg.cutoff, cfg.max_neighbors).edges
        with T.no_grad():
            return encoder.run(raw, coords, edges, keep_coords=True).x.data

    for mol in molecules:
        raw = raw_atom_features(mol)
        base = run(np.array(mol.coords))
        for _ in range(transforms):
            rot = random_orthogonal(rng)
            shift = rng.uniform(-10.0, 10.0, size=3)
            moved = run(rigid_motion(np.array(mol.coords), rot, shift))
            worst = max(worst, float(np.max(np.abs(moved - rigid_motion(base, rot, shift)))))
    return CheckResult("coordinate-stream equivariance", worst, TOLERANCES["coordinates"], len(molecules) * transforms)


def permutation_check(molecules, cfg: ModelConfig, permutations: int = 10, seed: int = 0) -> CheckResult:
    """max |pred(pi . mol) - pred(mol)| over random atom relabelings."""
    model = build_model(cfg)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for mol in molecules:
        copies = [mol] + [mol.permuted(rng.permutation(mol.num_atoms)) for _ in range(permutations)]
        with T.no_grad():
            pred = model(collate([prepare(m, cfg) for m in copies])).data
        worst = max(worst, float(np.max(np.abs(pred[1:] - pred[0]))))
    return CheckResult(f"permutation invariance ({cfg.kind})", worst, TOLERANCES["permutation"], len(molecules) * permutations)


def model_gradcheck(molecule, cfg: ModelConfig, step: float = 1e-5) -> CheckResult:
    """Central differences against backprop over every parameter of a freshly built model."""
    model = build_model(cfg)
    batch = collate([prepare(molecule, cfg)])
    params = list(model.parameters().values())
    err = T.grad_check(lambda _: T.sum(model(batch)), params, step)
    return CheckResult(f"gradcheck ({cfg.kind}, {sum(p.data.size for p in params)} params)", err, TOLERANCES["gradcheck"], 1)


def encoder_gradcheck(molecule, cfg: ModelConfig, step: float = 1e-5) -> CheckResult:
    """grad_check of sum(encode(.)) with respect to all encoder parameters."""
    encoder = EgnnEncoder(cfg.hidden, cfg.geo_layers, np.random.default_rng(cfg.seed), cfg.activation)
    raw = raw_atom_features(molecule)
    coords = np.array(molecule.coords)
    edges = build_radius_graph(coords, cfg.cutoff, cfg.max_neighbors).edges
    params = list(encoder.parameters().values())
    err = T.grad_check(lambda _: T.sum(encoder(raw, coords, edges)), params, step)
    return CheckResult("gradcheck (encoder)", err, TOLERANCES["gradcheck"], 1)


def small_molecule(molecules, max_atoms: int = 10):
    for mol in molecules:
        if mol.num_atoms <= max_atoms and mol.bonds and any(b.order.is_multiple for b in mol.bonds):
            return mol
    for mol in molecules:
        if mol.num_atoms <= max_atoms:
            return mol
    raise ValueError(f"no molecule with at most {max_atoms} atoms")


def as_tensor_list(params) -> list[Tensor]:
    return list(params.values()) if isinstance(params, dict) else list(params)


@dataclass
class TrendResult:
    maes: dict[str, float]
    n_train: int
    n_val: int

    @property
    def ordering_holds(self) -> bool:
        return self.maes["equihgnn"] <= self.maes["mhnn"]

    def line(self) -> str:
        outcome = "holds" if self.ordering_holds else "does not hold"
        return (f"trend equihgnn val MAE {self.maes['equihgnn']:.2f}, mhnn val MAE {self.maes['mhnn']:.2f}: "
                f"equihgnn <= mhnn {outcome} (train {self.n_train}, val {self.n_val})")


def trend_smoke(records, out_dir, hidden: int = 32, epochs: int = 40, lr: float = 1e-3,
                batch_size: int = 32, seed: int = 0) -> TrendResult:
    """Train equihgnn and mhnn with identical reduced settings and compare best validation MAE."""
    train_split, val_split, _ = split_dataset(records, seed)
    maes = {}
    for kind in ("equihgnn", "mhnn"):
        cfg = TrainConfig(epochs=epochs, lr=lr, batch_size=batch_size, seed=seed, threads=0,
                          out_dir=str(Path(out_dir) / kind))
        res = train(ModelConfig(kind=kind, hidden=hidden, seed=seed), cfg, train_split, val_split)
        maes[kind] = min(r[2] for r in res.log)
    return TrendResult(maes, len(train_split), len(val_split))
