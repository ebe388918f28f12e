"""EGNN-style E(3)-equivariant encoder.

Messages see only invariant inputs (node features and squared distances);
coordinates are updated by scaling relative position vectors with a learned
scalar gate, so the feature stream is invariant and the coordinate stream is
equivariant under rotations, reflections and translations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .chemio.molecule import ELEMENT_INDEX, ELEMENTS, Molecule
from .hypergraph import RadiusGraph, build_radius_graph
from .nn import Linear, Mlp, Module
from .tensor import Tensor

RAW_FEATURES = len(ELEMENTS) + 3  # one-hot element, aromatic, formal charge, degree


def raw_atom_features(mol: Molecule) -> np.ndarray:
    """Unprojected per-atom features: one-hot element ++ [aromatic, charge, degree]."""
    feats = np.zeros((mol.num_atoms, RAW_FEATURES))
    degrees = mol.degrees()
    for atom in mol.atoms:
        row = feats[atom.index]
        row[ELEMENT_INDEX[atom.element]] = 1.0
        row[len(ELEMENTS)] = float(atom.aromatic)
        row[len(ELEMENTS) + 1] = float(atom.formal_charge)
        row[len(ELEMENTS) + 2] = float(degrees[atom.index])
    return feats


class AtomEncoder(Module):
    def __init__(self, hidden: int, rng: np.random.Generator):
        self.proj = Linear(RAW_FEATURES, hidden, rng)

    def __call__(self, raw) -> Tensor:
        return self.proj(T.as_tensor(raw))


def atom_featurize(mol: Molecule, encoder: AtomEncoder) -> Tensor:
    return encoder(raw_atom_features(mol))


@dataclass
class GeoState:
    h: Tensor  # (N, d) invariant features
    x: Tensor  # (N, 3) coordinates, Angstrom
    edges: np.ndarray  # (E, 2) directed pairs (i, j): j is a neighbor of i

    def __post_init__(self):
        if isinstance(self.edges, RadiusGraph):
            self.edges = self.edges.edges
        self.edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        n = self.h.shape[0]
        if self.x.shape != (n, 3):
            raise ValueError(f"x has shape {self.x.shape}, expected ({n}, 3)")
        if len(self.edges) and (self.edges.min() < 0 or self.edges.max() >= n):
            raise ValueError("edges reference nodes outside the state")


class EgnnLayer(Module):
    def __init__(self, hidden: int, rng: np.random.Generator, activation: str = "silu"):
        self.hidden = hidden
        self.phi_e = Mlp([2 * hidden + 1, hidden, hidden], rng, activation)
        self.phi_h = Mlp([2 * hidden, hidden, hidden], rng, activation)
        self.phi_x = Mlp([hidden, hidden, 1], rng, activation)

    def messages(self, h: Tensor, d2: Tensor, i: np.ndarray, j: np.ndarray) -> Tensor:
        """phi_e(h_i ++ h_j ++ d2) per edge.

        The first linear layer is split by input block and applied per node
        before gathering, which equals applying it to the concatenation.
        """
        d = self.hidden
        first = self.phi_e.layers[0]
        w_i = T.transpose(first.weight[:, :d])
        w_j = T.transpose(first.weight[:, d:2 * d])
        w_d = T.reshape(first.weight[:, 2 * d], (1, d))
        z = T.gather(T.matmul(h, w_i), i) + T.gather(T.matmul(h, w_j), j) + d2 * w_d + first.bias
        act = T.silu if self.phi_e.activation == "silu" else T.relu
        for layer in self.phi_e.layers[1:]:
            z = layer(act(z))
        return z

    def __call__(self, state: GeoState, update_coords: bool = True) -> GeoState:
        n = state.h.shape[0]
        i, j = state.edges[:, 0], state.edges[:, 1]
        if len(i) == 0:
            zeros = Tensor(np.zeros((n, self.hidden)))
            h = state.h + self.phi_h(T.concat([state.h, zeros], axis=1))
            return GeoState(h, state.x, state.edges)
        diff = T.gather(state.x, i) - T.gather(state.x, j)
        d2 = T.sum(T.square(diff), axis=1, keepdims=True)
        m = self.messages(state.h, d2, i, j)
        agg = T.scatter_sum(m, i, n)
        h = state.h + self.phi_h(T.concat([state.h, agg], axis=1))
        x = state.x
        if update_coords:
            gate = self.phi_x(m)
            step = diff / (T.sqrt(d2) + 1.0) * gate
            inv_deg = 1.0 / np.maximum(1, np.bincount(i, minlength=n)).reshape(n, 1)
            x = state.x + T.scatter_sum(step, i, n) * inv_deg
        return GeoState(h, x, state.edges)


def egnn_layer_forward(state: GeoState, layer: EgnnLayer) -> GeoState:
    return layer(state)


class EgnnEncoder(Module):
    def __init__(self, hidden: int, num_layers: int, rng: np.random.Generator, activation: str = "silu"):
        self.atoms = AtomEncoder(hidden, rng)
        self.layers = [EgnnLayer(hidden, rng, activation) for _ in range(num_layers)]

    def run(self, raw, coords, edges, keep_coords: bool = False) -> GeoState:
        """Featurize and apply every layer; the final coordinate update is skipped unless asked for."""
        state = GeoState(self.atoms(raw), T.as_tensor(coords), edges)
        for k, layer in enumerate(self.layers):
            last = k == len(self.layers) - 1
            state = layer(state, update_coords=keep_coords or not last)
        return state

    def __call__(self, raw, coords, edges) -> Tensor:
        return self.run(raw, coords, edges).h


def encode(mol: Molecule, encoder: EgnnEncoder, cutoff: float = 5.0, max_neighbors: int = 16) -> Tensor:
    """Invariant per-atom embeddings of one molecule."""
    if mol.coords is None:
        raise ValueError(f"molecule {mol.name!r} has no 3D coordinates")
    graph = build_radius_graph(mol.coords, cutoff, max_neighbors)
    return encoder(raw_atom_features(mol), np.array(mol.coords), graph.edges)
