"""Complete predictors (EquiHGNN, MHNN, GIN) and graph batching."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

from . import tensor as T
from .allset import AllSetLayer, HgState, HyperedgeInit, readout
from .chemio.molecule import Molecule
from .geo import AtomEncoder, EgnnEncoder, raw_atom_features
from .hypergraph import build_radius_graph, molecule_hypergraph, to_bipartite
from .nn import Mlp, Module
from .tensor import Tensor

KINDS = ("equihgnn", "mhnn", "gin")


@dataclass
class ModelConfig:
    kind: str = "equihgnn"
    hidden: int = 256
    geo_layers: int = 2
    hg_layers: int = 2
    head_layers: int = 2
    cutoff: float = 5.0
    max_neighbors: int = 16
    seed: int = 0
    activation: str = "silu"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}; expected one of {KINDS}")
        for name in ("hidden", "head_layers", "max_neighbors"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        for name in ("geo_layers", "hg_layers"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.cutoff <= 0:
            raise ValueError("cutoff must be positive")

    @property
    def needs_coords(self) -> bool:
        return self.kind == "equihgnn"

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


@dataclass
class MolGraph:
    """Everything a forward pass needs from one molecule, computed once."""

    raw: np.ndarray  # (N, RAW_FEATURES)
    coords: np.ndarray | None  # (N, 3)
    radius_edges: np.ndarray  # (E, 2)
    bond_edges: np.ndarray  # (2B, 2), both directions
    incidence: np.ndarray  # (P, 2) (vertex, hyperedge)
    num_hyperedges: int

    @property
    def num_atoms(self) -> int:
        return len(self.raw)


def prepare(mol: Molecule, cfg: ModelConfig) -> MolGraph:
    hg = molecule_hypergraph(mol)
    bip = to_bipartite(hg)
    incidence = np.array(bip.incidence, dtype=np.int64).reshape(-1, 2)
    bonds = np.array([(b.a, b.b) for b in mol.bonds], dtype=np.int64).reshape(-1, 2)
    bond_edges = np.concatenate([bonds, bonds[:, ::-1]]) if len(bonds) else bonds
    coords = None if mol.coords is None else np.array(mol.coords)
    if cfg.needs_coords:
        if coords is None:
            raise ValueError(f"molecule {mol.name!r} has no 3D coordinates (required by {cfg.kind})")
        radius = build_radius_graph(coords, cfg.cutoff, cfg.max_neighbors).edges
    else:
        radius = np.zeros((0, 2), dtype=np.int64)
    return MolGraph(raw_atom_features(mol), coords, radius, bond_edges, incidence, hg.num_hyperedges)


@dataclass
class Batch:
    raw: np.ndarray
    coords: np.ndarray | None
    radius_edges: np.ndarray
    bond_edges: np.ndarray
    vertex_index: np.ndarray
    edge_index: np.ndarray
    num_hyperedges: int
    atom_graph: np.ndarray
    edge_graph: np.ndarray
    num_graphs: int


def collate(graphs) -> Batch:
    """Concatenate molecules into one disconnected graph with per-row graph ids."""
    graphs = list(graphs)
    atom_off = np.cumsum([0] + [g.num_atoms for g in graphs])
    edge_off = np.cumsum([0] + [g.num_hyperedges for g in graphs])
    cat = lambda arrs, width: np.concatenate(arrs) if arrs else np.zeros((0, width), np.int64)  # noqa: E731
    radius = cat([g.radius_edges + atom_off[k] for k, g in enumerate(graphs)], 2)
    bonds = cat([g.bond_edges + atom_off[k] for k, g in enumerate(graphs)], 2)
    inc = cat([g.incidence + [atom_off[k], edge_off[k]] for k, g in enumerate(graphs)], 2)
    have_coords = all(g.coords is not None for g in graphs)
    return Batch(
        raw=np.concatenate([g.raw for g in graphs]),
        coords=np.concatenate([g.coords for g in graphs]) if have_coords else None,
        radius_edges=radius.astype(np.int64),
        bond_edges=bonds.astype(np.int64),
        vertex_index=inc[:, 0].astype(np.int64),
        edge_index=inc[:, 1].astype(np.int64),
        num_hyperedges=int(edge_off[-1]),
        atom_graph=np.repeat(np.arange(len(graphs)), [g.num_atoms for g in graphs]),
        edge_graph=np.repeat(np.arange(len(graphs)), [g.num_hyperedges for g in graphs]),
        num_graphs=len(graphs),
    )


class HypergraphModel(Module):
    """Shared AllSet trunk and readout; subclasses provide the initial vertex features."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        d = cfg.hidden
        self.edge_init = HyperedgeInit(d, rng)
        self.hg_layers = [AllSetLayer(d, rng, cfg.activation) for _ in range(cfg.hg_layers)]
        self.head = Mlp([2 * d] + [d] * (cfg.head_layers - 1) + [1], rng, cfg.activation)

    def vertex_features(self, batch: Batch) -> Tensor:
        raise NotImplementedError

    def __call__(self, batch: Batch) -> Tensor:
        X = self.vertex_features(batch)
        Z = self.edge_init(X, batch.vertex_index, batch.edge_index, batch.num_hyperedges)
        state = HgState(X, Z, batch.vertex_index, batch.edge_index)
        for layer in self.hg_layers:
            state = layer(state)
        return readout(state, self.head, batch.atom_graph, batch.edge_graph, batch.num_graphs)


class EquiHGNN(HypergraphModel):
    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        self.encoder = EgnnEncoder(cfg.hidden, cfg.geo_layers, rng, cfg.activation)
        super().__init__(cfg, rng)

    def vertex_features(self, batch: Batch) -> Tensor:
        if batch.coords is None:
            raise ValueError("equihgnn needs 3D coordinates")
        return self.encoder(batch.raw, batch.coords, batch.radius_edges)


class MHNN(HypergraphModel):
    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        self.atoms = AtomEncoder(cfg.hidden, rng)
        super().__init__(cfg, rng)

    def vertex_features(self, batch: Batch) -> Tensor:
        return self.atoms(batch.raw)


class GinLayer(Module):
    def __init__(self, hidden: int, rng: np.random.Generator, activation: str = "silu"):
        self.eps = Tensor(np.zeros(1), requires_grad=True)
        self.mlp = Mlp([hidden, hidden, hidden], rng, activation)

    def __call__(self, h: Tensor, edges: np.ndarray) -> Tensor:
        n = h.shape[0]
        if len(edges):
            agg = T.scatter_sum(T.gather(h, edges[:, 1]), edges[:, 0], n)
        else:
            agg = Tensor(np.zeros(h.shape))
        return self.mlp(h * (self.eps + 1.0) + agg)


class GIN(Module):
    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        d = cfg.hidden
        self.atoms = AtomEncoder(d, rng)
        self.layers = [GinLayer(d, rng, cfg.activation) for _ in range(cfg.hg_layers)]
        self.head = Mlp([d] * cfg.head_layers + [1], rng, cfg.activation)

    def __call__(self, batch: Batch) -> Tensor:
        h = self.atoms(batch.raw)
        for layer in self.layers:
            h = layer(h, batch.bond_edges)
        pooled = T.scatter_sum(h, batch.atom_graph, batch.num_graphs)
        return T.reshape(self.head(pooled), (batch.num_graphs,))


_CLASSES = {"equihgnn": EquiHGNN, "mhnn": MHNN, "gin": GIN}


def build_model(cfg: ModelConfig):
    """Fresh parameters, deterministic in ``cfg.seed``."""
    return _CLASSES[cfg.kind](cfg, np.random.default_rng(cfg.seed))


def predict(model, cfg: ModelConfig, molecules) -> np.ndarray:
    """Predictions for a list of molecules, one batched forward, no graph recorded."""
    with T.no_grad():
        return model(collate([prepare(m, cfg) for m in molecules])).data.copy()


def forward_equihgnn(mol: Molecule, model: EquiHGNN, cfg: ModelConfig) -> Tensor:
    return model(collate([prepare(mol, cfg)]))[0]


def forward_mhnn(mol: Molecule, model: MHNN, cfg: ModelConfig) -> Tensor:
    return model(collate([prepare(mol, cfg)]))[0]


def forward_gin(mol: Molecule, model: GIN, cfg: ModelConfig) -> Tensor:
    return model(collate([prepare(mol, cfg)]))[0]
