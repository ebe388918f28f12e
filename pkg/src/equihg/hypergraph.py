"""Conjugated-system perception, molecular hypergraphs and geometric neighbor graphs."""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from .chemio.molecule import BondOrder, Molecule

# Per-element data used by the conjugation rule.
_DEFAULT_VALENCE = {"H": 1, "B": 3, "C": 4, "N": 3, "O": 2, "F": 1, "Si": 4, "P": 3, "S": 2, "Cl": 1, "Br": 1, "I": 1}
_OUTER_ELECTRONS = {"H": 1, "B": 3, "C": 4, "N": 5, "O": 6, "F": 7, "Si": 4, "P": 5, "S": 6, "Cl": 7, "Br": 7, "I": 7}
_FIRST_ROW = {"H", "B", "C", "N", "O", "F"}

# Distances are compared after rounding to this many decimals (Angstrom), so that
# rigid motions, which perturb the last bits, cannot reorder neighbors.
DISTANCE_DECIMALS = 8


def _pi_electrons(element: str, charge: int, coordination: int) -> int:
    """Electrons an atom can donate to a pi system; <= 0 means it cannot take part."""
    dv = _DEFAULT_VALENCE[element]
    if dv <= 1 or coordination > 3:
        return -1
    lone = max(_OUTER_ELECTRONS[element] - dv - charge, 0)
    return dv - coordination + lone


def _can_conjugate(element: str, charge: int, coordination: int) -> bool:
    outer = _OUTER_ELECTRONS[element]
    row_ok = element in _FIRST_ROW or outer not in (5, 6) or (outer == 6 and coordination < 2)
    return row_ok and _pi_electrons(element, charge, coordination) > 0


def perceive_conjugation(mol: Molecule) -> Molecule:
    """Return a copy of ``mol`` with every bond's ``conjugated`` flag set.

    Aromatic bonds are conjugated. Otherwise, at a candidate atom with two or
    three substituents, a multiple bond is conjugated together with each other
    bond leading to a candidate neighbor of coordination at most three. A
    candidate atom has pi or lone-pair electrons to offer (so carbonyl and
    vinyl carbons, amide nitrogens and ester oxygens qualify; halogens and
    saturated carbons do not). An isolated C=C or C=O is therefore not
    conjugated, while C=C-C=C, C=C-C=O and O=C-N are.
    """
    n = mol.num_atoms
    nbr_bonds: list[list[int]] = [[] for _ in range(n)]
    for k, bond in enumerate(mol.bonds):
        nbr_bonds[bond.a].append(k)
        nbr_bonds[bond.b].append(k)
    coordination = [len(b) for b in nbr_bonds]
    candidate = [
        _can_conjugate(a.element, a.formal_charge, coordination[a.index]) for a in mol.atoms
    ]
    flags = [b.order is BondOrder.AROMATIC for b in mol.bonds]
    for i in range(n):
        if not candidate[i] or not 2 <= coordination[i] <= 3:
            continue
        for k1 in nbr_bonds[i]:
            if mol.bonds[k1].order.valence < 1.5:
                continue
            for k2 in nbr_bonds[i]:
                if k2 == k1:
                    continue
                j = mol.bonds[k2].other(i)
                if coordination[j] <= 3 and candidate[j]:
                    flags[k1] = flags[k2] = True
    bonds = tuple(replace(b, conjugated=f) for b, f in zip(mol.bonds, flags))
    return replace(mol, bonds=bonds)


@dataclass(frozen=True)
class Hypergraph:
    """Vertex count plus hyperedges; each hyperedge is a sorted tuple of vertex ids."""

    num_vertices: int
    hyperedges: tuple = ()

    def __post_init__(self):
        normalized = []
        seen = set()
        for edge in self.hyperedges:
            members = tuple(sorted({int(v) for v in edge}))
            if not members:
                raise ValueError("hyperedges must be non-empty")
            if members[0] < 0 or members[-1] >= self.num_vertices:
                raise ValueError(f"hyperedge {members} out of range for {self.num_vertices} vertices")
            if members not in seen:
                seen.add(members)
                normalized.append(members)
        object.__setattr__(self, "hyperedges", tuple(normalized))

    @property
    def num_hyperedges(self) -> int:
        return len(self.hyperedges)

    def to_json(self) -> dict:
        return {"num_vertices": self.num_vertices, "hyperedges": [list(e) for e in self.hyperedges]}

    def dumps(self) -> str:
        return json.dumps(self.to_json())

    @classmethod
    def from_json(cls, obj) -> "Hypergraph":
        if isinstance(obj, str):
            obj = json.loads(obj)
        return cls(int(obj["num_vertices"]), tuple(tuple(e) for e in obj["hyperedges"]))


def build_hypergraph(mol: Molecule) -> Hypergraph:
    """One hyperedge per maximal conjugated system (connected component of conjugated bonds)."""
    parent = list(range(mol.num_atoms))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    members = set()
    for bond in mol.bonds:
        if bond.conjugated:
            members.update((bond.a, bond.b))
            ra, rb = find(bond.a), find(bond.b)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)
    groups: dict[int, list[int]] = {}
    for v in sorted(members):
        groups.setdefault(find(v), []).append(v)
    edges = sorted(tuple(g) for g in groups.values())
    return Hypergraph(mol.num_atoms, tuple(edges))


def molecule_hypergraph(mol: Molecule) -> Hypergraph:
    return build_hypergraph(perceive_conjugation(mol))


@dataclass(frozen=True)
class BipartiteGraph:
    """Vertex-nodes and edge-nodes joined by incidence pairs ``(vertex, edge)``."""

    num_vertex_nodes: int
    num_edge_nodes: int
    incidence: tuple = ()

    def __post_init__(self):
        pairs = tuple((int(v), int(e)) for v, e in self.incidence)
        if len(set(pairs)) != len(pairs):
            raise ValueError("incidence pairs must be unique")
        for v, e in pairs:
            if not (0 <= v < self.num_vertex_nodes and 0 <= e < self.num_edge_nodes):
                raise ValueError(f"incidence pair {(v, e)} out of range")
        object.__setattr__(self, "incidence", pairs)

    @property
    def vertex_index(self) -> np.ndarray:
        return np.array([v for v, _ in self.incidence], dtype=np.int64)

    @property
    def edge_index(self) -> np.ndarray:
        return np.array([e for _, e in self.incidence], dtype=np.int64)


def to_bipartite(h: Hypergraph) -> BipartiteGraph:
    incidence = tuple((v, e) for e, edge in enumerate(h.hyperedges) for v in edge)
    return BipartiteGraph(h.num_vertices, h.num_hyperedges, incidence)


def from_bipartite(bip: BipartiteGraph) -> Hypergraph:
    edges: list[list[int]] = [[] for _ in range(bip.num_edge_nodes)]
    for v, e in bip.incidence:
        edges[e].append(v)
    return Hypergraph(bip.num_vertex_nodes, tuple(tuple(e) for e in edges))


@dataclass(frozen=True)
class RadiusGraph:
    """Directed edges ``(i, j)``: ``j`` is one of the kept neighbors of ``i``."""

    edges: np.ndarray
    cutoff: float
    max_neighbors: int

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def src(self) -> np.ndarray:
        return self.edges[:, 0]

    @property
    def dst(self) -> np.ndarray:
        return self.edges[:, 1]

    def out_degree(self, num_nodes: int) -> np.ndarray:
        return np.bincount(self.edges[:, 0], minlength=num_nodes) if len(self.edges) else np.zeros(num_nodes, int)


def pairwise_distances(coords: np.ndarray) -> np.ndarray:
    diff = coords[:, None, :] - coords[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def build_radius_graph(coords, cutoff: float = 5.0, max_neighbors: int = 16) -> RadiusGraph:
    """Neighbors within ``cutoff``; above ``max_neighbors`` keep the nearest, ties to the smaller index."""
    coords = np.asarray(coords, dtype=np.float64).reshape(-1, 3)
    if not np.all(np.isfinite(coords)):
        raise ValueError("coordinates must be finite")
    if cutoff <= 0:
        raise ValueError("cutoff must be positive")
    if max_neighbors < 1:
        raise ValueError("max_neighbors must be at least 1")
    n = len(coords)
    if n == 0:
        return RadiusGraph(np.zeros((0, 2), dtype=np.int64), float(cutoff), int(max_neighbors))
    dist = np.round(pairwise_distances(coords), DISTANCE_DECIMALS)
    rows = []
    idx = np.arange(n)
    for i in range(n):
        cand = np.flatnonzero((dist[i] <= cutoff) & (idx != i))
        if len(cand) > max_neighbors:
            order = np.lexsort((cand, dist[i, cand]))
            cand = np.sort(cand[order[:max_neighbors]])
        rows.extend((i, int(j)) for j in cand)
    edges = np.array(rows, dtype=np.int64).reshape(-1, 2)
    return RadiusGraph(edges, float(cutoff), int(max_neighbors))
