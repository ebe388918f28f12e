"""AllSet message passing on the bipartite form of a hypergraph.

Both set functions use the sum form ``post(self ++ sum(pre(members)))``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .nn import Linear, Mlp, Module
from .tensor import Tensor


@dataclass
class HgState:
    X: Tensor  # (N, d) vertex features
    Z: Tensor  # (M, d) hyperedge features
    vertex_index: np.ndarray  # incidence pairs, vertex side
    edge_index: np.ndarray  # incidence pairs, hyperedge side

    @property
    def num_vertices(self) -> int:
        return self.X.shape[0]

    @property
    def num_edges(self) -> int:
        return self.Z.shape[0]

    @classmethod
    def from_bipartite(cls, X: Tensor, Z: Tensor, bip) -> "HgState":
        if X.shape[0] != bip.num_vertex_nodes or Z.shape[0] != bip.num_edge_nodes:
            raise ValueError("feature rows do not match the bipartite graph")
        return cls(X, Z, bip.vertex_index, bip.edge_index)


class AllSetLayer(Module):
    def __init__(self, hidden: int, rng: np.random.Generator, activation: str = "silu"):
        self.v2e_pre = Mlp([hidden, hidden, hidden], rng, activation)
        self.v2e_post = Mlp([2 * hidden, hidden, hidden], rng, activation)
        self.e2v_pre = Mlp([hidden, hidden, hidden], rng, activation)
        self.e2v_post = Mlp([2 * hidden, hidden, hidden], rng, activation)

    def __call__(self, state: HgState) -> HgState:
        Z = v2e(state, self)
        state = HgState(state.X, Z, state.vertex_index, state.edge_index)
        X = e2v(state, self)
        return HgState(X, Z, state.vertex_index, state.edge_index)


def v2e(state: HgState, layer: AllSetLayer) -> Tensor:
    """Z_e <- post(Z_e ++ sum_{v in e} pre(X_v))."""
    if state.num_edges == 0:
        return state.Z
    msgs = T.gather(layer.v2e_pre(state.X), state.vertex_index)
    agg = T.scatter_sum(msgs, state.edge_index, state.num_edges)
    return layer.v2e_post(T.concat([state.Z, agg], axis=1))


def e2v(state: HgState, layer: AllSetLayer) -> Tensor:
    """X_v <- post(X_v ++ sum_{e containing v} pre(Z_e)); vertices in no hyperedge aggregate zero."""
    if state.num_edges == 0:
        agg = Tensor(np.zeros(state.X.shape))
    else:
        msgs = T.gather(layer.e2v_pre(state.Z), state.edge_index)
        agg = T.scatter_sum(msgs, state.vertex_index, state.num_vertices)
    return layer.e2v_post(T.concat([state.X, agg], axis=1))


class HyperedgeInit(Module):
    """Z_e(0) = Linear(sum of member vertex features)."""

    def __init__(self, hidden: int, rng: np.random.Generator):
        self.proj = Linear(hidden, hidden, rng)

    def __call__(self, X: Tensor, vertex_index, edge_index, num_edges: int) -> Tensor:
        if num_edges == 0:
            return Tensor(np.zeros((0, X.shape[1])))
        return self.proj(T.scatter_sum(T.gather(X, vertex_index), edge_index, num_edges))


def readout(state: HgState, head: Mlp, vertex_graph=None, edge_graph=None, num_graphs: int = 1) -> Tensor:
    """head(sum_v X_v ++ sum_e Z_e) per graph, shape (num_graphs,).

    ``vertex_graph``/``edge_graph`` assign rows to graphs in a batch; by default
    everything belongs to graph 0. A graph without hyperedges gets a zero Z-sum.
    """
    if vertex_graph is None:
        vertex_graph = np.zeros(state.num_vertices, dtype=np.int64)
    if edge_graph is None:
        edge_graph = np.zeros(state.num_edges, dtype=np.int64)
    xs = T.scatter_sum(state.X, vertex_graph, num_graphs)
    zs = T.scatter_sum(state.Z, edge_graph, num_graphs)
    return T.reshape(head(T.concat([xs, zs], axis=1)), (num_graphs,))
