import numpy as np
import pytest

from equihg import tensor as T
from equihg.allset import AllSetLayer, HgState, HyperedgeInit, e2v, readout, v2e
from equihg.checks import random_orthogonal
from equihg.chemio import load_sample, parse_smiles
from equihg.hypergraph import Hypergraph, molecule_hypergraph, to_bipartite
from equihg.model import (
    GIN,
    ModelConfig,
    build_model,
    collate,
    forward_equihgnn,
    forward_gin,
    forward_mhnn,
    predict,
    prepare,
)
from equihg.nn import Mlp
from equihg.tensor import Tensor, grad_check

D = 8


def _hg_state(hg, seed=0):
    rng = np.random.default_rng(seed)
    bip = to_bipartite(hg)
    return HgState.from_bipartite(
        Tensor(rng.normal(size=(hg.num_vertices, D))), Tensor(rng.normal(size=(hg.num_hyperedges, D))), bip
    )


def _cfg(kind, **kw):
    return ModelConfig(kind=kind, hidden=kw.pop("hidden", 16), **kw)


@pytest.fixture(scope="module")
def molecules():
    return [r.molecule for r in load_sample(12)]


# ---------------------------------------------------------------- allset


def test_vertex_in_no_hyperedge_gets_zero_aggregate():
    layer = AllSetLayer(D, np.random.default_rng(0))
    state = _hg_state(Hypergraph(3, ((0, 1),)))
    out = e2v(state, layer).data
    zero = layer.e2v_post(T.concat([Tensor(state.X.data[2:3]), Tensor(np.zeros((1, D)))], axis=1)).data
    np.testing.assert_allclose(out[2:3], zero, rtol=0, atol=1e-15)


def test_vertex_in_one_hyperedge():
    layer = AllSetLayer(D, np.random.default_rng(0))
    state = _hg_state(Hypergraph(3, ((0, 1),)))
    out = e2v(state, layer).data
    agg = layer.e2v_pre(Tensor(state.Z.data[0:1])).data
    expected = layer.e2v_post(Tensor(np.concatenate([state.X.data[0:1], agg], axis=1))).data
    np.testing.assert_allclose(out[0:1], expected, rtol=0, atol=1e-14)


def test_vertex_in_two_hyperedges_sums_messages():
    layer = AllSetLayer(D, np.random.default_rng(0))
    state = _hg_state(Hypergraph(3, ((0, 1), (1, 2))))
    agg = layer.e2v_pre(state.Z).data.sum(axis=0, keepdims=True)
    expected = layer.e2v_post(Tensor(np.concatenate([state.X.data[1:2], agg], axis=1))).data
    np.testing.assert_allclose(e2v(state, layer).data[1:2], expected, rtol=0, atol=1e-14)


def test_v2e_reference():
    layer = AllSetLayer(D, np.random.default_rng(1))
    state = _hg_state(Hypergraph(4, ((0, 2, 3), (1,))))
    pre = layer.v2e_pre(state.X).data
    agg = np.stack([pre[[0, 2, 3]].sum(axis=0), pre[1]])
    expected = layer.v2e_post(Tensor(np.concatenate([state.Z.data, agg], axis=1))).data
    np.testing.assert_allclose(v2e(state, layer).data, expected, rtol=0, atol=1e-14)


def test_incidence_order_shuffles():
    rng = np.random.default_rng(2)
    layer = AllSetLayer(D, np.random.default_rng(3))
    hg = Hypergraph(10, ((0, 1, 2, 3), (3, 4, 5), (6, 7, 8, 9), (0, 9)))
    state = _hg_state(hg)
    base = layer(state)
    for _ in range(20):
        p = rng.permutation(len(state.vertex_index))
        shuffled = HgState(state.X, state.Z, state.vertex_index[p], state.edge_index[p])
        out = layer(shuffled)
        np.testing.assert_allclose(out.X.data, base.X.data, rtol=0, atol=1e-12)
        np.testing.assert_allclose(out.Z.data, base.Z.data, rtol=0, atol=1e-12)


def test_hyperedge_init_is_linear_of_member_sum():
    init = HyperedgeInit(D, np.random.default_rng(0))
    state = _hg_state(Hypergraph(4, ((0, 1), (1, 2, 3))))
    Z = init(state.X, state.vertex_index, state.edge_index, 2).data
    sums = np.stack([state.X.data[[0, 1]].sum(0), state.X.data[[1, 2, 3]].sum(0)])
    np.testing.assert_allclose(Z, init.proj(Tensor(sums)).data, rtol=0, atol=1e-14)


def test_readout_all_zero_is_head_of_zero():
    head = Mlp([2 * D, D, 1], np.random.default_rng(0))
    state = HgState(Tensor(np.zeros((5, D))), Tensor(np.zeros((2, D))), np.array([0, 1]), np.array([0, 1]))
    expected = head(Tensor(np.zeros((1, 2 * D)))).data.reshape(1)
    np.testing.assert_array_equal(readout(state, head).data, expected)


def test_readout_without_hyperedges_uses_zero_sum():
    head = Mlp([2 * D, D, 1], np.random.default_rng(0))
    X = np.random.default_rng(1).normal(size=(4, D))
    state = HgState(Tensor(X), Tensor(np.zeros((0, D))), np.zeros(0, int), np.zeros(0, int))
    expected = head(Tensor(np.concatenate([X.sum(0), np.zeros(D)])[None])).data.reshape(1)
    np.testing.assert_array_equal(readout(state, head).data, expected)


def test_readout_depends_only_on_sums():
    head = Mlp([2 * D, D, 1], np.random.default_rng(0))
    rng = np.random.default_rng(1)
    X = rng.normal(size=(3, D))
    moved = X.copy()
    moved[0] += 1.0
    moved[1] -= 1.0
    Z = rng.normal(size=(1, D))
    ix = np.array([0]), np.array([0])
    a = readout(HgState(Tensor(X), Tensor(Z), *ix), head).data
    b = readout(HgState(Tensor(moved), Tensor(Z), *ix), head).data
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)


# ---------------------------------------------------------------- batching


def test_collate_offsets(molecules):
    cfg = _cfg("equihgnn")
    graphs = [prepare(m, cfg) for m in molecules[:3]]
    batch = collate(graphs)
    n0 = graphs[0].num_atoms
    assert batch.num_graphs == 3
    assert batch.raw.shape[0] == sum(g.num_atoms for g in graphs)
    assert batch.radius_edges[len(graphs[0].radius_edges)].min() >= n0
    assert batch.num_hyperedges == sum(g.num_hyperedges for g in graphs)
    assert np.array_equal(np.bincount(batch.atom_graph), [g.num_atoms for g in graphs])


@pytest.mark.parametrize("kind", ["equihgnn", "mhnn", "gin"])
def test_batched_prediction_equals_single(kind, molecules):
    cfg = _cfg(kind)
    model = build_model(cfg)
    batched = predict(model, cfg, molecules)
    single = [predict(model, cfg, [m])[0] for m in molecules]
    np.testing.assert_allclose(batched, single, rtol=0, atol=1e-12)


# ---------------------------------------------------------------- full models


def test_equihgnn_needs_coordinates():
    cfg = _cfg("equihgnn")
    with pytest.raises(ValueError, match="coordinates"):
        forward_equihgnn(parse_smiles("CC"), build_model(cfg), cfg)


def test_zero_hyperedge_molecules_predict_finite(molecules):
    ethane = parse_smiles("CC")
    assert molecule_hypergraph(ethane).num_hyperedges == 0
    for kind, forward in (("mhnn", forward_mhnn), ("gin", forward_gin)):
        cfg = _cfg(kind)
        assert np.isfinite(forward(ethane, build_model(cfg), cfg).item())
    saturated = next(m for m in load_sample(200) if molecule_hypergraph(m.molecule).num_hyperedges == 0).molecule
    cfg = _cfg("equihgnn")
    assert np.isfinite(forward_equihgnn(saturated, build_model(cfg), cfg).item())


@pytest.mark.parametrize("kind", ["mhnn", "gin"])
def test_2d_models_ignore_coordinates(kind, molecules):
    cfg = _cfg(kind)
    model = build_model(cfg)
    rng = np.random.default_rng(0)
    base = predict(model, cfg, molecules)
    scrambled = [m.with_coords(rng.normal(size=m.coords.shape) * 10) for m in molecules]
    assert np.array_equal(predict(model, cfg, scrambled), base)
    no_coords = [type(m)(m.atoms, m.bonds, None, m.name) for m in molecules]
    assert np.array_equal(predict(model, cfg, no_coords), base)


def test_equihgnn_rigid_motion_invariance(molecules):
    cfg = _cfg("equihgnn")
    model = build_model(cfg)
    rng = np.random.default_rng(1)
    benzene = next(m for m in load_sample(1000) if molecule_hypergraph(m.molecule).num_hyperedges)
    for mol in molecules + [benzene.molecule]:
        copies = [mol.with_coords(mol.coords @ random_orthogonal(rng).T + rng.uniform(-10, 10, 3)) for _ in range(10)]
        preds = predict(model, cfg, [mol] + copies)
        assert np.abs(preds[1:] - preds[0]).max() <= 1e-10


def test_equihgnn_sees_geometry(molecules):
    cfg = _cfg("equihgnn")
    model = build_model(cfg)
    mol = molecules[0]
    stretched = mol.with_coords(mol.coords * np.array([1.0, 1.25, 1.0]))
    assert abs(predict(model, cfg, [stretched])[0] - predict(model, cfg, [mol])[0]) > 1e-6


@pytest.mark.parametrize("kind", ["equihgnn", "mhnn", "gin"])
def test_permutation_invariance(kind, molecules):
    cfg = _cfg(kind)
    model = build_model(cfg)
    rng = np.random.default_rng(2)
    for mol in molecules:
        copies = [mol.permuted(rng.permutation(mol.num_atoms)) for _ in range(5)]
        preds = predict(model, cfg, [mol] + copies)
        assert np.abs(preds[1:] - preds[0]).max() <= 1e-10


def test_gin_isomorphic_butadienes():
    cfg = _cfg("gin")
    model = build_model(cfg)
    a = parse_smiles("C=CC=C")
    b = a.permuted([3, 2, 1, 0] + list(range(4, a.num_atoms)))
    assert predict(model, cfg, [a])[0] == pytest.approx(predict(model, cfg, [b])[0], abs=1e-10)


def test_gin_single_atom_layer():
    cfg = _cfg("gin", hg_layers=1)
    model = build_model(cfg)
    layer = model.layers[0]
    layer.eps.data[:] = 0.3
    h = Tensor(np.random.default_rng(0).normal(size=(1, 16)))
    out = layer(h, np.zeros((0, 2), dtype=int)).data
    np.testing.assert_allclose(out, layer.mlp(Tensor(h.data * 1.3)).data, rtol=0, atol=1e-14)


def test_gin_eps_starts_at_zero():
    model = build_model(_cfg("gin"))
    assert all(layer.eps.data[0] == 0.0 for layer in model.layers)


def test_mhnn_zero_layer_structure(molecules):
    cfg = _cfg("mhnn", hg_layers=0)
    model = build_model(cfg)
    mol = molecules[3]
    batch = collate([prepare(mol, cfg)])
    X = model.atoms(batch.raw)
    Z = model.edge_init(X, batch.vertex_index, batch.edge_index, batch.num_hyperedges)
    sums = np.concatenate([X.data.sum(0), Z.data.sum(0) if len(Z.data) else np.zeros(16)])[None]
    expected = model.head(Tensor(sums)).data.reshape(1)
    np.testing.assert_allclose(model(batch).data, expected, rtol=0, atol=1e-12)


def test_default_config_matches_table_widths():
    cfg = ModelConfig()
    assert (cfg.hidden, cfg.geo_layers, cfg.hg_layers, cfg.head_layers) == (256, 2, 2, 2)
    assert (cfg.cutoff, cfg.max_neighbors) == (5.0, 16)
    assert ModelConfig.from_dict(cfg.to_dict()) == cfg


@pytest.mark.parametrize("bad", [{"kind": "gat"}, {"hidden": 0}, {"cutoff": 0.0}, {"hg_layers": -1}])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        ModelConfig(**bad)


@pytest.mark.parametrize("kind", ["equihgnn", "mhnn", "gin"])
def test_full_parameter_gradcheck(kind):
    mol = next(r.molecule for r in load_sample(50) if r.molecule.num_atoms <= 10)
    cfg = ModelConfig(kind=kind, hidden=6)
    model = build_model(cfg)
    batch = collate([prepare(mol, cfg)])
    params = list(model.parameters().values())
    assert grad_check(lambda _: T.sum(model(batch)), params, 1e-5) <= 1e-5


def test_gin_is_a_gin():
    assert isinstance(build_model(_cfg("gin")), GIN)
