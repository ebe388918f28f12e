import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from equihg.chemio import load_sample, parse_smiles
from equihg.hypergraph import (
    BipartiteGraph,
    Hypergraph,
    build_hypergraph,
    build_radius_graph,
    from_bipartite,
    molecule_hypergraph,
    pairwise_distances,
    perceive_conjugation,
    to_bipartite,
)

DATA = Path(__file__).parent / "data"
GOLDEN = json.loads((DATA / "conjugation_golden.json").read_text())


def _conjugated_pairs(mol):
    return {b.key for b in perceive_conjugation(mol).bonds if b.conjugated}


# ---------------------------------------------------------------- perception


def test_ethane_has_no_conjugation():
    mol = parse_smiles("CC")
    assert _conjugated_pairs(mol) == set()
    hg = molecule_hypergraph(mol)
    assert hg.num_vertices == 8 and hg.hyperedges == ()


def test_butadiene_all_carbon_bonds_conjugated():
    mol = parse_smiles("C=CC=C")
    assert _conjugated_pairs(mol) == {(0, 1), (1, 2), (2, 3)}
    assert molecule_hypergraph(mol).hyperedges == ((0, 1, 2, 3),)


def test_benzene_one_hyperedge_of_six():
    mol = parse_smiles("c1ccccc1")
    assert len(_conjugated_pairs(mol)) == 6
    hg = molecule_hypergraph(mol)
    assert hg.num_vertices == 12
    assert hg.hyperedges == ((0, 1, 2, 3, 4, 5),)


def test_isolated_ring_systems_give_separate_hyperedges():
    # two phenyls joined through a saturated CH2 linker
    hg = molecule_hypergraph(parse_smiles("c1ccccc1Cc1ccccc1"))
    assert hg.hyperedges == ((0, 1, 2, 3, 4, 5), (7, 8, 9, 10, 11, 12))


def test_hydrogens_never_join_hyperedges():
    for record in load_sample(200):
        mol = record.molecule
        hydrogens = {a.index for a in mol.atoms if a.element == "H"}
        for edge in molecule_hypergraph(mol).hyperedges:
            assert hydrogens.isdisjoint(edge)


def test_perception_does_not_mutate_input():
    mol = parse_smiles("C=CC=C")
    perceive_conjugation(mol)
    assert not any(b.conjugated for b in mol.bonds)


@pytest.mark.parametrize("entry", GOLDEN, ids=lambda e: e["smiles"])
def test_conjugation_flags_match_golden(entry):
    mol = perceive_conjugation(parse_smiles(entry["smiles"]))
    heavy = {i for i, a in enumerate(mol.atoms) if a.element != "H"}
    got = sorted([b.a, b.b, int(b.conjugated)] for b in mol.bonds if b.a in heavy and b.b in heavy)
    assert got == entry["bonds"]


@pytest.mark.parametrize("entry", GOLDEN, ids=lambda e: e["smiles"])
def test_hyperedges_match_golden_components(entry):
    hg = molecule_hypergraph(parse_smiles(entry["smiles"]))
    assert sorted(map(list, hg.hyperedges)) == sorted(entry["components"])


def test_bundled_sample_matches_reference_components():
    expected = json.loads((DATA / "sample_conjugation.json").read_text())
    records = load_sample()
    assert len(expected) == len(records) == 1000
    mismatched = [
        r.molecule.name for r in records
        if sorted(map(list, molecule_hypergraph(r.molecule).hyperedges)) != sorted(expected[r.molecule.name])
    ]
    assert mismatched == []


def test_hypergraph_permutation_equivariance_200():
    rng = np.random.default_rng(5)
    mols = [parse_smiles(e["smiles"]) for e in GOLDEN]
    for k in range(200):
        mol = mols[k % len(mols)]
        perm = rng.permutation(mol.num_atoms)
        base = molecule_hypergraph(mol)
        moved = molecule_hypergraph(mol.permuted(perm))
        relabeled = {tuple(sorted(int(perm[v]) for v in e)) for e in base.hyperedges}
        assert set(moved.hyperedges) == relabeled


# ---------------------------------------------------------------- Hypergraph type


def test_hypergraph_normalizes_and_dedups():
    hg = Hypergraph(4, ([2, 0], (0, 2), {3}))
    assert hg.hyperedges == ((0, 2), (3,))


@pytest.mark.parametrize("edges", [([],), ([0, 5],), ([-1],)])
def test_hypergraph_rejects_bad_edges(edges):
    with pytest.raises(ValueError):
        Hypergraph(3, edges)


def test_hypergraph_json_format():
    hg = Hypergraph(5, ((3, 1), (0, 4, 2)))
    assert json.loads(hg.dumps()) == {"num_vertices": 5, "hyperedges": [[1, 3], [0, 2, 4]]}
    assert Hypergraph.from_json(hg.dumps()) == hg


# ---------------------------------------------------------------- bipartite


def test_bipartite_two_edges():
    bip = to_bipartite(Hypergraph(3, ((0, 1), (1, 2))))
    assert (bip.num_vertex_nodes, bip.num_edge_nodes) == (3, 2)
    assert set(bip.incidence) == {(0, 0), (1, 0), (1, 1), (2, 1)}


def test_bipartite_no_edges():
    bip = to_bipartite(Hypergraph(4))
    assert bip.num_edge_nodes == 0 and len(bip.incidence) == 0


def test_bipartite_single_triple():
    bip = to_bipartite(Hypergraph(3, ((0, 1, 2),)))
    assert sorted(bip.incidence) == [(0, 0), (1, 0), (2, 0)]


def test_bipartite_index_arrays():
    bip = to_bipartite(Hypergraph(3, ((0, 1), (1, 2))))
    assert list(zip(bip.vertex_index, bip.edge_index)) == list(bip.incidence)


def test_bipartite_rejects_duplicates_and_range():
    with pytest.raises(ValueError):
        BipartiteGraph(2, 1, ((0, 0), (0, 0)))
    with pytest.raises(ValueError):
        BipartiteGraph(2, 1, ((2, 0),))


@st.composite
def hypergraphs(draw):
    n = draw(st.integers(1, 30))
    edges = draw(st.lists(st.frozensets(st.integers(0, n - 1), min_size=1), max_size=8, unique=True))
    return Hypergraph(n, tuple(sorted(e) for e in edges))


@settings(max_examples=1000, deadline=None)
@given(hypergraphs())
def test_bipartite_round_trip(hg):
    assert from_bipartite(to_bipartite(hg)) == hg


# ---------------------------------------------------------------- radius graph


def test_far_atoms_have_no_edges():
    g = build_radius_graph(np.array([[0.0, 0, 0], [6.0, 0, 0]]), cutoff=5.0)
    assert g.num_edges == 0


def test_collinear_triple_all_pairs():
    g = build_radius_graph(np.array([[0.0, 0, 0], [1.0, 0, 0], [2.0, 0, 0]]), 5.0, 16)
    assert sorted(map(tuple, g.edges.tolist())) == [(0, 1), (0, 2), (1, 0), (1, 2), (2, 0), (2, 1)]


def test_cutoff_is_inclusive():
    g = build_radius_graph(np.array([[0.0, 0, 0], [5.0, 0, 0]]), 5.0)
    assert g.num_edges == 2


def test_neighbor_cap_keeps_nearest():
    # node 0 at the origin, 18 others on the x axis at 0.25, 0.5, ... 4.5 A (all within 5 A of node 0)
    coords = np.zeros((19, 3))
    coords[1:, 0] = 0.25 * np.arange(1, 19)
    g = build_radius_graph(coords, 5.0, 16)
    out0 = g.edges[g.src == 0, 1]
    assert len(out0) == 16
    assert sorted(out0.tolist()) == list(range(1, 17))
    assert g.out_degree(19).max() <= 16


def test_neighbor_cap_ties_prefer_smaller_index():
    # 4 neighbors at identical distance, keep 2 -> indices 1 and 2
    coords = np.array([[0.0, 0, 0], [1.0, 0, 0], [-1.0, 0, 0], [0, 1.0, 0], [0, -1.0, 0]])
    g = build_radius_graph(coords, 5.0, 2)
    assert g.edges[g.src == 0, 1].tolist() == [1, 2]


def test_radius_graph_rejects_bad_input():
    with pytest.raises(ValueError):
        build_radius_graph(np.array([[0.0, np.nan, 0]]))
    with pytest.raises(ValueError):
        build_radius_graph(np.zeros((2, 3)), cutoff=0.0)
    with pytest.raises(ValueError):
        build_radius_graph(np.zeros((2, 3)), max_neighbors=0)


def test_candidates_are_symmetric_before_cap():
    rng = np.random.default_rng(0)
    coords = rng.uniform(-4, 4, size=(25, 3))
    g = build_radius_graph(coords, 5.0, 1000)
    pairs = set(map(tuple, g.edges.tolist()))
    assert all((j, i) in pairs for i, j in pairs)
    d = pairwise_distances(coords)
    assert all(d[i, j] <= 5.0 for i, j in pairs)


def _random_rotation(rng):
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    return q * np.sign(np.diag(r))


def test_radius_graph_rigid_motion_invariance_on_sample():
    rng = np.random.default_rng(1)
    for record in load_sample(100):
        coords = np.array(record.molecule.coords)
        base = build_radius_graph(coords, 5.0, 16).edges
        for _ in range(5):
            moved = coords @ _random_rotation(rng).T + rng.uniform(-20, 20, size=3)
            np.testing.assert_array_equal(build_radius_graph(moved, 5.0, 16).edges, base)


def test_edges_grouped_by_source_in_order():
    rng = np.random.default_rng(2)
    g = build_radius_graph(rng.uniform(-3, 3, size=(30, 3)), 4.0, 8)
    keys = g.edges[:, 0] * 1000 + g.edges[:, 1]
    assert np.all(np.diff(keys) > 0)
