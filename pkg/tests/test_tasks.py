import filecmp

import networkx as nx
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.sparse.csgraph import shortest_path

from swan_lab import tasks as T
from swan_lab.errors import DisconnectedGraphError
from swan_lab.graph import Graph


def to_nx(g):
    h = nx.Graph()
    h.add_nodes_from(range(g.n))
    h.add_edges_from(g.edges)
    return h


@pytest.mark.parametrize("topology", T.TOPOLOGIES)
@pytest.mark.parametrize("k", [3, 5, 10])
def test_transfer_graph_distance(topology, k):
    g = T.transfer_graph(topology, k)
    assert g.is_connected()
    assert g.distances()[0, k] == k
    assert g.n == (k + 1 if topology == "line" else 2 * k)


def test_crossed_ring_chords():
    g = T.transfer_graph("crossed_ring", 6)
    assert set(g.edges) - set(T.transfer_graph("ring", 6).edges) == {(2, 10), (3, 9), (4, 8)}
    # k=3 leaves no room for opposite chords
    assert T.transfer_graph("crossed_ring", 3) == T.transfer_graph("ring", 3)
    crossed = T.transfer_graph("crossed_ring", 6, chords="crossed")
    assert crossed.distances()[0, 6] == 6
    with pytest.raises(ValueError):
        T.transfer_graph("crossed_ring", 6, chords="random")
    with pytest.raises(ValueError):
        T.transfer_graph("torus", 3)
    with pytest.raises(ValueError):
        T.transfer_graph("line", 0)


def test_transfer_instances():
    items = T.gen_transfer("ring", 5, 20, seed=3)
    for inst in items:
        x, y = inst.features[:, 0], inst.targets[:, 0]
        assert x[0] == 1.0 and x[5] == 0.0
        assert y[0] == 0.0 and y[5] == 1.0
        others = np.setdiff1d(np.arange(10), [0, 5])
        np.testing.assert_array_equal(x[others], y[others])
        assert np.all((x[others] > 0) & (x[others] < 0.5))
    ds = T.transfer_dataset("line", 4, 1, sizes=(5, 2, 3))
    assert ds.sizes() == (5, 2, 3)


def test_oracles_known_graphs():
    path = Graph(4, ((0, 1), (1, 2), (2, 3)))
    np.testing.assert_array_equal(T.oracle_eccentricity(path), [3, 2, 2, 3])
    assert T.oracle_diameter(path) == 3.0
    np.testing.assert_array_equal(T.oracle_sssp(path, 1), [1, 0, 1, 2])
    star = Graph(5, tuple((0, i) for i in range(1, 5)))
    assert T.oracle_diameter(star) == 2.0
    assert T.oracle_diameter(Graph(1)) == 0.0
    with pytest.raises(DisconnectedGraphError):
        T.oracle_diameter(Graph(3, ((0, 1),)))
    with pytest.raises(ValueError):
        T.oracle_sssp(path, 4)


@pytest.mark.parametrize("family", T.FAMILIES)
def test_family_graphs_connected_and_sized(family):
    rng = np.random.default_rng(0)
    for _ in range(5):
        g = T.random_family_graph(family, rng)
        assert g.is_connected()
        assert 20 <= g.n <= 40


@given(st.integers(0, 2**31), st.sampled_from(T.FAMILIES))
def test_oracles_match_networkx_and_scipy(seed, family):
    rng = np.random.default_rng(seed)
    g = T.random_family_graph(family, rng, n_range=(5, 15))
    h = to_nx(g)
    ecc = nx.eccentricity(h)
    np.testing.assert_array_equal(T.oracle_eccentricity(g), [ecc[i] for i in range(g.n)])
    assert T.oracle_diameter(g) == nx.diameter(h)
    src = int(rng.integers(g.n))
    ref = shortest_path(g.adjacency(), method="BF", unweighted=True, indices=src)
    np.testing.assert_array_equal(T.oracle_sssp(g, src), ref)


def test_property_instances():
    ds = T.gen_property_graphs("sssp", 0, scale=0.005)
    for inst in ds.train:
        assert inst.features.shape == (inst.graph.n, 2)
        assert inst.features[inst.source, 1] == 1.0 and inst.features[:, 1].sum() == 1.0
        assert inst.targets[inst.source, 0] == 0.0
    ds = T.gen_property_graphs("diameter", 0, scale=0.005)
    assert all(i.targets.shape == (1, 1) for i in ds.test)
    with pytest.raises(ValueError):
        T.gen_property_graphs("girth", 0, scale=0.005)


def test_same_seed_same_graphs_across_tasks():
    a = T.gen_property_graphs("diameter", 4, scale=0.005)
    b = T.gen_property_graphs("eccentricity", 4, scale=0.005)
    assert [i.graph for i in a.train] == [i.graph for i in b.train]
    c = T.gen_property_graphs("diameter", 5, scale=0.005)
    assert [i.graph for i in a.train] != [i.graph for i in c.train]


def test_split_sizes():
    assert T.split_sizes(0.1) == (512, 64, 128)
    assert T.split_sizes(1.0) == T.PROPERTY_SPLITS
    for bad in (0.0, 1.5, 1e-4):
        with pytest.raises(ValueError):
            T.split_sizes(bad)


def test_task_instance_kind():
    with pytest.raises(ValueError):
        T.TaskInstance(Graph(1), np.zeros((1, 1)), np.zeros((1, 1)), "triangles")


@pytest.mark.parametrize("task", ["sssp", "diameter"])
def test_dataset_round_trip_and_determinism(tmp_path, task):
    ds = T.gen_property_graphs(task, 2, scale=0.005)
    T.save_dataset(ds, tmp_path / "a")
    T.save_dataset(T.gen_property_graphs(task, 2, scale=0.005), tmp_path / "b")
    names = [p.name for p in (tmp_path / "a").iterdir()]
    match, mismatch, errors = filecmp.cmpfiles(tmp_path / "a", tmp_path / "b", names, shallow=False)
    assert not mismatch and not errors and len(match) == 10
    back = T.load_dataset(tmp_path / "a")
    assert back.sizes() == ds.sizes()
    for x, y in zip(ds.train, back.train):
        assert x.graph == y.graph and x.source == y.source and x.family == y.family
        np.testing.assert_array_equal(x.features, y.features)
        np.testing.assert_array_equal(x.targets, y.targets)


def test_transfer_round_trip(tmp_path):
    ds = T.transfer_dataset("crossed_ring", 4, 0, sizes=(3, 2, 2))
    T.save_dataset(ds, tmp_path)
    back = T.load_dataset(tmp_path)
    assert back.train[0].target == 4 and back.train[0].kind == "transfer"
    np.testing.assert_array_equal(back.test[1].features, ds.test[1].features)
