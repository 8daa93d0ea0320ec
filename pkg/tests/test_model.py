import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from swan_lab import graph as G
from swan_lab import model as M
from swan_lab.errors import NumericError, ShapeError
from swan_lab.model import Hyper, Variant


def cycle(n):
    return G.Graph(n, tuple((i, (i + 1) % n) for i in range(n)))


def lollipop():
    return G.Graph(5, ((0, 1), (1, 2), (0, 2), (2, 3), (3, 4)))


def reference_forward(feats, params, hyper, variant, g):
    """Straight-line dense re-derivation of the model for one graph."""
    variant = Variant(variant)
    A = g.adjacency()
    deg = A.sum(axis=1)
    dinv = np.where(deg > 0, 1 / np.sqrt(np.where(deg > 0, deg, 1)), 0)
    sym = dinv[:, None] * A * dinv[None, :]
    rw = np.where(deg > 0, 1 / np.where(deg > 0, deg, 1), 0)[:, None] * A
    X = feats @ params["enc_w"] + params["enc_b"]
    d = X.shape[1]
    if variant.learned:
        F = np.zeros_like(A)
        for u, v in g.edges:
            for a, b in ((u, v), (v, u)):
                h = np.tanh(params["K1"] @ np.concatenate([X[a], X[b]]))
                F[a, b] = np.maximum(params["K2"] @ h, 0).mean()
        c = F.sum(axis=0)
        cs = np.where(c > 0, 1 / np.sqrt(np.where(c > 0, c, 1)), 0)
        sym = cs[:, None] * F * cs[None, :]
        rw = np.where(c > 0, 1 / np.where(c > 0, c, 1), 0)[:, None] * F
    Wt = params["W"] - params["W"].T - hyper.gamma * np.eye(d)
    V, Z = params["V"], params["Z"]
    beta = 0.0 if variant in (Variant.SWAN_BETA0, Variant.ADGN, Variant.HEAT) else hyper.beta
    act = np.tanh if hyper.activation == "tanh" else (lambda x: x)
    L = np.diag((deg > 0).astype(float)) - dinv[:, None] * A * dinv[None, :]
    for _ in range(hyper.layers):
        if variant is Variant.HEAT:
            pre = -L @ X
        else:
            if variant in (Variant.SWAN_NE, Variant.SWAN_LEARN_NE, Variant.ADGN):
                agg = sym @ X @ V
            else:
                agg = (sym + sym.T) @ X @ (V - V.T)
            pre = X @ Wt + agg + beta * (rw - rw.T) @ X @ (Z + Z.T)
        X = X + hyper.epsilon * act(pre)
    return X @ params["out_w"] + params["out_b"]


@pytest.mark.parametrize("variant", list(Variant))
@pytest.mark.parametrize("activation", ["tanh", "identity"])
def test_forward_matches_reference(variant, activation):
    g = lollipop()
    hyper = Hyper(epsilon=0.3, gamma=0.1, beta=0.7, layers=3, hidden_dim=4, activation=activation)
    rng = np.random.default_rng(5)
    params = M.init_params(rng, 2, 1, hyper, variant)
    feats = rng.normal(size=(g.n, 2))
    out, traj = M.model_forward(feats, params, hyper, variant, g, record=True)
    np.testing.assert_allclose(out, reference_forward(feats, params, hyper, variant, g), atol=1e-12)
    assert len(traj) == hyper.layers + 1


def test_hyper_validation():
    for bad in (dict(epsilon=0.0), dict(epsilon=1.5), dict(gamma=-1), dict(layers=0),
                dict(activation="relu"), dict(phi_operator="laplacian")):
        with pytest.raises(ValueError):
            Hyper(**bad)
    h = Hyper(beta=2.0)
    assert h.effective_beta(Variant.SWAN) == 2.0
    assert h.effective_beta(Variant.SWAN_BETA0) == 0.0


def test_init_params_shapes_and_range():
    hyper = Hyper(hidden_dim=9)
    p = M.init_params(np.random.default_rng(0), 3, 2, hyper, Variant.SWAN_LEARN)
    assert p["enc_w"].shape == (3, 9) and p["K1"].shape == (9, 18) and p["out_w"].shape == (9, 2)
    for k in ("W", "V", "Z", "K1", "K2", "enc_w"):
        assert np.abs(p[k]).max() <= 1 / 3
    assert "K1" not in M.init_params(np.random.default_rng(0), 3, 2, hyper, Variant.SWAN)


def test_params_round_trip(tmp_path):
    p = M.init_params(np.random.default_rng(1), 2, 1, Hyper(hidden_dim=3), Variant.SWAN_LEARN)
    M.save_params(p, tmp_path / "p.json", extra={"seed": 1})
    q = M.load_params(tmp_path / "p.json")
    assert set(p) == set(q)
    for k in p:
        np.testing.assert_array_equal(p[k], q[k])
    (tmp_path / "bad.json").write_text('{"format": "other", "params": {}}')
    with pytest.raises(ValueError):
        M.load_params(tmp_path / "bad.json")


def test_effective_w():
    W = np.arange(9.0).reshape(3, 3)
    e = M.effective_w(W, 0.5)
    np.testing.assert_array_equal(e + e.T, -np.eye(3))
    with pytest.raises(ShapeError):
        M.effective_w(np.ones((2, 3)), 0.1)


def test_phi_psi_match_formulas(rng):
    g = cycle(5)
    X = rng.normal(size=(5, 3))
    V, Z = rng.normal(size=(3, 3)), rng.normal(size=(3, 3))
    a = G.sym_norm_adj(g).matrix
    t = G.rw_norm_adj(g).matrix
    np.testing.assert_allclose(M.phi(X, a, V, "swan"), 2 * a @ X @ (V - V.T))
    np.testing.assert_allclose(M.phi(X, a, V, "swan_ne"), a @ X @ V)
    np.testing.assert_allclose(M.phi(X, a, V, "heat_diffusion"), -(np.eye(5) - a) @ X)
    # cycle is regular, so the random-walk operator is symmetric and Psi vanishes
    np.testing.assert_allclose(M.psi(X, t, Z), 0.0, atol=1e-15)
    with pytest.raises(ShapeError):
        M.phi(X, a, np.ones((2, 2)), "swan")


def test_swan_layer_matches_model_step(rng):
    g = lollipop()
    hyper = Hyper(epsilon=0.2, gamma=0.1, beta=1.0, layers=1, hidden_dim=3)
    params = M.init_params(rng, 3, 1, hyper, Variant.SWAN)
    params["enc_w"] = np.eye(3)
    X = rng.normal(size=(5, 3))
    a, t = G.sym_norm_adj(g), G.rw_norm_adj(g)
    got = M.swan_layer(X, params, hyper, "swan", a, t)
    pre = X @ M.effective_w(params["W"], 0.1) + M.phi(X, a, params["V"], "swan") + M.psi(X, t, params["Z"])
    np.testing.assert_allclose(got, X + 0.2 * np.tanh(pre), atol=1e-14)
    _, traj = M.model_forward(X, params, hyper, "swan", g, record=True)
    np.testing.assert_allclose(traj.states[1], got, atol=1e-14)


def test_batched_forward_matches_single(rng):
    graphs = [cycle(6), G.Graph(6, ((0, 1), (1, 2), (2, 3), (3, 4), (4, 5))), cycle(6)]
    hyper = Hyper(layers=3, hidden_dim=4)
    for variant in (Variant.SWAN, Variant.SWAN_LEARN, Variant.HEAT):
        params = M.init_params(rng, 2, 1, hyper, variant)
        feats = rng.normal(size=(3, 6, 2))
        batch = M.GraphBatch.from_graphs(graphs)
        assert not batch.shared
        out, _ = M.forward_batch(params, hyper, variant, batch, feats)
        for b, g in enumerate(graphs):
            single, _ = M.model_forward(feats[b], params, hyper, variant, g)
            np.testing.assert_allclose(out[b], single, atol=1e-12)
        pooled, _ = M.forward_batch(params, hyper, variant, batch, feats, graph_level=True)
        assert pooled.shape == (3, 1)


def test_graph_batch_shared_and_subset():
    same = M.GraphBatch.from_graphs([cycle(4)] * 3)
    assert same.shared and same.sym_norm.shape == (4, 4)
    sub = same.subset([2, 0])
    assert sub.size == 2 and len(sub.edge_src) == 2 * len(cycle(4).directed_edges()[0])
    mixed = [cycle(5), G.Graph(5, ((0, 1), (1, 2))), G.Graph(5, ((3, 4),))]
    b = M.GraphBatch.from_graphs(mixed)
    s = b.subset([2, 0])
    ref = M.GraphBatch.from_graphs([mixed[2], mixed[0]])
    for name in ("sym_norm", "rw_norm", "laplacian", "edge_graph", "edge_src", "edge_dst"):
        np.testing.assert_array_equal(getattr(s, name), getattr(ref, name))
    with pytest.raises(ShapeError):
        M.GraphBatch.from_graphs([cycle(4), cycle(5)])
    with pytest.raises(ValueError):
        M.GraphBatch.from_graphs([])


def test_forward_shape_errors(rng):
    hyper = Hyper(hidden_dim=3)
    params = M.init_params(rng, 2, 1, hyper, Variant.SWAN)
    with pytest.raises(ShapeError):
        M.model_forward(np.ones((4, 2)), params, hyper, "swan", cycle(5))


def test_blowup_raises_numeric_error():
    g = cycle(4)
    hyper = Hyper(epsilon=1.0, gamma=0.0, layers=4, hidden_dim=2, activation="identity")
    params = M.init_params(np.random.default_rng(0), 1, 1, hyper, Variant.SWAN)
    params["W"] = np.array([[0.0, 1e200], [0.0, 0.0]])
    with pytest.raises(NumericError) as info:
        M.model_forward(np.ones((4, 1)), params, hyper, "swan", g)
    assert info.value.where is not None


@st.composite
def connected_graphs(draw):
    n = draw(st.integers(2, 7))
    pairs = [(u, v) for u in range(n) for v in range(u + 1, n)]
    extra = draw(st.sets(st.sampled_from(pairs), max_size=len(pairs)))
    return G.Graph(n, tuple(sorted(extra | {(i, i + 1) for i in range(n - 1)})))


@given(connected_graphs(), st.sampled_from(list(Variant)), st.integers(0, 2**31), st.randoms(use_true_random=False))
def test_permutation_equivariance(g, variant, seed, r):
    rng = np.random.default_rng(seed)
    hyper = Hyper(layers=2, hidden_dim=3)
    params = M.init_params(rng, 2, 1, hyper, variant)
    feats = rng.normal(size=(g.n, 2))
    perm = list(range(g.n))
    r.shuffle(perm)
    perm = np.array(perm)
    out, _ = M.model_forward(feats, params, hyper, variant, g)
    moved = np.empty_like(feats)
    moved[perm] = feats
    out2, _ = M.model_forward(moved, params, hyper, variant, g.relabel(perm))
    np.testing.assert_allclose(out2[perm], out, atol=1e-10)
