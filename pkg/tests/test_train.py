import csv

import numpy as np
import pytest

from swan_lab import graph as G
from swan_lab import model as M
from swan_lab import tasks as T
from swan_lab import train as TR
from swan_lab.errors import NumericError
from swan_lab.model import Hyper, Variant


def small_graphs():
    return [
        G.Graph(5, ((0, 1), (1, 2), (2, 3), (3, 4), (0, 2))),
        G.Graph(5, ((0, 1), (0, 2), (0, 3), (0, 4))),
        G.Graph(5, ((0, 1), (1, 2), (2, 3), (3, 4), (4, 0))),
    ]


def fd_check(variant, graph_level, shared, activation="tanh", seed=0):
    rng = np.random.default_rng(seed)
    hyper = Hyper(epsilon=0.4, gamma=0.1, beta=0.8, layers=3, hidden_dim=3, activation=activation)
    params = M.init_params(rng, 2, 2, hyper, variant)
    for k in params:
        params[k] = params[k] + 0.1 * rng.normal(size=params[k].shape)
    graphs = [small_graphs()[0]] * 3 if shared else small_graphs()
    batch = M.GraphBatch.from_graphs(graphs)
    feats = rng.normal(size=(3, 5, 2))
    targets = rng.normal(size=(3, 2) if graph_level else (3, 5, 2))
    _, grads = TR.loss_and_grads(params, hyper, variant, batch, feats, targets, graph_level)
    h = 1e-6
    worst = 0.0
    for name, p in params.items():
        num = np.zeros_like(p)
        for i in np.ndindex(p.shape):
            q = {k: v.copy() for k, v in params.items()}
            q[name][i] += h
            up, _ = TR.loss_and_grads(q, hyper, variant, batch, feats, targets, graph_level)
            q[name][i] -= 2 * h
            dn, _ = TR.loss_and_grads(q, hyper, variant, batch, feats, targets, graph_level)
            num[i] = (up - dn) / (2 * h)
        rel = np.linalg.norm(grads[name] - num) / max(np.linalg.norm(num), 1e-8)
        worst = max(worst, rel)
    return worst


@pytest.mark.parametrize("variant", list(Variant))
@pytest.mark.parametrize("graph_level", [False, True])
def test_gradients_match_finite_differences(variant, graph_level):
    assert fd_check(variant, graph_level, shared=False) < 1e-5


@pytest.mark.parametrize("variant", [Variant.SWAN, Variant.SWAN_LEARN, Variant.HEAT])
def test_gradients_shared_batch_and_identity(variant):
    assert fd_check(variant, False, shared=True, activation="identity", seed=3) < 1e-5


def test_metrics():
    p, t = np.array([1.0, 2.0]), np.array([1.0, 4.0])
    assert TR.mse(p, t) == 2.0
    assert TR.mae(p, t) == 1.0
    assert TR.compute_metric("log10_mse", p, t) == pytest.approx(np.log10(2.0))
    assert TR.compute_metric("log10_mse", t, t) == -12.0
    with pytest.raises(ValueError):
        TR.compute_metric("rmse", p, t)


def reference_adam(p, grads, lr, b1=0.9, b2=0.999, eps=1e-8, wd=0.0):
    m = v = 0.0
    for t, g in enumerate(grads, 1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        p = p - lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps) - lr * wd * p
    return p


def test_adam_matches_scalar_reference():
    grads = [0.5, -1.0, 2.0, 0.1]
    params, state = {"x": np.array([1.0])}, TR.AdamState()
    for g in grads:
        params, state = TR.adam_step(params, {"x": np.array([g])}, state, 0.1, weight_decay=0.01)
    assert params["x"][0] == pytest.approx(reference_adam(1.0, grads, 0.1, wd=0.01), abs=1e-14)
    assert state.t == 4


def test_adam_first_step_is_lr_sized():
    p, s = TR.adam_step({"x": np.array([0.0, 0.0])}, {"x": np.array([3.0, -1e-3])}, TR.AdamState(), 0.01)
    np.testing.assert_allclose(p["x"], [-0.01, 0.01], rtol=1e-4)
    assert s.t == 1


def test_adam_does_not_mutate_inputs():
    params = {"x": np.array([1.0])}
    TR.adam_step(params, {"x": np.array([1.0])}, TR.AdamState(), 0.1)
    assert params["x"][0] == 1.0


def test_backward_weights_groups_by_size():
    rng = np.random.default_rng(0)
    hyper = Hyper(layers=2, hidden_dim=3)
    params = M.init_params(rng, 1, 1, hyper, Variant.SWAN)
    g5, g4 = small_graphs()[0], G.Graph(4, ((0, 1), (1, 2), (2, 3)))
    b5 = M.GraphBatch.from_graphs([g5, g5])
    b4 = M.GraphBatch.from_graphs([g4])
    f5, f4 = rng.normal(size=(2, 5, 1)), rng.normal(size=(1, 4, 1))
    y5, y4 = rng.normal(size=(2, 5, 1)), rng.normal(size=(1, 4, 1))
    loss, grads = TR.backward(params, hyper, "swan", [(b5, f5, y5, False), (b4, f4, y4, False)])
    l5, g5_ = TR.loss_and_grads(params, hyper, "swan", b5, f5, y5)
    l4, g4_ = TR.loss_and_grads(params, hyper, "swan", b4, f4, y4)
    assert loss == pytest.approx(2 / 3 * l5 + 1 / 3 * l4)
    np.testing.assert_allclose(grads["W"], 2 / 3 * g5_["W"] + 1 / 3 * g4_["W"])
    with pytest.raises(ValueError):
        TR.backward(params, hyper, "swan", [], loss_tag="mae")


def test_train_config_validation():
    for bad in (dict(lr=0), dict(patience=10, max_epochs=5), dict(metric="acc"), dict(batch_size=0)):
        with pytest.raises(ValueError):
            TR.TrainConfig(**bad)


def _transfer_splits(k=3):
    ds = T.transfer_dataset("line", k, 0, sizes=(64, 16, 16))
    return {name: TR.PreparedSplit.from_instances(items) for name, items in ds.splits().items()}


def test_prepared_split_buckets_and_minibatches():
    ds = T.gen_property_graphs("diameter", 0, scale=0.01)
    split = TR.PreparedSplit.from_instances(ds.train)
    assert split.graph_level and split.count == len(ds.train)
    assert sum(b.size for b, *_ in split.buckets) == len(ds.train)
    seen = 0
    for batch, feats, targets in split.minibatches(8, np.random.default_rng(0)):
        assert batch.size <= 8 and feats.shape[0] == targets.shape[0] == batch.size
        seen += batch.size
    assert seen == len(ds.train)


def test_training_reduces_loss_and_is_deterministic():
    splits = _transfer_splits()
    hyper = Hyper(epsilon=0.5, gamma=0.1, layers=3, hidden_dim=6)
    cfg = TR.TrainConfig(lr=1e-2, max_epochs=15, patience=15, batch_size=16)

    def run():
        params = M.init_params(np.random.default_rng(0), 1, 1, hyper, Variant.SWAN)
        return TR.train(params, hyper, "swan", splits, cfg)

    a, b = run(), run()
    assert a.history[-1][1] < a.history[0][1]
    assert a.best_valid <= a.history[0][2]
    assert a.test_metric == b.test_metric
    assert [r[1] for r in a.history] == [r[1] for r in b.history]


def test_early_stopping():
    splits = _transfer_splits()
    hyper = Hyper(epsilon=0.5, layers=3, hidden_dim=4)
    params = M.init_params(np.random.default_rng(0), 1, 1, hyper, Variant.SWAN)
    # steps of 1e-300 vanish against O(0.1) weights, so the metric never improves
    res = TR.train(params, hyper, "swan", splits, TR.TrainConfig(lr=1e-300, max_epochs=50, patience=2))
    assert res.best_epoch == 0
    assert len(res.history) < 50


def test_divergence_reports_epoch():
    splits = _transfer_splits()
    hyper = Hyper(epsilon=1.0, gamma=0.0, layers=3, hidden_dim=4, activation="identity")
    params = M.init_params(np.random.default_rng(0), 1, 1, hyper, Variant.SWAN)
    with pytest.raises(NumericError) as info:
        TR.train(params, hyper, "swan", splits, TR.TrainConfig(lr=1e120, max_epochs=3, patience=3))
    assert info.value.where == 1
    params["W"] = params["W"] * 1e150
    with pytest.raises(NumericError) as info:
        TR.train(params, hyper, "swan", splits, TR.TrainConfig(lr=1.0, max_epochs=3, patience=3))
    assert info.value.where == 0


def test_write_history(tmp_path):
    TR.write_history([(1, 0.5, 0.25, 0.125)], tmp_path / "h.csv")
    rows = list(csv.reader(open(tmp_path / "h.csv")))
    assert rows[0] == ["epoch", "train_loss", "valid_metric", "test_metric_at_best"]
    assert rows[1] == ["1", "0.5", "0.25", "0.125"]
