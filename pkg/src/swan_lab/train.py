"""Reverse-mode gradients through the unrolled Euler dynamics, Adam, training loop."""

import csv
import logging
import time
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError
from .graph import learned_ops_backward
from .model import (
    ACTIVATIONS,
    GraphBatch,
    Variant,
    apply_left,
    apply_right,
    forward_batch,
    transpose_op,
)

log = logging.getLogger(__name__)

METRICS = ("mse", "log10_mse", "mae")
MSE_FLOOR = 1e-12


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

def mse(pred, target):
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    return float(np.mean((pred - target) ** 2))


def metric_log10_mse(pred, target):
    return float(np.log10(max(mse(pred, target), MSE_FLOOR)))


def mae(pred, target):
    return float(np.mean(np.abs(np.asarray(pred, dtype=np.float64) - np.asarray(target, dtype=np.float64))))


def compute_metric(name, pred, target):
    if name == "mse":
        return mse(pred, target)
    if name == "log10_mse":
        return metric_log10_mse(pred, target)
    if name == "mae":
        return mae(pred, target)
    raise ValueError(f"unknown metric {name!r}")


# ---------------------------------------------------------------------------
# Backward pass
# ---------------------------------------------------------------------------

def _channel_grad(kind, dC, beta):
    if kind in ("W", "V_anti"):
        return dC - dC.T
    if kind == "V":
        return dC
    if kind == "Z":
        return beta * (dC + dC.T)
    return None


_PARAM_OF = {"W": "W", "V_anti": "V", "V": "V", "Z": "Z"}


def backward_batch(params, hyper, variant, batch, cache, d_out):
    """Gradients of ``sum(d_out * output)`` with respect to every parameter."""
    variant = Variant(variant)
    grads = {k: np.zeros_like(v) for k, v in params.items()}
    states, acts, terms = cache.states, cache.acts, cache.terms
    XL = states[-1]
    B, n, d = XL.shape
    o = params["out_w"].shape[1]
    if cache.graph_level:
        grads["out_w"] = cache.pooled.T @ d_out
        grads["out_b"] = d_out.sum(axis=0)
        dX = np.repeat((d_out @ params["out_w"].T)[:, None, :] / n, n, axis=1)
    else:
        grads["out_w"] = XL.reshape(B * n, d).T @ d_out.reshape(B * n, o)
        grads["out_b"] = d_out.reshape(B * n, o).sum(axis=0)
        dX = d_out @ params["out_w"].T

    _, dact = ACTIVATIONS[hyper.activation]
    eps = hyper.epsilon
    dC = [np.zeros_like(t.C) for t in terms]
    dG = [None] * len(terms)
    for ell in range(hyper.layers - 1, -1, -1):
        X = states[ell]
        dpre = eps * dX * dact(acts[ell])
        dX = dX.copy()
        flat_dpre = dpre.reshape(B * n, d)
        for k, t in enumerate(terms):
            gx = X if t.G is None else apply_left(t.G, X)
            if t.c_kind != "const":
                dC[k] += gx.reshape(B * n, d).T @ flat_dpre
            back = apply_right(dpre, t.C.T)
            dX += back if t.G is None else apply_left(transpose_op(t.G), back)
            if t.g_kind not in ("identity", "fixed"):
                contrib = np.matmul(dpre, apply_right(X, t.C).transpose(0, 2, 1))
                dG[k] = contrib if dG[k] is None else dG[k] + contrib

    beta = hyper.effective_beta(variant)
    for k, t in enumerate(terms):
        g = _channel_grad(t.c_kind, dC[k], beta)
        if g is not None:
            grads[_PARAM_OF[t.c_kind]] += g

    if cache.ops.learned:
        g_ahat = np.zeros((B, n, n))
        g_atilde = np.zeros((B, n, n))
        for k, t in enumerate(terms):
            if dG[k] is None:
                continue
            if t.g_kind == "ahat_sym":
                g_ahat += dG[k] + dG[k].transpose(0, 2, 1)
            elif t.g_kind == "ahat":
                g_ahat += dG[k]
            elif t.g_kind == "atilde_anti":
                g_atilde += dG[k] - dG[k].transpose(0, 2, 1)
        dK1, dK2, dx0 = learned_ops_backward(
            g_ahat, g_atilde, cache.ops.learned_cache, params["K1"], params["K2"], hyper.inner_activation
        )
        grads["K1"] += dK1
        grads["K2"] += dK2
        dX = dX + dx0.reshape(B, n, d)

    feats = cache.features
    grads["enc_w"] = feats.reshape(B * n, -1).T @ dX.reshape(B * n, d)
    grads["enc_b"] = dX.reshape(B * n, d).sum(axis=0)
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for {name}", where=name)
    return grads


def loss_and_grads(params, hyper, variant, batch, features, targets, graph_level=False):
    """Mean-squared error over the batch and its exact gradient."""
    out, cache = forward_batch(params, hyper, variant, batch, features, graph_level)
    diff = out - targets
    loss = float(np.mean(diff * diff))
    d_out = 2.0 * diff / diff.size
    return loss, backward_batch(params, hyper, variant, batch, cache, d_out)


def backward(params, hyper, variant, batches, loss_tag="mse"):
    """Loss and gradients averaged over graphs for a list of prepared groups.

    ``batches`` holds ``(GraphBatch, features, targets, graph_level)`` tuples;
    each group is weighted by its number of graphs.
    """
    if loss_tag != "mse":
        raise ValueError("only the mse training loss is supported")
    total = sum(b.size for b, *_ in batches)
    loss = 0.0
    grads = {k: np.zeros_like(v) for k, v in params.items()}
    for batch, feats, targets, graph_level in batches:
        w = batch.size / total
        l, g = loss_and_grads(params, hyper, variant, batch, feats, targets, graph_level)
        loss += w * l
        for k in grads:
            grads[k] += w * g[k]
    return loss, grads


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def adam_step(params, grads, state, lr, weight_decay=0.0, beta1=0.9, beta2=0.999, eps=1e-8):
    """One Adam update, decoupled weight decay (AdamW) when ``weight_decay > 0``.

    Returns new ``(params, state)``; inputs are not modified.
    """
    t = state.t + 1
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    new_params, new_m, new_v = {}, {}, {}
    for k, p in params.items():
        g = grads[k]
        m = beta1 * state.m.get(k, np.zeros_like(p)) + (1.0 - beta1) * g
        v = beta2 * state.v.get(k, np.zeros_like(p)) + (1.0 - beta2) * (g * g)
        step = lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
        p_new = p - step
        if weight_decay > 0:
            p_new = p_new - lr * weight_decay * p
        new_params[k] = p_new
        new_m[k] = m
        new_v[k] = v
    return new_params, AdamState(new_m, new_v, t)


# ---------------------------------------------------------------------------
# Data preparation and the training loop
# ---------------------------------------------------------------------------

@dataclass
class PreparedSplit:
    """Instances of one split grouped into equal-node-count buckets."""

    buckets: list  # (GraphBatch, features (B,n,k), targets, instance indices)
    graph_level: bool
    count: int

    @classmethod
    def from_instances(cls, instances, graph_level=None):
        instances = list(instances)
        if graph_level is None:
            graph_level = bool(instances) and instances[0].kind == "diameter"
        groups = defaultdict(list)
        for i, inst in enumerate(instances):
            groups[inst.graph.n].append(i)
        buckets = []
        for n in sorted(groups):
            idx = groups[n]
            batch = GraphBatch.from_graphs([instances[i].graph for i in idx])
            feats = np.stack([instances[i].features for i in idx])
            if graph_level:
                targets = np.stack([np.asarray(instances[i].targets).reshape(-1) for i in idx])
            else:
                targets = np.stack([instances[i].targets for i in idx])
            buckets.append((batch, feats, targets, np.asarray(idx)))
        return cls(buckets, graph_level, len(instances))

    def minibatches(self, batch_size, rng):
        """Shuffled same-size minibatches as ``(batch, feats, targets)``."""
        chunks = []
        for b, (batch, feats, targets, _) in enumerate(self.buckets):
            perm = rng.permutation(batch.size)
            for s in range(0, batch.size, batch_size):
                chunks.append((b, perm[s:s + batch_size]))
        for j in rng.permutation(len(chunks)):
            b, sel = chunks[j]
            batch, feats, targets, _ = self.buckets[b]
            yield batch.subset(sel), feats[sel], targets[sel]

    def predict(self, params, hyper, variant):
        preds, targets = [], []
        for batch, feats, tgt, _ in self.buckets:
            out, _ = forward_batch(params, hyper, variant, batch, feats, self.graph_level)
            preds.append(out.reshape(-1))
            targets.append(tgt.reshape(-1))
        return np.concatenate(preds), np.concatenate(targets)

    def evaluate(self, params, hyper, variant, metric):
        pred, target = self.predict(params, hyper, variant)
        return compute_metric(metric, pred, target)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    weight_decay: float = 0.0
    max_epochs: int = 300
    patience: int = 100
    batch_size: int = 64
    seed: int = 0
    metric: str = "mse"

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.patience > self.max_epochs:
            raise ValueError("patience must not exceed max_epochs")
        if self.metric not in METRICS:
            raise ValueError(f"metric must be one of {METRICS}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class TrainResult:
    params: dict
    history: list
    best_epoch: int
    best_valid: float
    test_metric: float
    wall_time_ms: float


def train(params, hyper, variant, splits, config):
    """Adam on the train split, early stopping on the validation metric.

    ``splits`` maps ``train``/``valid``/``test`` to :class:`PreparedSplit`.
    Returns the best-validation parameters and per-epoch history rows
    ``(epoch, train_loss, valid_metric, test_metric_at_best)``.
    """
    t0 = time.perf_counter()
    rng = np.random.default_rng(config.seed)
    train_split, valid, test = splits["train"], splits["valid"], splits["test"]
    state = AdamState()
    best = dict(params)
    try:
        best_valid = valid.evaluate(params, hyper, variant, config.metric)
        test_at_best = test.evaluate(params, hyper, variant, config.metric)
    except NumericError as err:
        raise NumericError(f"initial parameters diverge: {err}", where=0) from err
    best_epoch = 0
    history = []
    since = 0
    for epoch in range(1, config.max_epochs + 1):
        total, seen = 0.0, 0
        for batch, feats, targets in train_split.minibatches(config.batch_size, rng):
            try:
                loss, grads = loss_and_grads(params, hyper, variant, batch, feats, targets, train_split.graph_level)
            except NumericError as err:
                raise NumericError(f"training diverged at epoch {epoch}: {err}", where=epoch) from err
            if not np.isfinite(loss):
                raise NumericError(f"training loss is NaN at epoch {epoch}", where=epoch)
            params, state = adam_step(params, grads, state, config.lr, config.weight_decay)
            total += loss * batch.size
            seen += batch.size
        try:
            v = valid.evaluate(params, hyper, variant, config.metric)
        except NumericError as err:
            raise NumericError(f"validation diverged at epoch {epoch}: {err}", where=epoch) from err
        if v < best_valid:
            best_valid, best, best_epoch, since = v, dict(params), epoch, 0
            test_at_best = test.evaluate(params, hyper, variant, config.metric)
        else:
            since += 1
        history.append((epoch, total / max(seen, 1), v, test_at_best))
        if since > config.patience:
            log.debug("early stop at epoch %d (best %d)", epoch, best_epoch)
            break
    return TrainResult(best, history, best_epoch, best_valid, test_at_best, (time.perf_counter() - t0) * 1000.0)


def write_history(history, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "train_loss", "valid_metric", "test_metric_at_best"])
        for row in history:
            w.writerow([row[0]] + [repr(float(x)) for x in row[1:]])
