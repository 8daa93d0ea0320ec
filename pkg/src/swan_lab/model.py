"""SWAN dynamics, its ablations and baselines, and the encoder/readout shell.

Every variant's pre-activation is written as a sum of terms ``G @ X @ C``
(``G`` an ``n x n`` spatial operator or the identity, ``C`` a ``d x d`` channel
matrix).  The forward-Euler layer is then

    X <- X + eps * sigma(sum_k G_k X C_k)

and the graph-wise Jacobian factor is ``sum_k kron(C_k.T, G_k)``.  Arrays carry
a leading batch axis ``(B, n, d)``; operators are ``(n, n)`` when shared by the
whole batch, else ``(B, n, n)``.
"""

import json
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import NumericError, ShapeError
from .graph import learned_ops_forward, rw_norm_adj, sym_laplacian, sym_norm_adj

CHECKPOINT_FORMAT = "swan-lab-params/1"


class Variant(str, Enum):
    SWAN = "swan"
    SWAN_LEARN = "swan_learn"
    SWAN_NE = "swan_ne"
    SWAN_LEARN_NE = "swan_learn_ne"
    SWAN_BETA0 = "swan_beta0"
    ADGN = "adgn_baseline"
    HEAT = "heat_diffusion"

    @property
    def learned(self):
        return self in (Variant.SWAN_LEARN, Variant.SWAN_LEARN_NE)

    @property
    def non_enforced(self):
        return self in (Variant.SWAN_NE, Variant.SWAN_LEARN_NE)

    @property
    def globally_nondissipative(self):
        return self in (Variant.SWAN, Variant.SWAN_LEARN, Variant.SWAN_BETA0)

    def __str__(self):
        return self.value


ALL_VARIANTS = tuple(Variant)
SWAN_FAMILY = (Variant.SWAN, Variant.SWAN_LEARN, Variant.SWAN_NE, Variant.SWAN_LEARN_NE, Variant.SWAN_BETA0)


@dataclass(frozen=True)
class Hyper:
    epsilon: float = 0.1
    gamma: float = 0.1
    beta: float = 1.0
    layers: int = 5
    hidden_dim: int = 20
    activation: str = "tanh"
    phi_operator: str = "sym_norm"
    inner_activation: str = "tanh"

    def __post_init__(self):
        if not 0.0 < self.epsilon <= 1.0:
            raise ValueError(f"epsilon must lie in (0, 1], got {self.epsilon}")
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if self.layers < 1:
            raise ValueError("layers must be >= 1")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.phi_operator not in ("sym_norm", "adjacency"):
            raise ValueError(f"phi_operator must be sym_norm or adjacency, got {self.phi_operator!r}")

    def effective_beta(self, variant):
        if variant in (Variant.SWAN_BETA0, Variant.ADGN, Variant.HEAT):
            return 0.0
        return self.beta


def _tanh_grad(y):
    return 1.0 - y * y


ACTIVATIONS = {
    "tanh": (np.tanh, _tanh_grad),
    "identity": (lambda x: x, lambda y: np.ones_like(y)),
}


# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------

def init_params(rng, input_dim, output_dim, hyper, variant):
    """Uniform(-1/sqrt(d), 1/sqrt(d)) weights, zero biases."""
    d = hyper.hidden_dim
    bound = 1.0 / np.sqrt(d)

    def u(*shape):
        return rng.uniform(-bound, bound, size=shape)

    params = {
        "enc_w": u(input_dim, d),
        "enc_b": np.zeros(d),
        "W": u(d, d),
        "V": u(d, d),
        "Z": u(d, d),
    }
    if Variant(variant).learned:
        params["K1"] = u(d, 2 * d)
        params["K2"] = u(d, d)
    params["out_w"] = u(d, output_dim)
    params["out_b"] = np.zeros(output_dim)
    return params


def save_params(params, path, extra=None):
    doc = {
        "format": CHECKPOINT_FORMAT,
        "params": {k: {"shape": list(v.shape), "values": np.asarray(v).ravel().tolist()} for k, v in params.items()},
    }
    if extra:
        doc["meta"] = extra
    Path(path).write_text(json.dumps(doc))


def load_params(path):
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"unsupported checkpoint format {doc.get('format')!r}")
    return {k: np.asarray(v["values"], dtype=np.float64).reshape(v["shape"]) for k, v in doc["params"].items()}


# ---------------------------------------------------------------------------
# Batches of equal-size graphs with precomputed fixed operators
# ---------------------------------------------------------------------------

@dataclass
class GraphBatch:
    """Equal-size graphs with their fixed operators precomputed.

    Edge lists are stored per directed edge as ``(edge_graph, edge_src,
    edge_dst)`` with node ids local to each graph.
    """

    n: int
    size: int
    adjacency: np.ndarray
    sym_norm: np.ndarray
    rw_norm: np.ndarray
    laplacian: np.ndarray
    edge_graph: np.ndarray
    edge_src: np.ndarray
    edge_dst: np.ndarray
    shared: bool = False

    @classmethod
    def from_graphs(cls, graphs):
        graphs = list(graphs)
        if not graphs:
            raise ValueError("empty batch")
        n = graphs[0].n
        if any(g.n != n for g in graphs):
            raise ShapeError("all graphs in a batch must have the same node count")
        shared = all(g.edges == graphs[0].edges for g in graphs)
        reps = graphs[:1] if shared else graphs

        def stack(fn):
            mats = np.stack([fn(g) for g in reps])
            return mats[0] if shared else mats

        eg, es, ed = [], [], []
        for b, g in enumerate(graphs):
            s, t = g.directed_edges()
            eg.append(np.full(len(s), b, dtype=np.int64))
            es.append(s)
            ed.append(t)
        return cls(
            n=n,
            size=len(graphs),
            adjacency=stack(lambda g: g.adjacency()),
            sym_norm=stack(lambda g: sym_norm_adj(g).matrix),
            rw_norm=stack(lambda g: rw_norm_adj(g).matrix),
            laplacian=stack(sym_laplacian),
            edge_graph=np.concatenate(eg),
            edge_src=np.concatenate(es),
            edge_dst=np.concatenate(ed),
            shared=shared,
        )

    @property
    def src(self):
        return self.edge_graph * self.n + self.edge_src

    @property
    def dst(self):
        return self.edge_graph * self.n + self.edge_dst

    def subset(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        pos = np.full(self.size, -1, dtype=np.int64)
        pos[idx] = np.arange(len(idx))
        if self.shared:
            per = self.edge_graph == 0
            k = int(per.sum())
            eg = np.repeat(np.arange(len(idx)), k)
            es = np.tile(self.edge_src[per], len(idx))
            ed = np.tile(self.edge_dst[per], len(idx))
            ops = (self.adjacency, self.sym_norm, self.rw_norm, self.laplacian)
        else:
            keep = pos[self.edge_graph] >= 0
            order = np.argsort(pos[self.edge_graph[keep]], kind="stable")
            eg = pos[self.edge_graph[keep]][order]
            es = self.edge_src[keep][order]
            ed = self.edge_dst[keep][order]
            ops = tuple(m[idx] for m in (self.adjacency, self.sym_norm, self.rw_norm, self.laplacian))
        return GraphBatch(self.n, len(idx), *ops, eg, es, ed, self.shared)


def apply_left(G, X):
    """``G @ X`` per batch element; ``G`` is ``(n, n)`` or ``(B, n, n)``."""
    if G.ndim == 2:
        B, n, d = X.shape
        out = G @ X.transpose(1, 0, 2).reshape(n, B * d)
        return out.reshape(n, B, d).transpose(1, 0, 2)
    return np.matmul(G, X)


def apply_right(X, C):
    B, n, d = X.shape
    return (X.reshape(B * n, d) @ C).reshape(B, n, C.shape[1])


def transpose_op(G):
    return G.T if G.ndim == 2 else G.transpose(0, 2, 1)


# ---------------------------------------------------------------------------
# Dynamics
# ---------------------------------------------------------------------------

@dataclass
class Term:
    G: np.ndarray | None  # None means identity
    C: np.ndarray
    g_kind: str  # identity | fixed | ahat_sym | ahat | atilde_anti
    c_kind: str  # W | V_anti | V | Z | const


def effective_w(W, gamma):
    """``(W - W^T) - gamma I``."""
    W = np.asarray(W, dtype=np.float64)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise ShapeError(f"W must be square, got {W.shape}")
    return (W - W.T) - gamma * np.eye(W.shape[0])


@dataclass
class Operators:
    """Spatial operators fed to the dynamics: ``ahat`` (Phi) and ``atilde`` (Psi)."""

    ahat: np.ndarray
    atilde: np.ndarray
    laplacian: np.ndarray
    learned: bool = False
    learned_cache: object = None


def fixed_operators(batch, hyper):
    ahat = batch.sym_norm if hyper.phi_operator == "sym_norm" else batch.adjacency
    return Operators(ahat=ahat, atilde=batch.rw_norm, laplacian=batch.laplacian)


def build_operators(params, hyper, variant, batch, x0):
    """Fixed operators, or learned ones computed from the encoder output ``x0``."""
    variant = Variant(variant)
    if not variant.learned:
        return fixed_operators(batch, hyper)
    B, n, d = x0.shape
    ahat, atilde, cache = learned_ops_forward(
        x0.reshape(B * n, d), batch.src, batch.dst, params["K1"], params["K2"], hyper.inner_activation, (B, n)
    )
    return Operators(ahat=ahat, atilde=atilde, laplacian=batch.laplacian, learned=True, learned_cache=cache)


def dynamics_terms(params, hyper, variant, ops):
    variant = Variant(variant)
    d = params["W"].shape[0]
    if variant is Variant.HEAT:
        return [Term(-ops.laplacian, np.eye(d), "fixed", "const")]
    ahat, atilde = ops.ahat, ops.atilde
    learned = ops.learned
    terms = [Term(None, effective_w(params["W"], hyper.gamma), "identity", "W")]
    V = params["V"]
    if variant in (Variant.SWAN, Variant.SWAN_LEARN, Variant.SWAN_BETA0):
        terms.append(Term(ahat + transpose_op(ahat), V - V.T, "ahat_sym" if learned else "fixed", "V_anti"))
    else:
        terms.append(Term(ahat, V, "ahat" if learned else "fixed", "V"))
    beta = hyper.effective_beta(variant)
    if beta != 0.0:
        Z = params["Z"]
        terms.append(Term(atilde - transpose_op(atilde), beta * (Z + Z.T), "atilde_anti" if learned else "fixed", "Z"))
    return terms


def preactivation(X, terms):
    out = None
    for t in terms:
        gx = X if t.G is None else apply_left(t.G, X)
        contrib = apply_right(gx, t.C)
        out = contrib if out is None else out + contrib
    return out


def layer_forward(X, terms, hyper, layer_index=0):
    """One Euler step; returns ``(X_next, activated)``."""
    act, _ = ACTIVATIONS[hyper.activation]
    # overflow is reported below as NumericError, not as a warning
    with np.errstate(over="ignore", invalid="ignore"):
        y = act(preactivation(X, terms))
        X_next = X + hyper.epsilon * y
    if not np.isfinite(X_next).all():
        raise NumericError(f"non-finite state produced by layer {layer_index + 1}", where=layer_index + 1)
    return X_next, y


def run_dynamics(X0, terms, hyper):
    """All states ``X^(0..L)`` and activated pre-activations ``sigma(.)^(0..L-1)``."""
    states = [X0]
    acts = []
    X = X0
    for ell in range(hyper.layers):
        X, y = layer_forward(X, terms, hyper, ell)
        states.append(X)
        acts.append(y)
    return states, acts


# ---------------------------------------------------------------------------
# Full model
# ---------------------------------------------------------------------------

@dataclass
class ForwardCache:
    features: np.ndarray
    ops: Operators
    terms: list
    states: list
    acts: list
    pooled: np.ndarray | None = None
    graph_level: bool = False


@dataclass(frozen=True)
class Trajectory:
    states: tuple = field(default=())

    def __len__(self):
        return len(self.states)


def forward_batch(params, hyper, variant, batch, features, graph_level=False):
    """Batched forward pass.  ``features`` is ``(B, n, input_dim)``."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 3 or features.shape[:2] != (batch.size, batch.n):
        raise ShapeError(f"features must be ({batch.size}, {batch.n}, k), got {features.shape}")
    x0 = features @ params["enc_w"] + params["enc_b"]
    ops = build_operators(params, hyper, variant, batch, x0)
    terms = dynamics_terms(params, hyper, variant, ops)
    states, acts = run_dynamics(x0, terms, hyper)
    XL = states[-1]
    pooled = None
    if graph_level:
        pooled = XL.mean(axis=1)
        out = pooled @ params["out_w"] + params["out_b"]
    else:
        out = XL @ params["out_w"] + params["out_b"]
    return out, ForwardCache(features, ops, terms, states, acts, pooled, graph_level)


def model_forward(raw_features, params, hyper, variant, g, record=False, graph_level=False):
    """Single-graph forward.  Returns ``(output, trajectory or None)``."""
    from .graph import Graph  # noqa: F401  (type of g)

    batch = GraphBatch.from_graphs([g])
    feats = np.asarray(raw_features, dtype=np.float64)
    if feats.ndim != 2 or feats.shape[0] != g.n:
        raise ShapeError(f"raw_features must be {g.n} x k, got {feats.shape}")
    out, cache = forward_batch(params, hyper, variant, batch, feats[None], graph_level)
    traj = Trajectory(tuple(s[0] for s in cache.states)) if record else None
    return out[0], traj


# ---------------------------------------------------------------------------
# Single-graph building blocks (2-D arrays)
# ---------------------------------------------------------------------------

def _op_matrix(op):
    return np.asarray(getattr(op, "matrix", op), dtype=np.float64)


def _check_shapes(X, G, C):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or G.shape != (X.shape[0], X.shape[0]) or C.shape != (X.shape[1], X.shape[1]):
        raise ShapeError(f"incompatible shapes: operator {G.shape}, X {X.shape}, channel {C.shape}")
    return X


def phi(X, op_hat, V, variant):
    """Symmetric-operator aggregation term for one graph."""
    variant = Variant(variant)
    G = _op_matrix(op_hat)
    V = np.asarray(V, dtype=np.float64)
    X = _check_shapes(X, G, V)
    if variant is Variant.HEAT:
        active = np.diag((np.abs(G).sum(axis=1) > 0).astype(np.float64))
        return -(active - G) @ X
    if variant in (Variant.SWAN_NE, Variant.SWAN_LEARN_NE, Variant.ADGN):
        return G @ X @ V
    return (G + G.T) @ X @ (V - V.T)


def psi(X, op_tilde, Z):
    """Antisymmetric-operator aggregation term for one graph."""
    G = _op_matrix(op_tilde)
    Z = np.asarray(Z, dtype=np.float64)
    X = _check_shapes(X, G, Z)
    return (G - G.T) @ X @ (Z + Z.T)


def swan_layer(X, params, hyper, variant, ahat, atilde):
    """One Euler step on a single graph given explicit operators."""
    X = np.asarray(X, dtype=np.float64)
    G_hat, G_tilde = _op_matrix(ahat), _op_matrix(atilde)
    lap = np.diag((np.abs(G_hat).sum(axis=1) > 0).astype(np.float64)) - G_hat
    ops = Operators(ahat=G_hat, atilde=G_tilde, laplacian=lap)
    terms = dynamics_terms(params, hyper, variant, ops)
    X_next, _ = layer_forward(X[None], terms, hyper)
    return X_next[0]


def with_hyper(hyper, **changes):
    return replace(hyper, **changes)


def hyper_dict(hyper):
    return asdict(hyper)
