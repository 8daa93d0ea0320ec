"""Graphs and the shift operators built from them.

Covers the fixed operators (adjacency, symmetric / random-walk normalisation,
graph Laplacian) and the learned edge-weight operators, whose forward and
backward passes live here so the training code can differentiate through them.
"""

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import GraphError, ShapeError

OPERATOR_KINDS = ("raw_adjacency", "sym_norm", "rw_norm", "learned")


class DegenerateOperatorWarning(UserWarning):
    """Learned edge weights are identically zero."""


@dataclass(frozen=True)
class Graph:
    n: int
    edges: tuple = ()

    def __post_init__(self):
        if self.n < 0:
            raise GraphError("node count must be non-negative")
        seen = set()
        canon = []
        for u, v in self.edges:
            u, v = int(u), int(v)
            if not (0 <= u < self.n and 0 <= v < self.n):
                raise GraphError(f"edge ({u}, {v}) out of range for n={self.n}")
            if u == v:
                raise GraphError(f"self-loop at node {u}")
            key = (min(u, v), max(u, v))
            if key in seen:
                raise GraphError(f"duplicate edge {key}")
            seen.add(key)
            canon.append(key)
        object.__setattr__(self, "edges", tuple(canon))

    @property
    def m(self):
        return len(self.edges)

    def adjacency(self):
        a = np.zeros((self.n, self.n))
        if self.edges:
            e = np.asarray(self.edges)
            a[e[:, 0], e[:, 1]] = 1.0
            a[e[:, 1], e[:, 0]] = 1.0
        return a

    def directed_edges(self):
        """Both orientations of every edge as ``(src, dst)`` int arrays."""
        if not self.edges:
            return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
        e = np.asarray(self.edges, dtype=np.int64)
        return np.concatenate([e[:, 0], e[:, 1]]), np.concatenate([e[:, 1], e[:, 0]])

    def degrees(self):
        deg = np.zeros(self.n, dtype=np.int64)
        for u, v in self.edges:
            deg[u] += 1
            deg[v] += 1
        return deg

    def csr(self):
        src, dst = self.directed_edges()
        order = np.lexsort((dst, src))
        src, dst = src[order], dst[order]
        indptr = np.zeros(self.n + 1, dtype=np.int64)
        np.add.at(indptr, src + 1, 1)
        return np.cumsum(indptr), dst.astype(np.int64)

    def distances(self):
        """All-pairs hop distances; -1 marks unreachable pairs."""
        indptr, indices = self.csr()
        return _kernels.bfs_all_pairs(indptr, indices, self.n)

    def relabel(self, perm):
        """Graph with node ``i`` renamed ``perm[i]``."""
        perm = np.asarray(perm)
        return Graph(self.n, tuple((int(perm[u]), int(perm[v])) for u, v in self.edges))

    def is_connected(self):
        if self.n == 0:
            return True
        return bool((self.distances()[0] >= 0).all())


@dataclass(frozen=True)
class ShiftOperator:
    matrix: np.ndarray
    kind: str
    provenance: str = ""

    def __post_init__(self):
        if self.kind not in OPERATOR_KINDS:
            raise ValueError(f"unknown operator kind {self.kind!r}")
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ShapeError(f"shift operator must be square, got {m.shape}")
        object.__setattr__(self, "matrix", m)

    @property
    def n(self):
        return self.matrix.shape[0]


def _inv(x, power=1.0):
    out = np.zeros_like(x, dtype=np.float64)
    pos = x > 0
    out[pos] = x[pos] ** -power
    return out


def degree_matrix(g):
    return np.diag(g.degrees().astype(np.float64))


def raw_adjacency(g):
    return ShiftOperator(g.adjacency(), "raw_adjacency", "A")


def sym_norm_adj(g):
    a = g.adjacency()
    s = _inv(a.sum(axis=1), 0.5)
    return ShiftOperator(s[:, None] * a * s[None, :], "sym_norm", "D^-1/2 A D^-1/2")


def rw_norm_adj(g):
    a = g.adjacency()
    return ShiftOperator(_inv(a.sum(axis=1))[:, None] * a, "rw_norm", "D^-1 A")


def sym_laplacian(g):
    """``I - D^-1/2 A D^-1/2``; isolated nodes get a zero row."""
    ahat = sym_norm_adj(g).matrix
    eye = np.diag((g.degrees() > 0).astype(np.float64))
    return eye - ahat


def _matrix(op):
    return op.matrix if isinstance(op, ShiftOperator) else np.asarray(op, dtype=np.float64)


def antisymmetrize(op):
    m = _matrix(op)
    return m - m.T


def symmetrize(op):
    m = _matrix(op)
    return m + m.T


# ---------------------------------------------------------------------------
# Learned operators
# ---------------------------------------------------------------------------

_INNER_ACT = {
    "tanh": (np.tanh, lambda y: 1.0 - y * y),
    "relu": (lambda x: np.maximum(x, 0.0), lambda y: (y > 0).astype(np.float64)),
    "identity": (lambda x: x, lambda y: np.ones_like(y)),
}


@dataclass
class LearnedOperatorParams:
    K1: np.ndarray
    K2: np.ndarray
    inner_activation: str = "tanh"

    def __post_init__(self):
        d = self.K1.shape[0]
        if self.K1.shape != (d, 2 * d):
            raise ShapeError(f"K1 must be d x 2d, got {self.K1.shape}")
        if self.K2.shape != (d, d):
            raise ShapeError(f"K2 must be d x d, got {self.K2.shape}")
        if self.inner_activation not in _INNER_ACT:
            raise ValueError(f"unknown activation {self.inner_activation!r}")


@dataclass
class LearnedOpCache:
    """Forward intermediates needed by :func:`learned_ops_backward`."""

    src: np.ndarray
    dst: np.ndarray
    feats: np.ndarray
    hidden: np.ndarray
    pre2: np.ndarray
    F: np.ndarray
    colsum: np.ndarray
    shape: tuple = field(default=())


def learned_ops_forward(x0, src, dst, K1, K2, inner="tanh", shape=None):
    """Edge-weight MLP plus normalisation, for a flat batch of graphs.

    ``x0`` is ``(N, d)`` with graphs laid out consecutively; ``src``/``dst``
    index directed edges into it.  ``shape`` is ``(B, n)`` for a batch of equal
    size graphs (default: one graph with all ``N`` nodes).  Returns
    ``(ahat_F, atilde_F, cache)`` with operators of shape ``(B, n, n)``.
    """
    N, d = x0.shape
    B, n = shape if shape is not None else (1, N)
    act, _ = _INNER_ACT[inner]
    feats = np.concatenate([x0[src], x0[dst]], axis=1)
    hidden = act(feats @ K1.T)
    pre2 = hidden @ K2.T
    fval = np.maximum(pre2, 0.0).mean(axis=1)
    F = np.zeros((B * n * n,))
    F[_flat_index(src, dst, n)] = fval
    F = F.reshape(B, n, n)
    colsum = F.sum(axis=1)
    s = _inv(colsum, 0.5)
    r = _inv(colsum, 1.0)
    ahat = s[:, :, None] * F * s[:, None, :]
    atilde = r[:, :, None] * F
    cache = LearnedOpCache(src, dst, feats, hidden, pre2, F, colsum, (B, n))
    return ahat, atilde, cache


def _flat_index(src, dst, n):
    # global node id b*n + u  ->  flat (b, u, v) index
    b = src // n
    return b * n * n + (src % n) * n + (dst % n)


def learned_ops_backward(g_ahat, g_atilde, cache, K1, K2, inner="tanh"):
    """Gradients of ``<g_ahat, ahat_F> + <g_atilde, atilde_F>``.

    Returns ``(dK1, dK2, dx0)``.  Zero column sums are pseudo-inverted, and the
    gradient through them is taken as zero.
    """
    B, n = cache.shape
    F, c = cache.F, cache.colsum
    s = _inv(c, 0.5)
    r = _inv(c, 1.0)
    dF = g_ahat * s[:, :, None] * s[:, None, :] + g_atilde * r[:, :, None]
    gs = (g_ahat * F * s[:, None, :]).sum(axis=2) + (g_ahat * F * s[:, :, None]).sum(axis=1)
    gr = (g_atilde * F).sum(axis=2)
    pos = c > 0
    dc = np.zeros_like(c)
    dc[pos] = gs[pos] * (-0.5) * c[pos] ** -1.5 + gr[pos] * (-1.0) * c[pos] ** -2.0
    dF = dF + dc[:, None, :]
    d = K2.shape[0]
    g_f = dF.reshape(-1)[_flat_index(cache.src, cache.dst, n)]
    d_pre2 = (g_f[:, None] / d) * (cache.pre2 > 0)
    dK2 = d_pre2.T @ cache.hidden
    _, dact = _INNER_ACT[inner]
    d_h = (d_pre2 @ K2) * dact(cache.hidden)
    dK1 = d_h.T @ cache.feats
    d_feats = d_h @ K1
    dx0 = np.zeros((B * n, d))
    np.add.at(dx0, cache.src, d_feats[:, :d])
    np.add.at(dx0, cache.dst, d_feats[:, d:])
    return dK1, dK2, dx0


def learned_shift_operators(g, x0_embedded, p, inner_act=None):
    """Learned ``(A_hat_F, A_tilde_F)`` for a single graph."""
    x0 = np.asarray(x0_embedded, dtype=np.float64)
    if x0.shape[0] != g.n or x0.shape[1] != p.K1.shape[0]:
        raise ShapeError(f"x0 must be {g.n} x {p.K1.shape[0]}, got {x0.shape}")
    inner = inner_act or p.inner_activation
    src, dst = g.directed_edges()
    ahat, atilde, cache = learned_ops_forward(x0, src, dst, p.K1, p.K2, inner)
    if g.m > 0 and not np.any(cache.F):
        warnings.warn("learned edge weights are all zero; operators degenerate", DegenerateOperatorWarning, stacklevel=2)
    return (
        ShiftOperator(ahat[0], "learned", "D_F^-1/2 F D_F^-1/2"),
        ShiftOperator(atilde[0], "learned", "D_F^-1 F"),
    )


# ---------------------------------------------------------------------------
# Edge-list text format:  "n <count>" header, then one "u v" pair per line.
# ---------------------------------------------------------------------------

def write_edge_list(g, path):
    lines = [f"n {g.n}"] + [f"{u} {v}" for u, v in g.edges]
    Path(path).write_text("\n".join(lines) + "\n")


def parse_edge_list(text):
    n = None
    edges = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if n is None:
            if len(parts) != 2 or parts[0] != "n":
                raise GraphError(f"line {lineno}: expected header 'n <count>'")
            n = int(parts[1])
            continue
        if len(parts) != 2:
            raise GraphError(f"line {lineno}: expected 'u v'")
        u, v = int(parts[0]), int(parts[1])
        if not (0 <= u < n and 0 <= v < n):
            raise GraphError(f"line {lineno}: node index out of range [0, {n})")
        edges.append((u, v))
    if n is None:
        raise GraphError("missing 'n <count>' header")
    return Graph(n, tuple(edges))


def read_edge_list(path):
    return parse_edge_list(Path(path).read_text())
