"""Jacobian factors, non-dissipativity certificates, propagation rates,
sensitivity bounds and Jacobian drift.

The continuous vector field is ``F(X) = sigma(sum_k G_k X C_k)``.  With
column-stacking ``vec`` its Jacobian is ``M1 @ M2`` where
``M1 = diag(vec sigma'(.))`` and ``M2 = sum_k kron(C_k.T, G_k)``.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import tensor
from .errors import CapacityError, NumericError, ShapeError
from .graph import learned_ops_forward, rw_norm_adj, sym_laplacian, sym_norm_adj
from .model import (
    ACTIVATIONS,
    Operators,
    Variant,
    dynamics_terms,
    effective_w,
    preactivation,
)

RATE_METHODS = ("frozen_exponential", "layer_product", "finite_difference")
M2_MAX_DIM = tensor.EIGEN_MAX_DIM


@dataclass(frozen=True)
class JacobianFactors:
    m1_diag: np.ndarray
    m2: np.ndarray
    scope: str = "graph_wise"

    def jacobian(self):
        return self.m1_diag[:, None] * self.m2


@dataclass(frozen=True)
class RateCurve:
    times: np.ndarray
    norms: np.ndarray
    method: str
    spectral_norms: np.ndarray | None = None

    def ratio(self):
        """max / min of the Frobenius curve."""
        return float(self.norms.max() / self.norms.min())

    def log_slope(self):
        """Least-squares slope of ``log(norm)`` against ``t``; None for one point."""
        if len(self.times) < 2:
            return None
        return float(np.polyfit(self.times, np.log(self.norms), 1)[0])


@dataclass(frozen=True)
class SensitivityBoundInputs:
    c_sigma: float
    w: float
    p: int
    c_r: float
    c_a: float
    c_b: float
    beta: float
    A: np.ndarray
    S: np.ndarray
    notes: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("c_sigma", "w", "p", "c_r", "c_a", "c_b"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        S = np.asarray(self.S, dtype=np.float64)
        if not np.allclose(S, -S.T, atol=1e-12):
            raise ValueError("S must be antisymmetric")


# ---------------------------------------------------------------------------
# Operators for a single graph
# ---------------------------------------------------------------------------

def graph_operators(params, hyper, variant, g, x0=None):
    """Operators for one graph; learned variants need the embedded ``x0``."""
    variant = Variant(variant)
    lap = sym_laplacian(g)
    if variant.learned:
        if x0 is None:
            raise ValueError("learned variants need the embedded initial state x0")
        src, dst = g.directed_edges()
        ahat, atilde, _ = learned_ops_forward(np.asarray(x0, dtype=np.float64), src, dst,
                                              params["K1"], params["K2"], hyper.inner_activation)
        return Operators(ahat[0], atilde[0], lap)
    ahat = sym_norm_adj(g).matrix if hyper.phi_operator == "sym_norm" else g.adjacency()
    return Operators(ahat, rw_norm_adj(g).matrix, lap)


def _terms(params, hyper, variant, ops):
    return dynamics_terms(params, hyper, variant, ops)


def _term_G(t, n):
    return np.eye(n) if t.G is None else t.G


# ---------------------------------------------------------------------------
# M2 and certificates
# ---------------------------------------------------------------------------

def build_graphwise_m2(params, hyper, variant, ops, max_dim=M2_MAX_DIM):
    """``sum_k kron(C_k.T, G_k)`` of size ``n*d``."""
    n = ops.ahat.shape[0]
    d = params["W"].shape[0]
    if n * d > max_dim:
        raise CapacityError(f"graph-wise M2 dimension {n * d} exceeds cap {max_dim}")
    m2 = np.zeros((n * d, n * d))
    for t in _terms(params, hyper, variant, ops):
        m2 += tensor.kron(t.C.T, _term_G(t, n), max_dim=max_dim)
    return m2


def build_nodewise_m2(params, hyper, variant, ops, u, v):
    """Node-wise factor for the edge ``(u, v)``.

    Swan variants: ``(W - W^T - gamma I) + (A_uv + A_vu)(V - V^T)``; the
    non-enforced variants and the baseline use ``A_uv V``.
    """
    variant = Variant(variant)
    d = params["W"].shape[0]
    if variant is Variant.HEAT:
        lap = ops.laplacian
        return -lap[u, v] * np.eye(d)
    m2 = effective_w(params["W"], hyper.gamma)
    a = ops.ahat
    V = params["V"]
    if variant in (Variant.SWAN, Variant.SWAN_LEARN, Variant.SWAN_BETA0):
        m2 = m2 + (a[u, v] + a[v, u]) * (V - V.T)
    else:
        m2 = m2 + a[u, v] * V
    return m2


def nodewise_m2_blocks(params, hyper, variant, ops, g):
    """Node-wise factors for every directed edge (or the self term if edgeless)."""
    src, dst = g.directed_edges()
    if len(src) == 0:
        return [build_nodewise_m2(params, hyper, variant, ops, 0, 0)] if g.n else []
    return [build_nodewise_m2(params, hyper, variant, ops, int(u), int(v)) for u, v in zip(src, dst)]


def nondissipativity_certificate(m2):
    """``max |Re lambda(m2)|``."""
    return tensor.eigen(m2).max_abs_real()


def spectrum_summary(m2):
    spec = tensor.eigen(m2)
    return {
        "max_abs_real": spec.max_abs_real(),
        "max_real": spec.max_real(),
        "min_real": spec.min_real(),
        "dissipative": bool(spec.min_real() < -1e-8),
    }


# ---------------------------------------------------------------------------
# Jacobians of the discrete model
# ---------------------------------------------------------------------------

def _act_grad(hyper, X, terms):
    act, dact = ACTIVATIONS[hyper.activation]
    return dact(act(preactivation(X[None], terms)))[0]


def jacobian_factors(params, hyper, variant, ops, X):
    """``M1`` diagonal at state ``X`` and graph-wise ``M2``."""
    terms = _terms(params, hyper, variant, ops)
    m1 = tensor.vec(_act_grad(hyper, np.asarray(X, dtype=np.float64), terms))
    return JacobianFactors(m1, build_graphwise_m2(params, hyper, variant, ops))


def _step(X, terms, hyper):
    act, _ = ACTIVATIONS[hyper.activation]
    return X + hyper.epsilon * act(preactivation(X[None], terms))[0]


def trajectory(params, hyper, variant, ops, X0, layers):
    terms = _terms(params, hyper, variant, ops)
    states = [np.asarray(X0, dtype=np.float64)]
    for ell in range(layers):
        X = _step(states[-1], terms, hyper)
        if not np.all(np.isfinite(X)):
            raise NumericError(f"non-finite state produced by layer {ell + 1}", where=ell + 1)
        states.append(X)
    return states


def layer_jacobians(params, hyper, variant, ops, X0, layers):
    """Exact per-layer Jacobians ``I + eps * M1(X^l) M2`` along the trajectory."""
    states = trajectory(params, hyper, variant, ops, X0, layers)
    terms = _terms(params, hyper, variant, ops)
    m2 = build_graphwise_m2(params, hyper, variant, ops)
    eye = np.eye(m2.shape[0])
    out = []
    for X in states[:-1]:
        m1 = tensor.vec(_act_grad(hyper, X, terms))
        out.append(eye + hyper.epsilon * m1[:, None] * m2)
    return out, states


# ---------------------------------------------------------------------------
# Propagation rate
# ---------------------------------------------------------------------------

def _layer_index(t_grid, eps):
    idx = np.rint(np.asarray(t_grid, dtype=np.float64) / eps).astype(int)
    if not np.allclose(idx * eps, t_grid, atol=1e-9 * max(1.0, float(np.max(t_grid)))):
        raise ValueError("t_grid must be multiples of epsilon for discrete methods")
    return idx


def _fd_flow_jacobian(params, hyper, variant, ops, X0, layers, h=1e-6):
    """Central differences of ``vec X^(l)`` w.r.t. ``vec X^(0)`` for all ``l``."""
    X0 = np.asarray(X0, dtype=np.float64)
    n, d = X0.shape
    N = n * d
    jac = np.zeros((layers + 1, N, N))
    for j in range(N):
        e = np.zeros(N)
        e[j] = h
        E = tensor.unvec(e, n, d)
        plus = trajectory(params, hyper, variant, ops, X0 + E, layers)
        minus = trajectory(params, hyper, variant, ops, X0 - E, layers)
        for ell in range(layers + 1):
            jac[ell, :, j] = (tensor.vec(plus[ell]) - tensor.vec(minus[ell])) / (2 * h)
    return jac


def propagation_rate(params, hyper, variant, ops, X0, t_grid, method="frozen_exponential"):
    """Norm of ``d vec X(t) / d vec X(0)`` over ``t_grid``.

    ``frozen_exponential`` uses ``exp(t M1(X0) M2)``; the discrete methods
    take ``t = l * eps`` and need grid points on that lattice.
    """
    if method not in RATE_METHODS:
        raise ValueError(f"method must be one of {RATE_METHODS}")
    times = np.asarray(t_grid, dtype=np.float64)
    if times.ndim != 1 or len(times) == 0 or np.any(np.diff(times) <= 0) or times[0] < 0:
        raise ValueError("t_grid must be non-empty, non-negative and strictly increasing")
    X0 = np.asarray(X0, dtype=np.float64)
    mats = []
    if method == "frozen_exponential":
        J = jacobian_factors(params, hyper, variant, ops, X0).jacobian()
        mats = [tensor.expm(J, t) for t in times]
    else:
        idx = _layer_index(times, hyper.epsilon)
        L = int(idx.max())
        if method == "layer_product":
            jacs, _ = layer_jacobians(params, hyper, variant, ops, X0, L)
            prods = [np.eye(X0.size)]
            for Jl in jacs:
                prods.append(Jl @ prods[-1])
        else:
            prods = _fd_flow_jacobian(params, hyper, variant, ops, X0, L)
        mats = [prods[i] for i in idx]
    norms = np.array([tensor.frobenius_norm(m) for m in mats])
    spec = np.array([tensor.spectral_norm(m) for m in mats])
    if not np.all(np.isfinite(norms)) or np.any(norms <= 0):
        raise NumericError("propagation-rate norms are not positive and finite")
    return RateCurve(times, norms, method, spec)


def diffusion_decay_reference(K_diag, t_grid):
    """Analytic ``||exp(-t K)||_F`` for diagonal ``K``."""
    K = np.asarray(K_diag, dtype=np.float64)
    if np.any(K < 0):
        raise ValueError("K entries must be non-negative")
    times = np.asarray(t_grid, dtype=np.float64)
    norms = np.array([math.sqrt(float(np.sum(np.exp(-2.0 * t * K)))) for t in times])
    spec = np.array([float(np.max(np.exp(-t * K))) if len(K) else 0.0 for t in times])
    return RateCurve(times, norms, "analytic", spec)


def heat_generator_magnitudes(g, d):
    """``|lambda|`` of ``I_d kron (-L_sym)``, the diffusion generator."""
    lam = tensor.eigen(-sym_laplacian(g)).real_parts
    return np.tile(np.abs(lam), d)


# ---------------------------------------------------------------------------
# Sensitivity
# ---------------------------------------------------------------------------

def sensitivity_bound(inputs, ell, v, u):
    """SWAN bound and the plain message-passing bound for ``(v, u)`` after ``ell`` layers.

    Returns ``(swan_bound, mpnn_bound)``:
    ``(c_sigma w p)^ell ((c_r I + c_a A + beta c_b S)^ell)_{vu}`` and the same
    with ``S`` dropped.
    """
    if ell < 1:
        raise ValueError("ell must be >= 1")
    A = np.asarray(inputs.A, dtype=np.float64)
    S = np.asarray(inputs.S, dtype=np.float64)
    n = A.shape[0]
    if not (0 <= v < n and 0 <= u < n):
        raise ValueError("node index out of range")
    model = (inputs.c_sigma * inputs.w * inputs.p) ** ell
    O = inputs.c_r * np.eye(n) + inputs.c_a * A
    T = O + inputs.beta * inputs.c_b * S
    swan = model * np.linalg.matrix_power(T, ell)[v, u]
    mpnn = model * np.linalg.matrix_power(O, ell)[v, u]
    return float(swan), float(mpnn)


def conservative_constants(params, hyper, variant, ops, ell, w_floor=1e-8):
    """Constants under which the bound provably dominates the block Jacobian.

    Per layer ``||J_vu^(l+1)|| <= ||J_vu^(l)|| + eps c_sigma sum_k sum_z
    |G_k|_vz ||C_k||_2 ||J_zu^(l)||`` and ``||C||_2 <= p max|C_ij|``.  Taking
    ``w = max |C_ij|`` over the unscaled channel matrices gives ``c_r =
    1/(c_sigma w p) + eps`` when there is a self term, ``c_a = c_b = eps``,
    ``A = sum |G_k| + 2|beta| |S|`` (the extra ``|beta| |S|`` keeps the signed
    ``beta S`` from undercutting ``|beta S|``), and all three scaled by
    ``p^(1/(2 ell))`` to cover the ``sqrt(p)`` norm of the identity block.
    """
    variant = Variant(variant)
    terms = _terms(params, hyper, variant, ops)
    n = ops.ahat.shape[0]
    d = params["W"].shape[0]
    beta = hyper.effective_beta(variant)
    c_sigma = 1.0
    channel = []
    A = np.zeros((n, n))
    has_self = False
    for t in terms:
        C = t.C / beta if t.c_kind == "Z" else t.C
        channel.append(np.abs(C).max() if C.size else 0.0)
        if t.G is None:
            has_self = True
        elif t.c_kind != "Z":
            A += np.abs(t.G)
    S = ops.atilde - ops.atilde.T
    if beta != 0.0:
        A += 2.0 * abs(beta) * np.abs(S)
    w = max(max(channel), w_floor)
    eps = hyper.epsilon
    scale = d ** (1.0 / (2 * ell))
    c_r = (1.0 / (c_sigma * w * d) + (eps if has_self else 0.0)) * scale
    notes = {
        "rule": "c_r=(1/(c_sigma*w*p)+eps)*k, c_a=c_b=eps*k, k=p^(1/(2*ell)), A=sum|G|+2|beta||S|",
        "w": w,
        "scale": scale,
        "ell": ell,
    }
    return SensitivityBoundInputs(c_sigma, w, d, c_r, eps * scale, eps * scale, beta, A, S, notes)


def empirical_sensitivity(params, hyper, variant, ops, X0, v, u, ell=None, h=1e-6):
    """``||d x_v(ell) / d x_u(0)||_F`` by central differences, operators frozen."""
    X0 = np.asarray(X0, dtype=np.float64)
    n, d = X0.shape
    ell = hyper.layers if ell is None else ell
    block = np.zeros((d, d))
    for j in range(d):
        E = np.zeros_like(X0)
        E[u, j] = h
        xp = trajectory(params, hyper, variant, ops, X0 + E, ell)[-1]
        xm = trajectory(params, hyper, variant, ops, X0 - E, ell)[-1]
        block[:, j] = (xp[v] - xm[v]) / (2 * h)
    if not np.all(np.isfinite(block)):
        raise NumericError("finite differences produced non-finite values")
    return float(np.linalg.norm(block))


# ---------------------------------------------------------------------------
# Jacobian drift
# ---------------------------------------------------------------------------

def jacobian_drift(params, hyper, variant, ops, X0):
    """Relative Frobenius change of ``M1(X^(l)) M2`` between consecutive layers.

    Returns ``L - 1`` values; a zero previous Jacobian gives ``nan``
    (not applicable).
    """
    if hyper.layers < 2:
        raise ValueError("drift needs at least two layers")
    terms = _terms(params, hyper, variant, ops)
    m2 = build_graphwise_m2(params, hyper, variant, ops)
    states = trajectory(params, hyper, variant, ops, X0, hyper.layers)
    jacs = [tensor.vec(_act_grad(hyper, X, terms))[:, None] * m2 for X in states[:-1]]
    out = []
    for prev, cur in zip(jacs[:-1], jacs[1:]):
        denom = np.linalg.norm(prev)
        out.append(float(np.linalg.norm(cur - prev) / denom) if denom > 0 else float("nan"))
    return np.array(out)


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

SPECTRAL_COLUMNS = ("variant", "seed", "graph_id", "n", "d", "quantity", "index", "value")


def write_rows(rows, path, columns=SPECTRAL_COLUMNS):
    """Long-format CSV: one measured value per row."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            if len(r) != len(columns):
                raise ShapeError(f"row has {len(r)} fields, expected {len(columns)}")
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])
