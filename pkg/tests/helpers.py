"""Random graph/parameter draws shared by the spectral and acceptance tests."""

import numpy as np

from swan_lab import model as M
from swan_lab import spectral as S
from swan_lab.graph import Graph


def random_graph(rng, n_min=2, n_max=8, connected=True):
    n = int(rng.integers(n_min, n_max + 1))
    p = rng.uniform(0.2, 0.8)
    edges = {(u, v) for u in range(n) for v in range(u + 1, n) if rng.random() < p}
    if connected:
        order = rng.permutation(n)
        edges |= {tuple(sorted((int(order[i]), int(order[i + 1])))) for i in range(n - 1)}
    return Graph(n, tuple(sorted(edges)))


def random_instance(rng, variant, n_max=8, d_max=4, gamma=0.0, beta=None, layers=1,
                    activation="tanh", epsilon=0.1, scale=1.0):
    """Graph, hyper-parameters, parameters, operators and an initial state.

    ``scale=None`` keeps the model's default uniform initialisation; otherwise
    dynamics weights are redrawn from ``N(0, scale^2)``.
    """
    g = random_graph(rng, n_max=n_max)
    d = int(rng.integers(1, d_max + 1))
    beta = float(rng.uniform(-2, 2)) if beta is None else beta
    hyper = M.Hyper(epsilon=epsilon, gamma=gamma, beta=beta, layers=layers, hidden_dim=d, activation=activation)
    params = M.init_params(rng, 1, 1, hyper, variant)
    if scale is not None:
        for k in ("W", "V", "Z", "K1", "K2"):
            if k in params:
                params[k] = scale * rng.normal(size=params[k].shape)
    X0 = rng.normal(size=(g.n, d))
    ops = S.graph_operators(params, hyper, variant, g, X0)
    return g, hyper, params, ops, X0


# acceptance criterion -> (passed, detail); printed by the terminal-summary hook
ACCEPTANCE = {}


def report(number, passed, detail):
    ACCEPTANCE[number] = (bool(passed), detail)
    print(f"CRITERION {number}: {'PASS' if passed else 'FAIL'} {detail}")
    return bool(passed)
