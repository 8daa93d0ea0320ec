"""Synthetic long-range benchmarks and their exact oracles.

Graph transfer: move a source label ``k`` hops to a target node on line, ring
or crossed-ring graphs.  Property prediction: diameter, single-source shortest
paths and eccentricity over ten random graph families.
"""

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import networkx as nx
import numpy as np

from .errors import DisconnectedGraphError
from .graph import Graph

TASK_KINDS = ("transfer", "diameter", "sssp", "eccentricity")
TOPOLOGIES = ("line", "ring", "crossed_ring")
FAMILIES = (
    "erdos_renyi",
    "barabasi_albert",
    "grid",
    "caveman",
    "tree",
    "ladder",
    "line",
    "star",
    "caterpillar",
    "lobster",
)
TRANSFER_SPLITS = (1000, 100, 100)
PROPERTY_SPLITS = (5120, 640, 1280)
SPLIT_NAMES = ("train", "valid", "test")


@dataclass(frozen=True)
class TaskInstance:
    graph: Graph
    features: np.ndarray
    targets: np.ndarray
    kind: str
    family: str = ""
    source: int = -1
    target: int = -1

    def __post_init__(self):
        if self.kind not in TASK_KINDS:
            raise ValueError(f"unknown task kind {self.kind!r}")


@dataclass
class SplitDataset:
    train: list
    valid: list
    test: list
    seed: int
    params: dict = field(default_factory=dict)

    def splits(self):
        return {"train": self.train, "valid": self.valid, "test": self.test}

    def sizes(self):
        return tuple(len(s) for s in (self.train, self.valid, self.test))


def _from_nx(g):
    g = nx.convert_node_labels_to_integers(g)
    return Graph(g.number_of_nodes(), tuple(g.edges()))


# ---------------------------------------------------------------------------
# Oracles
# ---------------------------------------------------------------------------

def _connected_distances(g):
    dist = g.distances()
    if g.n and (dist < 0).any():
        raise DisconnectedGraphError("graph is disconnected; distances are infinite")
    return dist


def oracle_eccentricity(g):
    """Per-node maximum hop distance."""
    return _connected_distances(g).max(axis=1).astype(np.float64)


def oracle_diameter(g):
    if g.n == 0:
        return 0.0
    return float(_connected_distances(g).max())


def oracle_sssp(g, source):
    if not 0 <= source < g.n:
        raise ValueError(f"source {source} out of range")
    return _connected_distances(g)[source].astype(np.float64)


# ---------------------------------------------------------------------------
# Graph transfer
# ---------------------------------------------------------------------------

def transfer_graph(topology, k, chords="opposite"):
    """Topology with source 0 and target ``k`` at hop distance ``k``.

    Crossed rings add chords between the two arcs of a ``2k`` cycle.  With
    ``chords="opposite"`` node ``i`` joins its mirror ``2k - i`` for
    ``2 <= i <= k - 2`` (neighbours of the endpoints are left alone); with
    ``chords="crossed"`` consecutive rungs are joined crosswise.  Chords only
    ever join nodes whose distances to the source differ by at most one, so
    the source-target distance stays ``k``.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if topology == "line":
        return Graph(k + 1, tuple((i, i + 1) for i in range(k)))
    if topology not in ("ring", "crossed_ring"):
        raise ValueError(f"unknown topology {topology!r}")
    n = 2 * k
    if n < 3:
        raise ValueError("ring topologies need k >= 2")
    edges = [(i, (i + 1) % n) for i in range(n)]
    if topology == "crossed_ring":
        if chords == "opposite":
            edges += [(i, n - i) for i in range(2, k - 1)]
        elif chords == "crossed":
            for i in range(1, k - 1):
                edges += [(i, n - i - 1), (i + 1, n - i)]
        else:
            raise ValueError(f"unknown chord rule {chords!r}")
    return Graph(n, tuple(edges))


def gen_transfer(topology, k, count, seed, chords="opposite"):
    """``count`` instances sharing one topology, with fresh random features."""
    if k < 1:
        raise ValueError("k must be >= 1")
    g = transfer_graph(topology, k, chords)
    rng = np.random.default_rng(seed)
    src, tgt = 0, k
    out = []
    for _ in range(count):
        x = rng.uniform(0.0, 0.5, size=(g.n, 1))
        # redraw exact zeros so only the target carries 0.0
        while np.any(x == 0.0):
            x[x == 0.0] = rng.uniform(0.0, 0.5, size=int((x == 0.0).sum()))
        x[src, 0] = 1.0
        x[tgt, 0] = 0.0
        y = x.copy()
        y[src, 0], y[tgt, 0] = x[tgt, 0], x[src, 0]
        out.append(TaskInstance(g, x, y, "transfer", topology, src, tgt))
    return out


def transfer_dataset(topology, k, seed, sizes=TRANSFER_SPLITS, chords="opposite"):
    parts = [gen_transfer(topology, k, c, [seed, i], chords) for i, c in enumerate(sizes)]
    return SplitDataset(*parts, seed=seed, params={"task": "transfer", "topology": topology, "k": k, "chords": chords})


# ---------------------------------------------------------------------------
# Property prediction graph families
# ---------------------------------------------------------------------------

def _er(n, rng):
    p = min(1.0, 1.5 * np.log(n) / n)
    return nx.gnp_random_graph(n, p, seed=int(rng.integers(2**31)))


def _ba(n, rng):
    return nx.barabasi_albert_graph(n, 2, seed=int(rng.integers(2**31)))


def _grid(n, rng):
    return nx.grid_2d_graph(5, int(rng.integers(5, 8)))


def _caveman(n, rng):
    return nx.connected_caveman_graph(5, int(rng.integers(5, 8)))


def _tree(n, rng):
    return nx.from_prufer_sequence(rng.integers(0, n, size=n - 2).tolist())


def _ladder(n, rng):
    return nx.ladder_graph(n // 2)


def _line(n, rng):
    return nx.path_graph(n)


def _star(n, rng):
    return nx.star_graph(n - 1)


def _caterpillar(n, rng):
    spine = int(rng.integers(n // 3, 2 * n // 3 + 1))
    g = nx.path_graph(spine)
    for leaf in range(spine, n):
        g.add_edge(leaf, int(rng.integers(spine)))
    return g


def _lobster(n, rng):
    spine = int(rng.integers(n // 4, n // 2 + 1))
    g = nx.path_graph(spine)
    nodes = list(range(spine))
    # second layer hangs off spine nodes, third layer off anything so far
    second = int(rng.integers(0, n - spine + 1))
    for v in range(spine, spine + second):
        g.add_edge(v, int(rng.integers(spine)))
        nodes.append(v)
    for v in range(spine + second, n):
        g.add_edge(v, nodes[int(rng.integers(len(nodes)))])
    return g


_GENERATORS = {
    "erdos_renyi": _er,
    "barabasi_albert": _ba,
    "grid": _grid,
    "caveman": _caveman,
    "tree": _tree,
    "ladder": _ladder,
    "line": _line,
    "star": _star,
    "caterpillar": _caterpillar,
    "lobster": _lobster,
}


def random_family_graph(family, rng, n_range=(25, 35), max_tries=100):
    """One connected graph from ``family``; disconnected draws are resampled."""
    gen = _GENERATORS[family]
    for _ in range(max_tries):
        n = int(rng.integers(n_range[0], n_range[1] + 1))
        g = gen(n, rng)
        if nx.is_connected(g):
            return _from_nx(g)
    raise RuntimeError(f"{family}: no connected graph after {max_tries} draws")


def property_instance(task, g, family, rng):
    x = rng.uniform(0.0, 1.0, size=(g.n, 1))
    src = -1
    if task == "diameter":
        y = np.array([[oracle_diameter(g)]])
    elif task == "eccentricity":
        y = oracle_eccentricity(g)[:, None]
    elif task == "sssp":
        src = int(rng.integers(g.n))
        ind = np.zeros((g.n, 1))
        ind[src, 0] = 1.0
        x = np.concatenate([x, ind], axis=1)
        y = oracle_sssp(g, src)[:, None]
    else:
        raise ValueError(f"unknown property task {task!r}")
    return TaskInstance(g, x, y, task, family, src)


def split_sizes(scale, base=PROPERTY_SPLITS):
    if not 0.0 < scale <= 1.0:
        raise ValueError(f"scale must lie in (0, 1], got {scale}")
    sizes = tuple(int(round(b * scale)) for b in base)
    if min(sizes) < 1:
        raise ValueError(f"scale {scale} leaves an empty split {sizes}")
    return sizes


def gen_property_graphs(task, seed, scale=1.0, n_range=(25, 35)):
    """Train/valid/test instances for a property task.

    Instance ``i`` of split ``s`` draws from its own generator seeded by
    ``(seed, s, i)``, so splits can be generated independently and the same
    seed gives the same graphs for every task.
    """
    sizes = split_sizes(scale)
    parts = []
    for s, count in enumerate(sizes):
        items = []
        for i in range(count):
            rng = np.random.default_rng([seed, s, i])
            family = FAMILIES[int(rng.integers(len(FAMILIES)))]
            g = random_family_graph(family, rng, n_range)
            items.append(property_instance(task, g, family, rng))
        parts.append(items)
    return SplitDataset(*parts, seed=seed, params={"task": task, "scale": scale, "n_range": list(n_range)})


# ---------------------------------------------------------------------------
# Serialisation
# ---------------------------------------------------------------------------

def _fmt(x):
    return repr(float(x))


def save_dataset(ds, directory):
    """Write ``meta.json`` plus edge, feature and target CSVs per split."""
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    meta = {"seed": ds.seed, "params": ds.params, "splits": dict(zip(SPLIT_NAMES, ds.sizes()))}
    (root / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    for name, items in ds.splits().items():
        with open(root / f"{name}_edges.csv", "w", newline="") as fe, \
                open(root / f"{name}_features.csv", "w", newline="") as ff, \
                open(root / f"{name}_targets.csv", "w", newline="") as ft:
            we, wf, wt = csv.writer(fe), csv.writer(ff), csv.writer(ft)
            we.writerow(["graph", "n", "family", "source", "u", "v"])
            wf.writerow(["graph", "node", "values"])
            wt.writerow(["graph", "row", "values"])
            for gid, inst in enumerate(items):
                g = inst.graph
                if not g.edges:
                    we.writerow([gid, g.n, inst.family, inst.source, "", ""])
                for u, v in g.edges:
                    we.writerow([gid, g.n, inst.family, inst.source, u, v])
                for i, row in enumerate(inst.features):
                    wf.writerow([gid, i, " ".join(_fmt(x) for x in row)])
                for i, row in enumerate(inst.targets):
                    wt.writerow([gid, i, " ".join(_fmt(x) for x in row)])
    return root


def load_dataset(directory):
    root = Path(directory)
    meta = json.loads((root / "meta.json").read_text())
    kind = meta["params"].get("task", "transfer")
    parts = []
    for name in SPLIT_NAMES:
        graphs = {}
        with open(root / f"{name}_edges.csv", newline="") as fh:
            for row in csv.DictReader(fh):
                gid = int(row["graph"])
                info = graphs.setdefault(gid, {"n": int(row["n"]), "family": row["family"],
                                               "source": int(row["source"]), "edges": []})
                if row["u"] != "":
                    info["edges"].append((int(row["u"]), int(row["v"])))

        def rows(fname):
            out = {}
            with open(root / fname, newline="") as fh:
                for row in csv.DictReader(fh):
                    out.setdefault(int(row["graph"]), []).append([float(x) for x in row["values"].split()])
            return out

        feats = rows(f"{name}_features.csv")
        targs = rows(f"{name}_targets.csv")
        items = []
        for gid in sorted(graphs):
            info = graphs[gid]
            g = Graph(info["n"], tuple(info["edges"]))
            tgt = meta["params"].get("k", -1) if kind == "transfer" else -1
            items.append(TaskInstance(g, np.array(feats[gid]), np.array(targs[gid]), kind,
                                      info["family"], info["source"], tgt))
        parts.append(items)
    return SplitDataset(*parts, seed=meta["seed"], params=meta["params"])
