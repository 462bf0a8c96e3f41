"""Synthetic training corpora: maximum independent set, set cover and
mixed-integer knapsack instances.

All generators are pure functions of their parameters and a 64-bit seed.
Corpus-level seeds fan out to per-instance seeds through :func:`derive_seed`.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .milp import MilpInstance, RawMilp, VarType, standardize
from .mps import write_mps

MASK64 = (1 << 64) - 1

# default sizes follow the published dataset statistics (MIS 1953 x 500,
# SetCover 500 x 1000, MIK 346 x 413)
MIS_DEFAULT_NODES = 500
MIS_DEFAULT_MEAN_DEGREE = 2 * 1953 / 500


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(seed: int, *index: int) -> int:
    """Child seed for ``index`` under ``seed``: splitmix64 applied per index level."""
    s = int(seed) & MASK64
    for i in index:
        s = splitmix64(s ^ splitmix64(int(i) & MASK64))
    return s


def _rng(seed) -> np.random.Generator:
    return np.random.default_rng(int(seed) & MASK64)


def _binary_instance(name, c, rows, cols, vals, senses, rhs) -> MilpInstance:
    n = len(c)
    raw = RawMilp(name=name, c=np.asarray(c, dtype=float), rows=rows, cols=cols, vals=vals,
                  senses=tuple(senses), rhs=np.asarray(rhs, dtype=float),
                  lower=np.zeros(n), upper=np.ones(n),
                  vtype=np.full(n, VarType.BINARY, dtype=np.int8))
    return standardize(raw)


def erdos_renyi_edges(nodes: int, p: float, rng) -> np.ndarray:
    iu, ju = np.triu_indices(nodes, k=1)
    keep = rng.random(iu.size) < p
    return np.stack([iu[keep], ju[keep]], axis=1)


def barabasi_albert_edges(nodes: int, affinity: int, rng) -> np.ndarray:
    """Preferential attachment; each new node links to ``affinity`` earlier nodes."""
    if not 1 <= affinity < nodes:
        raise ValueError("affinity must satisfy 1 <= affinity < nodes")
    edges = [(i, affinity) for i in range(affinity)]
    degrees = np.zeros(nodes)
    degrees[:affinity] = 1
    degrees[affinity] = affinity
    for new in range(affinity + 1, nodes):
        prob = degrees[:new] / degrees[:new].sum()
        targets = rng.choice(new, affinity, replace=False, p=prob)
        for t in np.sort(targets):
            edges.append((int(t), new))
        degrees[targets] += 1
        degrees[new] = affinity
    return np.array(sorted(edges), dtype=np.int64)


def greedy_clique_partition(nodes: int, edges) -> list:
    """Partition the vertices into cliques greedily: repeatedly take the
    highest-degree leftover vertex and grow a clique from its leftover
    neighbours in decreasing degree order (ties to the lower index)."""
    nbrs = [set() for _ in range(nodes)]
    for u, v in edges:
        nbrs[u].add(int(v))
        nbrs[v].add(int(u))
    deg = np.array([len(s) for s in nbrs])
    order = np.argsort(-deg, kind="stable").tolist()
    leftover = set(order)
    cliques = []
    for center in order:
        if center not in leftover:
            continue
        clique = [center]
        cand = sorted(nbrs[center] & leftover, key=lambda x: (-deg[x], x))
        for v in cand:
            if all(v in nbrs[c] for c in clique):
                clique.append(v)
        cliques.append(sorted(clique))
        leftover.difference_update(clique)
    return cliques


def mis_rows(nodes: int, edges, formulation: str = "edge") -> list:
    """Constraint supports: one per edge, or (``clique``) one per clique of a
    greedy clique partition plus one per edge not inside any of those cliques."""
    edges = [tuple(sorted((int(u), int(v)))) for u, v in edges]
    if formulation == "edge":
        return [list(e) for e in sorted(edges)]
    if formulation != "clique":
        raise ValueError(f"unknown MIS formulation {formulation!r}")
    rows = set(edges)
    for clique in greedy_clique_partition(nodes, edges):
        if len(clique) < 2:
            continue
        for a in range(len(clique)):
            for b in range(a + 1, len(clique)):
                rows.discard((clique[a], clique[b]))
        rows.add(tuple(clique))
    return [list(r) for r in sorted(rows)]


def gen_mis(nodes: int = MIS_DEFAULT_NODES, mean_degree: float = MIS_DEFAULT_MEAN_DEGREE,
            seed: int = 0, graph: str = "erdos_renyi", formulation: str = "edge") -> MilpInstance:
    """Maximum independent set: minimize -sum x subject to packing rows.

    ``graph="erdos_renyi"`` samples G(n, p) with p = mean_degree / (n - 1);
    ``graph="barabasi_albert"`` uses preferential attachment with affinity
    round(mean_degree / 2). ``formulation="edge"`` writes ``x_u + x_v <= 1``
    per edge; ``"clique"`` aggregates edges into greedy-clique rows
    ``sum_{v in K} x_v <= 1``, which gives rows of varying degree.
    """
    if nodes < 2:
        raise ValueError("MIS needs at least 2 nodes")
    if mean_degree >= nodes or mean_degree <= 0:
        raise ValueError("mean_degree must lie in (0, nodes)")
    rng = _rng(seed)
    if graph == "erdos_renyi":
        p = mean_degree / (nodes - 1)
        if p > 1:
            raise ValueError("mean_degree exceeds nodes - 1")
        edges = erdos_renyi_edges(nodes, p, rng)
    elif graph == "barabasi_albert":
        edges = barabasi_albert_edges(nodes, max(1, int(round(mean_degree / 2))), rng)
    else:
        raise ValueError(f"unknown graph model {graph!r}")
    return mis_instance(nodes, edges, formulation, name=f"mis_{nodes}_{seed}")


def mis_instance(nodes: int, edges, formulation: str = "edge", name: str = "mis") -> MilpInstance:
    """MIS instance for a given graph (see :func:`gen_mis` for the formulations)."""
    supports = mis_rows(nodes, edges, formulation)
    m = len(supports)
    rows = np.repeat(np.arange(m), [len(r) for r in supports])
    cols = np.array([v for r in supports for v in r], dtype=np.int64)
    return _binary_instance(name, -np.ones(nodes), rows, cols, np.ones(cols.size), ["L"] * m,
                            np.ones(m))


def gen_setcover(rows: int = 500, cols: int = 1000, density: float = 0.05,
                 cost_range: tuple = (1, 100), seed: int = 0) -> MilpInstance:
    """Set cover: every row covered by >= 2 columns, every column covers >= 1 row.

    The cover rows ``sum_j x_j >= 1`` are standardized to ``-sum_j x_j <= -1``.
    """
    if rows < 1 or cols < 1:
        raise ValueError("rows and cols must be positive")
    if not 0 < density <= 1:
        raise ValueError("density must lie in (0, 1]")
    if density * cols < 2:
        raise ValueError("density * cols must be at least 2")
    nnz = int(round(rows * cols * density))
    if nnz < max(2 * rows, cols) or cols < 2:
        raise ValueError("density too low to cover every row twice and use every column")
    rng = _rng(seed)
    filled = np.zeros((rows, cols), dtype=bool)
    # every column covers one random row
    filled[rng.integers(rows, size=cols), np.arange(cols)] = True
    # top up every row to two columns
    for i in range(rows):
        short = 2 - int(filled[i].sum())
        if short > 0:
            free = np.flatnonzero(~filled[i])
            filled[i, rng.choice(free, short, replace=False)] = True
    remaining = nnz - int(filled.sum())
    if remaining > 0:
        empty = np.flatnonzero(~filled.reshape(-1))
        filled.reshape(-1)[rng.choice(empty, remaining, replace=False)] = True
    r, k = np.nonzero(filled)
    lo, hi = cost_range
    cost = rng.integers(int(lo), int(hi) + 1, size=cols).astype(float)
    return _binary_instance(f"setcover_{rows}x{cols}_{seed}", cost, r, k, np.ones(r.size),
                            ["G"] * rows, np.ones(rows))


def gen_mik(knapsacks: int = 346, vars_per_knapsack: int = 12, seed: int = 0,
            int_vars: int = 67, int_ub: int = 5, weight_range: tuple = (5, 50),
            profit_range: tuple = (10, 60), penalty_range: tuple = (20, 80)) -> MilpInstance:
    """Mixed-integer knapsack.

    Row ``i`` reads ``sum_j a_ij x_j - y_i <= b_i`` over ``vars_per_knapsack``
    integer items drawn from a shared pool of ``int_vars`` items with
    ``0 <= x_j <= int_ub``; ``y_i in [0, ceil(0.2 b_i)]`` is a continuous
    overflow paid at a per-unit penalty. The objective maximizes item profit
    minus overflow penalty. Defaults give 346 rows and 413 columns.
    """
    if knapsacks < 1 or vars_per_knapsack < 1 or int_vars < 1 or int_ub < 1:
        raise ValueError("sizes must be positive")
    if vars_per_knapsack > int_vars:
        raise ValueError("vars_per_knapsack exceeds the item pool")
    rng = _rng(seed)
    n = int_vars + knapsacks
    rows, cols, vals = [], [], []
    rhs = np.zeros(knapsacks)
    for i in range(knapsacks):
        items = np.sort(rng.choice(int_vars, vars_per_knapsack, replace=False))
        w = rng.integers(weight_range[0], weight_range[1] + 1, size=vars_per_knapsack).astype(float)
        frac = rng.uniform(0.3, 0.7)
        rhs[i] = float(np.floor(frac * w.sum() * int_ub))
        rows += [i] * (vars_per_knapsack + 1)
        cols += items.tolist() + [int_vars + i]
        vals += w.tolist() + [-1.0]
    profit = rng.integers(profit_range[0], profit_range[1] + 1, size=int_vars).astype(float)
    penalty = rng.integers(penalty_range[0], penalty_range[1] + 1, size=knapsacks).astype(float)
    c = np.concatenate([profit, -penalty])
    lower = np.zeros(n)
    upper = np.concatenate([np.full(int_vars, float(int_ub)), np.ceil(0.2 * rhs)])
    vtype = np.array([VarType.INTEGER] * int_vars + [VarType.CONTINUOUS] * knapsacks, dtype=np.int8)
    raw = RawMilp(name=f"mik_{knapsacks}x{vars_per_knapsack}_{seed}", c=c,
                  rows=np.array(rows), cols=np.array(cols), vals=np.array(vals),
                  senses=("L",) * knapsacks, rhs=rhs, lower=lower, upper=upper,
                  vtype=vtype, maximize=True)
    return standardize(raw)


FAMILIES = {"mis": gen_mis, "setcover": gen_setcover, "mik": gen_mik}


@dataclass
class FamilyParams:
    family: str
    params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; choose from {sorted(FAMILIES)}")
        if not 0 <= int(self.seed) <= MASK64:
            raise ValueError("seed must be a 64-bit unsigned integer")


def generate_instance(family: str, params: dict, seed: int) -> MilpInstance:
    return FAMILIES[family](**params, seed=seed)


def generate_corpus(family: str, count: int, seed: int, params: dict | None = None) -> list:
    params = dict(params or {})
    return [generate_instance(family, params, derive_seed(seed, i)) for i in range(count)]


def write_corpus(out_dir, family: str, count: int, seed: int, params: dict | None = None,
                 jobs: int = 1) -> dict:
    """Write ``count`` numbered MPS files plus ``manifest.json`` into ``out_dir``."""
    params = dict(params or {})
    os.makedirs(out_dir, exist_ok=True)
    seeds = [derive_seed(seed, i) for i in range(count)]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(jobs) as pool:
            insts = list(pool.map(generate_instance, [family] * count, [params] * count, seeds))
    else:
        insts = [generate_instance(family, params, s) for s in seeds]
    files = []
    for i, (inst, s) in enumerate(zip(insts, seeds)):
        fname = f"{family}_{i:05d}.mps"
        with open(os.path.join(out_dir, fname), "w") as fh:
            fh.write(write_mps(inst))
        files.append({"file": fname, "family": family, "params": params, "seed": s})
    manifest = {"format": "milpgen-corpus", "version": 1, "family": family, "count": count,
                "seed": seed, "params": params, "files": files}
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
    return manifest
