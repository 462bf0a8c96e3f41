"""Structural statistics, JS-divergence similarity, hardness and the
optimal-value downstream task."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import entropy

from . import kernels
from .generators import derive_seed
from .milp import MilpInstance, VarType, to_bipartite
from .solver import OPTIMAL, LIMIT, SolverLimits, feasible_and_bounded, solve_milp

logger = logging.getLogger(__name__)

STAT_NAMES = (
    "coef_dens", "cons_degree_mean", "cons_degree_std", "var_degree_mean", "var_degree_std",
    "lhs_mean", "lhs_std", "rhs_mean", "rhs_std", "clustering_coef", "modularity",
)
EXTENDED_NAMES = ("obj_mean", "obj_std", "cont_ratio")
JS_BINS = 20
JS_EPS = 1e-10
LOG2 = math.log(2.0)


@dataclass
class StatVector:
    coef_dens: float
    cons_degree_mean: float
    cons_degree_std: float
    var_degree_mean: float
    var_degree_std: float
    lhs_mean: float
    lhs_std: float
    rhs_mean: float
    rhs_std: float
    clustering_coef: float
    modularity: float
    obj_mean: float = 0.0
    obj_std: float = 0.0
    cont_ratio: float = 0.0
    empty_edges: bool = False

    def values(self, extended=False) -> np.ndarray:
        names = STAT_NAMES + (EXTENDED_NAMES if extended else ())
        return np.array([getattr(self, k) for k in names])

    def to_dict(self) -> dict:
        return asdict(self)


def _graph_of(x) -> tuple:
    if isinstance(x, MilpInstance):
        return to_bipartite(x), x
    return x, None


def modularity_of(labels, edge_u, edge_v, num_nodes) -> float:
    """Newman modularity of a partition of an unweighted simple graph."""
    n_edges = len(edge_u)
    if n_edges == 0:
        return 0.0
    labels = np.asarray(labels)
    deg = np.bincount(edge_u, minlength=num_nodes) + np.bincount(edge_v, minlength=num_nodes)
    k = int(labels.max()) + 1
    inside = np.bincount(labels[edge_u][labels[edge_u] == labels[edge_v]], minlength=k)
    tot = np.bincount(labels, weights=deg, minlength=k)
    return float(np.sum(inside / n_edges - (tot / (2.0 * n_edges)) ** 2))


def compute_stats(x) -> StatVector:
    """The 11 structural statistics (plus the objective/continuous trio) of an
    instance or bipartite graph."""
    g, inst = _graph_of(x)
    m, n, E = g.m, g.n, g.num_edges
    ci, vi = g.edge_index
    cdeg = np.bincount(ci, minlength=m).astype(float)
    vdeg = np.bincount(vi, minlength=n).astype(float)
    coefs = g.E[:, 0]
    b = g.V[:, 0]
    dens = E / (m * n) if m and n else 0.0
    empty = E == 0
    if empty:
        logger.warning("graph %r has no edges; coefficient moments reported as 0", g.name)
    clus = kernels.bipartite_clustering(m, n, ci, vi)
    labels = kernels.greedy_modularity(m + n, ci, vi + m)
    Q = modularity_of(labels, ci, vi + m, m + n)
    c = g.W[:, 4]
    cont = g.W[:, VarType.CONTINUOUS]
    return StatVector(
        coef_dens=float(dens),
        cons_degree_mean=float(cdeg.mean()) if m else 0.0,
        cons_degree_std=float(cdeg.std()) if m else 0.0,
        var_degree_mean=float(vdeg.mean()) if n else 0.0,
        var_degree_std=float(vdeg.std()) if n else 0.0,
        lhs_mean=0.0 if empty else float(coefs.mean()),
        lhs_std=0.0 if empty else float(coefs.std()),
        rhs_mean=float(b.mean()) if m else 0.0,
        rhs_std=float(b.std()) if m else 0.0,
        clustering_coef=float(clus.mean()) if m + n else 0.0,
        modularity=Q,
        obj_mean=float(c.mean()) if n else 0.0,
        obj_std=float(c.std()) if n else 0.0,
        cont_ratio=float(cont.mean()) if n else 0.0,
        empty_edges=bool(empty),
    )


def compute_stats_many(items, jobs: int = 1) -> list:
    items = list(items)
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(jobs) as pool:
            return list(pool.map(compute_stats, items, chunksize=8))
    return [compute_stats(x) for x in items]


def js_divergence(a, b, bins: int = JS_BINS, eps: float = JS_EPS) -> float:
    """Jensen-Shannon divergence (natural log) of two samples histogrammed on
    shared bins spanning the pooled range."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size == 0 or b.size == 0:
        raise ValueError("samples must be nonempty")
    lo = min(a.min(), b.min())
    hi = max(a.max(), b.max())
    if lo == hi:
        return 0.0
    pa, _ = np.histogram(a, bins=bins, range=(lo, hi))
    pb, _ = np.histogram(b, bins=bins, range=(lo, hi))
    p = pa / a.size + eps
    q = pb / b.size + eps
    p /= p.sum()
    q /= q.sum()
    mid = 0.5 * (p + q)
    d = 0.5 * entropy(p, mid) + 0.5 * entropy(q, mid)
    return float(min(max(d, 0.0), LOG2))


@dataclass
class SimilarityReport:
    names: tuple
    divergences: list
    scores: list
    score: float
    bins: int = JS_BINS
    ranges: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"score": self.score, "bins": self.bins,
                "statistics": [{"name": k, "js": d, "score": s, "range": r}
                               for k, d, s, r in zip(self.names, self.divergences, self.scores,
                                                     self.ranges)]}

    def table(self) -> str:
        lines = [f"{'statistic':<18} {'JS':>10} {'score':>8}"]
        for k, d, s in zip(self.names, self.divergences, self.scores):
            lines.append(f"{k:<18} {d:>10.5f} {s:>8.4f}")
        lines.append(f"{'mean':<18} {'':>10} {self.score:>8.4f}")
        return "\n".join(lines)


def _stats_of_set(items):
    items = list(items)
    if not items:
        raise ValueError("similarity needs nonempty sets")
    return [x if isinstance(x, StatVector) else compute_stats(x) for x in items]


def similarity_score(set_a, set_b, extended: bool = False) -> SimilarityReport:
    """Per statistic s_i = (log 2 - JS_i) / log 2; the score is their mean.
    Items may be instances, graphs or precomputed :class:`StatVector` s."""
    sa, sb = _stats_of_set(set_a), _stats_of_set(set_b)
    names = STAT_NAMES + (EXTENDED_NAMES if extended else ())
    A = np.array([s.values(extended) for s in sa])
    B = np.array([s.values(extended) for s in sb])
    divs, scores, ranges = [], [], []
    for i in range(len(names)):
        d = js_divergence(A[:, i], B[:, i])
        divs.append(d)
        scores.append(float(min(max((LOG2 - d) / LOG2, 0.0), 1.0)))
        ranges.append([float(min(A[:, i].min(), B[:, i].min())),
                       float(max(A[:, i].max(), B[:, i].max()))])
    return SimilarityReport(names, divs, scores, float(np.mean(scores)), JS_BINS, ranges)


# --------------------------------------------------------------------------
# hardness


@dataclass
class HardnessReport:
    mean_time: float
    std_time: float
    mean_nodes: float
    std_nodes: float
    solved: int
    limit_reached: int
    ref_mean_time: float
    ref_mean_nodes: float
    time_rel_error: float
    nodes_rel_error: float
    unusable: bool = False
    statuses: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def _solve_all(instances, limits):
    times, nodes, statuses = [], [], {}
    limited = 0
    for inst in instances:
        res = solve_milp(inst, limits)
        statuses[res.status] = statuses.get(res.status, 0) + 1
        if res.status == LIMIT:
            limited += 1
            continue
        times.append(res.seconds)
        nodes.append(res.nodes)
    return np.array(times), np.array(nodes, dtype=float), limited, statuses


def _rel(x, ref):
    return float(abs(x - ref) / ref) if ref > 0 else math.nan


def hardness_report(instances, reference_instances, limits: SolverLimits | None = None,
                    reference: dict | None = None) -> HardnessReport:
    """Solve both sets; relative errors |x - x_ref| / x_ref of mean time and
    mean node count (NaN when the reference value is 0). Limit-reached solves
    are counted separately and excluded from the means. ``reference`` may
    carry precomputed ``mean_time``/``mean_nodes``."""
    limits = limits or SolverLimits(max_nodes=20000, max_seconds=30.0)
    t, nd, limited, statuses = _solve_all(list(instances), limits)
    if reference is None:
        rt, rn, _, _ = _solve_all(list(reference_instances), limits)
        ref_t = float(rt.mean()) if rt.size else math.nan
        ref_n = float(rn.mean()) if rn.size else math.nan
    else:
        ref_t, ref_n = reference["mean_time"], reference["mean_nodes"]
    unusable = t.size == 0
    mt = float(t.mean()) if t.size else math.nan
    mn = float(nd.mean()) if nd.size else math.nan
    return HardnessReport(mt, float(t.std()) if t.size else math.nan, mn,
                          float(nd.std()) if nd.size else math.nan, int(t.size), limited,
                          ref_t, ref_n, _rel(mt, ref_t), _rel(mn, ref_n), unusable, statuses)


def feasibility_fraction(instances, limits: SolverLimits | None = None) -> dict:
    """Fraction of instances that are feasible and bounded per the mini-solver."""
    limits = limits or SolverLimits(max_nodes=5000, max_seconds=30.0)
    ok = unknown = 0
    instances = list(instances)
    for inst in instances:
        feas, bounded = feasible_and_bounded(inst, limits)
        if feas is None:
            unknown += 1
        elif feas and bounded:
            ok += 1
    total = len(instances)
    return {"feasible_bounded": ok, "unknown": unknown, "total": total,
            "fraction": ok / total if total else math.nan}


# --------------------------------------------------------------------------
# downstream: optimal-value prediction


def improvement(mse_base: float, mse_aug: float) -> float:
    """(MSE1 - MSE2) / MSE1."""
    if mse_base <= 0:
        raise ValueError("baseline MSE must be positive")
    return (mse_base - mse_aug) / mse_base


@dataclass
class DownstreamConfig:
    hidden: int = 16
    depth: int = 3
    epochs: int = 1000
    patience: int = 50
    lr: float = 0.001
    val_fraction: float = 0.2
    seed: int = 0
    limits: SolverLimits = field(default_factory=lambda: SolverLimits(max_nodes=20000,
                                                                      max_seconds=30.0))


@dataclass
class DownstreamReport:
    mse_base: float
    mse_aug: float
    improvement: float
    n_train: int
    n_augment: int
    n_test: int
    excluded: int
    epochs_base: int = 0
    epochs_aug: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def label_optimal_values(instances, limits: SolverLimits):
    """Optimal objective per instance; unsolved instances are dropped with a warning."""
    kept, labels = [], []
    for inst in instances:
        res = solve_milp(inst, limits)
        if res.status != OPTIMAL:
            logger.warning("instance %r excluded from labels (status %s)", inst.name, res.status)
            continue
        kept.append(inst)
        labels.append(res.objective)
    return kept, np.array(labels, dtype=float)


class ValuePredictor:
    """GNN encoder, mean pooling over all vertices, two-layer MLP."""

    def __init__(self, rng, hidden=16, depth=3):
        from .gnn import GnnParams
        from .nn.layers import MlpParams, ParamStore

        self.store = ParamStore()
        self.gnn = GnnParams(self.store, "pred", rng, hidden, depth, masked=False)
        self.head = MlpParams(self.store, "pred.head", (hidden, hidden, 1), rng)

    def forward(self, batch):
        from .gnn import encode
        from .nn import autograd as ag
        from .nn.autograd import Segments
        from .nn.layers import mlp_apply

        h_v, h_w = encode(self.gnn, batch)
        ids = np.concatenate([batch.v_graph, batch.w_graph])
        pooled = ag.segment_mean(ag.concat([h_v, h_w], axis=0), Segments(ids, batch.num_graphs))
        return mlp_apply(self.head, pooled)


def _fit_predictor(train_graphs, y_train, val_graphs, y_val, cfg: DownstreamConfig):
    from .gnn import GraphBatch
    from .nn import autograd as ag
    from .nn.layers import mse
    from .nn.optim import Adam

    model = ValuePredictor(np.random.default_rng(derive_seed(cfg.seed, 7)), cfg.hidden, cfg.depth)
    opt = Adam(model.store)
    tb = GraphBatch(train_graphs)
    vb = GraphBatch(val_graphs) if val_graphs else None
    best, best_params, since, epochs = math.inf, None, 0, 0
    for epoch in range(cfg.epochs):
        model.store.zero_grad()
        loss = mse(model.forward(tb), y_train[:, None])
        loss.backward()
        opt.step(cfg.lr)
        epochs = epoch + 1
        if vb is None:
            continue
        with ag.no_grad():
            v = float(np.mean((model.forward(vb).data[:, 0] - y_val) ** 2))
        if v < best:
            best, best_params, since = v, {k: t.data.copy() for k, t in model.store.items()}, 0
        else:
            since += 1
            if since >= cfg.patience:
                break
    if best_params is not None:
        model.store.load_arrays(best_params)
    return model, epochs


def downstream_optimal_value(train_set, augment_set, test_set,
                             cfg: DownstreamConfig | None = None) -> DownstreamReport:
    """Train a value predictor on ``train_set`` and another on ``train_set``
    plus ``augment_set``; compare test MSE on targets standardized with the
    base training labels. The validation split comes from ``train_set`` only
    and is shared by both models."""
    from .gnn import GraphBatch
    from .nn import autograd as ag

    cfg = cfg or DownstreamConfig()
    train_set, augment_set, test_set = list(train_set), list(augment_set), list(test_set)
    n_in = len(train_set) + len(augment_set) + len(test_set)
    tr, y_tr = label_optimal_values(train_set, cfg.limits)
    au, y_au = label_optimal_values(augment_set, cfg.limits)
    te, y_te = label_optimal_values(test_set, cfg.limits)
    if len(tr) < 2 or not te:
        raise ValueError("need at least 2 labeled training and 1 labeled test instance")
    mu, sd = float(y_tr.mean()), float(y_tr.std())
    sd = sd if sd > 0 else 1.0
    norm = lambda y: (y - mu) / sd  # noqa: E731
    rng = np.random.default_rng(derive_seed(cfg.seed, 3))
    perm = rng.permutation(len(tr))
    n_val = max(1, int(round(cfg.val_fraction * len(tr))))
    val_idx, fit_idx = np.sort(perm[:n_val]), np.sort(perm[n_val:])
    g_tr = [to_bipartite(x) for x in tr]
    fit_g = [g_tr[i] for i in fit_idx]
    val_g = [g_tr[i] for i in val_idx]
    y_fit, y_val = norm(y_tr[fit_idx]), norm(y_tr[val_idx])
    test_b = GraphBatch([to_bipartite(x) for x in te])

    def run(extra_g, extra_y):
        model, ep = _fit_predictor(fit_g + extra_g, np.concatenate([y_fit, extra_y]),
                                   val_g, y_val, cfg)
        with ag.no_grad():
            pred = model.forward(test_b).data[:, 0]
        return float(np.mean((pred - norm(y_te)) ** 2)), ep

    mse1, ep1 = run([], np.zeros(0))
    if au:
        mse2, ep2 = run([to_bipartite(x) for x in au], norm(y_au))
    else:
        mse2, ep2 = mse1, ep1
    return DownstreamReport(mse1, mse2, improvement(mse1, mse2), len(fit_idx), len(au), len(te),
                            n_in - len(tr) - len(au) - len(te), ep1, ep2)


# --------------------------------------------------------------------------
# embeddings and report writers


def instance_embeddings(checkpoint, instances) -> np.ndarray:
    """Mean-pooled encoder representation per instance (rows follow the input)."""
    from .gnn import GraphBatch, encode
    from .nn import autograd as ag

    model = checkpoint.model()
    out = []
    with ag.no_grad():
        for inst in instances:
            h_v, h_w = encode(model.encoder, GraphBatch([to_bipartite(inst)]))
            out.append(np.concatenate([h_v.data, h_w.data], axis=0).mean(axis=0))
    return np.array(out).reshape(len(out), -1)


def stats_csv(names, stats) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cols = STAT_NAMES + EXTENDED_NAMES
    w.writerow(("instance",) + cols)
    for nm, s in zip(names, stats):
        w.writerow((nm,) + tuple(repr(getattr(s, k)) for k in cols))
    return buf.getvalue()


def similarity_csv(rep: SimilarityReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("statistic", "js", "score"))
    for k, d, s in zip(rep.names, rep.divergences, rep.scores):
        w.writerow((k, repr(d), repr(s)))
    w.writerow(("mean", "", repr(rep.score)))
    return buf.getvalue()


def to_json(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True, default=float)


def timed(fn, *args, **kw):
    t = time.perf_counter()
    out = fn(*args, **kw)
    return out, time.perf_counter() - t
