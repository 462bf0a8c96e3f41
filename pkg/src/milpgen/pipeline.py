"""Training loop, generation loop, schedules, checkpoints and baselines."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .generators import derive_seed
from .milp import MilpInstance, NormBounds, dataset_norm_bounds, from_bipartite, to_bipartite
from .nn.optim import Adam
from .nn.serialize import dump_tensors, load_tensors
from .vae import VaeModel, batch_loss, decode_new_constraint, mask_constraint, replace_constraint, top_k

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "milpgen-checkpoint"
CHECKPOINT_VERSION = 1
ORDER_POLICIES = ("uniform", "index-ascending", "index-descending")
SELECTION_CRITERIA = ("similarity", "hardness", "final")


@dataclass(frozen=True)
class BetaSchedule:
    """``constant`` returns ``target``; ``sigmoid`` returns
    target * sigmoid(steepness * (step - midpoint)). Midpoint and steepness
    default to N/4 and 10/N for an N-step run."""

    kind: str = "constant"
    target: float = 0.00045
    midpoint: float | None = None
    steepness: float | None = None

    def __post_init__(self):
        if self.kind not in ("constant", "sigmoid"):
            raise ValueError(f"unknown beta schedule {self.kind!r}")
        if self.target < 0:
            raise ValueError("beta target must be non-negative")


def beta_at(step: int, schedule: BetaSchedule, total_steps: int = 20000) -> float:
    if step < 0:
        raise ValueError("step must be >= 0")
    if schedule.kind == "constant":
        return float(schedule.target)
    mid = schedule.midpoint if schedule.midpoint is not None else total_steps / 4
    k = schedule.steepness if schedule.steepness is not None else 10.0 / total_steps
    x = k * (step - mid)
    if x >= 0:
        s = 1.0 / (1.0 + math.exp(-x))
    else:
        e = math.exp(x)
        s = e / (1.0 + e)
    return float(schedule.target * s)


def lr_at(step: int, base_lr: float, total_steps: int, final_ratio: float = 0.1) -> float:
    """Exponential decay from ``base_lr`` to ``final_ratio * base_lr`` over the run."""
    return float(base_lr * final_ratio ** (step / total_steps))


@dataclass
class TrainConfig:
    steps: int = 20000
    graphs_per_batch: int = 15
    masks_per_graph: int = 2
    lr: float = 0.001
    lr_final_ratio: float = 0.1
    beta: BetaSchedule = field(default_factory=BetaSchedule)
    eval_interval: int = 0
    selection: str = "similarity"
    eval_eta: float = 0.05
    eval_count: int = 20
    hidden: int = 16
    depth: int = 6
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.beta, dict):
            self.beta = BetaSchedule(**self.beta)
        if self.steps < 1 or self.graphs_per_batch < 1 or self.masks_per_graph < 1:
            raise ValueError("steps and batch sizes must be >= 1")
        if self.selection not in SELECTION_CRITERIA:
            raise ValueError(f"selection must be one of {SELECTION_CRITERIA}")
        if self.lr <= 0 or not 0 < self.lr_final_ratio <= 1:
            raise ValueError("lr must be positive and lr_final_ratio in (0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


@dataclass
class GenConfig:
    eta: float = 0.01
    count: int = 1
    seed: int = 0
    order: str = "uniform"

    def __post_init__(self):
        if not 0 < self.eta <= 1:
            raise ValueError("eta must lie in (0, 1]")
        if self.order not in ORDER_POLICIES:
            raise ValueError(f"order must be one of {ORDER_POLICIES}")
        if self.count < 0:
            raise ValueError("count must be >= 0")


def n_iterations(eta: float, m: int) -> int:
    """max(1, floor(eta * m)); the 1e-9 slack absorbs binary rounding of eta."""
    return max(1, math.floor(eta * m + 1e-9))


# --------------------------------------------------------------------------
# checkpoints


@dataclass
class Checkpoint:
    params: dict
    bounds: NormBounds
    config: TrainConfig
    step: int
    version: int = CHECKPOINT_VERSION
    history: list = field(default_factory=list)

    def model(self) -> VaeModel:
        m = VaeModel(np.random.default_rng(0), self.config.hidden, self.config.depth)
        m.store.load_arrays(self.params)
        return m

    def to_bytes(self) -> bytes:
        meta = {"format": CHECKPOINT_FORMAT, "version": self.version, "step": self.step,
                "bounds": self.bounds.to_dict(), "config": self.config.to_dict(),
                "history": self.history}
        return dump_tensors(self.params, meta)

    @classmethod
    def from_bytes(cls, blob: bytes) -> "Checkpoint":
        tensors, meta = load_tensors(blob)
        if meta.get("format") != CHECKPOINT_FORMAT:
            raise ValueError("not a milpgen checkpoint")
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta.get('version')}")
        return cls(tensors, NormBounds.from_dict(meta["bounds"]),
                   TrainConfig.from_dict(meta["config"]), int(meta["step"]),
                   int(meta["version"]), list(meta.get("history", [])))

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "Checkpoint":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


# --------------------------------------------------------------------------
# training


def _snapshot(model: VaeModel) -> dict:
    return {k: t.data.copy() for k, t in model.store.items()}


def train(dataset, cfg: TrainConfig, log=None, eval_fn=None) -> Checkpoint:
    """Train on ``dataset`` (standardized instances).

    ``log`` is an optional writable text stream receiving one JSON record per
    step. ``eval_fn(checkpoint) -> float`` overrides the periodic selection
    score (higher is better); by default the score comes from ``cfg.selection``.
    """
    dataset = list(dataset)
    if not dataset:
        raise ValueError("training set is empty")
    bounds = dataset_norm_bounds(dataset)
    graphs = [to_bipartite(x) for x in dataset]
    model = VaeModel(np.random.default_rng(derive_seed(cfg.seed, 0)), cfg.hidden, cfg.depth)
    rng = np.random.default_rng(derive_seed(cfg.seed, 1))
    opt = Adam(model.store)
    k = min(cfg.graphs_per_batch, len(graphs))
    history = []
    best_score, best_params, best_step = -math.inf, None, None
    if eval_fn is None and cfg.eval_interval > 0 and cfg.selection != "final":
        eval_fn = _default_eval(dataset, cfg)

    for step in range(cfg.steps):
        chosen = np.sort(rng.choice(len(graphs), k, replace=False))
        batch_graphs = [graphs[g] for g in chosen]
        pairs = [(p, int(rng.integers(batch_graphs[p].m)))
                 for p in range(k) for _ in range(cfg.masks_per_graph)]
        beta = beta_at(step, cfg.beta, cfg.steps)
        lr = lr_at(step, cfg.lr, cfg.steps, cfg.lr_final_ratio)
        model.store.zero_grad()
        lb = batch_loss(model, batch_graphs, pairs, bounds, beta, rng)
        lb.total_tensor.backward()
        opt.step(lr)
        if log is not None:
            rec = {"step": step, **lb.as_dict(), "lr": lr}
            log.write(json.dumps(rec, sort_keys=True) + "\n")
        done = step + 1
        if eval_fn is not None and (done % cfg.eval_interval == 0 or done == cfg.steps):
            ck = Checkpoint(_snapshot(model), bounds, cfg, done)
            score = float(eval_fn(ck))
            history.append({"step": done, "score": score})
            logger.info("step %d selection score %.4f", done, score)
            if score > best_score:
                best_score, best_params, best_step = score, ck.params, done

    if best_params is None:
        return Checkpoint(_snapshot(model), bounds, cfg, cfg.steps, history=history)
    return Checkpoint(best_params, bounds, cfg, best_step, history=history)


def _default_eval(dataset, cfg: TrainConfig):
    from .benchmark import hardness_report, similarity_score

    ref = dataset[: max(cfg.eval_count, 1)]

    def evaluate(ck: Checkpoint) -> float:
        gen = generate_many(ck, dataset, GenConfig(cfg.eval_eta, cfg.eval_count,
                                                   derive_seed(cfg.seed, 2)))
        if cfg.selection == "similarity":
            return similarity_score(dataset, gen).score
        rep = hardness_report(gen, ref)
        if rep.unusable:
            return -math.inf
        return -(rep.time_rel_error + rep.nodes_rel_error) / 2
    return evaluate


# --------------------------------------------------------------------------
# generation


def _pick_index(t: int, m: int, order: str, rng) -> int:
    if order == "uniform":
        return int(rng.integers(m))
    if order == "index-ascending":
        return t % m
    return m - 1 - (t % m)


def _as_model(ck):
    if isinstance(ck, Checkpoint):
        return ck.model(), ck.bounds
    return ck


def generate(checkpoint, source: MilpInstance, gen_cfg: GenConfig, rng, trace=None) -> MilpInstance:
    """Replace ``n_iterations(eta, m)`` constraints of ``source`` one at a time.

    Latents for every vertex are drawn from N(0, I) afresh each iteration.
    ``trace`` (a list) receives the edited constraint index per iteration.
    """
    model, bounds = _as_model(checkpoint)
    graph = to_bipartite(source)
    m, n, h = graph.m, graph.n, model.hidden
    if m == 0:
        raise ValueError("source instance has no constraints")
    for t in range(n_iterations(gen_cfg.eta, m)):
        idx = _pick_index(t, m, gen_cfg.order, rng)
        z_v = rng.standard_normal((m, h))
        z_w = rng.standard_normal((n, h))
        masked = mask_constraint(graph, idx)
        new = decode_new_constraint(model, masked, z_v, z_w, bounds)
        graph = replace_constraint(graph, idx, new.bias, new.cols, new.vals)
        if trace is not None:
            trace.append(idx)
    return from_bipartite(graph)


def _generate_one(args):
    kind, payload, sources, gen_cfg, i = args
    rng = np.random.default_rng(derive_seed(gen_cfg.seed, i))
    src = sources[int(rng.integers(len(sources)))]
    if kind == "model":
        out = generate(payload, src, gen_cfg, rng)
    else:
        out = random_baseline(src, gen_cfg, payload, rng)
    return out.replace(name=f"{src.name}_g{i}")


def _run_many(kind, payload, sources, gen_cfg: GenConfig, jobs: int):
    sources = list(sources)
    if not sources:
        raise ValueError("no source instances")
    if kind == "model" and isinstance(payload, Checkpoint):
        payload = (payload.model(), payload.bounds)
    tasks = [(kind, payload, sources, gen_cfg, i) for i in range(gen_cfg.count)]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(jobs) as pool:
            return list(pool.map(_generate_one, tasks))
    return [_generate_one(t) for t in tasks]


def generate_many(checkpoint, sources, gen_cfg: GenConfig, jobs: int = 1) -> list:
    """``gen_cfg.count`` instances; instance ``i`` uses the seed
    derive_seed(gen_cfg.seed, i) both to pick its source and to generate."""
    return _run_many("model", checkpoint, sources, gen_cfg, jobs)


def random_baseline(source: MilpInstance, gen_cfg: GenConfig, bounds: NormBounds, rng) -> MilpInstance:
    """The generation loop with every decoder output replaced by U(0, 1) draws."""
    from .vae import denorm_bias, denorm_degree, denorm_weights

    graph = to_bipartite(source)
    m, n = graph.m, graph.n
    for t in range(n_iterations(gen_cfg.eta, m)):
        idx = _pick_index(t, m, gen_cfg.order, rng)
        b = denorm_bias(rng.random(), bounds)
        d = denorm_degree(rng.random(), bounds, n)
        cols = top_k(rng.random(n), d)
        vals = denorm_weights(rng.random(d), bounds)
        graph = replace_constraint(graph, idx, b, cols, vals)
    return from_bipartite(graph)


def random_baseline_many(sources, gen_cfg: GenConfig, bounds: NormBounds, jobs: int = 1) -> list:
    return _run_many("random", bounds, sources, gen_cfg, jobs)


# --------------------------------------------------------------------------
# statistics-driven baseline (approximation of the cited external method)


@dataclass
class BowlyStats:
    degree_mean: float
    degree_std: float
    density: float
    lhs_mean: float
    lhs_std: float
    rhs_mean: float
    rhs_std: float
    objective_pool: list
    variable_pool: list  # (vtype, lower, upper)

    @classmethod
    def fit(cls, instances) -> "BowlyStats":
        instances = list(instances)
        if not instances:
            raise ValueError("empty training set")
        degs = np.concatenate([x.row_degrees() for x in instances])
        coefs = np.concatenate([x.vals for x in instances])
        rhs = np.concatenate([x.b for x in instances])
        dens = np.mean([x.nnz / (x.m * x.n) for x in instances if x.m and x.n])
        objs = np.concatenate([x.c for x in instances]).tolist()
        pool = sorted({(int(t), float(lo), float(hi)) for x in instances
                       for t, lo, hi in zip(x.vtype, x.lower, x.upper)})
        return cls(float(degs.mean()), float(degs.std()), float(dens),
                   float(coefs.mean()), float(coefs.std()), float(rhs.mean()), float(rhs.std()),
                   objs, [list(p) for p in pool])


def bowly_baseline(stats: BowlyStats, size: tuple, count: int, rng) -> list:
    """Instances built from scratch to match density and coefficient moments."""
    m, n = (int(s) for s in size)
    if m < 1 or n < 1:
        raise ValueError("size must be positive")
    target = int(round(stats.density * m * n))
    if target < m or target > m * n:
        raise ValueError(f"density {stats.density:.4g} infeasible for a {m} x {n} instance")
    out = []
    for k in range(count):
        raw = rng.normal(stats.degree_mean, stats.degree_std, size=m)
        deg = np.clip(raw, 1, n)
        deg = np.clip(np.floor(deg * target / deg.sum() + 0.5), 1, n).astype(np.int64)
        while deg.sum() != target:
            i = int(rng.integers(m))
            if deg.sum() < target and deg[i] < n:
                deg[i] += 1
            elif deg.sum() > target and deg[i] > 1:
                deg[i] -= 1
        rows = np.repeat(np.arange(m), deg)
        cols = np.concatenate([np.sort(rng.choice(n, d, replace=False)) for d in deg])
        vals = rng.normal(stats.lhs_mean, stats.lhs_std, size=rows.size)
        vals[vals == 0.0] = stats.lhs_mean if stats.lhs_mean != 0.0 else 1.0
        b = rng.normal(stats.rhs_mean, stats.rhs_std, size=m)
        c = rng.choice(np.asarray(stats.objective_pool, dtype=float), size=n)
        pick = rng.integers(len(stats.variable_pool), size=n)
        var = np.asarray(stats.variable_pool, dtype=float)[pick]
        out.append(MilpInstance.from_triplets(f"bowly_{k}", c, rows, cols, vals, b, var[:, 1],
                                              var[:, 2], var[:, 0].astype(np.int8)))
    return out


__all__ = [
    "BetaSchedule", "BowlyStats", "Checkpoint", "GenConfig", "TrainConfig", "beta_at",
    "bowly_baseline", "generate", "generate_many", "lr_at", "n_iterations", "random_baseline",
    "random_baseline_many", "train",
]
