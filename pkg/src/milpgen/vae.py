"""Masking, latent encoding, the four decoder heads and the training loss.

A training pair is an instance graph G and a copy with one constraint
vertex masked. The encoder reads G and emits a Gaussian posterior per vertex;
the decoder reads the masked copy and, together with the latents, predicts
the removed row in four steps: bias, degree, which variables connect, and
their coefficients.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .gnn import DEPTH, HIDDEN, GnnParams, GraphBatch, encode
from .milp import BipartiteGraph, NormBounds
from .nn import autograd as ag
from .nn.layers import MlpParams, ParamStore, bce, mlp_apply, mse, reparameterize

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class MaskedGraph:
    """``graph`` has the masked row's edges removed and its bias zeroed; the
    removed row is kept as supervision."""

    graph: BipartiteGraph
    masked_index: int
    bias: float
    cols: np.ndarray
    vals: np.ndarray

    @property
    def degree(self) -> int:
        return int(self.cols.size)

    @property
    def virtual_edges(self) -> np.ndarray:
        """(masked vertex, variable) pairs: one virtual edge per variable."""
        n = self.graph.n
        return np.vstack([np.full(n, self.masked_index), np.arange(n)])

    def restore(self) -> BipartiteGraph:
        return replace_constraint(self.graph, self.masked_index, self.bias, self.cols, self.vals)


def mask_constraint(graph: BipartiteGraph, index: int) -> MaskedGraph:
    index = int(index)
    if not 0 <= index < graph.m:
        raise IndexError(f"constraint index {index} outside [0, {graph.m})")
    ci, vi = graph.edge_index
    hit = ci == index
    keep = ~hit
    V = graph.V.copy()
    bias = float(V[index, 0])
    V[index, 0] = 0.0
    stripped = BipartiteGraph(V=V, W=graph.W, edge_index=graph.edge_index[:, keep],
                              E=graph.E[keep], name=graph.name)
    order = np.argsort(vi[hit], kind="stable")
    return MaskedGraph(stripped, index, bias, vi[hit][order].copy(), graph.E[hit, 0][order].copy())


def replace_constraint(graph: BipartiteGraph, index: int, bias: float, cols, vals) -> BipartiteGraph:
    """Graph with row ``index`` given the new bias and edges; edges stay row-sorted."""
    cols = np.asarray(cols, dtype=np.int64)
    vals = np.asarray(vals, dtype=np.float64)
    ci, vi = graph.edge_index
    keep = ci != index
    rows = np.concatenate([ci[keep], np.full(cols.size, index)])
    colz = np.concatenate([vi[keep], cols])
    ev = np.concatenate([graph.E[keep, 0], vals])
    order = np.lexsort((colz, rows))
    V = graph.V.copy()
    V[index, 0] = bias
    return BipartiteGraph(V=V, W=graph.W, edge_index=np.vstack([rows[order], colz[order]]),
                          E=ev[order], name=graph.name)


# --------------------------------------------------------------------------
# model


HEAD_NAMES = ("bias", "degree", "logits", "weights")


class VaeModel:
    """Encoder (GNN + mean / log-variance heads) and decoder (masked GNN + four heads)."""

    def __init__(self, rng, hidden=HIDDEN, depth=DEPTH):
        self.hidden, self.depth = hidden, depth
        self.store = ParamStore()
        h = hidden
        self.encoder = GnnParams(self.store, "enc", rng, hidden, depth, masked=False)
        self.mu_head = MlpParams(self.store, "enc.mu", (h, h, h), rng)
        self.logvar_head = MlpParams(self.store, "enc.logvar", (h, h, h), rng)
        self.decoder = GnnParams(self.store, "dec", rng, hidden, depth, masked=True)
        self.heads = {k: MlpParams(self.store, f"dec.head_{k}", (2 * h, h, 1), rng) for k in HEAD_NAMES}


@dataclass
class LatentSet:
    mu_v: object
    logvar_v: object
    z_v: object
    mu_w: object
    logvar_w: object
    z_w: object


def encode_latents(model: VaeModel, batch: GraphBatch, rng=None, sample=True) -> LatentSet:
    """Posterior per vertex of the (unmasked) batch; ``sample=False`` returns z = mu."""
    if batch.masked:
        raise ValueError("the encoder reads unmasked graphs")
    h_v, h_w = encode(model.encoder, batch)
    mu_v, lv_v = mlp_apply(model.mu_head, h_v), mlp_apply(model.logvar_head, h_v)
    mu_w, lv_w = mlp_apply(model.mu_head, h_w), mlp_apply(model.logvar_head, h_w)
    if sample:
        z_v = reparameterize(mu_v, lv_v, rng)
        z_w = reparameterize(mu_w, lv_w, rng)
    else:
        z_v, z_w = mu_v, mu_w
    return LatentSet(mu_v, lv_v, z_v, mu_w, lv_w, z_w)


def head_prob(model: VaeModel, name: str, h, z):
    return ag.sigmoid(mlp_apply(model.heads[name], ag.concat([h, z])))


# normalization helpers ------------------------------------------------------

def normalize(x, lo, hi):
    return (np.asarray(x, dtype=np.float64) - lo) / (hi - lo)


def denorm_bias(p: float, bounds: NormBounds) -> float:
    if bounds.b_degenerate:
        return float(bounds.b_min)
    return float(bounds.b_min + (bounds.b_max - bounds.b_min) * p)


def denorm_degree(p: float, bounds: NormBounds, n: int) -> int:
    if bounds.d_degenerate:
        d = bounds.d_min
    else:
        d = math.floor(bounds.d_min + (bounds.d_max - bounds.d_min) * p + 0.5)
    return int(min(max(d, 1), n))


def denorm_weights(p, bounds: NormBounds) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if bounds.e_degenerate:
        return np.full(p.shape, float(bounds.e_min))
    out = bounds.e_min + (bounds.e_max - bounds.e_min) * p
    # an exactly-zero coefficient would delete the edge
    return np.where(out == 0.0, np.nextafter(0.0, 1.0), out)


def top_k(logits, k: int) -> np.ndarray:
    """Indices of the ``k`` largest logits, ties to the lowest index, sorted."""
    order = np.argsort(-np.asarray(logits, dtype=np.float64), kind="stable")
    return np.sort(order[:k])


# --------------------------------------------------------------------------
# loss


@dataclass
class LossBreakdown:
    bias: float
    degree: float
    logits: float
    weights: float
    rec: float
    prior: float
    beta: float
    total: float
    total_tensor: object = None

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in
                ("bias", "degree", "logits", "weights", "rec", "prior", "beta", "total")}


class NonFiniteLossError(FloatingPointError):
    def __init__(self, term: str, value):
        super().__init__(f"non-finite loss term {term!r}: {value}")
        self.term = term


def _value(x) -> float:
    return float(x.data) if isinstance(x, ag.Tensor) else float(x)


def total_loss(l_bias, l_degree, l_logits, l_weights, l_prior, beta) -> LossBreakdown:
    """total = L1 + L2 + L3 + L4 + beta * L_prior (all reconstruction weights 1)."""
    named = {"bias": l_bias, "degree": l_degree, "logits": l_logits, "weights": l_weights,
             "prior": l_prior}
    for k, v in named.items():
        if not math.isfinite(_value(v)):
            raise NonFiniteLossError(k, _value(v))
    rec = ag.add(ag.add(l_bias, l_degree), ag.add(l_logits, l_weights))
    tot = ag.add(rec, ag.mul(l_prior, float(beta)))
    return LossBreakdown(_value(l_bias), _value(l_degree), _value(l_logits), _value(l_weights),
                         _value(rec), _value(l_prior), float(beta), _value(tot), tot)


def sample_negatives(n: int, positives, rng) -> np.ndarray:
    """One negative per positive, uniform without replacement from the rest."""
    pos = np.asarray(positives, dtype=np.int64)
    pool = np.setdiff1d(np.arange(n), pos)
    k = min(pos.size, pool.size)
    if k < pos.size:
        logger.warning("only %d negatives available for %d positives", pool.size, pos.size)
    if k == 0:
        return np.zeros(0, dtype=np.int64)
    return np.sort(rng.choice(pool, k, replace=False))


def batch_loss(model: VaeModel, graphs, pairs, bounds: NormBounds, beta: float, rng,
               sample_latents=True) -> LossBreakdown:
    """Mean loss over ``pairs`` = [(graph position, masked constraint index)].

    The encoder runs once per distinct graph; each pair draws its own latents.
    """
    enc_batch = GraphBatch(graphs)
    masked = [mask_constraint(graphs[g], i) for g, i in pairs]
    dec_batch = GraphBatch(masked)
    P = len(pairs)
    gidx = np.array([g for g, _ in pairs], dtype=np.int64)

    h_v, h_w = encode(model.encoder, enc_batch)
    mu_v, lv_v = mlp_apply(model.mu_head, h_v), mlp_apply(model.logvar_head, h_v)
    mu_w, lv_w = mlp_apply(model.mu_head, h_w), mlp_apply(model.logvar_head, h_w)

    # KL per graph, weighted by how many pairs use it
    uses = np.bincount(gidx, minlength=len(graphs)) / P
    kl_v = ag.mul(ag.sub(ag.sub(ag.add(ag.square(mu_v), ag.exp(lv_v)), 1.0), lv_v),
                  uses[enc_batch.v_graph][:, None])
    kl_w = ag.mul(ag.sub(ag.sub(ag.add(ag.square(mu_w), ag.exp(lv_w)), 1.0), lv_w),
                  uses[enc_batch.w_graph][:, None])
    l_prior = ag.mul(ag.add(ag.sum(kl_v), ag.sum(kl_w)), 0.5)

    v_rows = np.concatenate([enc_batch.v_offset[g] + np.arange(enc_batch.m_sizes[g]) for g in gidx])
    w_rows = np.concatenate([enc_batch.w_offset[g] + np.arange(enc_batch.n_sizes[g]) for g in gidx])
    if sample_latents:
        z_v = reparameterize(ag.gather(mu_v, v_rows), ag.gather(lv_v, v_rows), rng)
        z_w = reparameterize(ag.gather(mu_w, w_rows), ag.gather(lv_w, w_rows), rng)
    else:
        z_v, z_w = ag.gather(mu_v, v_rows), ag.gather(mu_w, w_rows)

    d_v, d_w = encode(model.decoder, dec_batch)
    mg = dec_batch.masked_global
    h_mask, z_mask = ag.gather(d_v, mg), ag.gather(z_v, mg)

    zero = ag.Tensor(0.0)
    if bounds.b_degenerate:
        l_bias = zero
    else:
        t = normalize([mk.bias for mk in masked], bounds.b_min, bounds.b_max)[:, None]
        l_bias = mse(head_prob(model, "bias", h_mask, z_mask), t)
    if bounds.d_degenerate:
        l_deg = zero
    else:
        t = normalize([mk.degree for mk in masked], bounds.d_min, bounds.d_max)[:, None]
        l_deg = mse(head_prob(model, "degree", h_mask, z_mask), t)

    rows, targets, weights = [], [], []
    e_rows, e_targets, e_weights = [], [], []
    for p, mk in enumerate(masked):
        off = dec_batch.w_offset[p]
        n = dec_batch.n_sizes[p]
        pos = mk.cols
        if pos.size == 0:
            continue
        neg = sample_negatives(n, pos, rng)
        rows += [off + pos, off + neg]
        targets += [np.ones(pos.size), np.zeros(neg.size)]
        weights += [np.full(pos.size, 1.0 / (P * pos.size)),
                    np.full(neg.size, 1.0 / (P * max(neg.size, 1)))]
        e_rows.append(off + pos)
        e_targets.append(mk.vals)
        e_weights.append(np.full(pos.size, 1.0 / (P * pos.size)))
    if rows:
        r = np.concatenate(rows)
        prob = head_prob(model, "logits", ag.gather(d_w, r), ag.gather(z_w, r))
        l_logits = bce(prob, np.concatenate(targets)[:, None], np.concatenate(weights)[:, None])
    else:
        l_logits = zero
    if bounds.e_degenerate or not e_rows:
        l_weights = zero
    else:
        r = np.concatenate(e_rows)
        t = normalize(np.concatenate(e_targets), bounds.e_min, bounds.e_max)[:, None]
        prob = head_prob(model, "weights", ag.gather(d_w, r), ag.gather(z_w, r))
        l_weights = mse(prob, t, np.concatenate(e_weights)[:, None])
    return total_loss(l_bias, l_deg, l_logits, l_weights, l_prior, beta)


# --------------------------------------------------------------------------
# inference


@dataclass
class NewConstraint:
    bias: float
    cols: np.ndarray
    vals: np.ndarray
    bias_norm: float = math.nan
    degree_norm: float = math.nan
    logits: np.ndarray | None = None


def decode_batch(model: VaeModel, masked_graphs, z_v, z_w, bounds: NormBounds) -> list:
    """Decode one replacement row per masked graph, heads in order bias,
    degree, logits, weights. ``z_v``/``z_w`` are stacked latents in batch order."""
    with ag.no_grad():
        batch = GraphBatch(masked_graphs)
        d_v, d_w = encode(model.decoder, batch)
        z_v, z_w = ag.as_tensor(z_v), ag.as_tensor(z_w)
        mg = batch.masked_global
        hm, zm = ag.gather(d_v, mg), ag.gather(z_v, mg)
        pb = head_prob(model, "bias", hm, zm).data[:, 0]
        pd = head_prob(model, "degree", hm, zm).data[:, 0]
        pl = head_prob(model, "logits", d_w, z_w).data[:, 0]
        pw = head_prob(model, "weights", d_w, z_w).data[:, 0]
    out = []
    for p, mk in enumerate(masked_graphs):
        n = int(batch.n_sizes[p])
        sl = slice(batch.w_offset[p], batch.w_offset[p] + n)
        d = denorm_degree(pd[p], bounds, n)
        cols = top_k(pl[sl], d)
        vals = denorm_weights(pw[sl][cols], bounds)
        out.append(NewConstraint(denorm_bias(pb[p], bounds), cols, vals, pb[p], pd[p], pl[sl].copy()))
    return out


def decode_new_constraint(model: VaeModel, masked: MaskedGraph, z_v, z_w, bounds: NormBounds) -> NewConstraint:
    return decode_batch(model, [masked], z_v, z_w, bounds)[0]


def reconstruction_metrics(model: VaeModel, graphs, bounds: NormBounds, masks_per_graph=None,
                           rng=None) -> dict:
    """Reconstruct masked rows from posterior-mean latents.

    Returns degree exact-match rate, normalized-bias MAE, top-k recall of the
    connected variables and normalized-coefficient MAE on recovered edges.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    exact, bias_err, recall, w_err = [], [], [], []
    for g in graphs:
        if masks_per_graph is None or masks_per_graph >= g.m:
            idx = np.arange(g.m)
        else:
            idx = np.sort(rng.choice(g.m, masks_per_graph, replace=False))
        with ag.no_grad():
            lat = encode_latents(model, GraphBatch([g]), sample=False)
        masked = [mask_constraint(g, i) for i in idx]
        z_v = np.tile(lat.z_v.data, (len(idx), 1))
        z_w = np.tile(lat.z_w.data, (len(idx), 1))
        preds = decode_batch(model, masked, z_v, z_w, bounds)
        for mk, pr in zip(masked, preds):
            exact.append(pr.cols.size == mk.degree)
            if bounds.b_degenerate:
                bias_err.append(0.0 if mk.bias == bounds.b_min else abs(mk.bias - bounds.b_min))
            else:
                bias_err.append(abs(pr.bias_norm - normalize(mk.bias, bounds.b_min, bounds.b_max)))
            hit = np.intersect1d(pr.cols, mk.cols)
            recall.append(hit.size / max(mk.degree, 1))
            if hit.size:
                truth = mk.vals[np.searchsorted(mk.cols, hit)]
                pred = pr.vals[np.searchsorted(pr.cols, hit)]
                if bounds.e_degenerate:
                    w_err.append(float(np.mean(np.abs(truth - pred))))
                else:
                    w_err.append(float(np.mean(np.abs(normalize(truth, bounds.e_min, bounds.e_max)
                                                      - normalize(pred, bounds.e_min, bounds.e_max)))))
    return {"degree_exact": float(np.mean(exact)), "bias_mae": float(np.mean(bias_err)),
            "logits_recall": float(np.mean(recall)),
            "weights_mae": float(np.mean(w_err)) if w_err else 0.0, "count": len(exact)}
