"""Bipartite message-passing network shared by the encoder and the decoder.

Layout per layer: constraint half-convolution, variable half-convolution
(seeing the fresh constraint states), one GraphNorm per side, then on masked
graphs the special update of the masked vertex and the variables. A
concatenation Jumping Knowledge MLP maps all layer states to the output.
"""

from __future__ import annotations


import numpy as np

from .milp import N_VAR_FEATURES, BipartiteGraph
from .nn import autograd as ag
from .nn.autograd import Segments
from .nn.layers import GraphNormParams, MlpParams, ParamStore, graph_norm, mlp_apply, mlp_apply_split

HIDDEN = 16
DEPTH = 6


class GraphBatch:
    """Disjoint union of bipartite graphs (all masked or all unmasked).

    Accepts :class:`BipartiteGraph` items or masked items exposing ``graph``
    and ``masked_index``.
    """

    def __init__(self, items):
        items = list(items)
        if not items:
            raise ValueError("empty batch")
        masked = [getattr(it, "masked_index", None) is not None for it in items]
        if any(masked) and not all(masked):
            raise ValueError("batch mixes masked and unmasked graphs")
        self.masked = all(masked)
        graphs = [it.graph if self.masked else it for it in items]
        self.num_graphs = len(graphs)
        self.m_sizes = np.array([g.m for g in graphs], dtype=np.int64)
        self.n_sizes = np.array([g.n for g in graphs], dtype=np.int64)
        self.v_offset = np.concatenate([[0], np.cumsum(self.m_sizes)[:-1]])
        self.w_offset = np.concatenate([[0], np.cumsum(self.n_sizes)[:-1]])
        self.M = int(self.m_sizes.sum())
        self.N = int(self.n_sizes.sum())
        self.v_feat = np.concatenate([g.V for g in graphs], axis=0)
        self.w_feat = np.concatenate([g.W for g in graphs], axis=0)
        self.e_feat = np.concatenate([g.E for g in graphs], axis=0)
        self.edge_v = np.concatenate([g.edge_index[0] + o for g, o in zip(graphs, self.v_offset)])
        self.edge_w = np.concatenate([g.edge_index[1] + o for g, o in zip(graphs, self.w_offset)])
        self.v_graph = np.repeat(np.arange(self.num_graphs), self.m_sizes)
        self.w_graph = np.repeat(np.arange(self.num_graphs), self.n_sizes)
        self.v_edges = Segments(self.edge_v, self.M)
        self.w_edges = Segments(self.edge_w, self.N)
        self.v_groups = Segments(self.v_graph, self.num_graphs)
        self.w_groups = Segments(self.w_graph, self.num_graphs)
        if self.masked:
            local = np.array([it.masked_index for it in items], dtype=np.int64)
            if np.any(local < 0) or np.any(local >= self.m_sizes):
                raise ValueError("masked index out of range")
            self.masked_global = local + self.v_offset
        else:
            self.masked_global = None

    def split_v(self, arr):
        return np.split(arr, np.cumsum(self.m_sizes)[:-1])

    def split_w(self, arr):
        return np.split(arr, np.cumsum(self.n_sizes)[:-1])


class LayerParams:
    def __init__(self, store, prefix, hidden, rng, masked):
        h = hidden
        self.msg_v = MlpParams(store, f"{prefix}.msg_v", (3 * h, h, h), rng)
        self.upd_v = MlpParams(store, f"{prefix}.upd_v", (2 * h, h, h), rng)
        self.msg_w = MlpParams(store, f"{prefix}.msg_w", (3 * h, h, h), rng)
        self.upd_w = MlpParams(store, f"{prefix}.upd_w", (2 * h, h, h), rng)
        self.norm_v = GraphNormParams(store, f"{prefix}.norm_v", h)
        self.norm_w = GraphNormParams(store, f"{prefix}.norm_w", h)
        if masked:
            self.mask_v = MlpParams(store, f"{prefix}.mask_v", (2 * h, h, h), rng)
            # variable side also reads the virtual-edge embedding
            self.mask_w = MlpParams(store, f"{prefix}.mask_w", (3 * h, h, h), rng)


class GnnParams:
    def __init__(self, store: ParamStore, prefix: str, rng, hidden=HIDDEN, depth=DEPTH,
                 masked=False):
        if hidden < 1 or depth < 0:
            raise ValueError("hidden must be >= 1 and depth >= 0")
        self.hidden, self.depth, self.masked = hidden, depth, masked
        h = hidden
        self.emb_v = MlpParams(store, f"{prefix}.emb_v", (1, h, h), rng)
        self.emb_w = MlpParams(store, f"{prefix}.emb_w", (N_VAR_FEATURES, h, h), rng)
        self.emb_e = MlpParams(store, f"{prefix}.emb_e", (1, h, h), rng)
        self.layers = [LayerParams(store, f"{prefix}.layer{k}", h, rng, masked) for k in range(depth)]
        self.jk_v = MlpParams(store, f"{prefix}.jk_v", ((depth + 1) * h, h, h), rng)
        self.jk_w = MlpParams(store, f"{prefix}.jk_w", ((depth + 1) * h, h, h), rng)
        if masked:
            self.h_mask = store.new(f"{prefix}.h_mask", rng.normal(0.0, 1.0, size=(1, h)))
            self.h_virtual = store.new(f"{prefix}.h_virtual", rng.normal(0.0, 1.0, size=(1, h)))


def _broadcast_row(row, count):
    return ag.gather(row, np.zeros(count, dtype=np.int64))


def initial_embed(params: GnnParams, batch: GraphBatch):
    h_v = mlp_apply(params.emb_v, batch.v_feat)
    h_w = mlp_apply(params.emb_w, batch.w_feat)
    h_e = mlp_apply(params.emb_e, batch.e_feat)
    if batch.masked:
        if not params.masked:
            raise ValueError("masked batch needs mask-aware parameters")
        h_v = ag.replace_rows(h_v, batch.masked_global,
                              _broadcast_row(params.h_mask, batch.num_graphs))
    return h_v, h_w, h_e


def half_conv_layer(layer: LayerParams, batch: GraphBatch, h_v, h_w, h_e):
    """Two interleaved half-convolutions followed by the two GraphNorms."""
    ev, ew = batch.edge_v, batch.edge_w
    msg = mlp_apply_split(layer.msg_v, [(h_v, ev), (h_e, None), (h_w, ew)])
    new_v = mlp_apply_split(layer.upd_v, [(h_v, None), (ag.segment_sum(msg, batch.v_edges), None)])
    msg = mlp_apply_split(layer.msg_w, [(new_v, ev), (h_e, None), (h_w, ew)])
    new_w = mlp_apply_split(layer.upd_w, [(h_w, None), (ag.segment_sum(msg, batch.w_edges), None)])
    new_v = graph_norm(new_v, batch.v_groups, layer.norm_v)
    new_w = graph_norm(new_w, batch.w_groups, layer.norm_w)
    return new_v, new_w


def masked_update(layer: LayerParams, params: GnnParams, batch: GraphBatch, h_v_prev, h_v, h_w):
    """The masked vertex reads the mean of all variable states; every variable
    then reads the masked vertex through its virtual edge."""
    if not batch.masked:
        raise ValueError("masked_update called on an unmasked batch")
    idx = batch.masked_global
    mean_w = ag.segment_mean(h_w, batch.w_groups)
    h_mask_new = mlp_apply(layer.mask_v, ag.concat([ag.gather(h_v_prev, idx), mean_w]))
    h_v = ag.replace_rows(h_v, idx, h_mask_new)
    h_w = mlp_apply_split(layer.mask_w, [(h_w, None), (h_mask_new, batch.w_graph),
                                         (params.h_virtual, np.zeros(batch.N, dtype=np.int64))])
    return h_v, h_w


def jumping_knowledge(params: GnnParams, states_v, states_w):
    return (mlp_apply(params.jk_v, ag.concat(states_v)),
            mlp_apply(params.jk_w, ag.concat(states_w)))


def encode(params: GnnParams, batch: GraphBatch):
    """Node representations ``(h_v, h_w)`` of shapes (M, hidden) and (N, hidden)."""
    h_v, h_w, h_e = initial_embed(params, batch)
    states_v, states_w = [h_v], [h_w]
    for layer in params.layers:
        new_v, new_w = half_conv_layer(layer, batch, h_v, h_w, h_e)
        if batch.masked:
            new_v, new_w = masked_update(layer, params, batch, h_v, new_v, new_w)
        h_v, h_w = new_v, new_w
        states_v.append(h_v)
        states_w.append(h_w)
    return jumping_knowledge(params, states_v, states_w)


def encode_graph(params: GnnParams, graph: BipartiteGraph):
    return encode(params, GraphBatch([graph]))
