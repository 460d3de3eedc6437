"""HGNN-IMA forward pass.

All per-edge quantities are arrays over the canonical edge order (sorted by
target, then source, then edge type) with a trailing head axis, so
``g``, ``alpha``, ``beta`` ... have shape ``[E, H]`` and per-modality stacks
``[E, H, M]``.  Softmaxes "over the neighbours of i" are segment softmaxes
keyed on the edge target.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..data import Dataset, FeatureStore, MmhnGraph, ModalitySchema, complete_missing_features
from ..numerics import Tensor
from ..numerics import ops
from .config import ModelConfig
from .params import SHARED, ParameterSet, init_parameters, parameter_shapes


# --------------------------------------------------------------------------- structure

@dataclass
class Groups:
    """Row partition by type: ``names[t]`` owns rows ``index[t]``."""

    names: list[str]
    index: list[ops.Index]
    inverse: ops.Index | None  # None when a single group covers all rows in order

    @classmethod
    def build(cls, type_of: np.ndarray, type_names, dependent: bool) -> "Groups":
        if not dependent:
            return cls([SHARED], [np.arange(type_of.size)], None)
        names, index = [], []
        for t, tname in enumerate(type_names):
            rows = np.flatnonzero(type_of == t)
            if rows.size:
                names.append(tname)
                index.append(rows)
        order = np.concatenate(index) if index else np.zeros(0, dtype=np.intp)
        if len(index) == 1 and np.array_equal(order, np.arange(type_of.size)):
            return cls(names, [ops.Index(index[0], type_of.size)], None)
        return cls(names, [ops.Index(rows, type_of.size) for rows in index],
                   ops.Index(np.argsort(order, kind="stable"), type_of.size))


@dataclass
class Structure:
    n: int
    src: np.ndarray
    dst: np.ndarray
    etype: np.ndarray
    node_groups: Groups
    edge_groups: Groups
    in_degree: np.ndarray
    edge_missing: np.ndarray  # [E, M] bool, source lacks the modality natively
    src_ix: ops.Index = None
    dst_ix: ops.Index = None
    edge_slots: list[str] = None
    typed_src_ix: ops.Index = None  # row slot * N + src into the stacked per-slot transforms

    @classmethod
    def build(cls, graph: MmhnGraph, presence: np.ndarray, config: ModelConfig) -> "Structure":
        e = graph.canonical_edges
        src, dst, et = e[:, 0].copy(), e[:, 1].copy(), e[:, 2].copy()
        n = graph.node_count
        if config.edge_type_dependent_params:
            used = sorted(set(et.tolist())) or [0]  # edgeless graph: any slot, nothing is gathered
            slots = [graph.edge_type_names[t] for t in used]
            slot_of = np.zeros(len(graph.edge_type_names), dtype=np.intp)
            slot_of[used] = np.arange(len(used))
            typed = slot_of[et] * n + src
        else:
            slots, typed = [SHARED], src
        return cls(
            n=graph.node_count, src=src, dst=dst, etype=et,
            node_groups=Groups.build(graph.node_type_of, graph.node_type_names, config.node_type_dependent_params),
            edge_groups=Groups.build(et, graph.edge_type_names, config.edge_type_dependent_params),
            in_degree=np.bincount(dst, minlength=graph.node_count),
            edge_missing=~presence[src],
            src_ix=ops.Index(src, graph.node_count),
            dst_ix=ops.Index(dst, graph.node_count),
            edge_slots=slots,
            typed_src_ix=ops.Index(typed, max(len(slots), 1) * n),
        )

    @property
    def edge_count(self) -> int:
        return int(self.src.size)


# --------------------------------------------------------------------------- building blocks

def _grouped(x: Tensor, groups: Groups, fn) -> Tensor:
    """Apply ``fn(rows, group_name)`` per group and reassemble in row order."""
    if groups.inverse is None:
        return fn(x, groups.names[0])
    parts = [fn(ops.take(x, idx), name) for name, idx in zip(groups.names, groups.index)]
    return ops.take(ops.concat(parts, axis=0), groups.inverse)


def head_linear(x3: Tensor, params: ParameterSet, role: str, slot: str, nonlinear: bool) -> Tensor:
    """Per-head d_h -> d_h affine map (optionally a tanh two-layer perceptron)."""
    y = ops.add(ops.head_matmul(x3, params[f"{role}.{slot}.weight"]), params[f"{role}.{slot}.bias"])
    if nonlinear:
        y = ops.tanh(y)
        y = ops.add(ops.head_matmul(y, params[f"{role}_mlp.{slot}.weight"]),
                    params[f"{role}_mlp.{slot}.bias"])
    return y


def typed_projection(h: Tensor, params: ParameterSet, role: str, groups: Groups, heads: int,
                     nonlinear: bool = False) -> Tensor:
    """Node-type-dependent map l^role applied to every row of h [N, d] -> [N, H, dh]."""
    n, d = h.shape
    x3 = ops.reshape(h, (n, heads, d // heads))
    return _grouped(x3, groups, lambda rows, slot: head_linear(rows, params, role, slot, nonlinear))


def input_projection(features: list[Tensor], params: ParameterSet, groups: Groups, modality_names,
                     nonlinear: bool = False) -> list[Tensor]:
    """h^(0),m = l^I_{type, m}(x^m) for every modality."""
    out = []
    for m, x in zip(modality_names, features):
        def lin(rows, slot, m=m):
            key = f"input.{slot}.{m}.weight"
            if key not in params:
                raise KeyError(f"no input projection registered for (type {slot!r}, modality {m!r})")
            y = ops.add(ops.matmul(rows, params[key]), params[f"input.{slot}.{m}.bias"])
            if nonlinear:
                y = ops.add(ops.matmul(ops.tanh(y), params[f"input_mlp.{slot}.{m}.weight"]),
                            params[f"input_mlp.{slot}.{m}.bias"])
            return y
        out.append(_grouped(x, groups, lin))
    return out


def edge_transform(x3: Tensor, params: ParameterSet, role: str, st: Structure, suffix: str = "") -> Tensor:
    """Per edge j->i: the source row x_j times ``W^role_{phi(j,i)}``, per head.

    Every node row is transformed by every edge-type matrix, the results are
    stacked, and each edge gathers its (type, source) row.
    """
    per_slot = [ops.head_matmul(x3, params[f"{role}.{slot}{suffix}.weight"]) for slot in st.edge_slots]
    if len(per_slot) == 1:
        return ops.take(per_slot[0], st.typed_src_ix)
    n, H, dh = x3.shape
    stacked = ops.reshape(ops.stack(per_slot, axis=0), (len(per_slot) * n, H, dh))
    return ops.take(stacked, st.typed_src_ix)


def pair_similarity(keys: Tensor, queries: Tensor, st: Structure, params: ParameterSet, role: str,
                    scale: float, suffix: str = "") -> Tensor:
    """Bilinear score l^K(h_j) . W_{phi(j,i)} . l^Q(h_i) for every edge j->i: [E, H]."""
    kw = edge_transform(keys, params, role, st, suffix)
    g = ops.sum(ops.mul(kw, ops.take(queries, st.dst_ix)), axis=-1)
    return ops.mul(g, scale) if scale != 1.0 else g


def neighbor_mean_similarity(keys: Tensor, queries: Tensor, st: Structure, params: ParameterSet, role: str,
                             scale: float, suffix: str = "") -> Tensor:
    """Score against the mean transformed key over N_i; one value per target,
    broadcast back to each of its in-edges."""
    kw = edge_transform(keys, params, role, st, suffix)
    deg = np.maximum(st.in_degree, 1).astype(np.float64)[:, None, None]
    mean_k = ops.div(ops.segment_sum(kw, st.dst_ix, st.n), deg)
    s_node = ops.sum(ops.mul(mean_k, queries), axis=-1)
    if scale != 1.0:
        s_node = ops.mul(s_node, scale)
    return ops.take(s_node, st.dst_ix)


def inter_node_attention(g: Tensor, dst: np.ndarray, n: int) -> Tensor:
    """alpha: softmax of g over the in-edges of each target."""
    return ops.segment_softmax(g, dst, n)


def inter_modal_attention(s_stack: Tensor) -> Tensor:
    """lambda: softmax over the trailing modality axis."""
    return ops.softmax(s_stack, axis=-1)


def combined_attention(alpha_stack: Tensor, lam, dst: np.ndarray, n: int) -> Tensor:
    """beta: softmax over in-edges of sum_m' lambda^m' alpha^m'."""
    return ops.segment_softmax(ops.sum(ops.mul(lam, alpha_stack), axis=-1), dst, n)


def alignment_discrepancy(g_list: list[Tensor]) -> Tensor | None:
    """r = sum over ordered modality pairs of |g^m1 - g^m2|; None for one modality."""
    if len(g_list) < 2:
        return None
    r = None
    for a in range(len(g_list)):
        for b in range(len(g_list)):
            if a == b:
                continue
            term = ops.abs(ops.sub(g_list[a], g_list[b]))
            r = term if r is None else ops.add(r, term)
    return r


def alignment_modulation(beta: Tensor, r: Tensor | None, dst: np.ndarray, n: int, sign: str,
                         shape: tuple[int, ...]) -> tuple[Tensor, Tensor]:
    """(beta_bar, beta_tilde).  With a single modality r is identically 0
    and beta_bar is the uniform distribution over in-edges."""
    if r is None:
        r = Tensor(np.zeros(shape))
    elif sign == "negated":
        r = ops.neg(r)
    beta_bar = ops.segment_softmax(r, dst, n)
    if beta.ndim > beta_bar.ndim:
        beta_bar_b = ops.reshape(beta_bar, beta_bar.shape + (1,))
    else:
        beta_bar_b = beta_bar
    beta_tilde = ops.segment_softmax(ops.mul(beta, beta_bar_b), dst, n)
    return beta_bar, beta_tilde


def aggregate_and_update(h_prev: Tensor, weights: Tensor, st: Structure, params: ParameterSet, heads: int,
                         nonlinear: bool, dropout_rate: float, training: bool,
                         rng: np.random.Generator | None) -> Tensor:
    """h^(k) = l^A(sigmoid(sum_j w_ij l^M(h_j) W^MSG)) [dropout] + h^(k-1)."""
    n, d = h_prev.shape
    msg_src = typed_projection(h_prev, params, "message", st.node_groups, heads, nonlinear)
    msg = edge_transform(msg_src, params, "msg", st)
    w = ops.reshape(weights, weights.shape + (1,))
    agg = ops.segment_sum(ops.mul(msg, w), st.dst_ix, n)  # [N, H, dh]; isolated nodes get 0
    act = ops.sigmoid(agg)
    out = _grouped(act, st.node_groups, lambda rows, slot: head_linear(rows, params, "output", slot, nonlinear))
    out = ops.reshape(out, (n, d))
    out = ops.dropout(out, dropout_rate, training, rng)
    return ops.add(out, h_prev)


def modality_fusion(h_last: list[Tensor], params: ParameterSet) -> tuple[Tensor, Tensor]:
    """omega^m = w2 . tanh(h^m W1) + b2, delta = softmax_m(omega), Z = sum_m delta^m h^m."""
    scores = []
    for h in h_last:
        hid = ops.tanh(ops.matmul(h, params["fusion.hidden.weight"]))
        w2 = ops.reshape(params["fusion.score.weight"], (-1, 1))
        scores.append(ops.add(ops.matmul(hid, w2), params["fusion.score.bias"]))
    delta = ops.softmax(ops.concat(scores, axis=1), axis=1)  # [N, M]
    z = None
    for m, h in enumerate(h_last):
        term = ops.mul(ops.getitem(delta, (slice(None), slice(m, m + 1))), h)
        z = term if z is None else ops.add(z, term)
    return z, delta


def classify(x: Tensor, weight: Tensor) -> Tensor:
    """Logits W . x; probabilities are softmax of these rows."""
    return ops.matmul(x, weight)


def predict(probs: np.ndarray) -> np.ndarray:
    """argmax with lowest-index tie-break (numpy's argmax already does that)."""
    return np.argmax(probs, axis=1)


def cross_entropy(logits: Tensor, ids: np.ndarray, labels: np.ndarray) -> Tensor:
    """Mean negative log-likelihood over ``ids``."""
    logp = ops.log_softmax(ops.take(logits, ids), axis=-1)
    onehot = np.zeros(logp.shape)
    onehot[np.arange(len(ids)), labels] = 1.0
    return ops.neg(ops.mul(ops.sum(ops.mul(logp, onehot)), 1.0 / len(ids)))


def classification_loss(fused_logits: Tensor, modality_logits: list[Tensor], ids, labels,
                        individual: bool = True) -> Tensor:
    ids = np.asarray(ids, dtype=np.intp)
    if ids.size == 0:
        raise ValueError("classification loss needs at least one labeled node")
    loss = cross_entropy(fused_logits, ids, labels)
    if not individual:
        return loss
    for lg in modality_logits:
        loss = ops.add(loss, cross_entropy(lg, ids, labels))
    return ops.mul(loss, 1.0 / (1 + len(modality_logits)))


def attention_loss(lambdas: list[Tensor], edge_missing: np.ndarray, layers: int, n_modalities: int,
                   heads: int, normalize_by_pairs: bool = False) -> Tensor:
    """Sum of lambda mass on modalities the neighbour lacks, divided by K*|M|
    and averaged over heads (and over influenced modalities for +inf)."""
    if not lambdas or not edge_missing.any():
        return Tensor(np.zeros(()))
    total = None
    for lam in lambdas:
        mask = edge_missing[:, None, :].astype(np.float64)
        if lam.ndim == 4:  # [E, H, M_influenced, M]
            mask = mask[:, :, None, :] / lam.shape[2]
        term = ops.sum(ops.mul(lam, mask))
        total = term if total is None else ops.add(total, term)
    denom = layers * n_modalities * heads
    if normalize_by_pairs:
        denom *= max(edge_missing.shape[0], 1)
    return ops.mul(total, 1.0 / denom)


# --------------------------------------------------------------------------- state / results

@dataclass
class LayerState:
    """Cached embeddings and attention tensors of one forward pass."""

    src: np.ndarray
    dst: np.ndarray
    etype: np.ndarray
    modality_names: tuple[str, ...]
    h: list[list[np.ndarray]] = field(default_factory=list)  # [k][m] -> [N, d]
    g: list[np.ndarray] = field(default_factory=list)  # [E, H, M]
    s: list[np.ndarray | None] = field(default_factory=list)
    alpha: list[np.ndarray] = field(default_factory=list)  # [E, H, M]
    lam: list[np.ndarray | None] = field(default_factory=list)  # [E, H, M] or [E, H, M_inf, M]
    beta: list[np.ndarray] = field(default_factory=list)  # [E, H] or [E, H, M_inf]
    beta_bar: list[np.ndarray] = field(default_factory=list)  # [E, H]
    beta_tilde: list[np.ndarray] = field(default_factory=list)  # [E, H] or [E, H, M_inf]

    @property
    def layers(self) -> int:
        return len(self.alpha)


@dataclass
class ForwardResult:
    probs: np.ndarray
    modality_probs: list[np.ndarray]
    logits: Tensor
    modality_logits: list[Tensor]
    loss: Tensor | None
    l_cro: Tensor | None
    l_att: Tensor
    state: LayerState
    z: np.ndarray
    delta: np.ndarray


def _softmax_rows(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - x.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


# --------------------------------------------------------------------------- model

class HgnnIma:
    """The network bound to one graph + schema.

    ``prepare`` completes missing modalities and fixes the modality subset;
    ``forward`` runs K propagation layers, fusion, classification and losses.
    """

    def __init__(self, graph: MmhnGraph, schema: ModalitySchema, config: ModelConfig | None = None):
        self.config = config = config or ModelConfig()
        if config.add_self_loops:
            graph = graph.with_self_loops()
        self.graph = graph
        self.full_schema = schema
        if config.modalities_enabled is not None:
            self.modality_index = [schema.modality_id(m) for m in config.modalities_enabled]
        else:
            self.modality_index = list(range(schema.modality_count))
        self.schema = schema.restricted(self.modality_index) if len(self.modality_index) != schema.modality_count \
            else schema
        self.modality_names = tuple(schema.modality_names[m] for m in self.modality_index)
        self.shapes = parameter_shapes(graph.node_type_names, graph.edge_type_names, self.modality_names,
                                       [schema.input_dim_of_modality[m] for m in self.modality_index],
                                       len(schema.categories), config)
        self._structure: Structure | None = None

    @classmethod
    def for_dataset(cls, dataset: Dataset, config: ModelConfig | None = None) -> "HgnnIma":
        return cls(dataset.graph, dataset.schema, config)

    def init_params(self, seed: int | None = None) -> ParameterSet:
        return init_parameters(self.shapes, self.config.seed if seed is None else seed)

    def prepare(self, store: FeatureStore) -> tuple[list[Tensor], Structure]:
        """Complete missing features from the reference modality, then keep the
        enabled modalities."""
        cfg = self.config
        ref = cfg.reference_modality if cfg.reference_modality is not None else 0
        full = self.full_schema
        if not store.is_complete() or not store.presence.all():
            ref_id = full.modality_id(ref) if isinstance(ref, str) else int(ref)
            lacking = any(ref_id not in full.native_modalities_of_type[o] for o in range(full.node_type_count))
            store = complete_missing_features(store, full, ref_id, zero_fill_unreferenced=lacking)
        store = store.restricted(self.modality_index)
        st = Structure.build(self.graph, store.presence, cfg)
        feats = [Tensor(x) for x in store.features]
        return feats, st

    def forward(self, params: ParameterSet, inputs: tuple[list[Tensor], Structure], mode: str = "eval",
                rng: np.random.Generator | None = None, loss_ids=None, labels=None) -> ForwardResult:
        if mode not in ("train", "eval"):
            raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
        cfg = self.config
        training = mode == "train"
        feats, st = inputs
        M, H, K = len(self.modality_names), cfg.heads, cfg.layers
        E, N = st.edge_count, st.n
        scale = 1.0 / np.sqrt(cfg.head_dim) if cfg.attention_scale else 1.0
        nl = cfg.nonlinear_projections
        per_modality = (not cfg.cross_modal_unit) or cfg.influenced_modality_in_lambda

        h = input_projection(feats, params, st.node_groups, self.modality_names, nl)
        state = LayerState(st.src, st.dst, st.etype, self.modality_names)
        state.h.append([x.data.copy() for x in h])
        lambdas: list[Tensor] = []

        for _ in range(K):
            keys = [typed_projection(x, params, "key", st.node_groups, H, nl) for x in h]
            queries = [typed_projection(x, params, "query", st.node_groups, H, nl) for x in h]
            g = [pair_similarity(keys[m], queries[m], st, params, "node_att", scale) for m in range(M)]
            alpha = [inter_node_attention(gm, st.dst_ix, N) for gm in g]
            alpha_stack = ops.stack(alpha, axis=-1)  # [E, H, M]
            r = alignment_discrepancy(g)

            lam = s_stack = None
            if not cfg.cross_modal_unit:
                beta = alpha_stack  # each influenced modality uses its own alpha
            elif cfg.adapt == "mean":
                lam = Tensor(np.full((E, H, M), 1.0 / M))
                beta = combined_attention(alpha_stack, lam, st.dst_ix, N)
            else:
                sim = pair_similarity if cfg.neighbor_in_lambda else neighbor_mean_similarity
                if cfg.influenced_modality_in_lambda:
                    lam_per, s_per, betas = [], [], []
                    for m in self.modality_names:
                        s_m = ops.stack([sim(keys[q], queries[q], st, params, "modal_att", scale, f".{m}")
                                         for q in range(M)], axis=-1)
                        lam_m = inter_modal_attention(s_m)
                        betas.append(combined_attention(alpha_stack, lam_m, st.dst_ix, N))
                        lam_per.append(lam_m)
                        s_per.append(s_m)
                    lam = ops.stack(lam_per, axis=2)  # [E, H, M_inf, M]
                    s_stack = ops.stack(s_per, axis=2)
                    beta = ops.stack(betas, axis=-1)  # [E, H, M_inf]
                else:
                    s_stack = ops.stack([sim(keys[q], queries[q], st, params, "modal_att", scale)
                                         for q in range(M)], axis=-1)
                    lam = inter_modal_attention(s_stack)
                    beta = combined_attention(alpha_stack, lam, st.dst_ix, N)
                lambdas.append(lam)

            if cfg.alignment_modulation:
                beta_bar, beta_tilde = alignment_modulation(beta, r, st.dst_ix, N, cfg.alignment_sign, (E, H))
            else:
                beta_bar = ops.segment_softmax(Tensor(np.zeros((E, H))), st.dst_ix, N)
                beta_tilde = beta

            new_h = []
            for m in range(M):
                w = ops.getitem(beta_tilde, (slice(None), slice(None), m)) if per_modality else beta_tilde
                new_h.append(aggregate_and_update(h[m], w, st, params, H, nl, cfg.dropout_rate, training, rng))
            h = new_h

            state.h.append([x.data.copy() for x in h])
            state.g.append(np.stack([x.data for x in g], axis=-1))
            state.s.append(None if s_stack is None else s_stack.data.copy())
            state.alpha.append(alpha_stack.data.copy())
            state.lam.append(None if lam is None else lam.data.copy())
            state.beta.append(beta.data.copy())
            state.beta_bar.append(beta_bar.data.copy())
            state.beta_tilde.append(beta_tilde.data.copy())

        z, delta = modality_fusion(h, params)
        logits = classify(z, params["classifier.fused.weight"])
        mod_logits = [classify(h[m], params["classifier.fused.weight"] if cfg.share_modality_classifiers
                               else params[f"classifier.modality.{name}.weight"])
                      for m, name in enumerate(self.modality_names)]

        if cfg.attention_loss and cfg.cross_modal_unit:
            l_att = attention_loss(lambdas, st.edge_missing, K, M, H, cfg.normalize_by_pairs)
        else:
            l_att = Tensor(np.zeros(()))
        loss = l_cro = None
        if loss_ids is not None:
            l_cro = classification_loss(logits, mod_logits, loss_ids, np.asarray(labels),
                                        cfg.individual_modality_loss)
            loss = ops.add(l_cro, l_att)
        return ForwardResult(
            probs=_softmax_rows(logits.data), modality_probs=[_softmax_rows(x.data) for x in mod_logits],
            logits=logits, modality_logits=mod_logits, loss=loss, l_cro=l_cro, l_att=l_att, state=state,
            z=z.data.copy(), delta=delta.data.copy(),
        )

    def loss_fn(self, inputs, ids, labels, mode: str = "eval", rng_seed: int | None = None):
        """Closure ``params -> L`` for gradient checking."""
        def f(params):
            rng = np.random.default_rng(rng_seed) if rng_seed is not None else None
            return self.forward(params, inputs, mode, rng, ids, labels).loss
        return f
