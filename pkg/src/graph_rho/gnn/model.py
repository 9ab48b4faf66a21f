"""Heterogeneous graph attention network with fix and criticality heads.

Per layer, every operation attends separately over its four relation
neighbourhoods. For a head ``h`` the logit of edge ``u -> v`` is

    (Wq h_v) . (Wk h_u) / sqrt(dk) + We . e_uv

softmax-normalized over the neighbourhood; messages are attention-weighted sums of
``Wv h_u`` with heads concatenated back to ``d``. The four relation messages are
concatenated, passed through a one-hidden-layer MLP and added residually before a
layer norm. Machines are then updated the same way over reversed assignment
edges, using the freshly updated operation embeddings.

After the last layer each candidate is represented by
``[h_op ; mean(h_op) ; mean(h_ma) ; h_assigned_machine]`` (4d), fed to two
sigmoid heads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..hetgraph import EDGE_DIM, MA_FEATURES, OP_FEATURES, RELATIONS, SCHEMA_VERSION, HeteroGraph
from .autodiff import Tape, Var

ACTIVATIONS = ("relu", "sigmoid", "tanh")


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class Hyper:
    d: int = 64
    layers: int = 2
    heads: int = 4
    dropout: float = 0.1
    activation: str = "relu"
    op_dim: int = len(OP_FEATURES)
    ma_dim: int = len(MA_FEATURES)
    edge_dim: int = EDGE_DIM

    def __post_init__(self) -> None:
        if self.d % self.heads:
            raise ModelError(f"hidden size {self.d} is not divisible by {self.heads} heads")
        if self.activation not in ACTIVATIONS:
            raise ModelError(f"activation must be one of {ACTIVATIONS}")
        if not 0 <= self.dropout < 1:
            raise ModelError("dropout must lie in [0, 1)")

    @property
    def dk(self) -> int:
        return self.d // self.heads


@dataclass
class ModelParams:
    hyper: Hyper
    tensors: dict[str, np.ndarray]  # insertion order is the serialization order
    schema: str = SCHEMA_VERSION

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def names(self) -> list[str]:
        return list(self.tensors)

    def copy(self) -> "ModelParams":
        return ModelParams(self.hyper, {k: v.copy() for k, v in self.tensors.items()}, self.schema)

    def num_parameters(self) -> int:
        return sum(v.size for v in self.tensors.values())


def param_shapes(hp: Hyper) -> dict[str, tuple[int, ...]]:
    d, H, dk = hp.d, hp.heads, hp.dk
    shapes: dict[str, tuple[int, ...]] = {
        "in.op.W": (hp.op_dim, d), "in.op.b": (d,),
        "in.ma.W": (hp.ma_dim, d), "in.ma.b": (d,),
    }
    for l in range(hp.layers):
        for r in RELATIONS + ("rev",):
            for w in ("Wq", "Wk", "Wv"):
                shapes[f"l{l}.{r}.{w}"] = (H, dk, d)
            shapes[f"l{l}.{r}.We"] = (H, hp.edge_dim)
        shapes[f"l{l}.fuse.W1"] = (4 * d, d)
        shapes[f"l{l}.fuse.b1"] = (d,)
        shapes[f"l{l}.fuse.W2"] = (d, d)
        shapes[f"l{l}.fuse.b2"] = (d,)
        shapes[f"l{l}.norm.g"] = (d,)
        shapes[f"l{l}.norm.b"] = (d,)
        shapes[f"l{l}.rev.W1"] = (d, d)
        shapes[f"l{l}.rev.b1"] = (d,)
        shapes[f"l{l}.rev.W2"] = (d, d)
        shapes[f"l{l}.rev.b2"] = (d,)
        shapes[f"l{l}.rev.norm.g"] = (d,)
        shapes[f"l{l}.rev.norm.b"] = (d,)
    for head in ("fix", "crit"):
        shapes[f"head.{head}.W1"] = (4 * d, d)
        shapes[f"head.{head}.b1"] = (d,)
        shapes[f"head.{head}.W2"] = (d, 1)
        shapes[f"head.{head}.b2"] = (1,)
    return shapes


def init_params(hyper: Hyper | None = None, seed: int = 0) -> ModelParams:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases, unit norm gains."""
    hp = hyper or Hyper()
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in param_shapes(hp).items():
        leaf = name.rsplit(".", 1)[1]
        if leaf in ("g",):
            tensors[name] = np.ones(shape)
        elif leaf.startswith("b"):
            tensors[name] = np.zeros(shape)
        else:
            fan_in = shape[-1] if leaf in ("Wq", "Wk", "Wv", "We") else shape[0]
            bound = 1.0 / np.sqrt(fan_in)
            tensors[name] = rng.uniform(-bound, bound, size=shape)
    return ModelParams(hp, tensors)


@dataclass
class GraphBatch:
    """Disjoint union of graphs with per-node graph ids."""

    x_op: np.ndarray
    x_ma: np.ndarray
    edges: dict[str, tuple[np.ndarray, np.ndarray, np.ndarray]]
    assigned: np.ndarray
    op_graph: np.ndarray
    ma_graph: np.ndarray
    candidates: np.ndarray
    cand_graph: np.ndarray
    num_graphs: int
    schema: str

    @classmethod
    def from_graphs(cls, graphs: Sequence[HeteroGraph]) -> "GraphBatch":
        if not graphs:
            raise ModelError("empty batch")
        schemas = {g.schema for g in graphs}
        if len(schemas) != 1:
            raise ModelError(f"mixed graph schemas {sorted(schemas)}")
        op_off = np.cumsum([0] + [g.num_ops for g in graphs])
        ma_off = np.cumsum([0] + [g.num_machines for g in graphs])
        edges = {}
        for r in RELATIONS:
            src_off = ma_off if r in ("r1", "r2") else op_off
            edges[r] = (
                np.concatenate([g.edges[r].src + src_off[i] for i, g in enumerate(graphs)]).astype(np.int64),
                np.concatenate([g.edges[r].dst + op_off[i] for i, g in enumerate(graphs)]).astype(np.int64),
                np.concatenate([g.edges[r].feat for g in graphs]).reshape(-1, EDGE_DIM),
            )
        return cls(
            x_op=np.concatenate([g.x_op for g in graphs]),
            x_ma=np.concatenate([g.x_ma for g in graphs]),
            edges=edges,
            assigned=np.concatenate([g.assigned + ma_off[i] for i, g in enumerate(graphs)]),
            op_graph=np.concatenate([np.full(g.num_ops, i) for i, g in enumerate(graphs)]),
            ma_graph=np.concatenate([np.full(g.num_machines, i) for i, g in enumerate(graphs)]),
            candidates=np.concatenate([g.candidate_rows + op_off[i] for i, g in enumerate(graphs)]).astype(np.int64),
            cand_graph=np.concatenate([np.full(len(g.candidate_rows), i) for i, g in enumerate(graphs)]),
            num_graphs=len(graphs),
            schema=graphs[0].schema,
        )


@dataclass
class ForwardTape:
    tape: Tape
    params: dict[str, Var]
    out_fix: Var
    out_crit: Var
    masks: dict[str, np.ndarray] = field(default_factory=dict)
    attention: list[tuple[str, np.ndarray, np.ndarray]] = field(default_factory=list)  # (tag, dst, alpha)

    @property
    def tracked(self) -> bool:
        return any(v.requires_grad for v in self.params.values())


class _Dropout:
    def __init__(self, rate: float, training: bool, rng: np.random.Generator | None,
                 masks: dict[str, np.ndarray] | None):
        self.rate = rate if training else 0.0
        self.rng = rng
        self.fixed = masks
        self.used: dict[str, np.ndarray] = {}

    def __call__(self, tape: Tape, name: str, x: Var) -> Var:
        if self.rate == 0.0:
            return x
        if self.fixed is not None:
            mask = self.fixed[name]
        else:
            rng = self.rng if self.rng is not None else np.random.default_rng(0)
            mask = (rng.random(x.shape) >= self.rate).astype(np.float64)
        self.used[name] = mask
        return tape.dropout(x, mask, self.rate)


def _act(tape: Tape, x: Var, kind: str) -> Var:
    return getattr(tape, kind)(x)


def _attend(tape: Tape, P: dict[str, Var], prefix: str, h_dst: Var, h_src: Var,
            src: np.ndarray, dst: np.ndarray, feat: np.ndarray, n_dst: int, hp: Hyper,
            record: list) -> Var:
    """Edge-feature-aware multi-head attention message into every destination node."""
    if len(src) == 0:
        # empty neighbourhoods contribute zero messages
        return Var(np.zeros((n_dst, hp.d)))
    q = tape.gather(tape.heads_proj(h_dst, P[f"{prefix}.Wq"]), dst)
    k = tape.gather(tape.heads_proj(h_src, P[f"{prefix}.Wk"]), src)
    v = tape.gather(tape.heads_proj(h_src, P[f"{prefix}.Wv"]), src)
    logits = tape.add(tape.rowdot(q, k, 1.0 / np.sqrt(hp.dk)), tape.edge_bias(feat, P[f"{prefix}.We"]))
    alpha = tape.segment_softmax(logits, dst, n_dst)
    record.append((prefix, dst, alpha.data))
    return tape.segment_sum(tape.weight_heads(alpha, v), dst, n_dst)


def _layer(tape: Tape, P: dict[str, Var], l: int, batch: "GraphBatch", h_op: Var, h_ma: Var,
           hp: Hyper, drop: "_Dropout", att: list) -> tuple[Var, Var]:
    n_op, n_ma = h_op.shape[0], h_ma.shape[0]
    msgs = []
    for r in RELATIONS:
        src, dst, feat = batch.edges[r]
        h_src = h_ma if r in ("r1", "r2") else h_op
        msgs.append(_attend(tape, P, f"l{l}.{r}", h_op, h_src, src, dst, feat, n_op, hp, att))
    hidden = _act(tape, tape.linear(tape.concat(msgs), P[f"l{l}.fuse.W1"], P[f"l{l}.fuse.b1"]), hp.activation)
    hidden = drop(tape, f"l{l}.fuse", hidden)
    update = tape.linear(hidden, P[f"l{l}.fuse.W2"], P[f"l{l}.fuse.b2"])
    h_op = tape.layer_norm(tape.add(h_op, update), P[f"l{l}.norm.g"], P[f"l{l}.norm.b"])

    # reverse pass: machines attend over the operations assigned to them
    r1_src, r1_dst, r1_feat = batch.edges["r1"]
    m_ma = _attend(tape, P, f"l{l}.rev", h_ma, h_op, r1_dst, r1_src, r1_feat, n_ma, hp, att)
    hidden = _act(tape, tape.linear(m_ma, P[f"l{l}.rev.W1"], P[f"l{l}.rev.b1"]), hp.activation)
    hidden = drop(tape, f"l{l}.rev", hidden)
    update = tape.linear(hidden, P[f"l{l}.rev.W2"], P[f"l{l}.rev.b2"])
    h_ma = tape.layer_norm(tape.add(h_ma, update), P[f"l{l}.rev.norm.g"], P[f"l{l}.rev.norm.b"])
    return h_op, h_ma


def attention_scores(h_v: np.ndarray, h_u: np.ndarray, e_uv: np.ndarray, params: ModelParams,
                     layer: int, relation: str) -> np.ndarray:
    """Per-head logits ``(Wq h_v) . (Wk h_u) / sqrt(dk) + We . e_uv`` of one edge."""
    pre = f"l{layer}.{relation}"
    q = params[f"{pre}.Wq"] @ h_v
    k = params[f"{pre}.Wk"] @ h_u
    return (q * k).sum(-1) / np.sqrt(params.hyper.dk) + params[f"{pre}.We"] @ np.asarray(e_uv, float)


def layer_forward(g: "HeteroGraph | GraphBatch", h_ops: np.ndarray, h_mas: np.ndarray, params: ModelParams,
                  layer: int) -> tuple[np.ndarray, np.ndarray, list[tuple[str, np.ndarray, np.ndarray]]]:
    """One inference-mode layer on given embeddings; also returns the attention weights."""
    batch = g if isinstance(g, GraphBatch) else GraphBatch.from_graphs([g])
    tape = Tape()
    P = {k: Var(v) for k, v in params.tensors.items()}
    att: list = []
    h_op, h_ma = _layer(tape, P, layer, batch, Var(np.asarray(h_ops, float)), Var(np.asarray(h_mas, float)),
                        params.hyper, _Dropout(0.0, False, None, None), att)
    return h_op.data, h_ma.data, att


def _check(batch: GraphBatch, params: ModelParams) -> None:
    hp = params.hyper
    if batch.schema != params.schema:
        raise ModelError(f"graph schema {batch.schema} does not match model schema {params.schema}")
    if batch.x_op.shape[1] != hp.op_dim or batch.x_ma.shape[1] != hp.ma_dim:
        raise ModelError("feature widths do not match the model")


def forward(g: HeteroGraph | GraphBatch, params: ModelParams, training: bool = False, *,
            rng: np.random.Generator | None = None, masks: dict[str, np.ndarray] | None = None,
            track: bool | None = None) -> tuple[np.ndarray, np.ndarray, ForwardTape]:
    """Fix and criticality probabilities for every candidate row.

    ``track`` (default: ``training``) records the tape needed by ``backward``.
    ``masks`` replays the dropout masks of an earlier tape.
    """
    batch = g if isinstance(g, GraphBatch) else GraphBatch.from_graphs([g])
    _check(batch, params)
    hp = params.hyper
    track = training if track is None else track
    tape = Tape()
    P = {k: Var(v, requires_grad=track, name=k) for k, v in params.tensors.items()}
    drop = _Dropout(hp.dropout, training, rng, masks)
    att: list = []

    h_op = tape.linear(Var(batch.x_op), P["in.op.W"], P["in.op.b"])
    h_ma = tape.linear(Var(batch.x_ma), P["in.ma.W"], P["in.ma.b"])
    for l in range(hp.layers):
        h_op, h_ma = _layer(tape, P, l, batch, h_op, h_ma, hp, drop, att)

    z_op = tape.segment_mean(h_op, batch.op_graph, batch.num_graphs)
    z_ma = tape.segment_mean(h_ma, batch.ma_graph, batch.num_graphs)
    cand = batch.candidates
    h_final = tape.concat([
        tape.gather(h_op, cand),
        tape.gather(z_op, batch.cand_graph),
        tape.gather(z_ma, batch.cand_graph),
        tape.gather(h_ma, batch.assigned[cand]),
    ])
    outs = []
    for head in ("fix", "crit"):
        hidden = _act(tape, tape.linear(h_final, P[f"head.{head}.W1"], P[f"head.{head}.b1"]), hp.activation)
        hidden = drop(tape, f"head.{head}", hidden)
        logit = tape.linear(hidden, P[f"head.{head}.W2"], P[f"head.{head}.b2"])
        outs.append(tape.sigmoid(logit))
    ft = ForwardTape(tape, P, outs[0], outs[1], drop.used, att)
    return outs[0].data[:, 0].copy(), outs[1].data[:, 0].copy(), ft


def backward(ft: ForwardTape, params: ModelParams, grad_fix: np.ndarray,
             grad_crit: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of ``sum(grad_fix * yfix) + sum(grad_crit * ycrit)`` w.r.t. every tensor."""
    if not ft.tracked:
        raise ModelError("tape was recorded without tracking; run forward(..., track=True)")
    for v in ft.params.values():
        v.grad = None
    ft.tape.backward([(ft.out_fix, np.asarray(grad_fix, float).reshape(-1, 1)),
                      (ft.out_crit, np.asarray(grad_crit, float).reshape(-1, 1))])
    return {k: (ft.params[k].grad if ft.params[k].grad is not None else np.zeros_like(v))
            for k, v in params.tensors.items()}

