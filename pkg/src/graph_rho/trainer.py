"""Label collection from default rolling-horizon runs and joint BCE training."""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from .fjsp import Instance
from .gnn import GraphBatch, Hyper, ModelParams, backward, forward, init_params
from .hetgraph import RELATIONS, SCHEMA_VERSION, EdgeSet, HeteroGraph, encode
from .labels import crit_labels, fix_labels
from .rho import RhoConfig, run_rho

CLAMP = 1e-7
ORACLES = ("current_window", "next_window")
LOG_FIELDS = ["epoch", "l_fix", "l_crit", "l_total", "val_auc_fix", "val_auc_crit", "lr"]


class TrainingError(RuntimeError):
    pass


@dataclass
class LabeledGraph:
    graph: HeteroGraph
    y_fix: np.ndarray
    y_crit: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        n = len(self.graph.candidate_rows)
        if n == 0:
            raise ValueError("a labeled graph needs at least one candidate")
        if len(self.y_fix) != n or len(self.y_crit) != n:
            raise ValueError("label vectors must align with candidate rows")


@dataclass
class TrainConfig:
    lam: float = 0.5
    lr: float = 1e-4
    epochs: int = 200
    batch_size: int = 64
    weight_decay: float = 0.01
    dropout: float = 0.1
    seed: int = 0
    cosine: bool = True
    d: int = 64
    layers: int = 2
    heads: int = 4
    activation: str = "relu"
    val_fraction: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self) -> None:
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")

    def hyper(self) -> Hyper:
        return Hyper(d=self.d, layers=self.layers, heads=self.heads, dropout=self.dropout,
                     activation=self.activation)


# -- data collection ---------------------------------------------------------

def worker_count() -> int:
    raw = os.environ.get("GRAPH_RHO_THREADS")
    n = int(raw) if raw else (os.cpu_count() or 1)
    return max(1, n)


def _collect_one(args: tuple[Instance, RhoConfig, str]) -> list[LabeledGraph]:
    inst, cfg, oracle = args
    res = run_rho(inst, cfg, record=True)
    out = []
    for t, w in enumerate(res.windows):
        if not w.overlap or w.prev_local is None:
            continue
        target = w.local
        if oracle == "next_window" and t + 1 < len(res.windows):
            # assignments from the following window where the op is still open, else this window's
            nxt = res.windows[t + 1].local
            target_m = {k: (nxt.machine(k) if k in nxt else w.local.machine(k)) for k in w.overlap}
            y_fix = {k: w.prev_local.machine(k) == target_m[k] for k in w.overlap}
        else:
            y_fix = fix_labels(w.overlap, w.prev_local, target)
        y_crit = crit_labels(w.sub, w.local, w.overlap)
        g = encode(w.sub, w.prev_local, inst, overlap=w.overlap, was_fixed=w.was_fixed)
        keys = [g.op_keys[r] for r in g.candidate_rows]
        out.append(LabeledGraph(g, np.array([y_fix[k] for k in keys], dtype=np.float64),
                                np.array([y_crit[k] for k in keys], dtype=np.float64),
                                {"instance_seed": inst.seed, "iter": t}))
    return out


def collect_dataset(instances: Sequence[Instance], rho_cfg: RhoConfig,
                    oracle: str = "current_window", workers: int | None = None) -> list[LabeledGraph]:
    """Self-labeled graphs from default runs, in instance then iteration order."""
    if rho_cfg.policy != "default":
        raise ValueError("labels are collected from the default policy only")
    if oracle not in ORACLES:
        raise ValueError(f"oracle must be one of {ORACLES}")
    jobs = [(inst, rho_cfg, oracle) for inst in instances]
    workers = min(workers or worker_count(), len(jobs)) if jobs else 1
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            parts = list(pool.map(_collect_one, jobs))
    else:
        parts = [_collect_one(j) for j in jobs]
    return [lg for part in parts for lg in part]


# -- dataset files -----------------------------------------------------------

def save_dataset(data: Sequence[LabeledGraph], path: str | Path) -> None:
    """npz container; record ``i`` stores arrays under ``g{i}/<name>`` and its meta in the index."""
    arrays: dict[str, np.ndarray] = {}
    index = []
    for i, lg in enumerate(data):
        g, p = lg.graph, f"g{i}/"
        arrays[p + "x_op"] = g.x_op
        arrays[p + "x_ma"] = g.x_ma
        arrays[p + "op_keys"] = np.array(g.op_keys, dtype=np.int64).reshape(-1, 2)
        arrays[p + "candidate_rows"] = g.candidate_rows
        arrays[p + "assigned"] = g.assigned
        arrays[p + "y_fix"] = lg.y_fix
        arrays[p + "y_crit"] = lg.y_crit
        for r in RELATIONS:
            e = g.edges[r]
            arrays[p + f"{r}.src"], arrays[p + f"{r}.dst"], arrays[p + f"{r}.feat"] = e.src, e.dst, e.feat
        index.append({"schema": g.schema, "meta": lg.meta})
    arrays["index"] = np.frombuffer(json.dumps(index).encode(), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez_compressed(fh, **arrays)


def load_dataset(path: str | Path) -> list[LabeledGraph]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"dataset file {path} does not exist")
    with np.load(path) as z:
        index = json.loads(bytes(z["index"]).decode())
        out = []
        for i, rec in enumerate(index):
            p = f"g{i}/"
            keys = tuple(tuple(int(v) for v in row) for row in z[p + "op_keys"])
            g = HeteroGraph(
                x_op=z[p + "x_op"], x_ma=z[p + "x_ma"],
                edges={r: EdgeSet(z[p + f"{r}.src"], z[p + f"{r}.dst"], z[p + f"{r}.feat"]) for r in RELATIONS},
                op_keys=keys, candidate_rows=z[p + "candidate_rows"], assigned=z[p + "assigned"],
                schema=rec["schema"], op_index={k: j for j, k in enumerate(keys)})
            out.append(LabeledGraph(g, z[p + "y_fix"], z[p + "y_crit"], rec["meta"]))
    return out


# -- loss and metrics ----------------------------------------------------------

def _bce(yhat: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    p = np.clip(yhat, CLAMP, 1 - CLAMP)
    n = len(y)
    value = -np.mean(y * np.log(p) + (1 - y) * np.log(1 - p))
    grad = (p - y) / (p * (1 - p)) / n
    grad[(yhat < CLAMP) | (yhat > 1 - CLAMP)] = 0.0  # flat where the clamp is active
    return float(value), grad


def loss(yhat_fix: np.ndarray, yhat_crit: np.ndarray, y_fix: np.ndarray, y_crit: np.ndarray,
         lam: float = 0.5) -> tuple[float, float, float, np.ndarray, np.ndarray]:
    """``(L_total, L_fix, L_crit, dL/dyhat_fix, dL/dyhat_crit)`` with mean BCE per head."""
    yhat_fix, yhat_crit = np.asarray(yhat_fix, float), np.asarray(yhat_crit, float)
    y_fix, y_crit = np.asarray(y_fix, float), np.asarray(y_crit, float)
    if not (len(yhat_fix) == len(yhat_crit) == len(y_fix) == len(y_crit)) or len(y_fix) == 0:
        raise ValueError("prediction and label vectors must be non-empty and equally long")
    l_fix, g_fix = _bce(yhat_fix, y_fix)
    l_crit, g_crit = _bce(yhat_crit, y_crit)
    return l_fix + lam * l_crit, l_fix, l_crit, g_fix, lam * g_crit


def auc(scores: np.ndarray, labels: np.ndarray) -> float | None:
    """Rank-statistic AUC with average ranks for ties; ``None`` for a single class."""
    labels = np.asarray(labels) > 0.5
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = rankdata(scores)
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def predict(model: ModelParams, data: Sequence[LabeledGraph], batch_size: int = 64) -> tuple[np.ndarray, np.ndarray]:
    fix, crit = [], []
    for i in range(0, len(data), batch_size):
        chunk = data[i:i + batch_size]
        yf, yc, _ = forward(GraphBatch.from_graphs([lg.graph for lg in chunk]), model, training=False)
        fix.append(yf)
        crit.append(yc)
    return np.concatenate(fix), np.concatenate(crit)


def evaluate(model: ModelParams, data: Sequence[LabeledGraph], lam: float = 0.5) -> dict:
    if not data:
        raise ValueError("evaluate needs a non-empty dataset")
    yf, yc = predict(model, data)
    tf = np.concatenate([lg.y_fix for lg in data])
    tc = np.concatenate([lg.y_crit for lg in data])
    total, l_fix, l_crit, _, _ = loss(yf, yc, tf, tc, lam)
    return {
        "n": int(len(tf)),
        "l_total": total, "l_fix": l_fix, "l_crit": l_crit,
        "auc_fix": auc(yf, tf), "auc_crit": auc(yc, tc),
        "acc_fix": float(np.mean((yf >= 0.5) == (tf > 0.5))),
        "acc_crit": float(np.mean((yc >= 0.5) == (tc > 0.5))),
        "pos_fix": float(tf.mean()), "pos_crit": float(tc.mean()),
    }


# -- optimisation --------------------------------------------------------------

def cosine_lr(base: float, step: int, total: int, cosine: bool = True) -> float:
    if not cosine or total <= 1:
        return base
    return base * 0.5 * (1.0 + math.cos(math.pi * step / (total - 1)))


class AdamW:
    def __init__(self, params: ModelParams, cfg: TrainConfig):
        self.cfg = cfg
        self.m = {k: np.zeros_like(v) for k, v in params.tensors.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.tensors.items()}
        self.t = 0

    def step(self, params: ModelParams, grads: dict[str, np.ndarray], lr: float) -> None:
        c = self.cfg
        self.t += 1
        b1c = 1 - c.beta1 ** self.t
        b2c = 1 - c.beta2 ** self.t
        for k, w in params.tensors.items():
            g = grads[k]
            self.m[k] = c.beta1 * self.m[k] + (1 - c.beta1) * g
            self.v[k] = c.beta2 * self.v[k] + (1 - c.beta2) * g * g
            w -= lr * c.weight_decay * w
            w -= lr * (self.m[k] / b1c) / (np.sqrt(self.v[k] / b2c) + c.eps)


def split_dataset(data: Sequence[LabeledGraph], val_fraction: float, seed: int) -> tuple[list, list]:
    order = np.random.default_rng(seed).permutation(len(data))
    n_val = int(round(val_fraction * len(data))) if len(data) > 1 else 0
    n_val = min(max(n_val, 1 if val_fraction > 0 and len(data) > 1 else 0), len(data) - 1)
    val = [data[i] for i in sorted(order[:n_val])]
    train = [data[i] for i in sorted(order[n_val:])]
    return train, val


@dataclass
class TrainResult:
    params: ModelParams
    log: list[dict]
    best_epoch: int
    step_losses: list[float]

    def log_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, LOG_FIELDS, lineterminator="\n")
        w.writeheader()
        for row in self.log:
            w.writerow({k: ("" if row[k] is None else (f"{row[k]:.6f}" if isinstance(row[k], float) else row[k]))
                        for k in LOG_FIELDS})
        return buf.getvalue()


def train_step(params: ModelParams, batch: Sequence[LabeledGraph], cfg: TrainConfig,
               rng: np.random.Generator) -> tuple[float, float, float, dict[str, np.ndarray]]:
    gb = GraphBatch.from_graphs([lg.graph for lg in batch])
    yf, yc, tape = forward(gb, params, training=True, rng=rng)
    tf = np.concatenate([lg.y_fix for lg in batch])
    tc = np.concatenate([lg.y_crit for lg in batch])
    total, l_fix, l_crit, gf, gc = loss(yf, yc, tf, tc, cfg.lam)
    return total, l_fix, l_crit, backward(tape, params, gf, gc)


def train(data: Sequence[LabeledGraph], cfg: TrainConfig, init: ModelParams | None = None,
          progress=None) -> TrainResult:
    """Mini-batch AdamW with per-step cosine decay; keeps the best validation checkpoint."""
    if not data:
        raise TrainingError("training needs a non-empty dataset")
    schemas = {lg.graph.schema for lg in data}
    if schemas != {SCHEMA_VERSION}:
        raise TrainingError(f"dataset schema {sorted(schemas)} does not match {SCHEMA_VERSION}")
    train_set, val_set = split_dataset(data, cfg.val_fraction, cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    params = init.copy() if init is not None else init_params(cfg.hyper(), seed=cfg.seed)
    if init is not None and params.hyper.dropout != cfg.dropout:
        params = ModelParams(replace(params.hyper, dropout=cfg.dropout), params.tensors, params.schema)
    opt = AdamW(params, cfg)
    per_epoch = math.ceil(len(train_set) / cfg.batch_size)
    total_steps = per_epoch * cfg.epochs
    step = 0
    best, best_epoch, best_loss = params.copy(), -1, math.inf
    log, step_losses = [], []
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(train_set))
        sums = np.zeros(3)
        lr = cfg.lr
        for b in range(per_epoch):
            batch = [train_set[i] for i in order[b * cfg.batch_size:(b + 1) * cfg.batch_size]]
            total, l_fix, l_crit, grads = train_step(params, batch, cfg, rng)
            if not math.isfinite(total) or any(not np.all(np.isfinite(g)) for g in grads.values()):
                raise TrainingError(f"loss diverged at epoch {epoch}, step {step} (L_total={total})")
            lr = cosine_lr(cfg.lr, step, total_steps, cfg.cosine)
            opt.step(params, grads, lr)
            sums += (total * len(batch), l_fix * len(batch), l_crit * len(batch))
            step_losses.append(total)
            step += 1
        sums /= len(train_set)
        if val_set:
            ev = evaluate(params, val_set, cfg.lam)
            val_loss, auc_fix, auc_crit = ev["l_total"], ev["auc_fix"], ev["auc_crit"]
        else:
            val_loss, auc_fix, auc_crit = sums[0], None, None
        row = {"epoch": epoch, "l_fix": float(sums[1]), "l_crit": float(sums[2]), "l_total": float(sums[0]),
               "val_auc_fix": auc_fix, "val_auc_crit": auc_crit, "lr": lr, "val_l_total": val_loss}
        log.append(row)
        if progress:
            progress(row)
        if val_loss < best_loss:
            best, best_epoch, best_loss = params.copy(), epoch, val_loss
    return TrainResult(best, log, best_epoch, step_losses)


def config_dict(cfg: TrainConfig) -> dict:
    return asdict(cfg)
