"""Minimal reverse-mode differentiation over numpy arrays.

A ``Tape`` records every operation in creation order; ``Tape.backward`` walks the
records in reverse and accumulates gradients into the inputs. Only the operations
the graph network needs are provided.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
from scipy import sparse


class Var:
    __slots__ = ("data", "grad", "requires_grad", "name")

    def __init__(self, data: np.ndarray, requires_grad: bool = False, name: str | None = None):
        self.data = data
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def accumulate(self, g: np.ndarray) -> None:
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def scatter_add(values: np.ndarray, index: np.ndarray, n: int) -> np.ndarray:
    """Sum rows of ``values`` into ``n`` buckets given by ``index``."""
    if not len(index):
        return np.zeros((n,) + values.shape[1:])
    # a 0/1 incidence matrix product is much faster than np.add.at
    incidence = sparse.csr_matrix((np.ones(len(index)), (index, np.arange(len(index)))),
                                  shape=(n, len(index)))
    flat = incidence @ values.reshape(len(index), -1)
    return np.asarray(flat).reshape((n,) + values.shape[1:])


class Tape:
    def __init__(self) -> None:
        self.records: list[tuple[Var, Callable[[np.ndarray], None]]] = []

    def _out(self, data: np.ndarray, parents: Sequence[Var], backward: Callable[[np.ndarray], None]) -> Var:
        out = Var(data, any(p.requires_grad for p in parents))
        if out.requires_grad:
            self.records.append((out, backward))
        return out

    def backward(self, seeds: Sequence[tuple[Var, np.ndarray]]) -> None:
        for var, g in seeds:
            var.accumulate(g)
        for out, fn in reversed(self.records):
            if out.grad is not None:
                fn(out.grad)

    # -- elementwise and linear algebra --------------------------------------

    def add(self, a: Var, b: Var) -> Var:
        def back(g):
            a.accumulate(_unbroadcast(g, a.shape))
            b.accumulate(_unbroadcast(g, b.shape))
        return self._out(a.data + b.data, (a, b), back)

    def mul(self, a: Var, b: Var) -> Var:
        def back(g):
            a.accumulate(_unbroadcast(g * b.data, a.shape))
            b.accumulate(_unbroadcast(g * a.data, b.shape))
        return self._out(a.data * b.data, (a, b), back)

    def scale(self, a: Var, c: float | np.ndarray) -> Var:
        def back(g):
            a.accumulate(g * c)
        return self._out(a.data * c, (a,), back)

    def matmul(self, a: Var, b: Var) -> Var:
        def back(g):
            a.accumulate(g @ b.data.T)
            b.accumulate(a.data.T @ g)
        return self._out(a.data @ b.data, (a, b), back)

    def linear(self, x: Var, w: Var, b: Var | None = None) -> Var:
        y = self.matmul(x, w)
        return self.add(y, b) if b is not None else y

    def heads_proj(self, x: Var, w: Var) -> Var:
        """(N, d) x (H, dk, d) -> (N, H, dk)."""
        H, dk, d = w.shape
        w2 = w.data.reshape(H * dk, d)

        def back(g):
            g2 = g.reshape(g.shape[0], H * dk)
            x.accumulate(g2 @ w2)
            w.accumulate((g2.T @ x.data).reshape(H, dk, d))
        return self._out((x.data @ w2.T).reshape(-1, H, dk), (x, w), back)

    def edge_bias(self, e: np.ndarray, w: Var) -> Var:
        """Constant edge features (E, F) x weights (H, F) -> (E, H)."""
        def back(g):
            w.accumulate(g.T @ e)
        return self._out(e @ w.data.T, (w,), back)

    def rowdot(self, a: Var, b: Var, scale: float = 1.0) -> Var:
        """(E, H, dk) . (E, H, dk) -> (E, H)."""
        def back(g):
            ge = (g * scale)[..., None]
            a.accumulate(ge * b.data)
            b.accumulate(ge * a.data)
        return self._out((a.data * b.data).sum(-1) * scale, (a, b), back)

    def weight_heads(self, alpha: Var, v: Var) -> Var:
        """(E, H) * (E, H, dk) -> (E, H * dk)."""
        E, H, dk = v.shape

        def back(g):
            g3 = g.reshape(E, H, dk)
            alpha.accumulate((g3 * v.data).sum(-1))
            v.accumulate(g3 * alpha.data[..., None])
        return self._out((v.data * alpha.data[..., None]).reshape(E, H * dk), (alpha, v), back)

    def concat(self, xs: Sequence[Var], axis: int = -1) -> Var:
        sizes = [x.shape[axis] for x in xs]
        cuts = np.cumsum(sizes)[:-1]

        def back(g):
            for x, part in zip(xs, np.split(g, cuts, axis=axis)):
                x.accumulate(part)
        return self._out(np.concatenate([x.data for x in xs], axis=axis), xs, back)

    # -- graph gather/scatter ----------------------------------------------

    def gather(self, x: Var, index: np.ndarray) -> Var:
        n = x.shape[0]

        def back(g):
            x.accumulate(scatter_add(g, index, n))
        return self._out(x.data[index], (x,), back)

    def segment_sum(self, x: Var, index: np.ndarray, n: int) -> Var:
        def back(g):
            x.accumulate(g[index])
        return self._out(scatter_add(x.data, index, n), (x,), back)

    def segment_mean(self, x: Var, index: np.ndarray, n: int) -> Var:
        counts = np.maximum(np.bincount(index, minlength=n), 1).astype(float)
        shape = (n,) + (1,) * (x.data.ndim - 1)
        inv = (1.0 / counts).reshape(shape)

        def back(g):
            x.accumulate((g * inv)[index])
        return self._out(scatter_add(x.data, index, n) * inv, (x,), back)

    def segment_softmax(self, logits: Var, index: np.ndarray, n: int) -> Var:
        """Softmax over edges sharing a destination, independently per column."""
        z = logits.data
        if z.shape[0] == 0:
            return self._out(z.copy(), (logits,), lambda g: None)
        zmax = np.full((n,) + z.shape[1:], -np.inf)
        np.maximum.at(zmax, index, z)
        ez = np.exp(z - zmax[index])
        denom = scatter_add(ez, index, n)
        y = ez / denom[index]

        def back(g):
            s = scatter_add(g * y, index, n)
            logits.accumulate(y * (g - s[index]))
        return self._out(y, (logits,), back)

    # -- nonlinearities and normalization ------------------------------------

    def relu(self, x: Var) -> Var:
        mask = x.data > 0

        def back(g):
            x.accumulate(g * mask)
        return self._out(x.data * mask, (x,), back)

    def sigmoid(self, x: Var) -> Var:
        y = 1.0 / (1.0 + np.exp(-x.data))

        def back(g):
            x.accumulate(g * y * (1.0 - y))
        return self._out(y, (x,), back)

    def tanh(self, x: Var) -> Var:
        y = np.tanh(x.data)

        def back(g):
            x.accumulate(g * (1.0 - y * y))
        return self._out(y, (x,), back)

    def dropout(self, x: Var, mask: np.ndarray, rate: float) -> Var:
        keep = mask / (1.0 - rate)

        def back(g):
            x.accumulate(g * keep)
        return self._out(x.data * keep, (x,), back)

    def layer_norm(self, x: Var, gain: Var, bias: Var, eps: float = 1e-5) -> Var:
        mu = x.data.mean(-1, keepdims=True)
        xc = x.data - mu
        var = (xc * xc).mean(-1, keepdims=True)
        inv = 1.0 / np.sqrt(var + eps)
        xhat = xc * inv
        d = x.shape[-1]

        def back(g):
            gain.accumulate((g * xhat).sum(0))
            bias.accumulate(g.sum(0))
            gx = g * gain.data
            x.accumulate(inv * (gx - gx.mean(-1, keepdims=True)
                                - xhat * (gx * xhat).sum(-1, keepdims=True) / d))
        return self._out(xhat * gain.data + bias.data, (x, gain, bias), back)
