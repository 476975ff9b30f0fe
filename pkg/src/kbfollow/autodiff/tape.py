"""A small reverse-mode tape over numpy arrays.

Each op appends a node holding its forward value and a closure that maps
the output adjoint to adjoints of its inputs. ``backward`` walks the nodes
in reverse append order, so inputs always precede their consumers.
All arithmetic runs in float64 regardless of the parameter storage dtype.
"""
from __future__ import annotations

import numpy as np

from ..errors import NonScalarLoss, ShapeMismatch


class Node:
    __slots__ = ("id", "op", "value", "parents", "vjp", "param", "requires_grad")

    def __init__(self, id, op, value, parents, vjp, param=None, requires_grad=False):
        self.id = id
        self.op = op
        self.value = value
        self.parents = parents
        self.vjp = vjp
        self.param = param
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Node({self.id}, {self.op}, shape={self.value.shape})"


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _log_softmax(z):
    m = z.max(axis=-1, keepdims=True)
    s = z - m
    return s - np.log(np.exp(s).sum(axis=-1, keepdims=True))


class Tape:
    def __init__(self):
        self.nodes: list[Node] = []
        self.grads: list | None = None
        self._param_nodes: dict[str, Node] = {}

    def _push(self, op, value, parents=(), vjp=None, param=None):
        requires = param is not None or any(p.requires_grad for p in parents)
        node = Node(len(self.nodes), op, value, tuple(parents), vjp, param, requires)
        self.nodes.append(node)
        return node

    # ------------------------------------------------------------ leaves

    def constant(self, value) -> Node:
        return self._push("const", np.asarray(value, dtype=np.float64))

    def param(self, params, name) -> Node:
        """Leaf for parameter ``name``; repeated calls return the same node."""
        node = self._param_nodes.get(name)
        if node is None:
            node = self._push("param", np.asarray(params[name], dtype=np.float64), param=name)
            self._param_nodes[name] = node
        return node

    # ------------------------------------------------------------ elementwise

    def add(self, a: Node, b: Node) -> Node:
        sa, sb = a.shape, b.shape
        return self._push("add", a.value + b.value, (a, b),
                          lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))

    def sub(self, a: Node, b: Node) -> Node:
        sa, sb = a.shape, b.shape
        return self._push("sub", a.value - b.value, (a, b),
                          lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)))

    def mul(self, a: Node, b: Node) -> Node:
        va, vb = a.value, b.value
        return self._push("mul", va * vb, (a, b),
                          lambda g: (_unbroadcast(g * vb, va.shape), _unbroadcast(g * va, vb.shape)))

    def scale(self, a: Node, s: float) -> Node:
        return self._push("scale", a.value * s, (a,), lambda g: (g * s,))

    def one_minus(self, a: Node) -> Node:
        return self._push("one_minus", 1.0 - a.value, (a,), lambda g: (-g,))

    def sum(self, a: Node) -> Node:
        shape = a.shape
        return self._push("sum", np.asarray(a.value.sum()), (a,), lambda g: (np.broadcast_to(g, shape),))

    def sigmoid(self, a: Node) -> Node:
        y = _sigmoid(a.value)
        return self._push("sigmoid", y, (a,), lambda g: (g * y * (1.0 - y),))

    def tanh(self, a: Node) -> Node:
        y = np.tanh(a.value)
        return self._push("tanh", y, (a,), lambda g: (g * (1.0 - y * y),))

    def softmax(self, a: Node) -> Node:
        y = np.exp(_log_softmax(a.value))

        def vjp(g):
            return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

        return self._push("softmax", y, (a,), vjp)

    def columns(self, a: Node, lo: int, hi: int) -> Node:
        shape = a.shape

        def vjp(g):
            out = np.zeros(shape)
            out[..., lo:hi] = g
            return (out,)

        return self._push("columns", a.value[..., lo:hi], (a,), vjp)

    # ------------------------------------------------------------ layers

    def matmul(self, a: Node, b: Node) -> Node:
        va, vb = a.value, b.value
        if va.shape[-1] != vb.shape[0]:
            raise ShapeMismatch(f"matmul of {va.shape} and {vb.shape}")
        return self._push("matmul", va @ vb, (a, b), lambda g: (g @ vb.T, va.T @ g))

    def linear(self, x: Node, w: Node, b: Node | None = None) -> Node:
        """``x @ w + b`` for a batch ``x`` of shape (batch, in)."""
        xv, wv = x.value, w.value
        if xv.shape[-1] != wv.shape[0] or (b is not None and b.shape != (wv.shape[1],)):
            raise ShapeMismatch(f"linear: input {xv.shape}, weight {wv.shape}")
        y = xv @ wv
        if b is None:
            return self._push("linear", y, (x, w), lambda g: (g @ wv.T, xv.T @ g))
        y = y + b.value
        return self._push("linear", y, (x, w, b), lambda g: (g @ wv.T, xv.T @ g, g.sum(axis=0)))

    def embed(self, table: Node, ids) -> Node:
        ids = np.asarray(ids, dtype=np.int64)
        shape = table.shape

        def vjp(g):
            out = np.zeros(shape)
            np.add.at(out, ids.reshape(-1), g.reshape(-1, shape[1]))
            return (out,)

        return self._push("embed", table.value[ids], (table,), vjp)

    def mean_pool(self, vectors: Node, mask=None) -> Node:
        """Mean over axis 1 of (batch, length, dim), counting only unmasked positions."""
        v = vectors.value
        if mask is None:
            mask = np.ones(v.shape[:2])
        mask = np.asarray(mask, dtype=np.float64)
        denom = np.maximum(mask.sum(axis=1, keepdims=True), 1.0)
        w = (mask / denom)[:, :, None]
        return self._push("mean_pool", (v * w).sum(axis=1), (vectors,), lambda g: (g[:, None, :] * w,))

    def lstm_cell(self, x: Node, state: Node, w: Node, b: Node, mask=None) -> Node:
        """One LSTM step. ``state`` packs ``[h | c]`` as (batch, 2H).

        Gate layout in ``w`` (in + H, 4H) is input, forget, cell, output.
        Rows with ``mask == 0`` carry their state through unchanged.
        """
        H = state.shape[1] // 2
        xv, sv, wv = x.value, state.value, w.value
        if wv.shape != (xv.shape[1] + H, 4 * H) or b.shape != (4 * H,):
            raise ShapeMismatch(f"lstm_cell: input {xv.shape}, state {sv.shape}, weight {wv.shape}")
        h, c = sv[:, :H], sv[:, H:]
        xh = np.concatenate([xv, h], axis=1)
        z = xh @ wv + b.value
        i = _sigmoid(z[:, :H])
        f = _sigmoid(z[:, H:2 * H])
        gg = np.tanh(z[:, 2 * H:3 * H])
        o = _sigmoid(z[:, 3 * H:])
        c_new = f * c + i * gg
        tc = np.tanh(c_new)
        h_new = o * tc
        out = np.concatenate([h_new, c_new], axis=1)
        m = None
        if mask is not None:
            m = np.asarray(mask, dtype=np.float64).reshape(-1, 1)
            out = m * out + (1.0 - m) * sv
        n_in = xv.shape[1]

        def vjp(g):
            if m is not None:
                g_cell, g_skip = g * m, g * (1.0 - m)
            else:
                g_cell, g_skip = g, None
            dh, dc = g_cell[:, :H], g_cell[:, H:]
            dc = dc + dh * o * (1.0 - tc * tc)
            dz = np.concatenate([
                dc * gg * i * (1.0 - i),
                dc * c * f * (1.0 - f),
                dc * i * (1.0 - gg * gg),
                dh * tc * o * (1.0 - o),
            ], axis=1)
            dxh = dz @ wv.T
            dstate = np.concatenate([dxh[:, n_in:], dc * f], axis=1)
            if g_skip is not None:
                dstate += g_skip
            return dxh[:, :n_in], dstate, xh.T @ dz, dz.sum(axis=0)

        return self._push("lstm_cell", out, (x, state, w, b), vjp)

    def follow(self, x: Node, r: Node, follower) -> Node:
        """Relation-set following through any follower exposing forward/backward."""
        xv, rv = x.value, r.value
        y = follower.forward(xv, rv)
        return self._push(f"follow:{follower.strategy}", y, (x, r),
                          lambda g: follower.backward(xv, rv, g))

    def softmax_xent(self, logits: Node, target):
        """Fused softmax + cross-entropy, averaged over the batch.

        ``target`` rows are distributions (uniform over multi-answer sets).
        Returns the scalar loss node and the softmax probabilities.
        """
        z = logits.value
        t = np.asarray(target, dtype=np.float64)
        if t.shape != z.shape:
            raise ShapeMismatch(f"target {t.shape} vs logits {z.shape}")
        logp = _log_softmax(z)
        p = np.exp(logp)
        nb = z.shape[0] if z.ndim == 2 else 1
        loss = -(t * logp).sum() / nb
        tsum = t.sum(axis=-1, keepdims=True)
        node = self._push("softmax_xent", np.asarray(loss), (logits,),
                          lambda g: (g * (p * tsum - t) / nb,))
        return node, p

    # ------------------------------------------------------------ reverse pass

    def backward(self, loss: Node):
        if loss.value.size != 1:
            raise NonScalarLoss(f"loss has shape {loss.value.shape}")
        grads = [None] * len(self.nodes)
        grads[loss.id] = np.ones_like(loss.value)
        for node in reversed(self.nodes[: loss.id + 1]):
            g = grads[node.id]
            if g is None or node.vjp is None or not node.requires_grad:
                continue
            for parent, pg in zip(node.parents, node.vjp(g)):
                if not parent.requires_grad:
                    continue
                prev = grads[parent.id]
                grads[parent.id] = pg if prev is None else prev + pg
        self.grads = grads
        return grads

    def grad(self, node: Node):
        if self.grads is None:
            raise RuntimeError("backward() has not been run")
        g = self.grads[node.id]
        return np.zeros_like(node.value) if g is None else g

    def param_grads(self) -> dict[str, np.ndarray]:
        return {name: self.grad(node) for name, node in self._param_nodes.items()}


def backward(tape: Tape, loss: Node, params=None) -> dict[str, np.ndarray]:
    """Run the reverse pass; with ``params``, add gradients into its buffers."""
    tape.backward(loss)
    grads = tape.param_grads()
    if params is not None:
        for name, g in grads.items():
            params.grads[name] += g
    return grads
