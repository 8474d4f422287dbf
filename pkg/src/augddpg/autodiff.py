"""Minimal double-precision tensors with reverse-mode differentiation.

Every primitive returns a new :class:`Tensor` that remembers its parents and a
closure propagating the upstream gradient to them.  :func:`backward` walks the
recorded graph once in reverse topological order and then releases it, so a
graph (the "tape") serves exactly one backward pass.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

CHECKPOINT_FORMAT = "augddpg-checkpoint"
CHECKPOINT_VERSION = 1


class ShapeError(ValueError):
    """Operand shapes are incompatible for a primitive."""


class ContractError(RuntimeError):
    """A precondition of backward or of an optimizer step was violated."""


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def detach(self):
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data, parents, backward):
    parents = tuple(parents)
    out = Tensor(data, requires_grad=any(p.requires_grad for p in parents))
    if out.requires_grad:
        out._parents = parents
        out._backward = backward
    return out


def _accumulate(t, g):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64, copy=True)
    else:
        t.grad = t.grad + g


def _unbroadcast(g, shape):
    # sum out the axes numpy broadcasting added or stretched
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _check_broadcast(op, a, b):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: cannot broadcast shapes {a.shape} and {b.shape}") from None


# ---------------------------------------------------------------- elementwise

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("add", a, b)

    def backward(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(g, b.shape))

    return _result(a.data + b.data, (a, b), backward)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("sub", a, b)

    def backward(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(-g, b.shape))

    return _result(a.data - b.data, (a, b), backward)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("mul", a, b)

    def backward(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(g * a.data, b.shape))

    return _result(a.data * b.data, (a, b), backward)


def relu(x):
    x = as_tensor(x)
    mask = x.data > 0

    def backward(g):
        _accumulate(x, g * mask)

    return _result(np.where(mask, x.data, 0.0), (x,), backward)


def tanh(x):
    x = as_tensor(x)
    y = np.tanh(x.data)

    def backward(g):
        _accumulate(x, g * (1.0 - y * y))

    return _result(y, (x,), backward)


def sigmoid(x):
    x = as_tensor(x)
    y = _sigmoid(x.data)

    def backward(g):
        _accumulate(x, g * y * (1.0 - y))

    return _result(y, (x,), backward)


def log(x):
    x = as_tensor(x)

    def backward(g):
        _accumulate(x, g / x.data)

    return _result(np.log(x.data), (x,), backward)


def softmax(x):
    """Softmax over the last axis."""
    x = as_tensor(x)
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        _accumulate(x, y * (g - (g * y).sum(axis=-1, keepdims=True)))

    return _result(y, (x,), backward)


# ---------------------------------------------------------------- reductions

def sum(x, axis=None):  # noqa: A001 - mirrors numpy naming
    x = as_tensor(x)

    def backward(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        _accumulate(x, np.broadcast_to(g, x.shape))

    return _result(x.data.sum(axis=axis), (x,), backward)


def mean(x, axis=None):
    x = as_tensor(x)
    n = x.data.size if axis is None else x.data.shape[axis]

    def backward(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        _accumulate(x, np.broadcast_to(g / n, x.shape))

    return _result(x.data.mean(axis=axis), (x,), backward)


# ---------------------------------------------------------------- structure

def reshape(x, shape):
    x = as_tensor(x)
    try:
        y = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {x.shape} into {shape}") from None

    def backward(g):
        _accumulate(x, g.reshape(x.shape))

    return _result(y, (x,), backward)


def take(x, index, axis=-1):
    """Select one entry per row along ``axis`` (``index`` has the other axes' shape)."""
    x = as_tensor(x)
    index = np.asarray(index, dtype=np.intp)
    idx = np.expand_dims(index, axis)
    y = np.take_along_axis(x.data, idx, axis=axis).squeeze(axis)

    def backward(g):
        gx = np.zeros(x.shape)
        np.put_along_axis(gx, idx, np.expand_dims(g, axis), axis=axis)
        _accumulate(x, gx)

    return _result(y, (x,), backward)


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")

    def backward(g):
        if a.requires_grad:
            _accumulate(a, g @ b.data.T)
        if b.requires_grad:
            _accumulate(b, a.data.T @ g)

    return _result(a.data @ b.data, (a, b), backward)


def linear(x, weight, bias=None):
    """``x @ weight + bias`` with weight stored as (in, out)."""
    y = matmul(x, weight)
    return y if bias is None else add(y, bias)


def conv2d(x, weight, bias=None):
    """Valid-padding, stride-1 cross-correlation.

    x: (N, C, H, W); weight: (O, C, kh, kw); bias: (O,).  Output (N, O, H-kh+1, W-kw+1).
    """
    x, weight = as_tensor(x), as_tensor(weight)
    if x.data.ndim != 4 or weight.data.ndim != 4 or x.shape[1] != weight.shape[1]:
        raise ShapeError(f"conv2d: incompatible shapes {x.shape} and {weight.shape}")
    _, _, kh, kw = weight.shape
    if kh > x.shape[2] or kw > x.shape[3]:
        raise ShapeError(f"conv2d: kernel {weight.shape} larger than input {x.shape}")
    n, c = x.shape[0], x.shape[1]
    o = weight.shape[0]
    windows = sliding_window_view(x.data, (kh, kw), axis=(2, 3))  # N C Ho Wo kh kw
    ho, wo = windows.shape[2], windows.shape[3]
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * kh * kw)
    wmat = weight.data.reshape(o, c * kh * kw)
    out = (cols @ wmat.T).reshape(n, ho, wo, o).transpose(0, 3, 1, 2)
    parents = [x, weight]
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.data[None, :, None, None]
        parents.append(bias)

    def backward(g):
        gf = g.transpose(0, 2, 3, 1).reshape(-1, o)
        if weight.requires_grad:
            _accumulate(weight, (gf.T @ cols).reshape(weight.shape))
        if bias is not None and bias.requires_grad:
            _accumulate(bias, gf.sum(axis=0))
        if x.requires_grad:
            dcols = (gf @ wmat).reshape(n, ho, wo, c, kh, kw)
            gx = np.zeros(x.shape)
            for i in range(kh):
                for j in range(kw):
                    gx[:, :, i:i + ho, j:j + wo] += dcols[..., i, j].transpose(0, 3, 1, 2)
            _accumulate(x, gx)

    return _result(out, parents, backward)


def _sigmoid(v):
    return 0.5 * (1.0 + np.tanh(0.5 * v))


def gru_cell(x, h, w_ih, w_hh, b_ih, b_hh):
    """One GRU step.

    Weights are stored (in, 3H) and (H, 3H) with gate blocks ordered reset,
    update, candidate::

        r  = sigmoid(x W_ir + b_ir + h W_hr + b_hr)
        z  = sigmoid(x W_iz + b_iz + h W_hz + b_hz)
        n  = tanh(x W_in + b_in + r * (h W_hn + b_hn))
        h' = (1 - z) * n + z * h
    """
    x, h = as_tensor(x), as_tensor(h)
    w_ih, w_hh, b_ih, b_hh = map(as_tensor, (w_ih, w_hh, b_ih, b_hh))
    hidden = h.shape[-1]
    if (x.data.ndim != 2 or h.data.ndim != 2 or x.shape[0] != h.shape[0]
            or w_ih.shape != (x.shape[1], 3 * hidden) or w_hh.shape != (hidden, 3 * hidden)
            or b_ih.shape != (3 * hidden,) or b_hh.shape != (3 * hidden,)):
        raise ShapeError(
            f"gru_cell: incompatible shapes x{x.shape} h{h.shape} "
            f"w_ih{w_ih.shape} w_hh{w_hh.shape} b_ih{b_ih.shape} b_hh{b_hh.shape}")
    H = hidden
    gi = x.data @ w_ih.data + b_ih.data
    gh = h.data @ w_hh.data + b_hh.data
    r = _sigmoid(gi[:, :H] + gh[:, :H])
    z = _sigmoid(gi[:, H:2 * H] + gh[:, H:2 * H])
    hn = gh[:, 2 * H:]
    n = np.tanh(gi[:, 2 * H:] + r * hn)
    out = (1.0 - z) * n + z * h.data

    def backward(g):
        dn = g * (1.0 - z)
        dz = g * (h.data - n)
        dn_pre = dn * (1.0 - n * n)
        dr = dn_pre * hn
        dr_pre = dr * r * (1.0 - r)
        dz_pre = dz * z * (1.0 - z)
        dgi = np.concatenate([dr_pre, dz_pre, dn_pre], axis=1)
        dgh = np.concatenate([dr_pre, dz_pre, dn_pre * r], axis=1)
        if w_ih.requires_grad:
            _accumulate(w_ih, x.data.T @ dgi)
        if w_hh.requires_grad:
            _accumulate(w_hh, h.data.T @ dgh)
        _accumulate(b_ih, dgi.sum(axis=0))
        _accumulate(b_hh, dgh.sum(axis=0))
        if x.requires_grad:
            _accumulate(x, dgi @ w_ih.data.T)
        if h.requires_grad:
            _accumulate(h, dgh @ w_hh.data.T + g * z)

    return _result(out, (x, h, w_ih, w_hh, b_ih, b_hh), backward)


# ---------------------------------------------------------------- backward

def _topological(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss):
    """Populate ``.grad`` on every leaf reachable from the scalar ``loss``.

    Interior nodes are released afterwards, so the graph cannot be replayed.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    order = _topological(loss)
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is not None:
            if node.grad is not None:
                node._backward(node.grad)
            node._backward = None
            node._parents = ()
            node.grad = None


# ---------------------------------------------------------------- init & optim

def glorot_uniform(rng, shape, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


@dataclass
class AdamState:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_step(params, state: AdamState, maximize=False):
    """One bias-corrected Adam update; gradients are cleared afterwards."""
    for p in params:
        if p.grad is None:
            raise ContractError(f"adam_step: parameter {p.name or p.shape} has no gradient")
    if not state.m:
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
    state.step += 1
    c1 = 1.0 - state.beta1 ** state.step
    c2 = 1.0 - state.beta2 ** state.step
    for p, m, v in zip(params, state.m, state.v):
        g = -p.grad if maximize else p.grad
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p.data -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        p.grad = None
    return params, state


class Adam:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.state = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps)

    def step(self, maximize=False):
        adam_step(self.params, self.state, maximize=maximize)

    def zero_grad(self):
        for p in self.params:
            p.grad = None


# ---------------------------------------------------------------- checkpoint

def save_checkpoint(path, params, meta=None):
    """Write named parameters as JSON; floats use round-trip repr."""
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "meta": meta or {},
        "params": {name: {"shape": list(t.data.shape), "values": t.data.ravel().tolist()}
                   for name, t in params.items()},
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True) + "\n", encoding="utf-8")


def load_checkpoint(path):
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("format") != CHECKPOINT_FORMAT or "version" not in payload:
        raise ValueError(f"{path}: not a checkpoint file")
    if payload["version"] != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {payload['version']}")
    params = {name: np.asarray(spec["values"], dtype=np.float64).reshape(spec["shape"])
              for name, spec in payload["params"].items()}
    return params, payload["meta"]
