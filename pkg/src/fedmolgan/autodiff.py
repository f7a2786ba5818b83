"""Dense-tensor engine with tape-based reverse-mode differentiation.

Every op records a node on the ambient tape; a node's backward rule is itself
written in terms of taped ops, so calling `backward(..., create_graph=True)`
materializes the gradient computation on the tape and a second backward pass
yields exact second-order gradients (needed for the gradient penalty).

Arrays are float32 by default; float64 is supported throughout as a shadow
mode for tighter gradient-check tolerances.
"""

from __future__ import annotations

import os
import threading
from contextlib import contextmanager

import numpy as np

from . import kernels as K


class ShapeMismatch(ValueError):
    pass


class NonScalarOutput(ValueError):
    pass


class NonPositiveTemperature(ValueError):
    pass


class NotADistribution(ValueError):
    pass


DEBUG_CHECKS = os.environ.get("FEDMOLGAN_DEBUG_CHECKS", "") == "1"

_state = threading.local()


def _st():
    if not hasattr(_state, "tape"):
        _state.tape = None
        _state.grad_enabled = True
    return _state


class Tensor:
    """Shape + row-major float buffer, optionally attached to the tape."""

    __slots__ = ("data", "requires_grad", "node")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self.data = np.ascontiguousarray(arr)
        self.requires_grad = requires_grad
        self.node = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype.name}, leaf={self.requires_grad})"


class TapeNode:
    __slots__ = ("op", "inputs", "output", "vjp")

    def __init__(self, op, inputs, output, vjp):
        self.op = op
        self.inputs = inputs
        self.output = output
        self.vjp = vjp


class Tape:
    """Append-only op record; one per training step, never shared across tasks."""

    def __init__(self):
        self.nodes: list[TapeNode] = []

    def __enter__(self):
        st = _st()
        self._prev = st.tape
        st.tape = self
        return self

    def __exit__(self, *exc):
        _st().tape = self._prev
        return False


@contextmanager
def no_grad():
    st = _st()
    prev = st.grad_enabled
    st.grad_enabled = False
    try:
        yield
    finally:
        st.grad_enabled = prev


def parameter(data, dtype=np.float32) -> Tensor:
    return Tensor(np.array(data, dtype=dtype), requires_grad=True)


def constant(data, dtype=None) -> Tensor:
    return Tensor(data, dtype=dtype)


def _tracked(t: Tensor) -> bool:
    return t.requires_grad or t.node is not None


def _record(op: str, inputs: tuple, out_data: np.ndarray, vjp) -> Tensor:
    if DEBUG_CHECKS and not np.all(np.isfinite(out_data)):
        raise FloatingPointError(f"non-finite output from op {op}")
    out = Tensor(out_data)
    st = _st()
    if st.tape is not None and st.grad_enabled and any(_tracked(t) for t in inputs):
        node = TapeNode(op, inputs, out, vjp)
        st.tape.nodes.append(node)
        out.node = node
    return out


def _same_shape(a: Tensor, b: Tensor, op: str):
    if a.data.shape != b.data.shape:
        raise ShapeMismatch(f"{op}: {a.data.shape} vs {b.data.shape}")
    if a.data.dtype != b.data.dtype:
        raise ShapeMismatch(f"{op}: dtype {a.data.dtype} vs {b.data.dtype}")


# ---------------------------------------------------------------------------
# primitive ops


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeMismatch(f"matmul: {a.data.shape} vs {b.data.shape}")

    def vjp(g, needs):
        ga = matmul(g, transpose_last2(b)) if needs[0] else None
        gb = matmul(transpose_last2(a), g) if needs[1] else None
        return ga, gb

    return _record("matmul", (a, b), K.matmul(a.data, b.data), vjp)


def bmm(a: Tensor, b: Tensor) -> Tensor:
    if (
        a.data.ndim != 3
        or b.data.ndim != 3
        or a.data.shape[0] != b.data.shape[0]
        or a.data.shape[2] != b.data.shape[1]
    ):
        raise ShapeMismatch(f"bmm: {a.data.shape} vs {b.data.shape}")

    def vjp(g, needs):
        ga = bmm(g, transpose_last2(b)) if needs[0] else None
        gb = bmm(transpose_last2(a), g) if needs[1] else None
        return ga, gb

    return _record("bmm", (a, b), K.bmm(a.data, b.data), vjp)


def transpose_last2(x: Tensor) -> Tensor:
    def vjp(g, needs):
        return (transpose_last2(g),)

    return _record("transpose_last2", (x,), K.transpose_last2(x.data), vjp)


def permute_axes(x: Tensor, axes: tuple) -> Tensor:
    inv = tuple(np.argsort(axes))

    def vjp(g, needs):
        return (permute_axes(g, inv),)

    out = np.ascontiguousarray(np.transpose(x.data, axes))
    return _record("permute_axes", (x,), out, vjp)


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "add")

    def vjp(g, needs):
        return g, g

    return _record("add", (a, b), K.add(a.data, b.data), vjp)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "sub")

    def vjp(g, needs):
        return g, (scale(g, -1.0) if needs[1] else None)

    return _record("sub", (a, b), K.sub(a.data, b.data), vjp)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "mul")

    def vjp(g, needs):
        ga = mul(g, b) if needs[0] else None
        gb = mul(g, a) if needs[1] else None
        return ga, gb

    return _record("mul", (a, b), K.mul(a.data, b.data), vjp)


def div(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "div")
    out_holder = []

    def vjp(g, needs):
        ga = div(g, b) if needs[0] else None
        gb = scale(mul(g, div(out_holder[0], b)), -1.0) if needs[1] else None
        return ga, gb

    out = _record("div", (a, b), K.div(a.data, b.data), vjp)
    out_holder.append(out)
    return out


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    if b.data.ndim != 1 or x.data.shape[-1] != b.data.shape[0]:
        raise ShapeMismatch(f"add_bias: {x.data.shape} vs {b.data.shape}")
    if x.data.dtype != b.data.dtype:
        raise ShapeMismatch(f"add_bias: dtype {x.data.dtype} vs {b.data.dtype}")

    def vjp(g, needs):
        gb = None
        if needs[1]:
            d = b.data.shape[0]
            g2 = reshape(g, (-1, d))
            ones = constant(np.ones((1, g2.data.shape[0]), dtype=g.data.dtype))
            gb = reshape(matmul(ones, g2), (d,))
        return g, gb

    return _record("add_bias", (x, b), K.add_bias(x.data, b.data), vjp)


def scale(x: Tensor, c: float) -> Tensor:
    def vjp(g, needs):
        return (scale(g, c),)

    return _record("scale", (x,), K.scale(x.data, float(c)), vjp)


def add_scalar(x: Tensor, c: float) -> Tensor:
    def vjp(g, needs):
        return (g,)

    return _record("add_scalar", (x,), K.add_scalar(x.data, float(c)), vjp)


def tanh(x: Tensor) -> Tensor:
    out_holder = []

    def vjp(g, needs):
        y = out_holder[0]
        return (mul(g, add_scalar(scale(square(y), -1.0), 1.0)),)

    out = _record("tanh", (x,), K.tanh(x.data), vjp)
    out_holder.append(out)
    return out


def sigmoid(x: Tensor) -> Tensor:
    out_holder = []

    def vjp(g, needs):
        y = out_holder[0]
        return (mul(g, mul(y, add_scalar(scale(y, -1.0), 1.0))),)

    out = _record("sigmoid", (x,), K.sigmoid(x.data), vjp)
    out_holder.append(out)
    return out


def softmax(x: Tensor) -> Tensor:
    """Softmax over the last axis."""
    out_holder = []

    def vjp(g, needs):
        s = out_holder[0]
        t = mul(g, s)
        inner = tile_last(sum_last(t), x.data.shape[-1])
        return (mul(s, sub(g, inner)),)

    out = _record("softmax", (x,), K.softmax_last(x.data), vjp)
    out_holder.append(out)
    return out


def sum_all(x: Tensor) -> Tensor:
    shape = x.data.shape

    def vjp(g, needs):
        return (broadcast_full(g, shape),)

    return _record("sum_all", (x,), K.sum_all(x.data), vjp)


def broadcast_full(x: Tensor, shape: tuple) -> Tensor:
    if x.data.size != 1:
        raise ShapeMismatch(f"broadcast_full expects scalar, got {x.data.shape}")

    def vjp(g, needs):
        return (sum_all(g),)

    out = np.full(shape, x.data.reshape(()), dtype=x.data.dtype)
    return _record("broadcast_full", (x,), out, vjp)


def sum_last(x: Tensor) -> Tensor:
    n = x.data.shape[-1]

    def vjp(g, needs):
        return (tile_last(g, n),)

    return _record("sum_last", (x,), K.sum_last(x.data), vjp)


def tile_last(x: Tensor, n: int) -> Tensor:
    if x.data.shape[-1] != 1:
        raise ShapeMismatch(f"tile_last expects trailing 1, got {x.data.shape}")

    def vjp(g, needs):
        return (sum_last(g),)

    return _record("tile_last", (x,), K.tile_last(x.data, n), vjp)


def mean_all(x: Tensor) -> Tensor:
    return scale(sum_all(x), 1.0 / x.data.size)


def clip_min(x: Tensor, c: float) -> Tensor:
    mask = constant((x.data > c).astype(x.data.dtype))

    def vjp(g, needs):
        return (mul(g, mask),)

    return _record("clip_min", (x,), K.clip_min(x.data, float(c)), vjp)


def square(x: Tensor) -> Tensor:
    def vjp(g, needs):
        return (mul(g, scale(x, 2.0)),)

    return _record("square", (x,), K.square(x.data), vjp)


def sqrt(x: Tensor) -> Tensor:
    out_holder = []

    def vjp(g, needs):
        return (div(g, scale(out_holder[0], 2.0)),)

    out = _record("sqrt", (x,), K.sqrt(x.data), vjp)
    out_holder.append(out)
    return out


def log(x: Tensor) -> Tensor:
    def vjp(g, needs):
        return (div(g, x),)

    return _record("log", (x,), K.log(x.data), vjp)


def l2_norm(x: Tensor) -> Tensor:
    """Euclidean norm over all entries."""
    return sqrt(sum_all(square(x)))


def reshape(x: Tensor, shape) -> Tensor:
    orig = x.data.shape

    def vjp(g, needs):
        return (reshape(g, orig),)

    return _record("reshape", (x,), np.ascontiguousarray(x.data.reshape(shape)), vjp)


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = list(tensors)
    ax = axis % tensors[0].data.ndim
    widths = [t.data.shape[ax] for t in tensors]
    offsets = np.concatenate([[0], np.cumsum(widths)])

    def vjp(g, needs):
        outs = []
        for i in range(len(tensors)):
            if needs[i]:
                outs.append(slice_axis(g, ax, int(offsets[i]), int(offsets[i + 1])))
            else:
                outs.append(None)
        return tuple(outs)

    out = np.ascontiguousarray(np.concatenate([t.data for t in tensors], axis=ax))
    return _record("concat", tuple(tensors), out, vjp)


def slice_axis(x: Tensor, axis: int, start: int, stop: int) -> Tensor:
    total = x.data.shape[axis]

    def vjp(g, needs):
        return (pad_axis(g, axis, start, total),)

    idx = [slice(None)] * x.data.ndim
    idx[axis] = slice(start, stop)
    out = np.ascontiguousarray(x.data[tuple(idx)])
    return _record("slice_axis", (x,), out, vjp)


def pad_axis(x: Tensor, axis: int, start: int, total: int) -> Tensor:
    """Embed x into a zero tensor whose `axis` has length `total`."""
    width = x.data.shape[axis]

    def vjp(g, needs):
        return (slice_axis(g, axis, start, start + width),)

    shape = list(x.data.shape)
    shape[axis] = total
    out = np.zeros(shape, dtype=x.data.dtype)
    idx = [slice(None)] * x.data.ndim
    idx[axis] = slice(start, start + width)
    out[tuple(idx)] = x.data
    return _record("pad_axis", (x,), out, vjp)


def straight_through_onehot(soft: Tensor) -> Tensor:
    """Hard one-hot of the last-axis argmax; gradients pass to the soft input."""

    def vjp(g, needs):
        return (g,)

    return _record("st_onehot", (soft,), K.argmax_onehot_last(soft.data), vjp)


def dropout(x: Tensor, ratio: float, rng=None, training: bool = True, mask=None) -> Tensor:
    """Inverted dropout: zero with probability `ratio`, scale kept by 1/(1-ratio)."""
    if not training or ratio == 0.0:
        return x
    if not (0.0 <= ratio < 1.0):
        raise ValueError(f"dropout ratio {ratio} outside [0, 1)")
    if mask is None:
        mask = (rng.random(x.data.shape) >= ratio).astype(x.data.dtype)
    keep = constant(np.asarray(mask, dtype=x.data.dtype))
    return scale(mul(x, keep), 1.0 / (1.0 - ratio))


# ---------------------------------------------------------------------------
# backward


def backward(output: Tensor, wrt, create_graph: bool = False):
    """Gradients of a scalar output for each tensor in `wrt`.

    With create_graph=True the gradient computation is recorded on the tape,
    so a further backward pass differentiates through it (second order).
    """
    if output.data.size != 1:
        raise NonScalarOutput(f"output has shape {output.data.shape}")
    st = _st()
    tape = st.tape
    if tape is None:
        raise RuntimeError("backward requires an active Tape")
    wrt = list(wrt)
    wrt_ids = {id(t) for t in wrt}

    # Forward sweep: which tensors lie on a path from a wrt tensor.
    dep = set(wrt_ids)
    for node in tape.nodes:
        if any(id(t) in dep for t in node.inputs):
            dep.add(id(node.output))

    cot: dict[int, Tensor] = {id(output): constant(np.ones_like(output.data))}
    ctx = _NullCtx() if create_graph else no_grad()
    with ctx:
        for node in reversed(tape.nodes):
            oid = id(node.output)
            g = cot.get(oid)
            if g is None:
                continue
            if oid not in wrt_ids:
                del cot[oid]
            needs = tuple(id(t) in dep for t in node.inputs)
            if not any(needs):
                continue
            grads = node.vjp(g, needs)
            for t, gi in zip(node.inputs, grads):
                if gi is None or id(t) not in dep:
                    continue
                prev = cot.get(id(t))
                cot[id(t)] = gi if prev is None else add(prev, gi)

    results = []
    for t in wrt:
        g = cot.get(id(t))
        results.append(g if g is not None else constant(np.zeros_like(t.data)))
    return results


class _NullCtx:
    def __enter__(self):
        return self

    def __exit__(self, *exc):
        return False


# ---------------------------------------------------------------------------
# optimizer


class AdamState:
    """Adam moments plus the stepwise-decayed learning-rate schedule."""

    def __init__(
        self,
        lr: float = 1e-4,
        beta1: float = 0.5,
        beta2: float = 0.999,
        eps: float = 1e-8,
        lr_decay_interval: int = 1000,
        lr_decay_factor: float = 100.0,
    ):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.lr_decay_interval = lr_decay_interval
        self.lr_decay_factor = lr_decay_factor
        self.step_count = 0
        self.m: list[np.ndarray] | None = None
        self.v: list[np.ndarray] | None = None

    def lr_at_epoch(self, epoch: int) -> float:
        k = epoch // self.lr_decay_interval if self.lr_decay_interval > 0 else 0
        return self.lr / (self.lr_decay_factor**k)


def adam_step(state: AdamState, params, grads, epoch: int = 0):
    """One in-place Adam update with bias correction. Returns the params."""
    params = list(params)
    grads = list(grads)
    if state.m is None:
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
    if len(params) != len(grads):
        raise ShapeMismatch(f"adam_step: {len(params)} params vs {len(grads)} grads")
    state.step_count += 1
    t = state.step_count
    lr = state.lr_at_epoch(epoch)
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for i, (p, g) in enumerate(zip(params, grads)):
        ga = g.data if isinstance(g, Tensor) else np.asarray(g)
        if ga.shape != p.data.shape:
            raise ShapeMismatch(f"adam_step param {i}: {p.data.shape} vs grad {ga.shape}")
        m = state.m[i]
        v = state.v[i]
        m *= b1
        m += (1.0 - b1) * ga
        v *= b2
        v += (1.0 - b2) * np.square(ga)
        p.data -= (lr / c1) * m / (np.sqrt(v / c2) + state.eps)
    return params


# ---------------------------------------------------------------------------
# sampling


def gumbel_softmax_sample(logits: Tensor, temperature: float, hard: bool, rng) -> Tensor:
    """Softmax((logits + Gumbel noise)/T); hard mode returns straight-through one-hots."""
    if temperature <= 0:
        raise NonPositiveTemperature(f"temperature {temperature} must be > 0")
    u = rng.random(logits.data.shape)
    noise = -np.log(-np.log(u + 1e-20) + 1e-20)
    shifted = add(logits, constant(noise.astype(logits.data.dtype)))
    soft = softmax(scale(shifted, 1.0 / float(temperature)))
    if hard:
        return straight_through_onehot(soft)
    return soft


def categorical_sample(probabilities, rng) -> Tensor:
    """One one-hot row per probability row; not differentiable."""
    p = probabilities.data if isinstance(probabilities, Tensor) else np.asarray(probabilities)
    rows = p.reshape(-1, p.shape[-1])
    sums = rows.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > 1e-5) or np.any(rows < 0):
        raise NotADistribution("rows must be non-negative and sum to 1 within 1e-5")
    cdf = np.cumsum(rows / sums[:, None], axis=1)
    u = rng.random((rows.shape[0], 1))
    idx = (cdf <= u).sum(axis=1)
    idx = np.minimum(idx, p.shape[-1] - 1)
    out = np.zeros_like(rows, dtype=np.float32 if p.dtype != np.float64 else np.float64)
    out[np.arange(rows.shape[0]), idx] = 1
    return Tensor(out.reshape(p.shape))


def xavier_uniform(rng, fan_in: int, fan_out: int, shape=None, dtype=np.float32) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    if shape is None:
        shape = (fan_in, fan_out)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)
