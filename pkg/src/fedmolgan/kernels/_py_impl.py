"""Pure-numpy kernel implementations (fallback backend)."""

import numpy as np


def matmul(a, b):
    return a @ b


def bmm(a, b):
    return np.matmul(a, b)


def transpose_last2(x):
    return np.ascontiguousarray(np.swapaxes(x, -1, -2))


def add(a, b):
    return a + b


def sub(a, b):
    return a - b


def mul(a, b):
    return a * b


def div(a, b):
    return a / b


def add_bias(x, b):
    return x + b


def scale(x, c):
    return x * x.dtype.type(c)


def add_scalar(x, c):
    return x + x.dtype.type(c)


def tanh(x):
    return np.tanh(x)


def sigmoid(x):
    out = np.empty_like(x)
    np.negative(x, out=out)
    np.exp(out, out=out)
    out += 1.0
    np.reciprocal(out, out=out)
    return out


def softmax_last(x):
    shifted = x - x.max(axis=-1, keepdims=True)
    np.exp(shifted, out=shifted)
    shifted /= shifted.sum(axis=-1, keepdims=True)
    return shifted


def sum_all(x):
    return np.asarray(x.sum(), dtype=x.dtype)


def sum_last(x):
    return x.sum(axis=-1, keepdims=True)


def tile_last(x, n):
    """Repeat a trailing singleton axis n times: (..., 1) -> (..., n)."""
    return np.ascontiguousarray(np.broadcast_to(x, x.shape[:-1] + (n,)))


def clip_min(x, c):
    return np.maximum(x, x.dtype.type(c))


def square(x):
    return np.square(x)


def sqrt(x):
    return np.sqrt(x)


def log(x):
    return np.log(x)


def argmax_onehot_last(x):
    idx = np.argmax(x, axis=-1)
    out = np.zeros_like(x)
    np.put_along_axis(out, idx[..., None], x.dtype.type(1), axis=-1)
    return out


def pair_intersect_counts(a, b):
    """Popcounts of pairwise AND between packed uint64 rows: (n,w),(m,w)->(n,m)."""
    both = np.bitwise_and(a[:, None, :], b[None, :, :])
    return np.bitwise_count(both).sum(axis=-1, dtype=np.int64)


def popcount_rows(a):
    return np.bitwise_count(a).sum(axis=-1, dtype=np.int64)
