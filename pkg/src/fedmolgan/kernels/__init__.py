"""Hot array kernels with a compiled core and a pure-numpy fallback.

The compiled extension (Cython, GEMM via scipy's BLAS bindings) is picked at
import time when available; set FEDMOLGAN_BACKEND=python or =compiled to force
a choice. Both backends expose the same forward-only array functions; all
differentiation logic lives above this layer, so the backends are
interchangeable up to float rounding.
"""

import os

from . import _py_impl

_KERNEL_NAMES = [
    "matmul",
    "bmm",
    "transpose_last2",
    "add",
    "sub",
    "mul",
    "div",
    "add_bias",
    "scale",
    "add_scalar",
    "tanh",
    "sigmoid",
    "softmax_last",
    "sum_all",
    "sum_last",
    "tile_last",
    "clip_min",
    "square",
    "sqrt",
    "log",
    "argmax_onehot_last",
    "pair_intersect_counts",
    "popcount_rows",
]


def load_backend(name: str):
    """Return the kernel module for `name` ('python' or 'compiled')."""
    if name == "python":
        return _py_impl
    if name == "compiled":
        from . import _cy_impl

        return _cy_impl
    raise ValueError(f"unknown kernel backend {name!r}")


def available_backends() -> list[str]:
    names = ["python"]
    try:
        load_backend("compiled")
        names.append("compiled")
    except ImportError:
        pass
    return names


_requested = os.environ.get("FEDMOLGAN_BACKEND", "auto")
if _requested == "auto":
    try:
        _impl = load_backend("compiled")
        backend_name = "compiled"
    except ImportError:
        _impl = _py_impl
        backend_name = "python"
elif _requested in ("python", "py"):
    _impl = _py_impl
    backend_name = "python"
elif _requested in ("compiled", "cy"):
    _impl = load_backend("compiled")
    backend_name = "compiled"
else:
    raise RuntimeError(f"FEDMOLGAN_BACKEND={_requested!r} not recognized")

globals().update({name: getattr(_impl, name) for name in _KERNEL_NAMES})

__all__ = _KERNEL_NAMES + ["backend_name", "load_backend", "available_backends"]
