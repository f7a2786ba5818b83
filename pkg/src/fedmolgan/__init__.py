"""Federated adversarial training simulator for small molecular graphs."""

from .kernels import backend_name as kernel_backend

__version__ = "0.1.0"

__all__ = ["kernel_backend", "__version__"]
