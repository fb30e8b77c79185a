"""
Finite-difference check of recorded gradients.
"""

from typing import Callable

import numpy as np

from .tensor import Graph, Tensor


def numeric_gradient(f: Callable[[Tensor], Tensor], x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar-valued ``f`` at ``x``."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for i in range(x.size):
        orig = x.flat[i]
        x.flat[i] = orig + h
        up = f(Tensor(x)).item()
        x.flat[i] = orig - h
        down = f(Tensor(x)).item()
        x.flat[i] = orig
        grad.flat[i] = (up - down) / (2.0 * h)
    return grad


def analytic_gradient(f: Callable[[Tensor], Tensor], x: np.ndarray) -> np.ndarray:
    leaf = Tensor(x, requires_grad=True)
    with Graph() as graph:
        out = f(leaf)
    graph.backward(out, inputs=[leaf])
    return leaf.grad


def grad_check(f: Callable[[Tensor], Tensor], x, h: float = 1e-5) -> float:
    """Largest relative disagreement between recorded and numeric gradients.

    Parameters
    ----------
    f : callable
        Tensor -> scalar Tensor.
    x : Tensor or array_like
        Point of evaluation (finite).
    h : float
        Finite-difference step.

    Returns
    -------
    float
        max |analytic - numeric| / max(1, |analytic|, |numeric|).
    """
    data = x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)
    analytic = analytic_gradient(f, data)
    numeric = numeric_gradient(f, data, h)
    scale = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float(np.max(np.abs(analytic - numeric) / scale))
