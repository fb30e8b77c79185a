"""
Minimal dense-tensor engine with eager graph recording and reverse-mode
gradients, sized for desk-scale GAN training on disparity maps.

Requires: numpy
"""

from .tensor import Graph, Node, Tensor, backward, current_graph
from .gradcheck import grad_check
from .optim import Adam
from . import functional

__all__ = [
    "Graph",
    "Node",
    "Tensor",
    "backward",
    "current_graph",
    "grad_check",
    "Adam",
    "functional",
]
