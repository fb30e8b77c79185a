"""
Tensor values and the recorded computation graph.

A Graph is a tape: while it is active (``with Graph() as graph:``) every op
whose inputs include a gradient-requiring tensor appends a Node. Replaying the
nodes in insertion order reproduces the forward values; the reverse pass walks
them backwards exactly once.
"""

import threading
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..errors import ContractError

_local = threading.local()


def current_graph() -> Optional["Graph"]:
    """Innermost active graph of the calling thread, or None."""
    stack = getattr(_local, "stack", None)
    return stack[-1] if stack else None


class Tensor:
    """Dense float64 array taking part in reverse-mode differentiation.

    Parameters
    ----------
    data : array_like
        Values; copied and converted to float64.
    requires_grad : bool
        Leaf tensors with this flag receive ``grad`` after a backward pass.
    """

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.node: Optional["Node"] = None

    @classmethod
    def wrap(cls, array: np.ndarray, requires_grad: bool = False) -> "Tensor":
        """Wrap a float64 array without copying."""
        t = cls.__new__(cls)
        t.data = np.asarray(array, dtype=np.float64)
        t.requires_grad = requires_grad
        t.grad = None
        t.node = None
        return t

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single value, tensor has shape {self.shape}")
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def detach(self) -> "Tensor":
        return Tensor.wrap(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # Operator sugar; the ops themselves live in functional.

    def __add__(self, other):
        from . import functional as F
        return F.add(self, other)

    def __radd__(self, other):
        from . import functional as F
        return F.add(other, self)

    def __sub__(self, other):
        from . import functional as F
        return F.sub(self, other)

    def __rsub__(self, other):
        from . import functional as F
        return F.sub(other, self)

    def __mul__(self, other):
        from . import functional as F
        return F.mul(self, other)

    def __rmul__(self, other):
        from . import functional as F
        return F.mul(other, self)

    def __truediv__(self, other):
        from . import functional as F
        return F.div(self, other)

    def __rtruediv__(self, other):
        from . import functional as F
        return F.div(other, self)

    def __neg__(self):
        from . import functional as F
        return F.neg(self)


BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]
VjpFn = Callable[[Tensor, Sequence[bool]], Sequence[Optional[Tensor]]]


@dataclass
class Node:
    """One executed operation.

    Attributes
    ----------
    index : int
        Position in the graph's insertion order.
    op : str
        Operation name.
    inputs : tuple of Tensor
        Operands, in call order.
    output : Tensor
        Result tensor.
    backward : callable
        Numeric vector-Jacobian product: output gradient -> input gradients.
    vjp : callable or None
        The same product expressed with recorded ops, for gradients that must
        themselves be differentiated. Data-dependent factors of nonlinear ops
        enter it as constants.
    graph : Graph
        Owning graph.
    """

    index: int
    op: str
    inputs: Tuple[Tensor, ...]
    output: Tensor
    backward: BackwardFn
    vjp: Optional[VjpFn]
    graph: "Graph"


class Graph:
    """Eagerly recorded computation graph (one per training iteration)."""

    def __init__(self):
        self.nodes: List[Node] = []

    def __enter__(self) -> "Graph":
        stack = getattr(_local, "stack", None)
        if stack is None:
            stack = _local.stack = []
        stack.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _local.stack.pop()
        return False

    def __len__(self):
        return len(self.nodes)

    def record(self, op: str, inputs: Sequence[Tensor], output: Tensor,
               backward: BackwardFn, vjp: Optional[VjpFn] = None) -> Node:
        node = Node(len(self.nodes), op, tuple(inputs), output, backward, vjp, self)
        self.nodes.append(node)
        output.node = node
        output.requires_grad = True
        return node

    def _owns(self, t: Tensor) -> bool:
        return t.node is not None and t.node.graph is self

    def _check_output(self, output: Tensor):
        if output.data.ndim != 0 and output.data.size != 1:
            raise ContractError(f"backward needs a scalar loss, got shape {output.shape}")
        if not self._owns(output) and not output.requires_grad:
            raise ContractError("loss was not produced through this graph")

    def _dependents(self, output: Tensor, inputs: Sequence[Tensor]) -> set:
        """ids of tensors between ``inputs`` and ``output``."""
        dep = {id(t) for t in inputs}
        last = output.node.index if self._owns(output) else -1
        for node in self.nodes[: last + 1]:
            if any(id(t) in dep for t in node.inputs):
                dep.add(id(node.output))
        return dep

    def _reverse(self, output: Tensor, dep: Optional[set], create_graph: bool) -> Dict[int, object]:
        if create_graph:
            from . import functional as F
            grads: Dict[int, object] = {id(output): Tensor(np.ones(output.shape))}
            accumulate = F.add
        else:
            grads = {id(output): np.ones(output.shape)}
            accumulate = np.add
        if not self._owns(output):
            return grads
        nodes = self.nodes[: output.node.index + 1]
        for node in reversed(nodes):
            g = grads.get(id(node.output))
            if g is None:
                continue
            if dep is not None and id(node.output) not in dep:
                continue
            needs = tuple(
                t.requires_grad and (dep is None or id(t) in dep) for t in node.inputs
            )
            if not any(needs):
                continue
            if create_graph:
                if node.vjp is None:
                    raise ContractError(f"'{node.op}' does not support differentiating its gradient")
                with self:
                    in_grads = node.vjp(g, needs)
            else:
                in_grads = node.backward(g)
            for t, gi, need in zip(node.inputs, in_grads, needs):
                if gi is None or not need:
                    continue
                key = id(t)
                if key in grads:
                    if create_graph:
                        with self:
                            grads[key] = accumulate(grads[key], gi)
                    else:
                        grads[key] = accumulate(grads[key], gi)
                else:
                    grads[key] = gi
        return grads

    def backward(self, loss: Tensor, inputs: Optional[Sequence[Tensor]] = None):
        """Populate ``grad`` on every gradient-requiring leaf behind ``loss``.

        Parameters
        ----------
        loss : Tensor
            Scalar produced through this graph.
        inputs : sequence of Tensor, optional
            Leaves that must end up with a gradient even when ``loss`` does
            not depend on them (they receive zeros).
        """
        self._check_output(loss)
        grads = self._reverse(loss, None, create_graph=False)
        leaves = {}
        for node in self.nodes:
            for t in node.inputs:
                if t.requires_grad and not self._owns(t):
                    leaves[id(t)] = t
        if loss.requires_grad and not self._owns(loss):
            leaves[id(loss)] = loss
        for t in inputs or ():
            leaves.setdefault(id(t), t)
        for key, t in leaves.items():
            g = grads.get(key)
            if g is None:
                g = np.zeros(t.shape)
            g = np.asarray(g, dtype=np.float64).reshape(t.shape)
            t.grad = g.copy() if t.grad is None else t.grad + g

    def gradient(self, output: Tensor, inputs: Sequence[Tensor],
                 create_graph: bool = False) -> List:
        """Gradients of a scalar ``output`` with respect to ``inputs``.

        Returns arrays, or recorded Tensors when ``create_graph`` is set so the
        result can be differentiated again. Leaves' ``grad`` is left untouched.
        """
        self._check_output(output)
        dep = self._dependents(output, inputs)
        grads = self._reverse(output, dep, create_graph)
        out = []
        for t in inputs:
            g = grads.get(id(t))
            if g is None:
                g = Tensor(np.zeros(t.shape)) if create_graph else np.zeros(t.shape)
            out.append(g)
        return out


def backward(loss: Tensor, graph: Graph, inputs: Optional[Sequence[Tensor]] = None):
    """Reverse pass over ``graph`` from ``loss``; see Graph.backward."""
    graph.backward(loss, inputs)
