import logging
from typing import Dict, List, Optional

import numpy as np

from subnet_forge.autodiff.kernels import KERNELS
from subnet_forge.autodiff.parameter_store import ParameterStore
from subnet_forge.exceptions import GraphError, NumericError

logger = logging.getLogger(__name__)


class Tensor:
    """Dense array with an optional gradient buffer of identical shape."""

    __slots__ = ('values', 'grad', 'requires_grad', 'name', 'node_index')

    def __init__(self, values: np.ndarray, requires_grad: bool = False, name: Optional[str] = None):
        self.values = values
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.name = name
        self.node_index: Optional[int] = None

    @property
    def shape(self):
        return self.values.shape

    def item(self) -> float:
        if self.values.size != 1:
            raise GraphError(f"item() needs a scalar tensor, got shape {self.shape}")
        return float(self.values.reshape(-1)[0])

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}, name={self.name})"


class Node:
    __slots__ = ('index', 'kind', 'inputs', 'output', 'backward_fn')

    def __init__(self, index: int, kind: str, inputs: List[Tensor], output: Tensor, backward_fn):
        self.index = index
        self.kind = kind
        self.inputs = inputs
        self.output = output
        self.backward_fn = backward_fn


class ComputationGraph:
    """Tape of recorded operations.

    Nodes are appended as they are computed, so recording order is a
    topological order. A graph supports exactly one backward pass.
    """

    def __init__(self):
        self.nodes: List[Node] = []
        self.parameters: Dict[str, Tensor] = {}
        self._finished = False

    def constant(self, values: np.ndarray, name: Optional[str] = None) -> Tensor:
        return Tensor(np.asarray(values), requires_grad=False, name=name)

    def parameter(self, name: str, values: np.ndarray) -> Tensor:
        if name in self.parameters:
            raise GraphError(f"Parameter {name} bound twice")
        tensor = Tensor(values, requires_grad=True, name=name)
        self.parameters[name] = tensor
        return tensor

    def bind(self, store: ParameterStore) -> Dict[str, Tensor]:
        return {name: self.parameter(name, values) for name, values in store.items()}

    def forward_op(self, kind: str, *inputs: Tensor, **attributes) -> Tensor:
        if self._finished:
            raise GraphError("Graph already ran backward; build a new graph for a new forward pass")
        kernel = KERNELS.get(kind)
        if kernel is None:
            raise GraphError(f"Unknown kernel: {kind}")
        values, backward_fn = kernel(*[t.values for t in inputs], **attributes)
        if not np.isfinite(values).all():
            raise NumericError(f"{kind} produced non-finite values")
        output = Tensor(values, requires_grad=any(t.requires_grad for t in inputs))
        node = Node(len(self.nodes), kind, list(inputs), output, backward_fn)
        output.node_index = node.index
        self.nodes.append(node)
        return output

    def backward(self, loss: Tensor) -> Dict[str, np.ndarray]:
        """Populate gradients of every bound parameter with respect to loss.

        Parameters that do not reach the loss receive zero gradients.
        """
        if self._finished:
            raise GraphError("backward already ran on this graph; run a new forward pass first")
        if loss.values.size != 1:
            raise GraphError(f"backward needs a scalar loss, got shape {loss.shape}")
        self._finished = True
        loss.grad = np.ones_like(loss.values)
        last = loss.node_index if loss.node_index is not None else -1
        for node in reversed(self.nodes[:last + 1]):
            grad = node.output.grad
            if grad is None:
                continue
            for tensor, input_grad in zip(node.inputs, node.backward_fn(grad)):
                if input_grad is None or not tensor.requires_grad:
                    continue
                if not np.isfinite(input_grad).all():
                    raise NumericError(f"Non-finite gradient flowing out of {node.kind}")
                tensor.grad = input_grad if tensor.grad is None else tensor.grad + input_grad
        logger.debug("Backward visited %d nodes", last + 1)
        return {name: tensor.grad if tensor.grad is not None else np.zeros_like(tensor.values)
                for name, tensor in self.parameters.items()}


def backward(loss: Tensor, graph: ComputationGraph) -> Dict[str, np.ndarray]:
    return graph.backward(loss)
