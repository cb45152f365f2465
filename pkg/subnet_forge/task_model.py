import logging
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from subnet_forge.autodiff.gradcheck import fd_gradient, max_relative_error
from subnet_forge.autodiff.graph import ComputationGraph, Tensor
from subnet_forge.autodiff.parameter_store import ParameterStore
from subnet_forge.constants import *
from subnet_forge.exceptions import ConfigError, DatasetError, ShapeError
from subnet_forge.models.model_config import ModelConfig
from subnet_forge.models.task_spec import TaskSpec
from subnet_forge.synthetic.example import Dataset, Example
from subnet_forge.synthetic.metrics import accuracy, token_error_rate

logger = logging.getLogger(__name__)

INIT_STREAM = 8001
EMBEDDING_STD = 0.1
EVAL_CHUNK = 64


def weight_name(prefix: str) -> str:
    return f"{prefix}.weight"


def bias_name(prefix: str) -> str:
    return f"{prefix}.bias"


def trunk_prefix(layer: int) -> str:
    return f"{TRUNK}.{layer}"


class TaskModel:
    """
    Shared-trunk multi-task network f(X, s_t; θ).

    The task specifier embedding is concatenated to every input frame, the
    frames pass through a tanh trunk applied per position, classification
    tasks mean-pool the trunk output into the classification head and
    sequence tasks read every position through the sequence head. Both heads
    emit logits over one shared vocabulary.
    """

    def __init__(self, config: ModelConfig, tasks: List[TaskSpec], dtype=np.float64):
        if not config.covers(tasks):
            raise ConfigError("Model configuration does not cover the vocabulary, specifiers "
                              "or input width of the registered tasks")
        specifiers = [t.specifier_token_id for t in tasks]
        if len(set(specifiers)) != len(specifiers):
            raise ConfigError(f"Task specifier ids must be unique, got {specifiers}")
        self.config = config
        self.tasks: Dict[str, TaskSpec] = {t.task_id: t for t in tasks}
        self.task_ids = [t.task_id for t in tasks]
        self.dtype = np.dtype(dtype)

    def task(self, task_id: str) -> TaskSpec:
        task = self.tasks.get(task_id)
        if task is None:
            raise ConfigError(f"Unknown task {task_id}; registered: {self.task_ids}")
        return task

    def trunk_weight_names(self) -> List[str]:
        return [weight_name(trunk_prefix(i)) for i in range(self.config.num_trunk_layers)]

    def init_parameters(self, seed: Optional[int] = None) -> ParameterStore:
        """Xavier-uniform weights, zero biases and N(0, 0.1^2) specifier embeddings."""
        c = self.config
        rng = np.random.default_rng([c.seed if seed is None else seed, INIT_STREAM])

        def xavier(fan_in, fan_out):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            return rng.uniform(-limit, limit, size=(fan_in, fan_out))

        store = ParameterStore(self.dtype)
        store.add(TASK_EMBEDDING, rng.normal(0.0, EMBEDDING_STD, size=(c.num_task_specifiers, c.task_embedding_dim)),
                  prunable=False)
        width = c.input_dim + c.task_embedding_dim
        for layer in range(c.num_trunk_layers):
            store.add(weight_name(trunk_prefix(layer)), xavier(width, c.hidden_dim))
            store.add(bias_name(trunk_prefix(layer)), np.zeros(c.hidden_dim))
            width = c.hidden_dim
        for head in [CLS_HEAD, SEQ_HEAD]:
            store.add(weight_name(head), xavier(c.hidden_dim, c.vocab_size))
            store.add(bias_name(head), np.zeros(c.vocab_size))
        logger.debug("Initialized %s", store)
        return store

    def _check_example(self, frames: np.ndarray, task: TaskSpec):
        if frames.ndim != 2 or frames.shape[1] != self.config.input_dim:
            raise ShapeError(f"{task.task_id}: input must be (L, {self.config.input_dim}), got {frames.shape}")
        if not 0 < frames.shape[0] <= self.config.max_seq_len:
            raise ShapeError(f"{task.task_id}: sequence length {frames.shape[0]} outside "
                             f"[1, {self.config.max_seq_len}]")

    def _trunk(self, graph: ComputationGraph, params: Dict[str, Tensor], frames: List[np.ndarray],
               tasks: List[TaskSpec]) -> Tensor:
        x = graph.constant(np.concatenate(frames, axis=0).astype(self.dtype, copy=False))
        specifier_ids = np.concatenate([np.full(len(f), t.specifier_token_id, dtype=np.int64)
                                        for f, t in zip(frames, tasks)])
        embedded = graph.forward_op('embedding', params[TASK_EMBEDDING], ids=specifier_ids)
        h = graph.forward_op('concat', x, embedded)
        for layer in range(self.config.num_trunk_layers):
            prefix = trunk_prefix(layer)
            h = graph.forward_op('matmul', h, params[weight_name(prefix)])
            h = graph.forward_op('bias_add', h, params[bias_name(prefix)])
            h = graph.forward_op('tanh', h)
        return h

    def _head(self, graph: ComputationGraph, params: Dict[str, Tensor], h: Tensor, head: str) -> Tensor:
        out = graph.forward_op('matmul', h, params[weight_name(head)])
        return graph.forward_op('bias_add', out, params[bias_name(head)])

    def _logits(self, graph: ComputationGraph, params: Dict[str, Tensor], examples: Sequence[Example]) \
            -> Tuple[Optional[Tensor], List[Example], Optional[Tensor], List[Example]]:
        """Classification logits (one row per example) and sequence logits (one row per frame)."""
        classification = [e for e in examples if self.task(e.task_id).is_classification]
        sequence = [e for e in examples if not self.task(e.task_id).is_classification]
        for e in examples:
            self._check_example(e.input, self.task(e.task_id))
        cls_logits = seq_logits = None
        if classification:
            h = self._trunk(graph, params, [e.input for e in classification],
                            [self.task(e.task_id) for e in classification])
            segments = np.repeat(np.arange(len(classification)), [e.length for e in classification])
            pooled = graph.forward_op('mean_pool', h, segment_ids=segments, num_segments=len(classification))
            cls_logits = self._head(graph, params, pooled, CLS_HEAD)
        if sequence:
            h = self._trunk(graph, params, [e.input for e in sequence], [self.task(e.task_id) for e in sequence])
            seq_logits = self._head(graph, params, h, SEQ_HEAD)
        return cls_logits, classification, seq_logits, sequence

    def build_loss(self, graph: ComputationGraph, params: Dict[str, Tensor], examples: Sequence[Example]) -> Tensor:
        """Mean loss of a mixed batch: each example weighs 1/B, sequence frames share it equally."""
        if not examples:
            raise DatasetError("Cannot build a loss for an empty batch")
        batch = len(examples)
        cls_logits, classification, seq_logits, sequence = self._logits(graph, params, examples)
        losses = []
        if cls_logits is not None:
            targets = np.array([e.target for e in classification], dtype=np.int64)
            weights = np.full(len(classification), 1.0 / batch)
            losses.append(graph.forward_op('softmax_cross_entropy', cls_logits, targets=targets, weights=weights))
        if seq_logits is not None:
            targets = np.concatenate([np.asarray(e.target, dtype=np.int64) for e in sequence])
            weights = np.concatenate([np.full(e.length, 1.0 / (batch * e.length)) for e in sequence])
            losses.append(graph.forward_op('softmax_cross_entropy', seq_logits, targets=targets, weights=weights))
        loss = losses[0]
        for other in losses[1:]:
            loss = graph.forward_op('add', loss, other)
        return loss

    def loss_and_gradients(self, theta_eff: ParameterStore, examples: Sequence[Example]) \
            -> Tuple[float, Dict[str, np.ndarray]]:
        graph = ComputationGraph()
        params = graph.bind(theta_eff)
        loss = self.build_loss(graph, params, examples)
        grads = graph.backward(loss)
        return loss.item(), grads

    def loss(self, theta_eff: ParameterStore, examples: Sequence[Example]) -> float:
        graph = ComputationGraph()
        params = {name: graph.constant(values) for name, values in theta_eff.items()}
        return self.build_loss(graph, params, examples).item()

    def forward_batch(self, theta_eff: ParameterStore, examples: Sequence[Example]) -> List[np.ndarray]:
        """Logits per example, in input order."""
        graph = ComputationGraph()
        params = {name: graph.constant(values) for name, values in theta_eff.items()}
        cls_logits, classification, seq_logits, sequence = self._logits(graph, params, examples)
        cls_row = 0
        seq_start = 0
        logits = []
        for example in examples:
            if self.task(example.task_id).is_classification:
                logits.append(cls_logits.values[cls_row:cls_row + 1])
                cls_row += 1
            else:
                logits.append(seq_logits.values[seq_start:seq_start + example.length])
                seq_start += example.length
        return logits

    def forward(self, X: np.ndarray, task: TaskSpec, theta_eff: ParameterStore) -> np.ndarray:
        """Logits for one input: a single row for classification, len(X) rows for sequence tasks."""
        task = self.task(task.task_id)
        target = 0 if task.is_classification else tuple([0] * len(X))
        return self.forward_batch(theta_eff, [Example(np.asarray(X), target, task.task_id)])[0]

    @staticmethod
    def predict(logits: np.ndarray, task: TaskSpec):
        """Class id restricted to the task's label slice, or per-position argmax over the vocabulary."""
        if task.is_classification:
            labels = logits[0, task.label_offset:task.label_offset + task.num_labels]
            return task.label_offset + int(np.argmax(labels))
        return tuple(int(token) for token in np.argmax(logits, axis=1))

    def predict_batch(self, theta_eff: ParameterStore, examples: Sequence[Example]) -> list:
        predictions = []
        for start in range(0, len(examples), EVAL_CHUNK):
            chunk = examples[start:start + EVAL_CHUNK]
            for example, logits in zip(chunk, self.forward_batch(theta_eff, chunk)):
                predictions.append(self.predict(logits, self.task(example.task_id)))
        return predictions

    def evaluate(self, theta_eff: ParameterStore, task: TaskSpec, dataset: Dataset) -> float:
        """Accuracy in [0, 1] for classification tasks, corpus TER for sequence tasks."""
        if len(dataset) == 0:
            raise DatasetError(f"Cannot evaluate {task.task_id} on an empty dataset")
        task = self.task(task.task_id)
        predictions = self.predict_batch(theta_eff, dataset.examples)
        if task.is_classification:
            return accuracy(dataset.targets(), predictions)
        return token_error_rate(dataset.targets(), predictions)


def gradient_check(model: TaskModel, theta: ParameterStore, examples: Sequence[Example], h: float = 1e-5) -> float:
    """Largest relative error between backward and central finite differences of the batch loss."""
    _, analytic = model.loss_and_gradients(theta, examples)
    numeric = fd_gradient(lambda store: model.loss(store, examples), theta, h)
    return max_relative_error(analytic, numeric)
