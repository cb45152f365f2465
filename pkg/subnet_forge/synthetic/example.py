import hashlib
from typing import Iterator, List, Tuple, Union

import numpy as np

from subnet_forge.exceptions import DatasetError

Target = Union[int, Tuple[int, ...]]


class Example:
    """One input sequence (L x input_dim) and its class id or L-token target."""

    __slots__ = ('input', 'target', 'task_id')

    def __init__(self, input: np.ndarray, target: Target, task_id: str):
        self.input = input
        self.target = target
        self.task_id = task_id

    @property
    def length(self) -> int:
        return self.input.shape[0]

    @property
    def is_sequence(self) -> bool:
        return isinstance(self.target, tuple)

    def content_hash(self) -> str:
        return hashlib.sha256(np.ascontiguousarray(self.input, dtype='<f8').tobytes()).hexdigest()

    def __repr__(self):
        return f"Example(task_id={self.task_id}, length={self.length}, target={self.target})"


class Dataset:
    def __init__(self, task_id: str, examples: List[Example]):
        self.task_id = task_id
        self.examples = list(examples)

    def __len__(self) -> int:
        return len(self.examples)

    def __iter__(self) -> Iterator[Example]:
        return iter(self.examples)

    def __getitem__(self, index) -> Example:
        return self.examples[index]

    def targets(self) -> List[Target]:
        return [e.target for e in self.examples]

    def content_hashes(self) -> List[str]:
        return [e.content_hash() for e in self.examples]

    def __add__(self, other: 'Dataset') -> 'Dataset':
        if other.task_id != self.task_id:
            raise DatasetError(f"Cannot join datasets of {self.task_id} and {other.task_id}")
        return Dataset(self.task_id, self.examples + other.examples)

    def __repr__(self):
        return f"Dataset(task_id={self.task_id}, size={len(self)})"


class SplitDataset:
    """Disjoint train / eval / continual-learning / continual-eval shards of one task."""

    def __init__(self, train: Dataset, eval: Dataset, continual: Dataset, continual_eval: Dataset):
        self.train = train
        self.eval = eval
        self.continual = continual
        self.continual_eval = continual_eval

    @property
    def task_id(self) -> str:
        return self.train.task_id

    def split(self, name: str) -> Dataset:
        return getattr(self, name)


def upsample(dataset: Dataset, factor: int) -> Dataset:
    """Repeat every example factor times; training order is shuffled by the sampler."""
    if not isinstance(factor, (int, np.integer)) or factor < 1:
        raise DatasetError(f"Upsample factor must be a positive integer, got {factor}")
    return Dataset(dataset.task_id, [e for e in dataset.examples for _ in range(factor)])
