from typing import List

from pydantic import BaseModel, ConfigDict, PositiveInt

from subnet_forge.models.task_spec import TaskSpec


class ModelConfig(BaseModel):
    """Extents of the shared-trunk task model."""
    model_config = ConfigDict(extra='forbid', frozen=True)

    input_dim: PositiveInt = 16
    hidden_dim: PositiveInt = 96
    num_trunk_layers: PositiveInt = 2
    vocab_size: PositiveInt = 32
    task_embedding_dim: PositiveInt = 8
    num_task_specifiers: PositiveInt = 3
    max_seq_len: PositiveInt = 24
    seed: int = 0

    @classmethod
    def for_tasks(cls, tasks: List[TaskSpec], **settings) -> 'ModelConfig':
        """Derive vocabulary and specifier table extents from a task registry."""
        vocab_size = max(task.label_offset + task.num_labels for task in tasks)
        specifiers = max(task.specifier_token_id for task in tasks) + 1
        return cls(vocab_size=vocab_size, num_task_specifiers=specifiers, **settings)

    def covers(self, tasks: List[TaskSpec]) -> bool:
        return all(task.label_offset + task.num_labels <= self.vocab_size
                   and task.specifier_token_id < self.num_task_specifiers
                   and task.dataset.input_dim == self.input_dim
                   for task in tasks)
