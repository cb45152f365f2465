from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, NonNegativeFloat, NonNegativeInt, PositiveInt, model_validator

from subnet_forge.constants import *


class DatasetSpec(BaseModel):
    """Parameters of one seeded synthetic task generator."""
    model_config = ConfigDict(extra='forbid', frozen=True)

    generator: Literal['classification', 'transduction', 'tagging']
    num_classes: Optional[PositiveInt] = None
    alphabet_size: Optional[PositiveInt] = None
    num_tags: Optional[PositiveInt] = None
    size: PositiveInt = 400
    eval_size: PositiveInt = 200
    continual_size: PositiveInt = 400
    continual_eval_size: PositiveInt = 200
    length_min: PositiveInt = 4
    length_max: PositiveInt = 12
    noise: NonNegativeFloat = 0.5
    seed: NonNegativeInt = 0
    input_dim: PositiveInt = 16
    label_offset: NonNegativeInt = 0
    shift: bool = False

    @model_validator(mode='after')
    def check_generator(self):
        if self.length_min > self.length_max:
            raise ValueError(f"length_min {self.length_min} > length_max {self.length_max}")
        if self.generator == GENERATOR_CLASSIFICATION:
            if self.num_classes is None or self.num_classes < 2:
                raise ValueError('classification needs num_classes >= 2')
        else:
            if self.alphabet_size is None or self.alphabet_size < 2:
                raise ValueError(f"{self.generator} needs alphabet_size >= 2")
            if self.alphabet_size > self.input_dim:
                raise ValueError(f"alphabet_size {self.alphabet_size} exceeds input_dim {self.input_dim}")
            if self.generator == GENERATOR_TAGGING and not self.num_tags:
                raise ValueError('tagging needs num_tags >= 1')
        return self

    @property
    def task_kind(self) -> str:
        if self.generator == GENERATOR_CLASSIFICATION:
            return TASK_KIND_CLASSIFICATION
        return TASK_KIND_SEQUENCE

    @property
    def num_labels(self) -> int:
        """Width of the vocabulary slice the targets live in."""
        if self.generator == GENERATOR_CLASSIFICATION:
            return self.num_classes
        if self.generator == GENERATOR_TAGGING:
            return self.num_tags + 1
        return self.alphabet_size


class TaskSpec(BaseModel):
    """Task identity, specifier token, dataset binding and metric binding."""
    model_config = ConfigDict(extra='forbid', frozen=True)

    task_id: str = Field(min_length=1)
    specifier_token_id: NonNegativeInt
    task_kind: Literal['classification', 'sequence']
    metric: Literal['accuracy', 'token-error-rate']
    dataset: DatasetSpec
    label_offset: NonNegativeInt = 0
    num_labels: PositiveInt = 2

    @model_validator(mode='after')
    def check_bindings(self):
        if self.task_kind != self.dataset.task_kind:
            raise ValueError(f"{self.task_id}: task_kind {self.task_kind} does not match "
                             f"generator {self.dataset.generator}")
        expected = METRIC_ACCURACY if self.task_kind == TASK_KIND_CLASSIFICATION else METRIC_TER
        if self.metric != expected:
            raise ValueError(f"{self.task_id}: {self.task_kind} tasks are scored with {expected}")
        if self.dataset.label_offset != self.label_offset or self.dataset.num_labels != self.num_labels:
            raise ValueError(f"{self.task_id}: dataset vocabulary slice differs from the task's")
        return self

    @property
    def is_classification(self) -> bool:
        return self.task_kind == TASK_KIND_CLASSIFICATION

    @property
    def higher_is_better(self) -> bool:
        return self.metric == METRIC_ACCURACY
