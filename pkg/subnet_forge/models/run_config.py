import hashlib
import json
from typing import Dict, List, Literal

from pydantic import BaseModel, ConfigDict, Field, NonNegativeInt, PositiveFloat, PositiveInt, field_validator, \
    model_validator

# Mask identification steps must dominate update steps per visit by at least this factor
N1_OVER_N2_MIN_RATIO = 10


def _parse_task_counts(value) -> Dict[str, int]:
    """Accept either a mapping or 'TASK:count, TASK:count' text."""
    if isinstance(value, dict):
        return value
    if value is None:
        return {}
    counts = {}
    for item in str(value).split(','):
        item = item.strip()
        if not item:
            continue
        task_id, separator, count = item.rpartition(':')
        if not separator or not task_id.strip():
            raise ValueError(f"Expected TASK:count, got '{item}'")
        counts[task_id.strip()] = int(count)
    return counts


class RunConfig(BaseModel):
    """Every hyperparameter of mask identification, parameter update and continual learning."""
    model_config = ConfigDict(extra='forbid', frozen=True)

    # Mask identification and parameter update schedule
    p: float = Field(default=0.2, gt=0.0, lt=1.0)
    rounds: PositiveInt = 2
    n1: PositiveInt = 300
    n2: PositiveInt = 20
    repeats: PositiveInt = 30
    n1_overrides: Dict[str, PositiveInt] = {}
    base_lr_identify: PositiveFloat = 3e-3
    warmup_identify: NonNegativeInt = 50
    base_lr_update: PositiveFloat = 2e-3
    warmup_update: NonNegativeInt = 30

    # Dense multi-task training
    dense_steps: PositiveInt = 1500
    base_lr_dense: PositiveFloat = 3e-3
    warmup_dense: NonNegativeInt = 100
    eval_interval: PositiveInt = 250
    upsample: Dict[str, PositiveInt] = {}

    # Continual learning
    continual_steps: PositiveInt = 600
    base_lr_continual: PositiveFloat = 1e-3
    warmup_continual: NonNegativeInt = 0
    continual_data: Literal['augment', 'replace'] = 'augment'
    distribution_shift: bool = False
    continual_rounds: PositiveInt = 5

    batch_size: PositiveInt = 32
    seed: NonNegativeInt = 0
    precision: Literal['f64', 'f32'] = 'f64'
    registry: str = 'default'
    report_rounds: List[PositiveInt] = [2, 5]
    eval_seeds: List[NonNegativeInt] = [0, 1, 2]
    progress: bool = False

    @field_validator('upsample', 'n1_overrides', mode='before')
    @classmethod
    def parse_task_counts(cls, value):
        return _parse_task_counts(value)

    @field_validator('report_rounds', 'eval_seeds', mode='before')
    @classmethod
    def parse_int_list(cls, value):
        if isinstance(value, str):
            return [int(item) for item in value.split(',') if item.strip()]
        return value

    @model_validator(mode='after')
    def check_interleaving(self):
        for label, n1 in [('n1', self.n1)] + [(f"n1_overrides[{k}]", v) for k, v in self.n1_overrides.items()]:
            if n1 < N1_OVER_N2_MIN_RATIO * self.n2:
                raise ValueError(f"{label}={n1} must be at least {N1_OVER_N2_MIN_RATIO} x n2={self.n2}")
        return self

    def n1_for(self, task_id: str) -> int:
        return self.n1_overrides.get(task_id, self.n1)

    def upsample_for(self, task_id: str) -> int:
        return self.upsample.get(task_id, 1)

    def config_hash(self) -> str:
        canonical = json.dumps(self.model_dump(mode='json'), sort_keys=True, separators=(',', ':'))
        return hashlib.sha256(canonical.encode('utf-8')).hexdigest()
