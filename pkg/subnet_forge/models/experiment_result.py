from typing import Any, Dict, List

from pydantic import BaseModel, ConfigDict

from subnet_forge.models.report_row import ReportRow
from subnet_forge.models.training_history import TrainingHistory


class TableResult(BaseModel):
    """Dense vs pruned comparison: rows plus the artifacts they were computed from."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    rows: List[ReportRow] = []
    histories: Dict[str, TrainingHistory] = {}
    masks: Dict[int, Any] = {}
    theta_dense: Any = None


class ContinualResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    target_task_id: str
    histories: Dict[str, TrainingHistory] = {}
    forgetting: Dict[str, float] = {}
    improvement: Dict[str, float] = {}


class OverlapResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    matrix: Any = None
    classification_mean: float = None
    sequence_mean: float = None
    sparsity: float = None
    masks: Any = None
