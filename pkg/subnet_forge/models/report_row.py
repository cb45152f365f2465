from typing import Dict, List

from pydantic import BaseModel

FIXED_COLUMNS = ['experiment_id', 'variant', 'sparsity', 'param_one', 'param_all']


class ReportRow(BaseModel):
    """One line of the dense-vs-pruned comparison table."""
    experiment_id: str
    variant: str
    sparsity: float
    param_one: float
    param_all: float
    scores: Dict[str, float]

    @staticmethod
    def columns(task_ids: List[str]) -> List[str]:
        return FIXED_COLUMNS + list(task_ids)

    def as_record(self, task_ids: List[str]) -> Dict[str, object]:
        record = {
            'experiment_id': self.experiment_id,
            'variant': self.variant,
            'sparsity': self.sparsity,
            'param_one': self.param_one,
            'param_all': self.param_all,
        }
        for task_id in task_ids:
            record[task_id] = self.scores[task_id]
        return record
