from typing import Dict, List, Optional

from pydantic import BaseModel


class HistoryRecord(BaseModel):
    step: int
    task_id: str
    scores: Dict[str, float]
    loss: Optional[float] = None


class TrainingHistory(BaseModel):
    """Checkpointed per-task scores of one training run, in step order."""
    task_ids: List[str]
    records: List[HistoryRecord] = []

    def append(self, step: int, task_id: str, scores: Dict[str, float], loss: Optional[float] = None):
        if self.records and step <= self.records[-1].step:
            raise ValueError(f"History steps must increase: {step} after {self.records[-1].step}")
        missing = [t for t in self.task_ids if t not in scores]
        if missing:
            raise ValueError(f"History record at step {step} lacks scores for {missing}")
        record = HistoryRecord(step=step, task_id=task_id,
                               scores={t: float(scores[t]) for t in self.task_ids}, loss=loss)
        self.records.append(record)
        return record

    def steps(self) -> List[int]:
        return [r.step for r in self.records]

    def scores_for(self, task_id: str) -> List[float]:
        return [r.scores[task_id] for r in self.records]

    def losses(self) -> List[Optional[float]]:
        return [r.loss for r in self.records]

    def first(self) -> HistoryRecord:
        return self.records[0]

    def last(self) -> HistoryRecord:
        return self.records[-1]
