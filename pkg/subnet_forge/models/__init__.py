from .model_config import ModelConfig
from .report_row import ReportRow
from .run_config import RunConfig
from .task_spec import DatasetSpec, TaskSpec
from .training_history import HistoryRecord, TrainingHistory
from .experiment_result import ContinualResult, OverlapResult, TableResult
