import logging
import os
import sys
from typing import Dict, List, Optional, Tuple

import yaml
from pydantic import ValidationError

from subnet_forge.constants import *
from subnet_forge.exceptions import ConfigError
from subnet_forge.models.model_config import ModelConfig
from subnet_forge.models.run_config import RunConfig
from subnet_forge.models.task_spec import DatasetSpec, TaskSpec

logger = logging.getLogger(__name__)

DEFAULT_CONFIG_FILE = 'default-run.cfg'
REGISTRY_FILES = {
    'default': 'tasks-default.yml',
    'extended': 'tasks-extended.yml',
}
# Keys of the config file that describe the network rather than the run
MODEL_KEYS = ['hidden_dim', 'num_trunk_layers', 'task_embedding_dim', 'max_seq_len']


def get_data_file_path(file_name):
    bundle_dir = sys._MEIPASS if getattr(sys, 'frozen', False) else os.path.dirname(os.path.abspath(__file__))
    return os.path.join(bundle_dir, "config", file_name)


def parse_config_text(text: str, source: str = '<config>') -> Dict[str, str]:
    """Read `key = value` lines; '#' starts a comment, blank lines are skipped."""
    values = {}
    for line_number, line in enumerate(text.splitlines(), start=1):
        line = line.split('#', 1)[0].strip()
        if not line:
            continue
        key, separator, value = line.partition('=')
        key = key.strip()
        if not separator or not key:
            raise ConfigError(f"{source}:{line_number}: expected 'key = value', got '{line}'")
        if key in values:
            raise ConfigError(f"{source}:{line_number}: key '{key}' given twice")
        values[key] = value.strip()
    return values


def _validation_message(error: ValidationError) -> str:
    details = []
    for item in error.errors():
        key = '.'.join(str(part) for part in item['loc']) or 'config'
        details.append(f"{key}: {item['msg']}")
    return '; '.join(details)


def build_run_config(values: Dict[str, object]) -> RunConfig:
    try:
        return RunConfig(**values)
    except ValidationError as e:
        raise ConfigError(f"Invalid run configuration: {_validation_message(e)}") from e


def load_config(file_path: Optional[str] = None,
                overrides: Optional[Dict[str, object]] = None) -> Tuple[RunConfig, Dict[str, str]]:
    """
    Load a run configuration file.
    :param file_path: key = value file; the packaged defaults when None
    :param overrides: values taking precedence over the file (command-line flags)
    :return: validated RunConfig and the model extents found in the file
    """
    file_path = file_path or get_data_file_path(DEFAULT_CONFIG_FILE)
    try:
        with open(file_path, 'r', encoding='utf-8') as file:
            values = parse_config_text(file.read(), source=file_path)
    except OSError as e:
        raise ConfigError(f"Cannot read config file {file_path}: {e}") from e
    if overrides:
        values.update({k: v for k, v in overrides.items() if v is not None})
    model_settings = {key: values.pop(key) for key in MODEL_KEYS if key in values}
    logger.debug("Loaded %d run settings from %s", len(values), file_path)
    return build_run_config(values), model_settings


def build_model_config(tasks: List[TaskSpec], model_settings: Dict[str, object], seed: int = 0) -> ModelConfig:
    input_dim = tasks[0].dataset.input_dim
    try:
        return ModelConfig.for_tasks(tasks, input_dim=input_dim, seed=seed, **model_settings)
    except ValidationError as e:
        raise ConfigError(f"Invalid model configuration: {_validation_message(e)}") from e


def _registry_path(registry: str) -> str:
    if registry in REGISTRY_FILES:
        return get_data_file_path(REGISTRY_FILES[registry])
    return registry


def load_task_registry(registry: str = 'default', shift: bool = False) -> List[TaskSpec]:
    """
    Load a task registry and assign specifier ids and vocabulary slices in file order.
    :param registry: packaged registry name ('default', 'extended') or path of a YAML file
    :param shift: turn on the distribution shift of the continual-learning shards
    """
    file_path = _registry_path(registry)
    try:
        with open(file_path, 'r', encoding='utf-8') as file:
            document = yaml.safe_load(file)
    except (OSError, yaml.YAMLError) as e:
        raise ConfigError(f"Cannot read task registry {file_path}: {e}") from e
    if not isinstance(document, dict) or not document.get('tasks'):
        raise ConfigError(f"Task registry {file_path} has no tasks")

    input_dim = document.get('input_dim', 16)
    tasks = []
    seen = set()
    label_offset = 0
    for specifier, entry in enumerate(document['tasks']):
        task_id = entry.get('task_id')
        if task_id in seen:
            raise ConfigError(f"Task {task_id} registered twice in {file_path}")
        seen.add(task_id)
        try:
            dataset = DatasetSpec(**{'input_dim': input_dim, 'shift': shift, **entry.get('dataset', {}),
                                     'label_offset': label_offset})
            task = TaskSpec(task_id=task_id,
                            specifier_token_id=specifier,
                            task_kind=dataset.task_kind,
                            metric=METRIC_ACCURACY if dataset.task_kind == TASK_KIND_CLASSIFICATION else METRIC_TER,
                            dataset=dataset,
                            label_offset=label_offset,
                            num_labels=dataset.num_labels)
        except ValidationError as e:
            raise ConfigError(f"Task {task_id} in {file_path}: {_validation_message(e)}") from e
        tasks.append(task)
        label_offset += dataset.num_labels
    logger.info("Registry %s: %s, vocabulary %d", registry, [t.task_id for t in tasks], label_offset)
    return tasks


def find_task(tasks: List[TaskSpec], task_id: str) -> TaskSpec:
    for task in tasks:
        if task.task_id == task_id:
            return task
    raise ConfigError(f"Unknown task {task_id}; registered: {[t.task_id for t in tasks]}")
