import json
import os
import tempfile
from typing import Dict, List, Optional

import numpy as np

import test_data
from subnet_forge import SubnetForge
from subnet_forge.autodiff.parameter_store import ParameterStore
from subnet_forge.config_provider import build_model_config, load_config, load_task_registry
from subnet_forge.models.model_config import ModelConfig
from subnet_forge.models.run_config import RunConfig
from subnet_forge.models.task_spec import TaskSpec
from subnet_forge.pruning import MaskLayout, MaskSet, PruningMask
from subnet_forge.task_model import TaskModel


def small_tasks(shift: bool = False) -> List[TaskSpec]:
    return load_task_registry(test_data.SMALL_REGISTRY_FILE, shift=shift)


def small_run_config(**changes) -> RunConfig:
    return RunConfig(**{**test_data.small_run_settings, 'registry': test_data.SMALL_REGISTRY_FILE, **changes})


def small_model_config(tasks: List[TaskSpec], seed: int = 0) -> ModelConfig:
    return build_model_config(tasks, test_data.small_model_settings, seed)


def small_forge(**changes) -> SubnetForge:
    config = small_run_config(**changes)
    tasks = small_tasks(config.distribution_shift)
    return SubnetForge(config, tasks, small_model_config(tasks, config.seed), threads=1)


def small_model(dtype=np.float64) -> TaskModel:
    tasks = small_tasks()
    return TaskModel(small_model_config(tasks), tasks, dtype)


def store_from(values: Dict[str, list], prunable: Optional[Dict[str, bool]] = None, dtype=np.float64) \
        -> ParameterStore:
    store = ParameterStore(dtype)
    for name, entry in values.items():
        store.add(name, np.asarray(entry, dtype=np.float64), (prunable or {}).get(name, True))
    return store


def random_masks(store: ParameterStore, owners: List[str], keep: float, seed: int = 0) -> MaskSet:
    layout = MaskLayout.from_store(store)
    rng = np.random.default_rng(seed)
    return MaskSet([PruningMask.from_flat(layout, owner, rng.random(layout.size) < keep) for owner in owners])


def temp_dir() -> str:
    return tempfile.mkdtemp(prefix='subnet_forge_test_')


def write_small_config(directory: str, extra: str = '') -> str:
    path = os.path.join(directory, 'small-run.cfg')
    with open(path, 'w', encoding='utf-8') as file:
        file.write(test_data.small_config_text.format(registry=test_data.SMALL_REGISTRY_FILE) + extra)
    return path


def default_forge(seed: int, registry: str = 'default', **changes) -> SubnetForge:
    """Forge with the packaged run configuration, used by the long evaluation scripts."""
    config, model_settings = load_config(None, {'seed': seed, 'registry': registry})
    if changes:
        config = config.model_copy(update=changes)
    tasks = load_task_registry(config.registry, shift=config.distribution_shift)
    return SubnetForge(config, tasks, build_model_config(tasks, model_settings, seed))


def load_baseline(section: str) -> Dict[str, object]:
    """Pinned reference values of the long evaluations."""
    with open(test_data.BASELINE_FILE, 'r', encoding='utf-8') as file:
        return json.load(file)[section]
