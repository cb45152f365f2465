import logging
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional, Tuple

import numpy as np
from tqdm import tqdm

from subnet_forge import default_settings
from subnet_forge.autodiff.optimizer import AdamWarmup, OptimizerState, WarmupSchedule
from subnet_forge.autodiff.parameter_store import ParameterStore
from subnet_forge.constants import *
from subnet_forge.exceptions import ConfigError, DatasetError
from subnet_forge.models.model_config import ModelConfig
from subnet_forge.models.run_config import RunConfig
from subnet_forge.models.task_spec import TaskSpec
from subnet_forge.models.training_history import TrainingHistory
from subnet_forge.pruning import MaskLayout, MaskSet, PruningMask, apply_mask, global_magnitude_prune, \
    mask_gradients
from subnet_forge.synthetic import generate
from subnet_forge.synthetic.example import Dataset, Example, SplitDataset, upsample
from subnet_forge.task_model import TaskModel

logger = logging.getLogger(__name__)

# Seed streams of the pipelines
DENSE_STREAM = 9001
IDENTIFY_STREAM = 9002
AGNOSTIC_STREAM = 9003
UPDATE_STREAM = 9004
CONTINUAL_STREAM = 9005
ORDER_STREAM = 9100


class BatchSampler:
    """Endless minibatches drawn from a fixed pool, reshuffled every epoch."""

    def __init__(self, pool: List[Example], batch_size: int, rng: np.random.Generator):
        if not pool:
            raise DatasetError("Cannot sample batches from an empty pool")
        self.pool = pool
        self.batch_size = batch_size
        self.rng = rng
        self._order = np.zeros(0, dtype=np.int64)
        self._position = 0

    @property
    def steps_per_epoch(self) -> int:
        return -(-len(self.pool) // self.batch_size)

    def next_batch(self) -> List[Example]:
        batch = []
        while len(batch) < self.batch_size:
            if self._position >= self._order.size:
                self._order = self.rng.permutation(len(self.pool))
                self._position = 0
            take = min(self.batch_size - len(batch), self._order.size - self._position)
            batch.extend(self.pool[i] for i in self._order[self._position:self._position + take])
            self._position += take
        return batch


def score_drop(task: TaskSpec, before: float, after: float) -> float:
    """Degradation of a score; positive means worse for both accuracy and TER."""
    return before - after if task.higher_is_better else after - before


def quality(task: TaskSpec, score: float) -> float:
    """Score on a higher-is-better scale: accuracy as is, 1 - TER for sequence tasks."""
    return score if task.higher_is_better else 1.0 - score


def forgetting(history: TrainingHistory, tasks: List[TaskSpec], target_task_id: str) -> float:
    """Mean score drop from the first to the last history record over every task except the target."""
    held = [t for t in tasks if t.task_id != target_task_id]
    if not held:
        raise ConfigError("Forgetting needs at least one task besides the target")
    first = history.first().scores
    last = history.last().scores
    return float(np.mean([score_drop(t, first[t.task_id], last[t.task_id]) for t in held]))


def thread_count() -> int:
    value = os.environ.get(THREADS_ENV_VAR, str(default_settings.DEFAULT_THREADS))
    try:
        threads = int(value)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV_VAR} must be a positive integer, got '{value}'")
    if threads < 1:
        raise ConfigError(f"{THREADS_ENV_VAR} must be a positive integer, got '{value}'")
    return threads


class SubnetForge:
    """
    Mask identification, parameter update and continual learning for one task registry.

    Every pipeline is a pure function of the run configuration, the seed and
    the datasets: batch sampling and task order come from seed streams keyed by
    phase, round and task specifier, never from shared generator state.
    """

    def __init__(self,
                 config: RunConfig,
                 tasks: List[TaskSpec],
                 model_config: Optional[ModelConfig] = None,
                 datasets: Optional[Dict[str, SplitDataset]] = None,
                 threads: Optional[int] = None):
        """
        :param config: run hyperparameters
        :param tasks: registered tasks, in registry order
        :param model_config: network extents; derived from the registry when None
        :param datasets: task id -> splits; generated from the task specs when None
        :param threads: evaluation fan-out; SUBNET_FORGE_THREADS when None
        """
        if not tasks:
            raise ConfigError("At least one task must be registered")
        self.config = config
        self.tasks = list(tasks)
        self.model_config = model_config or ModelConfig.for_tasks(tasks, input_dim=tasks[0].dataset.input_dim,
                                                                  seed=config.seed)
        self.dtype = np.float32 if config.precision == PRECISION_F32 else np.float64
        self.model = TaskModel(self.model_config, self.tasks, self.dtype)
        if datasets is None:
            datasets = {t.task_id: generate(t.dataset, t.task_id) for t in self.tasks}
        self.datasets = datasets
        self.threads = threads or thread_count()
        self.optimizer_steps = 0
        self.theta_init: Optional[ParameterStore] = None

    def with_config(self, **changes) -> 'SubnetForge':
        """Same registry, model and datasets under a modified run configuration."""
        config = RunConfig(**{**self.config.model_dump(), **changes})
        return SubnetForge(config, self.tasks, self.model_config, self.datasets, self.threads)

    # Helpers

    def _task_list(self, task_ids: Optional[List[str]]) -> List[TaskSpec]:
        if task_ids is None:
            return list(self.tasks)
        return [self.model.task(task_id) for task_id in task_ids]

    def _split(self, task: TaskSpec, split: str) -> Dataset:
        splits = self.datasets.get(task.task_id)
        if splits is None or len(splits.split(split)) == 0:
            raise DatasetError(f"Task {task.task_id} has no {split} data")
        return splits.split(split)

    def _training_pool(self, task: TaskSpec) -> List[Example]:
        return upsample(self._split(task, SPLIT_TRAIN), self.config.upsample_for(task.task_id)).examples

    def _sampler(self, pool: List[Example], *stream) -> BatchSampler:
        return BatchSampler(pool, self.config.batch_size, np.random.default_rng([self.config.seed, *stream]))

    def _task_order(self, tasks: List[TaskSpec], phase: int, round_index: int) -> List[TaskSpec]:
        rng = np.random.default_rng([self.config.seed, ORDER_STREAM, phase, round_index])
        return [tasks[i] for i in rng.permutation(len(tasks))]

    def _progress(self, steps: int, label: str):
        return tqdm(range(steps), desc=label, disable=not self.config.progress, leave=False)

    def _train_steps(self, theta: ParameterStore, sampler: BatchSampler, steps: int, optimizer: AdamWarmup,
                     state: OptimizerState, mask: Optional[PruningMask] = None,
                     trainable: Optional[Dict[str, Optional[np.ndarray]]] = None, label: str = '') -> List[float]:
        """
        Run optimizer steps in place on theta.
        :param mask: forward pass uses θ ⊙ mask and gradients outside the mask are zeroed
        :param trainable: when given, only these entries receive gradients; a row selector limits an entry to rows
        :return: training loss per step
        """
        losses = []
        for _ in self._progress(steps, label):
            batch = sampler.next_batch()
            theta_eff = apply_mask(theta, mask) if mask is not None else theta
            loss, grads = self.model.loss_and_gradients(theta_eff, batch)
            if mask is not None:
                grads = mask_gradients(grads, mask)
            if trainable is not None:
                grads = _restrict_gradients(grads, trainable)
            optimizer.step(theta, grads, state)
            self.optimizer_steps += 1
            losses.append(loss)
        return losses

    def evaluate(self, theta: ParameterStore, masks: Optional[MaskSet] = None,
                 task_ids: Optional[List[str]] = None, split: str = SPLIT_EVAL) -> Dict[str, float]:
        """Score every task, each through its own subnetwork when masks are given."""
        tasks = self._task_list(task_ids)

        def score(task: TaskSpec) -> float:
            theta_eff = apply_mask(theta, masks[task.task_id]) if masks is not None else theta
            return self.model.evaluate(theta_eff, task, self._split(task, split))

        with ThreadPoolExecutor(max_workers=self.threads) as executor:
            scores = list(executor.map(score, tasks))
        return {task.task_id: value for task, value in zip(tasks, scores)}

    # Pipelines

    def init_parameters(self) -> ParameterStore:
        return self.model.init_parameters(self.config.seed)

    def train_dense(self, theta_init: Optional[ParameterStore] = None) -> Tuple[ParameterStore, TrainingHistory]:
        """Dense multi-task training on mixture batches of the upsampled training pools."""
        config = self.config
        self.theta_init = theta_init.copy() if theta_init is not None else self.init_parameters()
        theta = self.theta_init.copy()
        pool = [example for task in self.tasks for example in self._training_pool(task)]
        sampler = self._sampler(pool, DENSE_STREAM)
        optimizer = AdamWarmup(WarmupSchedule(config.base_lr_dense, config.warmup_dense))
        state = optimizer.init_state(theta)
        history = TrainingHistory(task_ids=[t.task_id for t in self.tasks])
        done = 0
        while done < config.dense_steps:
            steps = min(config.eval_interval, config.dense_steps - done)
            losses = self._train_steps(theta, sampler, steps, optimizer, state, label='dense')
            done += steps
            scores = self.evaluate(theta)
            history.append(done, MIXTURE_TASK, scores, float(np.mean(losses)))
            logger.info("Dense step %d: loss %.4f, scores %s", done, np.mean(losses), _format_scores(scores))
        return theta, history

    def identify_masks(self, theta0: ParameterStore, task_ids: Optional[List[str]] = None) -> MaskSet:
        """
        Iterative magnitude pruning per task with rewinding to theta0.

        Every round visits all tasks in a seeded shuffled order; each visit
        rewinds to theta0, resets the optimizer, trains the task's current
        subnetwork for N1 steps and prunes it by p.
        """
        config = self.config
        tasks = self._task_list(task_ids)
        layout = MaskLayout.from_store(theta0)
        masks = {t.task_id: PruningMask.ones(layout, t.task_id) for t in tasks}
        for round_index in range(config.rounds):
            for task in self._task_order(tasks, IDENTIFY_STREAM, round_index):
                theta = theta0.copy()
                optimizer = AdamWarmup(WarmupSchedule(config.base_lr_identify, config.warmup_identify))
                state = optimizer.init_state(theta)
                sampler = self._sampler(self._training_pool(task), IDENTIFY_STREAM, round_index,
                                        task.specifier_token_id)
                losses = self._train_steps(theta, sampler, config.n1_for(task.task_id), optimizer, state,
                                           mask=masks[task.task_id], label=f"identify {task.task_id}")
                masks[task.task_id] = global_magnitude_prune(theta, masks[task.task_id], config.p)
                logger.info("Round %d, %s: loss %.4f, sparsity %.4f", round_index + 1, task.task_id,
                            losses[-1], masks[task.task_id].sparsity)
        return MaskSet([masks[t.task_id] for t in tasks])

    def identify_masks_task_agnostic(self, theta0: ParameterStore) -> PruningMask:
        """One mask for all tasks: each round trains the mixture for the summed N1 budget, then prunes once."""
        config = self.config
        mask = PruningMask.ones(MaskLayout.from_store(theta0), AGNOSTIC_OWNER)
        pool = [example for task in self.tasks for example in self._training_pool(task)]
        steps = sum(config.n1_for(t.task_id) for t in self.tasks)
        for round_index in range(config.rounds):
            theta = theta0.copy()
            optimizer = AdamWarmup(WarmupSchedule(config.base_lr_identify, config.warmup_identify))
            state = optimizer.init_state(theta)
            sampler = self._sampler(pool, AGNOSTIC_STREAM, round_index)
            self._train_steps(theta, sampler, steps, optimizer, state, mask=mask, label='identify agnostic')
            mask = global_magnitude_prune(theta, mask, config.p)
            logger.info("Task-agnostic round %d: sparsity %.4f", round_index + 1, mask.sparsity)
        return mask

    def update_parameters(self, theta0: ParameterStore, masks: MaskSet, task_ids: Optional[List[str]] = None,
                          eval_masks: Optional[MaskSet] = None) -> Tuple[ParameterStore, TrainingHistory]:
        """
        Interleaved training of all subnetworks inside one shared θ.

        One optimizer is shared across visits. A visit trains the active
        task's subnetwork for N2 steps with gradients masked by its mask, so
        scalars outside the union of all masks never move.
        :param eval_masks: subnetworks the history scores after every repeat; the trained masks when None
        """
        config = self.config
        tasks = self._task_list(task_ids if task_ids is not None else masks.task_ids)
        eval_masks = eval_masks if eval_masks is not None else masks
        theta = theta0.copy()
        optimizer = AdamWarmup(WarmupSchedule(config.base_lr_update, config.warmup_update))
        state = optimizer.init_state(theta)
        samplers = {t.task_id: self._sampler(self._training_pool(t), UPDATE_STREAM, t.specifier_token_id)
                    for t in tasks}
        history = TrainingHistory(task_ids=eval_masks.task_ids)
        trained = tasks[0].task_id if len(tasks) == 1 else MIXTURE_TASK
        for repeat in range(config.repeats):
            losses = []
            for task in self._task_order(tasks, UPDATE_STREAM, repeat):
                losses.extend(self._train_steps(theta, samplers[task.task_id], config.n2, optimizer, state,
                                                mask=masks[task.task_id], label=f"update {task.task_id}"))
            scores = self.evaluate(theta, eval_masks, eval_masks.task_ids)
            history.append(state.step, trained, scores, float(np.mean(losses)))
            logger.debug("Repeat %d: scores %s", repeat + 1, _format_scores(scores))
        logger.info("Parameter update finished after %d steps: %s", state.step, _format_scores(scores))
        return theta, history

    def single_task_update(self, theta0: ParameterStore, masks: MaskSet) \
            -> Tuple[Dict[str, ParameterStore], Dict[str, TrainingHistory]]:
        """
        Parameter update run separately per task, each subnetwork in its own copy of θ.

        Every history scores all tasks on that copy, each through its own mask.
        """
        thetas = {}
        histories = {}
        for task_id in masks.task_ids:
            thetas[task_id], histories[task_id] = self.update_parameters(theta0, MaskSet([masks[task_id]]),
                                                                         [task_id], eval_masks=masks)
        return thetas, histories

    def continual_learn(self, theta: ParameterStore, masks: Optional[MaskSet], target_task_id: str,
                        mode: str, new_data: Optional[Dataset] = None) -> Tuple[ParameterStore, TrainingHistory]:
        """
        Continue training one task on new data.
        :param theta: starting parameters, the parameter update result in pruned mode or the dense model
        :param masks: task subnetworks; required in pruned mode, where every task is scored through its own mask
        :param target_task_id: task receiving the new data
        :param mode: pruned-subnetwork, dense-full or dense-encoder-only
        :param new_data: new shard; the task's continual split when None
        :return: trained parameters and a history whose first record holds the scores before training; the
            target is scored on its continual_eval split, every other task on its eval split
        """
        config = self.config
        if mode not in CONTINUAL_MODES:
            raise ConfigError(f"Unknown continual learning mode {mode}; expected one of {CONTINUAL_MODES}")
        if mode == CONTINUAL_PRUNED and masks is None:
            raise ConfigError(f"Mode {mode} needs the task masks")
        target = self.model.task(target_task_id)
        new_data = new_data if new_data is not None else self._split(target, SPLIT_CONTINUAL)
        if len(new_data) == 0:
            raise DatasetError(f"No new data for {target_task_id}")
        if config.continual_data == CONTINUAL_DATA_AUGMENT:
            pool = self._split(target, SPLIT_TRAIN).examples + new_data.examples
        else:
            pool = list(new_data.examples)

        scoring_masks = masks if mode == CONTINUAL_PRUNED else None
        mask = masks[target_task_id] if mode == CONTINUAL_PRUNED else None
        trainable = self._continual_trainable(theta, target, mode)

        theta = theta.copy()
        optimizer = AdamWarmup(WarmupSchedule(config.base_lr_continual, config.warmup_continual))
        state = optimizer.init_state(theta)
        sampler = self._sampler(pool, CONTINUAL_STREAM, target.specifier_token_id)
        history = TrainingHistory(task_ids=[t.task_id for t in self.tasks])
        history.append(0, target_task_id, self._continual_scores(theta, scoring_masks, target))
        done = 0
        while done < config.continual_steps:
            steps = min(sampler.steps_per_epoch, config.continual_steps - done)
            losses = self._train_steps(theta, sampler, steps, optimizer, state, mask=mask, trainable=trainable,
                                       label=f"continual {mode}")
            done += steps
            scores = self._continual_scores(theta, scoring_masks, target)
            history.append(done, target_task_id, scores, float(np.mean(losses)))
        logger.info("Continual %s on %s: %s -> %s", mode, target_task_id,
                    _format_scores(history.first().scores), _format_scores(history.last().scores))
        return theta, history

    def _continual_scores(self, theta: ParameterStore, masks: Optional[MaskSet], target: TaskSpec) -> Dict[str, float]:
        """Held tasks on their eval split, the target on held-out data drawn like its new shard."""
        held = [t.task_id for t in self.tasks if t.task_id != target.task_id]
        scores = self.evaluate(theta, masks, held) if held else {}
        scores.update(self.evaluate(theta, masks, [target.task_id], SPLIT_CONTINUAL_EVAL))
        return scores

    def _continual_trainable(self, theta: ParameterStore, target: TaskSpec, mode: str):
        if mode == CONTINUAL_DENSE_FULL:
            return None
        if mode == CONTINUAL_DENSE_ENCODER:
            return {name: None for name in self.model.trunk_weight_names()}
        # pruned: the mask limits the prunable entries, the embedding is limited to the target's row
        trainable = {name: None for name in theta.prunable_names()}
        trainable[TASK_EMBEDDING] = np.array([target.specifier_token_id])
        return trainable


def _restrict_gradients(grads: Dict[str, np.ndarray], trainable: Dict[str, Optional[np.ndarray]]):
    restricted = {}
    for name, grad in grads.items():
        if name not in trainable:
            restricted[name] = np.zeros_like(grad)
        elif trainable[name] is None:
            restricted[name] = grad
        else:
            rows = np.zeros(grad.shape[0], dtype=bool)
            rows[trainable[name]] = True
            restricted[name] = np.where(rows.reshape((-1,) + (1,) * (grad.ndim - 1)), grad, 0.0).astype(grad.dtype)
    return restricted


def _format_scores(scores: Dict[str, float]) -> str:
    return ', '.join(f"{task_id}={value:.4f}" for task_id, value in scores.items())
