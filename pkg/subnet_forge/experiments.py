import logging
from itertools import combinations
from typing import Dict, List, Optional

import numpy as np

from subnet_forge.constants import *
from subnet_forge.exceptions import ConfigError
from subnet_forge.models.experiment_result import ContinualResult, OverlapResult, TableResult
from subnet_forge.models.report_row import ReportRow
from subnet_forge.models.task_spec import TaskSpec
from subnet_forge.pruning import MaskSet, overlap_matrix, param_percent
from subnet_forge.subnet_forge import SubnetForge, forgetting, quality, score_drop

logger = logging.getLogger(__name__)


def _mean_sparsity(masks: MaskSet) -> float:
    return float(np.mean([mask.sparsity for mask in masks.values()]))


def _mean_param_one(masks: MaskSet) -> float:
    return float(np.mean([param_percent(masks, PARAM_MODE_ONE, t) for t in masks.task_ids]))


def mean_quality(tasks: List[TaskSpec], scores: Dict[str, float]) -> float:
    """Mean over tasks of accuracy and 1 - TER, so that higher is better for the whole row."""
    return float(np.mean([quality(t, scores[t.task_id]) for t in tasks]))


def run_table_experiment(forge: SubnetForge) -> TableResult:
    """
    Dense model against multi-task, single-task and task-agnostic pruning for every
    round count in report_rounds, all variants starting from the same dense model.
    """
    result = TableResult()
    theta_dense, dense_history = forge.train_dense()
    result.theta_dense = theta_dense
    result.histories['dense'] = dense_history
    result.rows.append(ReportRow(experiment_id='dense', variant=VARIANT_DENSE, sparsity=0.0, param_one=100.0,
                                 param_all=100.0, scores=forge.evaluate(theta_dense)))

    for rounds in forge.config.report_rounds:
        variant_forge = forge.with_config(rounds=rounds)
        experiment_id = f"q{rounds}"
        masks = variant_forge.identify_masks(theta_dense)
        result.masks[rounds] = masks

        theta, history = variant_forge.update_parameters(theta_dense, masks)
        result.histories[f"{experiment_id}-{VARIANT_MULTI_TASK}"] = history
        result.rows.append(ReportRow(experiment_id=experiment_id, variant=VARIANT_MULTI_TASK,
                                     sparsity=_mean_sparsity(masks), param_one=_mean_param_one(masks),
                                     param_all=param_percent(masks, PARAM_MODE_ALL_MULTITASK),
                                     scores=forge.evaluate(theta, masks)))

        thetas, _ = variant_forge.single_task_update(theta_dense, masks)
        single_scores = {}
        for task_id, theta_t in thetas.items():
            single_scores.update(forge.evaluate(theta_t, masks, [task_id]))
        result.rows.append(ReportRow(experiment_id=experiment_id, variant=VARIANT_SINGLE_TASK,
                                     sparsity=_mean_sparsity(masks), param_one=_mean_param_one(masks),
                                     param_all=param_percent(masks, PARAM_MODE_ALL_SINGLETASK),
                                     scores=single_scores))

        agnostic = variant_forge.identify_masks_task_agnostic(theta_dense)
        shared = MaskSet([agnostic.with_owner(t.task_id) for t in forge.tasks])
        theta, history = variant_forge.update_parameters(theta_dense, shared)
        result.histories[f"{experiment_id}-{VARIANT_TASK_AGNOSTIC}"] = history
        result.rows.append(ReportRow(experiment_id=experiment_id, variant=VARIANT_TASK_AGNOSTIC,
                                     sparsity=agnostic.sparsity, param_one=_mean_param_one(shared),
                                     param_all=param_percent(shared, PARAM_MODE_ALL_MULTITASK),
                                     scores=forge.evaluate(theta, shared)))
        logger.info("Finished table rows for %d rounds", rounds)
    return result


def run_continual_experiment(forge: SubnetForge, target_task_id: str) -> ContinualResult:
    """
    Continual learning of one task in every mode, starting from the same dense model and masks.

    The masks are identified with continual_rounds prune rounds.
    """
    target = forge.model.task(target_task_id)
    theta_dense, _ = forge.train_dense()
    mask_forge = forge.with_config(rounds=forge.config.continual_rounds)
    masks = mask_forge.identify_masks(theta_dense)
    theta_pruned, _ = mask_forge.update_parameters(theta_dense, masks)

    result = ContinualResult(target_task_id=target_task_id)
    for mode in [CONTINUAL_DENSE_FULL, CONTINUAL_DENSE_ENCODER, CONTINUAL_PRUNED]:
        start = theta_pruned if mode == CONTINUAL_PRUNED else theta_dense
        _, history = forge.continual_learn(start, masks if mode == CONTINUAL_PRUNED else None, target_task_id, mode)
        result.histories[mode] = history
        result.forgetting[mode] = forgetting(history, forge.tasks, target_task_id)
        # negative drop of the target is its improvement
        result.improvement[mode] = -score_drop(target, history.first().scores[target_task_id],
                                               history.last().scores[target_task_id])
        logger.info("Continual %s: forgetting %.4f, target improvement %.4f", mode, result.forgetting[mode],
                    result.improvement[mode])
    return result


def _mean_pair_overlap(matrix, pairs) -> Optional[float]:
    values = [matrix.loc[a, b] for a, b in pairs]
    return float(np.mean(values)) if values else None


def run_overlap_experiment(forge: SubnetForge, sequence_task_id: str = 'SEQ') -> OverlapResult:
    """Pairwise overlap of the task masks; mean among classification tasks and between one sequence task and them."""
    forge.model.task(sequence_task_id)
    classification = [t.task_id for t in forge.tasks if t.is_classification]
    if len(classification) < 2:
        raise ConfigError("Overlap analysis needs at least two classification tasks")
    theta_dense, _ = forge.train_dense()
    masks = forge.identify_masks(theta_dense)
    matrix = overlap_matrix(masks)
    return OverlapResult(matrix=matrix,
                         classification_mean=_mean_pair_overlap(matrix, combinations(classification, 2)),
                         sequence_mean=_mean_pair_overlap(matrix, [(sequence_task_id, c) for c in classification]),
                         sparsity=_mean_sparsity(masks),
                         masks=masks)
