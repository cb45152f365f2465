import argparse
import logging
import os
from typing import Dict, List, Optional

import numpy as np

from subnet_forge import default_settings
from subnet_forge.autodiff.parameter_store import ParameterStore
from subnet_forge.checkpoint import STORE_THETA, STORE_THETA0, Checkpoint, load_checkpoint, save_checkpoint, \
    task_store_name
from subnet_forge.config_provider import build_model_config, load_config, load_task_registry
from subnet_forge.constants import *
from subnet_forge.exceptions import CheckpointError, ConfigError, NumericError, SubnetForgeError
from subnet_forge.experiments import run_table_experiment
from subnet_forge.models.model_config import ModelConfig
from subnet_forge.models.report_row import ReportRow
from subnet_forge.pruning import MaskSet, overlap_matrix, param_percent
from subnet_forge.reporting import OVERLAP_FILE, append_manifest, emit_reports, write_overlap
from subnet_forge.subnet_forge import SubnetForge, forgetting
from subnet_forge.synthetic import export_dataset, generate
from subnet_forge.task_model import TaskModel, gradient_check

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2

MASK_MODES = [VARIANT_MULTI_TASK, VARIANT_TASK_AGNOSTIC]
SUBNET_MODES = [VARIANT_MULTI_TASK, VARIANT_SINGLE_TASK]

# Commands whose --out names the file they write; side reports and runs.log go next to it
FILE_OUTPUTS = {
    COMMAND_FIND_MASKS: 'masks.ckpt',
    COMMAND_TRAIN_SUBNETS: 'subnets.ckpt',
    COMMAND_CONTINUAL: 'continual.ckpt',
    COMMAND_ANALYZE: OVERLAP_FILE,
}
DEFAULT_OUT_DIR = 'out'


class _ArgumentParser(argparse.ArgumentParser):
    """Reports usage errors as ConfigError instead of exiting."""

    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(prog='subnet_forge_cli.py',
                             description='Find, train and analyze task-specific subnetworks of a multi-task model',
                             epilog="Example: python subnet_forge_cli.py train-dense --seed 0 --out runs/dense")
    subparsers = parser.add_subparsers(dest='command', required=True, parser_class=_ArgumentParser)

    def add_command(name, help_text):
        command = subparsers.add_parser(name, help=help_text)
        command.add_argument('--config', type=str, help='Run configuration file (key = value). Default: packaged')
        command.add_argument('--seed', type=int, help='Seed overriding the config file')
        if name in FILE_OUTPUTS:
            default_out = os.path.join(DEFAULT_OUT_DIR, FILE_OUTPUTS[name])
            command.add_argument('--out', type=str, default=default_out,
                                 help=f"Output file. Default: {default_out}")
        else:
            command.add_argument('--out', type=str, default=DEFAULT_OUT_DIR,
                                 help=f"Output directory. Default: {DEFAULT_OUT_DIR}")
        command.add_argument('--precision', choices=[PRECISION_F32, PRECISION_F64], help='Parameter precision')
        command.add_argument('--debug', action='store_true', help='Toggle debug logging')
        command.add_argument('--charts', action='store_true', help='Also write SVG charts')
        return command

    add_command(COMMAND_GEN_DATA, 'Generate and export the synthetic task datasets')
    add_command(COMMAND_TRAIN_DENSE, 'Train the dense multi-task model')
    command = add_command(COMMAND_FIND_MASKS, 'Identify pruning masks from a dense checkpoint')
    command.add_argument('--init', type=str, required=True, help='Checkpoint holding the dense model')
    command.add_argument('--mode', choices=MASK_MODES, default=VARIANT_MULTI_TASK)
    command = add_command(COMMAND_TRAIN_SUBNETS, 'Train the task subnetworks')
    command.add_argument('--init', type=str, required=True, help='Checkpoint holding the dense model')
    command.add_argument('--masks', type=str, required=True, help='Checkpoint holding the task masks')
    command.add_argument('--mode', choices=SUBNET_MODES, default=VARIANT_MULTI_TASK)
    command = add_command(COMMAND_CONTINUAL, 'Continue training one task on its new data shard')
    command.add_argument('--init', type=str, required=True, help='Checkpoint holding the starting parameters')
    command.add_argument('--masks', type=str, help='Checkpoint holding the task masks (pruned mode)')
    command.add_argument('--task', type=str, default=default_settings.DEFAULT_CONTINUAL_TARGET)
    command.add_argument('--mode', choices=CONTINUAL_MODES, default=CONTINUAL_PRUNED)
    command = add_command(COMMAND_ANALYZE, 'Overlap and parameter accounting of a set of masks')
    command.add_argument('--masks', type=str, required=True, help='Checkpoint holding the task masks')
    add_command(COMMAND_GRADCHECK, 'Compare backward against finite differences on a small model')
    add_command(COMMAND_REPORT, 'Run the dense vs pruned comparison and write all reports')
    return parser


def output_dir(command: str, out: str) -> str:
    """Directory receiving reports and runs.log: --out itself, or the directory of the --out file."""
    if command not in FILE_OUTPUTS:
        return out
    if os.path.isdir(out):
        raise ConfigError(f"{command} writes one file; --out {out} is a directory")
    return os.path.dirname(out) or os.curdir


class _Run:
    """State of one command-line invocation."""

    def __init__(self, args):
        self.args = args
        overrides = {'seed': args.seed, 'precision': args.precision}
        self.config, self.model_settings = load_config(args.config, overrides)
        self.tasks = load_task_registry(self.config.registry, shift=self.config.distribution_shift)
        self.outputs: List[str] = []
        self.out_dir = output_dir(args.command, args.out)
        os.makedirs(self.out_dir, exist_ok=True)

    def forge(self) -> SubnetForge:
        model_config = build_model_config(self.tasks, self.model_settings, self.config.seed)
        return SubnetForge(self.config, self.tasks, model_config)

    def path(self, file_name: str) -> str:
        return os.path.join(self.out_dir, file_name)

    def metadata(self, forge: SubnetForge, **extra) -> Dict[str, object]:
        metadata = {
            'command': self.args.command,
            'config': self.config.model_dump(mode='json'),
            'model': forge.model_config.model_dump(mode='json'),
            'tasks': [t.task_id for t in self.tasks],
            'rng': {'seed': self.config.seed},
        }
        metadata.update(extra)
        return metadata

    def save(self, checkpoint: Checkpoint, file_name: Optional[str] = None):
        """Write to --out for file commands, to a file in the output directory otherwise."""
        path = self.path(file_name) if file_name is not None else self.args.out
        save_checkpoint(path, checkpoint)
        self.outputs.append(path)

    def report(self, **kwargs):
        self.outputs.extend(emit_reports(self.out_dir, charts=self.args.charts, **kwargs))


def _load_store(path: str, forge: SubnetForge, name: str = STORE_THETA) -> ParameterStore:
    store = load_checkpoint(path).store(name)
    expected = forge.model.init_parameters()
    store.check_layout(expected.layout)
    return store.astype(forge.dtype) if store.dtype != forge.dtype else store


def _load_masks(path: str) -> MaskSet:
    masks = load_checkpoint(path).masks
    if masks is None or len(masks) == 0:
        raise CheckpointError(f"Checkpoint {path} holds no masks")
    return masks


def _print_scores(title: str, scores: Dict[str, float]):
    print(title)
    for task_id, value in scores.items():
        print("- {t}: {v:.4f}".format(t=task_id, v=value))


def gen_data(run: _Run):
    for task in run.tasks:
        splits = generate(task.dataset, task.task_id)
        for split in SPLITS:
            path = run.path(f"{task.task_id}-{split}.tsv")
            count = export_dataset([splits.split(split)], path)
            run.outputs.append(path)
            print("Wrote {n} {s} examples of {t} to {p}".format(n=count, s=split, t=task.task_id, p=path))


def train_dense(run: _Run):
    forge = run.forge()
    theta, history = forge.train_dense()
    run.save(Checkpoint({STORE_THETA: theta, STORE_THETA0: forge.theta_init}, metadata=run.metadata(forge)),
             'dense.ckpt')
    run.report(histories={'dense': history})
    _print_scores("Dense model:", history.last().scores)


def find_masks(run: _Run):
    forge = run.forge()
    theta0 = _load_store(run.args.init, forge)
    if run.args.mode == VARIANT_TASK_AGNOSTIC:
        agnostic = forge.identify_masks_task_agnostic(theta0)
        masks = MaskSet([agnostic])
    else:
        masks = forge.identify_masks(theta0)
    run.save(Checkpoint({STORE_THETA0: theta0}, masks, metadata=run.metadata(forge, mask_mode=run.args.mode)))
    if len(masks) > 1:
        run.report(masks=masks)
    for task_id, mask in masks.items():
        print("Mask {t}: sparsity {s:.4f}".format(t=task_id, s=mask.sparsity))


def _expand_agnostic(masks: MaskSet, forge: SubnetForge) -> MaskSet:
    if masks.task_ids == [AGNOSTIC_OWNER]:
        return MaskSet([masks[AGNOSTIC_OWNER].with_owner(t.task_id) for t in forge.tasks])
    return masks


def train_subnets(run: _Run):
    forge = run.forge()
    theta0 = _load_store(run.args.init, forge)
    masks = _expand_agnostic(_load_masks(run.args.masks), forge)
    if run.args.mode == VARIANT_SINGLE_TASK:
        thetas, histories = forge.single_task_update(theta0, masks)
        stores = {task_store_name(t): theta for t, theta in thetas.items()}
        scores = {}
        for task_id, theta in thetas.items():
            scores.update(forge.evaluate(theta, masks, [task_id]))
        param_all = param_percent(masks, PARAM_MODE_ALL_SINGLETASK)
        curves = {f"{VARIANT_SINGLE_TASK}-{t}": h for t, h in histories.items()}
    else:
        theta, history = forge.update_parameters(theta0, masks)
        stores = {STORE_THETA: theta}
        scores = history.last().scores
        param_all = param_percent(masks, PARAM_MODE_ALL_MULTITASK)
        curves = {VARIANT_MULTI_TASK: history}
    stores[STORE_THETA0] = theta0
    run.save(Checkpoint(stores, masks, metadata=run.metadata(forge, subnet_mode=run.args.mode)))
    param_one = float(np.mean([param_percent(masks, PARAM_MODE_ONE, t) for t in masks.task_ids]))
    row = ReportRow(experiment_id=f"q{forge.config.rounds}", variant=run.args.mode,
                    sparsity=float(np.mean([m.sparsity for m in masks.values()])),
                    param_one=param_one, param_all=param_all, scores=scores)
    run.report(rows=[row], histories=curves, task_ids=[t.task_id for t in forge.tasks])
    _print_scores("Subnetworks ({m}):".format(m=run.args.mode), scores)


def continual(run: _Run):
    forge = run.forge()
    theta = _load_store(run.args.init, forge)
    masks = _load_masks(run.args.masks) if run.args.masks else None
    theta_new, history = forge.continual_learn(theta, masks, run.args.task, run.args.mode)
    stores = {STORE_THETA: theta_new, STORE_THETA0: theta}
    run.save(Checkpoint(stores, masks, metadata=run.metadata(forge, continual_mode=run.args.mode,
                                                             target=run.args.task)))
    run.report(histories={f"continual-{run.args.mode}": history})
    _print_scores("Before:", history.first().scores)
    _print_scores("After:", history.last().scores)
    print("Forgetting on tasks other than {t}: {f:.4f}".format(t=run.args.task,
                                                              f=forgetting(history, forge.tasks, run.args.task)))


def analyze(run: _Run):
    masks = _load_masks(run.args.masks)
    for task_id in masks.task_ids:
        print("Param One {t}: {v:.2f}%".format(t=task_id, v=param_percent(masks, PARAM_MODE_ONE, task_id)))
    print("Param All (multi-task): {v:.2f}%".format(v=param_percent(masks, PARAM_MODE_ALL_MULTITASK)))
    print("Param All (single-task): {v:.2f}%".format(v=param_percent(masks, PARAM_MODE_ALL_SINGLETASK)))
    print(overlap_matrix(masks).round(4).to_string())
    run.outputs.extend(write_overlap(masks, run.args.out, run.args.charts))


def run_gradcheck(tasks, seed: int, examples_per_task: int = 2) -> float:
    """Backward vs finite differences on a one-layer model and a batch mixing every task."""
    model_config = ModelConfig.for_tasks(tasks, input_dim=tasks[0].dataset.input_dim, hidden_dim=8,
                                         num_trunk_layers=1, task_embedding_dim=4, seed=seed)
    model = TaskModel(model_config, tasks)
    theta = model.init_parameters(seed)
    examples = []
    for task in tasks:
        spec = task.dataset.model_copy(update={'size': examples_per_task, 'eval_size': 1, 'continual_size': 1,
                                               'seed': task.dataset.seed + seed})
        examples.extend(generate(spec, task.task_id).train.examples)
    return gradient_check(model, theta, examples, default_settings.GRADCHECK_STEP)


def gradcheck(run: _Run):
    error = run_gradcheck(run.tasks, run.config.seed)
    print("Max relative error: {e:.3e} (tolerance {t:.0e})".format(e=error, t=default_settings.GRADCHECK_TOLERANCE))
    if error > default_settings.GRADCHECK_TOLERANCE:
        raise NumericError(f"Gradient check failed: max relative error {error:.3e}")


def report(run: _Run):
    forge = run.forge()
    result = run_table_experiment(forge)
    last_rounds = max(result.masks)
    run.report(rows=result.rows, histories=result.histories, masks=result.masks[last_rounds],
               task_ids=[t.task_id for t in forge.tasks])
    for row in result.rows:
        _print_scores("{e} {v} (sparsity {s:.4f}):".format(e=row.experiment_id, v=row.variant, s=row.sparsity),
                      row.scores)


COMMANDS = {
    COMMAND_GEN_DATA: gen_data,
    COMMAND_TRAIN_DENSE: train_dense,
    COMMAND_FIND_MASKS: find_masks,
    COMMAND_TRAIN_SUBNETS: train_subnets,
    COMMAND_CONTINUAL: continual,
    COMMAND_ANALYZE: analyze,
    COMMAND_GRADCHECK: gradcheck,
    COMMAND_REPORT: report,
}


def cli_dispatch(argv: List[str]) -> int:
    """Run one subcommand; returns 0 on success, 1 on config or usage errors, 2 on runtime errors."""
    try:
        args = build_parser().parse_args(argv)
    except ConfigError as e:
        print(e)
        return EXIT_CONFIG
    except SystemExit as e:
        return EXIT_OK if not e.code else EXIT_CONFIG

    logging.basicConfig(level=logging.DEBUG if args.debug else logging.WARNING,
                        format='%(asctime)s %(levelname)s %(name)s: %(message)s')
    run: Optional[_Run] = None
    exit_code = EXIT_OK
    try:
        run = _Run(args)
        COMMANDS[args.command](run)
    except ConfigError as e:
        print("Configuration error: {e}".format(e=e))
        exit_code = EXIT_CONFIG
    except (SubnetForgeError, OSError) as e:
        print("Error: {e}".format(e=e))
        exit_code = EXIT_RUNTIME
    if run is not None:
        append_manifest(run.out_dir, argv, run.config.config_hash(), run.config.seed, run.outputs, exit_code)
    return exit_code
