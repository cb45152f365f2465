import json
import logging
import os
import subprocess
from datetime import datetime, timezone
from typing import Dict, List, Optional, Sequence

import pandas as pd

from subnet_forge.models.report_row import ReportRow
from subnet_forge.models.training_history import TrainingHistory
from subnet_forge.pruning import MaskSet, overlap_matrix

logger = logging.getLogger(__name__)

FLOAT_FORMAT = '%.6f'
SUMMARY_FILE = 'summary.csv'
OVERLAP_FILE = 'overlap.csv'
MANIFEST_FILE = 'runs.log'


def _write_csv(frame: pd.DataFrame, file_path: str, index: bool = False) -> str:
    frame.to_csv(file_path, index=index, float_format=FLOAT_FORMAT, lineterminator='\n', encoding='utf-8')
    return file_path


def summary_frame(rows: List[ReportRow], task_ids: List[str]) -> pd.DataFrame:
    return pd.DataFrame([row.as_record(task_ids) for row in rows], columns=ReportRow.columns(task_ids))


def history_frame(history: TrainingHistory) -> pd.DataFrame:
    records = []
    for record in history.records:
        line = {'step': record.step, 'trained_task': record.task_id, 'loss': record.loss}
        line.update(record.scores)
        records.append(line)
    return pd.DataFrame(records, columns=['step', 'trained_task', 'loss'] + list(history.task_ids))


def curves_file_name(name: str, extension: str = 'csv') -> str:
    safe = ''.join(c if c.isalnum() or c in '-_' else '_' for c in name)
    return f"curves_{safe}.{extension}"


def emit_reports(outdir: str,
                 rows: Optional[List[ReportRow]] = None,
                 histories: Optional[Dict[str, TrainingHistory]] = None,
                 masks: Optional[MaskSet] = None,
                 task_ids: Optional[List[str]] = None,
                 charts: bool = False) -> List[str]:
    """
    Write summary.csv, curves_<name>.csv per history and overlap.csv, and SVG charts when asked.
    :return: paths written, in writing order
    """
    os.makedirs(outdir, exist_ok=True)
    written = []
    if rows:
        task_ids = task_ids or list(rows[0].scores)
        written.append(_write_csv(summary_frame(rows, task_ids), os.path.join(outdir, SUMMARY_FILE)))
    for name, history in (histories or {}).items():
        written.append(_write_csv(history_frame(history), os.path.join(outdir, curves_file_name(name))))
        if charts:
            written.append(plot_history(history, name, os.path.join(outdir, curves_file_name(name, 'svg'))))
    if masks is not None and len(masks) > 0:
        written.extend(write_overlap(masks, os.path.join(outdir, OVERLAP_FILE), charts))
    logger.info("Wrote %d report files to %s", len(written), outdir)
    return written


def write_overlap(masks: MaskSet, file_path: str, charts: bool = False) -> List[str]:
    """Overlap matrix CSV at file_path, with an SVG heatmap next to it when asked."""
    matrix = overlap_matrix(masks)
    matrix.index.name = 'task_id'
    written = [_write_csv(matrix, file_path, index=True)]
    if charts:
        written.append(plot_overlap(matrix, os.path.splitext(file_path)[0] + '.svg'))
    return written


def _pyplot():
    import matplotlib
    matplotlib.use('Agg')
    import matplotlib.pyplot as plt
    return plt


def plot_history(history: TrainingHistory, name: str, file_path: str) -> str:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    steps = history.steps()
    for task_id in history.task_ids:
        ax.plot(steps, history.scores_for(task_id), marker='o', markersize=3, label=task_id)
    ax.set_xlabel('optimizer step')
    ax.set_ylabel('score (accuracy or TER)')
    ax.set_title(name)
    ax.legend(loc='best', fontsize='small')
    fig.tight_layout()
    fig.savefig(file_path, format='svg')
    plt.close(fig)
    return file_path


def plot_overlap(matrix: pd.DataFrame, file_path: str) -> str:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 4))
    image = ax.imshow(matrix.values, vmin=0.0, vmax=1.0, cmap='viridis')
    ax.set_xticks(range(len(matrix.columns)), labels=list(matrix.columns), rotation=45, ha='right')
    ax.set_yticks(range(len(matrix.index)), labels=list(matrix.index))
    for i in range(len(matrix.index)):
        for j in range(len(matrix.columns)):
            ax.text(j, i, f"{matrix.values[i, j]:.2f}", ha='center', va='center', fontsize=7, color='white')
    fig.colorbar(image, ax=ax)
    fig.tight_layout()
    fig.savefig(file_path, format='svg')
    plt.close(fig)
    return file_path


def git_describe() -> str:
    try:
        out = subprocess.check_output(['git', 'describe', '--always', '--dirty', '--tags'],
                                      stderr=subprocess.DEVNULL, text=True,
                                      cwd=os.path.dirname(os.path.abspath(__file__)))
        return out.strip() or 'unknown'
    except (OSError, subprocess.CalledProcessError):
        return 'unknown'


def append_manifest(outdir: str, argv: Sequence[str], config_hash: Optional[str], seed: Optional[int],
                    outputs: List[str], exit_code: int = 0) -> str:
    """Append one JSON line describing a command-line run to runs.log."""
    os.makedirs(outdir, exist_ok=True)
    entry = {
        'time': datetime.now(timezone.utc).isoformat(timespec='seconds'),
        'argv': list(argv),
        'config_hash': config_hash,
        'seed': seed,
        'git': git_describe(),
        'outputs': list(outputs),
        'exit_code': exit_code,
    }
    file_path = os.path.join(outdir, MANIFEST_FILE)
    with open(file_path, 'a', encoding='utf-8', newline='\n') as outfile:
        outfile.write(json.dumps(entry, sort_keys=True) + '\n')
    return file_path
