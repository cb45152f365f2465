"""Tab-separated text export of generated datasets.

One example per line: ``task_id <TAB> frames <TAB> target`` where frames are
``|`` separated and each frame is a space separated list of floats written with
``repr`` so that a re-import is bit-exact. Sequence targets are space separated too.
"""
import logging
from typing import Dict, Iterable, List

import numpy as np

from subnet_forge.constants import TASK_KIND_CLASSIFICATION
from subnet_forge.exceptions import DatasetError
from subnet_forge.synthetic.example import Dataset, Example

logger = logging.getLogger(__name__)

FRAME_SEPARATOR = '|'
VALUE_SEPARATOR = ' '


def format_example(example: Example) -> str:
    frames = FRAME_SEPARATOR.join(VALUE_SEPARATOR.join(repr(float(v)) for v in frame) for frame in example.input)
    if example.is_sequence:
        target = ' '.join(str(t) for t in example.target)
    else:
        target = str(example.target)
    return f"{example.task_id}\t{frames}\t{target}"


def export_dataset(datasets: Iterable[Dataset], file_path: str) -> int:
    count = 0
    with open(file_path, mode='w', encoding='utf-8', newline='\n') as outfile:
        for dataset in datasets:
            for example in dataset:
                outfile.write(format_example(example) + '\n')
                count += 1
    logger.info("Wrote %d examples to %s", count, file_path)
    return count


def parse_example(line: str, task_kinds: Dict[str, str], line_number: int = 0) -> Example:
    fields = line.rstrip('\n').split('\t')
    if len(fields) != 3:
        raise DatasetError(f"Line {line_number}: expected 3 tab-separated fields, got {len(fields)}")
    task_id, frames, target = fields
    if task_id not in task_kinds:
        raise DatasetError(f"Line {line_number}: unknown task {task_id}")
    try:
        values = np.array([[float(v) for v in frame.split()]
                           for frame in frames.split(FRAME_SEPARATOR)], dtype=np.float64)
        if task_kinds[task_id] == TASK_KIND_CLASSIFICATION:
            parsed_target = int(target)
        else:
            parsed_target = tuple(int(t) for t in target.split())
    except ValueError as e:
        raise DatasetError(f"Line {line_number}: {e}") from e
    if not isinstance(parsed_target, int) and len(parsed_target) != values.shape[0]:
        raise DatasetError(f"Line {line_number}: {len(parsed_target)} target tokens for {values.shape[0]} frames")
    return Example(values, parsed_target, task_id)


def import_dataset(file_path: str, task_kinds: Dict[str, str]) -> Dict[str, Dataset]:
    """Read an exported file back, grouped per task in file order."""
    grouped: Dict[str, List[Example]] = {}
    with open(file_path, mode='r', encoding='utf-8') as in_file:
        for line_number, line in enumerate(in_file, start=1):
            if not line.strip():
                continue
            example = parse_example(line, task_kinds, line_number)
            grouped.setdefault(example.task_id, []).append(example)
    return {task_id: Dataset(task_id, examples) for task_id, examples in grouped.items()}
