import logging
from typing import List, Tuple

import numpy as np

from subnet_forge.constants import GENERATOR_TAGGING, GENERATOR_TRANSDUCTION, SHIFTED_SPLITS
from subnet_forge.exceptions import DatasetError
from subnet_forge.models.task_spec import DatasetSpec
from subnet_forge.synthetic.example import Dataset, Example, SplitDataset
from subnet_forge.synthetic.metrics import token_error_rate
from subnet_forge.synthetic.streams import example_rng, shift_vector, split_sizes

logger = logging.getLogger(__name__)


def _noisy_tokens(spec: DatasetSpec, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    length = int(rng.integers(spec.length_min, spec.length_max + 1))
    tokens = rng.integers(0, spec.alphabet_size, size=length)
    frames = np.zeros((length, spec.input_dim))
    frames[np.arange(length), tokens] = 1.0
    frames += spec.noise * rng.standard_normal((length, spec.input_dim))
    return tokens, frames


def _tag_targets(spec: DatasetSpec, tokens: np.ndarray) -> Tuple[int, ...]:
    # even positions carry the entity tag of the source token, odd positions the filler token
    filler = spec.label_offset + spec.num_tags
    return tuple(spec.label_offset + int(token) % spec.num_tags if position % 2 == 0 else filler
                 for position, token in enumerate(tokens))


def _generate(spec: DatasetSpec, task_id: str, tagging: bool) -> SplitDataset:
    offset = shift_vector(spec) if spec.shift else None
    splits = {}
    for split, size in split_sizes(spec):
        examples = []
        for i in range(size):
            tokens, frames = _noisy_tokens(spec, example_rng(spec.seed, split, i))
            if offset is not None and split in SHIFTED_SPLITS:
                frames = frames + offset
            if tagging:
                target = _tag_targets(spec, tokens)
            else:
                target = tuple(spec.label_offset + int(token) for token in tokens)
            examples.append(Example(frames, target, task_id))
        splits[split] = Dataset(task_id, examples)
    logger.debug("Generated %s task %s: %s", spec.generator, task_id, {k: len(v) for k, v in splits.items()})
    return SplitDataset(**splits)


def gen_transduction(spec: DatasetSpec, task_id: str) -> SplitDataset:
    """Denoising transduction (ASR analog): noisy one-hot frames, target is the clean token sequence."""
    if spec.generator != GENERATOR_TRANSDUCTION:
        raise DatasetError(f"gen_transduction got a {spec.generator} spec")
    return _generate(spec, task_id, tagging=False)


def gen_tagging(spec: DatasetSpec, task_id: str) -> SplitDataset:
    """Tag transduction (NER analog): targets alternate entity tag and filler token."""
    if spec.generator != GENERATOR_TAGGING:
        raise DatasetError(f"gen_tagging got a {spec.generator} spec")
    return _generate(spec, task_id, tagging=True)


def argmax_baseline_predictions(spec: DatasetSpec, dataset: Dataset) -> List[Tuple[int, ...]]:
    """Reads each frame's strongest one-hot channel back as the token."""
    predictions = []
    for example in dataset:
        channels = example.input[:, :spec.alphabet_size]
        predictions.append(tuple(spec.label_offset + int(c) for c in np.argmax(channels, axis=1)))
    return predictions


def argmax_baseline_ter(spec: DatasetSpec, dataset: Dataset) -> float:
    return token_error_rate(dataset.targets(), argmax_baseline_predictions(spec, dataset))
