import logging

import numpy as np

from subnet_forge.constants import GENERATOR_CLASSIFICATION, SHIFTED_SPLITS
from subnet_forge.exceptions import DatasetError
from subnet_forge.models.task_spec import DatasetSpec
from subnet_forge.synthetic.example import Dataset, Example, SplitDataset
from subnet_forge.synthetic.streams import PROTOTYPE_STREAM, example_rng, shift_vector, split_sizes

logger = logging.getLogger(__name__)


def class_prototypes(spec: DatasetSpec) -> np.ndarray:
    """One fixed unit-length direction per class, shape (num_classes, input_dim)."""
    rng = np.random.default_rng([spec.seed, PROTOTYPE_STREAM])
    directions = rng.standard_normal((spec.num_classes, spec.input_dim))
    return directions / np.linalg.norm(directions, axis=1, keepdims=True)


def gen_classification(spec: DatasetSpec, task_id: str) -> SplitDataset:
    """Prototype-plus-noise sequences; label of the i-th example of a split is i mod num_classes.

    Utterance-level classification stand-in: the class is a property of the whole sequence, every frame
    is the class prototype plus N(0, noise^2) per dimension.
    """
    if spec.generator != GENERATOR_CLASSIFICATION:
        raise DatasetError(f"gen_classification got a {spec.generator} spec")
    prototypes = class_prototypes(spec)
    offset = shift_vector(spec) if spec.shift else None
    splits = {}
    for split, size in split_sizes(spec):
        examples = []
        for i in range(size):
            rng = example_rng(spec.seed, split, i)
            label = i % spec.num_classes
            length = int(rng.integers(spec.length_min, spec.length_max + 1))
            frames = prototypes[label] + spec.noise * rng.standard_normal((length, spec.input_dim))
            if offset is not None and split in SHIFTED_SPLITS:
                frames = frames + offset
            examples.append(Example(frames, spec.label_offset + label, task_id))
        splits[split] = Dataset(task_id, examples)
    logger.debug("Generated classification task %s: %s", task_id, {k: len(v) for k, v in splits.items()})
    return SplitDataset(**splits)


def nearest_prototype_predictions(spec: DatasetSpec, dataset: Dataset):
    """Oracle that mean-pools the frames and picks the closest class prototype."""
    prototypes = class_prototypes(spec)
    predictions = []
    for example in dataset:
        pooled = example.input.mean(axis=0)
        distances = np.linalg.norm(prototypes - pooled, axis=1)
        predictions.append(spec.label_offset + int(np.argmin(distances)))
    return predictions
