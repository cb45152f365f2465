import numpy as np

from subnet_forge.constants import SPLITS

# Seed stream ids; every split and every example gets its own counter-derived generator,
# so generation order does not change any example.
PROTOTYPE_STREAM = 7001
SHIFT_STREAM = 7002
SPLIT_STREAM_BASE = 7100

# length of the constant input offset of the shifted splits
SHIFT_NORM = 1.0


def example_rng(seed: int, split: str, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, SPLIT_STREAM_BASE + SPLITS.index(split), index])


def split_sizes(spec):
    return [(split, size) for split, size in zip(SPLITS, [spec.size, spec.eval_size, spec.continual_size, spec.continual_eval_size])]


def shift_vector(spec) -> np.ndarray:
    """Constant offset added to the frames of the continual splits when distribution shift is on."""
    rng = np.random.default_rng([spec.seed, SHIFT_STREAM])
    direction = rng.standard_normal(spec.input_dim)
    return SHIFT_NORM * direction / np.linalg.norm(direction)
