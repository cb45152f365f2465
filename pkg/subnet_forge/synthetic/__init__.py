from subnet_forge.constants import GENERATOR_CLASSIFICATION, GENERATOR_TAGGING, GENERATOR_TRANSDUCTION
from subnet_forge.exceptions import DatasetError
from subnet_forge.models.task_spec import DatasetSpec
from .classification import gen_classification
from .dataset_io import export_dataset, import_dataset
from .example import Dataset, Example, SplitDataset, upsample
from .metrics import accuracy, token_error_rate
from .transduction import argmax_baseline_ter, gen_tagging, gen_transduction

_GENERATORS = {
    GENERATOR_CLASSIFICATION: gen_classification,
    GENERATOR_TRANSDUCTION: gen_transduction,
    GENERATOR_TAGGING: gen_tagging,
}


def generate(spec: DatasetSpec, task_id: str) -> SplitDataset:
    generator = _GENERATORS.get(spec.generator)
    if generator is None:
        raise DatasetError(f"Unknown generator: {spec.generator}")
    return generator(spec, task_id)
