from subnet_forge.constants import *
from subnet_forge.models.model_config import ModelConfig
from subnet_forge.models.run_config import RunConfig

DEFAULT_RUN_CONFIG = RunConfig()
DEFAULT_MODEL_CONFIG = ModelConfig()

REGISTRY_DEFAULT = 'default'
REGISTRY_EXTENDED = 'extended'

# Variants compared in the summary table, in row order
TABLE_VARIANTS = [VARIANT_DENSE,
                  VARIANT_MULTI_TASK,
                  VARIANT_SINGLE_TASK,
                  VARIANT_TASK_AGNOSTIC
                  ]

DEFAULT_CONTINUAL_TARGET = 'SEQ'
GRADCHECK_TOLERANCE = 1e-4
GRADCHECK_STEP = 1e-5
DEFAULT_THREADS = 1
