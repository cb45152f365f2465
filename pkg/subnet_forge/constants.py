TASK_KIND_CLASSIFICATION = 'classification'
TASK_KIND_SEQUENCE = 'sequence'

METRIC_ACCURACY = 'accuracy'
METRIC_TER = 'token-error-rate'

GENERATOR_CLASSIFICATION = 'classification'
GENERATOR_TRANSDUCTION = 'transduction'
GENERATOR_TAGGING = 'tagging'

SPLIT_TRAIN = 'train'
SPLIT_EVAL = 'eval'
SPLIT_CONTINUAL = 'continual'
# held-out examples drawn like the continual shard; the continual target is scored on them
SPLIT_CONTINUAL_EVAL = 'continual_eval'
SPLITS = [SPLIT_TRAIN, SPLIT_EVAL, SPLIT_CONTINUAL, SPLIT_CONTINUAL_EVAL]
SHIFTED_SPLITS = [SPLIT_CONTINUAL, SPLIT_CONTINUAL_EVAL]

AGNOSTIC_OWNER = 'agnostic'

PARAM_MODE_ONE = 'one'
PARAM_MODE_ALL_MULTITASK = 'all-multitask'
PARAM_MODE_ALL_SINGLETASK = 'all-singletask'

VARIANT_DENSE = 'dense'
VARIANT_MULTI_TASK = 'multi-task'
VARIANT_SINGLE_TASK = 'single-task'
VARIANT_TASK_AGNOSTIC = 'task-agnostic'

CONTINUAL_PRUNED = 'pruned-subnetwork'
CONTINUAL_DENSE_FULL = 'dense-full'
CONTINUAL_DENSE_ENCODER = 'dense-encoder-only'
CONTINUAL_MODES = [CONTINUAL_PRUNED, CONTINUAL_DENSE_FULL, CONTINUAL_DENSE_ENCODER]

CONTINUAL_DATA_AUGMENT = 'augment'
CONTINUAL_DATA_REPLACE = 'replace'

PRECISION_F64 = 'f64'
PRECISION_F32 = 'f32'

# Parameter entry names of the task model
TASK_EMBEDDING = 'task_embedding'
CLS_HEAD = 'cls_head'
SEQ_HEAD = 'seq_head'
TRUNK = 'trunk'

COMMAND_GEN_DATA = 'gen-data'
COMMAND_TRAIN_DENSE = 'train-dense'
COMMAND_FIND_MASKS = 'find-masks'
COMMAND_TRAIN_SUBNETS = 'train-subnets'
COMMAND_CONTINUAL = 'continual'
COMMAND_ANALYZE = 'analyze'
COMMAND_GRADCHECK = 'gradcheck'
COMMAND_REPORT = 'report'

THREADS_ENV_VAR = 'SUBNET_FORGE_THREADS'

# History label of steps trained on the all-task mixture
MIXTURE_TASK = 'mixture'
