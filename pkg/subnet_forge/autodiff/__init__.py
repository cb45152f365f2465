from .graph import ComputationGraph, Tensor, backward
from .gradcheck import fd_gradient, max_relative_error
from .optimizer import AdamWarmup, OptimizerState, WarmupSchedule, adam_step
from .parameter_store import ParameterStore
