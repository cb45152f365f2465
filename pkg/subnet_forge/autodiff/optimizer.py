import logging
from typing import Dict

import numpy as np

from subnet_forge.autodiff.parameter_store import ParameterStore
from subnet_forge.exceptions import LayoutError, NumericError

logger = logging.getLogger(__name__)


class WarmupSchedule:
    """Learning rate rising linearly to base_lr over warmup_steps, then constant.

    lr(step) = base_lr * min(1, step / warmup_steps)
    """

    def __init__(self, base_lr: float, warmup_steps: int = 0):
        if base_lr <= 0:
            raise ValueError(f"base_lr must be positive, got {base_lr}")
        if warmup_steps < 0:
            raise ValueError(f"warmup_steps must be >= 0, got {warmup_steps}")
        self.base_lr = base_lr
        self.warmup_steps = warmup_steps

    def __call__(self, step: int) -> float:
        if self.warmup_steps == 0:
            return self.base_lr
        return self.base_lr * min(1.0, step / self.warmup_steps)

    def __repr__(self):
        return f"WarmupSchedule(base_lr={self.base_lr}, warmup_steps={self.warmup_steps})"


class OptimizerState:
    def __init__(self):
        self.first_moment: Dict[str, np.ndarray] = {}
        self.second_moment: Dict[str, np.ndarray] = {}
        self.step = 0

    @classmethod
    def for_store(cls, store: ParameterStore) -> 'OptimizerState':
        state = cls()
        state.first_moment = store.zeros_like()
        state.second_moment = store.zeros_like()
        return state

    def copy(self) -> 'OptimizerState':
        clone = OptimizerState()
        clone.first_moment = {name: m.copy() for name, m in self.first_moment.items()}
        clone.second_moment = {name: v.copy() for name, v in self.second_moment.items()}
        clone.step = self.step
        return clone


class AdamWarmup:
    """Adam with a linear warmup schedule.

    Scalars whose gradient is exactly zero are skipped together with their
    moments, so a zero gradient is always a fixed point regardless of the
    state accumulated earlier.
    """

    BETA1 = 0.9
    BETA2 = 0.98
    EPSILON = 1e-9

    def __init__(self, schedule: WarmupSchedule, beta1: float = BETA1, beta2: float = BETA2,
                 epsilon: float = EPSILON):
        self.schedule = schedule
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon

    def init_state(self, store: ParameterStore) -> OptimizerState:
        return OptimizerState.for_store(store)

    def step(self, store: ParameterStore, grads: Dict[str, np.ndarray], state: OptimizerState) -> float:
        """Update store in place and return the learning rate that was used."""
        for name, grad in grads.items():
            if name not in store:
                raise LayoutError(f"Gradient for unknown parameter {name}")
            if grad.shape != store[name].shape:
                raise LayoutError(f"Gradient for {name} has shape {grad.shape}, expected {store[name].shape}")
            if not np.isfinite(grad).all():
                raise NumericError(f"Non-finite gradient for {name}; optimizer step aborted")

        step = state.step + 1
        lr = self.schedule(step)
        correction1 = 1.0 - self.beta1 ** step
        correction2 = 1.0 - self.beta2 ** step
        for name in store.names():
            grad = grads.get(name)
            if grad is None:
                continue
            active = grad != 0
            if not active.any():
                continue
            m = state.first_moment[name]
            v = state.second_moment[name]
            m = np.where(active, self.beta1 * m + (1.0 - self.beta1) * grad, m)
            v = np.where(active, self.beta2 * v + (1.0 - self.beta2) * grad * grad, v)
            state.first_moment[name] = m.astype(store.dtype, copy=False)
            state.second_moment[name] = v.astype(store.dtype, copy=False)
            update = lr * (m / correction1) / (np.sqrt(v / correction2) + self.epsilon)
            values = store[name]
            store.set(name, np.where(active, values - update, values).astype(store.dtype, copy=False))
        state.step = step
        return lr


def adam_step(store: ParameterStore, grads: Dict[str, np.ndarray], state: OptimizerState,
              schedule: WarmupSchedule) -> ParameterStore:
    AdamWarmup(schedule).step(store, grads, state)
    return store
