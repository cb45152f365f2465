from typing import Callable, Dict

import numpy as np

from subnet_forge.autodiff.parameter_store import ParameterStore

RELATIVE_ERROR_FLOOR = 1e-4


def fd_gradient(f: Callable[[ParameterStore], float], store: ParameterStore, h: float = 1e-5) -> Dict[str, np.ndarray]:
    """Central finite-difference gradient (f(θ+h·e_j) − f(θ−h·e_j)) / 2h for every scalar j.

    f is evaluated on a private copy of store and must not keep a reference to it.
    """
    if h <= 0:
        raise ValueError(f"Step h must be positive, got {h}")
    work = store.copy()
    estimate = {}
    for name, values in work.items():
        flat = values.reshape(-1)
        grad = np.zeros(flat.size, dtype=np.float64)
        for j in range(flat.size):
            original = flat[j]
            flat[j] = original + h
            plus = float(f(work))
            flat[j] = original - h
            minus = float(f(work))
            flat[j] = original
            grad[j] = (plus - minus) / (2.0 * h)
        estimate[name] = grad.reshape(values.shape)
    return estimate


def max_relative_error(analytic: Dict[str, np.ndarray], numeric: Dict[str, np.ndarray],
                       floor: float = RELATIVE_ERROR_FLOOR) -> float:
    """Largest |a − n| / max(|a|, |n|, floor) over all scalars of both gradient maps."""
    worst = 0.0
    for name, a in analytic.items():
        n = numeric[name]
        denominator = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float((np.abs(a - n) / denominator).max(initial=0.0)))
    return worst
