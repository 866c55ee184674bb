"""Central finite differences, used as an independent gradient oracle."""

from __future__ import annotations

from typing import Callable

import numpy as np

from byol_explore.errors import ConfigurationError
from byol_explore.nn.tree import ParameterTree


def finite_diff_grad(
    fn: Callable[[ParameterTree], float], params: ParameterTree, eps: float = 1e-5
) -> ParameterTree:
    """Estimate d fn / d params by ``(fn(p + eps e) - fn(p - eps e)) / (2 eps)`` per scalar."""
    if eps <= 0:
        raise ConfigurationError(f"eps must be positive, got {eps}")
    grads = {}
    for name, value in params.items():
        g = np.zeros_like(value)
        flat = g.reshape(-1)
        for i in range(value.size):
            plus = value.copy().reshape(-1)
            minus = value.copy().reshape(-1)
            plus[i] += eps
            minus[i] -= eps
            f_plus = float(fn(params.replace({name: plus.reshape(value.shape)})))
            f_minus = float(fn(params.replace({name: minus.reshape(value.shape)})))
            flat[i] = (f_plus - f_minus) / (2.0 * eps)
        grads[name] = g
    return ParameterTree(grads)


def max_relative_error(analytic: ParameterTree, numeric: ParameterTree, floor: float = 1e-6) -> float:
    """max |a - n| / max(|a|, |n|, floor) over all entries."""
    analytic.check_congruent(numeric)
    worst = 0.0
    for name, a in analytic.items():
        n = numeric[name]
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        if a.size:
            worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst
