"""Error metrics for solutions measured against a manufactured exact field."""
from typing import NamedTuple

import numpy as np
import torch

from .exceptions import MetricError


class PointError(NamedTuple):
    value: float
    # True when the exact value is zero and ``value`` is the absolute error.
    absolute: bool


def _array(values):
    if isinstance(values, torch.Tensor):
        values = values.detach().cpu().numpy()
    return np.asarray(values, dtype=np.float64).reshape(-1)


def relative_error(exact, numeric):
    exact, numeric = float(exact), float(numeric)
    if exact == 0.0:
        return PointError(abs(numeric), True)
    return PointError(abs(exact - numeric) / abs(exact), False)


def relative_error_map(exact, numeric):
    """Pointwise relative errors and the mask of absolute-fallback points."""
    exact, numeric = _array(exact), _array(numeric)
    if exact.shape != numeric.shape:
        raise MetricError(f"length mismatch: {exact.size} exact vs {numeric.size} numeric values")
    zero = exact == 0.0
    errors = np.abs(exact - numeric) / np.where(zero, 1.0, np.abs(exact))
    return errors, zero


def max_relative_error(exact, numeric):
    errors, _ = relative_error_map(exact, numeric)
    return float(errors.max()) if errors.size else 0.0


def l2_relative_error(exact, numeric):
    exact, numeric = _array(exact), _array(numeric)
    if exact.size == 0 or exact.shape != numeric.shape:
        raise MetricError(f"need equal non-empty vectors, got {exact.size} and {numeric.size}")
    norm = np.linalg.norm(exact)
    if norm == 0.0:
        raise MetricError("exact vector has zero norm; relative L2 error is undefined")
    return float(np.linalg.norm(exact - numeric) / norm)
