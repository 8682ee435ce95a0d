"""Input validation helpers, thin wrappers over scikit-learn's checkers."""

import numbers

import numpy as np
from sklearn.utils.validation import check_array

from .exceptions import ConfigError, DimensionMismatch


def check_positive(value, name, *, strict=True):
    if not isinstance(value, numbers.Real) or not np.isfinite(value):
        raise ConfigError(f"{name} must be a finite real number, got {value!r}")
    if strict and value <= 0:
        raise ConfigError(f"{name} must be > 0, got {value!r}")
    if not strict and value < 0:
        raise ConfigError(f"{name} must be >= 0, got {value!r}")
    return float(value)


def check_int(value, name, *, minimum=1):
    if not isinstance(value, numbers.Integral) or value < minimum:
        raise ConfigError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)


def check_vector(x, name, *, length=None):
    """Return ``x`` as a finite 1-D float array, optionally of fixed length."""
    try:
        arr = check_array(np.atleast_1d(np.asarray(x, dtype=float)), ensure_2d=False,
                          input_name=name)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if arr.ndim != 1:
        raise DimensionMismatch(f"{name} must be one-dimensional, got shape {arr.shape}")
    if length is not None and arr.shape[0] != length:
        raise DimensionMismatch(f"{name} must have length {length}, got {arr.shape[0]}")
    return arr


def check_design(H, y=None):
    """Validate a coefficient matrix (rows are H_t) and optional observations."""
    H = check_array(H, ensure_min_samples=1, input_name="H")
    if y is None:
        return H
    y = check_vector(y, "y")
    if y.shape[0] != H.shape[0]:
        raise DimensionMismatch(
            f"H has {H.shape[0]} rows but y has {y.shape[0]} entries")
    return H, y


def check_symmetric(M, name="M", tol=1e-10):
    M = check_array(M, input_name=name)
    if M.shape[0] != M.shape[1]:
        raise DimensionMismatch(f"{name} must be square, got shape {M.shape}")
    scale = max(1.0, float(np.abs(M).max()))
    if np.abs(M - M.T).max() > tol * scale:
        raise ConfigError(f"{name} must be symmetric")
    return M
