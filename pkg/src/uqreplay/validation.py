"""Input validation helpers shared across the package."""

import numpy as np


def check_finite_vector(x, name: str = "input") -> np.ndarray:
    """Coerce to a 1-D float64 array and reject empty or non-finite input."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-dimensional, got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError(f"{name} must be non-empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_logit_matrix(Z, name: str = "logits") -> np.ndarray:
    """Coerce to a 2-D float64 array of per-view logit rows (rejects ragged input)."""
    try:
        arr = np.asarray(Z, dtype=np.float64)
    except ValueError as exc:
        raise ValueError(f"{name} has ragged rows: {exc}") from None
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must have at least one row and one column")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_probability_vector(p, name: str = "probabilities", tol: float = 1e-9) -> np.ndarray:
    """Validate a probability vector: entries >= 0 summing to 1 within tol."""
    arr = check_finite_vector(p, name)
    if np.any(arr < 0.0):
        raise ValueError(f"{name} has negative entries")
    total = float(arr.sum())
    if abs(total - 1.0) > tol:
        raise ValueError(f"{name} sums to {total!r}, expected 1 within {tol}")
    return arr
