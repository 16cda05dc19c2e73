"""Dense real-vector arithmetic shared by models, attacks, and filters.

All vectors are 1-D float64 numpy arrays. Binary operations insist on
matching dimensions and raise ValueError otherwise; nothing here silently
broadcasts.
"""
from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np


def as_vector(values) -> np.ndarray:
    """Validate external input as a finite 1-D float64 vector of dim >= 1."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"expected a 1-D vector, got shape {v.shape}")
    if v.size < 1:
        raise ValueError("vector must have dimension >= 1")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector contains NaN or Inf")
    return v


def _check_same_dim(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")


def dot(a: np.ndarray, b: np.ndarray) -> float:
    """Inner product sum(a_i * b_i)."""
    _check_same_dim(a, b)
    return float(np.dot(a, b))


def l2norm(a: np.ndarray) -> float:
    """Euclidean norm; 0 exactly when a is the zero vector."""
    return float(np.linalg.norm(a))


def axpy(alpha: float, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Return y + alpha * x componentwise."""
    _check_same_dim(x, y)
    return y + alpha * x


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity in [-1, 1]; zero-norm input is a hard error."""
    _check_same_dim(a, b)
    na, nb = l2norm(a), l2norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine undefined for zero-norm input")
    c = dot(a, b) / (na * nb)
    return float(min(1.0, max(-1.0, c)))


def _stack(vs: Sequence[np.ndarray] | Iterable[np.ndarray]) -> np.ndarray:
    vs = list(vs)
    if not vs:
        raise ValueError("empty vector list")
    dim = vs[0].shape
    for v in vs[1:]:
        if v.shape != dim:
            raise ValueError(f"dimension mismatch in vector list: {v.shape} vs {dim}")
    return np.stack(vs)


def coordinate_median(vs: Sequence[np.ndarray]) -> np.ndarray:
    """Componentwise median; even counts average the two middle order statistics."""
    return np.median(_stack(vs), axis=0)


def mean(vs: Sequence[np.ndarray]) -> np.ndarray:
    """Componentwise arithmetic mean."""
    return np.mean(_stack(vs), axis=0)
