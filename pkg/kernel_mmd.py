"""Gaussian RBF kernels and closed-form MMD² estimators"""
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.distance import cdist

from errors import ShapeError, ValidationError
from nn_core import as_matrix


@dataclass(frozen=True)
class KernelSpec:
    """Mixture of RBF kernels: sum_i weight_i * exp(-|x-y|^2 / (2 sigma_i^2))"""

    bandwidths: Tuple[float, ...]
    weights: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        bandwidths = tuple(float(s) for s in self.bandwidths)
        object.__setattr__(self, "bandwidths", bandwidths)
        if not bandwidths:
            raise ValidationError("kernel needs at least one bandwidth")
        if any(not s > 0 or not np.isfinite(s) for s in bandwidths):
            raise ValidationError(f"bandwidths must be positive, got {bandwidths}")
        if self.weights is not None:
            weights = tuple(float(w) for w in self.weights)
            if len(weights) != len(bandwidths):
                raise ValidationError("one weight per bandwidth required")
            object.__setattr__(self, "weights", weights)

    def terms(self) -> Sequence[Tuple[float, float]]:
        """(sigma, weight) pairs"""
        weights = self.weights or (1.0,) * len(self.bandwidths)
        return list(zip(self.bandwidths, weights))


def rbf_kernel(x, y, sigma: float) -> float:
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ShapeError(f"vectors of different length: {x.shape} vs {y.shape}")
    if not sigma > 0:
        raise ValidationError(f"sigma must be positive, got {sigma}")
    diff = x - y
    return float(np.exp(-np.dot(diff, diff) / (2.0 * sigma * sigma)))


def _pair(X, Y, min_rows: int = 1) -> Tuple[np.ndarray, np.ndarray]:
    X = as_matrix(X, "X")
    Y = as_matrix(Y, "Y")
    if X.shape[0] < min_rows or Y.shape[0] < min_rows:
        raise ValidationError(f"need at least {min_rows} rows per sample, got {X.shape[0]} and {Y.shape[0]}")
    if X.shape[1] != Y.shape[1]:
        raise ShapeError(f"samples differ in dimension: {X.shape[1]} vs {Y.shape[1]}")
    return X, Y


def gram_matrix(X, Y, spec: KernelSpec) -> np.ndarray:
    X, Y = _pair(X, Y)
    sq = cdist(X, Y, "sqeuclidean")
    K = np.zeros_like(sq)
    for sigma, weight in spec.terms():
        K += weight * np.exp(-sq / (2.0 * sigma * sigma))
    return K


def mmd2_biased(X, Y, spec: KernelSpec) -> float:
    """V-statistic: mean K(X,X) + mean K(Y,Y) - 2 mean K(X,Y)"""
    X, Y = _pair(X, Y)
    return float(gram_matrix(X, X, spec).mean()
                 + gram_matrix(Y, Y, spec).mean()
                 - 2.0 * gram_matrix(X, Y, spec).mean())


def mmd2_unbiased(X, Y, spec: KernelSpec) -> float:
    """U-statistic (diagonals excluded); may be negative. Diagnostics only."""
    X, Y = _pair(X, Y, min_rows=2)
    n, m = X.shape[0], Y.shape[0]
    Kxx = gram_matrix(X, X, spec)
    Kyy = gram_matrix(Y, Y, spec)
    Kxy = gram_matrix(X, Y, spec)
    xx = (Kxx.sum() - np.trace(Kxx)) / (n * (n - 1))
    yy = (Kyy.sum() - np.trace(Kyy)) / (m * (m - 1))
    return float(xx + yy - 2.0 * Kxy.mean())


def mmd2_biased_grad_wrt_Y(X, Y, spec: KernelSpec) -> np.ndarray:
    """
    Exact gradient of mmd2_biased(X, Y) w.r.t. every entry of Y

    Uses dk(a, b)/db = k(a, b) (a - b) / sigma^2 for each mixture term.
    """
    X, Y = _pair(X, Y)
    n, m = X.shape[0], Y.shape[0]
    sq_yy = cdist(Y, Y, "sqeuclidean")
    sq_yx = cdist(Y, X, "sqeuclidean")
    grad = np.zeros_like(Y)
    for sigma, weight in spec.terms():
        s2 = sigma * sigma
        Kyy = weight * np.exp(-sq_yy / (2.0 * s2))
        Kyx = weight * np.exp(-sq_yx / (2.0 * s2))
        grad += (2.0 / (m * m * s2)) * (Kyy @ Y - Kyy.sum(axis=1, keepdims=True) * Y)
        grad -= (2.0 / (n * m * s2)) * (Kyx @ X - Kyx.sum(axis=1, keepdims=True) * Y)
    return grad
