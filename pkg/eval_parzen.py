"""Parzen-window log-likelihood of generated samples"""
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
from scipy.special import logsumexp
from tqdm import tqdm

from errors import ShapeError, ValidationError
from nn_core import as_matrix


@dataclass
class ParzenModel:
    """Isotropic Gaussian kernel density over generated samples"""

    centers: np.ndarray
    sigma: float

    def __post_init__(self):
        self.centers = as_matrix(self.centers, "centers")
        if self.centers.shape[0] < 1:
            raise ValidationError("a Parzen model needs at least one center")
        if not self.sigma > 0:
            raise ValidationError(f"sigma must be positive, got {self.sigma}")

    @property
    def dim(self) -> int:
        return self.centers.shape[1]


@dataclass
class ParzenReport:
    variant: str
    n_samples: int
    sigma: float
    mean_loglik: float
    stderr: float

    HEADER = ("variant", "S", "sigma", "mean_loglik", "stderr")

    def row(self) -> Tuple:
        return (self.variant, self.n_samples, repr(self.sigma), repr(self.mean_loglik), repr(self.stderr))

    def to_text(self) -> str:
        return (f"📊 Parzen log-likelihood ({self.variant})\n"
                f"   samples S   : {self.n_samples}\n"
                f"   bandwidth σ*: {self.sigma:.6g}\n"
                f"   log-lik     : {self.mean_loglik:.4f} ± {self.stderr:.4f}\n")


def parzen_log_densities(model: ParzenModel, X, batch_size: int = 500) -> np.ndarray:
    """log (1/S) sum_s N(x; c_s, sigma^2 I) for every row of X, via log-sum-exp"""
    X = as_matrix(X, "X")
    if X.shape[1] != model.dim:
        raise ShapeError(f"points have {X.shape[1]} dims, model has {model.dim}")
    if batch_size < 1:
        raise ValidationError("batch size must be >= 1")
    S, d = model.centers.shape
    sigma = model.sigma
    norm = np.log(S) + 0.5 * d * np.log(2.0 * np.pi * sigma * sigma)
    c_sq = np.sum(model.centers ** 2, axis=1)
    out = np.empty(X.shape[0])
    for start in range(0, X.shape[0], batch_size):
        chunk = X[start:start + batch_size]
        sq = np.sum(chunk ** 2, axis=1)[:, None] + c_sq[None, :] - 2.0 * chunk @ model.centers.T
        np.maximum(sq, 0.0, out=sq)
        out[start:start + batch_size] = logsumexp(-sq / (2.0 * sigma * sigma), axis=1) - norm
    return out


def parzen_log_density(model: ParzenModel, x) -> float:
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.shape != (model.dim,):
        raise ShapeError(f"point has {x.shape[0]} dims, model has {model.dim}")
    diff = model.centers - x
    sq = np.sum(diff * diff, axis=1)
    S, d = model.centers.shape
    return float(logsumexp(-sq / (2.0 * model.sigma ** 2)) - np.log(S)
                 - 0.5 * d * np.log(2.0 * np.pi * model.sigma ** 2))


def default_bandwidth_grid(grid_min: float = 0.01, grid_max: float = 1.0, size: int = 20) -> np.ndarray:
    return np.logspace(np.log10(grid_min), np.log10(grid_max), size)


def select_bandwidth(centers, validation, grid: Sequence[float], batch_size: int = 500,
                     verbose: bool = False) -> float:
    """Grid sigma with the best mean validation log-density; ties go to the smaller sigma"""
    grid = sorted(float(s) for s in grid)
    if not grid:
        raise ValidationError("bandwidth grid is empty")
    validation = as_matrix(validation, "validation")
    if validation.shape[0] == 0:
        raise ValidationError("validation set is empty")
    best_sigma, best_score = grid[0], -np.inf
    for sigma in tqdm(grid, desc="bandwidth", disable=not verbose):
        score = float(np.mean(parzen_log_densities(ParzenModel(centers, sigma), validation, batch_size)))
        if score > best_score:
            best_sigma, best_score = sigma, score
    if verbose:
        print(f"✅ selected σ* = {best_sigma:.4g} (validation log-lik {best_score:.4f})")
    return best_sigma


def evaluate_loglik(model: ParzenModel, test, batch_size: int = 500) -> Tuple[float, float]:
    """Mean per-example log density and its standard error"""
    test = as_matrix(test, "test")
    if test.shape[0] == 0:
        raise ValidationError("test set is empty")
    values = parzen_log_densities(model, test, batch_size)
    if values.shape[0] < 2:
        return float(values.mean()), 0.0
    return float(values.mean()), float(values.std(ddof=1) / np.sqrt(values.shape[0]))
