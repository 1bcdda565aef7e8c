"""Doubly stochastic adversary: f(.) = sum_c alpha_c * gap_c * phi_c(.) over random features"""
from dataclasses import dataclass, field

import numpy as np

from errors import ShapeError, ValidationError
from nn_core import as_matrix
from random_features import RandomFeatureMap, feature_map, resample


@dataclass
class AdversaryState:
    """
    Coefficients alpha and the embedding gap frozen at the last ascent

    Args:
        map: random feature map the adversary lives on
        alpha: coefficient per feature (2M)
        frozen_gap: mean phi(prior) - mean phi(generated) captured at the last ascent
        ascent_lr: step size of the alpha ascent
        l2_decay: shrinkage of alpha toward zero
        alpha_cap: |alpha|_inf bound
    """

    map: RandomFeatureMap
    alpha: np.ndarray = None
    frozen_gap: np.ndarray = None
    ascent_lr: float = 0.001
    l2_decay: float = 0.01
    alpha_cap: float = 10.0
    resample_features: bool = False
    base_map: RandomFeatureMap = field(default=None, repr=False)

    def __post_init__(self):
        size = self.map.feature_dim
        if self.alpha is None:
            self.alpha = np.zeros(size)
        if self.frozen_gap is None:
            self.frozen_gap = np.zeros(size)
        self.alpha = np.asarray(self.alpha, dtype=np.float64)
        self.frozen_gap = np.asarray(self.frozen_gap, dtype=np.float64)
        if self.alpha.shape != (size,) or self.frozen_gap.shape != (size,):
            raise ShapeError(f"alpha and frozen_gap must have length {size}")
        if not (np.all(np.isfinite(self.alpha)) and np.all(np.isfinite(self.frozen_gap))):
            raise ValidationError("adversary state contains non-finite values")
        if self.ascent_lr < 0 or self.l2_decay < 0 or not self.alpha_cap > 0:
            raise ValidationError("need ascent_lr >= 0, l2_decay >= 0 and alpha_cap > 0")
        if self.base_map is None:
            self.base_map = self.map

    @classmethod
    def create(cls, fmap: RandomFeatureMap, ascent_lr: float = 0.001, l2_decay: float = 0.01,
               alpha_cap: float = 10.0, resample_features: bool = False) -> "AdversaryState":
        return cls(map=fmap, ascent_lr=ascent_lr, l2_decay=l2_decay,
                   alpha_cap=alpha_cap, resample_features=resample_features)

    @property
    def weights(self) -> np.ndarray:
        """alpha * frozen_gap, the effective linear weights on phi"""
        return self.alpha * self.frozen_gap

    def hyperparameters(self) -> dict:
        return {"ascent_lr": self.ascent_lr, "l2_decay": self.l2_decay,
                "alpha_cap": self.alpha_cap, "resample_features": self.resample_features}


def _batch(Y, name: str, fmap: RandomFeatureMap) -> np.ndarray:
    Y = as_matrix(Y, name)
    if Y.shape[0] == 0:
        raise ValidationError(f"{name} is empty")
    if Y.shape[1] != fmap.dim:
        raise ShapeError(f"{name} has {Y.shape[1]} columns, feature map expects {fmap.dim}")
    return Y


def embedding_gap(Y_prior, Y_gen, fmap: RandomFeatureMap) -> np.ndarray:
    """mean phi(Y_prior) - mean phi(Y_gen); its squared norm is the random-feature MMD²"""
    Y_prior = _batch(Y_prior, "Y_prior", fmap)
    Y_gen = _batch(Y_gen, "Y_gen", fmap)
    return feature_map(fmap, Y_prior).mean(axis=0) - feature_map(fmap, Y_gen).mean(axis=0)


def adversary_value(state: AdversaryState, Z) -> np.ndarray:
    Z = _batch(Z, "Z", state.map)
    return feature_map(state.map, Z) @ state.weights


def minimax_objective(state: AdversaryState, Y_prior, Y_gen) -> float:
    """D = mean f(Y_prior) - mean f(Y_gen)"""
    return float(adversary_value(state, Y_prior).mean() - adversary_value(state, Y_gen).mean())


def adversary_ascend(state: AdversaryState, Y_prior, Y_gen) -> AdversaryState:
    """
    Freeze the current gap, then alpha <- alpha + lr * (gap^2 - l2_decay * alpha), clipped

    Raises:
        ValidationError: the update would be non-finite (state left untouched)
    """
    gap = embedding_gap(Y_prior, Y_gen, state.map)
    alpha = state.alpha + state.ascent_lr * (gap * gap - state.l2_decay * state.alpha)
    if not (np.all(np.isfinite(alpha)) and np.all(np.isfinite(gap))):
        raise ValidationError("non-finite adversary update")
    state.frozen_gap = gap
    state.alpha = np.clip(alpha, -state.alpha_cap, state.alpha_cap)
    return state


def refresh_features(state: AdversaryState, step: int) -> AdversaryState:
    """Swap in freshly drawn frequencies when per-step resampling is enabled"""
    if state.resample_features:
        state.map = resample(state.base_map, step)
    return state


def generator_grad_wrt_Z(state: AdversaryState, Y_gen) -> np.ndarray:
    """
    Gradient of -mean f(Y_gen) with f frozen (alpha and frozen_gap fixed)

    f(z) = sum_m [c_m cos(w_m.z) + s_m sin(w_m.z)] / sqrt(M), so
    df/dz = sum_m [-c_m sin(w_m.z) + s_m cos(w_m.z)] w_m / sqrt(M).
    """
    fmap = state.map
    Y_gen = _batch(Y_gen, "Y_gen", fmap)
    M = fmap.n_features
    weights = state.weights
    c, s = weights[:M], weights[M:]
    proj = Y_gen @ fmap.W.T
    coef = (-c * np.sin(proj) + s * np.cos(proj)) / np.sqrt(M)
    return -(coef @ fmap.W) / Y_gen.shape[0]
