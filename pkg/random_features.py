"""Random Fourier features for the Gaussian RBF kernel"""
from dataclasses import dataclass, field

import numpy as np

from errors import ShapeError, ValidationError
from nn_core import as_matrix


@dataclass(frozen=True)
class RandomFeatureMap:
    """
    Frequencies W (M x d), rows ~ N(0, I_d) / sigma, regenerated from the seed

    Features come in cos/sin pairs scaled by 1/sqrt(M), so the feature
    dimension is 2M and every feature vector has unit norm.
    """

    n_features: int
    dim: int
    sigma: float
    seed: int
    W: np.ndarray = field(repr=False, compare=False, default=None)

    def __post_init__(self):
        if self.W is None:
            if self.n_features < 1 or self.dim < 1:
                raise ValidationError(f"need M >= 1 and d >= 1, got M={self.n_features}, d={self.dim}")
            if not self.sigma > 0:
                raise ValidationError(f"sigma must be positive, got {self.sigma}")
            rng = np.random.default_rng(self.seed)
            W = rng.standard_normal((self.n_features, self.dim)) / self.sigma
            object.__setattr__(self, "W", W)
        W = np.asarray(self.W, dtype=np.float64)
        if W.shape != (self.n_features, self.dim):
            raise ShapeError(f"frequency matrix {W.shape} != ({self.n_features}, {self.dim})")
        W.setflags(write=False)
        object.__setattr__(self, "W", W)

    @property
    def feature_dim(self) -> int:
        return 2 * self.n_features

    def descriptor(self) -> dict:
        """What checkpoints store; W itself is never serialized"""
        return {"n_features": self.n_features, "dim": self.dim,
                "sigma": self.sigma, "seed": self.seed}

    @classmethod
    def from_descriptor(cls, desc: dict) -> "RandomFeatureMap":
        return sample_directions(int(desc["n_features"]), int(desc["dim"]),
                                 float(desc["sigma"]), int(desc["seed"]))

    @classmethod
    def from_frequencies(cls, W, sigma: float = 1.0, seed: int = -1) -> "RandomFeatureMap":
        """Wrap an explicit frequency matrix (tests, ablations)"""
        W = np.array(W, dtype=np.float64, ndmin=2)
        return cls(n_features=W.shape[0], dim=W.shape[1], sigma=sigma, seed=seed, W=W)


def sample_directions(n_features: int, dim: int, sigma: float, seed: int) -> RandomFeatureMap:
    return RandomFeatureMap(n_features=n_features, dim=dim, sigma=float(sigma), seed=int(seed))


def resample(fmap: RandomFeatureMap, step: int) -> RandomFeatureMap:
    """Fresh frequencies with a seed derived from (seed, step)"""
    derived = np.random.SeedSequence([fmap.seed & 0xFFFFFFFF, step]).generate_state(1)[0]
    return sample_directions(fmap.n_features, fmap.dim, fmap.sigma, int(derived))


def _check_dim(fmap: RandomFeatureMap, X: np.ndarray) -> None:
    if X.shape[1] != fmap.dim:
        raise ShapeError(f"inputs have {X.shape[1]} columns, feature map expects {fmap.dim}")


def feature_map(fmap: RandomFeatureMap, X) -> np.ndarray:
    """[cos(W x), sin(W x)] / sqrt(M) for each row, shape (n, 2M)"""
    X = as_matrix(X, "X")
    _check_dim(fmap, X)
    proj = X @ fmap.W.T
    scale = 1.0 / np.sqrt(fmap.n_features)
    return np.hstack((np.cos(proj), np.sin(proj))) * scale


def approx_kernel(fmap: RandomFeatureMap, x, y) -> float:
    """phi(x) . phi(y) = mean_m cos(w_m . (x - y))"""
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != (fmap.dim,) or y.shape != (fmap.dim,):
        raise ShapeError(f"vectors must have length {fmap.dim}")
    return float(np.mean(np.cos(fmap.W @ (x - y))))


def approx_gram(fmap: RandomFeatureMap, X, Y) -> np.ndarray:
    return feature_map(fmap, X) @ feature_map(fmap, Y).T


def approx_mmd2(fmap: RandomFeatureMap, X, Y) -> float:
    """Biased MMD² under the random-feature kernel, from pairwise Gram means"""
    return float(approx_gram(fmap, X, X).mean()
                 + approx_gram(fmap, Y, Y).mean()
                 - 2.0 * approx_gram(fmap, X, Y).mean())
