"""Dense MLP substrate: forward/backward with analytic gradients, losses, dropout, Adam"""
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from errors import ContractError, ShapeError, ValidationError

ACTIVATIONS = ("relu", "sigmoid", "identity")
CLAMP_EPS = 1e-7


def as_matrix(value, name: str = "matrix") -> np.ndarray:
    """Coerce to a finite 2-D float64 array or raise"""
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite values")
    return arr


@dataclass
class Layer:
    """One affine map followed by an activation; weight is (out x in)"""

    weight: np.ndarray
    bias: np.ndarray
    activation: str = "relu"

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]


@dataclass
class MlpParams:
    """Ordered layers; `version` increments on every optimizer update"""

    layers: List[Layer]
    version: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not self.layers:
            raise ValidationError("an MLP needs at least one layer")
        for i, layer in enumerate(self.layers):
            if layer.activation not in ACTIVATIONS:
                raise ValidationError(f"layer {i}: unknown activation {layer.activation!r}")
            if layer.weight.ndim != 2 or layer.bias.shape != (layer.out_dim,):
                raise ShapeError(f"layer {i}: weight {layer.weight.shape} / bias {layer.bias.shape} disagree")
            if i and self.layers[i - 1].out_dim != layer.in_dim:
                raise ShapeError(f"layer {i}: input dim {layer.in_dim} != previous output "
                                 f"{self.layers[i - 1].out_dim}")
            if not (np.all(np.isfinite(layer.weight)) and np.all(np.isfinite(layer.bias))):
                raise ValidationError(f"layer {i}: non-finite parameters")

    @property
    def dims(self) -> List[int]:
        return [self.layers[0].in_dim] + [layer.out_dim for layer in self.layers]

    @property
    def activations(self) -> List[str]:
        return [layer.activation for layer in self.layers]

    def arrays(self) -> List[np.ndarray]:
        """Flat parameter list [W0, b0, W1, b1, ...] (live references)"""
        out = []
        for layer in self.layers:
            out.extend((layer.weight, layer.bias))
        return out

    def zeros_like(self) -> "MlpParams":
        return MlpParams([Layer(np.zeros_like(l.weight), np.zeros_like(l.bias), l.activation)
                          for l in self.layers])

    def copy(self) -> "MlpParams":
        return MlpParams([Layer(l.weight.copy(), l.bias.copy(), l.activation)
                          for l in self.layers], version=self.version)


def init_mlp(dims: Sequence[int], activations: Sequence[str],
             rng: np.random.Generator) -> MlpParams:
    """
    Glorot-uniform weights, zero biases

    Args:
        dims: layer widths including input, e.g. [784, 1024, 512, 216, 6]
        activations: one tag per layer (len(dims) - 1)
        rng: seeded generator
    """
    if len(activations) != len(dims) - 1:
        raise ValidationError(f"{len(dims) - 1} layers need as many activations, got {len(activations)}")
    layers = []
    for fan_in, fan_out, act in zip(dims[:-1], dims[1:], activations):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weight = rng.uniform(-limit, limit, size=(fan_out, fan_in))
        layers.append(Layer(weight, np.zeros(fan_out), act))
    return MlpParams(layers)


def _activate(pre: np.ndarray, activation: str) -> np.ndarray:
    if activation == "relu":
        return np.maximum(pre, 0.0)
    if activation == "sigmoid":
        # split form keeps exp() from overflowing on large |pre|
        out = np.empty_like(pre)
        pos = pre >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-pre[pos]))
        ez = np.exp(pre[~pos])
        out[~pos] = ez / (1.0 + ez)
        return out
    return pre


def _activation_grad(pre: np.ndarray, act: np.ndarray, activation: str) -> np.ndarray:
    if activation == "relu":
        return (pre > 0).astype(np.float64)
    if activation == "sigmoid":
        return act * (1.0 - act)
    return np.ones_like(pre)


@dataclass
class ForwardCache:
    """Intermediate values between a forward pass and its backward"""

    params_id: int
    params_version: int
    mask: Optional[np.ndarray]
    pre_activations: List[np.ndarray] = field(default_factory=list)
    activations: List[np.ndarray] = field(default_factory=list)  # activations[0] is the (dropped) input
    consumed: bool = False

    @property
    def output(self) -> np.ndarray:
        return self.activations[-1]


def dropout_mask(shape: Tuple[int, ...], rate: float, rng: np.random.Generator) -> np.ndarray:
    """Inverted-dropout mask: survivors scaled by 1/(1-rate)"""
    keep = rng.random(shape) >= rate
    return keep / (1.0 - rate)


def mlp_forward(params: MlpParams, inputs, dropout_rate: float = 0.0,
                rng: Optional[np.random.Generator] = None,
                train_mode: bool = False) -> Tuple[np.ndarray, ForwardCache]:
    """
    Run the network; dropout touches only the input layer and only in train mode

    Returns:
        (output, cache) where cache feeds the matching mlp_backward
    """
    x = as_matrix(inputs, "input")
    if x.shape[1] != params.layers[0].in_dim:
        raise ShapeError(f"input has {x.shape[1]} columns, network expects {params.layers[0].in_dim}")
    if not 0.0 <= dropout_rate < 1.0:
        raise ValidationError(f"dropout rate must be in [0, 1), got {dropout_rate}")

    mask = None
    if train_mode and dropout_rate > 0.0:
        if rng is None:
            raise ValidationError("train-mode dropout needs a seeded generator")
        mask = dropout_mask(x.shape, dropout_rate, rng)
        x = x * mask

    cache = ForwardCache(params_id=id(params), params_version=params.version, mask=mask)
    cache.activations.append(x)
    a = x
    for layer in params.layers:
        pre = a @ layer.weight.T + layer.bias
        a = _activate(pre, layer.activation)
        cache.pre_activations.append(pre)
        cache.activations.append(a)
    return a, cache


def mlp_backward(params: MlpParams, cache: ForwardCache,
                 output_grad) -> Tuple[MlpParams, np.ndarray]:
    """
    Backpropagate `output_grad` (dLoss/dOutput) through the cached pass

    Returns:
        (param_grads shaped like params, gradient w.r.t. the raw input)
    """
    if cache.consumed:
        raise ContractError("forward cache already consumed by a backward pass")
    if cache.params_id != id(params) or cache.params_version != params.version:
        raise ContractError("forward cache does not belong to these parameters (stale or foreign)")
    if len(cache.pre_activations) != len(params.layers):
        raise ContractError("forward cache depth does not match the network")
    grad = np.asarray(output_grad, dtype=np.float64)
    if grad.shape != cache.output.shape:
        raise ShapeError(f"output_grad shape {grad.shape} != forward output shape {cache.output.shape}")

    grads = []
    for i in range(len(params.layers) - 1, -1, -1):
        layer = params.layers[i]
        pre, act, prev = cache.pre_activations[i], cache.activations[i + 1], cache.activations[i]
        delta = grad * _activation_grad(pre, act, layer.activation)
        grads.append(Layer(delta.T @ prev, delta.sum(axis=0), layer.activation))
        grad = delta @ layer.weight
    if cache.mask is not None:
        grad = grad * cache.mask
    cache.consumed = True
    grads.reverse()
    return MlpParams(grads), grad


def bernoulli_cross_entropy(pred, target) -> Tuple[float, np.ndarray]:
    """
    Batch-mean Bernoulli cross-entropy summed over pixels

    Predictions are clamped to [1e-7, 1 - 1e-7]; the gradient is taken at the
    clamped point.
    """
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if p.shape != t.shape:
        raise ShapeError(f"prediction {p.shape} and target {t.shape} differ")
    if p.ndim != 2 or p.shape[0] == 0:
        raise ShapeError(f"expected a nonempty 2-D batch, got {p.shape}")
    n = p.shape[0]
    p = np.clip(p, CLAMP_EPS, 1.0 - CLAMP_EPS)
    loss = -np.sum(t * np.log(p) + (1.0 - t) * np.log1p(-p)) / n
    grad = (-(t / p) + (1.0 - t) / (1.0 - p)) / n
    return float(loss), grad


# ── Adam ─────────────────────────────────────────────────────────

ParamGroup = Union[MlpParams, Sequence[MlpParams]]


@dataclass
class AdamState:
    """Moments for a fixed list of parameter arrays"""

    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: List[np.ndarray] = field(default_factory=list)
    v: List[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if not self.lr > 0:
            raise ValidationError(f"Adam lr must be > 0, got {self.lr}")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValidationError(f"Adam betas must be in [0, 1), got {self.beta1}, {self.beta2}")
        if not self.eps >= 0:
            raise ValidationError(f"Adam eps must be >= 0, got {self.eps}")


def _groups(params: ParamGroup) -> List[MlpParams]:
    return [params] if isinstance(params, MlpParams) else list(params)


def adam_step(state: AdamState, params: ParamGroup, grads: ParamGroup) -> ParamGroup:
    """
    One bias-corrected Adam update, applied in place

    Args:
        state: optimizer state (moments allocated on first use)
        params: an MlpParams or a list of them, updated in place
        grads: same structure as params

    Raises:
        ValidationError: non-finite gradients (nothing is modified)
    """
    groups, grad_groups = _groups(params), _groups(grads)
    if len(groups) != len(grad_groups):
        raise ShapeError("params and grads have different group counts")
    arrays = [a for g in groups for a in g.arrays()]
    grad_arrays = [a for g in grad_groups for a in g.arrays()]
    if len(arrays) != len(grad_arrays) or any(a.shape != g.shape for a, g in zip(arrays, grad_arrays)):
        raise ShapeError("gradient shapes do not match parameter shapes")
    if not all(np.all(np.isfinite(g)) for g in grad_arrays):
        raise ValidationError("non-finite gradient, Adam step aborted")
    if not state.m:
        state.m = [np.zeros_like(a) for a in arrays]
        state.v = [np.zeros_like(a) for a in arrays]
    elif len(state.m) != len(arrays) or any(m.shape != a.shape for m, a in zip(state.m, arrays)):
        raise ShapeError("optimizer state was built for different parameters")

    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    for param, g, m, v in zip(arrays, grad_arrays, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        m_hat = m / bc1
        denom = np.sqrt(v / bc2) + state.eps
        # zero where the denominator vanishes (eps=0, no gradient yet)
        param -= state.lr * np.divide(m_hat, denom, out=np.zeros_like(m_hat), where=denom > 0)
    for group in groups:
        group.version += 1
    return params


# ── gradient checking ────────────────────────────────────────────

def numerical_gradient(fn: Callable[[], float], array: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central differences of fn() w.r.t. every entry of `array` (perturbed in place)"""
    grad = np.zeros_like(array)
    it = np.nditer(array, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = array[idx]
        array[idx] = orig + step
        plus = fn()
        array[idx] = orig - step
        minus = fn()
        array[idx] = orig
        grad[idx] = (plus - minus) / (2.0 * step)
    return grad


def relative_error(analytic, numeric) -> float:
    a = np.asarray(analytic, dtype=np.float64)
    b = np.asarray(numeric, dtype=np.float64)
    denom = max(np.linalg.norm(a) + np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)
