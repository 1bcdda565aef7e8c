"""Training loops for the MMD autoencoder and the doubly stochastic adversarial autoencoder"""
import time
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

import numpy as np
from tqdm import tqdm

from config import RunConfig, SeedConfig, TrainConfig
from data_io import BatchIterator, Dataset
from ds_adversary import (AdversaryState, adversary_ascend, generator_grad_wrt_Z,
                          minimax_objective, refresh_features)
from errors import ShapeError, TrainingDivergedError, ValidationError
from kernel_mmd import KernelSpec, mmd2_biased, mmd2_biased_grad_wrt_Y
from nn_core import (AdamState, MlpParams, adam_step, bernoulli_cross_entropy, init_mlp,
                     mlp_backward, mlp_forward)
from random_features import sample_directions


@dataclass(frozen=True)
class PriorSpec:
    """Target distribution of the latent code (standard normal)"""

    dim: int
    kind: str = "standard_normal"

    def __post_init__(self):
        if self.dim < 1:
            raise ValidationError(f"prior dimension must be >= 1, got {self.dim}")
        if self.kind != "standard_normal":
            raise ValidationError(f"unsupported prior {self.kind!r}")


def sample_prior(spec: PriorSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    if n < 1:
        raise ValidationError(f"need n >= 1 prior samples, got {n}")
    return rng.standard_normal((n, spec.dim))


@dataclass
class MetricsRow:
    epoch: int
    recon_loss: float
    discrepancy: float
    wall_time: float


@dataclass
class Autoencoder:
    """
    Encoder (ReLU hidden layers, linear code layer) and decoder (ReLU hidden
    layers, sigmoid output); dropout applies to the encoder input only.
    """

    encoder: MlpParams
    decoder: MlpParams
    dropout_rate: float = 0.0

    def __post_init__(self):
        if self.encoder.dims[-1] != self.decoder.dims[0]:
            raise ShapeError(f"encoder emits {self.encoder.dims[-1]} dims, decoder expects {self.decoder.dims[0]}")
        if self.encoder.dims[0] != self.decoder.dims[-1]:
            raise ShapeError("decoder output must match encoder input")

    @classmethod
    def build(cls, input_dim: int, config: TrainConfig, rng: np.random.Generator) -> "Autoencoder":
        config = config.resolved()
        hidden = list(config.hidden_dims)
        enc_dims = [input_dim] + hidden + [config.latent_dim]
        dec_dims = [config.latent_dim] + hidden[::-1] + [input_dim]
        encoder = init_mlp(enc_dims, ["relu"] * len(hidden) + ["identity"], rng)
        decoder = init_mlp(dec_dims, ["relu"] * len(hidden) + ["sigmoid"], rng)
        return cls(encoder, decoder, config.dropout_input)

    @property
    def input_dim(self) -> int:
        return self.encoder.dims[0]

    @property
    def latent_dim(self) -> int:
        return self.encoder.dims[-1]

    def encode(self, x) -> np.ndarray:
        return mlp_forward(self.encoder, x)[0]

    def decode(self, z) -> np.ndarray:
        return mlp_forward(self.decoder, z)[0]


@dataclass
class TrainingRngs:
    """Independent random streams so variants consume randomness identically"""

    init: np.random.Generator
    dropout: np.random.Generator
    adv_dropout: np.random.Generator
    prior: np.random.Generator

    @classmethod
    def from_seeds(cls, seeds: SeedConfig) -> "TrainingRngs":
        init, dropout, adv_dropout = (np.random.default_rng(s)
                                      for s in np.random.SeedSequence(seeds.weights).spawn(3))
        return cls(init=init, dropout=dropout, adv_dropout=adv_dropout,
                   prior=np.random.default_rng(seeds.prior))


@dataclass
class Optimizers:
    recon: AdamState
    generator: Optional[AdamState] = None

    @classmethod
    def for_config(cls, config: TrainConfig) -> "Optimizers":
        generator = AdamState(lr=config.adv_lr) if config.variant == "ds_aae" else None
        return cls(recon=AdamState(lr=config.recon_lr), generator=generator)


@dataclass
class Gradients:
    """Loss parts and parameter gradients for one batch"""

    recon_loss: float
    discrepancy: float
    encoder: MlpParams
    decoder: Optional[MlpParams] = None
    latent: Optional[np.ndarray] = None


def _check_finite(epoch: int, step: int, **components) -> None:
    if not all(np.isfinite(v) for v in components.values()):
        raise TrainingDivergedError("non-finite loss", epoch=epoch, step=step, components=components)


def _encode_train(model: Autoencoder, batch: np.ndarray, rng: np.random.Generator):
    return mlp_forward(model.encoder, batch, model.dropout_rate, rng, train_mode=True)


def mmd_ae_gradients(model: Autoencoder, batch: np.ndarray, prior_batch: Optional[np.ndarray],
                     weight: float, rng: np.random.Generator,
                     spec: Optional[KernelSpec] = None) -> Gradients:
    """
    Gradients of cross_entropy(decode(encode(x)), x) + weight * MMD²(prior, encode(x))

    With prior_batch None (or weight 0 and no prior) this is the plain
    autoencoder gradient.
    """
    Z, enc_cache = _encode_train(model, batch, rng)
    recon, dec_cache = mlp_forward(model.decoder, Z)
    recon_loss, recon_grad = bernoulli_cross_entropy(recon, batch)
    dec_grads, dZ = mlp_backward(model.decoder, dec_cache, recon_grad)
    discrepancy = 0.0
    if prior_batch is not None:
        discrepancy = mmd2_biased(prior_batch, Z, spec)
        dZ = dZ + weight * mmd2_biased_grad_wrt_Y(prior_batch, Z, spec)
    enc_grads, _ = mlp_backward(model.encoder, enc_cache, dZ)
    return Gradients(recon_loss, discrepancy, enc_grads, dec_grads, Z)


def reconstruction_gradients(model: Autoencoder, batch: np.ndarray, rng: np.random.Generator) -> Gradients:
    return mmd_ae_gradients(model, batch, None, 0.0, rng)


def train_step_mmd_ae(model: Autoencoder, batch: np.ndarray, config: TrainConfig,
                      optimizers: Optimizers, rngs: TrainingRngs, prior: PriorSpec,
                      epoch: int = 0, step: int = 0) -> MetricsRow:
    """One Adam update of encoder + decoder on reconstruction + lambda * MMD²"""
    start = time.perf_counter()
    config = config.resolved()
    prior_batch = sample_prior(prior, batch.shape[0], rngs.prior)
    grads = mmd_ae_gradients(model, batch, prior_batch, config.regularizer_weight,
                             rngs.dropout, KernelSpec(config.bandwidths))
    _check_finite(epoch, step, recon_loss=grads.recon_loss, mmd2=grads.discrepancy)
    adam_step(optimizers.recon, [model.encoder, model.decoder], [grads.encoder, grads.decoder])
    return MetricsRow(epoch, grads.recon_loss, grads.discrepancy, time.perf_counter() - start)


# ── DS-AAE phases ────────────────────────────────────────────────

def reconstruction_phase(model: Autoencoder, batch: np.ndarray, optimizer: AdamState,
                         rng: np.random.Generator) -> float:
    grads = reconstruction_gradients(model, batch, rng)
    if not np.isfinite(grads.recon_loss):
        return grads.recon_loss
    adam_step(optimizer, [model.encoder, model.decoder], [grads.encoder, grads.decoder])
    return grads.recon_loss


def adversary_phase(model: Autoencoder, adversary: AdversaryState, batch: np.ndarray,
                    prior: PriorSpec, steps: int, rngs: TrainingRngs) -> float:
    """Ascend alpha on fresh (prior, latent) pairs; returns D on the last pair"""
    for _ in range(steps):
        prior_batch = sample_prior(prior, batch.shape[0], rngs.prior)
        latent, _ = _encode_train(model, batch, rngs.adv_dropout)
        adversary_ascend(adversary, prior_batch, latent)
    return minimax_objective(adversary, prior_batch, latent)


def generator_gradients(model: Autoencoder, adversary: AdversaryState, batch: np.ndarray,
                        weight: float, rng: np.random.Generator) -> Gradients:
    """Encoder gradient of weight * (-mean f(encode(x))) with the adversary frozen"""
    Z, enc_cache = _encode_train(model, batch, rng)
    dZ = weight * generator_grad_wrt_Z(adversary, Z)
    enc_grads, _ = mlp_backward(model.encoder, enc_cache, dZ)
    return Gradients(0.0, 0.0, enc_grads, latent=Z)


def generator_phase(model: Autoencoder, adversary: AdversaryState, batch: np.ndarray,
                    weight: float, optimizer: AdamState, rng: np.random.Generator) -> None:
    grads = generator_gradients(model, adversary, batch, weight, rng)
    adam_step(optimizer, model.encoder, grads.encoder)


def train_step_ds_aae(model: Autoencoder, adversary: AdversaryState, batch: np.ndarray,
                      config: TrainConfig, optimizers: Optimizers, rngs: TrainingRngs,
                      prior: PriorSpec, epoch: int = 0, step: int = 0) -> MetricsRow:
    """
    Reconstruction update, then adversary ascent, then the generator update

    The generator step treats f as fixed: gradients do not flow through the
    frozen gap's dependence on the latent codes.
    """
    start = time.perf_counter()
    recon_loss = reconstruction_phase(model, batch, optimizers.recon, rngs.dropout)
    _check_finite(epoch, step, recon_loss=recon_loss)
    refresh_features(adversary, step)
    discrepancy = adversary_phase(model, adversary, batch, prior, config.adversary_steps, rngs)
    _check_finite(epoch, step, recon_loss=recon_loss, minimax=discrepancy)
    generator_phase(model, adversary, batch, config.regularizer_weight, optimizers.generator,
                    rngs.adv_dropout)
    return MetricsRow(epoch, recon_loss, discrepancy, time.perf_counter() - start)


# ── sampling and meters ──────────────────────────────────────────

def generate_samples(decoder: MlpParams, prior: PriorSpec, n: int, seed: int) -> np.ndarray:
    """decode(z) for z ~ prior, eval mode; rows lie in (0, 1)"""
    if decoder.dims[0] != prior.dim:
        raise ShapeError(f"prior has {prior.dim} dims, decoder expects {decoder.dims[0]}")
    z = sample_prior(prior, n, np.random.default_rng(seed))
    return mlp_forward(decoder, z)[0]


def latent_mmd(model: Autoencoder, data: np.ndarray, n: int = 500, sigma: float = 1.0,
               seed: int = 0) -> float:
    """MMD² between encoded data rows and prior draws, used as an external meter"""
    rng = np.random.default_rng(seed)
    idx = rng.choice(data.shape[0], size=min(n, data.shape[0]), replace=False)
    latent = model.encode(data[idx])
    prior_batch = sample_prior(PriorSpec(model.latent_dim), latent.shape[0], rng)
    return mmd2_biased(latent, prior_batch, KernelSpec((sigma,)))


# ── orchestration ────────────────────────────────────────────────

EpochCallback = Callable[[MetricsRow, "Trainer"], None]


class Trainer:
    """
    Owns the model, optimizers, adversary and random streams of one run

    A run is a pure function of the config seeds: two trainers built from
    the same config emit identical metrics.
    """

    def __init__(self, config: RunConfig, input_dim: int, verbose: bool = False):
        self.run_config = config.resolved()
        self.config = self.run_config.train
        self.verbose = verbose
        self.rngs = TrainingRngs.from_seeds(self.run_config.seed)
        self.prior = PriorSpec(self.config.latent_dim)
        self.model = Autoencoder.build(input_dim, self.config, self.rngs.init)
        self.optimizers = Optimizers.for_config(self.config)
        self.adversary: Optional[AdversaryState] = None
        if self.config.variant == "ds_aae":
            fmap = sample_directions(self.config.feature_count, self.config.latent_dim,
                                     self.config.bandwidths[0], self.run_config.seed.features)
            self.adversary = AdversaryState.create(fmap, ascent_lr=self.config.adv_lr,
                                                   l2_decay=self.config.l2_decay,
                                                   alpha_cap=self.config.alpha_cap,
                                                   resample_features=self.config.resample_features)
        self.step_count = 0
        self.epoch = 0

    def step(self, batch: np.ndarray) -> MetricsRow:
        if self.config.variant == "mmd_ae":
            row = train_step_mmd_ae(self.model, batch, self.config, self.optimizers, self.rngs,
                                    self.prior, epoch=self.epoch, step=self.step_count)
        else:
            row = train_step_ds_aae(self.model, self.adversary, batch, self.config, self.optimizers,
                                    self.rngs, self.prior, epoch=self.epoch, step=self.step_count)
        self.step_count += 1
        return row

    def _budget_left(self) -> bool:
        return self.config.max_steps is None or self.step_count < self.config.max_steps

    def fit(self, dataset: Dataset, callbacks: Sequence[EpochCallback] = ()) -> List[MetricsRow]:
        """Run all epochs (or until max_steps); one averaged MetricsRow per epoch"""
        iterator = BatchIterator(dataset, self.config.batch_size, seed=self.run_config.seed.data)
        rows: List[MetricsRow] = []
        if self.verbose:
            print(f"🧠 {self.config.variant}: encoder {self.model.encoder.dims}, "
                  f"decoder {self.model.decoder.dims}, {iterator.batches_per_epoch} batches/epoch")
        progress = tqdm(range(1, self.config.epochs + 1), desc=self.config.variant,
                        disable=not self.verbose)
        for epoch in progress:
            if not self._budget_left():
                break
            self.epoch = epoch
            start = time.perf_counter()
            step_rows = []
            for batch in iterator:
                if not self._budget_left():
                    break
                step_rows.append(self.step(batch))
            if not step_rows:
                break
            row = MetricsRow(epoch=epoch,
                             recon_loss=float(np.mean([r.recon_loss for r in step_rows])),
                             discrepancy=float(np.mean([r.discrepancy for r in step_rows])),
                             wall_time=time.perf_counter() - start)
            rows.append(row)
            progress.set_postfix(recon=f"{row.recon_loss:.4f}", disc=f"{row.discrepancy:.4g}")
            for callback in callbacks:
                callback(row, self)
        if self.verbose:
            print(f"✅ training finished after {self.step_count} steps")
        return rows
