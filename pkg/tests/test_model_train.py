from pathlib import Path

import numpy as np
import pytest

from config import RunConfig, TrainConfig
from conftest import flat_arrays
from data_io import make_toy_2d
from ds_adversary import AdversaryState, adversary_ascend, adversary_value, minimax_objective
from errors import ShapeError, TrainingDivergedError, ValidationError
from kernel_mmd import KernelSpec, mmd2_biased
from model_train import (Autoencoder, Optimizers, PriorSpec, Trainer, TrainingRngs,
                         _check_finite, generate_samples, generator_gradients, generator_phase,
                         latent_mmd, mmd_ae_gradients, reconstruction_gradients, sample_prior)
from nn_core import (AdamState, bernoulli_cross_entropy, mlp_forward, numerical_gradient,
                     relative_error)
from random_features import resample, sample_directions

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def _toy_config(variant, **train):
    config = RunConfig().apply_overrides([
        ("train.variant", variant), ("train.latent_dim", "2"), ("train.hidden_dims", "16,16"),
        ("train.batch_size", "100"), ("train.epochs", "3"), ("train.dropout_input", "0.2"),
        ("train.feature_count", "20"), ("data.n_samples", "500"),
    ])
    return config.apply_overrides((f"train.{k}", str(v)) for k, v in train.items())


def _toy_data(n=500, seed=0):
    return make_toy_2d("gaussian_mixture_8", n, seed)


class TestPrior:
    def test_moments(self):
        Z = sample_prior(PriorSpec(2), 100_000, np.random.default_rng(0))
        assert np.all(np.abs(Z.mean(axis=0)) < 0.02)
        np.testing.assert_allclose(Z.var(axis=0), 1.0, rtol=0.02)

    def test_seeded(self):
        a = sample_prior(PriorSpec(3), 10, np.random.default_rng(5))
        b = sample_prior(PriorSpec(3), 10, np.random.default_rng(5))
        assert np.array_equal(a, b)

    def test_invalid(self):
        with pytest.raises(ValidationError):
            sample_prior(PriorSpec(2), 0, np.random.default_rng(0))
        with pytest.raises(ValidationError):
            PriorSpec(0)

    def test_dimension_mismatch_refused(self, tiny_model):
        with pytest.raises(ShapeError):
            generate_samples(tiny_model.decoder, PriorSpec(3), 5, seed=0)


class TestAutoencoder:
    def test_default_architecture(self):
        model = Autoencoder.build(784, TrainConfig(), np.random.default_rng(0))
        assert model.encoder.dims == [784, 1024, 512, 216, 6]
        assert model.decoder.dims == [6, 216, 512, 1024, 784]
        assert model.encoder.activations[-1] == "identity"
        assert model.decoder.activations == ["relu", "relu", "relu", "sigmoid"]
        assert model.dropout_rate == 0.2

    def test_mmd_ae_latent_default(self):
        model = Autoencoder.build(10, TrainConfig(variant="mmd_ae", hidden_dims=(4,)),
                                  np.random.default_rng(0))
        assert model.latent_dim == 4

    def test_mismatched_halves(self, tiny_model):
        with pytest.raises(ShapeError):
            Autoencoder(tiny_model.encoder, tiny_model.encoder)


class TestMmdAeGradients:
    def test_zero_weight_is_plain_autoencoder(self):
        model = Autoencoder.build(4, TrainConfig(variant="mmd_ae", latent_dim=2, hidden_dims=(5,)),
                                  np.random.default_rng(1))
        batch = np.random.default_rng(2).uniform(size=(6, 4))
        prior = sample_prior(PriorSpec(2), 6, np.random.default_rng(3))
        spec = KernelSpec((1.0,))
        regularized = mmd_ae_gradients(model, batch, prior, 0.0, np.random.default_rng(4), spec)
        plain = reconstruction_gradients(model, batch, np.random.default_rng(4))
        for a, b in zip(regularized.encoder.arrays() + regularized.decoder.arrays(),
                        plain.encoder.arrays() + plain.decoder.arrays()):
            np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)
        assert regularized.discrepancy > 0.0

    @pytest.mark.parametrize("seed", range(20))
    def test_combined_loss_matches_finite_differences(self, seed):
        rng = np.random.default_rng(300 + seed)
        config = TrainConfig(variant="mmd_ae", latent_dim=2, hidden_dims=(5,), dropout_input=0.0)
        model = Autoencoder.build(4, config, rng)
        batch = rng.uniform(size=(3, 4))
        prior = rng.standard_normal((3, 2))
        spec, weight = KernelSpec((1.0, 2.0)), 1.5

        def loss():
            Z = mlp_forward(model.encoder, batch)[0]
            recon = mlp_forward(model.decoder, Z)[0]
            return bernoulli_cross_entropy(recon, batch)[0] + weight * mmd2_biased(prior, Z, spec)

        grads = mmd_ae_gradients(model, batch, prior, weight, rng, spec)
        analytic = np.concatenate([flat_arrays(grads.encoder), flat_arrays(grads.decoder)])
        numeric = np.concatenate([numerical_gradient(loss, a).ravel()
                                  for a in model.encoder.arrays() + model.decoder.arrays()])
        assert relative_error(analytic, numeric) < 1e-5


class TestDsAaePhases:
    def _adversary(self, model, batch, seed):
        rng = np.random.default_rng(seed)
        state = AdversaryState.create(sample_directions(15, model.latent_dim, 1.0, seed=seed),
                                      ascent_lr=1.0, l2_decay=0.0)
        adversary_ascend(state, rng.standard_normal((batch.shape[0], model.latent_dim)),
                         model.encode(batch))
        return state

    @pytest.mark.parametrize("seed", range(20))
    def test_generator_gradient_matches_finite_differences(self, seed):
        rng = np.random.default_rng(400 + seed)
        config = TrainConfig(variant="ds_aae", latent_dim=2, hidden_dims=(5,), dropout_input=0.0)
        model = Autoencoder.build(4, config, rng)
        batch = rng.uniform(size=(3, 4))
        adversary = self._adversary(model, batch, seed)
        weight = 0.7

        def loss():
            return weight * -float(adversary_value(adversary, mlp_forward(model.encoder, batch)[0]).mean())

        grads = generator_gradients(model, adversary, batch, weight, rng)
        numeric = np.concatenate([numerical_gradient(loss, a).ravel() for a in model.encoder.arrays()])
        assert relative_error(flat_arrays(grads.encoder), numeric) < 1e-5

    def test_zero_alpha_generator_phase_is_noop(self, tiny_model):
        batch = np.random.default_rng(0).uniform(size=(4, 4))
        adversary = AdversaryState.create(sample_directions(10, 2, 1.0, seed=0))
        before = flat_arrays(tiny_model.encoder).copy()
        generator_phase(tiny_model, adversary, batch, 1.0, AdamState(), np.random.default_rng(0))
        assert np.array_equal(flat_arrays(tiny_model.encoder), before)

    def test_generator_phases_never_increase_objective(self, tiny_model):
        rng = np.random.default_rng(9)
        batch = rng.uniform(size=(8, 4))
        adversary = self._adversary(tiny_model, batch, 9)
        prior = rng.standard_normal((8, 2))
        optimizer = AdamState(lr=1e-3)
        previous = minimax_objective(adversary, prior, tiny_model.encode(batch))
        for _ in range(5):
            generator_phase(tiny_model, adversary, batch, 1.0, optimizer, rng)
            current = minimax_objective(adversary, prior, tiny_model.encode(batch))
            assert current <= previous + 1e-9
            previous = current


class TestTrainer:
    def test_runs_are_reproducible(self):
        data = _toy_data()
        for variant in ("mmd_ae", "ds_aae"):
            rows = [Trainer(_toy_config(variant), input_dim=2).fit(data) for _ in range(2)]
            assert [(r.epoch, r.recon_loss, r.discrepancy) for r in rows[0]] == \
                   [(r.epoch, r.recon_loss, r.discrepancy) for r in rows[1]]

    def test_zero_weight_variants_agree(self):
        data = _toy_data()
        mmd = Trainer(_toy_config("mmd_ae", regularizer_weight=0.0), input_dim=2)
        ds = Trainer(_toy_config("ds_aae", regularizer_weight=0.0), input_dim=2)
        mmd.fit(data)
        ds.fit(data)
        for a, b in zip(mmd.model.encoder.arrays() + mmd.model.decoder.arrays(),
                        ds.model.encoder.arrays() + ds.model.decoder.arrays()):
            assert np.array_equal(a, b)

    def test_one_row_per_epoch(self):
        rows = Trainer(_toy_config("ds_aae"), input_dim=2).fit(_toy_data())
        assert [r.epoch for r in rows] == [1, 2, 3]
        assert all(np.isfinite([r.recon_loss, r.discrepancy, r.wall_time]).all() for r in rows)

    def test_max_steps_budget(self):
        trainer = Trainer(_toy_config("mmd_ae", max_steps=7), input_dim=2)
        rows = trainer.fit(_toy_data())
        assert trainer.step_count == 7
        assert len(rows) == 2

    def test_callbacks_receive_rows(self):
        seen = []
        Trainer(_toy_config("mmd_ae"), input_dim=2).fit(_toy_data(),
                                                         callbacks=[lambda row, t: seen.append(row.epoch)])
        assert seen == [1, 2, 3]

    def test_mmd_ae_loss_decreases(self):
        config = _toy_config("mmd_ae", epochs=10, dropout_input=0.0, bandwidths="1.0")
        data = _toy_data(n=2000)
        for seed in range(3):
            rows = Trainer(config.apply_overrides([("seed.weights", str(seed))]), input_dim=2).fit(data)
            first, last = rows[0], rows[-1]
            assert last.recon_loss + last.discrepancy < first.recon_loss + first.discrepancy

    def test_feature_resampling_draws_new_map_each_step(self):
        trainer = Trainer(_toy_config("ds_aae", resample_features="true"), input_dim=2)
        base = trainer.adversary.base_map
        images = _toy_data().images
        maps = []
        for i in range(3):
            trainer.step(images[i * 100:(i + 1) * 100])
            maps.append(trainer.adversary.map)
        assert trainer.adversary.base_map is base
        assert len({m.seed for m in maps}) == 3
        assert not np.array_equal(maps[0].W, base.W)
        assert not np.array_equal(maps[0].W, maps[1].W)
        for step, fmap in enumerate(maps):
            assert np.array_equal(fmap.W, resample(base, step).W)

    def test_feature_resampling_is_reproducible(self):
        config = _toy_config("ds_aae", resample_features="true")
        trainers = [Trainer(config, input_dim=2) for _ in range(2)]
        rows = [t.fit(_toy_data()) for t in trainers]
        assert [(r.recon_loss, r.discrepancy) for r in rows[0]] == \
               [(r.recon_loss, r.discrepancy) for r in rows[1]]
        a, b = trainers[0].adversary, trainers[1].adversary
        assert a.map.seed == b.map.seed and a.map.seed != a.base_map.seed
        assert np.array_equal(a.alpha, b.alpha)

    def test_fixed_features_keep_base_map(self):
        trainer = Trainer(_toy_config("ds_aae"), input_dim=2)
        trainer.fit(_toy_data())
        assert trainer.adversary.map is trainer.adversary.base_map

    def test_generator_adam_only_for_ds_aae(self):
        assert Optimizers.for_config(TrainConfig(variant="mmd_ae")).generator is None
        assert Optimizers.for_config(TrainConfig(variant="ds_aae")).generator.lr == 0.001


def test_streams_are_independent():
    seeds = RunConfig().seed
    a, b = TrainingRngs.from_seeds(seeds), TrainingRngs.from_seeds(seeds)
    a.adv_dropout.random(100)
    assert np.array_equal(a.dropout.random(5), b.dropout.random(5))


def test_divergence_reports_components():
    with pytest.raises(TrainingDivergedError) as info:
        _check_finite(3, 12, recon_loss=0.5, mmd2=float("nan"))
    assert info.value.epoch == 3 and info.value.step == 12
    assert "mmd2=nan" in str(info.value)


class TestGenerateSamples:
    def test_bounded_and_seeded(self, tiny_model):
        a = generate_samples(tiny_model.decoder, PriorSpec(2), 50, seed=1)
        b = generate_samples(tiny_model.decoder, PriorSpec(2), 50, seed=1)
        assert a.shape == (50, 4)
        assert np.all((a > 0.0) & (a < 1.0))
        assert np.array_equal(a, b)

    def test_zero_decoder_gives_half(self, tiny_model):
        for layer in tiny_model.decoder.layers:
            layer.weight[:] = 0.0
            layer.bias[:] = 0.0
        samples = generate_samples(tiny_model.decoder, PriorSpec(2), 10, seed=0)
        np.testing.assert_array_equal(samples, 0.5)


def test_latent_mmd_is_nonnegative(tiny_model):
    data = np.random.default_rng(0).uniform(size=(40, 4))
    assert latent_mmd(tiny_model, data, n=30) >= 0.0


@pytest.mark.slow
@pytest.mark.parametrize("variant", ["mmd_ae", "ds_aae"])
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_desk_scale_prior_matching(variant, seed):
    config = RunConfig.from_file(CONFIGS / "toy_2d.conf").apply_overrides([
        ("train.variant", variant), ("train.bandwidths", "1.0"), ("train.max_steps", "5000"),
        ("train.epochs", "400"), ("seed.weights", str(seed)), ("output.verbose", "false"),
    ]).validate()
    data = make_toy_2d("gaussian_mixture_8", 8000, seed)
    trainer = Trainer(config, input_dim=2)
    initial = latent_mmd(trainer.model, data.images, n=500, seed=seed)
    trainer.fit(data)
    final = latent_mmd(trainer.model, data.images, n=500, seed=seed)
    assert initial >= 0.16
    assert final < 0.08
