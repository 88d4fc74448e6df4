"""
Tests for gat_gan losses, optimizer and training procedure
"""
import unittest

import numpy as np
from mock import patch

from gat_gan import training
from gat_gan.data import toy_generator
from gat_gan.errors import ContractError, DimensionError, DivergenceError
from gat_gan.model import GatGanModel, ModelConfig, discriminate, encode
from gat_gan.tensor import Tape, Tensor, backward, no_grad, parameter
from gat_gan.training import (Trainer, TrainingConfig, adam_step, discriminator_loss, flip_labels,
                              generator_loss, parameter_digest, reconstruction_loss, train_loop, train_step,
                              OptimizerState)


def small_model(seed=3, variant='full'):
    config = ModelConfig(tau=6, features=2, latent_dim=4, attention_pairs=1, ffn_depth=1, disc_hidden=4, seed=seed)
    return GatGanModel(config.for_variant(variant))


def digests(model):
    return {name: parameter_digest(network) for name, network in model.networks().items()}


class Test(unittest.TestCase):
    """ Test class """

    def setUp(self):
        self.windows = np.random.default_rng(1).uniform(size=(10, 6, 2))

    def test_reconstruction_loss(self):
        """ Test a constant offset of 0.1 gives 0.1 * sqrt(tau * F) per sequence """
        x = self.windows[:4]
        loss = reconstruction_loss(x, x + 0.1).item()
        self.assertAlmostEqual(loss, 0.1 * np.sqrt(12), places=12)
        self.assertEqual(reconstruction_loss(x, x).item(), 0.0)
        with self.assertRaises(DimensionError):
            reconstruction_loss(x, x[:, :5])

    def test_adversarial_losses(self):
        """ Test the discriminator loss vanishes on perfect scores and the generator loss at 0.5 is log 2 """
        self.assertLess(discriminator_loss(Tensor(np.ones(4)), Tensor(np.zeros(4))).item(), 1e-10)
        half = Tensor(np.full(4, 0.5))
        self.assertAlmostEqual(discriminator_loss(half, half).item(), 2 * np.log(2), places=9)
        self.assertAlmostEqual(generator_loss(half, Tensor(np.array(0.3)), 2.0).item(), np.log(2) + 0.6, places=9)
        self.assertAlmostEqual(generator_loss(half, 0.0, 0.0).item(), np.log(2), places=9)

    def test_flip_labels(self):
        """ Test flip probability 0 keeps the role, 1 swaps it, and other values are refused """
        rng = np.random.default_rng(0)
        self.assertEqual(flip_labels('real', 0.0, rng), 'real')
        self.assertEqual(flip_labels('real', 1.0, rng), 'fake')
        self.assertEqual(flip_labels('fake', 1.0, rng), 'real')
        flips = sum(flip_labels('real', 0.25, rng) == 'fake' for _ in range(4000))
        self.assertAlmostEqual(flips / 4000, 0.25, delta=0.03)
        with self.assertRaises(ContractError):
            flip_labels('real', 1.5, rng)
        with self.assertRaises(ContractError):
            flip_labels('maybe', 0.5, rng)

    def test_adam_first_step_moves_by_lr(self):
        """ Test the bias-corrected first Adam step moves each parameter by lr against its gradient """
        param = parameter(np.array([1.0, -2.0, 0.5]))
        with Tape():
            backward((param * Tensor(np.array([3.0, -0.5, 0.0]))).sum())
        state = OptimizerState()
        adam_step([('w', param)], state, 0.01)
        np.testing.assert_allclose(param.values, [0.99, -1.99, 0.5], atol=1e-8)
        self.assertIsNone(param.grad)
        self.assertEqual(state.step, 1)
        self.assertEqual([name for name, _ in state.arrays('encoder.')], ['encoder.w.m', 'encoder.w.v'])

    def test_adam_two_step_trajectory(self):
        """ Test two Adam steps against the hand-computed moments and positions """
        param = parameter(np.array([1.0]))
        state = OptimizerState()
        param.grad = np.array([2.0])
        adam_step([('w', param)], state, 0.1)
        first = 1.0 - 0.1 * (0.2 / 0.1) / (np.sqrt(0.004 / 0.001) + 1e-8)
        self.assertAlmostEqual(param.values[0], first, places=12)
        param.grad = np.array([-1.0])
        adam_step([('w', param)], state, 0.1)
        second = first - 0.1 * (0.08 / 0.19) / (np.sqrt(0.004996 / 0.001999) + 1e-8)
        self.assertAlmostEqual(param.values[0], second, places=12)
        moment1, moment2 = state.moments['w']
        self.assertAlmostEqual(moment1[0], 0.08, places=12)
        self.assertAlmostEqual(moment2[0], 0.004996, places=12)
        self.assertEqual(state.step, 2)

    def test_adam_rejects_non_finite_gradient(self):
        """ Test a NaN gradient is a divergence, not a silent update """
        param = parameter(np.zeros(2))
        param.grad = np.array([np.nan, 0.0])
        with self.assertRaises(DivergenceError):
            adam_step([('w', param)], OptimizerState(), 0.01)
        np.testing.assert_array_equal(param.values, np.zeros(2))

    def test_negative_learning_rate_refused(self):
        """ Test configuration validation of learning rate and flip probability """
        with self.assertRaises(ContractError):
            TrainingConfig(lr_encoder=-1e-3)
        with self.assertRaises(ContractError):
            TrainingConfig(flip_prob=2.0)

    def test_zero_learning_rate_is_a_no_op(self):
        """ Test a step with every learning rate at zero leaves all parameters unchanged """
        model = small_model()
        before = digests(model)
        config = TrainingConfig(lr_encoder=0.0, lr_decoder=0.0, lr_discriminator=0.0)
        record = train_step(model, self.windows[:4], Trainer(model, config))
        self.assertEqual(digests(model), before)
        self.assertTrue(np.isfinite(record.reconstruction))
        self.assertTrue(0.0 <= record.disc_accuracy <= 1.0)

    def test_phases_touch_only_their_networks(self):
        """ Test each phase updates exactly the networks it owns """
        model = small_model()
        snapshots = {'start': digests(model)}
        train_step(model, self.windows[:4], Trainer(model, TrainingConfig()),
                   on_phase=lambda phase: snapshots.__setitem__(phase, digests(model)))
        start, recon, disc, gen = (snapshots[k] for k in ('start', 'reconstruction', 'discriminator', 'generator'))
        self.assertNotEqual(recon['encoder'], start['encoder'])
        self.assertNotEqual(recon['decoder'], start['decoder'])
        self.assertEqual(recon['discriminator'], start['discriminator'])
        self.assertEqual(disc['encoder'], recon['encoder'])
        self.assertEqual(disc['decoder'], recon['decoder'])
        self.assertNotEqual(disc['discriminator'], recon['discriminator'])
        self.assertNotEqual(gen['encoder'], disc['encoder'])
        self.assertEqual(gen['decoder'], disc['decoder'])
        self.assertEqual(gen['discriminator'], disc['discriminator'])

    def test_no_reconstruction_variant_freezes_decoder(self):
        """ Test training without the reconstruction loss never updates the decoder """
        model = small_model(variant='no_reconstruction_loss')
        before = parameter_digest(model.decoder)
        config = TrainingConfig(epochs=2, batch_size=5).for_variant('no_reconstruction_loss')
        _, records = train_loop(model, self.windows, config)
        self.assertEqual(parameter_digest(model.decoder), before)
        self.assertEqual(len(records), 2)

    def test_generator_raises_scores_of_a_frozen_discriminator(self):
        """ Test encoder-only generator updates never lower the mean posterior score over 100 steps """
        model = GatGanModel(ModelConfig(tau=6, features=2, latent_dim=4, attention_pairs=1, ffn_depth=1,
                                        disc_hidden=4, noise_scale=0.0, seed=3))
        model.discriminator.head.weight.values[...] = np.random.default_rng(6).normal(size=(4, 1))
        config = TrainingConfig(lr_decoder=0.0, lr_discriminator=0.0, recon_weight=0.0,
                                reconstruction_phase=False, flip_prob=0.0)
        trainer = Trainer(model, config)
        batch = self.windows[:8]
        frozen = parameter_digest(model.discriminator)

        def mean_score():
            with no_grad():
                return float(discriminate(model, encode(model, batch)).values.mean())

        scores = [mean_score()]
        for step in range(1, 101):
            train_step(model, batch, trainer)
            if step % 20 == 0:
                scores.append(mean_score())
        self.assertEqual(parameter_digest(model.discriminator), frozen)
        for earlier, later in zip(scores, scores[1:]):
            self.assertGreaterEqual(later, earlier)
        self.assertGreater(scores[-1], scores[0])

    def test_default_training_halves_reconstruction_loss(self):
        """ Test default settings on 32 toy sine windows at least halve L_r within 200 epochs """
        dataset = toy_generator('coupled_sines', 32, 16, 3, seed=0)
        model = GatGanModel(ModelConfig(tau=16, features=3))
        _, records = train_loop(model, dataset, TrainingConfig(epochs=200))
        self.assertEqual(len(records), 200)
        self.assertLessEqual(records[-1].reconstruction / records[0].reconstruction, 0.5)

    def test_train_step_checks_batch_shape(self):
        """ Test a batch of the wrong shape is a dimension error """
        model = small_model()
        with self.assertRaises(DimensionError):
            train_step(model, np.zeros((2, 5, 2)), Trainer(model, TrainingConfig()))

    def test_train_loop_is_deterministic(self):
        """ Test two runs from one seed end with identical parameters and losses """
        config = TrainingConfig(epochs=2, batch_size=4, seed=11)
        first, first_records = train_loop(small_model(), self.windows, config)
        second, second_records = train_loop(small_model(), self.windows, config)
        self.assertEqual(digests(first), digests(second))
        self.assertEqual([r.to_row()[:5] for r in first_records], [r.to_row()[:5] for r in second_records])
        self.assertEqual(first.epochs_trained, 2)

    def test_train_loop_runs_every_minibatch(self):
        """ Test each epoch visits ceil(K / batch_size) minibatches """
        with patch('gat_gan.training.train_step', wraps=training.train_step) as step:
            train_loop(small_model(), self.windows, TrainingConfig(epochs=3, batch_size=4))
        self.assertEqual(step.call_count, 9)
        self.assertEqual([len(call.args[1]) for call in step.call_args_list[:3]], [4, 4, 2])

    def test_zero_epochs_returns_untouched_model(self):
        """ Test zero epochs trains nothing and records nothing """
        model = small_model()
        before = digests(model)
        _, records = train_loop(model, self.windows, TrainingConfig(epochs=0))
        self.assertEqual(records, [])
        self.assertEqual(digests(model), before)
        self.assertEqual(model.epochs_trained, 0)

    def test_checkpoint_callback_tags(self):
        """ Test 'best' is saved on improvement and 'epoch-N' on the checkpoint interval """
        tags = []
        config = TrainingConfig(epochs=4, batch_size=5, checkpoint_every=2)
        train_loop(small_model(), self.windows, config, checkpoint=lambda tag, *_: tags.append(tag))
        self.assertIn('epoch-2', tags)
        self.assertIn('epoch-4', tags)
        self.assertEqual(tags[0], 'best')

    def test_divergence_reports_last_checkpoint(self):
        """ Test non-finite weights raise DivergenceError naming the last good checkpoint """
        model = small_model()

        def checkpoint(tag, _trainer, records):
            if tag == 'best' and len(records) == 1:
                next(iter(model.encoder.parameters())).values[...] = np.nan
                return 'runs/best/model.ckpt'
            return None

        with self.assertRaises(DivergenceError) as context:
            train_loop(model, self.windows, TrainingConfig(epochs=3, batch_size=5), checkpoint=checkpoint)
        self.assertEqual(context.exception.checkpoint, 'runs/best/model.ckpt')
        self.assertIn('epoch 2', str(context.exception))
        self.assertEqual(model.epochs_trained, 1)

    def test_empty_dataset_refused(self):
        """ Test training needs at least one window """
        with self.assertRaises(ContractError):
            train_loop(small_model(), np.zeros((0, 6, 2)), TrainingConfig(epochs=1))
