"""
Tests for the gat_gan checkpoint container
"""
import os
import tempfile
import unittest

import numpy as np

from gat_gan.checkpoint import (MAGIC, file_digest, load_checkpoint, restore_embedder, restore_model,
                                restore_trainer, save_checkpoint, save_embedder)
from gat_gan.errors import CheckpointError
from gat_gan.layers import TransformerEmbedder
from gat_gan.model import GatGanModel, ModelConfig, generate
from gat_gan.tensor import no_grad
from gat_gan.training import Trainer, TrainingConfig, parameter_digest, train_loop


def small_model():
    return GatGanModel(ModelConfig(tau=6, features=2, latent_dim=4, attention_pairs=1, ffn_depth=1,
                                   disc_hidden=4, seed=8))


class Test(unittest.TestCase):
    """ Test class """

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.windows = np.random.default_rng(2).uniform(size=(8, 6, 2))
        self.config = TrainingConfig(epochs=1, batch_size=4, seed=5)
        self.model, _ = train_loop(small_model(), self.windows, self.config)

    def tearDown(self):
        self.tmp.cleanup()

    def path(self, name):
        return os.path.join(self.tmp.name, name)

    def saved(self, name='model.ckpt'):
        path = self.path(name)
        save_checkpoint(self.model, path, extra={'variant': 'full'})
        return path

    def rewrite(self, path, edit):
        with open(path, 'rb') as handle:
            blob = bytearray(handle.read())
        edit(blob)
        with open(path, 'wb') as handle:
            handle.write(bytes(blob))

    def test_save_load_save_is_byte_identical(self):
        """ Test a restored model and trainer serialize to the same bytes """
        trainer = Trainer(self.model, self.config)
        train_loop(self.model, self.windows, self.config, trainer=trainer)
        first = self.path('first.ckpt')
        digest = save_checkpoint(self.model, first, trainer, extra={'variant': 'full'})
        checkpoint = load_checkpoint(first, 'gat_gan')
        model = restore_model(checkpoint)
        restored = restore_trainer(checkpoint, model, TrainingConfig.from_dict(checkpoint.extra['training']))
        second = self.path('second.ckpt')
        self.assertEqual(save_checkpoint(model, second, restored, extra={'variant': 'full'}), digest)
        self.assertEqual(file_digest(first), file_digest(second))
        self.assertEqual(checkpoint.digest, digest)

    def test_restored_model_generates_identically(self):
        """ Test generation after a round trip matches the original model """
        model = restore_model(load_checkpoint(self.saved()))
        self.assertEqual(model.epochs_trained, 1)
        self.assertEqual(parameter_digest(model), parameter_digest(self.model))
        np.testing.assert_array_equal(generate(model, 3, np.random.default_rng(4)).values,
                                      generate(self.model, 3, np.random.default_rng(4)).values)
        np.testing.assert_array_equal(model.encoder.conv_in.u, self.model.encoder.conv_in.u)

    def test_resumed_training_matches_uninterrupted(self):
        """ Test stopping, saving and resuming gives the same weights as one continuous run that saves as it goes """
        continuous = small_model()

        def checkpoint(tag, trainer_, _records):
            return save_checkpoint(continuous, self.path(f'continuous-{tag}.ckpt'), trainer_)

        train_loop(continuous, self.windows, TrainingConfig(epochs=2, batch_size=4, seed=5), checkpoint)
        interrupted = small_model()
        trainer = Trainer(interrupted, self.config)
        train_loop(interrupted, self.windows, self.config, trainer=trainer)
        path = self.path('resume.ckpt')
        save_checkpoint(interrupted, path, trainer)
        checkpoint = load_checkpoint(path)
        resumed = restore_model(checkpoint)
        train_loop(resumed, self.windows, self.config, trainer=restore_trainer(checkpoint, resumed, self.config))
        self.assertEqual(parameter_digest(resumed), parameter_digest(continuous))
        self.assertEqual(resumed.epochs_trained, 2)

    def test_best_checkpoint_is_certified(self):
        """ Test a best-so-far checkpoint written during training reloads with spectral norms <= 1 + 1e-3 """
        model = small_model()
        path = self.path('best.ckpt')

        def checkpoint(tag, trainer_, _records):
            if tag == 'best':
                save_checkpoint(model, path, trainer_)
                return path
            return None

        train_loop(model, self.windows, TrainingConfig(epochs=3, batch_size=4, seed=5), checkpoint)
        restored = restore_model(load_checkpoint(path))
        layers = restored.encoder.spectral_layers()
        self.assertTrue(layers)
        for layer in layers:
            width, fin, fout = layer.kernel.shape
            with no_grad():
                flat = layer.normalized_kernel().values.transpose(2, 0, 1).reshape(fout, width * fin)
            self.assertLessEqual(np.linalg.svd(flat, compute_uv=False).max(), 1 + 1e-3)
            self.assertTrue(layer.certified())

    def test_flipped_payload_byte_is_rejected(self):
        """ Test corruption of one payload byte fails the payload check """
        path = self.saved()

        def flip(blob):
            blob[-5] ^= 0x01

        self.rewrite(path, flip)
        with self.assertRaises(CheckpointError) as context:
            load_checkpoint(path)
        self.assertEqual(context.exception.section, 'payload')

    def test_flipped_header_byte_is_rejected(self):
        """ Test corruption inside the header text fails the header check """
        path = self.saved()

        def flip(blob):
            index = blob.index(b'"epoch":1')
            blob[index + 8] = ord('2')

        self.rewrite(path, flip)
        with self.assertRaises(CheckpointError) as context:
            load_checkpoint(path)
        self.assertEqual(context.exception.section, 'header')

    def test_future_version_is_rejected(self):
        """ Test a newer format version is reported in the version section """
        path = self.saved()

        def bump(blob):
            index = blob.index(b'"format_version":1')
            blob[index + len(b'"format_version":')] = ord('2')

        self.rewrite(path, bump)
        with self.assertRaises(CheckpointError) as context:
            load_checkpoint(path)
        self.assertEqual(context.exception.section, 'version')
        self.assertIn('version 2', str(context.exception))

    def test_not_a_checkpoint(self):
        """ Test foreign files, truncation and missing files are refused """
        foreign = self.path('foreign.ckpt')
        with open(foreign, 'wb') as handle:
            handle.write(b'not a checkpoint at all')
        with self.assertRaises(CheckpointError):
            load_checkpoint(foreign)
        path = self.saved()
        self.rewrite(path, lambda blob: blob.__delitem__(slice(-16, None)))
        with self.assertRaises(CheckpointError) as context:
            load_checkpoint(path)
        self.assertEqual(context.exception.section, 'payload')
        with self.assertRaises(CheckpointError):
            load_checkpoint(self.path('missing.ckpt'))
        with open(self.saved('magic.ckpt'), 'rb') as handle:
            self.assertEqual(handle.read(len(MAGIC)), MAGIC)

    def test_kind_mismatch(self):
        """ Test loading a model checkpoint as an embedder is refused """
        checkpoint = load_checkpoint(self.saved())
        with self.assertRaises(CheckpointError):
            restore_embedder(checkpoint)
        with self.assertRaises(CheckpointError):
            load_checkpoint(checkpoint.path, 'embedder')

    def test_embedder_round_trip(self):
        """ Test an embedder keeps its weights, trained flag and history """
        embedder = TransformerEmbedder(2, np.random.default_rng(1), width=4, heads=2, blocks=1)
        embedder.trained = True
        history = [{'epoch': 0, 'train_mse': 0.2, 'val_mse': 0.3}, {'epoch': 1, 'train_mse': 0.1, 'val_mse': 0.2}]
        path = self.path('embedder.ckpt')
        save_embedder(embedder, path, history)
        checkpoint = load_checkpoint(path, 'embedder')
        restored = restore_embedder(checkpoint)
        self.assertTrue(restored.trained)
        self.assertEqual(checkpoint.epoch, 1)
        self.assertEqual(checkpoint.extra['history'], history)
        self.assertEqual(parameter_digest(restored), parameter_digest(embedder))
