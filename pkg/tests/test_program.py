"""
Tests for the gat-gan command-line interface
"""
import io
import json
import os
import subprocess
import sys
import tempfile
import unittest

from mock import patch

from gat_gan import cli
from gat_gan.errors import DivergenceError

REPO_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
TOY = 'toy:coupled_sines'
SMALL = ['toy_sequences=12', 'features=2', 'latent_dim=4', 'attention_pairs=1', 'ffn_depth=1', 'disc_hidden=4',
         'batch_size=8', 'embedder_width=4', 'embedder_heads=2', 'embedder_blocks=1', 'embedder_epochs=1',
         'forecaster_hidden=4', 'forecaster_epochs=1', 'horizon=4']


def small_settings():
    settings = []
    for item in SMALL:
        settings.extend(['--set', item])
    return settings


class Test(unittest.TestCase):
    # pylint: disable=too-many-public-methods
    """ Test class """

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()

    def tearDown(self):
        self.tmp.cleanup()

    def path(self, *parts):
        return os.path.join(self.tmp.name, *parts)

    def execute_command(self, *args):
        """
        execute the cli as an external command, and returns command exit status, stdout and stderr
        """
        process = subprocess.run([sys.executable, REPO_ROOT, *args], stdout=subprocess.PIPE,
                                 stderr=subprocess.PIPE, check=False)
        return process.returncode, process.stdout.decode(), process.stderr.decode()

    def train(self, epochs=0, out='run'):
        status, out_text, err_text = self.execute_command(
            'train', '--data', TOY, '--out', self.path(out), '--tau', '8', '--epochs', str(epochs),
            *small_settings())
        self.assertEqual(status, 0, err_text)
        return json.loads(out_text)

    def test_train_writes_outputs(self):
        """ Test zero-epoch training on toy data writes a checkpoint, losses and the resolved config """
        result = self.train()
        self.assertTrue(os.path.exists(result['checkpoint']))
        self.assertEqual(result['epochs'], 0)
        self.assertIsNone(result['final_reconstruction'])
        for name in ('losses.csv', 'resolved_config.json'):
            self.assertTrue(os.path.exists(self.path('run', name)), name)
        with open(self.path('run', 'resolved_config.json')) as handle:
            self.assertEqual(json.load(handle)['tau'], 8)

    def test_one_epoch_training_and_inspect(self):
        """ Test a trained checkpoint reports its epoch and parameter counts """
        result = self.train(epochs=1)
        self.assertEqual(result['epochs'], 1)
        status, out_text, _ = self.execute_command('inspect', result['checkpoint'])
        self.assertEqual(status, 0)
        summary = json.loads(out_text)
        self.assertEqual((summary['kind'], summary['epoch']), ('gat_gan', 1))
        self.assertEqual(summary['digest'], result['digest'])
        self.assertEqual(set(summary['parameters']['networks']), {'encoder', 'decoder', 'discriminator'})

    def test_generate_is_deterministic(self):
        """ Test one seed produces byte-identical CSV output and a manifest """
        checkpoint = self.train()['checkpoint']
        status, _, err_text = self.execute_command('generate', '--checkpoint', checkpoint, '--count', '3',
                                                   '--output', self.path('a.csv'))
        self.assertEqual(status, 2)
        self.assertIn('Contract error', err_text)
        outputs = []
        for name in ('a.csv', 'b.csv'):
            status, out_text, err_text = self.execute_command(
                'generate', '--checkpoint', checkpoint, '--count', '3', '--output', self.path(name),
                '--seed', '4', '--allow-untrained')
            self.assertEqual(status, 0, err_text)
            with open(self.path(name), 'rb') as handle:
                outputs.append(handle.read())
        self.assertEqual(outputs[0], outputs[1])
        manifest = json.loads(out_text)
        self.assertEqual((manifest['count'], manifest['tau'], manifest['seed']), (3, 8, 4))
        self.assertTrue(os.path.exists(self.path('b.manifest.json')))
        self.assertTrue(os.path.exists(self.path('b.params.json')))
        self.assertEqual(len(outputs[0].decode().strip().splitlines()), 1 + 3 * 8)

    def test_evaluate_generated_data(self):
        """ Test train-embedder, generate and eval both run end to end and write a report """
        checkpoint = self.train()['checkpoint']
        status, _, err_text = self.execute_command(
            'generate', '--checkpoint', checkpoint, '--count', '4', '--output', self.path('fake.csv'),
            '--allow-untrained')
        self.assertEqual(status, 0, err_text)
        embedder = self.path('embedder.ckpt')
        status, out_text, err_text = self.execute_command(
            'train-embedder', '--data', TOY, '--tau', '8', '--checkpoint', embedder, *small_settings())
        self.assertEqual(status, 0, err_text)
        self.assertIn('final_val_mse', json.loads(out_text))
        self.assertTrue(os.path.exists(self.path('embedder_history.csv')))
        status, out_text, err_text = self.execute_command(
            'eval', 'both', '--real', TOY, '--synthetic', self.path('fake.csv'), '--embedder', embedder,
            '--runs', '2', '--tau', '8', '--out', self.path('eval'), *small_settings())
        self.assertEqual(status, 0, err_text)
        cell = json.loads(out_text)['results']['toy-coupled_sines']['8']['full']
        self.assertEqual(set(cell), {'ftd', 'predictive_mae'})
        self.assertEqual(cell['ftd']['n_runs'], 2)
        self.assertTrue(os.path.exists(self.path('eval', 'eval_report.csv')))

    def test_eval_rejects_mismatched_rows(self):
        """ Test a synthetic file whose rows are not a multiple of tau is a dimension error """
        with open(self.path('odd.csv'), 'w') as handle:
            handle.write('a,b\n' + '0.5,0.5\n' * 7)
        status, _, err_text = self.execute_command(
            'eval', 'predictive', '--real', TOY, '--synthetic', self.path('odd.csv'), '--tau', '8',
            '--out', self.path('eval'), *small_settings())
        self.assertEqual(status, 2)
        self.assertIn('Dimension error', err_text)

    def test_ablate_writes_report(self):
        """ Test a two-variant ablation scores every cell """
        status, out_text, err_text = self.execute_command(
            'ablate', '--data', TOY, '--out', self.path('ablation'), '--variant', 'full,no_decoder',
            '--tau', '8', '--runs', '1', '--set', 'epochs=1', *small_settings())
        self.assertEqual(status, 0, err_text)
        variants = json.loads(out_text)['results']['toy-coupled_sines']['8']
        self.assertEqual(set(variants), {'full', 'no_decoder'})
        self.assertIn('predictive_mae', variants['no_decoder'])
        self.assertTrue(os.path.exists(self.path('ablation', 'ablation_report.json')))
        self.assertTrue(os.path.exists(self.path('ablation', 'tau-8', 'embedder.ckpt')))
        self.assertIn('no_decoder', err_text)

    def test_ablate_reports_all_six_variants_by_default(self):
        """ Test an ablation without --variant trains, scores and reports every variant """
        status, out_text, err_text = self.execute_command(
            'ablate', '--data', TOY, '--out', self.path('ablation'), '--tau', '8', '--runs', '1',
            '--set', 'epochs=1', *small_settings())
        self.assertEqual(status, 0, err_text)
        variants = json.loads(out_text)['results']['toy-coupled_sines']['8']
        self.assertEqual(set(variants), {'full', 'no_decoder', 'no_spatial_attention', 'no_temporal_attention',
                                         'no_encoder_conv', 'no_reconstruction_loss'})
        with open(self.path('ablation', 'ablation_report.json')) as handle:
            report = json.load(handle)
        self.assertEqual(len(report['results']['toy-coupled_sines']['8']), 6)

    def test_usage_errors_exit_2(self):
        """ Test configuration problems and argument errors exit with status 2 """
        status, _, err_text = self.execute_command('train', '--data', TOY, '--set', 'learning_rate=1')
        self.assertEqual(status, 2)
        self.assertIn('Config error: learning_rate', err_text)
        status, _, err_text = self.execute_command('train', '--out', self.path('run'))
        self.assertEqual(status, 2)
        self.assertIn('data: required but not set', err_text)
        status, _, _ = self.execute_command('dance')
        self.assertEqual(status, 2)
        status, _, err_text = self.execute_command('inspect', self.path('missing.ckpt'))
        self.assertEqual(status, 2)
        self.assertIn('Checkpoint error', err_text)

    def test_divergence_exits_3(self):
        """ Test a diverged run exits with status 3 and names the last good checkpoint """
        error = DivergenceError('non-finite reconstruction loss at epoch 4', checkpoint='run/best.ckpt')
        with patch('gat_gan.runner.train_loop', side_effect=error), \
                patch('sys.stderr', new_callable=io.StringIO) as stderr, \
                patch('sys.stdout', new_callable=io.StringIO) as stdout:
            status = cli.main(['--quiet', 'train', '--data', TOY, '--out', self.path('run'), *small_settings()])
        self.assertEqual(status, cli.EXIT_DIVERGENCE)
        self.assertIn('Divergence error: non-finite reconstruction loss at epoch 4 (last checkpoint: run/best.ckpt)',
                      stderr.getvalue())
        self.assertEqual(stdout.getvalue(), '')

    def test_unexpected_error_exits_1(self):
        """ Test an unexpected exception exits with status 1 """
        with patch('gat_gan.runner.ExperimentRunner.inspect', side_effect=RuntimeError('boom')), \
                patch('sys.stderr', new_callable=io.StringIO) as stderr:
            status = cli.main(['--quiet', 'inspect', 'model.ckpt'])
        self.assertEqual(status, cli.EXIT_ERROR)
        self.assertIn('Unexpected Error', stderr.getvalue())
        self.assertIn('boom', stderr.getvalue())

    def test_version(self):
        """ Test --version prints the package version """
        status, out_text, _ = self.execute_command('--version')
        self.assertEqual(status, 0)
        self.assertTrue(out_text.startswith('gat-gan v'))
