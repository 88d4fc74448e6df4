"""
ExperimentRunner: the commands of the gat-gan CLI as methods over a resolved
RunConfig. Every output goes under the configured output directory; input
files are only read.
"""
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .checkpoint import (load_checkpoint, restore_embedder, restore_model, save_checkpoint,
                         save_embedder)
from .config import write_snapshot
from .data import (NormalizationParams, apply_normalization, denormalize, export_csv, load_csv,
                   minmax_normalize, split, toy_generator, window)
from .errors import ContractError, DimensionError
from .metrics import ftd_score, predictive_score, train_embedder
from .model import VARIANTS, GatGanModel, generate, parameter_report
from .report import EvalReport
from .training import LOSS_COLUMNS, Trainer, train_loop
from .util import validate_json

logger = logging.getLogger(__name__)

TOY_PREFIX = 'toy:'


@dataclass
class TrainResult:
    model: GatGanModel
    records: list
    checkpoint: str
    digest: str
    train_set: object
    test_set: object


def dataset_id(source):
    if source.startswith(TOY_PREFIX):
        return f'toy-{source[len(TOY_PREFIX):]}'
    return os.path.splitext(os.path.basename(source))[0]


def _stream(seed, *purpose):
    return np.random.default_rng(np.random.SeedSequence([seed, *purpose]))


class ExperimentRunner:
    """
    Runs training, generation, evaluation and ablation for one RunConfig.
    """

    def __init__(self, config):
        self.config = config

    ###############
    #  Datasets   #
    ###############

    def load_dataset(self, source=None, tau=None):
        """
        * Windowed, normalized dataset from a CSV path or a toy:<kind> source.
        * @param {string} source Defaults to the configured data source
        * @param {int} tau Defaults to the configured sequence length
        * @returns {WindowedDataset}
        """
        config = self.config
        source = source or config.data
        tau = tau or config.tau
        if source is None:
            config.require('data')
        if source.startswith(TOY_PREFIX):
            return toy_generator(source[len(TOY_PREFIX):], config.toy_sequences, tau, config.features,
                                 config.noise, config.seed, config.stride)
        raw = load_csv(source, config.header_mode)
        stats_rows = None
        if config.normalize_scope == 'train':
            stats_rows = max(1, int(round(config.train_frac * raw.steps)))
        normalized, params = minmax_normalize(raw, stats_rows)
        return window(normalized, tau, config.stride, params)

    def split_dataset(self, dataset):
        config = self.config
        return split(dataset, config.train_frac, config.split_mode, config.seed)

    def load_synthetic(self, path, tau, params):
        """ Generated CSV of stacked sequences, scaled with the real data's normalization params """
        raw = load_csv(path, self.config.header_mode)
        if raw.features != len(params.minimum):
            raise DimensionError(f'{path} has {raw.features} features, the real data has {len(params.minimum)}')
        if raw.steps % tau:
            raise DimensionError(f'{path} has {raw.steps} rows, not a multiple of tau={tau}')
        return window(apply_normalization(raw.values, params), tau, tau, params)

    ###############
    #  Training   #
    ###############

    def _train_cell(self, train_set, variant, out_dir, tau):
        config = self.config
        model_config = config.model_config(train_set.features, tau).for_variant(variant)
        training_config = config.training_config().for_variant(variant)
        model = GatGanModel(model_config)
        report = parameter_report(model)
        logger.info('%s model: %s parameters (%s)', variant, report['total'],
                    ', '.join(f'{name} {entry["count"]}' for name, entry in report['networks'].items()))
        os.makedirs(out_dir, exist_ok=True)
        extra = {'variant': variant, 'dataset': dataset_id(config.data)}
        if train_set.params is not None:
            extra['normalization'] = train_set.params.to_dict()
        trainer = Trainer(model, training_config)

        def checkpoint(tag, trainer_, _records):
            path = os.path.join(out_dir, f'{tag}.ckpt')
            save_checkpoint(model, path, trainer_, extra)
            return path

        _, records = train_loop(model, train_set, training_config, checkpoint, trainer)
        final = os.path.join(out_dir, 'model.ckpt')
        digest = save_checkpoint(model, final, trainer, extra)
        losses = pd.DataFrame([record.to_row() for record in records], columns=LOSS_COLUMNS)
        losses.to_csv(os.path.join(out_dir, 'losses.csv'), index=False, float_format='%.10g')
        if records:
            logger.info('%s: L_r %.5f -> %.5f over %d epochs', variant, records[0].reconstruction,
                        records[-1].reconstruction, len(records))
        return model, records, final, digest

    def train(self):
        """ Trains the configured variant and writes checkpoints, losses.csv and the resolved config """
        config = self.config
        config.require('data', 'out')
        write_snapshot(config, config.out)
        dataset = self.load_dataset()
        train_set, test_set = self.split_dataset(dataset)
        model, records, final, digest = self._train_cell(train_set, config.variant, config.out, config.tau)
        return TrainResult(model, records, final, digest, train_set, test_set)

    def train_embedder(self, out_ckpt=None):
        """ Trains the FTD embedder on the real dataset and writes its checkpoint and validation log """
        config = self.config
        config.require('data')
        out_ckpt = out_ckpt or os.path.join(config.out, 'embedder.ckpt')
        os.makedirs(os.path.dirname(os.path.abspath(out_ckpt)), exist_ok=True)
        dataset = self.load_dataset()
        embedder, history = train_embedder(dataset, config.embedder_config())
        save_embedder(embedder, out_ckpt, history, {'dataset': dataset_id(config.data), 'tau': dataset.tau})
        log_path = os.path.splitext(out_ckpt)[0] + '_history.csv'
        pd.DataFrame(history, columns=['epoch', 'train_mse', 'val_mse']).to_csv(
            log_path, index=False, float_format='%.10g')
        return embedder, history, out_ckpt

    ################
    #  Generation  #
    ################

    def generate(self, ckpt_path, count, seed, out_path, mode='prior', allow_untrained=False):
        """
        * Writes `count` synthetic sequences as CSV (denormalized when the checkpoint carries
        * normalization params), a params sidecar and a manifest.
        * @returns {dict} The manifest
        """
        checkpoint = load_checkpoint(ckpt_path, 'gat_gan')
        model = restore_model(checkpoint)
        source = None
        if mode == 'reconstruct':
            source = self.load_dataset(tau=model.config.tau).windows
        synthetic = generate(model, count, _stream(seed, 5), mode, source, allow_untrained).values
        params = checkpoint.extra.get('normalization')
        names = None
        if params:
            params = NormalizationParams.from_dict(params)
            synthetic = denormalize(synthetic, params)
            names = params.feature_names or None
        os.makedirs(os.path.dirname(os.path.abspath(out_path)), exist_ok=True)
        export_csv(synthetic, out_path, names)
        stem = os.path.splitext(out_path)[0]
        if params:
            with open(f'{stem}.params.json', 'w') as handle:
                json.dump(params.to_dict(), handle, indent=2, sort_keys=True)
                handle.write('\n')
        manifest = {'seed': seed, 'mode': mode, 'count': count, 'tau': model.config.tau,
                    'features': model.config.features, 'checkpoint': str(ckpt_path),
                    'checkpoint_digest': checkpoint.digest, 'denormalized': bool(params),
                    'source': self.config.data if mode == 'reconstruct' else None}
        validate_json(manifest, 'manifest')
        with open(f'{stem}.manifest.json', 'w') as handle:
            json.dump(manifest, handle, indent=2, sort_keys=True)
            handle.write('\n')
        return manifest

    ################
    #  Evaluation  #
    ################

    def _ftd_runs(self, real, synthetic, embedder, runs, salt=0):
        if embedder.features != real.shape[2]:
            raise DimensionError(f'embedder expects {embedder.features} features, data has {real.shape[2]}')
        return [ftd_score(real, synthetic, embedder, _stream(self.config.seed, 6, salt, run))
                for run in range(runs)]

    def _predictive_runs(self, real_test, synthetic, runs):
        config = self.config
        return [predictive_score(real_test, synthetic, config.horizon, config.forecaster_config(config.seed + run))
                for run in range(runs)]

    def evaluate(self, metric, real_path, syn_path, embedder_path=None, runs=None):
        """
        * Scores a synthetic CSV against real data.
        * @param {string} metric 'ftd', 'predictive' or 'both'
        * @returns {EvalReport}
        """
        config = self.config
        runs = runs or config.runs
        if metric not in ('ftd', 'predictive', 'both'):
            raise ContractError(f'unknown metric {metric}; expected ftd, predictive or both')
        real = self.load_dataset(real_path)
        synthetic = self.load_synthetic(syn_path, real.tau, real.params)
        report = EvalReport()
        name = dataset_id(real_path)
        if metric in ('ftd', 'both'):
            embedder_path = embedder_path or config.embedder
            if not embedder_path:
                config.require('embedder')
            embedder = restore_embedder(load_checkpoint(embedder_path, 'embedder'))
            report.add_runs(name, real.tau, config.variant, 'ftd',
                            self._ftd_runs(real.windows, synthetic.windows, embedder, runs))
        if metric in ('predictive', 'both'):
            _, real_test = self.split_dataset(real)
            report.add_runs(name, real.tau, config.variant, 'predictive_mae',
                            self._predictive_runs(real_test.windows, synthetic.windows, runs))
        os.makedirs(config.out, exist_ok=True)
        report.write(os.path.join(config.out, 'eval_report.csv'), os.path.join(config.out, 'eval_report.json'))
        return report

    ##############
    #  Ablation  #
    ##############

    def _ablation_cell(self, train_set, test_set, embedder, variant, tau, out_dir):
        config = self.config
        model, _, _, _ = self._train_cell(train_set, variant, out_dir, tau)
        ftd, mae = [], []
        for run in range(config.runs):
            rng = _stream(config.seed, 7, tau, run)
            fake_test = generate(model, len(test_set), rng, allow_untrained=True).values
            ftd.extend(self._ftd_runs(test_set.windows, fake_test, embedder, 1, salt=run))
            if tau > config.horizon:
                fake_train = generate(model, len(train_set), rng, allow_untrained=True).values
                mae.append(predictive_score(test_set.windows, fake_train, config.horizon,
                                            config.forecaster_config(config.seed + run)))
        return variant, tau, ftd, mae

    def ablate(self, variants=None, taus=None):
        """
        * Trains every variant at every sequence length on a shared data split and seed
        * schedule, scores FTD and predictive MAE over config.runs generated batches, and
        * writes ablation_report.csv/json with the FTD/MAE correlation across cells.
        * @returns {EvalReport}
        """
        config = self.config
        config.require('data', 'out')
        variants = list(variants or config.variants)
        unknown = [variant for variant in variants if variant not in VARIANTS]
        if unknown:
            raise ContractError(f'unknown variant {", ".join(unknown)}; valid variants: {", ".join(VARIANTS)}')
        taus = list(taus or config.taus)
        write_snapshot(config, config.out)
        name = dataset_id(config.data)
        cells = []
        for tau in taus:
            train_set, test_set = self.split_dataset(self.load_dataset(tau=tau))
            tau_dir = os.path.join(config.out, f'tau-{tau}')
            if config.embedder:
                embedder = restore_embedder(load_checkpoint(config.embedder, 'embedder'))
            else:
                embedder, history = train_embedder(train_set, config.embedder_config())
                os.makedirs(tau_dir, exist_ok=True)
                save_embedder(embedder, os.path.join(tau_dir, 'embedder.ckpt'), history, {'dataset': name, 'tau': tau})
            for variant in variants:
                cells.append((train_set, test_set, embedder, variant, tau, os.path.join(tau_dir, variant)))

        if config.workers > 1:
            with ThreadPoolExecutor(max_workers=config.workers) as pool:
                results = list(pool.map(lambda cell: self._ablation_cell(*cell), cells))
        else:
            results = [self._ablation_cell(*cell) for cell in cells]

        report = EvalReport()
        for variant, tau, ftd, mae in results:
            report.add_runs(name, tau, variant, 'ftd', ftd)
            if mae:
                report.add_runs(name, tau, variant, 'predictive_mae', mae)
        report.correlate()
        report.write(os.path.join(config.out, 'ablation_report.csv'), os.path.join(config.out, 'ablation_report.json'))
        return report

    #############
    #  Inspect  #
    #############

    @staticmethod
    def inspect(ckpt_path):
        """ Header fields and per-network parameter counts of a checkpoint """
        checkpoint = load_checkpoint(ckpt_path)
        summary = {'kind': checkpoint.kind, 'epoch': checkpoint.epoch, 'digest': checkpoint.digest,
                   'config': checkpoint.config}
        if checkpoint.kind == 'gat_gan':
            summary['parameters'] = parameter_report(restore_model(checkpoint))
        else:
            summary['parameters'] = {'total': restore_embedder(checkpoint).parameter_count()}
        return summary
