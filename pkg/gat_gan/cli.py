"""
Command-line surface: train, generate, eval {ftd|predictive|both}, ablate,
train-embedder and inspect. Results are written to stdout as JSON, logs and
errors to stderr.

Exit codes: 0 success, 2 usage/config/validation, 3 training divergence,
1 anything unexpected.
"""
import argparse
import json
import logging
import sys

from .config import load_config
from .errors import (CheckpointError, ConfigError, ContractError, DataError, DimensionError,
                     DivergenceError)
from .runner import ExperimentRunner
from .version import __version__

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_DIVERGENCE = 3

USAGE_ERRORS = (
    (ConfigError, 'Config error'),
    (CheckpointError, 'Checkpoint error'),
    (DataError, 'Data error'),
    (DimensionError, 'Dimension error'),
    (ContractError, 'Contract error'),
)


def _common(parser):
    parser.add_argument('--config', help='flat key = value configuration file')
    parser.add_argument('--data', help='CSV path or toy:<kind> source')
    parser.add_argument('--out', help='output directory')
    parser.add_argument('--seed', type=int)
    parser.add_argument('--set', action='append', default=[], metavar='KEY=VALUE',
                        help='override any configuration key; repeatable')


def build_parser():
    parser = argparse.ArgumentParser(prog='gat-gan', description='Graph-attention adversarial autoencoder '
                                                                 'for multivariate time series')
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument('--verbose', action='store_true', help='log at DEBUG level')
    verbosity.add_argument('--quiet', action='store_true', help='log warnings and errors only')
    commands = parser.add_subparsers(dest='command', required=True)

    train = commands.add_parser('train', help='train a model')
    _common(train)
    train.add_argument('--tau', type=int)
    train.add_argument('--epochs', type=int)
    train.add_argument('--variant')

    generate = commands.add_parser('generate', help='sample synthetic sequences from a checkpoint')
    _common(generate)
    generate.add_argument('--checkpoint', required=True)
    generate.add_argument('--count', type=int, required=True)
    generate.add_argument('--output', required=True, help='CSV file to write')
    generate.add_argument('--mode', choices=('prior', 'reconstruct'), default='prior')
    generate.add_argument('--allow-untrained', action='store_true')

    evaluate = commands.add_parser('eval', help='score synthetic data against real data')
    evaluate.add_argument('metric', choices=('ftd', 'predictive', 'both'))
    _common(evaluate)
    evaluate.add_argument('--real', required=True, help='real CSV path or toy:<kind>')
    evaluate.add_argument('--synthetic', required=True, help='generated CSV')
    evaluate.add_argument('--embedder', help='embedder checkpoint (ftd)')
    evaluate.add_argument('--runs', type=int)
    evaluate.add_argument('--tau', type=int)
    evaluate.add_argument('--variant', help='label for the report rows')

    ablate = commands.add_parser('ablate', help='train and score ablation variants')
    _common(ablate)
    ablate.add_argument('--variant', help='comma-separated variants (default: all)')
    ablate.add_argument('--tau', help='comma-separated sequence lengths')
    ablate.add_argument('--runs', type=int)
    ablate.add_argument('--workers', type=int)
    ablate.add_argument('--embedder', help='shared embedder checkpoint')

    embedder = commands.add_parser('train-embedder', help='train the FTD embedder on real data')
    _common(embedder)
    embedder.add_argument('--tau', type=int)
    embedder.add_argument('--checkpoint', help='embedder checkpoint to write')

    inspect = commands.add_parser('inspect', help='describe a checkpoint')
    inspect.add_argument('checkpoint')
    return parser


def _overrides(args):
    overrides = {}
    for item in getattr(args, 'set', []):
        if '=' not in item:
            raise ConfigError(item, 'expected KEY=VALUE')
        key, value = item.split('=', 1)
        overrides[key.strip()] = value.strip()
    for key in ('data', 'out', 'seed', 'epochs', 'runs', 'workers', 'embedder'):
        if getattr(args, key, None) is not None:
            overrides[key] = getattr(args, key)
    tau = getattr(args, 'tau', None)
    if args.command == 'ablate':
        if tau is not None:
            overrides['ablate_taus'] = tau
            overrides['tau'] = tau.split(',')[0]
        if args.variant:
            overrides['variants'] = args.variant
    else:
        if tau is not None:
            overrides['tau'] = tau
        if getattr(args, 'variant', None):
            overrides['variant'] = args.variant
    return overrides


def configure_logging(args):
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(stream=sys.stderr, level=level,
                        format='%(asctime)s %(levelname)s %(name)s: %(message)s')


def dispatch(args):
    """ Runs one command and returns its JSON-serializable result """
    if args.command == 'inspect':
        return ExperimentRunner.inspect(args.checkpoint)
    config = load_config(args.config, _overrides(args))
    runner = ExperimentRunner(config)
    if args.command == 'train':
        result = runner.train()
        return {'checkpoint': result.checkpoint, 'digest': result.digest, 'epochs': len(result.records),
                'final_reconstruction': result.records[-1].reconstruction if result.records else None}
    if args.command == 'generate':
        return runner.generate(args.checkpoint, args.count, config.seed, args.output, args.mode,
                               args.allow_untrained)
    if args.command == 'eval':
        return runner.evaluate(args.metric, args.real, args.synthetic, config.embedder, config.runs).to_json()
    if args.command == 'ablate':
        report = runner.ablate()
        sys.stderr.write(report.summary() + '\n')
        return report.to_json()
    _, history, path = runner.train_embedder(args.checkpoint)
    return {'checkpoint': path, 'initial_val_mse': history[0]['val_mse'], 'final_val_mse': history[-1]['val_mse']}


def main(argv=None):
    """
    Top level gat-gan cli method: parses arguments, runs the command and maps errors to exit codes
    """
    args = build_parser().parse_args(argv)
    configure_logging(args)
    exit_code = EXIT_ERROR
    try:
        result = dispatch(args)
        sys.stdout.write(json.dumps(result, indent=2, sort_keys=True) + '\n')
        sys.stdout.flush()
        exit_code = EXIT_OK
    except DivergenceError as error:
        where = f' (last checkpoint: {error.checkpoint})' if error.checkpoint else ' (no checkpoint written)'
        sys.stderr.write(f'Divergence error: {error}{where}\n')
        exit_code = EXIT_DIVERGENCE
    except tuple(kind for kind, _ in USAGE_ERRORS) as error:
        label = next(label for kind, label in USAGE_ERRORS if isinstance(error, kind))
        sys.stderr.write(f'{label}: {error}\n')
        exit_code = EXIT_USAGE
    except Exception:  # pylint: disable=broad-except
        logger.exception('unexpected failure')
        sys.stderr.write(f'Unexpected Error {str(sys.exc_info()[0])}. {str(sys.exc_info()[1])}\n')
    return exit_code


def run():
    sys.exit(main())
