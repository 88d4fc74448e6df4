"""
Run configuration: a flat `key = value` file merged with command-line
overrides, coerced through the key table below and validated against
schemas/run_config.json.
"""
import json
import logging
import os

from .errors import ConfigError
from .metrics import EmbedderConfig, ForecasterConfig
from .model import VARIANTS, ModelConfig
from .training import TrainingConfig
from .util import validate_json

logger = logging.getLogger(__name__)

RESOLVED_NAME = 'resolved_config.json'
TRUE_WORDS = {'true', 'yes', 'on', '1'}
FALSE_WORDS = {'false', 'no', 'off', '0'}


def _bool(text):
    if isinstance(text, bool):
        return text
    word = str(text).strip().lower()
    if word in TRUE_WORDS:
        return True
    if word in FALSE_WORDS:
        return False
    raise ValueError(f'expected a boolean, got {text!r}')


def _int_list(text):
    if isinstance(text, (list, tuple)):
        return [int(item) for item in text]
    return [int(item) for item in str(text).split(',') if item.strip()]


def _str_list(text):
    if isinstance(text, (list, tuple)):
        return [str(item) for item in text]
    return [item.strip() for item in str(text).split(',') if item.strip()]


def _optional_str(text):
    return None if text is None or str(text).strip() == '' else str(text).strip()


KEYS = {
    # data
    'data': (_optional_str, None),
    'out': (str, 'runs/default'),
    'header_mode': (str, 'auto'),
    'tau': (int, 16),
    'stride': (int, 1),
    'normalize_scope': (str, 'full'),
    'train_frac': (float, 0.8),
    'split_mode': (str, 'chronological'),
    'toy_sequences': (int, 512),
    'features': (int, 3),
    'noise': (float, 0.0),
    'seed': (int, 0),
    # model
    'latent_dim': (int, 16),
    'attention_pairs': (int, 2),
    'ffn_depth': (int, 2),
    'kernel_width': (int, 3),
    'pool_window': (int, 2),
    'noise_scale': (float, 0.05),
    'slope': (float, 0.2),
    'disc_hidden': (int, 32),
    # training
    'batch_size': (int, 32),
    'epochs': (int, 200),
    'lr_encoder': (float, 1e-3),
    'lr_decoder': (float, 1e-3),
    'lr_discriminator': (float, 1e-3),
    'beta1': (float, 0.9),
    'beta2': (float, 0.999),
    'adam_eps': (float, 1e-8),
    'flip_prob': (float, 0.05),
    'recon_weight': (float, 1.0),
    'log_every': (int, 10),
    'checkpoint_every': (int, 50),
    'variant': (str, 'full'),
    # ablation
    'variants': (_str_list, list(VARIANTS)),
    'ablate_taus': (_int_list, []),
    'workers': (int, 1),
    # embedder
    'embedder': (_optional_str, None),
    'embedder_width': (int, 32),
    'embedder_heads': (int, 4),
    'embedder_blocks': (int, 2),
    'embedder_positional': (_bool, True),
    'embedder_epochs': (int, 50),
    'embedder_batch_size': (int, 64),
    'embedder_lr': (float, 1e-3),
    'embedder_val_frac': (float, 0.1),
    # evaluation
    'runs': (int, 10),
    'horizon': (int, 8),
    'forecaster_hidden': (int, 64),
    'forecaster_layers': (int, 2),
    'forecaster_epochs': (int, 300),
    'forecaster_batch_size': (int, 64),
    'forecaster_lr': (float, 1e-3),
    'generate_count': (int, 0),
    'generate_mode': (str, 'prior'),
}


def parse_config_text(text, source='<config>'):
    """
    * Parses `key = value` lines; `#` starts a comment, blank lines are ignored.
    * @param {string} text File contents
    * @param {string} source Name used in error messages
    * @return {dict} raw string values by key
    """
    values = {}
    for number, line in enumerate(text.splitlines(), 1):
        line = line.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise ConfigError(f'{source}:{number}', f'expected "key = value", got {line!r}')
        key, value = (part.strip() for part in line.split('=', 1))
        if not key:
            raise ConfigError(f'{source}:{number}', 'missing key before "="')
        values[key] = value
    return values


def coerce(key, value):
    if key not in KEYS:
        raise ConfigError(key, 'unknown configuration key')
    convert, _ = KEYS[key]
    try:
        return convert(value)
    except (TypeError, ValueError) as error:
        raise ConfigError(key, f'cannot interpret {value!r}: {error}') from error


class RunConfig:
    """ Fully resolved view of defaults, config file values and command-line overrides """

    def __init__(self, values):
        self.__dict__['values'] = dict(values)

    def __getattr__(self, name):
        try:
            return self.__dict__['values'][name]
        except KeyError as error:
            raise AttributeError(name) from error

    def __setattr__(self, name, value):
        self.values[name] = coerce(name, value)

    def to_dict(self):
        return dict(self.values)

    def require(self, *keys):
        for key in keys:
            if self.values.get(key) in (None, ''):
                raise ConfigError(key, 'required but not set')

    def with_overrides(self, **overrides):
        values = dict(self.values)
        values.update({key: coerce(key, value) for key, value in overrides.items() if value is not None})
        return validate_config(RunConfig(values))

    @property
    def taus(self):
        return self.ablate_taus or [self.tau]

    def model_config(self, features, tau=None):
        return ModelConfig(
            tau=tau or self.tau, features=features, latent_dim=self.latent_dim,
            attention_pairs=self.attention_pairs, ffn_depth=self.ffn_depth,
            kernel_width=self.kernel_width, pool_window=self.pool_window,
            noise_scale=self.noise_scale, slope=self.slope, disc_hidden=self.disc_hidden,
            seed=self.seed)

    def training_config(self):
        return TrainingConfig.from_dict(self.values)

    def embedder_config(self, seed=None):
        return EmbedderConfig(
            width=self.embedder_width, heads=self.embedder_heads, blocks=self.embedder_blocks,
            positional=self.embedder_positional, epochs=self.embedder_epochs,
            batch_size=self.embedder_batch_size, lr=self.embedder_lr,
            val_frac=self.embedder_val_frac, seed=self.seed if seed is None else seed)

    def forecaster_config(self, seed=None):
        return ForecasterConfig(
            hidden=self.forecaster_hidden, layers=self.forecaster_layers, epochs=self.forecaster_epochs,
            batch_size=self.forecaster_batch_size, lr=self.forecaster_lr,
            seed=self.seed if seed is None else seed)


def validate_config(config):
    validate_json(config.to_dict(), 'run_config', ConfigError)
    if config.embedder_width % config.embedder_heads:
        raise ConfigError('embedder_heads', f'embedder_width {config.embedder_width} is not divisible '
                                            f'by {config.embedder_heads} heads')
    return config


def load_config(path=None, overrides=None):
    """
    * Resolves the run configuration.
    * @param {string} path Optional config file
    * @param {dict} overrides Values from the command line; None entries are ignored
    * @return {RunConfig}
    """
    values = {key: default for key, (_, default) in KEYS.items()}
    if path:
        try:
            with open(path) as handle:
                text = handle.read()
        except OSError as error:
            raise ConfigError('config', f'cannot read {path}: {error}') from error
        for key, value in parse_config_text(text, path).items():
            values[key] = coerce(key, value)
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = coerce(key, value)
    return validate_config(RunConfig(values))


def write_snapshot(config, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, RESOLVED_NAME)
    with open(path, 'w') as handle:
        json.dump(config.to_dict(), handle, indent=2, sort_keys=True)
        handle.write('\n')
    logger.debug('wrote resolved configuration to %s', path)
    return path
