"""
The three networks of the adversarial autoencoder and the generation pipeline.

The encoder doubles as the generator of latent codes; the decoder maps latents
back to the [0, 1] feature space; the discriminator scores latents as drawn from
the standard-normal prior (1) or from the encoder (0).
"""
import logging
from dataclasses import asdict, dataclass, fields

import numpy as np

from .errors import ContractError, DimensionError
from .layers import GraphAttentionLayer, Linear, Module, ResidualFFN, SpectralConv1d
from .tensor import Tensor, avg_pool1d, leaky_relu, no_grad, sigmoid

logger = logging.getLogger(__name__)

VARIANTS = ('full', 'no_decoder', 'no_spatial_attention', 'no_temporal_attention',
            'no_encoder_conv', 'no_reconstruction_loss')


@dataclass
class ModelConfig:
    """ Architecture of a GAT-GAN model; N attention pairs, M feed-forward layers """
    tau: int
    features: int
    latent_dim: int = 16
    attention_pairs: int = 2
    ffn_depth: int = 2
    kernel_width: int = 3
    pool_window: int = 2
    noise_scale: float = 0.05
    slope: float = 0.2
    disc_hidden: int = 32
    spatial_attention: bool = True
    temporal_attention: bool = True
    encoder_conv: bool = True
    decoder: bool = True
    seed: int = 0

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, values):
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in values.items() if k in names})

    def for_variant(self, variant):
        """ Copy of this config with the component named by an ablation variant removed """
        if variant not in VARIANTS:
            raise ContractError(f'unknown variant {variant}; valid variants: {", ".join(VARIANTS)}')
        values = self.to_dict()
        if variant == 'no_decoder':
            values['decoder'] = False
        elif variant == 'no_spatial_attention':
            values['spatial_attention'] = False
        elif variant == 'no_temporal_attention':
            values['temporal_attention'] = False
        elif variant == 'no_encoder_conv':
            values['encoder_conv'] = False
        return ModelConfig(**values)


class AttentionStack(Module):
    """
    N alternating spatial/temporal graph attention layers over [K, tau, width].
    `residual` adds a skip connection around every layer, `skip` one around the whole stack.
    """

    def __init__(self, config, width, rng, residual=False, skip=False):
        super().__init__()
        self.skip = skip
        self.order = []
        for i in range(config.attention_pairs):
            if config.spatial_attention:
                self.add_module(f'spatial{i}', GraphAttentionLayer(
                    'spatial', config.tau, width, rng, config.slope, residual))
                self.order.append(f'spatial{i}')
            if config.temporal_attention:
                self.add_module(f'temporal{i}', GraphAttentionLayer(
                    'temporal', config.tau, width, rng, config.slope, residual))
                self.order.append(f'temporal{i}')

    def __call__(self, x):
        out = x
        for name in self.order:
            out = getattr(self, name)(out)
        if self.skip and self.order:
            return x + out
        return out


def _check_batch(x, steps, width, what):
    if x.ndim != 3 or x.shape[1] != steps or x.shape[2] != width:
        raise DimensionError(f'{what} expects [K, {steps}, {width}], got {list(x.shape)}')


class Encoder(Module):

    def __init__(self, config, rng):
        super().__init__()
        self.config = config
        latent = config.latent_dim
        if config.encoder_conv:
            self.conv_in = SpectralConv1d(config.features, latent, config.kernel_width, rng, slope=config.slope)
        else:
            self.project_in = Linear(config.features, latent, rng)
        self.attention = AttentionStack(config, latent, rng, skip=True)
        if config.encoder_conv:
            self.conv_out = SpectralConv1d(latent, latent, config.kernel_width, rng, slope=config.slope)
        self.ffn = ResidualFFN(latent, config.ffn_depth, rng, config.slope)

    def spectral_layers(self):
        return [layer for layer in (getattr(self, 'conv_in', None), getattr(self, 'conv_out', None)) if layer]

    def __call__(self, x):
        config = self.config
        _check_batch(x, config.tau, config.features, 'encoder')
        if config.encoder_conv:
            hidden = self.conv_in(x)
        else:
            hidden = leaky_relu(self.project_in(x), config.slope)
        hidden = self.attention(hidden)
        if config.encoder_conv:
            hidden = avg_pool1d(self.conv_out(hidden), config.pool_window, 1, 'same')
        return self.ffn(hidden)


class Decoder(Module):

    def __init__(self, config, rng):
        super().__init__()
        self.config = config
        self.attention = AttentionStack(config, config.latent_dim, rng, skip=True)
        self.ffn = ResidualFFN(config.latent_dim, config.ffn_depth, rng, config.slope)
        self.out = Linear(config.latent_dim, config.features, rng)

    def __call__(self, z):
        _check_batch(z, self.config.tau, self.config.latent_dim, 'decoder')
        return sigmoid(self.out(self.ffn(self.attention(z))))


class AffineDecoder(Module):
    """ Stand-in reconstruction path when the decoder is ablated: latent -> F affine map with sigmoid """

    def __init__(self, config, rng):
        super().__init__()
        self.config = config
        self.out = Linear(config.latent_dim, config.features, rng)

    def __call__(self, z):
        _check_batch(z, self.config.tau, self.config.latent_dim, 'decoder')
        return sigmoid(self.out(z))


class Discriminator(Module):

    def __init__(self, config, rng):
        super().__init__()
        self.config = config
        self.attention = AttentionStack(config, config.latent_dim, rng, residual=True)
        self.ffn = ResidualFFN(config.latent_dim, config.ffn_depth, rng, config.slope)
        self.collapse = Linear(config.tau * config.latent_dim, config.disc_hidden, rng)
        self.head = Linear(config.disc_hidden, 1, rng, zero_init=True)

    def __call__(self, z):
        config = self.config
        _check_batch(z, config.tau, config.latent_dim, 'discriminator')
        hidden = self.ffn(self.attention(z)).reshape(z.shape[0], config.tau * config.latent_dim)
        hidden = leaky_relu(self.collapse(hidden), config.slope)
        return sigmoid(self.head(hidden)).reshape(z.shape[0])


class GatGanModel(Module):
    """ Encoder (generator), decoder and discriminator with disjoint parameters """

    def __init__(self, config):
        super().__init__()
        self.config = config
        rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0]))
        self.encoder = Encoder(config, rng)
        self.decoder = Decoder(config, rng) if config.decoder else AffineDecoder(config, rng)
        self.discriminator = Discriminator(config, rng)
        self.epochs_trained = 0

    def networks(self):
        return {'encoder': self.encoder, 'decoder': self.decoder, 'discriminator': self.discriminator}

    def certify(self):
        """ Certifies the encoder's spectral layers, skipping any unchanged since their last certification """
        for layer in self.encoder.spectral_layers():
            layer.certify()


def parameter_report(model):
    """
    * Tabulates parameter shapes and counts per network.
    * @param {GatGanModel} model The model
    * @returns {dict} {'networks': {name: {'parameters': [...], 'count': n}}, 'total': n}
    """
    report = {'networks': {}, 'total': 0}
    for name, network in model.networks().items():
        entries = [{'name': pname, 'shape': list(param.shape), 'count': int(param.size)}
                   for pname, param in network.named_parameters()]
        count = sum(entry['count'] for entry in entries)
        report['networks'][name] = {'parameters': entries, 'count': count}
        report['total'] += count
    return report


def inject_noise(x, noise_scale, rng):
    """ Adds N(0, noise_scale^2) noise per element; the result is not clipped """
    if noise_scale < 0:
        raise ContractError(f'noise scale must be >= 0, got {noise_scale}')
    x = x if isinstance(x, Tensor) else Tensor(x)
    if noise_scale == 0:
        return Tensor(x.values)
    return x + Tensor(rng.normal(0.0, noise_scale, size=x.shape))


def encode(model, x_noisy):
    return model.encoder(x_noisy if isinstance(x_noisy, Tensor) else Tensor(x_noisy))


def decode(model, z):
    return model.decoder(z if isinstance(z, Tensor) else Tensor(z))


def discriminate(model, z):
    return model.discriminator(z if isinstance(z, Tensor) else Tensor(z))


def sample_prior(model, count, rng):
    if count < 1:
        raise ContractError(f'prior sample size must be >= 1, got {count}')
    config = model.config
    return Tensor(rng.standard_normal((count, config.tau, config.latent_dim)))


def generate(model, count, rng, mode='prior', source=None, allow_untrained=False):
    """
    * Produces synthetic windows in (0, 1).
    *
    * 'prior' decodes standard-normal latents; 'reconstruct' encodes noise-perturbed
    * windows from `source` and decodes them.
    * @param {GatGanModel} model The model, in any mode; it is restored afterwards
    * @param {int} count Number of sequences K
    * @param {np.random.Generator} rng Random stream for the prior or the noise
    * @param {str} mode 'prior' or 'reconstruct'
    * @param {np.ndarray} source Real windows [>= K, tau, F] for 'reconstruct'
    * @param {bool} allow_untrained Permit generation from a model never trained
    * @returns {Tensor} Tensor[K, tau, F]
    """
    if not model.epochs_trained and not allow_untrained:
        raise ContractError('model has not been trained; pass allow_untrained to generate anyway')
    if mode not in ('prior', 'reconstruct'):
        raise ContractError(f'unknown generation mode {mode}')
    training = model.training
    model.eval()
    try:
        with no_grad():
            if mode == 'prior':
                return decode(model, sample_prior(model, count, rng))
            if source is None or len(source) < count:
                raise ContractError(f'reconstruct mode needs at least {count} source windows')
            noisy = inject_noise(np.asarray(source)[:count], model.config.noise_scale, rng)
            return decode(model, encode(model, noisy))
    finally:
        model.train(training)
