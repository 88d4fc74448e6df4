"""
Losses, optimizer and the two-phase training procedure.

A step runs the reconstruction phase (encoder + decoder on L_r), then the
adversarial phase: the discriminator learns to tell prior samples from encoder
latents, and the encoder learns to fool it while still reconstructing.
"""
import hashlib
import logging
import time
from collections import OrderedDict
from dataclasses import asdict, dataclass, fields

import numpy as np

from .errors import ContractError, DimensionError, DivergenceError
from .model import decode, discriminate, encode, inject_noise, sample_prior
from .tensor import Tape, Tensor, backward, no_grad

logger = logging.getLogger(__name__)

LOG_EPS = 1e-12
LOSS_COLUMNS = ['epoch', 'L_r', 'L_gen', 'L_disc', 'disc_accuracy', 'seconds']


@dataclass
class TrainingConfig:
    batch_size: int = 32
    epochs: int = 200
    lr_encoder: float = 1e-3
    lr_decoder: float = 1e-3
    lr_discriminator: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    flip_prob: float = 0.05
    recon_weight: float = 1.0
    reconstruction_phase: bool = True
    seed: int = 0
    log_every: int = 10
    checkpoint_every: int = 50

    def __post_init__(self):
        for name in ('lr_encoder', 'lr_decoder', 'lr_discriminator'):
            if getattr(self, name) < 0:
                raise ContractError(f'{name} must be >= 0, got {getattr(self, name)}')
        if not 0 <= self.flip_prob <= 1:
            raise ContractError(f'flip_prob must lie in [0, 1], got {self.flip_prob}')
        if self.batch_size < 1:
            raise ContractError(f'batch_size must be >= 1, got {self.batch_size}')

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, values):
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in values.items() if k in names})

    def for_variant(self, variant):
        values = self.to_dict()
        if variant == 'no_reconstruction_loss':
            values['recon_weight'] = 0.0
            values['reconstruction_phase'] = False
        return TrainingConfig(**values)


@dataclass
class LossRecord:
    epoch: int
    reconstruction: float
    generator: float
    discriminator: float
    disc_accuracy: float
    seconds: float

    def to_row(self):
        return [self.epoch, self.reconstruction, self.generator, self.discriminator,
                self.disc_accuracy, self.seconds]


class OptimizerState:
    """ Adam moments per parameter name and the shared step counter """

    def __init__(self):
        self.step = 0
        self.moments = OrderedDict()

    def arrays(self, prefix):
        for name, (first, second) in self.moments.items():
            yield f'{prefix}{name}.m', first
            yield f'{prefix}{name}.v', second


class TrainingStreams:
    """ Independent random streams per purpose so a schedule change in one never shifts another """
    PURPOSES = ('shuffle', 'noise', 'flip', 'prior')

    def __init__(self, seed):
        children = np.random.SeedSequence([seed, 1]).spawn(len(self.PURPOSES))
        for purpose, child in zip(self.PURPOSES, children):
            setattr(self, purpose, np.random.default_rng(child))

    def state(self):
        return {purpose: getattr(self, purpose).bit_generator.state for purpose in self.PURPOSES}


def parameter_digest(module):
    """ sha256 over the names and values of a module's parameters """
    digest = hashlib.sha256()
    for name, param in module.named_parameters():
        digest.update(name.encode('utf-8'))
        digest.update(np.ascontiguousarray(param.values).tobytes())
    return digest.hexdigest()


def reconstruction_loss(x, x_bar):
    """
    * Mean over the batch of the per-sequence L2 norm of the reconstruction error.
    * @param {Tensor} x Real windows [K, tau, F]
    * @param {Tensor} x_bar Reconstructions [K, tau, F]
    * @returns {Tensor} Scalar loss
    """
    x = x if isinstance(x, Tensor) else Tensor(x)
    x_bar = x_bar if isinstance(x_bar, Tensor) else Tensor(x_bar)
    if x.shape != x_bar.shape:
        raise DimensionError(f'reconstruction shape {list(x_bar.shape)} does not match input {list(x.shape)}')
    axes = tuple(range(1, x.ndim))
    return ((x_bar - x) ** 2).sum(axes).sqrt().mean()


def flip_labels(role, flip_prob, rng):
    """ Swaps the real/fake role with probability flip_prob """
    if not 0 <= flip_prob <= 1:
        raise ContractError(f'flip probability must lie in [0, 1], got {flip_prob}')
    if role not in ('real', 'fake'):
        raise ContractError(f'unknown role {role}')
    if rng.random() < flip_prob:
        return 'fake' if role == 'real' else 'real'
    return role


def generator_loss(scores_posterior, recon, recon_weight=1.0):
    """ Non-saturating adversarial term -mean(log D(posterior)) plus the weighted reconstruction loss """
    adversarial = -(scores_posterior + LOG_EPS).log().mean()
    if recon_weight == 0:
        return adversarial
    return adversarial + recon * recon_weight


def discriminator_loss(scores_prior, scores_posterior):
    """ Binary cross-entropy with prior latents labelled 1 and encoder latents labelled 0 """
    return (-(scores_prior + LOG_EPS).log().mean()
            - (1.0 - scores_posterior + LOG_EPS).log().mean())


def adam_step(params, state, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """
    * Bias-corrected Adam update of every parameter holding a gradient; gradients
    * are cleared afterwards.
    * @param {iterable} params (name, Tensor) pairs
    * @param {OptimizerState} state Moments and step counter
    * @param {float} lr Learning rate
    """
    params = list(params)
    for name, param in params:
        if param.grad is not None and not np.all(np.isfinite(param.grad)):
            raise DivergenceError(f'non-finite gradient in parameter {name}')
    state.step += 1
    correction1 = 1 - beta1 ** state.step
    correction2 = 1 - beta2 ** state.step
    for name, param in params:
        grad = param.grad
        if grad is None:
            continue
        if name not in state.moments:
            state.moments[name] = (np.zeros_like(param.values), np.zeros_like(param.values))
        first, second = state.moments[name]
        first *= beta1
        first += (1 - beta1) * grad
        second *= beta2
        second += (1 - beta2) * grad ** 2
        param.values -= lr * (first / correction1) / (np.sqrt(second / correction2) + eps)
        param.grad = None


class Trainer:
    """ Optimizer state for the three networks of one model """

    def __init__(self, model, config):
        self.model = model
        self.config = config
        self.states = {name: OptimizerState() for name in model.networks()}
        self.streams = TrainingStreams(config.seed)

    def update(self, name, lr):
        network = self.model.networks()[name]
        config = self.config
        adam_step(network.named_parameters(), self.states[name], lr, config.beta1, config.beta2, config.adam_eps)

    def optimizer_arrays(self):
        for name, state in self.states.items():
            yield from state.arrays(f'{name}.')


def _finite(name, loss):
    value = loss.item() if isinstance(loss, Tensor) else float(loss)
    if not np.isfinite(value):
        raise DivergenceError(f'non-finite {name} loss')
    return value


def train_step(model, batch, trainer, on_phase=None):
    """
    * One reconstruction update followed by one adversarial update.
    * @param {GatGanModel} model The model, in training mode
    * @param {np.ndarray} batch Windows [K, tau, F]
    * @param {Trainer} trainer Optimizer states, config and random streams
    * @param {callable} on_phase Called with the phase name after each phase's update
    * @returns {LossRecord} Losses of this step (epoch 0, seconds 0)
    """
    config = trainer.config
    streams = trainer.streams
    x = Tensor(batch)
    count = x.shape[0]
    noise_scale = model.config.noise_scale
    if x.ndim != 3 or x.shape[1:] != (model.config.tau, model.config.features):
        raise DimensionError(f'batch {list(x.shape)} does not match model [K, {model.config.tau}, '
                             f'{model.config.features}]')

    # reconstruction phase
    if config.reconstruction_phase:
        with Tape():
            recon = reconstruction_loss(x, decode(model, encode(model, inject_noise(x, noise_scale, streams.noise))))
            recon_value = _finite('reconstruction', recon)
            backward(recon)
        trainer.update('encoder', config.lr_encoder)
        trainer.update('decoder', config.lr_decoder)
    else:
        with no_grad():
            recon_value = reconstruction_loss(x, decode(model, encode(model, x))).item()
    if on_phase:
        on_phase('reconstruction')

    # adversarial phase: discriminator
    with no_grad():
        posterior = encode(model, inject_noise(x, noise_scale, streams.noise)).detach()
    prior = sample_prior(model, count, streams.prior)
    flipped = flip_labels('real', config.flip_prob, streams.flip) == 'fake'
    with Tape():
        scores_prior = discriminate(model, prior)
        scores_posterior = discriminate(model, posterior)
        if flipped:
            disc_loss = discriminator_loss(scores_posterior, scores_prior)
        else:
            disc_loss = discriminator_loss(scores_prior, scores_posterior)
        disc_value = _finite('discriminator', disc_loss)
        backward(disc_loss)
    trainer.update('discriminator', config.lr_discriminator)
    accuracy = (np.sum(scores_prior.values > 0.5) + np.sum(scores_posterior.values < 0.5)) / (2.0 * count)
    if on_phase:
        on_phase('discriminator')

    # adversarial phase: encoder as generator
    with Tape():
        latent = encode(model, inject_noise(x, noise_scale, streams.noise))
        recon_term = 0.0
        if config.recon_weight:
            recon_term = reconstruction_loss(x, decode(model, latent))
        gen_loss = generator_loss(discriminate(model, latent), recon_term, config.recon_weight)
        gen_value = _finite('generator', gen_loss)
        backward(gen_loss)
    trainer.update('encoder', config.lr_encoder)
    model.decoder.zero_grad()
    model.discriminator.zero_grad()
    if on_phase:
        on_phase('generator')

    return LossRecord(0, recon_value, gen_value, disc_value, float(accuracy), 0.0)


def train_loop(model, dataset, config, checkpoint=None, trainer=None):
    """
    * Trains for config.epochs epochs of shuffled minibatches.
    *
    * `checkpoint(tag, trainer, records)` is called every config.checkpoint_every
    * epochs with tag 'epoch-<n>' and whenever the epoch's L_r improves with tag
    * 'best'; its return value is remembered as the last good checkpoint.
    * @param {GatGanModel} model The model to train in place
    * @param {np.ndarray|WindowedDataset} dataset Windows [K, tau, F]
    * @param {TrainingConfig} config Training hyper-parameters
    * @returns {tuple} (model, list of per-epoch LossRecord)
    """
    windows = np.asarray(getattr(dataset, 'windows', dataset), dtype=float)
    if windows.ndim != 3 or len(windows) == 0:
        raise ContractError('training needs a non-empty [K, tau, F] dataset')
    trainer = trainer or Trainer(model, config)
    records = []
    best = np.inf
    last_good = None
    model.train()
    for epoch in range(1, config.epochs + 1):
        started = time.perf_counter()
        order = trainer.streams.shuffle.permutation(len(windows))
        steps = []
        try:
            for start in range(0, len(order), config.batch_size):
                steps.append(train_step(model, windows[order[start:start + config.batch_size]], trainer))
        except DivergenceError as error:
            logger.error('training diverged at epoch %d: %s', epoch, error)
            raise DivergenceError(f'{error} at epoch {epoch}', checkpoint=last_good) from error
        model.epochs_trained += 1
        record = LossRecord(
            epoch,
            float(np.mean([s.reconstruction for s in steps])),
            float(np.mean([s.generator for s in steps])),
            float(np.mean([s.discriminator for s in steps])),
            float(np.mean([s.disc_accuracy for s in steps])),
            time.perf_counter() - started)
        records.append(record)
        if config.log_every and epoch % config.log_every == 0:
            logger.info('epoch %d: L_r=%.5f L_gen=%.5f L_disc=%.5f accuracy=%.3f',
                        epoch, record.reconstruction, record.generator, record.discriminator,
                        record.disc_accuracy)
        if checkpoint is not None:
            if record.reconstruction < best:
                best = record.reconstruction
                last_good = checkpoint('best', trainer, records) or last_good
            if config.checkpoint_every and epoch % config.checkpoint_every == 0:
                last_good = checkpoint(f'epoch-{epoch}', trainer, records) or last_good
    return model, records
