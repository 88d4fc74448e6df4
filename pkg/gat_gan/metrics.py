"""
Evaluation metrics: the Frechet transformer distance between real and
synthetic windows, the train-on-synthetic / test-on-real predictive score,
and the statistics used to aggregate and correlate repeated runs.
"""
import logging
import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from .errors import ContractError, DimensionError
from .layers import LstmStack, TransformerEmbedder, embed
from .linalg import trace_sqrt_product
from .tensor import Tape, Tensor, backward, no_grad
from .training import OptimizerState, adam_step

logger = logging.getLogger(__name__)

SYMMETRY_TOL = 1e-10
PSD_TOL = 1e-8
EMBED_CHUNK = 256


@dataclass
class GaussianMoments:
    mean: np.ndarray
    cov: np.ndarray

    @property
    def dim(self):
        return self.mean.shape[0]

    def validate(self):
        """ Raises ContractError unless cov is square, matches mean and is symmetric within tolerance """
        if self.cov.shape != (self.dim, self.dim):
            raise DimensionError(f'covariance {list(self.cov.shape)} does not match mean of length {self.dim}')
        asymmetry = np.max(np.abs(self.cov - self.cov.T)) if self.dim else 0.0
        if asymmetry > SYMMETRY_TOL:
            raise ContractError(f'covariance is not symmetric (max |m2 - m2^T| = {asymmetry:.3e})')
        return self


@dataclass
class EmbedderConfig:
    width: int = 32
    heads: int = 4
    blocks: int = 2
    positional: bool = True
    epochs: int = 50
    batch_size: int = 64
    lr: float = 1e-3
    val_frac: float = 0.1
    seed: int = 0

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, values):
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in values.items() if k in names})


@dataclass
class ForecasterConfig:
    hidden: int = 64
    layers: int = 2
    epochs: int = 300
    batch_size: int = 64
    lr: float = 1e-3
    seed: int = 0


def _windows(dataset):
    windows = np.asarray(getattr(dataset, 'windows', dataset), dtype=float)
    if windows.ndim != 3:
        raise DimensionError(f'expected windows [K, tau, F], got {list(windows.shape)}')
    return windows


def _fit_epoch(module, count, loss_fn, batch_size, lr, rng, state):
    """ One Adam pass over shuffled minibatches; loss_fn(batch_indices) builds the loss on the active tape """
    params = list(module.named_parameters())
    module.train()
    order = rng.permutation(count)
    for start in range(0, count, batch_size):
        with Tape():
            backward(loss_fn(order[start:start + batch_size]))
        adam_step(params, state, lr)


def validation_mse(embedder, windows):
    """ Mean squared error of the regression head predicting the last step from the steps before it """
    windows = _windows(windows)
    mode = embedder.training
    embedder.eval()
    try:
        with no_grad():
            prediction = embedder(Tensor(windows[:, :-1]))
    finally:
        embedder.train(mode)
    return float(np.mean((prediction.values - windows[:, -1]) ** 2))


def train_embedder(real_data, cfg=None):
    """
    * Trains a transformer embedder on last-step regression over real windows.
    * @param {WindowedDataset|np.ndarray} real_data Real windows [K, tau, F]
    * @param {EmbedderConfig} cfg Capacity and training schedule
    * @returns {tuple} (TransformerEmbedder, list of {'epoch', 'train_mse', 'val_mse'})
    """
    cfg = cfg or EmbedderConfig()
    windows = _windows(real_data)
    if windows.shape[1] < 2:
        raise ContractError(f'embedder training needs tau >= 2, got {windows.shape[1]}')
    if len(windows) < 2:
        raise ContractError('embedder training needs at least two windows')
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 2]))
    embedder = TransformerEmbedder(windows.shape[2], rng, cfg.width, cfg.heads, cfg.blocks, cfg.positional)
    order = rng.permutation(len(windows))
    n_val = min(max(1, int(round(cfg.val_frac * len(windows)))), len(windows) - 1)
    train, val = windows[np.sort(order[n_val:])], windows[np.sort(order[:n_val])]
    inputs, targets = train[:, :-1], train[:, -1]

    def loss_fn(index):
        return ((embedder(Tensor(inputs[index])) - Tensor(targets[index])) ** 2).mean()

    state = OptimizerState()
    history = [{'epoch': 0, 'train_mse': validation_mse(embedder, train), 'val_mse': validation_mse(embedder, val)}]
    for epoch in range(1, cfg.epochs + 1):
        _fit_epoch(embedder, len(inputs), loss_fn, cfg.batch_size, cfg.lr, rng, state)
        history.append({'epoch': epoch, 'train_mse': validation_mse(embedder, train),
                        'val_mse': validation_mse(embedder, val)})
        logger.debug('embedder epoch %d: val_mse=%.6f', epoch, history[-1]['val_mse'])
    embedder.eval()
    embedder.trained = True
    logger.info('embedder trained: val_mse %.6f -> %.6f', history[0]['val_mse'], history[-1]['val_mse'])
    return embedder, history


def fit_moments(embeddings):
    """
    * Sample mean and unbiased sample covariance.
    * @param {Tensor|np.ndarray} embeddings [K, d_e] with K >= 2
    * @returns {GaussianMoments}
    """
    values = embeddings.values if isinstance(embeddings, Tensor) else np.asarray(embeddings, dtype=float)
    if values.ndim != 2:
        raise DimensionError(f'embeddings must be [K, d_e], got {list(values.shape)}')
    if values.shape[0] < 2:
        raise ContractError(f'covariance needs at least 2 rows, got {values.shape[0]}')
    cov = np.atleast_2d(np.cov(values, rowvar=False, ddof=1))
    return GaussianMoments(values.mean(axis=0), (cov + cov.T) / 2.0)


def frechet_distance(a, b):
    """ ||m1_a - m1_b||^2 + Tr(m2_a + m2_b - 2 sqrt(m2_a m2_b)), clamped to >= 0 """
    a.validate()
    b.validate()
    if a.dim != b.dim:
        raise DimensionError(f'moment dimensions differ: {a.dim} vs {b.dim}')
    diff = a.mean - b.mean
    distance = float(diff @ diff + np.trace(a.cov) + np.trace(b.cov) - 2.0 * trace_sqrt_product(a.cov, b.cov))
    if distance < -PSD_TOL:
        logger.warning('frechet distance %.3e below zero; clamped', distance)
    return max(distance, 0.0)


def _embed_all(embedder, windows):
    chunks = [embed(embedder, Tensor(windows[i:i + EMBED_CHUNK, :-1])).values
              for i in range(0, len(windows), EMBED_CHUNK)]
    return np.concatenate(chunks, axis=0)


def ftd_score(real, synthetic, embedder, rng=None):
    """
    * Frechet distance between Gaussian fits of the embedded real and synthetic
    * windows. Both populations are cut to the same size K = min(K_real, K_syn);
    * with an rng the K windows are drawn at random, otherwise the first K are used.
    * @param {np.ndarray} real Real windows [K_r, tau, F]
    * @param {np.ndarray} synthetic Synthetic windows [K_s, tau, F]
    * @param {TransformerEmbedder} embedder Trained embedder
    * @param {np.random.Generator} rng Optional sub-population stream
    * @returns {float}
    """
    real, synthetic = _windows(real), _windows(synthetic)
    if real.shape[1:] != synthetic.shape[1:]:
        raise DimensionError(f'real windows {list(real.shape[1:])} and synthetic windows '
                             f'{list(synthetic.shape[1:])} differ in [tau, F]')
    count = min(len(real), len(synthetic))
    if rng is not None:
        real = real[np.sort(rng.choice(len(real), count, replace=False))]
        synthetic = synthetic[np.sort(rng.choice(len(synthetic), count, replace=False))]
    else:
        real, synthetic = real[:count], synthetic[:count]
    return frechet_distance(fit_moments(_embed_all(embedder, real)), fit_moments(_embed_all(embedder, synthetic)))


def canonical_order(windows):
    """ Windows sorted lexicographically by their values; makes training independent of input order """
    flat = windows.reshape(len(windows), -1)
    return windows[np.lexsort(flat.T[::-1])]


def train_forecaster(windows, cfg=None):
    """ Two-layer LSTM trained on teacher-forced next-step MSE over every position of the windows """
    cfg = cfg or ForecasterConfig()
    windows = canonical_order(_windows(windows))
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 3]))
    forecaster = LstmStack(windows.shape[2], rng, cfg.hidden, cfg.layers)
    inputs, targets = windows[:, :-1], windows[:, 1:]

    def loss_fn(index):
        return ((forecaster.teacher_forced(Tensor(inputs[index])) - Tensor(targets[index])) ** 2).mean()

    state = OptimizerState()
    for _ in range(cfg.epochs):
        _fit_epoch(forecaster, len(inputs), loss_fn, cfg.batch_size, cfg.lr, rng, state)
    forecaster.eval()
    return forecaster


def mean_absolute_error(prediction, truth):
    """ Per-element mean |prediction - truth|, i.e. the double sum normalized by K * p * F """
    prediction, truth = np.asarray(prediction, dtype=float), np.asarray(truth, dtype=float)
    if prediction.shape != truth.shape:
        raise DimensionError(f'prediction {list(prediction.shape)} does not match truth {list(truth.shape)}')
    return float(np.mean(np.abs(prediction - truth)))


def forecast_mae(forecaster, windows, horizon):
    """ Rolls the forecaster out from the first tau - p steps of each window and scores the last p """
    windows = canonical_order(_windows(windows))
    with no_grad():
        prediction = forecaster.forecast(Tensor(windows[:, :-horizon]), horizon)
    return mean_absolute_error(prediction.values, windows[:, -horizon:])


def predictive_score(real_test, synthetic_train, p=8, cfg=None):
    """
    * Train on synthetic, test on real.
    * @param {np.ndarray} real_test Real test windows [K, tau, F]
    * @param {np.ndarray} synthetic_train Synthetic windows [K', tau, F]
    * @param {int} p Prediction horizon
    * @param {ForecasterConfig} cfg Forecaster capacity and training schedule
    * @returns {float} MAE per element of the p forecast steps
    """
    real_test, synthetic_train = _windows(real_test), _windows(synthetic_train)
    if real_test.shape[1:] != synthetic_train.shape[1:]:
        raise DimensionError(f'real windows {list(real_test.shape[1:])} and synthetic windows '
                             f'{list(synthetic_train.shape[1:])} differ in [tau, F]')
    if real_test.shape[1] <= p:
        raise ContractError(f'predictive score needs tau > p, got tau={real_test.shape[1]} p={p}')
    forecaster = train_forecaster(synthetic_train, cfg)
    return forecast_mae(forecaster, real_test, p)


def pearson_corr(xs, ys):
    xs, ys = np.asarray(xs, dtype=float), np.asarray(ys, dtype=float)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise DimensionError(f'pearson_corr needs equal-length sequences, got {len(xs)} and {len(ys)}')
    if len(xs) < 2:
        raise ContractError('pearson_corr needs at least two points')
    dx, dy = xs - xs.mean(), ys - ys.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0 or syy == 0:
        raise ContractError('pearson_corr is undefined for a zero-variance sequence')
    return float(np.clip((dx @ dy) / math.sqrt(sxx * syy), -1.0, 1.0))


def aggregate_runs(per_run_scores):
    """ (mean, population std) of per-run scores, exactly rounded so any order gives the same result """
    scores = [float(s) for s in per_run_scores]
    if not scores:
        raise ContractError('aggregate_runs needs at least one run')
    mean = math.fsum(scores) / len(scores)
    std = math.sqrt(math.fsum((s - mean) ** 2 for s in scores) / len(scores))
    return mean, std
