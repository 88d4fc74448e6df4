"""
Data ingestion and dataset construction: CSV series, min-max normalization,
sliding windows, train/test splits and seeded toy signals.
"""
import logging
import re
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd

from .errors import ContractError, DataError, DimensionError

logger = logging.getLogger(__name__)

HEADER_MODES = ('auto', 'present', 'absent')
SPLIT_MODES = ('chronological', 'shuffled')
TOY_KINDS = ('coupled_sines', 'ar_process')
NA_TOKENS = ('', 'nan', 'NaN', 'NAN', 'NA', 'N/A', 'null', 'NULL')
RAGGED_PATTERN = re.compile(r'Expected (\d+) fields in line (\d+), saw (\d+)')

SINE_PERIOD = 12
SINE_OFFSET = 0.3
HARMONIC_WEIGHT = 0.5
AR_DIAGONAL = 0.8
AR_COUPLING = 0.1
AR_BURN_IN = 100


@dataclass
class RawSeries:
    values: np.ndarray
    feature_names: list
    source: str = ''
    dropped_rows: int = 0

    @property
    def steps(self):
        return self.values.shape[0]

    @property
    def features(self):
        return self.values.shape[1]


@dataclass
class NormalizationParams:
    minimum: np.ndarray
    maximum: np.ndarray
    feature_names: list = field(default_factory=list)

    @property
    def degenerate(self):
        return self.maximum == self.minimum

    def to_dict(self):
        return {'minimum': self.minimum.tolist(), 'maximum': self.maximum.tolist(),
                'degenerate': self.degenerate.tolist(), 'feature_names': list(self.feature_names)}

    @classmethod
    def from_dict(cls, values):
        return cls(np.asarray(values['minimum'], dtype=float), np.asarray(values['maximum'], dtype=float),
                   list(values.get('feature_names', [])))


@dataclass
class WindowedDataset:
    windows: np.ndarray
    tau: int
    stride: int
    params: NormalizationParams = None
    split: str = 'all'
    starts: np.ndarray = None

    def __post_init__(self):
        if self.starts is None:
            self.starts = np.arange(len(self.windows)) * self.stride

    def __len__(self):
        return len(self.windows)

    @property
    def features(self):
        return self.windows.shape[2]


def _read_tokens(path):
    """ Every physical line of the file as stripped string cells, indexed by line number; blank lines dropped """
    try:
        frame = pd.read_csv(path, header=None, dtype=str, keep_default_na=False, skip_blank_lines=False)
    except FileNotFoundError as error:
        raise DataError(f'{path}: no such file') from error
    except pd.errors.EmptyDataError as error:
        raise DataError(f'{path}: empty file') from error
    except pd.errors.ParserError as error:
        match = RAGGED_PATTERN.search(str(error))
        if match is None:
            raise DataError(f'{path}: {error}') from error
        width, line, found = match.groups()
        raise DataError(f'{path}: ragged row at line {line}: expected {width} fields, found {found}') from error
    frame.index = frame.index + 1
    frame = frame.dropna(how='all')
    if frame.empty:
        raise DataError(f'{path}: empty file')
    short = frame.isna().any(axis=1)
    if short.any():
        line = short.idxmax()
        raise DataError(f'{path}: ragged row at line {line}: expected {frame.shape[1]} fields, '
                        f'found {int(frame.loc[line].notna().sum())}')
    return frame.apply(lambda column: column.str.strip())


def load_csv(path, header_mode='auto'):
    """
    * Reads a CSV whose rows are time steps and whose columns are features.
    *
    * Rows holding a missing value are dropped and counted. Blank lines are
    * skipped; reported line numbers are physical lines of the file.
    * @param {str} path CSV file
    * @param {str} header_mode 'auto' detects a non-numeric first row, 'present' or 'absent'
    * @returns {RawSeries}
    """
    if header_mode not in HEADER_MODES:
        raise ContractError(f'header_mode must be one of {", ".join(HEADER_MODES)}, got {header_mode}')
    tokens = _read_tokens(path)
    numbers = tokens.apply(pd.to_numeric, errors='coerce')
    bad = numbers.isna() & ~tokens.isin(NA_TOKENS)

    has_header = header_mode == 'present' or (header_mode == 'auto' and bool(bad.iloc[0].any()))
    if has_header:
        names = tokens.iloc[0].tolist()
        tokens, numbers, bad = tokens.iloc[1:], numbers.iloc[1:], bad.iloc[1:]
    else:
        names = [f'feature_{i}' for i in range(tokens.shape[1])]
    if tokens.empty:
        raise DataError(f'{path}: no data rows')

    rows, cols = np.nonzero(bad.to_numpy())
    if len(rows):
        row, col = rows[0], cols[0]
        raise DataError(f'{path}: non-numeric cell {tokens.iat[row, col]!r} at line {bad.index[row]}, '
                        f'column {col + 1}')

    values = numbers.to_numpy(dtype=float)
    missing = np.any(~np.isfinite(values), axis=1)
    dropped = int(missing.sum())
    if dropped:
        logger.warning('%s: dropped %d row(s) with missing values', path, dropped)
    values = values[~missing]
    if len(values) < 2:
        raise DataError(f'{path}: at least two complete rows are required, found {len(values)}')
    return RawSeries(values, names, str(path), dropped)


def apply_normalization(values, params):
    """ (v - min) / (max - min) per feature; degenerate features map to 0.5; results are clipped to [0, 1] """
    values = np.asarray(values, dtype=float)
    if values.shape[-1] != len(params.minimum):
        raise DimensionError(f'{values.shape[-1]} features do not match normalization params for '
                             f'{len(params.minimum)}')
    span = params.maximum - params.minimum
    degenerate = span == 0
    scaled = (values - params.minimum) / np.where(degenerate, 1.0, span)
    scaled = np.where(degenerate, 0.5, scaled)
    return np.clip(scaled, 0.0, 1.0)


def minmax_normalize(raw, stats_rows=None):
    """
    * Per-feature min-max scaling to [0, 1].
    * @param {RawSeries} raw Series to scale
    * @param {int} stats_rows Compute min/max on the first stats_rows steps only
    * @returns {tuple} (RawSeries, NormalizationParams)
    """
    if raw.steps < 1:
        raise ContractError('normalization needs at least one time step')
    stats = raw.values if stats_rows is None else raw.values[:stats_rows]
    params = NormalizationParams(stats.min(axis=0), stats.max(axis=0), list(raw.feature_names))
    flagged = [name for name, flat in zip(raw.feature_names, params.degenerate) if flat]
    if flagged:
        logger.warning('degenerate (constant) features mapped to 0.5: %s', ', '.join(map(str, flagged)))
    return replace(raw, values=apply_normalization(raw.values, params)), params


def denormalize(x, params):
    """ Inverse of the min-max map: v * (max - min) + min per feature """
    values = np.asarray(getattr(x, 'values', x), dtype=float)
    if values.shape[-1] != len(params.minimum):
        raise ContractError(f'{values.shape[-1]} features do not match normalization params for '
                            f'{len(params.minimum)}')
    return values * (params.maximum - params.minimum) + params.minimum


def window(x, tau, stride=1, params=None):
    """
    * Overlapping windows of length tau taken every `stride` steps.
    * @param {RawSeries|np.ndarray} x Series [T, F]
    * @returns {WindowedDataset} K = floor((T - tau) / stride) + 1 windows
    """
    values = np.asarray(getattr(x, 'values', x), dtype=float)
    if values.ndim != 2:
        raise DimensionError(f'window expects a [T, F] series, got {list(values.shape)}')
    if stride < 1:
        raise ContractError(f'stride must be >= 1, got {stride}')
    if tau < 1 or tau > len(values):
        raise ContractError(f'window length {tau} must lie in [1, {len(values)}]')
    views = np.lib.stride_tricks.sliding_window_view(values, tau, axis=0)[::stride]
    windows = np.ascontiguousarray(views.transpose(0, 2, 1))
    return WindowedDataset(windows, tau, stride, params)


def split(ds, train_frac, mode='chronological', seed=0):
    """
    * Disjoint train/test split of a windowed dataset.
    *
    * Chronological mode places the boundary at the start of the first test
    * window and drops earlier windows that reach past it, so no source time
    * step appears on both sides.
    * @returns {tuple} (train WindowedDataset, test WindowedDataset)
    """
    if not 0 < train_frac < 1:
        raise ContractError(f'train_frac must lie strictly between 0 and 1, got {train_frac}')
    if mode not in SPLIT_MODES:
        raise ContractError(f'split mode must be one of {", ".join(SPLIT_MODES)}, got {mode}')
    count = len(ds)
    n_train = int(round(train_frac * count))
    if mode == 'chronological':
        if n_train >= count:
            raise ContractError(f'split of {count} windows at {train_frac} leaves the test side empty')
        boundary = ds.starts[n_train]
        train_index = np.flatnonzero(ds.starts + ds.tau <= boundary)
        test_index = np.arange(n_train, count)
        straddling = n_train - len(train_index)
        if straddling:
            logger.debug('chronological split dropped %d window(s) spanning the boundary', straddling)
    else:
        order = np.random.default_rng(seed).permutation(count)
        train_index, test_index = np.sort(order[:n_train]), np.sort(order[n_train:])
    if not len(train_index) or not len(test_index):
        raise ContractError(f'split of {count} windows at {train_frac} ({mode}) leaves a side empty')

    def side(index, tag):
        return WindowedDataset(ds.windows[index], ds.tau, ds.stride, ds.params, tag, ds.starts[index])

    return side(train_index, 'train'), side(test_index, 'test')


def _coupled_sines(steps, features, rng):
    t = np.arange(steps)[:, None]
    phase = rng.uniform(0.0, 2 * np.pi)
    amplitude = rng.uniform(0.8, 1.2, size=features)
    angle = 2 * np.pi * t / SINE_PERIOD + phase + SINE_OFFSET * np.arange(features)
    return amplitude * (np.sin(angle) + HARMONIC_WEIGHT * np.sin(2 * angle))


def _ar_process(steps, features, rng):
    coupling = AR_DIAGONAL * np.eye(features) + AR_COUPLING * np.roll(np.eye(features), 1, axis=1)
    state = np.zeros(features)
    series = np.empty((steps, features))
    for t in range(AR_BURN_IN + steps):
        state = coupling @ state + rng.standard_normal(features)
        if t >= AR_BURN_IN:
            series[t - AR_BURN_IN] = state
    return series


def toy_generator(kind, K, tau, F, noise=0.0, seed=0, stride=1):
    """
    * Seeded synthetic dataset with spatial and temporal structure.
    *
    * coupled_sines: one shared random phase, per-feature amplitude and a fixed
    * per-feature phase offset, plus a second harmonic. ar_process: VAR(1) with
    * diagonal persistence and a ring coupling each feature to the next.
    * Observation noise N(0, noise^2) is added before min-max scaling.
    * @returns {WindowedDataset} K windows of [tau, F] in [0, 1]
    """
    if kind not in TOY_KINDS:
        raise ContractError(f'toy kind must be one of {", ".join(TOY_KINDS)}, got {kind}')
    if F < 2:
        raise ContractError(f'{kind} needs at least 2 features, got {F}')
    if K < 1 or tau < 1:
        raise ContractError(f'toy dataset needs K >= 1 and tau >= 1, got K={K} tau={tau}')
    rng = np.random.default_rng(np.random.SeedSequence([seed, 4]))
    steps = (K - 1) * stride + tau
    series = _coupled_sines(steps, F, rng) if kind == 'coupled_sines' else _ar_process(steps, F, rng)
    if noise:
        series = series + rng.normal(0.0, noise, size=series.shape)
    raw = RawSeries(series, [f'{kind}_{i}' for i in range(F)], f'toy:{kind}')
    normalized, params = minmax_normalize(raw)
    return window(normalized, tau, stride, params)


def windows_to_frame(windows, feature_names=None):
    """ Stacks [K, tau, F] windows into K * tau rows with one column per feature """
    windows = np.asarray(windows, dtype=float)
    names = feature_names or [f'feature_{i}' for i in range(windows.shape[2])]
    return pd.DataFrame(windows.reshape(-1, windows.shape[2]), columns=names)


def export_csv(windows, path, feature_names=None):
    windows_to_frame(windows, feature_names).to_csv(path, index=False, float_format='%.17g')
    logger.info('wrote %d sequence(s) to %s', len(windows), path)
