"""
EvalReport: one row per (dataset, tau, variant, metric) cell holding the
mean and standard deviation over repeated runs, serialized as CSV and as JSON
nested dataset -> tau -> variant -> metric.
"""
import json
import logging
from dataclasses import dataclass, field

import pandas as pd

from .errors import ContractError
from .metrics import aggregate_runs, pearson_corr
from .util import assign_json_path_value, validate_json

logger = logging.getLogger(__name__)

COLUMNS = ['dataset', 'tau', 'variant', 'metric', 'mean', 'std', 'n_runs']
METRICS = ('ftd', 'predictive_mae')


@dataclass
class EvalRow:
    dataset: str
    tau: int
    variant: str
    metric: str
    mean: float
    std: float
    n_runs: int
    runs: list = field(default_factory=list)

    def __post_init__(self):
        if self.std < 0 or self.n_runs < 1:
            raise ContractError(f'invalid report row: std={self.std} n_runs={self.n_runs}')

    @property
    def cell(self):
        return (self.dataset, self.tau, self.variant)


class EvalReport:

    def __init__(self, rows=None):
        self.rows = list(rows or [])
        self.correlation = None

    def add_runs(self, dataset, tau, variant, metric, scores):
        """ Aggregates per-run scores into a row and appends it """
        if metric not in METRICS:
            raise ContractError(f'unknown metric {metric}')
        mean, std = aggregate_runs(scores)
        row = EvalRow(str(dataset), int(tau), variant, metric, mean, std, len(scores), [float(s) for s in scores])
        self.rows.append(row)
        logger.info('%s tau=%d %s %s: %.6f +/- %.6f (%d runs)', dataset, tau, variant, metric, mean, std, len(scores))
        return row

    def extend(self, other):
        self.rows.extend(other.rows)
        return self

    def correlate(self):
        """
        * Pearson r between FTD and predictive MAE means over the cells holding both.
        * Stored on the report; None when fewer than two cells qualify or a side is constant.
        """
        by_cell = {}
        for row in self.rows:
            by_cell.setdefault(row.cell, {})[row.metric] = row.mean
        pairs = [(values['ftd'], values['predictive_mae']) for values in by_cell.values() if len(values) == 2]
        self.correlation = None
        if len(pairs) < 2:
            return None
        try:
            r = pearson_corr([p[0] for p in pairs], [p[1] for p in pairs])
        except ContractError as error:
            logger.warning('FTD/MAE correlation skipped: %s', error)
            return None
        self.correlation = {'pearson_r': r, 'cells': len(pairs)}
        logger.info('FTD/MAE Pearson r = %.4f over %d cells', r, len(pairs))
        return r

    def to_frame(self):
        return pd.DataFrame([[getattr(row, column) for column in COLUMNS] for row in self.rows], columns=COLUMNS)

    def to_json(self):
        document = {'results': {}, 'correlation': self.correlation}
        for row in self.rows:
            document = assign_json_path_value(
                document, ['results', row.dataset, row.tau, row.variant, row.metric],
                {'mean': row.mean, 'std': row.std, 'n_runs': row.n_runs, 'runs': row.runs})
        validate_json(document, 'eval_report')
        return document

    def write(self, csv_path, json_path):
        self.to_frame().to_csv(csv_path, index=False, float_format='%.10g')
        with open(json_path, 'w') as handle:
            json.dump(self.to_json(), handle, indent=2, sort_keys=True)
            handle.write('\n')
        logger.info('wrote report to %s and %s', csv_path, json_path)

    def summary(self):
        """ Variant x metric table of mean +/- std, one block per dataset and tau """
        lines = []
        frame = self.to_frame()
        for (dataset, tau), group in frame.groupby(['dataset', 'tau'], sort=False):
            lines.append(f'{dataset} tau={tau}')
            for _, row in group.iterrows():
                lines.append(f'  {row["variant"]:<24} {row["metric"]:<15} {row["mean"]:.4f} +/- {row["std"]:.4f}')
        if self.correlation:
            lines.append(f'FTD/MAE Pearson r = {self.correlation["pearson_r"]:.4f} '
                         f'over {self.correlation["cells"]} cells')
        return '\n'.join(lines)

