"""
Tests for gat_gan evaluation reports
"""
import json
import os
import tempfile
import unittest

import pandas as pd

from gat_gan.errors import ContractError
from gat_gan.report import COLUMNS, EvalReport


class Test(unittest.TestCase):
    """ Test class """

    def report(self):
        report = EvalReport()
        for tau, variant, ftd, mae in ((16, 'full', [1.0, 3.0], [0.1, 0.1]),
                                       (16, 'no_decoder', [4.0, 4.0], [0.2, 0.3]),
                                       (64, 'full', [2.0], [0.15])):
            report.add_runs('toy:coupled_sines', tau, variant, 'ftd', ftd)
            report.add_runs('toy:coupled_sines', tau, variant, 'predictive_mae', mae)
        return report

    def test_rows_aggregate_runs(self):
        """ Test each row carries mean, population std and the run count """
        row = self.report().rows[0]
        self.assertEqual((row.mean, row.std, row.n_runs), (2.0, 1.0, 2))
        self.assertEqual(row.runs, [1.0, 3.0])
        with self.assertRaises(ContractError):
            EvalReport().add_runs('toy', 16, 'full', 'accuracy', [1.0])

    def test_json_nests_by_dataset_tau_variant_metric(self):
        """ Test the JSON document nests results and validates """
        document = self.report().to_json()
        cell = document['results']['toy:coupled_sines']['16']['no_decoder']
        self.assertEqual(cell['ftd'], {'mean': 4.0, 'std': 0.0, 'n_runs': 2, 'runs': [4.0, 4.0]})
        self.assertEqual(set(document['results']['toy:coupled_sines']), {'16', '64'})
        self.assertIsNone(document['correlation'])

    def test_correlation_across_cells(self):
        """ Test Pearson r is computed over cells holding both metrics """
        report = self.report()
        r = report.correlate()
        self.assertGreater(r, 0.9)
        self.assertEqual(report.to_json()['correlation'], {'pearson_r': r, 'cells': 3})

    def test_correlation_needs_two_cells(self):
        """ Test a single cell leaves the correlation unset """
        report = EvalReport()
        report.add_runs('toy', 16, 'full', 'ftd', [1.0])
        report.add_runs('toy', 16, 'full', 'predictive_mae', [0.5])
        self.assertIsNone(report.correlate())

    def test_write_csv_and_json(self):
        """ Test the CSV has one row per cell and metric and the JSON reloads """
        report = self.report()
        with tempfile.TemporaryDirectory() as tmp:
            csv_path, json_path = os.path.join(tmp, 'report.csv'), os.path.join(tmp, 'report.json')
            report.write(csv_path, json_path)
            frame = pd.read_csv(csv_path)
            with open(json_path) as handle:
                document = json.load(handle)
        self.assertEqual(list(frame.columns), COLUMNS)
        self.assertEqual(len(frame), 6)
        self.assertEqual(document, report.to_json())
        self.assertIn('no_decoder', report.summary())
