"""Tests for ewsrobust.plotting."""

import os

from absl.testing import absltest

from ewsrobust import analysis
from ewsrobust import labels
from ewsrobust import metrics_log
from ewsrobust import plotting


def _Bytes(path):
  with open(path, 'rb') as f:
    return f.read()


class PlottingTest(absltest.TestCase):

  def setUp(self):
    super().setUp()
    self.out_dir = self.create_tempdir().full_path

  def _Path(self, name):
    return os.path.join(self.out_dir, name)

  def testReplotIsByteIdentical(self):
    distributions = [
        ('vanilla', analysis.DistributionSummary([0.2, 0.4, 0.5], 0.6)),
        ('ews', analysis.DistributionSummary([0.5, 0.55, 0.6], 0.65)),
    ]
    first = plotting.PlotSubnetDistributions(distributions,
                                             self._Path('a.png'))
    second = plotting.PlotSubnetDistributions(distributions,
                                              self._Path('b.png'))
    self.assertEqual(_Bytes(first), _Bytes(second))
    self.assertTrue(_Bytes(first).startswith(b'\x89PNG'))

  def testOtherPlots(self):
    report = analysis.BlockVulnerabilityReport(
        full_error=10.0, width=0.5,
        blocks=[analysis.BlockVulnerabilityEntry(0, False, [20.0]),
                analysis.BlockVulnerabilityEntry(1, True, [60.0])])
    comparison = analysis.StrategyComparison(
        accuracies={'uniform': [0.5], 'controller': [0.3]}, budget=5)
    records = [
        metrics_log.MetricsRecord('r', step, labels.Split.TRAIN,
                                  labels.Metric.TRAIN_LOSS, 2.0 / step)
        for step in (1, 2, 3)
    ] + [
        metrics_log.MetricsRecord('r', 3, labels.Split.VAL,
                                  labels.Metric.CLEAN_ERROR, 40.0)
    ]
    sweep = {
        'param': 'K',
        'rows': [{'value': 1.0, 'run_id': 'r-a', 'clean_error': 30.0,
                  'corruption_error': None, 'wallclock_s': 9.0},
                 {'value': 10.0, 'run_id': 'r-b', 'clean_error': 31.0,
                  'corruption_error': None, 'wallclock_s': 3.0}],
    }
    for path in (
        plotting.PlotBlockVulnerability([('ews', report)],
                                        self._Path('vulnerability.png')),
        plotting.PlotStrategyComparison(comparison,
                                        self._Path('strategies.png')),
        plotting.PlotTrainingCurves(records, self._Path('training.png')),
        plotting.PlotSweep(sweep, self._Path('sweep.png')),
    ):
      self.assertGreater(os.path.getsize(path), 0)


if __name__ == '__main__':
  absltest.main()
