"""Tests for ewsrobust.metrics_log."""

import json
import os

from absl.testing import absltest
from ewsrobust import labels
from ewsrobust import metrics_log


class MetricsLogTest(absltest.TestCase):

  def setUp(self):
    super().setUp()
    self.path = os.path.join(self.create_tempdir().full_path, 'metrics.jsonl')

  def testAppendWritesFixedFieldOrder(self):
    log = metrics_log.MetricsLog(self.path, 'r-1')
    log.Append(3, labels.Split.TEST, labels.Metric.CORRUPTION_ERROR, 42.5,
               source_id='contrast', severity=2)
    with open(self.path) as f:
      line = f.readline()
    self.assertEqual(
        list(json.loads(line)),
        ['run_id', 'step', 'split', 'metric', 'source_id', 'severity',
         'epsilon', 'value'])
    self.assertIsNone(json.loads(line)['epsilon'])

  def testReadBack(self):
    log = metrics_log.MetricsLog(self.path, 'r-1')
    log.Append(1, labels.Split.VAL, labels.Metric.CLEAN_ERROR, 50.0)
    log.Append(2, labels.Split.VAL, labels.Metric.ROBUST_ERROR, 70.0,
               source_id='pgd20', epsilon=8 / 255)
    self.assertEqual(metrics_log.ReadRecords(self.path), log.Records())
    self.assertEqual(
        metrics_log.MetricsLog(self.path, 'r-1').Records(), log.Records())

  def testAbsentFileHasNoRecords(self):
    self.assertEqual(metrics_log.ReadRecords(self.path), [])

  def testInMemoryLog(self):
    log = metrics_log.MetricsLog(None, 'local')
    log.Append(0, labels.Split.TRAIN, labels.Metric.TRAIN_LOSS, 2.3)
    self.assertLen(log.Records(), 1)
    self.assertFalse(os.path.exists(self.path))

  def testRejectsInvalidRecords(self):
    log = metrics_log.MetricsLog(self.path, 'r-1')
    for args in ((0, 'holdout', labels.Metric.CLEAN_ERROR, 1.0),
                 (0, labels.Split.VAL, 'accuracy', 1.0),
                 (0, labels.Split.VAL, labels.Metric.CLEAN_ERROR, 101.0),
                 (0, labels.Split.VAL, labels.Metric.TRAIN_LOSS, float('nan')),
                 (-1, labels.Split.VAL, labels.Metric.CLEAN_ERROR, 1.0)):
      with self.subTest(args=args):
        with self.assertRaises(metrics_log.InvalidRecordError):
          log.Append(*args)
    self.assertEqual(log.Records(), [])

  def testMalformedLine(self):
    with self.assertRaises(metrics_log.InvalidRecordError):
      metrics_log.FromJson('{"step": 1}')
    with self.assertRaises(metrics_log.InvalidRecordError):
      metrics_log.FromJson('not json')

  def testTruncateAfter(self):
    log = metrics_log.MetricsLog(self.path, 'r-1')
    for step in range(5):
      log.Append(step, labels.Split.TRAIN, labels.Metric.TRAIN_LOSS, 1.0)
    log.TruncateAfter(2)
    self.assertEqual([r.step for r in log.Records()], [0, 1, 2])
    self.assertEqual(
        [r.step for r in metrics_log.ReadRecords(self.path)], [0, 1, 2])

  def testSelectAndBestStep(self):
    log = metrics_log.MetricsLog(None, 'r-1')
    for step, value in ((10, 30.0), (20, 25.0), (30, 25.0), (40, 27.0)):
      log.Append(step, labels.Split.VAL, labels.Metric.CLEAN_ERROR, value)
    log.Append(40, labels.Split.TEST, labels.Metric.CLEAN_ERROR, 1.0)
    records = log.Records()
    self.assertLen(
        metrics_log.Select(records, labels.Metric.CLEAN_ERROR,
                           labels.Split.VAL), 4)
    self.assertEqual(
        metrics_log.BestStep(records, labels.Metric.CLEAN_ERROR), 20)
    self.assertIsNone(
        metrics_log.BestStep(records, labels.Metric.ROBUST_ERROR))


if __name__ == '__main__':
  absltest.main()
