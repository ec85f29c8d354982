"""Tests for ewsrobust.labels"""

from absl.testing import absltest
from ewsrobust import labels


class LabelsTest(absltest.TestCase):

  def testDefinesLabelsCorrectly(self):
    self.assertEqual(labels.Metric.CLEAN_ERROR, 'clean_error')
    self.assertEqual(labels.Metric.CORRUPTION_ERROR, 'corruption_error')
    self.assertEqual(labels.Metric.ROBUST_ERROR, 'robust_error')
    self.assertEqual(labels.Metric.SUBNET_MEAN_ACC, 'subnet_mean_acc')
    self.assertEqual(labels.Metric.WALLCLOCK_S, 'wallclock_s')

    self.assertEqual(labels.Split.TRAIN, 'train')
    self.assertEqual(labels.Split.VAL, 'val')
    self.assertEqual(labels.Split.TEST, 'test')

  def testProvidesAllLabelsSet(self):
    self.assertLen(labels.Metric.SET_ALL, 10)
    self.assertLen(labels.Split.SET_ALL, 3)
    self.assertTrue(labels.Metric.SET_PERCENT <= labels.Metric.SET_ALL)

  def testAttackId(self):
    self.assertEqual(labels.AttackId(20), 'pgd20')


if __name__ == '__main__':
  absltest.main()
