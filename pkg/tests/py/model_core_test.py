"""Tests for ewsrobust.model_core."""

import math
import os

from absl.testing import absltest
import torch

from ewsrobust import model_core
from ewsrobust import subnet_space
from ewsrobust import topology


def _SmallModel(seed=0, num_classes=10):
  torch.manual_seed(seed)
  return model_core.MaskableModel(
      topology.ResNetTopology(stage_channels=(4, 8), blocks_per_stage=1,
                              num_classes=num_classes, input_shape=(8, 8, 3),
                              groups=2))


def _Inputs(n, seed=1):
  return torch.rand(n, 3, 8, 8, generator=torch.Generator().manual_seed(seed))


class ForwardTest(absltest.TestCase):

  def testLogitShape(self):
    model = _SmallModel()
    self.assertEqual(tuple(model.ForwardFull(_Inputs(4)).shape), (4, 10))

  def testZeroHeadGivesZeroLogits(self):
    model = _SmallModel()
    with torch.no_grad():
      model.head.weight.zero_()
      model.head.bias.zero_()
    self.assertTrue(torch.equal(model.ForwardFull(_Inputs(3)),
                                torch.zeros(3, 10)))

  def testEvalModeDeterministic(self):
    model = _SmallModel().eval()
    x = _Inputs(5)
    self.assertTrue(torch.equal(model.ForwardFull(x), model.ForwardFull(x)))

  def testShapeMismatch(self):
    with self.assertRaises(model_core.ShapeMismatchError):
      _SmallModel().ForwardFull(torch.rand(2, 1, 8, 8))

  def testFullMaskIsIdentity(self):
    model = _SmallModel().eval()
    x = torch.rand(1000, 3, 8, 8, generator=torch.Generator().manual_seed(2))
    full = subnet_space.FullSubnet(model.topology)
    with torch.no_grad():
      difference = (model.ForwardMasked(x, full) - model.ForwardFull(x)).abs()
    self.assertLessEqual(float(difference.max()), 1e-6)

  def testMaskedForwardKeepsRunningStats(self):
    model = _SmallModel().train()
    before = {k: v.clone() for k, v in model.state_dict().items()}
    spec = subnet_space.SampleUniformSubnet(model.topology, 0.5,
                                            torch.Generator().manual_seed(0))
    model.ForwardMasked(_Inputs(8), spec)
    for name, value in model.state_dict().items():
      self.assertTrue(torch.equal(value, before[name]), name)
    model.ForwardFull(_Inputs(8))
    self.assertFalse(
        torch.equal(model.state_dict()['head_norm.bn.running_mean'],
                    before['head_norm.bn.running_mean']))

  def testIdentityOnlyBlockPassesInputThrough(self):
    model = _SmallModel().eval()
    x = torch.rand(2, 4, 8, 8)
    out = model.blocks[0](x, path_mask=(False, True))
    self.assertTrue(torch.equal(out, x))

  def testMaskedChannelIsZero(self):
    layer = model_core.MaskableLayer(
        topology.LayerTopology(topology.LayerKind.CONV, 4), 3, 1,
        use_norm=False)
    out = layer(torch.rand(2, 3, 5, 5), torch.tensor([0., 1., 1., 1.]))
    self.assertTrue(torch.equal(out[:, 0], torch.zeros(2, 5, 5)))
    self.assertGreater(float(out[:, 1:].abs().sum()), 0.0)

  def testDeselectedPathParametersDoNotMatter(self):
    model = _SmallModel().eval()
    spec = subnet_space.SubnetSpec(
        width=0.5,
        path_choices=((1,), (1,)),
        channel_group_choices={})
    x = _Inputs(4)
    with torch.no_grad():
      before = model.ForwardMasked(x, spec)
      for parameter in model.blocks[0].paths[0].parameters():
        parameter.normal_(0.0, 10.0)
      after = model.ForwardMasked(x, spec)
    self.assertTrue(torch.equal(before, after))

  def testInvalidSubnetRejected(self):
    model = _SmallModel()
    spec = subnet_space.SubnetSpec(
        width=0.5, path_choices=((0, 1), (1,)), channel_group_choices={})
    with self.assertRaises(model_core.InvalidSubnetError):
      model.ForwardMasked(_Inputs(2), spec)


class LossTest(absltest.TestCase):

  def testCrossEntropyUniform(self):
    value = model_core.CrossEntropy(torch.zeros(3, 10), torch.tensor([0, 4, 9]))
    self.assertAlmostEqual(float(value), math.log(10), places=5)

  def testCrossEntropyClosedForm(self):
    value = model_core.CrossEntropy(torch.tensor([[2.0, 0.0]]),
                                    torch.tensor([0]))
    self.assertAlmostEqual(float(value), 0.126928, places=5)

  def testCrossEntropyDecreasesWithMargin(self):
    values = [
        float(model_core.CrossEntropy(torch.tensor([[m, 0.0]]),
                                      torch.tensor([0])))
        for m in (0.5, 1.0, 2.0, 4.0)
    ]
    self.assertEqual(values, sorted(values, reverse=True))

  def testCrossEntropyLabelRange(self):
    with self.assertRaises(model_core.LabelRangeError):
      model_core.CrossEntropy(torch.zeros(2, 3), torch.tensor([0, 3]))

  def testCrossEntropyGradientMatchesFiniteDifferences(self):
    generator = torch.Generator().manual_seed(0)
    logits = torch.randn(3, 5, generator=generator, dtype=torch.float64,
                         requires_grad=True)
    labels = torch.tensor([1, 0, 4])
    model_core.CrossEntropy(logits, labels).backward()
    h = 1e-3
    numeric = torch.zeros_like(logits)
    with torch.no_grad():
      for index in range(logits.numel()):
        delta = torch.zeros(logits.numel(), dtype=torch.float64)
        delta[index] = h
        delta = delta.view_as(logits)
        numeric.view(-1)[index] = (
            model_core.CrossEntropy(logits + delta, labels) -
            model_core.CrossEntropy(logits - delta, labels)) / (2 * h)
    relative = (logits.grad - numeric).norm() / numeric.norm()
    self.assertLessEqual(float(relative), 1e-4)

  def testKlIdenticalIsZero(self):
    logits = torch.randn(4, 6, generator=torch.Generator().manual_seed(3))
    self.assertAlmostEqual(
        float(model_core.KlDivergence(logits, logits.clone())), 0.0, places=6)

  def testKlClosedForm(self):
    teacher = torch.log(torch.tensor([[0.5, 0.5]], dtype=torch.float64))
    student = torch.log(torch.tensor([[0.75, 0.25]], dtype=torch.float64))
    self.assertAlmostEqual(
        float(model_core.KlDivergence(teacher, student)), 0.143841, places=6)

  def testKlNearlyOneHotTeacher(self):
    delta = 1e-6
    teacher = torch.log(
        torch.tensor([[1 - delta, delta]], dtype=torch.float64))
    expected = ((1 - delta) * math.log((1 - delta) / 0.5) +
                delta * math.log(delta / 0.5))
    value = float(
        model_core.KlDivergence(teacher, torch.zeros(1, 2,
                                                     dtype=torch.float64)))
    self.assertAlmostEqual(value, expected, places=9)
    self.assertAlmostEqual(value, math.log(2), places=4)

  def testKlNonNegative(self):
    generator = torch.Generator().manual_seed(4)
    for _ in range(20):
      p = torch.randn(8, 5, generator=generator, dtype=torch.float64)
      q = torch.randn(8, 5, generator=generator, dtype=torch.float64)
      self.assertGreaterEqual(float(model_core.KlDivergence(p, q)), -1e-12)

  def testKlTeacherDetached(self):
    teacher = torch.randn(2, 3, requires_grad=True)
    student = torch.randn(2, 3, requires_grad=True)
    model_core.KlDivergence(teacher, student).backward()
    self.assertIsNone(teacher.grad)
    self.assertIsNotNone(student.grad)
    model_core.KlDivergence(teacher, student,
                            detach_teacher=False).backward()
    self.assertIsNotNone(teacher.grad)

  def testKlShapeMismatch(self):
    with self.assertRaises(model_core.ShapeMismatchError):
      model_core.KlDivergence(torch.zeros(2, 3), torch.zeros(2, 4))

  def testAccuracy(self):
    logits = torch.eye(4)
    self.assertEqual(model_core.Accuracy(logits, torch.arange(4)), 1.0)
    self.assertEqual(
        model_core.Accuracy(logits, torch.tensor([1, 2, 3, 0])), 0.0)
    self.assertEqual(
        model_core.Accuracy(logits, torch.tensor([0, 1, 2, 0])), 0.75)
    # Ties go to the lowest class index.
    self.assertEqual(
        model_core.Accuracy(torch.zeros(2, 3), torch.tensor([0, 1])), 0.5)


class CheckpointTest(absltest.TestCase):

  def testRoundTrip(self):
    model = _SmallModel(seed=5)
    model.train()
    model.ForwardFull(_Inputs(8))
    path = os.path.join(self.create_tempdir().full_path, 'model.pt')
    model_core.SaveCheckpoint(path, model, step=17, note='hello')
    loaded, payload = model_core.LoadCheckpoint(path)
    self.assertEqual(payload['step'], 17)
    self.assertEqual(payload['note'], 'hello')
    self.assertEqual(loaded.topology, model.topology)
    self.assertEqual(model_core.StateDictHash(loaded),
                     model_core.StateDictHash(model))
    self.assertFalse(loaded.training)
    model.eval()
    x = _Inputs(3)
    self.assertTrue(torch.equal(loaded.ForwardFull(x), model.ForwardFull(x)))

  def testWrongFormatVersion(self):
    path = os.path.join(self.create_tempdir().full_path, 'old.pt')
    torch.save({'format_version': 0}, path)
    with self.assertRaises(model_core.CheckpointError):
      model_core.LoadCheckpoint(path)

  def testMissingCheckpoint(self):
    with self.assertRaises(model_core.CheckpointError):
      model_core.ReadCheckpoint(
          os.path.join(self.create_tempdir().full_path, 'absent.pt'))


if __name__ == '__main__':
  absltest.main()
