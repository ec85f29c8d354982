"""Tests for ewsrobust.controller."""

import math
from unittest import mock

from absl.testing import absltest
import torch

from ewsrobust import controller
from ewsrobust import model_core
from ewsrobust import subnet_space
from ewsrobust import topology


def _IdentityBlocks(n_blocks, n_paths=2):
  """Blocks of parameter-free paths: path picks only."""
  return topology.ModelTopology(
      blocks=tuple(
          topology.BlockTopology(paths=((),) * n_paths)
          for _ in range(n_blocks)),
      input_shape=(1, 1, 2),
      num_classes=2,
      groups=1).Check()


def _ConvOrSkipBlocks(n_blocks):
  """Blocks of a 4-channel conv path and an identity path, 2 groups."""
  conv = topology.LayerTopology(topology.LayerKind.CONV, 4)
  return topology.ModelTopology(
      blocks=tuple(
          topology.BlockTopology(paths=((conv,), ()))
          for _ in range(n_blocks)),
      input_shape=(2, 2, 4),
      num_classes=2,
      groups=2).Check()


def _RandomizedPolicy(net, rho=0.5, seed=0):
  policy = controller.ControllerPolicy(net, rho, hidden_size=8, seed=seed)
  generator = torch.Generator().manual_seed(seed + 100)
  with torch.no_grad():
    for projection in policy.projections:
      projection.weight.copy_(
          torch.randn(projection.weight.shape, generator=generator))
      projection.bias.copy_(
          torch.randn(projection.bias.shape, generator=generator))
  return policy.double()


def _DeadPathModel():
  """One block: a zeroed 1x1 conv path and an identity path.

  Keeping the identity path classifies one-hot inputs perfectly; keeping only
  the conv path yields all-zero logits, i.e. chance accuracy.
  """
  net = topology.ModelTopology(
      blocks=(topology.BlockTopology(paths=(
          (topology.LayerTopology(topology.LayerKind.CONV, 2, 1),), ())),),
      input_shape=(1, 1, 2),
      num_classes=2,
      groups=1,
      use_norm=False)
  model = model_core.MaskableModel(net)
  with torch.no_grad():
    model.Layer('b0.p0.l0').op.weight.zero_()
    model.head.weight.copy_(torch.eye(2))
    model.head.bias.zero_()
  labels = torch.arange(8) % 2
  images = torch.nn.functional.one_hot(labels, 2).float()[:, :, None, None]
  return model.eval(), images, labels


class ScheduleTest(absltest.TestCase):

  def testScheduleOfResNet(self):
    net = topology.ResNetTopology(stage_channels=(8,), blocks_per_stage=2)
    schedule = controller.DecisionSchedule(net, 0.7)
    self.assertLen(schedule, 6)
    self.assertEqual((schedule[0].arity, schedule[0].picks), (2, 1))
    self.assertEqual((schedule[1].arity, schedule[1].picks), (4, 3))
    self.assertEqual(schedule[1].layer_id, 'b0.p0.l0')


class SamplingTest(absltest.TestCase):

  def testSamplesAreValid(self):
    net = topology.ResNetTopology(stage_channels=(8, 16), blocks_per_stage=2)
    policy = controller.ControllerPolicy(net, 0.7)
    generator = torch.Generator().manual_seed(0)
    for _ in range(20):
      spec, _ = controller.SampleSubnet(policy, generator)
      self.assertEqual(subnet_space.Validate(spec, net), [])

  def testForcedPickHasZeroLogProb(self):
    net = _IdentityBlocks(1, n_paths=1)
    policy = controller.ControllerPolicy(net, 0.7)
    spec, log_prob = controller.SampleSubnet(policy,
                                             torch.Generator().manual_seed(0))
    self.assertEqual(spec.path_choices, ((0,),))
    self.assertEqual(float(log_prob), 0.0)
    self.assertEqual(float(controller.LogProb(policy, spec)), 0.0)

  def testUntrainedPolicyIsUniformOverTwoPaths(self):
    policy = controller.ControllerPolicy(_IdentityBlocks(1), 0.5)
    frequency = controller.SelectionFrequency(
        policy, 10000, torch.Generator().manual_seed(1))
    self.assertAlmostEqual(frequency[0][0], 0.5, delta=0.02)
    self.assertAlmostEqual(frequency[0][1], 0.5, delta=0.02)
    for spec in subnet_space.EnumerateSubnets(policy.topology, 0.5):
      self.assertAlmostEqual(
          float(controller.LogProb(policy, spec)), math.log(0.5), places=6)

  def testProbabilitiesNormalize(self):
    for net in (_IdentityBlocks(2), _ConvOrSkipBlocks(2)):
      policy = _RandomizedPolicy(net)
      total = sum(
          math.exp(float(controller.LogProb(policy, spec)))
          for spec in subnet_space.EnumerateSubnets(net, 0.5))
      self.assertAlmostEqual(total, 1.0, delta=1e-9)

  def testLogProbMatchesSampledLogProb(self):
    policy = _RandomizedPolicy(_ConvOrSkipBlocks(2), seed=3)
    generator = torch.Generator().manual_seed(4)
    for _ in range(10):
      spec, log_prob = controller.SampleSubnet(policy, generator)
      self.assertAlmostEqual(
          float(controller.LogProb(policy, spec)), float(log_prob), places=9)

  def testSamplingDeterministicPerSeed(self):
    policy = _RandomizedPolicy(_ConvOrSkipBlocks(2))
    first = [
        controller.SampleSubnet(policy, g)[0]
        for g in [torch.Generator().manual_seed(5)] * 5
    ]
    second = [
        controller.SampleSubnet(policy, g)[0]
        for g in [torch.Generator().manual_seed(5)] * 5
    ]
    self.assertEqual(first, second)

  def testLogProbRejectsInvalidSpec(self):
    policy = controller.ControllerPolicy(_IdentityBlocks(1), 0.5)
    with self.assertRaises(model_core.InvalidSubnetError):
      controller.LogProb(
          policy, subnet_space.SubnetSpec(0.5, ((0, 1),), {}))

  def testStateDictRoundTrip(self):
    net = _ConvOrSkipBlocks(2)
    policy = controller.ControllerPolicy(net, 0.5, hidden_size=8, seed=7)
    restored = controller.FromStateDict(net, policy.StateDict())
    spec, log_prob = controller.SampleSubnet(policy,
                                             torch.Generator().manual_seed(0))
    self.assertAlmostEqual(
        float(controller.LogProb(restored, spec)), float(log_prob), places=6)


class UpdateTest(absltest.TestCase):

  def testWeakReward(self):
    self.assertEqual(controller.WeakReward(1.0), -1.0)
    self.assertEqual(controller.WeakReward(0.0), 0.0)
    self.assertEqual(controller.WeakReward(0.25), -0.25)

  def testZeroAdvantageLeavesParametersUnchanged(self):
    policy = _RandomizedPolicy(_IdentityBlocks(2))
    before = {k: v.clone() for k, v in policy.state_dict().items()}
    specs = list(subnet_space.EnumerateSubnets(policy.topology, 0.5))
    controller.ReinforceUpdate(policy, specs, [0.0] * len(specs), 0.1)
    for name, value in policy.state_dict().items():
      self.assertTrue(torch.equal(value, before[name]), name)

  def testEmptyBatchRejected(self):
    policy = controller.ControllerPolicy(_IdentityBlocks(1), 0.5)
    with self.assertRaises(controller.EmptyBatchError):
      controller.ReinforceUpdate(policy, [], [], 0.1)

  def testHigherRewardBecomesMoreLikely(self):
    policy = controller.ControllerPolicy(_IdentityBlocks(1), 0.5)
    first = subnet_space.SubnetSpec(0.5, ((0,),), {})
    second = subnet_space.SubnetSpec(0.5, ((1,),), {})
    before = math.exp(float(controller.LogProb(policy, first)))
    controller.ReinforceUpdate(policy, [first, second], [-0.2, -0.9], 0.1)
    self.assertGreater(math.exp(float(controller.LogProb(policy, first))),
                       before)

  def testBaselineMovingAverage(self):
    policy = controller.ControllerPolicy(_IdentityBlocks(1), 0.5)
    spec = subnet_space.SubnetSpec(0.5, ((0,),), {})
    controller.ReinforceUpdate(policy, [spec, spec], [-1.0, -0.5], 0.1)
    self.assertAlmostEqual(float(policy.baseline), 0.1 * -0.75)

  def testEstimatorMatchesExactGradient(self):
    net = _ConvOrSkipBlocks(2)
    policy = _RandomizedPolicy(net, seed=2)
    specs = list(subnet_space.EnumerateSubnets(net, 0.5))
    self.assertLessEqual(len(specs), 16)
    rewards = [-((3 * i) % 7) / 7.0 for i in range(len(specs))]

    parameters = [p for p in policy.parameters() if p.requires_grad]
    expected_reward = sum(
        controller.LogProb(policy, spec).exp() * reward
        for spec, reward in zip(specs, rewards))
    exact = torch.autograd.grad(expected_reward, parameters,
                                allow_unused=True)

    # Weighting every spec's reward by its probability turns the batch mean
    # into the expectation of the estimator over the whole space.
    weights = [
        math.exp(float(controller.LogProb(policy, spec))) for spec in specs
    ]
    weighted = [len(specs) * w * r for w, r in zip(weights, rewards)]
    before = [p.detach().clone() for p in parameters]
    lr = 1e-3
    controller.ReinforceUpdate(policy, specs, weighted, lr)

    numerator = 0.0
    denominator = 0.0
    for parameter, start, gradient in zip(parameters, before, exact):
      if gradient is None:
        gradient = torch.zeros_like(start)
      estimate = (parameter.detach() - start) / lr
      numerator += float(((estimate - gradient)**2).sum())
      denominator += float((gradient**2).sum())
    self.assertGreater(denominator, 0.0)
    self.assertLessEqual(math.sqrt(numerator / denominator), 1e-5)


class ControllerStepTest(absltest.TestCase):

  def testFindsDeadPath(self):
    model, images, labels = _DeadPathModel()
    policy = controller.ControllerPolicy(model.topology, 0.5, hidden_size=16)
    generator = torch.Generator().manual_seed(0)
    for _ in range(500):
      controller.ControllerStep(policy, model, images, labels, 8, 0.5,
                                generator)
    frequency = controller.SelectionFrequency(policy, 200, generator)
    self.assertGreater(frequency[0][0], 0.9)
    with torch.no_grad():
      accuracies = [
          model_core.Accuracy(
              model.ForwardMasked(
                  images, controller.SampleSubnet(policy, generator)[0]),
              labels) for _ in range(200)
      ]
    # Uniform sampling keeps the identity path half the time: accuracy 0.75.
    self.assertGreaterEqual(0.75 - sum(accuracies) / len(accuracies), 0.02)

  def testStepDoesNotModifyModel(self):
    model, images, labels = _DeadPathModel()
    before = model_core.StateDictHash(model)
    policy = controller.ControllerPolicy(model.topology, 0.5)
    result = controller.ControllerStep(policy, model, images, labels, 4, 0.1,
                                       torch.Generator().manual_seed(0))
    self.assertEqual(model_core.StateDictHash(model), before)
    self.assertLen(result.specs, 4)
    for accuracy, reward in zip(result.accuracies, result.rewards):
      self.assertIn(accuracy, (0.5, 1.0))
      self.assertEqual(reward, -accuracy)

  def testDeterministic(self):
    model, images, labels = _DeadPathModel()
    results = []
    for _ in range(2):
      policy = controller.ControllerPolicy(model.topology, 0.5, seed=3)
      generator = torch.Generator().manual_seed(1)
      for _ in range(3):
        result = controller.ControllerStep(policy, model, images, labels, 4,
                                           0.1, generator)
      results.append((result.specs, model_core.StateDictHash(policy)))
    self.assertEqual(results[0], results[1])

  def testCustomRewardScoresEachSubnet(self):
    model, images, labels = _DeadPathModel()
    policy = controller.ControllerPolicy(model.topology, 0.5)
    reward_fn = mock.Mock(return_value=-0.25)
    result = controller.ControllerStep(policy, model, images, labels, 3, 0.1,
                                       torch.Generator().manual_seed(0),
                                       reward_fn=reward_fn)
    self.assertEqual(reward_fn.call_count, 3)
    for call, spec in zip(reward_fn.call_args_list, result.specs):
      self.assertIs(call.args[0], model)
      self.assertIs(call.args[1], spec)
      self.assertIs(call.args[2], images)
    self.assertEqual(result.rewards, [-0.25] * 3)
    self.assertEqual(result.accuracies, [0.25] * 3)

  def testForcedSpaceIsNoOp(self):
    net = _IdentityBlocks(1, n_paths=1)
    model = model_core.MaskableModel(net).eval()
    policy = controller.ControllerPolicy(net, 0.5)
    before = {k: v.clone() for k, v in policy.named_parameters()}
    for _ in range(5):
      controller.ControllerStep(policy, model, torch.rand(4, 2, 1, 1),
                                torch.tensor([0, 1, 0, 1]), 1, 0.1,
                                torch.Generator().manual_seed(0))
    for name, value in policy.named_parameters():
      self.assertTrue(torch.equal(value, before[name]), name)


if __name__ == '__main__':
  absltest.main()
