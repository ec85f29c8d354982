# Copyright 2026 Google Inc. All Rights Reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#      http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS-IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Learned policy that emits weak subnets, and its policy-gradient update.

The policy is a single-layer LSTM cell unrolled over a decision schedule
derived from the topology. For every block it first picks the kept paths,
then the kept channel groups of each parameterized layer on a kept path.
Each pick is one recurrent step whose input is the embedding of the previous
pick; the first step reads a learned start token and the initial hidden state
is a constant zero vector.

Picks inside one subset are made in ascending index order: pick j may only
choose an index above pick j-1 that leaves room for the remaining picks. Every
subset therefore has exactly one pick sequence, and the probability of a spec
is the probability of its ascending pick sequence.

The policy is trained to find weak subnets: the reward of a subnet is its
negated accuracy, and the update ascends the REINFORCE estimator with an
exponential moving average baseline.

Example Usage:

  policy = ControllerPolicy(model.topology, rho=0.7)
  spec, log_prob = SampleSubnet(policy, generator)
  result = ControllerStep(policy, model, images, labels, 8, 3.5e-4, generator)
"""

import dataclasses
from typing import List, Optional

from absl import logging
import torch
from torch import nn

from . import model_core
from . import subnet_space
from .topology import LayerId


class Error(Exception):
  """Generic error class that other errors in this module inherit from."""
  pass


class EmptyBatchError(Error):
  """Thrown when an update receives no (or mismatched) specs and rewards."""
  pass


@dataclasses.dataclass(frozen=True)
class Decision(object):
  """One entry of the decision schedule.

  Attributes:
    block: block index the decision belongs to.
    layer_id: layer id for channel group decisions, None for path decisions.
    path: path the layer lives on (group decisions only run if it is kept).
    arity: number of candidates.
    picks: number of candidates kept.
  """
  block: int
  layer_id: Optional[str]
  path: Optional[int]
  arity: int
  picks: int


def DecisionSchedule(topology, rho):
  """Flattens a topology into its decision schedule."""
  schedule = []
  k_groups = subnet_space.SelectionCount(topology.groups, rho)
  for b, block in enumerate(topology.blocks):
    schedule.append(
        Decision(b, None, None, block.n_paths,
                 subnet_space.SelectionCount(block.n_paths, rho)))
    for p, path in enumerate(block.paths):
      for i, layer in enumerate(path):
        if layer.parameterized:
          schedule.append(
              Decision(b, LayerId(b, p, i), p, topology.groups, k_groups))
  return schedule


class ControllerPolicy(nn.Module):
  """Recurrent sampling policy over the subnets of one topology.

  Attributes:
    topology: topology the schedule was derived from.
    rho: subnet width.
    schedule: list of Decision.
    baseline: exponential moving average of the reward (buffer).
    baseline_decay: EMA decay of the baseline.
  """

  def __init__(self, topology, rho, hidden_size=64, baseline_decay=0.9,
               seed=0):
    super().__init__()
    self.topology = topology
    self.rho = rho
    self.hidden_size = hidden_size
    self.baseline_decay = baseline_decay
    self.seed = seed
    self.schedule = DecisionSchedule(topology, rho)

    with torch.random.fork_rng(devices=[]):
      torch.manual_seed(seed)
      self.cell = nn.LSTMCell(hidden_size, hidden_size)
      self.start = nn.Parameter(torch.empty(1, hidden_size).uniform_(-0.1, 0.1))
      self.embeddings = nn.ModuleList(
          nn.Embedding(d.arity, hidden_size) for d in self.schedule)
      self.projections = nn.ModuleList(
          nn.Linear(hidden_size, d.arity) for d in self.schedule)
    for projection in self.projections:
      nn.init.zeros_(projection.weight)
      nn.init.zeros_(projection.bias)

    self.register_buffer('h0', torch.zeros(1, hidden_size))
    self.register_buffer('baseline', torch.zeros((), dtype=torch.float64))

  def _Unroll(self, chooser):
    """Runs the schedule, asking chooser for every pick.

    Args:
      chooser: callable (slot, pick_index, log_probs) -> chosen index, where
          log_probs are the masked log probabilities of the pick.

    Returns:
      (path_choices, group_choices, log_prob) tuple.
    """
    h, c = self.h0, torch.zeros_like(self.h0)
    inputs = self.start
    log_prob = torch.zeros((), dtype=self.h0.dtype, device=self.h0.device)
    paths = [()] * len(self.topology.blocks)
    groups = {}
    for slot, decision in enumerate(self.schedule):
      if decision.layer_id is not None and (
          decision.path not in paths[decision.block]):
        continue
      chosen = []
      previous = -1
      for j in range(decision.picks):
        h, c = self.cell(inputs, (h, c))
        logits = self.projections[slot](h)[0]
        feasible = torch.zeros(decision.arity, dtype=torch.bool,
                               device=logits.device)
        feasible[previous + 1:decision.arity - decision.picks + j + 1] = True
        log_probs = torch.log_softmax(
            logits.masked_fill(~feasible, float('-inf')), dim=-1)
        index = chooser(slot, j, log_probs)
        if not feasible[index]:
          raise model_core.InvalidSubnetError(
              [f'decision {slot}: index {index} not selectable at pick {j}'])
        log_prob = log_prob + log_probs[index]
        chosen.append(index)
        previous = index
        inputs = self.embeddings[slot](
            torch.tensor([index], device=logits.device))
      if decision.layer_id is None:
        paths[decision.block] = tuple(chosen)
      else:
        groups[decision.layer_id] = tuple(chosen)
    return tuple(paths), groups, log_prob

  def StateDict(self):
    return {
        'rho': self.rho,
        'hidden_size': self.hidden_size,
        'baseline_decay': self.baseline_decay,
        'seed': self.seed,
        'state_dict': self.state_dict(),
    }


def FromStateDict(topology, state):
  """Rebuilds a policy saved with ControllerPolicy.StateDict."""
  policy = ControllerPolicy(
      topology,
      state['rho'],
      hidden_size=state['hidden_size'],
      baseline_decay=state['baseline_decay'],
      seed=state['seed'])
  policy.load_state_dict(state['state_dict'])
  return policy


def SampleSubnet(policy, generator):
  """Samples a subnet from the policy.

  Args:
    policy: ControllerPolicy.
    generator: torch.Generator driving the draw.

  Returns:
    (spec, log_prob) where log_prob is a differentiable scalar tensor.
  """

  def Draw(unused_slot, unused_pick, log_probs):
    probs = log_probs.detach().exp().double().cpu()
    return int(torch.multinomial(probs, 1, generator=generator))

  paths, groups, log_prob = policy._Unroll(Draw)
  spec = subnet_space.SubnetSpec(
      width=policy.rho, path_choices=paths, channel_group_choices=groups)
  return spec, log_prob


def LogProb(policy, spec):
  """Log probability that the policy samples spec.

  Raises:
    model_core.InvalidSubnetError: if spec is not in the policy's space.
  """
  violations = subnet_space.Validate(spec, policy.topology)
  if not violations and spec.block_widths is not None:
    violations = ['policy specs cannot carry per-block widths']
  if not violations and abs(spec.width - policy.rho) > 1e-12:
    violations = [f'spec width {spec.width} differs from policy width '
                  f'{policy.rho}']
  if violations:
    raise model_core.InvalidSubnetError(violations)

  def Replay(slot, pick, unused_log_probs):
    decision = policy.schedule[slot]
    if decision.layer_id is None:
      return sorted(spec.path_choices[decision.block])[pick]
    return sorted(spec.channel_group_choices[decision.layer_id])[pick]

  return policy._Unroll(Replay)[2]


def WeakReward(subnet_accuracy):
  """Reward of a subnet: its negated accuracy, so ascent seeks weakness."""
  return -float(subnet_accuracy)


def SubnetReward(model, spec, images, labels):
  """WeakReward of the subnet on a minibatch."""
  return WeakReward(
      model_core.Accuracy(model.ForwardMasked(images, spec), labels))


def ReinforceUpdate(policy, specs, rewards, lr):
  """One REINFORCE ascent step with the moving average baseline.

  theta <- theta + lr * mean_i(grad log pi(spec_i) * (reward_i - b)), then
  b <- decay * b + (1 - decay) * mean(rewards).

  Args:
    policy: ControllerPolicy, updated in place.
    specs: sampled SubnetSpecs.
    rewards: their rewards.
    lr: controller learning rate.

  Returns:
    The updated policy.

  Raises:
    EmptyBatchError: if specs is empty or does not match rewards.
  """
  if not specs or len(specs) != len(rewards):
    raise EmptyBatchError(
        f'Need matching non-empty specs and rewards, got {len(specs)} specs '
        f'and {len(rewards)} rewards')
  baseline = float(policy.baseline)
  objective = sum(
      LogProb(policy, spec) * (reward - baseline)
      for spec, reward in zip(specs, rewards)) / len(specs)
  parameters = [p for p in policy.parameters() if p.requires_grad]
  gradients = torch.autograd.grad(objective, parameters, allow_unused=True)
  with torch.no_grad():
    for parameter, gradient in zip(parameters, gradients):
      if gradient is not None:
        parameter.add_(gradient, alpha=lr)
    mean_reward = sum(rewards) / len(rewards)
    policy.baseline.mul_(policy.baseline_decay).add_(
        (1.0 - policy.baseline_decay) * mean_reward)
  return policy


@dataclasses.dataclass
class ControllerStepResult(object):
  specs: List[subnet_space.SubnetSpec]
  accuracies: List[float]
  rewards: List[float]
  baseline: float


def ControllerStep(policy, model, images, labels, controller_batch, lr,
                   generator, reward_fn=None):
  """Samples, scores and learns from a batch of subnets.

  Subnets are scored on the shared minibatch with the model in eval mode.

  Args:
    policy: ControllerPolicy, updated in place.
    model: model_core.MaskableModel (not modified).
    images: minibatch the subnets are evaluated on.
    labels: its labels.
    controller_batch: number C of sampled subnets.
    lr: controller learning rate.
    generator: torch.Generator for sampling.
    reward_fn: callable (model, spec, images, labels) -> reward, the negated
        accuracy of the subnet; defaults to SubnetReward.

  Returns:
    ControllerStepResult describing the sampled batch.
  """
  reward_fn = reward_fn or SubnetReward
  specs = []
  rewards = []
  with torch.no_grad(), model_core.EvalMode(model):
    for _ in range(controller_batch):
      spec, _ = SampleSubnet(policy, generator)
      specs.append(spec)
      rewards.append(float(reward_fn(model, spec, images, labels)))
  accuracies = [-reward for reward in rewards]
  ReinforceUpdate(policy, specs, rewards, lr)
  logging.vlog(
      1, f'Controller update: mean subnet accuracy '
      f'{sum(accuracies) / len(accuracies):.4f}, baseline '
      f'{float(policy.baseline):.4f}')
  return ControllerStepResult(specs, accuracies, rewards,
                              float(policy.baseline))


def SelectionFrequency(policy, n_samples, generator):
  """Returns per block, per path the frequency of being kept."""
  counts = [[0] * block.n_paths for block in policy.topology.blocks]
  with torch.no_grad():
    for _ in range(n_samples):
      spec, _ = SampleSubnet(policy, generator)
      for b, kept in enumerate(spec.path_choices):
        for p in kept:
          counts[b][p] += 1
  return [[count / n_samples for count in block] for block in counts]
