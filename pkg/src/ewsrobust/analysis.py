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

"""Read-only diagnostics of trained models.

  * SubnetAccuracyDistribution: accuracies of uniformly sampled subnets on
    clean, corrupted or adversarial inputs, next to the full network.
  * BlockVulnerability: error when only one block is masked.
  * CompareSearchStrategies: how weak the subnets found by uniform sampling,
    the L1 heuristic and a freshly trained controller are.
  * SummarizeSweep: one row per run of a parameter sweep.

No analysis changes the model: everything runs in eval mode without
gradients on the weights. Every result keeps its raw values and can be dumped
to YAML; loading recomputes the summaries from the raw values.
"""

import dataclasses
from typing import Dict, List, Optional

import numpy as np
import torch
import yaml

from . import adversarial
from . import controller
from . import corruption_eval
from . import labels as labels_lib
from . import metrics_log
from . import model_core
from . import subnet_space

STRATEGIES = ('uniform', 'l1', 'controller')

SWEEP_VALUES = {
    'lambda': (0.0, 0.001, 0.01, 0.1, 1.0, 10.0),
    'rho': (0.1, 0.3, 0.5, 0.7, 0.9),
    'K': (1, 5, 10, 20, 50),
}


class Error(Exception):
  """Generic error class that other errors in this module inherit from."""
  pass


@dataclasses.dataclass
class DistributionSummary(object):
  """Accuracies of sampled subnets.

  Attributes:
    values: accuracy of every sampled subnet, in sampling order.
    full_accuracy: accuracy of the full network on the same inputs.
    variant: 'clean', a corruption id like 'gaussian_noise/3' or an attack id.
  """
  values: List[float]
  full_accuracy: float
  variant: str = 'clean'
  width: float = 0.7

  @property
  def mean(self):
    return float(np.mean(self.values))

  def Quartiles(self):
    """Returns (min, q1, median, q3, max) of the values."""
    return tuple(
        float(q) for q in np.percentile(self.values, [0, 25, 50, 75, 100]))

  def ToDict(self):
    low, q1, median, q3, high = self.Quartiles()
    return {
        'variant': self.variant,
        'width': float(self.width),
        'full_accuracy': float(self.full_accuracy),
        'mean': self.mean,
        'min': low,
        'q1': q1,
        'median': median,
        'q3': q3,
        'max': high,
        'values': [float(v) for v in self.values],
    }


def DistributionFromDict(data):
  return DistributionSummary(
      values=[float(v) for v in data['values']],
      full_accuracy=float(data['full_accuracy']),
      variant=data.get('variant', 'clean'),
      width=float(data.get('width', 0.7)))


def _Accuracy(model, images, labels, spec=None, batch_size=256):
  if not len(labels):
    return 0.0
  correct = 0
  for start in range(0, len(labels), batch_size):
    x = images[start:start + batch_size]
    logits = (model.ForwardFull(x) if spec is None else
              model.ForwardMasked(x, spec))
    correct += int(
        (logits.argmax(dim=-1) == labels[start:start + batch_size]).sum())
  return correct / len(labels)


def PrepareInputs(model, images, labels, variant, generator=None):
  """Applies the input variant of a distribution analysis.

  Args:
    variant: 'clean', a corruption_eval.CorruptionSpec or an
        adversarial.AttackConfig (the attack targets the full network).

  Returns:
    (inputs, variant id) tuple.
  """
  if variant is None or variant == 'clean':
    return images, 'clean'
  if isinstance(variant, corruption_eval.CorruptionSpec):
    return (corruption_eval.Corrupt(images, variant),
            f'{variant.kind}/{variant.severity}')
  if isinstance(variant, adversarial.AttackConfig):
    return (adversarial.PgdAttack(model, images, labels, variant, generator),
            variant.attack_id)
  raise Error(f'Unknown input variant {variant!r}')


def SubnetAccuracyDistribution(model, rho, n_samples, images, labels,
                               generator, variant='clean', batch_size=256):
  """Accuracies of n_samples uniform subnets of width rho.

  Raises:
    Error: if n_samples < 1.
  """
  if n_samples < 1:
    raise Error(f'n_samples must be positive, got {n_samples}')
  with model_core.EvalMode(model):
    inputs, variant_id = PrepareInputs(model, images, labels, variant,
                                       generator)
    with torch.no_grad():
      full = _Accuracy(model, inputs, labels, batch_size=batch_size)
      values = []
      for _ in range(n_samples):
        spec = subnet_space.SampleUniformSubnet(model.topology, rho, generator)
        values.append(_Accuracy(model, inputs, labels, spec, batch_size))
  return DistributionSummary(values=values, full_accuracy=full,
                             variant=variant_id, width=rho)


@dataclasses.dataclass
class BlockVulnerabilityEntry(object):
  block: int
  downsamples: bool
  errors: List[float]

  @property
  def mean_error(self):
    return float(np.mean(self.errors))


@dataclasses.dataclass
class BlockVulnerabilityReport(object):
  full_error: float
  width: float
  blocks: List[BlockVulnerabilityEntry]

  def ToDict(self):
    return {
        'full_error': float(self.full_error),
        'width': float(self.width),
        'blocks': [{
            'block': entry.block,
            'downsamples': entry.downsamples,
            'mean_error': entry.mean_error,
            'errors': [float(e) for e in entry.errors],
        } for entry in self.blocks],
    }


def VulnerabilityFromDict(data):
  return BlockVulnerabilityReport(
      full_error=float(data['full_error']),
      width=float(data['width']),
      blocks=[
          BlockVulnerabilityEntry(
              block=int(entry['block']),
              downsamples=bool(entry['downsamples']),
              errors=[float(e) for e in entry['errors']])
          for entry in data['blocks']
      ])


def BlockVulnerability(model, images, labels, generator, rho=0.5,
                       n_per_block=100, batch_size=256):
  """Mean error when only one block keeps a random rho share of its parts.

  Raises:
    Error: if n_per_block < 1.
  """
  if n_per_block < 1:
    raise Error(f'n_per_block must be positive, got {n_per_block}')
  topology = model.topology
  entries = []
  with torch.no_grad(), model_core.EvalMode(model):
    full_error = 100.0 * (1.0 - _Accuracy(model, images, labels,
                                          batch_size=batch_size))
    for b, block in enumerate(topology.blocks):
      widths = [1.0] * len(topology.blocks)
      widths[b] = rho
      errors = []
      for _ in range(n_per_block):
        spec = subnet_space.SampleUniformSubnet(topology, rho, generator,
                                                block_widths=widths)
        errors.append(100.0 * (1.0 - _Accuracy(model, images, labels, spec,
                                               batch_size)))
      entries.append(BlockVulnerabilityEntry(b, block.downsamples, errors))
  return BlockVulnerabilityReport(full_error=full_error, width=rho,
                                  blocks=entries)


@dataclasses.dataclass
class StrategyComparison(object):
  """Subnet accuracies per search strategy.

  Attributes:
    accuracies: strategy -> accuracy of every evaluated subnet.
    selection_frequency: per block, per path keep frequency of the trained
        controller (empty without the controller strategy).
  """
  accuracies: Dict[str, List[float]]
  selection_frequency: List[List[float]] = dataclasses.field(
      default_factory=list)
  budget: int = 0

  def Means(self):
    return {name: float(np.mean(v)) for name, v in self.accuracies.items()}

  def ToDict(self):
    return {
        'budget': self.budget,
        'means': self.Means(),
        'accuracies': {k: [float(a) for a in v]
                       for k, v in self.accuracies.items()},
        'selection_frequency': [[float(f) for f in block]
                                for block in self.selection_frequency],
    }


def ComparisonFromDict(data):
  return StrategyComparison(
      accuracies={k: [float(a) for a in v]
                  for k, v in data['accuracies'].items()},
      selection_frequency=[[float(f) for f in block]
                           for block in data.get('selection_frequency', [])],
      budget=int(data.get('budget', 0)))


def TrainSearchController(model, images, labels, rho, budget, generator,
                          controller_batch=8, controller_lr=3.5e-4,
                          batch_size=128, policy=None, seed=0):
  """Trains a controller against a frozen model for budget steps.

  Minibatches cycle through the evaluation inputs in order.

  Returns:
    The trained ControllerPolicy.
  """
  policy = policy or controller.ControllerPolicy(model.topology, rho,
                                                 seed=seed)
  n = len(labels)
  for step in range(budget):
    start = (step * batch_size) % max(1, n)
    controller.ControllerStep(policy, model,
                              images[start:start + batch_size],
                              labels[start:start + batch_size],
                              controller_batch, controller_lr, generator)
  return policy


def CompareSearchStrategies(model, images, labels, rho, generator,
                            strategies=STRATEGIES, budget=500, n_subnets=64,
                            policy=None, batch_size=256, **controller_kwargs):
  """Mean accuracy of the subnets each strategy proposes.

  Args:
    strategies: subset of STRATEGIES.
    budget: controller training steps against the frozen model.
    n_subnets: subnets evaluated per strategy.
    policy: optional pre-trained ControllerPolicy to continue training.

  Returns:
    StrategyComparison.

  Raises:
    Error: for unknown strategies or n_subnets < 1.
  """
  unknown = sorted(set(strategies) - set(STRATEGIES))
  if unknown:
    raise Error(f'Unknown strategies {unknown}, known: {STRATEGIES}')
  if n_subnets < 1:
    raise Error(f'n_subnets must be positive, got {n_subnets}')

  accuracies = {}
  frequency = []
  with model_core.EvalMode(model):
    for strategy in strategies:
      if strategy == 'controller':
        policy = TrainSearchController(model, images, labels, rho, budget,
                                       generator, policy=policy,
                                       **controller_kwargs)
        frequency = controller.SelectionFrequency(policy, n_subnets, generator)
      with torch.no_grad():
        values = []
        for _ in range(n_subnets):
          if strategy == 'uniform':
            spec = subnet_space.SampleUniformSubnet(model.topology, rho,
                                                    generator)
          elif strategy == 'l1':
            spec = subnet_space.SubnetFromL1(model, rho)
          else:
            spec, _ = controller.SampleSubnet(policy, generator)
          values.append(_Accuracy(model, images, labels, spec, batch_size))
      accuracies[strategy] = values
  return StrategyComparison(accuracies=accuracies,
                            selection_frequency=frequency, budget=budget)


@dataclasses.dataclass
class SweepRow(object):
  value: float
  run_id: str
  clean_error: Optional[float]
  corruption_error: Optional[float]
  wallclock_s: Optional[float]


def _LastValue(records, metric, split):
  selected = metrics_log.Select(records, metric, split)
  if not selected:
    return None
  return max(selected, key=lambda r: r.step).value


def SummarizeSweep(param, runs):
  """Builds the sweep table from the metrics records of every run.

  Args:
    param: swept parameter name.
    runs: list of (value, run_id, records) tuples.

  Returns:
    dict with the parameter name and one row per run, sorted by value.
  """
  rows = []
  for value, run_id, records in sorted(runs, key=lambda r: r[0]):
    rows.append(
        SweepRow(
            value=float(value),
            run_id=run_id,
            clean_error=_LastValue(records, labels_lib.Metric.CLEAN_ERROR,
                                   labels_lib.Split.TEST),
            corruption_error=_LastValue(records,
                                        labels_lib.Metric.CORRUPTION_ERROR,
                                        labels_lib.Split.TEST),
            wallclock_s=_LastValue(records, labels_lib.Metric.WALLCLOCK_S,
                                   labels_lib.Split.TRAIN)))
  return {'param': param, 'rows': [dataclasses.asdict(row) for row in rows]}


def Dump(result, path):
  """Writes a result (anything with ToDict, or a dict) as YAML."""
  data = result.ToDict() if hasattr(result, 'ToDict') else result
  with open(path, 'w', encoding='utf-8') as f:
    yaml.safe_dump(data, f, sort_keys=True)


def Load(path):
  with open(path, 'r', encoding='utf-8') as f:
    return yaml.safe_load(f)
