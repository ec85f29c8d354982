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

"""Subnet search space: construction, validation and baseline selection.

A subnet keeps a subset of the paths of every block and a subset of the
channel groups of every parameterized layer on a kept path. The set of all
valid subnets of a topology at width rho is the search space.

Example Usage:

  spec = SampleUniformSubnet(topology, 0.7, generator)
  assert not Validate(spec, topology)
  text = Dump(spec)
  assert Load(text) == spec
"""

import dataclasses
import itertools
from typing import Mapping, Optional, Tuple

import numpy as np
import torch
import yaml

from .topology import LayerId


class Error(Exception):
  """Generic error class that other errors in this module inherit from."""
  pass


class SpecFormatError(Error):
  """Thrown when a serialized subnet record is malformed."""
  pass


@dataclasses.dataclass(frozen=True)
class SubnetSpec(object):
  """A concrete subnet.

  Attributes:
    width: subnet width rho in (0, 1].
    path_choices: per block, the sorted indices of the kept paths.
    channel_group_choices: layer id -> sorted indices of kept channel groups,
        for every parameterized layer on a kept path.
    block_widths: optional per-block width overriding `width`.
  """
  width: float
  path_choices: Tuple[Tuple[int, ...], ...]
  channel_group_choices: Mapping[str, Tuple[int, ...]]
  block_widths: Optional[Tuple[float, ...]] = None

  def BlockWidth(self, block):
    if self.block_widths is not None:
      return self.block_widths[block]
    return self.width

  def Key(self):
    """Returns a hashable identity of the selection."""
    return (self.path_choices,
            tuple(sorted(self.channel_group_choices.items())))


def SelectionCount(n, rho):
  """Returns how many of n elements a subnet of width rho keeps.

  Rounds half to even, then clamps to [1, n].
  """
  return min(n, max(1, round(rho * n)))


def _BlockWidths(topology, rho, block_widths):
  if block_widths is None:
    return [rho] * len(topology.blocks)
  return list(block_widths)


def FullSubnet(topology):
  """Returns the unique width-1 subnet (the full network)."""
  return SubnetSpec(
      width=1.0,
      path_choices=tuple(
          tuple(range(block.n_paths)) for block in topology.blocks),
      channel_group_choices={
          layer.layer_id: tuple(range(topology.groups))
          for layer in topology.ParameterizedLayers()
      })


def EnumerateSubnets(topology, rho):
  """Yields every valid SubnetSpec of the topology at width rho.

  Only meant for small spaces (tests and exhaustive toy analyses).
  """
  k_groups = SelectionCount(topology.groups, rho)
  group_subsets = list(itertools.combinations(range(topology.groups), k_groups))
  block_options = []
  for b, block in enumerate(topology.blocks):
    options = []
    for kept in itertools.combinations(
        range(block.n_paths), SelectionCount(block.n_paths, rho)):
      layer_ids = [
          LayerId(b, p, i)
          for p in kept
          for i, layer in enumerate(block.paths[p])
          if layer.parameterized
      ]
      for choice in itertools.product(group_subsets, repeat=len(layer_ids)):
        options.append((kept, dict(zip(layer_ids, choice))))
    block_options.append(options)
  for combination in itertools.product(*block_options):
    groups = {}
    for _, block_groups in combination:
      groups.update(block_groups)
    yield SubnetSpec(
        width=rho,
        path_choices=tuple(kept for kept, _ in combination),
        channel_group_choices=groups)


def _RandomSubset(n, k, generator):
  return tuple(sorted(torch.randperm(n, generator=generator)[:k].tolist()))


def SampleUniformSubnet(topology, rho, generator, block_widths=None):
  """Draws a subnet uniformly among subsets of the mandated cardinalities.

  Args:
    topology: model topology.
    rho: subnet width.
    generator: torch.Generator driving the draw.
    block_widths: optional per-block widths (defaults to rho everywhere).

  Returns:
    SubnetSpec valid for the topology.
  """
  widths = _BlockWidths(topology, rho, block_widths)
  path_choices = []
  groups = {}
  for b, block in enumerate(topology.blocks):
    kept = _RandomSubset(block.n_paths,
                         SelectionCount(block.n_paths, widths[b]), generator)
    path_choices.append(kept)
    k_groups = SelectionCount(topology.groups, widths[b])
    for p in kept:
      for i, layer in enumerate(block.paths[p]):
        if layer.parameterized:
          groups[LayerId(b, p, i)] = _RandomSubset(topology.groups, k_groups,
                                                    generator)
  return SubnetSpec(
      width=rho,
      path_choices=tuple(path_choices),
      channel_group_choices=groups,
      block_widths=None if block_widths is None else tuple(block_widths))


def _LowestK(norms, k):
  # Stable sort keeps ties in index order.
  order = np.argsort(np.asarray(norms, dtype=np.float64), kind='stable')
  return tuple(sorted(int(i) for i in order[:k]))


def SubnetFromL1(model, rho):
  """Selects the subnet of lowest L1 weight norm.

  Each layer keeps the groups whose producing filters have the lowest summed
  absolute weight; each block keeps the paths of lowest total L1 norm
  (identity paths have norm 0). Ties go to the lowest index.

  Args:
    model: model_core.MaskableModel.
    rho: subnet width.

  Returns:
    SubnetSpec.
  """
  topology = model.topology
  k_groups = SelectionCount(topology.groups, rho)
  path_choices = []
  groups = {}
  for b, block in enumerate(topology.blocks):
    path_norms = []
    for p, path in enumerate(block.paths):
      total = 0.0
      for i, layer in enumerate(path):
        if layer.parameterized:
          total += float(model.FilterL1(LayerId(b, p, i)).sum())
      path_norms.append(total)
    kept = _LowestK(path_norms, SelectionCount(block.n_paths, rho))
    path_choices.append(kept)
    for p in kept:
      for i, layer in enumerate(block.paths[p]):
        if not layer.parameterized:
          continue
        layer_id = LayerId(b, p, i)
        filters = model.FilterL1(layer_id).double()
        group_norms = filters.view(topology.groups, -1).sum(dim=1).tolist()
        groups[layer_id] = _LowestK(group_norms, k_groups)
  return SubnetSpec(
      width=rho, path_choices=tuple(path_choices), channel_group_choices=groups)


def Validate(spec, topology):
  """Returns every invariant violation of spec against topology.

  Args:
    spec: SubnetSpec to check.
    topology: topology the spec should select from.

  Returns:
    List of human readable violations; empty if the spec is valid.
  """
  violations = []
  if not 0 < spec.width <= 1:
    violations.append(f'width {spec.width} outside (0, 1]')
  if len(spec.path_choices) != len(topology.blocks):
    violations.append(f'spec has {len(spec.path_choices)} blocks, topology '
                      f'has {len(topology.blocks)}')
    return violations
  if spec.block_widths is not None:
    if len(spec.block_widths) != len(topology.blocks):
      violations.append('block_widths length does not match block count')
      return violations
    for b, width in enumerate(spec.block_widths):
      if not 0 < width <= 1:
        violations.append(f'block {b}: width {width} outside (0, 1]')
    if violations:
      return violations

  expected_layers = set()
  for b, block in enumerate(topology.blocks):
    chosen = spec.path_choices[b]
    width = spec.BlockWidth(b)
    expected = SelectionCount(block.n_paths, width)
    bad = [p for p in chosen if not 0 <= p < block.n_paths]
    if bad:
      violations.append(f'block {b}: path indices {bad} out of range '
                        f'[0, {block.n_paths})')
    if len(set(chosen)) != len(chosen):
      violations.append(f'block {b}: duplicate path indices {list(chosen)}')
    if len(chosen) != expected:
      violations.append(f'block {b}: keeps {len(chosen)} paths, expected '
                        f'{expected}')
    k_groups = SelectionCount(topology.groups, width)
    for p in set(chosen) - set(bad):
      for i, layer in enumerate(block.paths[p]):
        if layer.parameterized:
          expected_layers.add((LayerId(b, p, i), k_groups))

  expected_ids = {layer_id for layer_id, _ in expected_layers}
  for layer_id in sorted(set(spec.channel_group_choices) - expected_ids):
    violations.append(f'layer {layer_id}: not a parameterized layer on a '
                      'selected path')
  for layer_id, k_groups in sorted(expected_layers):
    chosen = spec.channel_group_choices.get(layer_id)
    if chosen is None:
      violations.append(f'layer {layer_id}: missing channel group choice')
      continue
    if any(not 0 <= g < topology.groups for g in chosen):
      violations.append(f'layer {layer_id}: group indices {list(chosen)} out '
                        f'of range [0, {topology.groups})')
    if len(set(chosen)) != len(chosen):
      violations.append(f'layer {layer_id}: duplicate group indices '
                        f'{list(chosen)}')
    if len(chosen) != k_groups:
      violations.append(f'layer {layer_id}: keeps {len(chosen)} groups, '
                        f'expected {k_groups}')
  return violations


@dataclasses.dataclass(frozen=True)
class SubnetMasks(object):
  """Dense masks of a validated subnet.

  Attributes:
    paths: per block, one boolean per path.
    channels: layer id -> float tensor of 0/1 per output channel.
  """
  paths: Tuple[Tuple[bool, ...], ...]
  channels: Mapping[str, torch.Tensor]


def BuildMasks(spec, topology):
  """Expands group choices into per-channel masks (spec must be valid)."""
  paths = tuple(
      tuple(p in spec.path_choices[b] for p in range(block.n_paths))
      for b, block in enumerate(topology.blocks))
  channels = {}
  layers = {layer.layer_id: layer.layer
            for layer in topology.ParameterizedLayers()}
  for layer_id, chosen in spec.channel_group_choices.items():
    channel_count = layers[layer_id].channel_count
    group_size = channel_count // topology.groups
    mask = torch.zeros(topology.groups)
    mask[list(chosen)] = 1.0
    channels[layer_id] = mask.repeat_interleave(group_size)
  return SubnetMasks(paths=paths, channels=channels)


def ToDict(spec):
  data = {
      'width': float(spec.width),
      'paths': {b: list(chosen) for b, chosen in enumerate(spec.path_choices)},
      'groups': {
          layer_id: list(chosen)
          for layer_id, chosen in sorted(spec.channel_group_choices.items())
      },
  }
  if spec.block_widths is not None:
    data['block_widths'] = [float(w) for w in spec.block_widths]
  return data


def FromDict(data):
  """Rebuilds a SubnetSpec from its record.

  Raises:
    SpecFormatError: if the record is malformed.
  """
  try:
    paths = data['paths']
    block_widths = data.get('block_widths')
    return SubnetSpec(
        width=float(data['width']),
        path_choices=tuple(
            tuple(int(p) for p in paths[b]) for b in sorted(paths, key=int)),
        channel_group_choices={
            str(layer_id): tuple(int(g) for g in chosen)
            for layer_id, chosen in data['groups'].items()
        },
        block_widths=None if block_widths is None else tuple(
            float(w) for w in block_widths))
  except (KeyError, TypeError, ValueError, AttributeError) as e:
    raise SpecFormatError(f'Malformed subnet record: {e!r}')


def Dump(spec):
  """Returns the single-line structured-text record of the spec."""
  return yaml.safe_dump(ToDict(spec), default_flow_style=True,
                        width=1 << 20).strip()


def Load(text):
  return FromDict(yaml.safe_load(text))
