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

"""Static description of block/path/layer structured classifiers.

A topology is data, not code: any network expressible as a sequence of blocks,
each summing the outputs of one or more parallel paths, can be built by
model_core.MaskableModel and searched by the controller.

Example Usage:

  topology = ResNetTopology(stage_channels=(16, 32, 64), blocks_per_stage=2)
  topology.Check()
  text = Dump(topology)
  assert Load(text) == topology
"""

import dataclasses
import enum
from typing import Tuple

import yaml


class Error(Exception):
  """Generic error class that other errors in this module inherit from."""
  pass


class TopologyError(Error):
  """Thrown when a topology violates a structural invariant."""

  def __init__(self, violations):
    super().__init__('Invalid topology: ' + '; '.join(violations))
    self.violations = list(violations)


class LayerKind(str, enum.Enum):
  CONV = 'conv'
  FC = 'fc'
  IDENTITY = 'identity'


@dataclasses.dataclass(frozen=True)
class LayerTopology(object):
  kind: LayerKind
  channel_count: int = 0
  kernel_size: int = 3

  @property
  def parameterized(self):
    return self.kind != LayerKind.IDENTITY


@dataclasses.dataclass(frozen=True)
class BlockTopology(object):
  """One block: parallel paths whose outputs are summed.

  A path with no parameterized layers is an identity (skip) path. It
  subsamples spatially when the block downsamples and zero-pads channels when
  the block widens.
  """
  paths: Tuple[Tuple[LayerTopology, ...], ...]
  downsamples: bool = False

  @property
  def n_paths(self):
    return len(self.paths)

  def IsIdentityPath(self, path_index):
    return not any(layer.parameterized for layer in self.paths[path_index])

  def IsFullyConnected(self):
    return any(layer.kind == LayerKind.FC
               for path in self.paths
               for layer in path)


@dataclasses.dataclass(frozen=True)
class ParameterizedLayer(object):
  layer_id: str
  block: int
  path: int
  index: int
  layer: LayerTopology


@dataclasses.dataclass(frozen=True)
class ModelTopology(object):
  """Full network description.

  Attributes:
    blocks: ordered blocks.
    input_shape: (height, width, channels) of the input images.
    num_classes: number of output classes.
    stem_channels: output channels of the unmasked 3x3 stem convolution, or 0
        for no stem.
    groups: number of contiguous channel groups G per parameterized layer.
    use_norm: whether layers carry batch normalization.
  """
  blocks: Tuple[BlockTopology, ...]
  input_shape: Tuple[int, int, int]
  num_classes: int
  stem_channels: int = 0
  groups: int = 4
  use_norm: bool = True

  def InputChannels(self):
    return self.stem_channels if self.stem_channels else self.input_shape[2]

  def BlockChannels(self):
    """Returns [(in_channels, out_channels)] per block."""
    channels = []
    current = self.InputChannels()
    for block in self.blocks:
      out = current
      for path in block.paths:
        widths = [layer.channel_count for layer in path if layer.parameterized]
        if widths:
          out = widths[-1]
          break
      channels.append((current, out))
      current = out
    return channels

  def FeatureChannels(self):
    """Returns the width of the features entering the classifier head."""
    channels = self.BlockChannels()
    return channels[-1][1] if channels else self.InputChannels()

  def ParameterizedLayers(self):
    """Returns every parameterized layer in (block, path, layer) order."""
    layers = []
    for b, block in enumerate(self.blocks):
      for p, path in enumerate(block.paths):
        for i, layer in enumerate(path):
          if layer.parameterized:
            layers.append(
                ParameterizedLayer(LayerId(b, p, i), b, p, i, layer))
    return layers

  def Violations(self):
    """Returns the list of structural invariant violations (empty if ok)."""
    violations = []
    if len(self.input_shape) != 3 or min(self.input_shape) < 1:
      violations.append(f'input_shape {self.input_shape} must be 3 positive '
                        'integers (height, width, channels)')
    if self.num_classes < 1:
      violations.append(f'num_classes must be positive, got {self.num_classes}')
    if self.groups < 1:
      violations.append(f'groups must be positive, got {self.groups}')
      return violations

    seen_fc = False
    channels = self.BlockChannels()
    for b, block in enumerate(self.blocks):
      in_channels, out_channels = channels[b]
      if block.n_paths < 1:
        violations.append(f'block {b} has no paths')
        continue
      fc = block.IsFullyConnected()
      if fc and any(layer.kind == LayerKind.CONV
                    for path in block.paths
                    for layer in path):
        violations.append(f'block {b} mixes conv and fc layers')
      if seen_fc and not fc and any(
          not block.IsIdentityPath(p) for p in range(block.n_paths)):
        violations.append(f'block {b} is convolutional after an fc block')
      if fc and block.downsamples:
        violations.append(f'block {b} is fully connected and cannot downsample')
      seen_fc = seen_fc or fc

      for p, path in enumerate(block.paths):
        if block.IsIdentityPath(p):
          if out_channels < in_channels:
            violations.append(
                f'block {b} path {p}: identity path cannot shrink '
                f'{in_channels} to {out_channels} channels')
          continue
        widths = [layer.channel_count for layer in path if layer.parameterized]
        if widths[-1] != out_channels:
          violations.append(
              f'block {b} path {p} outputs {widths[-1]} channels, '
              f'expected {out_channels}')
        for i, layer in enumerate(path):
          if not layer.parameterized:
            continue
          if layer.channel_count < 1:
            violations.append(f'layer {LayerId(b, p, i)} has channel_count '
                              f'{layer.channel_count}')
          elif layer.channel_count % self.groups:
            violations.append(
                f'layer {LayerId(b, p, i)} channel_count '
                f'{layer.channel_count} not divisible by {self.groups} groups')
          if layer.kernel_size < 1 or layer.kernel_size % 2 == 0:
            violations.append(f'layer {LayerId(b, p, i)} kernel_size must be '
                              'a positive odd integer')
    return violations

  def Check(self):
    """Raises TopologyError if any invariant is violated."""
    violations = self.Violations()
    if violations:
      raise TopologyError(violations)
    return self


def LayerId(block, path, index):
  return f'b{block}.p{path}.l{index}'


def ResNetTopology(stage_channels=(16, 32, 64),
                   blocks_per_stage=2,
                   num_classes=10,
                   input_shape=(32, 32, 3),
                   groups=4):
  """Builds the reference pre-activation residual network.

  Every block has a two-layer 3x3 conv path and an identity path. The first
  block of every stage but the first downsamples.
  """
  blocks = []
  for stage, channels in enumerate(stage_channels):
    for index in range(blocks_per_stage):
      downsamples = stage > 0 and index == 0
      conv_path = (LayerTopology(LayerKind.CONV, channels),
                   LayerTopology(LayerKind.CONV, channels))
      blocks.append(BlockTopology(paths=(conv_path, ()),
                                  downsamples=downsamples))
  return ModelTopology(
      blocks=tuple(blocks),
      input_shape=tuple(input_shape),
      num_classes=num_classes,
      stem_channels=stage_channels[0],
      groups=groups).Check()


def ToDict(topology):
  return {
      'input_shape': list(topology.input_shape),
      'num_classes': topology.num_classes,
      'stem_channels': topology.stem_channels,
      'groups': topology.groups,
      'use_norm': topology.use_norm,
      'blocks': [{
          'downsamples': block.downsamples,
          'paths': [[{
              'kind': layer.kind.value,
              'channel_count': layer.channel_count,
              'kernel_size': layer.kernel_size,
          } for layer in path] for path in block.paths],
      } for block in topology.blocks],
  }


def FromDict(data):
  """Builds a ModelTopology from its descriptor dictionary.

  Raises:
    TopologyError: if the descriptor is malformed or the topology invalid.
  """
  try:
    blocks = tuple(
        BlockTopology(
            paths=tuple(
                tuple(
                    LayerTopology(
                        kind=LayerKind(layer['kind']),
                        channel_count=int(layer.get('channel_count', 0)),
                        kernel_size=int(layer.get('kernel_size', 3)))
                    for layer in path)
                for path in block['paths']),
            downsamples=bool(block.get('downsamples', False)))
        for block in data['blocks'])
    topology = ModelTopology(
        blocks=blocks,
        input_shape=tuple(int(x) for x in data['input_shape']),
        num_classes=int(data['num_classes']),
        stem_channels=int(data.get('stem_channels', 0)),
        groups=int(data.get('groups', 4)),
        use_norm=bool(data.get('use_norm', True)))
  except (KeyError, TypeError, ValueError) as e:
    raise TopologyError([f'malformed descriptor: {e!r}'])
  return topology.Check()


def Dump(topology):
  """Returns the structured-text (YAML) descriptor of the topology."""
  return yaml.safe_dump(ToDict(topology), sort_keys=True)


def Load(text):
  return FromDict(yaml.safe_load(text))
