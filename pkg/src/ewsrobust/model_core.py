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

"""Maskable block/path/channel structured classifiers and elementary losses.

A MaskableModel is built from a topology.ModelTopology. It runs either the
full network or a subnet: deselected paths are skipped (they contribute
exactly zero to their block) and deselected channels are zeroed right after
the layer producing them. No dropout-style rescaling is applied, so a subnet
is a pure restriction of the full network.

Normalization under masking: in train mode a masked forward normalizes with
the statistics of the masked activations of the current batch but leaves the
running statistics untouched; in eval mode full and masked forwards share the
full model's running statistics.

Example Usage:

  model = MaskableModel(topology.ResNetTopology())
  logits = model.ForwardFull(images)
  sub_logits = model.ForwardMasked(images, spec)
  loss = CrossEntropy(logits, labels) + KlDivergence(logits, sub_logits)
"""

import contextlib
import dataclasses
import hashlib
import os
from typing import Callable, Optional

import torch
from torch import nn
import torch.nn.functional as F

from . import subnet_space
from . import topology as topology_lib

CHECKPOINT_FORMAT_VERSION = 1


class Error(Exception):
  """Generic error class that other errors in this module inherit from."""
  pass


class ShapeMismatchError(Error):
  """Thrown when an input batch does not match the topology."""
  pass


class InvalidSubnetError(Error):
  """Thrown when a SubnetSpec does not validate against the topology."""

  def __init__(self, violations):
    super().__init__('Invalid subnet: ' + '; '.join(violations))
    self.violations = list(violations)


class LabelRangeError(Error):
  """Thrown when a label lies outside [0, num_classes)."""
  pass


class CheckpointError(Error):
  """Thrown when a checkpoint cannot be read."""
  pass


class MaskableNorm(nn.Module):
  """Batch normalization that can skip running statistic updates."""

  def __init__(self, channels, spatial):
    super().__init__()
    self.bn = nn.BatchNorm2d(channels) if spatial else nn.BatchNorm1d(channels)

  def forward(self, x, update_stats=True):
    if not self.training or update_stats:
      return self.bn(x)
    return F.batch_norm(x, None, None, self.bn.weight, self.bn.bias, True, 0.0,
                        self.bn.eps)


class MaskableLayer(nn.Module):
  """Pre-activation layer: (norm) -> ReLU -> op -> channel mask."""

  def __init__(self, layer, in_channels, stride, use_norm):
    super().__init__()
    spatial = layer.kind == topology_lib.LayerKind.CONV
    self.norm = MaskableNorm(in_channels, spatial) if use_norm else None
    if spatial:
      self.op = nn.Conv2d(
          in_channels,
          layer.channel_count,
          layer.kernel_size,
          stride=stride,
          padding=layer.kernel_size // 2,
          bias=False)
    else:
      self.op = nn.Linear(in_channels, layer.channel_count)

  def forward(self, x, channel_mask=None, update_stats=True):
    if self.norm is not None:
      x = self.norm(x, update_stats)
    x = self.op(F.relu(x))
    if channel_mask is not None:
      shape = (1, -1, 1, 1) if x.dim() == 4 else (1, -1)
      x = x * channel_mask.to(dtype=x.dtype, device=x.device).view(shape)
    return x


def _Shortcut(x, out_channels, downsamples):
  """Parameter-free identity path: subsample and zero-pad channels."""
  if downsamples:
    x = x[:, :, ::2, ::2]
  pad = out_channels - x.shape[1]
  if pad > 0:
    if x.dim() == 4:
      x = F.pad(x, (0, 0, 0, 0, 0, pad))
    else:
      x = F.pad(x, (0, pad))
  return x


class MaskableBlock(nn.Module):
  """Sums the outputs of the selected paths."""

  def __init__(self, block, block_index, in_channels, out_channels, use_norm):
    super().__init__()
    self.block = block
    self.out_channels = out_channels
    self.layer_ids = []
    self.paths = nn.ModuleList()
    for p, path in enumerate(block.paths):
      layers = nn.ModuleList()
      ids = []
      channels = in_channels
      first = True
      for i, layer in enumerate(path):
        if not layer.parameterized:
          continue
        stride = 2 if block.downsamples and first else 1
        layers.append(MaskableLayer(layer, channels, stride, use_norm))
        ids.append(topology_lib.LayerId(block_index, p, i))
        channels = layer.channel_count
        first = False
      self.paths.append(layers)
      self.layer_ids.append(ids)

  def forward(self, x, path_mask=None, channel_masks=None, update_stats=True):
    out = None
    for p, layers in enumerate(self.paths):
      if path_mask is not None and not path_mask[p]:
        continue
      if not len(layers):
        h = _Shortcut(x, self.out_channels, self.block.downsamples)
      else:
        h = x
        for layer_id, layer in zip(self.layer_ids[p], layers):
          mask = channel_masks.get(layer_id) if channel_masks else None
          h = layer(h, mask, update_stats)
      out = h if out is None else out + h
    return out


class MaskableModel(nn.Module):
  """Classifier whose paths and channel groups can be masked.

  Attributes:
    topology: the ModelTopology the parameters were built from.
    dropout_rate: channel dropout applied to block outputs in train mode
        (dropout baseline only; 0 disables it).
  """

  def __init__(self, topology, dropout_rate=0.0):
    super().__init__()
    self.topology = topology.Check()
    self.dropout_rate = dropout_rate
    height, width, channels = topology.input_shape
    self._input_shape = (channels, height, width)

    self.stem = None
    if topology.stem_channels:
      self.stem = nn.Conv2d(
          channels, topology.stem_channels, 3, padding=1, bias=False)

    self.blocks = nn.ModuleList()
    self._layers = {}
    for b, (block, (in_channels, out_channels)) in enumerate(
        zip(topology.blocks, topology.BlockChannels())):
      module = MaskableBlock(block, b, in_channels, out_channels,
                             topology.use_norm)
      self.blocks.append(module)
      for ids, layers in zip(module.layer_ids, module.paths):
        self._layers.update(zip(ids, layers))

    self._spatial_head = not any(
        block.IsFullyConnected() for block in topology.blocks)
    features = topology.FeatureChannels()
    self.head_norm = (
        MaskableNorm(features, self._spatial_head)
        if topology.use_norm else None)
    self.head = nn.Linear(features, topology.num_classes)

  def CheckInput(self, x):
    if tuple(x.shape[1:]) != self._input_shape:
      raise ShapeMismatchError(
          f'Input of shape {tuple(x.shape)} does not match (batch,) + '
          f'{self._input_shape}')

  def Layer(self, layer_id):
    return self._layers[layer_id]

  def FilterL1(self, layer_id):
    """Returns the L1 norm of every output filter of a layer."""
    weight = self._layers[layer_id].op.weight.detach()
    return weight.abs().reshape(weight.shape[0], -1).sum(dim=1)

  def forward(self, x, masks=None):
    self.CheckInput(x)
    update_stats = masks is None
    if self.stem is not None:
      x = self.stem(x)
    for b, block in enumerate(self.blocks):
      if self.topology.blocks[b].IsFullyConnected() and x.dim() == 4:
        x = x.mean(dim=(2, 3))
      x = block(x, masks.paths[b] if masks else None,
                masks.channels if masks else None, update_stats)
      if self.training and self.dropout_rate > 0:
        if x.dim() == 4:
          x = F.dropout2d(x, self.dropout_rate, training=True)
        else:
          x = F.dropout(x, self.dropout_rate, training=True)
    if self.head_norm is not None:
      x = self.head_norm(x, update_stats)
    x = F.relu(x)
    if x.dim() == 4:
      x = x.mean(dim=(2, 3))
    return self.head(x)

  def ForwardFull(self, x):
    """Returns the logits of the full network."""
    return self(x)

  def ForwardMasked(self, x, spec):
    """Returns the logits of the subnet described by spec.

    Raises:
      InvalidSubnetError: if spec does not validate against the topology.
      ShapeMismatchError: if x does not match the topology input shape.
    """
    violations = subnet_space.Validate(spec, self.topology)
    if violations:
      raise InvalidSubnetError(violations)
    return self(x, subnet_space.BuildMasks(spec, self.topology))


@contextlib.contextmanager
def EvalMode(model):
  """Puts the model in eval mode for the duration of the block."""
  was_training = model.training
  model.eval()
  try:
    yield model
  finally:
    model.train(was_training)


def CrossEntropy(logits, labels):
  """Mean negative log-likelihood of the labels.

  Raises:
    LabelRangeError: if a label lies outside [0, num_classes).
  """
  num_classes = logits.shape[-1]
  if labels.numel() and (int(labels.min()) < 0 or
                         int(labels.max()) >= num_classes):
    raise LabelRangeError(
        f'Labels must lie in [0, {num_classes}), got range '
        f'[{int(labels.min())}, {int(labels.max())}]')
  return F.cross_entropy(logits, labels)


def KlDivergence(teacher_logits, student_logits, detach_teacher=True):
  """Batch mean of KL(softmax(teacher) || softmax(student)).

  Args:
    teacher_logits: logits defining the target distribution p.
    student_logits: logits defining q.
    detach_teacher: if true, no gradient flows into the teacher logits.

  Returns:
    Non-negative scalar tensor.

  Raises:
    ShapeMismatchError: if the logit shapes differ.
  """
  if teacher_logits.shape != student_logits.shape:
    raise ShapeMismatchError(
        f'Teacher logits {tuple(teacher_logits.shape)} and student logits '
        f'{tuple(student_logits.shape)} differ in shape')
  if detach_teacher:
    teacher_logits = teacher_logits.detach()
  return F.kl_div(
      F.log_softmax(student_logits, dim=-1),
      F.log_softmax(teacher_logits, dim=-1),
      reduction='batchmean',
      log_target=True)


def Accuracy(logits, labels):
  """Fraction of samples whose argmax (lowest index on ties) is the label."""
  if not labels.numel():
    return 0.0
  return float((logits.argmax(dim=-1) == labels).double().mean())


@dataclasses.dataclass
class LossComponents(object):
  """Scalar parts of a training loss, for logging.

  Attributes:
    total: the optimized loss (a tensor, keeps the graph).
    ce: cross entropy of the full network.
    kl: distillation KL between full network and subnet (0 without subnet).
    robust_kl: TRADES KL between clean and adversarial predictions.
    restore: undoes a weight perturbation; called after the optimizer step.
  """
  total: torch.Tensor
  ce: float
  kl: float = 0.0
  robust_kl: float = 0.0
  restore: Optional[Callable[[], None]] = None


def StateDictHash(model):
  """SHA-256 over every named tensor (parameters and buffers) of the model."""
  digest = hashlib.sha256()
  for name, tensor in sorted(model.state_dict().items()):
    digest.update(name.encode())
    digest.update(tensor.detach().cpu().contiguous().numpy().tobytes())
  return digest.hexdigest()


def SaveCheckpoint(path, model, step=0, **extra):
  """Writes a versioned checkpoint container.

  The container holds the topology descriptor, all named tensors (running
  normalization statistics included), the training step and any extra
  entries (optimizer, policy, config echo, random states).
  """
  payload = {
      'format_version': CHECKPOINT_FORMAT_VERSION,
      'topology': topology_lib.Dump(model.topology),
      'dropout_rate': model.dropout_rate,
      'state_dict': model.state_dict(),
      'step': int(step),
  }
  payload.update(extra)
  tmp_path = f'{path}.tmp'
  torch.save(payload, tmp_path)
  os.replace(tmp_path, path)


def ReadCheckpoint(path):
  """Returns the payload of a checkpoint written by SaveCheckpoint.

  Raises:
    CheckpointError: if the file is missing, unreadable or of another format.
  """
  try:
    payload = torch.load(path, map_location='cpu', weights_only=False)
  except (OSError, RuntimeError, EOFError) as e:
    raise CheckpointError(f'Cannot read checkpoint {path}: {e}')
  version = payload.get('format_version')
  if version != CHECKPOINT_FORMAT_VERSION:
    raise CheckpointError(
        f'Checkpoint {path} has format version {version}, expected '
        f'{CHECKPOINT_FORMAT_VERSION}')
  return payload


def LoadCheckpoint(path):
  """Reads a checkpoint written by SaveCheckpoint.

  Returns:
    (model, payload) tuple; the model is restored in eval mode.

  Raises:
    CheckpointError: if the file is missing, unreadable or of another format.
  """
  payload = ReadCheckpoint(path)
  model = MaskableModel(
      topology_lib.Load(payload['topology']),
      dropout_rate=payload.get('dropout_rate', 0.0))
  model.load_state_dict(payload['state_dict'])
  model.eval()
  return model, payload
