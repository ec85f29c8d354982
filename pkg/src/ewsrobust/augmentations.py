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

"""Named training-time augmentations.

An augmentation is any callable (images, generator) -> images working on a
float batch of shape (N, C, H, W) in [0, 1]. It is applied to training batches
before the forward pass. Users add their own with Register().

Example Usage:

  augmentations.Register('flip_only', lambda: FlipOnly)
  augment = augmentations.Get(config.augmentation)
  images = augment(images, generator)
"""

import functools

import torch
import torch.nn.functional as F


class Error(Exception):
  """Generic error class that other errors in this module inherit from."""
  pass


class UnknownAugmentationError(Error):
  """Thrown when an augmentation name is not registered."""
  pass


_REGISTRY = {}


def Register(name, factory):
  """Registers factory() as the augmentation called name."""
  _REGISTRY[name] = factory


def Names():
  return sorted(_REGISTRY)


def Get(name, **kwargs):
  """Builds the registered augmentation.

  Raises:
    UnknownAugmentationError: if name is not registered.
  """
  if name not in _REGISTRY:
    raise UnknownAugmentationError(
        f'Unknown augmentation {name!r}, known: {", ".join(Names())}')
  return _REGISTRY[name](**kwargs)


def Identity(images, unused_generator=None):
  return images


def GaussianNoise(images, generator, sigma=0.1):
  noise = torch.randn(images.shape, generator=generator, dtype=images.dtype)
  return (images + sigma * noise.to(images.device)).clamp(0.0, 1.0)


def CropFlip(images, generator, padding=4):
  """Random crop after zero padding, then random horizontal flip."""
  n, _, height, width = images.shape
  padded = F.pad(images, (padding,) * 4)
  offsets = torch.randint(0, 2 * padding + 1, (n, 2), generator=generator)
  flips = torch.rand(n, generator=generator) < 0.5
  out = torch.empty_like(images)
  for i in range(n):
    top, left = int(offsets[i, 0]), int(offsets[i, 1])
    crop = padded[i, :, top:top + height, left:left + width]
    out[i] = crop.flip(-1) if flips[i] else crop
  return out


Register('none', lambda: Identity)
Register('gaussian_noise',
         lambda sigma=0.1: functools.partial(GaussianNoise, sigma=sigma))
Register('crop_flip',
         lambda padding=4: functools.partial(CropFlip, padding=padding))
