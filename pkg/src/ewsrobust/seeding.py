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

"""Derives independent random streams from a single run seed.

Every stochastic component of a run (data order, controller sampling, subnet
sampling, attacks, corruptions, augmentation, dropout) draws from its own
generator. Streams are derived by labelled sub-seeding so that toggling one
component never perturbs the draws of another.

Example Usage:

  seeds = SeedHierarchy(7)
  generator = seeds.Generator(labels.Stream.CONTROLLER)
  order = torch.randperm(10, generator=generator)
"""

import hashlib

import torch


def DeriveSeed(root_seed, *path):
  """Returns a 63-bit seed derived from the root seed and a label path.

  Args:
    root_seed: integer seed of the run.
    *path: labels (strings or integers) identifying the stream.

  Returns:
    Non-negative integer suitable for torch.Generator.manual_seed.
  """
  key = ':'.join(str(part) for part in (root_seed,) + path)
  digest = hashlib.sha256(key.encode()).digest()
  return int.from_bytes(digest[:8], 'big') & ((1 << 63) - 1)


class SeedHierarchy(object):
  """Hands out seeded generators for labelled streams of one run."""

  def __init__(self, root_seed):
    self.root_seed = int(root_seed)

  def Seed(self, *path):
    return DeriveSeed(self.root_seed, *path)

  def Generator(self, *path):
    """Returns a fresh CPU torch.Generator for the labelled stream."""
    generator = torch.Generator()
    generator.manual_seed(self.Seed(*path))
    return generator

  def SeedGlobal(self, *path):
    """Seeds torch's global generator (used by functional dropout)."""
    torch.manual_seed(self.Seed(*path))
