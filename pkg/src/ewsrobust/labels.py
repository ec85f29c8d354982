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

"""Defines the well known labels written to metrics logs and run files.

These strings are part of the on-disk metrics format. Plotting and analysis
read them back, so they must stay stable across versions.
"""


class Metric(object):
  CLEAN_ERROR = 'clean_error'
  CORRUPTION_ERROR = 'corruption_error'
  ROBUST_ERROR = 'robust_error'
  SUBNET_MEAN_ACC = 'subnet_mean_acc'
  WALLCLOCK_S = 'wallclock_s'
  TRAIN_LOSS = 'train_loss'
  TRAIN_CE = 'train_ce'
  TRAIN_KL = 'train_kl'
  MCE = 'mce'
  CONTROLLER_REWARD = 'controller_reward'

  SET_ALL = frozenset([
      'clean_error',
      'corruption_error',
      'robust_error',
      'subnet_mean_acc',
      'wallclock_s',
      'train_loss',
      'train_ce',
      'train_kl',
      'mce',
      'controller_reward',
  ])

  # Metrics expressed in percent and bounded to [0, 100].
  SET_PERCENT = frozenset([
      'clean_error',
      'corruption_error',
      'robust_error',
  ])


class Split(object):
  TRAIN = 'train'
  VAL = 'val'
  TEST = 'test'

  SET_ALL = frozenset([
      'train',
      'val',
      'test',
  ])


class Stream(object):
  """Labels of the independent random streams of a run."""
  DATA = 'data'
  TRAIN = 'train'
  CONTROLLER = 'controller'
  SUBNET = 'subnet'
  ATTACK = 'attack'
  CORRUPTION = 'corruption'
  AUGMENTATION = 'augmentation'
  DROPOUT = 'dropout'
  ANALYSIS = 'analysis'


def AttackId(steps):
  """Returns the attack id logged for a PGD attack with the given steps."""
  return f'pgd{steps}'


# Pseudo corruption id for the mean over all (kind, severity) cells.
MEAN_CORRUPTION_ID = 'mean'
