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

"""Reads a flat YAML run configuration into a TrainConfig.

Example Usage:
  try:
    config = config_reader.OpenAndRead('desk_ews.yaml')
    config = config_reader.ApplyOverrides(config, ['lambda=0', 'seed=3'])
  except config_reader.Error as e:
    ...

  trainer = ews_train.Trainer(model, config, dataset)
"""

import dataclasses
from typing import List

from absl import logging
import yaml


class Error(Exception):
  """Generic error class that other errors in this module inherit from."""
  pass


class YAMLLoadError(Error):
  """Thrown when reading an opened file fails."""
  pass


class ParseError(Error):
  """Thrown when there is a problem with the YAML structure."""
  pass


class UnknownConfigKeyError(Error):
  """Thrown when the YAML contains unsupported keys (all are listed)."""
  pass


class InvalidValueError(Error):
  """Thrown when values have the wrong type or violate a constraint."""
  pass


class OverrideSyntaxError(Error):
  """Thrown when a --set override is not of the form key=value."""
  pass


SUBNET_SOURCES = ('controller', 'uniform_random', 'l1', 'none')
METHODS = ('ews', 'dropout')
TRAIN_MODES = ('standard', 'adversarial', 'trades')
DATASET_FORMATS = ('synthetic', 'folder', 'packed')
CORRUPTION_KINDS = ('gaussian_noise', 'shot_noise', 'impulse_noise',
                    'gaussian_blur', 'contrast', 'brightness', 'pixelate',
                    'jpeg_like')


@dataclasses.dataclass(frozen=True)
class TrainConfig(object):
  """All scalars of a training run.

  Field names are the canonical file keys, except `lam` which is written as
  `lambda` in files.
  """
  # Training by enhancing weak subnets.
  lam: float = 1.0
  controller_interval: int = 10
  width: float = 0.7
  batch_size: int = 128
  controller_batch: int = 8
  lr: float = 0.1
  controller_lr: float = 3.5e-4
  epochs: int = 40
  max_steps: int = 0
  seed: int = 0
  weight_decay: float = 5e-4
  momentum: float = 0.9
  subnet_source: str = 'controller'
  method: str = 'ews'
  dropout_rate: float = 0.3
  augmentation: str = 'none'
  controller_hidden: int = 64
  baseline_decay: float = 0.9
  log_every: int = 50
  eval_batch_size: int = 256

  # Adversarial training.
  train_mode: str = 'standard'
  epsilon: float = 8 / 255
  attack_steps: int = 10
  eval_attack_steps: int = 20
  attack_step_size: float = 0.0
  random_start: bool = True
  trades_beta: float = 6.0

  # Model.
  stage_channels: List[int] = (16, 32, 64)
  blocks_per_stage: int = 2
  groups: int = 4

  # Data.
  dataset: str = 'synthetic'
  dataset_format: str = 'synthetic'
  synthetic_classes: int = 10
  synthetic_samples: int = 2000
  image_size: int = 32
  val_fraction: float = 0.1
  test_fraction: float = 0.2

  # Corruption suite.
  corruption_kinds: List[str] = CORRUPTION_KINDS
  corruption_severities: List[int] = (1, 2, 3, 4, 5)

  @property
  def step_size(self):
    """PGD step size; 0 in the file means epsilon / 4."""
    return self.attack_step_size or self.epsilon / 4


# Alternative spellings accepted in files and overrides.
_KEY_ALIASES = {
    'lambda': 'lam',
    'K': 'controller_interval',
    'rho': 'width',
    'N': 'batch_size',
    'C': 'controller_batch',
    'T': 'max_steps',
    'eta_model': 'lr',
    'eta_controller': 'controller_lr',
}

_FIELDS = {field.name: field for field in dataclasses.fields(TrainConfig)}


def OpenAndRead(path):
  """Attempts to open the configuration file, then read it.

  Args:
    path: path of the YAML file.

  Returns:
    A TrainConfig if the open and read were successful, None if the file
    does not exist.

  Raises:
    Error (some subclass): As thrown by the called Read() function.
  """
  try:
    with open(path, 'r', encoding='utf-8') as f:
      return Read(f)
  except FileNotFoundError:
    return None


def Read(f):
  """Reads and returns a TrainConfig from a yaml file.

  Args:
    f: Yaml file to parse.

  Returns:
    TrainConfig with defaults for every key the file omits.

  Raises:
    Error (some subclass): If there is a problem loading or parsing the file.
  """
  try:
    yaml_data = yaml.safe_load(f)
  except yaml.YAMLError as e:
    raise ParseError('%s' % e)
  except IOError as e:
    raise YAMLLoadError('%s' % e)

  if yaml_data is None:
    yaml_data = {}
  if not isinstance(yaml_data, dict):
    raise ParseError('Configuration must be a flat key/value mapping')
  return FromDict(yaml_data)


def _CanonicalKey(key):
  return _KEY_ALIASES.get(key, key)


def _CheckValue(name, value):
  """Returns (converted value, error or None) for one field."""
  default = _FIELDS[name].default
  if isinstance(default, bool):
    if isinstance(value, bool):
      return value, None
    return value, f'{name} must be a boolean, got {value!r}'
  if isinstance(default, int):
    if isinstance(value, int) and not isinstance(value, bool):
      return value, None
    return value, f'{name} must be an integer, got {value!r}'
  if isinstance(default, float):
    if isinstance(value, (int, float)) and not isinstance(value, bool):
      return float(value), None
    return value, f'{name} must be a number, got {value!r}'
  if isinstance(default, str):
    if isinstance(value, str):
      return value, None
    return value, f'{name} must be a string, got {value!r}'
  # Lists share the element type of the default.
  element_type = type(default[0])
  if isinstance(value, str) and element_type is not str:
    value = [item.strip() for item in value.split(',') if item.strip()]
    try:
      value = [element_type(item) for item in value]
    except ValueError:
      return value, f'{name} must be a list of {element_type.__name__}'
  if isinstance(value, str):
    value = [item.strip() for item in value.split(',') if item.strip()]
  if not isinstance(value, (list, tuple)) or not all(
      isinstance(item, element_type) and not isinstance(item, bool)
      for item in value):
    return value, f'{name} must be a list of {element_type.__name__}'
  return tuple(value), None


def FromDict(data):
  """Builds and validates a TrainConfig from a key/value mapping.

  Raises:
    UnknownConfigKeyError: listing every unknown key.
    InvalidValueError: listing every bad value.
  """
  unknown_keys = sorted(
      str(key) for key in data if _CanonicalKey(key) not in _FIELDS)
  if unknown_keys:
    raise UnknownConfigKeyError('Unknown keys in configuration: %s' %
                                ', '.join(unknown_keys))

  values = {}
  errors = []
  for key, value in data.items():
    name = _CanonicalKey(key)
    value, error = _CheckValue(name, value)
    if error:
      errors.append(error)
    values[name] = value
  if errors:
    raise InvalidValueError('; '.join(errors))

  return Normalize(TrainConfig(**values))


def Normalize(config):
  """Checks constraints and enforces subnet_source=none iff lambda=0.

  Raises:
    InvalidValueError: listing every violated constraint.
  """
  errors = []
  if config.lam < 0:
    errors.append(f'lambda must be >= 0, got {config.lam}')
  if config.controller_interval < 1:
    errors.append(f'K must be >= 1, got {config.controller_interval}')
  if not 0 < config.width <= 1:
    errors.append(f'rho must lie in (0, 1], got {config.width}')
  for name in ('batch_size', 'controller_batch', 'eval_batch_size',
               'controller_hidden', 'log_every', 'groups', 'blocks_per_stage',
               'synthetic_classes', 'synthetic_samples', 'image_size',
               'attack_steps', 'eval_attack_steps'):
    if getattr(config, name) < 1:
      errors.append(f'{name} must be >= 1, got {getattr(config, name)}')
  for name in ('epochs', 'max_steps'):
    if getattr(config, name) < 0:
      errors.append(f'{name} must be >= 0, got {getattr(config, name)}')
  for name, choices in (('subnet_source', SUBNET_SOURCES),
                        ('method', METHODS), ('train_mode', TRAIN_MODES),
                        ('dataset_format', DATASET_FORMATS)):
    if getattr(config, name) not in choices:
      errors.append(f'{name} must be one of {", ".join(choices)}, got '
                    f'{getattr(config, name)!r}')
  if not 0 <= config.dropout_rate <= 1:
    errors.append(f'dropout_rate must lie in [0, 1], got {config.dropout_rate}')
  if config.epsilon < 0:
    errors.append(f'epsilon must be >= 0, got {config.epsilon}')
  if config.attack_step_size < 0 or (
      config.epsilon > 0 and config.attack_step_size > config.epsilon):
    errors.append(f'attack_step_size must lie in (0, epsilon], got '
                  f'{config.attack_step_size}')
  if config.trades_beta <= 0:
    errors.append(f'trades_beta must be > 0, got {config.trades_beta}')
  if not 0 <= config.val_fraction < 1 or not 0 <= config.test_fraction < 1:
    errors.append('val_fraction and test_fraction must lie in [0, 1)')
  if not config.stage_channels or any(c < 1 for c in config.stage_channels):
    errors.append('stage_channels must be a non-empty list of positive ints')
  unknown_kinds = sorted(set(config.corruption_kinds) - set(CORRUPTION_KINDS))
  if unknown_kinds:
    errors.append(f'unknown corruption kinds: {", ".join(unknown_kinds)}')
  if any(not 1 <= s <= 5 for s in config.corruption_severities):
    errors.append('corruption_severities must lie in 1..5')
  if config.subnet_source == 'none' and config.lam > 0:
    errors.append('subnet_source none requires lambda = 0')
  if errors:
    raise InvalidValueError('; '.join(errors))

  if config.lam == 0 and config.subnet_source != 'none':
    logging.info(f'lambda = 0, switching subnet_source from '
                 f'{config.subnet_source} to none')
    config = dataclasses.replace(config, subnet_source='none')
  return config


def ApplyOverrides(config, overrides):
  """Applies `key=value` overrides (values parsed as YAML scalars).

  Overriding lambda to a positive value on a config whose subnet source was
  switched to none restores the controller source, unless subnet_source is
  overridden as well.

  Args:
    config: TrainConfig to start from.
    overrides: iterable of 'key=value' strings; later entries win.

  Returns:
    New, validated TrainConfig.

  Raises:
    OverrideSyntaxError: if an override has no '='.
    UnknownConfigKeyError, InvalidValueError: as raised by FromDict().
  """
  data = ToDict(config)
  overridden = set()
  for override in overrides or ():
    key, sep, value = override.partition('=')
    key = key.strip()
    if not sep or not key:
      raise OverrideSyntaxError(
          f'Override {override!r} must have the form key=value')
    try:
      parsed = yaml.safe_load(value) if value.strip() else ''
    except yaml.YAMLError as e:
      raise OverrideSyntaxError(f'Override {override!r}: {e}')
    name = _CanonicalKey(key)
    data.pop('lambda' if name == 'lam' else name, None)
    data['lambda' if name == 'lam' else key] = parsed
    overridden.add(name)

  lam = data.get('lambda')
  if ('lam' in overridden and 'subnet_source' not in overridden and
      data.get('subnet_source') == 'none' and
      isinstance(lam, (int, float)) and lam > 0):
    data['subnet_source'] = 'controller'
  return FromDict(data)


def ToDict(config):
  """Returns the configuration echo with canonical file keys."""
  data = {}
  for name in _FIELDS:
    value = getattr(config, name)
    if isinstance(value, tuple):
      value = list(value)
    data['lambda' if name == 'lam' else name] = value
  return data


def Dump(config):
  return yaml.safe_dump(ToDict(config), sort_keys=True)
