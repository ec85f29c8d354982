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

"""Run manifests: what produced a run directory, and which files belong to it.

A manifest records the run id, the configuration echo, the dataset
fingerprint, the code version and the SHA-256 of every artifact. Artifact
paths are relative to the run directory. Reading a manifest verifies every
artifact.

Example Usage:

  run_manifest = manifest.Create(run_dir, config, dataset.Fingerprint(),
                                 code_version)
  manifest.Write(run_dir, run_manifest)
  ...
  run_manifest = manifest.Read(run_dir)  # raises ManifestError on mismatch
"""

import dataclasses
import hashlib
import json
import os
from typing import Dict

import yaml

from . import config_reader

MANIFEST_FILE = 'manifest.yaml'


class Error(Exception):
  """Generic error class that other errors in this module inherit from."""
  pass


class ManifestError(Error):
  """Thrown when a manifest is unreadable or its artifacts do not match."""

  def __init__(self, message, problems=()):
    self.problems = list(problems)
    if self.problems:
      message = message + ':\n  ' + '\n  '.join(self.problems)
    super().__init__(message)


@dataclasses.dataclass
class RunManifest(object):
  """Description of one run directory.

  Attributes:
    run_id: content hash of the configuration echo.
    config: configuration echo (canonical file keys).
    dataset_fingerprint: content hash of the dataset.
    code_version: package version plus source hash.
    seed: root seed of the run.
    artifacts: relative path -> SHA-256 of the checkpoints, metrics log and
        reports of the run.
  """
  run_id: str
  config: Dict[str, object]
  dataset_fingerprint: str
  code_version: str
  seed: int
  artifacts: Dict[str, str] = dataclasses.field(default_factory=dict)


def RunId(config):
  """Computes the run id of a TrainConfig.

  The id only depends on the configuration, so re-running a configuration
  resumes its run directory.
  """
  data = config_reader.ToDict(config)
  fullhash = hashlib.sha1(json.dumps(data, sort_keys=True).encode()).hexdigest()
  return f'r-{fullhash[:8]}'


def FileHash(path):
  digest = hashlib.sha256()
  with open(path, 'rb') as f:
    for chunk in iter(lambda: f.read(1 << 20), b''):
      digest.update(chunk)
  return digest.hexdigest()


def Create(run_dir, config, dataset_fingerprint, code_version, artifacts=()):
  """Builds the manifest of a run, hashing the artifacts that exist."""
  run_manifest = RunManifest(
      run_id=RunId(config),
      config=config_reader.ToDict(config),
      dataset_fingerprint=dataset_fingerprint,
      code_version=code_version,
      seed=config.seed)
  return Refresh(run_dir, run_manifest, artifacts)


def Refresh(run_dir, run_manifest, artifacts=()):
  """Re-hashes the recorded artifacts plus any new existing ones."""
  names = sorted(set(run_manifest.artifacts) | set(artifacts))
  run_manifest.artifacts = {
      name: FileHash(os.path.join(run_dir, name))
      for name in names
      if os.path.exists(os.path.join(run_dir, name))
  }
  return run_manifest


def Write(run_dir, run_manifest):
  path = os.path.join(run_dir, MANIFEST_FILE)
  tmp_path = f'{path}.tmp'
  with open(tmp_path, 'w', encoding='utf-8') as f:
    yaml.safe_dump(dataclasses.asdict(run_manifest), f, sort_keys=True)
  os.replace(tmp_path, path)
  return path


def Verify(run_dir, run_manifest):
  """Returns every missing or modified artifact (empty when all match)."""
  problems = []
  for name, expected in sorted(run_manifest.artifacts.items()):
    path = os.path.join(run_dir, name)
    if not os.path.exists(path):
      problems.append(f'{name}: missing')
    elif FileHash(path) != expected:
      problems.append(f'{name}: content does not match the recorded hash')
  return problems


def Read(run_dir, verify=True):
  """Reads and (by default) verifies the manifest of a run directory.

  Raises:
    ManifestError: if the manifest is missing, malformed or an artifact is
        missing or modified.
  """
  path = os.path.join(run_dir, MANIFEST_FILE)
  try:
    with open(path, 'r', encoding='utf-8') as f:
      data = yaml.safe_load(f)
    run_manifest = RunManifest(**data)
  except (OSError, yaml.YAMLError, TypeError) as e:
    raise ManifestError(f'Cannot read manifest {path}: {e}')
  if verify:
    problems = Verify(run_dir, run_manifest)
    if problems:
      raise ManifestError(f'Run directory {run_dir} does not match its '
                          'manifest', problems)
  return run_manifest


def Config(run_manifest):
  """Returns the TrainConfig echoed in the manifest."""
  return config_reader.FromDict(run_manifest.config)
