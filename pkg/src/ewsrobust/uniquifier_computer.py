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

"""Computes a unique identifier of the code that produced a run.

The package version alone does not tell apart two checkouts with local
edits. Run manifests therefore record the version together with a hash over
the package's Python sources, so results of modified code are never mistaken
for results of the released code.
"""

import hashlib
import os

from . import version

# Maximum recursion depth to follow when traversing the file system. This limit
# will prevent stack overflow in case of a loop created by symbolic links.
_MAX_DEPTH = 10


def ComputeCodeUniquifier(hash_obj, root=None):
  """Updates hash_obj with the relative path and content hash of every module.

  Only .py files of root and of its sub-packages are hashed; compiled files
  are ignored so that a fresh checkout and a used one hash the same.

  Args:
    hash_obj: hash aggregator to update with the code uniquifier.
    root: directory to traverse; defaults to the ewsrobust package.
  """

  def ProcessDirectory(path, relative_path, depth=1):
    """Recursively hashes the modules of a directory.

    Args:
      path: absolute path of the directory to start.
      relative_path: path relative to root.
      depth: current recursion depth.
    """

    if depth > _MAX_DEPTH:
      return

    try:
      names = os.listdir(path)
    except OSError:
      return

    # Sort file names to ensure consistent hash regardless of order returned
    # by os.listdir.
    for name in sorted(names):
      current_path = os.path.join(path, name)
      if not os.path.isdir(current_path):
        if os.path.splitext(name)[1] != '.py':
          continue
        ProcessModuleFile(current_path, os.path.join(relative_path, name))
      elif IsPackage(current_path):
        ProcessDirectory(current_path, os.path.join(relative_path, name),
                         depth + 1)

  def IsPackage(path):
    return os.path.isfile(os.path.join(path, '__init__.py'))

  def ProcessModuleFile(path, relative_path):
    """Updates the hash with the specified module file."""
    hash_obj.update(relative_path.encode())
    hash_obj.update(':'.encode())
    try:
      with open(path, 'rb') as f:
        hash_obj.update(hashlib.sha256(f.read()).hexdigest().encode())
    except OSError:
      pass
    hash_obj.update('\n'.encode())

  ProcessDirectory(root or os.path.dirname(os.path.abspath(__file__)), '')


def CodeVersion(root=None):
  """Returns '<version>+<12 hex chars of the source hash>'."""
  uniquifier = hashlib.sha1()
  ComputeCodeUniquifier(uniquifier, root)
  return f'{version.__version__}+{uniquifier.hexdigest()[:12]}'
