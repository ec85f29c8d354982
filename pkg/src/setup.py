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

"""ewsrobust build and packaging script."""

import re
from setuptools import setup

LONG_DESCRIPTION = (
    'Trains residual networks by distilling the full network into the\n'
    'weakest subnets found by a learned controller, with PGD and TRADES\n'
    'adversarial variants, a desk-scale corruption benchmark with mCE, and\n'
    'subnet analysis tools.\n')

# Determine the current version of the package without importing it, since
# importing pulls in torch.
version = None
with open('ewsrobust/version.py', 'r') as version_file:
  version_pattern = re.compile(r"^\s*__version__\s*=\s*'([0-9.]*)'")
  for line in version_file:
    match = version_pattern.match(line)
    if match:
      version = match.groups()[0]
assert version

setup(
    name='ewsrobust',
    description='Enhancing weak subnets for robust training',
    long_description=LONG_DESCRIPTION,
    version=version,
    python_requires='>=3.8',
    install_requires=[
        'absl-py',
        'matplotlib',
        'numpy',
        'pillow',
        'pyyaml',
        'torch>=2.0',
    ],
    packages=['ewsrobust'],
    entry_points={
        'console_scripts': ['ews=ewsrobust.cli:Run'],
    },
    license='Apache License, Version 2.0',
    keywords='robustness distillation subnet adversarial training',
    classifiers=[
        'Programming Language :: Python :: 3.8',
        'Programming Language :: Python :: 3.9',
        'Programming Language :: Python :: 3.10',
        'Development Status :: 3 - Alpha',
        'Intended Audience :: Science/Research',
    ])
