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

"""Robust training by enhancing weak subnets.

The package trains residual networks whose full predictions are distilled
into the weakest subnets a learned controller can find, evaluates them on
corrupted and adversarial inputs, and analyses how their subnets fail.

See cli.py for the command line and ews_train.py for the training loop.
"""

from . import version

__version__ = version.__version__
