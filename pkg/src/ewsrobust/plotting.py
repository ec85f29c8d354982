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

"""Static figures regenerated from result files and metrics logs.

Every plot is a pure function of its inputs: the Agg backend is used and the
PNG metadata carries no software or time stamp, so replotting unchanged files
yields identical bytes.
"""

import matplotlib

matplotlib.use('Agg')

from matplotlib import pyplot as plt  # pylint: disable=g-import-not-at-top

from . import labels  # pylint: disable=g-import-not-at-top
from . import metrics_log  # pylint: disable=g-import-not-at-top

_PNG_METADATA = {'Software': None}


def _Save(figure, path):
  figure.tight_layout()
  figure.savefig(path, format='png', dpi=100, metadata=_PNG_METADATA)
  plt.close(figure)
  return path


def PlotSubnetDistributions(distributions, path):
  """Box plots of subnet accuracies with the full network as a marker.

  Args:
    distributions: list of (label, analysis.DistributionSummary).
    path: output PNG path.
  """
  figure, axes = plt.subplots(figsize=(max(4, 1.5 * len(distributions)), 4))
  names = [name for name, _ in distributions]
  axes.boxplot([[100 * v for v in d.values] for _, d in distributions],
               whis=(0, 100))
  axes.scatter(
      range(1, len(distributions) + 1),
      [100 * d.full_accuracy for _, d in distributions],
      marker='*',
      color='red',
      zorder=3,
      label='full network')
  axes.set_xticks(range(1, len(distributions) + 1))
  axes.set_xticklabels(names)
  axes.set_ylabel('accuracy (%)')
  axes.legend(loc='lower right')
  return _Save(figure, path)


def PlotBlockVulnerability(reports, path):
  """Mean error per masked block, one line per model.

  Args:
    reports: list of (label, analysis.BlockVulnerabilityReport).
  """
  figure, axes = plt.subplots(figsize=(6, 4))
  for name, report in reports:
    blocks = [entry.block for entry in report.blocks]
    axes.plot(blocks, [entry.mean_error for entry in report.blocks],
              marker='o', label=name)
    for entry in report.blocks:
      if entry.downsamples:
        axes.axvline(entry.block, color='gray', linestyle=':', linewidth=0.8)
  axes.set_xlabel('masked block')
  axes.set_ylabel('error (%)')
  axes.legend()
  return _Save(figure, path)


def PlotStrategyComparison(comparison, path):
  """Mean subnet accuracy of every search strategy."""
  means = comparison.Means()
  figure, axes = plt.subplots(figsize=(5, 4))
  names = list(means)
  axes.bar(names, [100 * means[name] for name in names], color='tab:blue')
  axes.set_ylabel('mean subnet accuracy (%)')
  axes.set_title(f'controller budget {comparison.budget}')
  return _Save(figure, path)


def PlotSweep(sweep, path, metric='clean_error'):
  """Metric against the swept value; K sweeps also show wall-clock time.

  Args:
    sweep: table returned by analysis.SummarizeSweep (or loaded from YAML).
  """
  rows = [row for row in sweep['rows'] if row.get(metric) is not None]
  values = [row['value'] for row in rows]
  figure, axes = plt.subplots(figsize=(6, 4))
  axes.plot(values, [row[metric] for row in rows], marker='o',
            color='tab:blue')
  axes.set_xlabel(sweep['param'])
  axes.set_ylabel(metric.replace('_', ' ') + ' (%)')
  if sweep['param'] == 'lambda' and any(v > 0 for v in values):
    axes.set_xscale('symlog', linthresh=1e-3)
  if sweep['param'] == 'K':
    wall = [row['wallclock_s'] for row in rows]
    if all(w is not None for w in wall):
      twin = axes.twinx()
      twin.plot(values, wall, marker='s', color='tab:orange')
      twin.set_ylabel('training time (s)')
  return _Save(figure, path)


def PlotTrainingCurves(records, path):
  """Training loss and validation error against the step."""
  figure, (loss_axes, error_axes) = plt.subplots(1, 2, figsize=(10, 4))
  for metric in (labels.Metric.TRAIN_LOSS, labels.Metric.TRAIN_CE,
                 labels.Metric.TRAIN_KL):
    selected = metrics_log.Select(records, metric, labels.Split.TRAIN)
    if selected:
      loss_axes.plot([r.step for r in selected], [r.value for r in selected],
                     label=metric)
  loss_axes.set_xlabel('step')
  loss_axes.legend()
  for metric in (labels.Metric.CLEAN_ERROR, labels.Metric.ROBUST_ERROR):
    selected = metrics_log.Select(records, metric, labels.Split.VAL)
    if selected:
      error_axes.plot([r.step for r in selected], [r.value for r in selected],
                      marker='o', label=metric)
  error_axes.set_xlabel('step')
  error_axes.set_ylabel('validation error (%)')
  error_axes.legend()
  return _Save(figure, path)
