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

"""Command line surface: ews train|eval|analyze|plot|sweep.

Example Usage:

  ews train --config configs/desk_ews.yaml --set lambda=0 --seed 1
  ews eval --run_dir runs/r-1a2b3c4d --suite corruption \
      --baseline_run runs/r-5e6f7a8b
  ews analyze --run_dir runs/r-1a2b3c4d --analysis distribution
  ews plot --run_dir runs/r-1a2b3c4d --analysis distribution
  ews sweep --config configs/desk_ews.yaml --param lambda \
      --values 0,0.001,0.01,0.1,1,10

Without --run_dir, runs live in $EWS_RUN_ROOT/<run id> (default ./runs).
"""

import os
import sys

from absl import app
from absl import flags
from absl import logging

from . import adversarial
from . import analysis
from . import augmentations
from . import config_reader
from . import corruption_eval
from . import datasets
from . import ews_train
from . import labels
from . import manifest
from . import metrics_log
from . import model_core
from . import plotting
from . import seeding
from . import uniquifier_computer

FLAGS = flags.FLAGS

flags.DEFINE_string('config', None, 'Run configuration (flat YAML mapping).')
flags.DEFINE_multi_string('set', [], 'key=value configuration override.')
flags.DEFINE_string('run_dir', None, 'Run directory (or sweep root).')
flags.DEFINE_integer('seed', None, 'Overrides the seed of the configuration.')
flags.DEFINE_enum('suite', 'clean', ['clean', 'corruption', 'adversarial'],
                  'Evaluation suite.')
flags.DEFINE_string('baseline_run', None,
                    'Run directory of the mCE baseline (or of the model '
                    'compared against in plots).')
flags.DEFINE_enum('analysis', 'distribution',
                  ['distribution', 'vulnerability', 'strategies', 'training',
                   'sweep'], 'Analysis to run or plot.')
flags.DEFINE_integer('n_samples', None,
                     'Sampled subnets per distribution (default 1000) or per '
                     'block (default 100).')
flags.DEFINE_integer('budget', 500, 'Controller steps of the strategy search.')
flags.DEFINE_string('param', 'lambda', 'Swept configuration key.')
flags.DEFINE_list('values', None, 'Swept values (defaults per parameter).')

RUN_ROOT_ENV = 'EWS_RUN_ROOT'
DEFAULT_RUN_ROOT = 'runs'

CORRUPTED_CACHE = 'corrupted_test.npz'
CORRUPTION_REPORT = 'corruption_report.yaml'
RESULT_FILES = {
    'distribution': 'analysis_distribution.yaml',
    'vulnerability': 'analysis_vulnerability.yaml',
    'strategies': 'analysis_strategies.yaml',
}
RUN_ARTIFACTS = (ews_train.METRICS_FILE, ews_train.CONTROLLER_EVENTS_FILE,
                 ews_train.LAST_CHECKPOINT, ews_train.BEST_CHECKPOINT,
                 CORRUPTED_CACHE, CORRUPTION_REPORT) + tuple(
                     RESULT_FILES.values())

# Input variants of the subnet accuracy distribution.
_DISTRIBUTION_CORRUPTION = corruption_eval.CorruptionSpec('gaussian_noise', 3)

_ERRORS = (
    adversarial.Error,
    analysis.Error,
    augmentations.Error,
    config_reader.Error,
    corruption_eval.Error,
    datasets.Error,
    manifest.Error,
    metrics_log.Error,
    model_core.Error,
)


def RunRoot():
  return os.environ.get(RUN_ROOT_ENV, DEFAULT_RUN_ROOT)


def LoadConfig(config_path=None, overrides=(), seed=None):
  """Reads the configuration file and applies --set and --seed overrides.

  Raises:
    config_reader.Error: if the file is missing or invalid.
  """
  config = config_reader.TrainConfig()
  if config_path:
    config = config_reader.OpenAndRead(config_path)
    if config is None:
      raise config_reader.YAMLLoadError(
          f'Configuration file {config_path} not found')
  overrides = list(overrides or ())
  if seed is not None:
    overrides.append(f'seed={seed}')
  return config_reader.ApplyOverrides(config, overrides)


def CmdTrain(config, run_dir=None):
  """Trains (or resumes) the run of a configuration.

  Returns:
    The RunManifest of the finished run.
  """
  run_id = manifest.RunId(config)
  run_dir = run_dir or os.path.join(RunRoot(), run_id)
  os.makedirs(run_dir, exist_ok=True)
  dataset = datasets.FromConfig(config)
  code_version = uniquifier_computer.CodeVersion()
  run_manifest = manifest.Create(run_dir, config, dataset.Fingerprint(),
                                 code_version)
  manifest.Write(run_dir, run_manifest)
  logging.info(f'Run {run_id} in {run_dir}, code version {code_version}')

  model = ews_train.BuildModel(config, dataset)
  ews_train.Train(model, config, dataset, run_dir=run_dir, run_id=run_id)

  run_manifest = manifest.Refresh(run_dir, run_manifest, RUN_ARTIFACTS)
  manifest.Write(run_dir, run_manifest)
  return run_manifest


def _LoadRun(run_dir):
  """Returns (manifest, config, dataset, model, checkpoint payload)."""
  run_manifest = manifest.Read(run_dir)
  config = manifest.Config(run_manifest)
  dataset = datasets.FromConfig(config)
  if dataset.Fingerprint() != run_manifest.dataset_fingerprint:
    raise manifest.ManifestError(
        f'Dataset of {run_dir} changed since training',
        [f'recorded {run_manifest.dataset_fingerprint}, found '
         f'{dataset.Fingerprint()}'])
  path = os.path.join(run_dir, ews_train.BEST_CHECKPOINT)
  if not os.path.exists(path):
    path = os.path.join(run_dir, ews_train.LAST_CHECKPOINT)
  model, payload = model_core.LoadCheckpoint(path)
  return run_manifest, config, dataset, model, payload


def _CheckpointHash(run_dir):
  path = os.path.join(run_dir, ews_train.BEST_CHECKPOINT)
  if not os.path.exists(path):
    path = os.path.join(run_dir, ews_train.LAST_CHECKPOINT)
  return manifest.FileHash(path)


def CmdEval(run_dir, suite, baseline_run=None):
  """Evaluates the run's selected checkpoint and appends the metrics.

  Returns:
    The records appended by this evaluation.
  """
  run_manifest, config, dataset, model, payload = _LoadRun(run_dir)
  step = payload['step']
  images, labels_ = dataset.Split(labels.Split.TEST)
  log = metrics_log.MetricsLog(
      os.path.join(run_dir, ews_train.METRICS_FILE), run_manifest.run_id)
  appended = []

  if suite == 'clean':
    appended.append(
        log.Append(step, labels.Split.TEST, labels.Metric.CLEAN_ERROR,
                   ews_train.ErrorPercent(model, images, labels_,
                                          config.eval_batch_size)))

  elif suite == 'corruption':
    cache = os.path.join(run_dir, CORRUPTED_CACHE)
    if os.path.exists(cache):
      corrupted, _ = corruption_eval.ReadCorruptedSet(cache)
    else:
      corrupted = corruption_eval.CorruptedSet(images, config.corruption_kinds,
                                               config.corruption_severities,
                                               config.seed)
      corruption_eval.WriteCorruptedSet(cache, corrupted, labels_)
    report = corruption_eval.EvaluateCorrupted(
        model, images, labels_, config.corruption_kinds,
        config.corruption_severities, config.seed, config.eval_batch_size,
        corrupted=corrupted)
    for (kind, severity), error in sorted(report.errors.items()):
      appended.append(
          log.Append(step, labels.Split.TEST, labels.Metric.CORRUPTION_ERROR,
                     error, source_id=kind, severity=severity))
    appended.append(
        log.Append(step, labels.Split.TEST, labels.Metric.CORRUPTION_ERROR,
                   report.corruption_error,
                   source_id=labels.MEAN_CORRUPTION_ID))
    report_path = os.path.join(run_dir, CORRUPTION_REPORT)
    if baseline_run:
      baseline_errors = corruption_eval.ErrorsFromDict(
          analysis.Load(os.path.join(baseline_run, CORRUPTION_REPORT)))
      mce = corruption_eval.WriteMceReport(report_path, report,
                                           baseline_errors,
                                           _CheckpointHash(baseline_run),
                                           _CheckpointHash(run_dir))
      appended.append(
          log.Append(step, labels.Split.TEST, labels.Metric.MCE, mce))
      logging.info(f'mCE against {baseline_run}: {mce:.2f}')
    else:
      analysis.Dump(
          corruption_eval.ReportToDict(
              report, model_hash=_CheckpointHash(run_dir)), report_path)

  else:
    attack = adversarial.EvalAttack(config)
    generator = seeding.SeedHierarchy(config.seed).Generator(
        labels.Stream.ATTACK, 'eval')
    robust = adversarial.EvaluateRobust(model, images, labels_, attack,
                                        generator, config.eval_batch_size)
    appended.append(
        log.Append(step, labels.Split.TEST, labels.Metric.ROBUST_ERROR,
                   robust, source_id=attack.attack_id,
                   epsilon=attack.epsilon))

  for record in appended:
    logging.info(f'{record.metric} {record.source_id or ""} '
                 f'{record.severity or ""}: {record.value:.2f}')
  manifest.Write(run_dir, manifest.Refresh(run_dir, run_manifest,
                                           RUN_ARTIFACTS))
  return appended


def CmdAnalyze(run_dir, analysis_name, n_samples=None, budget=500):
  """Runs an analysis on the run's selected checkpoint.

  Returns:
    Path of the YAML result file.

  Raises:
    analysis.Error: for invalid requests such as n_samples = 0.
  """
  run_manifest, config, dataset, model, _ = _LoadRun(run_dir)
  images, labels_ = dataset.Split(labels.Split.TEST)
  generator = seeding.SeedHierarchy(config.seed).Generator(
      labels.Stream.ANALYSIS, analysis_name)
  path = os.path.join(run_dir, RESULT_FILES[analysis_name])

  if analysis_name == 'distribution':
    n_samples = 1000 if n_samples is None else n_samples
    variants = ('clean', _DISTRIBUTION_CORRUPTION,
                adversarial.EvalAttack(config))
    result = [
        analysis.SubnetAccuracyDistribution(
            model, config.width, n_samples, images, labels_, generator,
            variant, config.eval_batch_size).ToDict() for variant in variants
    ]
  elif analysis_name == 'vulnerability':
    result = analysis.BlockVulnerability(
        model, images, labels_, generator,
        n_per_block=100 if n_samples is None else n_samples,
        batch_size=config.eval_batch_size)
  else:
    result = analysis.CompareSearchStrategies(
        model, images, labels_, config.width, generator, budget=budget,
        batch_size=config.eval_batch_size,
        controller_batch=config.controller_batch,
        controller_lr=config.controller_lr)
  analysis.Dump(result, path)
  manifest.Write(run_dir, manifest.Refresh(run_dir, run_manifest,
                                           RUN_ARTIFACTS))
  logging.info(f'Wrote {analysis_name} analysis to {path}')
  return path


def _RunLabel(run_dir):
  config = manifest.Read(run_dir, verify=False).config
  return f'{config["method"]} lambda={config["lambda"]}'


def CmdPlot(run_dir, analysis_name, baseline_run=None, param='lambda'):
  """Renders a figure from the files of a run (or a sweep root).

  Returns:
    Path of the PNG file.
  """
  runs = [run_dir] + ([baseline_run] if baseline_run else [])
  path = os.path.join(run_dir, f'plot_{analysis_name}.png')
  if analysis_name == 'training':
    records = metrics_log.ReadRecords(
        os.path.join(run_dir, ews_train.METRICS_FILE))
    return plotting.PlotTrainingCurves(records, path)
  if analysis_name == 'sweep':
    path = os.path.join(run_dir, f'plot_sweep_{param}.png')
    return plotting.PlotSweep(
        analysis.Load(os.path.join(run_dir, f'sweep_{param}.yaml')), path)
  if analysis_name == 'distribution':
    distributions = []
    for run in runs:
      for data in analysis.Load(os.path.join(run, RESULT_FILES['distribution'])):
        summary = analysis.DistributionFromDict(data)
        distributions.append((f'{_RunLabel(run)}\n{summary.variant}', summary))
    return plotting.PlotSubnetDistributions(distributions, path)
  if analysis_name == 'vulnerability':
    reports = [(_RunLabel(run),
                analysis.VulnerabilityFromDict(
                    analysis.Load(os.path.join(run,
                                               RESULT_FILES['vulnerability']))))
               for run in runs]
    return plotting.PlotBlockVulnerability(reports, path)
  return plotting.PlotStrategyComparison(
      analysis.ComparisonFromDict(
          analysis.Load(os.path.join(run_dir, RESULT_FILES['strategies']))),
      path)


def CmdSweep(config, param, values=None, run_root=None):
  """Trains one run per value of param and tabulates the results.

  Returns:
    Path of the sweep table.
  """
  run_root = run_root or RunRoot()
  if values is None:
    if param not in analysis.SWEEP_VALUES:
      raise analysis.Error(f'No default values for {param}; pass --values')
    values = analysis.SWEEP_VALUES[param]
  runs = []
  for value in values:
    run_config = config_reader.ApplyOverrides(
        config, [f'{param}={value}'])
    run_manifest = CmdTrain(run_config,
                            os.path.join(run_root, manifest.RunId(run_config)))
    run_dir = os.path.join(run_root, run_manifest.run_id)
    records = metrics_log.ReadRecords(
        os.path.join(run_dir, ews_train.METRICS_FILE))
    runs.append((float(value), run_manifest.run_id, records))
  path = os.path.join(run_root, f'sweep_{param}.yaml')
  analysis.Dump(analysis.SummarizeSweep(param, runs), path)
  logging.info(f'Wrote sweep table {path}')
  return path


def main(argv):
  if len(argv) < 2:
    raise app.UsageError('Usage: ews train|eval|analyze|plot|sweep [flags]')
  command = argv[1]
  if command == 'analyze' and len(argv) > 2 and argv[2] == 'sweep':
    command = 'sweep'
  elif len(argv) > 2:
    raise app.UsageError(f'Unexpected arguments: {" ".join(argv[2:])}')

  try:
    if command == 'train':
      config = LoadConfig(FLAGS.config, FLAGS.set, FLAGS.seed)
      CmdTrain(config, FLAGS.run_dir)
    elif command in ('eval', 'analyze', 'plot'):
      if not FLAGS.run_dir:
        raise app.UsageError(f'{command} needs --run_dir')
      if command == 'eval':
        CmdEval(FLAGS.run_dir, FLAGS.suite, FLAGS.baseline_run)
      elif command == 'analyze':
        if FLAGS.analysis not in RESULT_FILES:
          raise app.UsageError(f'Cannot analyze {FLAGS.analysis}')
        CmdAnalyze(FLAGS.run_dir, FLAGS.analysis, FLAGS.n_samples,
                   FLAGS.budget)
      else:
        CmdPlot(FLAGS.run_dir, FLAGS.analysis, FLAGS.baseline_run,
                FLAGS.param)
    elif command == 'sweep':
      config = LoadConfig(FLAGS.config, FLAGS.set, FLAGS.seed)
      CmdSweep(config, FLAGS.param, FLAGS.values, FLAGS.run_dir)
    else:
      raise app.UsageError(f'Unknown command {command!r}')
  except _ERRORS as e:
    logging.error(f'{command} failed: {e}')
    sys.exit(1)


def Run():
  app.run(main)
