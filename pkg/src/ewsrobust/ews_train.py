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

"""Training by enhancing weak subnets, and the baseline trainers.

Every K steps the controller is updated on the current minibatch to find
weaker subnets. Every step one subnet is drawn from the configured source and
the full network is trained on cross entropy plus lambda times the KL
divergence from its own predictions to the subnet's.

With lambda = 0 (subnet source none) the trainer is the vanilla trainer. With
method dropout it is the dropout baseline. train_mode selects clean,
PGD adversarial or TRADES training.

Example Usage:

  config = config_reader.OpenAndRead('configs/desk_ews.yaml')
  dataset = datasets.FromConfig(config)
  model = BuildModel(config, dataset)
  model, records = Train(model, config, dataset, run_dir='/tmp/run')
"""

import json
import os
import time

from absl import logging
import torch

from . import adversarial
from . import augmentations
from . import config_reader
from . import controller
from . import datasets
from . import labels
from . import metrics_log
from . import model_core
from . import seeding
from . import subnet_space
from . import topology as topology_lib

METRICS_FILE = 'metrics.jsonl'
CONTROLLER_EVENTS_FILE = 'controller_events.jsonl'
LAST_CHECKPOINT = 'last.pt'
BEST_CHECKPOINT = 'best.pt'

# Uniform subnets scored on the validation split at the end of training.
_SUBNET_SUMMARY_SAMPLES = 16


def BuildModel(config, dataset):
  """Builds the residual model of a config, initialized from its seed."""
  topology = topology_lib.ResNetTopology(
      stage_channels=tuple(config.stage_channels),
      blocks_per_stage=config.blocks_per_stage,
      num_classes=dataset.num_classes,
      input_shape=dataset.input_shape,
      groups=config.groups)
  dropout_rate = config.dropout_rate if config.method == 'dropout' else 0.0
  with torch.random.fork_rng(devices=[]):
    torch.manual_seed(
        seeding.SeedHierarchy(config.seed).Seed(labels.Stream.TRAIN, 'init'))
    return model_core.MaskableModel(topology, dropout_rate=dropout_rate)


def EwsLoss(model, spec, images, labels_, lam):
  """Cross entropy of the full network plus lam * KL(full || subnet).

  Args:
    model: model_core.MaskableModel.
    spec: SubnetSpec of the weak subnet, or None.
    images: input batch.
    labels_: labels of the batch.
    lam: distillation weight.

  Returns:
    (loss, LossComponents) tuple; the teacher side of the KL is detached.
  """
  logits = model.ForwardFull(images)
  ce = model_core.CrossEntropy(logits, labels_)
  if lam == 0 or spec is None:
    return ce, model_core.LossComponents(total=ce, ce=float(ce))
  kl = model_core.KlDivergence(logits, model.ForwardMasked(images, spec))
  loss = ce + lam * kl
  return loss, model_core.LossComponents(total=loss, ce=float(ce),
                                         kl=float(kl))


def ErrorPercent(model, images, labels_, batch_size=256):
  """Clean error of the full network in percent, in eval mode."""
  if not len(labels_):
    return 0.0
  correct = 0
  with torch.no_grad(), model_core.EvalMode(model):
    for x, y in datasets.IterateBatches(images, labels_, batch_size):
      correct += int((model.ForwardFull(x).argmax(dim=-1) == y).sum())
  return 100.0 * (1.0 - correct / len(labels_))


class Trainer(object):
  """Owns the model, its optimizer, the controller and the run files.

  Attributes:
    model: the trained MaskableModel.
    config: TrainConfig.
    policy: ControllerPolicy, or None unless the subnet source is controller.
    step: number of model updates done.
    epoch: number of completed epochs.
    controller_updates: number of controller updates done.
    metrics: MetricsLog of the run.
  """

  def __init__(self, model, config, dataset, run_dir=None, run_id='local',
               augmentation=None, weight_perturbation=None):
    """Prepares a run.

    Args:
      model: MaskableModel to train.
      config: TrainConfig.
      dataset: datasets.Dataset with train/val/test splits.
      run_dir: directory for checkpoints and logs; None keeps everything in
          memory.
      run_id: id written into metrics records.
      augmentation: callable (images, generator) -> images; defaults to the
          registered augmentation named by the config.
      weight_perturbation: optional hook for the adversarial losses.
    """
    self.model = model
    self.config = config
    self.dataset = dataset
    self.run_dir = run_dir
    self.run_id = run_id
    self.augment = augmentation or augmentations.Get(config.augmentation)
    self.weight_perturbation = weight_perturbation
    self.seeds = seeding.SeedHierarchy(config.seed)

    n_train = len(dataset.Split(labels.Split.TRAIN)[1])
    self.steps_per_epoch = -(-n_train // config.batch_size)
    self.total_steps = config.max_steps or (
        config.epochs * self.steps_per_epoch)

    self.optimizer = torch.optim.SGD(
        model.parameters(),
        lr=config.lr,
        momentum=config.momentum,
        weight_decay=config.weight_decay)
    self.scheduler = torch.optim.lr_scheduler.CosineAnnealingLR(
        self.optimizer, T_max=max(1, self.total_steps))

    self.policy = None
    if config.subnet_source == 'controller':
      self.policy = controller.ControllerPolicy(
          model.topology,
          config.width,
          hidden_size=config.controller_hidden,
          baseline_decay=config.baseline_decay,
          seed=self.seeds.Seed(labels.Stream.CONTROLLER, 'init'))

    self.generators = {
        name: self.seeds.Generator(name) for name in (
            labels.Stream.CONTROLLER, labels.Stream.SUBNET,
            labels.Stream.ATTACK, labels.Stream.AUGMENTATION)
    }
    self.seeds.SeedGlobal(labels.Stream.DROPOUT)

    self.attack = None
    if config.train_mode != 'standard':
      self.attack = adversarial.TrainAttack(config)

    self.step = 0
    self.epoch = 0
    self.controller_updates = 0
    self.best_value = None
    self.wallclock = 0.0
    self.metrics = metrics_log.MetricsLog(
        os.path.join(run_dir, METRICS_FILE) if run_dir else None, run_id)
    if run_dir:
      os.makedirs(run_dir, exist_ok=True)

  @property
  def adversarial(self):
    return self.config.train_mode != 'standard'

  def SampleSubnet(self):
    """Draws this step's weak subnet from the configured source."""
    source = self.config.subnet_source
    generator = self.generators[labels.Stream.SUBNET]
    if source == 'controller':
      with torch.no_grad():
        return controller.SampleSubnet(self.policy, generator)[0]
    if source == 'uniform_random':
      return subnet_space.SampleUniformSubnet(self.model.topology,
                                              self.config.width, generator)
    if source == 'l1':
      return subnet_space.SubnetFromL1(self.model, self.config.width)
    return None

  def _ControllerUpdate(self, images, labels_):
    reward_fn = adversarial.AdvControllerReward if self.adversarial else None
    result = controller.ControllerStep(
        self.policy, self.model, images, labels_, self.config.controller_batch,
        self.config.controller_lr, self.generators[labels.Stream.CONTROLLER],
        reward_fn=reward_fn)
    self.controller_updates += 1
    mean_reward = sum(result.rewards) / len(result.rewards)
    if self.run_dir:
      event = {
          'step': self.step,
          'mean_reward': mean_reward,
          'baseline': result.baseline,
          'specs': [subnet_space.Dump(spec) for spec in result.specs],
      }
      with open(os.path.join(self.run_dir, CONTROLLER_EVENTS_FILE), 'a',
                encoding='utf-8') as f:
        f.write(json.dumps(event) + '\n')
    return result

  def TrainStep(self, images, labels_):
    """One alternation step: maybe update the controller, then the model.

    Returns:
      LossComponents of the model update.
    """
    config = self.config
    self.model.train()
    images = self.augment(images, self.generators[labels.Stream.AUGMENTATION])

    x_adv = None
    if config.train_mode == 'adversarial':
      x_adv = adversarial.PgdAttack(self.model, images, labels_, self.attack,
                                    self.generators[labels.Stream.ATTACK])
    elif config.train_mode == 'trades':
      x_adv = adversarial.TradesAttack(self.model, images, labels_,
                                       self.attack,
                                       self.generators[labels.Stream.ATTACK])

    if self.policy is not None and self.step % config.controller_interval == 0:
      # Adversarial modes score subnets on the step's shared x_adv.
      result = self._ControllerUpdate(images if x_adv is None else x_adv,
                                      labels_)
    else:
      result = None

    spec = self.SampleSubnet()
    self.optimizer.zero_grad()
    if config.train_mode == 'adversarial':
      loss, components = adversarial.AdvEwsLoss(
          self.model, spec, images, labels_, self.attack, config.lam,
          x_adv=x_adv, weight_perturbation=self.weight_perturbation)
    elif config.train_mode == 'trades':
      loss, components = adversarial.TradesEwsLoss(
          self.model, spec, images, labels_, self.attack, config.trades_beta,
          config.lam, x_adv=x_adv,
          weight_perturbation=self.weight_perturbation)
    else:
      loss, components = EwsLoss(self.model, spec, images, labels_,
                                 config.lam)
    loss.backward()
    self.optimizer.step()
    self.scheduler.step()
    if components.restore is not None:
      components.restore()
    self.step += 1

    if result is not None:
      self.metrics.Append(self.step, labels.Split.TRAIN,
                          labels.Metric.CONTROLLER_REWARD,
                          sum(result.rewards) / len(result.rewards))
    if self.step % config.log_every == 0:
      self._LogLoss(components)
    return components

  def _LogLoss(self, components):
    self.metrics.Append(self.step, labels.Split.TRAIN, labels.Metric.TRAIN_LOSS,
                        float(components.total))
    self.metrics.Append(self.step, labels.Split.TRAIN, labels.Metric.TRAIN_CE,
                        components.ce)
    self.metrics.Append(self.step, labels.Split.TRAIN, labels.Metric.TRAIN_KL,
                        components.kl)
    logging.info(f'Step {self.step}/{self.total_steps}: loss '
                 f'{float(components.total):.4f} (ce {components.ce:.4f}, kl '
                 f'{components.kl:.4f})')

  def Evaluate(self, split):
    """Logs the clean (and in adversarial modes robust) error of a split.

    Returns:
      The value used for best checkpoint selection: robust error in
      adversarial modes, clean error otherwise.
    """
    images, labels_ = self.dataset.Split(split)
    error = ErrorPercent(self.model, images, labels_,
                         self.config.eval_batch_size)
    self.metrics.Append(self.step, split, labels.Metric.CLEAN_ERROR, error)
    if not self.adversarial:
      return error
    attack = adversarial.EvalAttack(self.config)
    robust = adversarial.EvaluateRobust(
        self.model, images, labels_, attack,
        self.seeds.Generator(labels.Stream.ATTACK, split, self.step),
        self.config.eval_batch_size)
    self.metrics.Append(self.step, split, labels.Metric.ROBUST_ERROR, robust,
                        source_id=attack.attack_id, epsilon=attack.epsilon)
    return robust

  def _CheckpointPath(self, name):
    return os.path.join(self.run_dir, name)

  def SaveCheckpoint(self, name=LAST_CHECKPOINT):
    if not self.run_dir:
      return None
    path = self._CheckpointPath(name)
    model_core.SaveCheckpoint(
        path,
        self.model,
        self.step,
        epoch=self.epoch,
        optimizer=self.optimizer.state_dict(),
        scheduler=self.scheduler.state_dict(),
        policy=self.policy.StateDict() if self.policy is not None else None,
        config=config_reader.ToDict(self.config),
        generators={
            name: generator.get_state()
            for name, generator in self.generators.items()
        },
        global_rng=torch.get_rng_state(),
        controller_updates=self.controller_updates,
        best_value=self.best_value,
        wallclock=self.wallclock)
    logging.info(f'Wrote checkpoint {path} at step {self.step}')
    return path

  def Resume(self, path=None):
    """Restores the state of the last checkpoint, if any.

    Records logged after the checkpoint step are dropped so the log matches
    the restored state.

    Returns:
      True if a checkpoint was restored.
    """
    path = path or (self._CheckpointPath(LAST_CHECKPOINT)
                    if self.run_dir else None)
    if not path or not os.path.exists(path):
      return False
    payload = model_core.ReadCheckpoint(path)
    self.model.load_state_dict(payload['state_dict'])
    self.optimizer.load_state_dict(payload['optimizer'])
    self.scheduler.load_state_dict(payload['scheduler'])
    if self.policy is not None and payload.get('policy'):
      self.policy.load_state_dict(payload['policy']['state_dict'])
    for name, state in payload['generators'].items():
      self.generators[name].set_state(state)
    torch.set_rng_state(payload['global_rng'])
    self.step = payload['step']
    self.epoch = payload['epoch']
    self.controller_updates = payload['controller_updates']
    self.best_value = payload['best_value']
    self.wallclock = payload['wallclock']
    self.metrics.TruncateAfter(self.step)
    self._TruncateControllerEvents()
    logging.info(f'Resumed from {path} at step {self.step}, epoch '
                 f'{self.epoch}')
    return True

  def _TruncateControllerEvents(self):
    path = self._CheckpointPath(CONTROLLER_EVENTS_FILE)
    if not os.path.exists(path):
      return
    with open(path, 'r', encoding='utf-8') as f:
      lines = [line for line in f if line.strip()]
    kept = [line for line in lines if json.loads(line)['step'] < self.step]
    with open(path, 'w', encoding='utf-8') as f:
      f.writelines(kept)

  def _EndOfEpoch(self):
    value = self.Evaluate(labels.Split.VAL)
    if self.best_value is None or value < self.best_value:
      self.best_value = value
      self.SaveCheckpoint(BEST_CHECKPOINT)
    self.SaveCheckpoint(LAST_CHECKPOINT)
    logging.info(f'Epoch {self.epoch} done at step {self.step}: validation '
                 f'{"robust" if self.adversarial else "clean"} error '
                 f'{value:.2f}%')

  def _SubnetSummary(self):
    images, labels_ = self.dataset.Split(labels.Split.VAL)
    if not len(labels_):
      return
    generator = self.seeds.Generator(labels.Stream.ANALYSIS, 'train_summary')
    accuracies = []
    with torch.no_grad(), model_core.EvalMode(self.model):
      for _ in range(_SUBNET_SUMMARY_SAMPLES):
        spec = subnet_space.SampleUniformSubnet(self.model.topology,
                                                self.config.width, generator)
        accuracies.append(
            model_core.Accuracy(self.model.ForwardMasked(images, spec),
                                labels_))
    self.metrics.Append(self.step, labels.Split.VAL,
                        labels.Metric.SUBNET_MEAN_ACC,
                        sum(accuracies) / len(accuracies))

  def Train(self):
    """Runs (or finishes) the configured number of steps.

    Returns:
      (model, records) tuple with the final model and all metrics records.
    """
    images, labels_ = self.dataset.Split(labels.Split.TRAIN)
    if self.step >= self.total_steps and metrics_log.Select(
        self.metrics.Records(), labels.Metric.CLEAN_ERROR, labels.Split.TEST):
      logging.info(f'Run already finished at step {self.step}')
      return self.model, self.metrics.Records()
    if self.total_steps == 0:
      self.Evaluate(labels.Split.VAL)
      self.SaveCheckpoint(LAST_CHECKPOINT)
      return self.model, self.metrics.Records()

    while self.step < self.total_steps:
      started = time.monotonic()
      order = datasets.EpochOrder(len(labels_), self.config.seed, self.epoch)
      for x, y in datasets.IterateBatches(images, labels_,
                                          self.config.batch_size, order):
        if self.step >= self.total_steps:
          break
        self.TrainStep(x, y)
      self.epoch += 1
      self.wallclock += time.monotonic() - started
      self._EndOfEpoch()

    self.Evaluate(labels.Split.TEST)
    self._SubnetSummary()
    self.metrics.Append(self.step, labels.Split.TRAIN,
                        labels.Metric.WALLCLOCK_S, self.wallclock)
    logging.info(f'Training done: {self.step} steps, '
                 f'{self.controller_updates} controller updates, '
                 f'{self.wallclock:.1f}s')
    return self.model, self.metrics.Records()


def Train(model, config, dataset, run_dir=None, run_id='local', resume=True,
          **kwargs):
  """Trains model per config, resuming from run_dir when possible.

  Returns:
    (model, records) tuple.
  """
  trainer = Trainer(model, config, dataset, run_dir, run_id, **kwargs)
  if resume:
    trainer.Resume()
  return trainer.Train()


def DropoutBaselineTrain(model, config, dataset, run_dir=None, run_id='local',
                         **kwargs):
  """Vanilla training with channel dropout after every block.

  Returns:
    The trained model.
  """
  config = config_reader.ApplyOverrides(
      config, ['method=dropout', 'lambda=0', 'subnet_source=none'])
  model.dropout_rate = config.dropout_rate
  return Train(model, config, dataset, run_dir, run_id, **kwargs)[0]
