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

"""PGD attacks and the adversarial training objectives.

Adversarial examples are always computed against the full network, in eval
mode, and clamped to the epsilon box and the pixel bounds after every step.

Example Usage:

  attack = AttackConfig(epsilon=8 / 255, steps=10)
  x_adv = PgdAttack(model, images, labels, attack, generator)
  loss, components = AdvEwsLoss(model, spec, images, labels, attack, lam=1.0,
                                x_adv=x_adv)
  robust_error = EvaluateRobust(model, test_images, test_labels,
                                AttackConfig(epsilon=8 / 255, steps=20),
                                generator)
"""

import dataclasses
from typing import Optional, Tuple

from absl import logging
import torch

from . import labels as labels_lib
from . import model_core


class Error(Exception):
  """Generic error class that other errors in this module inherit from."""
  pass


class InvalidAttackConfigError(Error):
  """Thrown when an AttackConfig violates its constraints."""
  pass


class InputRangeError(Error):
  """Thrown when clean inputs lie outside the pixel bounds."""
  pass


@dataclasses.dataclass(frozen=True)
class AttackConfig(object):
  """L-infinity PGD settings.

  Attributes:
    epsilon: radius of the box around the clean input, in pixel units.
    steps: number of signed gradient steps.
    step_size: size of one step; None means epsilon / 4.
    random_start: start from a uniform point of the box.
    pixel_bounds: valid pixel range.
  """
  epsilon: float = 8 / 255
  steps: int = 10
  step_size: Optional[float] = None
  random_start: bool = True
  pixel_bounds: Tuple[float, float] = (0.0, 1.0)

  @property
  def alpha(self):
    return self.epsilon / 4 if self.step_size is None else self.step_size

  @property
  def attack_id(self):
    return labels_lib.AttackId(self.steps)

  def Check(self):
    """Returns self, raising InvalidAttackConfigError on bad settings."""
    errors = []
    if self.epsilon < 0:
      errors.append(f'epsilon must be >= 0, got {self.epsilon}')
    if self.steps < 1:
      errors.append(f'steps must be >= 1, got {self.steps}')
    if self.epsilon > 0 and not 0 < self.alpha <= self.epsilon:
      errors.append(f'step_size must lie in (0, epsilon], got {self.alpha}')
    low, high = self.pixel_bounds
    if not low < high:
      errors.append(f'pixel_bounds {self.pixel_bounds} are empty')
    if errors:
      raise InvalidAttackConfigError('; '.join(errors))
    return self


def TrainAttack(config):
  """Training attack settings of a TrainConfig."""
  return AttackConfig(
      epsilon=config.epsilon,
      steps=config.attack_steps,
      step_size=config.attack_step_size or None,
      random_start=config.random_start).Check()


def EvalAttack(config, epsilon=None):
  """Evaluation attack settings of a TrainConfig (PGD-20 by default)."""
  epsilon = config.epsilon if epsilon is None else epsilon
  step_size = config.attack_step_size or None
  if step_size is not None and step_size > epsilon:
    step_size = None
  return AttackConfig(
      epsilon=epsilon,
      steps=config.eval_attack_steps,
      step_size=step_size,
      random_start=config.random_start).Check()


def FullModelCrossEntropy(model, x, y):
  return model_core.CrossEntropy(model.ForwardFull(x), y)


def PgdAttack(model, x, y, cfg, generator=None, loss_fn=None):
  """Maximizes loss_fn over the epsilon box by signed gradient ascent.

  Args:
    model: model attacked (its mode is restored afterwards).
    x: clean inputs within cfg.pixel_bounds.
    y: labels.
    cfg: AttackConfig.
    generator: torch.Generator for the random start.
    loss_fn: callable (model, x_adv, y) -> scalar loss to ascend; defaults to
        the cross entropy of the full network.

  Returns:
    Detached adversarial inputs x_adv with |x_adv - x| <= epsilon and x_adv
    inside the pixel bounds.

  Raises:
    InvalidAttackConfigError: on a bad configuration.
    InputRangeError: if x is outside the pixel bounds.
  """
  cfg.Check()
  low, high = cfg.pixel_bounds
  if x.numel() and (float(x.min()) < low or float(x.max()) > high):
    raise InputRangeError(
        f'Inputs span [{float(x.min())}, {float(x.max())}], outside pixel '
        f'bounds {cfg.pixel_bounds}')
  x = x.detach()
  if cfg.epsilon == 0:
    return x.clone()
  loss_fn = loss_fn or FullModelCrossEntropy
  lower = torch.clamp(x - cfg.epsilon, min=low)
  upper = torch.clamp(x + cfg.epsilon, max=high)

  x_adv = x.clone()
  if cfg.random_start:
    noise = torch.rand(x.shape, generator=generator, dtype=x.dtype)
    x_adv = x_adv + (2 * noise.to(x.device) - 1) * cfg.epsilon
    x_adv = torch.max(torch.min(x_adv, upper), lower)

  with model_core.EvalMode(model), torch.enable_grad():
    for step in range(cfg.steps):
      x_adv.requires_grad_(True)
      loss = loss_fn(model, x_adv, y)
      gradient, = torch.autograd.grad(loss, x_adv)
      x_adv = x_adv.detach()
      if not torch.isfinite(gradient).all():
        logging.warning(f'Skipping PGD step {step}: non-finite gradient')
        continue
      x_adv = x_adv + cfg.alpha * gradient.sign()
      x_adv = torch.max(torch.min(x_adv, upper), lower)
  return x_adv.detach()


def _Perturb(model, x_adv, y, weight_perturbation):
  if weight_perturbation is None:
    return None
  return weight_perturbation(model, x_adv, y)


def AdvEwsLoss(model, spec, x, y, cfg, lam, generator=None, x_adv=None,
               weight_perturbation=None):
  """Cross entropy and subnet distillation, both on adversarial inputs.

  Args:
    model: model_core.MaskableModel in the mode it should train in.
    spec: SubnetSpec of the weak subnet (ignored when lam is 0).
    x: clean inputs.
    y: labels.
    cfg: AttackConfig used when x_adv is not given.
    lam: distillation weight.
    generator: torch.Generator for the random start.
    x_adv: precomputed adversarial inputs (from PgdAttack on the full model).
    weight_perturbation: optional hook (model, x_adv, y) -> restore callable,
        applied before the forward passes.

  Returns:
    (loss, LossComponents) tuple.
  """
  if x_adv is None:
    x_adv = PgdAttack(model, x, y, cfg, generator)
  restore = _Perturb(model, x_adv, y, weight_perturbation)
  logits = model.ForwardFull(x_adv)
  ce = model_core.CrossEntropy(logits, y)
  loss = ce
  kl = torch.zeros(())
  if lam > 0 and spec is not None:
    kl = model_core.KlDivergence(logits, model.ForwardMasked(x_adv, spec))
    loss = ce + lam * kl
  return loss, model_core.LossComponents(
      total=loss, ce=float(ce), kl=float(kl), restore=restore)


def AdvControllerReward(model, spec, x_adv, y):
  """Negated adversarial accuracy of the subnet."""
  with torch.no_grad(), model_core.EvalMode(model):
    accuracy = model_core.Accuracy(model.ForwardMasked(x_adv, spec), y)
  return -accuracy


def TradesAttack(model, x, y, cfg, generator=None):
  """Inner maximization of the TRADES objective.

  Maximizes KL(M(x) || M(x_adv)) within the box, starting from a random point
  of the box.
  """
  with torch.no_grad(), model_core.EvalMode(model):
    clean_logits = model.ForwardFull(x)

  def KlLoss(attacked_model, x_adv, unused_labels):
    return model_core.KlDivergence(clean_logits,
                                   attacked_model.ForwardFull(x_adv))

  return PgdAttack(model, x, y, dataclasses.replace(cfg, random_start=True),
                   generator, loss_fn=KlLoss)


def TradesEwsLoss(model, spec, x, y, cfg, beta, lam, generator=None,
                  x_adv=None, weight_perturbation=None):
  """TRADES objective plus subnet distillation on clean inputs.

  loss = CE(M(x), y) + beta * KL(M(x) || M(x_adv)) + lam * KL(M(x) || a(x))

  Gradients flow through both sides of the TRADES term; the distillation
  teacher is detached.

  Returns:
    (loss, LossComponents) tuple.
  """
  if x_adv is None:
    x_adv = TradesAttack(model, x, y, cfg, generator)
  restore = _Perturb(model, x_adv, y, weight_perturbation)
  logits = model.ForwardFull(x)
  ce = model_core.CrossEntropy(logits, y)
  robust_kl = model_core.KlDivergence(
      logits, model.ForwardFull(x_adv), detach_teacher=False)
  loss = ce + beta * robust_kl
  kl = torch.zeros(())
  if lam > 0 and spec is not None:
    kl = model_core.KlDivergence(logits, model.ForwardMasked(x, spec))
    loss = loss + lam * kl
  return loss, model_core.LossComponents(
      total=loss, ce=float(ce), kl=float(kl), robust_kl=float(robust_kl),
      restore=restore)


def EvaluateRobust(model, images, labels, cfg, generator=None,
                   batch_size=256):
  """Error percentage of the full network under the attack.

  A sample is robustly correct only when both the clean input and its
  adversarial example are classified correctly.

  Returns:
    100 * (1 - robust accuracy); with epsilon 0 this is the clean error.
  """
  if not len(labels):
    return 0.0
  correct = 0
  for start in range(0, len(labels), batch_size):
    x = images[start:start + batch_size]
    y = labels[start:start + batch_size]
    x_adv = PgdAttack(model, x, y, cfg, generator)
    with torch.no_grad(), model_core.EvalMode(model):
      clean_ok = model.ForwardFull(x).argmax(dim=-1) == y
      adv_ok = model.ForwardFull(x_adv).argmax(dim=-1) == y
      correct += int((clean_ok & adv_ok).sum())
  return 100.0 * (1.0 - correct / len(labels))
