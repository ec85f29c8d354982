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

"""Common corruptions at desk scale, corruption error tables and mCE.

Every corruption kind maps a severity in 1..5 to a fixed parameter; severity
0 is the identity. Stochastic kinds draw from a generator derived from
(seed, kind, severity), so a corrupted set is a pure function of its spec.

Severity parameters:
  gaussian_noise  noise std                0.04 0.06 0.08 0.09 0.10
  shot_noise      photons per unit         500  250  100  75   50
  impulse_noise   salt and pepper rate     0.01 0.02 0.03 0.05 0.07
  gaussian_blur   blur std in pixels       0.4  0.6  0.7  0.8  1.0
  contrast        contrast factor          0.75 0.5  0.4  0.3  0.15
  brightness      additive offset          0.1  0.2  0.3  0.4  0.5
  pixelate        block size in pixels     2    3    4    5    6
  jpeg_like       8x8 DCT quality          80   65   58   50   40

jpeg_like quantizes 8x8 block DCT coefficients of every channel with the
standard luminance table scaled to the quality; it approximates a JPEG round
trip without entropy coding or chroma subsampling.
"""

import dataclasses
import math
from typing import Dict, Tuple

import numpy as np
import torch
import torch.nn.functional as F
import yaml

from . import labels as labels_lib
from . import model_core
from . import seeding

SEVERITIES = (1, 2, 3, 4, 5)

SEVERITY_TABLE = {
    'gaussian_noise': (0.04, 0.06, 0.08, 0.09, 0.10),
    'shot_noise': (500, 250, 100, 75, 50),
    'impulse_noise': (0.01, 0.02, 0.03, 0.05, 0.07),
    'gaussian_blur': (0.4, 0.6, 0.7, 0.8, 1.0),
    'contrast': (0.75, 0.5, 0.4, 0.3, 0.15),
    'brightness': (0.1, 0.2, 0.3, 0.4, 0.5),
    'pixelate': (2, 3, 4, 5, 6),
    'jpeg_like': (80, 65, 58, 50, 40),
}

KINDS = tuple(SEVERITY_TABLE)

_JPEG_LUMINANCE = np.array(
    [[16, 11, 10, 16, 24, 40, 51, 61],
     [12, 12, 14, 19, 26, 58, 60, 55],
     [14, 13, 16, 24, 40, 57, 69, 56],
     [14, 17, 22, 29, 51, 87, 80, 62],
     [18, 22, 37, 56, 68, 109, 103, 77],
     [24, 35, 55, 64, 81, 104, 113, 92],
     [49, 64, 78, 87, 103, 121, 120, 101],
     [72, 92, 95, 98, 112, 100, 103, 99]],
    dtype=np.float64)


class Error(Exception):
  """Generic error class that other errors in this module inherit from."""
  pass


class UnknownCorruptionError(Error):
  """Thrown for corruption kinds or severities outside the tables."""
  pass


class KeyMismatchError(Error):
  """Thrown when model and baseline error tables cover different cells."""
  pass


class ZeroBaselineError(Error):
  """Thrown when a baseline error cell is zero."""
  pass


@dataclasses.dataclass(frozen=True)
class CorruptionSpec(object):
  kind: str
  severity: int
  seed: int = 0

  @property
  def parameter(self):
    return Parameter(self.kind, self.severity)


def Parameter(kind, severity):
  """Returns the table parameter of (kind, severity).

  Raises:
    UnknownCorruptionError: for unknown kinds or severities outside 1..5.
  """
  if kind not in SEVERITY_TABLE:
    raise UnknownCorruptionError(
        f'Unknown corruption {kind!r}, known: {", ".join(KINDS)}')
  if severity not in SEVERITIES:
    raise UnknownCorruptionError(
        f'Severity of {kind} must lie in 1..5, got {severity}')
  return SEVERITY_TABLE[kind][severity - 1]


def _GaussianNoise(x, sigma, generator):
  return x + sigma * torch.randn(x.shape, generator=generator, dtype=x.dtype)


def _ShotNoise(x, photons, generator):
  return torch.poisson(x * photons, generator=generator) / photons


def _ImpulseNoise(x, amount, generator):
  hit = torch.rand(x.shape, generator=generator, dtype=x.dtype) < amount
  salt = torch.rand(x.shape, generator=generator, dtype=x.dtype) < 0.5
  return torch.where(hit, salt.to(x.dtype), x)


def _GaussianBlur(x, sigma, unused_generator):
  radius = max(1, math.ceil(3 * sigma))
  offsets = torch.arange(-radius, radius + 1, dtype=x.dtype)
  kernel = torch.exp(-offsets**2 / (2 * sigma**2))
  kernel = kernel / kernel.sum()
  channels = x.shape[1]
  padded = F.pad(x, (radius, radius, radius, radius), mode='replicate')
  horizontal = kernel.view(1, 1, 1, -1).repeat(channels, 1, 1, 1)
  vertical = kernel.view(1, 1, -1, 1).repeat(channels, 1, 1, 1)
  out = F.conv2d(padded, horizontal, groups=channels)
  return F.conv2d(out, vertical, groups=channels)


def _Contrast(x, factor, unused_generator):
  mean = x.mean(dim=(1, 2, 3), keepdim=True)
  return mean + (x - mean) * factor


def _Brightness(x, offset, unused_generator):
  return x + offset


def _Pixelate(x, block, unused_generator):
  height, width = x.shape[2], x.shape[3]
  pad_h, pad_w = -height % block, -width % block
  # Averaging in double keeps block-constant images exactly unchanged.
  padded = F.pad(x.double(), (0, pad_w, 0, pad_h), mode='replicate')
  pooled = F.avg_pool2d(padded, block)
  out = pooled.repeat_interleave(block, dim=2).repeat_interleave(block, dim=3)
  return out[:, :, :height, :width].to(x.dtype)


def _QuantizationTable(quality):
  scale = 5000 / quality if quality < 50 else 200 - 2 * quality
  table = np.floor((_JPEG_LUMINANCE * scale + 50) / 100)
  return np.clip(table, 1, 255)


def _DctMatrix(n=8):
  k = np.arange(n)[:, None]
  i = np.arange(n)[None, :]
  matrix = np.cos(np.pi * (2 * i + 1) * k / (2 * n)) * np.sqrt(2 / n)
  matrix[0] /= np.sqrt(2)
  return matrix


def _JpegLike(x, quality, unused_generator):
  n, channels, height, width = x.shape
  pad_h, pad_w = -height % 8, -width % 8
  padded = F.pad(x.double(), (0, pad_w, 0, pad_h), mode='replicate')
  padded = padded * 255 - 128
  h, w = padded.shape[2] // 8, padded.shape[3] // 8
  blocks = padded.view(n, channels, h, 8, w, 8).permute(0, 1, 2, 4, 3, 5)
  dct = torch.from_numpy(_DctMatrix())
  table = torch.from_numpy(_QuantizationTable(quality))
  coefficients = dct @ blocks @ dct.T
  quantized = torch.round(coefficients / table) * table
  restored = dct.T @ quantized @ dct
  restored = restored.permute(0, 1, 2, 4, 3, 5).reshape(
      n, channels, h * 8, w * 8)
  return ((restored + 128) / 255)[:, :, :height, :width].to(x.dtype)


_TRANSFORMS = {
    'gaussian_noise': _GaussianNoise,
    'shot_noise': _ShotNoise,
    'impulse_noise': _ImpulseNoise,
    'gaussian_blur': _GaussianBlur,
    'contrast': _Contrast,
    'brightness': _Brightness,
    'pixelate': _Pixelate,
    'jpeg_like': _JpegLike,
}


def CellGenerator(seed, kind, severity):
  return seeding.SeedHierarchy(seed).Generator(labels_lib.Stream.CORRUPTION,
                                               kind, severity)


def Corrupt(images, spec, generator=None):
  """Applies a corruption to a batch (N, C, H, W) or one image (C, H, W).

  Args:
    images: float images in [0, 1].
    spec: CorruptionSpec; severity 0 returns the images unchanged.
    generator: torch.Generator for stochastic kinds; defaults to the one
        derived from (spec.seed, kind, severity).

  Returns:
    Corrupted images clipped to [0, 1].

  Raises:
    UnknownCorruptionError: for unknown kinds or severities.
  """
  if spec.kind not in _TRANSFORMS:
    raise UnknownCorruptionError(
        f'Unknown corruption {spec.kind!r}, known: {", ".join(KINDS)}')
  if spec.severity == 0:
    return images.clone()
  parameter = spec.parameter
  if generator is None:
    generator = CellGenerator(spec.seed, spec.kind, spec.severity)
  single = images.dim() == 3
  x = images[None] if single else images
  out = _TRANSFORMS[spec.kind](x.cpu(), parameter, generator)
  out = out.clamp(0.0, 1.0).to(images.device)
  return out[0] if single else out


@dataclasses.dataclass
class CorruptionReport(object):
  """Errors of one model on the corruption suite.

  Attributes:
    clean_error: error percentage on the uncorrupted images.
    errors: (kind, severity) -> error percentage.
  """
  clean_error: float
  errors: Dict[Tuple[str, int], float]

  @property
  def corruption_error(self):
    """Unweighted mean over all cells (the clean error if there are none)."""
    if not self.errors:
      return self.clean_error
    return sum(self.errors.values()) / len(self.errors)

  def KindMeans(self):
    by_kind = {}
    for (kind, _), error in self.errors.items():
      by_kind.setdefault(kind, []).append(error)
    return {kind: sum(v) / len(v) for kind, v in by_kind.items()}


def _ErrorPercent(model, images, labels, batch_size):
  if not len(labels):
    return 0.0
  correct = 0
  with torch.no_grad(), model_core.EvalMode(model):
    for start in range(0, len(labels), batch_size):
      logits = model.ForwardFull(images[start:start + batch_size])
      correct += int(
          (logits.argmax(dim=-1) == labels[start:start + batch_size]).sum())
  return 100.0 * (1.0 - correct / len(labels))


def CorruptedSet(images, kinds, severities, seed=0):
  """Returns (kind, severity) -> corrupted copy of images."""
  return {(kind, severity): Corrupt(images, CorruptionSpec(kind, severity, seed))
          for kind in kinds for severity in severities}


def EvaluateCorrupted(model, images, labels, kinds=KINDS,
                      severities=SEVERITIES, seed=0, batch_size=256,
                      corrupted=None):
  """Evaluates the full network on every (kind, severity) cell.

  Args:
    model: frozen model with ForwardFull.
    images: clean test images.
    labels: their labels.
    kinds: corruption kinds.
    severities: severities per kind.
    seed: seed of the stochastic corruptions.
    batch_size: evaluation batch size.
    corrupted: optional precomputed CorruptedSet (e.g. read from a cache).

  Returns:
    CorruptionReport.
  """
  if corrupted is None:
    corrupted = CorruptedSet(images, kinds, severities, seed)
  errors = {}
  for kind in kinds:
    for severity in severities:
      errors[(kind, severity)] = _ErrorPercent(
          model, corrupted[(kind, severity)], labels, batch_size)
  return CorruptionReport(
      clean_error=_ErrorPercent(model, images, labels, batch_size),
      errors=errors)


def PerKindCorruptionError(model_errors, baseline_errors):
  """Returns kind -> 100 * sum_s E[kind, s] / sum_s B[kind, s].

  Raises:
    KeyMismatchError: if the tables cover different cells.
    ZeroBaselineError: naming the first zero baseline cell.
  """
  if set(model_errors) != set(baseline_errors):
    missing = sorted(set(baseline_errors) - set(model_errors))
    extra = sorted(set(model_errors) - set(baseline_errors))
    raise KeyMismatchError(
        f'Error tables differ: missing {missing}, unexpected {extra}')
  for key in sorted(baseline_errors):
    if baseline_errors[key] <= 0:
      raise ZeroBaselineError(
          f'Baseline error of {key[0]} severity {key[1]} is '
          f'{baseline_errors[key]}, cannot normalize')
  totals = {}
  for (kind, severity), error in model_errors.items():
    model_total, baseline_total = totals.get(kind, (0.0, 0.0))
    totals[kind] = (model_total + error,
                    baseline_total + baseline_errors[(kind, severity)])
  return {kind: 100.0 * m / b for kind, (m, b) in sorted(totals.items())}


def MeanCorruptionError(model_errors, baseline_errors):
  """mCE: mean over kinds of the baseline normalized corruption error."""
  per_kind = PerKindCorruptionError(model_errors, baseline_errors)
  if not per_kind:
    raise KeyMismatchError('Error tables are empty')
  return sum(per_kind.values()) / len(per_kind)


def WriteCorruptedSet(path, corrupted, labels):
  """Caches a CorruptedSet with its (kind, severity, image id) index."""
  keys = sorted(corrupted)
  n = len(labels)
  images = np.concatenate([corrupted[key].numpy() for key in keys])
  with open(path, 'wb') as f:
    np.savez_compressed(
        f,
        images=images.astype(np.float32),
        labels=labels.numpy(),
        kind=np.repeat(np.asarray([kind for kind, _ in keys]), n),
        severity=np.repeat(np.asarray([s for _, s in keys], dtype=np.int64), n),
        image_id=np.tile(np.arange(n, dtype=np.int64), len(keys)))


def ReadCorruptedSet(path):
  """Returns (corrupted, labels) as written by WriteCorruptedSet."""
  with np.load(path, allow_pickle=False) as pack:
    images = torch.from_numpy(pack['images'])
    labels = torch.from_numpy(pack['labels'])
    kinds, severities = pack['kind'], pack['severity']
    image_ids = pack['image_id']
  corrupted = {}
  for kind, severity in sorted(set(zip(kinds.tolist(), severities.tolist()))):
    rows = np.nonzero((kinds == kind) & (severities == severity))[0]
    rows = rows[np.argsort(image_ids[rows], kind='stable')]
    corrupted[(str(kind), int(severity))] = images[torch.from_numpy(rows)]
  return corrupted, labels


def ReportToDict(report, mce=None, per_kind=None, baseline_hash=None,
                 model_hash=None):
  data = {
      'clean_error': float(report.clean_error),
      'corruption_error': float(report.corruption_error),
      'errors': {
          kind: {int(s): float(e) for (k, s), e in sorted(report.errors.items())
                 if k == kind} for kind in sorted(report.KindMeans())
      },
  }
  if mce is not None:
    data['mce'] = float(mce)
    data['per_kind_ce'] = {k: float(v) for k, v in (per_kind or {}).items()}
    data['baseline_checkpoint_sha256'] = baseline_hash
  if model_hash is not None:
    data['model_checkpoint_sha256'] = model_hash
  return data


def ErrorsFromDict(data):
  """Inverse of the 'errors' table of ReportToDict."""
  return {(kind, int(s)): float(e)
          for kind, row in data['errors'].items() for s, e in row.items()}


def WriteMceReport(path, report, baseline_errors, baseline_hash,
                   model_hash=None):
  """Writes the YAML corruption report including mCE against the baseline.

  Returns:
    The mCE value.
  """
  per_kind = PerKindCorruptionError(report.errors, baseline_errors)
  mce = sum(per_kind.values()) / len(per_kind)
  with open(path, 'w', encoding='utf-8') as f:
    yaml.safe_dump(
        ReportToDict(report, mce, per_kind, baseline_hash, model_hash), f,
        sort_keys=True)
  return mce
