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

"""Dataset ingestion: synthetic blobs, class-folder images and packed arrays.

All formats end up as a Dataset holding float images in [0, 1] with shape
(N, C, H, W) and integer labels, split into train/val/test.

Example Usage:

  dataset = datasets.Ingest('synthetic', 'synthetic', seed=7)
  order = datasets.EpochOrder(len(dataset.Split('train')[1]), 7, epoch)
  for images, labels in datasets.IterateBatches(
      *dataset.Split('train'), batch_size=128, order=order):
    ...
"""

import dataclasses
import hashlib
import os
from typing import Dict, List, Tuple

from absl import logging
import numpy as np
from PIL import Image
import torch

from . import labels as labels_lib
from . import seeding

IMAGE_EXTENSIONS = ('.png', '.jpg', '.jpeg', '.bmp', '.gif')


class Error(Exception):
  """Generic error class that other errors in this module inherit from."""
  pass


class DatasetError(Error):
  """Thrown when a dataset source cannot be read; lists every bad file."""

  def __init__(self, message, diagnostics=()):
    self.diagnostics = list(diagnostics)
    if self.diagnostics:
      message = message + ':\n  ' + '\n  '.join(self.diagnostics)
    super().__init__(message)


class EmptyClassError(DatasetError):
  """Thrown when a class folder holds no images."""

  def __init__(self, class_name):
    super().__init__(f'Class folder {class_name!r} contains no images')
    self.class_name = class_name


@dataclasses.dataclass
class Dataset(object):
  """Split image classification data.

  Attributes:
    splits: split name -> (images, labels) tensors.
    class_names: names of the classes, index = label.
  """
  splits: Dict[str, Tuple[torch.Tensor, torch.Tensor]]
  class_names: List[str]

  @property
  def num_classes(self):
    return len(self.class_names)

  @property
  def input_shape(self):
    """(height, width, channels) of the images."""
    images = next(iter(self.splits.values()))[0]
    return (images.shape[2], images.shape[3], images.shape[1])

  def Split(self, name):
    return self.splits[name]

  def Fingerprint(self):
    """SHA-256 over class names, splits, images and labels."""
    digest = hashlib.sha256()
    digest.update('\n'.join(self.class_names).encode())
    for name in sorted(self.splits):
      images, labels = self.splits[name]
      digest.update(name.encode())
      digest.update(images.contiguous().numpy().tobytes())
      digest.update(labels.contiguous().numpy().tobytes())
    return digest.hexdigest()


def SplitArrays(images, labels, val_fraction, test_fraction, generator):
  """Shuffles and splits arrays into train/val/test."""
  n = len(labels)
  order = torch.randperm(n, generator=generator)
  n_test = int(round(n * test_fraction))
  n_val = int(round(n * val_fraction))
  test, val, train = (order[:n_test], order[n_test:n_test + n_val],
                      order[n_test + n_val:])
  return {
      labels_lib.Split.TRAIN: (images[train], labels[train]),
      labels_lib.Split.VAL: (images[val], labels[val]),
      labels_lib.Split.TEST: (images[test], labels[test]),
  }


def Synthetic(num_classes=10, n_samples=2000, image_size=32, seed=0,
              channels=3, val_fraction=0.1, test_fraction=0.2, noise=0.15):
  """Gaussian blob classes.

  Every class has a center, a radius and a color. A sample is its class blob
  with a jittered center on a gray background plus pixel noise, clipped to
  [0, 1].
  """
  seeds = seeding.SeedHierarchy(seed)
  generator = seeds.Generator(labels_lib.Stream.DATA, 'synthetic')
  centers = torch.rand(num_classes, 2, generator=generator) * 0.6 + 0.2
  radii = torch.rand(num_classes, generator=generator) * 0.15 + 0.1
  colors = torch.rand(num_classes, channels, generator=generator)

  labels = torch.arange(n_samples) % num_classes
  labels = labels[torch.randperm(n_samples, generator=generator)]
  jitter = (torch.rand(n_samples, 2, generator=generator) - 0.5) * 0.1
  coords = (torch.arange(image_size, dtype=torch.float32) + 0.5) / image_size
  ys, xs = torch.meshgrid(coords, coords, indexing='ij')
  center = centers[labels] + jitter
  distance = ((ys[None] - center[:, 0, None, None])**2 +
              (xs[None] - center[:, 1, None, None])**2)
  blob = torch.exp(-distance / (2 * radii[labels, None, None]**2))
  images = 0.5 + blob[:, None] * (colors[labels][:, :, None, None] - 0.5)
  images = images + noise * torch.randn(
      images.shape, generator=generator)
  images = images.clamp(0.0, 1.0).float()
  return Dataset(
      splits=SplitArrays(images, labels.long(), val_fraction, test_fraction,
                         seeds.Generator(labels_lib.Stream.DATA, 'split')),
      class_names=[f'class_{c}' for c in range(num_classes)])


def _LoadImage(path):
  with Image.open(path) as image:
    return np.asarray(image.convert('RGB'), dtype=np.uint8)


def ClassFolder(root, seed=0, val_fraction=0.1, test_fraction=0.2):
  """Reads root/<class name>/<image> files.

  Raises:
    DatasetError: if the root is missing, a file cannot be decoded or images
        differ in size (every offending file is listed).
    EmptyClassError: if a class folder holds no images.
  """
  if not os.path.isdir(root):
    raise DatasetError(f'Dataset folder {root} does not exist')
  class_names = sorted(
      name for name in os.listdir(root)
      if os.path.isdir(os.path.join(root, name)))
  if not class_names:
    raise DatasetError(f'Dataset folder {root} has no class folders')

  images = []
  labels = []
  diagnostics = []
  shape = None
  for label, class_name in enumerate(class_names):
    directory = os.path.join(root, class_name)
    files = sorted(
        f for f in os.listdir(directory)
        if f.lower().endswith(IMAGE_EXTENSIONS))
    if not files:
      raise EmptyClassError(class_name)
    for file_name in files:
      path = os.path.join(directory, file_name)
      try:
        array = _LoadImage(path)
      except (OSError, ValueError) as e:
        diagnostics.append(f'{path}: cannot decode ({e})')
        continue
      if shape is None:
        shape = array.shape
      elif array.shape != shape:
        diagnostics.append(f'{path}: shape {array.shape}, expected {shape}')
        continue
      images.append(array)
      labels.append(label)
  if diagnostics:
    raise DatasetError(f'Cannot ingest {root}', diagnostics)

  logging.info(f'Read {len(images)} images of {len(class_names)} classes '
               f'from {root}')
  tensor = torch.from_numpy(np.stack(images)).permute(0, 3, 1, 2)
  tensor = tensor.float().div(255.0).contiguous()
  generator = seeding.SeedHierarchy(seed).Generator(labels_lib.Stream.DATA,
                                                    'split')
  return Dataset(
      splits=SplitArrays(tensor, torch.tensor(labels, dtype=torch.long),
                         val_fraction, test_fraction, generator),
      class_names=class_names)


def WritePacked(path, dataset):
  """Writes every split of the dataset to a compressed .npz pack."""
  arrays = {'class_names': np.asarray(dataset.class_names)}
  for name, (images, labels) in dataset.splits.items():
    arrays[f'{name}_images'] = images.numpy()
    arrays[f'{name}_labels'] = labels.numpy()
  with open(path, 'wb') as f:
    np.savez_compressed(f, **arrays)


def Packed(path, seed=0, val_fraction=0.1, test_fraction=0.2):
  """Reads a .npz pack.

  A pack either holds per split `<split>_images`/`<split>_labels` arrays (as
  written by WritePacked) or a single `images`/`labels` pair that is split
  here. uint8 images are scaled to [0, 1]; channel-last images are
  transposed.

  Raises:
    DatasetError: if the pack is unreadable or ragged.
  """
  try:
    with np.load(path, allow_pickle=False) as pack:
      arrays = {key: pack[key] for key in pack.files}
  except (OSError, ValueError) as e:
    raise DatasetError(f'Cannot read packed dataset {path}', [str(e)])

  def Images(array):
    if array.ndim != 4:
      raise DatasetError(f'Packed images in {path} must be 4-D, got shape '
                         f'{array.shape}')
    tensor = torch.from_numpy(np.ascontiguousarray(array))
    if array.shape[-1] in (1, 3) and array.shape[1] not in (1, 3):
      tensor = tensor.permute(0, 3, 1, 2).contiguous()
    if tensor.dtype == torch.uint8:
      tensor = tensor.float().div(255.0)
    return tensor.float()

  def Pair(prefix):
    images, labels = arrays[f'{prefix}images'], arrays[f'{prefix}labels']
    if len(images) != len(labels):
      raise DatasetError(f'{path}: {len(images)} images but {len(labels)} '
                         'labels')
    return Images(images), torch.from_numpy(labels.astype(np.int64))

  if f'{labels_lib.Split.TRAIN}_images' in arrays:
    splits = {
        name: Pair(f'{name}_')
        for name in sorted(labels_lib.Split.SET_ALL)
        if f'{name}_images' in arrays
    }
  elif 'images' in arrays:
    images, labels = Pair('')
    generator = seeding.SeedHierarchy(seed).Generator(labels_lib.Stream.DATA,
                                                      'split')
    splits = SplitArrays(images, labels, val_fraction, test_fraction,
                         generator)
  else:
    raise DatasetError(f'{path} holds neither split arrays nor images/labels')

  if 'class_names' in arrays:
    class_names = [str(name) for name in arrays['class_names']]
  else:
    num_classes = max(
        int(labels.max()) for _, labels in splits.values() if len(labels)) + 1
    class_names = [f'class_{c}' for c in range(num_classes)]
  return Dataset(splits=splits, class_names=class_names)


def Ingest(source, data_format, seed=0, val_fraction=0.1, test_fraction=0.2,
           synthetic_classes=10, synthetic_samples=2000, image_size=32):
  """Builds a Dataset from a source of the given format.

  Args:
    source: dataset path (ignored for the synthetic format).
    data_format: 'synthetic', 'folder' or 'packed'.
    seed: seed of the split (and of the synthetic content).

  Returns:
    Dataset.

  Raises:
    DatasetError: for unknown formats and unreadable sources.
  """
  if data_format == 'synthetic':
    return Synthetic(synthetic_classes, synthetic_samples, image_size, seed,
                     val_fraction=val_fraction, test_fraction=test_fraction)
  if data_format == 'folder':
    return ClassFolder(source, seed, val_fraction, test_fraction)
  if data_format == 'packed':
    return Packed(source, seed, val_fraction, test_fraction)
  raise DatasetError(f'Unknown dataset format {data_format!r}')


def FromConfig(config):
  return Ingest(
      config.dataset,
      config.dataset_format,
      seed=config.seed,
      val_fraction=config.val_fraction,
      test_fraction=config.test_fraction,
      synthetic_classes=config.synthetic_classes,
      synthetic_samples=config.synthetic_samples,
      image_size=config.image_size)


def EpochOrder(n, seed, epoch):
  """Sample order of one epoch, a pure function of (seed, epoch)."""
  generator = seeding.SeedHierarchy(seed).Generator(labels_lib.Stream.DATA,
                                                    'epoch', epoch)
  return torch.randperm(n, generator=generator)


def IterateBatches(images, labels, batch_size, order=None):
  """Yields (images, labels) batches in the given order (default: as stored).

  The last batch may be smaller.
  """
  n = len(labels)
  if order is None:
    order = torch.arange(n)
  for start in range(0, n, batch_size):
    index = order[start:start + batch_size]
    yield images[index], labels[index]
