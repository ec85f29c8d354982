"""Tests for ewsrobust.datasets."""

import os

from absl.testing import absltest
import numpy as np
from PIL import Image
import torch

from ewsrobust import datasets
from ewsrobust import labels


class SyntheticTest(absltest.TestCase):

  def testSplitSizesAndRange(self):
    dataset = datasets.Synthetic(num_classes=4, n_samples=200, image_size=8)
    self.assertLen(dataset.Split(labels.Split.TEST)[1], 40)
    self.assertLen(dataset.Split(labels.Split.VAL)[1], 20)
    self.assertLen(dataset.Split(labels.Split.TRAIN)[1], 140)
    images = dataset.Split(labels.Split.TRAIN)[0]
    self.assertEqual(tuple(images.shape[1:]), (3, 8, 8))
    self.assertGreaterEqual(float(images.min()), 0.0)
    self.assertLessEqual(float(images.max()), 1.0)
    self.assertEqual(dataset.num_classes, 4)
    self.assertEqual(dataset.input_shape, (8, 8, 3))

  def testDeterministicPerSeed(self):
    first = datasets.Synthetic(n_samples=100, image_size=8, seed=3)
    second = datasets.Synthetic(n_samples=100, image_size=8, seed=3)
    other = datasets.Synthetic(n_samples=100, image_size=8, seed=4)
    self.assertEqual(first.Fingerprint(), second.Fingerprint())
    self.assertNotEqual(first.Fingerprint(), other.Fingerprint())

  def testIngestUnknownFormat(self):
    with self.assertRaises(datasets.DatasetError):
      datasets.Ingest('x', 'tfrecord')


class ClassFolderTest(absltest.TestCase):

  def _WriteImage(self, path, value, size=(6, 6)):
    array = np.full(size + (3,), value, dtype=np.uint8)
    Image.fromarray(array).save(path)

  def _MakeFolder(self, classes):
    root = self.create_tempdir().full_path
    for name, count in classes.items():
      os.makedirs(os.path.join(root, name))
      for i in range(count):
        self._WriteImage(os.path.join(root, name, f'{i}.png'), 10 * i)
    return root

  def testReadsClassesInSortedOrder(self):
    root = self._MakeFolder({'dog': 3, 'cat': 2})
    dataset = datasets.ClassFolder(root, val_fraction=0.0, test_fraction=0.0)
    self.assertEqual(dataset.class_names, ['cat', 'dog'])
    images, labels_ = dataset.Split(labels.Split.TRAIN)
    self.assertEqual(tuple(images.shape), (5, 3, 6, 6))
    self.assertEqual(sorted(labels_.tolist()), [0, 0, 1, 1, 1])
    self.assertLessEqual(float(images.max()), 1.0)

  def testEmptyClass(self):
    root = self._MakeFolder({'cat': 2, 'dog': 0})
    with self.assertRaises(datasets.EmptyClassError) as cm:
      datasets.ClassFolder(root)
    self.assertIn('dog', str(cm.exception))

  def testAllBadFilesListed(self):
    root = self._MakeFolder({'cat': 2})
    with open(os.path.join(root, 'cat', 'broken.png'), 'wb') as f:
      f.write(b'not an image')
    self._WriteImage(os.path.join(root, 'cat', 'big.png'), 0, size=(9, 9))
    with self.assertRaises(datasets.DatasetError) as cm:
      datasets.ClassFolder(root)
    self.assertLen(cm.exception.diagnostics, 2)

  def testMissingRoot(self):
    with self.assertRaises(datasets.DatasetError):
      datasets.ClassFolder(os.path.join(self.create_tempdir().full_path, 'x'))


class PackedTest(absltest.TestCase):

  def testWrittenPackReadsBackWithSameFingerprint(self):
    dataset = datasets.Synthetic(n_samples=60, image_size=8)
    path = os.path.join(self.create_tempdir().full_path, 'data.npz')
    datasets.WritePacked(path, dataset)
    packed = datasets.Ingest(path, 'packed')
    self.assertEqual(packed.class_names, dataset.class_names)
    self.assertEqual(packed.Fingerprint(), dataset.Fingerprint())

  def testChannelLastUint8Pack(self):
    path = os.path.join(self.create_tempdir().full_path, 'raw.npz')
    np.savez(path,
             images=np.full((10, 4, 4, 3), 255, dtype=np.uint8),
             labels=np.arange(10) % 2)
    dataset = datasets.Packed(path, val_fraction=0.0, test_fraction=0.0)
    images, _ = dataset.Split(labels.Split.TRAIN)
    self.assertEqual(tuple(images.shape), (10, 3, 4, 4))
    self.assertEqual(float(images.max()), 1.0)
    self.assertEqual(dataset.num_classes, 2)

  def testRaggedPack(self):
    path = os.path.join(self.create_tempdir().full_path, 'ragged.npz')
    np.savez(path, images=np.zeros((4, 3, 2, 2)), labels=np.zeros(3))
    with self.assertRaises(datasets.DatasetError):
      datasets.Packed(path)


class BatchingTest(absltest.TestCase):

  def testIterateBatches(self):
    images = torch.arange(10).float()[:, None]
    batches = list(datasets.IterateBatches(images, torch.arange(10), 4))
    self.assertEqual([len(y) for _, y in batches], [4, 4, 2])

  def testEpochOrder(self):
    first = datasets.EpochOrder(50, seed=1, epoch=0)
    self.assertTrue(torch.equal(first, datasets.EpochOrder(50, 1, 0)))
    self.assertFalse(torch.equal(first, datasets.EpochOrder(50, 1, 1)))
    self.assertEqual(sorted(first.tolist()), list(range(50)))


if __name__ == '__main__':
  absltest.main()
