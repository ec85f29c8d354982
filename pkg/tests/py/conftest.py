"""Pytest wiring: absltest helpers read absl flags, so parse them up front."""

from absl import flags


def pytest_configure(config):
  del config
  if not flags.FLAGS.is_parsed():
    flags.FLAGS.mark_as_parsed()
