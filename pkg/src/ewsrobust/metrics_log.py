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

"""Append-only metrics log of a run.

Every line of the log is one JSON object with the fields of MetricsRecord, in
the fixed order run_id, step, split, metric, source_id, severity, epsilon,
value. Missing optional fields are written as null.

Example Usage:

  log = MetricsLog(os.path.join(run_dir, 'metrics.jsonl'), run_id)
  log.Append(step, labels.Split.TEST, labels.Metric.CLEAN_ERROR, 9.5)
  records = ReadRecords(log.path)
"""

import dataclasses
import json
import math
import os
from typing import Optional

from . import labels


class Error(Exception):
  """Generic error class that other errors in this module inherit from."""
  pass


class InvalidRecordError(Error):
  """Thrown when a record violates the metrics log schema."""
  pass


@dataclasses.dataclass(frozen=True)
class MetricsRecord(object):
  """One logged measurement.

  Attributes:
    run_id: id of the run that produced the value.
    step: global training step the value refers to.
    split: one of labels.Split.
    metric: one of labels.Metric.
    source_id: corruption kind, attack id or subnet source, if any.
    severity: corruption severity, if any.
    epsilon: attack radius, if any.
    value: the measurement (percent for error metrics).
  """
  run_id: str
  step: int
  split: str
  metric: str
  value: float
  source_id: Optional[str] = None
  severity: Optional[int] = None
  epsilon: Optional[float] = None

  def Violations(self):
    violations = []
    if self.split not in labels.Split.SET_ALL:
      violations.append(f'unknown split {self.split!r}')
    if self.metric not in labels.Metric.SET_ALL:
      violations.append(f'unknown metric {self.metric!r}')
    if not math.isfinite(self.value):
      violations.append(f'{self.metric} value {self.value} is not finite')
    elif self.metric in labels.Metric.SET_PERCENT and not (
        0 <= self.value <= 100):
      violations.append(f'{self.metric} value {self.value} outside [0, 100]')
    if self.step < 0:
      violations.append(f'negative step {self.step}')
    return violations


_FIELD_ORDER = ('run_id', 'step', 'split', 'metric', 'source_id', 'severity',
                'epsilon', 'value')


def ToJson(record):
  return json.dumps({name: getattr(record, name) for name in _FIELD_ORDER})


def FromJson(line):
  """Parses one log line.

  Raises:
    InvalidRecordError: if the line is malformed or violates the schema.
  """
  try:
    data = json.loads(line)
    record = MetricsRecord(
        run_id=str(data['run_id']),
        step=int(data['step']),
        split=data['split'],
        metric=data['metric'],
        value=float(data['value']),
        source_id=data.get('source_id'),
        severity=data.get('severity'),
        epsilon=data.get('epsilon'))
  except (ValueError, KeyError, TypeError) as e:
    raise InvalidRecordError(f'Malformed metrics line {line!r}: {e}')
  violations = record.Violations()
  if violations:
    raise InvalidRecordError('; '.join(violations))
  return record


class MetricsLog(object):
  """Appends records of one run to a line-delimited file.

  With path None the records are only kept in memory.
  """

  def __init__(self, path, run_id):
    self.path = path
    self.run_id = run_id
    self._records = ReadRecords(path) if path else []

  def Append(self, step, split, metric, value, source_id=None, severity=None,
             epsilon=None):
    """Validates and appends one record.

    Returns:
      The appended MetricsRecord.

    Raises:
      InvalidRecordError: if the record violates the schema.
    """
    record = MetricsRecord(
        run_id=self.run_id,
        step=int(step),
        split=split,
        metric=metric,
        value=float(value),
        source_id=source_id,
        severity=None if severity is None else int(severity),
        epsilon=None if epsilon is None else float(epsilon))
    violations = record.Violations()
    if violations:
      raise InvalidRecordError('; '.join(violations))
    self._records.append(record)
    if self.path:
      directory = os.path.dirname(self.path)
      if directory:
        os.makedirs(directory, exist_ok=True)
      with open(self.path, 'a', encoding='utf-8') as f:
        f.write(ToJson(record) + '\n')
    return record

  def Records(self):
    return list(self._records)

  def TruncateAfter(self, step):
    """Drops every record logged after step (used when a run resumes)."""
    self._records = [r for r in self._records if r.step <= step]
    if self.path and os.path.exists(self.path):
      tmp_path = f'{self.path}.tmp'
      with open(tmp_path, 'w', encoding='utf-8') as f:
        for record in self._records:
          f.write(ToJson(record) + '\n')
      os.replace(tmp_path, self.path)


def ReadRecords(path):
  """Returns every record of a log file (an absent file has none)."""
  if not os.path.exists(path):
    return []
  with open(path, 'r', encoding='utf-8') as f:
    return [FromJson(line) for line in f if line.strip()]


def Select(records, metric, split=None, source_id=None):
  """Filters records by metric, and optionally split and source id."""
  return [
      r for r in records if r.metric == metric and
      (split is None or r.split == split) and
      (source_id is None or r.source_id == source_id)
  ]


def BestStep(records, metric, split=labels.Split.VAL, source_id=None):
  """Returns the step with the lowest logged value (earliest on ties).

  This is the early stopping rule used for best checkpoint selection, so the
  selection can be reproduced from the log alone.

  Returns:
    The step, or None if no record matches.
  """
  candidates = Select(records, metric, split, source_id)
  if not candidates:
    return None
  best = min(candidates, key=lambda r: (r.value, r.step))
  return best.step
