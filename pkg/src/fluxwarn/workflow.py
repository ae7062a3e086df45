"""Glue between trained models, thresholds and evaluation: alarm level tables."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import IO, Iterable, Mapping, Sequence

import numpy as np

from .alarm import AlarmLevel, AlarmThresholds, ConfusionMatrix3, classify, evaluate, is_advisory
from .data import TrafficMatrix, format_timestamp, parse_timestamp
from .errors import SchemaMismatch

TABLE_FIELDS = ("time", "segment", "true_flux", "pred_flux", "true_level", "pred_level")


@dataclass(frozen=True)
class AlarmRow:
    time: datetime
    segment: str
    true_flux: float
    pred_flux: float
    true_level: AlarmLevel
    pred_level: AlarmLevel


def check_schema(model, matrix: TrafficMatrix, thresholds: Mapping[str, AlarmThresholds]) -> None:
    if tuple(model.segments) != tuple(matrix.segments):
        raise SchemaMismatch(
            f"model for {model.target_segment!r} was trained on {len(model.segments)} segments; "
            f"data has {matrix.n_segments} (or a different order)")
    if model.target_segment not in thresholds:
        raise SchemaMismatch(f"thresholds have no entry for segment {model.target_segment!r}")


def alarm_table(models: Sequence, matrix: TrafficMatrix, thresholds: Mapping[str, AlarmThresholds],
                start: datetime | None = None, end: datetime | None = None,
                step: int | None = None) -> list[AlarmRow]:
    """Classify true and forecast flux for every forecast instant in ``[start, end)``.

    Each model must expose ``segments``, ``target_segment``, ``lookback``,
    ``horizon`` and ``predict(recent, raw_units=True)`` over a batch. The
    forecast instant is horizon step ``step`` (1-based, default the last one)
    after the lookback window. ``matrix`` must be fully observed.
    """
    if not matrix.complete:
        raise ValueError("matrix has unobserved cells; impute it first")
    rows: list[AlarmRow] = []
    lo_time = start or matrix.start
    hi_time = end or matrix.time_at(matrix.n_times)
    for model in models:
        check_schema(model, matrix, thresholds)
        th = thresholds[model.target_segment]
        k = model.horizon if step is None else step
        if not 1 <= k <= model.horizon:
            raise ValueError(f"step must lie in 1..{model.horizon}")
        offset = model.lookback + k - 1  # rows from window start to forecast instant
        first = max(matrix.row_of(lo_time), offset)
        last = min(matrix.row_of(hi_time), matrix.n_times)
        if last <= first:
            continue
        targets = np.arange(first, last)
        starts = targets - offset
        windows = np.stack([matrix.values[s:s + model.lookback] for s in starts])
        pred = np.asarray(model.predict(windows, raw_units=True))[:, k - 1]
        col = matrix.column(model.target_segment)
        for r, p in zip(targets, pred):
            true = float(matrix.values[r, col])
            rows.append(AlarmRow(matrix.time_at(int(r)), model.target_segment, true, float(p),
                                 classify(true, th), classify(float(p), th)))
    rows.sort(key=lambda r: (r.time, r.segment))
    return rows


def write_table(rows: Iterable[AlarmRow], stream: IO[str]) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(TABLE_FIELDS)
    for r in rows:
        w.writerow([format_timestamp(r.time), r.segment, f"{r.true_flux:g}", f"{r.pred_flux:.3f}",
                    str(r.true_level), str(r.pred_level)])


def read_table(stream: IO[str]) -> list[AlarmRow]:
    reader = csv.DictReader(stream)
    if tuple(reader.fieldnames or ()) != TABLE_FIELDS:
        raise ValueError(f"level table header must be {','.join(TABLE_FIELDS)}")
    return [
        AlarmRow(parse_timestamp(r["time"]), r["segment"], float(r["true_flux"]), float(r["pred_flux"]),
                 AlarmLevel.parse(r["true_level"]), AlarmLevel.parse(r["pred_level"]))
        for r in reader
    ]


def score_table(rows: Sequence[AlarmRow], daytime_only: bool = False) -> ConfusionMatrix3:
    """Confusion matrix of a level table; ``daytime_only`` keeps 06:00-22:00 rows."""
    if daytime_only:
        rows = [r for r in rows if 6 <= r.time.astimezone(timezone.utc).hour < 22]
    return evaluate([r.true_level for r in rows], [r.pred_level for r in rows])


def advisory_share(rows: Sequence[AlarmRow]) -> float:
    return sum(is_advisory(r.time) for r in rows) / max(len(rows), 1)


def relative_error(pred, true) -> float:
    """Aggregate relative error ``sum|pred - true| / sum|true|`` over a period."""
    pred = np.asarray(pred, dtype=np.float64)
    true = np.asarray(true, dtype=np.float64)
    denom = np.abs(true).sum()
    if denom == 0:
        raise ValueError("relative error undefined for an all-zero reference")
    return float(np.abs(pred - true).sum() / denom)
