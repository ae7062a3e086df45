"""Per-segment percentile thresholds, three-tier classification and scoring."""

from __future__ import annotations

import csv
import enum
import json
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import IO, Sequence

import numpy as np

from .data import TrafficMatrix, format_timestamp, parse_timestamp, to_datetime64
from .errors import LengthMismatch, NoDaytimeData

DAYTIME_HOURS = (6, 22)
NIGHT_HOURS = (23, 5)
THRESHOLD_FIELDS = ("segment_id", "p50", "p75", "sample_count", "window_start", "window_end")


class AlarmLevel(enum.IntEnum):
    LOW = 0
    MEDIUM = 1
    HIGH = 2

    def __str__(self) -> str:
        return self.name.capitalize()

    @classmethod
    def parse(cls, text: str) -> "AlarmLevel":
        return cls[text.strip().upper()]


@dataclass(frozen=True)
class AlarmThresholds:
    segment_id: str
    p50: float
    p75: float
    sample_count: int
    window: tuple[datetime, datetime]
    hours_filter: tuple[int, int] = DAYTIME_HOURS

    def __post_init__(self):
        if not self.p50 <= self.p75:
            raise ValueError(f"p50 {self.p50} exceeds p75 {self.p75}")
        if self.sample_count <= 0:
            raise ValueError("sample_count must be positive")


def _hours(times: np.ndarray, utc_offset_hours: int) -> np.ndarray:
    t = times.astype("datetime64[s]") + np.timedelta64(utc_offset_hours, "h")
    return (t - t.astype("datetime64[D]")).astype("timedelta64[h]").astype(np.int64)


def compute_thresholds(segment_id: str, times, values, as_of: datetime, *,
                       since: datetime | None = None, hours: tuple[int, int] = DAYTIME_HOURS,
                       utc_offset_hours: int = 0) -> AlarmThresholds:
    """50th/75th percentiles of daytime flux from ``since`` up to ``as_of``.

    ``since`` defaults to January 1st of ``as_of``'s year. Observations at
    ``as_of`` itself are excluded; NaN values count as missing. Percentiles
    interpolate linearly between order statistics.
    """
    as_of = as_of.astimezone(timezone.utc)
    if since is None:
        since = datetime(as_of.year, 1, 1, tzinfo=timezone.utc)
    times = np.asarray(times, dtype="datetime64[s]")
    values = np.asarray(values, dtype=np.float64)
    if times.shape != values.shape:
        raise LengthMismatch(f"{times.size} timestamps vs {values.size} values")
    hour = _hours(times, utc_offset_hours)
    keep = ((times >= to_datetime64(since)) & (times < to_datetime64(as_of))
            & (hour >= hours[0]) & (hour < hours[1]) & np.isfinite(values))
    sample = values[keep]
    if sample.size == 0:
        raise NoDaytimeData(f"segment {segment_id!r}: no observations in hours {hours} before {as_of}")
    p50, p75 = np.percentile(sample, [50, 75])
    return AlarmThresholds(segment_id, float(p50), float(p75), int(sample.size), (since, as_of), hours)


def thresholds_for_matrix(matrix: TrafficMatrix, as_of: datetime, **kw) -> dict[str, AlarmThresholds]:
    times = matrix.times
    out = {}
    for j, seg in enumerate(matrix.segments):
        col = np.where(matrix.mask[:, j], matrix.values[:, j], np.nan)
        out[seg] = compute_thresholds(seg, times, col, as_of, **kw)
    return out


def classify(flux: float, thresholds: AlarmThresholds) -> AlarmLevel:
    """Low below p50, High above p75, Medium on and between the two bounds."""
    if flux < thresholds.p50:
        return AlarmLevel.LOW
    if flux > thresholds.p75:
        return AlarmLevel.HIGH
    return AlarmLevel.MEDIUM


def is_advisory(t: datetime, utc_offset_hours: int = 0) -> bool:
    """True in the overnight hours where thresholds carry little information."""
    hour = (t.astimezone(timezone.utc).hour + utc_offset_hours) % 24
    return hour >= NIGHT_HOURS[0] or hour < NIGHT_HOURS[1]


@dataclass(frozen=True, eq=False)
class ConfusionMatrix3:
    counts: np.ndarray  # [true, predicted]

    def row_totals(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def recall(self, level: AlarmLevel) -> float | None:
        total = self.counts[level].sum()
        return None if total == 0 else float(self.counts[level, level] / total)

    def recalls(self) -> dict[str, float | None]:
        return {str(lv): self.recall(lv) for lv in AlarmLevel}

    def accuracy(self) -> float | None:
        n = self.counts.sum()
        return None if n == 0 else float(np.trace(self.counts) / n)

    def to_json(self) -> str:
        labels = [str(lv) for lv in AlarmLevel]
        doc = {
            "labels": labels,
            "counts": self.counts.astype(int).tolist(),
            "recall": self.recalls(),
            "accuracy": self.accuracy(),
            "total": int(self.counts.sum()),
        }
        return json.dumps(doc, indent=2) + "\n"


def evaluate(true_levels: Sequence[AlarmLevel], pred_levels: Sequence[AlarmLevel]) -> ConfusionMatrix3:
    if len(true_levels) != len(pred_levels):
        raise LengthMismatch(f"{len(true_levels)} true vs {len(pred_levels)} predicted levels")
    counts = np.zeros((3, 3), dtype=np.int64)
    np.add.at(counts, (np.asarray(true_levels, dtype=int), np.asarray(pred_levels, dtype=int)), 1)
    return ConfusionMatrix3(counts)


def write_thresholds(thresholds: Sequence[AlarmThresholds], stream: IO[str]) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(THRESHOLD_FIELDS)
    for th in thresholds:
        w.writerow([th.segment_id, repr(th.p50), repr(th.p75), th.sample_count,
                    format_timestamp(th.window[0]), format_timestamp(th.window[1])])


def read_thresholds(stream: IO[str]) -> dict[str, AlarmThresholds]:
    reader = csv.DictReader(stream)
    if tuple(reader.fieldnames or ()) != THRESHOLD_FIELDS:
        raise ValueError(f"thresholds header must be {','.join(THRESHOLD_FIELDS)}")
    out = {}
    for row in reader:
        out[row["segment_id"]] = AlarmThresholds(
            row["segment_id"], float(row["p50"]), float(row["p75"]), int(row["sample_count"]),
            (parse_timestamp(row["window_start"]), parse_timestamp(row["window_end"])),
        )
    return out
