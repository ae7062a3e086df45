"""Flux records, the time-bin x segment matrix, supervised windows and scaling.

Timestamps are handled as timezone-aware UTC ``datetime`` objects at the API
surface and as ``numpy.datetime64[s]`` arrays internally.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from typing import IO, Iterable, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    DuplicateCell,
    EmptyInput,
    EmptySegment,
    InsufficientHistory,
    MalformedLine,
    SegmentNotFound,
)

STEP_SECONDS = 600
STD_FLOOR = 1e-6
CSV_HEADER = "timestamp,segment_id,count"
MATRIX_MAGIC = "fluxmatrix"
MATRIX_VERSION = "v1"


def parse_timestamp(text: str) -> datetime:
    """Parse an RFC-3339 timestamp and return it as aware UTC.

    Naive timestamps are rejected; a trailing ``Z`` is accepted.
    """
    s = text.strip()
    if s.endswith(("Z", "z")):
        s = s[:-1] + "+00:00"
    dt = datetime.fromisoformat(s)
    if dt.tzinfo is None:
        raise ValueError(f"timestamp {text!r} has no UTC offset")
    return dt.astimezone(timezone.utc)


def format_timestamp(dt) -> str:
    if isinstance(dt, np.datetime64):
        dt = to_datetime(dt)
    dt = dt.astimezone(timezone.utc)
    if dt.second or dt.microsecond:
        return dt.strftime("%Y-%m-%dT%H:%M:%SZ")
    return dt.strftime("%Y-%m-%dT%H:%MZ")


def to_datetime64(dt: datetime) -> np.datetime64:
    return np.datetime64(dt.astimezone(timezone.utc).replace(tzinfo=None), "s")


def to_datetime(t: np.datetime64) -> datetime:
    seconds = int(t.astype("datetime64[s]").astype(np.int64))
    return datetime.fromtimestamp(seconds, tz=timezone.utc)


@dataclass(frozen=True)
class FluxRecord:
    timestamp: datetime
    segment_id: str
    count: int


def _is_aligned(dt: datetime) -> bool:
    return dt.minute % 10 == 0 and dt.second == 0 and dt.microsecond == 0


def parse_records(stream: IO[str] | Iterable[str], header: bool = False) -> list[FluxRecord]:
    """Read ``timestamp,segment_id,count`` lines in file order.

    Blank lines are ignored. Any line that violates the record invariants
    raises :class:`MalformedLine` with its 1-based line number.
    """
    records = []
    for line_no, raw in enumerate(stream, start=1):
        line = raw.strip()
        if header and line_no == 1:
            if line.replace(" ", "") != CSV_HEADER:
                raise MalformedLine(line_no, f"expected header {CSV_HEADER!r}")
            continue
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 3:
            raise MalformedLine(line_no, f"expected 3 fields, got {len(parts)}")
        ts_text, seg, count_text = (p.strip() for p in parts)
        try:
            ts = parse_timestamp(ts_text)
        except ValueError as exc:
            raise MalformedLine(line_no, f"bad timestamp {ts_text!r}: {exc}") from None
        if not _is_aligned(ts):
            raise MalformedLine(line_no, f"timestamp {ts_text!r} is not 10-minute aligned")
        if not seg:
            raise MalformedLine(line_no, "empty segment_id")
        try:
            count = int(count_text)
        except ValueError:
            raise MalformedLine(line_no, f"count {count_text!r} is not an integer") from None
        if count < 0:
            raise MalformedLine(line_no, f"negative count {count}")
        records.append(FluxRecord(ts, seg, count))
    return records


def write_records(records: Iterable[FluxRecord], stream: IO[str], header: bool = True) -> None:
    if header:
        stream.write(CSV_HEADER + "\n")
    for r in records:
        stream.write(f"{format_timestamp(r.timestamp)},{r.segment_id},{r.count}\n")


@dataclass(frozen=True, eq=False)
class TrafficMatrix:
    """Dense grid of 10-minute counts, rows are time bins and columns segments.

    ``mask`` is True where a cell was observed. Unobserved cells hold 0 in
    ``values`` and carry no meaning.
    """

    start: datetime
    segments: tuple[str, ...]
    values: np.ndarray
    mask: np.ndarray
    step: int = STEP_SECONDS

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        mask = np.asarray(self.mask, dtype=bool)
        if values.ndim != 2 or values.shape != mask.shape:
            raise DimensionMismatch(f"values {values.shape} and mask {mask.shape} differ")
        if values.shape[1] != len(self.segments):
            raise DimensionMismatch(f"{values.shape[1]} columns but {len(self.segments)} segments")
        if len(set(self.segments)) != len(self.segments):
            raise ValueError("duplicate segment ids")
        observed = values[mask]
        if not np.all(np.isfinite(observed)) or np.any(observed < 0):
            raise ValueError("observed cells must be finite and non-negative")
        values.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "segments", tuple(self.segments))
        object.__setattr__(self, "start", self.start.astimezone(timezone.utc))

    @property
    def n_times(self) -> int:
        return self.values.shape[0]

    @property
    def n_segments(self) -> int:
        return self.values.shape[1]

    @property
    def times(self) -> np.ndarray:
        return to_datetime64(self.start) + np.arange(self.n_times) * np.timedelta64(self.step, "s")

    def time_at(self, row: int) -> datetime:
        return self.start + timedelta(seconds=self.step * row)

    def row_of(self, dt: datetime) -> int:
        """Row index of ``dt``; may be out of range, never rounds."""
        delta = (dt.astimezone(timezone.utc) - self.start).total_seconds()
        row, rem = divmod(delta, self.step)
        if rem:
            raise ValueError(f"{dt} is not on the matrix time grid")
        return int(row)

    def column(self, segment_id: str) -> int:
        try:
            return self.segments.index(segment_id)
        except ValueError:
            raise SegmentNotFound(segment_id) from None

    @property
    def complete(self) -> bool:
        return bool(self.mask.all())

    def slice_rows(self, lo: int, hi: int) -> "TrafficMatrix":
        lo = max(lo, 0)
        hi = min(hi, self.n_times)
        return TrafficMatrix(self.time_at(lo), self.segments, self.values[lo:hi], self.mask[lo:hi], self.step)

    def until(self, end: datetime) -> "TrafficMatrix":
        """Rows strictly before ``end``."""
        return self.slice_rows(0, self.row_of(end))

    def to_records(self) -> list[FluxRecord]:
        out = []
        for i, j in zip(*np.nonzero(self.mask)):
            out.append(FluxRecord(self.time_at(int(i)), self.segments[j], int(round(self.values[i, j]))))
        return out


def build_matrix(records: Sequence[FluxRecord]) -> TrafficMatrix:
    if not records:
        raise EmptyInput("no flux records")
    segments: dict[str, int] = {}
    for r in records:
        segments.setdefault(r.segment_id, len(segments))
    start = min(r.timestamp for r in records)
    end = max(r.timestamp for r in records)
    n_times = int((end - start).total_seconds()) // STEP_SECONDS + 1
    values = np.zeros((n_times, len(segments)))
    mask = np.zeros((n_times, len(segments)), dtype=bool)
    for r in records:
        i = int((r.timestamp - start).total_seconds()) // STEP_SECONDS
        j = segments[r.segment_id]
        if mask[i, j]:
            raise DuplicateCell(r.timestamp, r.segment_id)
        values[i, j] = r.count
        mask[i, j] = True
    return TrafficMatrix(start, tuple(segments), values, mask)


def impute(matrix: TrafficMatrix) -> TrafficMatrix:
    """Forward-fill each segment, then backfill any leading gap."""
    values = matrix.values.copy()
    mask = matrix.mask
    n = matrix.n_times
    for j, seg in enumerate(matrix.segments):
        col_mask = mask[:, j]
        if not col_mask.any():
            raise EmptySegment(seg)
        if col_mask.all():
            continue
        idx = np.where(col_mask, np.arange(n), -1)
        np.maximum.accumulate(idx, out=idx)
        idx[idx < 0] = np.argmax(col_mask)
        values[:, j] = values[idx, j]
    return TrafficMatrix(matrix.start, matrix.segments, values, np.ones_like(mask), matrix.step)


@dataclass(frozen=True, eq=False)
class SupervisedWindowSet:
    target_segment: str
    lookback: int
    horizon: int
    inputs: np.ndarray  # [N, lookback, S]
    targets: np.ndarray  # [N, horizon]
    target_times: np.ndarray  # [N] datetime64, time of the first target step
    segments: tuple[str, ...] = ()

    def __len__(self) -> int:
        return self.inputs.shape[0]

    def subset(self, idx) -> "SupervisedWindowSet":
        return SupervisedWindowSet(
            self.target_segment, self.lookback, self.horizon,
            self.inputs[idx], self.targets[idx], self.target_times[idx], self.segments,
        )


def make_windows(matrix: TrafficMatrix, target: str, lookback: int = 6, horizon: int = 3) -> SupervisedWindowSet:
    if lookback < 1 or horizon < 1:
        raise ValueError("lookback and horizon must be positive")
    col = matrix.column(target)
    if not matrix.complete:
        raise ValueError("matrix has unobserved cells; impute it first")
    n_times = matrix.n_times
    n_windows = n_times - lookback - horizon + 1
    if n_windows < 1:
        raise InsufficientHistory(f"need {lookback + horizon} rows, matrix has {n_times}")
    values = matrix.values
    view = np.lib.stride_tricks.sliding_window_view(values, lookback, axis=0)  # [T-L+1, S, L]
    inputs = np.ascontiguousarray(view[:n_windows].transpose(0, 2, 1))
    tcol = values[:, col]
    targets = np.ascontiguousarray(np.lib.stride_tricks.sliding_window_view(tcol[lookback:], horizon)[:n_windows])
    times = matrix.times[lookback:lookback + n_windows]
    return SupervisedWindowSet(target, lookback, horizon, inputs, targets, times, matrix.segments)


@dataclass(frozen=True, eq=False)
class NormStats:
    per_segment_mean: np.ndarray
    per_segment_std: np.ndarray = field()

    def __post_init__(self):
        std = np.maximum(np.asarray(self.per_segment_std, dtype=np.float64), STD_FLOOR)
        object.__setattr__(self, "per_segment_mean", np.asarray(self.per_segment_mean, dtype=np.float64))
        object.__setattr__(self, "per_segment_std", std)


def fit_norm(matrix: TrafficMatrix | np.ndarray) -> NormStats:
    values = matrix.values if isinstance(matrix, TrafficMatrix) else np.asarray(matrix, dtype=np.float64)
    return NormStats(values.mean(axis=0), values.std(axis=0))


def apply_norm(matrix, stats: NormStats) -> np.ndarray:
    """Z-score every column of a TrafficMatrix (or any array whose last axis is S).

    Returns a plain array: z-scores are negative, so they cannot live in a
    TrafficMatrix.
    """
    if isinstance(matrix, TrafficMatrix):
        matrix = matrix.values
    return (np.asarray(matrix, dtype=np.float64) - stats.per_segment_mean) / stats.per_segment_std


def invert_norm(values, stats: NormStats, segment: int | None = None):
    """Undo :func:`apply_norm`; with ``segment`` the values belong to that column only."""
    values = np.asarray(values, dtype=np.float64)
    if segment is None:
        return values * stats.per_segment_std + stats.per_segment_mean
    return values * stats.per_segment_std[segment] + stats.per_segment_mean[segment]


# fluxmatrix v1 serialization

def write_matrix(matrix: TrafficMatrix, stream: IO[str]) -> None:
    vals = matrix.values
    observed = vals[matrix.mask]
    if np.any(observed != np.rint(observed)):
        raise ValueError("fluxmatrix stores integer counts only")
    stream.write(
        f"{MATRIX_MAGIC} {MATRIX_VERSION} {format_timestamp(matrix.start)} "
        f"{matrix.step} {matrix.n_segments} {matrix.n_times}\n"
    )
    stream.write(" ".join(matrix.segments) + "\n")
    grid = np.where(matrix.mask, np.rint(vals), -1).astype(np.int64)
    for row in grid:
        stream.write(" ".join(map(str, row.tolist())) + "\n")


def read_matrix(stream: IO[str]) -> TrafficMatrix:
    head = stream.readline().split()
    if len(head) != 6 or head[0] != MATRIX_MAGIC:
        raise MalformedLine(1, "not a fluxmatrix file")
    if head[1] != MATRIX_VERSION:
        raise MalformedLine(1, f"unsupported fluxmatrix version {head[1]!r}")
    start = parse_timestamp(head[2])
    step, n_seg, n_times = int(head[3]), int(head[4]), int(head[5])
    segments = stream.readline().split()
    if len(segments) != n_seg:
        raise MalformedLine(2, f"expected {n_seg} segment ids, got {len(segments)}")
    grid = np.loadtxt(stream, dtype=np.int64, ndmin=2) if n_times else np.zeros((0, n_seg), np.int64)
    if grid.shape != (n_times, n_seg):
        raise MalformedLine(3, f"expected {n_times}x{n_seg} grid, got {grid.shape[0]}x{grid.shape[1]}")
    if np.any(grid < -1):
        raise MalformedLine(3, "counts below -1 in grid")
    mask = grid >= 0
    return TrafficMatrix(start, tuple(segments), np.where(mask, grid, 0).astype(np.float64), mask, step)


def load_matrix(path) -> TrafficMatrix:
    """Load either a fluxmatrix file or a record CSV (header auto-detected)."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    first = text.split("\n", 1)[0].strip()
    if first.startswith(MATRIX_MAGIC):
        return read_matrix(io.StringIO(text))
    header = first.replace(" ", "") == CSV_HEADER
    return build_matrix(parse_records(io.StringIO(text), header=header))


def save_matrix_csv(matrix: TrafficMatrix, stream: IO[str], header: bool = True) -> None:
    """Write the observed cells as record CSV, time-major then segment order."""
    if header:
        stream.write(CSV_HEADER + "\n")
    stamps = [format_timestamp(matrix.time_at(i)) for i in range(matrix.n_times)]
    vals = np.rint(matrix.values).astype(np.int64)
    lines = []
    for i, stamp in enumerate(stamps):
        for j, seg in enumerate(matrix.segments):
            if matrix.mask[i, j]:
                lines.append(f"{stamp},{seg},{vals[i, j]}\n")
    stream.write("".join(lines))
