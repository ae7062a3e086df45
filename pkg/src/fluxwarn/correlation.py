"""Traffic/pollution coupling: Pearson coefficient, hourly lag scans, daily breakdown.

Lag convention: a positive lag ``k`` pairs traffic at hour ``t - k`` with
pollution at hour ``t``, i.e. traffic leads pollution by ``k`` hours.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from datetime import date, datetime, timedelta, timezone
from typing import IO, Sequence

import numpy as np

from .data import TrafficMatrix, format_timestamp, parse_timestamp
from .errors import ConstantSeries, InsufficientOverlap, LengthMismatch, MisalignedStart, PartialDay

HOUR = 3600
MIN_OVERLAP = 48
TIE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class HourlySeries:
    start: datetime
    values: np.ndarray
    step: int = HOUR

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1 or not np.all(np.isfinite(values)):
            raise ValueError("hourly values must be a finite 1-D sequence")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "start", self.start.astimezone(timezone.utc))

    def __len__(self) -> int:
        return self.values.size

    def time_at(self, k: int) -> datetime:
        return self.start + timedelta(seconds=self.step * k)


def rebin_to_hourly(matrix: TrafficMatrix, segment: str) -> HourlySeries:
    """Sum six 10-minute bins per hour; a trailing incomplete hour is dropped."""
    if matrix.step != 600:
        raise ValueError("matrix step must be 600 s")
    start = matrix.start
    if start.minute or start.second or start.microsecond:
        raise MisalignedStart(f"matrix starts at {format_timestamp(start)}, not on the hour")
    col = matrix.column(segment)
    if not matrix.mask[:, col].all():
        raise ValueError(f"segment {segment!r} has unobserved cells; impute first")
    n_hours = matrix.n_times // 6
    hourly = matrix.values[:n_hours * 6, col].reshape(n_hours, 6).sum(axis=1)
    return HourlySeries(start, hourly)


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise LengthMismatch(f"lengths {x.shape} and {y.shape} differ")
    if x.size < 2:
        raise LengthMismatch("need at least two points")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = np.dot(dx, dx)
    syy = np.dot(dy, dy)
    if sxx == 0 or syy == 0:
        raise ConstantSeries("correlation undefined for a constant series")
    return float(np.dot(dx, dy) / (np.sqrt(sxx) * np.sqrt(syy)))


@dataclass(frozen=True, eq=False)
class LagScanResult:
    lags: np.ndarray
    rho: np.ndarray
    best_lag: int

    def at(self, lag: int) -> float:
        return float(self.rho[int(np.nonzero(self.lags == lag)[0][0])])


def _check_aligned(traffic: HourlySeries, pollution: HourlySeries):
    if traffic.start != pollution.start or len(traffic) != len(pollution):
        raise LengthMismatch("traffic and pollution must share start and length")


def lag_scan(traffic: HourlySeries, pollution: HourlySeries, max_lag: int = 24) -> LagScanResult:
    _check_aligned(traffic, pollution)
    n = len(traffic)
    if n - max_lag < MIN_OVERLAP:
        raise InsufficientOverlap(f"{n} points leave {n - max_lag} after a {max_lag} h shift; need {MIN_OVERLAP}")
    x, y = traffic.values, pollution.values
    lags = np.arange(-max_lag, max_lag + 1)
    rho = np.empty(lags.size)
    for k, lag in enumerate(lags):
        if lag >= 0:
            rho[k] = pearson(x[:n - lag], y[lag:])
        else:
            rho[k] = pearson(x[-lag:], y[:n + lag])
    # ties (up to rounding): smallest |lag|, then negative before positive
    tied = np.nonzero(rho >= rho.max() - TIE_TOL)[0]
    best = min(tied, key=lambda k: (abs(lags[k]), lags[k]))
    return LagScanResult(lags, rho, int(lags[best]))


def daily_correlation(traffic: HourlySeries, pollution: HourlySeries) -> list[tuple[date, float | None]]:
    """One coefficient per calendar day; ``None`` where either day is constant."""
    _check_aligned(traffic, pollution)
    if traffic.start.hour or traffic.start.minute or len(traffic) % 24:
        raise PartialDay("series must start at midnight and cover whole days")
    out = []
    for d in range(len(traffic) // 24):
        sl = slice(24 * d, 24 * (d + 1))
        try:
            rho = pearson(traffic.values[sl], pollution.values[sl])
        except ConstantSeries:
            rho = None
        out.append((traffic.time_at(24 * d).date(), rho))
    return out


def write_lag_csv(result: LagScanResult, stream: IO[str]) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(["lag", "rho"])
    for lag, r in zip(result.lags, result.rho):
        w.writerow([int(lag), repr(float(r))])


def write_daily_csv(rows, stream: IO[str]) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(["date", "rho"])
    for d, r in rows:
        w.writerow([d.isoformat(), "" if r is None else repr(r)])


def write_hourly_csv(series: HourlySeries, stream: IO[str]) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(["timestamp", "value"])
    for k, v in enumerate(series.values):
        w.writerow([format_timestamp(series.time_at(k)), repr(float(v))])


def read_hourly_csv(stream: IO[str]) -> HourlySeries:
    reader = csv.reader(stream)
    header = next(reader)
    if [h.strip() for h in header] != ["timestamp", "value"]:
        raise ValueError("hourly CSV header must be timestamp,value")
    stamps, values = [], []
    for row in reader:
        if not row:
            continue
        stamps.append(parse_timestamp(row[0]))
        values.append(float(row[1]))
    if not stamps:
        raise ValueError("hourly CSV has no rows")
    for k, t in enumerate(stamps):
        if t != stamps[0] + timedelta(hours=k):
            raise ValueError(f"hourly CSV row {k + 2} breaks the 1 h cadence")
    return HourlySeries(stamps[0], np.array(values))
