"""Seeded synthetic city: multi-segment 10-minute traffic and an hourly pollution channel.

Weekdays follow a low daytime plateau with a morning rush near 08:00 and a
second peak near 14:00; weekends a damped plateau with one midday bump.
Randomness enters through a city-wide per-day factor and per-cell
multiplicative noise, both scaled by ``noise`` so that ``noise=0`` gives an
exactly weekly-periodic matrix.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np

from .correlation import HourlySeries
from .data import STEP_SECONDS, TrafficMatrix
from .errors import InvalidSpec
from .skewnorm import SkewNormalParams, sample_skew_normal, skew_normal_moments

# a Monday
DEFAULT_START = datetime(2018, 1, 1, tzinfo=timezone.utc)
BINS_PER_DAY = 144
NIGHT_LEVEL = 0.02
DAY_LEVEL = 0.35


@dataclass(frozen=True)
class CitySpec:
    n_segments: int = 24
    n_weeks: int = 10
    seed: int = 0
    base_scale: tuple[float, ...] | None = None  # vehicles / 10 min at profile 1.0; drawn if None
    weekend_factor: float = 0.6
    noise: float = 0.1  # log-scale spread of the multiplicative noise
    skewness: float = 2.0  # skew-normal shape of the per-cell noise
    start: datetime = DEFAULT_START

    def validate(self) -> None:
        if self.n_segments < 1 or self.n_weeks < 1:
            raise InvalidSpec("n_segments and n_weeks must be at least 1")
        if self.base_scale is not None:
            if len(self.base_scale) != self.n_segments or min(self.base_scale) <= 0:
                raise InvalidSpec("base_scale needs one positive value per segment")
        if not 0 <= self.weekend_factor <= 1:
            raise InvalidSpec("weekend_factor must lie in [0, 1]")
        if self.noise < 0:
            raise InvalidSpec("noise must be non-negative")
        if self.start.minute or self.start.second or self.start.hour:
            raise InvalidSpec("start must be at midnight")


def segment_ids(n: int) -> tuple[str, ...]:
    width = max(3, len(str(n)))
    return tuple(f"S{k + 1:0{width}d}" for k in range(n))


def _bump(h, centre, width):
    return np.exp(-0.5 * ((h - centre) / width) ** 2)


def _plateau(h):
    up = 1.0 / (1.0 + np.exp(-(h - 6.0) / 0.5))
    down = 1.0 / (1.0 + np.exp((h - 22.0) / 0.5))
    return NIGHT_LEVEL + (DAY_LEVEL - NIGHT_LEVEL) * up * down


def weekday_profile(h, morning=0.7, midday=0.6, shift=0.0):
    return _plateau(h) + morning * _bump(h, 8.0 + shift, 1.0) + midday * _bump(h, 14.0 + shift, 1.5)


def weekend_profile(h, factor=0.6, shift=0.0):
    return factor * (_plateau(h) + 0.5 * _bump(h, 13.0 + shift, 2.5))


def generate_traffic(spec: CitySpec = CitySpec()) -> TrafficMatrix:
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    n_seg = spec.n_segments
    n_days = 7 * spec.n_weeks

    if spec.base_scale is None:
        scale = rng.uniform(20.0, 120.0, n_seg)
    else:
        scale = np.asarray(spec.base_scale, dtype=np.float64)
    morning = rng.uniform(0.5, 0.9, n_seg)
    midday = rng.uniform(0.4, 0.8, n_seg)
    shift = rng.uniform(-0.5, 0.5, n_seg)

    h = (np.arange(BINS_PER_DAY) * STEP_SECONDS / 3600.0 + 1.0 / 12.0)[:, None]  # bin centres
    wd = weekday_profile(h, morning, midday, shift)  # [144, S]
    we = weekend_profile(h, spec.weekend_factor, shift)
    week = np.concatenate([wd] * 5 + [we] * 2)  # [1008, S]
    profile = np.tile(week, (spec.n_weeks, 1)) * scale  # [T, S]

    daily = np.exp(0.5 * spec.noise * rng.standard_normal(n_days))
    shape = SkewNormalParams(0.0, 1.0, spec.skewness)
    mu, sd = skew_normal_moments(shape)
    cell = (sample_skew_normal(shape, profile.shape, rng) - mu) / sd
    noisy = profile * np.repeat(daily, BINS_PER_DAY)[:, None] * np.exp(spec.noise * cell)

    counts = np.rint(noisy)
    return TrafficMatrix(spec.start, segment_ids(n_seg), counts, np.ones(counts.shape, dtype=bool))


def generate_pollution(traffic: HourlySeries, background: float = 20.0, coupling: float = 0.1,
                       noise: float = 15.0, seed: int = 0) -> HourlySeries:
    """Background plus instantaneous linear coupling plus Gaussian noise, floored at 0."""
    if coupling < 0:
        raise ValueError("coupling must be non-negative")
    if noise < 0:
        raise ValueError("noise must be non-negative")
    rng = np.random.default_rng(seed)
    values = background + coupling * traffic.values + noise * rng.standard_normal(len(traffic))
    return HourlySeries(traffic.start, np.maximum(values, 0.0), traffic.step)
