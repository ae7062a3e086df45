import numpy as np
import pytest

from fluxwarn.correlation import HourlySeries, rebin_to_hourly
from fluxwarn.errors import InvalidSpec
from fluxwarn.synthetic import (
    DEFAULT_START,
    CitySpec,
    generate_pollution,
    generate_traffic,
    segment_ids,
    weekday_profile,
    weekend_profile,
)

WEEK = 1008


def test_default_start_is_monday_midnight():
    assert DEFAULT_START.weekday() == 0 and DEFAULT_START.hour == 0


def test_shape_and_ids():
    m = generate_traffic(CitySpec(n_segments=3, n_weeks=1, seed=1))
    assert m.values.shape == (WEEK, 3)
    assert m.segments == ("S001", "S002", "S003")
    assert m.complete
    assert segment_ids(1200)[-1] == "S1200"


def test_integer_nonnegative():
    v = generate_traffic(CitySpec(n_segments=5, n_weeks=2, seed=4, noise=0.5)).values
    assert np.all(v >= 0) and np.all(v == np.rint(v))


def test_noise_free_is_weekly_periodic():
    v = generate_traffic(CitySpec(n_segments=4, n_weeks=3, noise=0.0)).values
    np.testing.assert_array_equal(v[:WEEK], v[WEEK:2 * WEEK])
    np.testing.assert_array_equal(v[:WEEK], v[2 * WEEK:])


def test_deterministic():
    a = generate_traffic(CitySpec(n_segments=4, n_weeks=2, seed=9))
    b = generate_traffic(CitySpec(n_segments=4, n_weeks=2, seed=9))
    c = generate_traffic(CitySpec(n_segments=4, n_weeks=2, seed=10))
    np.testing.assert_array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)


def test_night_much_lower_than_day():
    m = generate_traffic(CitySpec(n_segments=6, n_weeks=2, seed=2))
    hours = (np.arange(m.n_times) % 144) // 6
    night = m.values[(hours >= 1) & (hours < 5)].mean()
    day = m.values[(hours >= 7) & (hours < 19)].mean()
    assert night < 0.1 * day


def test_weekday_peaks_and_weekend_damping():
    h = np.arange(0, 24, 0.25)
    wd = weekday_profile(h)
    assert abs(h[np.argmax(wd)] - 8) <= 0.5
    local = (h > 12) & (h < 16)
    assert abs(h[local][np.argmax(wd[local])] - 14) <= 0.5
    we = weekend_profile(h)
    assert we.max() < wd.max()


def test_weekly_autocorrelation():
    m = generate_traffic(CitySpec(n_segments=6, n_weeks=3, seed=5, noise=0.05))
    for j in range(6):
        x = m.values[:, j]
        r = np.corrcoef(x[:-WEEK], x[WEEK:])[0, 1]
        assert r > 0.9


def test_fixed_base_scale():
    m = generate_traffic(CitySpec(n_segments=2, n_weeks=1, noise=0.0, base_scale=(10.0, 100.0)))
    assert m.values[:, 1].sum() > 8 * m.values[:, 0].sum()


@pytest.mark.parametrize("kw", [
    dict(n_segments=0), dict(n_weeks=0), dict(noise=-0.1), dict(weekend_factor=1.5),
    dict(n_segments=2, base_scale=(1.0,)), dict(n_segments=1, base_scale=(0.0,)),
])
def test_invalid_spec(kw):
    with pytest.raises(InvalidSpec):
        generate_traffic(CitySpec(**kw))


class TestPollution:
    def test_noise_free_linear(self):
        t = HourlySeries(DEFAULT_START, np.array([0.0, 100.0, 250.0]))
        p = generate_pollution(t, background=20, coupling=0.1, noise=0.0)
        np.testing.assert_allclose(p.values, [20.0, 30.0, 45.0])
        assert p.start == t.start

    def test_nonnegative_and_seeded(self):
        t = HourlySeries(DEFAULT_START, np.zeros(500))
        a = generate_pollution(t, background=1.0, noise=20.0, seed=3)
        b = generate_pollution(t, background=1.0, noise=20.0, seed=3)
        assert a.values.min() == 0.0
        np.testing.assert_array_equal(a.values, b.values)

    def test_correlates_with_traffic(self):
        m = generate_traffic(CitySpec(n_segments=1, n_weeks=2, seed=0))
        t = rebin_to_hourly(m, "S001")
        p = generate_pollution(t)
        assert np.corrcoef(t.values, p.values)[0, 1] > 0.5

    def test_bad_args(self):
        t = HourlySeries(DEFAULT_START, np.zeros(3))
        with pytest.raises(ValueError):
            generate_pollution(t, coupling=-1)
        with pytest.raises(ValueError):
            generate_pollution(t, noise=-1)
