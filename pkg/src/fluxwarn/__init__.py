"""Per-segment traffic flux forecasting and three-tier alarm toolkit."""

__version__ = "0.1.0"

from .alarm import AlarmLevel, AlarmThresholds, ConfusionMatrix3, classify, compute_thresholds, evaluate
from .correlation import HourlySeries, LagScanResult, daily_correlation, lag_scan, pearson, rebin_to_hourly
from .data import (
    FluxRecord,
    NormStats,
    SupervisedWindowSet,
    TrafficMatrix,
    apply_norm,
    build_matrix,
    fit_norm,
    impute,
    invert_norm,
    make_windows,
    parse_records,
)
from .forecast import ForecastModel, TrainConfig, predict, train
from .lstm import LstmParams, LstmState, adam_step, backward, cell_step, forward, grad_check, loss_mse
from .skewnorm import SkewNormalParams, fit_skew_normal, skew_normal_moments, skew_normal_pdf
from .synthetic import CitySpec, generate_pollution, generate_traffic
