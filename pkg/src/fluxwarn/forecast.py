"""Training, prediction and persistence of per-segment forecast models."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from typing import IO

import numpy as np

from .data import NormStats, SupervisedWindowSet, apply_norm, invert_norm
from .errors import DimensionMismatch, EmptyDataset
from .lstm import GATES, AdamState, LstmParams, adam_step, backward, forward

log = logging.getLogger(__name__)

MODEL_MAGIC = "fluxmodel"
MODEL_VERSION = "v1"


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-5
    epochs: int = 11000
    batch_size: int = 32
    validation_split: float = 0.10
    hidden_size: int = 64
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.validation_split < 1:
            raise ValueError("validation_split must lie in (0, 1)")
        if self.epochs < 0 or self.batch_size < 1 or self.hidden_size < 1:
            raise ValueError("epochs must be >= 0; batch_size and hidden_size positive")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")


@dataclass(eq=False)
class ForecastModel:
    params: LstmParams
    norm: NormStats
    lookback: int
    horizon: int
    target_segment: str
    segments: tuple[str, ...]
    config: TrainConfig = field(default_factory=TrainConfig)
    training_history: list[tuple[int, float, float]] = field(default_factory=list)

    @property
    def target_index(self) -> int:
        return self.segments.index(self.target_segment)

    def predict(self, recent, raw_units: bool = True) -> np.ndarray:
        return predict(self, recent, raw_units)


def _batched_loss(params: LstmParams, X: np.ndarray, Y: np.ndarray, chunk: int = 4096) -> float:
    total = 0.0
    for lo in range(0, len(X), chunk):
        pred, _ = forward(X[lo:lo + chunk], params)
        total += float(np.sum((pred - Y[lo:lo + chunk]) ** 2))
    return total / Y.size


def _window_norm(windows: SupervisedWindowSet) -> NormStats:
    rows = windows.inputs.reshape(-1, windows.inputs.shape[2])
    return NormStats(rows.mean(axis=0), rows.std(axis=0))


def train(windows: SupervisedWindowSet, config: TrainConfig = TrainConfig(),
          norm: NormStats | None = None) -> ForecastModel:
    """Fit one LSTM on ``windows``.

    The chronologically last ``validation_split`` share of windows is held out.
    ``norm`` defaults to statistics of the training windows' input rows.
    """
    n = len(windows)
    if n == 0:
        raise EmptyDataset("no training windows")
    n_val = int(n * config.validation_split)
    n_train = n - n_val
    if n_train < 1:
        raise EmptyDataset("validation split leaves no training windows")
    target_col = windows.segments.index(windows.target_segment)
    if norm is None:
        norm = _window_norm(windows.subset(slice(0, n_train)))

    X = apply_norm(windows.inputs, norm)
    Y = (windows.targets - norm.per_segment_mean[target_col]) / norm.per_segment_std[target_col]
    X_tr, Y_tr = X[:n_train], Y[:n_train]
    X_val, Y_val = X[n_train:], Y[n_train:]

    rng = np.random.default_rng(config.seed)
    params = LstmParams.init(X.shape[2], config.hidden_size, windows.horizon, rng)
    opt = AdamState.fresh(params)

    def record(epoch):
        tr = _batched_loss(params, X_tr, Y_tr)
        va = _batched_loss(params, X_val, Y_val) if n_val else tr
        history.append((epoch, tr, va))
        return tr, va

    history: list[tuple[int, float, float]] = []
    record(0)
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n_train)
        for lo in range(0, n_train, config.batch_size):
            idx = order[lo:lo + config.batch_size]
            _, tape = forward(X_tr[idx], params)
            grads = backward(tape, Y_tr[idx])
            params, opt = adam_step(params, grads, opt, config.learning_rate)
        tr, va = record(epoch)
        if not (np.isfinite(tr) and np.isfinite(va)):
            raise FloatingPointError(f"loss diverged at epoch {epoch}")
        if epoch % 10 == 0 or epoch == config.epochs:
            log.info("epoch %d train %.5f val %.5f", epoch, tr, va)

    return ForecastModel(params, norm, windows.lookback, windows.horizon, windows.target_segment,
                         tuple(windows.segments), config, history)


def predict(model: ForecastModel, recent, raw_units: bool = True) -> np.ndarray:
    """Forecast ``horizon`` steps from raw counts ``[lookback, S]`` (or a batch).

    With ``raw_units`` the output is de-normalized and clamped at zero.
    """
    recent = np.asarray(recent, dtype=np.float64)
    if recent.shape[-2:] != (model.lookback, len(model.segments)):
        raise DimensionMismatch(
            f"expected [..., {model.lookback}, {len(model.segments)}], got {recent.shape}")
    out, _ = forward(apply_norm(recent, model.norm), model.params)
    if raw_units:
        out = np.maximum(invert_norm(out, model.norm, model.target_index), 0.0)
    return out


# fluxmodel v1: line-oriented text, floats written with repr() so that reading
# them back with float() is exact.

def _fmt(values) -> str:
    return " ".join(repr(float(v)) for v in np.ravel(values))


def write_model(model: ForecastModel, stream: IO[str]) -> None:
    p = model.params
    w = stream.write
    w(f"{MODEL_MAGIC} {MODEL_VERSION}\n")
    w(f"target {model.target_segment}\n")
    w(f"segments {len(model.segments)} {' '.join(model.segments)}\n")
    w(f"dims lookback={model.lookback} horizon={model.horizon} "
      f"hidden={p.hidden_size} inputs={p.n_inputs}\n")
    w(f"config {json.dumps(asdict(model.config), sort_keys=True)}\n")
    blocks = []
    for prefix in ("W", "U", "b"):
        for g in GATES:
            blocks.append((f"{prefix}_{g}", getattr(p, f"{prefix}_{g}")))
    blocks += [("V", p.V), ("c_out", p.c_out),
               ("norm_mean", model.norm.per_segment_mean), ("norm_std", model.norm.per_segment_std)]
    for name, arr in blocks:
        arr = np.atleast_2d(arr)
        w(f"block {name} {arr.shape[0]} {arr.shape[1]}\n")
        for row in arr:
            w(_fmt(row) + "\n")
    w(f"history {len(model.training_history)}\n")
    for epoch, tr, va in model.training_history:
        w(f"{epoch} {tr!r} {va!r}\n")
    w("end\n")


def read_model(stream: IO[str]) -> ForecastModel:
    lines = iter(stream.read().splitlines())

    def expect(keyword):
        parts = next(lines).split(" ", 1)
        if parts[0] != keyword:
            raise ValueError(f"fluxmodel: expected {keyword!r}, got {parts[0]!r}")
        return parts[1] if len(parts) > 1 else ""

    head = next(lines).split()
    if head[:1] != [MODEL_MAGIC]:
        raise ValueError("not a fluxmodel file")
    if head[1:] != [MODEL_VERSION]:
        raise ValueError(f"unsupported fluxmodel version {' '.join(head[1:])!r}")
    target = expect("target")
    seg_parts = expect("segments").split()
    segments = tuple(seg_parts[1:])
    if len(segments) != int(seg_parts[0]):
        raise ValueError("fluxmodel: segment count mismatch")
    dims = dict(kv.split("=") for kv in expect("dims").split())
    config = TrainConfig(**json.loads(expect("config")))

    blocks = {}
    while True:
        line = next(lines)
        if line.startswith("history"):
            n_hist = int(line.split()[1])
            break
        _, name, rows, cols = line.split()
        arr = np.array([[float(v) for v in next(lines).split()] for _ in range(int(rows))])
        blocks[name] = arr.reshape(int(rows), int(cols))
    history = []
    for _ in range(n_hist):
        e, tr, va = next(lines).split()
        history.append((int(e), float(tr), float(va)))

    params = LstmParams.from_gates(
        {g: blocks[f"W_{g}"] for g in GATES},
        {g: blocks[f"U_{g}"] for g in GATES},
        {g: blocks[f"b_{g}"].ravel() for g in GATES},
        blocks["V"], blocks["c_out"].ravel(),
    )
    if params.n_inputs != int(dims["inputs"]) or params.hidden_size != int(dims["hidden"]):
        raise ValueError("fluxmodel: parameter blocks disagree with declared dims")
    norm = NormStats(blocks["norm_mean"].ravel(), blocks["norm_std"].ravel())
    return ForecastModel(params, norm, int(dims["lookback"]), int(dims["horizon"]), target,
                         segments, config, history)


def save_model(model: ForecastModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        write_model(model, fh)


def load_model(path) -> ForecastModel:
    with open(path, encoding="utf-8") as fh:
        return read_model(fh)
