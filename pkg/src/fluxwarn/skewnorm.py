"""Skew-normal density, moments, sampling and maximum-likelihood fitting.

Parameterized by location ``eta``, scale ``omega`` and shape ``alpha``, with
``delta = alpha / sqrt(1 + alpha**2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize, special

from .errors import DegenerateSample, InvalidScale, NonConvergence

MIN_FIT_SAMPLES = 50
_LOG2 = math.log(2.0)
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
# largest |skewness| a skew normal can reach (alpha -> inf)
_MAX_SKEW = 0.9952717464311565


@dataclass(frozen=True)
class SkewNormalParams:
    eta: float
    omega: float
    alpha: float

    def __post_init__(self):
        if not self.omega > 0:
            raise InvalidScale(f"scale must be positive, got {self.omega}")

    @property
    def delta(self) -> float:
        return self.alpha / math.sqrt(1.0 + self.alpha ** 2)


def skew_normal_pdf(x, params: SkewNormalParams):
    if not params.omega > 0:
        raise InvalidScale(f"scale must be positive, got {params.omega}")
    z = (np.asarray(x, dtype=np.float64) - params.eta) / params.omega
    out = (2.0 / params.omega) * np.exp(-0.5 * z * z - _HALF_LOG_2PI) * special.ndtr(params.alpha * z)
    return float(out) if out.ndim == 0 else out


def skew_normal_logpdf(x, params: SkewNormalParams):
    z = (np.asarray(x, dtype=np.float64) - params.eta) / params.omega
    return _LOG2 - math.log(params.omega) - 0.5 * z * z - _HALF_LOG_2PI + special.log_ndtr(params.alpha * z)


def skew_normal_moments(params: SkewNormalParams) -> tuple[float, float]:
    """Mean and standard deviation."""
    if not params.omega > 0:
        raise InvalidScale(f"scale must be positive, got {params.omega}")
    d = params.delta
    mean = params.eta + params.omega * d * math.sqrt(2.0 / math.pi)
    std = params.omega * math.sqrt(1.0 - 2.0 * d * d / math.pi)
    return mean, std


def sample_skew_normal(params: SkewNormalParams, size, rng: np.random.Generator) -> np.ndarray:
    """Draw via ``delta*|U0| + sqrt(1-delta^2)*U1`` with independent standard normals."""
    d = params.delta
    u0 = rng.standard_normal(size)
    u1 = rng.standard_normal(size)
    z = d * np.abs(u0) + math.sqrt(1.0 - d * d) * u1
    return params.eta + params.omega * z


def method_of_moments(samples) -> SkewNormalParams:
    x = np.asarray(samples, dtype=np.float64)
    m = x.mean()
    s = x.std()
    skew = np.mean(((x - m) / s) ** 3)
    skew = float(np.clip(skew, -0.99 * _MAX_SKEW, 0.99 * _MAX_SKEW))
    g = abs(skew) ** (2.0 / 3.0)
    delta = math.copysign(math.sqrt(0.5 * math.pi * g / (g + ((4.0 - math.pi) / 2.0) ** (2.0 / 3.0))), skew)
    alpha = delta / math.sqrt(1.0 - delta * delta)
    omega = s / math.sqrt(1.0 - 2.0 * delta * delta / math.pi)
    eta = m - omega * delta * math.sqrt(2.0 / math.pi)
    return SkewNormalParams(eta, omega, alpha)


def _nll_and_grad(theta, y):
    eta, log_omega, alpha = theta
    omega = math.exp(log_omega)
    z = (y - eta) / omega
    az = alpha * z
    log_cdf = special.log_ndtr(az)
    # inverse Mills ratio phi(az)/Phi(az), stable in the far left tail
    mills = np.exp(-0.5 * az * az - _HALF_LOG_2PI - log_cdf)
    ll = _LOG2 - log_omega - 0.5 * z * z - _HALF_LOG_2PI + log_cdf
    dz = -z + alpha * mills
    grad = np.array([
        -np.mean(dz) / omega,
        np.mean(-1.0 - dz * z),
        np.mean(mills * z),
    ])
    return -float(np.mean(ll)), -grad


def fit_skew_normal(samples, max_iter: int = 500) -> SkewNormalParams:
    """Maximum-likelihood fit started from the method-of-moments estimate."""
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size < MIN_FIT_SAMPLES:
        raise DegenerateSample(f"need at least {MIN_FIT_SAMPLES} samples, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise ValueError("samples must be finite")
    loc, scale = x.mean(), x.std()
    if not scale > 0 or scale < 1e-12 * max(1.0, abs(loc)):
        raise DegenerateSample("samples have zero variance")
    y = (x - loc) / scale

    init = method_of_moments(y)
    theta0 = np.array([init.eta, math.log(init.omega), init.alpha])
    res = optimize.minimize(_nll_and_grad, theta0, args=(y,), jac=True, method="BFGS",
                            options={"maxiter": max_iter, "gtol": 1e-9})
    if not res.success:
        # BFGS reports precision loss at a flat optimum; accept if the gradient vanished
        if not (np.all(np.isfinite(res.x)) and np.max(np.abs(res.jac)) < 1e-6):
            raise NonConvergence(res.nit, res.message)
    eta, log_omega, alpha = res.x
    return SkewNormalParams(loc + scale * eta, scale * math.exp(log_omega), float(alpha))
