"""Forecast error metrics, residual diagnostics and distribution comparison."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class UndefinedMetricError(ValueError):
    """Raised when a metric has no defined value for the given inputs."""


def smape(actual, forecast) -> float:
    """
    Symmetric mean absolute percentage error, in percent.

    Uses (100/N) * sum |f - a| / (f + a); terms whose denominator is zero
    are skipped and N reduced accordingly. This is the plain symmetrized
    form without the common factor 2 or absolute-value denominator, which
    is well defined for nonnegative demand; results are therefore
    comparable within this package, not to third-party SMAPE tables.
    """
    a = np.asarray(actual, dtype=float)
    f = np.asarray(forecast, dtype=float)
    if a.shape != f.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {f.shape}")
    denom = a + f
    keep = denom != 0.0
    if not keep.any():
        raise UndefinedMetricError("SMAPE undefined: every term has zero denominator")
    terms = np.abs(f[keep] - a[keep]) / denom[keep]
    return float(100.0 * terms.mean())


def accuracy(actual, forecast) -> float:
    """Forecast accuracy in percent, defined as 100 - SMAPE."""
    return 100.0 - smape(actual, forecast)


def mase(actual_test, forecast_test, training, m: int) -> float:
    """
    Mean absolute scaled error.

    Numerator: mean |y - f| over the test horizon. Denominator: MAE of the
    one-step seasonal naive forecast on the training series at period m.
    """
    y = np.asarray(actual_test, dtype=float)
    f = np.asarray(forecast_test, dtype=float)
    train = np.asarray(training, dtype=float)
    if y.shape != f.shape:
        raise ValueError(f"length mismatch: {y.shape} vs {f.shape}")
    if y.size == 0:
        raise ValueError("empty test horizon")
    if m < 1:
        raise ValueError(f"season period must be >= 1, got {m}")
    if train.size <= m:
        raise ValueError(f"training length {train.size} must exceed season {m}")
    denom = float(np.mean(np.abs(train[m:] - train[:-m])))
    if denom == 0.0:
        raise UndefinedMetricError("MASE undefined: training series is exactly m-periodic")
    return float(np.mean(np.abs(y - f)) / denom)


def seasonal_naive_mae(training, m: int) -> float:
    """Training-set MAE of the one-step seasonal naive method (MASE denominator)."""
    train = np.asarray(training, dtype=float)
    if train.size <= m:
        raise ValueError(f"training length {train.size} must exceed season {m}")
    return float(np.mean(np.abs(train[m:] - train[:-m])))


def acf(x, max_lag: int) -> tuple[np.ndarray, float]:
    """
    Sample autocorrelations for lags 0..max_lag plus the +-2/sqrt(N) band.

    Biased normalization: every lag's covariance is divided by N and by the
    lag-0 variance.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < max_lag + 1:
        raise ValueError(f"need at least max_lag+1 = {max_lag + 1} samples, got {n}")
    xc = x - x.mean()
    var = float(np.dot(xc, xc))
    if var == 0.0:
        raise UndefinedMetricError("ACF undefined for a zero-variance series")
    rho = np.empty(max_lag + 1)
    rho[0] = 1.0
    for k in range(1, max_lag + 1):
        rho[k] = float(np.dot(xc[k:], xc[:-k])) / var
    return rho, 2.0 / math.sqrt(n)


def ljung_box(residuals, max_lag: int) -> tuple[float, float]:
    """
    Ljung-Box portmanteau test for residual autocorrelation.

    Q = N(N+2) * sum_{k=1..L} rho_k^2 / (N-k); p-value from the chi-squared
    survival function with L degrees of freedom.
    """
    x = np.asarray(residuals, dtype=float)
    n = x.size
    if n <= max_lag:
        raise ValueError(f"need more than max_lag = {max_lag} samples, got {n}")
    rho, _ = acf(x, max_lag)
    k = np.arange(1, max_lag + 1)
    q = float(n * (n + 2) * np.sum(rho[1:] ** 2 / (n - k)))
    return q, chi2_sf(q, max_lag)


def _gamma_p_series(a: float, x: float) -> float:
    """Regularized lower incomplete gamma P(a, x) by its power series (x < a+1)."""
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(500):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * 1e-16:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_q_contfrac(a: float, x: float) -> float:
    """Regularized upper incomplete gamma Q(a, x) by continued fraction (x >= a+1)."""
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 500):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return h * math.exp(-x + a * math.log(x) - math.lgamma(a))


def chi2_sf(x: float, df: int) -> float:
    """Chi-squared survival function via the regularized incomplete gamma."""
    if df <= 0:
        raise ValueError(f"degrees of freedom must be positive, got {df}")
    if x < 0.0:
        return 1.0
    if x == 0.0:
        return 1.0
    a = df / 2.0
    half = x / 2.0
    if half < a + 1.0:
        return min(1.0, max(0.0, 1.0 - _gamma_p_series(a, half)))
    return min(1.0, max(0.0, _gamma_q_contfrac(a, half)))


def _kolmogorov_sf(lam: float) -> float:
    """Asymptotic Kolmogorov survival function 2*sum (-1)^(j-1) exp(-2 j^2 lam^2)."""
    if lam <= 0.0:
        return 1.0
    total = 0.0
    sign = 1.0
    for j in range(1, 101):
        term = sign * math.exp(-2.0 * (j * lam) ** 2)
        total += term
        if abs(term) < 1e-12:
            break
        sign = -sign
    return min(1.0, max(0.0, 2.0 * total))


def ks_two_sample(a, b) -> tuple[float, float]:
    """
    Two-sample Kolmogorov-Smirnov test.

    D = sup |ECDF_a - ECDF_b|; asymptotic p-value with effective sample size
    n_a*n_b/(n_a+n_b).
    """
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be nonempty")
    grid = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, grid, side="right") / a.size
    cdf_b = np.searchsorted(b, grid, side="right") / b.size
    d = float(np.max(np.abs(cdf_a - cdf_b)))
    n_eff = a.size * b.size / (a.size + b.size)
    return d, _kolmogorov_sf(math.sqrt(n_eff) * d)


@dataclass(frozen=True)
class Ecdf:
    """Right-continuous empirical CDF of a sample."""

    sorted_values: np.ndarray

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.searchsorted(self.sorted_values, x, side="right") / self.sorted_values.size
        return float(out) if out.ndim == 0 else out


def ecdf(sample) -> Ecdf:
    """Empirical CDF step function of a nonempty sample."""
    values = np.sort(np.asarray(sample, dtype=float))
    if values.size == 0:
        raise ValueError("empty sample")
    return Ecdf(values)
