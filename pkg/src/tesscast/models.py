"""Per-partition seasonal forecasters behind one fit/forecast/update contract.

Every fitted model exposes forecast(h) for point forecasts at horizons
1..h on the scale it was trained on, and update(y) to advance its state by
one observed step without refitting, which is how the rolling one-step
evaluation over validation and test windows works.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .metrics import UndefinedMetricError, smape
from .pipeline import boxcox_inverse, boxcox_transform

NM_STARTS = (0.1, 0.3, 0.7)
NM_MAX_EVALS = 500
PARAM_LO, PARAM_HI = 1e-4, 0.9999

SEASONAL_LOESS_SPAN = 7          # cycles, per-slot subseries smoother
AR_MAX_ORDER = 4

CANDIDATE_KINDS = ("baseline", "naive", "seasonal-naive", "drift", "holt-winters",
                   "stl(naive)", "stl(drift)", "stl(ses)", "stl(ar)", "tbats-lite")


def _as_series(values) -> np.ndarray:
    y = np.asarray(values, dtype=float)
    if y.ndim != 1:
        raise ValueError("series must be one-dimensional")
    if not np.all(np.isfinite(y)):
        raise ValueError("series contains non-finite values")
    return y


def _fit_smoothing(objective, ndim: int) -> np.ndarray:
    """Nelder-Mead from the fixed deterministic starts; best run wins."""
    best_x, best_f = np.full(ndim, NM_STARTS[0]), np.inf
    for s in NM_STARTS:
        res = minimize(objective, np.full(ndim, s), method="Nelder-Mead",
                       options={"maxfev": NM_MAX_EVALS, "xatol": 1e-4, "fatol": 1e-10})
        if np.isfinite(res.fun) and res.fun < best_f:
            best_f, best_x = float(res.fun), res.x
    return np.clip(best_x, PARAM_LO, PARAM_HI)


class ForecastModel:
    """Common surface of every fitted forecaster."""

    kind: str = ""

    def __init__(self):
        self.params: dict = {}
        self.season_periods: list[int] = []
        self.residuals: np.ndarray = np.empty(0)

    def forecast(self, horizon: int) -> np.ndarray:
        raise NotImplementedError

    def update(self, y: float) -> None:
        raise NotImplementedError

    def _check_horizon(self, horizon: int) -> None:
        if horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {horizon}")


class BaselineModel(ForecastModel):
    """Seasonal averaging baseline: mean of previous same-slot season samples."""

    kind = "baseline"

    def __init__(self, values: np.ndarray, m: int, n_seasons: int | None):
        super().__init__()
        self._history = list(values)
        self.m = m
        self.n_seasons = n_seasons
        self.season_periods = [m]
        self.params = {"m": m, "n_seasons": n_seasons}
        self.residuals = _baseline_residuals(values, m, n_seasons)

    def _slot_mean(self, target_index: int) -> float:
        history = self._history
        n = len(history)
        idx = target_index - self.m
        while idx >= n:
            idx -= self.m
        total = 0.0
        count = 0
        while idx >= 0:
            total += history[idx]
            count += 1
            if self.n_seasons is not None and count >= self.n_seasons:
                break
            idx -= self.m
        if count == 0:
            return sum(history) / n
        return total / count

    def forecast(self, horizon: int) -> np.ndarray:
        self._check_horizon(horizon)
        n = len(self._history)
        return np.array([self._slot_mean(n + h - 1) for h in range(1, horizon + 1)])

    def update(self, y: float) -> None:
        self._history.append(float(y))


def _baseline_residuals(y: np.ndarray, m: int, n_seasons: int | None) -> np.ndarray:
    """One-step in-sample errors of the seasonal mean, per-slot cumulative form."""
    n = y.size
    if n <= m:
        return np.empty(0)
    pred = np.full(n, np.nan)
    for p in range(m):
        sub = y[p::m]
        if sub.size < 2:
            continue
        csum = np.cumsum(sub)
        k = np.arange(1, sub.size)
        if n_seasons is None:
            vals = csum[:-1] / k
        else:
            start = np.maximum(k - n_seasons, 0)
            totals = csum[k - 1] - np.where(start > 0, csum[start - 1], 0.0)
            vals = totals / np.minimum(k, n_seasons)
        pred[p + m * np.arange(1, sub.size)] = vals
    return (y - pred)[m:]


class NaiveModel(ForecastModel):
    kind = "naive"

    def __init__(self, values: np.ndarray):
        super().__init__()
        self._last = float(values[-1])
        self.residuals = np.diff(values)

    def forecast(self, horizon: int) -> np.ndarray:
        self._check_horizon(horizon)
        return np.full(horizon, self._last)

    def update(self, y: float) -> None:
        self._last = float(y)


class SeasonalNaiveModel(ForecastModel):
    kind = "seasonal-naive"

    def __init__(self, values: np.ndarray, m: int):
        super().__init__()
        self.m = m
        self.season_periods = [m]
        self.params = {"m": m}
        self._history = list(values)
        self.residuals = values[m:] - values[:-m]

    def forecast(self, horizon: int) -> np.ndarray:
        self._check_horizon(horizon)
        n = len(self._history)
        out = np.empty(horizon)
        for h in range(1, horizon + 1):
            k = (h - 1) // self.m + 1
            out[h - 1] = self._history[n + h - 1 - k * self.m]
        return out

    def update(self, y: float) -> None:
        self._history.append(float(y))


class DriftModel(ForecastModel):
    """Random drift: extrapolate the average historical slope."""

    kind = "drift"

    def __init__(self, values: np.ndarray):
        super().__init__()
        self._first = float(values[0])
        self._last = float(values[-1])
        self._t = len(values)
        resid = []
        for i in range(2, len(values)):
            slope = (values[i - 1] - values[0]) / (i - 1)
            resid.append(values[i] - (values[i - 1] + slope))
        self.residuals = np.asarray(resid)

    def forecast(self, horizon: int) -> np.ndarray:
        self._check_horizon(horizon)
        slope = (self._last - self._first) / (self._t - 1)
        return self._last + slope * np.arange(1, horizon + 1)

    def update(self, y: float) -> None:
        self._last = float(y)
        self._t += 1


class HoltWintersModel(ForecastModel):
    """Additive level/trend/seasonal exponential smoothing."""

    kind = "holt-winters"

    def __init__(self, values: np.ndarray, m: int, alpha: float, beta: float,
                 gamma: float):
        super().__init__()
        self.m = m
        self.season_periods = [m]
        self.alpha, self.beta, self.gamma = alpha, beta, gamma
        self.params = {"m": m, "alpha": alpha, "beta": beta, "gamma": gamma}
        level, trend, seasonal = _hw_initial_state(values, m)
        errors = np.empty(values.size)
        for t in range(values.size):
            level, trend, errors[t] = _hw_step(values[t], level, trend, seasonal,
                                               t % m, alpha, beta, gamma)
        self._level, self._trend, self._seasonal = level, trend, seasonal
        self._t = values.size
        self.residuals = errors

    def forecast(self, horizon: int) -> np.ndarray:
        self._check_horizon(horizon)
        h = np.arange(1, horizon + 1)
        slots = (self._t + h - 1) % self.m
        return self._level + h * self._trend + self._seasonal[slots]

    def update(self, y: float) -> None:
        self._level, self._trend, _ = _hw_step(float(y), self._level, self._trend,
                                               self._seasonal, self._t % self.m,
                                               self.alpha, self.beta, self.gamma)
        self._t += 1


def _hw_initial_state(y: np.ndarray, m: int):
    m1 = float(np.mean(y[:m]))
    m2 = float(np.mean(y[m:2 * m]))
    trend = (m2 - m1) / m
    seasonal = ((y[:m] - m1) + (y[m:2 * m] - m2)) / 2.0
    seasonal = seasonal - seasonal.mean()
    return m1, trend, seasonal.copy()


def _hw_step(y, level, trend, seasonal, slot, alpha, beta, gamma):
    err = y - (level + trend + seasonal[slot])
    new_level = alpha * (y - seasonal[slot]) + (1.0 - alpha) * (level + trend)
    new_trend = beta * (new_level - level) + (1.0 - beta) * trend
    seasonal[slot] = gamma * (y - new_level) + (1.0 - gamma) * seasonal[slot]
    return new_level, new_trend, err


def fit_holt_winters(series, m: int) -> HoltWintersModel:
    """Fit the additive recursions, smoothing weights by one-step SSE."""
    y = _as_series(series)
    if m < 1:
        raise ValueError(f"season period must be >= 1, got {m}")
    if y.size < 2 * m:
        raise ValueError(f"need at least 2m = {2 * m} samples, got {y.size}")

    def objective(x):
        a, b, g = np.clip(x, PARAM_LO, PARAM_HI)
        level, trend, seasonal = _hw_initial_state(y, m)
        sse = 0.0
        for t in range(y.size):
            level, trend, err = _hw_step(y[t], level, trend, seasonal, t % m, a, b, g)
            sse += err * err
        return sse if np.isfinite(sse) else np.inf

    alpha, beta, gamma = _fit_smoothing(objective, 3)
    return HoltWintersModel(y, m, float(alpha), float(beta), float(gamma))


def fit_baseline(series, m: int, n_seasons: int | None = None) -> BaselineModel:
    """Seasonal-mean baseline over up to n_seasons prior same-slot samples."""
    y = _as_series(series)
    if m < 1:
        raise ValueError(f"season period must be >= 1, got {m}")
    if y.size < m:
        raise ValueError(f"series shorter than one season (m = {m})")
    if n_seasons is not None and n_seasons < 1:
        raise ValueError("n_seasons must be >= 1 when given")
    return BaselineModel(y, m, n_seasons)


def fit_simple(series, kind: str, m: int | None = None) -> ForecastModel:
    """Naive, seasonal-naive or drift benchmark."""
    y = _as_series(series)
    if kind == "naive":
        if y.size < 2:
            raise ValueError("naive needs at least 2 samples")
        return NaiveModel(y)
    if kind == "seasonal-naive":
        if m is None or m < 1:
            raise ValueError("seasonal-naive needs a season period")
        if y.size < m:
            raise ValueError(f"series shorter than one season (m = {m})")
        return SeasonalNaiveModel(y, m)
    if kind == "drift":
        if y.size < 2:
            raise ValueError("drift needs at least 2 samples")
        return DriftModel(y)
    raise ValueError(f"unknown simple model kind {kind!r}")


# ---------------------------------------------------------------------------
# Seasonal/trend decomposition with LOESS

def loess_smooth(y: np.ndarray, span: int, robustness: np.ndarray | None = None) -> np.ndarray:
    """Local linear smoothing with tricube weights over equally spaced points."""
    y = np.asarray(y, dtype=float)
    n = y.size
    if n == 0:
        return y.copy()
    span = max(2, min(int(span), n))
    rho = np.ones(n) if robustness is None else robustness
    half = span // 2
    out = np.empty(n)
    idx = np.arange(n)
    for i in range(n):
        lo = min(max(i - half, 0), n - span)
        window = slice(lo, lo + span)
        x = idx[window].astype(float)
        d = np.abs(x - i)
        dmax = d.max()
        if dmax == 0.0:
            out[i] = y[i]
            continue
        w = (1.0 - (d / dmax) ** 3) ** 3
        w = np.clip(w, 0.0, None) * rho[window]
        sw = w.sum()
        if sw <= 0.0:
            out[i] = float(y[window].mean())
            continue
        xc = x - i
        sx = float(np.dot(w, xc))
        sxx = float(np.dot(w, xc * xc))
        sy = float(np.dot(w, y[window]))
        sxy = float(np.dot(w, xc * y[window]))
        det = sw * sxx - sx * sx
        if abs(det) < 1e-12:
            out[i] = sy / sw
        else:
            out[i] = (sxx * sy - sx * sxy) / det  # local line evaluated at xc = 0
    return out


def _next_odd(x: float) -> int:
    k = int(math.ceil(x))
    return k if k % 2 == 1 else k + 1


def stl_decompose(y: np.ndarray, m: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Decompose y into seasonal, trend and remainder components.

    Seasonal: per-slot LOESS over cycle-subseries (7-cycle span). Trend:
    LOESS of the deseasonalized series (next odd >= 1.5 m). Two inner
    iterations; one robustness pass with bisquare weights. The remainder is
    defined as y - S - T, so the three parts recompose exactly.
    """
    n = y.size
    trend_span = min(_next_odd(1.5 * m), n)
    seasonal = np.zeros(n)
    trend = np.zeros(n)
    rho = np.ones(n)
    for outer in range(2):
        for _ in range(2):
            detrended = y - trend
            for p in range(m):
                seasonal[p::m] = loess_smooth(detrended[p::m], SEASONAL_LOESS_SPAN,
                                              rho[p::m])
            trend = loess_smooth(y - seasonal, trend_span, rho)
        if outer == 0:
            resid = y - seasonal - trend
            scale = 6.0 * float(np.median(np.abs(resid)))
            if scale <= 0.0:
                break
            u = np.clip(np.abs(resid) / scale, 0.0, 1.0)
            rho = (1.0 - u ** 2) ** 2
    remainder = y - seasonal - trend
    return seasonal, trend, remainder


class SesInner(ForecastModel):
    """Simple exponential smoothing for the non-seasonal STL component."""

    kind = "ses"

    def __init__(self, values: np.ndarray, alpha: float):
        super().__init__()
        self.alpha = alpha
        self.params = {"alpha": alpha}
        level = float(values[0])
        errors = []
        for v in values[1:]:
            errors.append(v - level)
            level = alpha * v + (1.0 - alpha) * level
        self._level = level
        self.residuals = np.asarray(errors)

    def forecast(self, horizon: int) -> np.ndarray:
        self._check_horizon(horizon)
        return np.full(horizon, self._level)

    def update(self, y: float) -> None:
        self._level = self.alpha * float(y) + (1.0 - self.alpha) * self._level


def _fit_ses(values: np.ndarray) -> SesInner:
    def objective(x):
        a = float(np.clip(x, PARAM_LO, PARAM_HI)[0])
        level = float(values[0])
        sse = 0.0
        for v in values[1:]:
            e = v - level
            sse += e * e
            level = a * v + (1.0 - a) * level
        return sse

    alpha = float(_fit_smoothing(objective, 1)[0])
    return SesInner(values, alpha)


class ArInner(ForecastModel):
    """Autoregressive inner model, Yule-Walker coefficients, order by AIC."""

    kind = "ar"

    def __init__(self, values: np.ndarray, order: int, coeffs: np.ndarray, mean: float):
        super().__init__()
        self.order = order
        self.coeffs = coeffs
        self.mean = mean
        self.params = {"order": order, "coeffs": [float(c) for c in coeffs]}
        centered = values - mean
        self._tail = list(centered[-max(order, 1):])
        resid = []
        for t in range(order, centered.size):
            pred = float(np.dot(coeffs, centered[t - order:t][::-1]))
            resid.append(centered[t] - pred)
        self.residuals = np.asarray(resid)

    def forecast(self, horizon: int) -> np.ndarray:
        self._check_horizon(horizon)
        buf = list(self._tail)
        out = np.empty(horizon)
        for h in range(horizon):
            pred = float(np.dot(self.coeffs, np.asarray(buf[-self.order:])[::-1]))
            out[h] = pred + self.mean
            buf.append(pred)
        return out

    def update(self, y: float) -> None:
        self._tail.append(float(y) - self.mean)
        if len(self._tail) > 10 * self.order:
            self._tail = self._tail[-self.order:]


def _autocovariances(x: np.ndarray, max_lag: int) -> np.ndarray:
    n = x.size
    xc = x - x.mean()
    return np.array([float(np.dot(xc[k:], xc[:n - k])) / n for k in range(max_lag + 1)])


def _fit_ar(values: np.ndarray) -> ArInner:
    n = values.size
    mean = float(values.mean())
    max_p = min(AR_MAX_ORDER, n - 1)
    cov = _autocovariances(values, max_p)
    if cov[0] <= 0.0:
        return ArInner(values, 1, np.zeros(1), mean)
    best = None
    for p in range(1, max_p + 1):
        toeplitz = np.array([[cov[abs(i - j)] for j in range(p)] for i in range(p)])
        try:
            phi = np.linalg.solve(toeplitz, cov[1:p + 1])
        except np.linalg.LinAlgError:
            continue
        sigma2 = max(cov[0] - float(np.dot(phi, cov[1:p + 1])), 1e-12)
        aic = n * math.log(sigma2) + 2.0 * (p + 1)
        if best is None or aic < best[0]:
            best = (aic, p, phi)
    if best is None:
        return ArInner(values, 1, np.zeros(1), mean)
    _, p, phi = best
    return ArInner(values, p, phi, mean)


class StlModel(ForecastModel):
    """STL decomposition with a seasonal-naive seasonal continuation plus an inner model."""

    def __init__(self, values: np.ndarray, m: int, inner: ForecastModel,
                 seasonal: np.ndarray, trend: np.ndarray, remainder: np.ndarray):
        super().__init__()
        self.kind = f"stl({inner.kind})"
        self.m = m
        self.season_periods = [m]
        self.inner = inner
        self.seasonal = seasonal
        self.trend = trend
        self.remainder = remainder
        self.params = {"m": m, "inner": inner.kind, **{f"inner_{k}": v
                                                       for k, v in inner.params.items()}}
        self._ring = seasonal[-m:].copy()
        self._phase = 0
        self.residuals = inner.residuals

    def forecast(self, horizon: int) -> np.ndarray:
        self._check_horizon(horizon)
        h = np.arange(horizon)
        season = self._ring[(self._phase + h) % self.m]
        return season + self.inner.forecast(horizon)

    def update(self, y: float) -> None:
        self.inner.update(float(y) - self._ring[self._phase])
        self._phase = (self._phase + 1) % self.m


def fit_stl(series, m: int, inner: str = "drift") -> StlModel:
    """Decompose, then model the non-seasonal part with the chosen inner method."""
    y = _as_series(series)
    if m < 2:
        raise ValueError(f"season period must be >= 2, got {m}")
    if y.size < 2 * m + 1:
        raise ValueError(f"need at least 2m+1 = {2 * m + 1} samples, got {y.size}")
    seasonal, trend, remainder = stl_decompose(y, m)
    nonseasonal = y - seasonal
    if inner == "naive":
        inner_model: ForecastModel = NaiveModel(nonseasonal)
    elif inner == "drift":
        inner_model = DriftModel(nonseasonal)
    elif inner == "ses":
        inner_model = _fit_ses(nonseasonal)
    elif inner == "ar":
        inner_model = _fit_ar(nonseasonal)
    else:
        raise ValueError(f"unknown STL inner model {inner!r}")
    return StlModel(y, m, inner_model, seasonal, trend, remainder)


# ---------------------------------------------------------------------------
# Trigonometric-seasonality smoother (additive trend, multiplicative seasonal factors)

SEASONAL_FACTOR_FLOOR = 1e-6


class TbatsLiteModel(ForecastModel):
    """
    Level/trend recursions with one multiplicative trigonometric seasonal
    factor per period.

    Each period i contributes a factor 1 + sum_j (s_j cos(h*lambda_j) +
    s*_j sin(h*lambda_j)) built from j <= j_max harmonics at lambda_j =
    2*pi*j/m_i. Harmonic states rotate one step per observation and both
    components receive gain_i times the relative one-step error.
    """

    kind = "tbats-lite"

    def __init__(self, periods, j_max, alpha, beta, gammas, level, trend,
                 harmonics=None):
        super().__init__()
        self.periods = [int(m) for m in periods]
        self.season_periods = list(self.periods)
        self.j_max = [min(int(j_max), m // 2) for m in self.periods] \
            if np.isscalar(j_max) else [int(j) for j in j_max]
        self.alpha, self.beta = float(alpha), float(beta)
        self.gammas = [float(g) for g in gammas]
        self.level, self.trend = float(level), float(trend)
        self.lambdas = [2.0 * np.pi * np.arange(1, k + 1) / m
                        for m, k in zip(self.periods, self.j_max)]
        if harmonics is None:
            self.harmonics = [(np.zeros(k), np.zeros(k)) for k in self.j_max]
        else:
            self.harmonics = [(np.array(s, dtype=float), np.array(ss, dtype=float))
                              for s, ss in harmonics]
        self.params = {"periods": self.periods, "j_max": self.j_max,
                       "alpha": self.alpha, "beta": self.beta, "gammas": self.gammas}

    def seasonal_factor(self, h: int, period_index: int) -> float:
        lam = self.lambdas[period_index]
        s, s_star = self.harmonics[period_index]
        return 1.0 + float(np.dot(s, np.cos(h * lam)) + np.dot(s_star, np.sin(h * lam)))

    def _combined_factor(self, h: int) -> float:
        f = 1.0
        for i in range(len(self.periods)):
            f *= self.seasonal_factor(h, i)
        return f if abs(f) > SEASONAL_FACTOR_FLOOR else math.copysign(
            SEASONAL_FACTOR_FLOOR, f if f != 0.0 else 1.0)

    def forecast(self, horizon: int) -> np.ndarray:
        self._check_horizon(horizon)
        return np.array([(self.level + h * self.trend) * self._combined_factor(h)
                         for h in range(1, horizon + 1)])

    def update(self, y: float) -> float:
        """Advance one step; returns the one-step forecast error."""
        factor = self._combined_factor(1)
        yhat = (self.level + self.trend) * factor
        err = float(y) - yhat
        eps = err / yhat if abs(yhat) > 1e-12 else 0.0
        new_level = (self.alpha * (float(y) / factor)
                     + (1.0 - self.alpha) * (self.level + self.trend))
        new_trend = self.beta * (new_level - self.level) + (1.0 - self.beta) * self.trend
        for i, lam in enumerate(self.lambdas):
            s, s_star = self.harmonics[i]
            cos_l, sin_l = np.cos(lam), np.sin(lam)
            rot = s * cos_l + s_star * sin_l
            rot_star = -s * sin_l + s_star * cos_l
            g = self.gammas[i] * eps
            self.harmonics[i] = (rot + g, rot_star + g)
        self.level, self.trend = new_level, new_trend
        return err

    def copy_state(self) -> "TbatsLiteModel":
        clone = TbatsLiteModel(self.periods, self.j_max, self.alpha, self.beta,
                               self.gammas, self.level, self.trend,
                               [(s.copy(), ss.copy()) for s, ss in self.harmonics])
        clone.residuals = self.residuals
        return clone


def _tbats_initial_state(y: np.ndarray, periods, j_max_list):
    """Deterministic starting values: linear trend plus Fourier regression of the ratio."""
    n = y.size
    t = np.arange(n, dtype=float)
    slope, intercept = np.polyfit(t, y, 1)
    if intercept <= 0.0:
        intercept, slope = float(np.mean(y)), 0.0
    base = np.maximum(intercept + slope * t, 1e-9)
    ratio = y / base - 1.0
    columns = []
    for m, k in zip(periods, j_max_list):
        lam = 2.0 * np.pi * np.arange(1, k + 1) / m
        for l in lam:
            columns.append(np.cos(l * (t + 1.0)))
            columns.append(np.sin(l * (t + 1.0)))
    design = np.column_stack(columns)
    coef, *_ = np.linalg.lstsq(design, ratio, rcond=None)
    harmonics = []
    pos = 0
    for k in j_max_list:
        s = coef[pos:pos + 2 * k:2]
        s_star = coef[pos + 1:pos + 2 * k:2]
        harmonics.append((np.array(s), np.array(s_star)))
        pos += 2 * k
    return float(intercept), float(slope), harmonics


def fit_tbats_lite(series, periods, j_max: int = 2) -> TbatsLiteModel:
    """
    Fit the printed smoothing recursions by one-step SSE.

    Initial level/trend/harmonic states come from a deterministic
    regression; Nelder-Mead then tunes (alpha, beta, gain per period).
    Requires a strictly positive series, as the seasonality is
    multiplicative.
    """
    y = _as_series(series)
    periods = [int(m) for m in periods]
    if not periods or any(m < 2 for m in periods):
        raise ValueError("need at least one season period >= 2")
    if y.size < 2 * max(periods):
        raise ValueError(f"need at least 2*max(m) = {2 * max(periods)} samples, got {y.size}")
    if float(y.min()) <= 0.0:
        raise ValueError("multiplicative seasonality requires a strictly positive series")
    j_max_list = [max(1, min(int(j_max), m // 2)) for m in periods]
    level0, trend0, harmonics0 = _tbats_initial_state(y, periods, j_max_list)

    def objective(x):
        x = np.clip(x, PARAM_LO, PARAM_HI)
        model = TbatsLiteModel(periods, j_max_list, x[0], x[1], x[2:], level0, trend0,
                               [(s.copy(), ss.copy()) for s, ss in harmonics0])
        sse = 0.0
        for v in y:
            err = model.update(v)
            sse += err * err
            if not np.isfinite(sse):
                return np.inf
        return sse

    best = _fit_smoothing(objective, 2 + len(periods))
    model = TbatsLiteModel(periods, j_max_list, best[0], best[1], best[2:],
                           level0, trend0,
                           [(s.copy(), ss.copy()) for s, ss in harmonics0])
    residuals = np.array([model.update(v) for v in y])
    model.residuals = residuals
    return model


# ---------------------------------------------------------------------------
# Per-cell model selection

def fit_model(kind: str, values, m: int, weekly_m: int | None = None,
              n_seasons: int | None = None, j_max: int = 2) -> ForecastModel:
    """Construct any candidate by kind name."""
    if kind == "baseline":
        return fit_baseline(values, m, n_seasons)
    if kind in ("naive", "seasonal-naive", "drift"):
        return fit_simple(values, kind, m)
    if kind == "holt-winters":
        return fit_holt_winters(values, m)
    if kind.startswith("stl(") and kind.endswith(")"):
        return fit_stl(values, m, kind[4:-1])
    if kind == "tbats-lite":
        periods = [m] if weekly_m is None else [m, weekly_m]
        return fit_tbats_lite(values, periods, j_max)
    raise ValueError(f"unknown model kind {kind!r}")


def inverse_and_clamp(values, lam: float | None):
    """Back to the original demand scale; negative point forecasts clamp to 0."""
    v = np.asarray(values, dtype=float)
    if lam is not None:
        v = boxcox_inverse(v, lam)
    return np.maximum(v, 0.0)


@dataclass
class SelectionResult:
    """Winner of the per-cell model bake-off, rolled through the validation window."""

    kind: str
    model: ForecastModel
    val_forecasts: np.ndarray          # original scale, one per validation bin
    val_scores: dict[str, float]
    boxcox_lambda: float | None = None


def roll_one_step(model: ForecastModel, observed: np.ndarray,
                   lam: float | None) -> np.ndarray:
    """One-step-ahead forecasts over a window, updating state after each bin."""
    out = np.empty(observed.size)
    for t, v in enumerate(observed):
        out[t] = inverse_and_clamp(model.forecast(1), lam)[0]
        model.update(v)
    return out


def select_model(series, m: int, candidates, validation_len: int, *,
                 lam: float | None = None, weekly_m: int | None = None,
                 n_seasons: int | None = None) -> SelectionResult:
    """
    Fit every candidate on the training split, score one-step-rolling SMAPE
    on the validation window (original scale), and keep the best. The
    seasonal-averaging baseline is always scored; a candidate must strictly
    beat it to be selected. Candidates whose preconditions fail on this
    series are discarded.
    """
    y = _as_series(series)
    if not (1 <= validation_len < y.size):
        raise ValueError("validation window must be nonempty and leave a training split")
    work = boxcox_transform(y, lam) if lam is not None else y
    n_train = y.size - validation_len
    actual_val = y[n_train:]

    fitted: dict[str, tuple[ForecastModel, np.ndarray]] = {}
    scores: dict[str, float] = {}
    kinds = ["baseline"] + [k for k in candidates if k != "baseline"]
    for kind in kinds:
        try:
            model = fit_model(kind, work[:n_train], m, weekly_m=weekly_m,
                              n_seasons=n_seasons)
        except ValueError:
            scores[kind] = np.inf
            continue
        preds = roll_one_step(model, work[n_train:], lam)
        try:
            scores[kind] = smape(actual_val, preds)
        except UndefinedMetricError:
            scores[kind] = np.inf
        fitted[kind] = (model, preds)

    if "baseline" not in fitted:
        raise ValueError(f"baseline model cannot be fit (needs at least m = {m} samples)")
    best_kind = "baseline"
    best_score = scores["baseline"]
    for kind in kinds[1:]:
        if kind in fitted and scores[kind] < best_score:
            best_kind, best_score = kind, scores[kind]
    model, preds = fitted[best_kind]
    return SelectionResult(best_kind, model, preds, scores, lam)


def model_summary(model: ForecastModel, validation_smape: float | None = None) -> dict:
    """JSON-ready description of a fitted model."""
    out = {"kind": model.kind, "params": model.params,
           "season_periods": model.season_periods}
    if validation_smape is not None and np.isfinite(validation_smape):
        out["validation_smape"] = validation_smape
    return out
