"""Model validation: k-step-ahead and free-run prediction, normalized RMSE
(point and interval) and residual whiteness diagnostics."""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .estimation import Model
from .interval import Interval, IntervalArray, div, pow_int, sqrt, sub

__all__ = [
    "Prediction",
    "ResidualDiagnostics",
    "predict_k_steps",
    "free_run",
    "rmse",
    "rmse_interval",
    "residual_diagnostics",
    "write_band_csv",
    "write_residual_csv",
]

DIVERGENCE_LIMIT = 1e12


@dataclass
class Prediction:
    """Predicted values at positions ``instants`` of the series they refer to.

    ``horizon`` is ``None`` for a free run.
    """

    values: np.ndarray | IntervalArray
    instants: np.ndarray
    horizon: int | None
    diverged: bool = False

    @property
    def is_interval(self) -> bool:
        return isinstance(self.values, IntervalArray)

    def __len__(self):
        return len(self.instants)


def _evaluate(terms, theta, slots, pos):
    """Model output at slot ``pos`` given the earlier slot columns."""
    total = 0.0
    for th, term in zip(theta, terms):
        val = None
        for lag, p in term.powers():
            f = slots[pos - lag] ** p
            val = f if val is None else val * f
        total = total + (th if val is None else th * val)
    return total


def predict_k_steps(model: Model, y, k: int, theta=None) -> Prediction:
    """Rolling-origin ``k``-step-ahead prediction over the series ``y``.

    Each predicted instant ``t`` starts from the measured history up to
    ``t - k`` and iterates the model ``k`` times on its own outputs. With an
    :class:`IntervalArray` series the interval parameters
    (``model.theta_interval``, falling back to the point parameters) are used
    and the predictions are intervals.
    """
    if int(k) != k or k < 1:
        raise ValueError(f"horizon must be a positive integer, got {k}")
    k = int(k)
    ny = model.ny
    n = len(y)
    m = n - (ny + k - 1)
    if m < 1:
        raise ValueError(f"insufficient history: {n} samples for ny={ny}, k={k}")
    interval = isinstance(y, IntervalArray)
    if theta is None:
        theta = model.theta_interval if (interval and model.theta_interval is not None) else model.theta
    if interval and not isinstance(theta, IntervalArray):
        theta = IntervalArray(theta)
    if not interval:
        y = np.asarray(y, dtype=float)

    slots = [y[s : s + m] for s in range(ny)]
    for step in range(k):
        out = _evaluate(model.terms, theta, slots, ny + step)
        if interval and isinstance(out, Interval):
            out = IntervalArray(np.full(m, out.lo), np.full(m, out.hi))
        elif not interval and np.ndim(out) == 0:
            out = np.full(m, float(out))
        slots.append(out)
    return Prediction(values=slots[-1], instants=np.arange(ny + k - 1, n), horizon=k)


def free_run(model: Model, initial, steps: int) -> Prediction:
    """Iterate the model on its own outputs from ``ny`` seed values.

    Stops early and sets ``diverged`` when a value becomes non-finite or
    exceeds ``DIVERGENCE_LIMIT`` in magnitude. ``instants`` index the
    generated samples after the seed (0 = first generated sample).
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    seed = np.asarray(initial, dtype=float)
    if seed.size < model.ny:
        raise ValueError(f"need {model.ny} seed values, got {seed.size}")
    buf = list(seed[seed.size - model.ny :])
    out = []
    diverged = False
    for _ in range(steps):
        v = float(_evaluate(model.terms, model.theta, buf, len(buf)))
        if not math.isfinite(v) or abs(v) > DIVERGENCE_LIMIT:
            diverged = True
            warnings.warn("free run diverged; output truncated", RuntimeWarning, stacklevel=2)
            break
        buf.append(v)
        out.append(v)
    return Prediction(values=np.array(out), instants=np.arange(len(out)), horizon=None, diverged=diverged)


def rmse(pred: Prediction, y, ybar_id: float) -> float:
    """``sqrt(Σ(y - ŷ)²) / sqrt(Σ(y - ȳ)²)`` over the predicted instants.

    ``ybar_id`` is the mean of the identification data, not of ``y``.
    """
    if pred.is_interval:
        raise TypeError("use rmse_interval for interval predictions")
    yv = np.asarray(y, dtype=float)[pred.instants]
    num = math.fsum((yv - pred.values) ** 2)
    den = math.fsum((yv - ybar_id) ** 2)
    if den == 0:
        raise ZeroDivisionError("validation data equal the reference mean everywhere")
    return math.sqrt(num) / math.sqrt(den)


def rmse_interval(pred: Prediction, y: IntervalArray, ybar_id) -> Interval:
    """Normalized RMSE evaluated in interval arithmetic.

    Contains the point RMSE of every choice of data, predictions and mean
    inside the given intervals.
    """
    if not pred.is_interval:
        raise TypeError("rmse_interval needs an interval prediction")
    if not isinstance(y, IntervalArray):
        y = IntervalArray(y)
    yv = y[pred.instants]
    num = pow_int(sub(yv, pred.values), 2).sum()
    den = pow_int(sub(yv, ybar_id), 2).sum()
    if den.lo <= 0:
        raise ZeroDivisionError("denominator interval of the RMSE contains zero")
    return div(sqrt(num), sqrt(den))


@dataclass
class ResidualDiagnostics:
    lags: np.ndarray
    r_xx: np.ndarray
    r_xx2: np.ndarray
    r_x2x2: np.ndarray
    band: float

    def fraction_inside(self) -> dict[str, float]:
        """Share of lags 1..tau_max whose correlation lies within ±band."""
        return {
            name: float(np.mean(np.abs(getattr(self, name)[1:]) <= self.band))
            for name in ("r_xx", "r_xx2", "r_x2x2")
        }


def _corr(a, b, tau_max):
    n = a.size
    return np.array([np.dot(a[tau:], b[: n - tau]) for tau in range(tau_max + 1)])


def residual_diagnostics(xi, tau_max: int = 25) -> ResidualDiagnostics:
    """Normalized residual correlations and a 95% confidence band.

    * ``r_xx``: autocorrelation of ξ
    * ``r_xx2``: correlation of ξ(k) with the mean-removed ξ²(k - τ)
    * ``r_x2x2``: autocorrelation of the mean-removed ξ²

    For white residuals all three stay within ``±1.96/sqrt(N)`` for τ ≥ 1.
    """
    xi = np.asarray(xi, dtype=float)
    n = xi.size
    if not 1 <= tau_max < n:
        raise ValueError(f"tau_max must lie in [1, {n - 1}]")
    if n < 10 * tau_max:
        warnings.warn(
            f"only {n} residuals for {tau_max} lags; estimates will be noisy",
            RuntimeWarning,
            stacklevel=2,
        )
    a = xi - xi.mean()
    sq = xi * xi
    b = sq - sq.mean()
    saa, sbb = float(a @ a), float(b @ b)
    if saa == 0 or sbb == 0:
        raise ValueError("residuals have zero variance")
    c_aa = _corr(a, a, tau_max)
    c_bb = _corr(b, b, tau_max)
    c_ab = _corr(a, b, tau_max)
    return ResidualDiagnostics(
        lags=np.arange(tau_max + 1),
        r_xx=c_aa / c_aa[0],
        r_xx2=c_ab / math.sqrt(saa * sbb),
        r_x2x2=c_bb / c_bb[0],
        band=1.96 / math.sqrt(n),
    )


def write_band_csv(path, instants, measured, point, interval: IntervalArray | None = None) -> None:
    """CSV with columns ``instant, measured, point, lower, upper``."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["instant", "measured", "point", "lower", "upper"])
        for i, t in enumerate(instants):
            lo = repr(float(interval.lo[i])) if interval is not None else ""
            hi = repr(float(interval.hi[i])) if interval is not None else ""
            w.writerow([int(t), repr(float(measured[i])), repr(float(point[i])), lo, hi])


def write_residual_csv(path, diag: ResidualDiagnostics) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["lag", "r_xx", "r_xx2", "r_x2x2", "band"])
        for i, lag in enumerate(diag.lags):
            w.writerow(
                [int(lag), repr(float(diag.r_xx[i])), repr(float(diag.r_xx2[i])),
                 repr(float(diag.r_x2x2[i])), repr(diag.band)]
            )
