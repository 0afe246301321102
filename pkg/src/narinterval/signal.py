"""Signal ingestion, autocovariance analysis, decimation and data splits.

Signals are plain 1-D float arrays. Positions are 0-based; the sample the
literature calls ``y(1)`` is ``y[0]`` here.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "AutocovarianceCurve",
    "NoMinimumWarning",
    "as_signal",
    "autocov_linear",
    "autocov_nonlinear",
    "first_minimum",
    "working_lag",
    "choose_decimation",
    "decimate",
    "split",
    "split_fractions",
    "read_signal_csv",
    "write_signal_csv",
]


class NoMinimumWarning(UserWarning):
    """The autocovariance curve has no local minimum within the lag range."""


@dataclass(frozen=True)
class AutocovarianceCurve:
    lags: np.ndarray
    values: np.ndarray

    @property
    def tau_max(self) -> int:
        return int(self.lags[-1])


def as_signal(y) -> np.ndarray:
    """Validate and return ``y`` as a 1-D float array of finite samples."""
    y = np.asarray(y, dtype=float)
    if y.ndim != 1:
        raise ValueError(f"a signal must be one-dimensional, got shape {y.shape}")
    if y.size < 2:
        raise ValueError("a signal needs at least 2 samples")
    if not np.all(np.isfinite(y)):
        raise ValueError("signal contains non-finite samples")
    return y


def autocov_linear(y, tau_max: int) -> AutocovarianceCurve:
    """Autocovariance ``r(τ) = 1/(N-τ) Σ (y(k)-ȳ)(y(k-τ)-ȳ)`` for τ = 0..tau_max.

    Sums use ``math.fsum`` so the result does not depend on summation order.
    """
    y = as_signal(y)
    n = y.size
    if not 0 <= tau_max < n:
        raise ValueError(f"tau_max must lie in [0, {n - 1}], got {tau_max}")
    mean = math.fsum(y) / n
    mean += math.fsum(y - mean) / n  # one correction step; exact for constant series
    d = y - mean
    values = np.array(
        [math.fsum(d[tau:] * d[: n - tau]) / (n - tau) for tau in range(tau_max + 1)]
    )
    return AutocovarianceCurve(np.arange(tau_max + 1), values)


def autocov_nonlinear(y, tau_max: int) -> AutocovarianceCurve:
    """Autocovariance of the mean-removed squared series ``y²(k) - mean(y²)``."""
    y = as_signal(y)
    return autocov_linear(y * y, tau_max)


def first_minimum(curve: AutocovarianceCurve) -> int:
    """Smallest lag τ ≥ 1 that is a local minimum of the curve.

    Falls back to ``tau_max`` with a :class:`NoMinimumWarning` when no
    interior minimum exists.
    """
    v = np.asarray(curve.values)
    if v.size < 3:
        raise ValueError("curve needs at least 3 lags")
    for tau in range(1, v.size - 1):
        if v[tau] <= v[tau - 1] and v[tau] <= v[tau + 1]:
            return tau
    warnings.warn(
        f"no local minimum up to lag {v.size - 1}; using tau_max",
        NoMinimumWarning,
        stacklevel=2,
    )
    return v.size - 1


def working_lag(y, tau_max: int) -> tuple[int, AutocovarianceCurve, AutocovarianceCurve]:
    """Working lag τm: the smaller first minimum of both autocovariances."""
    lin = autocov_linear(y, tau_max)
    nonlin = autocov_nonlinear(y, tau_max)
    return min(first_minimum(lin), first_minimum(nonlin)), lin, nonlin


def choose_decimation(tau_m: int) -> int:
    """Largest Δ with ``10Δ <= tau_m``, clamped to at least 1."""
    if tau_m < 1:
        raise ValueError(f"tau_m must be >= 1, got {tau_m}")
    return max(1, tau_m // 10)


def decimate(y, delta: int):
    """Keep every ``delta``-th sample starting with the first one.

    No anti-alias prefilter is applied. Works on point arrays and on
    :class:`~narinterval.interval.IntervalArray` alike.
    """
    if int(delta) != delta or delta < 1:
        raise ValueError(f"decimation factor must be a positive integer, got {delta}")
    return y[:: int(delta)]


def split(y, frac_id: float = 0.5, min_samples: int = 2):
    """Contiguous identification/validation split, identification first.

    The identification part holds ``floor(N * frac_id)`` samples.
    """
    if not 0 < frac_id < 1:
        raise ValueError(f"frac_id must lie in (0, 1), got {frac_id}")
    n = len(y)
    n_id = int(math.floor(n * frac_id))
    ident, valid = y[:n_id], y[n_id:]
    if min(len(ident), len(valid)) < min_samples:
        raise ValueError(
            f"too few samples: splitting {n} samples at {frac_id} gives "
            f"{len(ident)}/{len(valid)}, each part needs at least {min_samples}"
        )
    return ident, valid


def split_fractions(n: int, fractions=(0.6, 0.2, 0.2)) -> list[slice]:
    """Contiguous slices of ``range(n)`` with the given relative sizes."""
    fr = np.asarray(fractions, dtype=float)
    if np.any(fr <= 0):
        raise ValueError("fractions must be positive")
    edges = np.floor(np.cumsum(fr) / fr.sum() * n).astype(int)
    edges[-1] = n
    starts = np.concatenate([[0], edges[:-1]])
    parts = [slice(int(a), int(b)) for a, b in zip(starts, edges)]
    if any(p.stop - p.start < 1 for p in parts):
        raise ValueError(f"too few samples ({n}) for split {tuple(fractions)}")
    return parts


def _parse_number(text: str, decimal: str) -> float:
    text = text.strip()
    if decimal != ".":
        text = text.replace(".", "").replace(decimal, ".")
    return float(text)


def read_signal_csv(path, decimal: str = ".") -> np.ndarray:
    """Read a one-column numeric CSV file with an optional header line.

    ``decimal`` selects the decimal separator; ``","`` accepts files written
    in comma-decimal locales (where ``.`` is then taken as a thousands mark).
    """
    if decimal not in (".", ","):
        raise ValueError(f"decimal separator must be '.' or ',', got {decimal!r}")
    values = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if decimal == "." and ("," in line or ";" in line):
                raise ValueError(f"{path}:{lineno}: expected a single numeric column")
            try:
                values.append(_parse_number(line, decimal))
            except ValueError:
                if values or lineno > 1:
                    raise ValueError(f"{path}:{lineno}: not a number: {line!r}") from None
                # first line is a header
    return as_signal(values)


def write_signal_csv(path, y, header: str = "y") -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([header])
        for v in np.asarray(y, dtype=float):
            w.writerow([repr(float(v))])
