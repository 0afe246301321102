"""Candidate NAR monomials and regressor matrices."""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass
from itertools import combinations_with_replacement

import numpy as np

from .interval import IntervalArray, mul, pow_int

__all__ = ["Term", "generate_candidates", "eval_term", "build_regressors"]


@dataclass(frozen=True, order=True)
class Term:
    """Monomial ``Π y(k - lag)`` over a multiset of lags; ``()`` is the constant.

    Lags are kept sorted so equal monomials compare equal.
    """

    lags: tuple[int, ...] = ()

    def __post_init__(self):
        lags = tuple(sorted(int(l) for l in self.lags))
        if any(l < 1 for l in lags):
            raise ValueError(f"lags must be positive, got {self.lags}")
        object.__setattr__(self, "lags", lags)

    @property
    def degree(self) -> int:
        return len(self.lags)

    @property
    def max_lag(self) -> int:
        return max(self.lags, default=0)

    def powers(self) -> list[tuple[int, int]]:
        """``(lag, exponent)`` pairs in increasing lag order."""
        return sorted(Counter(self.lags).items())

    def __str__(self):
        if not self.lags:
            return "1"
        parts = []
        for lag, p in sorted(Counter(self.lags).items(), reverse=True):
            parts.append(f"y(k-{lag})" + (f"^{p}" if p > 1 else ""))
        return "*".join(parts)

    @classmethod
    def parse(cls, text: str) -> "Term":
        """Inverse of ``str``: ``"y(k-4)^3*y(k-1)"`` or ``"1"``."""
        text = text.replace(" ", "")
        if text in ("1", "const"):
            return cls(())
        lags = []
        for factor in text.split("*"):
            m = re.fullmatch(r"y\(k-(\d+)\)(?:\^(\d+))?", factor)
            if m is None:
                raise ValueError(f"cannot parse term {text!r}")
            lags += [int(m.group(1))] * int(m.group(2) or 1)
        return cls(tuple(lags))


def generate_candidates(degree: int, ny: int) -> list[Term]:
    """All monomials of degree 0..``degree`` in ``y(k-1)..y(k-ny)``.

    There are ``C(ny + degree, degree)`` of them, ordered by degree and then
    lexicographically on the sorted lags.
    """
    if degree < 1 or ny < 1:
        raise ValueError("degree and ny must both be >= 1")
    out = [Term(())]
    for d in range(1, degree + 1):
        out.extend(Term(c) for c in combinations_with_replacement(range(1, ny + 1), d))
    return out


def eval_term(term: Term, y, k: int) -> float:
    """Value of ``term`` at position ``k`` of ``y`` (0-based, needs k >= max lag)."""
    if not term.max_lag <= k < len(y):
        raise IndexError(f"position {k} out of range for term {term} on {len(y)} samples")
    out = 1.0
    for lag in term.lags:
        out *= float(y[k - lag])
    return out


def _lagged(y, lag: int, start: int):
    n = len(y)
    return y[start - lag : n - lag]


def term_column(term: Term, y, start: int):
    """Values of ``term`` at positions ``start..N-1`` (point or interval)."""
    n = len(y) - start
    if isinstance(y, IntervalArray):
        if not term.lags:
            return IntervalArray(np.ones(n))
        col = None
        for lag, p in term.powers():
            f = pow_int(_lagged(y, lag, start), p)
            col = f if col is None else mul(col, f)
        return col
    if not term.lags:
        return np.ones(n)
    col = np.ones(n)
    for lag in term.lags:
        col = col * _lagged(y, lag, start)
    return col


def build_regressors(terms, y, ny: int | None = None):
    """Regressor matrix Ψ and target vector for ``terms`` on signal ``y``.

    Row ``i`` is position ``ny + i``; all rows start there regardless of
    which lags the terms use. An :class:`IntervalArray` signal yields an
    interval Ψ and an interval target.
    """
    terms = list(terms)
    if ny is None:
        ny = max((t.max_lag for t in terms), default=0)
    if any(t.max_lag > ny for t in terms):
        raise ValueError("a term uses a lag larger than ny")
    if len(y) <= ny:
        raise ValueError(f"too few samples: {len(y)} samples with ny={ny}")
    cols = [term_column(t, y, ny) for t in terms]
    if isinstance(y, IntervalArray):
        lo = np.column_stack([c.lo for c in cols])
        hi = np.column_stack([c.hi for c in cols])
        return IntervalArray(lo, hi), y[ny:]
    y = np.asarray(y, dtype=float)
    return np.column_stack(cols), y[ny:].copy()
