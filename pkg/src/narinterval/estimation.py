"""Structure selection and parameter estimation for polynomial NAR models.

Terms are ranked by the error reduction ratio (ERR) with greedy forward
orthogonal least squares, the model size is picked by the Akaike
information criterion, and parameters are estimated by ordinary least
squares (point data) or by a verified enclosure of the interval normal
equations (interval data).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .interval import IntervalArray, gram, matmul, solve_enclosure
from .terms import Term

__all__ = [
    "ErrRanking",
    "Model",
    "RankDeficientError",
    "err_rank",
    "aic",
    "aic_select",
    "ls_estimate",
    "interval_ls_estimate",
]

# columns whose norm falls below this fraction of the largest are treated as zero
RANK_TOL = 1e-12
MAX_AIC_TERMS = 30


class RankDeficientError(np.linalg.LinAlgError):
    def __init__(self, columns, labels=None):
        self.columns = list(columns)
        names = [str(labels[c]) for c in self.columns] if labels is not None else self.columns
        super().__init__(f"regressor matrix is rank deficient; dependent columns: {names}")


@dataclass
class ErrRanking:
    """Columns in order of selection with their error reduction ratios."""

    order: list[int]
    err: np.ndarray
    terms: list[Term] | None = None

    def __len__(self):
        return len(self.order)

    @property
    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.err)

    def ranked_terms(self) -> list[Term]:
        if self.terms is None:
            raise ValueError("ranking was built without term labels")
        return [self.terms[i] for i in self.order]


@dataclass
class Model:
    """Polynomial NAR model ``y(k) = Σ θ_j · term_j``.

    ``ny`` fixes the history a prediction needs; it is the candidate-set lag
    bound, which may exceed the largest lag actually used.
    """

    terms: list[Term]
    theta: np.ndarray
    ny: int
    theta_interval: IntervalArray | None = None
    err: np.ndarray | None = None
    aic_trace: np.ndarray | None = None

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float)
        if len(self.terms) != self.theta.size:
            raise ValueError("number of terms and parameters differ")
        if any(t.max_lag > self.ny for t in self.terms):
            raise ValueError("a model term uses a lag larger than ny")

    @property
    def selected_size(self) -> int:
        return len(self.terms)

    def to_dict(self) -> dict:
        out = {
            "ny": self.ny,
            "terms": [str(t) for t in self.terms],
            "theta": [float(v) for v in self.theta],
        }
        if self.theta_interval is not None:
            out["theta_interval"] = [
                [float(lo), float(hi)]
                for lo, hi in zip(self.theta_interval.lo, self.theta_interval.hi)
            ]
        if self.err is not None:
            out["err"] = [float(v) for v in self.err]
        if self.aic_trace is not None:
            out["aic_trace"] = [None if not math.isfinite(v) else float(v) for v in self.aic_trace]
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "Model":
        ti = data.get("theta_interval")
        return cls(
            terms=[Term.parse(t) for t in data["terms"]],
            theta=np.array(data["theta"], dtype=float),
            ny=int(data["ny"]),
            theta_interval=None if ti is None else IntervalArray(*np.array(ti, dtype=float).T),
            err=None if data.get("err") is None else np.array(data["err"]),
            aic_trace=None
            if data.get("aic_trace") is None
            else np.array([np.nan if v is None else v for v in data["aic_trace"]]),
        )


def err_rank(psi, y, terms=None, max_terms: int | None = None) -> ErrRanking:
    """Greedy forward orthogonal selection ranked by ERR.

    At each step the remaining candidate columns are orthogonalized against
    the chosen ones (modified Gram-Schmidt) and the column with the largest
    ``ERR = <w, y>² / (<w, w> <y, y>)`` is taken.

    Candidates whose orthogonalized norm drops below ``RANK_TOL`` times the
    largest column norm are skipped with a warning.
    """
    W = np.array(psi, dtype=float, copy=True)
    y = np.asarray(y, dtype=float)
    if W.ndim != 2 or W.shape[0] != y.size:
        raise ValueError(f"shape mismatch: psi {W.shape}, y {y.shape}")
    yy = float(y @ y)
    if yy == 0.0:
        raise ValueError("target has zero energy")
    n_cols = W.shape[1]
    limit = n_cols if max_terms is None else min(max_terms, n_cols)
    norms = np.linalg.norm(W, axis=0)
    floor = RANK_TOL * float(norms.max()) if n_cols else 0.0

    remaining = list(range(n_cols))
    skipped = [j for j in remaining if norms[j] <= floor]
    remaining = [j for j in remaining if norms[j] > floor]
    r = y.copy()
    order, errs = [], []
    while remaining and len(order) < limit:
        Wr = W[:, remaining]
        ww = np.einsum("ij,ij->j", Wr, Wr)
        ok = np.sqrt(ww) > floor
        if not np.all(ok):
            skipped += [j for j, good in zip(remaining, ok) if not good]
            remaining = [j for j, good in zip(remaining, ok) if good]
            Wr, ww = Wr[:, ok], ww[ok]
            if not remaining:
                break
        wy = Wr.T @ r
        scores = wy * wy / (ww * yy)
        best = int(np.argmax(scores))
        j = remaining.pop(best)
        order.append(j)
        errs.append(float(min(scores[best], 1.0)))
        q = W[:, j] / math.sqrt(ww[best])
        r -= (q @ r) * q
        if remaining:
            W[:, remaining] -= np.outer(q, q @ W[:, remaining])
    if skipped:
        names = [str(terms[j]) if terms is not None else j for j in skipped]
        warnings.warn(
            f"{len(skipped)} candidate(s) had (near) zero norm and were skipped: {names}",
            RuntimeWarning,
            stacklevel=2,
        )
    return ErrRanking(order=order, err=np.array(errs), terms=None if terms is None else list(terms))


def aic(rss: float, n_samples: int, n_params: int) -> float:
    """``N ln(σ²) + 2 n_θ`` with ``σ² = RSS / N``."""
    var = rss / n_samples
    if var <= 0:
        return -math.inf
    return n_samples * math.log(var) + 2 * n_params


def aic_select(ranking: ErrRanking, psi, y, ny: int, max_terms: int = MAX_AIC_TERMS) -> Model:
    """Fit the first ``n`` ranked terms for every ``n`` and keep the AIC minimizer.

    Sizes whose fit is rank deficient get ``nan`` in the trace and are
    skipped with a warning. Ties go to the smaller size.
    """
    if len(ranking) == 0:
        raise ValueError("ranking is empty")
    psi = np.asarray(psi, dtype=float)
    y = np.asarray(y, dtype=float)
    n_max = min(len(ranking), max_terms)
    trace = np.full(n_max, np.nan)
    fits = {}
    for n in range(1, n_max + 1):
        cols = ranking.order[:n]
        try:
            theta = ls_estimate(psi[:, cols], y)
        except RankDeficientError:
            warnings.warn(f"skipping model size {n}: rank deficient", RuntimeWarning, stacklevel=2)
            continue
        resid = y - psi[:, cols] @ theta
        trace[n - 1] = aic(float(resid @ resid), y.size, n)
        fits[n] = theta
    if not fits:
        raise RankDeficientError(ranking.order[:1])
    best = int(np.nanargmin(trace)) + 1
    cols = ranking.order[:best]
    terms = [ranking.terms[c] for c in cols] if ranking.terms is not None else [Term(()) for _ in cols]
    return Model(
        terms=terms,
        theta=fits[best],
        ny=ny,
        err=ranking.err[:best].copy(),
        aic_trace=trace,
    )


def ls_estimate(psi, y, labels=None) -> np.ndarray:
    """Least-squares parameters via a QR factorization of Ψ."""
    psi = np.asarray(psi, dtype=float)
    y = np.asarray(y, dtype=float)
    if psi.ndim != 2 or psi.shape[0] != y.size:
        raise ValueError(f"shape mismatch: psi {psi.shape}, y {y.shape}")
    if psi.shape[0] < psi.shape[1]:
        raise RankDeficientError(range(psi.shape[0], psi.shape[1]), labels)
    q, r = np.linalg.qr(psi, mode="reduced")
    diag = np.abs(np.diag(r))
    scale = np.linalg.norm(psi, axis=0).max()
    bad = np.flatnonzero(diag <= RANK_TOL * scale)
    if bad.size:
        raise RankDeficientError(bad, labels)
    return solve_triangular(r, q.T @ y)


def interval_ls_estimate(psi: IntervalArray, y: IntervalArray) -> IntervalArray:
    """Enclosure of ``[ΨᵀΨ]⁻¹ Ψᵀ y`` over all point data inside the intervals.

    The interval normal equations ``ΨᵀΨ θ = Ψᵀ y`` are formed in interval
    arithmetic and handed to :func:`~narinterval.interval.solve_enclosure`,
    so the result contains the least-squares estimate of every member of
    the data box, in particular that of the midpoint data.
    """
    if not isinstance(psi, IntervalArray):
        psi = IntervalArray(psi)
    if not isinstance(y, IntervalArray):
        y = IntervalArray(y)
    A = gram(psi)
    b = matmul(psi.T, y)
    return solve_enclosure(A, b)
