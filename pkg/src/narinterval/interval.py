"""Rigorous interval arithmetic with outward rounding.

Bounds are IEEE doubles. After every bound computation the result is nudged
one ulp outward with ``nextafter`` unless the operation is known to be exact,
so every returned interval contains the exact real result. No rounding-mode
control is needed, which keeps results identical across platforms.

Two containers are provided: :class:`Interval` for scalars and
:class:`IntervalArray` for vectors and matrices (stored as a pair of numpy
arrays). The module-level functions accept either.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from numbers import Real
from typing import Union

import numpy as np

__all__ = [
    "Interval",
    "IntervalArray",
    "IntervalError",
    "EnclosureError",
    "from_midrad",
    "add",
    "sub",
    "mul",
    "div",
    "pow_int",
    "sqrt",
    "matmul",
    "gram",
    "solve_enclosure",
]

_INF = math.inf
_TINY = np.finfo(float).tiny


class IntervalError(ArithmeticError):
    """Raised when an interval operation cannot return a valid enclosure."""


class EnclosureError(IntervalError):
    """Raised when a linear system enclosure cannot be certified."""


# --------------------------------------------------------------------------
# directed-rounding kernels; all work on floats and numpy arrays alike
# --------------------------------------------------------------------------


def _down(x):
    return np.nextafter(x, -_INF)


def _up(x):
    return np.nextafter(x, _INF)


def _two_sum(a, b):
    # Knuth's error-free transformation: a + b == s + err exactly.
    s = a + b
    bb = s - a
    err = (a - (s - bb)) + (b - bb)
    return s, err


def _add_down(a, b):
    s, err = _two_sum(a, b)
    return np.where(err < 0, _down(s), s)


def _add_up(a, b):
    s, err = _two_sum(a, b)
    return np.where(err > 0, _up(s), s)


def _mul_down(a, b):
    p = a * b
    exact = (a == 0) | (b == 0)
    return np.where(exact, p, _down(p))


def _mul_up(a, b):
    p = a * b
    exact = (a == 0) | (b == 0)
    return np.where(exact, p, _up(p))


def _div_down(a, b):
    q = a / b
    return np.where(a == 0, q, _down(q))


def _div_up(a, b):
    q = a / b
    return np.where(a == 0, q, _up(q))


def _check_finite(lo, hi):
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise OverflowError("interval bound overflowed to a non-finite value")
    return lo, hi


def _add_bounds(xl, xh, yl, yh):
    return _check_finite(_add_down(xl, yl), _add_up(xh, yh))


def _sub_bounds(xl, xh, yl, yh):
    return _check_finite(_add_down(xl, -yh), _add_up(xh, -yl))


def _mul_bounds(xl, xh, yl, yh):
    lo = np.minimum(
        np.minimum(_mul_down(xl, yl), _mul_down(xl, yh)),
        np.minimum(_mul_down(xh, yl), _mul_down(xh, yh)),
    )
    hi = np.maximum(
        np.maximum(_mul_up(xl, yl), _mul_up(xl, yh)),
        np.maximum(_mul_up(xh, yl), _mul_up(xh, yh)),
    )
    return _check_finite(lo, hi)


def _div_bounds(xl, xh, yl, yh):
    if np.any((yl <= 0) & (yh >= 0)):
        raise ZeroDivisionError("division by an interval containing zero")
    lo = np.minimum(
        np.minimum(_div_down(xl, yl), _div_down(xl, yh)),
        np.minimum(_div_down(xh, yl), _div_down(xh, yh)),
    )
    hi = np.maximum(
        np.maximum(_div_up(xl, yl), _div_up(xl, yh)),
        np.maximum(_div_up(xh, yl), _div_up(xh, yh)),
    )
    return _check_finite(lo, hi)


def _pow_down(a, n):
    # a >= 0; each partial product is a lower bound of a**i
    r = a
    for _ in range(n - 1):
        r = np.maximum(_mul_down(r, a), 0.0)
    return r


def _pow_up(a, n):
    r = a
    for _ in range(n - 1):
        r = _mul_up(r, a)
    return r


def _pow_bounds(xl, xh, n):
    if n == 0:
        return np.ones_like(xl), np.ones_like(xh)
    if n == 1:
        return xl, xh
    with np.errstate(over="ignore", invalid="ignore"):
        if n % 2 == 0:
            mig = np.where(xl > 0, xl, np.where(xh < 0, -xh, 0.0))
            mag = np.maximum(np.abs(xl), np.abs(xh))
            lo, hi = _pow_down(mig, n), _pow_up(mag, n)
        else:
            lo = np.where(xl >= 0, _pow_down(np.abs(xl), n), -_pow_up(np.abs(xl), n))
            hi = np.where(xh >= 0, _pow_up(np.abs(xh), n), -_pow_down(np.abs(xh), n))
    return _check_finite(lo, hi)


def _sqrt_bounds(xl, xh):
    if np.any(xh < 0):
        raise ValueError("sqrt of an interval lying entirely below zero")
    xl = np.maximum(xl, 0.0)
    sl, sh = np.sqrt(xl), np.sqrt(xh)
    lo = np.where(xl == 0, 0.0, np.maximum(_down(sl), 0.0))
    hi = np.where(xh == 0, 0.0, _up(sh))
    return lo, hi


def _sum_down(values):
    s = math.fsum(values)
    # fsum is correctly rounded, so the sign of the exact residual decides
    r = math.fsum(np.append(values, -s))
    return math.nextafter(s, -_INF) if r < 0 else s


def _sum_up(values):
    s = math.fsum(values)
    r = math.fsum(np.append(values, -s))
    return math.nextafter(s, _INF) if r > 0 else s


# --------------------------------------------------------------------------
# containers
# --------------------------------------------------------------------------

Scalar = Union[Real, "Interval"]


@dataclass(frozen=True, slots=True)
class Interval:
    """Closed real interval ``[lo, hi]`` with finite bounds."""

    lo: float
    hi: float

    def __post_init__(self):
        lo, hi = float(self.lo), float(self.hi)
        if not (math.isfinite(lo) and math.isfinite(hi)):
            raise ValueError(f"interval bounds must be finite, got [{lo}, {hi}]")
        if lo > hi:
            raise ValueError(f"empty interval: lower bound {lo} > upper bound {hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def point(cls, x: float) -> "Interval":
        return cls(x, x)

    @property
    def mid(self) -> float:
        return 0.5 * self.lo + 0.5 * self.hi

    @property
    def rad(self) -> float:
        return 0.5 * self.hi - 0.5 * self.lo

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def subset(self, other: "Interval") -> bool:
        return other.lo <= self.lo and self.hi <= other.hi

    def __contains__(self, x) -> bool:
        if isinstance(x, Interval):
            return x.subset(self)
        return self.lo <= x <= self.hi

    def __repr__(self):
        return f"Interval({self.lo!r}, {self.hi!r})"

    def __str__(self):
        return f"[{self.lo:.17g}, {self.hi:.17g}]"

    def __neg__(self):
        return Interval(-self.hi, -self.lo)

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __pow__(self, n):
        return pow_int(self, n)


class IntervalArray:
    """N-dimensional array of intervals stored as ``lo`` and ``hi`` arrays.

    Two-dimensional instances serve as interval matrices; one-dimensional
    ones as interval vectors. Instances are immutable: the bound arrays are
    marked read-only.
    """

    __slots__ = ("lo", "hi")
    # make numpy defer mixed expressions to the reflected operators below
    __array_ufunc__ = None

    def __init__(self, lo, hi=None):
        lo = np.array(lo, dtype=float)
        hi = lo.copy() if hi is None else np.array(hi, dtype=float)
        lo, hi = np.broadcast_arrays(lo, hi)
        lo, hi = lo.copy(), hi.copy()
        if lo.size == 0:
            raise ValueError("interval arrays must be non-empty")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("interval bounds must be finite")
        if np.any(lo > hi):
            raise ValueError("empty interval: some lower bound exceeds its upper bound")
        lo.flags.writeable = False
        hi.flags.writeable = False
        self.lo = lo
        self.hi = hi

    @classmethod
    def _raw(cls, lo, hi) -> "IntervalArray":
        obj = object.__new__(cls)
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        lo.flags.writeable = False
        hi.flags.writeable = False
        obj.lo = lo
        obj.hi = hi
        return obj

    @classmethod
    def from_intervals(cls, items) -> "IntervalArray":
        items = list(items)
        return cls([iv.lo for iv in items], [iv.hi for iv in items])

    @property
    def shape(self):
        return self.lo.shape

    @property
    def ndim(self):
        return self.lo.ndim

    @property
    def size(self):
        return self.lo.size

    def __len__(self):
        return len(self.lo)

    @property
    def T(self) -> "IntervalArray":
        return IntervalArray._raw(self.lo.T, self.hi.T)

    @property
    def mid(self) -> np.ndarray:
        return 0.5 * self.lo + 0.5 * self.hi

    @property
    def rad(self) -> np.ndarray:
        return 0.5 * self.hi - 0.5 * self.lo

    @property
    def width(self) -> np.ndarray:
        return self.hi - self.lo

    def __getitem__(self, key):
        lo, hi = self.lo[key], self.hi[key]
        if np.ndim(lo) == 0:
            return Interval(lo, hi)
        return IntervalArray._raw(lo, hi)

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def contains(self, x) -> np.ndarray:
        """Elementwise membership test for a point array ``x``."""
        x = np.asarray(x, dtype=float)
        return (self.lo <= x) & (x <= self.hi)

    def subset(self, other: "IntervalArray") -> np.ndarray:
        other = _as_array(other)
        return (other.lo <= self.lo) & (self.hi <= other.hi)

    def intersect(self, other: "IntervalArray") -> "IntervalArray":
        other = _as_array(other)
        lo = np.maximum(self.lo, other.lo)
        hi = np.minimum(self.hi, other.hi)
        if np.any(lo > hi):
            raise IntervalError("intersection is empty")
        return IntervalArray._raw(lo, hi)

    def reshape(self, *shape) -> "IntervalArray":
        return IntervalArray._raw(self.lo.reshape(*shape), self.hi.reshape(*shape))

    def sum(self, axis=None) -> Union["IntervalArray", Interval]:
        """Sum with correctly rounded (``math.fsum``) outward bounds."""
        if axis is None:
            return Interval(_sum_down(self.lo.ravel()), _sum_up(self.hi.ravel()))
        lo = np.apply_along_axis(_sum_down, axis, self.lo)
        hi = np.apply_along_axis(_sum_up, axis, self.hi)
        _check_finite(lo, hi)
        return IntervalArray._raw(lo, hi)

    def mean(self) -> Interval:
        return div(self.sum(), float(self.size))

    def __repr__(self):
        return f"IntervalArray(lo={self.lo!r}, hi={self.hi!r})"

    def __neg__(self):
        return IntervalArray._raw(-self.hi, -self.lo)

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __pow__(self, n):
        return pow_int(self, n)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)


IntervalLike = Union[Interval, IntervalArray, Real, np.ndarray]


def _bounds(x):
    if isinstance(x, (Interval, IntervalArray)):
        return x.lo, x.hi
    if isinstance(x, np.ndarray):
        x = x.astype(float, copy=False)
        if not np.all(np.isfinite(x)):
            raise ValueError("point operands must be finite")
        return x, x
    x = float(x)
    if not math.isfinite(x):
        raise ValueError("point operands must be finite")
    return x, x


def _as_array(x) -> IntervalArray:
    if isinstance(x, IntervalArray):
        return x
    lo, hi = _bounds(x)
    return IntervalArray._raw(np.atleast_1d(lo), np.atleast_1d(hi))


def _wrap(lo, hi, *operands):
    if any(isinstance(op, (IntervalArray, np.ndarray)) for op in operands):
        return IntervalArray._raw(lo, hi)
    return Interval(lo, hi)


# --------------------------------------------------------------------------
# elementary operations
# --------------------------------------------------------------------------


def from_midrad(mid, rad):
    """Interval(s) containing ``[mid - rad, mid + rad]``.

    ``mid`` and ``rad`` may be scalars or arrays; arrays give an
    :class:`IntervalArray`.
    """
    m = np.asarray(mid, dtype=float)
    r = np.asarray(rad, dtype=float)
    if not (np.all(np.isfinite(m)) and np.all(np.isfinite(r))):
        raise ValueError("midpoint and radius must be finite")
    if np.any(r < 0):
        raise ValueError("radius must be non-negative")
    m, r = np.broadcast_arrays(m, r)
    lo, hi = _add_bounds(m, m, -r, r)
    if m.ndim == 0:
        return Interval(lo, hi)
    return IntervalArray._raw(lo, hi)


def add(x, y):
    """Containment-correct ``x + y``."""
    return _wrap(*_add_bounds(*_bounds(x), *_bounds(y)), x, y)


def sub(x, y):
    """Containment-correct ``x - y = [x.lo - y.hi, x.hi - y.lo]``."""
    return _wrap(*_sub_bounds(*_bounds(x), *_bounds(y)), x, y)


def mul(x, y):
    """``x * y`` as the outward-rounded hull of the four endpoint products."""
    return _wrap(*_mul_bounds(*_bounds(x), *_bounds(y)), x, y)


def div(x, y):
    """``x / y``; raises ``ZeroDivisionError`` when ``0`` lies in ``y``."""
    return _wrap(*_div_bounds(*_bounds(x), *_bounds(y)), x, y)


def pow_int(x, n: int):
    """Enclosure of ``{a**n : a in x}`` for a non-negative integer ``n``.

    Even powers of an interval straddling zero have lower bound 0, which is
    tighter than multiplying ``x`` by itself.
    """
    if isinstance(n, bool) or int(n) != n or n < 0:
        raise ValueError(f"exponent must be a non-negative integer, got {n!r}")
    lo, hi = _pow_bounds(*_bounds(x), int(n))
    return _wrap(lo, hi, x)


def sqrt(x):
    """Square root of ``x ∩ [0, inf)``."""
    return _wrap(*_sqrt_bounds(*_bounds(x)), x)


def matmul(a, b) -> IntervalArray:
    """Interval matrix product; either operand may be a point array."""
    A, B = _as_array(a), _as_array(b)
    vec_a, vec_b = A.ndim == 1, B.ndim == 1
    if vec_a:
        A = A.reshape(1, -1)
    if vec_b:
        B = B.reshape(-1, 1)
    if A.ndim != 2 or B.ndim != 2 or A.shape[1] != B.shape[0]:
        raise ValueError(f"shape mismatch for matmul: {A.shape} @ {B.shape}")
    lo, hi = _mul_bounds(
        A.lo[:, :, None], A.hi[:, :, None], B.lo[None, :, :], B.hi[None, :, :]
    )
    out = IntervalArray._raw(lo, hi).sum(axis=1)
    if vec_a and vec_b:
        return out.reshape(1)
    if vec_a:
        return out.reshape(-1)
    if vec_b:
        return out.reshape(-1)
    return out


def gram(psi) -> IntervalArray:
    """Enclosure of ``psi.T @ psi``; the diagonal uses squares, not products."""
    P = _as_array(psi)
    n = P.shape[1]
    G = matmul(P.T, P)
    lo, hi = G.lo.copy(), G.hi.copy()
    sq = pow_int(P, 2).sum(axis=0)
    idx = np.arange(n)
    lo[idx, idx] = sq.lo
    hi[idx, idx] = sq.hi
    # symmetrize by intersection; both triangles enclose the same sums
    lo = np.maximum(lo, lo.T)
    hi = np.minimum(hi, hi.T)
    return IntervalArray._raw(lo, hi)


# --------------------------------------------------------------------------
# verified linear solver
# --------------------------------------------------------------------------


def _inflate(X: IntervalArray, eps: float = 0.1) -> IntervalArray:
    w = X.hi - X.lo
    pad = eps * w + _TINY
    return IntervalArray._raw(X.lo - pad, X.hi + pad)


def solve_enclosure(A, b, max_iter: int = 50, refine: int = 10) -> IntervalArray:
    """Verified enclosure of the solution set of ``A x = b``.

    Returns a box containing ``{x : M x = v, M in A, v in b}``. The midpoint
    inverse ``R`` preconditions the system and a Krawczyk-type residual
    iteration with epsilon-inflation is run until the inclusion
    ``Z + C Y ⊂ int(Y)`` certifies the box, where ``Z = R (b - A x0)`` and
    ``C = I - R A``.

    Raises
    ------
    EnclosureError
        If the midpoint matrix is singular or the inclusion cannot be
        verified within ``max_iter`` iterations. An uncertified box is never
        returned.
    """
    A, b = _as_array(A), _as_array(b)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"A must be square, got shape {A.shape}")
    n = A.shape[0]
    if b.shape != (n,):
        raise ValueError(f"b must have shape ({n},), got {b.shape}")

    Am, bm = A.mid, b.mid
    try:
        R = np.linalg.inv(Am)
    except np.linalg.LinAlgError as exc:
        raise EnclosureError("midpoint matrix is singular") from exc
    if not np.all(np.isfinite(R)):
        raise EnclosureError("midpoint matrix is singular")
    x0 = R @ bm
    x0 = x0 + R @ (bm - Am @ x0)
    if not np.all(np.isfinite(x0)):
        raise EnclosureError("approximate solution is not finite")

    try:
        Z = matmul(R, sub(b, matmul(A, x0)))
        C = sub(np.eye(n), matmul(R, A))
    except OverflowError as exc:
        raise EnclosureError(str(exc)) from exc

    X = Z
    for _ in range(max_iter):
        Y = _inflate(X)
        X = add(Z, matmul(C, Y))
        if np.all(X.lo > Y.lo) and np.all(X.hi < Y.hi):
            break
    else:
        raise EnclosureError(
            f"could not verify an enclosure within {max_iter} iterations"
        )

    for _ in range(refine):
        Xn = add(Z, matmul(C, X)).intersect(X)
        if np.array_equal(Xn.lo, X.lo) and np.array_equal(Xn.hi, X.hi):
            break
        X = Xn
    return add(x0, X)
