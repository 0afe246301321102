"""NAR multilayer perceptron trained with Levenberg-Marquardt.

One tanh hidden layer and a linear output, fed with the last ``n_delays``
outputs. Inputs and targets are mapped to [-1, 1] before training.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .signal import split_fractions
from .validation import Prediction

__all__ = [
    "MlpNarModel",
    "TrainReport",
    "SweepResult",
    "lagged",
    "network_output",
    "network_jacobian",
    "lm_step",
    "fit_lm",
    "train_lm",
    "sweep_hidden",
    "predict_nn",
    "save_model",
    "load_model",
]

FORMAT_VERSION = 1


def lagged(y, n_delays: int) -> tuple[np.ndarray, np.ndarray]:
    """Delay matrix with rows ``[y(t-1), ..., y(t-n_delays)]`` and targets ``y(t)``."""
    y = np.asarray(y, dtype=float)
    n = y.size
    if n <= n_delays:
        raise ValueError(f"insufficient history: {n} samples for {n_delays} delays")
    X = np.column_stack([y[n_delays - d : n - d] for d in range(1, n_delays + 1)])
    return X, y[n_delays:].copy()


def _minmax(a):
    lo, hi = np.min(a, axis=0), np.max(a, axis=0)
    span = hi - lo
    center = 0.5 * (hi + lo)
    gain = np.where(span > 0, 2.0 / np.where(span > 0, span, 1.0), 1.0)
    return center, gain


def _n_params(n_in, hidden):
    return hidden * n_in + 2 * hidden + 1


def _unpack(w, n_in, hidden):
    i = hidden * n_in
    W1 = w[:i].reshape(hidden, n_in)
    b1 = w[i : i + hidden]
    w2 = w[i + hidden : i + 2 * hidden]
    b2 = w[i + 2 * hidden]
    return W1, b1, w2, b2


def network_output(w, Xn, hidden: int) -> np.ndarray:
    """Normalized network output for normalized inputs ``Xn``."""
    W1, b1, w2, b2 = _unpack(w, Xn.shape[1], hidden)
    return np.tanh(Xn @ W1.T + b1) @ w2 + b2


def network_jacobian(w, Xn, hidden: int) -> tuple[np.ndarray, np.ndarray]:
    """Output and its Jacobian with respect to the flat weight vector ``w``."""
    n_in = Xn.shape[1]
    W1, b1, w2, b2 = _unpack(w, n_in, hidden)
    h = np.tanh(Xn @ W1.T + b1)
    out = h @ w2 + b2
    dpre = (1.0 - h * h) * w2  # d out / d pre-activation
    J = np.empty((Xn.shape[0], _n_params(n_in, hidden)))
    J[:, : hidden * n_in] = (dpre[:, :, None] * Xn[:, None, :]).reshape(Xn.shape[0], -1)
    J[:, hidden * n_in : hidden * n_in + hidden] = dpre
    J[:, hidden * n_in + hidden : hidden * n_in + 2 * hidden] = h
    J[:, -1] = 1.0
    return out, J


def lm_step(J, e, mu: float) -> np.ndarray:
    """Damped Gauss-Newton step ``-(JᵀJ + μI)⁻¹ Jᵀe`` for residuals ``e``."""
    H = J.T @ J
    H[np.diag_indices_from(H)] += mu
    return -np.linalg.solve(H, J.T @ e)


@dataclass
class MlpNarModel:
    n_delays: int
    hidden: int
    weights: np.ndarray
    x_center: np.ndarray
    x_gain: np.ndarray
    y_center: float
    y_gain: float

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        self.x_center = np.asarray(self.x_center, dtype=float)
        self.x_gain = np.asarray(self.x_gain, dtype=float)
        if self.weights.size != _n_params(self.n_delays, self.hidden):
            raise ValueError("weight vector has the wrong length")
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("weights must be finite")
        if np.any(self.x_gain == 0) or self.y_gain == 0:
            raise ValueError("normalization gains must be non-zero")

    def normalize_inputs(self, X):
        return (np.asarray(X, dtype=float) - self.x_center) * self.x_gain

    def normalize_targets(self, t):
        return (np.asarray(t, dtype=float) - self.y_center) * self.y_gain

    def denormalize(self, tn):
        return np.asarray(tn, dtype=float) / self.y_gain + self.y_center

    def __call__(self, X) -> np.ndarray:
        """Network output in signal units for raw delay rows ``X``."""
        X = np.atleast_2d(X)
        return self.denormalize(network_output(self.weights, self.normalize_inputs(X), self.hidden))


@dataclass
class TrainReport:
    train_mse: list[float] = field(default_factory=list)
    val_mse: list[float] = field(default_factory=list)
    mu: list[float] = field(default_factory=list)
    stop_reason: str = ""
    best_epoch: int = 0

    @property
    def epochs(self) -> int:
        return len(self.train_mse) - 1


def fit_lm(
    X,
    t,
    hidden: int,
    X_val=None,
    t_val=None,
    seed: int = 0,
    max_epochs: int = 1000,
    mu: float = 1e-3,
    mu_dec: float = 0.1,
    mu_inc: float = 10.0,
    mu_max: float = 1e10,
    max_fail: int = 6,
    goal: float = 0.0,
    min_grad: float = 1e-7,
) -> tuple[MlpNarModel, TrainReport]:
    """Train a one-hidden-layer network on delay rows ``X`` and targets ``t``.

    Full-batch Levenberg-Marquardt on the sum of squared normalized errors.
    ``mu`` shrinks by ``mu_dec`` after an accepted step and grows by
    ``mu_inc`` after a rejected one. With validation data, training stops
    after ``max_fail`` consecutive epochs without beating the best
    validation error and the weights of the best validation epoch are
    returned. MSE values in the report are in signal units.

    Stop reasons: ``goal``, ``min_grad``, ``validation``, ``mu_max``,
    ``max_epochs``, ``non_finite``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    t = np.asarray(t, dtype=float)
    if hidden < 1:
        raise ValueError("hidden must be >= 1")
    n_in = X.shape[1]
    x_center, x_gain = _minmax(X)
    (y_center,), (y_gain,) = _minmax(t[:, None])
    rng = np.random.default_rng(seed)
    b_in, b_out = 1.0 / math.sqrt(n_in), 1.0 / math.sqrt(hidden)
    w = np.concatenate(
        [
            rng.uniform(-b_in, b_in, hidden * n_in + hidden),
            rng.uniform(-b_out, b_out, hidden + 1),
        ]
    )
    model = MlpNarModel(n_in, hidden, w, x_center, x_gain, float(y_center), float(y_gain))
    Xn, tn = model.normalize_inputs(X), model.normalize_targets(t)
    has_val = X_val is not None and t_val is not None
    if has_val:
        Xvn = model.normalize_inputs(np.atleast_2d(X_val))
        tvn = model.normalize_targets(t_val)
    to_signal = float(1.0 / (y_gain * y_gain))

    def val_mse(weights):
        ev = network_output(weights, Xvn, hidden) - tvn
        return float(ev @ ev) / ev.size * to_signal

    report = TrainReport()
    out, J = network_jacobian(w, Xn, hidden)
    e = out - tn
    sse = float(e @ e)
    if not math.isfinite(sse):
        report.stop_reason = "non_finite"
        return model, report
    report.train_mse.append(sse / e.size * to_signal)
    report.mu.append(mu)
    best_w, best_val, fails = w.copy(), math.inf, 0
    if has_val:
        best_val = val_mse(w)
        report.val_mse.append(best_val)

    for epoch in range(1, max_epochs + 1):
        g = J.T @ e
        if float(np.linalg.norm(g)) < min_grad:
            report.stop_reason = "min_grad"
            break
        H = J.T @ J
        accepted = False
        while mu <= mu_max:
            try:
                step = -np.linalg.solve(H + mu * np.eye(H.shape[0]), g)
            except np.linalg.LinAlgError:
                mu *= mu_inc
                continue
            w_try = w + step
            out_try, J_try = network_jacobian(w_try, Xn, hidden)
            e_try = out_try - tn
            sse_try = float(e_try @ e_try)
            if math.isfinite(sse_try) and sse_try < sse:
                w, out, J, e, sse = w_try, out_try, J_try, e_try, sse_try
                mu *= mu_dec
                accepted = True
                break
            mu *= mu_inc
        if not accepted:
            report.stop_reason = "mu_max"
            break
        report.train_mse.append(sse / e.size * to_signal)
        report.mu.append(mu)
        if has_val:
            v = val_mse(w)
            report.val_mse.append(v)
            if not math.isfinite(v):
                report.stop_reason = "non_finite"
                break
            if v < best_val:
                best_w, best_val, fails = w.copy(), v, 0
                report.best_epoch = epoch
            else:
                fails += 1
                if fails >= max_fail:
                    report.stop_reason = "validation"
                    break
        else:
            best_w = w.copy()
            report.best_epoch = epoch
        if report.train_mse[-1] <= goal:
            report.stop_reason = "goal"
            break
    else:
        report.stop_reason = "max_epochs"

    model.weights = best_w
    return model, report


def train_lm(
    y_train,
    y_val=None,
    hidden: int = 10,
    seed: int = 0,
    max_epochs: int = 1000,
    n_delays: int = 5,
    **options,
) -> tuple[MlpNarModel, TrainReport]:
    """Train a NAR network on a series, early-stopping on ``y_val`` if given."""
    y_train = np.asarray(y_train, dtype=float)
    if y_train.size <= n_delays + 10:
        raise ValueError(f"series too short: {y_train.size} samples for {n_delays} delays")
    X, t = lagged(y_train, n_delays)
    X_val = t_val = None
    if y_val is not None:
        X_val, t_val = lagged(y_val, n_delays)
    return fit_lm(X, t, hidden, X_val, t_val, seed=seed, max_epochs=max_epochs, **options)


@dataclass
class SweepResult:
    model: MlpNarModel
    report: TrainReport
    table: list[dict]

    @property
    def hidden(self) -> int:
        return self.model.hidden


def sweep_hidden(
    y,
    hidden_range=range(10, 31),
    seed: int = 0,
    n_delays: int = 5,
    fractions=(0.6, 0.2, 0.2),
    max_epochs: int = 1000,
    **options,
) -> SweepResult:
    """Train one network per hidden size and keep the best on validation MSE.

    The delay rows of ``y`` are split contiguously into training,
    validation (early stopping and selection) and test parts.
    """
    sizes = list(hidden_range)
    if not sizes:
        raise ValueError("hidden_range is empty")
    X, t = lagged(y, n_delays)
    tr, va, te = split_fractions(len(t), fractions)
    seeds = np.random.default_rng(seed).integers(0, 2**31 - 1, size=len(sizes))
    table, best = [], None
    for h, s in zip(sizes, seeds):
        try:
            model, report = fit_lm(
                X[tr], t[tr], h, X[va], t[va], seed=int(s), max_epochs=max_epochs, **options
            )
        except (np.linalg.LinAlgError, ValueError) as exc:
            table.append({"hidden": h, "seed": int(s), "stop_reason": f"failed: {exc}"})
            continue
        if not report.val_mse or not math.isfinite(report.val_mse[report.best_epoch]):
            table.append({"hidden": h, "seed": int(s), "stop_reason": report.stop_reason})
            continue
        err_te = model(X[te]) - t[te]
        row = {
            "hidden": h,
            "seed": int(s),
            "train_mse": report.train_mse[report.best_epoch],
            "val_mse": report.val_mse[report.best_epoch],
            "test_mse": float(err_te @ err_te) / err_te.size,
            "epochs": report.epochs,
            "best_epoch": report.best_epoch,
            "stop_reason": report.stop_reason,
        }
        table.append(row)
        if best is None or row["val_mse"] < best[2]["val_mse"]:
            best = (model, report, row)
    if best is None:
        raise RuntimeError("every training run in the sweep failed")
    return SweepResult(model=best[0], report=best[1], table=table)


def predict_nn(model: MlpNarModel, y, mode: str = "one-step") -> Prediction:
    """One-step (measured delays) or free-run (fed-back outputs) prediction.

    Instants run from ``n_delays`` to the end of ``y``.
    """
    y = np.asarray(y, dtype=float)
    d = model.n_delays
    if y.size <= d:
        raise ValueError(f"insufficient history: {y.size} samples for {d} delays")
    instants = np.arange(d, y.size)
    if mode == "one-step":
        X, _ = lagged(y, d)
        return Prediction(values=model(X), instants=instants, horizon=1)
    if mode == "free-run":
        buf = list(y[:d])
        for _ in instants:
            buf.append(float(model(np.array(buf[: -d - 1 : -1]))[0]))
        return Prediction(values=np.array(buf[d:]), instants=instants, horizon=None)
    raise ValueError(f"unknown mode {mode!r}; use 'one-step' or 'free-run'")


def save_model(model: MlpNarModel, path) -> None:
    """Write a versioned plain-text weight file."""
    lines = [
        f"narinterval-mlp {FORMAT_VERSION}",
        f"n_delays {model.n_delays}",
        f"hidden {model.hidden}",
        "x_center " + " ".join(repr(float(v)) for v in model.x_center),
        "x_gain " + " ".join(repr(float(v)) for v in model.x_gain),
        f"y_center {model.y_center!r}",
        f"y_gain {model.y_gain!r}",
        "weights",
        *(repr(float(v)) for v in model.weights),
    ]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_model(path) -> MlpNarModel:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    magic, version = lines[0].split()
    if magic != "narinterval-mlp" or int(version) != FORMAT_VERSION:
        raise ValueError(f"unsupported weight file header: {lines[0]!r}")
    header = {}
    i = 1
    while lines[i] != "weights":
        key, *vals = lines[i].split()
        header[key] = vals
        i += 1
    return MlpNarModel(
        n_delays=int(header["n_delays"][0]),
        hidden=int(header["hidden"][0]),
        weights=np.array([float(v) for v in lines[i + 1 :] if v.strip()]),
        x_center=np.array([float(v) for v in header["x_center"]]),
        x_gain=np.array([float(v) for v in header["x_gain"]]),
        y_center=float(header["y_center"][0]),
        y_gain=float(header["y_gain"][0]),
    )
