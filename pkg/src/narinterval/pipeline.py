"""End-to-end identification run: data to point model, interval model,
neural comparison and report files.

The run is a fixed sequence of named stages. Every artifact except
``timing.json`` depends only on the configuration and the input, so two
runs with the same settings produce byte-identical files.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import neural
from .estimation import Model, aic_select, err_rank, interval_ls_estimate
from .interval import from_midrad
from .signal import (
    choose_decimation,
    decimate,
    first_minimum,
    read_signal_csv,
    split,
    working_lag,
    write_signal_csv,
)
from .terms import Term, build_regressors, generate_candidates
from .validation import (
    DIVERGENCE_LIMIT,
    predict_k_steps,
    residual_diagnostics,
    rmse,
    rmse_interval,
    write_band_csv,
    write_residual_csv,
)

__all__ = [
    "SCHEMA_VERSION",
    "STAGES",
    "PipelineConfig",
    "PipelineError",
    "RunReport",
    "SimulationDivergedError",
    "DEFAULT_SYSTEM",
    "generate_synthetic",
    "run_pipeline",
]

SCHEMA_VERSION = 1
MIN_DECIMATED_SAMPLES = 200

STAGES = (
    "load_split",
    "autocovariance",
    "decimate",
    "candidates",
    "structure_selection",
    "err_table",
    "point_prediction",
    "residuals",
    "rmse",
    "interval_data",
    "interval_estimation",
    "interval_prediction",
    "neural",
    "interval_rmse",
)

# stable, mildly nonlinear oscillator with an offset; ~20 dB SNR at sigma=1
DEFAULT_SYSTEM = (
    (Term(()), Term((1,)), Term((2,)), Term((1, 1, 1))),
    (0.25, 1.9, -0.98, -0.0007),
)


class PipelineError(RuntimeError):
    """A stage failed; ``stage`` names it."""

    def __init__(self, stage: str, message: str):
        self.stage = stage
        super().__init__(f"stage '{stage}' failed: {message}")


class SimulationDivergedError(ValueError):
    pass


@dataclass
class PipelineConfig:
    input: str = ""
    decimal: str = "."
    split: float = 0.5
    degree: int = 4
    ny: int = 4
    tau_max: int = 200
    horizon: int = 2
    radius: float = 1e-6
    residual_lags: int = 25
    max_aic_terms: int = 30
    neural: bool = True
    delays: int = 5
    hidden_min: int = 10
    hidden_max: int = 30
    max_epochs: int = 1000
    seed: int = 0
    out_dir: str = "narinterval-out"

    def __post_init__(self):
        if not self.radius >= 0 or not math.isfinite(self.radius):
            raise ValueError(f"radius must be finite and >= 0, got {self.radius}")
        if not 0 < self.split < 1:
            raise ValueError(f"split must lie in (0, 1), got {self.split}")
        for name in ("degree", "ny", "horizon", "tau_max", "residual_lags", "max_aic_terms",
                     "delays", "hidden_min", "max_epochs"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.hidden_max < self.hidden_min:
            raise ValueError("hidden_max must be >= hidden_min")
        if self.decimal not in (".", ","):
            raise ValueError("decimal must be '.' or ','")

    @classmethod
    def from_mapping(cls, values: dict) -> "PipelineConfig":
        """Build from string or typed values, ignoring ``None`` entries."""
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, val in values.items():
            if val is None:
                continue
            key = key.replace("-", "_")
            if key not in types:
                raise ValueError(f"unknown configuration key {key!r}")
            kwargs[key] = _coerce(types[key], val)
        return cls(**kwargs)

    @staticmethod
    def read_file(path) -> dict:
        """``key = value`` lines; ``#`` starts a comment."""
        out = {}
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            key, val = (s.strip() for s in line.split("=", 1))
            out[key] = val
        return out


def _coerce(typ, val):
    if not isinstance(val, str):
        return val
    if typ in ("bool", bool):
        low = val.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {val!r}")
    if typ in ("int", int):
        return int(val)
    if typ in ("float", float):
        return float(val)
    return val


@dataclass
class RunReport:
    config: dict
    data: dict = field(default_factory=dict)
    decimation: dict = field(default_factory=dict)
    structure: dict = field(default_factory=dict)
    model: dict = field(default_factory=dict)
    rmse: dict = field(default_factory=dict)
    residuals: dict = field(default_factory=dict)
    neural: dict | None = None
    stages: list = field(default_factory=list)
    timing: dict = field(default_factory=dict)
    status: str = "running"
    error: dict | None = None
    # in-memory results for programmatic use; not serialized
    point_model: Model | None = None
    predictions: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "status": self.status,
            "error": self.error,
            "stages": self.stages,
            "config": self.config,
            "data": self.data,
            "decimation": self.decimation,
            "structure": self.structure,
            "model": self.model,
            "rmse": self.rmse,
            "residuals": self.residuals,
            "neural": self.neural,
        }

    def check_containment(self) -> None:
        """Raise if an interval result misses its point counterpart."""
        theta = self.model.get("theta")
        theta_int = self.model.get("theta_interval")
        if theta is not None and theta_int is not None:
            for term, v, (lo, hi) in zip(self.model["terms"], theta, theta_int):
                if not lo <= v <= hi:
                    raise AssertionError(f"parameter of {term}: {v} not in [{lo}, {hi}]")
        for key, point in self.rmse.items():
            if key.startswith("point_k"):
                band = self.rmse.get("interval_k" + key[len("point_k"):])
                if band is not None and not band[0] <= point <= band[1]:
                    raise AssertionError(f"RMSE {key}: {point} not in {band}")
        for k, pred in self.predictions.items():
            if isinstance(k, str) and k.startswith("interval_"):
                point = self.predictions.get("point_" + k[len("interval_"):])
                if point is not None and not np.all(pred.values.contains(point.values)):
                    raise AssertionError(f"{k} does not contain the point prediction")


def _json_dump(obj, path: Path):
    path.write_text(json.dumps(obj, indent=2, allow_nan=False) + "\n", encoding="utf-8")


def _finite_or_none(v):
    return float(v) if math.isfinite(v) else None


def _write_structure_csv(path, ranking, aic_trace, n_selected):
    cum = ranking.cumulative
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rank", "term", "err", "cumulative_err", "aic", "selected"])
        for i, (term, e) in enumerate(zip(ranking.ranked_terms(), ranking.err)):
            a = repr(float(aic_trace[i])) if i < len(aic_trace) and math.isfinite(aic_trace[i]) else ""
            w.writerow([i + 1, str(term), repr(float(e)), repr(float(cum[i])), a, int(i < n_selected)])


def _write_sweep_csv(path, table):
    cols = ["hidden", "seed", "train_mse", "val_mse", "test_mse", "epochs", "best_epoch", "stop_reason"]
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for row in table:
            w.writerow([repr(row[c]) if isinstance(row.get(c), float) else row.get(c, "") for c in cols])


def run_pipeline(cfg: PipelineConfig, y=None) -> RunReport:
    """Run every stage in order and write the artifacts to ``cfg.out_dir``.

    ``y`` bypasses reading ``cfg.input``. On failure the partial report is
    written with ``status = "failed"`` next to an empty ``FAILED`` marker
    and a :class:`PipelineError` naming the stage is raised.
    """
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for stale in ("FAILED", "prediction_band.csv", "residuals.csv", "structure.csv", "neural_sweep.csv"):
        (out / stale).unlink(missing_ok=True)
    report = RunReport(config=dataclasses.asdict(cfg))
    state = {}
    stage_fns = {
        "load_split": _stage_load_split,
        "autocovariance": _stage_autocovariance,
        "decimate": _stage_decimate,
        "candidates": _stage_candidates,
        "structure_selection": _stage_structure,
        "err_table": _stage_err_table,
        "point_prediction": _stage_point_prediction,
        "residuals": _stage_residuals,
        "rmse": _stage_rmse,
        "interval_data": _stage_interval_data,
        "interval_estimation": _stage_interval_estimation,
        "interval_prediction": _stage_interval_prediction,
        "neural": _stage_neural,
        "interval_rmse": _stage_interval_rmse,
    }
    t_start = time.perf_counter()
    stage = "report"
    try:
        for stage in STAGES:
            t0 = time.perf_counter()
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                stage_fns[stage](cfg, state, report, out, y)
            report.stages.append(
                {"stage": stage, "warnings": sorted({str(w.message) for w in caught})}
            )
            report.timing[stage] = time.perf_counter() - t0
        stage = "report"
        report.check_containment()
        report.status = "ok"
    except Exception as exc:
        report.status = "failed"
        report.error = {"stage": stage, "type": type(exc).__name__, "message": str(exc)}
        report.timing["total"] = time.perf_counter() - t_start
        _json_dump(report.to_dict(), out / "report.json")
        _json_dump(report.timing, out / "timing.json")
        (out / "FAILED").write_text(f"{stage}: {exc}\n", encoding="utf-8")
        if isinstance(exc, PipelineError):
            raise
        raise PipelineError(stage, str(exc)) from exc
    report.timing["total"] = time.perf_counter() - t_start
    _json_dump(report.to_dict(), out / "report.json")
    _json_dump(report.timing, out / "timing.json")
    return report


def _stage_load_split(cfg, state, report, out, y):
    raw = np.asarray(y, dtype=float) if y is not None else read_signal_csv(cfg.input, cfg.decimal)
    min_samples = cfg.ny + cfg.horizon + 1
    ident, valid = split(raw, cfg.split, min_samples=min_samples)
    state.update(raw=raw, ident=ident, valid=valid)
    report.data = {"samples": int(raw.size), "identification": int(ident.size), "validation": int(valid.size)}


def _stage_autocovariance(cfg, state, report, out, y):
    ident = state["ident"]
    tau_max = min(cfg.tau_max, ident.size - 1)
    if tau_max < 2:
        raise ValueError("too few samples for the autocovariance")
    if tau_max < cfg.tau_max:
        warnings.warn(f"tau_max reduced to {tau_max} for {ident.size} identification samples")
    tau_m, lin, nonlin = working_lag(ident, tau_max)
    state["tau_m"] = tau_m
    report.decimation = {
        "tau_max": int(tau_max),
        "tau_m": int(tau_m),
        "first_min_linear": int(_first_min_quiet(lin)),
        "first_min_nonlinear": int(_first_min_quiet(nonlin)),
    }


def _first_min_quiet(curve):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return first_minimum(curve)


def _stage_decimate(cfg, state, report, out, y):
    delta = choose_decimation(state["tau_m"])
    ident, valid = decimate(state["ident"], delta), decimate(state["valid"], delta)
    need = cfg.ny + cfg.horizon + 1
    if min(ident.size, valid.size) < need:
        raise ValueError(
            f"too few samples after decimation by {delta}: {ident.size}/{valid.size}, need {need}"
        )
    if ident.size + valid.size < MIN_DECIMATED_SAMPLES:
        warnings.warn(f"only {ident.size + valid.size} samples after decimation")
    state.update(ident=ident, valid=valid, delta=delta)
    report.decimation["delta"] = int(delta)
    report.decimation["identification"] = int(ident.size)
    report.decimation["validation"] = int(valid.size)


def _stage_candidates(cfg, state, report, out, y):
    cands = generate_candidates(cfg.degree, cfg.ny)
    state["candidates"] = cands
    report.structure["candidates"] = len(cands)


def _stage_structure(cfg, state, report, out, y):
    psi, target = build_regressors(state["candidates"], state["ident"], cfg.ny)
    ranking = err_rank(psi, target, state["candidates"])
    model = aic_select(ranking, psi, target, cfg.ny, max_terms=cfg.max_aic_terms)
    cols = ranking.order[: model.selected_size]
    state.update(ranking=ranking, model=model, fit_residuals=target - psi[:, cols] @ model.theta)
    report.point_model = model
    report.structure["aic_trace"] = [_finite_or_none(v) if not math.isnan(v) else None for v in model.aic_trace]
    report.structure["selected_size"] = model.selected_size


def _stage_err_table(cfg, state, report, out, y):
    model, ranking = state["model"], state["ranking"]
    report.structure["err_table"] = [
        {"term": str(t), "err": float(e)} for t, e in zip(model.terms, model.err)
    ]
    report.structure["err_total"] = float(math.fsum(model.err))
    _write_structure_csv(out / "structure.csv", ranking, model.aic_trace, model.selected_size)
    report.model = {"ny": cfg.ny, "terms": [str(t) for t in model.terms],
                    "theta": [float(v) for v in model.theta]}


def _horizons(cfg):
    return sorted({1, cfg.horizon})


def _stage_point_prediction(cfg, state, report, out, y):
    for k in _horizons(cfg):
        report.predictions[f"point_k{k}"] = predict_k_steps(state["model"], state["valid"], k)


def _stage_residuals(cfg, state, report, out, y):
    # estimation residuals ξ = y - Ψθ on the identification data
    xi = state["fit_residuals"]
    lags = min(cfg.residual_lags, xi.size - 1)
    diag = residual_diagnostics(xi, lags)
    write_residual_csv(out / "residuals.csv", diag)
    report.residuals = {
        "source": "identification",
        "lags": int(lags),
        "band": diag.band,
        "fraction_inside": diag.fraction_inside(),
    }


def _stage_rmse(cfg, state, report, out, y):
    ybar = float(np.mean(state["ident"]))
    state["ybar"] = ybar
    for k in _horizons(cfg):
        report.rmse[f"point_k{k}"] = rmse(report.predictions[f"point_k{k}"], state["valid"], ybar)


def _stage_interval_data(cfg, state, report, out, y):
    state["ident_int"] = from_midrad(state["ident"], cfg.radius)
    state["valid_int"] = from_midrad(state["valid"], cfg.radius)
    report.model["radius"] = cfg.radius


def _stage_interval_estimation(cfg, state, report, out, y):
    model = state["model"]
    psi_int, target_int = build_regressors(model.terms, state["ident_int"], cfg.ny)
    model.theta_interval = interval_ls_estimate(psi_int, target_int)
    report.model["theta_interval"] = [
        [float(lo), float(hi)] for lo, hi in zip(model.theta_interval.lo, model.theta_interval.hi)
    ]


def _stage_interval_prediction(cfg, state, report, out, y):
    for k in _horizons(cfg):
        report.predictions[f"interval_k{k}"] = predict_k_steps(state["model"], state["valid_int"], k)
    k = cfg.horizon
    point, band = report.predictions[f"point_k{k}"], report.predictions[f"interval_k{k}"]
    write_band_csv(out / "prediction_band.csv", point.instants, state["valid"][point.instants],
                   point.values, band.values)


def _stage_neural(cfg, state, report, out, y):
    if not cfg.neural:
        report.neural = None
        return
    sweep = neural.sweep_hidden(
        state["ident"],
        hidden_range=range(cfg.hidden_min, cfg.hidden_max + 1),
        seed=cfg.seed,
        n_delays=cfg.delays,
        max_epochs=cfg.max_epochs,
    )
    _write_sweep_csv(out / "neural_sweep.csv", sweep.table)
    pred = neural.predict_nn(sweep.model, state["valid"], "one-step")
    report.predictions["neural_k1"] = pred
    report.neural = {
        "delays": cfg.delays,
        "hidden": sweep.hidden,
        "val_mse": sweep.report.val_mse[sweep.report.best_epoch],
        "stop_reason": sweep.report.stop_reason,
        "rmse_k1": rmse(pred, state["valid"], state["ybar"]),
    }
    neural.save_model(sweep.model, out / "neural_model.txt")


def _stage_interval_rmse(cfg, state, report, out, y):
    ybar = state["ident_int"].mean()
    for k in _horizons(cfg):
        r = rmse_interval(report.predictions[f"interval_k{k}"], state["valid_int"], ybar)
        report.rmse[f"interval_k{k}"] = [float(r.lo), float(r.hi)]


def generate_synthetic(
    terms=DEFAULT_SYSTEM[0],
    theta=DEFAULT_SYSTEM[1],
    sigma: float = 1.0,
    n: int = 2000,
    seed: int = 0,
    burn_in: int = 500,
    path=None,
    truth_path=None,
) -> np.ndarray:
    """Simulate ``y(k) = Σ θ_j term_j(k) + e(k)`` with Gaussian ``e`` of std ``sigma``.

    The recursion starts from zeros; the first ``burn_in`` samples are
    dropped. Raises :class:`SimulationDivergedError` when a value leaves
    ``±DIVERGENCE_LIMIT``. Optionally writes the series as CSV and the
    generating system as JSON.
    """
    terms = [t if isinstance(t, Term) else Term.parse(t) for t in terms]
    theta = np.asarray(theta, dtype=float)
    if len(terms) != theta.size:
        raise ValueError("number of terms and coefficients differ")
    if sigma < 0 or n < 1 or burn_in < 0:
        raise ValueError("sigma, n and burn_in must be non-negative (n >= 1)")
    rng = np.random.default_rng(seed)
    total = n + burn_in
    noise = sigma * rng.standard_normal(total)
    ny = max((t.max_lag for t in terms), default=0)
    buf = np.zeros(total + ny)
    powers = [t.powers() for t in terms]
    for k in range(ny, total + ny):
        acc = noise[k - ny]
        for th, pw in zip(theta, powers):
            v = th
            for lag, p in pw:
                v *= buf[k - lag] ** p
            acc += v
        if not math.isfinite(acc) or abs(acc) > DIVERGENCE_LIMIT:
            raise SimulationDivergedError(f"simulation diverged at step {k - ny}")
        buf[k] = acc
    y = buf[ny + burn_in :].copy()
    if path is not None:
        write_signal_csv(path, y)
    if truth_path is not None:
        _json_dump(
            {
                "terms": [str(t) for t in terms],
                "theta": [float(v) for v in theta],
                "sigma": float(sigma),
                "n": int(n),
                "seed": int(seed),
                "burn_in": int(burn_in),
            },
            Path(truth_path),
        )
    return y
