"""Accuracy and calibration metrics for bundle solutions."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats

from . import models, nn, training

RE_FLOOR = 1e-12
COVERAGE_LEVELS = np.round(np.arange(1, 100) / 100.0, 2)
DECILES = np.arange(1, 10) / 10.0


def relative_errors(pred, truth) -> np.ndarray:
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {truth.shape}")
    return np.abs(pred - truth) / np.maximum(np.abs(truth), RE_FLOOR)


def median_relative_error(pred, truth) -> float:
    return float(np.median(relative_errors(pred, truth)))


def decile_table(pred, truth) -> np.ndarray:
    """Q10, Q20, ..., Q100 of the relative error (Q100 is the maximum)."""
    re = relative_errors(pred, truth).ravel()
    if re.size == 0:
        raise ValueError("no points to summarise")
    return np.quantile(re, np.arange(1, 11) / 10.0)


def mean_residual_field(spec: models.ModelSpec, nets, x, params) -> np.ndarray:
    """Residual of the averaged solution ``mean_i u_i`` of one or more networks; (B, n)."""
    nets = [nets] if isinstance(nets, nn.NetworkParams) else list(nets)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    params = models._as_rows(params, spec.n_params, len(x))
    u = np.zeros((len(x), spec.state_dim))
    du = np.zeros_like(u)
    for net in nets:
        ui, dui = training.evaluate(spec, net, x, params, derivative=True)
        u += ui / len(nets)
        du += dui / len(nets)
    return du - models.rhs(spec, x, u, params)


def median_residual(spec: models.ModelSpec, nets, x, params) -> float:
    """Median absolute residual over points and components of the mean solution."""
    return float(np.median(np.abs(mean_residual_field(spec, nets, x, params))))


def _check_std(std, mean):
    std = np.broadcast_to(np.asarray(std, dtype=float), np.shape(mean))
    if np.any(std < 0) or not np.all(np.isfinite(std)):
        raise ValueError("predictive std must be finite and non-negative")
    return std


def coverage_curve(mean, std, truth, levels=COVERAGE_LEVELS) -> np.ndarray:
    """Empirical coverage of central Gaussian intervals at each nominal level."""
    mean = np.asarray(mean, dtype=float)
    std = _check_std(std, mean).ravel()
    mean = mean.ravel()
    truth = np.asarray(truth, dtype=float).ravel()
    z = stats.norm.ppf(0.5 + 0.5 * np.asarray(levels))
    err = np.abs(truth - mean)
    return np.array([np.mean(err <= zj * std) for zj in z])


def miscalibration_area(mean, std, truth, levels=COVERAGE_LEVELS) -> tuple[float, float]:
    """``(MA, RMS calibration error)`` over central intervals at ``levels``."""
    gap = coverage_curve(mean, std, truth, levels) - np.asarray(levels)
    return float(np.mean(np.abs(gap))), float(np.sqrt(np.mean(gap ** 2)))


def gaussian_nll(mean, std, truth) -> float:
    """Mean Gaussian negative log density; ``inf`` if any std is zero (no density)."""
    mean, truth = np.asarray(mean, float), np.asarray(truth, float)
    std = _check_std(std, mean)
    if np.any(std == 0):
        return float("inf")
    z = (truth - mean) / std
    return float(np.mean(0.5 * np.log(2 * np.pi) + np.log(std) + 0.5 * z * z))


def gaussian_crps(mean, std, truth) -> float:
    """Mean closed-form CRPS of ``N(mean, std^2)`` at the observed ``truth``.

    A zero std is a point mass, whose CRPS is the absolute error.
    """
    mean, truth = np.asarray(mean, float), np.asarray(truth, float)
    std = _check_std(std, mean)
    safe = np.where(std > 0, std, 1.0)
    z = (truth - mean) / safe
    crps = safe * (z * (2 * stats.norm.cdf(z) - 1) + 2 * stats.norm.pdf(z) - 1 / np.sqrt(np.pi))
    return float(np.mean(np.where(std > 0, crps, np.abs(truth - mean))))


def interval_score(mean, std, truth, alpha: float = 0.05) -> float:
    """Mean interval score of the central ``1 - alpha`` Gaussian interval."""
    mean, truth = np.asarray(mean, float), np.asarray(truth, float)
    std = _check_std(std, mean)
    half = stats.norm.ppf(1 - alpha / 2) * std
    lo, hi = mean - half, mean + half
    score = (hi - lo) + 2 / alpha * np.maximum(lo - truth, 0) + 2 / alpha * np.maximum(truth - hi, 0)
    return float(np.mean(score))


def check_score(mean, std, truth, taus=DECILES) -> float:
    """Pinball loss of the Gaussian quantiles, averaged over ``taus`` and points."""
    mean, truth = np.asarray(mean, float), np.asarray(truth, float)
    std = _check_std(std, mean)
    total = 0.0
    for tau in taus:
        q = mean + stats.norm.ppf(tau) * std
        d = truth - q
        total += np.mean(np.maximum(tau * d, (tau - 1) * d))
    return float(total / len(taus))


def proper_scores(mean, std, truth) -> dict:
    return {"nll": gaussian_nll(mean, std, truth), "crps": gaussian_crps(mean, std, truth),
            "sharpness": float(np.mean(_check_std(std, mean))),
            "interval": interval_score(mean, std, truth), "check": check_score(mean, std, truth)}


def mae(pred, truth) -> float:
    return float(np.mean(np.abs(np.asarray(pred) - np.asarray(truth))))


def rmse(pred, truth) -> float:
    return float(np.sqrt(np.mean((np.asarray(pred) - np.asarray(truth)) ** 2)))


@dataclass
class EvalReport:
    region: str
    n_points: int
    median_re: float
    median_residual: float
    mae: float
    rmse: float
    quantiles: list
    miscal_area: float | None = None
    rms_cal: float | None = None
    sharpness: float | None = None
    nll: float | None = None
    crps: float | None = None
    interval: float | None = None
    check: float | None = None

    def to_dict(self) -> dict:
        """Plain dict; non-finite scores become ``None`` so the result is strict JSON."""
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, float) and not np.isfinite(v):
                d[k] = None
        return d


def make_report(region: str, pred_mean, truth, med_residual: float, pred_std=None) -> EvalReport:
    pred_mean = np.asarray(pred_mean, float)
    rep = EvalReport(region, int(pred_mean.shape[0]), median_relative_error(pred_mean, truth),
                     float(med_residual), mae(pred_mean, truth), rmse(pred_mean, truth),
                     decile_table(pred_mean, truth).tolist())
    if pred_std is not None:
        rep.miscal_area, rep.rms_cal = miscalibration_area(pred_mean, pred_std, truth)
        for k, v in proper_scores(pred_mean, pred_std, truth).items():
            setattr(rep, k, v)
    return rep
