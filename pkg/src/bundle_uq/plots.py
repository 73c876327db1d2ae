"""Static SVG figures for a run directory."""
from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from . import bayes, inverse, metrics, pipeline  # noqa: E402

KINDS = ("solution", "bounds", "calibration", "corner")


def _save(fig, path: Path) -> Path:
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path


def _example_params(spec, n: int = 3) -> np.ndarray:
    box = spec.bundle_box()
    frac = np.linspace(0.2, 0.8, n)
    return spec.full_params(box[:, 0] + frac[:, None] * (box[:, 1] - box[:, 0]))


def plot_solution(run: Path, cfg: dict) -> Path:
    det = pipeline.load_det(run)
    spec = det.spec
    post = like = None
    if cfg["method"] != "none" and (run / "posterior.json").exists():
        post = pipeline.load_posterior(run, spec)
        like = pipeline._likelihood(cfg, det)
    lo, hi = spec.x_range
    x = np.linspace(lo, hi, 121)
    fig, axes = plt.subplots(spec.state_dim, 1, figsize=(6, 2.6 * spec.state_dim), squeeze=False)
    rng = pipeline.stream(cfg["seed"], "eval")
    for p in _example_params(spec):
        rows = np.tile(p, (len(x), 1))
        ref = pipeline.truth_values(spec, x, rows, cfg["eval"]["truth"])
        if post is not None:
            pred = bayes.predictive(post, spec, like, x, rows, cfg["eval"]["m"], rng)
            mean, std = pred.mean, pred.std
        else:
            mean, std = det.predict(x, rows), None
        label = ", ".join(f"{n}={p[i]:.2f}" for i, n in enumerate(spec.param_names)
                          if n in spec.bundle_param_names)
        for k, ax in enumerate(axes[:, 0]):
            line, = ax.plot(x, mean[:, k], lw=1.2, label=label)
            if std is not None:
                ax.fill_between(x, mean[:, k] - 2 * std[:, k], mean[:, k] + 2 * std[:, k],
                                color=line.get_color(), alpha=0.25, lw=0)
            ax.plot(x, ref[:, k], ls=":", color="k", lw=1)
    for k, ax in enumerate(axes[:, 0]):
        ax.set_ylabel(spec.state_names[k])
    axes[-1, 0].set_xlabel(spec.variable)
    axes[0, 0].legend(fontsize=7)
    fig.tight_layout()
    return _save(fig, run / "solution.svg")


def plot_bounds(run: Path, cfg: dict) -> Path:
    det = pipeline.load_det(run)
    spec = det.spec
    tables = pipeline.load_bounds(run)[:3]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for t in tables:
        p = np.asarray(t.params)
        rows = np.tile(p, (len(t.times), 1))
        err = np.abs(det.predict(t.times, rows) - pipeline.truth_values(spec, t.times, rows,
                                                                           "analytic"))[:, 0]
        line, = ax.plot(t.times, t.bounds, lw=1.2, label=f"bound {tuple(np.round(p, 2))}")
        ax.plot(t.times, err, ls="--", color=line.get_color(), lw=1)
    ax.set_yscale("log")
    ax.set_xlabel(spec.variable)
    ax.set_ylabel("|error| (dashed), bound (solid)")
    ax.legend(fontsize=7)
    fig.tight_layout()
    return _save(fig, run / "bounds.svg")


def plot_calibration(run: Path, cfg: dict) -> Path:
    det = pipeline.load_det(run)
    spec = det.spec
    post = pipeline.load_posterior(run, spec)
    like = pipeline._likelihood(cfg, det)
    x, p = pipeline.region_points(spec, "test", cfg["eval"]["n_x"], cfg["eval"]["n_param"])
    pred = bayes.predictive(post, spec, like, x, p, cfg["eval"]["m"],
                            pipeline.stream(cfg["seed"], "eval"))
    ref = pipeline.truth_values(spec, x, p, cfg["eval"]["truth"])
    levels = metrics.COVERAGE_LEVELS
    cov = metrics.coverage_curve(pred.mean, pred.std, ref, levels)
    ma, _ = metrics.miscalibration_area(pred.mean, pred.std, ref)
    fig, ax = plt.subplots(figsize=(4, 4))
    ax.plot([0, 1], [0, 1], ls=":", color="k")
    ax.plot(levels, cov, lw=1.5)
    ax.fill_between(levels, levels, cov, alpha=0.2)
    ax.set_xlabel("expected coverage")
    ax.set_ylabel("observed coverage")
    ax.set_title(f"miscalibration area {ma:.3f}")
    fig.tight_layout()
    return _save(fig, run / "calibration.svg")


def plot_corner(run: Path, cfg: dict) -> Path:
    summary = pipeline.require(run, "summary.json")
    chain = inverse.chain_from_csv(pipeline.require(run, "chain.csv"))
    burn = json.loads(summary.read_text()).get("burn_in", 0)
    flat = chain.flat(burn)
    names = chain.param_names
    d = len(names)
    fig, axes = plt.subplots(d, d, figsize=(2.2 * d, 2.2 * d), squeeze=False)
    for i in range(d):
        for j in range(d):
            ax = axes[i, j]
            if j > i:
                ax.axis("off")
                continue
            if i == j:
                ax.hist(flat[:, i], bins=40, color="0.4")
            else:
                ax.hist2d(flat[:, j], flat[:, i], bins=40, cmap="Greys")
            if i == d - 1:
                ax.set_xlabel(names[j])
            if j == 0 and i > 0:
                ax.set_ylabel(names[i])
    fig.tight_layout()
    return _save(fig, run / "corner.svg")


def plot(run_dir, kind: str) -> Path:
    run = Path(run_dir)
    cfg = pipeline.load_config(run)
    fns = {"solution": plot_solution, "bounds": plot_bounds, "calibration": plot_calibration,
           "corner": plot_corner}
    if kind not in fns:
        raise ValueError(f"unknown plot kind {kind!r}; choose from {KINDS}")
    return fns[kind](run, cfg)
