"""Run directories and the staged train -> bounds -> bayes -> eval -> inverse pipeline.

Every run directory holds ``config.json`` (the fully resolved config) and
``stages.json`` (a hash per completed stage).  With ``resume=True`` a stage is
skipped when its artifacts exist and its hash, which covers its own settings
and those of every upstream stage, is unchanged.
"""
from __future__ import annotations

import copy
import csv
import hashlib
import json
import logging
import time
from pathlib import Path

import numpy as np

from . import bayes, bounds, inverse, metrics, models, presets, training
from .bayes.posterior import mean_networks, posterior_from_dict

log = logging.getLogger(__name__)

STAGES = ("train", "bounds", "bayes", "eval", "inverse")
STREAMS = {"train": 1, "bounds": 2, "bayes": 3, "eval": 4, "inverse": 5}
ARTIFACTS = {
    "train": ("checkpoint.json", "loss.csv"),
    "bounds": ("bounds.json",),
    "bayes": ("posterior.json", "predictive.csv"),
    "eval": ("report.json", "report.csv"),
    "inverse": ("chain.csv", "summary.json"),
}
# config sections whose change invalidates a stage (bayes also writes the test-grid predictive)
UPSTREAM = {"train": (), "bounds": ("train",), "bayes": ("train", "eval"),
            "eval": ("train", "bayes"), "inverse": ("train", "bayes")}
REGIONS = ("train", "test", "ood")


class PipelineError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        self.stage, self.cause = stage, cause
        super().__init__(f"stage {stage!r} failed: {type(cause).__name__}: {cause}")


class MissingArtifact(FileNotFoundError):
    pass


def stream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for one named stage, derived from the global seed."""
    return np.random.default_rng([int(seed), STREAMS[name]])


def resolve_config(model: str, preset: str = "desk", seed: int = 0, method: str = "hmc",
                   likelihood: str = "eb", stages=None, train=None, bayes_overrides=None,
                   bounds_cfg=None, eval_cfg=None, inverse_cfg=None,
                   model_options=None) -> dict:
    """Fill every setting from the preset; the result is what ``config.json`` echoes.

    ``method="none"`` skips the second step (the deterministic net is evaluated
    and used as the inverse-problem source).
    """
    spec = models.get_model(model, **(model_options or {}))
    tcfg = presets.train_config(model, preset, seed, **(train or {}))
    cfg = {"model": model, "preset": preset, "seed": int(seed), "method": method,
           "likelihood": likelihood, "model_options": training.model_options(spec),
           "train": tcfg.to_dict()}
    linear = model in ("lcdm", "cpl")
    if method != "none":
        if likelihood == "eb" and not linear:
            raise ValueError(f"error-bound likelihood is only available for lcdm and cpl, "
                             f"not {model}")
        cfg["bayes"] = presets.bayes_config(model, method, likelihood, preset,
                                            **(bayes_overrides or {})).to_dict()
    b = {"n_partitions": 100, "points_per_partition": 50, "n_lambda": 20}
    b.update(bounds_cfg or {})
    cfg["bounds"] = b
    e = {"truth": "analytic" if linear else "rk", "regions": list(REGIONS), "m": 100,
         "n_x": 61, "n_param": 7}
    e.update(eval_cfg or {})
    cfg["eval"] = e
    inv = dict(presets.inverse_settings(preset))
    inv["source"] = "posterior" if method != "none" else "det"
    inv.update(inverse_cfg or {})
    cfg["inverse"] = inv
    default_stages = ["train", "bounds", "bayes", "eval", "inverse"] if linear else \
        ["train", "bayes", "eval", "inverse"]
    cfg["stages"] = list(stages) if stages else default_stages
    if method == "none":
        cfg["stages"] = [s for s in cfg["stages"] if s != "bayes"]
    for s in cfg["stages"]:
        if s not in STAGES:
            raise ValueError(f"unknown stage {s!r}; choose from {STAGES}")
    if "bounds" in cfg["stages"] and not linear:
        raise ValueError("error bounds are only available for lcdm and cpl")
    return cfg


def config_hash(cfg: dict, stage: str) -> str:
    keys = ["model", "seed", "model_options", "method", "likelihood", "train"]
    part = {k: cfg.get(k) for k in keys}
    for s in (*UPSTREAM[stage], stage):
        if s in cfg and s != "train":
            part[s] = cfg[s]
    blob = json.dumps(part, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _read_stages(run: Path) -> dict:
    p = run / "stages.json"
    return json.loads(p.read_text()) if p.exists() else {}


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True))


def require(run: Path, name: str) -> Path:
    p = Path(run) / name
    if not p.exists():
        raise MissingArtifact(f"expected artifact {p} is missing")
    return p


def load_config(run) -> dict:
    return json.loads(require(Path(run), "config.json").read_text())


# -- stages ---------------------------------------------------------------------------

def stage_train(run: Path, cfg: dict) -> None:
    tc = dict(cfg["train"])
    tc["hidden"] = tuple(tc["hidden"])
    tcfg = training.TrainConfig(**tc)
    spec = models.get_model(cfg["model"], **cfg["model_options"])
    sol = training.train(tcfg, spec)
    training.save_solution(run / "checkpoint.json", sol)
    with open(run / "loss.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "loss"])
        w.writerows([(i, repr(v)) for i, v in sol.loss_history])


def load_det(run) -> training.DetSolution:
    return training.load_solution(require(Path(run), "checkpoint.json"))


def stage_bounds(run: Path, cfg: dict) -> None:
    det = load_det(run)
    spec = det.spec
    b = cfg["bounds"]
    rng = stream(cfg["seed"], "bounds")
    lam = spec.full_params(rng.uniform(*spec.bundle_box().T, size=(b["n_lambda"],
                                                                   len(spec.bundle_param_names))))
    hi = max(spec.x_range[1], spec.ood_range[1])
    tables = [bounds.bound_table(det, p, b["n_partitions"], b["points_per_partition"],
                                 (spec.ic_point, hi)) for p in lam]
    _write_json(run / "bounds.json", {"tables": [t.to_dict() for t in tables]})


def load_bounds(run) -> list[bounds.BoundTable]:
    d = json.loads(require(Path(run), "bounds.json").read_text())
    return [bounds.BoundTable.from_dict(t) for t in d["tables"]]


def _likelihood(cfg: dict, det):
    return bayes.likelihood_for(bayes.BayesConfig(**cfg["bayes"]), det)


def stage_bayes(run: Path, cfg: dict) -> None:
    det = load_det(run)
    bcfg = bayes.BayesConfig(**cfg["bayes"])
    rng = stream(cfg["seed"], "bayes")
    t0 = time.perf_counter()
    post, data, like = bayes.fit_posterior(det, bcfg, rng)
    d = post.to_dict()
    d["fit_seconds"] = time.perf_counter() - t0
    _write_json(run / "posterior.json", d)
    x, p = region_points(det.spec, "test", cfg["eval"]["n_x"], cfg["eval"]["n_param"])
    pred = bayes.predictive(post, det.spec, like, x, p, cfg["eval"]["m"], stream(cfg["seed"], "eval"))
    write_predictive(run / "predictive.csv", det.spec, pred)


def load_posterior(run, spec):
    return posterior_from_dict(json.loads(require(Path(run), "posterior.json").read_text()), spec)


def write_predictive(path: Path, spec: models.ModelSpec, pred) -> None:
    names = ["x", *spec.bundle_param_names, *[f"mean_{s}" for s in spec.state_names],
             *[f"std_{s}" for s in spec.state_names]]
    data = np.column_stack([pred.points, pred.mean, pred.std])
    np.savetxt(path, data, delimiter=",", header=",".join(names), comments="", fmt="%.12g")


def region_points(spec: models.ModelSpec, region: str, n_x: int = 61, n_param: int = 7):
    """Evaluation grid: ``x`` values crossed with a grid over the bundle box.

    ``train`` is a coarse grid over the training range, ``test`` a finer one,
    ``ood`` the extrapolation range.
    """
    if region == "train":
        lo, hi = spec.x_range
        n_x, n_param = max(n_x // 2, 2), max(n_param - 2, 2)
    elif region == "test":
        lo, hi = spec.x_range
    elif region == "ood":
        if spec.ood_range is None:
            raise ValueError(f"{spec.model_id} has no extrapolation range")
        lo, hi = spec.ood_range
    else:
        raise ValueError(f"unknown region {region!r}")
    xs = np.linspace(lo, hi, n_x)
    axes = [xs] + [np.linspace(a, b, n_param) for a, b in spec.bundle_box()]
    mesh = np.meshgrid(*axes, indexing="ij")
    rows = np.column_stack([m.ravel() for m in mesh])
    return rows[:, 0], spec.full_params(rows[:, 1:])


def truth_values(spec, x, p, truth: str):
    if truth == "analytic":
        if spec.model_id not in ("lcdm", "cpl"):
            raise ValueError(f"no analytic solution for {spec.model_id}; use --truth rk")
        return models.analytic_solution(spec, x, p)
    if truth == "rk":
        return models.reference_solution(spec, x, p, method="rk")
    raise ValueError(f"unknown truth {truth!r}")


def evaluate_run(run, truth: str | None = None, regions=None, m: int | None = None) -> dict:
    """Metrics per region for the deterministic net and, if present, the posterior."""
    run = Path(run)
    cfg = load_config(run)
    det = load_det(run)
    spec = det.spec
    e = cfg["eval"]
    truth = truth or e["truth"]
    regions = regions or e["regions"]
    m = m or e["m"]
    has_post = cfg["method"] != "none" and (run / "posterior.json").exists()
    post = load_posterior(run, spec) if has_post else None
    like = _likelihood(cfg, det) if has_post else None
    out = {"model": spec.model_id, "method": cfg["method"], "likelihood": cfg["likelihood"],
           "truth": truth, "regions": {}}
    for region in regions:
        if region == "ood" and spec.ood_range is None:
            continue
        x, p = region_points(spec, region, e["n_x"], e["n_param"])
        ref = truth_values(spec, x, p, truth)
        entry = {"det": metrics.make_report(
            region, det.predict(x, p), ref, metrics.median_residual(spec, det.params, x, p)
        ).to_dict()}
        if post is not None:
            rng = stream(cfg["seed"], "eval")
            pred = bayes.predictive(post, spec, like, x, p, m, rng)
            nets = mean_networks(post, m, rng)
            entry["bayes"] = metrics.make_report(
                region, pred.mean, ref, metrics.median_residual(spec, nets, x, p), pred.std
            ).to_dict()
        out["regions"][region] = entry
    return out


def write_report(report: dict, path: Path) -> None:
    path = Path(path)
    _write_json(path, report)
    cols = ["region", "solution", "median_re", "median_residual", "miscal_area", "rms_cal",
            "sharpness", "nll", "crps", "check", "interval", "mae", "rmse",
            *[f"Q{10 * (i + 1)}" for i in range(10)]]
    with open(path.with_suffix(".csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for region, entry in report["regions"].items():
            for who, rep in entry.items():
                row = [region, who] + [rep.get(c) for c in cols[2:13]] + list(rep["quantiles"])
                w.writerow(["" if v is None else v for v in row])


def stage_eval(run: Path, cfg: dict) -> None:
    write_report(evaluate_run(run), run / "report.json")


def inference_task(run, cfg: dict, source: str | None = None) -> inverse.InferenceTask:
    run = Path(run)
    inv = cfg["inverse"]
    source = source or inv["source"]
    spec = models.get_model(cfg["model"], **cfg["model_options"])
    if source == "analytic":
        src = inverse.AnalyticSource(spec)
    elif source == "det":
        src = inverse.DetSource(load_det(run))
    elif source == "posterior":
        det = load_det(run)
        post = load_posterior(run, spec)
        obs = inverse.load_cc()
        like = _likelihood(cfg, det)
        if like.kind == "eb":
            # tables only need to reach the furthest observation
            end = float(inverse._to_variable(spec, obs.z.max()))
            like = bayes.ErrorBoundLikelihood(det, inv.get("bound_partitions", 100),
                                              inv.get("bound_points", 50), (spec.ic_point, end))
        src = inverse.PosteriorSource(post, spec, like, len(obs), inv["m"],
                                      stream(cfg["seed"], "inverse"))
    else:
        raise ValueError(f"unknown inverse source {source!r}")
    return inverse.InferenceTask(spec, src, inv.get("prior_box") or {}, inv["walkers"],
                                 inv["steps"])


def stage_inverse(run: Path, cfg: dict) -> None:
    task = inference_task(run, cfg)
    obs = inverse.load_cc()
    chain = inverse.run_inference(task, obs, stream(cfg["seed"], "inverse"))
    inverse.chain_to_csv(chain, run / "chain.csv")
    summary = inverse.summarize(chain, task.burn_in_fraction)
    _write_json(run / "summary.json", {"params": summary, "acceptance_rate": chain.acceptance_rate,
                                       "burn_in": chain.burn_in, "walkers": task.walkers,
                                       "steps": task.steps})


_RUNNERS = {"train": stage_train, "bounds": stage_bounds, "bayes": stage_bayes,
            "eval": stage_eval, "inverse": stage_inverse}


def run_pipeline(cfg: dict, out_dir, resume: bool = False) -> Path:
    """Execute ``cfg["stages"]`` in order inside ``out_dir``."""
    run = Path(out_dir)
    run.mkdir(parents=True, exist_ok=True)
    cfg = copy.deepcopy(cfg)
    _write_json(run / "config.json", cfg)
    done = _read_stages(run) if resume else {}
    for stage in cfg["stages"]:
        h = config_hash(cfg, stage)
        if resume and done.get(stage) == h and all((run / a).exists() for a in ARTIFACTS[stage]):
            log.info("skipping %s (up to date)", stage)
            continue
        t0 = time.perf_counter()
        try:
            _RUNNERS[stage](run, cfg)
        except Exception as exc:
            raise PipelineError(stage, exc) from exc
        done[stage] = h
        _write_json(run / "stages.json", done)
        log.info("%s finished in %.1fs", stage, time.perf_counter() - t0)
    return run
