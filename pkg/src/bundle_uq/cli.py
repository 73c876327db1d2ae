"""Command-line entry point: ``bundle-uq <subcommand>`` or ``python -m bundle_uq``.

Exit codes: 0 success, 2 configuration or missing-input error, 3 numerical failure.
The ``BUNDLE_UQ_THREADS`` environment variable caps BLAS threads.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np
from scipy import linalg

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
THREADS_ENV = "BUNDLE_UQ_THREADS"

log = logging.getLogger("bundle_uq")


class ConfigError(ValueError):
    pass


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.replace(",", " ").split()]
    except ValueError as exc:
        raise ConfigError(f"could not parse numbers from {text!r}") from exc


def _regions(text: str) -> list[str]:
    return [r.strip() for r in text.split(",") if r.strip()]


def build_parser() -> argparse.ArgumentParser:
    from .models import MODEL_IDS
    from .presets import PRESETS

    p = argparse.ArgumentParser(prog="bundle-uq", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a deterministic solution bundle")
    t.add_argument("--model", choices=MODEL_IDS, required=True)
    t.add_argument("--preset", choices=PRESETS, default="desk")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--iterations", type=int)
    t.add_argument("--samples-per-dim", type=int)
    t.add_argument("--out", required=True, help="run directory")

    b = sub.add_parser("bounds", help="error-bound table for one parameter vector")
    b.add_argument("--model", choices=("lcdm", "cpl"), required=True)
    b.add_argument("--checkpoint", required=True)
    b.add_argument("--lambda", dest="lam", required=True,
                   help="full parameter vector, e.g. '0.3' (lcdm) or '-1 0.5 0.3' (cpl)")
    b.add_argument("--partitions", type=int, default=100)
    b.add_argument("--points", type=int, default=50)
    b.add_argument("--out", required=True, help="CSV path")

    y = sub.add_parser("bayes", help="second-step Bayesian fit on a trained bundle")
    y.add_argument("--method", choices=("nlm", "bbb", "hmc"), required=True)
    y.add_argument("--likelihood", choices=("homo", "eb", "residual"), default="eb")
    y.add_argument("--checkpoint", required=True)
    y.add_argument("--preset", choices=PRESETS, default="desk")
    y.add_argument("--seed", type=int, default=0)
    y.add_argument("--out", required=True, help="run directory")

    e = sub.add_parser("eval", help="metrics report for a run directory")
    e.add_argument("--run", required=True)
    e.add_argument("--truth", choices=("analytic", "rk"))
    e.add_argument("--regions", type=_regions, default=None)
    e.add_argument("--out", help="report path (default: <run>/report.json)")

    i = sub.add_parser("inverse", help="infer parameters from the cosmic-chronometer data")
    i.add_argument("--model", choices=MODEL_IDS, required=True)
    i.add_argument("--source", choices=("analytic", "det", "nlm", "bbb", "hmc"), required=True)
    i.add_argument("--likelihood", choices=("homo", "eb"), default="eb")
    i.add_argument("--run", help="run directory holding checkpoint.json / posterior.json")
    i.add_argument("--preset", choices=PRESETS, default="desk")
    i.add_argument("--walkers", type=int)
    i.add_argument("--steps", type=int)
    i.add_argument("--draws", type=int, help="solution draws per likelihood evaluation")
    i.add_argument("--seed", type=int, default=0)
    i.add_argument("--out", required=True)

    g = sub.add_parser("plot", help="SVG figures from a run directory")
    g.add_argument("--run", required=True)
    g.add_argument("--kind", choices=("solution", "bounds", "calibration", "corner"),
                   required=True)

    q = sub.add_parser("pipeline", help="train -> bounds -> bayes -> eval -> inverse")
    q.add_argument("--model", choices=MODEL_IDS, required=True)
    q.add_argument("--preset", choices=PRESETS, default="desk")
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--method", choices=("nlm", "bbb", "hmc", "none"), default="hmc")
    q.add_argument("--likelihood", choices=("homo", "eb", "residual"), default="eb")
    q.add_argument("--stages", type=_regions, default=None,
                   help="comma-separated subset of train,bounds,bayes,eval,inverse")
    q.add_argument("--config", help="JSON object with any of: train, bayes_overrides, bounds_cfg, "
                   "eval_cfg, inverse_cfg, model_options")
    q.add_argument("--resume", action="store_true")
    q.add_argument("--out", required=True)
    return p


def _cmd_train(a):
    from . import pipeline

    cfg = pipeline.resolve_config(a.model, a.preset, a.seed, method="none", stages=["train"],
                                  train={"iterations": a.iterations,
                                         "samples_per_dim": a.samples_per_dim})
    pipeline.run_pipeline(cfg, a.out)
    print(Path(a.out) / "checkpoint.json")


def _cmd_bounds(a):
    from . import bounds, training

    det = training.load_solution(a.checkpoint)
    if det.spec.model_id != a.model:
        raise ConfigError(f"checkpoint holds {det.spec.model_id}, not {a.model}")
    lam = np.array(_floats(a.lam))
    if lam.size != det.spec.n_params:
        raise ConfigError(f"{a.model} needs {det.spec.n_params} parameters "
                          f"{det.spec.param_names}, got {lam.size}")
    table = bounds.bound_table(det, lam, a.partitions, a.points)
    Path(a.out).parent.mkdir(parents=True, exist_ok=True)
    table.to_csv(a.out)
    print(a.out)


def _run_dir_from_checkpoint(checkpoint, out: Path, cfg: dict):
    from . import pipeline

    out.mkdir(parents=True, exist_ok=True)
    src = Path(checkpoint)
    if not src.exists():
        raise pipeline.MissingArtifact(f"expected artifact {src} is missing")
    dst = out / "checkpoint.json"
    if src.resolve() != dst.resolve():
        dst.write_text(src.read_text())
    return out


def _cmd_bayes(a):
    from . import pipeline, training

    det = training.load_solution(a.checkpoint)
    cfg = pipeline.resolve_config(det.spec.model_id, a.preset, a.seed, a.method, a.likelihood,
                                  stages=["bayes"], model_options=training.model_options(det.spec))
    cfg["train"] = det.train_config.to_dict()
    run = _run_dir_from_checkpoint(a.checkpoint, Path(a.out), cfg)
    pipeline.run_pipeline(cfg, run)
    print(run / "posterior.json")


def _cmd_eval(a):
    from . import pipeline

    report = pipeline.evaluate_run(a.run, a.truth, a.regions)
    out = Path(a.out) if a.out else Path(a.run) / "report.json"
    pipeline.write_report(report, out)
    print(out)


def _cmd_inverse(a):
    from . import inverse, pipeline

    if a.source == "analytic":
        cfg = pipeline.resolve_config(a.model, a.preset, a.seed, method="none", stages=[])
    else:
        if not a.run:
            raise ConfigError("--run is required for network sources")
        cfg = pipeline.load_config(a.run)
        if cfg["model"] != a.model:
            raise ConfigError(f"run {a.run} holds {cfg['model']}, not {a.model}")
        if a.source in ("nlm", "bbb", "hmc"):
            if cfg.get("method") != a.source:
                raise ConfigError(f"run {a.run} has method {cfg.get('method')}, not {a.source}")
            if cfg.get("likelihood") != a.likelihood:
                raise ConfigError(f"run {a.run} used likelihood {cfg.get('likelihood')}")
    cfg = dict(cfg)
    inv = dict(cfg["inverse"])
    inv.update({k: v for k, v in (("walkers", a.walkers), ("steps", a.steps), ("m", a.draws))
                if v is not None})
    inv["source"] = "posterior" if a.source in ("nlm", "bbb", "hmc") else a.source
    cfg["inverse"] = inv
    cfg["seed"] = a.seed
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    task = pipeline.inference_task(a.run or out, cfg)
    chain = inverse.run_inference(task, inverse.load_cc(), pipeline.stream(a.seed, "inverse"))
    inverse.chain_to_csv(chain, out / "chain.csv")
    summary = inverse.summarize(chain, task.burn_in_fraction)
    (out / "summary.json").write_text(json.dumps(
        {"params": summary, "acceptance_rate": chain.acceptance_rate, "burn_in": chain.burn_in,
         "walkers": task.walkers, "steps": task.steps, "source": a.source}, indent=1))
    if not (out / "config.json").exists():
        (out / "config.json").write_text(json.dumps(cfg, indent=1, sort_keys=True))
    for name, s in summary.items():
        print(f"{name}: {s['mean']:.4g} +/- {s['std']:.3g}")


def _cmd_plot(a):
    from . import plots

    print(plots.plot(a.run, a.kind))


def _cmd_pipeline(a):
    from . import pipeline

    extra = {}
    if a.config:
        extra = json.loads(Path(a.config).read_text())
    allowed = {"train", "bayes_overrides", "bounds_cfg", "eval_cfg", "inverse_cfg",
               "model_options"}
    unknown = set(extra) - allowed
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}; allowed {sorted(allowed)}")
    cfg = pipeline.resolve_config(a.model, a.preset, a.seed, a.method, a.likelihood, a.stages,
                                  **extra)
    run = pipeline.run_pipeline(cfg, a.out, resume=a.resume)
    if (run / "report.json").exists():
        print(run / "report.json")


_COMMANDS = {"train": _cmd_train, "bounds": _cmd_bounds, "bayes": _cmd_bayes, "eval": _cmd_eval,
             "inverse": _cmd_inverse, "plot": _cmd_plot, "pipeline": _cmd_pipeline}
_NUMERIC = (FloatingPointError, ArithmeticError, linalg.LinAlgError)
_CONFIG = (ValueError, KeyError, FileNotFoundError, json.JSONDecodeError)


def _classify(exc: BaseException) -> int:
    from .pipeline import PipelineError

    if isinstance(exc, PipelineError):
        exc = exc.cause
    if isinstance(exc, _NUMERIC):
        return EXIT_NUMERIC
    if isinstance(exc, _CONFIG):
        return EXIT_CONFIG
    raise exc


def _thread_limit():
    n = os.environ.get(THREADS_ENV)
    if not n:
        return None
    try:
        count = int(n)
    except ValueError as exc:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {n!r}") from exc
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=count)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        limiter = _thread_limit()
        try:
            _COMMANDS[args.command](args)
        finally:
            if limiter is not None:
                limiter.unregister()
    except Exception as exc:  # noqa: BLE001 - mapped to exit codes below
        code = _classify(exc)
        print(f"error: {exc}", file=sys.stderr)
        return code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
