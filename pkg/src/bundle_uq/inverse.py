"""Inferring model parameters from Hubble-rate measurements.

The likelihood of each observation marginalises over the distribution of the
solution: ``p(mu_i | lam) ~ (1/M) sum_j N(mu_i | H(u_j(z_i, lam)), sigma_i)``.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
from scipy.special import logsumexp

from . import models
from .ensemble import ChainResult, stretch_sample, summarize
from .models import ModelSpec

DEFAULT_PRIORS = {
    "Om0": (0.05, 0.6),
    "H0": (50.0, 90.0),
    "w0": (-3.0, 1.0),
    "w1": (-8.0, 3.0),
    "lam": (0.0, 4.0),
    "b": (0.0, 8.0),
}
_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


@dataclass(frozen=True)
class ObservationSet:
    z: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    source: tuple = ()

    def __post_init__(self):
        if not (len(self.z) == len(self.mu) == len(self.sigma)):
            raise ValueError("column lengths differ")
        if np.any(self.sigma <= 0) or np.any(self.z < 0):
            raise ValueError("need sigma > 0 and z >= 0")

    def __len__(self) -> int:
        return len(self.z)


def load_cc() -> ObservationSet:
    """The 30 cosmic-chronometer H(z) measurements shipped with the package."""
    text = resources.files("bundle_uq").joinpath("data/cosmic_chronometers.csv").read_text()
    rows = list(csv.DictReader(io.StringIO(text)))
    return ObservationSet(np.array([float(r["z"]) for r in rows]),
                          np.array([float(r["H"]) for r in rows]),
                          np.array([float(r["sigma"]) for r in rows]),
                          tuple(r["source"] for r in rows))


# -- solution sources ------------------------------------------------------------
# Each returns draws of shape (M, n_obs, state_dim) at the observation redshifts.
# Random parts are drawn once at construction so the likelihood is a
# deterministic function of the parameters.

class AnalyticSource:
    """Closed-form solution (LCDM, CPL) or a fine RK4 reference for the others."""

    kind = "analytic"

    def __init__(self, spec: ModelSpec, rk_step: float | None = None):
        self.spec = spec
        self.rk_step = rk_step

    def draws(self, z, params) -> np.ndarray:
        x = _to_variable(self.spec, z)
        if self.spec.model_id in ("lcdm", "cpl"):
            return models.analytic_solution(self.spec, x, params)[None]
        return models.reference_solution(self.spec, x, params, h=self.rk_step)[None]


class DetSource:
    """A trained bundle read as a point mass."""

    kind = "det"

    def __init__(self, det):
        self.det = det

    def draws(self, z, params) -> np.ndarray:
        return self.det.predict(_to_variable(self.det.spec, z), params)[None]


class PosteriorSource:
    """Draws ``u_j = u_{theta_j} + sigma_like * xi_j`` from a second-step posterior."""

    def __init__(self, post, spec: ModelSpec, like, n_obs: int, m: int,
                 rng: np.random.Generator):
        if m < 1:
            raise ValueError("need at least one draw")
        self.post, self.spec, self.like, self.m = post, spec, like, m
        self.kind = post.kind
        self.xi = rng.standard_normal((m, n_obs, spec.state_dim))
        if post.kind == "bbb":
            self.thetas = post.sample(m, rng)
        elif post.kind == "hmc":
            idx = rng.choice(len(post.samples), size=m, replace=len(post.samples) < m)
            self.thetas = post.samples[idx]
        else:
            self.thetas = None

    def draws(self, z, params) -> np.ndarray:
        from .bayes.nlm import nlm_predict
        from .bayes.posterior import enforced_draws

        x = _to_variable(self.spec, z)
        if self.thetas is None:
            mean0, _ = nlm_predict(self.post, x, params)
            mean, std = nlm_predict(self.post, x, params, self.like.sigma_like(x, params, mean0))
            return mean[None] + std[None] * self.xi
        u = enforced_draws(self.spec, self.post.template, self.thetas, x, params)
        sig = self.like.sigma_like(x, params, u.mean(axis=0))
        return u + np.asarray(sig)[None] * self.xi


def _to_variable(spec: ModelSpec, z):
    z = np.asarray(z, dtype=float)
    return -np.log1p(z) if spec.variable == "N" else z


@dataclass
class InferenceTask:
    spec: ModelSpec
    source: object
    prior_box: dict = field(default_factory=dict)
    walkers: int = 32
    steps: int = 2_000
    burn_in_fraction: float = 0.2

    def __post_init__(self):
        box = {n: DEFAULT_PRIORS[n] for n in self.param_names}
        box.update(self.prior_box or {})
        self.prior_box = {n: (float(box[n][0]), float(box[n][1])) for n in self.param_names}
        for n, (lo, hi) in self.prior_box.items():
            if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
                raise ValueError(f"invalid prior box for {n}: {(lo, hi)}")
        if self.walkers < 2 * len(self.param_names) or self.walkers % 2:
            raise ValueError("walkers must be even and at least twice the dimension")

    @property
    def param_names(self) -> tuple:
        return (*self.spec.param_names, "H0")

    @property
    def box_array(self) -> np.ndarray:
        return np.array([self.prior_box[n] for n in self.param_names])


def log_likelihood(task: InferenceTask, lam_full, obs: ObservationSet) -> float:
    """Marginal log-likelihood of the observations; ``-inf`` outside the prior box."""
    lam_full = np.asarray(lam_full, dtype=float)
    box = task.box_array
    if not np.all((lam_full >= box[:, 0]) & (lam_full <= box[:, 1])):
        return -np.inf
    spec = task.spec
    params = lam_full[:-1]
    h0 = lam_full[-1]
    om = params[spec.param_names.index("Om0")]
    rows = np.broadcast_to(params, (len(obs), len(params)))
    with np.errstate(all="ignore"):
        try:
            u = task.source.draws(obs.z, rows)
        except (models.SingularityError, FloatingPointError, ValueError):
            return -np.inf
        h = models.hubble_array(spec, obs.z[None, :], u, h0, om)
        dens = -0.5 * ((obs.mu - h) / obs.sigma) ** 2 - np.log(obs.sigma) - _LOG_SQRT_2PI
    dens = np.where(np.isfinite(dens), dens, -np.inf)
    per_obs = logsumexp(dens, axis=0) - np.log(dens.shape[0])
    total = float(np.sum(per_obs))
    return total if np.isfinite(total) else -np.inf


def run_inference(task: InferenceTask, obs: ObservationSet, rng: np.random.Generator
                  ) -> ChainResult:
    """Stretch-move sampling of the posterior (uniform prior inside the box)."""
    box = task.box_array
    init = box[:, 0] + (box[:, 1] - box[:, 0]) * rng.uniform(size=(task.walkers, len(box)))
    burn = int(task.burn_in_fraction * task.steps)
    return stretch_sample(lambda lam: log_likelihood(task, lam, obs), init, task.steps, rng,
                          burn_in=burn, param_names=task.param_names)


def chain_to_csv(chain: ChainResult, path) -> None:
    w, s, d = chain.samples.shape
    walker = np.repeat(np.arange(w), s)
    step = np.tile(np.arange(s), w)
    data = np.column_stack([walker, step, chain.samples.reshape(-1, d), chain.log_probs.ravel()])
    header = ",".join(["walker", "step", *chain.param_names, "logp"])
    np.savetxt(path, data, delimiter=",", header=header, comments="",
               fmt=["%d", "%d"] + ["%.10g"] * (d + 1))


def chain_from_csv(path, burn_in: int = 0) -> ChainResult:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    w = int(data[:, 0].max()) + 1
    s = int(data[:, 1].max()) + 1
    d = len(header) - 3
    samples = data[:, 2:2 + d].reshape(w, s, d)
    return ChainResult(samples, data[:, -1].reshape(w, s), float("nan"), burn_in,
                       tuple(header[2:2 + d]))


__all__ = ["AnalyticSource", "DetSource", "InferenceTask", "ObservationSet", "PosteriorSource",
           "load_cc", "log_likelihood", "run_inference", "summarize", "chain_to_csv",
           "chain_from_csv", "DEFAULT_PRIORS"]
