"""Posterior handles for the three second-step methods and the predictive summary."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import models, nn
from ..models import ModelSpec
from .bbb import BBBPosterior
from .nlm import NLMPosterior, nlm_predict


@dataclass
class NUTSPosterior:
    template: nn.NetworkParams
    samples: np.ndarray  # (S, n_params)
    sigma_prior: float
    step_size: float = float("nan")
    divergences: int = 0
    kind: str = "hmc"

    def __post_init__(self):
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("non-finite posterior samples")

    def thinned(self, m: int) -> np.ndarray:
        idx = np.linspace(0, len(self.samples) - 1, min(m, len(self.samples))).round().astype(int)
        return self.samples[idx]

    def to_dict(self) -> dict:
        return {"kind": self.kind, "template": nn.params_to_dict(self.template),
                "samples": self.samples.tolist(), "sigma_prior": self.sigma_prior,
                "step_size": self.step_size, "divergences": self.divergences}

    @classmethod
    def from_dict(cls, d: dict) -> "NUTSPosterior":
        return cls(nn.params_from_dict(d["template"]), np.asarray(d["samples"], float),
                   float(d["sigma_prior"]), float(d["step_size"]), int(d["divergences"]))


def posterior_from_dict(d: dict, spec: ModelSpec):
    kind = d["kind"]
    if kind == "nlm":
        return NLMPosterior.from_dict(d, spec)
    if kind == "bbb":
        return BBBPosterior.from_dict(d)
    if kind == "hmc":
        return NUTSPosterior.from_dict(d)
    raise ValueError(f"unknown posterior kind {kind!r}")


@dataclass
class PredictiveSummary:
    points: np.ndarray  # (Q, 1 + p) network-input rows
    mean: np.ndarray  # (Q, n)
    std: np.ndarray  # (Q, n)
    draws: np.ndarray | None = None  # (M, Q, n)


def enforced_draws(spec: ModelSpec, template: nn.NetworkParams, thetas, x, params) -> np.ndarray:
    """IC-enforced outputs for each parameter vector; shape (M, Q, n)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    params = models._as_rows(params, spec.n_params, len(x))
    raw = nn.forward_many(template, thetas, spec.network_inputs(x, params))
    u0 = models.initial_state(spec, params)
    c, _ = models.enforcement_factor(spec, x)
    scale = u0 if spec.ic_scaled else 1.0
    return u0 + scale * c[:, None] * raw


def predictive(post, spec: ModelSpec, like, x, params, m: int = 100,
               rng: np.random.Generator | None = None, keep_draws: bool = False
               ) -> PredictiveSummary:
    """Predictive mean and std at rows ``(x, params)``.

    ``std**2 = sigma_like**2 + (1/M) sum (u_i - mean)**2`` over ``M`` posterior
    draws; the neural linear model uses its closed form instead.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    params = models._as_rows(params, spec.n_params, len(x))
    points = np.column_stack([x, params[:, list(spec.bundle_index)]])
    if post.kind == "nlm":
        mean0, _ = nlm_predict(post, x, params)
        sig = like.sigma_like(x, params, mean0)
        mean, std = nlm_predict(post, x, params, sig)
        return PredictiveSummary(points, mean, std)
    if m < 2:
        raise ValueError("need at least two posterior draws")
    if post.kind == "bbb":
        if rng is None:
            raise ValueError("sampling from the variational posterior needs an rng")
        thetas = post.sample(m, rng)
    else:
        thetas = post.thinned(m)
    draws = enforced_draws(spec, post.template, thetas, x, params)
    mean = draws.mean(axis=0)
    var = draws.var(axis=0)
    sig = like.sigma_like(x, params, mean)
    std = np.sqrt(var + np.asarray(sig) ** 2)
    return PredictiveSummary(points, mean, std, draws if keep_draws else None)


def mean_networks(post, m: int = 100, rng: np.random.Generator | None = None
                  ) -> list[nn.NetworkParams]:
    """Networks whose average output is the posterior predictive mean.

    For the neural linear model this is a single network: the feature layers
    with the posterior-mean output layer.
    """
    if post.kind == "nlm":
        net = post.feature_net.copy()
        net.weights[-1] = post.mu[:, :-1].copy()
        net.biases[-1] = post.mu[:, -1].copy()
        return [net]
    if post.kind == "bbb":
        if rng is None:
            raise ValueError("sampling from the variational posterior needs an rng")
        thetas = post.sample(m, rng)
    else:
        thetas = post.thinned(m)
    return [post.template.unflatten(t) for t in thetas]
