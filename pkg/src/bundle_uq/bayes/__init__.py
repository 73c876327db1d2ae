"""Second step: Bayesian networks fitted to the outputs of a trained bundle."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np

from ..training import DetSolution
from .bbb import BBBPosterior, bbb_fit, bbb_train
from .data import (ErrorBoundLikelihood, Homoscedastic, ResidualBaseline, SupervisedSet,
                   build_dataset, gaussian_loglik, gaussian_loglik_fn, log_posterior_fn,
                   make_likelihood, residual_loglik, residual_loglik_fn)
from .nlm import NLMPosterior, nlm_fit, nlm_fit_arrays, nlm_predict
from .nuts import NutsResult, nuts_sample
from .posterior import NUTSPosterior, PredictiveSummary, posterior_from_dict, predictive

log = logging.getLogger(__name__)

METHODS = ("nlm", "bbb", "hmc")
LIKELIHOODS = ("homo", "eb", "residual")

__all__ = [
    "BBBPosterior", "BayesConfig", "ErrorBoundLikelihood", "Homoscedastic", "NLMPosterior",
    "NUTSPosterior", "NutsResult", "PredictiveSummary", "ResidualBaseline", "SupervisedSet",
    "bbb_fit", "bbb_train", "build_dataset", "fit_posterior", "gaussian_loglik",
    "gaussian_loglik_fn", "make_likelihood", "nlm_fit", "nlm_fit_arrays", "nlm_predict",
    "nuts_sample", "posterior_from_dict", "predictive", "residual_loglik", "residual_loglik_fn",
]


@dataclass
class BayesConfig:
    method: str = "hmc"
    likelihood: str = "eb"
    # likelihood std for "homo", residual std for "residual"
    sigma: float = 0.1
    sigma_prior: float = 1.0
    samples_per_dim: int = 32
    # bbb
    iterations: int = 20_000
    lr: float = 1e-3
    mc_samples: int = 1
    init_std: float = 1e-3
    # hmc
    n_samples: int = 2_000
    n_tune: int = 500
    max_depth: int = 10
    target_accept: float = 0.8
    # error-bound tables
    n_partitions: int = 100
    points_per_partition: int = 50

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {METHODS}")
        if self.likelihood not in LIKELIHOODS:
            raise ValueError(f"unknown likelihood {self.likelihood!r}; choose from {LIKELIHOODS}")
        if self.method == "nlm" and self.likelihood == "residual":
            raise ValueError("the neural linear model has no closed form under the residual "
                             "likelihood")

    def to_dict(self) -> dict:
        return asdict(self)


def likelihood_for(cfg: BayesConfig, det: DetSolution):
    if cfg.likelihood == "eb":
        return ErrorBoundLikelihood(det, cfg.n_partitions, cfg.points_per_partition)
    return make_likelihood(cfg.likelihood, det, cfg.sigma)


def fit_posterior(det: DetSolution, cfg: BayesConfig, rng: np.random.Generator, like=None):
    """Build the dataset and approximate the posterior.  Returns ``(posterior, data, like)``.

    Sample-based methods start from the deterministic parameters.
    """
    spec = det.spec
    like = like if like is not None else likelihood_for(cfg, det)
    data = build_dataset(det, like, cfg.samples_per_dim, rng)
    if cfg.method == "nlm":
        return nlm_fit(spec, det.params, data, cfg.sigma_prior, like), data, like
    if cfg.likelihood == "residual":
        loglik = residual_loglik_fn(spec, det.params, data.x, data.params, cfg.sigma)
    else:
        loglik = gaussian_loglik_fn(spec, det.params, data)
    theta0 = det.params.flatten()
    if cfg.method == "bbb":
        post = bbb_train(det.params, loglik, cfg.sigma_prior, cfg.iterations, cfg.lr, rng,
                         cfg.mc_samples, init=det.params, init_std=cfg.init_std)
        return post, data, like
    res = nuts_sample(log_posterior_fn(loglik, cfg.sigma_prior), theta0, cfg.n_samples,
                      cfg.n_tune, rng, cfg.target_accept, cfg.max_depth)
    post = NUTSPosterior(det.params.copy(), res.samples, cfg.sigma_prior, res.step_size,
                         res.divergences)
    return post, data, like


