"""Mean-field Gaussian variational inference (Bayes by backprop)."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .. import nn

log = logging.getLogger(__name__)


def softplus(rho):
    return np.logaddexp(0.0, rho)


def softplus_inv(s):
    s = np.asarray(s, dtype=float)
    return s + np.log(-np.expm1(-s))


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def gaussian_kl(mu, std, sigma_prior: float) -> float:
    """``KL(N(mu, std^2) || N(0, sigma_prior^2))`` summed over coordinates."""
    return float(np.sum(np.log(sigma_prior / std) + (std ** 2 + mu ** 2) / (2 * sigma_prior ** 2)
                        - 0.5))


@dataclass
class BBBPosterior:
    template: nn.NetworkParams
    mu: np.ndarray
    rho: np.ndarray
    sigma_prior: float
    elbo_history: list = field(default_factory=list)
    kind: str = "bbb"

    @property
    def std(self) -> np.ndarray:
        return softplus(self.rho)

    def sample(self, m: int, rng: np.random.Generator) -> np.ndarray:
        return self.mu + self.std * rng.standard_normal((m, self.mu.size))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "template": nn.params_to_dict(self.template),
                "mu": self.mu.tolist(), "rho": self.rho.tolist(),
                "sigma_prior": self.sigma_prior, "elbo_history": self.elbo_history}

    @classmethod
    def from_dict(cls, d: dict) -> "BBBPosterior":
        return cls(nn.params_from_dict(d["template"]), np.asarray(d["mu"], float),
                   np.asarray(d["rho"], float), float(d["sigma_prior"]),
                   [tuple(e) for e in d.get("elbo_history", [])])


def bbb_fit(loglik_fn, init_mean, sigma_prior: float, iterations: int, lr: float,
            rng: np.random.Generator, mc_samples: int = 1, init_std: float = 1e-3,
            log_every: int = 100):
    """Maximise the ELBO over ``(mu, rho)`` with Adam.

    Parameters
    ----------
    loglik_fn : callable
        ``theta -> (log-likelihood, gradient)``.
    init_mean : array
        Starting variational means.
    init_std : float
        Starting variational std for every coordinate.

    Returns
    -------
    mu, rho : arrays
    history : list of (iteration, elbo estimate)
    """
    if iterations <= 0:
        raise ValueError("iterations must be positive")
    mu = np.array(init_mean, dtype=float)
    rho = np.full_like(mu, softplus_inv(init_std))
    opt = nn.FlatAdam(2 * mu.size, lr=lr)
    packed = np.concatenate([mu, rho])
    history = []
    for it in range(iterations):
        mu, rho = packed[:mu.size], packed[mu.size:]
        std = softplus(rho)
        g_mu = np.zeros_like(mu)
        g_rho = np.zeros_like(rho)
        ll_mean = 0.0
        for _ in range(mc_samples):
            eps = rng.standard_normal(mu.size)
            ll, g = loglik_fn(mu + std * eps)
            ll_mean += ll / mc_samples
            g_mu += g / mc_samples
            g_rho += g * eps * sigmoid(rho) / mc_samples
        kl = gaussian_kl(mu, std, sigma_prior)
        elbo = ll_mean - kl
        if not np.isfinite(elbo):
            raise FloatingPointError(f"non-finite ELBO at iteration {it}")
        g_mu -= mu / sigma_prior ** 2
        g_rho -= (-1.0 / std + std / sigma_prior ** 2) * sigmoid(rho)
        # Adam minimises, so hand it the negative ELBO gradient
        packed = opt.update(packed, -np.concatenate([g_mu, g_rho]))
        if it == 0 or (it + 1) % log_every == 0:
            history.append((it + 1, elbo))
    return packed[:mu.size].copy(), packed[mu.size:].copy(), history


def bbb_train(template: nn.NetworkParams, loglik_fn, sigma_prior: float, iterations: int,
              lr: float, rng: np.random.Generator, mc_samples: int = 1,
              init: nn.NetworkParams | None = None, init_std: float = 1e-3) -> BBBPosterior:
    """Variational posterior over all weights of ``template``'s architecture.

    Means start at ``init`` (the deterministic solution in the two-step setup).
    """
    start = (init or template).flatten()
    mu, rho, hist = bbb_fit(loglik_fn, start, sigma_prior, iterations, lr, rng, mc_samples,
                            init_std)
    log.info("bbb done: elbo %.4e", hist[-1][1])
    return BBBPosterior(template, mu, rho, sigma_prior, hist)
