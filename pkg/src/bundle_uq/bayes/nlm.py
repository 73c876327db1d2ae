"""Neural linear model: Bayesian linear regression on the last hidden layer."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .. import models, nn
from ..models import ModelSpec
from .data import ResidualBaseline, SupervisedSet


def nlm_fit_arrays(phi, y, sigma, sigma_prior: float):
    """Closed-form Gaussian posterior of ``w`` in ``y = phi @ w + noise``.

    Parameters
    ----------
    phi : (N, F) array
    y : (N,) array
    sigma : (N,) array or float
        Noise std per observation.
    sigma_prior : float
        Std of the isotropic zero-mean prior on ``w``.

    Returns
    -------
    mu : (F,) array
    cov : (F, F) array
    """
    phi = np.asarray(phi, dtype=float)
    y = np.asarray(y, dtype=float)
    w = 1.0 / np.broadcast_to(np.asarray(sigma, dtype=float), y.shape) ** 2
    precision = (phi.T * w) @ phi + np.eye(phi.shape[1]) / sigma_prior ** 2
    try:
        chol = linalg.cho_factor(precision, lower=True)
    except linalg.LinAlgError as exc:
        raise linalg.LinAlgError(
            "posterior precision is not positive definite; use a smaller sigma_prior "
            "(stronger ridge)") from exc
    cov = linalg.cho_solve(chol, np.eye(phi.shape[1]))
    cov = 0.5 * (cov + cov.T)
    mu = cov @ (phi.T @ (w * y))
    return mu, cov


def hidden_features(net: nn.NetworkParams, inputs) -> np.ndarray:
    """Last hidden layer activations with a constant 1 appended."""
    tape = nn.record(net, inputs)
    h = tape.activations[-2]
    return np.column_stack([h, np.ones(len(h))])


def design(spec: ModelSpec, net: nn.NetworkParams, x, params):
    """Features of the enforced output and the initial-value offset.

    The enforced output is ``u0 + scale * c(x) * raw`` and ``raw`` is linear in
    the last layer, so ``u_k = offset_k + phi_k @ w_k`` with
    ``w_k = (W_last[k], b_last[k])``.  Returns ``phi`` of shape (n, B, F) and
    ``offset`` of shape (B, n).
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    params = models._as_rows(params, spec.n_params, len(x))
    base = hidden_features(net, spec.network_inputs(x, params))
    c, _ = models.enforcement_factor(spec, x)
    u0 = models.initial_state(spec, params)
    scale = u0 if spec.ic_scaled else np.ones_like(u0)
    phi = np.stack([(scale[:, k] * c)[:, None] * base for k in range(spec.state_dim)])
    return phi, u0


@dataclass
class NLMPosterior:
    spec: ModelSpec
    feature_net: nn.NetworkParams
    mu: np.ndarray  # (n, F)
    cov: np.ndarray  # (n, F, F)
    sigma_prior: float
    kind: str = "nlm"

    def to_dict(self) -> dict:
        return {"kind": self.kind, "model_id": self.spec.model_id,
                "feature_net": nn.params_to_dict(self.feature_net),
                "mu": self.mu.tolist(), "cov": self.cov.tolist(),
                "sigma_prior": self.sigma_prior}

    @classmethod
    def from_dict(cls, d: dict, spec: ModelSpec) -> "NLMPosterior":
        return cls(spec, nn.params_from_dict(d["feature_net"]), np.asarray(d["mu"], float),
                   np.asarray(d["cov"], float), float(d["sigma_prior"]))


def nlm_fit(spec: ModelSpec, feature_net: nn.NetworkParams, data: SupervisedSet,
            sigma_prior: float, like=None) -> NLMPosterior:
    """One independent Bayesian linear head per state component."""
    if isinstance(like, ResidualBaseline):
        raise ValueError("the neural linear model has no closed form under the residual "
                         "likelihood; use bbb or hmc")
    phi, u0 = design(spec, feature_net, data.x, data.params)
    mus, covs = [], []
    for k in range(spec.state_dim):
        mu, cov = nlm_fit_arrays(phi[k], data.targets[:, k] - u0[:, k], data.sigma_like[:, k],
                                 sigma_prior)
        mus.append(mu)
        covs.append(cov)
    return NLMPosterior(spec, feature_net, np.array(mus), np.array(covs), sigma_prior)


def nlm_predict_arrays(phi, mu, cov):
    """Mean ``phi @ mu`` and epistemic variance ``diag(phi cov phi^T)``."""
    mean = phi @ mu
    var = np.einsum("bi,ij,bj->b", phi, cov, phi)
    return mean, np.maximum(var, 0.0)


def nlm_predict(post: NLMPosterior, x, params, sigma_like=None):
    """Predictive mean and std; ``sigma_like`` (B, n) adds the observation noise."""
    phi, u0 = design(post.spec, post.feature_net, x, params)
    mean = np.empty_like(u0)
    var = np.empty_like(u0)
    for k in range(post.spec.state_dim):
        m, v = nlm_predict_arrays(phi[k], post.mu[k], post.cov[k])
        mean[:, k] = u0[:, k] + m
        var[:, k] = v
    if sigma_like is not None:
        var = var + np.asarray(sigma_like) ** 2
    return mean, np.sqrt(var)
