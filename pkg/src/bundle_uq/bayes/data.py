"""Supervised datasets built from a trained bundle, and the three likelihoods."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import bounds, models, nn, training
from ..training import DetSolution

# sigma_like is clamped to this fraction of |target| (and never below _ABS_FLOOR)
REL_FLOOR = 1e-6
_ABS_FLOOR = 1e-12
_LOG_2PI = np.log(2.0 * np.pi)


def sigma_floor(targets) -> np.ndarray:
    return np.maximum(REL_FLOOR * np.abs(targets), _ABS_FLOOR)


@dataclass(frozen=True)
class Homoscedastic:
    """Constant observation noise ``sigma`` on the deterministic outputs."""

    sigma: float
    kind: str = "homo"

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")

    def sigma_like(self, x, params, targets) -> np.ndarray:
        return np.full(np.shape(targets), float(self.sigma))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "sigma": self.sigma}


class ErrorBoundLikelihood:
    """Observation noise equal to the certified error bound of the deterministic net.

    Bound tables are built lazily, one per distinct parameter vector, over
    ``domain`` (default: initial point through the end of the extrapolation
    range) and cached; the cache is emptied once it holds ``max_cache`` tables.
    """

    kind = "eb"

    def __init__(self, det: DetSolution, n_partitions: int = 100, points_per_partition: int = 50,
                 domain=None, max_cache: int = 4096):
        spec = det.spec
        if spec.model_id not in ("lcdm", "cpl"):
            raise ValueError(f"error-bound likelihood needs a linear model, not {spec.model_id!r}")
        self.det = det
        self.n_partitions = int(n_partitions)
        self.points_per_partition = int(points_per_partition)
        hi = max(spec.x_range[1], spec.ood_range[1])
        self.domain = tuple(domain) if domain is not None else (spec.ic_point, hi)
        self.max_cache = int(max_cache)
        self._tables: dict[tuple, bounds.BoundTable] = {}

    def table(self, params) -> bounds.BoundTable:
        key = tuple(np.asarray(params, dtype=float).tolist())
        if key not in self._tables:
            if len(self._tables) >= self.max_cache:
                self._tables.clear()
            self._tables[key] = bounds.bound_table(self.det, np.array(key), self.n_partitions,
                                                   self.points_per_partition, self.domain)
        return self._tables[key]

    @property
    def tables(self) -> list[bounds.BoundTable]:
        return list(self._tables.values())

    def bound(self, x, params) -> np.ndarray:
        """Interpolated bound at rows ``(x[i], params[i])``; shape (B,)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        params = models._as_rows(params, self.det.spec.n_params, len(x))
        if np.all(params == params[0]):
            return self.table(params[0])(x)
        out = np.empty(len(x))
        uniq, inv = np.unique(params, axis=0, return_inverse=True)
        inv = np.ravel(inv)
        for j, row in enumerate(uniq):
            sel = inv == j
            out[sel] = self.table(row)(x[sel])
        return out

    def sigma_like(self, x, params, targets) -> np.ndarray:
        b = self.bound(x, params)[:, None]
        return np.maximum(np.broadcast_to(b, np.shape(targets)), sigma_floor(targets))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "n_partitions": self.n_partitions,
                "points_per_partition": self.points_per_partition, "domain": list(self.domain)}


@dataclass(frozen=True)
class ResidualBaseline:
    """Gaussian likelihood on the equation residual itself, centred at zero."""

    sigma_r: float
    kind: str = "residual"

    def __post_init__(self):
        if not self.sigma_r > 0:
            raise ValueError("sigma_r must be positive")

    def sigma_like(self, x, params, targets) -> np.ndarray:
        # no observation noise in solution space: predictive spread is the
        # posterior spread alone
        return np.zeros(np.shape(targets))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "sigma_r": self.sigma_r}


def make_likelihood(kind: str, det: DetSolution | None = None, sigma: float | None = None,
                    **kw):
    if kind == "homo":
        return Homoscedastic(float(sigma))
    if kind == "eb":
        if det is None:
            raise ValueError("error-bound likelihood needs the deterministic solution")
        return ErrorBoundLikelihood(det, **kw)
    if kind == "residual":
        return ResidualBaseline(float(sigma))
    raise ValueError(f"unknown likelihood {kind!r}")


@dataclass
class SupervisedSet:
    """Inputs ``(x, bundle params)``, targets ``u_det`` and per-entry noise std."""

    inputs: np.ndarray
    params: np.ndarray
    targets: np.ndarray
    sigma_like: np.ndarray

    def __post_init__(self):
        n = len(self.inputs)
        if not (len(self.params) == len(self.targets) == len(self.sigma_like) == n):
            raise ValueError("row counts differ")
        if self.targets.shape != self.sigma_like.shape:
            raise ValueError("targets and sigma_like shapes differ")

    @property
    def x(self) -> np.ndarray:
        return self.inputs[:, 0]

    def __len__(self) -> int:
        return len(self.inputs)


def build_dataset(det: DetSolution, like, n_per_dim: int, rng: np.random.Generator,
                  **fixed) -> SupervisedSet:
    """Sample points like the training batches and label them with the deterministic net.

    For the residual baseline the noise column holds the positive floor (it is
    not used by that likelihood).
    """
    spec = det.spec
    rows = training.sample_batch(spec, n_per_dim, rng)
    x, p = training.split_rows(spec, rows, **fixed)
    targets = det.predict(x, p)
    sig = like.sigma_like(x, p, targets)
    sig = np.maximum(sig, sigma_floor(targets))
    return SupervisedSet(rows, p, targets, sig)


def gaussian_loglik(data: SupervisedSet, predictions) -> float:
    """Sum over points and components of ``log N(target | prediction, sigma_like)``."""
    predictions = np.asarray(predictions, dtype=float)
    if predictions.shape != data.targets.shape:
        raise ValueError(f"predictions shape {predictions.shape} != {data.targets.shape}")
    z = (data.targets - predictions) / data.sigma_like
    return float(np.sum(-0.5 * _LOG_2PI - np.log(data.sigma_like) - 0.5 * z * z))


def residual_loglik(spec: models.ModelSpec, net: nn.NetworkParams, x, params,
                    sigma_r: float) -> float:
    """Gaussian log-density of the residuals around zero with std ``sigma_r``."""
    if not sigma_r > 0:
        raise ValueError("sigma_r must be positive")
    r = training.residual(spec, net, x, params)
    return float(np.sum(-0.5 * _LOG_2PI - np.log(sigma_r) - 0.5 * (r / sigma_r) ** 2))


# -- log densities over flat network parameters ---------------------------------

def log_prior(theta, sigma_prior: float) -> tuple[float, np.ndarray]:
    theta = np.asarray(theta, dtype=float)
    lp = -0.5 * float(theta @ theta) / sigma_prior ** 2 - theta.size * (
        np.log(sigma_prior) + 0.5 * _LOG_2PI)
    return lp, -theta / sigma_prior ** 2


def gaussian_loglik_fn(spec: models.ModelSpec, template: nn.NetworkParams, data: SupervisedSet):
    """``theta -> (log-likelihood, gradient)`` for a second-step net on ``data``."""
    x, p = data.x, data.params
    inv_var = 1.0 / data.sigma_like ** 2
    const = float(np.sum(-0.5 * _LOG_2PI - np.log(data.sigma_like)))

    def fn(theta):
        net = template.unflatten(theta)
        u, _, tape = training.evaluate(spec, net, x, p, keep_tape=True)
        d = data.targets - u
        ll = const - 0.5 * float(np.sum(d * d * inv_var))
        g_raw, _ = training.output_grads_to_raw(spec, x, p, d * inv_var)
        return ll, nn.backprop(net, tape, g_raw).flatten()

    return fn


def residual_loglik_fn(spec: models.ModelSpec, template: nn.NetworkParams, x, params,
                       sigma_r: float):
    """``theta -> (log-likelihood, gradient)`` for the residual baseline."""
    x = np.asarray(x, dtype=float)
    n_terms = len(x) * spec.state_dim
    const = -n_terms * (0.5 * _LOG_2PI + np.log(sigma_r))
    scale = -0.5 * len(x) / sigma_r ** 2

    def fn(theta):
        net = template.unflatten(theta)
        # residual_loss is mean over points of the summed squared residual
        loss, g = training.residual_loss(spec, net, x, params)
        return const + scale * loss, scale * g.flatten()

    return fn


def log_posterior_fn(loglik_fn, sigma_prior: float):
    def fn(theta):
        ll, g = loglik_fn(theta)
        lp, gp = log_prior(theta, sigma_prior)
        return ll + lp, g + gp

    return fn
