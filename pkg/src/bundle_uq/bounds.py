"""Certified error bounds for first-order linear ODEs.

For ``u' + p(t) u = f(t)`` and an approximation with residual ``r``, the error
``e`` obeys ``(e exp(P))' = r exp(P)`` with ``P' = p``, so

    |e(t)| <= exp(-P(t)) * int_{t0}^{t} |r(s)| exp(P(s)) ds.

The partitioned construction replaces ``|r|`` by its sampled maximum on each of
``N`` intervals, which needs only ``exp(P)`` and its antiderivative.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

from . import models
from .special import expn

# closed-form CPL integral is abandoned for quadrature past this cancellation ratio
_CANCEL_LIMIT = 1e6


@dataclass(frozen=True)
class BoundIngredients:
    """``exp(P)`` and ``int_{x0}^x exp(P)`` for one parameter vector."""

    exp_P: Callable[[np.ndarray], np.ndarray]
    int_exp_P: Callable[[np.ndarray], np.ndarray]
    model_id: str
    params: tuple
    x0: float = 0.0


def lcdm_ingredients(params) -> BoundIngredients:
    """LCDM: ``exp(P) = (1+z)**-3`` and its integral ``1/2 - 1/(2 (1+z)**2)``."""

    def exp_P(z):
        return (1.0 + np.asarray(z, dtype=float)) ** -3

    def int_exp_P(z):
        z = np.asarray(z, dtype=float)
        return 0.5 - 0.5 / (1.0 + z) ** 2

    return BoundIngredients(exp_P, int_exp_P, "lcdm", tuple(np.atleast_1d(params).tolist()))


def _cpl_exponent(w0, w1):
    return 3.0 * (w0 + w1 + 1.0)


def cpl_ingredients(params) -> BoundIngredients:
    """CPL with ``params = (w0, w1, Om0)``.

    ``exp(P) = (1+z)**-a * exp(3 w1 z / (1+z))`` with ``a = 3 (w0 + w1 + 1)``.
    For ``w1 > 0`` the antiderivative is
    ``F(s) = exp(3 w1) (1+s)**(1-a) E_{2-a}(3 w1 / (1+s))``; otherwise, or when
    ``F(z) - F(0)`` cancels badly, the integral is done by adaptive quadrature.
    """
    w0, w1 = float(params[0]), float(params[1])
    a = _cpl_exponent(w0, w1)

    def exp_P(z):
        z = np.asarray(z, dtype=float)
        return (1.0 + z) ** -a * np.exp(3.0 * w1 * z / (1.0 + z))

    def antiderivative(s):
        return np.exp(3.0 * w1) * (1.0 + s) ** (1.0 - a) * expn(2.0 - a, 3.0 * w1 / (1.0 + s))

    f0 = antiderivative(0.0) if w1 > 0 else None

    def quad(zi):
        return integrate.quad(lambda s: float(exp_P(s)), 0.0, zi, epsabs=0.0, epsrel=1e-12,
                              limit=200)[0]

    def int_exp_P(z):
        z = np.asarray(z, dtype=float)
        flat = np.atleast_1d(z).ravel()
        out = np.empty_like(flat)
        for i, zi in enumerate(flat):
            if zi == 0.0:
                out[i] = 0.0
                continue
            if f0 is not None:
                fz = antiderivative(zi)
                diff = fz - f0
                if diff > 0 and max(abs(fz), abs(f0)) < _CANCEL_LIMIT * diff:
                    out[i] = diff
                    continue
            out[i] = quad(zi)
        return out.reshape(z.shape) if z.ndim else float(out[0])

    return BoundIngredients(exp_P, int_exp_P, "cpl", (w0, w1, *map(float, params[2:])))


def ingredients_for(spec: models.ModelSpec, params) -> BoundIngredients:
    if spec.model_id == "lcdm":
        return lcdm_ingredients(params)
    if spec.model_id == "cpl":
        return cpl_ingredients(params)
    raise ValueError(f"error bounds are only available for linear models, not {spec.model_id!r}")


def constant_coeff_bound(eps: float, coef: float, t0: float, t: float) -> float:
    """Bound for ``u' + coef * u = f`` with ``|r| <= eps`` on ``[t0, t]``."""
    if eps < 0 or t < t0:
        raise ValueError("need eps >= 0 and t >= t0")
    if coef == 0.0:
        return eps * (t - t0)
    # eps * exp(-c t) * (exp(c t) - exp(c t0)) / c, written to avoid overflow
    return eps * -np.expm1(-coef * (t - t0)) / coef


@dataclass
class BoundTable:
    """Bounds ``bounds[i]`` at ``times[i]``; index 0 is the initial point with bound 0.

    ``eps[i-1]`` is the sampled residual maximum on ``(times[i-1], times[i]]``.
    """

    times: np.ndarray
    bounds: np.ndarray
    eps: np.ndarray
    params: tuple
    n_partitions: int
    points_per_partition: int
    model_id: str = ""
    extra: dict = field(default_factory=dict)

    def __call__(self, x) -> np.ndarray:
        return interpolate(self, x)

    def to_dict(self) -> dict:
        return {"model_id": self.model_id, "params": list(self.params),
                "n_partitions": self.n_partitions,
                "points_per_partition": self.points_per_partition,
                "times": self.times.tolist(), "bounds": self.bounds.tolist(),
                "eps": self.eps.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "BoundTable":
        return cls(np.asarray(d["times"], float), np.asarray(d["bounds"], float),
                   np.asarray(d["eps"], float), tuple(d["params"]), int(d["n_partitions"]),
                   int(d["points_per_partition"]), d.get("model_id", ""))

    def to_csv(self, path) -> None:
        np.savetxt(path, np.column_stack([self.times, self.bounds]), delimiter=",",
                   header="t,bound", comments="", fmt="%.17g")

    def save_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)


def interpolate(table: BoundTable, x) -> np.ndarray:
    """Piecewise-constant bound using the right endpoint of the enclosing partition."""
    x = np.asarray(x, dtype=float)
    t = table.times
    lo, hi = min(t[0], t[-1]), max(t[0], t[-1])
    span = hi - lo
    if np.any((x < lo - 1e-12 * span) | (x > hi + 1e-12 * span)):
        raise ValueError(f"points outside the bound table range [{lo}, {hi}]")
    forward = t[-1] >= t[0]
    key = x if forward else -x
    grid = t if forward else -t
    idx = np.searchsorted(grid, key, side="left")
    return table.bounds[np.clip(idx, 0, len(t) - 1)]


def tight_bounds(domain, residual_fn, ingredients: BoundIngredients, n_partitions: int = 100,
                 points_per_partition: int = 50) -> BoundTable:
    """Partitioned error bound.

    Parameters
    ----------
    domain : (float, float)
        ``(t0, T)``; ``t0`` is where the initial condition holds.
    residual_fn : callable
        Vectorised ``t -> r(t)`` for the scalar equation.
    ingredients : BoundIngredients
    n_partitions, points_per_partition : int
        ``N`` equal partitions, each probed at ``K`` equispaced points
        including both ends.

    Returns
    -------
    BoundTable
        With ``S_i = S_{i-1} + eps_i (I(t_i) - I(t_{i-1}))`` and
        ``b_i = S_i / exp(P(t_i))``.
    """
    n, k = int(n_partitions), int(points_per_partition)
    if n < 1 or k < 2:
        raise ValueError("need at least one partition and two points per partition")
    t0, t1 = map(float, domain)
    times = np.linspace(t0, t1, n + 1)
    local = np.linspace(0.0, 1.0, k)
    probe = (times[:-1, None] + (times[1:] - times[:-1])[:, None] * local[None, :]).ravel()
    r = np.asarray(residual_fn(probe), dtype=float).reshape(n, k)
    if not np.all(np.isfinite(r)):
        bad = probe[~np.isfinite(r.ravel())][0]
        raise FloatingPointError(f"non-finite residual at t = {bad}")
    eps = np.max(np.abs(r), axis=1)
    weights = np.abs(np.diff(ingredients.int_exp_P(times)))
    acc = np.concatenate([[0.0], np.cumsum(eps * weights)])
    assert np.all(np.diff(acc) >= 0.0)
    bounds = acc / ingredients.exp_P(times)
    return BoundTable(times, bounds, eps, ingredients.params, n, k, ingredients.model_id)


def integral_bound(t, residual_fn, ingredients: BoundIngredients, x0: float = 0.0) -> float:
    """Reference bound by adaptive quadrature of ``|r| exp(P)``."""
    val = integrate.quad(lambda s: abs(float(np.ravel(residual_fn(np.array([s])))[0]))
                         * float(ingredients.exp_P(s)), x0, t, limit=500)[0]
    return val / float(ingredients.exp_P(t))


def net_residual_fn(det, params):
    """Scalar residual of a trained linear-model bundle at fixed ``params``."""
    params = np.asarray(params, dtype=float)

    def fn(t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return det.residual(t, np.broadcast_to(params, (len(t), len(params))))[:, 0]

    return fn


def bound_table(det, params, n_partitions: int = 100, points_per_partition: int = 50,
                domain=None) -> BoundTable:
    """Bound table for a trained LCDM or CPL bundle at one parameter vector."""
    spec = det.spec
    domain = domain or (spec.ic_point, spec.x_range[1])
    return tight_bounds(domain, net_residual_fn(det, params), ingredients_for(spec, params),
                        n_partitions, points_per_partition)
