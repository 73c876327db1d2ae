"""No-U-Turn sampler with multinomial trajectory sampling and dual-averaging step size."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

# energy error beyond which a leapfrog step counts as divergent
DIVERGENCE_THRESHOLD = 1000.0


@dataclass
class NutsResult:
    samples: np.ndarray  # (n_samples, dim)
    log_probs: np.ndarray
    step_size: float
    divergences: int
    mean_accept: float
    tree_depths: np.ndarray

    @property
    def divergence_rate(self) -> float:
        return self.divergences / max(len(self.samples), 1)


class _State:
    __slots__ = ("theta", "r", "grad", "logp")

    def __init__(self, theta, r, grad, logp):
        self.theta, self.r, self.grad, self.logp = theta, r, grad, logp


def leapfrog(logp_fn, theta, r, grad, eps):
    r = r + 0.5 * eps * grad
    theta = theta + eps * r
    logp, grad = logp_fn(theta)
    r = r + 0.5 * eps * grad
    return theta, r, grad, logp


def _energy(st: _State) -> float:
    return -st.logp + 0.5 * float(st.r @ st.r)


class _Tree:
    __slots__ = ("minus", "plus", "proposal", "log_weight", "stop", "sum_accept", "n_steps",
                 "diverged")


def _no_uturn(minus: _State, plus: _State) -> bool:
    d = plus.theta - minus.theta
    return float(d @ minus.r) >= 0.0 and float(d @ plus.r) >= 0.0


def _build(logp_fn, start: _State, direction: int, depth: int, eps: float, h0: float,
           rng: np.random.Generator) -> _Tree:
    if depth == 0:
        theta, r, grad, logp = leapfrog(logp_fn, start.theta, start.r, start.grad,
                                        direction * eps)
        st = _State(theta, r, grad, logp)
        h = _energy(st) if np.isfinite(logp) else np.inf
        t = _Tree()
        t.minus = t.plus = t.proposal = st
        t.log_weight = h0 - h if np.isfinite(h) else -np.inf
        t.diverged = not (h - h0 < DIVERGENCE_THRESHOLD)
        t.stop = t.diverged
        t.sum_accept = min(1.0, float(np.exp(h0 - h))) if np.isfinite(h) else 0.0
        t.n_steps = 1
        return t
    first = _build(logp_fn, start, direction, depth - 1, eps, h0, rng)
    if first.stop:
        return first
    edge = first.plus if direction > 0 else first.minus
    second = _build(logp_fn, edge, direction, depth - 1, eps, h0, rng)
    t = _Tree()
    if direction > 0:
        t.minus, t.plus = first.minus, second.plus
    else:
        t.minus, t.plus = second.minus, first.plus
    t.log_weight = np.logaddexp(first.log_weight, second.log_weight)
    # uniform multinomial choice inside a subtree
    if np.log(rng.uniform()) < second.log_weight - t.log_weight:
        t.proposal = second.proposal
    else:
        t.proposal = first.proposal
    t.diverged = second.diverged
    t.stop = second.stop or not _no_uturn(t.minus, t.plus)
    t.sum_accept = first.sum_accept + second.sum_accept
    t.n_steps = first.n_steps + second.n_steps
    return t


def nuts_step(logp_fn, current: _State, eps: float, rng: np.random.Generator,
              max_depth: int = 10):
    """One NUTS transition.  Returns ``(new state, accept statistic, depth, diverged)``."""
    r0 = rng.standard_normal(current.theta.size)
    start = _State(current.theta, r0, current.grad, current.logp)
    h0 = _energy(start)
    minus = plus = start
    proposal = start
    log_w = 0.0
    sum_accept, n_steps = 0.0, 0
    diverged = False
    depth = 0
    while depth < max_depth:
        direction = 1 if rng.uniform() < 0.5 else -1
        edge = plus if direction > 0 else minus
        sub = _build(logp_fn, edge, direction, depth, eps, h0, rng)
        if direction > 0:
            plus = sub.plus
        else:
            minus = sub.minus
        sum_accept += sub.sum_accept
        n_steps += sub.n_steps
        depth += 1
        if sub.diverged:
            diverged = True
        if sub.stop:
            break
        # biased progressive sampling across the doubling
        if np.log(rng.uniform()) < sub.log_weight - log_w:
            proposal = sub.proposal
        log_w = np.logaddexp(log_w, sub.log_weight)
        if not _no_uturn(minus, plus):
            break
    new = _State(proposal.theta, None, proposal.grad, proposal.logp)
    return new, sum_accept / max(n_steps, 1), depth, diverged


def find_reasonable_step(logp_fn, st: _State, rng: np.random.Generator, eps: float = 1.0):
    """Double or halve ``eps`` until a single leapfrog step's acceptance crosses 1/2."""
    r = rng.standard_normal(st.theta.size)
    h0 = -st.logp + 0.5 * float(r @ r)

    def log_ratio(e):
        _, r1, _, lp = leapfrog(logp_fn, st.theta, r, st.grad, e)
        if not np.isfinite(lp):
            return -np.inf
        return h0 - (-lp + 0.5 * float(r1 @ r1))

    lr = log_ratio(eps)
    up = 1.0 if lr > np.log(0.5) else -1.0
    for _ in range(100):
        if up > 0 and not lr > np.log(0.5):
            break
        if up < 0 and not lr < np.log(0.5):
            break
        eps *= 2.0 ** up
        lr = log_ratio(eps)
    return eps


class DualAveraging:
    """Step-size adaptation toward a target mean acceptance statistic."""

    def __init__(self, eps0: float, target: float = 0.8, gamma: float = 0.05, t0: float = 10.0,
                 kappa: float = 0.75):
        self.mu = np.log(10.0 * eps0)
        self.target, self.gamma, self.t0, self.kappa = target, gamma, t0, kappa
        self.h_bar = 0.0
        self.log_eps = np.log(eps0)
        self.log_eps_bar = 0.0
        self.m = 0

    def update(self, accept: float) -> float:
        self.m += 1
        m = self.m
        w = 1.0 / (m + self.t0)
        self.h_bar = (1 - w) * self.h_bar + w * (self.target - accept)
        self.log_eps = self.mu - np.sqrt(m) / self.gamma * self.h_bar
        eta = m ** -self.kappa
        self.log_eps_bar = eta * self.log_eps + (1 - eta) * self.log_eps_bar
        return float(np.exp(self.log_eps))

    @property
    def final(self) -> float:
        return float(np.exp(self.log_eps_bar))


def nuts_sample(logp_fn, init, n_samples: int, n_tune: int, rng: np.random.Generator,
                target_accept: float = 0.8, max_depth: int = 10,
                step_size: float | None = None) -> NutsResult:
    """Draw ``n_samples`` post-adaptation samples.

    Parameters
    ----------
    logp_fn : callable
        ``theta -> (log density, gradient)``.
    init : array
        Starting point; the log density must be finite there.
    n_tune : int
        Warm-up transitions used for dual-averaging step-size adaptation; they
        are discarded.
    """
    theta = np.array(init, dtype=float)
    logp, grad = logp_fn(theta)
    if not np.isfinite(logp):
        raise ValueError("log density is not finite at the initial point")
    st = _State(theta, None, np.asarray(grad, dtype=float), float(logp))
    eps = step_size or find_reasonable_step(logp_fn, st, rng)
    adapt = DualAveraging(eps, target_accept)
    for _ in range(n_tune):
        st, acc, _, _ = nuts_step(logp_fn, st, eps, rng, max_depth)
        eps = adapt.update(acc)
    if n_tune:
        eps = adapt.final
    samples = np.empty((n_samples, theta.size))
    lps = np.empty(n_samples)
    depths = np.empty(n_samples, dtype=int)
    div = 0
    acc_sum = 0.0
    for i in range(n_samples):
        st, acc, depth, diverged = nuts_step(logp_fn, st, eps, rng, max_depth)
        samples[i] = st.theta
        lps[i] = st.logp
        depths[i] = depth
        div += int(diverged)
        acc_sum += acc
    res = NutsResult(samples, lps, eps, div, acc_sum / max(n_samples, 1), depths)
    if res.divergence_rate > 0.1:
        warnings.warn(f"NUTS: {div} of {n_samples} transitions diverged", RuntimeWarning,
                      stacklevel=2)
    log.info("nuts: step %.3e, accept %.3f, divergences %d", eps, res.mean_accept, div)
    return res
