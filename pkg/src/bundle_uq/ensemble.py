"""Affine-invariant ensemble sampler (stretch move)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class ChainResult:
    samples: np.ndarray  # (walkers, steps, dim)
    log_probs: np.ndarray  # (walkers, steps)
    acceptance_rate: float
    burn_in: int = 0
    param_names: tuple = ()

    @property
    def n_walkers(self) -> int:
        return self.samples.shape[0]

    @property
    def n_steps(self) -> int:
        return self.samples.shape[1]

    def flat(self, burn_in: int | None = None) -> np.ndarray:
        b = self.burn_in if burn_in is None else burn_in
        return self.samples[:, b:].reshape(-1, self.samples.shape[2])


def draw_stretch(rng: np.random.Generator, size, a: float = 2.0) -> np.ndarray:
    """Samples from ``g(z) ~ 1/sqrt(z)`` on ``[1/a, a]`` by inverse CDF."""
    u = rng.uniform(size=size)
    return ((a - 1.0) * u + 1.0) ** 2 / a


def stretch_sample(log_prob, init, n_steps: int, rng: np.random.Generator, a: float = 2.0,
                   burn_in: int = 0, param_names=()) -> ChainResult:
    """Run the two-half stretch-move ensemble sampler.

    Parameters
    ----------
    log_prob : callable
        ``theta -> log density`` (may return ``-inf``).
    init : (walkers, dim) array
        Initial positions; walkers must be even and at least ``2 * dim``.
    """
    x = np.array(init, dtype=float)
    n_walkers, dim = x.shape
    if n_walkers % 2 or n_walkers < 2 * dim:
        raise ValueError(f"need an even number of walkers >= {2 * dim}, got {n_walkers}")
    lp = np.array([log_prob(w) for w in x])
    if not np.any(np.isfinite(lp)):
        raise ValueError("every initial walker has zero posterior density")
    samples = np.empty((n_walkers, n_steps, dim))
    lps = np.empty((n_walkers, n_steps))
    half = n_walkers // 2
    halves = (np.arange(half), np.arange(half, n_walkers))
    accepted = 0
    for step in range(n_steps):
        for s in (0, 1):
            active, other = halves[s], halves[1 - s]
            z = draw_stretch(rng, half, a)
            partners = x[rng.choice(other, size=half)]
            proposal = partners + z[:, None] * (x[active] - partners)
            lp_new = np.array([log_prob(p) for p in proposal])
            with np.errstate(invalid="ignore"):
                log_ratio = (dim - 1) * np.log(z) + lp_new - lp[active]
                take = np.log(rng.uniform(size=half)) < log_ratio
            # a walker stranded at zero density takes any finite proposal
            take |= ~np.isfinite(lp[active])
            take &= np.isfinite(lp_new)
            idx = active[take]
            x[idx] = proposal[take]
            lp[idx] = lp_new[take]
            accepted += int(take.sum())
        samples[:, step] = x
        lps[:, step] = lp
    rate = accepted / (n_walkers * n_steps) if n_steps else 0.0
    return ChainResult(samples, lps, rate, burn_in, tuple(param_names))


def summarize(chain: ChainResult, burn_in_fraction: float = 0.2) -> dict:
    """Per-parameter mean and std over post-burn-in samples of all walkers."""
    if not 0.0 <= burn_in_fraction < 1.0:
        raise ValueError("burn_in_fraction must lie in [0, 1)")
    b = int(burn_in_fraction * chain.n_steps)
    flat = chain.flat(b)
    if flat.shape[0] == 0:
        raise ValueError("no samples left after burn-in")
    names = chain.param_names or tuple(f"p{i}" for i in range(flat.shape[1]))
    mean, std = flat.mean(axis=0), flat.std(axis=0)
    return {n: {"mean": float(m), "std": float(s)} for n, m, s in zip(names, mean, std)}
