"""Named hyperparameter sets: ``paper`` (full scale) and ``desk`` (minutes on a laptop)."""
from __future__ import annotations

from .bayes import BayesConfig
from .models import MODEL_IDS
from .training import TrainConfig

PRESETS = ("paper", "desk")

_PAPER_TRAIN = {
    "lcdm": dict(iterations=100_000, samples_per_dim=64),
    "cpl": dict(iterations=100_000, samples_per_dim=128),
    "quintessence": dict(iterations=100_000, samples_per_dim=32),
    "hs": dict(iterations=600_000, samples_per_dim=32),
}

# (16, 16) everywhere keeps HMC over all weights affordable; the decaying
# learning rate lets the output layer reach the O(10) scale of the solutions
# within the short budget
_DESK_TRAIN = {
    "lcdm": dict(iterations=20_000, samples_per_dim=32),
    "cpl": dict(iterations=20_000, samples_per_dim=12),
    "quintessence": dict(iterations=10_000, samples_per_dim=10),
    "hs": dict(iterations=10_000, samples_per_dim=10),
}

# likelihood std used by the homoscedastic and residual likelihoods
LIKELIHOOD_STD = {"lcdm": 0.1, "cpl": 0.01, "quintessence": 0.005, "hs": 0.005}

_PAPER_SPD = {
    "nlm": {"lcdm": 100, "cpl": 100, "quintessence": 32, "hs": 32},
    "bbb": {"lcdm": 64, "cpl": 128, "quintessence": 32, "hs": 32},
    "hmc": {"lcdm": 32, "cpl": 128, "quintessence": 32, "hs": 32},
}
_DESK_SPD = {
    "nlm": {"lcdm": 32, "cpl": 12, "quintessence": 10, "hs": 10},
    "bbb": {"lcdm": 16, "cpl": 8, "quintessence": 8, "hs": 8},
    "hmc": {"lcdm": 16, "cpl": 6, "quintessence": 6, "hs": 6},
}

INVERSE = {
    "paper": dict(walkers=32, steps=10_000, m=50, bound_partitions=100, bound_points=50),
    # coarser bound tables: every proposal needs a fresh table for its own parameters
    "desk": dict(walkers=32, steps=2_000, m=50, bound_partitions=30, bound_points=10),
}


def _check(model_id: str, preset: str):
    if model_id not in MODEL_IDS:
        raise ValueError(f"unknown model {model_id!r}; choose from {MODEL_IDS}")
    if preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}; choose from {PRESETS}")


def train_config(model_id: str, preset: str = "desk", seed: int = 0, **overrides) -> TrainConfig:
    _check(model_id, preset)
    if preset == "paper":
        kw = dict(hidden=(32, 32), lr=1e-3, **_PAPER_TRAIN[model_id])
    else:
        kw = dict(hidden=(16, 16), lr=3e-2, lr_final=1e-4, **_DESK_TRAIN[model_id])
    kw.update({k: v for k, v in overrides.items() if v is not None})
    return TrainConfig(model_id, seed=seed, **kw)


def bayes_config(model_id: str, method: str = "hmc", likelihood: str = "eb",
                 preset: str = "desk", **overrides) -> BayesConfig:
    _check(model_id, preset)
    table = _PAPER_SPD if preset == "paper" else _DESK_SPD
    if method not in table:
        raise ValueError(f"unknown method {method!r}")
    kw = dict(method=method, likelihood=likelihood, sigma=LIKELIHOOD_STD[model_id],
              sigma_prior=1.0, samples_per_dim=table[method][model_id])
    if preset == "paper":
        kw.update(iterations=20_000, lr=1e-3, n_samples=10_000, n_tune=1_000, max_depth=10)
    else:
        kw.update(iterations=5_000, lr=1e-3, n_samples=300, n_tune=200, max_depth=8)
    kw.update({k: v for k, v in overrides.items() if v is not None})
    return BayesConfig(**kw)


def inverse_settings(preset: str = "desk") -> dict:
    if preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}")
    return dict(INVERSE[preset])
