"""First step: deterministic solution-bundle training by residual minimisation."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from . import models, nn
from .models import ModelSpec

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    model_id: str
    iterations: int = 20_000
    samples_per_dim: int = 64
    lr: float = 1e-3
    seed: int = 0
    hidden: tuple[int, ...] = (32, 32)
    log_every: int = 100
    # exponential decay from lr to lr_final over the run; None keeps lr fixed
    lr_final: float | None = None

    def __post_init__(self):
        if self.iterations < 0:
            raise ValueError("iterations must be non-negative")
        if self.samples_per_dim <= 0:
            raise ValueError("samples_per_dim must be positive")
        self.hidden = tuple(int(h) for h in self.hidden)
        if self.lr <= 0 or (self.lr_final is not None and self.lr_final <= 0):
            raise ValueError("learning rates must be positive")

    def lr_at(self, iteration: int) -> float:
        if self.lr_final is None or self.iterations == 0:
            return self.lr
        return self.lr * (self.lr_final / self.lr) ** (iteration / self.iterations)

    def layer_sizes(self, spec: ModelSpec) -> list[int]:
        return [spec.input_dim, *self.hidden, spec.state_dim]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


@dataclass
class DetSolution:
    params: nn.NetworkParams
    spec: ModelSpec
    train_config: TrainConfig
    final_loss: float = float("nan")
    loss_history: list[tuple[int, float]] = field(default_factory=list)

    def predict(self, x, params) -> np.ndarray:
        u, _ = evaluate(self.spec, self.params, x, params)
        return u

    def residual(self, x, params) -> np.ndarray:
        return residual(self.spec, self.params, x, params)


def sample_batch(spec: ModelSpec, samples_per_dim: int, rng: np.random.Generator,
                 x_range=None) -> np.ndarray:
    """Cartesian product of ``samples_per_dim`` uniform draws per input dimension.

    Returns rows ``(x, bundle params...)``; ``samples_per_dim ** spec.input_dim`` of them.
    """
    lo, hi = spec.x_range if x_range is None else x_range
    axes = [rng.uniform(lo, hi, samples_per_dim)]
    for a, b in spec.bundle_box():
        axes.append(rng.uniform(a, b, samples_per_dim))
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([m.ravel() for m in mesh])


def split_rows(spec: ModelSpec, rows, **fixed):
    """Network-input rows -> (x, full parameter rows)."""
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    return rows[:, 0], spec.full_params(rows[:, 1:], **fixed)


def evaluate(spec: ModelSpec, net: nn.NetworkParams, x, params, derivative: bool = False,
             keep_tape: bool = False):
    """IC-enforced bundle output ``u`` and optionally ``du/dx``.

    Returns ``(u, du_dx_or_None)`` or, with ``keep_tape``, ``(u, du_dx, tape)``.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    params = models._as_rows(params, spec.n_params, len(x))
    inputs = spec.network_inputs(x, params)
    if derivative or keep_tape:
        tape = nn.record(net, inputs, 0 if derivative else None)
        raw, raw_dx = tape.values, tape.output_tangents
    else:
        raw, raw_dx, tape = nn.forward(net, inputs), None, None
    u = models.enforce_ic(spec, x, raw, params)
    du = models.enforce_ic_derivative(spec, x, raw, raw_dx, params) if derivative else None
    if keep_tape:
        return u, du, tape
    return u, du


def output_grads_to_raw(spec: ModelSpec, x, params, g_u, g_du=None):
    """Pull gradients on (u, du/dx) back to gradients on the raw network (values, tangents)."""
    u0 = models.initial_state(spec, params)
    c, dc = models.enforcement_factor(spec, x)
    scale = u0 if spec.ic_scaled else 1.0
    g_raw = scale * c[:, None] * g_u
    g_tan = None
    if g_du is not None:
        g_raw = g_raw + scale * dc[:, None] * g_du
        g_tan = scale * c[:, None] * g_du
    return g_raw, g_tan


def residual(spec: ModelSpec, net: nn.NetworkParams, x, params) -> np.ndarray:
    """``d/dx u~(x) - rhs(x, u~, params)`` for the IC-enforced network; shape (B, n)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    params = models._as_rows(params, spec.n_params, len(x))
    u, du = evaluate(spec, net, x, params, derivative=True)
    return du - models.rhs(spec, x, u, params)


def residual_loss(spec: ModelSpec, net: nn.NetworkParams, x, params, grad: bool = True):
    """Mean over points of the squared residual summed over state components.

    Returns ``(loss, gradient NetworkParams or None)``.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    params = models._as_rows(params, spec.n_params, len(x))
    u, du, tape = evaluate(spec, net, x, params, derivative=True, keep_tape=True)
    r = du - models.rhs(spec, x, u, params)
    loss = float(np.mean(np.sum(r * r, axis=1)))
    if not grad:
        return loss, None
    g_r = 2.0 * r / len(x)
    g_du = g_r
    jac = models.rhs_jacobian(spec, x, u, params)
    g_u = -np.einsum("bc,bck->bk", g_r, jac)
    g_raw, g_tan = output_grads_to_raw(spec, x, params, g_u, g_du)
    return loss, nn.backprop(net, tape, g_raw, g_tan)


def train(cfg: TrainConfig, spec: ModelSpec | None = None, init: nn.NetworkParams | None = None,
          start_iteration: int = 0) -> DetSolution:
    """Adam on the residual loss with a freshly sampled batch at every iteration.

    Deterministic given ``cfg.seed``.  ``init`` continues from existing
    parameters (0 iterations returns them unchanged).
    """
    spec = spec or models.get_model(cfg.model_id)
    ss = np.random.SeedSequence(cfg.seed)
    init_rng, batch_rng, eval_rng = (np.random.default_rng(s) for s in ss.spawn(3))
    net = init.copy() if init is not None else nn.init_params(cfg.layer_sizes(spec), init_rng)
    if net.layer_sizes != cfg.layer_sizes(spec):
        raise nn.ShapeError(f"network layers {net.layer_sizes} do not match config {cfg.layer_sizes(spec)}")
    state = nn.AdamState.for_params(net, lr=cfg.lr)
    history = []
    for it in range(cfg.iterations):
        state.lr = cfg.lr_at(it)
        x, p = split_rows(spec, sample_batch(spec, cfg.samples_per_dim, batch_rng))
        loss, g = residual_loss(spec, net, x, p)
        if not np.isfinite(loss):
            raise FloatingPointError(f"non-finite loss at iteration {start_iteration + it}")
        state, net = nn.adam_step(state, net, g)
        if (it + 1) % cfg.log_every == 0 or it == 0:
            history.append((start_iteration + it + 1, loss))
            if (it + 1) % (cfg.log_every * 50) == 0:
                log.info("%s iter %d loss %.3e", spec.model_id, start_iteration + it + 1, loss)
    final = evaluation_loss(spec, net, cfg.samples_per_dim, eval_rng)
    return DetSolution(net, spec, cfg, final, history)


def evaluation_loss(spec: ModelSpec, net: nn.NetworkParams, samples_per_dim: int,
                    rng: np.random.Generator) -> float:
    x, p = split_rows(spec, sample_batch(spec, samples_per_dim, rng))
    return residual_loss(spec, net, x, p, grad=False)[0]


def model_options(spec: ModelSpec) -> dict:
    """Non-default construction options needed to rebuild ``spec`` with ``get_model``."""
    opts = {}
    if spec.z0 is not None:
        opts["z0"] = spec.z0
    if spec.model_id == "quintessence":
        opts["variable"] = spec.variable
    return opts


def save_solution(path, sol: DetSolution):
    """Checkpoint JSON with the training config, loss and model options alongside the weights."""
    iters = sol.loss_history[-1][0] if sol.loss_history else sol.train_config.iterations
    return nn.save_checkpoint(path, sol.params, sol.spec.model_id, sol.train_config.seed, iters,
                              train_config=sol.train_config.to_dict(),
                              model_options=model_options(sol.spec),
                              final_loss=sol.final_loss,
                              loss_history=[list(h) for h in sol.loss_history])


def load_solution(path) -> DetSolution:
    params, d = nn.load_checkpoint(path)
    spec = models.get_model(d["model_id"], **d.get("model_options", {}))
    cfg_d = dict(d.get("train_config") or {"model_id": d["model_id"],
                                           "hidden": params.layer_sizes[1:-1]})
    cfg_d["hidden"] = tuple(cfg_d.get("hidden", params.layer_sizes[1:-1]))
    cfg = TrainConfig(**cfg_d)
    if params.layer_sizes != cfg.layer_sizes(spec):
        raise nn.ShapeError(f"checkpoint layers {params.layer_sizes} do not fit model {spec.model_id}")
    hist = [tuple(h) for h in d.get("loss_history", [])]
    return DetSolution(params, spec, cfg, float(d.get("final_loss", float("nan"))), hist)
