"""The four expansion-history ODE systems: right-hand sides, initial conditions,
initial-condition enforcement, Hubble-rate maps and reference solutions.

Every system is written as ``du/dx = rhs(x, u, params)`` with ``x`` the
independent variable (redshift ``z`` unless Quintessence is configured to use
e-folds ``N``).  Parameter vectors always follow ``ModelSpec.param_names``.

============  =========  ==================  ====================
model         state      param_names         network inputs
============  =========  ==================  ====================
lcdm          x_m        Om0                 z, Om0
cpl           x_DE       w0, w1, Om0         z, w0, w1
quintessence  x, y       lam, Om0            z, lam, Om0
hs            x,y,v,Om,r b, Om0              z, b, Om0
============  =========  ==================  ====================

CPL is linear and homogeneous, so its solution is ``(1 - Om0)`` times the
unit-initial-value solution; the bundle network only sees ``(z, w0, w1)`` and
the ``Om0`` dependence enters through the initial value (``ic_scaled``).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

MODEL_IDS = ("lcdm", "cpl", "quintessence", "hs")
SQRT6_HALF = math.sqrt(6.0) / 2.0


class SingularityError(FloatingPointError):
    """The right-hand side is singular at the requested point."""


class HubbleDomainError(ValueError):
    """Negative radicand in a Hubble map: the state is not a physical solution."""

    def __init__(self, model_id, z, state):
        self.model_id, self.z, self.state = model_id, z, state
        super().__init__(f"{model_id}: negative radicand in H(z) at z={z!r}, state={state!r}")


@dataclass(frozen=True)
class ModelSpec:
    model_id: str
    state_names: tuple[str, ...]
    param_names: tuple[str, ...]
    bundle_param_names: tuple[str, ...]
    param_box: dict = field(hash=False)
    x_range: tuple[float, float] = (0.0, 3.0)
    ood_range: tuple[float, float] | None = (3.0, 4.0)
    ic_point: float = 0.0
    direction: int = 1
    ic_scaled: bool = False
    variable: str = "z"
    z0: float | None = None

    @property
    def state_dim(self) -> int:
        return len(self.state_names)

    @property
    def n_params(self) -> int:
        return len(self.param_names)

    @property
    def input_dim(self) -> int:
        return 1 + len(self.bundle_param_names)

    @property
    def bundle_index(self) -> list[int]:
        return [self.param_names.index(n) for n in self.bundle_param_names]

    def bundle_box(self) -> np.ndarray:
        return np.array([self.param_box[n] for n in self.bundle_param_names], dtype=float)

    def network_inputs(self, x, params) -> np.ndarray:
        """Rows of ``(x, bundle params...)`` fed to a bundle network."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        params = _as_rows(params, self.n_params, len(x))
        return np.column_stack([x, params[:, self.bundle_index]])

    def full_params(self, bundle_rows, **fixed) -> np.ndarray:
        """Expand rows of bundle parameters to full parameter rows.

        Parameters outside the bundle default to the reference value used for
        training (``Om0 = 0`` for CPL, which makes the initial value exactly 1).
        """
        bundle_rows = np.atleast_2d(np.asarray(bundle_rows, dtype=float))
        out = np.zeros((len(bundle_rows), self.n_params))
        for j, name in enumerate(self.param_names):
            if name in self.bundle_param_names:
                out[:, j] = bundle_rows[:, self.bundle_param_names.index(name)]
            else:
                out[:, j] = fixed.get(name, 0.0)
        return out

    def with_options(self, **kw) -> "ModelSpec":
        return replace(self, **kw)


def _as_rows(params, p: int, n: int | None = None) -> np.ndarray:
    params = np.asarray(params, dtype=float)
    if params.ndim == 1:
        if params.shape[0] != p:
            raise ValueError(f"expected {p} parameters, got {params.shape[0]}")
        params = params[None, :]
    if params.shape[1] != p:
        raise ValueError(f"expected {p} parameter columns, got {params.shape[1]}")
    if n is not None and params.shape[0] == 1 and n > 1:
        params = np.repeat(params, n, axis=0)
    return params


def get_model(model_id: str, **options) -> ModelSpec:
    """Model by CLI id (``lcdm | cpl | quintessence | hs``) with default boxes and regions."""
    model_id = model_id.lower()
    if model_id == "lcdm":
        spec = ModelSpec("lcdm", ("x_m",), ("Om0",), ("Om0",), {"Om0": (0.1, 0.4)})
    elif model_id == "cpl":
        spec = ModelSpec("cpl", ("x_DE",), ("w0", "w1", "Om0"), ("w0", "w1"),
                         {"w0": (-2.0, 0.0), "w1": (-4.0, 1.0), "Om0": (0.1, 0.4)},
                         ic_scaled=True)
    elif model_id == "quintessence":
        z0 = float(options.pop("z0", 10.0))
        variable = options.pop("variable", "z")
        box = {"lam": (0.0, 3.0), "Om0": (0.1, 0.4)}
        if variable == "z":
            spec = ModelSpec("quintessence", ("x", "y"), ("lam", "Om0"), ("lam", "Om0"), box,
                             x_range=(0.0, z0), ood_range=(-0.2, 0.0), ic_point=z0,
                             direction=-1, z0=z0)
        elif variable == "N":
            n0 = -math.log1p(z0)
            spec = ModelSpec("quintessence", ("x", "y"), ("lam", "Om0"), ("lam", "Om0"), box,
                             x_range=(n0, 0.0), ood_range=(0.0, -math.log(0.8)),
                             ic_point=n0, direction=1, variable="N", z0=z0)
        else:
            raise ValueError(f"unknown quintessence variable {variable!r}")
    elif model_id == "hs":
        z0 = float(options.pop("z0", 10.0))
        spec = ModelSpec("hs", ("x", "y", "v", "Om", "r"), ("b", "Om0"), ("b", "Om0"),
                         {"b": (0.0, 5.0), "Om0": (0.1, 0.4)},
                         x_range=(0.0, z0), ood_range=(-0.2, 0.0), ic_point=z0,
                         direction=-1, z0=z0)
    else:
        raise ValueError(f"unknown model id {model_id!r}; expected one of {MODEL_IDS}")
    if options:
        spec = spec.with_options(**options)
    return spec


def to_redshift(spec: ModelSpec, x):
    x = np.asarray(x, dtype=float)
    return np.expm1(-x) if spec.variable == "N" else x


# -- right-hand sides ----------------------------------------------------------

def hs_gamma(r, b):
    """Gamma(r) = (r+b)[(r+b)^2 - 2b] / (4 b r)."""
    if np.any(np.asarray(b) == 0) or np.any(np.asarray(r) == 0):
        raise SingularityError("HS Gamma(r) is singular for r = 0 or b = 0")
    rb = r + b
    return rb * (rb * rb - 2.0 * b) / (4.0 * b * r)


def _quintessence_dN(x, y, lam):
    common = 1.0 + x * x - y * y
    dx = -3.0 * x + SQRT6_HALF * lam * y * y + 1.5 * x * common
    dy = -SQRT6_HALF * x * y * lam + 1.5 * y * common
    return dx, dy


def rhs(spec: ModelSpec, x, state, params):
    """Vectorised right-hand side; safe for complex input (used for Jacobians).

    ``x`` has shape (B,), ``state`` (B, n), ``params`` (B, p); a single point
    may be passed with scalar ``x`` and 1-d ``state``/``params``.
    """
    scalar = np.ndim(x) == 0
    x = np.atleast_1d(x)
    state = np.atleast_2d(state)
    params = _as_rows(params, spec.n_params, len(x))
    if spec.variable == "z" and np.any(x == -1):
        raise SingularityError(f"{spec.model_id}: right-hand side singular at z = -1")
    mid = spec.model_id
    if mid == "lcdm":
        out = 3.0 * state / (1.0 + x)[:, None]
    elif mid == "cpl":
        w0, w1 = params[:, 0], params[:, 1]
        factor = 3.0 / (1.0 + x) * (1.0 + w0 + w1 * x / (1.0 + x))
        out = factor[:, None] * state
    elif mid == "quintessence":
        lam = params[:, 0]
        dx, dy = _quintessence_dN(state[:, 0], state[:, 1], lam)
        out = np.stack([dx, dy], axis=1)
        if spec.variable == "z":
            # N = -ln(1+z)  =>  d/dz = -1/(1+z) d/dN
            out = -out / (1.0 + x)[:, None]
    elif mid == "hs":
        b = params[:, 0]
        X, Y, V, Om, R = (state[:, k] for k in range(5))
        g = hs_gamma(R, b)
        zp1 = 1.0 + x
        out = np.stack([
            (-Om - 2 * V + X + 4 * Y + X * V + X * X) / zp1,
            -(V * X * g - X * Y + 4 * Y - 2 * Y * V) / zp1,
            -V * (X * g + 4 - 2 * V) / zp1,
            Om * (-1 + 2 * V + X) / zp1,
            -R * g * X / zp1,
        ], axis=1)
    else:
        raise ValueError(mid)
    return out[0] if scalar else out


def rhs_jacobian(spec: ModelSpec, x, state, params, h: float = 1e-30):
    """d rhs / d state by complex-step differentiation; shape (B, n, n)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    state = np.atleast_2d(np.asarray(state, dtype=float))
    n = state.shape[1]
    if spec.model_id in ("lcdm", "cpl"):
        # linear in the state
        unit = rhs(spec, x, np.ones_like(state), params)
        return unit[:, :, None] * np.ones((1, 1, n))
    jac = np.empty((len(x), n, n))
    for k in range(n):
        pert = state.astype(complex)
        pert[:, k] += 1j * h
        jac[:, :, k] = rhs(spec, x, pert, params).imag / h
    return jac


# -- initial conditions and enforcement ------------------------------------------

def _in_box(spec: ModelSpec, params: np.ndarray) -> bool:
    for j, name in enumerate(spec.param_names):
        if name in spec.param_box and name in spec.bundle_param_names:
            lo, hi = spec.param_box[name]
            if np.any(params[:, j] < lo) or np.any(params[:, j] > hi):
                return False
    return True


def initial_state(spec: ModelSpec, params, warn: bool = False) -> np.ndarray:
    """Initial state at ``spec.ic_point``; shape (B, n) (or (n,) for one parameter vector)."""
    single = np.ndim(params) == 1
    p = _as_rows(params, spec.n_params)
    if warn and not _in_box(spec, p):
        warnings.warn(f"{spec.model_id}: parameters outside the bundle box", stacklevel=2)
    mid = spec.model_id
    if mid == "lcdm":
        u0 = p[:, :1].copy()
    elif mid == "cpl":
        u0 = 1.0 - p[:, 2:3]
    else:
        om = p[:, 1]
        m = om * (1.0 + spec.z0) ** 3
        de = 1.0 - om
        if mid == "quintessence":
            u0 = np.stack([np.zeros_like(om), np.sqrt(de / (m + de))], axis=1)
        else:
            u0 = np.stack([
                np.zeros_like(om),
                (m + 2.0 * de) / (2.0 * (m + de)),
                (m + 4.0 * de) / (2.0 * (m + de)),
                m / (m + de),
                (m + 4.0 * de) / de,
            ], axis=1)
    return u0[0] if single else u0


def enforcement_factor(spec: ModelSpec, x):
    """``c(x) = 1 - exp(-s (x - x0))`` and its derivative ``dc/dx``; ``s`` is the integration direction."""
    x = np.asarray(x, dtype=float)
    s = spec.direction
    e = np.exp(-s * (x - spec.ic_point))
    return -np.expm1(-s * (x - spec.ic_point)), s * e


def enforce_ic(spec: ModelSpec, x, raw_output, params) -> np.ndarray:
    """``u0(params) + c(x) * raw`` (scaled by ``u0`` for linear homogeneous models).

    At ``x = ic_point`` the factor is exactly 0, so the result is exactly ``u0``.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    raw = np.atleast_2d(np.asarray(raw_output, dtype=float))
    u0 = initial_state(spec, _as_rows(params, spec.n_params, len(x)))
    c, _ = enforcement_factor(spec, x)
    scale = u0 if spec.ic_scaled else 1.0
    return u0 + scale * c[:, None] * raw


def enforce_ic_derivative(spec: ModelSpec, x, raw_output, raw_dx, params) -> np.ndarray:
    """d/dx of :func:`enforce_ic` given the network output and its x-derivative."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    u0 = initial_state(spec, _as_rows(params, spec.n_params, len(x)))
    c, dc = enforcement_factor(spec, x)
    scale = u0 if spec.ic_scaled else 1.0
    return scale * (dc[:, None] * raw_output + c[:, None] * raw_dx)


# -- Hubble rate ---------------------------------------------------------------

@dataclass(frozen=True)
class HubbleParams:
    H0: float
    omega_m0: float

    def __post_init__(self):
        if not self.H0 > 0:
            raise ValueError("H0 must be positive")
        if not 0.0 < self.omega_m0 < 1.0:
            raise ValueError("omega_m0 must lie in (0, 1)")


def hubble_radicand(spec: ModelSpec, z, state, omega_m0):
    z = np.asarray(z, dtype=float)
    state = np.asarray(state, dtype=float)
    s = state[..., 0]
    mid = spec.model_id
    if mid == "lcdm":
        return s + 1.0 - omega_m0
    if mid == "cpl":
        return omega_m0 * (1.0 + z) ** 3 + s
    if mid == "quintessence":
        denom = 1.0 - s ** 2 - state[..., 1] ** 2
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(denom > 0, omega_m0 * (1.0 + z) ** 3 / np.where(denom > 0, denom, 1.0), -1.0)
    if mid == "hs":
        v = state[..., 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(v != 0, state[..., 4] * (1.0 - omega_m0) / (2.0 * np.where(v != 0, v, 1.0)), -1.0)
    raise ValueError(mid)


def hubble_array(spec: ModelSpec, z, state, H0, omega_m0):
    """Vectorised H(z); NaN wherever the radicand is not positive."""
    rad = hubble_radicand(spec, z, state, omega_m0)
    with np.errstate(invalid="ignore"):
        return np.where(rad > 0, H0 * np.sqrt(np.where(rad > 0, rad, 1.0)), np.nan)


def hubble(spec: ModelSpec, z: float, state, hp: HubbleParams) -> float:
    """H(z) in km/s/Mpc for one state; raises :class:`HubbleDomainError` on a negative radicand."""
    state = np.asarray(state, dtype=float)
    rad = float(hubble_radicand(spec, z, state, hp.omega_m0))
    if not rad > 0:
        raise HubbleDomainError(spec.model_id, z, state.tolist())
    return hp.H0 * math.sqrt(rad)


# -- reference solutions -----------------------------------------------------------

def analytic_solution(spec: ModelSpec, z, params) -> np.ndarray:
    """Closed forms for LCDM and CPL; shape (B, 1)."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    p = _as_rows(params, spec.n_params, len(z))
    if spec.model_id == "lcdm":
        return (p[:, 0] * (1.0 + z) ** 3)[:, None]
    if spec.model_id == "cpl":
        w0, w1, om = p[:, 0], p[:, 1], p[:, 2]
        return ((1.0 - om) * (1.0 + z) ** (3.0 * (1.0 + w0 + w1))
                * np.exp(-3.0 * w1 * z / (1.0 + z)))[:, None]
    raise ValueError(f"no analytic solution for {spec.model_id}")


def rk_solve(spec: ModelSpec, params, grid, h: float | None = None) -> np.ndarray:
    """Classic fixed-step RK4 from ``ic_point`` through every point of ``grid``.

    ``grid`` must start at ``ic_point`` and move monotonically in the model's
    integration direction.  ``h`` defaults to 1e-4 of the grid span; each
    interval between grid points is split into equal substeps no larger than
    ``h`` so the solver lands exactly on the grid.  ``params`` may be a single
    vector (result (len(grid), n)) or rows (result (m, len(grid), n)).
    """
    grid = np.asarray(grid, dtype=float)
    single = np.ndim(params) == 1
    p = _as_rows(params, spec.n_params)
    if grid.ndim != 1 or len(grid) == 0:
        raise ValueError("grid must be a non-empty 1-d array")
    if not np.isclose(grid[0], spec.ic_point, rtol=0, atol=1e-12):
        raise ValueError(f"grid must start at ic_point={spec.ic_point}")
    steps = np.diff(grid) * spec.direction
    if np.any(steps <= 0):
        raise ValueError("grid must move strictly away from ic_point in the integration direction")
    span = abs(grid[-1] - grid[0])
    if h is None:
        h = 1e-4 * span if span > 0 else 1.0
    u = initial_state(spec, p).astype(float)
    out = np.empty((len(p), len(grid), spec.state_dim))
    out[:, 0] = u
    m = len(p)
    for i in range(1, len(grid)):
        a, b = grid[i - 1], grid[i]
        n_sub = max(1, int(math.ceil(abs(b - a) / h - 1e-9)))
        dt = (b - a) / n_sub
        for j in range(n_sub):
            t = a + j * dt
            tt = np.full(m, t)
            k1 = rhs(spec, tt, u, p)
            k2 = rhs(spec, tt + dt / 2, u + dt / 2 * k1, p)
            k3 = rhs(spec, tt + dt / 2, u + dt / 2 * k2, p)
            k4 = rhs(spec, tt + dt, u + dt * k3, p)
            u = u + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            if not np.all(np.isfinite(u)):
                raise SingularityError(f"{spec.model_id}: solution blew up near x={t + dt:.6g}")
        out[:, i] = u
    return out[0] if single else out


def reference_solution(spec: ModelSpec, x, params, h: float | None = None,
                       method: str = "auto") -> np.ndarray:
    """Oracle values at arbitrary points: analytic where available, RK4 otherwise.

    ``method="rk"`` forces RK4 even when a closed form exists.

    For RK4, points are grouped by parameter vector and each group is
    integrated once on its sorted grid.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    p = _as_rows(params, spec.n_params, len(x))
    if method not in ("auto", "rk"):
        raise ValueError(f"unknown reference method {method!r}")
    if method == "auto" and spec.model_id in ("lcdm", "cpl"):
        return analytic_solution(spec, x, p)
    out = np.empty((len(x), spec.state_dim))
    uniq, inv = np.unique(p, axis=0, return_inverse=True)
    inv = inv.ravel()
    for g in range(len(uniq)):
        idx = np.nonzero(inv == g)[0]
        xs = x[idx]
        order = np.argsort(spec.direction * xs)
        grid, back = np.unique(spec.direction * xs[order], return_inverse=True)
        grid = spec.direction * grid
        if not np.isclose(grid[0], spec.ic_point):
            grid = np.concatenate([[spec.ic_point], grid])
            back = back + 1
        if h is None:
            hh = 1e-3 * max(abs(grid[-1] - grid[0]), 1e-12)
        else:
            hh = h
        sol = rk_solve(spec, uniq[g], grid, h=hh)
        out[idx[order]] = sol[back]
    return out
