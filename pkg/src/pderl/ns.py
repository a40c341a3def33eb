"""2-D incompressible Navier-Stokes control environment.

Collocated 21x21 grid on the unit square, explicit upwind advection and
central diffusion, Chorin-style projection each substep. The scalar control
sets the tangential velocity along the bottom boundary; all other walls are
zero Dirichlet. Tracking target is a stored reference trajectory generated
from rest with a fixed boundary-control schedule.

The projection solves D D^T w = div(u*) with CG, where D is the central
divergence at interior nodes and D^T its exact adjoint. Correcting with
-D^T w therefore zeroes the discrete interior divergence to solver
tolerance, which a wide-stencil pressure Poisson approach cannot do on a
collocated grid. The single checkerboard null mode of D D^T is deflated;
its compatibility condition holds exactly because the normal velocity
vanishes on every wall.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

MU_TRAIN_SET = (0.01, 0.025, 0.05, 0.075, 0.1)
MU_EVAL_RANGE = (0.009, 0.12)


def normalize_mu(mu):
    """Map the training range [0.01, 0.1] onto [-1, 1]."""
    return (np.asarray(mu, dtype=float) - 0.055) / 0.045

_REF_MAGIC = b"NSREF 1\n"


class NsBlowupError(RuntimeError):
    def __init__(self, t_index: int, mu: float):
        super().__init__(f"velocity field blew up at control step {t_index} (mu={mu})")
        self.t_index = t_index
        self.mu = mu


class PoissonSolveError(RuntimeError):
    def __init__(self, residual: float, iterations: int):
        super().__init__(f"pressure solve stalled at residual {residual:.3e} "
                         f"after {iterations} iterations")
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class NsConfig:
    nx: int = 21                 # nodes per side, must be odd
    rho: float = 1.0
    action_weight: float = 0.01  # alpha in the reward
    control_dt: float = 0.01
    horizon: int = 20
    u_ref: float = 2.0
    mu_ref: float = 0.1
    action_low: float = 0.0
    action_high: float = 4.0
    cg_tol: float = 1e-8
    cg_maxiter: int = 4000
    blowup_limit: float = 1e3

    def __post_init__(self):
        if self.nx < 5 or self.nx % 2 == 0:
            raise ValueError("nx must be odd and at least 5")

    @property
    def h(self) -> float:
        return 1.0 / (self.nx - 1)

    @property
    def n_state(self) -> int:
        return self.nx * self.nx * 2


@dataclass(frozen=True)
class NsState:
    velocity: np.ndarray   # [nx, nx, 2], component 0 = x, 1 = y
    pressure: np.ndarray   # [nx, nx]
    t_index: int
    mu: float


def control_schedule(t: float) -> float:
    """Boundary control used to generate the reference trajectory."""
    return 3.0 - 5.0 * t


def _apply_bcs(vel: np.ndarray, u_bottom: float) -> None:
    """Dirichlet walls in place: bottom tangential = u_bottom, rest zero."""
    vel[0, 1:, :] = 0.0    # left wall (above the bottom corner)
    vel[-1, 1:, :] = 0.0   # right wall
    vel[:, -1, :] = 0.0    # top wall
    vel[:, 0, 0] = u_bottom
    vel[:, 0, 1] = 0.0


def _divergence_interior(vel: np.ndarray, h: float) -> np.ndarray:
    """Central-difference divergence at interior nodes, [nx-2, nx-2]."""
    vx, vy = vel[..., 0], vel[..., 1]
    return ((vx[2:, 1:-1] - vx[:-2, 1:-1]) + (vy[1:-1, 2:] - vy[1:-1, :-2])) / (2 * h)


def _div_adjoint(w: np.ndarray, h: float) -> np.ndarray:
    """Adjoint of _divergence_interior: interior scalar -> full velocity field.

    Nonzero only at interior nodes; equals minus the central gradient of w
    extended by zero.
    """
    n = w.shape[0] + 2
    wp = np.zeros((n, n))
    wp[1:-1, 1:-1] = w
    out = np.zeros((n, n, 2))
    out[1:-1, 1:-1, 0] = (wp[:-2, 1:-1] - wp[2:, 1:-1]) / (2 * h)
    out[1:-1, 1:-1, 1] = (wp[1:-1, :-2] - wp[1:-1, 2:]) / (2 * h)
    return out


def _checkerboard_null(n_int: int) -> np.ndarray:
    """Unit-norm null vector of D D^T: odd-odd interior nodes."""
    psi = np.zeros((n_int, n_int))
    psi[::2, ::2] = 1.0  # interior index 0 is global node 1
    return psi / np.linalg.norm(psi)


class NsEnv:
    def __init__(self, config: NsConfig = NsConfig(),
                 reference: np.ndarray | None = None):
        self.config = config
        self._psi = _checkerboard_null(config.nx - 2)
        if reference is not None:
            expected = (config.horizon + 1, config.nx, config.nx, 2)
            if reference.shape != expected:
                raise ValueError(f"reference shape {reference.shape} != {expected}")
        self.reference = reference

    @property
    def obs_dim(self) -> int:
        return self.config.n_state

    @property
    def action_dim(self) -> int:
        return 1

    @property
    def action_bounds(self) -> tuple[float, float]:
        return (self.config.action_low, self.config.action_high)

    # --- dynamics -----------------------------------------------------------

    def _advect_diffuse(self, vel: np.ndarray, dt: float, mu: float) -> np.ndarray:
        h = self.config.h
        out = vel.copy()
        for c in (0, 1):
            f = vel[..., c]
            vx = vel[1:-1, 1:-1, 0]
            vy = vel[1:-1, 1:-1, 1]
            dx_back = (f[1:-1, 1:-1] - f[:-2, 1:-1]) / h
            dx_fwd = (f[2:, 1:-1] - f[1:-1, 1:-1]) / h
            dy_back = (f[1:-1, 1:-1] - f[1:-1, :-2]) / h
            dy_fwd = (f[1:-1, 2:] - f[1:-1, 1:-1]) / h
            adv = (np.where(vx > 0, vx * dx_back, vx * dx_fwd)
                   + np.where(vy > 0, vy * dy_back, vy * dy_fwd))
            lap = (f[2:, 1:-1] + f[:-2, 1:-1] + f[1:-1, 2:] + f[1:-1, :-2]
                   - 4 * f[1:-1, 1:-1]) / h ** 2
            out[1:-1, 1:-1, c] = f[1:-1, 1:-1] + dt * (mu * lap - adv)
        return out

    def _project(self, vel: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
        """Make the interior divergence vanish; returns (velocity, w)."""
        c = self.config
        h = c.h
        b = _divergence_interior(vel, h)
        b = b - (np.sum(b * self._psi)) * self._psi
        w = np.zeros_like(b)
        r = b.copy()
        rs = float(np.sum(r * r))
        if np.sqrt(rs) <= c.cg_tol:
            return vel, w
        p = r.copy()
        for it in range(c.cg_maxiter):
            ap = _divergence_interior(_div_adjoint(p, h), h)
            alpha = rs / float(np.sum(p * ap))
            w += alpha * p
            r -= alpha * ap
            rs_new = float(np.sum(r * r))
            if np.sqrt(rs_new) <= c.cg_tol:
                break
            p = r + (rs_new / rs) * p
            rs = rs_new
        else:
            raise PoissonSolveError(np.sqrt(rs), c.cg_maxiter)
        w -= (np.sum(w * self._psi)) * self._psi
        return vel - _div_adjoint(w, h), w

    def step(self, state: NsState, action) -> tuple[NsState, float]:
        c = self.config
        if self.reference is None:
            raise ValueError("env has no reference trajectory; pass one at construction")
        if state.t_index >= c.horizon:
            raise ValueError(f"episode is over (t_index={state.t_index})")
        u = float(np.clip(np.asarray(action, dtype=np.float64).reshape(-1)[0],
                          c.action_low, c.action_high))
        vel, w, dt_last = self._advance(state.velocity, u, state.t_index, state.mu)
        pressure = np.zeros((c.nx, c.nx))
        pressure[1:-1, 1:-1] = -c.rho * w / dt_last
        t_next = state.t_index + 1
        diff = vel - self.reference[t_next]
        r = (-0.5 * float(np.mean(diff * diff))
             - 0.5 * c.action_weight * (u - c.u_ref) ** 2)
        return NsState(velocity=vel, pressure=pressure, t_index=t_next,
                       mu=state.mu), r

    def observation(self, state: NsState) -> np.ndarray:
        return state.velocity.ravel()

    def reward_terms(self, next_state: NsState, action) -> tuple[float, float]:
        """(state cost, weighted action cost) of the step that produced
        next_state; reward = -0.5 * (sum of the two)."""
        c = self.config
        u = float(np.clip(np.asarray(action, dtype=np.float64).reshape(-1)[0],
                          c.action_low, c.action_high))
        diff = next_state.velocity - self.reference[next_state.t_index]
        return float(np.mean(diff * diff)), c.action_weight * (u - c.u_ref) ** 2

    def _advance(self, velocity: np.ndarray, u: float, t_index: int,
                 mu: float) -> tuple[np.ndarray, np.ndarray, float]:
        c = self.config
        h = c.h
        vel = velocity.copy()
        _apply_bcs(vel, u)
        if not np.isfinite(vel).all() or np.abs(vel).max() > c.blowup_limit:
            raise NsBlowupError(t_index, mu)
        remaining = c.control_dt
        w = np.zeros((c.nx - 2, c.nx - 2))
        dt = c.control_dt
        while remaining > 1e-14:
            vmax = float(np.abs(vel).max())
            adv_max = float((np.abs(vel[..., 0]) + np.abs(vel[..., 1])).max())
            bound = 0.25 * h * h / mu
            if vmax > 0:
                bound = min(bound, 0.5 * h / vmax)
            if adv_max > 0:
                bound = min(bound, 1.0 / (4 * mu / h ** 2 + adv_max / h))
            dt = min(bound, remaining)
            star = self._advect_diffuse(vel, dt, mu)
            _apply_bcs(star, u)
            if not np.isfinite(star).all() or np.abs(star).max() > c.blowup_limit:
                raise NsBlowupError(t_index, mu)
            vel, w = self._project(star, dt)
            remaining -= dt
        return vel, w, dt

    # --- episodes -----------------------------------------------------------

    def reset(self, rng: np.random.Generator, mode: str = "train",
              mu_override: float | None = None) -> NsState:
        c = self.config
        if mode not in ("train", "eval"):
            raise ValueError(f"unknown reset mode {mode!r}")
        if mu_override is not None:
            if mu_override <= 0:
                raise ValueError(f"viscosity must be positive, got {mu_override}")
            mu = float(mu_override)
        elif mode == "train":
            mu = float(MU_TRAIN_SET[rng.integers(len(MU_TRAIN_SET))])
        else:
            mu = float(rng.uniform(*MU_EVAL_RANGE))
        velocity = rng.uniform(-5.0, 5.0, (c.nx, c.nx, 2))
        pressure = rng.uniform(-5.0, 5.0, (c.nx, c.nx))
        _apply_bcs(velocity, 0.0)
        return NsState(velocity=velocity, pressure=pressure, t_index=0, mu=mu)


# --- reference trajectory ----------------------------------------------------

def generate_reference(path: str, config: NsConfig = NsConfig()) -> np.ndarray:
    """Roll the control schedule from rest at mu_ref and persist the fields.

    Idempotent: an existing file is loaded and returned unchanged.
    """
    if os.path.exists(path):
        return load_reference(path, config)
    c = config
    env = NsEnv(c, reference=np.zeros((c.horizon + 1, c.nx, c.nx, 2)))
    fields = np.zeros((c.horizon + 1, c.nx, c.nx, 2))
    vel = np.zeros((c.nx, c.nx, 2))
    for k in range(c.horizon):
        u = control_schedule(k * c.control_dt)
        vel, _, _ = env._advance(vel, u, k, c.mu_ref)
        fields[k + 1] = vel
    header = {
        "grid": c.nx,
        "steps": c.horizon,
        "mu_ref": c.mu_ref,
        "control_dt": c.control_dt,
        "schedule": "3 - 5*t",
        "dtype": "<f8",
        "shape": list(fields.shape),
    }
    blob = _REF_MAGIC + (json.dumps(header, sort_keys=True) + "\n").encode() \
        + fields.astype("<f8").tobytes()
    tmp = path + ".tmp"
    with open(tmp, "wb") as f:
        f.write(blob)
    os.replace(tmp, path)
    return fields


def load_reference(path: str, config: NsConfig = NsConfig()) -> np.ndarray:
    with open(path, "rb") as f:
        magic = f.readline()
        if magic != _REF_MAGIC:
            raise ValueError(f"{path} is not a reference trajectory file")
        header = json.loads(f.readline().decode())
        data = f.read()
    shape = tuple(header["shape"])
    if header["grid"] != config.nx or header["steps"] != config.horizon:
        raise ValueError(f"reference header {header} does not match config")
    fields = np.frombuffer(data, dtype="<f8").reshape(shape).astype(np.float64)
    return fields
