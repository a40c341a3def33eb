"""Kuramoto-Sivashinsky control environment.

1-D KS dynamics y_t = -y y_x - y_xx - y_xxxx - mu cos(4 pi x / L) + u on a
periodic domain, driven by 8 Gaussian actuators. Time stepping is ETDRK4 in
Fourier space (contour-integral coefficients, 2/3-rule dealiasing of the
quadratic term); the parametric cosine forcing and the actuation are held
constant across the substeps of one control interval.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

MU_TRAIN_GRID = tuple(np.round(np.linspace(-0.225, 0.225, 19), 4))
MU_EVAL_RANGE = (-0.25, 0.25)


def normalize_mu(mu):
    """Map the training range [-0.225, 0.225] onto [-1, 1]."""
    return np.asarray(mu, dtype=float) / 0.225


class KsBlowupError(RuntimeError):
    def __init__(self, t_index: int, mu: float):
        super().__init__(f"solution blew up at control step {t_index} (mu={mu})")
        self.t_index = t_index
        self.mu = mu


@dataclass(frozen=True)
class KsConfig:
    domain_length: float = 22.0
    nx: int = 64
    n_actuators: int = 8
    kernel_width: float = 0.8
    action_weight: float = 0.1  # alpha in the reward
    control_dt: float = 0.25
    substeps: int = 5
    horizon: int = 200
    warmup_steps: int = 0       # uncontrolled control steps applied at reset
    blowup_limit: float = 1e3

    def __post_init__(self):
        if self.nx % 2 or self.nx < 16:
            raise ValueError("nx must be even and reasonably large")
        if self.substeps < 1 or self.horizon < 1:
            raise ValueError("substeps and horizon must be positive")


@dataclass(frozen=True)
class KsState:
    y: np.ndarray
    t_index: int
    mu: float


def _etdrk4_coeffs(lin: np.ndarray, dt: float):
    """Exponential integrator coefficients via a contour integral.

    The phi-functions have removable singularities at lin = 0; averaging
    over points on a unit circle around each dt*lin value evaluates them
    stably (standard Kassam-Trefethen construction).
    """
    m = 32
    roots = np.exp(1j * np.pi * (np.arange(m) + 0.5) / m)
    lr = dt * lin[:, None] + roots[None, :]
    e_full = np.exp(dt * lin)
    e_half = np.exp(0.5 * dt * lin)
    q = dt * np.real(np.mean((np.exp(lr / 2) - 1) / lr, axis=1))
    f1 = dt * np.real(np.mean((-4 - lr + np.exp(lr) * (4 - 3 * lr + lr ** 2)) / lr ** 3, axis=1))
    f2 = dt * np.real(np.mean((2 + lr + np.exp(lr) * (lr - 2)) / lr ** 3, axis=1))
    f3 = dt * np.real(np.mean((-4 - 3 * lr - lr ** 2 + np.exp(lr) * (4 - lr)) / lr ** 3, axis=1))
    return e_full, e_half, q, f1, f2, f3


class KsEnv:
    def __init__(self, config: KsConfig = KsConfig()):
        self.config = config
        c = config
        self.x = c.domain_length * np.arange(c.nx) / c.nx
        self.k = 2 * np.pi * np.arange(c.nx // 2 + 1) / c.domain_length
        lin = self.k ** 2 - self.k ** 4
        dt = c.control_dt / c.substeps
        self._dt = dt
        (self._e, self._e2, self._q,
         self._f1, self._f2, self._f3) = _etdrk4_coeffs(lin, dt)
        # 2/3 rule: zero product modes above nx/3 (includes Nyquist)
        self._dealias = (np.arange(c.nx // 2 + 1) <= c.nx // 3).astype(np.float64)
        self._deriv = -0.5j * self.k * self._dealias
        self._cos_forcing = np.cos(4 * np.pi * self.x / c.domain_length)
        self._kernels = self._build_kernels()

    @property
    def obs_dim(self) -> int:
        return self.config.nx

    @property
    def action_dim(self) -> int:
        return self.config.n_actuators

    @property
    def action_bounds(self) -> tuple[float, float]:
        return (-1.0, 1.0)

    def _build_kernels(self) -> np.ndarray:
        c = self.config
        centers = (np.arange(1, c.n_actuators + 1) - 0.5) * c.domain_length / c.n_actuators
        kernels = np.zeros((c.n_actuators, c.nx))
        for i, m in enumerate(centers):
            for shift in (-c.domain_length, 0.0, c.domain_length):
                kernels[i] += 0.5 * np.exp(-(((self.x - m + shift) / c.kernel_width) ** 2))
        return kernels

    def actuation_field(self, action: np.ndarray) -> np.ndarray:
        """Superposed actuator field on the grid; action clipped to [-1, 1]."""
        a = np.clip(np.asarray(action, dtype=np.float64), -1.0, 1.0)
        if a.shape != (self.config.n_actuators,):
            raise ValueError(f"expected action shape ({self.config.n_actuators},), got {a.shape}")
        return a @ self._kernels

    def step(self, state: KsState, action: np.ndarray) -> tuple[KsState, float]:
        c = self.config
        if state.t_index >= c.horizon:
            raise ValueError(f"episode is over (t_index={state.t_index})")
        a = np.clip(np.asarray(action, dtype=np.float64), -1.0, 1.0)
        forcing = self.actuation_field(a) - state.mu * self._cos_forcing
        y = self._advance(state.y, forcing, state.t_index, state.mu)
        reward = -0.5 * float(y @ y) - 0.5 * c.action_weight * float(a @ a)
        return KsState(y=y, t_index=state.t_index + 1, mu=state.mu), reward

    def observation(self, state: KsState) -> np.ndarray:
        return state.y

    def reward_terms(self, next_state: KsState, action) -> tuple[float, float]:
        """(state cost, weighted action cost) of the step that produced
        next_state; reward = -0.5 * (sum of the two)."""
        a = np.clip(np.asarray(action, dtype=np.float64), -1.0, 1.0)
        y = next_state.y
        return float(y @ y), self.config.action_weight * float(a @ a)

    def _advance(self, y: np.ndarray, forcing: np.ndarray, t_index: int,
                 mu: float) -> np.ndarray:
        c = self.config
        f_hat = np.fft.rfft(forcing)
        v = np.fft.rfft(y)

        def nonlin(vh):
            u = np.fft.irfft(vh, n=c.nx)
            return self._deriv * np.fft.rfft(u * u) + f_hat

        # overflow in a diverging trajectory is reported via the finiteness
        # check below, not as a warning
        with np.errstate(all="ignore"):
            for _ in range(c.substeps):
                nv = nonlin(v)
                a = self._e2 * v + self._q * nv
                na = nonlin(a)
                b = self._e2 * v + self._q * na
                nb = nonlin(b)
                cc = self._e2 * a + self._q * (2 * nb - nv)
                nc = nonlin(cc)
                v = self._e * v + nv * self._f1 + 2 * (na + nb) * self._f2 + nc * self._f3
            out = np.fft.irfft(v, n=c.nx)
        if not np.isfinite(out).all() or np.abs(out).max() > c.blowup_limit:
            raise KsBlowupError(t_index, mu)
        return out

    def reset(self, rng: np.random.Generator, mode: str = "train",
              mu_override: float | None = None) -> KsState:
        """Random three-cosine initial profile; mu from the training grid or
        the continuous evaluation range. config.warmup_steps uncontrolled
        control steps are applied before the state is handed out (t_index
        stays 0)."""
        c = self.config
        if mode not in ("train", "eval"):
            raise ValueError(f"unknown reset mode {mode!r}")
        if mu_override is not None:
            lo, hi = MU_EVAL_RANGE
            if not (lo <= mu_override <= hi):
                raise ValueError(f"mu_override {mu_override} outside [{lo}, {hi}]")
            mu = float(mu_override)
        elif mode == "train":
            mu = float(MU_TRAIN_GRID[rng.integers(len(MU_TRAIN_GRID))])
        else:
            mu = float(rng.uniform(*MU_EVAL_RANGE))
        y = np.zeros(c.nx)
        for n in (1, 2, 3):
            amp = rng.uniform(-0.5, 0.5)
            phase = rng.uniform(0.0, 2 * np.pi)
            y += amp * np.cos(2 * np.pi * n * self.x / c.domain_length + phase)
        if c.warmup_steps:
            forcing = -mu * self._cos_forcing
            for i in range(c.warmup_steps):
                y = self._advance(y, forcing, t_index=-c.warmup_steps + i, mu=mu)
        return KsState(y=y, t_index=0, mu=mu)
