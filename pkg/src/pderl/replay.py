"""Fixed-capacity FIFO experience memory with uniform mini-batch sampling."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Batch:
    obs: np.ndarray        # [B, obs_dim]
    action: np.ndarray     # [B, action_dim]
    reward: np.ndarray     # [B]
    next_obs: np.ndarray   # [B, obs_dim]
    mu: np.ndarray         # [B]
    done: np.ndarray       # [B] bool; True cuts bootstrapping

    def __len__(self) -> int:
        return self.obs.shape[0]


class ReplayBuffer:
    """Ring buffer over transitions (y, u, r, y', mu, done).

    Storage grows geometrically up to capacity so small runs stay small;
    once full, the oldest transitions are overwritten first.
    """

    def __init__(self, obs_dim: int, action_dim: int, capacity: int = 1_000_000):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.obs_dim = obs_dim
        self.action_dim = action_dim
        self.capacity = capacity
        self.size = 0
        self._cursor = 0
        self._alloc = min(1024, capacity)
        self._obs = np.empty((self._alloc, obs_dim))
        self._action = np.empty((self._alloc, action_dim))
        self._reward = np.empty(self._alloc)
        self._next_obs = np.empty((self._alloc, obs_dim))
        self._mu = np.empty(self._alloc)
        self._done = np.empty(self._alloc, dtype=bool)

    def __len__(self) -> int:
        return self.size

    def _grow(self) -> None:
        new_alloc = min(self._alloc * 2, self.capacity)
        for name in ("_obs", "_action", "_reward", "_next_obs", "_mu", "_done"):
            old = getattr(self, name)
            fresh = np.empty((new_alloc,) + old.shape[1:], dtype=old.dtype)
            fresh[:self._alloc] = old
            setattr(self, name, fresh)
        self._alloc = new_alloc

    def push(self, obs, action, reward, next_obs, mu, done) -> None:
        obs = np.asarray(obs, dtype=float)
        action = np.asarray(action, dtype=float)
        next_obs = np.asarray(next_obs, dtype=float)
        if obs.shape != (self.obs_dim,) or next_obs.shape != (self.obs_dim,):
            raise ValueError(
                f"observation shape {obs.shape}/{next_obs.shape}, "
                f"expected ({self.obs_dim},)")
        if action.shape != (self.action_dim,):
            raise ValueError(
                f"action shape {action.shape}, expected ({self.action_dim},)")
        if self._cursor == self._alloc and self._alloc < self.capacity:
            self._grow()
        i = self._cursor
        self._obs[i] = obs
        self._action[i] = action
        self._reward[i] = float(reward)
        self._next_obs[i] = next_obs
        self._mu[i] = float(mu)
        self._done[i] = bool(done)
        self._cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        if self.size < batch_size:
            raise ValueError(
                f"buffer holds {self.size} transitions, need {batch_size}")
        idx = rng.integers(0, self.size, size=batch_size)
        return Batch(obs=self._obs[idx], action=self._action[idx],
                     reward=self._reward[idx], next_obs=self._next_obs[idx],
                     mu=self._mu[idx], done=self._done[idx])

    def snapshot(self) -> dict[str, np.ndarray]:
        """Copies of the occupied rows in storage order, plus position scalars."""
        return {"obs": self._obs[:self.size].copy(),
                "action": self._action[:self.size].copy(),
                "reward": self._reward[:self.size].copy(),
                "next_obs": self._next_obs[:self.size].copy(),
                "mu": self._mu[:self.size].copy(),
                "done": self._done[:self.size].copy(),
                "cursor": np.array([self._cursor], dtype=np.int64),
                "size": np.array([self.size], dtype=np.int64)}

    def restore(self, snap: dict[str, np.ndarray]) -> None:
        """Rebuild storage from a snapshot of a buffer with this geometry.

        The allocation is resized to what an uninterrupted run would hold at
        the same fill level, so growth after a restore matches it exactly.
        """
        size = int(snap["size"][0])
        if size > self.capacity:
            raise ValueError(f"snapshot holds {size} rows, capacity {self.capacity}")
        alloc = min(1024, self.capacity)
        while alloc < size:
            alloc = min(alloc * 2, self.capacity)
        self._alloc = alloc
        self._obs = np.empty((alloc, self.obs_dim))
        self._action = np.empty((alloc, self.action_dim))
        self._reward = np.empty(alloc)
        self._next_obs = np.empty((alloc, self.obs_dim))
        self._mu = np.empty(alloc)
        self._done = np.empty(alloc, dtype=bool)
        self._obs[:size] = snap["obs"]
        self._action[:size] = snap["action"]
        self._reward[:size] = snap["reward"]
        self._next_obs[:size] = snap["next_obs"]
        self._mu[:size] = snap["mu"]
        self._done[:size] = snap["done"].astype(bool)
        self.size = size
        self._cursor = int(snap["cursor"][0])
