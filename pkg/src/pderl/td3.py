"""Twin-delayed deep deterministic policy gradient on flat-parameter nets.

Two variants share this class: state-only (include_mu False) and
state-concatenated-with-mu (include_mu True, appending the normalized
parameter to every network input). For the 2D flow environment an optional
convolutional encoder compresses the raw field before the dense networks;
its weights receive gradients from the critic loss only.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import conv, nets
from .replay import Batch, ReplayBuffer


@dataclass(frozen=True)
class Td3Config:
    gamma: float = 0.99
    rho: float = 0.005
    # noise scales are in action-range units: multiplied by the per-dimension
    # half-range before use
    sigma_explore: float = 0.1
    sigma_target: float = 0.2
    noise_clip: float = 0.5
    policy_delay: int = 2
    batch_size: int = 256
    warmup_steps: int = 1000
    include_mu: bool = False
    hidden: tuple[int, ...] = (256, 256)
    lr: float = 3e-4

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if not 0.0 < self.rho <= 1.0:
            raise ValueError("rho must lie in (0, 1]")
        if self.noise_clip <= 0:
            raise ValueError("noise_clip must be positive")
        if self.policy_delay < 1:
            raise ValueError("policy_delay must be at least 1")


class Td3Agent:
    """Twin critics, Polyak-averaged targets, delayed actor updates."""

    def __init__(self, obs_dim: int, action_dim: int, action_low, action_high,
                 config: Td3Config, rng: np.random.Generator,
                 normalize_mu=None, encoder_spec: conv.EncoderSpec | None = None):
        self.config = config
        self.obs_dim = obs_dim
        self.action_dim = action_dim
        self.low = np.broadcast_to(np.asarray(action_low, float), (action_dim,)).copy()
        self.high = np.broadcast_to(np.asarray(action_high, float), (action_dim,)).copy()
        if np.any(self.low >= self.high):
            raise ValueError("action_low must be strictly below action_high")
        self.center = 0.5 * (self.low + self.high)
        self.half = 0.5 * (self.high - self.low)
        self.normalize_mu = normalize_mu if normalize_mu is not None else lambda m: m

        self.encoder_spec = encoder_spec
        if encoder_spec is not None:
            expected = encoder_spec.input_hw ** 2 * encoder_spec.in_channels
            if obs_dim != expected:
                raise ValueError(f"obs_dim {obs_dim} does not match encoder "
                                 f"input {expected}")
            self.enc_params, self.enc_stats = conv.encoder_init(encoder_spec, rng)
            self.enc_opt = nets.AdamState.for_params(self.enc_params, lr=config.lr)
            feat_dim = encoder_spec.out_dim
        else:
            feat_dim = obs_dim
        self.feat_dim = feat_dim

        extra = 1 if config.include_mu else 0
        self.actor_spec = nets.mlp_spec(
            (feat_dim + extra, *config.hidden, action_dim), out_activation="tanh")
        self.critic_spec = nets.mlp_spec(
            (feat_dim + extra + action_dim, *config.hidden, 1))
        self.actor = nets.init_params(self.actor_spec, rng)
        self.critic1 = nets.init_params(self.critic_spec, rng)
        self.critic2 = nets.init_params(self.critic_spec, rng)
        self.target_actor = self.actor.copy()
        self.target_critic1 = self.critic1.copy()
        self.target_critic2 = self.critic2.copy()
        self.actor_opt = nets.AdamState.for_params(self.actor, lr=config.lr)
        self.critic1_opt = nets.AdamState.for_params(self.critic1, lr=config.lr)
        self.critic2_opt = nets.AdamState.for_params(self.critic2, lr=config.lr)

        self.global_step = 0
        self.critic_updates = 0
        self.actor_updates = 0
        self._last_targets = None

    # -- observation pipeline ------------------------------------------------

    def _encode_batch(self, obs: np.ndarray) -> np.ndarray:
        """Inference-mode features for a [B, obs_dim] batch."""
        if self.encoder_spec is None:
            return obs
        s = self.encoder_spec
        fields = obs.reshape(-1, s.input_hw, s.input_hw, s.in_channels)
        return conv.encode(s, self.enc_params, self.enc_stats, fields)

    def _with_mu(self, feats: np.ndarray, mu: np.ndarray) -> np.ndarray:
        if not self.config.include_mu:
            return feats
        col = np.asarray(self.normalize_mu(mu), dtype=float).reshape(-1, 1)
        return np.hstack([feats, col])

    # -- acting --------------------------------------------------------------

    def select_action(self, obs: np.ndarray, mu: float, explore: bool,
                      rng: np.random.Generator | None = None) -> np.ndarray:
        obs = np.asarray(obs, dtype=float)
        if obs.shape != (self.obs_dim,):
            raise ValueError(f"obs shape {obs.shape}, expected ({self.obs_dim},)")
        if self.encoder_spec is None:
            feat = obs
        else:
            s = self.encoder_spec
            field = obs.reshape(s.input_hw, s.input_hw, s.in_channels)
            feat = conv.encode(s, self.enc_params, self.enc_stats, field)
        if self.config.include_mu:
            feat = np.concatenate([feat, [float(self.normalize_mu(mu))]])
        raw = nets.mlp_forward(self.actor_spec, self.actor, feat)
        action = self.center + self.half * raw
        if explore:
            action = action + rng.normal(0.0, self.config.sigma_explore * self.half)
        return np.clip(action, self.low, self.high)

    # -- learning ------------------------------------------------------------

    def compute_td_target(self, batch: Batch, rng: np.random.Generator) -> np.ndarray:
        """r + gamma * min(Q1bar, Q2bar) at the smoothed target action.

        done transitions bootstrap nothing; horizon ends are stored with
        done False so the time limit does not masquerade as dynamics.
        """
        c = self.config
        x = self._with_mu(self._encode_batch(batch.next_obs), batch.mu)
        raw = nets.forward_batch(self.actor_spec, self.target_actor, x)
        u = self.center + self.half * raw
        noise = rng.normal(0.0, c.sigma_target * self.half, size=u.shape)
        noise = np.clip(noise, -c.noise_clip * self.half, c.noise_clip * self.half)
        u = np.clip(u + noise, self.low, self.high)
        xq = np.hstack([x, u])
        q1 = nets.forward_batch(self.critic_spec, self.target_critic1, xq)[:, 0]
        q2 = nets.forward_batch(self.critic_spec, self.target_critic2, xq)[:, 0]
        qmin = np.minimum(q1, q2)
        assert np.all(qmin <= q1) and np.all(qmin <= q2)
        return batch.reward + c.gamma * ~batch.done * qmin

    def update_critics(self, batch: Batch, rng: np.random.Generator
                       ) -> tuple[float, float]:
        targets = self.compute_td_target(batch, rng)
        self._last_targets = targets
        b = len(batch)
        if self.encoder_spec is None:
            feats, enc_cache, new_stats = batch.obs, None, None
        else:
            s = self.encoder_spec
            fields = batch.obs.reshape(-1, s.input_hw, s.input_hw, s.in_channels)
            enc_cache = []
            feats, new_stats = conv.encode_train(
                s, self.enc_params, self.enc_stats, fields, enc_cache)
        x = self._with_mu(feats, batch.mu)
        xq = np.hstack([x, batch.action])

        losses = []
        grad_x = np.zeros_like(xq)
        for params, opt_name in ((self.critic1, "critic1_opt"),
                                 (self.critic2, "critic2_opt")):
            cache = []
            q = nets.forward_batch(self.critic_spec, params, xq, cache)[:, 0]
            err = q - targets
            loss = float(np.mean(err ** 2))
            if not np.isfinite(loss):
                raise ValueError(
                    f"non-finite critic loss {loss}: |q|max={np.abs(q).max()}, "
                    f"|r|max={np.abs(batch.reward).max()}, "
                    f"|obs|max={np.abs(batch.obs).max()}")
            upstream = (2.0 / b) * err[:, None]
            grad, gx = nets.backward_batch(self.critic_spec, params, cache, upstream)
            setattr(self, opt_name,
                    nets.adam_step_inplace(params, grad, getattr(self, opt_name)))
            grad_x += gx
            losses.append(loss)

        if self.encoder_spec is not None:
            enc_grad, _ = conv.encode_backward(
                self.encoder_spec, self.enc_params, enc_cache,
                grad_x[:, :self.feat_dim])
            self.enc_opt = nets.adam_step_inplace(self.enc_params, enc_grad,
                                                  self.enc_opt)
            self.enc_stats = new_stats
        self.critic_updates += 1
        return losses[0], losses[1]

    def update_actor(self, batch: Batch) -> float:
        # encoder treated as a frozen featurizer here: gradients reach it
        # through the critic loss only
        x = self._with_mu(self._encode_batch(batch.obs), batch.mu)
        b = len(batch)
        cache_a = []
        raw = nets.forward_batch(self.actor_spec, self.actor, x, cache_a)
        u = self.center + self.half * raw
        xq = np.hstack([x, u])
        cache_q = []
        q1 = nets.forward_batch(self.critic_spec, self.critic1, xq, cache_q)[:, 0]
        loss = float(-np.mean(q1))
        if not np.isfinite(loss):
            raise ValueError(f"non-finite actor loss {loss}")
        upstream = np.full((b, 1), -1.0 / b)
        _, gx = nets.backward_batch(self.critic_spec, self.critic1, cache_q, upstream)
        grad_raw = gx[:, x.shape[1]:] * self.half
        grad, _ = nets.backward_batch(self.actor_spec, self.actor, cache_a, grad_raw)
        self.actor_opt = nets.adam_step_inplace(self.actor, grad, self.actor_opt)
        self.actor_updates += 1
        return loss

    def soft_update(self) -> None:
        rho = self.config.rho
        nets.polyak_inplace(self.target_actor, self.actor, rho)
        nets.polyak_inplace(self.target_critic1, self.critic1, rho)
        nets.polyak_inplace(self.target_critic2, self.critic2, rho)

    def train_step(self, buffer: ReplayBuffer, rng: np.random.Generator) -> dict:
        self.global_step += 1
        c = self.config
        if self.global_step <= c.warmup_steps or len(buffer) < c.batch_size:
            return {"updated": False, "global_step": self.global_step}
        batch = buffer.sample(c.batch_size, rng)
        loss1, loss2 = self.update_critics(batch, rng)
        diag = {"updated": True, "global_step": self.global_step,
                "critic_loss1": loss1, "critic_loss2": loss2,
                "q_target_mean": float(self._last_targets.mean()),
                "q_target_std": float(self._last_targets.std())}
        if self.critic_updates % c.policy_delay == 0:
            diag["actor_loss"] = self.update_actor(batch)
            self.soft_update()
        return diag

    # -- checkpointing ---------------------------------------------------------

    def state_arrays(self) -> dict[str, np.ndarray]:
        """Live views of every array that defines the agent's state."""
        d = {"actor": self.actor, "critic1": self.critic1, "critic2": self.critic2,
             "target_actor": self.target_actor,
             "target_critic1": self.target_critic1,
             "target_critic2": self.target_critic2}
        for name in ("actor_opt", "critic1_opt", "critic2_opt"):
            opt = getattr(self, name)
            d[f"{name}.m"] = opt.m
            d[f"{name}.v"] = opt.v
        if self.encoder_spec is not None:
            d["enc_params"] = self.enc_params
            d["enc_opt.m"] = self.enc_opt.m
            d["enc_opt.v"] = self.enc_opt.v
            for k, v in self.enc_stats.items():
                d[f"enc_stats.{k}"] = v
        return d

    def state_counters(self) -> dict[str, int]:
        d = {"global_step": self.global_step,
             "critic_updates": self.critic_updates,
             "actor_updates": self.actor_updates,
             "actor_opt.t": self.actor_opt.t,
             "critic1_opt.t": self.critic1_opt.t,
             "critic2_opt.t": self.critic2_opt.t}
        if self.encoder_spec is not None:
            d["enc_opt.t"] = self.enc_opt.t
        return d

    def restore_state(self, arrays: dict, counters: dict) -> None:
        from dataclasses import replace
        for name, live in self.state_arrays().items():
            live[:] = arrays[name]
        self.global_step = int(counters["global_step"])
        self.critic_updates = int(counters["critic_updates"])
        self.actor_updates = int(counters["actor_updates"])
        for name in ("actor_opt", "critic1_opt", "critic2_opt"):
            setattr(self, name,
                    replace(getattr(self, name), t=int(counters[f"{name}.t"])))
        if self.encoder_spec is not None:
            self.enc_opt = replace(self.enc_opt, t=int(counters["enc_opt.t"]))
