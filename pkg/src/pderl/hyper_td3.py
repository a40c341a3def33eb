"""Hypernetwork-conditioned TD3.

Actor and twin-critic weights are never trained directly: hypernetworks map
a context vector (the PDE parameter alone, or state plus parameter) to the
full flat parameter vector of each main network, and the TD3 objectives are
backpropagated through the generated weights into the hypernetworks. Target
networks are target hypernetworks, so Polyak averaging runs in
hypernetwork-parameter space. Bootstrap targets are always generated from
the successor context.

Within a batch, rows sharing a context produce identical generated weights,
so generation and its backward pass run once per unique context; this is an
exact regrouping of the arithmetic, not an approximation. The
state_and_param variant takes the per-sample path instead because the
encoder needs each row's own context gradient.
"""
from __future__ import annotations

import numpy as np

from . import conv, hyper, nets
from .replay import Batch, ReplayBuffer
from .td3 import Td3Config


def context_build(y, mu, kind: str, normalize_mu=None, encoder=None
                  ) -> hyper.ContextVector:
    """Assemble a hypernetwork input from observation and PDE parameter.

    encoder, when given, maps the raw observation to its feature vector
    before concatenation (the 2D flow case); y is ignored for param_only.
    """
    if kind not in hyper.CONTEXT_KINDS:
        raise ValueError(f"unknown context kind {kind!r}")
    norm = float(normalize_mu(mu)) if normalize_mu is not None else float(mu)
    if kind == "param_only":
        return hyper.ContextVector(kind, np.array([norm]))
    feat = np.asarray(encoder(y) if encoder is not None else y, dtype=float)
    return hyper.ContextVector(kind, np.concatenate([feat, [norm]]))


class HyperlAgent:
    """TD3 whose actor/critic parameters come from context-conditioned
    hypernetworks; shares Td3Config so comparisons against the baselines
    hold every optimization constant."""

    def __init__(self, obs_dim: int, action_dim: int, action_low, action_high,
                 config: Td3Config, context_kind: str, rng: np.random.Generator,
                 normalize_mu=None, encoder_spec: conv.EncoderSpec | None = None,
                 embed_dims: tuple[int, ...] = (64, 64),
                 main_hidden: tuple[int, ...] = (256,)):
        if context_kind not in hyper.CONTEXT_KINDS:
            raise ValueError(f"unknown context kind {context_kind!r}")
        if config.include_mu:
            raise ValueError("hyper agents consume mu through the context; "
                             "include_mu must stay False")
        self.config = config
        self.context_kind = context_kind
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
        self.context_dim = 1 if context_kind == "param_only" else feat_dim + 1

        self.actor_spec = nets.mlp_spec(
            (feat_dim, *main_hidden, action_dim), out_activation="tanh")
        self.critic_spec = nets.mlp_spec((feat_dim + action_dim, *main_hidden, 1))
        self.h_actor_spec = hyper.HyperSpec(self.context_dim, embed_dims,
                                            self.actor_spec)
        self.h_critic_spec = hyper.HyperSpec(self.context_dim, embed_dims,
                                             self.critic_spec)
        self.h_actor = hyper.hyper_init(self.h_actor_spec, rng)
        self.h_critic1 = hyper.hyper_init(self.h_critic_spec, rng)
        self.h_critic2 = hyper.hyper_init(self.h_critic_spec, rng)
        self.target_h_actor = self.h_actor.copy()
        self.target_h_critic1 = self.h_critic1.copy()
        self.target_h_critic2 = self.h_critic2.copy()
        self.actor_opt = nets.AdamState.for_params(self.h_actor, lr=config.lr)
        self.critic1_opt = nets.AdamState.for_params(self.h_critic1, lr=config.lr)
        self.critic2_opt = nets.AdamState.for_params(self.h_critic2, lr=config.lr)

        self.global_step = 0
        self.critic_updates = 0
        self.actor_updates = 0
        self._last_targets = None

    # -- observation and context pipeline -------------------------------------

    def _encode_batch(self, obs: np.ndarray) -> np.ndarray:
        if self.encoder_spec is None:
            return obs
        s = self.encoder_spec
        fields = obs.reshape(-1, s.input_hw, s.input_hw, s.in_channels)
        return conv.encode(s, self.enc_params, self.enc_stats, fields)

    def _context_batch(self, feats: np.ndarray, mu: np.ndarray) -> np.ndarray:
        col = np.asarray(self.normalize_mu(mu), dtype=float).reshape(-1, 1)
        if self.context_kind == "param_only":
            return col
        return np.hstack([feats, col])

    def _eval_mapped(self, spec: nets.MlpSpec, params_u: np.ndarray,
                     inv: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Row i of x through the parameter vector of its context group."""
        b, u = x.shape[0], params_u.shape[0]
        if 2 * u <= b:
            out = np.empty((b, spec.out_dim))
            for g in range(u):
                m = np.flatnonzero(inv == g)
                out[m] = nets.forward_batch(spec, params_u[g], x[m])
            return out
        return nets.forward_each(spec, params_u[inv], x)

    # -- acting ----------------------------------------------------------------

    def select_action(self, obs: np.ndarray, mu: float, explore: bool,
                      rng: np.random.Generator | None = None) -> np.ndarray:
        obs = np.asarray(obs, dtype=float)
        if obs.shape != (self.obs_dim,):
            raise ValueError(f"obs shape {obs.shape}, expected ({self.obs_dim},)")
        if self.encoder_spec is None:
            feat = obs
        else:
            s = self.encoder_spec
            feat = conv.encode(s, self.enc_params, self.enc_stats,
                               obs.reshape(s.input_hw, s.input_hw, s.in_channels))
        z = context_build(feat, mu, self.context_kind, self.normalize_mu)
        theta = hyper.hyper_forward(self.h_actor_spec, self.h_actor, z.values)
        raw = nets.mlp_forward(self.actor_spec, theta, feat)
        action = self.center + self.half * raw
        if explore:
            action = action + rng.normal(0.0, self.config.sigma_explore * self.half)
        return np.clip(action, self.low, self.high)

    # -- learning ----------------------------------------------------------------

    def compute_td_target(self, batch: Batch, rng: np.random.Generator
                          ) -> np.ndarray:
        """Targets from target hypernetworks evaluated at successor contexts."""
        c = self.config
        feats_n = self._encode_batch(batch.next_obs)
        zs_n = self._context_batch(feats_n, batch.mu)
        uniq, inv = hyper.group_contexts(zs_n)
        pa = hyper.hyper_forward_batch(self.h_actor_spec, self.target_h_actor, uniq)
        raw = self._eval_mapped(self.actor_spec, pa, inv, feats_n)
        u = self.center + self.half * raw
        noise = rng.normal(0.0, c.sigma_target * self.half, size=u.shape)
        noise = np.clip(noise, -c.noise_clip * self.half, c.noise_clip * self.half)
        u = np.clip(u + noise, self.low, self.high)
        xq = np.hstack([feats_n, u])
        p1 = hyper.hyper_forward_batch(self.h_critic_spec, self.target_h_critic1, uniq)
        p2 = hyper.hyper_forward_batch(self.h_critic_spec, self.target_h_critic2, uniq)
        q1 = self._eval_mapped(self.critic_spec, p1, inv, xq)[:, 0]
        q2 = self._eval_mapped(self.critic_spec, p2, inv, xq)[:, 0]
        qmin = np.minimum(q1, q2)
        assert np.all(qmin <= q1) and np.all(qmin <= q2)
        return batch.reward + c.gamma * ~batch.done * qmin

    def critic_grads(self, batch: Batch, rng: np.random.Generator) -> dict:
        """Losses and hypernetwork/encoder gradients for one critic step.

        Pure: computes everything without touching agent state, so gradient
        checks can difference the loss directly.
        """
        targets = self.compute_td_target(batch, rng)
        b = len(batch)
        if self.encoder_spec is None:
            feats, enc_cache, new_stats = batch.obs, None, None
        else:
            s = self.encoder_spec
            fields = batch.obs.reshape(-1, s.input_hw, s.input_hw, s.in_channels)
            enc_cache = []
            feats, new_stats = conv.encode_train(
                s, self.enc_params, self.enc_stats, fields, enc_cache)
        xq = np.hstack([feats, batch.action])
        zs = self._context_batch(feats, batch.mu)

        losses, hyper_grads = [], []
        grad_x = np.zeros_like(xq)
        grad_z = np.zeros_like(zs)
        if self.context_kind == "param_only":
            uniq, inv = hyper.group_contexts(zs)
            members = [np.flatnonzero(inv == g) for g in range(len(uniq))]
            for hparams in (self.h_critic1, self.h_critic2):
                gen_cache = []
                pu = hyper.hyper_forward_batch(self.h_critic_spec, hparams,
                                               uniq, gen_cache)
                gt = np.zeros_like(pu)
                sse = 0.0
                for g, m in enumerate(members):
                    cache = []
                    q = nets.forward_batch(self.critic_spec, pu[g], xq[m],
                                           cache)[:, 0]
                    err = q - targets[m]
                    sse += float(err @ err)
                    gt[g], gx = nets.backward_batch(
                        self.critic_spec, pu[g], cache, (2.0 / b) * err[:, None])
                    grad_x[m] += gx
                gh, _ = hyper.hyper_backward_batch(self.h_critic_spec, hparams,
                                                   uniq, gen_cache, gt)
                losses.append(sse / b)
                hyper_grads.append(gh)
        else:
            for hparams in (self.h_critic1, self.h_critic2):
                gen_cache = []
                pb = hyper.hyper_forward_batch(self.h_critic_spec, hparams,
                                               zs, gen_cache)
                cache = []
                q = nets.forward_each(self.critic_spec, pb, xq, cache)[:, 0]
                err = q - targets
                gt, gx = nets.backward_each(self.critic_spec, pb, cache,
                                            (2.0 / b) * err[:, None])
                gh, gz = hyper.hyper_backward_batch(self.h_critic_spec, hparams,
                                                    zs, gen_cache, gt)
                grad_x += gx
                grad_z += gz
                losses.append(float(np.mean(err ** 2)))
                hyper_grads.append(gh)

        for loss in losses:
            if not np.isfinite(loss):
                raise ValueError(
                    f"non-finite critic loss {loss}: "
                    f"|r|max={np.abs(batch.reward).max()}, "
                    f"|obs|max={np.abs(batch.obs).max()}")
        enc_grad = None
        if self.encoder_spec is not None:
            grad_feat = grad_x[:, :self.feat_dim].copy()
            if self.context_kind == "state_and_param":
                grad_feat += grad_z[:, :self.feat_dim]
            enc_grad, _ = conv.encode_backward(self.encoder_spec, self.enc_params,
                                               enc_cache, grad_feat)
        return {"losses": tuple(losses), "hyper_grads": tuple(hyper_grads),
                "enc_grad": enc_grad, "new_stats": new_stats, "targets": targets}

    def update_critics(self, batch: Batch, rng: np.random.Generator
                       ) -> tuple[float, float]:
        g = self.critic_grads(batch, rng)
        self._last_targets = g["targets"]
        self.critic1_opt = nets.adam_step_inplace(self.h_critic1,
                                                  g["hyper_grads"][0],
                                                  self.critic1_opt)
        self.critic2_opt = nets.adam_step_inplace(self.h_critic2,
                                                  g["hyper_grads"][1],
                                                  self.critic2_opt)
        if g["enc_grad"] is not None:
            self.enc_opt = nets.adam_step_inplace(self.enc_params, g["enc_grad"],
                                                  self.enc_opt)
            self.enc_stats = g["new_stats"]
        self.critic_updates += 1
        return g["losses"]

    def actor_grad(self, batch: Batch) -> tuple[float, np.ndarray]:
        """Loss and actor-hypernetwork gradient; encoder and critic frozen."""
        b = len(batch)
        feats = self._encode_batch(batch.obs)
        zs = self._context_batch(feats, batch.mu)
        if self.context_kind == "param_only":
            uniq, inv = hyper.group_contexts(zs)
            gen_cache = []
            pa = hyper.hyper_forward_batch(self.h_actor_spec, self.h_actor,
                                           uniq, gen_cache)
            p1 = hyper.hyper_forward_batch(self.h_critic_spec, self.h_critic1, uniq)
            gt = np.zeros_like(pa)
            qsum = 0.0
            for g in range(len(uniq)):
                m = np.flatnonzero(inv == g)
                cache_a = []
                raw = nets.forward_batch(self.actor_spec, pa[g], feats[m], cache_a)
                u = self.center + self.half * raw
                cache_q = []
                q = nets.forward_batch(self.critic_spec, p1[g],
                                       np.hstack([feats[m], u]), cache_q)[:, 0]
                qsum += float(q.sum())
                _, gxq = nets.backward_batch(self.critic_spec, p1[g], cache_q,
                                             np.full((len(m), 1), -1.0 / b))
                grad_raw = gxq[:, self.feat_dim:] * self.half
                gt[g], _ = nets.backward_batch(self.actor_spec, pa[g], cache_a,
                                               grad_raw)
            gh, _ = hyper.hyper_backward_batch(self.h_actor_spec, self.h_actor,
                                               uniq, gen_cache, gt)
            loss = -qsum / b
        else:
            gen_cache = []
            pa = hyper.hyper_forward_batch(self.h_actor_spec, self.h_actor,
                                           zs, gen_cache)
            p1 = hyper.hyper_forward_batch(self.h_critic_spec, self.h_critic1, zs)
            cache_a = []
            raw = nets.forward_each(self.actor_spec, pa, feats, cache_a)
            u = self.center + self.half * raw
            cache_q = []
            q = nets.forward_each(self.critic_spec, p1,
                                  np.hstack([feats, u]), cache_q)[:, 0]
            _, gxq = nets.backward_each(self.critic_spec, p1, cache_q,
                                        np.full((b, 1), -1.0 / b))
            grad_raw = gxq[:, self.feat_dim:] * self.half
            gt, _ = nets.backward_each(self.actor_spec, pa, cache_a, grad_raw)
            gh, _ = hyper.hyper_backward_batch(self.h_actor_spec, self.h_actor,
                                               zs, gen_cache, gt)
            loss = float(-np.mean(q))
        if not np.isfinite(loss):
            raise ValueError(f"non-finite actor loss {loss}")
        return loss, gh

    def update_actor(self, batch: Batch) -> float:
        loss, gh = self.actor_grad(batch)
        self.actor_opt = nets.adam_step_inplace(self.h_actor, gh, self.actor_opt)
        self.actor_updates += 1
        return loss

    def soft_update(self) -> None:
        rho = self.config.rho
        nets.polyak_inplace(self.target_h_actor, self.h_actor, rho)
        nets.polyak_inplace(self.target_h_critic1, self.h_critic1, rho)
        nets.polyak_inplace(self.target_h_critic2, self.h_critic2, rho)

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
        d = {"h_actor": self.h_actor, "h_critic1": self.h_critic1,
             "h_critic2": self.h_critic2,
             "target_h_actor": self.target_h_actor,
             "target_h_critic1": self.target_h_critic1,
             "target_h_critic2": self.target_h_critic2}
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
