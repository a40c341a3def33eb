"""Experiment orchestration.

Ties the environments, agents and replay memory into seeded training and
evaluation runs, with incremental CSV run logs, per-seed checkpoints that
resume bit-exactly, and trajectory export for offline inspection.
"""
from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import conv, hyper_td3, ks, ns, replay, stats, td3

ENVS = ("ks", "ns")
AGENTS = ("td3_no_mu", "td3_concat", "hyperl_param", "hyperl_state_param")

RUNLOG_HEADER = ("phase,seed,episode,mu,cum_reward,state_cost,action_cost,"
                 "steps,wall_ms,blowup")
STATS_HEADER = "phase,n,mean,std,ci_low,ci_high"


class ConfigError(ValueError):
    """Malformed configuration input (unknown key, bad value, bad combination)."""


# --- experiment configuration -------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a run needs; every field is also a config-file key."""
    env: str = "ks"
    agent: str = "hyperl_param"
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    episodes: int = 1500
    eval_every: int = 50
    eval_mu_count: int = 10
    mu: float | None = None      # pin every episode to this parameter value
    horizon: int | None = None   # environment default when unset
    out: str = "runs/exp"
    checkpoint_every: int = 0    # episodes between checkpoints; 0 = final only
    capacity: int = 1_000_000
    gamma: float = 0.99
    rho: float = 0.005
    sigma_explore: float = 0.1
    sigma_target: float = 0.2
    noise_clip: float = 0.5
    policy_delay: int = 2
    batch_size: int = 256
    warmup_steps: int = 1000
    lr: float = 3e-4
    hidden: tuple[int, ...] = (256, 256)    # baseline actor/critic widths
    main_hidden: tuple[int, ...] = (256,)   # generated actor/critic widths
    embed_dims: tuple[int, ...] = (64, 64)  # hypernetwork trunk widths

    def validate(self) -> None:
        if self.env not in ENVS:
            raise ConfigError(f"unknown env {self.env!r}, expected one of {ENVS}")
        if self.agent not in AGENTS:
            raise ConfigError(f"unknown agent {self.agent!r}, expected one of {AGENTS}")
        if not self.seeds or len(set(self.seeds)) != len(self.seeds):
            raise ConfigError(f"seeds must be non-empty and unique, got {self.seeds}")
        for name in ("episodes", "eval_every", "eval_mu_count", "capacity"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.checkpoint_every < 0:
            raise ConfigError("checkpoint_every must be >= 0")
        if self.horizon is not None and self.horizon < 1:
            raise ConfigError("horizon must be positive")


_STR_KEYS = ("env", "agent", "out")
_TUPLE_KEYS = ("seeds", "hidden", "main_hidden", "embed_dims")
_OPTIONAL_KEYS = ("mu", "horizon")
_INT_KEYS = ("episodes", "eval_every", "eval_mu_count", "checkpoint_every",
             "capacity", "policy_delay", "batch_size", "warmup_steps")
_FLOAT_KEYS = ("gamma", "rho", "sigma_explore", "sigma_target", "noise_clip", "lr")


def parse_value(key: str, text: str):
    """One config value from its file/flag spelling."""
    text = text.strip()
    try:
        if key in _STR_KEYS:
            return text
        if key in _TUPLE_KEYS:
            return tuple(int(p) for p in text.split(",") if p.strip())
        if key in _OPTIONAL_KEYS:
            if text.lower() == "none":
                return None
            return int(text) if key == "horizon" else float(text)
        if key in _INT_KEYS:
            return int(text)
        if key in _FLOAT_KEYS:
            return float(text)
    except ValueError as e:
        raise ConfigError(f"bad value for {key}: {text!r} ({e})") from None
    raise ConfigError(f"unknown config key {key!r}")


def render_value(key: str, value) -> str:
    if key in _TUPLE_KEYS:
        return ",".join(str(v) for v in value)
    if value is None:
        return "none"
    return repr(value) if isinstance(value, float) else str(value)


def parse_config_text(text: str) -> dict[str, str]:
    """Flat `key = value` lines; '#' starts a comment."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value.strip()
    return out


def resolve_config(file_text: str | None = None,
                   overrides: dict[str, str] | None = None) -> ExperimentConfig:
    """Defaults, then config file, then explicit overrides; later wins."""
    values: dict[str, object] = {}
    for source in (parse_config_text(file_text) if file_text else {},
                   overrides or {}):
        for key, text in source.items():
            values[key] = parse_value(key, text)
    cfg = ExperimentConfig(**values)
    cfg.validate()
    return cfg


def config_text(cfg: ExperimentConfig) -> str:
    lines = [f"{f.name} = {render_value(f.name, getattr(cfg, f.name))}"
             for f in fields(cfg)]
    return "\n".join(lines) + "\n"


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(config_text(cfg).encode()).hexdigest()[:16]


# --- run log -------------------------------------------------------------------

@dataclass(frozen=True)
class RunRecord:
    phase: str      # "train" or "eval"
    seed: int
    episode: int    # per-seed counter; eval episodes count separately
    mu: float
    cum_reward: float
    state_cost: float   # sum of unweighted state costs over the episode
    action_cost: float  # sum of weighted action costs over the episode
    steps: int
    wall_ms: float
    blowup: int


def record_line(r: RunRecord) -> str:
    return (f"{r.phase},{r.seed},{r.episode},{r.mu!r},{r.cum_reward!r},"
            f"{r.state_cost!r},{r.action_cost!r},{r.steps},{r.wall_ms!r},{r.blowup}")


class RunLogWriter:
    """Appends records to a CSV file, flushing after every row."""

    def __init__(self, path: str | Path, append: bool = False):
        self.path = Path(path)
        exists = self.path.exists()
        self._fh = open(self.path, "a" if append else "w")
        if not (append and exists):
            self._fh.write(RUNLOG_HEADER + "\n")
            self._fh.flush()

    def write(self, record: RunRecord) -> None:
        self._fh.write(record_line(record) + "\n")
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_runlog(path: str | Path) -> list[RunRecord]:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != RUNLOG_HEADER:
        raise ValueError(f"{path} is not a run log (bad header)")
    records = []
    for line in lines[1:]:
        p = line.split(",")
        if len(p) != 10:
            raise ValueError(f"malformed run log row: {line!r}")
        records.append(RunRecord(phase=p[0], seed=int(p[1]), episode=int(p[2]),
                                 mu=float(p[3]), cum_reward=float(p[4]),
                                 state_cost=float(p[5]), action_cost=float(p[6]),
                                 steps=int(p[7]), wall_ms=float(p[8]),
                                 blowup=int(p[9])))
    return records


# --- construction --------------------------------------------------------------

def build_env(cfg: ExperimentConfig, out_dir: str | Path):
    """Environment per config; the flow reference is cached next to the run."""
    if cfg.env == "ks":
        kc = ks.KsConfig() if cfg.horizon is None else ks.KsConfig(horizon=cfg.horizon)
        return ks.KsEnv(kc)
    nc = ns.NsConfig() if cfg.horizon is None else ns.NsConfig(horizon=cfg.horizon)
    ref_path = Path(out_dir) / "ns_reference.bin"
    if ref_path.exists():
        ref = ns.load_reference(str(ref_path), nc)
    else:
        ref_path.parent.mkdir(parents=True, exist_ok=True)
        ref = ns.generate_reference(str(ref_path), nc)
    return ns.NsEnv(nc, ref)


def build_agent(cfg: ExperimentConfig, env, rng: np.random.Generator):
    base = td3.Td3Config(gamma=cfg.gamma, rho=cfg.rho,
                         sigma_explore=cfg.sigma_explore,
                         sigma_target=cfg.sigma_target,
                         noise_clip=cfg.noise_clip,
                         policy_delay=cfg.policy_delay,
                         batch_size=cfg.batch_size,
                         warmup_steps=cfg.warmup_steps,
                         include_mu=(cfg.agent == "td3_concat"),
                         hidden=cfg.hidden, lr=cfg.lr)
    low, high = env.action_bounds
    # state reduction for the flow problem applies to every agent
    enc = conv.EncoderSpec() if cfg.env == "ns" else None
    norm = ks.normalize_mu if cfg.env == "ks" else ns.normalize_mu
    if cfg.agent in ("td3_no_mu", "td3_concat"):
        return td3.Td3Agent(env.obs_dim, env.action_dim, low, high, base, rng,
                            normalize_mu=norm, encoder_spec=enc)
    kind = "param_only" if cfg.agent == "hyperl_param" else "state_and_param"
    return hyper_td3.HyperlAgent(env.obs_dim, env.action_dim, low, high,
                                 replace(base, include_mu=False), kind, rng,
                                 normalize_mu=norm, encoder_spec=enc,
                                 embed_dims=cfg.embed_dims,
                                 main_hidden=cfg.main_hidden)


def _seed_rngs(seed: int) -> dict[str, np.random.Generator]:
    children = np.random.SeedSequence(seed).spawn(5)
    names = ("init", "env", "explore", "batch", "eval")
    return {n: np.random.default_rng(c) for n, c in zip(names, children)}


# --- rollouts -------------------------------------------------------------------

def rollout(env, agent, state, *, train: bool, explore_rng=None, buffer=None,
            batch_rng=None, trace: list | None = None):
    """Roll one episode from `state` to the horizon or a blow-up.

    Training mode explores, stores transitions (horizon ends are not
    terminal states, so done stays False) and takes one learner step per
    environment step. A blown-up step has no successor state; the episode
    is cut there and nothing is stored for it. `trace`, when given,
    collects one (state, action, reward) row per completed step.
    """
    obs = env.observation(state)
    cum = state_cost = action_cost = 0.0
    steps = 0
    blowup = 0
    for _ in range(env.config.horizon - state.t_index):
        if train and agent.global_step < agent.config.warmup_steps:
            low, high = env.action_bounds
            action = explore_rng.uniform(low, high, size=env.action_dim)
        else:
            action = agent.select_action(obs, state.mu, explore=train,
                                         rng=explore_rng)
        try:
            nstate, r = env.step(state, action)
        except (ks.KsBlowupError, ns.NsBlowupError):
            blowup = 1
            break
        c1, c2 = env.reward_terms(nstate, action)
        nobs = env.observation(nstate)
        if train:
            buffer.push(obs, action, r, nobs, state.mu, done=False)
            agent.train_step(buffer, batch_rng)
        if trace is not None:
            trace.append((nstate, np.asarray(action, dtype=float), r))
        cum += r
        state_cost += c1
        action_cost += c2
        steps += 1
        state, obs = nstate, nobs
    return cum, state_cost, action_cost, steps, blowup


def _eval_block(cfg, env, agent, eval_rng, writer, seed, eval_count, clock):
    """eval_mu_count deterministic episodes at freshly drawn parameter values."""
    for _ in range(cfg.eval_mu_count):
        eval_count += 1
        t0 = clock()
        state = env.reset(eval_rng, mode="eval", mu_override=cfg.mu)
        cum, sc, ac, steps, blow = rollout(env, agent, state, train=False)
        wall_ms = (clock() - t0) * 1e3
        writer.write(RunRecord("eval", seed, eval_count, state.mu, cum, sc, ac,
                               steps, wall_ms, blow))
    return eval_count


# --- checkpoints ----------------------------------------------------------------

_CKPT_VERSION = 1


def _ckpt_paths(base: str | Path) -> tuple[Path, Path]:
    base = Path(base)
    if base.suffix in (".json", ".bin"):
        base = base.with_suffix("")
    return base.with_suffix(".json"), base.with_suffix(".bin")


def save_checkpoint(base: str | Path, cfg: ExperimentConfig, seed: int, agent,
                    buffer: replay.ReplayBuffer,
                    rngs: dict[str, np.random.Generator],
                    next_episode: int, eval_count: int) -> Path:
    manifest_path, bin_path = _ckpt_paths(base)
    arrays: dict[str, np.ndarray] = {}
    for name, arr in agent.state_arrays().items():
        arrays[f"agent.{name}"] = arr
    for name, arr in buffer.snapshot().items():
        arrays[f"buffer.{name}"] = arr
    index = []
    blobs = []
    offset = 0
    for name, arr in arrays.items():
        if arr.dtype == np.bool_:
            wire, raw = "u1", arr.astype("u1").tobytes()
        elif arr.dtype.kind == "i":
            wire, raw = "<i8", arr.astype("<i8").tobytes()
        else:
            wire, raw = "<f8", arr.astype("<f8").tobytes()
        index.append({"name": name, "shape": list(arr.shape), "dtype": wire,
                      "offset": offset})
        blobs.append(raw)
        offset += len(raw)
    manifest = {"version": _CKPT_VERSION,
                "config": config_text(cfg),
                "config_hash": config_hash(cfg),
                "seed": seed,
                "next_episode": next_episode,
                "eval_count": eval_count,
                "counters": agent.state_counters(),
                "rng": {n: g.bit_generator.state for n, g in rngs.items()},
                "arrays": index}
    bin_path.write_bytes(b"".join(blobs))
    manifest_path.write_text(json.dumps(manifest, sort_keys=True))
    return manifest_path


def load_checkpoint(base: str | Path) -> dict:
    manifest_path, bin_path = _ckpt_paths(base)
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("version") != _CKPT_VERSION:
        raise ValueError(f"unsupported checkpoint version {manifest.get('version')}")
    raw = bin_path.read_bytes()
    arrays = {}
    for entry in manifest["arrays"]:
        shape = tuple(entry["shape"])
        n = int(np.prod(shape)) if shape else 1
        dt = np.dtype(entry["dtype"])
        start = entry["offset"]
        a = np.frombuffer(raw, dtype=dt, count=n, offset=start).reshape(shape)
        arrays[entry["name"]] = a.astype(np.float64) if dt.kind == "f" else a.copy()
    manifest["array_data"] = arrays
    return manifest


def _restore_from_checkpoint(data: dict, agent, buffer,
                             rngs: dict[str, np.random.Generator]) -> None:
    arrays = data["array_data"]
    agent.restore_state(
        {k[len("agent."):]: v for k, v in arrays.items() if k.startswith("agent.")},
        data["counters"])
    buffer.restore(
        {k[len("buffer."):]: v for k, v in arrays.items() if k.startswith("buffer.")})
    for name, g in rngs.items():
        g.bit_generator.state = data["rng"][name]


def _resumable(saved: ExperimentConfig, now: ExperimentConfig) -> bool:
    """Everything except run length, checkpoint cadence and output location
    must match for a resumed run to continue the same trajectory."""
    skip = {"episodes", "checkpoint_every", "out"}
    return all(getattr(saved, f.name) == getattr(now, f.name)
               for f in fields(ExperimentConfig) if f.name not in skip)


# --- training -------------------------------------------------------------------

def run_training(cfg: ExperimentConfig, clock=time.perf_counter, progress=None,
                 resume: bool = False) -> Path:
    """Train every seed sequentially; returns the run log path.

    With resume=True, seeds whose checkpoint exists in the output directory
    continue from it and the log is appended instead of rewritten.
    """
    cfg.validate()
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(config_text(cfg))
    env = build_env(cfg, out)
    log_path = out / "train.csv"
    with RunLogWriter(log_path, append=resume) as writer:
        for seed in cfg.seeds:
            _train_seed(cfg, env, seed, writer, clock, progress, resume, out)
    return log_path


def _train_seed(cfg, env, seed, writer, clock, progress, resume, out: Path):
    rngs = _seed_rngs(seed)
    agent = build_agent(cfg, env, rngs["init"])
    buffer = replay.ReplayBuffer(env.obs_dim, env.action_dim, cfg.capacity)
    ckpt_base = out / f"ckpt_s{seed}"
    start_episode, eval_count = 1, 0
    if resume and _ckpt_paths(ckpt_base)[0].exists():
        data = load_checkpoint(ckpt_base)
        saved_cfg = resolve_config(data["config"])
        if not _resumable(saved_cfg, cfg):
            raise ConfigError(
                f"checkpoint {ckpt_base} was written under a different config")
        if data["seed"] != seed:
            raise ConfigError(f"checkpoint {ckpt_base} belongs to seed {data['seed']}")
        _restore_from_checkpoint(data, agent, buffer,
                                 {k: rngs[k] for k in ("env", "explore", "batch",
                                                       "eval")})
        start_episode = data["next_episode"]
        eval_count = data["eval_count"]
        if start_episode > cfg.episodes:
            return agent, buffer  # nothing left to run; keep the checkpoint as is
    for episode in range(start_episode, cfg.episodes + 1):
        t0 = clock()
        state = env.reset(rngs["env"], mode="train", mu_override=cfg.mu)
        cum, sc, ac, steps, blow = rollout(
            env, agent, state, train=True, explore_rng=rngs["explore"],
            buffer=buffer, batch_rng=rngs["batch"])
        wall_ms = (clock() - t0) * 1e3
        writer.write(RunRecord("train", seed, episode, state.mu, cum, sc, ac,
                               steps, wall_ms, blow))
        if progress is not None:
            progress(f"episode={episode} seed={seed} reward={cum!r}")
        if episode % cfg.eval_every == 0:
            eval_count = _eval_block(cfg, env, agent, rngs["eval"], writer,
                                     seed, eval_count, clock)
        if cfg.checkpoint_every and episode % cfg.checkpoint_every == 0:
            save_checkpoint(ckpt_base, cfg, seed, agent, buffer,
                            {k: rngs[k] for k in ("env", "explore", "batch",
                                                  "eval")},
                            next_episode=episode + 1, eval_count=eval_count)
    save_checkpoint(ckpt_base, cfg, seed, agent, buffer,
                    {k: rngs[k] for k in ("env", "explore", "batch", "eval")},
                    next_episode=cfg.episodes + 1, eval_count=eval_count)
    return agent, buffer


# --- standalone evaluation --------------------------------------------------------

def load_for_inference(ckpt_base: str | Path,
                       cfg: ExperimentConfig | None = None):
    """(cfg, env, agent) rebuilt from a checkpoint; learner state included."""
    data = load_checkpoint(ckpt_base)
    if cfg is None:
        cfg = resolve_config(data["config"])
    env = build_env(cfg, Path(ckpt_base).parent)
    agent = build_agent(cfg, env, np.random.default_rng(0))
    arrays = data["array_data"]
    agent.restore_state(
        {k[len("agent."):]: v for k, v in arrays.items() if k.startswith("agent.")},
        data["counters"])
    return cfg, env, agent, data


def run_evaluation(ckpt_base: str | Path, out_path: str | Path,
                   mu: float | None = None, eval_seed: int = 0,
                   episodes: int | None = None, clock=time.perf_counter,
                   progress=None) -> Path:
    """Deterministic-policy episodes at parameters drawn from the evaluation
    range (or pinned to `mu`); rows are tagged eval."""
    cfg, env, agent, data = load_for_inference(ckpt_base)
    rng = np.random.default_rng(np.random.SeedSequence(eval_seed))
    n = cfg.eval_mu_count if episodes is None else episodes
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with RunLogWriter(out_path) as writer:
        for k in range(1, n + 1):
            t0 = clock()
            state = env.reset(rng, mode="eval",
                              mu_override=mu if mu is not None else cfg.mu)
            cum, sc, ac, steps, blow = rollout(env, agent, state, train=False)
            wall_ms = (clock() - t0) * 1e3
            writer.write(RunRecord("eval", data["seed"], k, state.mu, cum, sc,
                                   ac, steps, wall_ms, blow))
            if progress is not None:
                progress(f"episode={k} seed={data['seed']} reward={cum!r}")
    return out_path


# --- trajectory export -------------------------------------------------------------

def export_trajectory(ckpt_base: str | Path, out_csv: str | Path,
                      mu: float | None = None, traj_seed: int = 0,
                      free_steps: int = 0) -> list[Path]:
    """Roll one deterministic episode and write it as a CSV time series.

    The first row is the initial state (zero action, zero reward).  With
    free_steps > 0 the controller is kept off (zero action) for that many
    steps before the policy takes over, and the horizon is extended to
    match, so the series shows the transition from free to controlled
    dynamics.  The flow problem additionally gets a final-state field table
    next to the series.
    """
    data = load_checkpoint(ckpt_base)
    cfg = resolve_config(data["config"])
    if free_steps < 0:
        raise ValueError("free_steps must be >= 0")
    if free_steps and cfg.env == "ns":
        # the tracking reference only covers the nominal horizon
        raise ValueError("free-running prefix is only supported for the ks env")
    horizon = (cfg.horizon if cfg.horizon is not None
               else (ks.KsConfig() if cfg.env == "ks" else ns.NsConfig()).horizon)
    cfg = replace(cfg, horizon=horizon + free_steps)
    env = build_env(cfg, Path(ckpt_base).parent)
    agent = build_agent(cfg, env, np.random.default_rng(0))
    arrays = data["array_data"]
    agent.restore_state(
        {k[len("agent."):]: v for k, v in arrays.items() if k.startswith("agent.")},
        data["counters"])

    rng = np.random.default_rng(np.random.SeedSequence(traj_seed))
    state = env.reset(rng, mode="eval", mu_override=mu if mu is not None else cfg.mu)
    trace: list[tuple] = [(state, np.zeros(env.action_dim), 0.0)]
    for _ in range(free_steps):
        action = np.zeros(env.action_dim)
        nstate, r = env.step(state, action)
        trace.append((nstate, action, r))
        state = nstate
    cum, sc, ac, steps, blow = rollout(env, agent, state, train=False,
                                       trace=trace)

    out_csv = Path(out_csv)
    out_csv.parent.mkdir(parents=True, exist_ok=True)
    obs_dim, act_dim = env.obs_dim, env.action_dim
    header = (["t_index", "mu"] + [f"y_{i}" for i in range(obs_dim)]
              + [f"a_{i}" for i in range(act_dim)] + ["reward"])
    lines = [",".join(header)]
    for t, (st, action, r) in enumerate(trace):
        obs = env.observation(st)
        parts = [str(t), repr(float(st.mu))]
        parts += [repr(float(v)) for v in obs]
        parts += [repr(float(v)) for v in np.asarray(action, dtype=float)]
        parts.append(repr(float(r)))
        lines.append(",".join(parts))
    out_csv.write_text("\n".join(lines) + "\n")
    written = [out_csv]

    if cfg.env == "ns":
        field_path = out_csv.with_name(out_csv.stem + "_field.csv")
        final = trace[-1][0]
        ref = env.reference[final.t_index]
        rows = ["i,j,vx,vy,ref_vx,ref_vy,mu,state_cost,action_cost"]
        nx = env.config.nx
        for i in range(nx):
            for j in range(nx):
                cells = [final.velocity[i, j, 0], final.velocity[i, j, 1],
                         ref[i, j, 0], ref[i, j, 1], final.mu, sc, ac]
                rows.append(f"{i},{j}," + ",".join(repr(float(c)) for c in cells))
        field_path.write_text("\n".join(rows) + "\n")
        written.append(field_path)
    return written


# --- statistics over run logs ---------------------------------------------------

def compute_stats(records: list[RunRecord], phase: str = "train",
                  boundaries: tuple[int, ...] = (),
                  resamples: int = 2000) -> list[dict]:
    """Summary rows for one phase of a run log.

    Pooled mean/std per episode window, plus a seed-stratified bootstrap
    interval for the pooled mean when at least two seeds are present.
    """
    chosen = [r for r in records if r.phase == phase]
    if not chosen:
        raise ValueError(f"run log has no {phase!r} records")
    episodes = np.array([r.episode for r in chosen])
    rewards = np.array([r.cum_reward for r in chosen])
    rows = stats.aggregate_phase_stats(episodes, rewards, boundaries)
    seeds = sorted({r.seed for r in chosen})
    for row, bound in zip(rows, (None,) + tuple(boundaries)):
        row["ci_low"] = row["ci_high"] = None
        if len(seeds) < 2:
            continue
        groups = []
        for s in seeds:
            vals = [r.cum_reward for r in chosen
                    if r.seed == s and (bound is None or r.episode > bound)]
            if vals:
                groups.append(np.array(vals))
        if len(groups) >= 2:
            lo, hi = stats.bootstrap_ci(groups, resamples=resamples,
                                        rng=np.random.default_rng(0))
            row["ci_low"], row["ci_high"] = lo, hi
    return rows


def write_stats_csv(rows: list[dict], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [STATS_HEADER]
    for row in rows:
        lo = "" if row["ci_low"] is None else repr(row["ci_low"])
        hi = "" if row["ci_high"] is None else repr(row["ci_high"])
        lines.append(f"{row['phase']},{row['n']},{row['mean']!r},"
                     f"{row['std']!r},{lo},{hi}")
    path.write_text("\n".join(lines) + "\n")
    return path
