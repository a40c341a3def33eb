"""Reward statistics: phase-windowed tables and stratified bootstrap CIs."""
from __future__ import annotations

import numpy as np


def aggregate_phase_stats(episodes, rewards, boundaries=()) -> list[dict]:
    """Mean/std rows over all episodes and after each boundary.

    episodes and rewards are parallel per-record arrays pooled across seeds;
    std is the population convention so a single record reports 0. Rows:
    {"phase", "n", "mean", "std"} with phase "all" or ">N".
    """
    episodes = np.asarray(episodes)
    rewards = np.asarray(rewards, dtype=float)
    if episodes.shape != rewards.shape or episodes.ndim != 1:
        raise ValueError("episodes and rewards must be parallel 1-D arrays")
    if len(rewards) == 0:
        raise ValueError("empty log")
    last = int(episodes.max())
    rows = [{"phase": "all", "n": len(rewards),
             "mean": float(np.mean(rewards)), "std": float(np.std(rewards))}]
    for b in boundaries:
        b = int(b)
        if b >= last:
            raise ValueError(f"phase boundary {b} at or beyond last episode {last}")
        sel = rewards[episodes > b]
        rows.append({"phase": f">{b}", "n": len(sel),
                     "mean": float(np.mean(sel)), "std": float(np.std(sel))})
    return rows


def bootstrap_ci(groups, confidence: float = 0.95, resamples: int = 2000,
                 rng: np.random.Generator | None = None) -> tuple[float, float]:
    """Stratified percentile bootstrap of the pooled mean.

    groups holds one 1-D sample array per seed. Each resample draws seeds
    with replacement, then episodes with replacement within every drawn
    seed, and takes the pooled mean; the interval is the percentile range of
    those means.
    """
    groups = [np.asarray(g, dtype=float) for g in groups]
    if len(groups) < 2:
        raise ValueError(f"need at least 2 seeds, got {len(groups)}")
    if any(len(g) == 0 for g in groups):
        raise ValueError("every seed group must be nonempty")
    if not 0.0 < confidence < 1.0:
        raise ValueError("confidence must lie in (0, 1)")
    if rng is None:
        rng = np.random.default_rng(0)
    n_seeds = len(groups)
    means = np.empty(resamples)
    for k in range(resamples):
        total, count = 0.0, 0
        for s in rng.integers(0, n_seeds, size=n_seeds):
            g = groups[s]
            total += g[rng.integers(0, len(g), size=len(g))].sum()
            count += len(g)
        means[k] = total / count
    tail = 100.0 * (1.0 - confidence) / 2.0
    low, high = np.percentile(means, [tail, 100.0 - tail])
    return float(low), float(high)
