"""The four figure kinds, all rendered offline to PNG.

Statistics are read, never recomputed: curves aggregate raw per-episode
rewards straight from the run log, ci_bars draws the intervals exactly as
the harness wrote them. Identical input files give identical output bytes
(fixed dpi, pinned PNG metadata, no timestamps).
"""
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from . import schemas

KINDS = ("curves", "ci_bars", "ks_heatmap", "ns_fields")
_SAVE = dict(dpi=120, metadata={"Software": "pdeplots"})


@dataclass(frozen=True)
class FigureRequest:
    kind: str
    inputs: tuple[str, ...]
    out: str
    smooth: int = 1          # trailing moving-average window, 1 = off
    phase: str = "train"     # curves: which RunLog phase to aggregate
    control_start: int = 100  # ks_heatmap: controller-ON step marker

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown figure kind {self.kind!r}")
        if len(self.inputs) != 1:
            raise ValueError(f"{self.kind} takes exactly one input file")
        if self.smooth < 1:
            raise ValueError("smoothing window must be >= 1")


def render(request: FigureRequest) -> Path:
    fig = _RENDERERS[request.kind](request)
    out = Path(request.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, **_SAVE)
    plt.close(fig)
    return out


def _smooth(v: np.ndarray, w: int) -> np.ndarray:
    """Trailing moving average; partial windows at the start keep length."""
    if w <= 1:
        return v
    c = np.cumsum(np.insert(v, 0, 0.0))
    full = (c[w:] - c[:-w]) / w
    head = c[1:w] / np.arange(1, w)
    return np.concatenate([head, full])


def _curves(req: FigureRequest):
    log = schemas.read_runlog(req.inputs[0])
    mask = log.phase == req.phase
    if not mask.any():
        raise schemas.SchemaError(
            f"{req.inputs[0]}: no rows with phase {req.phase!r}")
    seeds = np.unique(log.seed[mask])
    per_seed = {}
    for s in seeds:
        m = mask & (log.seed == s)
        order = np.argsort(log.episode[m], kind="stable")
        per_seed[s] = (log.episode[m][order], log.cum_reward[m][order])
    common = per_seed[seeds[0]][0]
    for s in seeds[1:]:
        common = np.intersect1d(common, per_seed[s][0])
    series = np.stack([
        _smooth(vals[np.isin(eps, common)], req.smooth)
        for eps, vals in per_seed.values()])
    mean = series.mean(axis=0)
    std = series.std(axis=0)

    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    ax.fill_between(common, mean - std, mean + std, alpha=0.25, lw=0)
    ax.plot(common, mean)
    ax.set_xlabel("episode")
    ax.set_ylabel("cumulative reward")
    ax.set_title(f"{req.phase} reward, {len(seeds)} seed"
                 f"{'s' if len(seeds) > 1 else ''}"
                 + (f", smooth={req.smooth}" if req.smooth > 1 else ""))
    ax.grid(alpha=0.3)
    return fig


def _ci_bars(req: FigureRequest):
    table = schemas.read_stats(req.inputs[0])
    x = np.arange(len(table.phase))
    has_ci = ~np.isnan(table.ci_low)
    yerr = np.zeros((2, len(x)))
    yerr[0, has_ci] = (table.mean - table.ci_low)[has_ci]
    yerr[1, has_ci] = (table.ci_high - table.mean)[has_ci]

    fig, ax = plt.subplots(figsize=(1.2 + 1.0 * len(x), 4.0))
    ax.bar(x, table.mean, width=0.6,
           yerr=np.where(yerr > 0, yerr, np.nan), capsize=4)
    ax.set_xticks(x, table.phase)
    ax.set_xlabel("phase")
    ax.set_ylabel("mean reward")
    ax.set_title("phase means with 95% CI")
    ax.grid(alpha=0.3, axis="y")
    return fig


def _ks_heatmap(req: FigureRequest):
    traj = schemas.read_trajectory(req.inputs[0])
    fig, ax = plt.subplots(figsize=(7.2, 3.6))
    im = ax.imshow(traj.y.T, aspect="auto", origin="lower", cmap="RdBu_r",
                   extent=(traj.t_index[0], traj.t_index[-1],
                           0, traj.y.shape[1]))
    if traj.t_index[0] <= req.control_start <= traj.t_index[-1]:
        ax.axvline(req.control_start, color="k", ls="--", lw=1.2)
    ax.set_xlabel("control step")
    ax.set_ylabel("grid point")
    ax.set_title(f"mu = {traj.mu:g}")
    fig.colorbar(im, ax=ax, label="y")
    return fig


def _ns_fields(req: FigureRequest):
    snap = schemas.read_field(req.inputs[0])
    speed = np.hypot(snap.vx, snap.vy)
    ref = np.hypot(snap.ref_vx, snap.ref_vy)
    diff = np.hypot(snap.vx - snap.ref_vx, snap.vy - snap.ref_vy)
    vmax = float(max(speed.max(), ref.max()))

    fig, axes = plt.subplots(1, 3, figsize=(10.8, 3.6))
    panels = ((speed, "controlled", vmax), (ref, "reference", vmax),
              (diff, "difference", None))
    for ax, (img, title, top) in zip(axes, panels):
        im = ax.imshow(img.T, origin="lower", cmap="viridis",
                       vmin=0.0, vmax=top)
        ax.set_title(title)
        ax.set_xticks([])
        ax.set_yticks([])
        fig.colorbar(im, ax=ax, fraction=0.046)
    fig.suptitle(f"mu = {snap.mu:g}   state cost {snap.state_cost:.4g}   "
                 f"action cost {snap.action_cost:.4g}")
    return fig


_RENDERERS = {"curves": _curves, "ci_bars": _ci_bars,
              "ks_heatmap": _ks_heatmap, "ns_fields": _ns_fields}
