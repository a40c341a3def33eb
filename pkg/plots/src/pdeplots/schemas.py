"""Readers for the harness CSV files.

The plot layer consumes these files verbatim and never recomputes what the
harness already wrote, so every reader validates the exact header before
touching a row: any unknown or missing column is a schema error, as is a
file with no data rows.
"""
import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

RUNLOG_HEADER = ("phase", "seed", "episode", "mu", "cum_reward",
                 "state_cost", "action_cost", "steps", "wall_ms", "blowup")
STATS_HEADER = ("phase", "n", "mean", "std", "ci_low", "ci_high")
FIELD_HEADER = ("i", "j", "vx", "vy", "ref_vx", "ref_vy", "mu",
                "state_cost", "action_cost")


class SchemaError(ValueError):
    """Input file does not match the harness CSV contract."""


def _rows(path: str | Path, expected: tuple[str, ...]) -> list[list[str]]:
    path = Path(path)
    with open(path, newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        if tuple(header) != expected:
            raise SchemaError(f"{path}: header {','.join(header)!r} does not "
                              f"match {','.join(expected)!r}")
        rows = [r for r in reader if r]
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    for i, r in enumerate(rows, start=2):
        if len(r) != len(expected):
            raise SchemaError(f"{path}:{i}: {len(r)} fields, "
                              f"expected {len(expected)}")
    return rows


def _floats(path, rows, cols, idx):
    try:
        return np.array([[float(r[i]) for i in idx] for r in rows])
    except ValueError as e:
        raise SchemaError(f"{path}: non-numeric value ({e})") from None


@dataclass(frozen=True)
class RunLog:
    phase: np.ndarray      # str
    seed: np.ndarray       # int
    episode: np.ndarray    # int
    mu: np.ndarray
    cum_reward: np.ndarray
    state_cost: np.ndarray
    action_cost: np.ndarray
    blowup: np.ndarray     # int


def read_runlog(path: str | Path) -> RunLog:
    rows = _rows(path, RUNLOG_HEADER)
    num = _floats(path, rows, RUNLOG_HEADER,
                  [1, 2, 3, 4, 5, 6, 9])
    return RunLog(phase=np.array([r[0] for r in rows]),
                  seed=num[:, 0].astype(int),
                  episode=num[:, 1].astype(int),
                  mu=num[:, 2], cum_reward=num[:, 3], state_cost=num[:, 4],
                  action_cost=num[:, 5], blowup=num[:, 6].astype(int))


@dataclass(frozen=True)
class StatsTable:
    phase: list[str]
    n: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    ci_low: np.ndarray     # nan where the harness left the cell empty
    ci_high: np.ndarray


def read_stats(path: str | Path) -> StatsTable:
    rows = _rows(path, STATS_HEADER)
    def cell(r, i):
        return float(r[i]) if r[i] != "" else np.nan
    try:
        num = np.array([[float(r[1]), float(r[2]), float(r[3]),
                         cell(r, 4), cell(r, 5)] for r in rows])
    except ValueError as e:
        raise SchemaError(f"{path}: non-numeric value ({e})") from None
    return StatsTable(phase=[r[0] for r in rows], n=num[:, 0].astype(int),
                      mean=num[:, 1], std=num[:, 2],
                      ci_low=num[:, 3], ci_high=num[:, 4])


@dataclass(frozen=True)
class Trajectory:
    t_index: np.ndarray
    mu: float
    y: np.ndarray          # [T, n_state]
    a: np.ndarray          # [T, n_action]
    reward: np.ndarray


def read_trajectory(path: str | Path) -> Trajectory:
    """Trajectory export: t_index,mu,y_0..y_{N-1},a_0..a_{M-1},reward with
    state and action widths taken from the header itself."""
    path = Path(path)
    with open(path, newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        rows = [r for r in reader if r]
    ny = sum(1 for c in header if c.startswith("y_"))
    na = sum(1 for c in header if c.startswith("a_"))
    expected = (["t_index", "mu"] + [f"y_{i}" for i in range(ny)]
                + [f"a_{i}" for i in range(na)] + ["reward"])
    if ny == 0 or na == 0 or header != expected:
        raise SchemaError(f"{path}: header does not match the trajectory "
                          f"layout t_index,mu,y_*,a_*,reward")
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    for i, r in enumerate(rows, start=2):
        if len(r) != len(expected):
            raise SchemaError(f"{path}:{i}: {len(r)} fields, "
                              f"expected {len(expected)}")
    num = _floats(path, rows, expected, range(len(expected)))
    return Trajectory(t_index=num[:, 0].astype(int), mu=float(num[0, 1]),
                      y=num[:, 2:2 + ny], a=num[:, 2 + ny:2 + ny + na],
                      reward=num[:, -1])


@dataclass(frozen=True)
class FieldSnapshot:
    vx: np.ndarray         # [n, n]
    vy: np.ndarray
    ref_vx: np.ndarray
    ref_vy: np.ndarray
    mu: float
    state_cost: float
    action_cost: float


def read_field(path: str | Path) -> FieldSnapshot:
    rows = _rows(path, FIELD_HEADER)
    num = _floats(path, rows, FIELD_HEADER, range(len(FIELD_HEADER)))
    ij = num[:, :2].astype(int)
    n = ij.max() + 1
    if len(rows) != n * n or not np.array_equal(
            ij, np.stack(np.divmod(np.arange(n * n), n), axis=1)):
        raise SchemaError(f"{path}: rows do not enumerate an {n}x{n} grid "
                          f"in row-major order")
    grids = [num[:, k].reshape(n, n) for k in (2, 3, 4, 5)]
    return FieldSnapshot(*grids, mu=float(num[0, 6]),
                         state_cost=float(num[0, 7]),
                         action_cost=float(num[0, 8]))
