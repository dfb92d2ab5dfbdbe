"""The driven walker, the shared uniform field and monotone coupling of walks.

The walker steps right when ``U <= p_occ`` on an occupied site and when
``U <= p_vac`` on an empty one, with ``U`` read from a uniform field indexed
by absolute space-time points.  Two walkers on ordered environments that
read the same field can never cross without first meeting, and once they
meet they move together.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import numpy as np

from .env import EnvState, ParticleCloud, Window, counts_of
from .rng import uniform_at, uniform_block


@dataclass(frozen=True)
class WalkParams:
    p_occ: float
    p_vac: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.p_vac <= 1.0 and 0.0 <= self.p_occ <= 1.0):
            raise ValueError("p_occ and p_vac must be probabilities")
        if self.p_vac > self.p_occ:
            raise ValueError(
                f"p_vac={self.p_vac} exceeds p_occ={self.p_occ}; the walker must be pushed "
                "right more often on occupied sites (p_occ > p_vac)"
            )

    @property
    def is_strict(self) -> bool:
        """Whether ``0 < p_vac < p_occ < 1``."""
        return 0.0 < self.p_vac < self.p_occ < 1.0


@dataclass(frozen=True)
class LatticePoint:
    """Space-time point; ``shifted`` marks the odd sublattice (x + n odd)."""

    x: int
    n: int

    def __post_init__(self) -> None:
        if self.n < 0:
            raise ValueError("time must be nonnegative")

    @property
    def shifted(self) -> bool:
        return (self.x + self.n) % 2 == 1


class UniformField:
    """Deterministic uniforms ``U_w`` attached to space-time points ``w = (x, n)``."""

    def __init__(self, key: int) -> None:
        self.key = np.uint64(int(key) & 0xFFFFFFFFFFFFFFFF)

    def __call__(self, x: int, n: int) -> float:
        return float(uniform_at(self.key, int(x), int(n)))

    def at(self, point: LatticePoint) -> float:
        return self(point.x, point.n)

    def values(self, xs, ns) -> np.ndarray:
        xs = np.asarray(xs, dtype=np.int64)
        ns = np.broadcast_to(np.asarray(ns, dtype=np.int64), xs.shape).copy()
        return uniform_block(self.key, xs.ravel(), ns.ravel()).reshape(xs.shape)

    def __repr__(self) -> str:
        return f"UniformField(key={int(self.key)})"


@dataclass
class Trajectory:
    """Positions ``X_0..X_n`` of a walk started at ``start``."""

    start: LatticePoint
    positions: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        self.positions = np.asarray(self.positions, dtype=np.int64)
        if self.positions.size == 0 or self.positions[0] != self.start.x:
            raise ValueError("trajectory must begin at its start point")
        if self.positions.size > 1 and not np.all(np.abs(np.diff(self.positions)) == 1):
            raise ValueError("walker steps must be +1 or -1")

    @property
    def n_steps(self) -> int:
        return self.positions.size - 1

    @property
    def times(self) -> np.ndarray:
        return self.start.n + np.arange(self.positions.size)

    def __getitem__(self, k):
        return self.positions[k]

    def displacement(self) -> int:
        return int(self.positions[-1] - self.positions[0])

    def to_csv(self, path: str | Path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "position"])
            w.writerows(zip(range(self.positions.size), self.positions.tolist()))
        return path


def arrow(occupied: bool, u: float, params: WalkParams) -> int:
    """``+1`` when ``u`` is at most the threshold for the site's state, else ``-1``."""
    if not 0.0 <= u <= 1.0:
        raise ValueError("u must lie in [0, 1]")
    thr = params.p_occ if occupied else params.p_vac
    return 1 if u <= thr else -1


class Environment(Protocol):
    """Anything that can answer occupancy queries on a space-time domain."""

    def occupied(self, x: int, t: int) -> bool: ...

    def covers(self, x_lo: int, x_hi: int, t_lo: int, t_hi: int) -> bool: ...


class OccupancyGrid:
    """Occupancy on ``window x [t0, t0 + T - 1]`` stored as a boolean array ``occ[t, x]``."""

    def __init__(self, window: Window, occ: np.ndarray, t0: int = 0, counts: np.ndarray | None = None):
        self.window = window
        self.occ = np.asarray(occ, dtype=bool)
        self.t0 = t0
        self.counts = counts
        if self.occ.ndim != 2 or self.occ.shape[1] != window.size:
            raise ValueError("occupancy grid must have shape (times, window size)")

    @property
    def t_last(self) -> int:
        return self.t0 + self.occ.shape[0] - 1

    def occupied(self, x: int, t: int) -> bool:
        return bool(self.occ[t - self.t0, x - self.window.lo])

    def count(self, x: int, t: int) -> int:
        if self.counts is None:
            raise ValueError("grid was built without counts")
        return int(self.counts[t - self.t0, x - self.window.lo])

    def covers(self, x_lo: int, x_hi: int, t_lo: int, t_hi: int) -> bool:
        return self.window.lo <= x_lo and x_hi <= self.window.hi and self.t0 <= t_lo and t_hi <= self.t_last

    @classmethod
    def from_cloud(cls, cloud: ParticleCloud, window: Window | None = None) -> "OccupancyGrid":
        window = window or cloud.window
        T = cloud.paths.shape[1]
        counts = np.zeros((T, window.size), dtype=np.int64)
        inside = window.contains(cloud.paths)
        tt = np.broadcast_to(np.arange(T), cloud.paths.shape)
        np.add.at(counts, (tt[inside], cloud.paths[inside] - window.lo), 1)
        return cls(window, counts > 0, cloud.start_time, counts)

    @classmethod
    def from_states(cls, states: list[EnvState]) -> "OccupancyGrid":
        counts = np.stack([s.total_counts() for s in states])
        return cls(states[0].window, counts > 0, states[0].time, counts)

    @classmethod
    def constant(cls, window: Window, T: int, value: bool, t0: int = 0) -> "OccupancyGrid":
        return cls(window, np.full((T, window.size), value), t0)

    def dominated_by(self, other: "OccupancyGrid", region: Window | None = None,
                     t_lo: int | None = None, t_hi: int | None = None) -> bool:
        """Whether this grid's counts are pointwise at most ``other``'s on a region."""
        region = region or self.window
        t_lo = self.t0 if t_lo is None else t_lo
        t_hi = self.t_last if t_hi is None else t_hi
        a = self._slice(region, t_lo, t_hi)
        b = other._slice(region, t_lo, t_hi)
        return bool(np.all(a <= b))

    def _slice(self, region: Window, t_lo: int, t_hi: int) -> np.ndarray:
        src = self.counts if self.counts is not None else self.occ.astype(np.int64)
        return src[t_lo - self.t0:t_hi - self.t0 + 1, region.lo - self.window.lo:region.hi - self.window.lo + 1]


def occupancy_from_cloud(cloud: ParticleCloud, window: Window | None = None) -> OccupancyGrid:
    return OccupancyGrid.from_cloud(cloud, window)


def run_walk(env: Environment, start: LatticePoint, n_steps: int, ufield: UniformField,
             params: WalkParams) -> Trajectory:
    """Follow the arrows from ``start`` for ``n_steps`` steps."""
    x, t = start.x, start.n
    if not env.covers(x - n_steps, x + n_steps, t, t + max(n_steps - 1, 0)):
        raise ValueError("environment does not cover the space-time cone reachable from the start")
    pos = np.empty(n_steps + 1, dtype=np.int64)
    pos[0] = x
    for k in range(n_steps):
        x += arrow(env.occupied(x, t + k), ufield(x, t + k), params)
        pos[k + 1] = x
    return Trajectory(start, pos)


@dataclass
class CoupledWalks:
    lo: Trajectory
    hi: Trajectory
    region_ok: bool
    violations: int

    @property
    def gap(self) -> np.ndarray:
        return self.hi.positions - self.lo.positions

    @property
    def merged_at(self) -> int | None:
        hit = np.flatnonzero(self.gap == 0)
        return int(hit[0]) if hit.size else None


def run_coupled_walks(env_lo: OccupancyGrid, env_hi: OccupancyGrid, start_lo: LatticePoint,
                      start_hi: LatticePoint, n_steps: int, ufield: UniformField,
                      params: WalkParams, region: Window | None = None) -> CoupledWalks:
    """Walks on ordered environments driven by one uniform field.

    ``region_ok`` records whether ``env_lo <= env_hi`` held on ``region``
    over the time span (if it did not, the ordering guarantee is void).
    ``violations`` counts times where the low walk is strictly right of the
    high one.
    """
    if start_lo.n != start_hi.n:
        raise ValueError("coupled walks must start at the same time")
    if start_lo.x > start_hi.x:
        raise ValueError("the low walk must start weakly left of the high walk")
    region = region or env_lo.window
    t_hi = start_lo.n + max(n_steps - 1, 0)
    ok = env_lo.dominated_by(env_hi, region, start_lo.n, t_hi)
    a = run_walk(env_lo, start_lo, n_steps, ufield, params)
    b = run_walk(env_hi, start_hi, n_steps, ufield, params)
    return CoupledWalks(a, b, ok, int(np.sum(a.positions > b.positions)))
