"""APCRW environment: parameters, windows, count and particle representations.

A configuration is stored either as per-site counts (``EnvState``) or as
individually tracked particle paths (``ParticleCloud``).  Both evolve by
independent lazy asymmetric steps: right with probability ``alpha*q``, left
with probability ``alpha*(1-q)`` and stay otherwise.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .rng import as_generator


@dataclass(frozen=True)
class ApcrwParams:
    """Density ``rho``, activity ``alpha`` and right-step probability ``q``.

    Boundary values (alpha or q equal to 0 or 1) are accepted so that
    degenerate sanity cases can be simulated; ``is_regular`` reports whether
    the strict open-interval conditions hold.
    """

    rho: float
    alpha: float
    q: float

    def __post_init__(self) -> None:
        if not np.isfinite(self.rho) or self.rho < 0:
            raise ValueError(f"rho must be a finite nonnegative density, got {self.rho}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not 0.0 <= self.q <= 1.0:
            raise ValueError(f"q must lie in [0, 1], got {self.q}")

    @property
    def is_regular(self) -> bool:
        return self.rho > 0 and 0 < self.alpha < 1 and 0 < self.q < 1

    def drift(self) -> float:
        return self.alpha * (2 * self.q - 1)

    def step_probs(self) -> tuple[float, float, float]:
        """(left, stay, right) probabilities of a single particle step."""
        return self.alpha * (1 - self.q), 1 - self.alpha, self.alpha * self.q

    def with_rho(self, rho: float) -> "ApcrwParams":
        return ApcrwParams(rho, self.alpha, self.q)


@dataclass(frozen=True)
class SuperpositionParams:
    """Independent APCRW components sharing a density scale.

    Component ``i`` has density ``betas[i] * base_rho``.
    """

    base_rho: float
    betas: tuple[float, ...]
    alphas: tuple[float, ...]
    qs: tuple[float, ...]

    def __post_init__(self) -> None:
        n = len(self.betas)
        if n < 1:
            raise ValueError("a superposition needs at least one component")
        if len(self.alphas) != n or len(self.qs) != n:
            raise ValueError("betas, alphas and qs must have equal lengths")
        if any(b <= 0 for b in self.betas):
            raise ValueError("all betas must be positive")
        if self.base_rho < 0:
            raise ValueError("base_rho must be nonnegative")
        object.__setattr__(self, "betas", tuple(float(b) for b in self.betas))
        object.__setattr__(self, "alphas", tuple(float(a) for a in self.alphas))
        object.__setattr__(self, "qs", tuple(float(v) for v in self.qs))
        self.components  # validates each component

    @property
    def components(self) -> tuple[ApcrwParams, ...]:
        return tuple(
            ApcrwParams(b * self.base_rho, a, q)
            for b, a, q in zip(self.betas, self.alphas, self.qs)
        )

    @property
    def rho(self) -> float:
        return self.base_rho

    def drifts(self) -> tuple[float, ...]:
        return tuple(c.drift() for c in self.components)

    def with_rho(self, rho: float) -> "SuperpositionParams":
        return SuperpositionParams(rho, self.betas, self.alphas, self.qs)


EnvParams = ApcrwParams | SuperpositionParams


def components_of(params: EnvParams) -> tuple[ApcrwParams, ...]:
    if isinstance(params, SuperpositionParams):
        return params.components
    return (params,)


@dataclass(frozen=True)
class Window:
    """Inclusive integer interval ``[lo, hi]``."""

    lo: int
    hi: int

    def __post_init__(self) -> None:
        if self.hi < self.lo:
            raise ValueError(f"empty window [{self.lo}, {self.hi}]")

    @property
    def size(self) -> int:
        return self.hi - self.lo + 1

    def sites(self) -> np.ndarray:
        return np.arange(self.lo, self.hi + 1)

    def contains(self, x) -> np.ndarray | bool:
        return (x >= self.lo) & (x <= self.hi)

    def shrink(self, margin: int) -> "Window":
        return Window(self.lo + margin, self.hi - margin)

    @classmethod
    def around(cls, center: int, half_width: int) -> "Window":
        return cls(center - half_width, center + half_width)


def exact_window(n_steps: int, buffer: int = 2, center: int = 0) -> Window:
    """Window that makes an ``n_steps`` walk started at ``center`` lossless.

    The walker stays within distance ``n_steps`` of its start, and occupancy
    there up to time ``n_steps`` only involves particles that started within
    a further distance ``n_steps``.
    """
    return Window.around(center, 2 * n_steps + buffer)


@dataclass
class EnvState:
    """Per-type particle counts on a window at one time.

    ``counts`` has shape ``(types, window.size)``.  ``overflow`` tallies
    particles that have left the window since the state was sampled.
    """

    window: Window
    counts: np.ndarray
    time: int = 0
    overflow: int = 0

    def __post_init__(self) -> None:
        c = np.asarray(self.counts, dtype=np.int64)
        if c.ndim == 1:
            c = c[None, :]
        if c.shape[1] != self.window.size:
            raise ValueError("counts length must equal the window size")
        if (c < 0).any():
            raise ValueError("counts must be nonnegative")
        self.counts = c

    @property
    def types(self) -> int:
        return self.counts.shape[0]

    def total_counts(self) -> np.ndarray:
        """Counts summed over particle types."""
        return self.counts.sum(axis=0)

    def occupied(self) -> np.ndarray:
        """A site is occupied when any type has a particle there."""
        return self.total_counts() > 0

    def total(self) -> int:
        return int(self.counts.sum())

    def at(self, x: int) -> int:
        return int(self.total_counts()[x - self.window.lo])

    def interval_mass(self, lo: int, hi: int) -> int:
        a, b = lo - self.window.lo, hi - self.window.lo
        return int(self.total_counts()[a:b + 1].sum())

    def rows(self):
        sites = self.window.sites()
        for k in range(self.types):
            for x, c in zip(sites, self.counts[k]):
                yield int(x), k, int(c)

    def to_csv(self, path: str | Path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["site", "type", "count"])
            w.writerows(self.rows())
        return path


@dataclass
class ParticleCloud:
    """Individually tracked particles.

    ``paths[i, k]`` is the position of particle ``i`` at time
    ``start_time + k``; ``kinds[i]`` is its type index.  Signed integer
    paths keep their dtype (long clouds are stored as ``int16``); anything
    else is converted to ``int64``.
    """

    kinds: np.ndarray
    paths: np.ndarray
    window: Window
    start_time: int = 0

    def __post_init__(self) -> None:
        self.kinds = np.asarray(self.kinds, dtype=np.int64)
        p = np.asarray(self.paths)
        if not np.issubdtype(p.dtype, np.signedinteger):
            p = p.astype(np.int64)
        if p.ndim == 1:
            p = p[:, None]
        self.paths = p
        if p.shape[0] != self.kinds.shape[0]:
            raise ValueError("one type index per particle is required")

    @property
    def size(self) -> int:
        return self.paths.shape[0]

    @property
    def horizon(self) -> int:
        """Last time index with recorded positions."""
        return self.start_time + self.paths.shape[1] - 1

    def positions(self, time: int) -> np.ndarray:
        k = time - self.start_time
        if not 0 <= k < self.paths.shape[1]:
            raise IndexError(f"time {time} outside [{self.start_time}, {self.horizon}]")
        return self.paths[:, k]

    def steps_are_local(self) -> bool:
        return bool(self.paths.shape[1] < 2 or np.abs(np.diff(self.paths, axis=1)).max(initial=0) <= 1)

    def subset(self, mask: np.ndarray) -> "ParticleCloud":
        return ParticleCloud(self.kinds[mask], self.paths[mask], self.window, self.start_time)

    @classmethod
    def concat(cls, clouds: Sequence["ParticleCloud"]) -> "ParticleCloud":
        base = clouds[0]
        return cls(
            np.concatenate([c.kinds for c in clouds]),
            np.concatenate([c.paths for c in clouds], axis=0),
            base.window,
            base.start_time,
        )


def sample_initial(params: EnvParams, window: Window, seed) -> EnvState:
    """Product Poisson configuration, one row per component."""
    comps = components_of(params)
    for c in comps:
        if c.rho <= 0:
            raise ValueError(f"sample_initial needs rho > 0, got {c.rho}")
    rng = as_generator(seed)
    counts = np.stack([rng.poisson(c.rho, size=window.size) for c in comps])
    return EnvState(window, counts, 0, 0)


def cloud_from_state(state: EnvState) -> ParticleCloud:
    kinds, pos = [], []
    sites = state.window.sites()
    for k in range(state.types):
        p = np.repeat(sites, state.counts[k])
        pos.append(p)
        kinds.append(np.full(p.size, k))
    return ParticleCloud(np.concatenate(kinds), np.concatenate(pos)[:, None], state.window, state.time)


def sample_cloud(params: EnvParams, window: Window, seed) -> ParticleCloud:
    return cloud_from_state(sample_initial(params, window, seed))


def _split_counts(c: np.ndarray, p: ApcrwParams, rng: np.random.Generator):
    """Multinomial (left, stay, right) split of per-site counts."""
    pl, _, pr = p.step_probs()
    right = rng.binomial(c, pr)
    rest = c - right
    cond = pl / (1.0 - pr) if pr < 1.0 else 0.0
    left = rng.binomial(rest, min(cond, 1.0))
    return left, rest - left, right


def step_counts(state: EnvState, params: EnvParams, seed) -> EnvState:
    """One synchronous step of every particle, performed on counts.

    Each site splits its particles into (left, stay, right) groups and
    ``eta_1(x) = r(x-1) + c(x) + l(x+1)``.  Particles pushed across the
    window edge are added to ``overflow``.
    """
    rng = as_generator(seed)
    comps = components_of(params)
    if len(comps) != state.types:
        raise ValueError("parameter components do not match state types")
    new = np.zeros_like(state.counts)
    lost = 0
    for k, p in enumerate(comps):
        left, stay, right = _split_counts(state.counts[k], p, rng)
        new[k] += stay
        new[k, :-1] += left[1:]
        new[k, 1:] += right[:-1]
        lost += int(left[0] + right[-1])
    return EnvState(state.window, new, state.time + 1, state.overflow + lost)


def evolve_counts(state: EnvState, params: EnvParams, steps: int, seed) -> EnvState:
    rng = as_generator(seed)
    for _ in range(steps):
        state = step_counts(state, params, rng)
    return state


def _particle_steps(kinds: np.ndarray, comps, n_steps: int, rng: np.random.Generator) -> np.ndarray:
    u = rng.random((kinds.size, n_steps))
    pl = np.array([c.step_probs()[0] for c in comps])[kinds][:, None]
    pr = np.array([c.step_probs()[2] for c in comps])[kinds][:, None]
    return (u < pr).astype(np.int64) - ((u >= pr) & (u < pr + pl)).astype(np.int64)


def step_particles(cloud: ParticleCloud, params: EnvParams, seed) -> ParticleCloud:
    """Append one independent lazy step to every particle path."""
    return evolve_cloud(cloud, params, 1, seed)


def evolve_cloud(cloud: ParticleCloud, params: EnvParams, steps: int, seed) -> ParticleCloud:
    """Append ``steps`` independent lazy steps to every particle path."""
    rng = as_generator(seed)
    if steps <= 0:
        return cloud
    inc = _particle_steps(cloud.kinds, components_of(params), steps, rng)
    ext = cloud.paths[:, -1:] + np.cumsum(inc, axis=1)
    return ParticleCloud(cloud.kinds, np.concatenate([cloud.paths, ext], axis=1), cloud.window, cloud.start_time)


def counts_of(cloud: ParticleCloud, time: int, window: Window | None = None, types: int | None = None) -> EnvState:
    """Histogram of particle positions at ``time`` on ``window``."""
    if not cloud.start_time <= time <= cloud.horizon:
        raise IndexError(f"time {time} outside [{cloud.start_time}, {cloud.horizon}]")
    window = window or cloud.window
    ntypes = types if types is not None else (int(cloud.kinds.max()) + 1 if cloud.size else 1)
    pos = cloud.positions(time)
    inside = window.contains(pos)
    counts = np.zeros((ntypes, window.size), dtype=np.int64)
    np.add.at(counts, (cloud.kinds[inside], pos[inside] - window.lo), 1)
    return EnvState(window, counts, time, int((~inside).sum()))


def couple_monotone(
    params_lo: ApcrwParams,
    params_hi: ApcrwParams,
    window: Window,
    horizon: int,
    seed,
) -> tuple[ParticleCloud, ParticleCloud]:
    """Clouds with ``eta_lo_t <= eta_hi_t`` pointwise for every time.

    The low cloud has density ``rho_lo``.  The high cloud consists of the
    same particles (identical paths) plus an independent Poisson layer of
    density ``rho_hi - rho_lo``.
    """
    if params_lo.rho > params_hi.rho:
        raise ValueError(f"need rho_lo <= rho_hi, got {params_lo.rho} > {params_hi.rho}")
    if (params_lo.alpha, params_lo.q) != (params_hi.alpha, params_hi.q):
        raise ValueError("coupled environments must share alpha and q")
    rng = as_generator(seed)
    base = ApcrwParams(params_lo.rho, params_lo.alpha, params_lo.q)
    if base.rho > 0:
        lo = evolve_cloud(sample_cloud(base, window, rng), base, horizon, rng)
    else:
        lo = ParticleCloud(np.zeros(0), np.zeros((0, horizon + 1)), window)
    gap = params_hi.rho - params_lo.rho
    if gap > 0:
        extra = evolve_cloud(sample_cloud(base.with_rho(gap), window, rng), base, horizon, rng)
        hi = ParticleCloud.concat([lo, extra])
    else:
        hi = ParticleCloud(lo.kinds.copy(), lo.paths.copy(), window, lo.start_time)
    return lo, hi


@dataclass
class DensityReport:
    ell: int
    rho: float
    eps: float
    worst_start: int
    worst_deviation: float
    min_density: float
    max_density: float
    passed: bool

    @property
    def lower_ok(self) -> bool:
        return self.min_density >= self.rho - self.eps

    @property
    def upper_ok(self) -> bool:
        return self.max_density <= self.rho + self.eps


def interval_sums(counts: np.ndarray, ell: int) -> np.ndarray:
    """Sums over all length-``ell`` sub-intervals (sliding window)."""
    c = np.concatenate([[0], np.cumsum(counts, dtype=np.int64)])
    return c[ell:] - c[:-ell]


def empirical_density_report(state: EnvState, ell: int, rho: float, eps: float) -> DensityReport:
    """Largest deviation of ``eta(I)/ell`` from ``rho`` over length-``ell`` intervals.

    The state passes when every interval satisfies
    ``|eta(I) - rho*ell| < eps*ell``.
    """
    if not 1 <= ell <= state.window.size:
        raise ValueError(f"interval length {ell} outside [1, {state.window.size}]")
    sums = interval_sums(state.total_counts(), ell)
    dev = np.abs(sums - rho * ell) / ell
    i = int(np.argmax(dev))
    return DensityReport(
        ell=ell,
        rho=rho,
        eps=eps,
        worst_start=state.window.lo + i,
        worst_deviation=float(dev[i]),
        min_density=float(sums.min() / ell),
        max_density=float(sums.max() / ell),
        passed=bool(dev[i] < eps),
    )


@dataclass(frozen=True)
class StationarityReport:
    rho: float
    t: int
    observations: int
    mean: float
    variance: float

    @property
    def ratio(self) -> float:
        return self.variance / self.mean if self.mean > 0 else float("nan")

    def ok(self, tol: float = 0.02) -> bool:
        return abs(self.ratio - 1) <= tol

    def row(self) -> dict:
        return {"rho": self.rho, "t": self.t, "observations": self.observations, "mean": self.mean,
                "variance": self.variance, "ratio": self.ratio}


def stationarity_check(params: EnvParams, t: int, interior: int, replicas: int, seed) -> StationarityReport:
    """Pooled mean and variance of interior site counts after ``t`` count steps.

    Each replica starts from the product Poisson law on the exact window
    around ``interior`` sites, so the interior marginals are untouched by
    the window edge.
    """
    rng = as_generator(seed)
    win = Window(-(t + 2), interior + t + 1)
    s1 = s2 = 0.0
    m = 0
    for _ in range(replicas):
        st = evolve_counts(sample_initial(params, win, rng), params, t, rng)
        c = st.total_counts()[t + 2:t + 2 + interior].astype(np.float64)
        s1 += c.sum()
        s2 += (c * c).sum()
        m += c.size
    mean = s1 / m
    return StationarityReport(float(sum(p.rho for p in components_of(params))), t, m, float(mean),
                              float((s2 / m - mean * mean) * m / (m - 1)))
