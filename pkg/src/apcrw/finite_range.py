"""Finite-range environments, speed estimation and the many-to-one coupling.

In the finite-range model the environment is thrown away and resampled
from the stationary product-Poisson law at every time that is a multiple
of ``L``.  Its speed ``v(rho, L) = E[X_L / L]`` is estimated by Monte Carlo
over independent replicas.  ``L = None`` stands for the plain model, which
on ``[0, n]`` is the same as ``L = n``.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats

from .engine import Layer, evolve_layers, replica_streams, run_batch, walker_path
from .env import (
    ApcrwParams, EnvParams, SuperpositionParams, Window, components_of,
    evolve_cloud, exact_window, sample_cloud,
)
from .kernels import _slt_core, exact_kernel
from .rng import derive_key, make_generator, new_stream, uniform_at
from .walker import LatticePoint, OccupancyGrid, Trajectory, UniformField, WalkParams, run_walk


@dataclass(frozen=True)
class FiniteRangeParams:
    """Environment law, walker thresholds and refresh period ``L`` (``None``: never)."""

    base: EnvParams
    walk: WalkParams
    L: int | None = None

    def __post_init__(self) -> None:
        if self.L is not None:
            if isinstance(self.L, float) and math.isinf(self.L):
                object.__setattr__(self, "L", None)
            elif int(self.L) < 1:
                raise ValueError(f"L must be >= 1, got {self.L}")
            else:
                object.__setattr__(self, "L", int(self.L))

    def period(self, n_steps: int) -> int:
        """Refresh period actually used over ``n_steps`` steps."""
        n = max(int(n_steps), 1)
        return n if self.L is None else min(self.L, n)

    def with_rho(self, rho: float) -> "FiniteRangeParams":
        return FiniteRangeParams(self.base.with_rho(rho), self.walk, self.L)

    def with_L(self, L: int | None) -> "FiniteRangeParams":
        return FiniteRangeParams(self.base, self.walk, L)

    def snapshot(self) -> dict:
        base = asdict(self.base)
        base["kind"] = type(self.base).__name__
        return {"base": base, "walk": asdict(self.walk), "L": self.L}


def env_layers(base: EnvParams, mask: int = 1, scale: float = 1.0) -> list[Layer]:
    """One engine layer per component, densities multiplied by ``scale``."""
    return [Layer(c.rho * scale, c.alpha, c.q, mask) for c in components_of(base)]


def nested_layers(base: EnvParams, rhos: Sequence[float]) -> list[Layer]:
    """Layers for walkers ``0..W-1`` on nested environments of densities ``rhos``.

    Walker ``w`` sees every increment layer with index ``<= w``, so its
    environment has density ``rhos[w]`` and contains walker ``w-1``'s.
    """
    rhos = [float(r) for r in rhos]
    if any(b < a for a, b in zip(rhos, rhos[1:])):
        raise ValueError("densities must be non-decreasing")
    if len(rhos) > 62:
        raise ValueError("at most 62 nested walkers")
    W = len(rhos)
    layers = []
    prev = 0.0
    for j, r in enumerate(rhos):
        inc = r - prev
        prev = r
        if inc <= 0:
            continue
        mask = sum(1 << w for w in range(j, W))
        scale = inc / base.rho if base.rho > 0 else 0.0
        if isinstance(base, SuperpositionParams):
            layers += [Layer(b * inc, a, q, mask) for b, a, q in zip(base.betas, base.alphas, base.qs)]
        else:
            layers += env_layers(base, mask, scale) if base.rho > 0 else [Layer(inc, base.alpha, base.q, mask)]
    if not layers:
        c = components_of(base)[0]
        layers = [Layer(0.0, c.alpha, c.q, (1 << W) - 1)]
    return layers


# ---------------------------------------------------------------- speed


@dataclass
class SpeedEstimate:
    mean: float
    stderr: float
    ci95: tuple[float, float]
    replicas: int
    n_steps: int
    params: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not -1.0 <= self.mean <= 1.0:
            raise ValueError("speed estimate outside [-1, 1]")

    @classmethod
    def from_samples(cls, speeds: np.ndarray, n_steps: int, params: dict | None = None) -> "SpeedEstimate":
        speeds = np.asarray(speeds, dtype=np.float64)
        if speeds.size < 2:
            raise ValueError("need at least two replicas for a standard error")
        m = float(speeds.mean())
        se = float(speeds.std(ddof=1) / math.sqrt(speeds.size))
        return cls(m, se, (m - 1.96 * se, m + 1.96 * se), int(speeds.size), int(n_steps), dict(params or {}))

    def z_score(self, reference: float) -> float:
        return (self.mean - reference) / self.stderr if self.stderr > 0 else (0.0 if self.mean == reference else math.inf)

    def row(self) -> dict:
        return {
            "rho": self.params.get("rho", ""), "L": self.params.get("L", ""), "n": self.n_steps,
            "mean": self.mean, "stderr": self.stderr, "ci_lo": self.ci95[0], "ci_hi": self.ci95[1],
            "replicas": self.replicas,
        }


SPEED_COLUMNS = ["rho", "L", "n", "mean", "stderr", "ci_lo", "ci_hi", "replicas"]


def write_speed_csv(estimates: Sequence[SpeedEstimate], path: str | Path) -> Path:
    """Speed table sorted by (rho, L); floats written with ``repr`` for exact replay."""
    path = Path(path)
    rows = sorted((e.row() for e in estimates), key=lambda r: (float(r["rho"]), float(r["L"] or math.inf)))
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["# schema=apcrw.speed/1"])
        w.writerow(SPEED_COLUMNS)
        for r in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in (r[c] for c in SPEED_COLUMNS)])
    return path


def _walk_args(params: FiniteRangeParams) -> tuple[float, float]:
    return params.walk.p_occ, params.walk.p_vac


def displacement_samples(params: FiniteRangeParams, n_steps: int, replicas: int, seed: int,
                         tag: str = "speed", check_times=None, slope: float = 0.0):
    """Engine batch for ``params``; replicas are keyed by ``derive_key(seed, tag)``."""
    key = derive_key(seed, tag)
    return run_batch(env_layers(params.base), n_steps, params.period(n_steps), *_walk_args(params),
                     key, replicas, check_times=check_times, slope=slope)


def estimate_speed(params: FiniteRangeParams, n_steps: int, replicas: int, seed: int,
                   tag: str = "speed") -> SpeedEstimate:
    """Mean of ``X_n / n`` over independent replicas with a normal 95% interval."""
    if replicas < 2:
        raise ValueError("replicas must be >= 2")
    res = displacement_samples(params, n_steps, replicas, seed, tag)
    snap = {"rho": params.base.rho, "L": params.period(n_steps), "seed": seed, "tag": tag}
    return SpeedEstimate.from_samples(res.final() / n_steps, n_steps, snap)


def run_finite_range_walk(params: FiniteRangeParams, n_steps: int, seed: int, replica: int = 0,
                          tag: str = "speed") -> Trajectory:
    """Trajectory of replica ``replica`` of the batch ``estimate_speed`` would run."""
    fk, ek = replica_streams(derive_key(seed, tag), replica)
    path = walker_path(env_layers(params.base), n_steps, params.period(n_steps), *_walk_args(params), fk, ek)
    return Trajectory(LatticePoint(0, 0), path[0])


def reference_walk(params: FiniteRangeParams, n_steps: int, seed) -> Trajectory:
    """Slow direct simulation: every particle stepped at every time.

    Each refresh block gets a fresh particle cloud on the exact window
    around the walker; the walker follows ``walker.run_walk``.  Only used to
    cross-check the event-driven engine in law.
    """
    rng = make_generator(*(seed if isinstance(seed, tuple) else (seed,)), "reference-walk")
    field_ = UniformField(int(rng.integers(0, 2**63)))
    L = params.period(n_steps)
    pos = [0]
    x, t = 0, 0
    while t < n_steps:
        blen = min(L - t % L, n_steps - t)
        win = exact_window(blen, center=x)
        cloud = sample_cloud(params.base, win, rng)
        cloud = evolve_cloud(cloud, params.base, max(blen - 1, 0), rng)
        grid = OccupancyGrid.from_cloud(cloud)
        grid = OccupancyGrid(grid.window, grid.occ, t, grid.counts)
        tr = run_walk(grid, LatticePoint(x, t), blen, field_, params.walk)
        pos.extend(tr.positions[1:].tolist())
        x, t = int(tr.positions[-1]), t + blen
    return Trajectory(LatticePoint(0, 0), np.array(pos))


# ---------------------------------------------------------------- closed forms


def one_step_speed(rho: float, walk: WalkParams) -> float:
    """``v(rho, 1)``: the walker sees an i.i.d. Poisson site at every step."""
    empty = math.exp(-rho)
    return (1 - empty) * (2 * walk.p_occ - 1) + empty * (2 * walk.p_vac - 1)


def two_step_speed(base: ApcrwParams, walk: WalkParams, kmax: int = 80) -> float:
    """``v(rho, 2)`` by enumerating the particle count at the origin.

    Given ``k`` particles at 0 and the first step direction ``s``, the site
    ``s`` is empty at time 1 with probability
    ``(1 - r_s)^k * exp(-rho * m_s)``, where ``r_s`` is the chance that a
    particle at 0 jumps to ``s`` and ``m_s`` collects the other sites that
    can feed ``s`` (the site itself staying, the far neighbour jumping in).
    """
    rho, a, q = base.rho, base.alpha, base.q
    r = {1: a * q, -1: a * (1 - q)}
    m = {1: (1 - a) + a * (1 - q), -1: (1 - a) + a * q}
    dv = lambda occ: 2 * (walk.p_occ if occ else walk.p_vac) - 1  # noqa: E731
    total = 0.0
    for k in range(kmax + 1):
        pk = stats.poisson.pmf(k, rho)
        p_right = walk.p_occ if k > 0 else walk.p_vac
        for s, ps in ((1, p_right), (-1, 1 - p_right)):
            empty = (1 - r[s]) ** k * math.exp(-rho * m[s])
            total += pk * ps * (s + (1 - empty) * dv(True) + empty * dv(False))
    return total / 2


# ---------------------------------------------------------------- coupled speed curves


@dataclass
class CoupledCurve:
    estimates: list[SpeedEstimate]
    violations: int
    replicas: int

    @property
    def means(self) -> np.ndarray:
        return np.array([e.mean for e in self.estimates])

    def monotone(self) -> bool:
        return bool(np.all(np.diff(self.means) >= 0))


def coupled_speed_curve(params: FiniteRangeParams, rhos: Sequence[float], n_steps: int, replicas: int,
                        seed: int, tag: str = "speed-curve") -> CoupledCurve:
    """Speeds at several densities from walkers on nested environments.

    All walkers of a replica read one uniform field and the environment of
    density ``rhos[j]`` contains that of ``rhos[j-1]``, so the positions are
    ordered at every step.  ``violations`` counts (step, pair) exceptions;
    it is zero by construction and serves as a check.
    """
    order = np.argsort(rhos, kind="stable")
    rs = [float(rhos[i]) for i in order]
    layers = nested_layers(params.base, rs)
    W = len(rs)
    res = run_batch(layers, n_steps, params.period(n_steps), *_walk_args(params), derive_key(seed, tag),
                    replicas, starts=(0,) * W)
    ests = [SpeedEstimate.from_samples(res.final(w) / n_steps, n_steps,
                                       {"rho": rs[w], "L": params.period(n_steps), "seed": seed, "tag": tag})
            for w in range(W)]
    return CoupledCurve(ests, int(res.violations.sum()), replicas)


def monotone_coupling_check(params: FiniteRangeParams, rho_lo: float, rho_hi: float, n_steps: int,
                            replicas: int, seed: int) -> dict:
    """Step-by-step ordering check ``X'_k <= X_k`` for densities ``rho_lo <= rho_hi``."""
    if rho_lo > rho_hi:
        raise ValueError("rho_lo must not exceed rho_hi")
    curve = coupled_speed_curve(params, [rho_lo, rho_hi], n_steps, replicas, seed, tag="monotone")
    return {"violations": curve.violations, "replicas": replicas, "n": n_steps,
            "speed_lo": curve.estimates[0].mean, "speed_hi": curve.estimates[1].mean,
            "mean_gap": (curve.estimates[1].mean - curve.estimates[0].mean) * n_steps}


def block_increment_diagnostic(params: FiniteRangeParams, blocks: int, replicas: int, seed: int) -> dict:
    """Lag-1 correlation of consecutive block increments ``X_{(k+1)L} - X_{kL}``."""
    L = params.L or 1
    n = L * blocks
    res = displacement_samples(params, n, replicas, seed, tag="blocks", check_times=np.arange(0, n + 1, L))
    inc = np.diff(res.checks[:, 0, :], axis=1).astype(np.float64)
    a, b = inc[:, :-1].ravel(), inc[:, 1:].ravel()
    r = float(np.corrcoef(a, b)[0, 1])
    pairs = a.size
    return {"lag1": r, "pairs": pairs, "bound": 3 / math.sqrt(pairs), "ok": abs(r) < 3 / math.sqrt(pairs)}


# ---------------------------------------------------------------- many-to-one coupling


def default_schedule(L: float, exponent: float = 0.1) -> float:
    return float(L) ** exponent


@dataclass
class CouplingReport:
    """Summary of the many-to-one coupling of ``X1 ~ P^{rho,n}`` and ``X2 ~ P^{rho+eps,L}``."""

    rho: float
    eps: float
    L: int
    n: int
    f_value: float
    replicas: int
    failures_G1: int
    failures_G2: int
    failures_G3: int
    min_gaps: np.ndarray = field(repr=False)
    g_flags: np.ndarray = field(repr=False)
    threshold: float = 0.0
    bound_rhs: float = 0.0
    regime: dict = field(default_factory=dict)
    blind_lookups: int = 0

    @property
    def events(self) -> int:
        return int((self.min_gaps <= self.threshold).sum())

    @property
    def event_frequency(self) -> float:
        return self.events / self.replicas

    @property
    def min_gap_distribution(self) -> dict:
        g = self.min_gaps
        return {"min": int(g.min()), "q05": float(np.quantile(g, 0.05)), "median": float(np.median(g)),
                "mean": float(g.mean()), "max": int(g.max())}

    def to_csv(self, path: str | Path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["# schema=apcrw.coupling/1"])
            w.writerow(["replica", "min_gap", "g1_fail", "g2_fail", "g3_fail"])
            for r, (g, fl) in enumerate(zip(self.min_gaps, self.g_flags)):
                w.writerow([r, int(g), int(fl[0]), int(fl[1]), int(fl[2])])
        return path

    def summary(self) -> dict:
        return {
            "schema": "apcrw.coupling-summary/1", "rho": self.rho, "eps": self.eps, "L": self.L, "n": self.n,
            "f": self.f_value, "replicas": self.replicas, "failures_G1": self.failures_G1,
            "failures_G2": self.failures_G2, "failures_G3": self.failures_G3, "threshold": self.threshold,
            "bound_rhs": self.bound_rhs, "events": self.events, "event_frequency": self.event_frequency,
            "min_gap": self.min_gap_distribution, "regime": self.regime, "blind_lookups": self.blind_lookups,
        }


def bridge_paths(starts: np.ndarray, ends: np.ndarray, t: int, alpha: float, q: float,
                 rng: np.random.Generator) -> np.ndarray:
    """Lazy-walk paths of ``t`` steps from ``starts`` conditioned to end at ``ends``.

    Each step is drawn from the exact conditional law given the remaining
    displacement, using the exact kernels for the remaining time.
    """
    starts = np.asarray(starts, dtype=np.int64)
    ends = np.asarray(ends, dtype=np.int64)
    out = np.empty((starts.size, t + 1), dtype=np.int64)
    out[:, 0] = starts
    if t == 0:
        return out
    if np.any(np.abs(ends - starts) > t):
        raise ValueError("endpoint further than t from the start")
    tabs = [np.concatenate([np.zeros(1), exact_kernel(m, alpha=alpha, q=q).as_float(), np.zeros(1)])
            for m in range(t + 1)]

    def mass(m, z):
        z = np.clip(z + m + 1, 0, 2 * m + 2)
        return tabs[m][z]

    probs = (alpha * q, 1 - alpha, alpha * (1 - q))
    pos = starts.copy()
    for s in range(t):
        m = t - s - 1
        r = ends - pos
        w = np.stack([probs[0] * mass(m, r - 1), probs[1] * mass(m, r), probs[2] * mass(m, r + 1)])
        c = np.cumsum(w, axis=0)
        u = rng.random(pos.size) * c[-1]
        pos = pos + np.where(u < c[0], 1, np.where(u < c[1], 0, -1))
        out[:, s + 1] = pos
    return out


def _g1_holds(c1: np.ndarray, c2: np.ndarray, lengths: range, lo_idx: int, hi_idx: int,
              rho: float, eps: float) -> bool:
    cs1 = np.concatenate([[0], np.cumsum(c1[lo_idx:hi_idx + 1])])
    cs2 = np.concatenate([[0], np.cumsum(c2[lo_idx:hi_idx + 1])])
    for ell in lengths:
        s1 = cs1[ell:] - cs1[:-ell]
        s2 = cs2[ell:] - cs2[:-ell]
        if np.any(s1 > (rho + eps / 4) * ell) or np.any(s2 < (rho + 3 * eps / 4) * ell):
            return False
    return True


def _regrid(counts: np.ndarray, lo: int, new_lo: int, size: int) -> np.ndarray:
    out = np.zeros(size, dtype=np.int64)
    a = max(lo, new_lo)
    b = min(lo + counts.size, new_lo + size)
    if b > a:
        out[a - new_lo:b - new_lo] = counts[a - lo:b - lo]
    return out


@dataclass(frozen=True)
class _Setup:
    rho: float
    eps: float
    L: int
    n: int
    f: float
    alpha: float
    q: float
    p_occ: float
    p_vac: float
    seed: int
    failure_mode: str
    force_g1: bool
    half: int

    @property
    def t_rec(self) -> int:
        return int(math.floor(self.f / 2))

    @property
    def g1_lengths(self) -> range:
        top = int(math.floor(self.f ** 0.25))
        return range(max(1, top // 2), top + 1)


class _Replica:
    """One realisation of the coupled pair; all layers live on a common grid size."""

    def __init__(self, s: _Setup, r: int) -> None:
        self.s = s
        self.r = r
        self.rng = make_generator(s.seed, "many-to-one", r)
        self.state = new_stream(np.uint64(derive_key(s.seed, "many-to-one-particles", r)))
        self.ukeys = np.array([derive_key(s.seed, "many-to-one-walk", r)] * 2, dtype=np.uint64)
        self.S = 2 * s.half + 1
        self.lo0 = -s.half
        self.X = np.zeros(2, dtype=np.int64)
        self.path = [np.zeros(2, dtype=np.int64)]
        self.time = 0
        self.flags = np.zeros(3, dtype=np.int64)
        self.blind = 0

    def _independent(self) -> None:
        if self.s.failure_mode == "independent":
            self.ukeys[1] = np.uint64(derive_key(self.s.seed, "many-to-one-walk-2", self.r, self.time))

    def _evolve(self, layers: list[tuple[np.ndarray, int, tuple, tuple]], steps: int) -> list[np.ndarray]:
        """Advance ``(counts, lo, visible_to, shifts)`` layers and both walkers."""
        if steps <= 0:
            return [c for c, *_ in layers]
        counts = np.stack([c for c, *_ in layers]).astype(np.int64)
        lo = np.array([l for _, l, _, _ in layers], dtype=np.int64)
        vis = np.array([v for *_, v, _ in layers], dtype=np.bool_)
        shift = np.array([sh for *_, sh in layers], dtype=np.int64)
        nl = len(layers)
        path = np.zeros((2, steps + 1), dtype=np.int64)
        _, blind = evolve_layers(counts, lo, np.full(nl, self.s.alpha), np.full(nl, self.s.q), vis, shift,
                                 self.X, self.ukeys, np.zeros(2, dtype=np.bool_), self.time, steps,
                                 self.s.p_occ, self.s.p_vac, self.state, path)
        self.blind += blind
        self.path.extend(path[:, 1:].T)
        self.time += steps
        return list(counts)

    def _step_free(self, counts: np.ndarray, lo: int, steps: int) -> np.ndarray:
        """Particles no walker can see, stepped without walkers."""
        if steps <= 0:
            return counts
        c = counts[None, :].astype(np.int64).copy()
        evolve_layers(c, np.array([lo]), np.array([self.s.alpha]), np.array([self.s.q]),
                      np.zeros((1, 0), dtype=np.bool_), np.zeros((1, 0), dtype=np.int64),
                      np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.uint64), np.zeros(0, dtype=np.bool_),
                      self.time, steps, self.s.p_occ, self.s.p_vac, self.state, np.zeros((0, steps + 1), dtype=np.int64))
        return c[0]

    def run(self) -> tuple[int, np.ndarray, int]:
        s = self.s
        S, lo0 = self.S, self.lo0
        A = self.rng.poisson(s.rho, S)
        E = self.rng.poisson(s.eps, S)
        seg = min(s.L, s.n)
        A, E = self._evolve([(A, lo0, (1, 1), (0, 0)), (E, lo0, (0, 1), (0, 0))], seg)
        eta1 = [(A, lo0)]
        k = 1
        while self.time < s.n:
            seg = min(s.L, s.n - self.time)
            c1 = sum(_regrid(c, l, lo0, S) for c, l in eta1)
            c2 = self.rng.poisson(s.rho + s.eps, S)
            eta1 = self._refresh(c1, c2, seg, k)
            k += 1
        path = np.array(self.path)
        gap = path[:, 1] - path[:, 0]
        return int(gap.min()), self.flags.copy(), self.blind

    def _refresh(self, c1: np.ndarray, c2: np.ndarray, seg: int, k: int) -> list[tuple[np.ndarray, int]]:
        s = self.s
        S, lo0 = self.S, self.lo0
        x1, x2 = int(self.X[0]), int(self.X[1])
        box = s.half - s.n
        ok = s.force_g1 or _g1_holds(c1, c2, s.g1_lengths, -box - lo0, box - lo0, s.rho, s.eps)
        if not ok:
            self.flags[0] += 1
            self._independent()
            c1, _ = self._evolve([(c1, lo0, (1, 0), (0, 0)), (c2, lo0, (0, 1), (0, 0))], seg)
            return [(c1, lo0)]
        t = min(s.t_rec, seg)
        H = 7 * s.L
        dom = np.arange(-H, H + 1)
        # relative frames: eta1 at x1 + y, eta2 at x2 - 2t + y
        i1 = x1 + dom - lo0
        i2 = x2 - 2 * t + dom - lo0
        n1 = c1[i1]
        n2 = c2[i2]
        rest1 = c1.copy()
        rest1[i1] = 0
        ylo = -H - t
        ysize = 2 * (H + t) + 1
        g = exact_kernel(t, alpha=s.alpha, q=s.q).as_float()
        key = np.uint64(derive_key(s.seed, "many-to-one-cloud", self.r, k))
        xs1 = np.repeat(dom, n1).astype(np.int64)
        xs2 = np.repeat(dom, n2).astype(np.int64)
        ends1 = _slt_core(xs1, g, t, ylo, ysize, key)[2]
        ends2 = _slt_core(xs2, g, t, ylo, ysize, key)[2]
        p1 = bridge_paths(xs1, ends1, t, s.alpha, s.q, self.rng)
        p2 = bridge_paths(xs2, ends2, t, s.alpha, s.q, self.rng)
        for j in range(t):
            y1 = self.X[0] - x1
            y2 = self.X[1] - (x2 - 2 * t)
            occ = (bool(np.any(p1[:, j] == y1)), bool(np.any(p2[:, j] == y2)))
            for w in range(2):
                u = uniform_at(self.ukeys[w], 0, self.time)
                thr = s.p_occ if occ[w] else s.p_vac
                self.X[w] += 1 if u <= thr else -1
            self.path.append(self.X.copy())
            self.time += 1
        rest1 = self._step_free(rest1, lo0, t)
        e1 = np.bincount(ends1 - ylo, minlength=ysize)
        e2 = np.bincount(ends2 - ylo, minlength=ysize)
        # embed the y-frame arrays in the common grid, stored in eta1's lab coordinates
        ylab = x1 - s.half
        e1 = _regrid(e1, x1 + ylo, ylab, S)
        e2 = _regrid(e2, x1 + ylo, ylab, S)
        mid = np.arange(-3 * s.L, 3 * s.L + 1) + s.half
        remain = seg - t
        if not np.all(e1[mid] <= e2[mid]):
            self.flags[1] += 1
            self._independent()
            d = x2 - 2 * t - x1
            rest1, e1, _ = self._evolve([(rest1, lo0, (1, 0), (0, 0)), (e1, ylab, (1, 0), (0, 0)),
                                         (e2, ylab, (0, 1), (0, -d))], remain)
            return [(rest1, lo0), (e1, ylab)]
        P = np.minimum(e1, e2)
        A1 = e1 - P
        B = e2 - P
        d = x2 - 2 * t - x1
        near = np.arange(-s.L, s.L + 1)
        g3 = True
        for _ in range(remain):
            if g3:
                lhs = rest1[x1 + near - lo0] + P[near + s.half] + A1[near + s.half]
                if np.any(lhs > P[near + s.half] + B[near + s.half]):
                    g3 = False
                    self.flags[2] += 1
                    self._independent()
            rest1, P, A1, B = self._evolve([(rest1, lo0, (1, 0), (0, 0)), (P, ylab, (1, 1), (0, -d)),
                                            (A1, ylab, (1, 0), (0, 0)), (B, ylab, (0, 1), (0, -d))], 1)
        return [(rest1, lo0), (P, ylab), (A1, ylab)]


def many_to_one_experiment(rho: float, eps: float, L: int, n: int, replicas: int, seed: int,
                           base: ApcrwParams | None = None, walk: WalkParams | None = None,
                           f_exponent: float = 0.1, failure_mode: str = "common",
                           force_g1: bool = False) -> CouplingReport:
    """Build the coupling replica by replica and tally the three failure events.

    Up to the first refresh both environments share their particles
    (``eta2 = eta1 + sprinkled layer``).  At each later multiple of ``L``
    the environment of ``X2`` is resampled; the density event G1 is checked
    on ``[-5n, 5n]``, the two configurations are pushed ``floor(f/2)``
    steps through soft local times on one shared Poisson cloud (G2 asks for
    domination on ``[-3L, 3L]`` in the shifted frames) and domination is
    then carried by paired particles (G3, on ``[-L, L]``).  After a failure
    both environments keep evolving with their own laws; the walkers keep
    reading one time-indexed uniform sequence unless
    ``failure_mode="independent"``, in which case ``X2`` switches to its own.
    ``force_g1`` skips the G1 test so the recoupling branch can be exercised.
    """
    base = base or ApcrwParams(rho, 0.5, 0.6)
    walk = walk or WalkParams(0.8, 0.3)
    if failure_mode not in ("common", "independent"):
        raise ValueError("failure_mode must be 'common' or 'independent'")
    if n < L:
        raise ValueError("need n >= L")
    f = default_schedule(L, f_exponent)
    eps_min = f ** (-1 / 40)
    regime = {
        "eps_ge_f^-1/40": eps >= eps_min, "rho_gt_f^-1/40": rho > eps_min, "n_multiple_of_L": n % L == 0,
        "f_le_L": f <= L, "g1_interval_lengths": list(range(max(1, int(f ** 0.25) // 2), int(f ** 0.25) + 1)),
        "recoupling_steps": int(f // 2),
    }
    for name in ("eps_ge_f^-1/40", "rho_gt_f^-1/40", "n_multiple_of_L"):
        if not regime[name]:
            warnings.warn(f"many-to-one coupling outside its hypotheses: {name} fails", stacklevel=2)
    half = 6 * n + 7 * L
    setup = _Setup(rho, eps, L, n, f, base.alpha, base.q, walk.p_occ, walk.p_vac, seed, failure_mode,
                   force_g1, half)
    gaps = np.empty(replicas, dtype=np.int64)
    flags = np.zeros((replicas, 3), dtype=np.int64)
    blind = 0
    for r in range(replicas):
        gaps[r], flags[r], b = _Replica(setup, r).run()
        blind += b
    K = math.ceil(n / L)
    threshold = -math.ceil(n / L - 1) * f
    bound = (K - 1) ** 2 * math.exp(-f ** (1 / 40))
    return CouplingReport(rho, eps, L, n, f, replicas, int((flags[:, 0] > 0).sum()),
                          int((flags[:, 1] > 0).sum()), int((flags[:, 2] > 0).sum()), gaps, flags > 0,
                          threshold, bound, regime, blind)


def coupling_trend(rho: float, eps: float, Ls: Sequence[int], ratio: int, replicas: int, seed: int,
                   **kw) -> list[CouplingReport]:
    """Reports at each ``L`` with ``n = ratio * L``."""
    return [many_to_one_experiment(rho, eps, L, ratio * L, replicas, seed, **kw) for L in Ls]


# ---------------------------------------------------------------- dyadic study


@dataclass
class DyadicStudy:
    rho: float
    eps: float
    n: int
    Ls: list[int]
    lower: list[SpeedEstimate]
    upper: list[SpeedEstimate]

    @property
    def diffs(self) -> np.ndarray:
        m = np.array([e.mean for e in self.lower])
        return np.abs(np.diff(m))

    @property
    def noise(self) -> np.ndarray:
        se = np.array([e.stderr for e in self.lower])
        return np.sqrt(se[1:] ** 2 + se[:-1] ** 2)

    def decreasing_ok(self) -> bool:
        """Each difference is smaller than the previous one or inside its 2-stderr noise floor."""
        d, fl = self.diffs, self.noise
        return bool(all(d[j + 1] < d[j] or d[j + 1] <= 2 * fl[j + 1] for j in range(d.size - 1)))

    def crossing_margin(self, i: int = -1, j: int = 0) -> float:
        """``v(rho+eps, L_j) + 2 se - v(rho, L_i)``; nonnegative when the crossing check passes."""
        a, b = self.lower[i], self.upper[j]
        return b.mean + 2 * math.hypot(a.stderr, b.stderr) - a.mean

    def crossing_ok(self) -> bool:
        return self.crossing_margin() >= 0

    def all_pairs_ok(self) -> bool:
        k = len(self.Ls)
        return all(self.crossing_margin(i, j) >= 0 for i in range(k) for j in range(k))

    def rows(self) -> list[dict]:
        out = []
        for L, lo, hi in zip(self.Ls, self.lower, self.upper):
            out.append({"L": L, "rho": self.rho, "mean": lo.mean, "stderr": lo.stderr,
                        "rho_eps_mean": hi.mean, "rho_eps_stderr": hi.stderr, "replicas": lo.replicas})
        return out

    def to_csv(self, path: str | Path) -> Path:
        path = Path(path)
        rows = self.rows()
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["# schema=apcrw.dyadic/1"])
            w.writerow(list(rows[0]))
            for r in rows:
                w.writerow([repr(v) if isinstance(v, float) else v for v in r.values()])
        return path

    def summary(self) -> dict:
        return {"schema": "apcrw.dyadic-summary/1", "rho": self.rho, "eps": self.eps, "n": self.n,
                "L": self.Ls, "diffs": self.diffs.tolist(), "noise_floor": (2 * self.noise).tolist(),
                "decreasing_ok": self.decreasing_ok(), "crossing_margin": self.crossing_margin(),
                "crossing_ok": self.crossing_ok(), "all_pairs_ok": self.all_pairs_ok()}


def dyadic_convergence_study(params: FiniteRangeParams, eps: float, Ls: Sequence[int], n_steps: int,
                             replicas: int, seed: int) -> DyadicStudy:
    """``v(rho, L)`` and ``v(rho + eps, L)`` along a dyadic list of ``L``.

    The two densities share each replica through nested environments, which
    costs little more than the lower density alone.
    """
    Ls = [int(L) for L in Ls]
    if any(b != 2 * a for a, b in zip(Ls, Ls[1:])):
        raise ValueError("L list must be dyadic and increasing")
    rho = params.base.rho
    lower, upper = [], []
    for L in Ls:
        curve = coupled_speed_curve(params.with_L(L), [rho, rho + eps], n_steps, replicas, seed,
                                    tag=f"dyadic-{L}")
        lower.append(curve.estimates[0])
        upper.append(curve.estimates[1])
    return DyadicStudy(rho, eps, n_steps, Ls, lower, upper)


# ---------------------------------------------------------------- deviation and ballisticity


def binomial_deviation_probability(n: int, p: float, delta: float, v: float | None = None) -> float:
    """``P(|X_n/n - v| >= delta)`` for the environment-free walk (``X_n = 2B - n``)."""
    v = 2 * p - 1 if v is None else v
    k = np.arange(n + 1)
    x = (2 * k - n) / n
    hit = np.abs(x - v) >= delta - 1e-12
    return float(stats.binom.pmf(k[hit], n, p).sum())


@dataclass
class DeviationReport:
    rho: float
    delta: float
    v_hat: float
    rows: list[dict]

    def frequencies(self) -> np.ndarray:
        return np.array([r["frequency"] for r in self.rows])

    def strictly_decreasing(self) -> bool:
        f = self.frequencies()
        return bool(np.all(np.diff(f) < 0))

    def to_csv(self, path: str | Path) -> Path:
        path = Path(path)
        cols = list(self.rows[0])
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["# schema=apcrw.deviation/1"])
            w.writerow(cols)
            for r in self.rows:
                w.writerow([repr(r[c]) if isinstance(r[c], float) else r[c] for c in cols])
        return path


def deviation_experiment(params: FiniteRangeParams, delta: float, ns: Sequence[int],
                         replicas: int | Sequence[int], seed: int, v_hat: float | None = None,
                         speed_replicas: int = 2000) -> DeviationReport:
    """Frequency of ``|X_n/n - v_hat| >= delta`` along ``ns``.

    The walk runs in the plain model; ``L = floor(sqrt(n))`` only enters the
    reference curve ``exp(-delta^2 n / (2^9 L))``.  Without ``v_hat`` the
    speed is estimated from an independent batch at the largest ``n``.
    """
    ns = [int(n) for n in ns]
    reps = [int(replicas)] * len(ns) if np.isscalar(replicas) else [int(r) for r in replicas]
    plain = params.with_L(None)
    if v_hat is None:
        v_hat = estimate_speed(plain, max(ns), speed_replicas, seed, tag="deviation-speed").mean
    rows = []
    for n, R in zip(ns, reps):
        res = displacement_samples(plain, n, R, seed, tag=f"deviation-{n}")
        x = res.final() / n
        hits = int((np.abs(x - v_hat) >= delta - 1e-12).sum())
        freq = hits / R
        L = math.isqrt(n)
        rows.append({"n": n, "L": L, "replicas": R, "events": hits, "frequency": freq,
                     "stderr": math.sqrt(max(freq * (1 - freq), 0) / R),
                     "reference": math.exp(-delta ** 2 * n / (2 ** 9 * L))})
    return DeviationReport(params.base.rho, delta, float(v_hat), rows)


def first_passage_probability(p: float, v_star: float, K: float, N: int) -> float:
    """``P(exists n <= N: X_n < n v_star - K)`` for the walk stepping right w.p. ``p``."""
    probs = np.zeros(2 * N + 1)
    probs[N] = 1.0
    hit = 0.0
    x = np.arange(-N, N + 1)
    for k in range(1, N + 1):
        nxt = np.zeros_like(probs)
        nxt[1:] += p * probs[:-1]
        nxt[:-1] += (1 - p) * probs[1:]
        out = x < k * v_star - K
        hit += nxt[out].sum()
        nxt[out] = 0.0
        probs = nxt
    return float(hit)


@dataclass
class BallisticityReport:
    rho: float
    v_star: float
    N: int
    rows: list[dict]

    def log_frequencies(self) -> np.ndarray:
        return np.array([r["log_frequency"] for r in self.rows])

    def strictly_decreasing(self) -> bool:
        return bool(np.all(np.diff(self.log_frequencies()) < 0))

    def to_csv(self, path: str | Path) -> Path:
        path = Path(path)
        cols = list(self.rows[0])
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["# schema=apcrw.ballisticity/1"])
            w.writerow(cols)
            for r in self.rows:
                w.writerow([repr(r[c]) if isinstance(r[c], float) else r[c] for c in cols])
        return path


def ballisticity_experiment(params: FiniteRangeParams, v_star: float, Ks: Sequence[float], N: int,
                            replicas: int, seed: int) -> BallisticityReport:
    """Frequency of ``{exists n <= N: X_n < n v_star - K}`` for each ``K``, plain model."""
    res = displacement_samples(params.with_L(None), N, replicas, seed, tag="ballisticity", slope=v_star)
    m = res.min_excess[:, 0]
    rows = []
    for K in Ks:
        hits = int((m < -K).sum())
        freq = hits / replicas
        rows.append({"K": K, "replicas": replicas, "events": hits, "frequency": freq,
                     "stderr": math.sqrt(freq * (1 - freq) / replicas),
                     "log_frequency": math.log(freq) if hits else -math.inf})
    return BallisticityReport(params.base.rho, float(v_star), int(N), rows)


__all__ = [
    "FiniteRangeParams", "SpeedEstimate", "CouplingReport", "CoupledCurve", "DyadicStudy",
    "DeviationReport", "BallisticityReport", "env_layers", "nested_layers", "estimate_speed",
    "displacement_samples", "run_finite_range_walk", "reference_walk", "one_step_speed",
    "two_step_speed", "coupled_speed_curve", "monotone_coupling_check", "block_increment_diagnostic",
    "many_to_one_experiment", "coupling_trend", "dyadic_convergence_study", "deviation_experiment",
    "binomial_deviation_probability", "ballisticity_experiment", "first_passage_probability",
    "bridge_paths", "write_speed_csv", "default_schedule",
]
