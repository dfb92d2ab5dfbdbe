"""Cones, record times, influence fields and regeneration-based speed estimates.

All cones have their apex at the given point::

    up(x, n)   = {(y, t): t >= n, y - x >= v_bar (t - n)}
    down(x, n) = {(y, t): t <= n, y - x <  v_bar (t - n)}

Record ``k`` is the first time the walk enters ``up((1 - v_bar) k, 0)``.
A record is *good* when the walk then makes ``T''`` right steps in a row,
no particle from behind can reach the new cone, and the walk leaves the
parallelogram of height ``beta T'`` through its right side.  A good record
that also passes the surrounding-box filter yields a regeneration time
``R_k + T''``.  Particle histories are truncated to finite windows before and
after each point; both windows are parameters.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numba as nb
import numpy as np
from scipy import stats

from .env import ApcrwParams, EnvParams, ParticleCloud, Window, components_of, exact_window
from .finite_range import FiniteRangeParams, SpeedEstimate, coupled_speed_curve, estimate_speed
from .rng import derive_key, new_stream, next_poisson, next_uniform, uniform_at
from .walker import LatticePoint, Trajectory, WalkParams

_TOL = 1e-9


@dataclass(frozen=True)
class ConeParams:
    """Cone slope ``v_bar``, reference speed ``v_star`` and parallelogram height factor ``beta``.

    ``drift`` (the environment particles' speed) is optional; when given,
    ``drift < v_bar`` is enforced.  ``mirrored`` marks the slow regime,
    handled by reflecting space.
    """

    v_bar: float
    v_star: float
    beta: float | None = None
    drift: float | None = None
    mirrored: bool = False

    def __post_init__(self) -> None:
        if not -1 < self.v_bar < self.v_star < 1:
            raise ValueError(f"need -1 < v_bar < v_star < 1, got {self.v_bar}, {self.v_star}")
        if self.drift is not None and not self.drift < self.v_bar:
            raise ValueError(f"v_bar={self.v_bar} must exceed the particle drift {self.drift}")
        if self.beta is None:
            object.__setattr__(self, "beta", min_beta(self.v_bar, self.v_star))
        elif self.beta < min_beta(self.v_bar, self.v_star) - _TOL:
            raise ValueError("beta too small: a line of slope v_star would leave through the top")


def min_beta(v_bar: float, v_star: float) -> float:
    """Smallest height factor for which slope ``v_star`` exits the parallelogram on the right."""
    return (1 - v_bar) / (v_star - v_bar)


@dataclass(frozen=True)
class Schedule:
    """``T'' = floor(delta log T)`` and ``T' = floor(T^eps)`` with ``eps = min(c delta, 1) / 4``."""

    T: int
    delta: float
    eps: float
    T2: int
    T1: int

    @classmethod
    def from_walk(cls, T: int, walk: WalkParams, c: float = 1.0) -> "Schedule":
        pmin = min(walk.p_occ, walk.p_vac)
        if not 0 < pmin < 1:
            raise ValueError("need 0 < min(p_occ, p_vac) < 1")
        delta = 1 / (4 * math.log(1 / pmin))
        eps = min(c * delta, 1.0) / 4
        return cls(int(T), delta, eps, int(math.floor(delta * math.log(T))), int(math.floor(T ** eps)))


# ---------------------------------------------------------------- records


def _positions(traj) -> np.ndarray:
    return np.asarray(traj.positions if isinstance(traj, Trajectory) else traj, dtype=np.int64)


def record_times(traj, v_bar: float) -> np.ndarray:
    """``R_1, R_2, ...`` up to the end of the trajectory (started at time 0)."""
    if not -1 < v_bar < 1:
        raise ValueError("v_bar must lie in (-1, 1)")
    x = _positions(traj)
    z = x - x[0] - v_bar * np.arange(x.size)
    level = np.floor((np.maximum.accumulate(z) + _TOL) / (1 - v_bar)).astype(np.int64)
    top = int(level[-1])
    if top < 1:
        return np.zeros(0, dtype=np.int64)
    return np.searchsorted(level, np.arange(1, top + 1), side="left").astype(np.int64)


def in_up_cone(y, t, x: float, n: int, v_bar: float):
    return (np.asarray(t) >= n) & (np.asarray(y) - x >= v_bar * (np.asarray(t) - n) - _TOL)


def in_down_cone(y, t, x: float, n: int, v_bar: float):
    return (np.asarray(t) <= n) & (np.asarray(y) - x < v_bar * (np.asarray(t) - n) - _TOL)


# ---------------------------------------------------------------- influence field


def _candidates(cloud: ParticleCloud, x: int, n: int, past: int, ahead: int) -> np.ndarray:
    p = cloud.positions(n).astype(np.int64)
    return np.flatnonzero((p >= x - 2 * ahead - 1) & (p <= x + 2 * past + 1))


def influence_field(cloud: ParticleCloud, x: int, n: int, v_bar: float, horizon: int,
                    past: int | None = None, x_min: int | None = None) -> int:
    """Truncated influence field ``h^T(x, n)``.

    Smallest ``l >= 0`` such that no particle seen in ``down(x, n)`` during
    ``[n - past, n]`` (and, if ``x_min`` is set, at a site ``>= x_min``) is
    later found in ``up(x + l, n + l)`` during ``[n, n + horizon]``.  The
    result is at most ``horizon + 1``.
    """
    if cloud.horizon < n:
        raise ValueError(f"cloud horizon {cloud.horizon} is shorter than n={n}")
    past = horizon if past is None else past
    t0 = max(cloud.start_time, n - past)
    t1 = min(cloud.horizon, n + horizon)
    idx = _candidates(cloud, x, n, past, horizon)
    if idx.size == 0:
        return 0
    seg = cloud.paths[idx, t0 - cloud.start_time:t1 - cloud.start_time + 1].astype(np.int64)
    t = np.arange(t0, t1 + 1)
    rel = seg - x - v_bar * (t - n)
    back = rel[:, : n - t0 + 1] < -_TOL
    if x_min is not None:
        back &= seg[:, : n - t0 + 1] >= x_min
    hit = back.any(axis=1)
    if not hit.any():
        return 0
    fut = rel[hit][:, n - t0:]
    suffix = np.maximum.accumulate(fut[:, ::-1], axis=1)[:, ::-1]
    ell = np.arange(fut.shape[1])
    bad = suffix >= ell * (1 - v_bar) - _TOL
    # first l with no entry; beyond the recorded future nothing is seen
    last_bad = np.where(bad.any(axis=1), fut.shape[1] - 1 - np.argmax(bad[:, ::-1], axis=1), -1)
    return int(last_bad.max() + 1)


def influence_tail(cloud: ParticleCloud, points: Sequence[tuple[int, int]], v_bar: float, horizon: int,
                   past: int | None = None) -> dict:
    """Empirical tail ``P(h > l)`` of the influence field over a set of space-time points."""
    h = np.array([influence_field(cloud, x, n, v_bar, horizon, past) for x, n in points])
    ls = np.arange(int(h.max()) + 1 if h.size else 1)
    tail = np.array([(h > l).mean() for l in ls])
    return {"values": h, "ell": ls, "tail": tail}


# ---------------------------------------------------------------- good records and regenerations


def _exits_right(x: np.ndarray, ax: int, at: int, width: float, height: int, v_bar: float) -> bool | None:
    """Walk from the parallelogram's bottom-left corner: True on a right exit, None if cut off."""
    end = at + height
    if end >= x.size:
        return None
    t = np.arange(at, end + 1)
    rel = x[at:end + 1] - ax - v_bar * (t - at)
    right = np.flatnonzero(rel > width + _TOL)
    left = np.flatnonzero(rel < -_TOL)
    r = right[0] if right.size else math.inf
    l_ = left[0] if left.size else math.inf
    return bool(r < l_)


@dataclass
class GoodRecordScan:
    records: np.ndarray
    good: np.ndarray
    reasons: dict

    @property
    def fraction(self) -> float:
        return float(self.good.size / self.records.size) if self.records.size else 0.0


@dataclass(frozen=True)
class RegenerationSettings:
    """Derived sizes: ``T''``, ``T'``, the lookahead and the box side."""

    schedule: Schedule
    cone: ConeParams
    box_multiplier: float = 4.0
    lookahead: int | None = None

    @property
    def T2(self) -> int:
        return self.schedule.T2

    @property
    def height(self) -> int:
        return int(math.ceil(self.cone.beta * self.schedule.T1))

    @property
    def box(self) -> int:
        return int(round(self.box_multiplier * self.T2))

    @property
    def ahead(self) -> int:
        return self.lookahead if self.lookahead is not None else max(self.box, self.height, 1)


def _check_record(x: np.ndarray, cloud: ParticleCloud, r: int, s: RegenerationSettings) -> str:
    v = s.cone.v_bar
    T2 = s.T2
    if r + T2 + s.ahead > cloud.horizon or r + T2 >= x.size:
        return "truncated"
    if not np.array_equal(x[r:r + T2 + 1], x[r] + np.arange(T2 + 1)):
        return "right_steps"
    ax, at = int(x[r] + T2), r + T2
    ex = _exits_right(x, ax, at, (1 - v) * s.schedule.T1, s.height, v)
    if ex is None:
        return "truncated"
    if not ex:
        return "parallelogram"
    if influence_field(cloud, int(x[r]), r, v, s.ahead) > T2:
        return "influence"
    if influence_field(cloud, ax, at, v, s.ahead, past=T2) > 0:
        return "intermediate"
    return "good"


def detect_good_records(traj, cloud: ParticleCloud, cone: ConeParams, T: int, walk: WalkParams,
                        c: float = 1.0, lookahead: int | None = None) -> GoodRecordScan:
    """Indices ``k`` (0-based into the record list) of good record times."""
    s = RegenerationSettings(Schedule.from_walk(T, walk, c), cone, lookahead=lookahead)
    if s.T2 < 1:
        raise ValueError(f"T'' = {s.T2} < 1; increase T")
    x = _positions(traj)
    rec = record_times(x, cone.v_bar)
    reasons: dict[str, int] = {}
    good = []
    for k, r in enumerate(rec):
        why = _check_record(x, cloud, int(r), s)
        reasons[why] = reasons.get(why, 0) + 1
        if why == "good":
            good.append(k)
    return GoodRecordScan(rec, np.array(good, dtype=np.int64), reasons)


def _box_ok(x: np.ndarray, cloud: ParticleCloud, r: int, s: RegenerationSettings) -> bool:
    """No particle from the box behind the new cone reaches it; the walk stays inside it."""
    v = s.cone.v_bar
    ax, at = int(x[r] + s.T2), r + s.T2
    if influence_field(cloud, ax, at, v, s.ahead, past=s.T2 + s.box, x_min=int(x[r]) - s.box) > 0:
        return False
    end = min(at + s.ahead, x.size - 1)
    t = np.arange(at, end + 1)
    return bool(np.all(x[at:end + 1] - ax - v * (t - at) >= -_TOL))


def regeneration_times(traj, cloud: ParticleCloud, cone: ConeParams, T: int, walk: WalkParams,
                       c: float = 1.0, box_multiplier: float = 4.0, lookahead: int | None = None,
                       scan: GoodRecordScan | None = None) -> np.ndarray:
    """``R_k + T''`` for good records ``k`` that pass the surrounding-box filter."""
    s = RegenerationSettings(Schedule.from_walk(T, walk, c), cone, box_multiplier, lookahead)
    x = _positions(traj)
    scan = scan or detect_good_records(x, cloud, cone, T, walk, c, lookahead)
    taus = []
    for k in scan.good:
        r = int(scan.records[k])
        if _box_ok(x, cloud, r, s):
            tau = r + s.T2
            if not taus or tau > taus[-1]:
                taus.append(tau)
    return np.array(taus, dtype=np.int64)


# ---------------------------------------------------------------- renewal-reward estimate


@dataclass(frozen=True)
class NoEstimate:
    """Returned instead of an estimate when there are too few increments."""

    reason: str
    increments: int


def renewal_speed(increments: np.ndarray) -> SpeedEstimate | NoEstimate:
    """Ratio ``sum dX / sum dt`` with a delta-method standard error.

    ``increments`` has rows ``(dt, dx)``.
    """
    inc = np.asarray(increments, dtype=np.float64).reshape(-1, 2)
    m = inc.shape[0]
    if m < 2:
        return NoEstimate("fewer than two regeneration increments", m)
    dt, dx = inc[:, 0], inc[:, 1]
    ratio = float(dx.sum() / dt.sum())
    resid = dx - ratio * dt
    se = float(resid.std(ddof=1) / math.sqrt(m) / dt.mean())
    ratio = min(max(ratio, -1.0), 1.0)
    return SpeedEstimate(ratio, se, (ratio - 1.96 * se, ratio + 1.96 * se), m, int(dt.sum()),
                         {"estimator": "renewal-reward"})


def lag1(pairs_a: np.ndarray, pairs_b: np.ndarray) -> float:
    if pairs_a.size < 3 or np.std(pairs_a) == 0 or np.std(pairs_b) == 0:
        return 0.0
    return float(np.corrcoef(pairs_a, pairs_b)[0, 1])


# ---------------------------------------------------------------- simulation


@nb.njit(cache=True)
def _plain_replica(n, lo, size, rhos, alphas, qs, p_occ, p_vac, env_key, field_key):
    """Full particle paths (int16) and the walk on an exact window, plain model."""
    st = new_stream(env_key)
    nk = rhos.shape[0]
    cnt = np.zeros((nk, size), dtype=np.int64)
    total = 0
    for k in range(nk):
        for z in range(size):
            c = next_poisson(st, rhos[k])
            cnt[k, z] = c
            total += c
    paths = np.empty((total, n + 1), dtype=np.int16)
    kinds = np.empty(total, dtype=np.int64)
    i = 0
    for k in range(nk):
        pr = alphas[k] * qs[k]
        pl = alphas[k] * (1.0 - qs[k])
        for z in range(size):
            for _ in range(cnt[k, z]):
                p = lo + z
                kinds[i] = k
                paths[i, 0] = p
                for t in range(n):
                    u = next_uniform(st)
                    if u < pr:
                        p += 1
                    elif u < pr + pl:
                        p -= 1
                    paths[i, t + 1] = p
                i += 1
    # occupancy of the sites the walk can reach
    width = 2 * n + 1
    occ = np.zeros((n + 1, width), dtype=np.bool_)
    for j in range(total):
        for t in range(n):
            y = paths[j, t] + n
            if 0 <= y < width:
                occ[t, y] = True
    X = np.zeros(n + 1, dtype=np.int64)
    x = 0
    for t in range(n):
        u = uniform_at(field_key, x, t)
        thr = p_occ if occ[t, x + n] else p_vac
        x = x + 1 if u <= thr else x - 1
        X[t + 1] = x
    return paths, kinds, X


def simulate_plain(base: EnvParams, walk: WalkParams, n_steps: int, seed: int, replica: int = 0,
                   tag: str = "renewal") -> tuple[Trajectory, ParticleCloud]:
    """Walk and fully recorded particle cloud for ``n_steps`` steps of the plain model."""
    if 3 * n_steps + 4 > np.iinfo(np.int16).max:
        raise ValueError("n_steps too large for int16 particle paths")
    win = exact_window(n_steps)
    comps = components_of(base)
    paths, kinds, X = _plain_replica(
        int(n_steps), win.lo, win.size, np.array([c.rho for c in comps]), np.array([c.alpha for c in comps]),
        np.array([c.q for c in comps]), walk.p_occ, walk.p_vac,
        np.uint64(derive_key(seed, tag, "env", replica)), np.uint64(derive_key(seed, tag, "field", replica)))
    return Trajectory(LatticePoint(0, 0), X), ParticleCloud(kinds, paths, win)


def mirror(traj: Trajectory, cloud: ParticleCloud) -> tuple[Trajectory, ParticleCloud]:
    """Reflect space, turning the slow regime into the fast one."""
    w = cloud.window
    return (Trajectory(LatticePoint(-traj.start.x, traj.start.n), -traj.positions),
            ParticleCloud(cloud.kinds, -cloud.paths, Window(-w.hi, -w.lo), cloud.start_time))


def particle_drift(base: EnvParams) -> float:
    """Largest component drift (the binding one for the cone condition)."""
    return max(c.drift() for c in components_of(base))


def estimate_rho0(base: EnvParams, walk: WalkParams, rhos: Sequence[float], n_steps: int, replicas: int,
                  seed: int) -> float:
    """Density where the coupled speed curve crosses the particle drift (0 if it never is below)."""
    curve = coupled_speed_curve(FiniteRangeParams(base, walk), rhos, n_steps, replicas, seed, tag="rho0")
    rs = np.sort(np.asarray(rhos, dtype=np.float64))
    v = curve.means - particle_drift(base)
    if v[0] >= 0:
        return 0.0
    if v[-1] < 0:
        return float(rs[-1])
    j = int(np.argmax(v >= 0))
    return float(rs[j - 1] + (rs[j] - rs[j - 1]) * (-v[j - 1]) / (v[j] - v[j - 1]))


def auto_cone(base: EnvParams, walk: WalkParams, n_steps: int, replicas: int, seed: int,
              fractions: tuple[float, float] = (1 / 3, 2 / 3)) -> tuple[ConeParams, SpeedEstimate]:
    """Pick ``v_bar, v_star`` as estimated speeds at ``rho_bar < rho_star < rho``.

    Returns the cone and the estimated speed at ``rho``.  When the lower
    densities already fall on the other side of the drift (or in the slow
    regime, where they would have to lie above ``rho``), the slopes are
    placed at fractions of the gap between the drift and ``v(rho)``.  The
    slow regime is handled in the reflected picture.
    """
    rho = base.rho
    rhos = [fractions[0] * rho, fractions[1] * rho, rho]
    curve = coupled_speed_curve(FiniteRangeParams(base, walk), rhos, n_steps, replicas, seed, tag="auto-cone")
    vb, vs, v = (e.mean for e in curve.estimates)
    sign = 1.0 if v > particle_drift(base) else -1.0
    d = max(sign * c.drift() for c in components_of(base))
    v = sign * v
    if v <= d:
        raise ValueError(f"speed {sign * v:.4f} too close to the particle drift; no cone fits")
    if sign < 0 or not d < vb < vs < v:
        vb, vs = d + fractions[0] * (v - d), d + fractions[1] * (v - d)
    return ConeParams(vb, vs, drift=d, mirrored=sign < 0), curve.estimates[2]


# ---------------------------------------------------------------- experiment


@dataclass
class RenewalReport:
    rho: float
    cone: ConeParams
    schedule: Schedule
    horizon: int
    replicas: int
    record_counts: np.ndarray
    good_counts: np.ndarray
    regen_times: list[np.ndarray] = field(repr=False)
    increments: np.ndarray = field(repr=False)
    speed: SpeedEstimate | NoEstimate = None
    direct: SpeedEstimate | None = None
    diagnostics: dict = field(default_factory=dict)
    reasons: dict = field(default_factory=dict)

    def agreement(self) -> bool:
        """Renewal estimate inside the combined 95% interval around the direct estimate."""
        if isinstance(self.speed, NoEstimate) or self.direct is None:
            return False
        se = math.hypot(self.speed.stderr, self.direct.stderr)
        return abs(self.speed.mean - self.direct.mean) <= 1.96 * se

    def to_dict(self) -> dict:
        sp = self.speed
        return {
            "schema": "apcrw.renewal/1",
            "rho": self.rho,
            "cone": {"v_bar": self.cone.v_bar, "v_star": self.cone.v_star, "beta": self.cone.beta,
                     "mirrored": self.cone.mirrored},
            "schedule": {"T": self.schedule.T, "T2": self.schedule.T2, "T1": self.schedule.T1,
                         "delta": self.schedule.delta, "eps": self.schedule.eps},
            "horizon": self.horizon, "replicas": self.replicas,
            "record_times_per_replica": self.record_counts.tolist(),
            "good_records_per_replica": self.good_counts.tolist(),
            "regeneration_times": [t.tolist() for t in self.regen_times],
            "increments": self.increments.tolist(),
            "speed": (asdict_speed(sp) if isinstance(sp, SpeedEstimate) else {"no_estimate": sp.reason}),
            "direct": asdict_speed(self.direct) if self.direct else None,
            "agreement": self.agreement(),
            "diagnostics": self.diagnostics,
            "rejections": self.reasons,
        }

    def to_json(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n")
        return path


def asdict_speed(e: SpeedEstimate) -> dict:
    return {"mean": e.mean, "stderr": e.stderr, "ci95": list(e.ci95), "replicas": e.replicas,
            "n_steps": e.n_steps}


def increment_diagnostics(per_replica: list[np.ndarray]) -> dict:
    """Lag-1 correlation of consecutive spatial increments and a KS test between halves."""
    a, b = [], []
    for inc in per_replica:
        if inc.shape[0] >= 2:
            a.append(inc[:-1, 1])
            b.append(inc[1:, 1])
    a = np.concatenate(a) if a else np.zeros(0)
    b = np.concatenate(b) if b else np.zeros(0)
    allinc = np.concatenate(per_replica) if per_replica else np.zeros((0, 2))
    out = {"pairs": int(a.size), "lag1": lag1(a, b)}
    out["lag1_bound"] = 3 / math.sqrt(a.size) if a.size else math.inf
    out["lag1_ok"] = abs(out["lag1"]) < out["lag1_bound"]
    h = allinc.shape[0] // 2
    if h >= 2:
        ks_x = stats.ks_2samp(allinc[:h, 1], allinc[h:, 1])
        ks_t = stats.ks_2samp(allinc[:h, 0], allinc[h:, 0])
        out.update({"ks_dx_p": float(ks_x.pvalue), "ks_dt_p": float(ks_t.pvalue),
                    "ks_ok": bool(ks_x.pvalue > 0.01 and ks_t.pvalue > 0.01)})
    else:
        out.update({"ks_dx_p": None, "ks_dt_p": None, "ks_ok": False})
    if allinc.shape[0]:
        dt = allinc[:, 0]
        out["tail"] = {"dt_mean": float(dt.mean()), "dt_q99": float(np.quantile(dt, 0.99)),
                       "dt_max": int(dt.max())}
    return out


def renewal_experiment(base: ApcrwParams, walk: WalkParams, horizon: int, replicas: int, seed: int,
                       cone: ConeParams | None = None, T: int | None = None, c: float = 1.0,
                       box_multiplier: float = 4.0, direct_replicas: int = 2000,
                       cone_replicas: int = 400) -> RenewalReport:
    """Regenerations over independent plain-model replicas, pooled into one estimate.

    Without ``cone`` the slopes come from ``auto_cone``.  The direct
    estimate is ``X_N / N`` over an independent batch of ``direct_replicas``.
    """
    T = T or horizon
    if cone is None:
        cone, _ = auto_cone(base, walk, horizon, cone_replicas, seed)
    sched = Schedule.from_walk(T, walk, c)
    rec_n, good_n, taus, incs = [], [], [], []
    reasons: dict[str, int] = {}
    for r in range(replicas):
        traj, cloud = simulate_plain(base, walk, horizon, seed, r)
        if cone.mirrored:
            traj, cloud = mirror(traj, cloud)
        scan = detect_good_records(traj, cloud, cone, T, walk, c)
        for k, v in scan.reasons.items():
            reasons[k] = reasons.get(k, 0) + v
        tau = regeneration_times(traj, cloud, cone, T, walk, c, box_multiplier, scan=scan)
        x = traj.positions
        rec_n.append(scan.records.size)
        good_n.append(scan.good.size)
        taus.append(tau)
        if tau.size >= 2:
            incs.append(np.stack([np.diff(tau), np.diff(x[tau])], axis=1))
        else:
            incs.append(np.zeros((0, 2), dtype=np.int64))
    inc = np.concatenate(incs).astype(np.int64)
    speed = renewal_speed(inc)
    if cone.mirrored and isinstance(speed, SpeedEstimate):
        speed = SpeedEstimate(-speed.mean, speed.stderr, (-speed.ci95[1], -speed.ci95[0]), speed.replicas,
                              speed.n_steps, speed.params)
    direct = estimate_speed(FiniteRangeParams(base, walk), horizon, direct_replicas, seed, tag="renewal-direct")
    return RenewalReport(base.rho, cone, sched, horizon, replicas, np.array(rec_n), np.array(good_n), taus, inc,
                         speed, direct, increment_diagnostics(incs), reasons)


__all__ = [
    "ConeParams", "Schedule", "RegenerationSettings", "GoodRecordScan", "RenewalReport", "NoEstimate",
    "min_beta", "record_times", "in_up_cone", "in_down_cone", "influence_field", "influence_tail",
    "detect_good_records", "regeneration_times", "renewal_speed", "simulate_plain", "mirror",
    "estimate_rho0", "auto_cone", "renewal_experiment", "increment_diagnostics", "particle_drift",
]
