"""Heat kernels of the environment particles and soft-local-time couplings."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numba as nb
import numpy as np

from .env import ApcrwParams, EnvState, Window, empirical_density_report
from .rng import derive_key, new_stream, next_exponential, uniform_at


@dataclass(frozen=True)
class KernelTable:
    """Law of the displacement after ``t`` steps, indexed by offset ``-t..t``.

    ``masses`` is kept in extended precision (``np.longdouble``).
    """

    t: int
    alpha: float
    q: float
    lazy: bool
    masses: np.ndarray = field(repr=False)

    @property
    def offsets(self) -> np.ndarray:
        return np.arange(-self.t, self.t + 1)

    def mass(self, z: int) -> float:
        if abs(z) > self.t:
            return 0.0
        return float(self.masses[z + self.t])

    def as_float(self) -> np.ndarray:
        return self.masses.astype(np.float64)

    def total(self) -> np.longdouble:
        return self.masses.sum()

    def mean(self) -> np.longdouble:
        return (self.offsets.astype(np.longdouble) * self.masses).sum()

    def expected_mean(self) -> float:
        drift = 2 * self.q - 1
        return self.t * drift * (self.alpha if self.lazy else 1.0)

    def to_csv(self, path: str | Path, asymptotic: bool = True) -> Path:
        """Columns offset, mass, asymptotic_value, rel_error.

        The asymptotic column is only filled for non-lazy kernels of even
        length, where the leading-order formula applies.
        """
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["# schema=apcrw.kernel/1"])
            w.writerow(["offset", "mass", "asymptotic_value", "rel_error"])
            for z, m in zip(self.offsets, self.masses):
                a = r = ""
                if asymptotic and not self.lazy and self.t % 2 == 0 and z % 2 == 0 and abs(z) < self.t:
                    a = asymptotic_kernel(self.t // 2, z // 2, self.q)
                    r = abs(a - float(m)) / float(m) if m > 0 else ""
                w.writerow([int(z), repr(float(m)), a if a == "" else repr(a), r if r == "" else repr(r)])
        return path


def _one_step(alpha: float, q: float, lazy: bool) -> np.ndarray:
    ld = np.longdouble
    if lazy:
        return np.array([ld(alpha) * (1 - ld(q)), 1 - ld(alpha), ld(alpha) * ld(q)], dtype=ld)
    return np.array([1 - ld(q), ld(0), ld(q)], dtype=ld)


def exact_kernel(t: int, params: ApcrwParams | None = None, lazy: bool = True, *,
                 alpha: float | None = None, q: float | None = None) -> KernelTable:
    """Exact ``t``-step displacement law by iterated three-tap convolution.

    With ``lazy=False`` the walk always moves (right with probability ``q``),
    so ``alpha`` is ignored and the support has the parity of ``t``.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    if params is not None:
        alpha = params.alpha if alpha is None else alpha
        q = params.q if q is None else q
    if q is None or (lazy and alpha is None):
        raise ValueError("alpha and q are required")
    alpha = 1.0 if alpha is None else float(alpha)
    masses = _convolve_power(t, float(alpha), float(q), bool(lazy))
    return KernelTable(t, alpha, float(q), bool(lazy), masses)


@lru_cache(maxsize=64)
def _convolve_power_cached(t: int, alpha: float, q: float, lazy: bool) -> np.ndarray:
    step = _one_step(alpha, q, lazy)
    m = np.zeros(2 * t + 1, dtype=np.longdouble)
    m[t] = 1
    for k in range(1, t + 1):
        lo, hi = t - k + 1, t + k - 1  # support before step k
        prev = m[lo:hi + 1].copy()
        new = np.zeros(prev.size + 2, dtype=np.longdouble)
        new[:-2] += prev * step[0]
        new[1:-1] += prev * step[1]
        new[2:] += prev * step[2]
        m[lo - 1:hi + 2] = new
    m.setflags(write=False)
    return m


def _convolve_power(t: int, alpha: float, q: float, lazy: bool) -> np.ndarray:
    return _convolve_power_cached(t, alpha, q, lazy).copy()


def convolve_tables(a: KernelTable, b: KernelTable) -> KernelTable:
    """Law of the sum of independent displacements (semigroup check)."""
    if (a.alpha, a.q, a.lazy) != (b.alpha, b.q, b.lazy):
        raise ValueError("tables must describe the same walk")
    out = np.zeros(2 * (a.t + b.t) + 1, dtype=np.longdouble)
    for i, m in enumerate(a.masses):
        if m != 0:
            out[i:i + b.masses.size] += m * b.masses
    return KernelTable(a.t + b.t, a.alpha, a.q, a.lazy, out)


def asymptotic_kernel(n: int, z: int, q: float) -> float:
    """Leading-order value of the probability of displacement ``2z`` after ``2n`` non-lazy steps.

    ``sqrt(n / (pi (n^2 - z^2))) * exp(-w^2 / (4 q (1-q) n))`` with
    ``w = z - (2q-1) n``.
    """
    if abs(z) >= n:
        raise ValueError(f"need |z| < n, got z={z}, n={n}")
    w = z - (2 * q - 1) * n
    return math.sqrt(n / (math.pi * (n * n - z * z))) * math.exp(-w * w / (4 * q * (1 - q) * n))


@dataclass
class AsymptoticComparison:
    n: int
    q: float
    z: np.ndarray
    w: np.ndarray
    exact: np.ndarray
    asymptotic: np.ndarray

    @property
    def rel_error(self) -> np.ndarray:
        return np.abs(self.asymptotic - self.exact) / self.exact

    @property
    def max_rel_error(self) -> float:
        return float(self.rel_error.max())


def compare_asymptotic(n: int, q: float, w_max: float | None = None) -> AsymptoticComparison:
    """Compare exact and leading-order kernels of ``2n`` steps for ``|w| <= w_max``.

    ``w_max`` defaults to ``sqrt(n)``.
    """
    w_max = math.sqrt(n) if w_max is None else w_max
    table = exact_kernel(2 * n, lazy=False, q=q)
    centre = (2 * q - 1) * n
    z = np.arange(math.ceil(centre - w_max), math.floor(centre + w_max) + 1)
    z = z[np.abs(z) < n]
    exact = np.array([table.mass(2 * int(v)) for v in z])
    asym = np.array([asymptotic_kernel(n, int(v), q) for v in z])
    return AsymptoticComparison(n, q, z, z - centre, exact, asym)


# ---------------------------------------------------------------- soft local times


@nb.njit(cache=True, inline="always")
def _gap(key, z, j):
    # j-th spacing of the Poisson cloud above site z
    return -np.log(1.0 - uniform_at(key, z, j))


@nb.njit(cache=True)
def _slt_core(xs, g, t, zlo, nsites, key):
    """Greedy xi-iteration on the Poisson cloud attached to ``key``.

    The cloud is a deterministic function of ``(key, site)``: the heights
    above site ``z`` are partial sums of exponential spacings read from the
    uniform field, so two runs with the same key see the same cloud.
    Returns G, xi, endpoints, the heights of the points taken by each
    particle, the height of the next unused point per site and the number
    of points used per site.
    """
    G = np.zeros(nsites)
    nxt = np.empty(nsites)
    used = np.zeros(nsites, dtype=np.int64)
    for z in range(nsites):
        nxt[z] = _gap(key, z + zlo, 0)
    npart = xs.shape[0]
    xi = np.empty(npart)
    ends = np.empty(npart, dtype=np.int64)
    taken = np.empty(npart)
    width = g.shape[0]
    for i in range(npart):
        base = xs[i] - t - zlo
        best = np.inf
        arg = -1
        for d in range(width):
            gd = g[d]
            if gd > 0.0:
                r = (nxt[base + d] - G[base + d]) / gd
                if r < best:
                    best = r
                    arg = d
        if best < 0.0:
            best = 0.0
        xi[i] = best
        for d in range(width):
            G[base + d] += best * g[d]
        zs = base + arg
        G[zs] = nxt[zs]
        taken[i] = nxt[zs]
        ends[i] = zs + zlo
        used[zs] += 1
        nxt[zs] += _gap(key, zs + zlo, used[zs])
    return G, xi, ends, taken, nxt, used


@nb.njit(cache=True)
def _count_below(levels, nxt, used, ends, taken, zlo, key):
    """Number of cloud points at height <= level, per level and site."""
    nsites = nxt.shape[0]
    nl = levels.shape[0]
    out = np.zeros((nl, nsites), dtype=np.int64)
    for i in range(ends.shape[0]):
        z = ends[i] - zlo
        for k in range(nl):
            if taken[i] <= levels[k]:
                out[k, z] += 1
    top = levels.max()
    for z in range(nsites):
        h = nxt[z]
        j = used[z]
        while h <= top:
            for k in range(nl):
                if h <= levels[k]:
                    out[k, z] += 1
            j += 1
            h += _gap(key, z + zlo, j)
    return out


def _kernel_row(t: int, params: ApcrwParams) -> np.ndarray:
    return exact_kernel(t, params).as_float()


@dataclass
class SoftLocalTime:
    """Soft local time ``G`` on ``window`` together with the realised endpoints."""

    window: Window
    G: np.ndarray
    xi: np.ndarray
    starts: np.ndarray
    endpoints: np.ndarray
    t: int

    def endpoint_state(self) -> EnvState:
        counts = np.bincount(self.endpoints - self.window.lo, minlength=self.window.size)
        return EnvState(self.window, counts, self.t)

    def summary(self, sites: Window | None = None) -> dict:
        sl = slice(None) if sites is None else slice(sites.lo - self.window.lo, sites.hi - self.window.lo + 1)
        g = self.G[sl]
        return {"min": float(g.min()), "max": float(g.max()), "mean": float(g.mean()), "std": float(g.std())}


def _positions(eta0: EnvState) -> np.ndarray:
    return np.repeat(eta0.window.sites(), eta0.total_counts()).astype(np.int64)


def soft_local_time_sample(eta0: EnvState, t: int, params: ApcrwParams, seed) -> SoftLocalTime:
    """Evolve the particles of ``eta0`` for ``t`` steps through soft local times.

    The returned endpoints have the law of independently evolved particles.
    The cloud is generated lazily per site, so no intensity truncation is
    needed.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    xs = _positions(eta0)
    g = _kernel_row(t, params)
    win = Window(eta0.window.lo - t, eta0.window.hi + t)
    key = np.uint64(_seed_key(seed, "slt"))
    G, xi, ends, _, _, _ = _slt_core(xs, g, t, win.lo, win.size, key)
    return SoftLocalTime(win, G, xi, xs, ends, t)


def _seed_key(seed, tag: str) -> int:
    if isinstance(seed, (tuple, list)):
        return derive_key(*seed, tag)
    return derive_key(int(seed), tag)


@nb.njit(cache=True)
def _endpoint_batch(x, g, t, runs, key):
    """Single-particle endpoints: argmin of exponential heights over g."""
    from_rng = new_stream(key)
    out = np.empty(runs, dtype=np.int64)
    for r in range(runs):
        best = np.inf
        arg = 0
        for d in range(g.shape[0]):
            e = next_exponential(from_rng)
            if g[d] > 0.0:
                v = e / g[d]
                if v < best:
                    best = v
                    arg = d
        out[r] = x - t + arg
    return out


def slt_endpoint_samples(x: int, t: int, params: ApcrwParams, runs: int, seed) -> np.ndarray:
    """Endpoints of ``runs`` independent single-particle soft-local-time draws."""
    g = _kernel_row(t, params)
    return _endpoint_batch(int(x), g, int(t), int(runs), np.uint64(_seed_key(seed, "slt-single")))


def total_variation(samples: np.ndarray, table: KernelTable, start: int = 0) -> float:
    emp = np.bincount(samples - start + table.t, minlength=2 * table.t + 1) / samples.size
    return 0.5 * float(np.abs(emp - table.as_float()).sum())


@dataclass
class SltCouplingResult:
    """Outcome of the sandwich coupling on ``I_t = [t, H - t]``."""

    rho: float
    eps: float
    t: int
    H: int
    success: bool
    upper_success: bool
    lower_violations: int
    upper_violations: int
    density_ok: bool
    G_summary: dict
    eta_t: np.ndarray = field(repr=False)
    eta_lo: np.ndarray = field(repr=False)
    eta_hi: np.ndarray = field(repr=False)

    def to_json(self, path: str | Path | None = None) -> str:
        doc = {
            "schema": "apcrw.slt/1",
            "success": self.success,
            "upper_success": self.upper_success,
            "lower_violations": self.lower_violations,
            "upper_violations": self.upper_violations,
            "density_precondition": self.density_ok,
            "G": self.G_summary,
            "parameters": {"rho": self.rho, "eps": self.eps, "t": self.t, "H": self.H},
        }
        text = json.dumps(doc, indent=2, sort_keys=True)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text


def exact_density_state(rho: float, H: int) -> EnvState:
    """Deterministic configuration on ``[0, H]`` with ``floor(rho*(x+1)) - floor(rho*x)`` particles at ``x``."""
    x = np.arange(H + 1)
    counts = np.floor(rho * (x + 1) + 1e-12).astype(np.int64) - np.floor(rho * x + 1e-12).astype(np.int64)
    return EnvState(Window(0, H), counts)


def slt_domination_coupling(eta0: EnvState, rho: float, eps: float, t: int, H: int,
                            params: ApcrwParams, seed, ell: int | None = None) -> SltCouplingResult:
    """Couple ``eta_t`` with product Poisson fields of densities ``rho -/+ eps``.

    All three configurations count points of one Poisson cloud on
    ``Z x R+``: ``eta_t(z)`` counts those under ``G(z)`` and
    ``eta^{rho+-eps}(z)`` those under the constant level ``rho +- eps``.
    ``success`` is lower domination ``eta^{rho-eps} <= eta_t`` on
    ``[t, H-t]``; ``upper_success`` is ``eta_t <= eta^{rho+eps}``.
    """
    if eps <= 0 or eps > rho:
        raise ValueError("need 0 < eps <= rho")
    if not 0 <= t <= H // 2:
        raise ValueError("need 0 <= t <= H/2")
    ell = ell or max(1, int(math.isqrt(max(t, 1)) // 2))
    rep = empirical_density_report(eta0, min(ell, eta0.window.size), rho, eps / 2)
    xs = _positions(eta0)
    g = _kernel_row(t, params)
    win = Window(eta0.window.lo - t, eta0.window.hi + t)
    key = np.uint64(_seed_key(seed, "slt-coupling"))
    G, xi, ends, taken, nxt, used = _slt_core(xs, g, t, win.lo, win.size, key)
    below = _count_below(np.array([rho - eps, rho + eps]), nxt, used, ends, taken, win.lo, key)
    eta_t = np.bincount(ends - win.lo, minlength=win.size)
    a, b = t - win.lo, H - t - win.lo
    lo, hi, mid = below[0, a:b + 1], below[1, a:b + 1], eta_t[a:b + 1]
    low_bad = int((lo > mid).sum())
    up_bad = int((mid > hi).sum())
    return SltCouplingResult(
        rho, eps, t, H,
        success=low_bad == 0,
        upper_success=up_bad == 0,
        lower_violations=low_bad,
        upper_violations=up_bad,
        density_ok=rep.min_density >= rho - eps / 2,
        G_summary={"min": float(G[a:b + 1].min()), "max": float(G[a:b + 1].max()),
                   "mean": float(G[a:b + 1].mean()), "std": float(G[a:b + 1].std())},
        eta_t=mid, eta_lo=lo, eta_hi=hi,
    )


def slt_success_frequency(rho: float, eps: float, t: int, H: int, params: ApcrwParams,
                          replicas: int, seed: int, initial: str = "exact") -> dict:
    """Success frequencies of the sandwich coupling over independent replicas."""
    from .env import sample_initial

    ok = up = 0
    viol = []
    for r in range(replicas):
        if initial == "exact":
            eta0 = exact_density_state(rho, H)
        else:
            eta0 = sample_initial(params.with_rho(rho), Window(0, H), (seed, "slt-eta0", r))
        res = slt_domination_coupling(eta0, rho, eps, t, H, params, (seed, r))
        ok += res.success
        up += res.upper_success
        viol.append(res.lower_violations)
    return {"t": t, "replicas": replicas, "success": ok / replicas, "upper_success": up / replicas,
            "mean_lower_violations": float(np.mean(viol))}
