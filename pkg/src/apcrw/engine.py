"""Compiled event-driven simulator for walkers on (finite-range) APCRW environments.

The walkers only ever ask whether their current site is occupied.  A
particle at distance ``d`` from every walker that can see it cannot meet one
of them during the next ``ceil(d/2)`` steps, because both move by at most one
site per step.  Each particle is therefore advanced only at such check
times, by a multi-step displacement drawn exactly from its kernel.  The
result has the same law as stepping every particle at every time.

Displacements over ``m < 64`` steps come from one alias table each; longer
gaps add draws from tables for ``64 * 2**j`` steps following the binary
expansion of ``m // 64``.

Layers
    Each layer is an independent Poisson field with its own density, its
    own particle kernel and a bit mask of the walkers that see it.  Coupled
    walkers on nested environments (``eta' <= eta``) are obtained by letting
    the richer walker see more layers.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from functools import lru_cache

import numba as nb
import numpy as np

from .rng import mix64, new_stream, next_uniform, replica_key, sub_key, uniform_at

THREADS_ENV = "APCRW_THREADS"

ENV_STREAM = 1
FIELD_STREAM = 2


def configure_threads() -> int:
    """Apply the thread count from ``APCRW_THREADS`` (if set) to numba."""
    raw = os.environ.get(THREADS_ENV)
    if raw:
        n = max(1, min(int(raw), nb.config.NUMBA_NUM_THREADS))
        nb.set_num_threads(n)
    return nb.get_num_threads()


@dataclass(frozen=True)
class Layer:
    """Poisson field of density ``rho`` with particle kernel ``(alpha, q)`` seen by ``mask``."""

    rho: float
    alpha: float
    q: float
    mask: int = 1


@nb.njit(cache=True)
def _alias(p):
    n = p.shape[0]
    prob = np.zeros(n)
    alias = np.arange(n).astype(np.int64)
    scaled = p * n / p.sum()
    small = np.empty(n, dtype=np.int64)
    large = np.empty(n, dtype=np.int64)
    ns = nl = 0
    for i in range(n):
        if scaled[i] < 1.0:
            small[ns] = i
            ns += 1
        else:
            large[nl] = i
            nl += 1
    while ns > 0 and nl > 0:
        ns -= 1
        s = small[ns]
        g = large[nl - 1]
        prob[s] = scaled[s]
        alias[s] = g
        scaled[g] = (scaled[g] + scaled[s]) - 1.0
        if scaled[g] < 1.0:
            nl -= 1
            small[ns] = g
            ns += 1
    for i in range(nl):
        prob[large[i]] = 1.0
    for i in range(ns):
        prob[small[i]] = 1.0
    return prob, alias


DIRECT_BITS = 6
DIRECT = 1 << DIRECT_BITS


@lru_cache(maxsize=32)
def _kernel_tables(alpha: float, q: float, levels: int):
    """Alias tables for the ``m``-step displacement, ``1 <= m < DIRECT``,
    followed by tables for ``DIRECT * 2**j`` steps, ``j < levels``.

    Row ``b`` of the returned ``(n, 2)`` array holds the acceptance
    probability and the alias index of entry ``b``; ``offs[k]`` is the first
    row of table ``k`` (table 0 is unused).
    """
    step = np.array([alpha * (1 - q), 1 - alpha, alpha * q])
    rows, offs = [np.zeros((1, 2))], [0, 1]
    k = np.array([1.0])
    for _ in range(1, DIRECT):
        k = np.convolve(k, step)
        k /= k.sum()
        pr, al = _alias(k)
        rows.append(np.stack([pr, al.astype(np.float64)], axis=1))
        offs.append(offs[-1] + k.size)
    k = np.convolve(k, step)
    k /= k.sum()
    for _ in range(levels):
        pr, al = _alias(k)
        rows.append(np.stack([pr, al.astype(np.float64)], axis=1))
        offs.append(offs[-1] + k.size)
        k = np.convolve(k, k)
        k /= k.sum()
    return np.concatenate(rows), np.array(offs, dtype=np.int64)


def build_tables(layers: tuple[Layer, ...], max_steps: int):
    """Per-layer acceptance probabilities, alias indices and table offsets."""
    levels = max(1, (int(max_steps) // DIRECT).bit_length())
    tabs = [_kernel_tables(float(l.alpha), float(l.q), levels) for l in layers]
    rows = np.stack([t[0] for t in tabs])
    prob = np.ascontiguousarray(rows[:, :, 0])
    alias = np.ascontiguousarray(rows[:, :, 1]).astype(np.int64)
    return prob, alias, tabs[0][1]


@nb.njit(cache=True, inline="always")
def _draw(state, prob, alias, kind, base, half):
    # branch-free alias lookup: mispredicted branches dominate otherwise
    u = next_uniform(state) * (2 * half + 1)
    i = np.int64(u)
    b = base + i
    c = np.int64((u - i) >= prob[kind, b])
    return i + c * (alias[kind, b] - i) - half


@nb.njit(cache=True, inline="always")
def _jump(state, m, kind, prob, alias, offs):
    """Displacement of one particle over ``m`` steps."""
    low = m & (DIRECT - 1)
    disp = 0
    if low > 0:
        disp = _draw(state, prob, alias, kind, offs[low], low)
    m >>= DIRECT_BITS
    j = 0
    half = DIRECT
    while m > 0:
        if m & 1:
            disp += _draw(state, prob, alias, kind, offs[DIRECT + j], half)
        m >>= 1
        j += 1
        half <<= 1
    return disp


@nb.njit(cache=True)
def _poisson_small(state, lam, e_lam):
    u = next_uniform(state)
    p = e_lam
    acc = p
    k = 0
    while u >= acc:
        k += 1
        p *= lam / k
        acc += p
        if k > 1000:
            break
    return k


@nb.njit(cache=True)
def simulate_walkers(n_steps, L, x0, t0, lay_rho, lay_mask, prob, alias, offs,
                     p_occ, p_vac, field_key, env_key, check_times, slope, path):
    """Run ``len(x0)`` walkers for ``n_steps`` steps on one finite-range environment.

    The environment is resampled from the product Poisson law at every
    absolute time that is a multiple of ``L`` (``t0`` is the start time).
    Walkers decide their steps with the shared uniform field under
    ``field_key``.  Returns positions at ``check_times`` (relative to the
    start), the running minimum of ``X_k - X_0 - slope * k``, the number
    of particle updates performed and the number of (step, walker) pairs
    with ``X[w] > X[w + 1]`` (ordering violations for nested layers).
    ``path`` (shape ``(W, n_steps + 1)`` or ``(W, 0)``) receives full
    trajectories when it has room.
    """
    W = x0.shape[0]
    nlay = lay_rho.shape[0]
    X = x0.copy()
    state = new_stream(env_key)
    ncheck = check_times.shape[0]
    checks = np.empty((W, ncheck), dtype=np.int64)
    minv = np.zeros(W)
    record = path.shape[1] > 0
    if record:
        for w in range(W):
            path[w, 0] = X[w]
    ci = 0
    while ci < ncheck and check_times[ci] == 0:
        for w in range(W):
            checks[w, ci] = X[w]
        ci += 1
    e_lam = np.exp(-lay_rho)
    occ = np.zeros(W, dtype=np.bool_)
    updates = 0
    viol = 0
    k = 0
    while k < n_steps:
        tabs = t0 + k
        blen = min(L - (tabs % L), n_steps - k)
        lo = X.min() - 2 * blen - 1
        hi = X.max() + 2 * blen + 1
        nsites = hi - lo + 1
        cnt = np.empty((nlay, nsites), dtype=np.int64)
        total = 0
        for l in range(nlay):
            for z in range(nsites):
                c = _poisson_small(state, lay_rho[l], e_lam[l]) if lay_rho[l] > 0 else 0
                cnt[l, z] = c
                total += c
        pos = np.empty(total, dtype=np.int64)
        last = np.zeros(total, dtype=np.int64)
        kind = np.empty(total, dtype=np.int64)
        nxtp = np.empty(total, dtype=np.int64)
        head = -np.ones(blen + 1, dtype=np.int64)
        i = 0
        for l in range(nlay):
            m = lay_mask[l]
            for z in range(nsites):
                for _ in range(cnt[l, z]):
                    p = lo + z
                    pos[i] = p
                    kind[i] = l
                    dmin = 1 << 40
                    for w in range(W):
                        if (m >> w) & 1:
                            d = abs(p - X[w])
                            if d < dmin:
                                dmin = d
                    s = (dmin + 1) // 2
                    if s < blen:
                        nxtp[i] = head[s]
                        head[s] = i
                    i += 1
        for s in range(blen):
            for w in range(W):
                occ[w] = False
            i = head[s]
            head[s] = -1
            while i != -1:
                after = nxtp[i]
                l = kind[i]
                gap = s - last[i]
                if gap > 0:
                    pos[i] += _jump(state, gap, l, prob, alias, offs)
                    last[i] = s
                updates += 1
                m = lay_mask[l]
                dmin = 1 << 40
                p = pos[i]
                for w in range(W):
                    if (m >> w) & 1:
                        d = abs(p - X[w])
                        if d == 0:
                            occ[w] = True
                        if d < dmin:
                            dmin = d
                step = (dmin + 1) // 2
                if step < 1:
                    step = 1
                ns = s + step
                if ns < blen:
                    nxtp[i] = head[ns]
                    head[ns] = i
                i = after
            tnow = tabs + s
            for w in range(W):
                u = uniform_at(field_key, X[w], tnow)
                thr = p_occ if occ[w] else p_vac
                if u <= thr:
                    X[w] += 1
                else:
                    X[w] -= 1
            kk = k + s + 1
            for w in range(W):
                v = (X[w] - x0[w]) - slope * kk
                if v < minv[w]:
                    minv[w] = v
                if record:
                    path[w, kk] = X[w]
                if w + 1 < W and X[w] > X[w + 1]:
                    viol += 1
            while ci < ncheck and check_times[ci] == kk:
                for w in range(W):
                    checks[w, ci] = X[w]
                ci += 1
        k += blen
    return checks, minv, updates, viol


@nb.njit(cache=True, parallel=True)
def batch_walkers(n_steps, L, x0, lay_rho, lay_mask, prob, alias, offs,
                  p_occ, p_vac, base_key, first_replica, replicas, check_times, slope):
    """Independent replicas of ``simulate_walkers``; replica ``r`` is keyed by ``first_replica + r``."""
    W = x0.shape[0]
    nc = check_times.shape[0]
    checks = np.empty((replicas, W, nc), dtype=np.int64)
    minv = np.empty((replicas, W))
    updates = np.zeros(replicas, dtype=np.int64)
    viol = np.zeros(replicas, dtype=np.int64)
    empty = np.empty((W, 0), dtype=np.int64)
    for r in nb.prange(replicas):
        rk = replica_key(base_key, first_replica + r)
        c, mv, up, vi = simulate_walkers(n_steps, L, x0, 0, lay_rho, lay_mask, prob, alias, offs,
                                     p_occ, p_vac, sub_key(rk, FIELD_STREAM), sub_key(rk, ENV_STREAM),
                                     check_times, slope, empty)
        checks[r] = c
        minv[r] = mv
        updates[r] = up
        viol[r] = vi
    return checks, minv, updates, viol


def layer_arrays(layers: tuple[Layer, ...], max_steps: int):
    prob, alias, offs = build_tables(layers, max_steps)
    rho = np.array([l.rho for l in layers], dtype=np.float64)
    mask = np.array([l.mask for l in layers], dtype=np.int64)
    return rho, mask, prob, alias, offs


@dataclass
class BatchResult:
    """Per-replica outputs: ``checks[r, w, c]`` is walker ``w`` at ``check_times[c]``."""

    checks: np.ndarray
    min_excess: np.ndarray
    updates: np.ndarray
    violations: np.ndarray
    check_times: np.ndarray

    def final(self, walker: int = 0) -> np.ndarray:
        return self.checks[:, walker, -1]


def run_batch(layers, n_steps: int, L: int, p_occ: float, p_vac: float, base_key: int,
              replicas: int, first_replica: int = 0, starts=(0,), check_times=None,
              slope: float = 0.0, chunk: int = 4096):
    """Python entry point for ``batch_walkers`` with chunking over replicas."""
    layers = tuple(layers)
    L = int(min(L, n_steps)) if n_steps > 0 else 1
    rho, mask, prob, alias, offs = layer_arrays(layers, max(L, 1))
    x0 = np.asarray(starts, dtype=np.int64)
    ct = np.asarray([n_steps] if check_times is None else sorted(check_times), dtype=np.int64)
    out_c, out_m, out_u, out_v = [], [], [], []
    done = 0
    while done < replicas:
        m = min(chunk, replicas - done)
        c, mv, up, vi = batch_walkers(int(n_steps), L, x0, rho, mask, prob, alias, offs,
                                  float(p_occ), float(p_vac), np.uint64(base_key),
                                  int(first_replica + done), int(m), ct, float(slope))
        out_c.append(c)
        out_m.append(mv)
        out_u.append(up)
        out_v.append(vi)
        done += m
    return BatchResult(np.concatenate(out_c), np.concatenate(out_m), np.concatenate(out_u),
                       np.concatenate(out_v), ct)


def walker_path(layers, n_steps: int, L: int, p_occ: float, p_vac: float, field_key: int,
                env_key: int, starts=(0,), t0: int = 0) -> np.ndarray:
    """Full trajectories of the walkers in one replica, shape ``(W, n_steps + 1)``."""
    layers = tuple(layers)
    L = int(L)
    rho, mask, prob, alias, offs = layer_arrays(layers, max(1, min(L, n_steps)))
    x0 = np.asarray(starts, dtype=np.int64)
    path = np.zeros((x0.size, n_steps + 1), dtype=np.int64)
    _, _, _, _ = simulate_walkers(int(n_steps), L, x0, int(t0), rho, mask, prob, alias, offs, float(p_occ),
                     float(p_vac), np.uint64(field_key), np.uint64(env_key),
                     np.zeros(0, dtype=np.int64), 0.0, path)
    return path


def replica_streams(base_key: int, replica: int) -> tuple[int, int]:
    """(field key, environment key) used by replica ``replica`` of a batch."""
    rk = replica_key(np.uint64(base_key), replica)
    return int(sub_key(rk, FIELD_STREAM)), int(sub_key(rk, ENV_STREAM))


__all__ = [
    "Layer", "run_batch", "walker_path", "replica_streams", "configure_threads",
    "simulate_walkers", "batch_walkers", "THREADS_ENV", "mix64",
]


# ---------------------------------------------------------------- count layers


@nb.njit(cache=True)
def evolve_layers(counts, lo, lay_alpha, lay_q, vis, shift, X, ukeys, space_time, t0, steps,
                  p_occ, p_vac, state, path):
    """Step count layers and walkers together for ``steps`` steps.

    ``counts[l]`` holds layer ``l`` on sites ``lo[l] .. lo[l] + S - 1``.
    Walker ``w`` sees layer ``l`` when ``vis[l, w]``; it reads that layer at
    index ``X[w] + shift[l, w] - lo[l]``, which lets paired layers be viewed
    from two translated frames.  Walker uniforms come from
    ``uniform_at(ukeys[w], X[w], t)`` when ``space_time[w]`` and from the
    time-indexed ``uniform_at(ukeys[w], 0, t)`` otherwise.

    Returns (particles pushed out of the windows, walker lookups that fell
    outside a window).  ``X`` and ``counts`` are updated in place and
    ``path[w, k + 1]`` receives the position after step ``k``.
    """
    nl, S = counts.shape
    nw = X.shape[0]
    buf = np.empty(S, dtype=np.int64)
    lost = 0
    blind = 0
    for k in range(steps):
        t = t0 + k
        for w in range(nw):
            occ = False
            for l in range(nl):
                if vis[l, w]:
                    idx = X[w] + shift[l, w] - lo[l]
                    if idx < 0 or idx >= S:
                        blind += 1
                    elif counts[l, idx] > 0:
                        occ = True
            if space_time[w]:
                u = uniform_at(ukeys[w], X[w], t)
            else:
                u = uniform_at(ukeys[w], 0, t)
            thr = p_occ if occ else p_vac
            if u <= thr:
                X[w] += 1
            else:
                X[w] -= 1
            path[w, k + 1] = X[w]
        for l in range(nl):
            pr = lay_alpha[l] * lay_q[l]
            pl = lay_alpha[l] * (1.0 - lay_q[l])
            for z in range(S):
                buf[z] = 0
            for z in range(S):
                c = counts[l, z]
                for _ in range(c):
                    u = next_uniform(state)
                    if u < pr:
                        d = z + 1
                    elif u < pr + pl:
                        d = z - 1
                    else:
                        d = z
                    if d < 0 or d >= S:
                        lost += 1
                    else:
                        buf[d] += 1
            for z in range(S):
                counts[l, z] = buf[z]
    return lost, blind


@nb.njit(cache=True)
def poisson_counts(state, lam, size):
    out = np.empty(size, dtype=np.int64)
    e = np.exp(-lam)
    for z in range(size):
        out[z] = _poisson_small(state, lam, e) if lam > 0 else 0
    return out
