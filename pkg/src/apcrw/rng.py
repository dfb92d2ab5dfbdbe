"""Counter-based randomness shared by every module.

Two layers are provided:

* ``derive_key`` / ``replica_key`` map a master seed and a tuple of labels
  (experiment, replica, stream tag) to a 64-bit key.  The mapping is a pure
  function, so replicas can be evaluated in any order or on any thread.
* ``uniform_at`` hashes a key with a space-time point, giving the shared
  uniform field used by coupled walkers, and ``Stream`` is a sequential
  generator built from the same hash for use inside compiled kernels.

All hashing uses the SplitMix64 finaliser on wrapping uint64 arithmetic.
Functions are compiled with numba and are callable from plain Python too.
"""

from __future__ import annotations

import numba as nb
import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0
_X_SALT = np.uint64(0xD1B54A32D192ED03)
_N_SALT = np.uint64(0x8CB92BA72F3D8DD7)


@nb.njit(cache=True, inline="always")
def mix64(z):
    """SplitMix64 finaliser; a bijection on uint64."""
    z = np.uint64(z)
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@nb.njit(cache=True, inline="always")
def to_unit(z):
    """Map a uint64 to a double in [0, 1) using its top 53 bits."""
    return np.float64(z >> _S11) * _INV53


@nb.njit(cache=True, inline="always")
def _encode(v):
    # two's complement reinterpretation keeps negative sites distinct
    return np.uint64(np.int64(v))


@nb.njit(cache=True)
def uniform_at(key, x, n):
    """Uniform variate attached to the space-time point (x, n) under ``key``."""
    h = mix64(np.uint64(key) ^ _X_SALT)
    h = mix64(h ^ (_encode(x) * _GOLDEN))
    h = mix64(h ^ (_encode(n) * _N_SALT))
    return to_unit(h)


@nb.njit(cache=True)
def replica_key(base_key, replica):
    """Per-replica key derived from an experiment key and a replica index."""
    return mix64(mix64(np.uint64(base_key) ^ _GOLDEN) + np.uint64(replica) * _M2)


@nb.njit(cache=True)
def sub_key(key, tag):
    """Key of a named sub-stream (e.g. walker field vs environment)."""
    return mix64(np.uint64(key) ^ mix64(np.uint64(tag) + _X_SALT))


# ---- sequential stream: state is a length-2 uint64 array (key, counter) ----

@nb.njit(cache=True)
def new_stream(key):
    s = np.empty(2, dtype=np.uint64)
    s[0] = np.uint64(key)
    s[1] = np.uint64(0)
    return s


@nb.njit(cache=True, inline="always")
def next_u64(state):
    state[1] += np.uint64(1)
    return mix64(state[0] ^ mix64(state[1] * _GOLDEN))


@nb.njit(cache=True, inline="always")
def next_uniform(state):
    return to_unit(next_u64(state))


@nb.njit(cache=True)
def next_poisson(state, lam):
    """Poisson variate by sequential inversion; intended for small means."""
    u = next_uniform(state)
    p = np.exp(-lam)
    acc = p
    k = 0
    while u >= acc:
        k += 1
        p *= lam / k
        acc += p
        if p == 0.0 and acc <= u:
            break
    return k


@nb.njit(cache=True)
def next_exponential(state):
    return -np.log(1.0 - next_uniform(state))


def derive_key(master_seed: int, *labels: int | str) -> int:
    """Stable 64-bit key for ``(master_seed, labels...)``.

    String labels are hashed through their UTF-8 bytes so that experiment
    names can be used directly.
    """
    words = [int(master_seed) & 0xFFFFFFFFFFFFFFFF]
    for lab in labels:
        if isinstance(lab, str):
            words.append(int.from_bytes(lab.encode()[:8].ljust(8, b"\0"), "little") ^ len(lab))
            for chunk in range(8, len(lab.encode()), 8):
                words.append(int.from_bytes(lab.encode()[chunk:chunk + 8].ljust(8, b"\0"), "little"))
        else:
            words.append(int(lab) & 0xFFFFFFFFFFFFFFFF)
    words32 = []
    for w in words:
        words32.extend([w & 0xFFFFFFFF, w >> 32])
    ss = np.random.SeedSequence(words32)
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def make_generator(master_seed: int, *labels: int | str) -> np.random.Generator:
    """numpy Generator on a Philox bit generator keyed by ``derive_key``."""
    key = derive_key(master_seed, *labels)
    return np.random.Generator(np.random.Philox(key=key))


@nb.njit(cache=True)
def uniform_block(key, xs, ns):
    out = np.empty(xs.shape[0], dtype=np.float64)
    for i in range(xs.shape[0]):
        out[i] = uniform_at(key, xs[i], ns[i])
    return out


def as_generator(seed) -> np.random.Generator:
    """Accept a Generator as-is; otherwise key a fresh Philox generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, tuple):
        return make_generator(*seed)
    return make_generator(int(seed))
