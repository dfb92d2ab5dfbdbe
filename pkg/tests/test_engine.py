import os
import subprocess
import sys

import numpy as np

from apcrw.engine import Layer, configure_threads, replica_streams, run_batch, walker_path
from apcrw.env import ApcrwParams
from apcrw.finite_range import FiniteRangeParams, estimate_speed, reference_walk, run_finite_range_walk
from apcrw.rng import derive_key
from apcrw.walker import WalkParams


def test_batch_is_replayable_replica_by_replica():
    layers = [Layer(1.0, 0.5, 0.6)]
    key = derive_key(3, "replay")
    full = run_batch(layers, 200, 50, 0.8, 0.3, key, 20)
    part = run_batch(layers, 200, 50, 0.8, 0.3, key, 5, first_replica=7)
    assert np.array_equal(full.final()[7:12], part.final())
    fk, ek = replica_streams(key, 7)
    path = walker_path(layers, 200, 50, 0.8, 0.3, fk, ek)
    assert path[0, -1] == full.final()[7]
    assert np.all(np.abs(np.diff(path[0])) == 1)


def test_chunking_does_not_change_results():
    layers = [Layer(1.0, 0.5, 0.6)]
    a = run_batch(layers, 100, 100, 0.8, 0.3, 99, 50, chunk=7)
    b = run_batch(layers, 100, 100, 0.8, 0.3, 99, 50)
    assert np.array_equal(a.checks, b.checks)


def test_run_finite_range_walk_matches_batch():
    p = FiniteRangeParams(ApcrwParams(1.0, 0.5, 0.6), WalkParams(0.8, 0.3), 16)
    tr = run_finite_range_walk(p, 64, 5, replica=3)
    est_key = derive_key(5, "speed")
    res = run_batch([Layer(1.0, 0.5, 0.6)], 64, 16, 0.8, 0.3, est_key, 4)
    assert tr.positions[-1] == res.final()[3]


def test_engine_agrees_in_law_with_direct_simulation():
    """Event-driven engine vs stepping every particle: same mean displacement."""
    p = FiniteRangeParams(ApcrwParams(1.0, 0.5, 0.6), WalkParams(0.8, 0.3), 8)
    n = 24
    ref = np.array([reference_walk(p, n, (17, r)).positions[-1] for r in range(1500)]) / n
    eng = estimate_speed(p, n, 20_000, 17)
    se = np.hypot(ref.std(ddof=1) / np.sqrt(ref.size), eng.stderr)
    assert abs(ref.mean() - eng.mean) < 4 * se


def test_thread_count_from_environment(monkeypatch):
    monkeypatch.setenv("APCRW_THREADS", "1")
    assert configure_threads() == 1


def test_results_independent_of_thread_setting(tmp_path):
    code = ("import numpy as np; from apcrw.engine import Layer, run_batch, configure_threads; configure_threads();"
            "r = run_batch([Layer(1.0, 0.5, 0.6)], 300, 30, 0.8, 0.3, 5, 64);"
            "np.save(__import__('sys').argv[1], r.checks)")
    outs = []
    for threads in ("1", "4"):
        env = dict(os.environ, APCRW_THREADS=threads, NUMBA_NUM_THREADS=threads)
        f = tmp_path / f"t{threads}.npy"
        subprocess.run([sys.executable, "-c", code, str(f)], check=True, env=env, capture_output=True)
        outs.append(np.load(f))
    assert np.array_equal(outs[0], outs[1])
