import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from apcrw.env import ApcrwParams, ParticleCloud, Window
from apcrw.renewal import (ConeParams, NoEstimate, Schedule, detect_good_records, influence_field, influence_tail,
                           min_beta, record_times, regeneration_times, renewal_speed, simulate_plain)
from apcrw.walker import LatticePoint, Trajectory, WalkParams

WALK = WalkParams(0.9, 0.6)


def _cloud(paths, start=0):
    paths = np.asarray(paths, dtype=np.int64).reshape(len(paths), -1)
    lo, hi = int(paths.min(initial=0)) - 1, int(paths.max(initial=0)) + 1
    return ParticleCloud(np.zeros(paths.shape[0]), paths, Window(lo, hi), start)


def _empty(horizon):
    return ParticleCloud(np.zeros(0), np.zeros((0, horizon + 1), dtype=np.int64), Window(-1, 1))


def _brute_h(paths, x, n, v, horizon, past):
    seen = [p for p in paths if any(p[t] - x < v * (t - n) - 1e-9 for t in range(max(0, n - past), n + 1))]
    for ell in range(horizon + 2):
        if not any(p[s] - (x + ell) >= v * (s - n - ell) - 1e-9
                   for p in seen for s in range(n + ell, min(len(p) - 1, n + horizon) + 1)):
            return ell
    raise AssertionError


def test_records_of_straight_walk_are_every_step():
    x = np.arange(51)
    assert np.array_equal(record_times(x, 0.5), np.arange(1, 51))


@given(st.lists(st.sampled_from([-1, 1]), min_size=5, max_size=200), st.floats(-0.9, 0.9), st.floats(0.0, 0.09))
def test_records_shrink_as_v_bar_grows(steps, v, dv):
    x = np.concatenate([[0], np.cumsum(steps)])
    r_lo, r_hi = record_times(x, v), record_times(x, v + dv)
    assert r_hi.size <= r_lo.size
    assert np.all(np.diff(r_lo) > 0)
    # each record time is where the walk first rises above its level
    z = x - v * np.arange(x.size)
    for k, r in enumerate(r_lo, start=1):
        assert z[r] >= k * (1 - v) - 1e-9 and np.all(z[:r] < k * (1 - v) - 1e-9)


def test_no_records_for_v_bar_near_one():
    x = np.concatenate([[0], np.cumsum(np.tile([-1, 1], 20))])
    assert record_times(x, 0.999).size == 0


def test_empty_cloud_has_zero_field():
    assert influence_field(_empty(30), 0, 10, 0.3, 15) == 0


def test_frozen_particle_matches_brute_force():
    paths = [np.full(41, 0)]
    for x in range(-3, 8):
        assert influence_field(_cloud(paths), x, 10, 0.3, 20) == _brute_h(paths, x, 10, 0.3, 20, 20)


@given(st.integers(0, 10**6), st.integers(1, 6), st.floats(-0.5, 0.8))
def test_field_matches_brute_force(seed, m, v):
    rng = np.random.default_rng(seed)
    steps = rng.integers(-1, 2, (m, 40))
    paths = rng.integers(-6, 7, (m, 1)) + np.concatenate([np.zeros((m, 1), int), np.cumsum(steps, 1)], 1)
    x, n = int(rng.integers(-3, 4)), int(rng.integers(0, 20))
    assert influence_field(_cloud(paths), x, n, v, 15, past=10) == _brute_h(list(paths), x, n, v, 15, 10)


@given(st.integers(0, 10**6))
def test_field_grows_with_more_particles(seed):
    rng = np.random.default_rng(seed)
    paths = rng.integers(-5, 6, (8, 1)) + np.concatenate(
        [np.zeros((8, 1), int), np.cumsum(rng.integers(-1, 2, (8, 30)), 1)], 1)
    small = influence_field(_cloud(paths[:4]), 0, 10, 0.2, 15)
    assert influence_field(_cloud(paths), 0, 10, 0.2, 15) >= small


def test_influence_tail_is_non_increasing():
    traj, cloud = simulate_plain(ApcrwParams(1.5, 0.5, 0.6), WALK, 300, 3)
    pts = [(int(traj.positions[n]), n) for n in range(50, 250, 5)]
    tail = influence_tail(cloud, pts, 0.3, 40)["tail"]
    assert np.all(np.diff(tail) <= 0)


def test_cone_validation():
    with pytest.raises(ValueError):
        ConeParams(0.5, 0.4)
    with pytest.raises(ValueError):
        ConeParams(0.1, 0.5, drift=0.2)
    with pytest.raises(ValueError):
        ConeParams(0.1, 0.5, beta=0.5 * min_beta(0.1, 0.5))
    assert ConeParams(0.1, 0.5).beta == pytest.approx(0.9 / 0.4)


def test_schedule_values():
    s = Schedule.from_walk(1000, WALK)
    delta = 1 / (4 * math.log(1 / 0.6))
    assert s.T2 == math.floor(delta * math.log(1000))
    assert s.T1 == math.floor(1000 ** (min(delta, 1) / 4))


def test_straight_walk_in_empty_environment_regenerates_often():
    n = 400
    traj = Trajectory(LatticePoint(0, 0), np.arange(n + 1))
    cone = ConeParams(0.3, 0.6)
    scan = detect_good_records(traj, _empty(n), cone, 1000, WALK)
    done = scan.records[scan.records + 60 < n]
    assert set(done.tolist()) <= set(scan.records[scan.good].tolist())
    taus = regeneration_times(traj, _empty(n), cone, 1000, WALK, scan=scan)
    assert taus.size > n // 4 and np.all(np.diff(taus) > 0)


def test_dense_frozen_environment_blocks_every_record():
    n = 200
    traj = Trajectory(LatticePoint(0, 0), np.arange(n + 1))
    # a stream of particles trailing the walker at full speed keeps re-entering every later cone
    paths = -np.arange(1, n + 400)[:, None] + np.arange(n + 1)[None, :]
    scan = detect_good_records(traj, _cloud(paths), ConeParams(0.3, 0.6), 1000, WALK)
    assert scan.good.size == 0 and scan.records.size > 0


def test_renewal_speed_straight_walk():
    inc = np.array([[3, 3], [5, 5], [2, 2]])
    assert renewal_speed(inc).mean == 1.0


def test_renewal_speed_needs_two_increments():
    r = renewal_speed(np.array([[4, 2]]))
    assert isinstance(r, NoEstimate) and r.increments == 1


def test_renewal_speed_without_dependence():
    """Equal walker probabilities make the walk a plain random walk of speed 2p - 1."""
    rng = np.random.default_rng(0)
    steps = np.where(rng.random(200_000) < 0.7, 1, -1)
    cuts = np.sort(rng.choice(np.arange(1, steps.size), 4000, replace=False))
    pieces = np.split(steps, cuts)
    inc = np.array([[p.size, p.sum()] for p in pieces])
    e = renewal_speed(inc)
    assert abs(e.mean - 0.4) < 4 * e.stderr


def test_simulate_plain_is_reproducible():
    a = simulate_plain(ApcrwParams(1.0, 0.5, 0.6), WALK, 100, 5, 2)
    b = simulate_plain(ApcrwParams(1.0, 0.5, 0.6), WALK, 100, 5, 2)
    assert np.array_equal(a[0].positions, b[0].positions) and np.array_equal(a[1].paths, b[1].paths)
    with pytest.raises(ValueError):
        simulate_plain(ApcrwParams(1.0, 0.5, 0.6), WALK, 20_000, 5)
