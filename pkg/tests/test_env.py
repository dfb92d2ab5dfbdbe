import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from apcrw.env import (ApcrwParams, EnvState, ParticleCloud, SuperpositionParams, Window, couple_monotone,
                       counts_of, empirical_density_report, evolve_cloud, evolve_counts, exact_window,
                       interval_sums, sample_cloud, sample_initial, stationarity_check, step_counts,
                       step_particles)


def test_params_validation():
    with pytest.raises(ValueError):
        ApcrwParams(-1, 0.5, 0.5)
    with pytest.raises(ValueError):
        ApcrwParams(1, 1.5, 0.5)
    assert ApcrwParams(1, 0.5, 0.6).drift() == pytest.approx(0.1)
    assert not ApcrwParams(1, 0, 0.5).is_regular


def test_window_and_exact_window():
    w = Window(-3, 4)
    assert w.size == 8 and w.contains(4) and not w.contains(5)
    with pytest.raises(ValueError):
        Window(2, 1)
    e = exact_window(10)
    assert e.lo <= -20 and e.hi >= 20


def test_poisson_initial_mean_and_dispersion():
    st_ = sample_initial(ApcrwParams(2.0, 0.5, 0.6), Window(0, 999_999), 1)
    c = st_.total_counts()
    assert abs(c.mean() - 2) < 3 * np.sqrt(2 / c.size)
    assert abs(c.var() / c.mean() - 1) < 0.01


def test_tiny_density_gives_empty_window():
    st_ = sample_initial(ApcrwParams(1e-9, 0.5, 0.6), Window(0, 999), 3)
    assert st_.total() == 0


def test_superposition_types():
    sp = SuperpositionParams(1.0, (1.0, 0.5), (0.5, 0.3), (0.6, 0.2))
    st_ = sample_initial(sp, Window(0, 199_999), 2)
    assert st_.types == 2
    assert abs(st_.counts[1].mean() - 0.5) < 0.01


def test_deterministic_right_step():
    s = EnvState(Window(-2, 2), np.array([0, 0, 1, 0, 0]))
    s1 = step_counts(s, ApcrwParams(1, 1.0, 1.0), 0)
    assert s1.counts[0].tolist() == [0, 0, 0, 1, 0]


@given(st.integers(0, 2**32), st.floats(0.1, 3.0), st.floats(0.05, 1.0), st.floats(0.0, 1.0))
def test_count_step_conserves_particles(seed, rho, alpha, q):
    p = ApcrwParams(rho, alpha, q)
    s = sample_initial(p, Window(-30, 30), seed)
    s1 = step_counts(s, p, seed + 1)
    assert s1.total() + s1.overflow == s.total() + s.overflow


@given(st.integers(0, 2**32), st.integers(0, 20))
def test_particle_steps_are_local_and_conserve(seed, steps):
    p = ApcrwParams(1.0, 0.7, 0.3)
    c = sample_cloud(p, Window(-20, 20), seed)
    c2 = evolve_cloud(c, p, steps, seed + 1)
    assert c2.size == c.size and c2.steps_are_local()
    assert c2.horizon == steps


def test_frozen_particles():
    p = ApcrwParams(1.0, 0.0, 0.5)
    c = sample_cloud(p, Window(0, 50), 1)
    c2 = evolve_cloud(c, p, 10, 2)
    assert np.all(c2.paths == c2.paths[:, :1])


def test_particle_step_drift():
    p = ApcrwParams(60.0, 0.6, 0.7)
    c = sample_cloud(p, Window(0, 999), 4)
    c2 = evolve_cloud(c, p, 20, 5)
    steps = np.diff(c2.paths, axis=1).ravel()
    assert steps.size > 10**6
    assert abs(steps.mean() - p.drift()) < 3 * steps.std() / np.sqrt(steps.size)


def test_counts_of_basic():
    empty = ParticleCloud(np.zeros(0, dtype=np.int64), np.zeros((0, 1), dtype=np.int64), Window(0, 4))
    assert counts_of(empty, 0).total() == 0
    one = ParticleCloud(np.zeros(1, dtype=np.int64), np.array([[2]]), Window(0, 4))
    assert counts_of(one, 0).counts[0].tolist() == [0, 0, 1, 0, 0]
    with pytest.raises(IndexError):
        counts_of(one, 3)


def test_representations_agree_in_law():
    p = ApcrwParams(1.0, 0.5, 0.6)
    win = Window(-100, 99)
    a, b = [], []
    for r in range(200):
        s = evolve_counts(sample_initial(p, win, (1, "a", r)), p, 10, (1, "b", r))
        a.append(s.total_counts()[20:-20])
        c = evolve_cloud(sample_cloud(p, win, (2, "a", r)), p, 10, (2, "b", r))
        b.append(counts_of(c, 10).total_counts()[20:-20])
    a, b = np.concatenate(a), np.concatenate(b)
    ks = stats.ks_2samp(a, b)
    assert ks.pvalue > 0.001
    assert abs(a.mean() - b.mean()) < 4 * np.sqrt(2 / a.size)


def test_one_step_preserves_poisson_marginals():
    p = ApcrwParams(1.0, 0.5, 0.6)
    s = step_counts(sample_initial(p, Window(0, 499_999), 8), p, 9)
    c = s.total_counts()[1:-1]
    assert abs(c.mean() - 1) < 4 / np.sqrt(c.size)
    assert abs(c.var() - 1) < 0.01


def test_finite_propagation_speed():
    """Particles started more than t away cannot change the middle after t steps."""
    p = ApcrwParams(1.0, 0.5, 0.6)
    win = Window(-60, 60)
    base = sample_cloud(p, win, 5)
    far = ParticleCloud(np.zeros(7, dtype=np.int64), np.full((7, 1), -60), win)
    t = 20
    e1 = evolve_cloud(base, p, t, 11)
    e2 = evolve_cloud(ParticleCloud.concat([base, far]), p, t, 11)
    mid = Window(-10, 10)
    assert np.array_equal(counts_of(e1, t, mid).counts, counts_of(e2, t, mid).counts)


def test_monotone_coupling_dominates_everywhere():
    lo, hi = couple_monotone(ApcrwParams(0.5, 0.5, 0.6), ApcrwParams(1.5, 0.5, 0.6), Window(-100, 100), 50, 3)
    for t in range(51):
        assert np.all(counts_of(lo, t).total_counts() <= counts_of(hi, t).total_counts())
    same_lo, same_hi = couple_monotone(ApcrwParams(1, 0.5, 0.6), ApcrwParams(1, 0.5, 0.6), Window(0, 50), 5, 1)
    assert np.array_equal(same_lo.paths, same_hi.paths)
    with pytest.raises(ValueError):
        couple_monotone(ApcrwParams(2, 0.5, 0.6), ApcrwParams(1, 0.5, 0.6), Window(0, 5), 1, 1)


def test_density_report_cases():
    z = EnvState(Window(0, 99), np.zeros(100, dtype=np.int64))
    assert not empirical_density_report(z, 10, 1.0, 0.5).passed
    ones = EnvState(Window(0, 99), np.ones(100, dtype=np.int64))
    assert empirical_density_report(ones, 10, 1.0, 0.2).passed
    assert interval_sums(np.arange(5), 2).tolist() == [1, 3, 5, 7]


def test_stationarity_small():
    r = stationarity_check(ApcrwParams(1.0, 0.5, 0.6), 20, 50_000, 2, 4)
    assert r.observations == 100_000
    assert abs(r.ratio - 1) < 0.03
