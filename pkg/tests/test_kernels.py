import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from apcrw.env import ApcrwParams, EnvState, Window, sample_initial
from apcrw.kernels import (asymptotic_kernel, compare_asymptotic, convolve_tables, exact_density_state,
                           exact_kernel, slt_domination_coupling, slt_endpoint_samples, slt_success_frequency,
                           soft_local_time_sample, total_variation)


def test_small_binomial_cases():
    k = exact_kernel(4, lazy=False, alpha=1.0, q=0.5)
    assert k.mass(0) == pytest.approx(0.375) and k.mass(2) == pytest.approx(0.25)
    k2 = exact_kernel(2, lazy=False, alpha=1.0, q=0.5)
    assert (k2.mass(0), k2.mass(2), k2.mass(-2)) == pytest.approx((0.5, 0.25, 0.25))
    k7 = exact_kernel(2, lazy=False, alpha=1.0, q=0.7)
    assert (k7.mass(2), k7.mass(0), k7.mass(-2)) == pytest.approx((0.49, 0.42, 0.09))


@given(st.integers(0, 300), st.floats(0.05, 1.0), st.floats(0.0, 1.0), st.booleans())
def test_kernel_normalised_with_exact_mean(t, alpha, q, lazy):
    k = exact_kernel(t, lazy=lazy, alpha=alpha, q=q)
    assert abs(float(k.total()) - 1) < 1e-12
    assert abs(float(k.mean()) - k.expected_mean()) < 1e-10
    assert np.all(k.as_float() >= 0)


@given(st.integers(1, 200), st.floats(0.01, 0.99))
def test_non_lazy_parity(t, q):
    k = exact_kernel(t, lazy=False, alpha=1.0, q=q).as_float()
    assert np.all(k[1::2] == 0)


@given(st.integers(0, 60), st.integers(0, 60))
def test_semigroup(s, t):
    p = ApcrwParams(1, 0.5, 0.6)
    a = convolve_tables(exact_kernel(s, p), exact_kernel(t, p)).as_float()
    assert np.max(np.abs(a - exact_kernel(s + t, p).as_float())) < 1e-10


def test_asymptotic_formula():
    n = 400
    assert asymptotic_kernel(n, 0, 0.5) == pytest.approx(1 / math.sqrt(math.pi * n))
    with pytest.raises(ValueError):
        asymptotic_kernel(10, 10, 0.6)
    exact = exact_kernel(2000, lazy=False, alpha=1.0, q=0.6).mass(2 * 200)
    assert abs(asymptotic_kernel(1000, 200, 0.6) / exact - 1) <= 0.05


def test_asymptotic_error_shrinks_over_dyadic_sweep():
    errs = [compare_asymptotic(n, 0.6).max_rel_error for n in (250, 500, 1000, 2000)]
    assert all(b < a for a, b in zip(errs, errs[1:]))


def test_kernel_csv(tmp_path):
    k = exact_kernel(10, lazy=False, alpha=1.0, q=0.6)
    lines = k.to_csv(tmp_path / "k.csv").read_text().splitlines()
    assert lines[1] == "offset,mass,asymptotic_value,rel_error"
    assert len(lines) == 2 + 21


def test_slt_single_particle_zero_time():
    s = soft_local_time_sample(EnvState(Window(3, 3), np.array([1])), 0, ApcrwParams(1, 0.5, 0.6), 1)
    assert s.endpoints.tolist() == [3]
    assert np.count_nonzero(s.G) == 1 and s.G[3 - s.window.lo] == pytest.approx(s.xi[0])
    assert np.all(s.xi > 0)


def test_slt_endpoint_law_small():
    p = ApcrwParams(1, 0.5, 0.6)
    samples = slt_endpoint_samples(0, 10, p, 50_000, 3)
    assert total_variation(samples, exact_kernel(10, p)) < 0.02


def test_slt_many_particles_match_direct_evolution():
    """Endpoints of a whole configuration equal independent evolution in law."""
    p = ApcrwParams(1, 0.5, 0.6)
    eta0 = EnvState(Window(0, 4), np.array([2, 0, 1, 3, 1]))
    a, b = [], []
    rng = np.random.default_rng(5)
    kern = exact_kernel(6, p).as_float()
    xs = np.repeat(np.arange(5), [2, 0, 1, 3, 1])
    for r in range(3000):
        a.append(np.sort(soft_local_time_sample(eta0, 6, p, (9, r)).endpoints))
        b.append(np.sort(xs + rng.choice(np.arange(-6, 7), size=xs.size, p=kern)))
    a, b = np.array(a), np.array(b)
    for j in range(xs.size):  # order statistics
        assert stats.ks_2samp(a[:, j], b[:, j]).pvalue > 1e-3


def test_soft_local_time_mean_bracket():
    p = ApcrwParams(1, 0.5, 0.6)
    gs = []
    for r in range(200):
        s = soft_local_time_sample(sample_initial(p, Window(0, 400), (2, r)), 50, p, (3, r))
        gs.append(s.G[100:300].mean())
    m = np.mean(gs)
    assert abs(m - 1) < 4 * np.std(gs) / np.sqrt(len(gs)) + 0.01


def test_domination_trivial_when_lower_field_empty():
    p = ApcrwParams(1, 0.5, 0.6)
    res = slt_domination_coupling(exact_density_state(1.0, 200), 1.0, 1.0, 10, 200, p, 1)
    assert res.success and res.lower_violations == 0
    assert '"success": true' in res.to_json()


def test_domination_sandwich_counts_are_consistent():
    p = ApcrwParams(1, 0.5, 0.6)
    res = slt_domination_coupling(exact_density_state(1.0, 400), 1.0, 0.2, 50, 400, p, 4)
    assert np.all(res.eta_lo <= res.eta_hi)
    assert res.lower_violations == int((res.eta_lo > res.eta_t).sum())
    with pytest.raises(ValueError):
        slt_domination_coupling(exact_density_state(1.0, 40), 1.0, 0.2, 30, 40, p, 4)


def test_success_frequency_report_shape():
    r = slt_success_frequency(1.0, 0.9, 20, 200, ApcrwParams(1, 0.5, 0.6), 5, 1)
    assert 0 <= r["success"] <= 1 and r["replicas"] == 5
