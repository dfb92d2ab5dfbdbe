import numpy as np
import pytest
from hypothesis import given, strategies as st

from apcrw.env import ApcrwParams, Window, couple_monotone, sample_cloud, evolve_cloud
from apcrw.walker import (LatticePoint, OccupancyGrid, Trajectory, UniformField, WalkParams, arrow,
                          run_coupled_walks, run_walk)

probs = st.floats(0.0, 1.0)


def test_walk_params_convention():
    with pytest.raises(ValueError, match="p_occ > p_vac"):
        WalkParams(0.3, 0.9)
    assert WalkParams(0.8, 0.3).is_strict
    assert not WalkParams(1.0, 0.0).is_strict


@given(probs, probs, st.floats(0.0, 1.0))
def test_arrow_monotone_in_occupancy(a, b, u):
    p = WalkParams(max(a, b), min(a, b))
    assert arrow(True, u, p) >= arrow(False, u, p)
    assert arrow(True, u, p) in (-1, 1)


def test_lattice_parity():
    assert LatticePoint(1, 0).shifted and not LatticePoint(1, 1).shifted
    with pytest.raises(ValueError):
        LatticePoint(0, -1)


def test_trajectory_checks_steps():
    with pytest.raises(ValueError):
        Trajectory(LatticePoint(0, 0), [0, 2])
    tr = Trajectory(LatticePoint(3, 2), [3, 4, 5, 4])
    assert tr.n_steps == 3 and tr.displacement() == 1 and tr.times.tolist() == [2, 3, 4, 5]


def test_uniform_field_is_shared_and_reproducible():
    f = UniformField(42)
    assert f(3, 4) == UniformField(42)(3, 4)
    v = f.values([1, 2, 3], 0)
    assert v.shape == (3,) and v[0] == f(1, 0)


def test_deterministic_environments():
    win = Window(-50, 50)
    full = OccupancyGrid.constant(win, 40, True)
    empty = OccupancyGrid.constant(win, 40, False)
    f = UniformField(1)
    right = run_walk(full, LatticePoint(0, 0), 30, f, WalkParams(1.0, 0.0))
    left = run_walk(empty, LatticePoint(0, 0), 30, f, WalkParams(1.0, 0.0))
    assert right.positions[-1] == 30 and left.positions[-1] == -30


def test_walk_refuses_uncovered_cone():
    g = OccupancyGrid.constant(Window(-5, 5), 10, True)
    with pytest.raises(ValueError):
        run_walk(g, LatticePoint(0, 0), 8, UniformField(1), WalkParams(0.8, 0.3))


@given(st.integers(0, 2**31), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_monotone_in_environment(seed, a, b):
    """More particles never move the walker left when p_occ >= p_vac."""
    p = WalkParams(max(a, b), min(a, b))
    lo, hi = couple_monotone(ApcrwParams(0.3, 0.5, 0.6), ApcrwParams(1.2, 0.5, 0.6), Window(-50, 50), 20, seed)
    res = run_coupled_walks(OccupancyGrid.from_cloud(lo), OccupancyGrid.from_cloud(hi), LatticePoint(0, 0),
                            LatticePoint(0, 0), 20, UniformField(seed), p)
    assert res.region_ok
    assert res.violations == 0


@given(st.integers(0, 2**31))
def test_monotone_in_start(seed):
    p = ApcrwParams(1.0, 0.5, 0.6)
    c = evolve_cloud(sample_cloud(p, Window(-60, 60), seed), p, 24, seed + 1)
    g = OccupancyGrid.from_cloud(c)
    res = run_coupled_walks(g, g, LatticePoint(0, 0), LatticePoint(2, 0), 24, UniformField(seed), WalkParams(0.8, 0.3))
    assert np.all(res.gap >= 0) and np.all(res.gap % 2 == 0)


def test_trajectory_csv(tmp_path):
    tr = Trajectory(LatticePoint(0, 0), [0, 1, 0])
    text = tr.to_csv(tmp_path / "t.csv").read_text().splitlines()
    assert text[0] == "step,position" and text[-1] == "2,0"
