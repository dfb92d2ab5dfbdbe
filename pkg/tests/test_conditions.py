import pytest

from apcrw.conditions import (paired_domination, sprinkler_background_law, sprinkler_frequency,
                              sprinkler_probability, density_tails, verify_conditions)
from apcrw.env import ApcrwParams

P = ApcrwParams(1.0, 0.5, 0.6)


def test_background_law_normalised():
    law = sprinkler_background_law(0.5, 1)
    assert sum(p for _, p in law) == pytest.approx(1.0)
    assert max(len(c) for c, _ in law) == 2


def test_sprinkler_one_step_by_hand():
    # ell = 0: the extra particle sits at 0 and the background must avoid 0
    params = P.with_rho(0.5)
    law = sprinkler_background_law(0.5, 0)
    expected = sum(p for c, p in law if 0 not in c)
    assert sprinkler_probability(0.5, 0, 0, params) == pytest.approx(expected)


@pytest.mark.parametrize("x", [0, 1])
def test_sprinkler_enumeration_vs_monte_carlo(x):
    params = P.with_rho(0.5)
    exact = sprinkler_probability(0.5, 1, x, params)
    mc = sprinkler_frequency(0.5, 1, x, params, 40_000, 3)
    assert abs(mc["frequency"] - exact) < 4 * (exact * (1 - exact) / 40_000) ** 0.5


def test_paired_domination_has_no_violations():
    r = paired_domination(P.with_rho(0.4), P, H=60, horizon=40, replicas=20, seed=1)
    assert r.passed and r.observed["violations"] == 0 and r.observed["site_checks"] > 0


def test_density_tails_decrease():
    p4, c1 = density_tails(P, [20, 80, 320], 0.5, 1000, 50, 40, 2)
    assert p4.passed and c1.passed


def test_verify_conditions_report():
    rep = verify_conditions(P, ells=(20, 80, 320), eps=0.5, window=1000, horizon=40, replicas=30, seed=1,
                            slt_t=20, slt_H=200, sprinkler_ell=1)
    d = rep.to_dict()
    assert d["schema"] == "apcrw.conditions/1"
    assert [r["condition"] for r in d["results"]] == ["P.4", "C.1", "C.2.1", "C.2.2", "C.3"]
    assert rep["C.2.1"].passed and not rep["C.2.2"].required
