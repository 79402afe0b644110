import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from maxreg import (SolveConfig, apriori_constant, apriori_stability, assemble_elliptic,
                    generate_path, l_boundedness, linf_v_estimate, lp_quadratic_estimate,
                    quadratic_estimate, resolvent_suite, solve_neumann, solve_shifted)
from maxreg.estimates import smooth_trials

from conftest import scalar_path

ONE = np.ones(1)


@pytest.mark.parametrize("a", [1.0, 4.0])
def test_quadratic_scalar_infinite_horizon(engine, a):
    rep = quadratic_estimate(engine, scalar_path(lambda t: a), tau=np.inf)
    assert rep.measured == pytest.approx(0.5, rel=1e-12)
    assert rep.bound == pytest.approx(0.5, rel=1e-12)
    assert rep.passed


def test_quadratic_scalar_finite_horizon(engine):
    rep = quadratic_estimate(engine, scalar_path(lambda t: 1.0, np.linspace(0, 8, 9)))
    assert rep.measured == pytest.approx((1 - np.exp(-16)) / 2, abs=1e-8)


def test_quadratic_symmetric_fem_bound(engine):
    path = assemble_elliptic(generate_path("affine", {"c0": 1, "c1": 1}, np.linspace(0, 1, 9)),
                             "dirichlet", 12)
    rep = quadratic_estimate(engine, path)
    assert rep.bound == pytest.approx(rep.meta["M"] / (2 * rep.meta["delta"]), rel=1e-6)
    assert rep.passed


@settings(max_examples=10, deadline=None)
@given(st.floats(0.01, 5.0), st.floats(0.01, 5.0))
def test_quadratic_monotone_in_tau(t1, t2):
    from maxreg import CalculusEngine
    e = CalculusEngine()
    path = scalar_path(lambda t: 1 + t, np.linspace(0, 1, 5))
    lo, hi = sorted((t1, t2))
    assert quadratic_estimate(e, path, tau=lo).measured <= quadratic_estimate(e, path, tau=hi).measured + 1e-14


def test_lp_examples(engine):
    path = scalar_path(lambda t: 1.0)
    q = quadratic_estimate(engine, path, t=0.0, tau=np.inf).measured
    assert lp_quadratic_estimate(engine, path, t=0.0, p=2, tau=np.inf).measured == pytest.approx(q, rel=1e-8)
    assert lp_quadratic_estimate(engine, path, t=0.0, p=4, tau=np.inf).measured == pytest.approx(0.25, rel=1e-8)
    for a in (0.5, 3.0, 20.0):
        c = lp_quadratic_estimate(engine, scalar_path(lambda t: a), t=0.0, p=3, tau=np.inf).measured
        assert c == pytest.approx(lp_quadratic_estimate(engine, path, t=0.0, p=3, tau=np.inf).measured,
                                  rel=1e-8)


def test_resolvent_suite_scalar(engine):
    reports = {r.name: r for r in resolvent_suite(engine, scalar_path(lambda t: 1.0))}
    assert reports["resolvent_Vdual_to_H_gamma0"].measured == pytest.approx(1.0, abs=1e-10)
    assert reports["resolvent_Vdual_to_V_gamma1"].measured == pytest.approx(1.0, abs=1e-10)
    assert reports["semigroup_Vdual_to_H_gamma0"].measured == pytest.approx(1.0, abs=1e-7)
    assert all(np.isfinite(r.measured) for r in reports.values())


def test_apriori_scalar_closed_form(engine):
    path = scalar_path(lambda t: 1.0, np.linspace(0, 1, 3))
    rep = apriori_constant(engine, path, [(ONE, None), (np.zeros(1), None)], SolveConfig(dt=1 / 512))
    q = 1 - np.exp(-2)
    assert rep.measured == pytest.approx(np.sqrt(q / 2) + np.sqrt(q), rel=1e-5)
    assert rep.meta["skipped"] == 1


def test_linf_v_scalar(engine):
    path = scalar_path(lambda t: 1.0, np.linspace(0, 1, 3))
    cfg = SolveConfig(dt=1 / 128)
    assert linf_v_estimate(engine, path, [(ONE, None)], cfg).measured == pytest.approx(1.0)
    rep = linf_v_estimate(engine, path, [(np.zeros(1), ONE), (np.zeros(1), None)], cfg)
    assert rep.measured == pytest.approx(1 - np.exp(-1), rel=1e-8)
    assert rep.meta["skipped"] == 1


def test_l_boundedness_scalar(engine):
    path = scalar_path(lambda t: 1.0, np.linspace(0, 1, 3))
    rep = l_boundedness(engine, path, dt=1 / 256)
    exact, _ = integrate.quad(lambda t: (1 - np.exp(-t)) ** 2, 0, 1)
    assert np.sqrt(exact) - 1e-6 <= rep.measured <= 1.0


def test_apriori_stability_smooth(engine):
    path = assemble_elliptic(generate_path("holder", {}, np.linspace(0, 1, 65)), "dirichlet", 12)
    trials = smooth_trials(path.triple, count=6, seed=1)
    rep = apriori_stability(engine, path, trials, SolveConfig(dt=1 / 32))
    assert rep.passed


def test_apriori_invariant_under_shift(engine):
    path = assemble_elliptic(generate_path("holder", {}, np.linspace(0, 1, 65)), "dirichlet", 12)
    cfg = SolveConfig(dt=1 / 64)
    for u0, f in smooth_trials(path.triple, count=3, seed=2):
        a = solve_neumann(engine, path, u0, f, cfg)
        b = solve_shifted(solve_neumann, engine, path, u0, f, cfg, nu=1.0)
        ca = a.norm_au_l2h() + a.norm_h1h()
        cb = b.norm_au_l2h() + b.norm_h1h()
        assert cb == pytest.approx(ca, rel=0.01)
