import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from maxreg import (HypothesisError, PathTooRough, diff_norm, subdivision_certificate, forward_difference_certificate,
                    sobolev_seminorm, subdivide, verify_hypotheses)

from conftest import diag_path, scalar_path


def jump_path(K=128, at=0.5, lo=1.0, hi=2.0):
    grid = np.linspace(0.0, 1.0, K + 1)
    return scalar_path(lambda t: lo if t < at else hi, grid, interp="piecewise-constant-left")


# -- hypotheses ---------------------------------------------------------------

def test_constant_scalar_hypotheses():
    h = verify_hypotheses(scalar_path(lambda t: 1.0))
    assert (h.M, h.delta, h.nu) == (pytest.approx(1.0), pytest.approx(1.0), 0.0)


def test_affine_scalar_hypotheses():
    h = verify_hypotheses(scalar_path(lambda t: 1.0 + t))
    assert h.M == pytest.approx(2.0, rel=1e-14)
    assert h.delta == pytest.approx(1.0, rel=1e-14)
    assert h.nu == 0.0 and h.coercive


def test_shift_arithmetic():
    path = scalar_path(lambda t: -1.0)
    h = verify_hypotheses(path, nu=2.0)
    assert h.delta == pytest.approx(1.0)
    assert h.nu_threshold == pytest.approx(1.0)
    assert not verify_hypotheses(path, nu=0.0).coercive


def test_non_finite_forms_rejected():
    with pytest.raises(HypothesisError):
        scalar_path(lambda t: np.nan)


# -- difference norms ---------------------------------------------------------

def test_diff_norm_affine():
    path = scalar_path(lambda t: t)
    assert diff_norm(path, 0.75, 0.25, 1.0) == pytest.approx(0.5, rel=1e-13)


def test_diff_norm_constant_is_zero():
    assert diff_norm(scalar_path(lambda t: 3.0), 0.1, 0.9) == 0.0


def test_diff_norm_diagonal_gamma0():
    path = diag_path(lambda t: [t, 0.0])
    assert diff_norm(path, 1.0, 0.0, 0.0) == pytest.approx(1.0, rel=1e-13)


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
def test_diff_norm_symmetry_and_triangle(t, s, r, gamma):
    path = diag_path(lambda x: [1 + np.sin(3 * x), 2 + x ** 2])
    d = diff_norm(path, t, s, gamma)
    assert d == pytest.approx(diff_norm(path, s, t, gamma), abs=1e-14)
    assert d <= diff_norm(path, t, r, gamma) + diff_norm(path, r, s, gamma) + 1e-10


# -- seminorms ------------------------------------------------------------------

def test_seminorm_constant_is_zero():
    assert sobolev_seminorm(scalar_path(lambda t: 2.0), 0.5) == 0.0


@pytest.mark.parametrize("alpha,expected", [(0.5, 1.0), (0.25, np.sqrt(8 / 15))])
def test_seminorm_of_identity_path(alpha, expected):
    # int int |t-s|^{1-2 alpha} ds dt = 2/((2-2 alpha)(3-2 alpha))
    path = scalar_path(lambda t: t, np.linspace(0, 1, 17))
    assert sobolev_seminorm(path, alpha) == pytest.approx(expected, abs=1e-10)


@settings(max_examples=20, deadline=None)
@given(st.floats(-5, 5), st.floats(0.05, 0.95))
def test_seminorm_scales_linearly(c, alpha):
    base = sobolev_seminorm(scalar_path(lambda t: t, np.linspace(0, 1, 9)), alpha)
    scaled = sobolev_seminorm(scalar_path(lambda t: c * t, np.linspace(0, 1, 9)), alpha)
    assert scaled == pytest.approx(abs(c) * base, rel=1e-10, abs=1e-14)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.0, 0.45), st.floats(0.55, 1.0), st.floats(0.1, 0.9))
def test_seminorm_monotone_in_interval(a, b, alpha):
    path = scalar_path(lambda t: np.sin(5 * t) + t ** 2, np.linspace(0, 1, 33))
    assert sobolev_seminorm(path, alpha, interval=(a, b)) <= sobolev_seminorm(path, alpha) + 1e-12


def test_seminorm_of_jump_diverges_only_at_half():
    path = jump_path()
    assert np.isfinite(sobolev_seminorm(path, 0.45))
    assert sobolev_seminorm(path, 0.5) == np.inf


# -- subdivision ----------------------------------------------------------------

def test_constant_path_single_interval():
    sub = subdivide(scalar_path(lambda t: 1.0), 0.01)
    assert list(sub.breakpoints) == [0.0, 1.0]


def test_jump_gets_breakpoint_exactly():
    sub = subdivide(jump_path(), 0.1)
    assert 0.5 in list(sub.breakpoints)
    for (a, b), c in zip(sub.intervals, sub.certificates):
        assert c < 0.1


def test_adjacent_jumps_are_too_rough():
    grid = np.linspace(0, 1, 65)
    vals = np.where(np.arange(65) % 2 == 0, 1.0, 2.0)
    path = scalar_path(lambda t: vals[np.argmin(np.abs(grid - t))], grid,
                       interp="piecewise-constant-left")
    with pytest.raises(PathTooRough):
        subdivide(path, 0.1)


def test_holder_path_single_interval_for_large_eps():
    path = scalar_path(lambda t: t ** 0.75, np.linspace(0, 1, 257))
    cert = subdivision_certificate(path)
    assert cert <= 1 / 1.5
    sub = subdivide(path, 1.0)
    assert list(sub.breakpoints) == [0.0, 1.0]


@pytest.mark.parametrize("eps", [0.3, 0.1, 0.03])
def test_subdivision_soundness_and_holder_bound(eps):
    path = scalar_path(lambda t: t ** 0.75, np.linspace(0, 1, 257))
    sub = subdivide(path, eps)
    for (a, b), c in zip(sub.intervals, sub.certificates):
        assert c < eps
        assert subdivision_certificate(path, a, b, refine=4) < eps
        assert c <= (b - a) ** 1.5 / 1.5 * (1 + 1e-9)


def test_forward_difference_certificate_holder_bound():
    path = scalar_path(lambda t: t ** 0.75, np.linspace(0, 1, 257))
    assert forward_difference_certificate(path) <= 1 / 1.5


# -- path utilities -------------------------------------------------------------

def test_restrict_and_refine_preserve_values():
    path = scalar_path(lambda t: np.sin(4 * t), np.linspace(0, 1, 33))
    sub = path.restrict(0.25, 0.75)
    fine = path.refine(4)
    ts = np.linspace(0.25, 0.75, 11)
    assert np.allclose(sub.form_at(ts), path.form_at(ts), atol=1e-14)
    assert np.allclose(fine.form_at(ts), path.form_at(ts), atol=1e-14)


def test_shifted_adds_mass():
    path = scalar_path(lambda t: -1.0, nu=2.0)
    sh = path.shifted(2.0)
    assert np.allclose(sh.forms, 1.0)
    assert sh.nu == 0.0
