import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special

from maxreg import CalculusEngine, FormPath, exponential_kernel_check, make_triple

from conftest import diag_path, scalar_path

BACKENDS = ["eigen", "contour"]


def random_path(seed, n=6, skew=0.5):
    rng = np.random.default_rng(seed)
    B = rng.standard_normal((n, n))
    G = B @ B.T + n * np.eye(n)
    tri = make_triple(np.eye(n), G)
    S = rng.standard_normal((n, n))
    form = G + skew * (S - S.T)
    return FormPath(tri, [0.0, 1.0], np.array([form, form]))


@pytest.mark.parametrize("backend", BACKENDS)
def test_scalar_semigroup(backend):
    e = CalculusEngine(backend=backend)
    path = scalar_path(lambda t: 1.0)
    assert e.semigroup(path, 0.0, 1.0, np.ones(1))[0] == pytest.approx(np.exp(-1), rel=1e-10)


@pytest.mark.parametrize("backend", BACKENDS)
def test_semigroup_identity_at_zero(backend):
    path = random_path(1)
    x = np.arange(1.0, 7.0)
    assert np.allclose(CalculusEngine(backend=backend).semigroup(path, 0.0, 0.0, x), x)


@pytest.mark.parametrize("backend", BACKENDS)
def test_diagonal_semigroup(backend):
    path = diag_path(lambda t: [1.0, 4.0])
    out = CalculusEngine(backend=backend).semigroup(path, 0.3, 0.5, np.ones(2))
    assert np.allclose(out, [np.exp(-0.5), np.exp(-2.0)], rtol=1e-10)


def test_resolvent_examples(engine):
    assert engine.resolvent(scalar_path(lambda t: 1.0), 0.0, 1.0, np.ones(1))[0] == pytest.approx(0.5)
    out = engine.resolvent(diag_path(lambda t: [1.0, 4.0]), 0.0, 0.0, np.array([1.0, 4.0]))
    assert np.allclose(out, [1.0, 1.0])
    mus = np.logspace(-6, 6, 200)
    sup = max((1 + mu) * abs(engine.resolvent(scalar_path(lambda t: 1.0), 0, mu, np.ones(1))[0])
              for mu in mus)
    assert sup == pytest.approx(1.0, abs=1e-12)


def test_resolvent_residual(engine):
    path = random_path(4)
    x = np.random.default_rng(0).standard_normal(6)
    mu = 2.5 + 1.0j
    y = engine.resolvent(path, 0.0, mu, x)
    A = np.linalg.solve(path.triple.mass, path.forms[0])
    assert np.linalg.norm((mu * np.eye(6) + A) @ y - x) <= 1e-10 * np.linalg.norm(x)


@pytest.mark.parametrize("backend", BACKENDS)
def test_fractional_power_examples(backend):
    e = CalculusEngine(backend=backend)
    assert e.frac_power(scalar_path(lambda t: 4.0), 0, 0.5, np.ones(1))[0] == pytest.approx(2.0, rel=1e-9)
    assert e.frac_power(scalar_path(lambda t: 8.0), 0, 1 / 3, np.ones(1))[0] == pytest.approx(2.0, rel=1e-9)
    out = e.frac_power(diag_path(lambda t: [1.0, 4.0]), 0, -0.5, np.array([1.0, 2.0]))
    assert np.allclose(out, [1.0, 1.0], rtol=1e-9)


@pytest.mark.parametrize("backend", BACKENDS)
def test_sqrt_squares_to_operator(backend):
    path = random_path(7)
    S = CalculusEngine(backend=backend).sqrt_matrix(path, 0.0)
    Ac = path.coords_at(0.0)
    assert np.linalg.norm(S @ S - Ac, 2) <= 1e-7 * np.linalg.norm(Ac, 2)


def test_backends_agree_on_sqrt():
    path = random_path(11)
    a = CalculusEngine("eigen").sqrt_matrix(path, 0.0)
    b = CalculusEngine("contour").sqrt_matrix(path, 0.0)
    assert np.linalg.norm(a - b, 2) <= 1e-7 * np.linalg.norm(a, 2)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.0, 3.0))
def test_backends_agree_on_semigroup(seed, r):
    path = random_path(seed)
    x = np.random.default_rng(seed).standard_normal(6)
    a = CalculusEngine("eigen").semigroup(path, 0.0, r, x)
    b = CalculusEngine("contour").semigroup(path, 0.0, r, x)
    assert np.linalg.norm(a - b) <= 1e-7 * np.linalg.norm(x)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.0, 2.0), st.floats(0.0, 2.0))
def test_semigroup_property_and_contractivity(seed, r, s):
    e = CalculusEngine()
    path = random_path(seed)
    x = np.random.default_rng(seed).standard_normal(6)
    lhs = e.semigroup(path, 0.0, r + s, x)
    rhs = e.semigroup(path, 0.0, r, e.semigroup(path, 0.0, s, x))
    assert np.linalg.norm(lhs - rhs) <= 1e-9 * np.linalg.norm(x)
    tri = path.triple
    assert tri.norm(e.semigroup(path, 0.0, r, x)) <= tri.norm(x) * (1 + 1e-12)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.0, 2.0))
def test_adjoint_semigroup(seed, r):
    e = CalculusEngine()
    path = random_path(seed)
    rng = np.random.default_rng(seed)
    x, y = rng.standard_normal(6), rng.standard_normal(6)
    M = path.triple.mass
    lhs = e.semigroup(path, 0.0, r, x) @ M @ y
    rhs = x @ M @ e.semigroup(path.adjoint(), 0.0, r, y)
    assert lhs == pytest.approx(rhs, abs=1e-10 * np.linalg.norm(x) * np.linalg.norm(y))


def test_kato_constants_symmetric_scalar(engine):
    path = scalar_path(lambda t: 1 + t)
    c1, c2 = engine.kato_constants(path)
    assert c1 == pytest.approx(1.0, abs=1e-12)
    assert c2 == pytest.approx(np.sqrt(2.0), abs=1e-12)


def test_kato_constants_riesz_map(engine):
    G = np.array([[2.0, -1.0], [-1.0, 2.0]])
    path = FormPath(make_triple(np.eye(2), G), [0.0, 1.0], np.array([G, G]))
    c1, c2 = engine.kato_constants(path)
    assert (c1, c2) == (pytest.approx(1.0, abs=1e-12), pytest.approx(1.0, abs=1e-12))


def test_kato_constants_nonsymmetric_probe(engine):
    path = random_path(5, n=2, skew=1.0)
    c1, c2 = engine.kato_constants(path, [0.0])
    S = engine.sqrt_matrix(path, 0.0)
    w = path.triple.weights(1.0)
    rng = np.random.default_rng(0)
    ratios = []
    for _ in range(256):
        c = rng.standard_normal(2)
        ratios.append(np.linalg.norm(S @ c) / np.linalg.norm(w * c))
    assert c1 <= min(ratios) + 1e-12 and max(ratios) <= c2 + 1e-12
    assert min(ratios) <= c1 * 1.05 and max(ratios) >= c2 * 0.95


def test_resolvent_semigroup_measures_scalar(engine):
    mus = np.concatenate([[0.0], np.logspace(-6, 6, 61)])
    rs = np.logspace(-8, 0, 41)
    i1, i2, i3 = engine.resolvent_semigroup_measures(scalar_path(lambda t: 1.0), 0.0, 0.0, mus, rs)
    assert i2 == pytest.approx(1.0, abs=1e-10)
    assert i3 == pytest.approx(1.0, abs=1e-7)
    i1, _, _ = engine.resolvent_semigroup_measures(scalar_path(lambda t: 1.0), 0.0, 1.0, mus, rs)
    assert i1 == pytest.approx(1.0, abs=1e-10)


def test_exponential_kernel_grid():
    rows = exponential_kernel_check([1e-3, 0.1, 1.0, 10.0], [0.25, 0.5, 1.0])
    for x, g, lhs, rhs in rows:
        assert lhs <= rhs
    assert rows[-1][3] == pytest.approx(special.gamma(0.5) * 10 ** -0.5)
