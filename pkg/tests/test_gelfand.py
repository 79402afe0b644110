import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from maxreg import TripleError, make_triple


def test_identity_triple():
    tri = make_triple([[1.0]], [[1.0]])
    assert np.allclose(tri.eigvals, [1.0])
    assert tri.c_embed == pytest.approx(1.0)


def test_scalar_embedding_constant():
    tri = make_triple([[1.0]], [[4.0]])
    assert np.allclose(tri.eigvals, [4.0])
    assert tri.c_embed == pytest.approx(0.5)


def test_diagonal_triple():
    tri = make_triple(np.eye(2), np.diag([1.0, 4.0]))
    assert np.allclose(np.sort(tri.eigvals), [1.0, 4.0])
    assert tri.c_embed == pytest.approx(1.0)


def test_rejects_non_spd():
    with pytest.raises(TripleError):
        make_triple(np.eye(2), np.diag([1.0, -1.0]))
    with pytest.raises(TripleError):
        make_triple(np.array([[1.0, 2.0], [0.0, 1.0]]), np.eye(2))


@pytest.mark.parametrize("space,gamma,expected", [
    ("V", None, 2.0),
    ("V_gamma", 1.0, 2.0),
    ("V_gamma", 0.5, np.sqrt(2.0)),
    ("Vdual_gamma", 1.0, 0.5),
    ("H", None, 1.0),
])
def test_scalar_norms(space, gamma, expected):
    tri = make_triple([[1.0]], [[4.0]])
    assert tri.norm(np.array([1.0]), space, gamma) == pytest.approx(expected, rel=1e-14)


def test_riesz_map_has_unit_norm():
    G = np.array([[2.0, -1.0], [-1.0, 2.0]])
    tri = make_triple(np.eye(2), G)
    assert tri.opnorm(G, 1.0, 1.0) == pytest.approx(1.0, rel=1e-12)


@pytest.mark.parametrize("g1,g2", [(1.0, 1.0), (0.5, 0.0), (0.0, 1.0)])
def test_scalar_opnorm_is_abs(g1, g2):
    tri = make_triple([[1.0]], [[1.0]])
    assert tri.opnorm(np.array([[-3.0]]), g1, g2) == pytest.approx(3.0)


def test_diagonal_opnorm():
    tri = make_triple(np.eye(2), np.diag([1.0, 4.0]))
    assert tri.opnorm(np.diag([0.0, 3.0]), 1.0, 0.0) == pytest.approx(1.5, rel=1e-14)


def _random_triple(seed, n=5):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n))
    B = rng.standard_normal((n, n))
    return make_triple(A @ A.T + n * np.eye(n), B @ B.T + 2 * n * np.eye(n)), rng


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.0, 1.0))
def test_interpolation_is_log_linear_on_eigenvectors(seed, gamma):
    tri, rng = _random_triple(seed)
    u = tri.eigenvector(int(rng.integers(tri.n))) * 3.7
    lh = np.log(tri.norm(u, "H"))
    lv = np.log(tri.norm(u, "V"))
    assert np.log(tri.norm(u, "V_gamma", gamma)) == pytest.approx((1 - gamma) * lh + gamma * lv,
                                                                   abs=1e-10)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.0, 1.0))
def test_duality_under_adjoint(seed, gamma):
    tri, rng = _random_triple(seed)
    B = rng.standard_normal((tri.n, tri.n))
    # H-adjoint of B (as an H-operator) is M^{-1} B^T M.
    Badj = np.linalg.solve(tri.mass, B.T @ tri.mass)
    assert tri.opnorm(B, 1.0, gamma) == pytest.approx(tri.opnorm(Badj, gamma, 1.0), rel=1e-9)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_probes_never_exceed_opnorm(seed):
    tri, rng = _random_triple(seed)
    B = rng.standard_normal((tri.n, tri.n))
    bound = tri.opnorm(B, 1.0, 0.5)
    for _ in range(64):
        u = rng.standard_normal(tri.n)
        ratio = tri.norm(B @ u, "Vdual_gamma", 0.5) / tri.norm(u, "V")
        assert ratio <= bound * (1 + 1e-10)


def test_coordinate_round_trip():
    tri, rng = _random_triple(3)
    u = rng.standard_normal(tri.n)
    assert np.allclose(tri.from_coords(tri.to_coords(u)), u, atol=1e-13)
