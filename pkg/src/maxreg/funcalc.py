"""Functional calculus for the frozen operators A(t).

Everything is computed in the H-orthonormal coordinates of the triple,
where the H inner product is Euclidean and ``A(t)`` is the matrix
``X^T F(t) X``.  Two backends are available:

``eigen``
    diagonalise the coordinate matrix (unitary for symmetric forms) and act
    on eigenvalues; falls back to ``contour`` when the eigenvector basis is
    ill-conditioned.
``contour``
    semigroup by trapezoid quadrature of the inverse Laplace integral on a
    parabolic contour, fractional powers by the Balakrishnan integral with
    the substitution ``mu = e^s``.  Only resolvent solves are used.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, linalg, special

from .gelfand import spectral_norm

__all__ = [
    "BackendError",
    "CalculusEngine",
    "FrozenOperator",
    "exponential_kernel_check",
]


class BackendError(RuntimeError):
    """Quadrature or factorisation failed its accuracy check."""


def _is_hermitian(A, rtol=1e-13):
    scale = max(np.max(np.abs(A)), 1e-300)
    return np.max(np.abs(A - A.conj().T)) <= rtol * scale


@dataclass(eq=False)
class FrozenOperator:
    """A(t) at one time in coordinates, with cached spectral data."""

    matrix: np.ndarray
    cond_max: float = 1e8
    _eig: tuple | None = field(default=None, init=False, repr=False)
    _eig_tried: bool = field(default=False, init=False, repr=False)

    @property
    def n(self):
        return self.matrix.shape[0]

    @property
    def hermitian(self):
        return _is_hermitian(self.matrix)

    def eig(self):
        """``(theta, W, W^{-1})`` or ``None`` when the basis is ill-conditioned."""
        if not self._eig_tried:
            self._eig_tried = True
            A = self.matrix
            if self.hermitian:
                theta, W = linalg.eigh(0.5 * (A + A.conj().T))
                self._eig = (theta, W, W.conj().T)
            else:
                theta, W = linalg.eig(A)
                s = linalg.svdvals(W)
                if s[-1] > 0 and s[0] / s[-1] <= self.cond_max:
                    self._eig = (theta, W, linalg.inv(W))
        return self._eig

    def spectral_bounds(self):
        """Lower bound of Re(spectrum) (numerical range) and upper bound of |spectrum|."""
        A = self.matrix
        lo = float(linalg.eigvalsh(0.5 * (A + A.conj().T))[0])
        hi = float(spectral_norm(A))
        return lo, hi

    def apply_function(self, fvals_of_theta, c):
        theta, W, Winv = self.eig()
        return W @ (fvals_of_theta(theta)[:, None] * (Winv @ c))


def _realify(y, *inputs):
    if all(not np.iscomplexobj(a) for a in inputs) and np.iscomplexobj(y):
        return y.real
    return y


class CalculusEngine:
    """Evaluator of e^{-rA(t)}, (mu + A(t))^{-1} and A(t)^s for a FormPath.

    Public methods take and return nodal H-vectors (a trailing axis of
    length n, or an ``(n, k)`` block is not supported: pass ``(k, n)``).
    Methods prefixed ``coords_`` work directly in coordinates.
    """

    def __init__(self, backend="eigen", n_contour=64, n_balakrishnan=None,
                 quad_tol=1e-13, cond_max=1e8):
        if backend not in ("eigen", "contour"):
            raise ValueError(f"unknown backend {backend!r}")
        self.backend = backend
        self.n_contour = int(n_contour)
        self.n_balakrishnan = n_balakrishnan
        self.quad_tol = float(quad_tol)
        self.cond_max = float(cond_max)
        self._cache = {}

    # -- frozen operators -------------------------------------------------
    def frozen(self, path, t, side="right"):
        key = (id(path), float(t), side)
        op = self._cache.get(key)
        if op is None:
            op = FrozenOperator(np.asarray(path.coords_at(t, side)), cond_max=self.cond_max)
            self._cache[key] = op
        return op

    def frozen_matrix(self, Ac):
        return FrozenOperator(np.asarray(Ac), cond_max=self.cond_max)

    def clear_cache(self):
        self._cache.clear()

    def _use_eigen(self, op):
        return self.backend == "eigen" and op.eig() is not None

    # -- coordinate-level kernels -------------------------------------------
    def coords_semigroup(self, op, r, c):
        """e^{-rA} c for coordinate vectors ``c`` of shape (n,) or (n, k)."""
        if r < 0:
            raise ValueError("semigroup time must be nonnegative")
        c = np.asarray(c)
        if r == 0:
            return c.copy()
        vec = c.ndim == 1
        C = c[:, None] if vec else c
        if self._use_eigen(op):
            out = op.apply_function(lambda th: np.exp(-r * th), C)
        else:
            out = self._contour_semigroup(op, r, C)
        out = _realify(out, op.matrix, c)
        return out[:, 0] if vec else out

    def _contour_semigroup(self, op, r, C):
        # Parabolic Hankel contour z(th) = (N/r)(0.1309 - 0.1194 th^2 + 0.25 i th),
        # trapezoid in th on (-pi, pi); z = -lambda for A.
        A = op.matrix
        if r * np.linalg.norm(A, 1) <= 1e-6:
            # Contour scale N/r overflows as r -> 0; the second-order Taylor polynomial is exact to rounding here.
            AC = A @ C
            return C - r * AC + (r * r / 2) * (A @ AC)
        N = self.n_contour
        th = -np.pi + (np.arange(N) + 0.5) * (2 * np.pi / N)
        z = (N / r) * (0.1309 - 0.1194 * th ** 2 + 0.25j * th)
        dz = (N / r) * (-0.2388 * th + 0.25j)
        n = op.n
        out = np.zeros(C.shape, dtype=complex)
        ident = np.eye(n)
        for zk, dzk in zip(z, dz):
            y = linalg.solve(zk * ident + A, C)
            out += np.exp(r * zk) * dzk * y
        out /= 1j * N
        if np.max(np.abs(out)) > 10 * max(np.max(np.abs(C)), 1e-300):
            raise BackendError(
                f"contour semigroup lost contractivity (|e^(-rA)c| = {np.max(np.abs(out)):.3e}); "
                "spectrum likely outside the parabola")
        return out

    def coords_resolvent(self, op, mu, c):
        c = np.asarray(c)
        n = op.n
        Ms = mu * np.eye(n) + op.matrix
        try:
            y = linalg.solve(Ms, c)
        except linalg.LinAlgError as exc:
            raise BackendError(f"mu = {mu} lies in the spectrum: {exc}") from None
        scale = np.linalg.norm(c)
        res = np.linalg.norm(Ms @ y - c)
        if res > 1e-10 * max(scale, 1e-300):
            raise BackendError(f"resolvent residual {res:.3e} exceeds 1e-10 x |x|")
        return _realify(y, op.matrix, c) if np.isrealobj(mu) else y

    def coords_power(self, op, exponent, c):
        """A^exponent c for exponent in [-1, 1]."""
        c = np.asarray(c)
        vec = c.ndim == 1
        C = c[:, None] if vec else c
        if exponent == 0:
            out = C.copy()
        elif exponent == 1:
            out = op.matrix @ C
        elif exponent == -1:
            out = linalg.solve(op.matrix, C)
        elif self._use_eigen(op):
            out = op.apply_function(lambda th: th ** exponent, C)
        elif exponent < 0:
            out = self._balakrishnan(op, -exponent, C)
        else:
            out = op.matrix @ self._balakrishnan(op, 1.0 - exponent, C)
        out = _realify(out, op.matrix, c)
        return out[:, 0] if vec else out

    def _balakrishnan(self, op, beta, C):
        """A^{-beta} C = sin(pi beta)/pi int_0^inf mu^{-beta} (mu + A)^{-1} C dmu."""
        lo, hi = op.spectral_bounds()
        if lo <= 0:
            raise BackendError("fractional power needs a coercive operator")
        tol = self.quad_tol
        ltol = math.log(1.0 / tol)
        s_min = math.log(lo) - (ltol + math.log(1.0 / (1.0 - beta))) / (1.0 - beta)
        s_max = math.log(hi) + (ltol + math.log(1.0 / beta)) / beta
        if self.n_balakrishnan is not None:
            N = int(self.n_balakrishnan)
        else:
            # Trapezoid error ~ exp(-2 pi d / h) with strip half-width d = pi/2.
            h = np.pi ** 2 / ltol
            N = int(math.ceil((s_max - s_min) / h)) + 1
        s = np.linspace(s_min, s_max, N)
        h = s[1] - s[0]
        A = op.matrix
        ident = np.eye(op.n)
        acc = np.zeros(C.shape, dtype=np.result_type(A, C, float))
        for sk in s:
            mu = math.exp(sk)
            acc += mu ** (1.0 - beta) * linalg.solve(mu * ident + A, C)
        return acc * h * math.sin(math.pi * beta) / math.pi

    # -- public nodal interface ---------------------------------------------
    def _coords(self, path, x):
        return path.triple.to_coords(np.asarray(x))

    def _nodal(self, path, c):
        return path.triple.from_coords(c)

    def semigroup(self, path, t, r, x, side="right"):
        """e^{-rA(t)} x."""
        op = self.frozen(path, t, side)
        c = self._coords(path, x)
        return self._nodal(path, self.coords_semigroup(op, float(r), c.T).T)

    def resolvent(self, path, t, mu, x, side="right"):
        """(mu + A(t))^{-1} x by a direct solve."""
        op = self.frozen(path, t, side)
        c = self._coords(path, x)
        return self._nodal(path, self.coords_resolvent(op, mu, c.T).T)

    def frac_power(self, path, t, exponent, x, side="right"):
        """A(t)^exponent x for exponent -1/2, 1/2 or 1/p with p >= 2."""
        exponent = float(exponent)
        if not (exponent == -0.5 or 0.0 < exponent <= 0.5):
            raise ValueError("exponent must be -1/2, 1/2 or 1/p with p >= 2")
        op = self.frozen(path, t, side)
        c = self._coords(path, x)
        return self._nodal(path, self.coords_power(op, exponent, c.T).T)

    def sqrt_matrix(self, path, t, side="right"):
        """Coordinate matrix of A(t)^{1/2}."""
        op = self.frozen(path, t, side)
        return self.coords_power(op, 0.5, np.eye(op.n))

    def kato_constants(self, path, t_grid=None):
        """Extreme H-singular values of ``A(t)^{1/2} Lambda^{-1/2}`` over ``t_grid``."""
        t_grid = path.grid if t_grid is None else np.asarray(t_grid, dtype=float)
        w = path.triple.weights(-1.0)
        c1, c2 = np.inf, 0.0
        for t in t_grid:
            S = self.sqrt_matrix(path, t) * w[None, :]
            sv = linalg.svdvals(S)
            c1 = min(c1, float(sv[-1]))
            c2 = max(c2, float(sv[0]))
        return c1, c2

    # -- resolvent and semigroup bounds -------------------------------------
    def resolvent_semigroup_measures(self, path, t, gamma, mus, rs):
        """Weighted sup-norms of resolvent and semigroup at one time.

        Returns the sups over ``mus`` of
        ``(1+mu)^{(1-gamma)/2} ||(mu+A)^{-1}||_{L(V'_gamma, V)}`` and
        ``(1+mu)^{1-gamma/2} ||(mu+A)^{-1}||_{L(V'_gamma, H)}``, and the sup
        over ``rs`` of ``r^{gamma/2} ||e^{-rA}||_{L(V'_gamma, H)}``.
        """
        op = self.frozen(path, t)
        tri = path.triple
        wg = tri.weights(gamma)
        wv = tri.weights(1.0)
        n = op.n
        item1 = item2 = 0.0
        for mu in mus:
            R = self.coords_resolvent(op, float(mu), np.eye(n))
            RG = R * wg[None, :]
            item1 = max(item1, (1 + mu) ** ((1 - gamma) / 2) * spectral_norm(wv[:, None] * RG))
            item2 = max(item2, (1 + mu) ** (1 - gamma / 2) * spectral_norm(RG))
        item3 = 0.0
        for r in rs:
            E = self.coords_semigroup(op, float(r), np.diag(wg))
            item3 = max(item3, r ** (gamma / 2) * spectral_norm(E))
        return float(item1), float(item2), float(item3)


def exponential_kernel_check(gaps, gammas):
    """Check int_0^inf e^{-r x} (1+r)^{gamma/2-1} dr <= Gamma(gamma/2) x^{-gamma/2}.

    Returns rows ``(x, gamma, lhs, rhs)`` for ``gamma`` in (0, 1].
    """
    rows = []
    for g in gammas:
        if not 0 < g <= 1:
            raise ValueError("gamma must lie in (0, 1]")
        rhs_c = special.gamma(g / 2)
        for x in gaps:
            lhs, _ = integrate.quad(lambda r: math.exp(-r * x) * (1 + r) ** (g / 2 - 1),
                                    0, np.inf, limit=200)
            rows.append((float(x), float(g), float(lhs), float(rhs_c * x ** (-g / 2))))
    return rows
