"""Finite-dimensional Gelfand triple V -> H -> V' and the scale V_gamma.

The H inner product is ``(u, v) = v^H M_H u`` and the V inner product is
``v^H G_V u``.  The bridge ``Lambda = M_H^{-1} G_V`` is H-self-adjoint and
positive; it is diagonalised once by the generalized eigenproblem
``G_V x = lambda M_H x`` with H-orthonormal eigenvectors ``X``.  In the
coordinates ``c = X^T M_H u`` the H-norm is Euclidean and every space of
the scale is a diagonal reweighting::

    ||u||_{V_gamma}   = || lambda^{gamma/2} c ||
    ||psi||_{V'_gamma} = || lambda^{-gamma/2} c_psi ||

where ``psi`` is stored through its H-Riesz representative.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

__all__ = ["GelfandTriple", "TripleError", "make_triple", "spectral_norm"]

SYM_RTOL = 1e-12


class TripleError(ValueError):
    """Raised when the Gram matrices do not define a Gelfand triple."""


def spectral_norm(B):
    """Largest singular value of a matrix or of a stack of matrices."""
    B = np.asarray(B)
    if B.ndim == 2:
        if B.shape[0] == 0 or B.shape[1] == 0:
            return 0.0
        if B.shape == (1, 1):
            return float(abs(B[0, 0]))
        return float(linalg.svdvals(B)[0])
    if B.shape[-1] == 1 and B.shape[-2] == 1:
        return np.abs(B[..., 0, 0])
    return np.linalg.svd(B, compute_uv=False)[..., 0]


def _check_spd(name, A):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise TripleError(f"{name} must be square, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise TripleError(f"{name} has non-finite entries")
    scale = np.max(np.abs(A))
    asym = np.max(np.abs(A - A.T))
    if asym > SYM_RTOL * scale:
        raise TripleError(
            f"{name} is not symmetric: max |A - A^T| = {asym:.3e} "
            f"exceeds {SYM_RTOL:g} x max|A| = {SYM_RTOL * scale:.3e}")
    A = 0.5 * (A + A.T)
    w = linalg.eigvalsh(A)
    if w[0] <= 0.0:
        raise TripleError(
            f"{name} is not positive definite: eigenvalue {w[0]:.6e} <= 0")
    return A


@dataclass(frozen=True, eq=False)
class GelfandTriple:
    mass: np.ndarray
    gram: np.ndarray
    eigvals: np.ndarray
    eigvecs: np.ndarray

    @property
    def n(self):
        return self.mass.shape[0]

    @property
    def c_embed(self):
        """Embedding constant in ||u|| <= C ||u||_V."""
        return float(self.eigvals.min() ** -0.5)

    @property
    def lam_min(self):
        return float(self.eigvals.min())

    @property
    def lam_max(self):
        return float(self.eigvals.max())

    # -- coordinates -------------------------------------------------------
    def to_coords(self, u):
        """Nodal H-vector(s) -> H-orthonormal eigen-coordinates.

        Accepts shape ``(n,)`` or ``(..., n)``.
        """
        u = np.asarray(u)
        return u @ (self.mass @ self.eigvecs)

    def from_coords(self, c):
        c = np.asarray(c)
        return c @ self.eigvecs.T

    def form_to_coords(self, F):
        """Form matrix (``a(u, v) = v^H F u``) -> operator matrix in coordinates.

        Works on a single matrix or a stack ``(K, n, n)``.
        """
        X = self.eigvecs
        return X.T @ np.asarray(F) @ X

    def operator_to_coords(self, B):
        """H-representation ``B`` (nodal) -> coordinate matrix."""
        X = self.eigvecs
        return X.T @ self.mass @ np.asarray(B) @ X

    def weights(self, sigma):
        """Diagonal weights ``lambda^{sigma/2}`` realising the norm of V_sigma.

        Positive ``sigma`` is V_gamma, negative is V'_gamma.
        """
        return self.eigvals ** (0.5 * sigma)

    # -- norms ---------------------------------------------------------------
    def norm(self, u, space="H", gamma=None):
        """Norm of ``u`` in H, V, V_gamma or Vdual_gamma.

        ``u`` may be a single vector or a stack with the vector index last.
        """
        sigma = _space_exponent(space, gamma)
        c = self.to_coords(u)
        return np.linalg.norm(c * self.weights(sigma), axis=-1)

    def coords_opnorm(self, Bc, src=1.0, dst=-1.0):
        """Norm of a coordinate operator from V_src to V_dst (signed exponents)."""
        Bc = np.asarray(Bc)
        w = self.weights(dst)[:, None] * self.weights(-src)[None, :]
        return spectral_norm(Bc * w)

    def opnorm(self, B, from_gamma=1.0, to_dual_gamma=1.0):
        """sup ||B u||_{V'_{to_dual_gamma}} / ||u||_{V_{from_gamma}}.

        ``B`` is the nodal H-representation of the operator.
        """
        B = np.asarray(B)
        if B.shape != (self.n, self.n):
            raise TripleError(f"operator shape {B.shape} does not match n={self.n}")
        _check_gamma(from_gamma)
        _check_gamma(to_dual_gamma)
        return self.coords_opnorm(self.operator_to_coords(B), from_gamma, -to_dual_gamma)

    def form_opnorm(self, F, from_gamma=1.0, to_dual_gamma=1.0):
        """Same as :meth:`opnorm` for a form matrix ``F`` (``B = M_H^{-1} F``)."""
        F = np.asarray(F)
        if F.shape != (self.n, self.n):
            raise TripleError(f"form shape {F.shape} does not match n={self.n}")
        _check_gamma(from_gamma)
        _check_gamma(to_dual_gamma)
        return self.coords_opnorm(self.form_to_coords(F), from_gamma, -to_dual_gamma)

    def eigenvector(self, k):
        """k-th Lambda-eigenvector (0-based, ascending), H-normalised, nodal."""
        return self.eigvecs[:, k].copy()


def _check_gamma(gamma):
    if not (0.0 <= gamma <= 1.0):
        raise ValueError(f"gamma must lie in [0, 1], got {gamma}")


def _space_exponent(space, gamma):
    key = space.replace("'", "dual").replace("_", "").lower()
    if key == "h":
        return 0.0
    if key == "v":
        return 1.0
    if key == "vdual":
        if gamma is None:
            return -1.0
        _check_gamma(gamma)
        return -float(gamma)
    if key in ("vgamma",):
        if gamma is None:
            raise ValueError("space V_gamma needs gamma")
        _check_gamma(gamma)
        return float(gamma)
    if key in ("vdualgamma",):
        if gamma is None:
            raise ValueError("space Vdual_gamma needs gamma")
        _check_gamma(gamma)
        return -float(gamma)
    raise ValueError(f"unknown space {space!r}")


def make_triple(mass, gram):
    """Build a :class:`GelfandTriple` from the H and V Gram matrices."""
    M = _check_spd("M_H", mass)
    G = _check_spd("G_V", gram)
    if M.shape != G.shape:
        raise TripleError(f"dimension mismatch: M_H {M.shape} vs G_V {G.shape}")
    lam, X = linalg.eigh(G, M)
    if lam[0] <= 0.0:
        raise TripleError(f"Lambda is not positive: eigenvalue {lam[0]:.6e}")
    return GelfandTriple(mass=M, gram=G, eigvals=lam, eigvecs=X)
