"""Time-dependent form families t -> a(t) sampled on a grid.

A :class:`FormPath` stores the form matrices ``F_k`` with
``a(t_k, u, v) = v^H F_k u`` on a strictly increasing grid and an
interpolation rule for off-grid times:

``linear``
    piecewise-linear between samples (default).
``constant``
    piecewise-constant from the left sample, ``a(t) = F_j`` on
    ``[t_j, t_{j+1})``; used for paths with jumps.

Difference norms ``||A(t) - A(s)||_{L(V, V'_gamma)}`` drive everything in
this module: the fractional seminorm, the interval certificates and the
greedy subdivision.  For piecewise-linear paths the difference is affine in
``(t, s)`` on every pair of cells, so its norm is convex there.  The
quadratures below use that: off-diagonal cells interpolate the norm from
its grid values (an upper bound), cells touching the diagonal are
integrated in closed form from the local slope.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.special import roots_jacobi, roots_legendre

from .gelfand import GelfandTriple, spectral_norm

__all__ = [
    "FormPath",
    "HypothesisConstants",
    "HypothesisError",
    "PathTooRough",
    "Subdivision",
    "difference_bound",
    "diff_norm",
    "subdivision_certificate",
    "forward_difference_certificate",
    "sobolev_seminorm",
    "subdivide",
    "verify_hypotheses",
]

_INTERP_ALIASES = {
    "linear": "linear",
    "piecewise-linear": "linear",
    "pl": "linear",
    "constant": "constant",
    "piecewise-constant-left": "constant",
    "pc": "constant",
}

_JUMP_RTOL = 1e-12


class HypothesisError(ValueError):
    """The form family violates the standing hypotheses."""


class PathTooRough(RuntimeError):
    """No admissible subdivision exists at the resolution of the grid."""


@dataclass(frozen=True)
class HypothesisConstants:
    M: float
    delta: float
    nu: float
    nu_threshold: float
    gamma: float = 1.0
    M_gamma: float | None = None

    @property
    def coercive(self):
        return self.delta > 0.0


@dataclass(eq=False)
class FormPath:
    triple: GelfandTriple
    grid: np.ndarray
    forms: np.ndarray
    interp: str = "linear"
    nu: float = 0.0
    gamma: float = 1.0
    label: str = ""
    meta: dict = field(default_factory=dict)
    coord_forms: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        forms = np.asarray(self.forms)
        if forms.ndim == 2:
            forms = forms[None]
        n = self.triple.n
        if forms.shape[1:] != (n, n):
            raise ValueError(f"forms must have shape (K+1, {n}, {n}), got {forms.shape}")
        if self.grid.ndim != 1 or len(self.grid) != forms.shape[0]:
            raise ValueError("grid and forms disagree in length")
        if len(self.grid) < 2:
            raise ValueError("a path needs at least two samples")
        if np.any(np.diff(self.grid) <= 0):
            raise ValueError("grid must be strictly increasing")
        if not np.all(np.isfinite(forms)):
            raise HypothesisError("form samples contain non-finite entries")
        try:
            self.interp = _INTERP_ALIASES[self.interp]
        except KeyError:
            raise ValueError(f"unknown interpolation rule {self.interp!r}") from None
        self.forms = forms
        self.coord_forms = self.triple.form_to_coords(forms)

    # -- basic geometry ----------------------------------------------------
    @property
    def K(self):
        return len(self.grid) - 1

    @property
    def start(self):
        return float(self.grid[0])

    @property
    def tau(self):
        return float(self.grid[-1])

    @property
    def n(self):
        return self.triple.n

    @property
    def is_real(self):
        return not np.iscomplexobj(self.forms)

    def _check_time(self, t):
        t = np.asarray(t, dtype=float)
        slack = 1e-12 * max(1.0, abs(self.tau))
        if np.any(t < self.start - slack) or np.any(t > self.tau + slack):
            raise ValueError(f"time {t} outside [{self.start}, {self.tau}]")
        return np.clip(t, self.start, self.tau)

    def _locate(self, t, side):
        """Cell index and local coordinate for scalar or array ``t``."""
        t = self._check_time(t)
        K = self.K
        if self.interp == "linear":
            j = np.clip(np.searchsorted(self.grid, t, side="right") - 1, 0, K - 1)
            theta = (t - self.grid[j]) / (self.grid[j + 1] - self.grid[j])
            return j, theta
        if side == "right":
            j = np.clip(np.searchsorted(self.grid, t, side="right") - 1, 0, K)
        else:
            j = np.clip(np.searchsorted(self.grid, t, side="left") - 1, 0, K)
        return j, None

    def _interp(self, stack, t, side):
        j, theta = self._locate(t, side)
        if theta is None:
            return stack[j]
        theta = np.asarray(theta)[..., None, None]
        return (1.0 - theta) * stack[j] + theta * stack[np.minimum(j + 1, self.K)]

    def form_at(self, t, side="right"):
        """Form matrix at ``t``; ``side`` picks the one-sided limit at jumps."""
        return self._interp(self.forms, t, side)

    def coords_at(self, t, side="right"):
        """Operator matrix of A(t) in H-orthonormal coordinates."""
        return self._interp(self.coord_forms, t, side)

    def operator_at(self, t, side="right"):
        """Nodal H-representation ``M_H^{-1} F(t)``."""
        return linalg.solve(self.triple.mass, self.form_at(t, side), assume_a="pos")

    # -- derived paths -------------------------------------------------------
    def _rebuild(self, grid, forms, **kw):
        args = dict(triple=self.triple, grid=grid, forms=forms, interp=self.interp,
                    nu=self.nu, gamma=self.gamma, label=self.label, meta=dict(self.meta))
        args.update(kw)
        return FormPath(**args)

    def restrict(self, a, b):
        """Sub-path on ``[a, b]`` with ``a`` and ``b`` inserted as nodes."""
        a = float(self._check_time(a))
        b = float(self._check_time(b))
        if not b > a:
            raise ValueError("restrict needs a < b")
        inner = self.grid[(self.grid > a) & (self.grid < b)]
        grid = np.concatenate([[a], inner, [b]])
        if self.interp == "linear":
            forms = self.form_at(grid)
        else:
            forms = self.form_at(grid, side="right")
            forms[-1] = self.form_at(b, side="left")
        return self._rebuild(grid, forms)

    def refine(self, factor):
        """Insert ``factor - 1`` equispaced nodes in every cell."""
        factor = int(factor)
        if factor < 1:
            raise ValueError("refinement factor must be >= 1")
        if factor == 1:
            return self
        frac = np.arange(factor) / factor
        h = np.diff(self.grid)
        grid = np.concatenate([(self.grid[:-1, None] + h[:, None] * frac).ravel(),
                               self.grid[-1:]])
        if self.interp == "linear":
            forms = self.form_at(grid)
        else:
            forms = self.form_at(grid, side="right")
        return self._rebuild(grid, forms)

    def adjoint(self):
        """Path of the adjoint forms ``a*(t, u, v) = conj(a(t, v, u))``."""
        return self._rebuild(self.grid, np.conj(np.swapaxes(self.forms, -1, -2)))

    def shifted(self, nu):
        """Forms ``a(t) + nu (., .)_H``; the declared shift drops by ``nu``."""
        return self._rebuild(self.grid, self.forms + nu * self.triple.mass,
                             nu=self.nu - nu)

    def with_interp(self, interp):
        return self._rebuild(self.grid, self.forms, interp=interp)

    def is_constant(self, rtol=_JUMP_RTOL):
        scale = max(np.max(np.abs(self.coord_forms)), 1e-300)
        return bool(np.max(np.abs(self.coord_forms - self.coord_forms[0])) <= rtol * scale)

    def differences(self, gamma=1.0):
        return _Differences(self, gamma)


# ---------------------------------------------------------------------------
# difference norms
# ---------------------------------------------------------------------------

class _Differences:
    """Grid-pair values of ``||A(t_i) - A(t_j)||_{L(V, V'_gamma)}``.

    When all samples differ from the first by multiples of one matrix the
    table collapses to ``|c_i - c_j| ||B||``; otherwise norms are evaluated in
    batches on demand.
    """

    _CHUNK = 4096

    def __init__(self, path, gamma):
        tri = path.triple
        if not 0.0 <= gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {gamma}")
        w = tri.weights(-gamma)[:, None] * tri.weights(-1.0)[None, :]
        S = path.coord_forms * w
        self.S = S
        self.symmetric = bool(gamma == 1.0 and np.allclose(
            S, np.conj(np.swapaxes(S, -1, -2)), rtol=0, atol=1e-14 * max(np.abs(S).max(), 1e-300)))
        D = (S - S[0]).reshape(len(S), -1)
        norms = np.linalg.norm(D, axis=1)
        self.coef = None
        scale = norms.max()
        if scale == 0.0:
            self.coef = np.zeros(len(S))
            self.bnorm = 0.0
        else:
            r = int(np.argmax(norms))
            basis = D[r] / norms[r]
            coef = D @ np.conj(basis)
            resid = np.linalg.norm(D - np.outer(coef, basis), axis=1).max()
            if resid <= 1e-13 * scale:
                self.coef = coef
                self.bnorm = spectral_norm(basis.reshape(S.shape[1:]))

    def pairs(self, i, j):
        """Vectorised d(t_i, t_j) for index arrays of equal shape."""
        i, j = np.broadcast_arrays(np.asarray(i), np.asarray(j))
        if self.coef is not None:
            return np.abs(self.coef[i] - self.coef[j]) * self.bnorm
        out = np.empty(i.shape)
        fi, fj, fo = i.ravel(), j.ravel(), out.reshape(-1)
        for lo in range(0, fi.size, self._CHUNK):
            sl = slice(lo, lo + self._CHUNK)
            diff = self.S[fi[sl]] - self.S[fj[sl]]
            if self.symmetric:
                ev = np.linalg.eigvalsh(diff)
                fo[sl] = np.max(np.abs(ev), axis=-1)
            else:
                fo[sl] = spectral_norm(diff)
        return out

    def table(self, idx=None):
        if idx is None:
            idx = np.arange(len(self.S))
        idx = np.asarray(idx)
        if self.coef is not None:
            c = self.coef[idx]
            return np.abs(c[:, None] - c[None, :]) * self.bnorm
        m = len(idx)
        iu, ju = np.triu_indices(m, 1)
        T = np.zeros((m, m))
        T[iu, ju] = self.pairs(idx[iu], idx[ju])
        return T + T.T

    def max_pair(self):
        if self.coef is not None:
            c = self.coef
            if np.iscomplexobj(c):
                return float(self.table().max())
            return float((c.max() - c.min()) * self.bnorm)
        return float(self.table().max())


def diff_norm(path, t, s, gamma=1.0):
    """``||A(t) - A(s)||_{L(V, V'_gamma)}`` with the path's interpolation rule."""
    tri = path.triple
    diff = path.coords_at(t) - path.coords_at(s)
    return tri.coords_opnorm(diff, 1.0, -gamma)


def difference_bound(path, gamma=0.0):
    """``sup_{t,s} ||A(t) - A(s)||_{L(V, V'_gamma)}``.

    Exact for both interpolation rules: the norm is convex along cells of a
    piecewise-linear path, so its maximum sits on grid pairs.
    """
    return path.differences(gamma).max_pair()


def verify_hypotheses(path, nu=None):
    """Tightest boundedness/coercivity constants over the sample grid.

    Returns :class:`HypothesisConstants` with ``M = max_k ||A_k||_{L(V,V')}``,
    ``delta = min_k`` of the coercivity eigenvalue for the shift ``nu``
    (defaults to ``path.nu``) and ``nu_threshold``, the infimum of shifts
    giving ``delta > 0``.  For piecewise-linear paths both extrema are
    attained on the grid.
    """
    tri = path.triple
    nu = path.nu if nu is None else float(nu)
    w = tri.weights(-1.0)
    S = path.coord_forms * w[:, None] * w[None, :]
    M = float(np.max(spectral_norm(S)))
    sym = 0.5 * (path.coord_forms + np.conj(np.swapaxes(path.coord_forms, -1, -2)))
    h_coerc = np.linalg.eigvalsh(sym)[:, 0]
    nu_threshold = float(-h_coerc.min()) + 0.0
    if not np.isfinite(nu_threshold):
        raise HypothesisError("no finite shift makes the forms coercive")
    Ssym = 0.5 * (S + np.conj(np.swapaxes(S, -1, -2))) + nu * np.diag(1.0 / tri.eigvals)
    delta = float(np.linalg.eigvalsh(Ssym)[:, 0].min())
    M_gamma = None
    if path.gamma < 1.0:
        M_gamma = difference_bound(path, path.gamma)
    return HypothesisConstants(M=M, delta=delta, nu=nu, nu_threshold=nu_threshold,
                               gamma=path.gamma, M_gamma=M_gamma)


# ---------------------------------------------------------------------------
# one-dimensional kernel integrals (certificates)
# ---------------------------------------------------------------------------

def _power_integral(x0, x1, e):
    """int_{x0}^{x1} x^(e-1) dx, vectorised, with the logarithmic case."""
    if abs(e) < 1e-14:
        return np.log(x1 / x0)
    return (x1 ** e - x0 ** e) / e


def _far_cell(dnear, dfar, x0, x1, p):
    """int_{x0}^{x1} l(x)^2 x^(-p) dx for l linear from dnear (x0) to dfar (x1)."""
    q = (dfar - dnear) / (x1 - x0)
    c0 = dnear - q * x0
    return (c0 * c0 * _power_integral(x0, x1, 1.0 - p)
            + 2.0 * c0 * q * _power_integral(x0, x1, 2.0 - p)
            + q * q * _power_integral(x0, x1, 3.0 - p))


def _near_cell(djump, h, p):
    """Cell adjacent to the evaluation node: exact slope^2 int_0^h x^(2-p) dx."""
    return djump ** 2 * h ** (1.0 - p) / (3.0 - p)


def _node_certificates(path, p, gamma, one_sided=False):
    """For every node t_k: int over the path interval of d(t_k, s)^2 |t_k - s|^-p.

    With ``one_sided`` only ``s >= t_k`` contributes (the L-boundedness
    condition).  Piecewise-linear paths only.
    """
    grid = path.grid
    T = path.differences(gamma).table()
    m = len(grid) - 1
    h = np.diff(grid)
    jump = T[np.arange(m), np.arange(1, m + 1)]
    k = np.arange(m + 1)[:, None]
    j = np.arange(m)[None, :]
    dist_left = np.abs(grid[:, None] - grid[None, :-1])
    dist_right = np.abs(grid[:, None] - grid[None, 1:])
    right = j >= k
    x0 = np.where(right, dist_left, dist_right)
    x1 = np.where(right, dist_right, dist_left)
    dnear = np.where(right, T[:, :-1], T[:, 1:])
    dfar = np.where(right, T[:, 1:], T[:, :-1])
    adjacent = (j == k) | (j == k - 1)
    far = ~adjacent
    contrib = np.zeros((m + 1, m))
    with np.errstate(divide="ignore", invalid="ignore"):
        contrib[far] = _far_cell(dnear[far], dfar[far], x0[far], x1[far], p)
    near = np.broadcast_to(_near_cell(jump, h, p)[None, :], (m + 1, m))
    contrib[adjacent] = near[adjacent]
    if one_sided:
        contrib[~right] = 0.0
    return contrib.sum(axis=1)


def _has_interior_jump(path, gamma=1.0):
    if path.K < 2:
        return False
    d = path.differences(gamma)
    idx = np.arange(1, path.K)
    jumps = d.pairs(idx - 1, idx)
    scale = max(float(np.max(np.abs(path.coord_forms))), 1e-300)
    return bool(np.any(jumps > _JUMP_RTOL * scale))


def subdivision_certificate(path, a=None, b=None, refine=1, gamma=1.0):
    """``sup_t int_a^b ||A(t) - A(s)||^2 / |t - s| ds`` over the nodes in [a, b].

    ``refine`` inserts extra nodes, refining both the evaluation points and
    the quadrature.  For piecewise-linear paths the value is an upper bound
    of the exact integral at every evaluation node and does not increase
    under refinement at fixed nodes.  Piecewise-constant paths give 0 when
    the path is constant on (a, b) and ``inf`` otherwise.
    """
    a = path.start if a is None else a
    b = path.tau if b is None else b
    sub = path.restrict(a, b)
    if sub.interp == "constant":
        return np.inf if _has_interior_jump(sub, gamma) else 0.0
    sub = sub.refine(refine)
    return float(_node_certificates(sub, 1.0, gamma).max())


def forward_difference_certificate(path, gamma=1.0, refine=1):
    """``sup_s int_s^tau ||A(t) - A(s)||^2_{L(V,V'_gamma)} / |t - s|^gamma dt``."""
    if not 0.0 < gamma <= 1.0:
        raise ValueError("gamma must lie in (0, 1]")
    if path.interp == "constant":
        if gamma < 1.0:
            sub = path.refine(refine)
            return _constant_forward(sub, gamma)
        return np.inf if _has_interior_jump(path, gamma) else 0.0
    sub = path.refine(refine)
    return float(_node_certificates(sub, gamma, gamma, one_sided=True).max())


def _constant_forward(path, gamma):
    # Cell values are constant; the kernel integral is exact.
    m = path.K
    d = path.differences(gamma)
    T = d.table(np.arange(m))
    grid = path.grid
    best = 0.0
    for k in range(m):
        x0 = grid[k + 1:m] - grid[k]
        x1 = grid[k + 2:m + 1] - grid[k]
        val = T[k, k + 1:m] ** 2 * _power_integral(x0, x1, 1.0 - gamma)
        best = max(best, float(val.sum()))
    return best


# ---------------------------------------------------------------------------
# fractional Sobolev seminorm
# ---------------------------------------------------------------------------

_GL_ORDER = 8


def _pair_weights_far(hi, hj, gap, beta, q=_GL_ORDER):
    """4x4 matrix int int w_c w_c' (t - s)^-beta for cells separated by gap > 0."""
    x, wx = roots_legendre(q)
    x = 0.5 * (x + 1.0)
    wx = 0.5 * wx
    X, Y = np.meshgrid(x, x, indexing="ij")
    W2 = np.outer(wx, wx)
    bil = np.stack([(1 - X) * (1 - Y), X * (1 - Y), (1 - X) * Y, X * Y])
    # t = t_i + hi*x ; s = s_j + hj*y ; t - s = gap + hi*x + hj*(1 - y)
    ker = (gap + hi * X + hj * (1.0 - Y)) ** (-beta) * W2 * hi * hj
    return np.einsum("aij,bij,ij->ab", bil, bil, ker)


def _pair_weights_adjacent(hi, hj, beta, q=_GL_ORDER):
    """Same for cells sharing the corner t_i = s_{j+1}; that corner carries d = 0."""
    b = 3.0 - beta
    xu, wu = roots_jacobi(q, 0.0, b)
    u = 0.5 * (xu + 1.0)
    wu = wu / 2.0 ** (b + 1.0)
    xv, wv = roots_legendre(q)
    v = 0.5 * (xv + 1.0)
    wv = 0.5 * wv
    U, Vv = np.meshgrid(u, v, indexing="ij")
    W2 = np.outer(wu, wv)
    # corners ordered (t_i,s_j), (t_i+1,s_j), (t_i,s_j+1), (t_i+1,s_j+1);
    # with p = x, q = 1 - y the third corner is the singular one.
    out = np.zeros((4, 4))
    # triangle q <= p : p = u, q = u v
    w1 = np.stack([(1 - U) * Vv, U * Vv, np.zeros_like(U), 1 - U * Vv])
    k1 = (hi + hj * Vv) ** (-beta) * W2
    out += np.einsum("aij,bij,ij->ab", w1, w1, k1)
    # triangle p <= q : q = u, p = u v
    w2 = np.stack([1 - U * Vv, U * Vv, np.zeros_like(U), Vv * (1 - U)])
    k2 = (hi * Vv + hj) ** (-beta) * W2
    out += np.einsum("aij,bij,ij->ab", w2, w2, k2)
    return out * hi * hj


def _kernel_box(g, hi, hj, beta):
    """int_0^hi int_0^hj (g + x + y)^-beta dy dx (exact)."""
    def G(z):
        z = np.asarray(z, dtype=float)
        if abs(beta - 2.0) < 1e-14:
            with np.errstate(divide="ignore"):
                return -np.log(z)
        with np.errstate(divide="ignore"):
            return z ** (2.0 - beta) / ((1.0 - beta) * (2.0 - beta))
    val = G(g + hi + hj) - G(g + hi) - G(g + hj) + G(g)
    return val


def sobolev_seminorm(path, alpha, gamma=1.0, interval=None):
    """Homogeneous seminorm ``||A||_{H^alpha(I; L(V, V'_gamma))}`` on ``interval``.

    The double integral of ``||A(t) - A(s)||^2 / |t - s|^(2 alpha + 1)`` is
    split over pairs of grid cells.  Diagonal cells of a piecewise-linear
    path are integrated exactly from the cell slope; off-diagonal cells use
    the bilinear interpolant of the grid-pair norms, which bounds the
    integrand from above, against the exact singular kernel (Duffy
    transform with Gauss-Jacobi where two cells touch).
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if interval is not None:
        path = path.restrict(*interval)
    beta = 2.0 * alpha + 1.0
    grid = path.grid
    h = np.diff(grid)
    m = len(h)
    d = path.differences(gamma)
    if path.interp == "constant":
        T = d.table(np.arange(m))
        i, j = np.tril_indices(m, -1)
        gap = grid[i] - grid[j + 1]
        vals = T[i, j] ** 2
        nz = vals > 0
        total = 0.0
        if np.any(nz):
            with np.errstate(invalid="ignore"):
                box = _kernel_box(gap[nz], h[i[nz]], h[j[nz]], beta)
            if not np.all(np.isfinite(box)):
                return np.inf
            total = 2.0 * float(np.sum(vals[nz] * box))
        return float(np.sqrt(max(total, 0.0)))

    T = d.table()
    jump = T[np.arange(m), np.arange(1, m + 1)]
    p = 1.0 - 2.0 * alpha
    diag = np.sum(jump ** 2 * h ** p * 2.0 / ((p + 1.0) * (p + 2.0)))

    i, j = np.tril_indices(m, -1)
    gap = grid[i] - grid[j + 1]
    scale = max(h.max(), 1e-300)
    key = np.round(np.stack([h[i], h[j], gap]) / scale * 1e9).astype(np.int64)
    uniq, inv = np.unique(key, axis=1, return_inverse=True)
    inv = inv.ravel()
    Wk = np.empty((uniq.shape[1], 4, 4))
    for u in range(uniq.shape[1]):
        first = np.argmax(inv == u)
        hi, hj, g = h[i[first]], h[j[first]], gap[first]
        if g <= 1e-12 * scale:
            Wk[u] = _pair_weights_adjacent(hi, hj, beta)
        else:
            Wk[u] = _pair_weights_far(hi, hj, g, beta)
    corners = np.stack([T[i, j], T[i + 1, j], T[i, j + 1], T[i + 1, j + 1]], axis=1)
    off = np.einsum("pa,pab,pb->", corners, Wk[inv], corners)
    return float(np.sqrt(max(diag + 2.0 * off, 0.0)))


# ---------------------------------------------------------------------------
# subdivision
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Subdivision:
    breakpoints: np.ndarray
    certificates: np.ndarray
    eps: float

    @property
    def intervals(self):
        b = self.breakpoints
        return list(zip(b[:-1], b[1:]))

    def __len__(self):
        return len(self.breakpoints) - 1


def subdivide(path, eps, breakpoints=None, safety=0.8, min_cells=2):
    """Greedy left-to-right partition certifying the difference-integral condition.

    An interval starting at a node grows one cell at a time while its
    certificate stays below ``safety * eps``.  ``breakpoints`` are forced
    (user-declared discontinuities).  Raises :class:`PathTooRough` when a
    single cell already exceeds the target, or (piecewise-constant paths)
    when consecutive jumps are closer than ``min_cells`` cells.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    forced = set()
    if breakpoints is not None:
        for bp in breakpoints:
            if not path.start < bp < path.tau:
                raise ValueError(f"breakpoint {bp} outside the open path interval")
            forced.add(float(bp))
    if forced:
        extra = np.array(sorted(forced - set(path.grid.tolist())))
        if extra.size:
            grid = np.union1d(path.grid, extra)
            forms = path.form_at(grid)
            path = path._rebuild(grid, forms)
    forced_idx = {int(np.argmin(np.abs(path.grid - bp))) for bp in forced}
    target = safety * eps
    if path.interp == "constant":
        bps, certs = _subdivide_constant(path, forced_idx, min_cells)
    else:
        bps, certs = _subdivide_linear(path, target, forced_idx)
    return Subdivision(breakpoints=path.grid[bps], certificates=np.array(certs), eps=float(eps))


def _subdivide_constant(path, forced_idx, min_cells):
    K = path.K
    d = path.differences(1.0)
    idx = np.arange(1, K)
    jumps = d.pairs(idx - 1, idx) if K > 1 else np.zeros(0)
    scale = max(float(np.max(np.abs(path.coord_forms))), 1e-300)
    jump_nodes = set((idx[jumps > _JUMP_RTOL * scale]).tolist()) | forced_idx
    bps = [0]
    for k in sorted(jump_nodes):
        if k - bps[-1] < min_cells and k not in forced_idx:
            raise PathTooRough(
                f"path too rough at resolution: jumps at t={path.grid[bps[-1]]:.6g} "
                f"and t={path.grid[k]:.6g} are {k - bps[-1]} cell(s) apart "
                f"(minimum {min_cells})")
        bps.append(k)
    if K - bps[-1] < min_cells and bps[-1] != 0 and bps[-1] not in forced_idx:
        raise PathTooRough(
            f"path too rough at resolution: jump at t={path.grid[bps[-1]]:.6g} "
            f"within {min_cells} cells of the end")
    bps.append(K)
    return bps, [0.0] * (len(bps) - 1)


def _subdivide_linear(path, target, forced_idx):
    grid = path.grid
    K = path.K
    d = path.differences(1.0)
    h = np.diff(grid)
    jump = d.pairs(np.arange(K), np.arange(1, K + 1))
    cell_cert = _near_cell(jump, h, 1.0)
    worst = int(np.argmax(cell_cert))
    if cell_cert[worst] >= target:
        raise PathTooRough(
            f"path too rough at resolution: cell [{grid[worst]:.6g}, {grid[worst + 1]:.6g}] "
            f"has certificate {cell_cert[worst]:.4g} >= {target:.4g}")
    bps = [0]
    certs = []
    a = 0
    while a < K:
        # interval [a, a+1]
        cert = np.array([cell_cert[a], cell_cert[a]])
        b = a + 1
        while b < K and b not in forced_idx:
            nodes = np.arange(a, b + 1)
            row = d.pairs(nodes, np.full_like(nodes, b + 1))
            # new cell [b, b+1] seen from existing nodes
            add = np.empty(len(nodes))
            add[-1] = cell_cert[b]
            if len(nodes) > 1:
                k = nodes[:-1]
                x0 = grid[b] - grid[k]
                x1 = grid[b + 1] - grid[k]
                add[:-1] = _far_cell(d.pairs(k, np.full_like(k, b)), row[:-1], x0, x1, 1.0)
            # new node b+1 seeing cells [a..b]
            new = cell_cert[b]
            if b > a:
                j = np.arange(a, b)
                x0 = grid[b + 1] - grid[j + 1]
                x1 = grid[b + 1] - grid[j]
                new += float(np.sum(_far_cell(row[1:b - a + 1], row[:b - a], x0, x1, 1.0)))
            cand = np.append(cert + add, new)
            if cand.max() >= target:
                break
            cert = cand
            b += 1
        bps.append(b)
        certs.append(float(cert.max()))
        a = b
    return bps, certs
