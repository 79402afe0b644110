"""Frozen-coefficient Duhamel solver for ``u' + A(t) u = f``, ``u(a) = u_a``.

On an interval ``[a, b]`` the solution satisfies, at every ``t``::

    u(t) = e^{-(t-a)A(t)} u_a
         + int_a^t e^{-(t-s)A(t)} (A(t) - A(s)) u(s) ds
         + int_a^t e^{-(t-s)A(t)} f(s) ds
         = R0 u_a + S0 u + L0 f.

The Volterra integrals are evaluated cell by cell with the exponential
integrator: the data are linear in ``s`` on each cell (with one-sided
values at jumps) and the kernel is integrated exactly through the
functions ``phi1(z) = (e^z - 1)/z`` and ``phi2(z) = (e^z - 1 - z)/z^2``.

:func:`solve_neumann` iterates ``u <- R0 u_a + S0 u + L0 f`` on each interval
of a certified subdivision and glues the pieces.  :func:`solve_contraction_gamma0`
freezes ``A`` at the left end of short subintervals and iterates on the
remainder.  :func:`solve_reference` is an implicit Euler/Crank-Nicolson
stepper on the nodal forms, independent of everything above.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .formpath import (PathTooRough, difference_bound, subdivide, subdivision_certificate,
                       verify_hypotheses)

__all__ = [
    "SolveConfig",
    "SolverDidNotConverge",
    "SolverRejected",
    "Trajectory",
    "apply_L",
    "apply_L0",
    "apply_R",
    "apply_R0",
    "apply_S",
    "apply_S0",
    "as_forcing",
    "duhamel_residual",
    "nu_shift",
    "nu_unshift",
    "phi12",
    "phis",
    "refine_grid",
    "s0_operator_norm_estimate",
    "solve_contraction_gamma0",
    "solve_neumann",
    "solve_reference",
    "solve_shifted",
    "solver_grid",
]


class SolverRejected(RuntimeError):
    """The method does not apply to this problem (e.g. path too rough)."""


class SolverDidNotConverge(RuntimeError):
    """Fixed-point iteration hit the iteration cap."""


@dataclass
class SolveConfig:
    dt: float = 1.0 / 128
    tol: float = 1e-10
    max_iter: int = 200
    eps: float = 0.25
    safety: float = 0.8
    eps_retries: int = 5
    probes: int = 4
    seed: int = 0
    route: str = "auto"

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.route not in ("auto", "eigen", "matrix"):
            raise ValueError(f"unknown route {self.route!r}")


# ---------------------------------------------------------------------------
# data handling
# ---------------------------------------------------------------------------

def as_forcing(f, triple):
    """Normalise right-hand side data to ``F(ts) -> coords (len(ts), n)``.

    Accepts ``None`` (zero), a constant nodal vector, a callable
    ``t -> nodal vector``, or a pair ``(grid, values)`` interpolated linearly.
    """
    n = triple.n
    if f is None:
        return lambda ts: np.zeros((len(np.atleast_1d(ts)), n))
    if callable(f):
        def F(ts):
            ts = np.atleast_1d(ts)
            vals = np.array([np.broadcast_to(np.asarray(f(t)), (n,)) for t in ts])
            return triple.to_coords(vals)
        return F
    if isinstance(f, tuple) and len(f) == 2:
        g, vals = np.asarray(f[0], dtype=float), np.asarray(f[1])
        if vals.shape != (len(g), n):
            raise ValueError(f"sampled forcing must have shape ({len(g)}, {n})")
        coords = triple.to_coords(vals)

        def F(ts):
            ts = np.atleast_1d(ts)
            return np.stack([np.interp(ts, g, coords[:, i].real) for i in range(n)], axis=1) \
                if not np.iscomplexobj(coords) else np.stack(
                    [np.interp(ts, g, coords[:, i].real) + 1j * np.interp(ts, g, coords[:, i].imag)
                     for i in range(n)], axis=1)
        return F
    vec = np.asarray(f)
    if vec.shape == (n,) or vec.shape == ():
        c = triple.to_coords(np.broadcast_to(vec, (n,)))
        return lambda ts: np.tile(c, (len(np.atleast_1d(ts)), 1))
    raise ValueError("unsupported forcing specification")


def phis(z):
    """``phi1, phi2, phi3`` elementwise, with a Taylor series near ``z = 0``.

    ``phi_k(z) = int_0^1 e^{(1-s)z} s^{k-1}/(k-1)! ds``.
    """
    z = np.asarray(z)
    small = np.abs(z) < 0.5
    zs = np.where(small, z, 0.0)
    dtype = np.result_type(z, float)
    p = [np.zeros_like(zs, dtype=dtype) for _ in range(3)]
    term = np.ones_like(zs, dtype=dtype)
    for k in range(24):
        for i in range(3):
            p[i] = p[i] + term / math.factorial(k + i + 1)
        term = term * zs
    zl = np.where(small, 1.0, z)
    p1 = np.expm1(zl) / zl
    p2 = (p1 - 1.0) / zl
    p3 = (p2 - 0.5) / zl
    return tuple(np.where(small, ps, pl) for ps, pl in zip(p, (p1, p2, p3)))


def phi12(z):
    """``phi1(z)``, ``phi2(z)`` elementwise."""
    return phis(z)[:2]


# Integrals over a cell of e^{-(t_k-s)A} times the shape function, in units of
# h e^{-(t_k-s_{j+1})A}: L = 1-theta, R = theta (theta the cell coordinate),
# LL = (1-theta)^2, LR = theta (1-theta), RR = theta^2.
def _cell_weights(p1, p2, p3):
    return {"L": p1 - p2, "R": p2, "LL": p1 - 2 * p2 + 2 * p3,
            "LR": p2 - 2 * p3, "RR": 2 * p3}


def solver_grid(start, end, dt, mandatory=()):
    """Grid on ``[start, end]`` containing ``mandatory`` nodes, uniform between them."""
    nodes = sorted({float(start), float(end)} | {float(x) for x in mandatory
                                                  if start < x < end})
    pieces = []
    for a, b in zip(nodes[:-1], nodes[1:]):
        m = max(1, int(math.ceil((b - a) / dt - 1e-9)))
        pieces.append(np.linspace(a, b, m + 1)[:-1])
    pieces.append([nodes[-1]])
    return np.concatenate(pieces)


def refine_grid(grid, factor):
    """Split every cell of ``grid`` into ``factor`` equal parts."""
    grid = np.asarray(grid, dtype=float)
    frac = np.arange(factor) / factor
    inner = grid[:-1, None] + frac[None, :] * np.diff(grid)[:, None]
    return np.concatenate([inner.ravel(), grid[-1:]])


def _jump_nodes(path):
    if path.interp != "constant":
        return []
    d = path.coord_forms
    scale = max(np.max(np.abs(d)), 1e-300)
    jumps = np.max(np.abs(np.diff(d, axis=0)), axis=(1, 2)) > 1e-12 * scale
    return [float(path.grid[k + 1]) for k in np.nonzero(jumps)[0] if k + 1 < path.K]


# ---------------------------------------------------------------------------
# trajectory
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class Trajectory:
    """Solution samples on a time grid, stored in H-orthonormal coordinates.

    ``au_plus[k]``/``au_minus[k]`` hold ``A(t_k^+)u(t_k)`` and
    ``A(t_k^-)u(t_k)``; the two differ only at jumps of the path.
    """

    triple: object
    grid: np.ndarray
    coords: np.ndarray
    f_coords: np.ndarray
    au_plus: np.ndarray
    au_minus: np.ndarray
    breakpoints: np.ndarray = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if not np.all(np.isfinite(self.coords)):
            raise FloatingPointError("trajectory contains non-finite values")
        if self.breakpoints is None:
            self.breakpoints = np.array([self.grid[0], self.grid[-1]])

    @property
    def values(self):
        """Nodal H-vectors ``u(t_k)``, shape ``(K+1, n)``."""
        return self.triple.from_coords(self.coords)

    @property
    def derivative_values(self):
        """``u'(t_k^+) = f(t_k) - A(t_k^+) u(t_k)`` (nodal)."""
        return self.triple.from_coords(self.f_coords - self.au_plus)

    def at(self, t):
        """Linear interpolation of the coordinates at times ``t``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        cols = [np.interp(t, self.grid, self.coords[:, i].real) for i in range(self.coords.shape[1])]
        out = np.stack(cols, axis=1)
        if np.iscomplexobj(self.coords):
            out = out + 1j * np.stack([np.interp(t, self.grid, self.coords[:, i].imag)
                                       for i in range(self.coords.shape[1])], axis=1)
        return out

    def value_at(self, t):
        return self.triple.from_coords(self.at(t))[0]

    # -- norms ---------------------------------------------------------------
    def _sq(self, c, sigma=0.0):
        return np.sum(np.abs(c * self.triple.weights(sigma)) ** 2, axis=-1)

    def _cellwise(self, left, right):
        h = np.diff(self.grid)
        return float(np.sum(0.5 * h * (left + right)))

    def _l2(self, left, right, sigma=0.0):
        """L2 norm from per-cell endpoint coordinates.

        A coordinate keeping its phase across a cell is integrated as an
        exponential (logarithmic mean of the endpoint squares), which stays
        accurate for stiff modes decaying within one step; otherwise the
        trapezoid rule is used.
        """
        w = self.triple.weights(sigma)
        a, b = left * w, right * w
        qa, qb = np.abs(a) ** 2, np.abs(b) ** 2
        trap = 0.5 * (qa + qb)
        same = np.real(a * np.conj(b)) > 0.999 * np.sqrt(qa * qb)
        with np.errstate(divide="ignore", invalid="ignore"):
            lr = np.log(qb / qa)
            logmean = np.where(np.abs(lr) > 1e-6, (qb - qa) / lr, trap)
        cell = np.where(same & (qa > 0) & (qb > 0), logmean, trap)
        h = np.diff(self.grid)
        return math.sqrt(float(np.sum(h[:, None] * cell)))

    def norm_l2h(self):
        return self._l2(self.coords[:-1], self.coords[1:])

    def norm_l2v(self):
        return self._l2(self.coords[:-1], self.coords[1:], 1.0)

    def norm_linfv(self):
        return float(np.sqrt(self._sq(self.coords, 1.0).max()))

    def norm_au_l2h(self):
        return self._l2(self.au_plus[:-1], self.au_minus[1:])

    def norm_du_l2h(self):
        dp = self.f_coords - self.au_plus
        dm = self.f_coords - self.au_minus
        return self._l2(dp[:-1], dm[1:])

    def norm_h1h(self):
        return math.sqrt(self.norm_l2h() ** 2 + self.norm_du_l2h() ** 2)

    def norm_e(self):
        """Norm of ``H^1(0,tau;H) cap L^inf(0,tau;V)``."""
        return self.norm_h1h() + self.norm_linfv()

    def norms(self):
        return {
            "L2H": self.norm_l2h(),
            "L2V": self.norm_l2v(),
            "LinfV": self.norm_linfv(),
            "H1H": self.norm_h1h(),
            "AuL2H": self.norm_au_l2h(),
            "duL2H": self.norm_du_l2h(),
        }

    def l2h_distance(self, other, relative=True):
        """L2(0,tau;H) distance to ``other`` evaluated on this grid."""
        diff = self.coords - other.at(self.grid)
        q = self._sq(diff)
        num = math.sqrt(self._cellwise(q[:-1], q[1:]))
        if not relative:
            return num
        den = self.norm_l2h()
        return num / den if den > 0 else num


def _make_trajectory(path, grid, coords, F, breakpoints=None, diagnostics=None):
    ap = np.einsum("kij,kj->ki", path.coords_at(grid, "right"), coords)
    am = np.einsum("kij,kj->ki", path.coords_at(grid, "left"), coords)
    return Trajectory(triple=path.triple, grid=grid, coords=coords, f_coords=F(grid),
                      au_plus=ap, au_minus=am, breakpoints=breakpoints,
                      diagnostics=diagnostics or {})


# ---------------------------------------------------------------------------
# Volterra kernels on one interval
# ---------------------------------------------------------------------------

class _Interval:
    """Frozen operators and one-sided path samples on an interval grid ``s``."""

    def __init__(self, engine, path, s, route="auto"):
        self.engine = engine
        self.path = path
        self.s = np.asarray(s, dtype=float)
        m = len(self.s) - 1
        self.m = m
        self.A_plus = path.coords_at(self.s, "right")
        self.A_minus = path.coords_at(self.s, "left")
        # node k > 0 freezes A at t_k^+ except the interval end (t_m^-).
        self.ops = [None]
        for k in range(1, m + 1):
            side = "left" if k == m else "right"
            self.ops.append(engine.frozen(path, self.s[k], side))
        self.route = route
        self._mat_cache = {}

    def _eig_ok(self, op):
        if self.route == "matrix":
            return False
        return op.eig() is not None

    def frozen_matrix(self, k):
        return self.ops[k].matrix

    def volterra(self, X, terms):
        """``out[k] = int_a^{t_k} e^{-(t_k-s)A_k} (A_k x(s) + y(s)) ds``.

        ``x`` is linear on each cell through the node rows of ``X`` (or
        ``None``).  ``y`` is a quadratic in the cell coordinate given by
        ``terms``: pairs ``(Y, shape)`` where ``Y[j]`` is a coefficient on
        cell ``j`` and ``shape`` a key of :func:`_cell_weights`.
        """
        m = self.m
        s = self.s
        h = np.diff(s)
        n = self.A_plus.shape[1]
        arrays = [X, self.A_plus] + [Y for Y, _ in terms]
        dtype = np.result_type(*(a for a in arrays if a is not None), float)
        out = np.zeros((m + 1, n), dtype=complex)
        for k in range(1, m + 1):
            op = self.ops[k]
            if not self._eig_ok(op):
                out[k] = self._volterra_matrix(k, X, terms)
                continue
            theta, W, Winv = op.eig()
            hk = h[:k]
            decay = hk * np.exp(-np.outer(theta, s[k] - s[1:k + 1]))
            w = _cell_weights(*phis(-np.outer(theta, hk)))
            acc = np.zeros((n, k), dtype=complex)
            if X is not None:
                xh = theta[:, None] * (Winv @ X[:k + 1].T)
                acc += w["L"] * xh[:, :k] + w["R"] * xh[:, 1:]
            for Y, shape in terms:
                acc += w[shape] * (Winv @ Y[:k].T)
            out[k] = W @ np.sum(decay * acc, axis=1)
        if not np.iscomplexobj(np.zeros(0, dtype=dtype)):
            out = out.real
        return out

    def _props(self, k, h):
        key = (k, float(h))
        val = self._mat_cache.get(key)
        if val is None:
            A = self.ops[k].matrix
            n = A.shape[0]
            hA = h * A
            E = linalg.expm(-hA)
            I = np.eye(n)
            P1 = linalg.solve(hA, I - E)
            P2 = linalg.solve(hA, I - P1)
            P3 = linalg.solve(hA, 0.5 * I - P2)
            w = {key_: h * mat for key_, mat in _cell_weights(P1, P2, P3).items()}
            val = (E, w)
            self._mat_cache[key] = val
        return val

    def _volterra_matrix(self, k, X, terms):
        A = self.ops[k].matrix
        n = A.shape[0]
        acc = np.zeros(n, dtype=complex)
        for j in range(k):
            E, w = self._props(k, self.s[j + 1] - self.s[j])
            cell = np.zeros(n, dtype=complex)
            if X is not None:
                cell += w["L"] @ (A @ X[j]) + w["R"] @ (A @ X[j + 1])
            for Y, shape in terms:
                cell += w[shape] @ Y[j]
            acc = E @ acc + cell
        return acc

    # -- the three Duhamel terms ---------------------------------------------
    def r0(self, c0):
        out = np.zeros((self.m + 1, len(c0)), dtype=np.result_type(c0, self.A_plus))
        out[0] = c0
        for k in range(1, self.m + 1):
            out[k] = self.engine.coords_semigroup(self.ops[k], self.s[k] - self.s[0], c0)
        return out

    def l0(self, Fs):
        """Data linear on each cell through the node values ``Fs``."""
        return self.volterra(None, [(Fs[:-1], "L"), (Fs[1:], "R")])

    def s0(self, C):
        """Both ``A(s)`` and ``u(s)`` linear on each cell; their product is integrated exactly."""
        Ap = self.A_plus[:-1]
        Am = self.A_minus[1:]
        c0, c1 = C[:-1], C[1:]
        terms = [(-np.einsum("kij,kj->ki", Ap, c0), "LL"),
                 (-(np.einsum("kij,kj->ki", Ap, c1) + np.einsum("kij,kj->ki", Am, c0)), "LR"),
                 (-np.einsum("kij,kj->ki", Am, c1), "RR")]
        return self.volterra(C, terms)

    def apply_A(self, V):
        """Frozen A(t_k) applied row-wise (row 0 uses A(s_0^+))."""
        out = np.empty_like(V, dtype=np.result_type(V, self.A_plus))
        out[0] = self.A_plus[0] @ V[0]
        for k in range(1, self.m + 1):
            out[k] = self.ops[k].matrix @ V[k]
        return out


def _linf_v(triple, C):
    return float(np.sqrt(np.max(np.sum(np.abs(C * triple.weights(1.0)) ** 2, axis=-1))))


# ---------------------------------------------------------------------------
# public single-time operators
# ---------------------------------------------------------------------------

def _default_side(path, t):
    return "left" if t >= path.tau else "right"


def _interval_grid(path, t, grid, origin):
    a = path.start if origin is None else float(origin)
    if grid is None:
        grid = solver_grid(a, t, (t - a) / 256 if t > a else 1.0)
    grid = np.asarray(grid, dtype=float)
    grid = grid[(grid >= a - 1e-14) & (grid <= t + 1e-14)]
    if len(grid) < 2 or abs(grid[0] - a) > 1e-12 or abs(grid[-1] - t) > 1e-12:
        raise ValueError("grid must contain the origin and t as nodes")
    return grid


def _single(engine, path, t, grid, origin, side):
    side = side or _default_side(path, t)
    iv = _Interval(engine, path, grid)
    iv.ops[-1] = engine.frozen(path, t, side)
    return iv


def apply_R0(engine, path, u0, t, origin=None, side=None):
    """``e^{-(t-a)A(t)} u0`` (nodal)."""
    a = path.start if origin is None else float(origin)
    side = side or _default_side(path, t)
    op = engine.frozen(path, t, side)
    c = engine.coords_semigroup(op, float(t) - a, path.triple.to_coords(np.asarray(u0)))
    return path.triple.from_coords(c)


def apply_R(engine, path, u0, t, origin=None, side=None):
    """``A(t) e^{-(t-a)A(t)} u0`` (nodal)."""
    side = side or _default_side(path, t)
    op = engine.frozen(path, t, side)
    a = path.start if origin is None else float(origin)
    c = engine.coords_semigroup(op, float(t) - a, path.triple.to_coords(np.asarray(u0)))
    return path.triple.from_coords(op.matrix @ c)


def _t_is_start(path, t, origin):
    a = path.start if origin is None else float(origin)
    return float(t) <= a


def apply_L0(engine, path, f, t, grid=None, origin=None, side=None):
    """``int_a^t e^{-(t-s)A(t)} f(s) ds`` with ``f`` linear between grid nodes."""
    if _t_is_start(path, t, origin):
        return np.zeros(path.n)
    grid = _interval_grid(path, float(t), grid, origin)
    iv = _single(engine, path, t, grid, origin, side)
    F = as_forcing(f, path.triple)(grid)
    out = iv.l0(F)[-1]
    return path.triple.from_coords(out)


def apply_L(engine, path, f, t, grid=None, origin=None, side=None):
    """``A(t)`` applied to :func:`apply_L0`."""
    if _t_is_start(path, t, origin):
        return np.zeros(path.n)
    grid = _interval_grid(path, float(t), grid, origin)
    iv = _single(engine, path, t, grid, origin, side)
    F = as_forcing(f, path.triple)(grid)
    out = iv.ops[-1].matrix @ iv.l0(F)[-1]
    return path.triple.from_coords(out)


def _trajectory_coords(path, u, grid):
    if isinstance(u, Trajectory):
        return u.at(grid)
    return as_forcing(u, path.triple)(grid)


def apply_S0(engine, path, u, t, grid=None, origin=None, side=None):
    """``int_a^t e^{-(t-s)A(t)} (A(t) - A(s)) u(s) ds``.

    ``u`` is a :class:`Trajectory` (its grid is used by default) or any
    forcing-style specification.
    """
    if _t_is_start(path, t, origin):
        return np.zeros(path.n)
    if grid is None and isinstance(u, Trajectory):
        grid = u.grid
    grid = _interval_grid(path, float(t), grid, origin)
    iv = _single(engine, path, t, grid, origin, side)
    C = _trajectory_coords(path, u, grid)
    return path.triple.from_coords(iv.s0(C)[-1])


def apply_S(engine, path, u, t, grid=None, origin=None, side=None):
    """``A(t)`` applied to :func:`apply_S0`."""
    if _t_is_start(path, t, origin):
        return np.zeros(path.n)
    if grid is None and isinstance(u, Trajectory):
        grid = u.grid
    grid = _interval_grid(path, float(t), grid, origin)
    iv = _single(engine, path, t, grid, origin, side)
    C = _trajectory_coords(path, u, grid)
    return path.triple.from_coords(iv.ops[-1].matrix @ iv.s0(C)[-1])


# ---------------------------------------------------------------------------
# nu-shift
# ---------------------------------------------------------------------------

def nu_shift(path, f=None, nu=None, direction="forward", trajectory=None):
    """Exponential shift ``v = e^{-nu t} u``.

    ``forward`` returns ``(shifted path, g)`` with forms ``a(t) + nu (.,.)_H``
    and ``g(t) = e^{-nu t} f(t)`` as a callable of nodal vectors.
    ``backward`` maps a solved ``trajectory`` of the shifted problem back to
    ``u = e^{nu t} v`` on the original path.
    """
    nu = path.nu if nu is None else float(nu)
    if direction == "forward":
        shifted = path.shifted(nu)
        if f is None:
            return shifted, None
        F = as_forcing(f, path.triple)
        tri = path.triple

        def g(t):
            return math.exp(-nu * t) * tri.from_coords(F(t)[0])
        return shifted, g
    if direction == "backward":
        if trajectory is None:
            raise ValueError("backward shift needs the shifted trajectory")
        return nu_unshift(trajectory, path, nu)
    raise ValueError(f"direction must be forward or backward, got {direction!r}")


def nu_unshift(traj, path, nu):
    """Map ``v`` solving the shifted problem to ``u = e^{nu t} v`` for ``path``."""
    scale = np.exp(nu * traj.grid)[:, None]
    coords = traj.coords * scale
    grid = traj.grid
    ap = np.einsum("kij,kj->ki", path.coords_at(grid, "right"), coords)
    am = np.einsum("kij,kj->ki", path.coords_at(grid, "left"), coords)
    # f = e^{nu t} g; the shifted data were g = e^{-nu t} f.
    f_coords = traj.f_coords * scale
    diag = dict(traj.diagnostics)
    diag["nu_shift"] = float(nu)
    return Trajectory(triple=traj.triple, grid=grid, coords=coords, f_coords=f_coords,
                      au_plus=ap, au_minus=am, breakpoints=traj.breakpoints,
                      diagnostics=diag)


def solve_shifted(solver, engine, path, u0, f=None, cfg=None, nu=None):
    """Solve a quasi-coercive problem through the shift round trip."""
    nu = path.nu if nu is None else float(nu)
    shifted, g = nu_shift(path, f, nu)
    if solver is solve_reference:
        v = solve_reference(shifted, u0, g, cfg.dt if cfg else 1.0 / 128)
    else:
        v = solver(engine, shifted, u0, g, cfg)
    return nu_unshift(v, path, nu)


# ---------------------------------------------------------------------------
# S0 norm estimates
# ---------------------------------------------------------------------------

def _probe_s0(iv, triple, probes, seed, power_steps=2):
    """Probe lower bound of ||S0||_{L(L^inf(grid; V))} on one interval."""
    n = triple.n
    m = iv.m
    wv = triple.weights(1.0)
    rng = np.random.default_rng(seed)
    candidates = []
    for k in sorted({0, n // 2, n - 1}):
        e = np.zeros(n)
        e[k] = 1.0 / wv[k]
        candidates.append(np.tile(e, (m + 1, 1)))
    for _ in range(max(probes - len(candidates), 1)):
        candidates.append(rng.standard_normal((m + 1, n)) / wv)
    best = 0.0
    for C in candidates:
        for _ in range(power_steps):
            nrm = _linf_v(triple, C)
            if nrm == 0:
                break
            C = C / nrm
            out = iv.s0(C)
            best = max(best, _linf_v(triple, out))
            C = out
    return best


def s0_operator_norm_estimate(engine, path, interval=None, dt=None, probes=4, seed=0):
    """Probe lower bound and constant-chain upper bound for ``||S0||`` on an interval.

    The upper bound is ``2 C_sg sqrt(Q*) / (C1 C1*) * sqrt(cert)`` maximised
    over the path samples in the interval, where ``C1``/``C1*`` are lower
    Kato constants of ``A(t)`` and ``A(t)*``, ``Q*`` the infinite-horizon
    quadratic-estimate constant of ``A(t)*``, ``C_sg`` the measured
    ``sup_r sqrt(r) ||A(t)*^{1/2} e^{-rA(t)*}||`` and ``cert`` the subdivision
    certificate of the interval.
    """
    from .estimates import quadratic_constant_exact, smoothing_constant

    a, b = (path.start, path.tau) if interval is None else (float(interval[0]), float(interval[1]))
    dt = (b - a) / 64 if dt is None else dt
    s = solver_grid(a, b, dt)
    iv = _Interval(engine, path, s)
    lower = _probe_s0(iv, path.triple, probes, seed)
    cert = subdivision_certificate(path, a, b)
    tri = path.triple
    w = tri.weights(-1.0)
    adj = path.adjoint()
    samples = np.unique(np.concatenate([[a, b], path.grid[(path.grid > a) & (path.grid < b)]]))
    if len(samples) > 33:
        samples = samples[np.linspace(0, len(samples) - 1, 33).round().astype(int)]
    factor = 0.0
    for t in samples:
        side = "left" if t >= b else "right"
        op = engine.frozen(path, t, side)
        opa = engine.frozen(adj, t, side)
        c1 = linalg.svdvals(engine.coords_power(op, 0.5, np.eye(tri.n)) * w)[-1]
        c1a = linalg.svdvals(engine.coords_power(opa, 0.5, np.eye(tri.n)) * w)[-1]
        q = quadratic_constant_exact(engine, opa, np.inf)
        csg = smoothing_constant(engine, opa)
        factor = max(factor, 2.0 * csg * math.sqrt(q) / (c1 * c1a))
    upper = factor * math.sqrt(cert) if np.isfinite(cert) else np.inf
    return {"lower": float(lower), "upper": float(upper), "certificate": float(cert),
            "factor": float(factor)}


# ---------------------------------------------------------------------------
# solvers
# ---------------------------------------------------------------------------

def _check_coercive(path):
    hyp = verify_hypotheses(path, nu=0.0)
    if hyp.delta <= 0:
        raise SolverRejected(
            f"forms are not coercive (delta = {hyp.delta:.3e}); apply nu_shift with "
            f"nu > {hyp.nu_threshold:.6g} first")
    return hyp


def _fixed_point(iv, c0, F, cfg, triple):
    base = iv.r0(c0) + iv.l0(F)
    u = base.copy()
    increments = []
    for it in range(1, cfg.max_iter + 1):
        new = base + iv.s0(u)
        inc = _linf_v(triple, new - u)
        increments.append(inc)
        u = new
        if inc < cfg.tol:
            return u, increments
    raise SolverDidNotConverge(
        f"fixed point did not converge in {cfg.max_iter} iterations "
        f"(last increment {increments[-1]:.3e})")


def _ratios(incs):
    return [incs[i + 1] / incs[i] for i in range(len(incs) - 1) if incs[i] > 0]


def solve_neumann(engine, path, u0, f=None, cfg=None, breakpoints=None):
    """Fixed-point solve ``u = R0 u_a + S0 u + L0 f`` on a certified subdivision."""
    cfg = cfg or SolveConfig()
    _check_coercive(path)
    tri = path.triple
    F = as_forcing(f, tri)
    eps = cfg.eps
    for attempt in range(cfg.eps_retries + 1):
        try:
            sub = subdivide(path, eps, breakpoints=breakpoints, safety=cfg.safety)
        except PathTooRough as exc:
            raise SolverRejected(f"solver rejects: path too rough ({exc})") from None
        bps = sub.breakpoints
        grid = solver_grid(path.start, path.tau, cfg.dt, bps[1:-1])
        idx = [int(np.argmin(np.abs(grid - b))) for b in bps]
        ivs = [_Interval(engine, path, grid[i0:i1 + 1], cfg.route)
               for i0, i1 in zip(idx[:-1], idx[1:])]
        probe = max(_probe_s0(iv, tri, cfg.probes, cfg.seed) for iv in ivs)
        if probe < 1.0:
            break
        eps /= 4.0
    else:
        raise SolverRejected(
            f"solver rejects: path too rough (probe ||S0|| = {probe:.3f} >= 1 "
            f"after {cfg.eps_retries} refinements of eps)")
    coords = np.zeros((len(grid), tri.n), dtype=complex)
    c = tri.to_coords(np.asarray(u0, dtype=np.result_type(u0, float)))
    increments, ratios, vnorms = [], [], []
    for (i0, i1), iv in zip(zip(idx[:-1], idx[1:]), ivs):
        Fs = F(iv.s)
        u, inc = _fixed_point(iv, c, Fs, cfg, tri)
        coords[i0:i1 + 1] = u
        c = u[-1]
        increments.append(inc)
        ratios.append(_ratios(inc))
        vnorms.append(float(np.linalg.norm(c * tri.weights(1.0))))
    if path.is_real and np.isrealobj(u0) and np.max(np.abs(coords.imag)) < 1e-12 * max(np.max(np.abs(coords)), 1e-300):
        coords = coords.real
    diag = {"method": "neumann", "eps": eps, "breakpoints": bps.tolist(),
            "certificates": sub.certificates.tolist(), "probe_s0": probe,
            "increments": increments, "ratios": ratios, "breakpoint_vnorms": vnorms,
            "iterations": [len(x) for x in increments]}
    return _make_trajectory(path, grid, coords, F, breakpoints=bps, diagnostics=diag)


def duhamel_residual(engine, path, traj, u0, f=None):
    """``max_k ||u_k - (R0 u_a + S0 u + L0 f)_k||_V`` over the trajectory's intervals."""
    tri = path.triple
    F = as_forcing(f, tri)
    grid = traj.grid
    bps = traj.breakpoints
    idx = [int(np.argmin(np.abs(grid - b))) for b in bps]
    worst = 0.0
    c = tri.to_coords(np.asarray(u0))
    for i0, i1 in zip(idx[:-1], idx[1:]):
        iv = _Interval(engine, path, grid[i0:i1 + 1])
        U = traj.coords[i0:i1 + 1]
        rhs = iv.r0(c) + iv.s0(U) + iv.l0(F(iv.s))
        worst = max(worst, _linf_v(tri, U - rhs))
        c = U[-1]
    return worst


class _FrozenPropagator:
    """Exponential integrator for ``w' + A w = g`` with one fixed matrix ``A``."""

    def __init__(self, engine, A, route="auto"):
        self.A = A
        op = engine.frozen_matrix(A)
        self.eig = None if route == "matrix" else op.eig()
        self._cache = {}

    def _weights(self, h):
        w = self._cache.get(h)
        if w is None:
            if self.eig is not None:
                theta = self.eig[0]
                cw = _cell_weights(*phis(-h * theta))
                w = (np.exp(-h * theta), {k: h * v for k, v in cw.items()})
            else:
                n = self.A.shape[0]
                hA = h * self.A
                I = np.eye(n)
                E = linalg.expm(-hA)
                P1 = linalg.solve(hA, I - E)
                P2 = linalg.solve(hA, I - P1)
                P3 = linalg.solve(hA, 0.5 * I - P2)
                w = (E, {k: h * v for k, v in _cell_weights(P1, P2, P3).items()})
            self._cache[h] = w
        return w

    def run(self, s, w0, terms):
        """Step through ``s``; ``terms`` as in :meth:`_Interval.volterra`."""
        m = len(s) - 1
        out = np.zeros((m + 1, len(w0)), dtype=complex)
        if self.eig is not None:
            theta, W, Winv = self.eig
            wh = Winv @ w0
            hat = [(Y @ Winv.T, shape) for Y, shape in terms]
            out[0] = wh
            for k in range(m):
                E, w = self._weights(float(s[k + 1] - s[k]))
                wh = E * wh
                for Y, shape in hat:
                    wh = wh + w[shape] * Y[k]
                out[k + 1] = wh
            return out @ W.T
        wv = w0.astype(complex)
        out[0] = wv
        for k in range(m):
            E, w = self._weights(float(s[k + 1] - s[k]))
            wv = E @ wv
            for Y, shape in terms:
                wv = wv + w[shape] @ Y[k]
            out[k + 1] = wv
        return out


def solve_contraction_gamma0(engine, path, u0, f=None, cfg=None, max_halvings=12,
                             ratio_limit=0.9, m0_limit=1e12):
    """Frozen-anchor contraction solve for paths with bounded V -> H differences.

    Each subinterval freezes ``A`` at its left end (right limit) and iterates
    ``v -> w`` where ``w' + A_a w = f - (A(t) - A_a) v``.  A subinterval is
    halved when the measured increment ratio exceeds ``ratio_limit``.
    """
    cfg = cfg or SolveConfig()
    _check_coercive(path)
    tri = path.triple
    M0 = difference_bound(path, 0.0)
    if not np.isfinite(M0) or M0 > m0_limit:
        raise SolverRejected(f"V -> H difference bound M0 = {M0:.3e} is not finite")
    F = as_forcing(f, tri)
    grid = solver_grid(path.start, path.tau, cfg.dt, _jump_nodes(path))
    K = len(grid) - 1
    Ap_all = path.coords_at(grid, "right")
    Am_all = path.coords_at(grid, "left")
    F_all = F(grid)
    coords = np.zeros((K + 1, tri.n), dtype=complex)
    c = tri.to_coords(np.asarray(u0, dtype=np.result_type(u0, float)))
    coords[0] = c
    start = 0
    seg_len = K
    segments, increments, ratios = [], [], []
    halvings = 0
    while start < K:
        end = min(K, start + seg_len)
        s = grid[start:end + 1]
        Aa = Ap_all[start]
        prop = _FrozenPropagator(engine, Aa, cfg.route)
        Bp = Ap_all[start:end + 1] - Aa
        Bm = Am_all[start:end + 1] - Aa
        Fs = F_all[start:end + 1]
        v = np.tile(c, (end - start + 1, 1)).astype(complex)
        incs = []
        ok = False
        for it in range(cfg.max_iter):
            terms = [(Fs[:-1], "L"), (Fs[1:], "R"),
                     (-np.einsum("kij,kj->ki", Bp[:-1], v[:-1]), "LL"),
                     (-(np.einsum("kij,kj->ki", Bp[:-1], v[1:])
                        + np.einsum("kij,kj->ki", Bm[1:], v[:-1])), "LR"),
                     (-np.einsum("kij,kj->ki", Bm[1:], v[1:]), "RR")]
            w = prop.run(s, c, terms)
            inc = _linf_v(tri, w - v)
            incs.append(inc)
            v = w
            if inc < cfg.tol:
                ok = True
                break
            if len(incs) >= 3 and incs[-1] > ratio_limit * incs[-2] and end - start > 1:
                break
        if not ok:
            if end - start > 1 and halvings < max_halvings:
                seg_len = max(1, (end - start) // 2)
                halvings += 1
                continue
            raise SolverDidNotConverge(
                f"contraction failed on [{grid[start]:.6g}, {grid[end]:.6g}] "
                f"(last increment {incs[-1]:.3e})")
        coords[start:end + 1] = v
        c = v[-1]
        segments.append((float(grid[start]), float(grid[end])))
        increments.append(incs)
        ratios.append(_ratios(incs))
        start = end
    if path.is_real and np.isrealobj(u0) and np.max(np.abs(coords.imag)) < 1e-12 * max(np.max(np.abs(coords)), 1e-300):
        coords = coords.real
    bps = np.array([segments[0][0]] + [b for _, b in segments])
    diag = {"method": "gamma0", "M0": float(M0), "segments": segments,
            "increments": increments, "ratios": ratios, "halvings": halvings,
            "iterations": [len(x) for x in increments]}
    return _make_trajectory(path, grid, coords, F, breakpoints=bps, diagnostics=diag)


def solve_reference(path, u0, f=None, dt=1.0 / 128, scheme="crank-nicolson", grid=None):
    """Implicit Euler or Crank-Nicolson on the nodal forms.

    Backward Euler: ``(M + dt F(t_{k+1}^-)) u_{k+1} = M u_k + dt M f_{k+1}``.
    Crank-Nicolson averages the forms at ``t_k^+`` and ``t_{k+1}^-``.
    An explicit ``grid`` overrides ``dt``; it should contain the jump nodes.
    """
    if grid is None and not dt > 0:
        raise ValueError("dt must be positive")
    if scheme in ("be", "backward-euler"):
        theta = 1.0
    elif scheme in ("cn", "crank-nicolson"):
        theta = 0.5
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    tri = path.triple
    M = tri.mass
    F = as_forcing(f, tri)
    if grid is None:
        grid = solver_grid(path.start, path.tau, dt, _jump_nodes(path))
    else:
        grid = np.asarray(grid, dtype=float)
        if np.any(np.diff(grid) <= 0):
            raise ValueError("reference grid must be strictly increasing")
    fn = tri.from_coords(F(grid))
    Fp = path.form_at(grid, "right")
    Fm = path.form_at(grid, "left")
    dtype = np.result_type(Fp, u0, fn, float)
    U = np.zeros((len(grid), tri.n), dtype=dtype)
    U[0] = u0
    for k in range(len(grid) - 1):
        h = grid[k + 1] - grid[k]
        lhs = M + theta * h * Fm[k + 1]
        rhs = M @ U[k] - (1 - theta) * h * (Fp[k] @ U[k]) \
            + h * (M @ (theta * fn[k + 1] + (1 - theta) * fn[k]))
        try:
            U[k + 1] = linalg.solve(lhs, rhs)
        except linalg.LinAlgError as exc:
            raise SolverRejected(f"singular step matrix at t = {grid[k + 1]:.6g}: {exc}") from None
    coords = tri.to_coords(U)
    return _make_trajectory(path, grid, coords, F,
                            diagnostics={"method": "reference", "scheme": scheme, "dt": dt})
