"""Model problems on [0, 1] with P1 finite elements, and coefficient paths.

Boundary conditions:

``dirichlet``
    ``n`` interior nodes, ``h = 1/(n+1)``, V = H^1_0.
``neumann`` / ``robin``
    ``n`` nodes including both ends, ``h = 1/(n-1)``, V = H^1.

In every case ``M_H`` is the mass matrix and ``G_V = mass + stiffness``.
Coefficients are constant per element (midpoint rule), either uniform in
space (one column) or given per element.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .formpath import FormPath, difference_bound
from .gelfand import make_triple

__all__ = [
    "CoefficientPath",
    "Fem1D",
    "ParseError",
    "Problem",
    "assemble_elliptic",
    "assemble_lower_order",
    "assemble_robin",
    "assemble_scalar",
    "export_path",
    "generate_path",
    "ingest",
    "load_problem",
    "robin_diff_norm",
]

ROBIN_GAMMA = 0.6


class ParseError(ValueError):
    """Malformed coefficient or problem file."""


# ---------------------------------------------------------------------------
# finite elements
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Fem1D:
    nodes: int
    bc: str = "dirichlet"

    def __post_init__(self):
        bc = self.bc.lower()
        if bc not in ("dirichlet", "neumann", "robin"):
            raise ValueError(f"unknown boundary condition {self.bc!r}")
        object.__setattr__(self, "bc", bc)
        if self.nodes < (1 if bc == "dirichlet" else 2):
            raise ValueError("too few nodes")

    @property
    def n_elements(self):
        return self.nodes + 1 if self.bc == "dirichlet" else self.nodes - 1

    @property
    def h(self):
        return 1.0 / self.n_elements

    @property
    def midpoints(self):
        return (np.arange(self.n_elements) + 0.5) * self.h

    def _assemble(self, local, coef=None):
        E = self.n_elements
        coef = np.ones(E) if coef is None else np.broadcast_to(np.asarray(coef, dtype=float), (E,))
        full = np.zeros((E + 1, E + 1))
        for e in range(E):
            full[e:e + 2, e:e + 2] += coef[e] * local
        if self.bc == "dirichlet":
            return full[1:-1, 1:-1]
        return full

    def mass(self, coef=None):
        h = self.h
        return self._assemble(h / 6.0 * np.array([[2.0, 1.0], [1.0, 2.0]]), coef)

    def stiffness(self, coef=None):
        h = self.h
        return self._assemble(np.array([[1.0, -1.0], [-1.0, 1.0]]) / h, coef)

    def convection(self, coef=None):
        """Matrix of ``int b u' v`` (row = test function)."""
        return self._assemble(0.5 * np.array([[-1.0, 1.0], [-1.0, 1.0]]), coef)

    def boundary(self):
        """``u(0) v(0) + u(1) v(1)``; zero for Dirichlet."""
        B = np.zeros((self.nodes, self.nodes))
        if self.bc != "dirichlet":
            B[0, 0] = B[-1, -1] = 1.0
        return B

    def triple(self):
        M = self.mass()
        return make_triple(M, M + self.stiffness())


# ---------------------------------------------------------------------------
# coefficient paths
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class CoefficientPath:
    """Samples ``c(t_k)`` (one column) or ``c(t_k, x_e)`` (one column per element)."""

    kind: str
    grid: np.ndarray
    values: np.ndarray
    params: dict = field(default_factory=dict)
    interp: str = "linear"

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.shape[0] != len(self.grid):
            raise ValueError("grid and values disagree in length")
        if len(self.grid) < 2 or np.any(np.diff(self.grid) <= 0):
            raise ValueError("time grid must be strictly increasing with >= 2 samples")
        if not np.all(np.isfinite(v)):
            raise ValueError("coefficient samples contain NaN or Inf")
        self.values = v

    @property
    def window(self):
        return float(self.values.min()), float(self.values.max())

    @property
    def tau(self):
        return float(self.grid[-1])

    def check_window(self, lo=None, hi=None):
        wlo, whi = self.window
        if lo is not None and wlo < lo:
            raise ValueError(f"coefficient {wlo:.6g} below the window minimum {lo:.6g}")
        if hi is not None and whi > hi:
            raise ValueError(f"coefficient {whi:.6g} above the window maximum {hi:.6g}")

    def element_values(self, n_elements):
        if self.values.shape[1] == 1:
            return np.repeat(self.values, n_elements, axis=1)
        if self.values.shape[1] != n_elements:
            raise ValueError(f"path has {self.values.shape[1]} element columns, mesh has {n_elements}")
        return self.values


def _fourier_profile(t, tau, alpha, modes, seed):
    rng = np.random.default_rng(seed)
    xi = rng.choice([-1.0, 1.0], size=modes)
    k = np.arange(1, modes + 1)
    amp = k ** (-(0.5 + alpha)) * xi
    S = np.cos(np.pi * np.outer(t, k) / tau) @ amp
    return S / np.max(np.abs(S))


def generate_path(kind, params=None, grid=None, seed=0):
    """Coefficient path of a prescribed time-regularity class.

    Kinds and parameters (defaults in brackets):

    ``constant``       value [1]
    ``affine``         c0 [1], c1 [1]:  c0 + c1 t
    ``holder``         mid [1], amp [0.5], alpha [0.75]:  mid + amp |sin(2 pi t / tau)|^alpha
    ``fourier_h``      mid [1], amp [0.5], alpha [0.5], modes [256]: normalised
                       cosine series with decay k^-(1/2 + alpha) and seeded signs
    ``piecewise_jump`` values [[1, 2]], breakpoints [[tau/2]]
    ``random``         low [0.5], high [1.5]: independent value per grid cell

    ``window = [lo, hi]`` in ``params`` is enforced.  The last two kinds use
    piecewise-constant interpolation.
    """
    params = dict(params or {})
    grid = np.linspace(0.0, 1.0, 129) if grid is None else np.asarray(grid, dtype=float)
    tau = float(grid[-1])
    interp = "linear"
    if kind == "constant":
        vals = np.full(len(grid), float(params.get("value", 1.0)))
    elif kind == "affine":
        vals = float(params.get("c0", 1.0)) + float(params.get("c1", 1.0)) * grid
    elif kind == "holder":
        alpha = float(params.get("alpha", 0.75))
        if not 0 < alpha <= 1:
            raise ValueError("holder exponent must lie in (0, 1]")
        vals = float(params.get("mid", 1.0)) + float(params.get("amp", 0.5)) * \
            np.abs(np.sin(2 * np.pi * grid / tau)) ** alpha
    elif kind == "fourier_h":
        alpha = float(params.get("alpha", 0.5))
        modes = int(params.get("modes", 256))
        vals = float(params.get("mid", 1.0)) + float(params.get("amp", 0.5)) * \
            _fourier_profile(grid, tau, alpha, modes, seed)
    elif kind == "piecewise_jump":
        values = np.asarray(params.get("values", [1.0, 2.0]), dtype=float)
        bps = np.asarray(params.get("breakpoints", [tau / 2]), dtype=float)
        if len(values) != len(bps) + 1:
            raise ValueError("piecewise_jump needs one more value than breakpoints")
        if np.any(np.diff(bps) <= 0):
            raise ValueError("breakpoints must be increasing")
        vals = values[np.searchsorted(bps, grid, side="right")]
        interp = "constant"
    elif kind == "random":
        rng = np.random.default_rng(seed)
        lo, hi = float(params.get("low", 0.5)), float(params.get("high", 1.5))
        vals = rng.uniform(lo, hi, size=len(grid))
        interp = "constant"
    else:
        raise ValueError(f"unknown path kind {kind!r}")
    path = CoefficientPath(kind=kind, grid=grid, values=vals,
                           params={**params, "seed": seed}, interp=interp)
    if "window" in params:
        path.check_window(*params["window"])
    return path


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------

def ingest(file, interp="linear"):
    """Read a coefficient series from CSV (``t,value`` or ``t,v_1,...,v_E``)."""
    file = Path(file)
    try:
        text = file.read_text()
    except OSError as exc:
        raise ParseError(f"{file}: {exc}") from None
    rows = list(csv.reader(text.splitlines()))
    if not rows:
        raise ParseError(f"{file}: empty file")
    header = [h.strip() for h in rows[0]]
    if len(header) < 2 or header[0] != "t":
        raise ParseError(f"{file}:1:1: header must start with 't' and have at least two columns")
    width = len(header)
    ts, vals = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != width:
            raise ParseError(f"{file}:{lineno}: expected {width} columns, found {len(row)}")
        parsed = []
        for col, cell in enumerate(row, start=1):
            try:
                x = float(cell)
            except ValueError:
                raise ParseError(f"{file}:{lineno}:{col}: not a number: {cell.strip()!r}") from None
            if not math.isfinite(x):
                raise ParseError(f"{file}:{lineno}:{col}: non-finite entry {cell.strip()!r}")
            parsed.append(x)
        if ts and parsed[0] <= ts[-1]:
            raise ParseError(f"{file}:{lineno}:1: time column not strictly increasing "
                             f"({parsed[0]!r} after {ts[-1]!r})")
        ts.append(parsed[0])
        vals.append(parsed[1:])
    if len(ts) < 2:
        raise ParseError(f"{file}: need at least two samples")
    return CoefficientPath(kind="file", grid=np.array(ts), values=np.array(vals),
                           params={"file": str(file)}, interp=interp)


def export_path(coeff, file):
    """Write a coefficient series in the format read by :func:`ingest`."""
    E = coeff.values.shape[1]
    header = ["t", "value"] if E == 1 else ["t"] + [f"v_{i + 1}" for i in range(E)]
    with open(file, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for t, row in zip(coeff.grid, coeff.values):
            w.writerow([repr(float(t))] + [repr(float(x)) for x in row])


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------

def assemble_elliptic(coeff, bc="dirichlet", nodes=50, nu=0.0):
    """Path of ``a(t, u, v) = int c(t, x) u' v'`` on the chosen mesh."""
    fem = Fem1D(nodes, bc)
    lo, _ = coeff.window
    if lo <= 0:
        raise ValueError(f"ellipticity violated: coefficient minimum {lo:.6g} <= 0")
    cvals = coeff.element_values(fem.n_elements)
    forms = np.stack([fem.stiffness(c) for c in cvals])
    return FormPath(fem.triple(), coeff.grid, forms, interp=coeff.interp, nu=nu,
                    label="elliptic", meta={"fem": fem, "coeff": coeff})


def assemble_robin(beta_path, nodes=50, nu=0.0, gamma=ROBIN_GAMMA):
    """Path of ``int u' v' + beta(t) (u(0) v(0) + u(1) v(1))`` on H^1(0, 1)."""
    fem = Fem1D(nodes, "robin")
    if beta_path.values.shape[1] != 1:
        raise ValueError("Robin coefficient must be a scalar series")
    beta = beta_path.values[:, 0]
    if np.any(beta < 0):
        k = int(np.argmin(beta))
        raise ValueError(f"negative Robin coefficient {beta[k]:.6g} at t = {beta_path.grid[k]:.6g}")
    K = fem.stiffness()
    B = fem.boundary()
    forms = K[None] + beta[:, None, None] * B[None]
    return FormPath(fem.triple(), beta_path.grid, forms, interp=beta_path.interp, nu=nu,
                    gamma=gamma, label="robin", meta={"fem": fem, "coeff": beta_path})


def robin_diff_norm(path, t, s, gamma=1.0):
    """Rank-2 evaluation of ``||A(t) - A(s)||_{L(V, V'_gamma)}`` for Robin paths."""
    fem = path.meta["fem"]
    tri = path.triple
    db = float(path.form_at(t)[0, 0] - path.form_at(s)[0, 0])
    U = np.zeros((fem.nodes, 2))
    U[0, 0] = U[-1, 1] = 1.0
    XU = tri.eigvecs.T @ U
    P = tri.weights(-gamma)[:, None] * XU
    Q = tri.weights(-1.0)[:, None] * XU
    prod = (P.T @ P) @ (Q.T @ Q)
    return abs(db) * math.sqrt(max(np.linalg.eigvals(prod).real.max(), 0.0))


def _common_grid(base, coeffs):
    paths = [c for c in coeffs if c is not None]
    if not paths:
        return base.grid, base.interp
    grid = paths[0].grid
    interp = paths[0].interp
    for c in paths[1:]:
        if len(c.grid) != len(grid) or np.max(np.abs(c.grid - grid)) > 0:
            raise ValueError("coefficient paths must share one time grid")
        if c.interp == "constant":
            interp = "constant"
    if not base.is_constant():
        if len(base.grid) != len(grid) or np.max(np.abs(base.grid - grid)) > 0:
            raise ValueError("time-dependent base path must share the coefficient grid")
        if base.interp == "constant":
            interp = "constant"
    return grid, interp


def assemble_lower_order(b_path=None, m_path=None, base=None, nu=0.0):
    """Add ``int b(t) u' v + int m(t) u v`` to a base elliptic path.

    The result carries ``M0 = sup ||A(t) - A(s)||_{L(V, H)}`` in ``meta``;
    a finite value makes it eligible for the gamma = 0 contraction solver.
    """
    if base is None:
        raise ValueError("assemble_lower_order needs a base path")
    fem = base.meta.get("fem")
    if fem is None:
        raise ValueError("base path carries no mesh")
    grid, interp = _common_grid(base, (b_path, m_path))
    forms = base.form_at(grid) if base.is_constant() or interp == "linear" else base.forms.copy()
    forms = np.array(forms, dtype=float)
    E = fem.n_elements
    if b_path is not None:
        bv = b_path.element_values(E)
        forms += np.stack([fem.convection(b) for b in bv])
    if m_path is not None:
        mv = m_path.element_values(E)
        forms += np.stack([fem.mass(m) for m in mv])
    path = FormPath(base.triple, grid, forms, interp=interp, nu=nu, gamma=0.0,
                    label="lower_order", meta=dict(base.meta))
    path.meta.update({"b_path": b_path, "m_path": m_path})
    M0 = difference_bound(path, 0.0)
    path.meta["M0"] = M0
    path.meta["eligible_gamma0"] = bool(np.isfinite(M0))
    return path


def assemble_scalar(coeff, lam=1.0, nu=0.0):
    """One-dimensional triple ``H = R`` with ``Lambda = {lam}`` and ``a(t) = c(t)``."""
    tri = make_triple([[1.0]], [[float(lam)]])
    forms = coeff.values[:, :1, None]
    return FormPath(tri, coeff.grid, forms, interp=coeff.interp, nu=nu, label="scalar",
                    meta={"coeff": coeff})


# ---------------------------------------------------------------------------
# problem files
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class Problem:
    path: FormPath
    desc: dict
    recommended_gamma: float = 1.0

    @property
    def fem(self):
        return self.path.meta.get("fem")

    @property
    def eligible_gamma0(self):
        return bool(self.path.meta.get("eligible_gamma0", False))


def _coeff_from_desc(desc, grid, base_dir, default_kind="constant"):
    if desc is None:
        return None
    if not isinstance(desc, dict):
        raise ParseError("path entries must be JSON objects")
    kind = desc.get("kind", default_kind)
    if kind == "file":
        f = Path(desc["file"])
        if not f.is_absolute() and base_dir is not None:
            f = base_dir / f
        return ingest(f, interp=desc.get("interp", "linear"))
    params = desc.get("params", {})
    coeff = generate_path(kind, params, grid, seed=int(desc.get("seed", 0)))
    if "interp" in desc:
        coeff.interp = desc["interp"]
    return coeff


def load_problem(source):
    """Build a :class:`Problem` from a JSON file path or an already-parsed dict.

    Fields: ``kind`` (elliptic | robin | lower_order | scalar), ``bc``,
    ``nodes``, ``tau``, ``grid_points``, ``path`` ({kind, params, seed} or
    {kind: "file", file}), optional ``nu``, ``gamma``, ``lam`` (scalar),
    ``m_path`` and ``b_path`` (lower_order).
    """
    base_dir = None
    if isinstance(source, dict):
        desc = dict(source)
    else:
        p = Path(source)
        base_dir = p.parent
        try:
            desc = json.loads(p.read_text())
        except OSError as exc:
            raise ParseError(f"{p}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ParseError(f"{p}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if not isinstance(desc, dict):
        raise ParseError("problem file must contain a JSON object")
    kind = desc.get("kind")
    if kind not in ("elliptic", "robin", "lower_order", "scalar"):
        raise ParseError(f"unknown problem kind {kind!r}")
    tau = float(desc.get("tau", 1.0))
    if not tau > 0:
        raise ParseError("tau must be positive")
    K = int(desc.get("grid_points", 129))
    if K < 2:
        raise ParseError("grid_points must be >= 2")
    grid = np.linspace(0.0, tau, K)
    nodes = int(desc.get("nodes", 50))
    nu = float(desc.get("nu", 0.0))
    coeff = _coeff_from_desc(desc.get("path", {"kind": "constant"}), grid, base_dir)
    gamma = 1.0
    if kind == "scalar":
        path = assemble_scalar(coeff, lam=float(desc.get("lam", 1.0)), nu=nu)
    elif kind == "elliptic":
        path = assemble_elliptic(coeff, desc.get("bc", "dirichlet"), nodes, nu=nu)
    elif kind == "robin":
        gamma = float(desc.get("gamma", ROBIN_GAMMA))
        path = assemble_robin(coeff, nodes, nu=nu, gamma=gamma)
    else:
        base = assemble_elliptic(coeff, desc.get("bc", "dirichlet"), nodes)
        b = _coeff_from_desc(desc.get("b_path"), grid, base_dir)
        m = _coeff_from_desc(desc.get("m_path"), grid, base_dir)
        path = assemble_lower_order(b, m, base, nu=nu)
        gamma = 0.0
    gamma = float(desc.get("gamma", gamma))
    path.gamma = gamma
    return Problem(path=path, desc=desc, recommended_gamma=gamma)
