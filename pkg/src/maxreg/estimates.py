"""Measured constants of the operator estimates, with bounds where explicit.

A report's ``measured`` value is a probe maximum, so it bounds the true
constant from below.  ``bound`` is present only when it follows from the
measured structural constants (M, delta, C1, C2); ``passed`` then means
``measured <= bound * (1 + 1e-6)``, otherwise it means the value is finite.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.special import roots_legendre

from .duhamel import (SolveConfig, SolverRejected, _Interval, solve_neumann,
                      solve_contraction_gamma0, solve_reference, solver_grid)
from .formpath import forward_difference_certificate, verify_hypotheses
from .gelfand import spectral_norm

__all__ = [
    "EstimateReport",
    "apriori_constant",
    "apriori_stability",
    "l_boundedness",
    "linf_v_estimate",
    "lp_quadratic_estimate",
    "quadratic_constant_exact",
    "quadratic_estimate",
    "resolvent_suite",
    "smooth_trials",
    "smoothing_constant",
]

BOUND_RTOL = 1e-6


@dataclass
class EstimateReport:
    name: str
    measured: float
    bound: float | None = None
    probes: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def passed(self):
        if not np.isfinite(self.measured):
            return False
        if self.bound is None:
            return True
        return bool(self.measured <= self.bound * (1.0 + BOUND_RTOL))

    def row(self):
        return {"name": self.name, "measured": self.measured,
                "bound": "" if self.bound is None else self.bound,
                "pass": self.passed, "probes": self.probes}


def _probe_set(n, count, seed, dtype=float):
    """Coordinate probes: unit vectors (Lambda-eigenvectors) then seeded randoms."""
    rng = np.random.default_rng(seed)
    eye = np.eye(n)
    rand = rng.standard_normal((count, n))
    if np.issubdtype(dtype, np.complexfloating):
        rand = rand + 1j * rng.standard_normal((count, n))
    P = np.vstack([eye, rand]) if n > 1 else np.vstack([eye, rand[:1]])
    P = P[np.linalg.norm(P, axis=1) > 0]
    return P / np.linalg.norm(P, axis=1)[:, None]


# ---------------------------------------------------------------------------
# quadratic estimates
# ---------------------------------------------------------------------------

def _gramian(engine, op, tau):
    """``Q`` with ``x^H Q x = int_0^tau ||A^{1/2} e^{-sA} x||^2 ds`` (coordinates)."""
    eig = op.eig() if engine.backend == "eigen" else None
    if eig is not None:
        theta, W, Winv = eig
        sq = np.sqrt(theta.astype(complex))
        den = np.conj(theta)[:, None] + theta[None, :]
        if np.isinf(tau):
            kern = 1.0 / den
        else:
            kern = -np.expm1(-tau * den) / den
        G = (W.conj().T @ W) * np.conj(sq)[:, None] * sq[None, :] * kern
        Q = Winv.conj().T @ G @ Winv
    else:
        A = op.matrix
        S = engine.coords_power(op, 0.5, np.eye(op.n))
        Q = linalg.solve_continuous_lyapunov(A.conj().T, S.conj().T @ S)
        if not np.isinf(tau):
            E = engine.coords_semigroup(op, tau, np.eye(op.n))
            Q = Q - E.conj().T @ Q @ E
    Q = 0.5 * (Q + Q.conj().T)
    if op.hermitian or not np.iscomplexobj(op.matrix):
        Q = Q.real if np.max(np.abs(np.imag(Q))) < 1e-12 * max(np.max(np.abs(Q)), 1e-300) else Q
    return Q


def quadratic_constant_exact(engine, op, tau=np.inf):
    """``sup_x int_0^tau ||A^{1/2} e^{-sA} x||^2 ds / ||x||^2`` (largest Gramian eigenvalue)."""
    return float(linalg.eigvalsh(_gramian(engine, op, tau))[-1])


def smoothing_constant(engine, op, num=200):
    """Measured ``sup_r sqrt(r) ||A^{1/2} e^{-rA}||_{L(H)}`` on a log grid of r."""
    lo, hi = op.spectral_bounds()
    rs = np.geomspace(1e-3 / hi, 20.0 / max(lo, 1e-300), num)
    S = engine.coords_power(op, 0.5, np.eye(op.n))
    best = 0.0
    for r in rs:
        E = engine.coords_semigroup(op, float(r), S)
        best = max(best, math.sqrt(r) * spectral_norm(E))
    return best


def quadratic_estimate(engine, path, t=None, probes=64, tau=None, seed=0):
    """Probe constant of ``int_0^tau ||A(t)^{1/2} e^{-sA(t)} x||^2 ds <= C ||x||^2``.

    ``t=None`` scans every path sample.  The bound ``C2^2 / (2 delta)`` uses
    the measured upper Kato constant and the coercivity constant.
    """
    tau = path.tau - path.start if tau is None else float(tau)
    ts = path.grid if t is None else np.atleast_1d(np.asarray(t, dtype=float))
    P = _probe_set(path.n, probes, seed)
    measured = 0.0
    sup = 0.0
    for tk in ts:
        op = engine.frozen(path, tk)
        Q = _gramian(engine, op, tau)
        vals = np.real(np.einsum("pi,ij,pj->p", P.conj(), Q, P))
        measured = max(measured, float(vals.max()))
        sup = max(sup, float(linalg.eigvalsh(Q)[-1]))
    hyp = verify_hypotheses(path, nu=0.0)
    _, c2 = engine.kato_constants(path, ts)
    bound = c2 ** 2 / (2.0 * hyp.delta) if hyp.delta > 0 else None
    return EstimateReport("quadratic", measured, bound, probes=len(P) * len(ts),
                          meta={"sup_eigen": sup, "C2": c2, "delta": hyp.delta, "M": hyp.M,
                                "tau": tau})


def _panels(lo, hi, tau):
    """Geometric panels covering [0, min(tau, 60/lo)]."""
    end = min(tau, 60.0 / lo)
    first = min(1e-4 / hi, end)
    edges = [0.0, first]
    while edges[-1] < end:
        edges.append(min(2.0 * edges[-1], end))
    return np.array(edges)


def lp_quadratic_estimate(engine, path, t=None, p=2.0, probes=64, tau=None, seed=0,
                          order=24):
    """Probe constant of ``int_0^tau ||A(t)^{1/p} e^{-sA(t)} x||^p ds <= C_p ||x||^p``.

    Composite Gauss-Legendre on geometric panels; no bound is asserted.
    """
    p = float(p)
    if p < 2:
        raise ValueError("p must be >= 2")
    tau = path.tau - path.start if tau is None else float(tau)
    ts = path.grid if t is None else np.atleast_1d(np.asarray(t, dtype=float))
    P = _probe_set(path.n, probes, seed)
    x, w = roots_legendre(order)
    measured = 0.0
    for tk in ts:
        op = engine.frozen(path, tk)
        lo, hi = op.spectral_bounds()
        Y = engine.coords_power(op, 1.0 / p, P.T)
        edges = _panels(lo, hi, tau)
        total = np.zeros(P.shape[0])
        for a, b in zip(edges[:-1], edges[1:]):
            nodes = a + (b - a) * 0.5 * (x + 1.0)
            for s, ws in zip(nodes, w):
                Z = engine.coords_semigroup(op, float(s), Y)
                total += 0.5 * (b - a) * ws * np.linalg.norm(Z, axis=0) ** p
        measured = max(measured, float(total.max()))
    return EstimateReport(f"lp_quadratic_p{p:g}", measured, None, probes=len(P) * len(ts),
                          meta={"p": p, "tau": tau})


# ---------------------------------------------------------------------------
# resolvent and semigroup bounds
# ---------------------------------------------------------------------------

_SUITE_NAMES = ("resolvent_Vdual_to_V", "resolvent_Vdual_to_H", "semigroup_Vdual_to_H")


def resolvent_suite(engine, path, gammas=(0.0, 0.5, 1.0), mus=None, t=None, rs=None):
    """Weighted sup-norms of ``(mu + A(t))^{-1}`` and ``e^{-rA(t)}`` per gamma.

    One report per (quantity, gamma), maximised over the time samples.
    """
    mus = np.concatenate([[0.0], np.geomspace(1e-3, 1e6, 61)]) if mus is None else np.asarray(mus)
    ts = path.grid if t is None else np.atleast_1d(np.asarray(t, dtype=float))
    if rs is None:
        rs = np.geomspace(1e-8, 1.0, 41) * (path.tau - path.start)
    hyp = verify_hypotheses(path, nu=0.0)
    reports = []
    for g in gammas:
        vals = np.zeros(3)
        for tk in ts:
            vals = np.maximum(vals, engine.resolvent_semigroup_measures(path, tk, float(g), mus, rs))
        for name, v in zip(_SUITE_NAMES, vals):
            reports.append(EstimateReport(f"{name}_gamma{g:g}", float(v), None,
                                          probes=len(mus) if "resolvent" in name else len(rs),
                                          meta={"gamma": float(g), "M": hyp.M, "delta": hyp.delta,
                                                "c_embed": path.triple.c_embed}))
    return reports


# ---------------------------------------------------------------------------
# a priori constants
# ---------------------------------------------------------------------------

def smooth_trials(triple, count=12, seed=0, modes=4, tau=1.0):
    """Seeded ``(u0, f)`` pairs built from the lowest Lambda-modes.

    Trials alternate between pure initial data, pure forcing and both; the
    forcing is a low-degree polynomial in time.
    """
    rng = np.random.default_rng(seed)
    n = triple.n
    k = min(modes, n)
    X = triple.eigvecs[:, :k]
    trials = []
    for i in range(count):
        kind = i % 3
        u0 = X @ rng.standard_normal(k) if kind != 1 else np.zeros(n)
        if kind == 0:
            f = None
        else:
            coef = rng.standard_normal((3, k))
            vecs = coef @ X.T

            def f(t, vecs=vecs):
                s = t / tau
                return vecs[0] + s * vecs[1] + s * s * vecs[2]
        trials.append((u0, f))
    return trials


def _run_solver(method, engine, path, u0, f, cfg):
    if method == "neumann":
        return solve_neumann(engine, path, u0, f, cfg)
    if method == "gamma0":
        return solve_contraction_gamma0(engine, path, u0, f, cfg)
    if method == "reference":
        return solve_reference(path, u0, f, cfg.dt)
    raise ValueError(f"unknown method {method!r}")


def _data_norm(traj, u0):
    tri = traj.triple
    v0 = float(tri.norm(np.asarray(u0), "V"))
    q = np.sum(np.abs(traj.f_coords) ** 2, axis=1)
    fn = math.sqrt(float(np.sum(0.5 * np.diff(traj.grid) * (q[:-1] + q[1:]))))
    return v0 + fn


def _trial_ratios(engine, path, trials, cfg, method, numerator):
    ratios, skipped, rejected = [], 0, []
    for i, (u0, f) in enumerate(trials):
        u0 = np.asarray(u0)
        if not np.any(u0) and f is None:
            skipped += 1
            continue
        try:
            traj = _run_solver(method, engine, path, u0, f, cfg)
        except SolverRejected as exc:
            rejected.append((i, str(exc)))
            continue
        den = _data_norm(traj, u0)
        if den == 0:
            skipped += 1
            continue
        ratios.append(numerator(traj) / den)
    return ratios, skipped, rejected


def apriori_constant(engine, path, trials=None, cfg=None, method="neumann"):
    """Measured ``(||Au||_{L2H} + ||u||_{H1H}) / (||u0||_V + ||f||_{L2H})`` over trials."""
    cfg = cfg or SolveConfig()
    trials = smooth_trials(path.triple, tau=path.tau) if trials is None else trials
    ratios, skipped, rejected = _trial_ratios(
        engine, path, trials, cfg, method, lambda tr: tr.norm_au_l2h() + tr.norm_h1h())
    measured = max(ratios) if ratios else float("nan")
    return EstimateReport("apriori", measured, None, probes=len(ratios),
                          meta={"ratios": ratios, "skipped": skipped, "rejected": rejected,
                                "dt": cfg.dt, "method": method})


def apriori_stability(engine, path, trials=None, cfg=None, method="neumann", limit=0.2):
    """Relative change of the a priori constant when ``dt`` halves."""
    cfg = cfg or SolveConfig()
    coarse = apriori_constant(engine, path, trials, cfg, method)
    fine_cfg = SolveConfig(**{**cfg.__dict__, "dt": cfg.dt / 2})
    fine = apriori_constant(engine, path, trials, fine_cfg, method)
    change = abs(fine.measured - coarse.measured) / coarse.measured
    return EstimateReport("apriori_stability", change, limit, probes=coarse.probes,
                          meta={"C_dt": coarse.measured, "C_dt_half": fine.measured})


def linf_v_estimate(engine, path, trials=None, cfg=None, method="neumann"):
    """Measured ``||u||_{Linf V} / (||u0||_V + ||f||_{L2H})`` over trials."""
    cfg = cfg or SolveConfig()
    trials = smooth_trials(path.triple, tau=path.tau) if trials is None else trials
    ratios, skipped, rejected = _trial_ratios(
        engine, path, trials, cfg, method, lambda tr: tr.norm_linfv())
    measured = max(ratios) if ratios else float("nan")
    return EstimateReport("linf_v", measured, None, probes=len(ratios),
                          meta={"ratios": ratios, "skipped": skipped, "rejected": rejected})


def l_boundedness(engine, path, probes=8, dt=None, seed=0, gamma=1.0):
    """Probe norm of ``Lf(t) = A(t) int_0^t e^{-(t-s)A(t)} f(s) ds`` on L2(0,tau;H)."""
    dt = (path.tau - path.start) / 128 if dt is None else dt
    s = solver_grid(path.start, path.tau, dt)
    iv = _Interval(engine, path, s)
    tri = path.triple
    n = tri.n
    rng = np.random.default_rng(seed)
    h = np.diff(s)

    def l2(C):
        q = np.sum(np.abs(C) ** 2, axis=1)
        return math.sqrt(float(np.sum(0.5 * h * (q[:-1] + q[1:]))))

    cands = []
    for k in sorted({0, n // 2, n - 1}):
        e = np.zeros(n)
        e[k] = 1.0
        cands.append(np.tile(e, (len(s), 1)))
    for _ in range(max(probes - len(cands), 1)):
        freq = rng.integers(1, 4)
        shape = np.cos(np.pi * freq * (s - s[0]) / (s[-1] - s[0]))
        cands.append(shape[:, None] * rng.standard_normal(n)[None, :])
    best = 0.0
    for F in cands:
        nf = l2(F)
        if nf == 0:
            continue
        out = iv.apply_A(iv.l0(F))
        best = max(best, l2(out) / nf)
    cert = forward_difference_certificate(path, gamma) if gamma > 0 else float("nan")
    return EstimateReport("l_boundedness", best, None, probes=len(cands),
                          meta={"forward_difference_certificate": cert, "gamma": gamma, "dt": dt})
