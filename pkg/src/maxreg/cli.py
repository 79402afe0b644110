"""Command-line front end: ``maxreg analyze|solve|verify|compare``.

Every run writes ``manifest.json`` next to its outputs.  Apart from the
manifest's wall-clock entry, identical invocations produce identical files.

Exit codes: 0 success, 1 invalid input, 2 hypothesis or bound failure,
3 solver rejection.
"""
from __future__ import annotations

import argparse
import contextlib
import csv
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .duhamel import (SolveConfig, SolverDidNotConverge, SolverRejected, refine_grid,
                      solve_contraction_gamma0, solve_neumann, solve_reference, solve_shifted)
from .estimates import (apriori_constant, l_boundedness, quadratic_estimate, resolvent_suite,
                        smooth_trials, EstimateReport)
from .formpath import (HypothesisError, PathTooRough, sobolev_seminorm, subdivide,
                       verify_hypotheses)
from .funcalc import CalculusEngine
from .gelfand import TripleError
from .problems import ParseError, load_problem

EXIT_OK, EXIT_INPUT, EXIT_HYPOTHESIS, EXIT_REJECTED = 0, 1, 2, 3

SUITES = ("all", "kato", "quadratic", "resolvent", "apriori", "lbound")


class InputError(ValueError):
    """Invalid command-line input."""


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return x


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(x) for x in r])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if np.isfinite(x) else str(x)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if obj is None or isinstance(obj, (str, int, bool)):
        return obj
    return str(obj)


def _write_json(path, data):
    Path(path).write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n")


def parse_vector(text, triple, seed=0):
    """Data grammar: ``ones | zeros | const:c | mode:k | random``."""
    n = triple.n
    text = text.strip()
    if text == "ones":
        return np.ones(n)
    if text == "zeros":
        return np.zeros(n)
    if text == "random":
        return np.random.default_rng(seed).standard_normal(n)
    kind, _, arg = text.partition(":")
    try:
        if kind == "const":
            return np.full(n, float(arg))
        if kind == "mode":
            k = int(arg)
            if not 0 <= k < n:
                raise InputError(f"mode index {k} outside [0, {n})")
            return triple.eigenvector(k)
    except ValueError as exc:
        if isinstance(exc, InputError):
            raise
        raise InputError(f"bad data description {text!r}: {exc}") from None
    raise InputError(f"bad data description {text!r} (expected ones|zeros|const:c|mode:k|random)")


def _floats(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise InputError(f"expected a comma-separated list of numbers, got {text!r}") from None


def _threads():
    env = os.environ.get("MAXREG_THREADS")
    if not env:
        return contextlib.nullcontext()
    try:
        limit = int(env)
    except ValueError:
        raise InputError(f"MAXREG_THREADS must be an integer, got {env!r}") from None
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=max(limit, 1))


def _manifest(args, out, extra=None):
    data = {
        "command": args.command,
        "problem": str(args.problem),
        "seed": args.seed,
        "out": str(out),
        "version": __version__,
        "overrides": {k: v for k, v in sorted(vars(args).items())
                      if k not in ("command", "problem", "out", "seed", "func") and v is not None},
        "wall_clock": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    if extra:
        data.update(extra)
    _write_json(out / "manifest.json", data)


def _config(args, problem):
    dt = args.dt if args.dt is not None else problem.path.tau / 128
    eps = args.eps if args.eps is not None else 0.25
    return SolveConfig(dt=dt, eps=eps, seed=args.seed)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_analyze(args, problem, out):
    path = problem.path
    alphas = _floats(args.alpha) if args.alpha else [0.25, 0.5]
    eps = args.eps if args.eps is not None else 0.25
    status = EXIT_OK
    try:
        hyp = verify_hypotheses(path)
    except HypothesisError as exc:
        _write_json(out / "hypotheses.json", {"error": str(exc)})
        return EXIT_HYPOTHESIS
    _write_json(out / "hypotheses.json", {
        "M": hyp.M, "delta": hyp.delta, "nu": hyp.nu, "nu_threshold": hyp.nu_threshold,
        "gamma": hyp.gamma, "M_gamma": hyp.M_gamma, "coercive": hyp.coercive,
        "c_embed": path.triple.c_embed})
    if not hyp.coercive:
        status = EXIT_HYPOTHESIS
    gammas = sorted({1.0, float(problem.recommended_gamma)})
    rows = []
    for a in alphas:
        for g in gammas:
            rows.append((a, g, sobolev_seminorm(path, a, g)))
    _write_csv(out / "seminorms.csv", ["alpha", "gamma", "seminorm"], rows)
    try:
        sub = subdivide(path, eps)
        _write_csv(out / "subdivision.csv", ["start", "end", "certificate"],
                   [(a, b, c) for (a, b), c in zip(sub.intervals, sub.certificates)])
        _write_csv(out / "breakpoints.csv", ["t"], [(b,) for b in sub.breakpoints])
    except PathTooRough as exc:
        (out / "subdivision.csv").write_text(f"error\n{exc}\n")
        status = EXIT_HYPOTHESIS
    return status


def _solve(method, engine, problem, u0, f, cfg):
    path = problem.path
    shift = path.nu if path.nu > 0 else 0.0
    if method == "reference":
        return solve_reference(path, u0, f, cfg.dt)
    solver = {"neumann": solve_neumann, "gamma0": solve_contraction_gamma0}[method]
    if shift > 0:
        return solve_shifted(solver, engine, path, u0, f, cfg, nu=shift)
    return solver(engine, path, u0, f, cfg)


def cmd_solve(args, problem, out):
    path = problem.path
    tri = path.triple
    u0 = parse_vector(args.u0, tri, args.seed)
    fvec = parse_vector(args.f, tri, args.seed + 1)
    f = None if not np.any(fvec) else fvec
    cfg = _config(args, problem)
    engine = CalculusEngine()
    traj = _solve(args.method, engine, problem, u0, f, cfg)
    vals = traj.values
    if np.iscomplexobj(vals):
        vals = vals.real
    _write_csv(out / "trajectory.csv", ["t"] + [f"u_{i + 1}" for i in range(tri.n)],
               [[t] + list(v) for t, v in zip(traj.grid, vals)])
    _write_json(out / "norms.json", traj.norms())
    _write_json(out / "diagnostics.json", traj.diagnostics)
    return EXIT_OK


def _reports(suite, engine, problem, cfg, seed):
    path = problem.path
    reports = []
    if path.nu > 0:
        path = path.shifted(path.nu)
    hyp = verify_hypotheses(path, nu=0.0)
    if suite in ("all", "kato"):
        c1, c2 = engine.kato_constants(path)
        sym = bool(np.allclose(path.forms, np.swapaxes(path.forms, -1, -2), atol=0))
        meta = {"symmetric": sym}
        reports.append(EstimateReport("kato_C1", c1, None, probes=path.K + 1, meta=meta))
        reports.append(EstimateReport("kato_C2", c2, None, probes=path.K + 1, meta=meta))
        if sym:
            reports.append(EstimateReport("kato_C1_vs_sqrt_delta",
                                          abs(c1 - np.sqrt(hyp.delta)), 1e-6))
            reports.append(EstimateReport("kato_C2_vs_sqrt_M", abs(c2 - np.sqrt(hyp.M)), 1e-6))
    if suite in ("all", "quadratic"):
        reports.append(quadratic_estimate(engine, path, seed=seed))
    if suite in ("all", "resolvent"):
        reports.extend(resolvent_suite(engine, path))
    if suite in ("all", "apriori"):
        trials = smooth_trials(path.triple, count=6, seed=seed, tau=path.tau)
        reports.append(apriori_constant(engine, path, trials, cfg))
    if suite in ("all", "lbound"):
        reports.append(l_boundedness(engine, path, seed=seed, gamma=max(problem.recommended_gamma, 0.5)))
    return reports


def cmd_verify(args, problem, out):
    suite = args.suite or "all"
    if suite not in SUITES:
        raise InputError(f"unknown suite {suite!r}; choose from {', '.join(SUITES)}")
    engine = CalculusEngine()
    cfg = _config(args, problem)
    reports = _reports(suite, engine, problem, cfg, args.seed)
    _write_csv(out / "reports.csv", ["name", "measured", "bound", "pass", "probes"],
               [[r.name, r.measured, "" if r.bound is None else r.bound, r.passed, r.probes]
                for r in reports])
    ok = all(r.passed for r in reports if r.bound is not None)
    return EXIT_OK if ok else EXIT_HYPOTHESIS


def richardson_reference(path, u0, f, grid, factor=8):
    """Crank-Nicolson on ``grid`` refined by ``factor`` and ``2 factor``, extrapolated.

    Returns coordinates at the nodes of ``grid``; the leading ``dt^2`` error
    terms cancel, so the result resolves discrepancies well below ``dt^2``.
    """
    coarse = solve_reference(path, u0, f, grid=refine_grid(grid, factor))
    fine = solve_reference(path, u0, f, grid=refine_grid(grid, 2 * factor))
    return (4 * fine.coords[::2 * factor] - coarse.coords[::factor]) / 3


def cmd_compare(args, problem, out):
    path = problem.path
    tri = path.triple
    u0 = parse_vector(args.u0, tri, args.seed)
    fvec = parse_vector(args.f, tri, args.seed + 1)
    f = None if not np.any(fvec) else fvec
    base = _config(args, problem)
    method = "neumann" if args.method == "reference" else args.method
    engine = CalculusEngine()
    rows = []
    for lvl in range(args.levels):
        dt = base.dt / 2 ** lvl
        cfg = SolveConfig(dt=dt, eps=base.eps, seed=args.seed)
        traj = _solve(method, engine, problem, u0, f, cfg)
        ref = richardson_reference(path, u0, f, traj.grid)
        diff = traj.coords - ref
        num = traj._l2(diff[:-1], diff[1:])
        den = traj.norm_l2h()
        rows.append([dt, num / den if den > 0 else num])
    for i, r in enumerate(rows):
        if i == 0 or r[1] == 0 or rows[i - 1][1] == 0:
            r.append("")
        else:
            r.append(float(np.log2(rows[i - 1][1] / r[1])))
    _write_csv(out / "compare.csv", ["dt", "l2h_discrepancy", "order"], rows)
    with open(out / "compare.dat", "w") as fh:
        for dt, d, _ in rows:
            fh.write(f"{dt!r} {d!r}\n")
    return EXIT_OK


COMMANDS = {"analyze": cmd_analyze, "solve": cmd_solve, "verify": cmd_verify,
            "compare": cmd_compare}


def build_parser():
    parser = argparse.ArgumentParser(prog="maxreg", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"maxreg {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--problem", required=True, help="problem description (JSON)")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--eps", type=float, default=None, help="subdivision target")
        p.add_argument("--dt", type=float, default=None, help="solver time step")
        if name == "analyze":
            p.add_argument("--alpha", default=None, help="comma-separated seminorm orders")
        if name in ("solve", "compare"):
            p.add_argument("--method", default="neumann",
                           choices=("neumann", "gamma0", "reference"))
            p.add_argument("--u0", default="ones", help="ones|zeros|const:c|mode:k|random")
            p.add_argument("--f", default="zeros", help="ones|zeros|const:c|mode:k|random")
        if name == "compare":
            p.add_argument("--levels", type=int, default=3, help="number of halvings of dt")
        if name == "verify":
            p.add_argument("--suite", default="all", choices=SUITES)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    out = Path(args.out)
    try:
        if args.dt is not None and not args.dt > 0:
            raise InputError("--dt must be positive")
        if args.eps is not None and not args.eps > 0:
            raise InputError("--eps must be positive")
        problem = load_problem(args.problem)
        out.mkdir(parents=True, exist_ok=True)
        with _threads():
            code = COMMANDS[args.command](args, problem, out)
        _manifest(args, out, {"exit_code": code})
        return code
    except (InputError, ParseError, TripleError, HypothesisError, ValueError) as exc:
        print(f"maxreg: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (SolverRejected, SolverDidNotConverge) as exc:
        print(f"maxreg: {exc}", file=sys.stderr)
        if out.is_dir():
            _manifest(args, out, {"exit_code": EXIT_REJECTED, "rejection": str(exc)})
        return EXIT_REJECTED


if __name__ == "__main__":
    sys.exit(main())
