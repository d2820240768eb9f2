"""Command-line entry point.

Exit codes: 0 success, 1 numerical failure or failed verification check,
2 invalid configuration or violated precondition. Every failure prints one
line ``error: <code>: <message>`` on stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys

import numpy as np

from fracalc import configio, convergence, inverse, ode, pde, special, timegrid, verify
from fracalc.errors import ConfigError, FracalcError
from fracalc.runs import RunRecorder, file_sha256, render_table, resolve_out_dir
from fracalc.timegrid import GridFunction, TimeGrid

EXIT_OK, EXIT_FAILURE, EXIT_CONFIG = 0, 1, 2

FAULTS = ("corrupted-weights",)


class Precondition(Exception):
    """Invalid user input detected by the CLI itself."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------------------
# helpers


def read_series(path: str) -> tuple[np.ndarray, np.ndarray]:
    """Two-column CSV with a header row (``t`` then a value column)."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
    if len(rows) < 2 or len(rows[0]) < 2 or rows[0][0].strip() != "t":
        raise ConfigError(f"{path}: expected a header 't,<value>' and at least one row")
    try:
        data = np.array([[float(r[0]), float(r[1])] for r in rows[1:] if r], dtype=float)
    except (ValueError, IndexError) as exc:
        raise ConfigError(f"{path}: non-numeric entry") from exc
    if not np.all(np.isfinite(data)):
        raise ConfigError(f"{path}: non-finite entry")
    return data[:, 0], data[:, 1]


def grid_from_nodes(t: np.ndarray, path: str) -> TimeGrid:
    n = t.size - 1
    if n < 2 or t[0] != 0:
        raise ConfigError(f"{path}: t must start at 0 with at least 3 rows")
    grid = TimeGrid(float(t[-1]), n)
    if not np.allclose(t, grid.nodes, rtol=0, atol=1e-9 * grid.T):
        raise ConfigError(f"{path}: t must be uniformly spaced")
    return grid


def _write(rec: RunRecorder, args, name: str, columns, rows, user_path=None):
    ext = "json" if args.format == "json" else "csv"
    rec.save(f"{name}.{ext}", render_table(columns, rows, args.format), user_path)


# ---------------------------------------------------------------------------
# subcommands


def cmd_ml_eval(args) -> int:
    doc = {"schema": 1, "alpha": args.alpha, "beta": args.beta, "z": args.z}
    if args.branch:
        doc["branch"] = args.branch
    configio.validate(doc, "ml-eval")
    rec = RunRecorder(resolve_out_dir(args.out_dir), "ml-eval", doc, args.seed)
    results = [special.mittag_leffler(special.MlParams(args.alpha, args.beta, z), args.branch) for z in args.z]
    rows = [(z, r.value, r.est_abs_error, r.branch) for z, r in zip(args.z, results)]
    _write(rec, args, "values", ["z", "value", "est_abs_error", "branch"], rows)
    rec.finish()
    if args.json:
        out = [{"z": z, "value": r.value, "est_abs_error": r.est_abs_error, "branch": r.branch} for z, r in zip(args.z, results)]
        print(json.dumps(out[0] if len(out) == 1 else out))
    else:
        for z, r in zip(args.z, results):
            print(f"value={r.value:.17g} est_abs_error={r.est_abs_error:.3g} branch={r.branch}")
    return EXIT_OK


def cmd_frac_op(args) -> int:
    t, vals = read_series(args.input)
    doc = {"schema": 1, "op": args.op, "alpha": args.alpha, "input_sha256": file_sha256(args.input)}
    if args.grid_n is not None:
        doc["grid_n"] = args.grid_n
    if args.horizon is not None:
        doc["horizon"] = args.horizon
    configio.validate(doc, "frac-op")
    if args.grid_n is None and args.horizon is None:
        grid = grid_from_nodes(t, args.input)
        v = vals
    else:
        grid = TimeGrid(args.horizon if args.horizon is not None else float(t[-1]), args.grid_n or t.size - 1)
        if t[0] > 0 or t[-1] < grid.T * (1 - 1e-12):
            raise Precondition("domain", "input does not cover [0, horizon]")
        v = np.interp(grid.nodes, t, vals)
    rec = RunRecorder(resolve_out_dir(args.out_dir), "frac-op", doc, args.seed)
    op = timegrid.build_frac_integral(args.alpha, grid)
    f = GridFunction(grid, v)
    if args.op == "J":
        out = timegrid.apply_J(op, f).samples()
    elif args.op == "D":
        out = timegrid.apply_frac_derivative(op, f).samples()
    else:
        out = timegrid.apply_J_prime(op, f).values
    _write(rec, args, "result", ["t", "value"], zip(grid.nodes, out), args.output)
    rec.finish()
    return EXIT_OK


def _ode_problem(doc: dict) -> ode.OdeProblem:
    grid = configio.time_grid(doc)
    src = configio.time_source(doc.get("source"), grid)
    terms = tuple((t["order"], t["coeff"]) for t in doc.get("multi_terms", []))
    return ode.OdeProblem(float(doc["alpha"]), float(doc["lambda"]), float(doc["a"]), src, grid, terms)


def _ode_method(p: ode.OdeProblem, method: str) -> str:
    if method != "auto":
        return method
    if p.multi_terms:
        return "volterra"
    if p.f is not None and p.f.kind in ("delta", "deriv_of"):
        return "weak"
    if p.f is not None and p.f.kind == "power" and min(p.f.exponents) <= -0.5:
        return "weak"
    return "volterra"


def cmd_ode_solve(args) -> int:
    doc = configio.load_config(args.config, "ode-solve")
    p = _ode_problem(doc)
    method = _ode_method(p, doc.get("method", "auto"))
    solver = {"formula": ode.solve_relaxation_formula, "volterra": ode.solve_relaxation_volterra, "weak": ode.solve_weak}[method]
    rec = RunRecorder(resolve_out_dir(args.out_dir), "ode-solve", doc, args.seed)
    sol = solver(p)
    res = ode.pointwise_residual(p, sol.u)
    _write(rec, args, "solution", ["t", "u", "residual"], zip(p.grid.nodes, sol.u.samples(), res), args.output)
    rec.diagnostics = {"method": sol.method, "residual_l2": sol.residual}
    rec.finish()
    return EXIT_OK


def _pde_problem(doc: dict) -> pde.IbvpProblem:
    tgrid = configio.time_grid(doc)
    sgrid, coeffs = configio.spatial(doc)
    p = pde.IbvpProblem(float(doc["alpha"]), tgrid, sgrid, coeffs, 0.0)
    basis = p.basis
    a = configio.profile(doc.get("initial"), sgrid, basis)
    F = None
    src = doc.get("source")
    if src is not None and "separable" in src:
        sep = src["separable"]
        mu = configio.time_source(sep["mu"], tgrid)
        if mu is not None:
            F = pde.SeparableSource(mu, configio.profile(sep["f"], sgrid, basis))
    elif src is not None:
        F = np.asarray(src["array"], dtype=float)
        if F.shape != (tgrid.n + 1, sgrid.m):
            raise ConfigError(f"source/array must have shape [{tgrid.n + 1}][{sgrid.m}]")
    terms = []
    for t in doc.get("multi_terms", []):
        q = np.asarray(t["q"], dtype=float)
        if q.ndim == 1 and q.shape != (sgrid.m,):
            raise ConfigError(f"multi_terms/q needs {sgrid.m} entries")
        terms.append((float(t["order"]), q))
    return p.replace(a=a, F=F, multi_terms=tuple(terms))


def _pde_solve(p: pde.IbvpProblem, solver_doc: dict) -> pde.IbvpSolution:
    tol = float(solver_doc.get("tol", pde.PICARD_TOL))
    max_iter = int(solver_doc.get("max_iter", pde.PICARD_MAX_ITER))
    method = solver_doc.get("method", "auto")
    weak = any(isinstance(s, pde.SeparableSource) and s.mu.kind in ("delta", "deriv_of") for s in p.F)
    if method == "auto":
        if p.multi_terms:
            method = "multiterm"
        elif weak:
            method = "weak"
        else:
            method = "symmetric" if p.coeffs.symmetric else "mild"
    if method == "multiterm" or p.multi_terms:
        return pde.solve_multiterm_pde(p, max_iter=max_iter, tol=tol)
    if method == "weak":
        return pde.weak_solve(p, max_iter=max_iter, tol=tol)
    if method == "symmetric":
        if not p.coeffs.symmetric:
            raise ConfigError("solver/method 'symmetric' needs b = 0")
        return pde.solve_symmetric(p)
    return pde.solve_mild(p, max_iter=max_iter, tol=tol)


def cmd_pde_solve(args) -> int:
    doc = configio.load_config(args.config, "pde-solve")
    p = _pde_problem(doc)
    rec = RunRecorder(resolve_out_dir(args.out_dir), "pde-solve", doc, args.seed)
    sol = _pde_solve(p, doc.get("solver", {}))
    t, x = p.tgrid.nodes, p.sgrid.x
    rows = ((t[i], x[j], sol.u[i, j]) for i in range(t.size) for j in range(x.size))
    _write(rec, args, "u", ["t", "x", "u"], rows, args.output)
    if args.modes:
        C = sol.mode_coeffs
        mrows = ((t[i], k + 1, C[i, k]) for i in range(t.size) for k in range(C.shape[1]))
        _write(rec, args, "modes", ["t", "mode", "coeff"], mrows, args.modes)
    rec.diagnostics = {
        "method": sol.method,
        "iterations": sol.iterations,
        "residual": sol.residual,
        "time_tolerance": pde.time_tolerance(p.tgrid.n),
        "gaps": list(sol.gaps),
        **sol.diagnostics,
    }
    rec.finish()
    return EXIT_OK


def _exact_mu(spec: dict, grid: TimeGrid):
    if spec["type"] == "grid" and "name" in spec:
        return configio.time_function(spec, grid).values
    if spec["type"] == "power":
        return sum(c * grid.nodes**e for c, e in zip(spec["coeffs"], spec["exponents"]))
    return None


def cmd_inverse_source(args) -> int:
    doc = configio.load_config(args.config, "inverse-source")
    alpha = float(doc["alpha"])
    sgrid, coeffs = configio.spatial(doc)
    basis = pde.IbvpProblem(0.5, TimeGrid(1.0, 4), sgrid, coeffs, 0.0).basis
    f = configio.profile(doc["f"], sgrid, basis)
    theta = configio.profile(doc["theta"], sgrid, basis)
    grid = configio.time_grid(doc)
    config = dict(doc)
    exact = None
    if args.data:
        config["data_sha256"] = file_sha256(args.data)
        t, g = read_series(args.data)
        if t.size != grid.n + 1 or not np.allclose(t, grid.nodes, rtol=0, atol=1e-9 * grid.T):
            raise ConfigError(f"{args.data}: data must be sampled at the {grid.n + 1} nodes of the configured grid")
        data = GridFunction(grid, g)
    elif "synthetic" in doc:
        syn = doc["synthetic"]
        fine = TimeGrid(grid.T, grid.n * int(syn.get("oversample", 2)))
        mu = configio.time_source(syn["mu"], fine)
        if mu is None:
            raise ConfigError("synthetic/mu must not be 'none'")
        data = inverse.downsample(inverse.forward_data(alpha, basis, f, theta, mu, fine), grid)
        noise = float(syn.get("noise", 0.0))
        if noise:
            rng = np.random.default_rng(args.seed)
            scale = float(np.max(np.abs(data.values)))
            data = GridFunction(grid, data.values + noise * scale * rng.standard_normal(grid.n + 1))
        exact = _exact_mu(syn["mu"], grid)
    else:
        raise ConfigError("inverse-source needs --data or a synthetic block")
    p = inverse.InverseProblem(alpha, basis, f, theta, data, float(doc.get("eps", 0.0)), float(doc.get("floor", inverse.PROJECTION_FLOOR)))
    rec = RunRecorder(resolve_out_dir(args.out_dir), "inverse-source", config, args.seed)
    r = inverse.recover_mu(p)
    _write(rec, args, "mu", ["t", "mu"], zip(grid.nodes, r.mu.values), args.output)
    diag = {"schema": 1, "residual": r.residual, "projection": r.projection, "eps": r.eps}
    if exact is not None:
        diag["relative_l2_error"] = inverse.relative_l2(r.mu, exact)
    rec.diagnostics = diag
    rec.save("diagnostics.json", json.dumps(diag, indent=2, sort_keys=True) + "\n", args.diagnostics)
    rec.finish()
    return EXIT_OK


def cmd_convergence_study(args) -> int:
    doc = configio.load_config(args.config, "convergence-study")
    rec = RunRecorder(resolve_out_dir(args.out_dir), "convergence-study", doc, args.seed)
    rows = convergence.run_study(doc)
    _write(rec, args, "study", ["n", "h", "error", "order"], [(r.n, r.h, r.error, r.order) for r in rows], args.output)
    rec.diagnostics = {"orders": [r.order for r in rows]}
    rec.finish()
    for r in rows:
        order = "" if math.isnan(r.order) else f" order={r.order:.3f}"
        print(f"n={r.n} h={r.h:.6g} error={r.error:.6g}{order}")
    return EXIT_OK


def cmd_verify(args) -> int:
    doc = {"schema": 1, "suite": args.suite, "fault": args.inject_fault}
    rec = RunRecorder(resolve_out_dir(args.out_dir), "verify", doc, args.seed)

    def progress(c):
        print(f"{'PASS' if c.passed else 'FAIL'} {c.suite}/{c.name} ({c.seconds:.2f}s)", flush=True)

    report = verify.run_suite(args.suite, seed=args.seed, inject_fault=args.inject_fault is not None, progress=progress)
    body = report.as_dict()
    text = json.dumps(body, indent=2, sort_keys=True) + "\n"
    rec.save("report.json", text, args.report)
    rec.diagnostics = {"passed": body["passed"], "failed": body["failed"]}
    rec.finish("ok" if report.ok else "failed")
    print(f"{body['passed']}/{body['total']} checks passed")
    if not report.ok:
        print(f"error: check-failed: {', '.join(report.failed)}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="random seed (default 0)")
    common.add_argument("--out-dir", default=argparse.SUPPRESS, help="run directory root; FRACALC_OUT_DIR overrides")
    common.add_argument("--format", choices=("csv", "json"), default=argparse.SUPPRESS, help="table format")

    parser = argparse.ArgumentParser(prog="fracalc", description="Fractional calculus solvers and checks.", parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ml-eval", parents=[common], help="evaluate the Mittag-Leffler function")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--z", type=float, nargs="+", required=True)
    p.add_argument("--branch", choices=special.BRANCHES)
    p.add_argument("--json", action="store_true", help="print JSON instead of text")
    p.set_defaults(func=cmd_ml_eval)

    p = sub.add_parser("frac-op", parents=[common], help="apply J^alpha, its inverse or the dual integral to sampled data")
    p.add_argument("--op", choices=("J", "D", "Jdual"), required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--input", required=True, help="CSV with columns t,value")
    p.add_argument("--output", required=True)
    p.add_argument("--grid-n", type=int)
    p.add_argument("--horizon", type=float)
    p.set_defaults(func=cmd_frac_op)

    p = sub.add_parser("ode-solve", parents=[common], help="solve a scalar fractional relaxation problem")
    p.add_argument("--config", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_ode_solve)

    p = sub.add_parser("pde-solve", parents=[common], help="solve a time-fractional diffusion problem")
    p.add_argument("--config", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--modes")
    p.set_defaults(func=cmd_pde_solve)

    p = sub.add_parser("inverse-source", parents=[common], help="recover the time factor of a separable source")
    p.add_argument("--config", required=True)
    p.add_argument("--data", help="CSV with columns t,g; omit to use the synthetic block")
    p.add_argument("--output", required=True)
    p.add_argument("--diagnostics")
    p.set_defaults(func=cmd_inverse_source)

    p = sub.add_parser("convergence-study", parents=[common], help="errors and observed orders under refinement")
    p.add_argument("--config", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_convergence_study)

    p = sub.add_parser("verify", parents=[common], help="run the self-verification suite")
    p.add_argument("--suite", choices=("all", *verify.SUITES), default="all")
    p.add_argument("--report", help="path for the JSON report")
    p.add_argument("--inject-fault", choices=FAULTS, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_verify)
    return parser


def _error(code: str, message: str, status: int) -> int:
    line = " ".join(str(message).split())
    print(f"error: {code}: {line}", file=sys.stderr)
    return status


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    for name, default in (("seed", 0), ("out_dir", None), ("format", "csv")):
        if not hasattr(args, name):
            setattr(args, name, default)
    try:
        return args.func(args)
    except ConfigError as exc:
        return _error("config", exc, EXIT_CONFIG)
    except Precondition as exc:
        return _error(exc.code, exc, EXIT_CONFIG)
    except FracalcError as exc:
        # violated preconditions are ValueErrors; everything else is numerical
        status = EXIT_CONFIG if isinstance(exc, ValueError) else EXIT_FAILURE
        return _error(exc.code, exc, status)
    except ValueError as exc:
        return _error("invalid-input", exc, EXIT_CONFIG)
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        return _error("numerical", exc, EXIT_FAILURE)
    except OSError as exc:
        return _error("io", f"{exc.filename}: {exc.strerror}", EXIT_FAILURE)


if __name__ == "__main__":
    sys.exit(main())
