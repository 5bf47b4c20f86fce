"""Problem-file parsing, command dispatch and report emission.

Problem files are UTF-8 JSON with four sections: "tree", "model",
"parameters" and optional "solver" overrides.  Commands:

    stochdual solve    file.json      primal solve
    stochdual dualize  file.json      dual solve + model dual representation
    stochdual gap      file.json      duality gap
    stochdual check    file.json      optimality certificate
    stochdual report   file.json      all of the above

Exit codes: 0 success/pass, 1 usage or parse error, 2 certificate failure,
3 degenerate or inconclusive, 4 solver non-convergence.  Reports are
emitted as deterministic JSON (sorted keys, no timestamps) or aligned
text.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys

import numpy as np

from .convex import (
    Affine,
    AffinePrecomposition,
    Entropy,
    Exponential,
    FiniteSum,
    PiecewiseLinear,
    Polyhedron,
    PolyhedralIndicator,
    Quadratic,
    SeparableSum,
    SupportFunction,
    absolute_value,
    indicator_interval,
    indicator_nonneg,
    indicator_nonpos,
    indicator_point,
)
from .duality import alm_dual_value, bolza_dual_value, check_martingale_density
from .integrand import BolzaStage
from .models import (
    build_alm,
    build_bolza,
    build_constrained,
    build_generic,
    build_kabanov,
)
from .optimality import (
    check_alm,
    check_consistent_price_system,
    check_euler_lagrange,
    check_hamiltonian_system,
    check_kkt,
    check_saddle,
)
from .solver import (
    Problem,
    SolverConfig,
    dual_objective,
    dual_via_orthocomplement,
    duality_gap,
    solve_dual,
    solve_primal,
)
from .tree import ScenarioTree, StochasticProcess, TreeError, build_tree

__all__ = ["ProblemFileError", "parse_problem_file", "run", "main", "fixture_path"]


def fixture_path(name: str) -> str:
    """Absolute path of a bundled problem file (the fixture corpus)."""
    from importlib import resources

    return str(resources.files("stochdual") / "fixtures" / name)

INF = float("inf")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CHECK_FAIL = 2
EXIT_DEGENERATE = 3
EXIT_NO_CONVERGENCE = 4


class ProblemFileError(ValueError):
    def __init__(self, message: str, path: str):
        super().__init__(f"{path}: {message}")
        self.field_path = path


def _get(section, key, path, required=True, default=None):
    if key not in section:
        if required:
            raise ProblemFileError("missing field", f"{path}.{key}")
        return default
    return section[key]


# ---------------------------------------------------------------------------
# function grammar
# ---------------------------------------------------------------------------


def parse_function(spec, path: str):
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ProblemFileError("function spec needs a 'kind'", path)
    kind = spec["kind"]
    try:
        if kind == "affine":
            return Affine(spec.get("a", [0.0]), spec.get("b", 0.0))
        if kind == "quadratic":
            return Quadratic(_get(spec, "weights", path), spec.get("tilt"),
                             spec.get("offset", 0.0))
        if kind == "abs":
            fn = absolute_value()
            return fn.scaled(spec["scale"]) if "scale" in spec else fn
        if kind == "pwl":
            lo = spec.get("lo", -INF)
            hi = spec.get("hi", INF)
            anchor = tuple(spec.get("anchor", (0.0, 0.0)))
            return PiecewiseLinear(spec.get("breaks", []), _get(spec, "slopes", path),
                                   lo=lo, hi=hi, anchor=anchor)
        if kind == "indicator_nonneg":
            return indicator_nonneg()
        if kind == "indicator_nonpos":
            return indicator_nonpos()
        if kind == "interval":
            return indicator_interval(spec.get("lo", -INF), spec.get("hi", INF))
        if kind == "point":
            return indicator_point(_get(spec, "at", path), spec.get("value", 0.0))
        if kind == "entropy":
            return Entropy(spec.get("coeff", 1.0), spec.get("tilt", 0.0),
                           spec.get("offset", 0.0))
        if kind == "exponential":
            return Exponential(spec.get("coeff", 1.0), spec.get("rate", 1.0),
                               spec.get("offset", 0.0))
        if kind == "polyhedron":
            return PolyhedralIndicator(parse_polyhedron(spec, path))
        if kind == "support":
            return SupportFunction(parse_polyhedron(spec, path))
        if kind == "sum":
            return FiniteSum([parse_function(t, f"{path}.terms[{i}]")
                              for i, t in enumerate(_get(spec, "terms", path))])
        if kind == "separable":
            return SeparableSum([parse_function(t, f"{path}.parts[{i}]")
                                 for i, t in enumerate(_get(spec, "parts", path))])
        if kind == "precompose":
            inner = parse_function(_get(spec, "inner", path), f"{path}.inner")
            return AffinePrecomposition(inner, _get(spec, "matrix", path),
                                        spec.get("offset"))
        if kind == "scale":
            inner = parse_function(_get(spec, "inner", path), f"{path}.inner")
            return inner.scaled(float(_get(spec, "alpha", path)))
    except ProblemFileError:
        raise
    except Exception as exc:
        raise ProblemFileError(str(exc), path)
    raise ProblemFileError(f"unknown function kind '{kind}'", path)


def parse_polyhedron(spec, path: str) -> Polyhedron:
    try:
        if "generators" in spec:
            return Polyhedron.from_cone_generators(spec["generators"])
        return Polyhedron(
            a_ub=spec.get("A"), b_ub=spec.get("b"),
            a_eq=spec.get("A_eq"), b_eq=spec.get("b_eq"),
            cone=spec.get("cone", False),
        )
    except Exception as exc:
        raise ProblemFileError(str(exc), path)


def parse_process(tree: ScenarioTree, dims, spec, path: str) -> StochasticProcess:
    """Stage-major nested lists; scalars broadcast across leaves."""
    if spec is None:
        return StochasticProcess.zeros(tree, dims)
    if not isinstance(spec, list) or len(spec) != tree.stage_count:
        raise ProblemFileError(
            f"expected one entry per stage ({tree.stage_count})", path)
    arrays = []
    for t, entry in enumerate(spec):
        d = dims[t]
        if d == 0:
            arrays.append(np.zeros((tree.n_leaves, 0)))
            continue
        arr = np.asarray(entry, dtype=float)
        if arr.ndim == 0:
            arr = np.full((tree.n_leaves, d), float(arr))
        elif arr.ndim == 1:
            if arr.size != tree.n_leaves or d != 1:
                raise ProblemFileError(
                    f"stage {t} needs {tree.n_leaves} x {d} values", f"{path}[{t}]")
            arr = arr.reshape(-1, 1)
        if arr.shape != (tree.n_leaves, d):
            raise ProblemFileError(
                f"stage {t} needs shape ({tree.n_leaves}, {d})", f"{path}[{t}]")
        arrays.append(arr)
    return StochasticProcess(tree, tuple(arrays))


# ---------------------------------------------------------------------------
# problem files
# ---------------------------------------------------------------------------


def parse_problem_file(path: str):
    """Returns (problem, family, parameters-dict, solver-overrides)."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
        doc = json.loads(raw.decode("utf-8"))
    except FileNotFoundError:
        raise ProblemFileError("file not found", path)
    except json.JSONDecodeError as exc:
        raise ProblemFileError(f"invalid JSON: {exc}", path)

    tree_sec = _get(doc, "tree", "$")
    try:
        tree = build_tree(_get(tree_sec, "probabilities", "tree"),
                          _get(tree_sec, "partitions", "tree"))
    except TreeError as exc:
        raise ProblemFileError(str(exc), "tree.probabilities"
                               if "sum" in str(exc) or "positive" in str(exc)
                               else "tree.partitions")

    model = _get(doc, "model", "$")
    family = _get(model, "family", "model")
    try:
        problem = _build_model(tree, family, model)
    except ProblemFileError:
        raise
    except Exception as exc:
        raise ProblemFileError(str(exc), "model")

    params_sec = doc.get("parameters", {})
    u = parse_process(tree, problem.m_dims, params_sec.get("u"), "parameters.u")
    candidate = None
    if "candidate" in params_sec:
        cand = params_sec["candidate"]
        candidate = {}
        if "x" in cand:
            candidate["x"] = parse_process(tree, problem.n_dims, cand["x"],
                                           "parameters.candidate.x")
        if "y" in cand:
            candidate["y"] = parse_process(tree, problem.m_dims, cand["y"],
                                           "parameters.candidate.y")
        if "v" in cand:
            candidate["v"] = parse_process(tree, problem.n_dims, cand["v"],
                                           "parameters.candidate.v")
        for key in ("z", "k"):
            if key in cand:
                d = problem.n_dims[0] // 2
                candidate[key] = parse_process(
                    tree, (d,) * tree.stage_count, cand[key],
                    f"parameters.candidate.{key}")
    solver_sec = doc.get("solver", {})
    digest = hashlib.sha256(raw).hexdigest()
    return problem, family, {"u": u, "candidate": candidate}, solver_sec, digest


def _build_model(tree, family, model) -> Problem:
    if family == "generic":
        fns = [parse_function(f, f"model.functions[{i}]")
               for i, f in enumerate(_get(model, "functions", "model"))]
        return build_generic(tree, _get(model, "x_dims", "model"),
                             _get(model, "u_dims", "model"), fns)
    if family == "constrained":
        objs = model.get("objective")
        objs = objs if isinstance(objs, list) else [objs]
        objectives = [parse_function(o, f"model.objective[{i}]")
                      for i, o in enumerate(objs)]
        raw_cons = _get(model, "constraints", "model")
        if raw_cons and isinstance(raw_cons[0], dict):
            raw_cons = [raw_cons]
        constraints = [
            [parse_function(c, f"model.constraints[{i}][{j}]")
             for j, c in enumerate(clist)]
            for i, clist in enumerate(raw_cons)
        ]
        return build_constrained(tree, _get(model, "x_dims", "model"),
                                 objectives, constraints)
    if family == "alm":
        dis = model.get("disutility")
        dis = dis if isinstance(dis, list) else [dis]
        Vs = [parse_function(v, f"model.disutility[{i}]") for i, v in enumerate(dis)]
        price_spec = _get(model, "price", "model")
        d_s = np.asarray(price_spec[0], dtype=float)
        d_s = 1 if d_s.ndim <= 1 else d_s.shape[1]
        price = parse_process(tree, (d_s,) * tree.stage_count, price_spec,
                              "model.price")
        return build_alm(tree, Vs, price)
    if family == "bolza":
        d = int(_get(model, "state_dim", "model"))
        stages = []
        for t, blocks in enumerate(_get(model, "stages", "model")):
            stages.append([
                BolzaStage(parse_function(fn, f"model.stages[{t}][{b}]"), d)
                for b, fn in enumerate(blocks)
            ])
        return build_bolza(tree, stages)
    if family == "kabanov":
        sets = [
            [parse_polyhedron(c, f"model.trade_sets[{t}][{b}]")
             for b, c in enumerate(blocks)]
            for t, blocks in enumerate(_get(model, "trade_sets", "model"))
        ]
        dis = [
            [parse_function(v, f"model.disutilities[{t}][{b}]")
             for b, v in enumerate(blocks)]
            for t, blocks in enumerate(_get(model, "disutilities", "model"))
        ]
        return build_kabanov(tree, sets, dis)
    raise ProblemFileError(f"unknown family '{family}'", "model.family")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _config(solver_sec, args) -> SolverConfig:
    cfg = SolverConfig()
    if "max_iter" in solver_sec:
        cfg.max_iter = int(solver_sec["max_iter"])
    if "tol" in solver_sec:
        cfg.tol = float(solver_sec["tol"])
    if "method" in solver_sec:
        cfg.method = solver_sec["method"]
    if "step_constant" in solver_sec:
        cfg.step_constant = float(solver_sec["step_constant"])
    if getattr(args, "max_iter", None) is not None:
        cfg.max_iter = args.max_iter
    if getattr(args, "tol", None) is not None:
        cfg.tol = args.tol
    if getattr(args, "method", None) is not None:
        cfg.method = args.method
    if getattr(args, "step_constant", None) is not None:
        cfg.step_constant = args.step_constant
    return cfg


def _threads() -> int:
    raw = os.environ.get("STOCHDUAL_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        n = 1
    return max(n, 1)


def _solve_block(res) -> dict:
    return {
        "status": res.status,
        "value": None if not np.isfinite(res.value) else res.value,
        "value_repr": repr(res.value),
        "iterations": res.iterations,
        "residual": res.residual if np.isfinite(res.residual) else None,
        "method": res.method,
    }


def _split_zk(problem, x):
    d = problem.n_dims[0] // 2
    tree = problem.tree
    z_vals = tuple(x.stage(t)[:, :d] for t in range(tree.stage_count))
    k_vals = tuple(x.stage(t)[:, d:] for t in range(tree.stage_count))
    return (StochasticProcess(tree, z_vals), StochasticProcess(tree, k_vals))


def _dual_representation(problem, family, u, dual_res, cfg) -> dict:
    out = {}
    y = dual_res.optimizer
    if y is None:
        return out
    dob = dual_objective(problem, y, cfg)
    out["conjugate_at_y"] = dob.value if np.isfinite(dob.value) else None
    out["conjugate_lower_variant"] = (
        dob.lower_value if dob.lower_value is not None and np.isfinite(dob.lower_value)
        else None
    )
    try:
        bound = dual_via_orthocomplement(problem, y, cfg)
        out["annihilator_bound"] = bound.value if np.isfinite(bound.value) else None
    except Exception:
        out["annihilator_bound"] = None
    if family == "alm":
        rep = check_martingale_density(y, problem.integrand.price)
        out["martingale_density"] = {
            "ok": rep.ok, "residual": rep.max_residual, "zero": rep.is_zero,
        }
        out["density_dual_value"] = alm_dual_value(problem, u, y)
        if not np.isfinite(out["density_dual_value"]):
            out["density_dual_value"] = None
    if family == "bolza":
        try:
            val = bolza_dual_value(problem, u, y)
            out["stage_conjugate_dual_value"] = val if np.isfinite(val) else None
        except ValueError:
            out["stage_conjugate_dual_value"] = None
    return out


def _checker_for(family: str) -> str:
    return {
        "generic": "saddle",
        "constrained": "kkt",
        "alm": "alm",
        "bolza": "euler-lagrange",
        "kabanov": "cps",
    }[family]


def _run_check(problem, family, params, cfg, checker: str):
    u = params["u"]
    cand = params["candidate"] or {}
    x = cand.get("x")
    y = cand.get("y")
    v = cand.get("v")
    if x is None:
        primal = solve_primal(problem, u, cfg)
        if primal.status != "optimal":
            return None, primal.status
        x = primal.optimizer
    if y is None:
        dual = solve_dual(problem, u, cfg)
        y = dual.optimizer
        if y is None:
            return None, dual.status
    if v is None and checker in ("saddle", "kkt"):
        bound = dual_via_orthocomplement(problem, y, cfg)
        v = bound.v
        if v is None:
            v = StochasticProcess.zeros(problem.tree, problem.n_dims)
    tol = cfg.tol if cfg.tol > 1e-7 else 1e-6
    if checker == "saddle":
        return check_saddle(problem, x, u, y, v, tol), None
    if checker == "kkt":
        return check_kkt(problem, x, u, y, v, tol), None
    if checker == "alm":
        return check_alm(problem, x, u, y, tol), None
    if checker == "euler-lagrange":
        return check_euler_lagrange(problem, x, u, y, tol), None
    if checker == "hamiltonian":
        return check_hamiltonian_system(problem, x, u, y, tol), None
    if checker == "cps":
        z = cand.get("z")
        k = cand.get("k")
        if z is None or k is None:
            z, k = _split_zk(problem, x)
        d = problem.n_dims[0] // 2
        tree = problem.tree
        uz = StochasticProcess(tree, tuple(
            u.stage(t)[:, :d] for t in range(tree.stage_count)))
        if y.dims[0] == 2 * d:
            y = StochasticProcess(tree, tuple(
                y.stage(t)[:, :d] for t in range(tree.stage_count)))
        return check_consistent_price_system(problem, z, k, uz, y, tol), None
    raise ProblemFileError(f"unknown checker '{checker}'", "--checker")


def _certificate_block(cert) -> dict:
    return {
        "verdict": cert.verdict,
        "tolerance": cert.tol,
        "max_residual": cert.max_residual if np.isfinite(cert.max_residual) else None,
        "reason": cert.reason,
        "rows": [
            {k: (v if not isinstance(v, float) or np.isfinite(v) else None)
             for k, v in row.items()}
            for row in cert.rows
        ],
    }


def run(argv) -> tuple[int, dict]:
    """Execute one command; returns (exit_code, report)."""
    parser = argparse.ArgumentParser(
        prog="stochdual",
        description="scenario-tree convex duality: solve, dualize, certify",
    )
    parser.add_argument("command",
                        choices=["solve", "dualize", "gap", "check", "report"])
    parser.add_argument("problem_file")
    parser.add_argument("--tol", type=float, default=None)
    parser.add_argument("--max-iter", dest="max_iter", type=int, default=None)
    parser.add_argument("--method", choices=["auto", "polyhedral", "subgradient"],
                        default=None)
    parser.add_argument("--step-constant", dest="step_constant", type=float,
                        default=None)
    parser.add_argument("--checker", default=None,
                        choices=["saddle", "kkt", "alm", "euler-lagrange",
                                 "hamiltonian", "cps"])
    parser.add_argument("--json", action="store_true")
    try:
        args = parser.parse_args(argv)
    except SystemExit:
        return EXIT_USAGE, {"error": "usage"}

    try:
        problem, family, params, solver_sec, digest = parse_problem_file(args.problem_file)
    except ProblemFileError as exc:
        return EXIT_USAGE, {"error": str(exc), "field": exc.field_path}

    cfg = _config(solver_sec, args)
    report = {
        "command": args.command,
        "input_digest": digest,
        "family": family,
        "tree": {"leaves": problem.tree.n_leaves,
                 "stages": problem.tree.stage_count},
        "threads": _threads(),
    }
    code = EXIT_OK
    u = params["u"]

    def covers(name):
        return args.command in (name, "report")

    if covers("solve"):
        primal = solve_primal(problem, u, cfg)
        report["primal"] = _solve_block(primal)
        if primal.status == "max-iter":
            code = max(code, EXIT_NO_CONVERGENCE)
    if covers("dualize") or covers("gap"):
        gap_rep = duality_gap(problem, u, cfg)
        report["primal"] = _solve_block(gap_rep.primal)
        report["dual"] = _solve_block(gap_rep.dual)
        report["gap"] = gap_rep.gap if np.isfinite(gap_rep.gap) else None
        if args.command in ("dualize", "report"):
            report["dual_representation"] = _dual_representation(
                problem, family, u, gap_rep.dual, cfg)
        if "max-iter" in (gap_rep.primal.status, gap_rep.dual.status):
            code = max(code, EXIT_NO_CONVERGENCE)
    if covers("check"):
        checker = args.checker or _checker_for(family)
        cert, failure = _run_check(problem, family, params, cfg, checker)
        if cert is None:
            report["certificate"] = {"verdict": "unavailable", "reason": failure}
            code = max(code, EXIT_NO_CONVERGENCE)
        else:
            report["checker"] = checker
            report["certificate"] = _certificate_block(cert)
            if cert.verdict == "fail":
                code = EXIT_CHECK_FAIL
            elif cert.verdict == "degenerate":
                code = max(code, EXIT_DEGENERATE)

    report["exit_code"] = code
    return code, report


def render_text(report: dict) -> str:
    lines = []
    width = 22
    for key in ("command", "family", "input_digest"):
        if key in report:
            lines.append(f"{key + ':':<{width}}{report[key]}")
    if "tree" in report:
        t = report["tree"]
        lines.append(f"{'tree:':<{width}}{t['leaves']} leaves, {t['stages']} stages")
    for block in ("primal", "dual"):
        if block in report:
            b = report[block]
            val = "inf" if b["value"] is None else f"{b['value']:.12g}"
            lines.append(
                f"{block + ' value:':<{width}}{val}  [{b['status']}, "
                f"{b['iterations']} iterations, {b['method']}]"
            )
    if "gap" in report:
        gap = report["gap"]
        lines.append(f"{'duality gap:':<{width}}"
                     f"{'inf' if gap is None else f'{gap:.3e}'}")
    if "dual_representation" in report:
        for k, v in sorted(report["dual_representation"].items()):
            lines.append(f"{k + ':':<{width}}{v}")
    if "certificate" in report:
        cert = report["certificate"]
        lines.append(f"{'verdict:':<{width}}{cert['verdict']}")
        if cert.get("reason"):
            lines.append(f"{'reason:':<{width}}{cert['reason']}")
        rows = cert.get("rows", [])
        if rows:
            lines.append("residuals:")
            for row in rows:
                where = ", ".join(
                    f"{k}={row[k]}" for k in ("leaf", "stage", "block", "constraint")
                    if k in row
                )
                res = row["residual"]
                res_s = "inf" if res is None else f"{res:.3e}"
                mark = "ok" if row["ok"] else "FAIL"
                lines.append(f"  {row['condition']:<28}{res_s:>12}  {mark:<4}  {where}")
    lines.append(f"{'exit code:':<{width}}{report.get('exit_code', 0)}")
    return "\n".join(lines)


def main() -> int:
    argv = sys.argv[1:]
    code, report = run(argv)
    as_json = "--json" in argv
    if "error" in report:
        print(f"error: {report['error']}", file=sys.stderr)
        return code
    if as_json:
        print(json.dumps(report, sort_keys=True, indent=2))
    else:
        print(render_text(report))
    return code


if __name__ == "__main__":
    sys.exit(main())
