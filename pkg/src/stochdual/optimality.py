"""Certificate checkers: saddle conditions and their model specialisations.

Every subdifferential inclusion is tested through a Fenchel residual,
g(x) + g*(v) - x.v >= 0, which vanishes exactly on the graph of the
subdifferential, so a certificate is a table of nonnegative residuals and
a verdict at a fixed absolute tolerance (problem data are desk scale).
Zero duals in the density-cone models are reported as "degenerate" rather
than pass/fail: the cone of positive density multiples excludes zero, yet
zero duals do arise at trivial optima.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .convex import NoClosedFormError, fenchel_residual, support_attains, support_function
from .duality import check_martingale_density
from .integrand import (
    AlmIntegrand,
    BolzaIntegrand,
    ConstrainedIntegrand,
    KabanovStage,
    MINUS_INF,
)
from .solver import Problem
from .tree import (
    StochasticProcess,
    conditional_expectation,
    in_orthocomplement,
    is_adapted,
)

__all__ = [
    "Certificate",
    "check_saddle",
    "check_kkt",
    "check_alm",
    "check_euler_lagrange",
    "check_hamiltonian_system",
    "check_consistent_price_system",
]

INF = float("inf")
DEFAULT_TOL = 1e-6


@dataclass
class Certificate:
    """Verdict plus the residual table backing it."""

    verdict: str  # pass | fail | degenerate
    tol: float
    rows: list = field(default_factory=list)
    reason: str = ""
    y: StochasticProcess | None = None
    v: StochasticProcess | None = None

    @property
    def ok(self) -> bool:
        return self.verdict == "pass"

    def __bool__(self):
        return self.ok

    @property
    def max_residual(self) -> float:
        finite = [r["residual"] for r in self.rows if np.isfinite(r["residual"])]
        if any(not np.isfinite(r["residual"]) for r in self.rows):
            return INF
        return max(finite, default=0.0)

    def add(self, condition: str, residual: float, tol: float | None = None,
            **where):
        tol = self.tol if tol is None else tol
        self.rows.append({
            "condition": condition,
            "residual": float(residual),
            "ok": bool(residual <= tol),
            **where,
        })

    def finalize(self) -> "Certificate":
        if self.verdict == "degenerate":
            return self
        self.verdict = "pass" if all(r["ok"] for r in self.rows) else "fail"
        return self


def _leafwise(p: Problem, proc: StochasticProcess):
    return [proc.leaf_vector(leaf) for leaf in range(p.tree.n_leaves)]


def check_saddle(p: Problem, x: StochasticProcess, u: StochasticProcess,
                 y: StochasticProcess, v: StochasticProcess,
                 tol: float = DEFAULT_TOL) -> Certificate:
    """Joint subgradient test: per leaf f(x,u) + f*(v,y) - x.v - u.y <= tol,
    with v in the annihilator; the Lagrangian split of the same residual is
    reported alongside when available."""
    cert = Certificate("pending", tol, y=y, v=v)
    if not is_adapted(x):
        cert.verdict = "fail"
        cert.reason = "candidate decision is not adapted"
        return cert
    xs, us, ys, vs = (_leafwise(p, q) for q in (x, u, y, v))
    feasible = True
    for leaf in range(p.tree.n_leaves):
        fval = p.integrand.value(leaf, xs[leaf], us[leaf])
        if fval == INF:
            feasible = False
            cert.add("feasibility", INF, leaf=leaf)
            continue
        star = p.integrand.conjugate_value(leaf, vs[leaf], ys[leaf])
        res = INF if star == INF else \
            fval + star - float(xs[leaf] @ vs[leaf]) - float(us[leaf] @ ys[leaf])
        cert.add("joint-subgradient", max(res, 0.0), leaf=leaf)
        # Lagrangian split: x-part l + f* - x.v, y-part f - u.y - l
        lval = p.integrand.lagrangian(leaf, xs[leaf], ys[leaf])
        if np.isfinite(lval):
            if star < INF:
                cert.add("lagrangian-x", max(lval + star - float(xs[leaf] @ vs[leaf]), 0.0),
                         leaf=leaf)
            cert.add("lagrangian-y", max(fval - float(us[leaf] @ ys[leaf]) - lval, 0.0),
                     leaf=leaf)
    if not feasible:
        cert.verdict = "fail"
        cert.reason = "infeasible candidate: E f(x, u) = +inf"
        return cert
    ortho = in_orthocomplement(v, tol)
    cert.add("annihilator", ortho.max_residual)
    joint_ok = all(r["ok"] for r in cert.rows
                   if r["condition"] in ("joint-subgradient", "annihilator"))
    lagr_rows = [r for r in cert.rows if r["condition"].startswith("lagrangian-")]
    if lagr_rows:
        lagr_ok = all(r["ok"] for r in lagr_rows) and \
            all(r["ok"] for r in cert.rows if r["condition"] == "annihilator")
        cert.add("lagrangian-form-agreement", 0.0 if joint_ok == lagr_ok else INF)
    return cert.finalize()


def check_kkt(p: Problem, x: StochasticProcess, u: StochasticProcess,
              y: StochasticProcess, v: StochasticProcess,
              tol: float = DEFAULT_TOL) -> Certificate:
    """Feasibility, sign, complementary slackness and stationarity of the
    weighted objective, per leaf."""
    f = p.integrand
    if not isinstance(f, ConstrainedIntegrand):
        raise TypeError("check_kkt needs an inequality-constrained problem")
    cert = Certificate("pending", tol, y=y, v=v)
    xs, us, ys, vs = (_leafwise(p, q) for q in (x, u, y, v))
    for leaf in range(p.tree.n_leaves):
        xv, uv, yv = xs[leaf], us[leaf], ys[leaf]
        for j, fj in enumerate(f.constraints[leaf]):
            slack = fj.value(xv) + uv[j]
            cert.add("feasibility", max(slack, 0.0), leaf=leaf, constraint=j)
            cert.add("sign", max(-yv[j], 0.0), leaf=leaf, constraint=j)
            cert.add("complementarity", abs(yv[j] * slack), leaf=leaf, constraint=j)
        weighted = f.lagrangian_function_of_x(leaf, yv)
        if weighted is MINUS_INF:
            cert.add("stationarity", INF, leaf=leaf)
            continue
        try:
            res = fenchel_residual(weighted, xv, vs[leaf])
        except NoClosedFormError:
            res = INF
        cert.add("stationarity", max(res, 0.0), leaf=leaf)
    ortho = in_orthocomplement(v, tol)
    cert.add("annihilator", ortho.max_residual)
    return cert.finalize()


def check_alm(p: Problem, x: StochasticProcess, u: StochasticProcess,
              y: StochasticProcess, tol: float = DEFAULT_TOL) -> Certificate:
    """Density-cone membership plus the disutility subgradient condition;
    the annihilator element is reconstructed from the price increments."""
    f = p.integrand
    if not isinstance(f, AlmIntegrand):
        raise TypeError("check_alm needs a hedging-model problem")
    cert = Certificate("pending", tol, y=y)
    vals = np.array([y.leaf_vector(leaf) for leaf in range(p.tree.n_leaves)]).ravel()
    if np.max(np.abs(vals), initial=0.0) <= tol:
        cert.verdict = "degenerate"
        cert.reason = "zero dual: the density cone excludes it"
        return cert
    report = check_martingale_density(vals, f.price, tol)
    cert.add("martingale-density", max(report.max_residual, report.negativity))
    xs, us = _leafwise(p, x), _leafwise(p, u)
    for leaf in range(p.tree.n_leaves):
        wealth = us[leaf][-1] - float(xs[leaf] @ f.gain_rows[leaf])
        V = f.disutilities[leaf]
        res = fenchel_residual(V, [wealth], [vals[leaf]])
        cert.add("disutility-subgradient", max(res, 0.0), leaf=leaf)
    # v_t = -y ds_{t+1} must have zero conditional means
    arrays = []
    T = p.tree.horizon
    for t in range(T):
        ds = f.price.stage(t + 1) - f.price.stage(t)
        arrays.append(-vals[:, None] * ds)
    arrays.append(np.zeros((p.tree.n_leaves, 0)))
    vproc = StochasticProcess(p.tree, tuple(arrays))
    cert.v = vproc
    cert.add("annihilator", in_orthocomplement(vproc, tol).max_residual)
    return cert.finalize()


def _expected_dual_increments(p: Problem, y: StochasticProcess):
    tree = p.tree
    T = tree.horizon
    out = []
    for t in range(T + 1):
        nxt = y.stage(t + 1) if t < T else np.zeros_like(y.stage(t))
        dy = StochasticProcess(tree, tuple(
            (nxt - y.stage(t)) if r == t else np.zeros_like(y.stage(r))
            for r in range(T + 1)
        ))
        out.append(conditional_expectation(dy, t).stage(t))
    return out


def check_euler_lagrange(p: Problem, x: StochasticProcess, u: StochasticProcess,
                         y: StochasticProcess, tol: float = DEFAULT_TOL) -> Certificate:
    """Stagewise inclusion (E_t dy_{t+1}, y_t) in the stage-cost
    subdifferential at (x_t, dx_t + u_t), via one Fenchel residual per
    information block."""
    f = p.integrand
    if not isinstance(f, BolzaIntegrand):
        raise TypeError("check_euler_lagrange needs a dynamic-structure problem")
    if not is_adapted(y):
        raise ValueError("the dual candidate must be adapted")
    if not is_adapted(u):
        raise ValueError("the parameter must be adapted for the stage conditions")
    cert = Certificate("pending", tol, y=y)
    e_dy = _expected_dual_increments(p, y)
    for t in range(p.tree.stage_count):
        for b, block in enumerate(p.tree.blocks(t)):
            leaf = block[0]
            stage = f.stage_cost(leaf, t)
            x_t = x.stage(t)[leaf]
            x_prev = x.stage(t - 1)[leaf] if t > 0 else np.zeros(f.d)
            w = x_t - x_prev + u.stage(t)[leaf]
            kval = stage.value(x_t, w)
            star = stage.conjugate_value(e_dy[t][leaf], y.stage(t)[leaf])
            if kval == INF or star == INF:
                res = INF
            else:
                res = kval + star - float(x_t @ e_dy[t][leaf]) - float(w @ y.stage(t)[leaf])
            cert.add("stage-subgradient", max(res, 0.0), stage=t, block=b)
    return cert.finalize()


def check_hamiltonian_system(p: Problem, x: StochasticProcess, u: StochasticProcess,
                             y: StochasticProcess, tol: float = DEFAULT_TOL) -> Certificate:
    """The equivalent two-inclusion system through the stage Hamiltonians:
    E_t dy_{t+1} in d_x H_t and u_t + dx_t in d_y [-H_t]."""
    f = p.integrand
    if not isinstance(f, BolzaIntegrand):
        raise TypeError("check_hamiltonian_system needs a dynamic-structure problem")
    if not is_adapted(y):
        raise ValueError("the dual candidate must be adapted")
    cert = Certificate("pending", tol, y=y)
    e_dy = _expected_dual_increments(p, y)
    for t in range(p.tree.stage_count):
        for b, block in enumerate(p.tree.blocks(t)):
            leaf = block[0]
            stage = f.stage_cost(leaf, t)
            x_t = x.stage(t)[leaf]
            y_t = y.stage(t)[leaf]
            x_prev = x.stage(t - 1)[leaf] if t > 0 else np.zeros(f.d)
            w = x_t - x_prev + u.stage(t)[leaf]
            a_t = e_dy[t][leaf]
            h_fn = stage.hamiltonian_function_of_x(y_t)
            if h_fn is MINUS_INF:
                cert.add("state-inclusion", INF, stage=t, block=b)
                cert.add("velocity-inclusion", INF, stage=t, block=b)
                continue
            try:
                h_conj = stage.hamiltonian_x_conjugate(y_t)
                res_x = fenchel_residual(h_fn, x_t, a_t, conjugate=h_conj)
            except NoClosedFormError:
                res_x = INF
            cert.add("state-inclusion", max(res_x, 0.0), stage=t, block=b)
            hval = h_fn.value(x_t)
            kval = stage.value(x_t, w)
            if hval == INF or kval == INF:
                res_y = INF
            else:
                # -H(x,.) is the conjugate of K(x,.), so the residual is
                # K(x,w) - w.y - H(x,y)
                res_y = kval - float(w @ y_t) - hval
            cert.add("velocity-inclusion", max(res_y, 0.0), stage=t, block=b)
    return cert.finalize()


def check_consistent_price_system(p: Problem, z: StochasticProcess,
                                  k: StochasticProcess, u: StochasticProcess,
                                  y: StochasticProcess,
                                  tol: float = DEFAULT_TOL) -> Certificate:
    """Currency-market optimality: y an adapted martingale, consumption
    matched to the dual through the disutility conjugate, and the trade
    supported by the solvency set; conical sets additionally report the
    feasibility / polar-membership / complementarity triple."""
    f = p.integrand
    if not isinstance(f, BolzaIntegrand) or not all(
        isinstance(st, KabanovStage) for blocks in f.stages for st in blocks
    ):
        raise TypeError("check_consistent_price_system needs a currency-market problem")
    if not is_adapted(y):
        raise ValueError("the price system must be adapted")
    tree = p.tree
    T = tree.horizon
    cert = Certificate("pending", tol, y=y)
    if max(float(np.max(np.abs(y.stage(t)), initial=0.0)) for t in range(T + 1)) <= tol:
        cert.verdict = "degenerate"
        cert.reason = "zero dual: not a price system"
        return cert
    # martingale property stops at t = T-1; no terminal convention is used
    for t in range(T):
        dy = y.stage(t + 1) - y.stage(t)
        proc = StochasticProcess(tree, tuple(
            dy if r == t else np.zeros_like(y.stage(r)) for r in range(T + 1)
        ))
        mean = conditional_expectation(proc, t).stage(t)
        cert.add("martingale", float(np.max(np.abs(mean), initial=0.0)), stage=t)
    for t in range(T + 1):
        for b, block in enumerate(tree.blocks(t)):
            leaf = block[0]
            stage = f.stage_cost(leaf, t)
            y_t = y.stage(t)[leaf]
            k_t = k.stage(t)[leaf]
            z_t = z.stage(t)[leaf]
            z_prev = z.stage(t - 1)[leaf] if t > 0 else np.zeros(stage.currency_dim)
            trade = z_t - z_prev + u.stage(t)[leaf] + k_t
            cert.add("trade-feasibility", stage.C.residual(trade), stage=t, block=b)
            Vstar = stage.V.conjugate()
            res_v = fenchel_residual(Vstar, y_t, -k_t, conjugate=stage.V)
            cert.add("consumption-subgradient", max(res_v, 0.0), stage=t, block=b)
            attain = support_attains(stage.C, y_t, trade, tol)
            cert.add("trade-support", attain.residual if np.isfinite(attain.residual)
                     else INF, stage=t, block=b)
            if stage.C.cone:
                sigma = support_function(stage.C, y_t)
                cert.add("polar-membership", abs(sigma) if np.isfinite(sigma) else INF,
                         stage=t, block=b)
                cert.add("complementarity", abs(float(trade @ y_t)), stage=t, block=b)
        if t == T:
            for b, block in enumerate(tree.blocks(t)):
                leaf = block[0]
                zT = z.stage(T)[leaf]
                cert.add("terminal-holdings", float(np.max(np.abs(zT), initial=0.0)),
                         stage=T, block=b)
    return cert.finalize()
