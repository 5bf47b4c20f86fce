"""Finite-dimensional solves over scenario-tree variables.

A problem couples a tree with a parametric integrand.  Adapted decisions
are parameterised by one vector per information block, so adaptedness is
structural and every solve below is an unconstrained-variable convex
program:

  * primal:       minimize  E f(x, u)      over adapted x
  * dual value:   phi*(y) = -inf_x E l(x, y)   (same machinery)
  * upper bound:  inf over v in the annihilator of E f*(v, y)
  * dual solve:   maximize <u, y> - phi*(y)

Quadratic-plus-polyhedral instances route to the active-set QP path and
solve to machine precision; everything else falls back to a projected
subgradient method with diminishing steps c/sqrt(k).  The dual solve
recovers its maximizer from primal optimality when the model structure
pins it (gradients of smooth integrands, constraint multipliers), then
verifies the value by an honest inner solve; otherwise it ascends with
supergradients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .convex import ConvexFunction, NoClosedFormError, domain_polyhedron
from .integrand import (
    MINUS_INF,
    BolzaIntegrand,
    ConstrainedIntegrand,
    KabanovStage,
    ParametricIntegrand,
)
from .qp import project_onto_polyhedron, solve_qp
from .tree import (
    ScenarioTree,
    StochasticProcess,
    adapted_projection,
    pairing,
)

__all__ = [
    "Problem",
    "SolverConfig",
    "SolveResult",
    "DualObjective",
    "OrthoBound",
    "GapReport",
    "AdaptedLayout",
    "solve_primal",
    "dual_objective",
    "solve_dual",
    "dual_via_orthocomplement",
    "duality_gap",
    "primal_objective",
]

INF = float("inf")


@dataclass(frozen=True)
class Problem:
    """A scenario tree plus the integrand defining E f(x, u)."""

    tree: ScenarioTree
    integrand: ParametricIntegrand

    def __post_init__(self):
        if self.integrand.tree is not self.tree:
            raise ValueError("integrand was built on a different tree")

    @property
    def n_dims(self):
        return self.integrand.n_dims

    @property
    def m_dims(self):
        return self.integrand.m_dims

    @property
    def tag(self):
        return self.integrand.tag


@dataclass
class SolverConfig:
    max_iter: int = 100_000
    tol: float = 1e-7
    feas_tol: float = 1e-8
    step_constant: float | None = None
    method: str = "auto"  # auto | polyhedral | subgradient
    ascent_iter: int = 1000


@dataclass
class SolveResult:
    optimizer: StochasticProcess | None
    value: float
    iterations: int
    residual: float
    status: str  # optimal | unbounded | infeasible | max-iter
    method: str = ""

    def __repr__(self):
        return (f"SolveResult(status={self.status!r}, value={self.value:.10g}, "
                f"iterations={self.iterations}, residual={self.residual:.2e})")


@dataclass
class DualObjective:
    """phi*(y) together with the lower-Lagrangian variant and inner data."""

    value: float
    lower_value: float | None
    minimizer: StochasticProcess | None
    inner_status: str


@dataclass
class OrthoBound:
    value: float
    v: StochasticProcess | None
    status: str


@dataclass
class GapReport:
    gap: float
    primal: SolveResult
    dual: SolveResult


# ---------------------------------------------------------------------------
# adapted-variable layout
# ---------------------------------------------------------------------------


class AdaptedLayout:
    """One free vector per (stage, block); leaves embed by selection."""

    def __init__(self, tree: ScenarioTree, dims):
        self.tree = tree
        self.dims = tuple(int(d) for d in dims)
        self.offsets = {}
        width = 0
        for t in range(tree.stage_count):
            for b in range(len(tree.blocks(t))):
                self.offsets[(t, b)] = width
                width += self.dims[t]
        self.width = width
        stage_off = np.concatenate([[0], np.cumsum(self.dims)]).astype(int)
        self._stage_off = stage_off
        self._leaf_mats = {}

    def leaf_matrix(self, leaf: int) -> np.ndarray:
        mat = self._leaf_mats.get(leaf)
        if mat is None:
            n_total = self._stage_off[-1]
            mat = np.zeros((n_total, self.width))
            for t in range(self.tree.stage_count):
                d = self.dims[t]
                if d == 0:
                    continue
                b = self.tree.block_of(t, leaf)
                off = self.offsets[(t, b)]
                mat[self._stage_off[t]:self._stage_off[t + 1], off:off + d] = np.eye(d)
            self._leaf_mats[leaf] = mat
        return mat

    def to_process(self, w) -> StochasticProcess:
        w = np.asarray(w, dtype=float).ravel()
        arrays = []
        for t in range(self.tree.stage_count):
            d = self.dims[t]
            arr = np.zeros((self.tree.n_leaves, d))
            for b, block in enumerate(self.tree.blocks(t)):
                off = self.offsets[(t, b)]
                arr[list(block)] = w[off:off + d]
            arrays.append(arr)
        return StochasticProcess(self.tree, tuple(arrays))

    def from_process(self, proc: StochasticProcess) -> np.ndarray:
        w = np.zeros(self.width)
        for t in range(self.tree.stage_count):
            d = self.dims[t]
            for b, block in enumerate(self.tree.blocks(t)):
                off = self.offsets[(t, b)]
                w[off:off + d] = proc.stage(t)[block[0]]
        return w


# ---------------------------------------------------------------------------
# compiled objectives
# ---------------------------------------------------------------------------


@dataclass
class _Term:
    weight: float
    fn: ConvexFunction
    mat: np.ndarray
    off: np.ndarray
    leaf: int


class CompiledObjective:
    """sum_k weight_k * fn_k(M_k w + m_k) over w in R^width."""

    def __init__(self, width: int, terms: list[_Term]):
        self.width = width
        self.terms = terms

    def value(self, w) -> float:
        w = np.asarray(w, dtype=float).ravel()
        total = 0.0
        for t in self.terms:
            v = t.fn.value(t.mat @ w + t.off)
            if v == INF:
                return INF
            total += t.weight * v
        return total

    def value_many(self, W) -> np.ndarray:
        W = np.asarray(W, dtype=float)
        total = np.zeros(W.shape[0])
        for t in self.terms:
            total = total + t.weight * t.fn.value_many(W @ t.mat.T + t.off)
        return total

    def subgradient(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=float).ravel()
        g = np.zeros(self.width)
        for t in self.terms:
            g += t.weight * (t.mat.T @ t.fn.subgradient(t.mat @ w + t.off))
        return g

    def qp_data(self):
        """Lowered quadratic program, or None off the polyhedral path.

        Kinked piecewise-linear summands become epigraph variables: one
        auxiliary coordinate per atom, bounded below by the supporting
        lines of the (probability-weighted) piece structure.
        """
        P = np.zeros((self.width, self.width))
        q = np.zeros(self.width)
        c = 0.0
        G_rows, h_rows, labels = [], [], []
        A_rows, b_rows = [], []
        atoms = []  # (row in base coords, offset, weighted pwl)
        for t in self.terms:
            form = t.fn.qp_form()
            if form is None:
                return None
            form = form.compose(t.mat, t.off)
            P += t.weight * form.P
            q += t.weight * form.q
            c += t.weight * form.c
            if form.G.shape[0]:
                G_rows.append(form.G)
                h_rows.append(form.h)
                labels.extend((t.leaf, lab) for lab in form.labels)
            if form.A.shape[0]:
                A_rows.append(form.A)
                b_rows.append(form.b)
            for row, off, pwl in form.epi:
                atoms.append((row, off, pwl.scaled(t.weight)))
        n_aux = len(atoms)
        total = self.width + n_aux
        G = np.vstack(G_rows) if G_rows else np.zeros((0, self.width))
        h = np.concatenate(h_rows) if h_rows else np.zeros(0)
        A = np.vstack(A_rows) if A_rows else np.zeros((0, self.width))
        b = np.concatenate(b_rows) if b_rows else np.zeros(0)
        if n_aux == 0:
            return P, q, c, G, h, A, b, labels, self.width
        Pt = np.zeros((total, total)); Pt[:self.width, :self.width] = P
        qt = np.zeros(total); qt[:self.width] = q
        qt[self.width:] = 1.0  # each epigraph variable enters at weight one
        Gt = [np.hstack([G, np.zeros((G.shape[0], n_aux))])]
        ht = [h]
        for i, (row, off, pwl) in enumerate(atoms):
            for slope, intercept in pwl.supporting_lines():
                line = np.zeros(total)
                line[:self.width] = slope * row
                line[self.width + i] = -1.0
                Gt.append(line.reshape(1, -1))
                ht.append(np.array([-(intercept + slope * off)]))
                labels.append(None)
            if pwl.hi != INF:
                line = np.zeros(total); line[:self.width] = row
                Gt.append(line.reshape(1, -1)); ht.append(np.array([pwl.hi - off]))
                labels.append(None)
            if pwl.lo != -INF:
                line = np.zeros(total); line[:self.width] = -row
                Gt.append(line.reshape(1, -1)); ht.append(np.array([off - pwl.lo]))
                labels.append(None)
        At = np.hstack([A, np.zeros((A.shape[0], n_aux))])
        return (Pt, qt, c, np.vstack(Gt), np.concatenate(ht), At, b, labels,
                self.width)

    def constraint_rows(self):
        """Domain rows of every term (used by the projected subgradient path)."""
        G_rows, h_rows, A_rows, b_rows = [], [], [], []
        for t in self.terms:
            dom = domain_polyhedron(t.fn)
            if dom is None:
                continue
            if dom.a_ub.shape[0]:
                G_rows.append(dom.a_ub @ t.mat)
                h_rows.append(dom.b_ub - dom.a_ub @ t.off)
            if dom.a_eq.shape[0]:
                A_rows.append(dom.a_eq @ t.mat)
                b_rows.append(dom.b_eq - dom.a_eq @ t.off)
        G = np.vstack(G_rows) if G_rows else np.zeros((0, self.width))
        h = np.concatenate(h_rows) if h_rows else np.zeros(0)
        A = np.vstack(A_rows) if A_rows else np.zeros((0, self.width))
        b = np.concatenate(b_rows) if b_rows else np.zeros(0)
        return G, h, A, b


@dataclass
class _MinResult:
    status: str
    x: np.ndarray | None
    value: float
    iterations: int
    residual: float
    method: str
    multipliers: np.ndarray | None = None
    labels: list | None = None


def _minimize(obj: CompiledObjective, cfg: SolverConfig) -> _MinResult:
    if obj.width == 0:
        return _MinResult("optimal", np.zeros(0), obj.value(np.zeros(0)), 0, 0.0, "direct")
    data = obj.qp_data() if cfg.method in ("auto", "polyhedral") else None
    if data is not None:
        P, q, c, G, h, A, b, labels, n_main = data
        res = solve_qp(P, q, c, G, h, A, b)
        status = {"maxiter": "max-iter"}.get(res.status, res.status)
        resid = 0.0
        if res.x is not None and G.shape[0]:
            resid = max(resid, float(np.max(G @ res.x - h, initial=0.0)))
        if res.x is not None and A.shape[0]:
            resid = max(resid, float(np.max(np.abs(A @ res.x - b), initial=0.0)))
        x = res.x[:n_main] if res.x is not None else None
        return _MinResult(status, x, res.value, res.iterations, resid,
                          "polyhedral", res.ineq_multipliers, labels)
    if cfg.method == "polyhedral":
        raise NoClosedFormError(
            "objective is not quadratic-plus-polyhedral; use method='auto'"
        )
    return _subgradient_minimize(obj, cfg)


def _subgradient_minimize(obj: CompiledObjective, cfg: SolverConfig) -> _MinResult:
    G, h, A, b = obj.constraint_rows()
    constrained = G.shape[0] or A.shape[0]

    def project(w):
        if not constrained:
            return w
        if float(np.max(G @ w - h, initial=0.0)) <= cfg.feas_tol and \
           float(np.max(np.abs(A @ w - b), initial=0.0)) <= cfg.feas_tol:
            return w
        return project_onto_polyhedron(w, G, h, A, b)

    try:
        w = project(np.zeros(obj.width))
    except ValueError:
        return _MinResult("infeasible", None, INF, 0, INF, "subgradient")
    f = obj.value(w)
    if f == INF:  # boundary roundoff; nudge with a tiny interior step
        return _MinResult("infeasible", None, INF, 0, INF, "subgradient")
    g = obj.subgradient(w)
    c0 = cfg.step_constant or (1.0 + abs(f)) / (1.0 + float(np.linalg.norm(g)))
    best_w, best_f = w.copy(), f
    window_best = f
    check_every = 200
    for k in range(1, cfg.max_iter + 1):
        w = project(w - (c0 / np.sqrt(k)) * g)
        f = obj.value(w)
        if f < best_f:
            best_f, best_w = f, w.copy()
        if best_f < -1e12:
            return _MinResult("unbounded", best_w, -INF, k, 0.0, "subgradient")
        if k % check_every == 0:
            if window_best - best_f <= cfg.tol * max(1.0, abs(best_f)):
                resid = 0.0
                if constrained:
                    resid = max(
                        float(np.max(G @ best_w - h, initial=0.0)),
                        float(np.max(np.abs(A @ best_w - b), initial=0.0)) if A.shape[0] else 0.0,
                    )
                return _MinResult("optimal", best_w, best_f, k, max(resid, 0.0),
                                  "subgradient")
            window_best = best_f
        g = obj.subgradient(w)
    return _MinResult("max-iter", best_w, best_f, cfg.max_iter, 0.0, "subgradient")


# ---------------------------------------------------------------------------
# compilation helpers
# ---------------------------------------------------------------------------


def _u_vectors(p: Problem, u: StochasticProcess):
    if u.dims != p.m_dims:
        raise ValueError(f"parameter dims {u.dims} do not match {p.m_dims}")
    return [u.leaf_vector(leaf) for leaf in range(p.tree.n_leaves)]


def _y_vectors(p: Problem, y: StochasticProcess):
    if y.dims != p.m_dims:
        raise ValueError(f"dual dims {y.dims} do not match {p.m_dims}")
    return [y.leaf_vector(leaf) for leaf in range(p.tree.n_leaves)]


def primal_objective(p: Problem, u: StochasticProcess):
    """Compiled objective of the primal solve (exposed for oracles/tests)."""
    layout = AdaptedLayout(p.tree, p.n_dims)
    uvecs = _u_vectors(p, u)
    terms = []
    for leaf in range(p.tree.n_leaves):
        fn = p.integrand.primal_function(leaf, uvecs[leaf])
        terms.append(_Term(float(p.tree.probabilities[leaf]), fn,
                           layout.leaf_matrix(leaf), np.zeros(fn.dim), leaf))
    return layout, CompiledObjective(layout.width, terms)


def solve_primal(p: Problem, u: StochasticProcess,
                 cfg: SolverConfig | None = None) -> SolveResult:
    """Minimize E f(x, u) over adapted x."""
    cfg = cfg or SolverConfig()
    layout, obj = primal_objective(p, u)
    res = _minimize(obj, cfg)
    opt = layout.to_process(res.x) if res.x is not None and res.status in ("optimal", "max-iter") else None
    return SolveResult(opt, res.value, res.iterations, res.residual, res.status,
                       res.method)


def _lagrangian_objective(p: Problem, y: StochasticProcess):
    layout = AdaptedLayout(p.tree, p.n_dims)
    yvecs = _y_vectors(p, y)
    terms = []
    for leaf in range(p.tree.n_leaves):
        fn = p.integrand.lagrangian_function_of_x(leaf, yvecs[leaf])
        if fn is MINUS_INF:
            return layout, None
        terms.append(_Term(float(p.tree.probabilities[leaf]), fn,
                           layout.leaf_matrix(leaf), np.zeros(fn.dim), leaf))
    return layout, CompiledObjective(layout.width, terms)


def dual_objective(p: Problem, y: StochasticProcess,
                   cfg: SolverConfig | None = None) -> DualObjective:
    """phi*(y) = -inf over adapted x of E l(x, y), plus the lower variant."""
    cfg = cfg or SolverConfig()
    layout, obj = _lagrangian_objective(p, y)
    if obj is None:
        # l = -inf on the feasible slice for some leaf: the infimum diverges
        return DualObjective(INF, INF, None, "unbounded")
    res = _minimize(obj, cfg)
    if res.status == "unbounded":
        return DualObjective(INF, None, None, "unbounded")
    if res.status == "infeasible":
        # l(., y) identically +inf: the model is primal-infeasible for all u
        return DualObjective(-INF, None, None, "infeasible")
    minimizer = layout.to_process(res.x)
    value = -res.value
    lower = _lower_dual_value(p, y, minimizer, value)
    return DualObjective(value, lower, minimizer, res.status)


def _lower_dual_value(p, y, minimizer, value):
    """-inf E lower-l(x, y); coincides with the Lagrangian value whenever
    l(., y) is closed proper, so evaluate at the inner minimizer."""
    try:
        yv = _y_vectors(p, y)
        total = 0.0
        for leaf in range(p.tree.n_leaves):
            lv = p.integrand.lower_lagrangian(leaf, minimizer.leaf_vector(leaf), yv[leaf])
            if lv == -INF:
                return INF
            if lv == INF:
                return None
            total += float(p.tree.probabilities[leaf]) * lv
        return -total
    except NoClosedFormError:
        return None


def dual_via_orthocomplement(p: Problem, y: StochasticProcess,
                             cfg: SolverConfig | None = None) -> OrthoBound:
    """Minimize E f*(v, y) over v with zero conditional means (the chain's
    upper bound)."""
    cfg = cfg or SolverConfig()
    tree = p.tree
    yvecs = _y_vectors(p, y)
    basis = _orthocomplement_basis(tree, p.n_dims)
    K = basis.shape[1]
    n_total = sum(p.n_dims)
    terms = []
    for leaf in range(tree.n_leaves):
        try:
            fn = p.integrand.conjugate_function_of_v(leaf, yvecs[leaf])
        except NoClosedFormError:
            raise
        rows = _leaf_rows(tree, p.n_dims, leaf)
        mat = basis[rows] if K else np.zeros((n_total, 0))
        terms.append(_Term(float(tree.probabilities[leaf]), fn, mat,
                           np.zeros(fn.dim), leaf))
    obj = CompiledObjective(K, terms)
    res = _minimize(obj, cfg)
    if res.status == "infeasible":
        return OrthoBound(INF, None, "infeasible")
    if res.status == "unbounded":
        return OrthoBound(-INF, None, "unbounded")
    v = _expand_orthocomplement(tree, p.n_dims, basis, res.x)
    return OrthoBound(res.value, v, res.status)


def _coord_index(tree, dims, t, leaf, comp, stage_offsets):
    return stage_offsets[t] + leaf * dims[t] + comp


def _leaf_rows(tree, dims, leaf):
    stage_offsets = np.concatenate([[0], np.cumsum([tree.n_leaves * d for d in dims])]).astype(int)
    rows = []
    for t, d in enumerate(dims):
        for comp in range(d):
            rows.append(stage_offsets[t] + leaf * d + comp)
    return np.array(rows, dtype=int)


def _orthocomplement_basis(tree, dims) -> np.ndarray:
    """Columns span {v : blockwise weighted means vanish at every stage}."""
    total = sum(tree.n_leaves * d for d in dims)
    stage_offsets = np.concatenate([[0], np.cumsum([tree.n_leaves * d for d in dims])]).astype(int)
    cols = []
    probs = tree.probabilities
    for t, d in enumerate(dims):
        for block in tree.blocks(t):
            leaves = list(block)
            last = leaves[-1]
            for leaf in leaves[:-1]:
                for comp in range(d):
                    col = np.zeros(total)
                    col[stage_offsets[t] + leaf * d + comp] = 1.0
                    col[stage_offsets[t] + last * d + comp] = -probs[leaf] / probs[last]
                    cols.append(col)
    return np.column_stack(cols) if cols else np.zeros((total, 0))


def _expand_orthocomplement(tree, dims, basis, z) -> StochasticProcess:
    flat = basis @ z if basis.shape[1] else np.zeros(basis.shape[0])
    arrays, at = [], 0
    for d in dims:
        size = tree.n_leaves * d
        arrays.append(flat[at:at + size].reshape(tree.n_leaves, d))
        at += size
    return StochasticProcess(tree, tuple(arrays))


# ---------------------------------------------------------------------------
# dual solve
# ---------------------------------------------------------------------------


def solve_dual(p: Problem, u: StochasticProcess,
               cfg: SolverConfig | None = None) -> SolveResult:
    """Maximize <u, y> - phi*(y); adapted y for dynamic-structure problems."""
    cfg = cfg or SolverConfig()
    primal = solve_primal(p, u, cfg)
    if primal.status == "optimal":
        candidate = _recover_dual_candidate(p, u, primal, cfg)
        if candidate is not None:
            y = candidate
            dob = dual_objective(p, y, cfg)
            if dob.value < INF:
                value = pairing(u, y) - dob.value
                gap = abs(primal.value - value) if np.isfinite(primal.value) else INF
                return SolveResult(y, value, primal.iterations, gap, "optimal",
                                   "recovered")
    return _ascend_dual(p, u, cfg, primal)


def _recover_dual_candidate(p, u, primal, cfg):
    integrand = p.integrand
    tree = p.tree
    uvecs = _u_vectors(p, u)
    x = primal.optimizer
    if x is None:
        return None
    try:
        if isinstance(integrand, ConstrainedIntegrand):
            return _recover_constrained(p, u, primal, cfg)
        if isinstance(integrand, BolzaIntegrand):
            arrays = [np.zeros((tree.n_leaves, d)) for d in p.m_dims]
            for leaf in range(tree.n_leaves):
                xv = x.leaf_vector(leaf)
                uv = uvecs[leaf]
                states = integrand._states(xv)
                for t in range(tree.stage_count):
                    w = integrand._velocity(states, t, uv[integrand.u_slices[t]])
                    stage = integrand.stage_cost(leaf, t)
                    y_t = _stage_dual_gradient(stage, states[t], w)
                    if y_t is None:
                        return None
                    arrays[t][leaf] = y_t
            y = StochasticProcess(tree, tuple(arrays))
            return adapted_projection(y)
        # generic path: gradient of the parameter block of the joint function
        arrays = [np.zeros((tree.n_leaves, d)) for d in p.m_dims]
        n_total = integrand.n_total
        for leaf in range(tree.n_leaves):
            joint = integrand.joint_function(leaf)
            full = np.concatenate([x.leaf_vector(leaf), uvecs[leaf]])
            if joint.value(full) == INF:
                return None
            grad = joint.subgradient(full)[n_total:]
            at = 0
            for t, d in enumerate(p.m_dims):
                arrays[t][leaf] = grad[at:at + d]
                at += d
        return StochasticProcess(tree, tuple(arrays))
    except (NoClosedFormError, ValueError):
        return None


def _recover_constrained(p, u, primal, cfg):
    """Constraint prices from the primal QP multipliers (scaled by 1/p)."""
    layout, obj = primal_objective(p, u)
    data = obj.qp_data()
    if data is None:
        return None
    P, q, c, G, h, A, b, labels, n_main = data
    res = solve_qp(P, q, c, G, h, A, b)
    if res.status != "optimal":
        return None
    arrays = [np.zeros((p.tree.n_leaves, d)) for d in p.m_dims]
    for row, lab in enumerate(labels):
        leaf, tag = lab
        if isinstance(tag, tuple) and tag[0] == "constraint":
            j = tag[1]
            arrays[-1][leaf, j] = res.ineq_multipliers[row] / p.tree.probabilities[leaf]
    return StochasticProcess(p.tree, tuple(arrays))


def _stage_dual_gradient(stage, x_t, w_t):
    """Velocity-block gradient of the stage cost, when it pins the dual."""
    if isinstance(stage, KabanovStage):
        _, k = stage._split_state(np.ravel(x_t))
        try:
            yz = stage.V.subgradient(-k)
        except NoClosedFormError:
            return None
        return np.concatenate([yz, np.zeros(stage.currency_dim)])
    try:
        full = np.concatenate([np.ravel(x_t), np.ravel(w_t)])
        if stage.fn.value(full) == INF:
            return None
        return stage.fn.subgradient(full)[stage.d:]
    except (NoClosedFormError, ValueError):
        return None


def _ascend_dual(p, u, cfg, primal) -> SolveResult:
    """Projected supergradient ascent on y (generic fallback)."""
    tree = p.tree
    y = StochasticProcess.zeros(tree, p.m_dims)
    restrict_adapted = isinstance(p.integrand, BolzaIntegrand)

    def evaluate(yproc):
        dob = dual_objective(p, yproc, cfg)
        return (pairing(u, yproc) - dob.value if dob.value < INF else -INF), dob

    best_val, best_dob = evaluate(y)
    best_y = y
    if best_val == -INF:
        return SolveResult(None, -INF, 0, INF, "infeasible", "ascent")
    step0 = cfg.step_constant or max(1.0, abs(best_val))
    cur_y, cur_val, cur_dob = y, best_val, best_dob
    iters = min(cfg.ascent_iter, cfg.max_iter)
    stalled = 0
    for k in range(1, iters + 1):
        x_star = cur_dob.minimizer
        yvecs = _y_vectors(p, cur_y)
        grads = [np.zeros((tree.n_leaves, d)) for d in p.m_dims]
        ok = True
        for leaf in range(tree.n_leaves):
            u_star = p.integrand.attaining_parameter(
                leaf, x_star.leaf_vector(leaf), yvecs[leaf]
            )
            if u_star is None:
                ok = False
                break
            diff = u.leaf_vector(leaf) - u_star
            at = 0
            for t, d in enumerate(p.m_dims):
                grads[t][leaf] = diff[at:at + d]
                at += d
        if not ok:
            break
        gproc = StochasticProcess(tree, tuple(grads))
        if restrict_adapted:
            gproc = adapted_projection(gproc)
        gnorm = max(np.sqrt(sum(float(np.sum(a * a)) for a in gproc.values)), 1e-12)
        step = step0 / (np.sqrt(k) * gnorm)
        trial_vals = tuple(cur_y.stage(t) + step * gproc.stage(t)
                           for t in range(tree.stage_count))
        trial = StochasticProcess(tree, trial_vals)
        val, dob = evaluate(trial)
        shrink = 0
        while val == -INF and shrink < 20:
            step /= 2.0
            trial = StochasticProcess(tree, tuple(
                cur_y.stage(t) + step * gproc.stage(t) for t in range(tree.stage_count)
            ))
            val, dob = evaluate(trial)
            shrink += 1
        if val == -INF:
            # the supergradient points out of the dual domain; retrying the
            # same face rarely helps, so stop after a few stalled rounds
            stalled += 1
            if stalled >= 3:
                break
            continue
        stalled = 0
        cur_y, cur_val, cur_dob = trial, val, dob
        if val > best_val:
            best_val, best_y, best_dob = val, trial, dob
        if k % 50 == 0 and np.isfinite(primal.value):
            if primal.value - best_val <= cfg.tol * max(1.0, abs(primal.value)):
                break
    gap = primal.value - best_val if np.isfinite(primal.value) else INF
    status = "optimal" if gap <= 1e-5 * max(1.0, abs(primal.value)) else "max-iter"
    return SolveResult(best_y, best_val, iters, max(gap, 0.0), status, "ascent")


def duality_gap(p: Problem, u: StochasticProcess,
                cfg: SolverConfig | None = None) -> GapReport:
    """Primal optimal value minus dual optimal value (with both statuses)."""
    cfg = cfg or SolverConfig()
    primal = solve_primal(p, u, cfg)
    if primal.status == "infeasible":
        dual = SolveResult(None, INF, 0, INF, "not-run")
        return GapReport(INF, primal, dual)
    dual = solve_dual(p, u, cfg)
    if np.isfinite(primal.value) and np.isfinite(dual.value):
        gap = primal.value - dual.value
    else:
        gap = INF
    return GapReport(gap, primal, dual)
