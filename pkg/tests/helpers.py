"""Shared independent oracles and random generators for the test suite.

Oracles here are deliberately naive (vertex enumeration, dense grids) and
never call the code paths they are checking.
"""

import itertools

import numpy as np

from stochdual.convex import (
    Affine,
    AffinePrecomposition,
    Entropy,
    Exponential,
    FiniteSum,
    PiecewiseLinear,
    Quadratic,
    SeparableSum,
    absolute_value,
    indicator_interval,
    indicator_nonneg,
    indicator_nonpos,
)
from stochdual.tree import ScenarioTree, StochasticProcess, build_tree


# ---------------------------------------------------------------------------
# LP oracle: vertex enumeration (assumes a bounded feasible polytope)
# ---------------------------------------------------------------------------


def lp_by_enumeration(c, a_ub, b_ub, a_eq=None, b_eq=None, tol=1e-8):
    """Minimize c.x over a polytope by enumerating basic feasible points."""
    c = np.asarray(c, dtype=float)
    n = c.size
    a_ub = np.asarray(a_ub, dtype=float).reshape(-1, n)
    b_ub = np.asarray(b_ub, dtype=float).ravel()
    rows = [(a_ub[i], b_ub[i]) for i in range(a_ub.shape[0])]
    eqs = []
    if a_eq is not None:
        a_eq = np.asarray(a_eq, dtype=float).reshape(-1, n)
        b_eq = np.asarray(b_eq, dtype=float).ravel()
        eqs = [(a_eq[i], b_eq[i]) for i in range(a_eq.shape[0])]
    best, best_x = np.inf, None
    need = n - len(eqs)
    for combo in itertools.combinations(range(len(rows)), need):
        A = np.array([rows[i][0] for i in combo] + [e[0] for e in eqs])
        b = np.array([rows[i][1] for i in combo] + [e[1] for e in eqs])
        if A.shape[0] != n:
            continue
        try:
            x = np.linalg.solve(A, b)
        except np.linalg.LinAlgError:
            continue
        if np.all(a_ub @ x <= b_ub + tol) and all(
            abs(e[0] @ x - e[1]) <= tol for e in eqs
        ):
            val = float(c @ x)
            if val < best:
                best, best_x = val, x
    return best, best_x


# ---------------------------------------------------------------------------
# grid minimization oracle for compiled objectives
# ---------------------------------------------------------------------------


def grid_minimize(value_many, n_free, lo=-10.0, hi=10.0, step=0.01,
                  chunk=2_000_000):
    """Exhaustive minimization of a vectorised objective over a grid."""
    axis = np.arange(lo, hi + step / 2, step)
    grids = [axis] * n_free
    best, best_x = np.inf, None
    if n_free == 0:
        v = value_many(np.zeros((1, 0)))[0]
        return float(v), np.zeros(0)
    if n_free == 1:
        X = axis.reshape(-1, 1)
        vals = value_many(X)
        i = int(np.argmin(vals))
        return float(vals[i]), X[i]
    # chunk over the first axis to bound memory
    rest = np.array(list(itertools.product(*grids[1:])))
    per = max(1, chunk // max(1, rest.shape[0]))
    for start in range(0, axis.size, per):
        block = axis[start:start + per]
        X = np.column_stack([
            np.repeat(block, rest.shape[0]),
            np.tile(rest, (block.size, 1)).reshape(-1, n_free - 1),
        ])
        vals = value_many(X)
        i = int(np.argmin(vals))
        if vals[i] < best:
            best, best_x = float(vals[i]), X[i]
    return best, best_x


# ---------------------------------------------------------------------------
# random catalog functions
# ---------------------------------------------------------------------------


def random_scalar_function(rng, smooth_only=False):
    """A random 1-d catalog function; used for conjugate/residual sweeps."""
    choices = ["quadratic", "affine", "pwl", "abs", "entropy", "exponential",
               "interval", "nonneg", "nonpos"]
    if smooth_only:
        choices = ["quadratic", "exponential"]
    kind = rng.choice(choices)
    if kind == "quadratic":
        return Quadratic([rng.uniform(0.1, 2.0)], [rng.normal()], rng.normal())
    if kind == "affine":
        return Affine([rng.normal()], rng.normal())
    if kind == "pwl":
        k = int(rng.integers(1, 4))
        breaks = np.sort(rng.uniform(-3, 3, k))
        breaks += np.arange(k) * 1e-3  # enforce strict increase
        slopes = np.sort(rng.normal(size=k + 1) * 2)
        return PiecewiseLinear(breaks, slopes, anchor=(float(breaks[0]), rng.normal()))
    if kind == "abs":
        return absolute_value().scaled(rng.uniform(0.5, 3.0))
    if kind == "entropy":
        return Entropy(rng.uniform(0.5, 2.0), rng.normal(), rng.normal())
    if kind == "exponential":
        return Exponential(rng.uniform(0.5, 2.0), rng.uniform(0.5, 1.5), rng.normal())
    if kind == "interval":
        lo = rng.uniform(-4, 0)
        return indicator_interval(lo, lo + rng.uniform(0.5, 4))
    if kind == "nonneg":
        return indicator_nonneg()
    return indicator_nonpos()


def random_composite_function(rng, dim=2):
    """Random separable/precomposed/summed function on R^dim."""
    roll = rng.integers(0, 3)
    if roll == 0:
        return SeparableSum([random_scalar_function(rng) for _ in range(dim)])
    if roll == 1:
        M = rng.normal(size=(dim, dim))
        M += np.eye(dim) * (2 + abs(rng.normal()))  # keep it invertible
        inner = Quadratic(rng.uniform(0.1, 1.0, dim), rng.normal(size=dim))
        return AffinePrecomposition(inner, M, rng.normal(size=dim))
    return FiniteSum([
        Quadratic(rng.uniform(0.1, 1.0, dim)),
        Affine(rng.normal(size=dim), rng.normal()),
    ])


# ---------------------------------------------------------------------------
# shared trees
# ---------------------------------------------------------------------------


def _catalog_samples():
    from stochdual.convex import indicator_point

    return [
        Quadratic([0.5]),
        Quadratic([1.3], [0.7], -0.2),
        Affine([1.5], 0.3),
        absolute_value(),
        PiecewiseLinear([-1.0, 2.0], [-2.0, 0.5, 3.0], anchor=(0.0, 1.0)),
        PiecewiseLinear([0.5], [0.0, 1.0], lo=-2.0, anchor=(0.0, 0.0)),
        indicator_interval(-1.0, 3.0),
        indicator_nonneg(),
        indicator_nonpos(),
        indicator_point(1.5, 0.25),
        Entropy(1.0, 0.0, 0.0),
        Entropy(0.7, 0.4, -0.1),
        Exponential(1.0, 1.0, 0.0),
        Exponential(2.0, 0.5, 1.0),
    ]


def two_leaf_tree(p=(0.5, 0.5)):
    return build_tree(p, [[[0, 1]], [[0], [1]]])


def random_catalog_problem(rng):
    """Random solvable instance from the quadratic families: tracking-type,
    hedging with a random adapted price, or dynamic quadratic stage costs."""
    from stochdual.integrand import AlmIntegrand, BolzaIntegrand, BolzaStage
    from stochdual.solver import Problem
    from stochdual.tree import adapted_projection

    from stochdual.integrand import GenericIntegrand, KabanovStage
    from stochdual.convex import Polyhedron

    roll = rng.integers(0, 4)
    tree = random_small_tree(rng)
    if roll == 3:
        # one-currency market: trade set z <= 0, quadratic stage disutility
        C = Polyhedron.from_cone_generators([[-1.0]])
        stages = [
            [KabanovStage(Quadratic([rng.uniform(0.3, 1.2)]), C,
                          terminal=(t == tree.stage_count - 1))
             for _ in tree.blocks(t)]
            for t in range(tree.stage_count)
        ]
        from stochdual.integrand import BolzaIntegrand
        from stochdual.solver import Problem
        return Problem(tree, BolzaIntegrand(tree, stages))
    if roll == 0:
        n_dims = [0] * tree.stage_count
        n_dims[0] = 1
        m_dims = [0] * tree.stage_count
        m_dims[-1] = 1
        w = rng.uniform(0.2, 1.5)
        joint = AffinePrecomposition(Quadratic([w]), np.array([[1.0, -1.0]]))
        return Problem(tree, GenericIntegrand(tree, n_dims, m_dims, [joint]))
    if roll == 1:
        price_vals = [np.ones((tree.n_leaves, 1))]
        for t in range(1, tree.stage_count):
            step = adapted_projection(StochasticProcess(
                tree, tuple(
                    rng.uniform(-0.4, 0.6, (tree.n_leaves, 1)) if r == t
                    else np.zeros((tree.n_leaves, 1))
                    for r in range(tree.stage_count)
                )
            )).stage(t)
            price_vals.append(price_vals[-1] + step)
        price = StochasticProcess(tree, tuple(price_vals))
        f = AlmIntegrand(tree, [Quadratic([rng.uniform(0.3, 1.0)])], price)
        return Problem(tree, f)
    stages = [
        [BolzaStage(SeparableSum([
            Quadratic([rng.uniform(0.2, 1.5)], [rng.normal() * 0.3]),
            Quadratic([rng.uniform(0.2, 1.5)]),
        ]), 1) for _ in tree.blocks(t)]
        for t in range(tree.stage_count)
    ]
    return Problem(tree, BolzaIntegrand(tree, stages))


def random_small_tree(rng, max_leaves=8):
    """Random nested tree with at most ``max_leaves`` leaves."""
    depth = int(rng.integers(1, 4))
    parts = [[[0]]]
    for _ in range(depth):
        prev_leaves = parts[-1]
        count = 0
        expand = {}
        for block in prev_leaves:
            for leaf in block:
                k = int(rng.integers(1, 3))
                expand[leaf] = list(range(count, count + k))
                count += k
        if count > max_leaves:
            break
        parts = [
            [[c for leaf in block for c in expand[leaf]] for block in stage]
            for stage in parts
        ]
        parts.append([expand[leaf] for block in prev_leaves for leaf in block])
    n = sum(len(b) for b in parts[-1])
    probs = rng.uniform(0.2, 1.0, n)
    probs /= probs.sum()
    return build_tree(probs, parts)


def random_process(rng, tree, dims):
    return StochasticProcess(
        tree, tuple(rng.normal(size=(tree.n_leaves, d)) for d in dims)
    )


CATALOG_SAMPLES = _catalog_samples()
