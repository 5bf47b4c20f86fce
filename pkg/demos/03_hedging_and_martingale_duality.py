"""Hedging on a binomial tree: the dual of the optimal-investment problem
runs over positive multiples of martingale densities, and the optimal dual
is the risk-neutral density direction.
"""

import numpy as np

from stochdual import (
    Quadratic,
    StochasticProcess,
    alm_dual_value,
    build_alm,
    check_alm,
    check_martingale_density,
    duality_gap,
    solve_dual,
    solve_primal,
)
from stochdual.tree import build_tree

# %% Market: s0 = 1, up to 2 or down to 1/2 with equal weights.
tree = build_tree(["1/2", "1/2"], [[[0, 1]], [[0], [1]]])
price = StochasticProcess.from_stage_values(tree, [[[1.0], [1.0]], [[2.0], [0.5]]])
problem = build_alm(tree, Quadratic([0.5]), price)

# %% A deterministic liability of 1 at the horizon.
u = StochasticProcess.from_stage_values(tree, [np.zeros((2, 0)), [[1.0], [1.0]]])
primal = solve_primal(problem, u)
print("optimal hedge x0:", primal.optimizer.stage(0)[0, 0])
print("primal value:", primal.value)

# %% The dual maximizer is a positive multiple of the martingale density.
dual = solve_dual(problem, u)
y = dual.optimizer.stage(1).ravel()
print("dual optimizer y:", y)
print("normalised direction:", y / (tree.probabilities @ y))
print("martingale density?", bool(check_martingale_density(y, price)))
print("duality gap:", duality_gap(problem, u).gap)

# %% The density-cone dual value agrees with the conjugate route.
print("density dual value:", alm_dual_value(problem, u, dual.optimizer))

# %% And the optimality certificate closes: the residual wealth sits in the
# disutility subdifferential at the density.
cert = check_alm(problem, primal.optimizer, u, dual.optimizer)
print("certificate verdict:", cert.verdict, " worst residual:", cert.max_residual)
