"""A one-period currency market with proportional transaction costs: the
dual variable is a consistent price system, i.e. an adapted martingale in
the polar of the solvency cone with complementary slackness against the
executed trade.
"""

import numpy as np

from stochdual import (
    Polyhedron,
    Quadratic,
    StochasticProcess,
    build_kabanov,
    check_consistent_price_system,
    duality_gap,
    solve_primal,
)
from stochdual.tree import ScenarioTree

# %% Solvency cone from trade generators (exchange rates with friction).
cone = Polyhedron.from_cone_generators(
    [[1.0, -2.0], [-1.0, 0.5], [-1.0, 0.0], [0.0, -1.0]]
)
print("facets:\n", cone.a_ub)

tree = ScenarioTree.deterministic(1)
problem = build_kabanov(tree, [[cone]], [[Quadratic([0.5, 0.5])]])

# %% Endowment of one unit of the first currency; holdings must clear.
u = StochasticProcess.from_stage_values(tree, [[[1.0, 0.0, 0.0, 0.0]]])
res = solve_primal(problem, u)
x = res.optimizer.stage(0)[0]
z, k = x[:2], x[2:]
print("optimal consumption -k:", -k)
print("disutility:", res.value)
print("duality gap:", duality_gap(problem, u).gap)

# %% The price system: for smooth disutility it is the gradient at -k.
y = -k  # gradient of |c|^2/2 at -k
zp = StochasticProcess.from_stage_values(tree, [[list(z)]])
kp = StochasticProcess.from_stage_values(tree, [[list(k)]])
uz = StochasticProcess.from_stage_values(tree, [[[1.0, 0.0]]])
yp = StochasticProcess.from_stage_values(tree, [[list(y)]])
cert = check_consistent_price_system(problem, zp, kp, uz, yp)
print("certificate:", cert.verdict)
for row in cert.rows:
    print(f"  {row['condition']:<26} residual {row['residual']:.2e}")

# %% The conical triple. The trade sits on the cone boundary, the price in
# the polar, and the two are orthogonal: the executed trade is free at the
# prices the dual quotes.
trade = z + np.array([1.0, 0.0]) + k
print("trade:", trade, " price:", y, " trade.price:", float(trade @ y))
