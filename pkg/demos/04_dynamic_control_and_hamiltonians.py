"""Dynamic stage costs: stagewise subgradient conditions and the
equivalent Hamiltonian system, plus the Jensen step that lets the dual
run over adapted processes only.
"""

import numpy as np

from stochdual import (
    BolzaStage,
    Quadratic,
    SeparableSum,
    StochasticProcess,
    adapted_projection,
    bolza_dual_value,
    build_bolza,
    check_euler_lagrange,
    check_hamiltonian_system,
    dual_objective,
    solve_dual,
    solve_primal,
)
from stochdual.tree import ScenarioTree, pairing

# %% Quadratic tracking of increments on a binary tree, three stages.
tree = ScenarioTree.binary(2)


def stage():
    return BolzaStage(SeparableSum([Quadratic([0.5]), Quadratic([0.5])]), 1)


problem = build_bolza(tree, [[stage()], [stage()] * 2, [stage()] * 4])

rng = np.random.default_rng(7)
u = adapted_projection(StochasticProcess(
    tree, tuple(rng.normal(size=(4, 1)) for _ in range(3))
))

primal = solve_primal(problem, u)
dual = solve_dual(problem, u)
print("primal value:", primal.value)
print("dual value:  ", dual.value)

# %% Both optimality systems certify the same pair.
el = check_euler_lagrange(problem, primal.optimizer, u, dual.optimizer)
ham = check_hamiltonian_system(problem, primal.optimizer, u, dual.optimizer)
print("stage subgradients:", el.verdict, " Hamiltonian system:", ham.verdict)

# %% The adapted dual loses nothing: projecting any dual candidate can only
# lower the conjugate value (a conditional Jensen step).
y = StochasticProcess(tree, tuple(rng.normal(size=(4, 1)) for _ in range(3)))
print("phi*(y)        =", dual_objective(problem, y).value)
print("phi*(E_t[y_t]) =", dual_objective(problem, adapted_projection(y)).value)

# %% The stage-conjugate dual formula agrees with the solver route.
ya = adapted_projection(y)
print("stage-conjugate dual value:", bolza_dual_value(problem, u, ya))
print("solver route:             ",
      pairing(u, ya) - dual_objective(problem, ya).value)
