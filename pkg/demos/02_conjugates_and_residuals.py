"""The convex catalog: exact conjugates, Fenchel residuals as subgradient
tests, and support functions of polyhedra.
"""

import numpy as np

from stochdual import (
    Entropy,
    Polyhedron,
    Quadratic,
    absolute_value,
    argmax_support,
    fenchel_residual,
    grid_conjugate_oracle,
    support_function,
)

# %% Conjugate pairs in closed form.
half_square = Quadratic([0.5])
print("(x^2/2)* at 3:", half_square.conjugate().value([3.0]), "(expected 4.5)")

abs_fn = absolute_value()
box = abs_fn.conjugate()
print("|.|* at 0.5 and 1.5:", box.value([0.5]), box.value([1.5]))

ent = Entropy()
print("entropy* at 1:", ent.conjugate().value([1.0]), "(expected e)")

# %% The grid oracle brute-forces a conjugate; closed forms must agree on
# interior points.  It is a test instrument, not a production path.
oracle = grid_conjugate_oracle(half_square)
for v in (0.5, 1.0, 2.0):
    print(f"oracle vs closed form at {v}:",
          oracle.value([v]), half_square.conjugate().value([v]))

# %% Fenchel residuals certify subgradients: zero residual means v is a
# subgradient of g at x.  At the kink of |x| every v in [-1, 1] works.
print("residual of 2 in d(x^2/2)(2):", fenchel_residual(half_square, [2.0], [2.0]))
print("residual of 0.5 in d|x|(0):", fenchel_residual(abs_fn, [0.0], [0.5]))
print("residual of 1.5 in d|x|(0):", fenchel_residual(abs_fn, [0.0], [1.5]))

# %% Support functions of a solvency cone, straight from generators.
cone = Polyhedron.from_cone_generators(
    [[1.0, -2.0], [-1.0, 0.5], [-1.0, 0.0], [0.0, -1.0]]
)
print("facet rows:\n", cone.a_ub)
for y in ([1.0, 1.0], [3.0, 1.0]):
    print(f"support at {y}:", support_function(cone, y))
print("maximizer over a box at (1,2):",
      argmax_support(Polyhedron(a_ub=np.eye(2), b_ub=[1.0, 1.0]), [1.0, 2.0]))
