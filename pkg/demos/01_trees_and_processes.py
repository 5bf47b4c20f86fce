"""Scenario trees and processes: information blocks, conditional
expectation, the expectation pairing and the annihilator test.

Run as a script; each section prints what it computes.
"""

import numpy as np

from stochdual import (
    ScenarioTree,
    StochasticProcess,
    adapted_projection,
    build_tree,
    conditional_expectation,
    in_orthocomplement,
    is_adapted,
    pairing,
)

# %% A three-stage binary tree with four leaves.
tree = ScenarioTree.binary(2)
print("leaves:", tree.n_leaves)
for t in range(tree.stage_count):
    print(f"stage {t} blocks:", tree.blocks(t))

# %% Trees can also be built from explicit partitions and exact rationals.
skewed = build_tree(["1/6", "1/3", "1/2"], [[[0, 1, 2]], [[0, 1], [2]]])
print("skewed probabilities:", skewed.probabilities)

# %% A nonadapted process and its conditional expectations.
rng = np.random.default_rng(0)
proc = StochasticProcess(tree, tuple(rng.normal(size=(4, 1)) for _ in range(3)))
print("adapted?", is_adapted(proc))
for t in range(3):
    e = conditional_expectation(proc, t)
    print(f"E_{t}[stage-2 values] =", e.stage(2).ravel().round(4))

# %% The adapted projection replaces each stage by its own conditional mean;
# it is idempotent and produces a genuinely adapted process.
proj = adapted_projection(proc)
print("projection adapted?", is_adapted(proj))
print("stage-1 values:", proj.stage(1).ravel().round(4))

# %% Pairing and the annihilator: removing blockwise means from any process
# yields something orthogonal to every adapted process under E(x.v).
raw = StochasticProcess(tree, tuple(rng.normal(size=(4, 1)) for _ in range(3)))
v = StochasticProcess(tree, tuple(
    raw.stage(t) - conditional_expectation(raw, t).stage(t) for t in range(3)
))
report = in_orthocomplement(v)
print("zero conditional means?", bool(report), " worst residual:", report.max_residual)
x = adapted_projection(StochasticProcess(
    tree, tuple(rng.normal(size=(4, 1)) for _ in range(3))
))
print("E(x.v) =", pairing(x, v))
