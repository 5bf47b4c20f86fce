"""Finite filtered probability spaces represented as scenario trees.

A scenario tree fixes a finite set of leaves (elementary outcomes), strictly
positive leaf probabilities, and for every stage a partition of the leaves
into information blocks.  Later partitions refine earlier ones.  Processes
are leaf-indexed vectors per stage; a process is adapted when its stage-t
component is constant on every stage-t block.  Conditional expectations,
the expectation pairing E(u.y) and the zero-conditional-mean test used for
dual variables are all block operations on these arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

__all__ = [
    "TreeError",
    "ScenarioTree",
    "StochasticProcess",
    "build_tree",
    "conditional_expectation",
    "adapted_projection",
    "is_adapted",
    "pairing",
    "in_orthocomplement",
    "OrthoReport",
]

PROB_TOL = 1e-12


class TreeError(ValueError):
    """Raised for invalid tree descriptions or mismatched processes."""


def _as_probability(p) -> float:
    if isinstance(p, str):
        return float(Fraction(p))
    return float(p)


@dataclass(frozen=True)
class ScenarioTree:
    """Leaf probabilities plus one partition of the leaves per stage.

    ``partitions[t]`` lists the stage-t blocks, each block a tuple of leaf
    indices.  Stage 0 usually has a single block (trivial initial
    information) but any partition is accepted as long as the sequence is
    nested.  Probabilities are strictly positive and sum to one.
    """

    probabilities: np.ndarray
    partitions: tuple[tuple[tuple[int, ...], ...], ...]
    leaf_block: tuple[np.ndarray, ...] = field(init=False, repr=False, compare=False)
    block_weights: tuple[np.ndarray, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        probs = np.asarray(self.probabilities, dtype=float)
        object.__setattr__(self, "probabilities", probs)
        probs.setflags(write=False)
        n = probs.size
        if n < 1:
            raise TreeError("tree needs at least one leaf")
        if np.any(probs <= 0.0):
            raise TreeError("leaf probabilities must be strictly positive")
        total = float(probs.sum())
        if abs(total - 1.0) > PROB_TOL:
            raise TreeError(f"probabilities sum to {total:.12g}")
        if not self.partitions:
            raise TreeError("tree needs at least one stage")

        parts = tuple(
            tuple(tuple(int(i) for i in block) for block in stage)
            for stage in self.partitions
        )
        object.__setattr__(self, "partitions", parts)

        leaf_block = []
        block_weights = []
        for t, stage in enumerate(parts):
            seen = np.full(n, -1, dtype=int)
            for b, block in enumerate(stage):
                if not block:
                    raise TreeError(f"stage {t} has an empty block")
                for leaf in block:
                    if leaf < 0 or leaf >= n:
                        raise TreeError(f"stage {t} refers to unknown leaf {leaf}")
                    if seen[leaf] != -1:
                        raise TreeError(f"leaf {leaf} appears twice at stage {t}")
                    seen[leaf] = b
            if np.any(seen < 0):
                missing = int(np.argmin(seen))
                raise TreeError(f"leaf {missing} missing from stage {t} partition")
            leaf_block.append(seen)
            block_weights.append(
                np.array([probs[list(block)].sum() for block in stage])
            )
        # nesting: every stage-(t+1) block inside exactly one stage-t block
        for t in range(len(parts) - 1):
            coarse = leaf_block[t]
            for block in parts[t + 1]:
                owners = {int(coarse[leaf]) for leaf in block}
                if len(owners) != 1:
                    raise TreeError(
                        f"stage {t + 1} block {block} straddles stage {t} blocks"
                    )
        for arr in leaf_block:
            arr.setflags(write=False)
        object.__setattr__(self, "leaf_block", tuple(leaf_block))
        object.__setattr__(self, "block_weights", tuple(block_weights))

    # -- basic shape ------------------------------------------------------

    @property
    def n_leaves(self) -> int:
        return self.probabilities.size

    @property
    def stage_count(self) -> int:
        return len(self.partitions)

    @property
    def horizon(self) -> int:
        """Last stage index T (stages run 0..T)."""
        return len(self.partitions) - 1

    def blocks(self, t: int) -> tuple[tuple[int, ...], ...]:
        return self.partitions[t]

    def block_of(self, t: int, leaf: int) -> int:
        return int(self.leaf_block[t][leaf])

    # -- convenience constructors ----------------------------------------

    @staticmethod
    def deterministic(stages: int) -> "ScenarioTree":
        """Single-leaf tree with the given number of stages."""
        return ScenarioTree(np.array([1.0]), tuple(((0,),) for _ in range(stages)))

    @staticmethod
    def binary(horizon: int, probabilities=None) -> "ScenarioTree":
        """Recombining-free binary tree with 2**horizon leaves."""
        n = 2 ** horizon
        if probabilities is None:
            probabilities = np.full(n, 1.0 / n)
        parts = []
        for t in range(horizon + 1):
            width = 2 ** (horizon - t)
            parts.append(
                tuple(tuple(range(b * width, (b + 1) * width)) for b in range(2 ** t))
            )
        return ScenarioTree(np.asarray(probabilities, dtype=float), tuple(parts))


def build_tree(probabilities: Sequence, partitions: Sequence) -> ScenarioTree:
    """Validate and build a tree from a plain description.

    Probabilities may be floats or exact rationals given as strings "p/q".
    ``partitions`` is a stage-indexed list of blocks, each block a list of
    leaf indices.
    """
    probs = np.array([_as_probability(p) for p in probabilities], dtype=float)
    parts = tuple(tuple(tuple(block) for block in stage) for stage in partitions)
    return ScenarioTree(probs, parts)


@dataclass(frozen=True)
class StochasticProcess:
    """Stage-indexed, leaf-indexed real vectors on a scenario tree.

    ``values[t]`` has shape (n_leaves, dim_t); dimensions may differ per
    stage and may be zero.  Processes are immutable after construction.
    """

    tree: ScenarioTree
    values: tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.values) != self.tree.stage_count:
            raise TreeError(
                f"process has {len(self.values)} stages, tree has "
                f"{self.tree.stage_count}"
            )
        arrays = []
        for t, arr in enumerate(self.values):
            a = np.asarray(arr, dtype=float)
            if a.ndim == 1:
                a = a.reshape(-1, 1)
            if a.ndim != 2 or a.shape[0] != self.tree.n_leaves:
                raise TreeError(
                    f"stage {t} values must have shape (n_leaves, dim)"
                )
            a = a.copy()
            a.setflags(write=False)
            arrays.append(a)
        object.__setattr__(self, "values", tuple(arrays))

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(a.shape[1] for a in self.values)

    def stage(self, t: int) -> np.ndarray:
        return self.values[t]

    def leaf_vector(self, leaf: int) -> np.ndarray:
        """All stage components at one leaf, concatenated."""
        return np.concatenate([a[leaf] for a in self.values])

    @staticmethod
    def zeros(tree: ScenarioTree, dims: Sequence[int]) -> "StochasticProcess":
        return StochasticProcess(
            tree, tuple(np.zeros((tree.n_leaves, d)) for d in dims)
        )

    @staticmethod
    def from_stage_values(tree: ScenarioTree, stage_values) -> "StochasticProcess":
        """Build from a stage-indexed list of per-leaf arrays (or scalars)."""
        arrays = []
        for vals in stage_values:
            a = np.asarray(vals, dtype=float)
            if a.ndim == 0:
                a = np.full((tree.n_leaves, 1), float(a))
            arrays.append(a)
        return StochasticProcess(tree, tuple(arrays))

    def to_vector(self) -> np.ndarray:
        """Concatenate all stages leaf-major into one flat vector."""
        return np.concatenate([a.ravel() for a in self.values]) if self.values else np.zeros(0)

    @staticmethod
    def from_vector(tree: ScenarioTree, dims: Sequence[int], vec) -> "StochasticProcess":
        vec = np.asarray(vec, dtype=float)
        arrays, at = [], 0
        for d in dims:
            size = tree.n_leaves * d
            arrays.append(vec[at:at + size].reshape(tree.n_leaves, d))
            at += size
        if at != vec.size:
            raise TreeError("vector length does not match the stage dimensions")
        return StochasticProcess(tree, tuple(arrays))


def _check_same_tree(a: StochasticProcess, b: StochasticProcess):
    if a.tree is not b.tree and (
        a.tree.partitions != b.tree.partitions
        or not np.array_equal(a.tree.probabilities, b.tree.probabilities)
    ):
        raise TreeError("processes live on different trees")


def conditional_expectation(proc: StochasticProcess, t: int) -> StochasticProcess:
    """Average every stage component over the stage-t information blocks.

    The result is constant on stage-t blocks; averaging uses the leaf
    probabilities normalised within each block.
    """
    tree = proc.tree
    if t < 0 or t >= tree.stage_count:
        raise TreeError(f"stage {t} out of range 0..{tree.stage_count - 1}")
    probs = tree.probabilities
    out = []
    for arr in proc.values:
        new = np.empty_like(arr)
        for block in tree.partitions[t]:
            idx = list(block)
            w = probs[idx]
            avg = w @ arr[idx] / w.sum()
            new[idx] = avg
        out.append(new)
    return StochasticProcess(tree, tuple(out))


def adapted_projection(proc: StochasticProcess) -> StochasticProcess:
    """Replace each stage-t component by its stage-t conditional expectation."""
    tree = proc.tree
    probs = tree.probabilities
    out = []
    for t, arr in enumerate(proc.values):
        new = np.empty_like(arr)
        for block in tree.partitions[t]:
            idx = list(block)
            w = probs[idx]
            new[idx] = w @ arr[idx] / w.sum()
        out.append(new)
    return StochasticProcess(tree, tuple(out))


def is_adapted(proc: StochasticProcess) -> bool:
    """Exact blockwise constancy check (adapted processes are built blockwise)."""
    for t, arr in enumerate(proc.values):
        for block in proc.tree.partitions[t]:
            first = arr[block[0]]
            for leaf in block[1:]:
                if not np.array_equal(arr[leaf], first):
                    return False
    return True


def pairing(u: StochasticProcess, y: StochasticProcess) -> float:
    """Expectation pairing E(u.y) = sum_leaf p(leaf) sum_t u_t(leaf).y_t(leaf)."""
    _check_same_tree(u, y)
    if u.dims != y.dims:
        raise TreeError(f"dimension mismatch: {u.dims} vs {y.dims}")
    probs = u.tree.probabilities
    total = 0.0
    for a, b in zip(u.values, y.values):
        if a.shape[1]:
            total += float(probs @ np.sum(a * b, axis=1))
    return total


@dataclass(frozen=True)
class OrthoReport:
    """Outcome of the zero-conditional-mean test, with the worst residual."""

    ok: bool
    max_residual: float
    worst_stage: int
    worst_block: int

    def __bool__(self) -> bool:
        return self.ok


def in_orthocomplement(v: StochasticProcess, tol: float = 1e-9) -> OrthoReport:
    """Test whether every stage-t component of v has zero mean on every
    stage-t block.

    On a finite tree this nodewise criterion characterises the annihilator
    of the adapted processes under the pairing E(x.v).
    """
    tree = v.tree
    probs = tree.probabilities
    worst = 0.0
    worst_stage, worst_block = -1, -1
    for t, arr in enumerate(v.values):
        if arr.shape[1] == 0:
            continue
        for b, block in enumerate(tree.partitions[t]):
            idx = list(block)
            w = probs[idx]
            mean = w @ arr[idx] / w.sum()
            res = float(np.max(np.abs(mean))) if mean.size else 0.0
            if res > worst:
                worst, worst_stage, worst_block = res, t, b
    return OrthoReport(worst <= tol, worst, worst_stage, worst_block)
