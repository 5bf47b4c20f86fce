"""Convex catalog: evaluation, conjugation, residuals, support functions."""

import numpy as np
import pytest

from stochdual.convex import (
    Affine,
    AffinePrecomposition,
    Entropy,
    Exponential,
    FiniteSum,
    NoClosedFormError,
    PiecewiseLinear,
    Polyhedron,
    PolyhedralIndicator,
    Quadratic,
    SeparableSum,
    SupportFunction,
    absolute_value,
    argmax_support,
    fenchel_residual,
    grid_conjugate_oracle,
    indicator_interval,
    indicator_nonneg,
    indicator_nonpos,
    indicator_point,
    support_attains,
    support_function,
)

from helpers import (
    CATALOG_SAMPLES,
    random_composite_function,
    random_scalar_function,
)

INF = float("inf")

# the four-generator solvency cone used throughout: cone{(1,-2),(-1,1/2),(-1,0),(0,-1)}
CONE_GENERATORS = np.array([[1.0, -2.0], [-1.0, 0.5], [-1.0, 0.0], [0.0, -1.0]])


def cone_support_oracle(generators, y):
    """Support of a finitely generated cone: 0 if y.g <= 0 for every
    generator, +inf otherwise."""
    return 0.0 if np.all(generators @ np.asarray(y) <= 1e-12) else INF


class TestEvaluate:
    def test_absolute_value(self):
        assert absolute_value().value([3.0]) == 3.0

    def test_indicator_infeasible_point(self):
        g = PolyhedralIndicator(Polyhedron(a_ub=[[1.0]], b_ub=[0.0]))
        assert g.value([1.0]) == INF
        assert g.value([-0.5]) == 0.0

    def test_half_square(self):
        assert Quadratic([0.5]).value([2.0]) == pytest.approx(2.0)

    def test_dimension_mismatch(self):
        with pytest.raises(Exception):
            Quadratic([0.5, 0.5]).value([1.0])


class TestConjugatePairs:
    def test_half_square_self_conjugate(self):
        g = Quadratic([0.5])
        gs = g.conjugate()
        for y in np.linspace(-4, 4, 17):
            assert gs.value([y]) == pytest.approx(0.5 * y * y, abs=1e-12)

    def test_nonpos_indicator_to_nonneg(self):
        gs = indicator_nonpos().conjugate()
        assert gs.value([2.0]) == 0.0
        assert gs.value([-1.0]) == INF

    def test_abs_to_unit_interval_indicator(self):
        gs = absolute_value().conjugate()
        assert gs.value([0.5]) == 0.0
        assert gs.value([1.0]) == 0.0
        assert gs.value([1.5]) == INF

    def test_entropy_exponential_pair(self):
        ent = Entropy()
        exp = ent.conjugate()
        for y in np.linspace(-2, 2, 9):
            assert exp.value([y]) == pytest.approx(np.exp(y), rel=1e-12)
        back = exp.conjugate()
        for x in [0.0, 0.5, 1.0, 3.0]:
            assert back.value([x]) == pytest.approx(ent.value([x]), abs=1e-10)

    def test_polyhedral_to_support(self):
        P = Polyhedron(a_ub=[[1.0, 0.0], [0.0, 1.0]], b_ub=[1.0, 2.0])
        sigma = PolyhedralIndicator(P).conjugate()
        assert isinstance(sigma, SupportFunction)
        assert sigma.value([1.0, 1.0]) == pytest.approx(3.0)
        assert PolyhedralIndicator(P).value([0.0, 0.0]) == sigma.conjugate().value([0.0, 0.0])


class TestFenchelResidual:
    def test_gradient_point(self):
        assert fenchel_residual(Quadratic([0.5]), [2.0], [2.0]) == pytest.approx(0.0, abs=1e-12)

    def test_non_gradient_point(self):
        assert fenchel_residual(Quadratic([0.5]), [2.0], [0.0]) == pytest.approx(2.0)

    def test_subgradient_at_kink(self):
        assert fenchel_residual(absolute_value(), [0.0], [0.5]) == pytest.approx(0.0)

    def test_infinite_term_dominates(self):
        g = indicator_nonpos()
        assert fenchel_residual(g, [1.0], [0.0]) == INF

    def test_fenchel_young_many_random(self):
        rng = np.random.default_rng(31)
        for _ in range(1000):
            g = random_scalar_function(rng)
            x = rng.uniform(-4, 4, 1)
            v = rng.uniform(-4, 4, 1)
            assert fenchel_residual(g, x, v) >= -1e-9

    def test_monotone_subdifferential(self):
        rng = np.random.default_rng(32)
        for _ in range(200):
            g = random_scalar_function(rng)
            x1, x2 = np.sort(rng.uniform(-2, 2, 2))
            if x2 - x1 < 1e-6 or not np.isfinite(g.value([x1]) + g.value([x2])):
                continue
            v1, v2 = g.subgradient([x1]), g.subgradient([x2])
            # only keep residual-certified subgradients
            if fenchel_residual(g, [x1], v1) > 1e-9 or fenchel_residual(g, [x2], v2) > 1e-9:
                continue
            assert v1[0] <= v2[0] + 1e-9


class TestSupportFunctions:
    def test_cone_from_generators_matches_oracle(self):
        C = Polyhedron.from_cone_generators(CONE_GENERATORS)
        rng = np.random.default_rng(33)
        for _ in range(200):
            y = rng.uniform(-2, 2, 2)
            assert support_function(C, y) == pytest.approx(
                cone_support_oracle(CONE_GENERATORS, y), abs=1e-9
            )

    def test_cone_example_values(self):
        C = Polyhedron.from_cone_generators(CONE_GENERATORS)
        assert support_function(C, [1.0, 1.0]) == pytest.approx(0.0, abs=1e-12)
        assert support_function(C, [3.0, 1.0]) == INF

    def test_box_support(self):
        P = Polyhedron(a_ub=np.eye(2), b_ub=[2.0, 3.0])
        y = np.array([1.0, 2.0])
        assert support_function(P, y) == pytest.approx(8.0)

    def test_argmax_on_cone_at_polar_point(self):
        C = Polyhedron.from_cone_generators(CONE_GENERATORS)
        rep = support_attains(C, [1.0, 1.0], [0.0, 0.0])
        assert rep.ok

    def test_argmax_vertex(self):
        P = Polyhedron(a_ub=np.eye(2), b_ub=[1.0, 1.0])
        z = argmax_support(P, [1.0, 2.0])
        np.testing.assert_allclose(z, [1.0, 1.0], atol=1e-8)

    def test_membership_rejects_suboptimal_point(self):
        C = Polyhedron.from_cone_generators(CONE_GENERATORS)
        rep = support_attains(C, [1.0, 1.0], [1.0, -2.0])
        assert not rep.ok
        assert rep.residual == pytest.approx(1.0)

    def test_positive_homogeneity(self):
        rng = np.random.default_rng(34)
        P = Polyhedron(a_ub=[[1, 1], [1, -1], [-1, 0]], b_ub=[2, 1, 1])
        for _ in range(50):
            y = rng.normal(size=2)
            lam = rng.uniform(0.1, 5)
            s1 = support_function(P, y)
            s2 = support_function(P, lam * y)
            if np.isfinite(s1):
                assert s2 == pytest.approx(lam * s1, abs=1e-9)
            else:
                assert s2 == INF

    def test_empty_polyhedron_raises(self):
        P = Polyhedron(a_ub=[[1.0], [-1.0]], b_ub=[-1.0, -1.0])
        with pytest.raises(ValueError, match="infeasible"):
            support_function(P, [1.0])

    def test_generator_cone_d3_rejected(self):
        with pytest.raises(NotImplementedError):
            Polyhedron.from_cone_generators(np.eye(3))


class TestGridOracle:
    def test_half_square(self):
        oracle = grid_conjugate_oracle(Quadratic([0.5]))
        assert oracle.value([1.0]) == pytest.approx(0.5, abs=1e-3)

    def test_abs_interior(self):
        oracle = grid_conjugate_oracle(absolute_value())
        assert oracle.value([0.5]) == pytest.approx(0.0, abs=1e-3)
        assert not oracle.boundary_active([0.5])

    def test_abs_outside_domain_flags_boundary(self):
        oracle = grid_conjugate_oracle(absolute_value())
        assert oracle.value([2.0]) == pytest.approx(10.0, abs=1e-2)
        assert oracle.boundary_active([2.0])


class TestConjugateAgainstOracle:
    @pytest.mark.parametrize("g", CATALOG_SAMPLES, ids=lambda g: repr(g)[:40])
    def test_matches_grid(self, g):
        oracle = grid_conjugate_oracle(g, step=0.005)
        gs = g.conjugate()
        for v in np.linspace(-3, 3, 25):
            if oracle.boundary_active([v]):
                continue
            assert gs.value([v]) == pytest.approx(oracle.value([v]), abs=1e-2)

    @pytest.mark.parametrize("g", CATALOG_SAMPLES, ids=lambda g: repr(g)[:40])
    def test_biconjugation(self, g):
        gss = g.conjugate().conjugate()
        for x in np.linspace(-4, 4, 33):
            a, b = g.value([x]), gss.value([x])
            if a == INF or b == INF:
                assert a == b, f"x={x}"
            else:
                assert b == pytest.approx(a, abs=1e-9), f"x={x}"


class TestPiecewiseLinearFuzz:
    def random_pwl(self, rng):
        lo = -INF if rng.random() < 0.5 else float(rng.uniform(-5, -1))
        hi = INF if rng.random() < 0.5 else float(rng.uniform(1, 5))
        k = int(rng.integers(0, 4))
        inner_lo = lo if lo != -INF else -4.0
        inner_hi = hi if hi != INF else 4.0
        breaks = np.sort(rng.uniform(inner_lo + 0.1, inner_hi - 0.1, k))
        breaks = np.unique(np.round(breaks, 6))
        slopes = np.sort(rng.normal(size=breaks.size + 1) * 2)
        slopes = np.round(slopes, 6)
        anchor_x = float(np.clip(0.0, lo, hi))
        return PiecewiseLinear(breaks, slopes, lo=lo, hi=hi,
                               anchor=(anchor_x, float(rng.normal())))

    def test_random_biconjugation_and_oracle(self):
        rng = np.random.default_rng(37)
        for trial in range(100):
            g = self.random_pwl(rng)
            gss = g.conjugate().conjugate()
            for x in rng.uniform(-6, 6, 8):
                a, b = g.value([x]), gss.value([x])
                if a == INF or b == INF:
                    assert a == b, f"trial {trial}, x={x}"
                else:
                    assert b == pytest.approx(a, abs=1e-9), f"trial {trial}, x={x}"

    def test_random_conjugates_match_grid(self):
        # the grid under-estimates by up to step * |v - nearest slope|, so
        # the tolerance scales with the slope range; exactness is covered by
        # the 1e-9 biconjugation sweep above
        rng = np.random.default_rng(38)
        for trial in range(25):
            g = self.random_pwl(rng)
            oracle = grid_conjugate_oracle(g, step=0.005)
            gs = g.conjugate()
            for v in rng.uniform(-2.5, 2.5, 6):
                if oracle.boundary_active([v]):
                    continue
                slack = 0.005 * (2.5 + float(np.max(np.abs(g.slopes)))) + 1e-9
                assert gs.value([v]) == pytest.approx(
                    oracle.value([v]), abs=slack), f"trial {trial}"
                assert gs.value([v]) >= oracle.value([v]) - 1e-9, f"trial {trial}"


class TestCombinators:
    def test_separable_sum_conjugate(self):
        g = SeparableSum([Quadratic([0.5]), absolute_value()])
        gs = g.conjugate()
        assert gs.value([1.0, 0.5]) == pytest.approx(0.5)
        assert gs.value([1.0, 2.0]) == INF

    def test_affine_precomposition_invertible(self):
        rng = np.random.default_rng(35)
        M = np.array([[2.0, 1.0], [0.0, 1.0]])
        m = np.array([0.3, -0.2])
        g = AffinePrecomposition(Quadratic([0.5, 1.0]), M, m)
        gs = g.conjugate()
        oracle = grid_conjugate_oracle(g, lo=-8, hi=8, step=0.02)
        for _ in range(20):
            y = rng.uniform(-1.5, 1.5, 2)
            if oracle.boundary_active(y):
                continue
            assert gs.value(y) == pytest.approx(oracle.value(y), abs=5e-2)

    def test_affine_precomposition_fat_matrix(self):
        # f(x, u) = 1/2 (x - u)^2: conjugate finite only on v + y = 0
        g = AffinePrecomposition(Quadratic([0.5]), np.array([[1.0, -1.0]]))
        gs = g.conjugate()
        assert gs.value([1.0, -1.0]) == pytest.approx(0.5)
        assert gs.value([1.0, 1.0]) == INF

    def test_finite_sum_absorbs_affine(self):
        g = FiniteSum([Quadratic([0.5]), Affine([1.0], 2.0)])
        gs = g.conjugate()
        # (x^2/2 + x + 2)* = (y-1)^2/2 - 2
        for y in np.linspace(-3, 3, 13):
            assert gs.value([y]) == pytest.approx(0.5 * (y - 1) ** 2 - 2.0, abs=1e-10)

    def test_finite_sum_merges_quadratics(self):
        g = FiniteSum([Quadratic([0.5]), Quadratic([0.5]), Affine([0.0], 1.0)])
        gs = g.conjugate()
        for y in np.linspace(-3, 3, 13):
            assert gs.value([y]) == pytest.approx(y * y / 4.0 - 1.0, abs=1e-10)

    def test_general_sum_has_no_closed_form(self):
        g = FiniteSum([absolute_value(), Entropy()])
        with pytest.raises(NoClosedFormError):
            g.conjugate()

    def test_composite_biconjugation(self):
        rng = np.random.default_rng(36)
        for _ in range(30):
            g = random_composite_function(rng)
            gss = g.conjugate().conjugate()
            for _ in range(5):
                x = rng.uniform(-2, 2, g.dim)
                a, b = g.value(x), gss.value(x)
                if np.isfinite(a):
                    assert b == pytest.approx(a, abs=1e-8)

    def test_fix_freezes_coordinates(self):
        g = SeparableSum([Quadratic([0.5]), absolute_value(), Affine([2.0], 0.0)])
        h = g.fix([1], [3.0])  # freeze the abs coordinate at 3
        assert h.dim == 2
        assert h.value([2.0, 1.0]) == pytest.approx(0.5 * 4 + 3.0 + 2.0)

    def test_fix_on_precomposition(self):
        g = AffinePrecomposition(Quadratic([0.5]), np.array([[1.0, -1.0]]))
        h = g.fix([1], [2.0])  # u = 2: h(x) = (x-2)^2/2
        assert h.value([5.0]) == pytest.approx(4.5)

    def test_scaled(self):
        g = absolute_value().scaled(2.0)
        assert g.value([-3.0]) == pytest.approx(6.0)
        gs = g.conjugate()
        assert gs.value([1.5]) == 0.0
        assert gs.value([2.5]) == INF


class TestQPForms:
    def test_quadratic_form(self):
        f = Quadratic([0.5, 1.0], [1.0, 0.0], 2.0).qp_form()
        x = np.array([1.0, -2.0])
        val = 0.5 * x @ f.P @ x + f.q @ x + f.c
        assert val == pytest.approx(Quadratic([0.5, 1.0], [1.0, 0.0], 2.0).value(x))

    def test_indicator_rows(self):
        P = Polyhedron(a_ub=[[1.0, 1.0]], b_ub=[1.0], a_eq=[[1.0, -1.0]], b_eq=[0.0])
        f = PolyhedralIndicator(P).qp_form()
        assert f.G.shape == (1, 2)
        assert f.A.shape == (1, 2)

    def test_kinked_pwl_ships_epigraph_atom(self):
        form = absolute_value().qp_form()
        assert form.G.shape[0] == 0
        assert len(form.epi) == 1
        lines = form.epi[0][2].supporting_lines()
        assert sorted(s for s, _ in lines) == [-1.0, 1.0]

    def test_composition(self):
        g = AffinePrecomposition(Quadratic([0.5]), np.array([[1.0, -1.0]]), [0.5])
        f = g.qp_form()
        for _ in range(5):
            x = np.random.default_rng(1).uniform(-2, 2, 2)
            val = 0.5 * x @ f.P @ x + f.q @ x + f.c
            assert val == pytest.approx(g.value(x), abs=1e-12)
