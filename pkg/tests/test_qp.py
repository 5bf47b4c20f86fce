"""Active-set QP against grid search and hand-computed optima."""

import numpy as np
import pytest

from stochdual.qp import project_onto_polyhedron, solve_qp

from helpers import grid_minimize


class TestUnconstrained:
    def test_simple_quadratic(self):
        res = solve_qp(np.diag([2.0, 4.0]), [-2.0, -4.0])
        assert res.status == "optimal"
        np.testing.assert_allclose(res.x, [1.0, 1.0], atol=1e-10)

    def test_singular_consistent(self):
        # x^2 only; second coordinate free with zero gradient
        res = solve_qp(np.diag([2.0, 0.0]), [-2.0, 0.0])
        assert res.status == "optimal"
        assert res.x[0] == pytest.approx(1.0)

    def test_singular_unbounded(self):
        res = solve_qp(np.diag([2.0, 0.0]), [0.0, 1.0])
        assert res.status == "unbounded"
        assert res.ray is not None
        assert res.ray @ np.array([0.0, 1.0]) < 0

    def test_constrained_unbounded(self):
        # minimize x + 0*y^2 on x <= 0: unbounded along -x
        res = solve_qp(np.zeros((1, 1)), [1.0], G=[[1.0]], h=[0.0])
        assert res.status == "unbounded"

    def test_infeasible(self):
        res = solve_qp(np.eye(1), [0.0], G=[[1.0], [-1.0]], h=[-1.0, -1.0])
        assert res.status == "infeasible"


class TestKnownConstrained:
    def test_kkt_single_constraint(self):
        # min x^2 s.t. 1 - x <= 0: x* = 1, multiplier 2
        res = solve_qp(np.array([[2.0]]), [0.0], G=[[-1.0]], h=[-1.0])
        assert res.status == "optimal"
        assert res.x[0] == pytest.approx(1.0, abs=1e-9)
        assert res.ineq_multipliers[0] == pytest.approx(2.0, abs=1e-8)

    def test_projection_onto_halfplane(self):
        x = project_onto_polyhedron([1.0, 0.0], G=[[2.0, 1.0], [1.0, 2.0]],
                                    h=[0.0, 0.0])
        np.testing.assert_allclose(x, [0.2, -0.4], atol=1e-8)

    def test_equality_constrained(self):
        # min 1/2|x|^2 s.t. x1 + x2 = 1 -> (0.5, 0.5)
        res = solve_qp(np.eye(2), np.zeros(2), A=[[1.0, 1.0]], b=[1.0])
        assert res.status == "optimal"
        np.testing.assert_allclose(res.x, [0.5, 0.5], atol=1e-10)

    def test_active_set_walks_vertices(self):
        # min (x-2)^2 + (y-2)^2 on the unit box
        res = solve_qp(2 * np.eye(2), [-4.0, -4.0], G=np.vstack([np.eye(2), -np.eye(2)]),
                       h=[1.0, 1.0, 0.0, 0.0])
        assert res.status == "optimal"
        np.testing.assert_allclose(res.x, [1.0, 1.0], atol=1e-9)
        assert np.all(res.ineq_multipliers >= -1e-9)


class TestAgainstGrid:
    def test_random_boxed_qps(self):
        rng = np.random.default_rng(41)
        for trial in range(40):
            n = int(rng.integers(1, 3))
            L = rng.normal(size=(n, n))
            P = L @ L.T + 0.3 * np.eye(n)
            q = rng.normal(size=n)
            G = np.vstack([np.eye(n), -np.eye(n)])
            h = np.full(2 * n, 2.0)
            res = solve_qp(P, q, G=G, h=h)
            assert res.status == "optimal", f"trial {trial}"

            def vm(X):
                return 0.5 * np.einsum("ij,jk,ik->i", X, P, X) + X @ q

            expected, _ = grid_minimize(vm, n, lo=-2, hi=2, step=0.01)
            assert res.value <= expected + 1e-8, f"trial {trial}"
            assert res.value >= expected - 0.01 * n, f"trial {trial}"

    def test_random_inequality_qps(self):
        rng = np.random.default_rng(42)
        for trial in range(40):
            n = 2
            L = rng.normal(size=(n, n))
            P = L @ L.T + 0.2 * np.eye(n)
            q = rng.normal(size=n)
            Grows = rng.normal(size=(3, n))
            h = rng.uniform(0.2, 1.5, 3)  # origin feasible
            G = np.vstack([Grows, np.eye(n), -np.eye(n)])
            hh = np.concatenate([h, np.full(2 * n, 3.0)])
            res = solve_qp(P, q, G=G, h=hh)
            assert res.status == "optimal", f"trial {trial}"
            assert np.all(G @ res.x <= hh + 1e-7)

            def vm(X):
                vals = 0.5 * np.einsum("ij,jk,ik->i", X, P, X) + X @ q
                bad = np.any(X @ G.T > hh + 1e-9, axis=1)
                return np.where(bad, np.inf, vals)

            expected, _ = grid_minimize(vm, n, lo=-3, hi=3, step=0.01)
            assert res.value <= expected + 1e-8, f"trial {trial}"
            assert res.value >= expected - 0.05, f"trial {trial}"

    def test_redundant_and_degenerate_constraints(self):
        # duplicated rows, implied rows and corner degeneracy must not cycle
        rng = np.random.default_rng(44)
        for trial in range(30):
            n = 2
            L = rng.normal(size=(n, n))
            P = L @ L.T + 0.4 * np.eye(n)
            q = rng.normal(size=n)
            base = np.vstack([np.eye(n), -np.eye(n)])
            hb = np.full(2 * n, 1.0)
            G = np.vstack([base, base, 0.5 * base, [[1.0, 1.0]]])
            h = np.concatenate([hb, hb, 0.5 * hb, [2.0]])  # all redundant copies
            res = solve_qp(P, q, G=G, h=h)
            assert res.status == "optimal", f"trial {trial}"
            clean = solve_qp(P, q, G=base, h=hb)
            assert res.value == pytest.approx(clean.value, abs=1e-8), f"trial {trial}"

    def test_kkt_multipliers_certify(self):
        rng = np.random.default_rng(43)
        for trial in range(30):
            n = int(rng.integers(1, 4))
            L = rng.normal(size=(n, n))
            P = L @ L.T + 0.5 * np.eye(n)
            q = rng.normal(size=n)
            G = np.vstack([np.eye(n), -np.eye(n)])
            h = np.full(2 * n, 1.0)
            res = solve_qp(P, q, G=G, h=h)
            assert res.status == "optimal"
            lam = res.ineq_multipliers
            station = P @ res.x + q + G.T @ lam
            assert np.max(np.abs(station)) < 1e-7, f"trial {trial}"
            slack = h - G @ res.x
            assert np.max(np.abs(lam * slack)) < 1e-6, f"trial {trial}"
