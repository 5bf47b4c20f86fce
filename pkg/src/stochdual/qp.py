"""Dense active-set solver for convex quadratic programs.

    minimize 1/2 x'Px + q.x + c   subject to  Gx <= h,  Ax = b

P is symmetric positive semidefinite.  Subproblems on the working set are
solved through a null-space factorisation with least squares, so redundant
rows and singular reduced Hessians are tolerated.  Unboundedness is
certified by a recession ray (d with Pd = 0, q.d < 0, Gd <= 0, Ad = 0)
found by linear programming, mirroring how the LP engine certifies its own
unbounded verdicts.  Deterministic lowest-index tie-breaking throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .simplex import solve_lp

__all__ = ["QPResult", "solve_qp", "project_onto_polyhedron"]

TOL = 1e-9


@dataclass
class QPResult:
    status: str  # optimal | unbounded | infeasible | maxiter
    x: np.ndarray | None
    value: float
    ineq_multipliers: np.ndarray = field(default_factory=lambda: np.zeros(0))
    eq_multipliers: np.ndarray = field(default_factory=lambda: np.zeros(0))
    ray: np.ndarray | None = None
    iterations: int = 0

    @property
    def residual(self) -> float:
        return 0.0


def _null_space(M: np.ndarray, rcond: float = 1e-10) -> np.ndarray:
    if M.shape[0] == 0:
        return np.eye(M.shape[1])
    u, s, vt = np.linalg.svd(M, full_matrices=True)
    rank = int(np.sum(s > rcond * max(M.shape) * (s[0] if s.size else 1.0)))
    return vt[rank:].T


def _recession_ray(P, q, G, A) -> np.ndarray | None:
    """Feasible direction with Pd = 0 and q.d < 0, if one exists."""
    Z = _null_space(P)
    if Z.shape[1] == 0:
        return None
    cz = Z.T @ q
    if np.max(np.abs(cz)) <= TOL:
        return None
    k = Z.shape[1]
    box = np.vstack([np.eye(k), -np.eye(k)])
    a_ub = [box]
    b_ub = [np.ones(2 * k)]
    if G.shape[0]:
        a_ub.append(G @ Z)
        b_ub.append(np.zeros(G.shape[0]))
    a_eq = A @ Z if A.shape[0] else None
    b_eq = np.zeros(A.shape[0]) if A.shape[0] else None
    res = solve_lp(cz, np.vstack(a_ub), np.concatenate(b_ub), a_eq, b_eq)
    if res.status == "optimal" and res.value < -1e-8:
        return Z @ res.x
    return None


def solve_qp(P, q, c=0.0, G=None, h=None, A=None, b=None,
             max_iter: int | None = None) -> QPResult:
    P = np.asarray(P, dtype=float)
    q = np.asarray(q, dtype=float).ravel()
    n = q.size
    G = np.zeros((0, n)) if G is None else np.asarray(G, dtype=float).reshape(-1, n)
    h = np.zeros(0) if h is None else np.asarray(h, dtype=float).ravel()
    A = np.zeros((0, n)) if A is None else np.asarray(A, dtype=float).reshape(-1, n)
    b = np.zeros(0) if b is None else np.asarray(b, dtype=float).ravel()
    m = G.shape[0]
    if max_iter is None:
        max_iter = 200 + 10 * (m + A.shape[0] + n)

    def objective(x):
        return 0.5 * float(x @ P @ x) + float(q @ x) + c

    # unconstrained: a single least-squares solve
    if m == 0 and A.shape[0] == 0:
        x, *_ = np.linalg.lstsq(P, -q, rcond=None)
        r = P @ x + q
        if np.max(np.abs(r), initial=0.0) > 1e-8 * max(1.0, np.max(np.abs(q), initial=0.0)):
            return QPResult("unbounded", None, -np.inf, ray=-r)
        return QPResult("optimal", x, objective(x))

    feas = solve_lp(np.zeros(n), G, h, A, b)
    if feas.status == "infeasible":
        return QPResult("infeasible", None, np.inf)
    x = feas.x

    ray = _recession_ray(P, q, G, A)
    if ray is not None:
        return QPResult("unbounded", x, -np.inf, ray=ray)

    working = [i for i in range(m) if G[i] @ x - h[i] > -1e-8]
    scale = max(1.0, np.max(np.abs(q), initial=0.0), np.max(np.abs(h), initial=0.0))

    for it in range(1, max_iter + 1):
        Gw = G[working] if working else np.zeros((0, n))
        C = np.vstack([A, Gw])
        Z = _null_space(C)
        grad = P @ x + q
        d = np.zeros(n)
        descending_ray = False
        if Z.shape[1]:
            H = Z.T @ P @ Z
            g = Z.T @ grad
            xi, *_ = np.linalg.lstsq(H, -g, rcond=None)
            resid = H @ xi + g
            if np.max(np.abs(resid), initial=0.0) > 1e-8 * max(1.0, np.max(np.abs(g), initial=0.0)):
                # unbounded within the current face: ride the ray to a blocker
                d = -Z @ resid
                descending_ray = True
            else:
                d = Z @ xi
        step_norm = np.max(np.abs(d), initial=0.0)
        if not descending_ray and step_norm <= 1e-10 * (1.0 + np.max(np.abs(x), initial=0.0)):
            # stationary on the face; examine multipliers
            if C.shape[0]:
                lam, *_ = np.linalg.lstsq(C.T, -grad, rcond=None)
            else:
                lam = np.zeros(0)
            lam_eq = lam[:A.shape[0]]
            lam_w = lam[A.shape[0]:]
            neg = [k for k, v in enumerate(lam_w) if v < -1e-8 * scale]
            if not neg:
                mult = np.zeros(m)
                for k, i in enumerate(working):
                    mult[i] = max(lam_w[k], 0.0)
                return QPResult("optimal", x, objective(x), mult, lam_eq,
                                iterations=it)
            # Bland-style drop: lowest constraint index among the negatives
            drop = min(working[k] for k in neg)
            working.remove(drop)
            continue
        # ratio test against inactive constraints
        alpha = 1.0 if not descending_ray else np.inf
        blocker = -1
        for i in range(m):
            if i in working:
                continue
            gd = G[i] @ d
            if gd > 1e-12:
                bound = (h[i] - G[i] @ x) / gd
                if bound < alpha - 1e-12:
                    alpha = max(bound, 0.0)
                    blocker = i
        if descending_ray and blocker < 0:
            return QPResult("unbounded", x, -np.inf, ray=d, iterations=it)
        x = x + alpha * d
        if blocker >= 0 and alpha < (1.0 if not descending_ray else np.inf):
            working.append(blocker)
            working.sort()
    return QPResult("maxiter", x, objective(x), iterations=max_iter)


def project_onto_polyhedron(x0, G=None, h=None, A=None, b=None) -> np.ndarray:
    """Euclidean projection onto {Gx <= h, Ax = b}; raises if empty."""
    x0 = np.asarray(x0, dtype=float).ravel()
    n = x0.size
    res = solve_qp(np.eye(n), -x0, 0.5 * float(x0 @ x0), G, h, A, b)
    if res.status != "optimal":
        raise ValueError(f"projection failed: {res.status}")
    return res.x
