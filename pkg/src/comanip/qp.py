"""Dense convex QP solver: primal active-set method with KKT certification.

    min 1/2 x'Hx + g'x
    s.t. A_eq x = b_eq,  A_in x <= b_in,  lo <= x <= hi

Bounds are folded into a canonical inequality stack (A_in rows first, then
lower-bound rows, then upper-bound rows); active-set indices and inequality
multipliers refer to that stack. Entering and leaving constraints are chosen
by lowest index (Bland-style rule) so the solver is deterministic and does
not cycle. An infeasible start is repaired by a phase-1 least-squares
feasibility solve over slack variables.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ACTIVITY_TOL = 1e-8
FEAS_TOL = 1e-8
DUAL_TOL = 1e-9
STEP_TOL = 1e-11


@dataclass
class QpProblem:
    H: np.ndarray
    g: np.ndarray
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    A_in: np.ndarray | None = None
    b_in: np.ndarray | None = None
    bounds: tuple[np.ndarray, np.ndarray] | None = None  # (lo, hi), +-inf allowed

    def __post_init__(self):
        self.H = np.asarray(self.H, dtype=float)
        self.g = np.asarray(self.g, dtype=float).reshape(-1)
        n = self.g.size
        if n < 1:
            raise ValueError("need at least one variable")
        if self.H.shape != (n, n):
            raise ValueError("H shape inconsistent with g")
        if np.max(np.abs(self.H - self.H.T)) > 1e-10:
            raise ValueError("H must be symmetric within 1e-10")
        self.A_eq = _as_matrix(self.A_eq, n)
        self.b_eq = _as_rhs(self.b_eq, self.A_eq.shape[0])
        self.A_in = _as_matrix(self.A_in, n)
        self.b_in = _as_rhs(self.b_in, self.A_in.shape[0])
        if self.bounds is not None:
            lo = np.asarray(self.bounds[0], dtype=float).reshape(n)
            hi = np.asarray(self.bounds[1], dtype=float).reshape(n)
            self.bounds = (lo, hi)

    @property
    def n(self) -> int:
        return self.g.size

    def canonical_inequalities(self) -> tuple[np.ndarray, np.ndarray]:
        """Inequality stack A x <= b: A_in rows, then -x<=-lo, then x<=hi."""
        n = self.n
        rows = [self.A_in]
        rhs = [self.b_in]
        if self.bounds is not None:
            lo, hi = self.bounds
            for j in np.nonzero(np.isfinite(lo))[0]:
                e = np.zeros(n)
                e[j] = -1.0
                rows.append(e[None, :])
                rhs.append(np.array([-lo[j]]))
            for j in np.nonzero(np.isfinite(hi))[0]:
                e = np.zeros(n)
                e[j] = 1.0
                rows.append(e[None, :])
                rhs.append(np.array([hi[j]]))
        return np.vstack(rows), np.concatenate(rhs)

    def objective(self, x) -> float:
        x = np.asarray(x, dtype=float).reshape(self.n)
        return float(0.5 * x @ self.H @ x + self.g @ x)


@dataclass
class QpSolution:
    x: np.ndarray
    objective: float
    active_set: list[int]
    kkt_residual: float
    status: str  # "optimal" | "infeasible" | "max_iter"
    eq_multipliers: np.ndarray = field(default_factory=lambda: np.zeros(0))
    ineq_multipliers: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def multipliers(self) -> tuple[np.ndarray, np.ndarray]:
        return self.eq_multipliers, self.ineq_multipliers


def _as_matrix(A, n: int) -> np.ndarray:
    if A is None:
        return np.zeros((0, n))
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        A = A[None, :]
    if A.shape[1] != n:
        raise ValueError("constraint matrix column count inconsistent")
    return A


def _as_rhs(b, m: int) -> np.ndarray:
    if b is None:
        b = np.zeros(0)
    b = np.asarray(b, dtype=float).reshape(-1)
    if b.size != m:
        raise ValueError("constraint vector length inconsistent")
    return b


def _solve_kkt(H, grad, A_rows, resid=None):
    """Step p and multipliers for min 1/2 p'Hp + grad'p s.t. A_rows p = resid.

    `resid` restores working-set activity exactly (it is zero for a point
    already on the constraints; tiny phase-1 leftovers get pulled back).
    """
    n = H.shape[0]
    k = A_rows.shape[0]
    if k == 0:
        try:
            return np.linalg.solve(H, -grad), np.zeros(0)
        except np.linalg.LinAlgError:
            return np.linalg.lstsq(H, -grad, rcond=None)[0], np.zeros(0)
    K = np.zeros((n + k, n + k))
    K[:n, :n] = H
    K[:n, n:] = A_rows.T
    K[n:, :n] = A_rows
    rhs = np.concatenate([-grad, np.zeros(k) if resid is None else resid])
    try:
        sol = np.linalg.solve(K, rhs)
        # LAPACK does not flag near-singular systems; verify the solve
        if not np.all(np.isfinite(sol)) or (
            np.max(np.abs(K @ sol - rhs)) > 1e-8 * (1.0 + np.max(np.abs(rhs)))
        ):
            sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
    except np.linalg.LinAlgError:
        sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
    return sol[:n], sol[n:]


def _active_set_core(H, g, A_eq, b_eq, A_c, b_c, x0, max_iter):
    """Primal active-set iteration from a feasible x0.

    Returns (x, nu_eq, lam_full, working_set, converged).
    """
    n = x0.size
    m_e = A_eq.shape[0]
    m_c = A_c.shape[0]
    x = x0.copy()
    work: list[int] = []
    nu = np.zeros(m_e)
    lam_w = np.zeros(0)

    for _ in range(max_iter):
        grad = H @ x + g
        A_act = np.vstack([A_eq, A_c[work]]) if (m_e or work) else np.zeros((0, n))
        b_act = np.concatenate([b_eq, b_c[work]]) if (m_e or work) else np.zeros(0)
        p, mult = _solve_kkt(H, grad, A_act, b_act - A_act @ x)
        nu = mult[:m_e]
        lam_w = mult[m_e:]

        if np.max(np.abs(p), initial=0.0) > STEP_TOL * (1.0 + np.linalg.norm(x)):
            # step length to the nearest blocking constraint (lowest index on ties)
            alpha = 1.0
            blocking = -1
            if m_c:
                mask = np.ones(m_c, dtype=bool)
                mask[work] = False
                denom = A_c @ p
                cand = mask & (denom > ACTIVITY_TOL)
                if np.any(cand):
                    idx = np.nonzero(cand)[0]
                    ratios = np.maximum((b_c[idx] - A_c[idx] @ x) / denom[idx], 0.0)
                    a_min = np.min(ratios)
                    if a_min < alpha:
                        alpha = a_min
                        ties = idx[ratios <= a_min + ACTIVITY_TOL * (1.0 + abs(a_min))]
                        blocking = int(ties.min())
            x = x + alpha * p
            if blocking >= 0 and alpha < 1.0:
                work.append(blocking)
                continue
            # full step: x is now the EQP optimum for the current working set

        if lam_w.size == 0 or np.min(lam_w) >= -DUAL_TOL:
            lam = np.zeros(m_c)
            lam[work] = np.maximum(lam_w, 0.0)
            return x, nu, lam, sorted(work), True
        # Bland: drop the lowest-index constraint with a negative multiplier
        drop = min(w for w, l in zip(work, lam_w) if l < -DUAL_TOL)
        work.remove(drop)

    # iterations exhausted: report multipliers of the final working set
    lam = np.zeros(m_c)
    if lam_w.size == len(work):
        lam[work] = np.maximum(lam_w, 0.0)
    return x, nu, lam, sorted(work), False


def _phase1(A_eq, b_eq, A_c, b_c, x0, max_iter):
    """Least-squares feasibility repair: min 1/2||s||^2 over slacked constraints."""
    n = x0.size
    m = A_c.shape[0]
    viol = A_c @ x0 - b_c
    s0 = np.maximum(viol, 0.0)
    z0 = np.concatenate([x0, s0])

    eps = 1e-8
    H1 = np.zeros((n + m, n + m))
    H1[:n, :n] = eps * np.eye(n)
    H1[n:, n:] = np.eye(m)
    g1 = np.concatenate([-eps * x0, np.zeros(m)])

    A_eq1 = np.hstack([A_eq, np.zeros((A_eq.shape[0], m))]) if A_eq.shape[0] else np.zeros((0, n + m))
    # A_c x - s <= b_c and -s <= 0
    block_top = np.hstack([A_c, -np.eye(m)])
    block_bot = np.hstack([np.zeros((m, n)), -np.eye(m)])
    A_c1 = np.vstack([block_top, block_bot])
    b_c1 = np.concatenate([b_c, np.zeros(m)])

    z, _, _, _, converged = _active_set_core(H1, g1, A_eq1, b_eq, A_c1, b_c1, z0, max_iter)
    x, s = z[:n], z[n:]
    feasible = np.max(s, initial=0.0) <= 1e2 * FEAS_TOL
    return x, feasible, converged


def solve_qp(p: QpProblem, x0=None, max_iter: int | None = None) -> QpSolution:
    """Solve the QP; status "optimal" certifies a KKT residual below 1e-6.

    Deterministic: identical inputs produce identical outputs. On iteration
    exhaustion the best iterate is returned flagged "max_iter"; an
    inconsistent equality system or irreparable inequality violation yields
    "infeasible" with the least-squares iterate.
    """
    n = p.n
    A_c, b_c = p.canonical_inequalities()
    m_c = A_c.shape[0]
    m_e = p.A_eq.shape[0]
    if max_iter is None:
        max_iter = 50 * (n + m_c + 1)

    # starting point: caller hint, else min-norm equality solution
    if x0 is not None:
        x = np.asarray(x0, dtype=float).reshape(n).copy()
    elif m_e:
        x = np.linalg.lstsq(p.A_eq, p.b_eq, rcond=None)[0]
    else:
        x = np.zeros(n)

    if m_e and np.max(np.abs(p.A_eq @ x - p.b_eq), initial=0.0) > FEAS_TOL:
        x_ls = np.linalg.lstsq(p.A_eq, p.b_eq, rcond=None)[0]
        if np.max(np.abs(p.A_eq @ x_ls - p.b_eq), initial=0.0) > FEAS_TOL:
            return QpSolution(x_ls, p.objective(x_ls), [], np.inf, "infeasible",
                              np.zeros(m_e), np.zeros(m_c))
        x = x_ls

    if m_c and np.max(A_c @ x - b_c, initial=0.0) > FEAS_TOL:
        x, feasible, ph1_converged = _phase1(p.A_eq, p.b_eq, A_c, b_c, x, max_iter)
        if not feasible:
            status = "infeasible" if ph1_converged else "max_iter"
            return QpSolution(x, p.objective(x), [], np.inf, status,
                              np.zeros(m_e), np.zeros(m_c))

    x, nu, lam, active, converged = _active_set_core(
        p.H, p.g, p.A_eq, p.b_eq, A_c, b_c, x, max_iter
    )
    res = kkt_residual(p, x, (nu, lam))
    status = "optimal" if (converged and res < 1e-6) else "max_iter"
    return QpSolution(x, p.objective(x), active, res, status, nu, lam)


def kkt_residual(p: QpProblem, x, multipliers) -> float:
    """Max-norm KKT violation: stationarity, feasibility, complementarity.

    `multipliers` is (eq_multipliers, ineq_multipliers) with the inequality
    vector indexed like `canonical_inequalities()`.
    """
    nu, lam = multipliers
    x = np.asarray(x, dtype=float).reshape(p.n)
    nu = np.asarray(nu, dtype=float).reshape(p.A_eq.shape[0])
    A_c, b_c = p.canonical_inequalities()
    lam = np.asarray(lam, dtype=float).reshape(A_c.shape[0])

    stat = p.H @ x + p.g
    if nu.size:
        stat = stat + p.A_eq.T @ nu
    if lam.size:
        stat = stat + A_c.T @ lam
    parts = [np.max(np.abs(stat), initial=0.0)]
    if p.b_eq.size:
        parts.append(np.max(np.abs(p.A_eq @ x - p.b_eq)))
    if b_c.size:
        slack = A_c @ x - b_c
        parts.append(max(np.max(slack), 0.0))  # primal feasibility
        parts.append(max(np.max(-lam), 0.0))  # dual feasibility
        parts.append(np.max(np.abs(lam * slack)))  # complementarity
    return float(max(parts))
