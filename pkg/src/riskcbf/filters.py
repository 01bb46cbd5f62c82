"""Safety filters: the input closest to ``u_nom`` that satisfies the safety constraint.

All variants solve ``min ||u - u_nom||^2`` (plus ``rho * delta`` when the
constraint is relaxed by a scalar slack ``delta >= 0``). A nominal input that
already satisfies the constraint is returned unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import conic
from .constraints import EllipsoidSafetyConstraint, LinearSafetyConstraint
from .errors import InfeasibleError, SolverError, ValidationError

DEFAULT_RHO = 500.0
ACTIVE_TOL = 1e-7
PHASE1_TOL = 1e-8
# slacks below this are solver noise around an inactive relaxation
SLACK_FLOOR = 1e-9


@dataclass(frozen=True)
class FilterResult:
    u_star: np.ndarray
    slack: float
    active: bool
    objective: float
    v_star: np.ndarray | None = None


def _result(u_nom, u, slack, active, rho, v=None) -> FilterResult:
    d = u - u_nom
    obj = float(d @ d) + (rho * slack if slack else 0.0)
    return FilterResult(u, float(slack), bool(active), obj, v)


def filter_halfspace(u_nom, c: LinearSafetyConstraint) -> FilterResult:
    """Closed-form projection of ``u_nom`` onto ``{u : a^T u <= b}``."""
    if c.n_rows != 1:
        raise ValidationError(f"half-space filter needs exactly one row, got {c.n_rows}")
    u_nom = np.asarray(u_nom, dtype=float).reshape(-1)
    a, b = c.A[0], float(c.b[0])
    nrm2 = float(a @ a)
    if nrm2 == 0.0:
        if b < 0:
            raise InfeasibleError("constraint row is 0 <= b with b < 0: g(x) annihilates the barrier normal")
        return _result(u_nom, u_nom.copy(), 0.0, False, 0.0)
    excess = float(a @ u_nom) - b
    if excess <= 0.0:
        return _result(u_nom, u_nom.copy(), 0.0, excess >= -ACTIVE_TOL, 0.0)
    return _result(u_nom, u_nom - (excess / nrm2) * a, 0.0, True, 0.0)


def _phase1_linear(A, b, u_nom):
    """Smallest uniform relaxation ``delta >= 0`` making ``A u <= b + delta`` feasible.

    Returns ``(delta, multipliers)``; the multipliers form a Farkas
    certificate when ``delta > 0``: ``y >= 0``, ``A^T y = 0``, ``b^T y < 0``.
    """
    # restrict u to the row space of A so the LP has full column rank
    _, sv, Vt = np.linalg.svd(A, full_matrices=False)
    V = Vt[sv > 1e-12 * max(1.0, sv.max(initial=0.0))].T
    m = A.shape[0]
    if V.shape[1] == 0:
        delta = max(0.0, float(-b.min()))
        y = np.zeros(m)
        y[int(np.argmin(b))] = 1.0
        return delta, y
    k = V.shape[1]
    AV = A @ V
    rows = np.hstack([-AV, np.ones((m, 1))])
    offs = b - A @ u_nom
    floor = np.zeros((1, k + 1))
    floor[0, k] = 1.0
    prob = conic.ConicProblem(
        np.r_[np.zeros(k), 1.0],
        [conic.ConeBlock.nonnegative(np.vstack([rows, floor]), np.r_[offs, 0.0])],
    )
    sol = conic.solve(prob)
    if not sol.ok:
        raise SolverError(f"phase-I LP ended with status {sol.status}", sol)
    return float(sol.x[k]), sol.duals[0][:m]


def _kkt_polish(u_nom, A, b, rho, x_ip):
    """Re-solve the KKT system on the active set of an interior-point answer.

    Returns ``(u, delta)`` or ``None`` when the polished point fails the
    optimality checks.
    """
    m_u = u_nom.shape[0]
    u_ip = x_ip[:m_u]
    delta_ip = float(x_ip[m_u]) if rho is not None else 0.0
    scale = max(1.0, float(np.abs(b).max(initial=0.0)))
    resid = A @ u_ip - b - delta_ip
    S = np.flatnonzero(resid >= -1e-6 * scale)
    with_slack = rho is not None and delta_ip > 1e-9 * scale
    if S.size == 0:
        return u_nom.copy(), 0.0
    AS, bS = A[S], b[S]
    k = S.size
    if with_slack:
        # unknowns [u, delta, lam]:  2(u-u_nom) + AS^T lam = 0,  sum(lam) = rho,  AS u - delta = bS
        K = np.zeros((m_u + 1 + k, m_u + 1 + k))
        K[:m_u, :m_u] = 2.0 * np.eye(m_u)
        K[:m_u, m_u + 1:] = AS.T
        K[m_u, m_u + 1:] = 1.0
        K[m_u + 1:, :m_u] = AS
        K[m_u + 1:, m_u] = -1.0
        rhs = np.r_[2.0 * u_nom, rho, bS]
        sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
        u, delta, lam = sol[:m_u], float(sol[m_u]), sol[m_u + 1:]
        ok_lam = np.all(lam >= -1e-9 * max(1.0, rho)) and abs(lam.sum() - rho) <= 1e-9 * max(1.0, rho)
    else:
        lam = 2.0 * np.linalg.lstsq(AS @ AS.T, AS @ u_nom - bS, rcond=None)[0]
        u = u_nom - 0.5 * AS.T @ lam
        delta = 0.0
        ok_lam = np.all(lam >= -1e-9 * max(1.0, np.abs(lam).max(initial=0.0)))
    if not ok_lam or delta < -1e-12:
        return None
    delta = max(delta, 0.0)
    if np.any(A @ u - b - delta > 1e-12 * scale):
        return None
    if not np.allclose(u, u_ip, atol=1e-5 * max(1.0, np.abs(u_ip).max())):
        return None
    return u, delta


def filter_polytope(
    u_nom, c: LinearSafetyConstraint, rho: float = DEFAULT_RHO, allow_slack: bool = False
) -> FilterResult:
    """Quadratic program over the rows ``A u <= b`` (optionally relaxed by ``delta``).

    Raises :class:`InfeasibleError` with the Farkas multipliers in
    ``.certificate`` when ``allow_slack`` is false and no input satisfies
    every row.
    """
    if not rho > 0:
        raise ValidationError(f"rho must be positive, got {rho!r}")
    u_nom = np.asarray(u_nom, dtype=float).reshape(-1)
    A, b = c.A, c.b
    m_u = u_nom.shape[0]
    if A.shape[1] != m_u:
        raise ValidationError(f"constraint acts on {A.shape[1]} inputs, nominal input has {m_u}")
    resid = A @ u_nom - b
    if np.all(resid <= 0.0):
        return _result(u_nom, u_nom.copy(), 0.0, bool(np.any(resid >= -ACTIVE_TOL)), rho)

    if not allow_slack:
        delta, cert = _phase1_linear(A, b, u_nom)
        if delta > PHASE1_TOL * max(1.0, float(np.abs(b).max())):
            err = InfeasibleError(f"safety rows are infeasible (smallest uniform relaxation {delta:.3g})")
            err.certificate = cert
            raise err
        prob = conic.ConicProblem(
            -2.0 * u_nom, [conic.ConeBlock.nonnegative(-A, b)], quadratic=2.0 * np.eye(m_u)
        )
        rho_used = None
    else:
        m = A.shape[0]
        F = np.vstack([np.hstack([-A, np.ones((m, 1))]), np.r_[np.zeros(m_u), 1.0][None, :]])
        P = np.zeros((m_u + 1, m_u + 1))
        P[:m_u, :m_u] = 2.0 * np.eye(m_u)
        prob = conic.ConicProblem(
            np.r_[-2.0 * u_nom, rho], [conic.ConeBlock.nonnegative(F, np.r_[b, 0.0])], quadratic=P
        )
        rho_used = rho
    sol = conic.solve(prob)
    if not sol.ok:
        raise SolverError(f"safety QP ended with status {sol.status}", sol)
    polished = _kkt_polish(u_nom, A, b, rho_used, sol.x)
    if polished is None:
        u = sol.x[:m_u]
        delta = max(0.0, float(sol.x[m_u])) if allow_slack else 0.0
    else:
        u, delta = polished
    if delta <= SLACK_FLOOR:
        delta = 0.0
    active = bool(np.any(A @ u - b - delta >= -ACTIVE_TOL))
    return _result(u_nom, u, delta, active, rho)


def _ellipsoid_blocks(c: EllipsoidSafetyConstraint, n_vars: int, delta_col: int | None):
    """Cone blocks for ``ubar^T H ubar + q^T ubar + r <= delta`` and ``A ubar <= 0``."""
    d = c.q_bar.shape[0]
    w, U = np.linalg.eigh(c.H_bar)
    keep = w > 1e-14 * max(1.0, np.abs(w).max())
    L = (U[:, keep] * np.sqrt(w[keep])).T  # H = L^T L
    # s = delta - q^T ubar - r;  (s + 1, s - 1, 2 L ubar) in SOC  <=>  |L ubar|^2 <= s
    s_row = np.zeros(n_vars)
    s_row[:d] = -c.q_bar
    if delta_col is not None:
        s_row[delta_col] = 1.0
    lifted = np.zeros((L.shape[0], n_vars))
    lifted[:, :d] = 2.0 * L
    soc = conic.ConeBlock.second_order(
        np.vstack([s_row, s_row, lifted]), np.r_[1.0 - c.r_bar, -1.0 - c.r_bar, np.zeros(L.shape[0])]
    )
    lin_F = np.zeros((c.A_bar.shape[0], n_vars))
    lin_F[:, :d] = -c.A_bar
    rows = [lin_F]
    offs = [np.zeros(c.A_bar.shape[0])]
    if delta_col is not None:
        floor = np.zeros((1, n_vars))
        floor[0, delta_col] = 1.0
        rows.append(floor)
        offs.append(np.zeros(1))
    lin = conic.ConeBlock.nonnegative(np.vstack(rows), np.concatenate(offs))
    return [soc, lin]


def filter_ellipsoid(
    u_nom, c: EllipsoidSafetyConstraint, rho: float = DEFAULT_RHO, allow_slack: bool = True
) -> FilterResult:
    """Convex program over ``ubar = [u; v]`` for the ellipsoidal condition.

    The lift ``v`` is always a decision variable; at the optimum it bounds
    ``|E g(x) u|`` elementwise.
    """
    if not rho > 0:
        raise ValidationError(f"rho must be positive, got {rho!r}")
    u_nom = np.asarray(u_nom, dtype=float).reshape(-1)
    m_u = c.input_dim
    if u_nom.shape[0] != m_u:
        raise ValidationError(f"constraint acts on {m_u} inputs, nominal input has {u_nom.shape[0]}")
    n = c.lift_dim
    d = m_u + n
    Eg = c.A_bar[:n, :m_u]
    v_nom = np.abs(Eg @ u_nom)
    quad_nom = c.quadratic_value(np.r_[u_nom, v_nom])
    if quad_nom <= 0.0:
        return _result(u_nom, u_nom.copy(), 0.0, quad_nom >= -ACTIVE_TOL, rho, v_nom)

    if not allow_slack:
        nv = d + 1
        cvec = np.zeros(nv)
        cvec[d] = 1.0
        p1 = conic.solve(conic.ConicProblem(cvec, _ellipsoid_blocks(c, nv, d)))
        if not p1.ok:
            raise SolverError(f"phase-I program ended with status {p1.status}", p1)
        if p1.x[d] > PHASE1_TOL * max(1.0, abs(c.r_bar)):
            err = InfeasibleError(
                f"ellipsoidal safety condition is infeasible (smallest relaxation {p1.x[d]:.3g})"
            )
            err.certificate = p1
            raise err
        nv, delta_col = d, None
    else:
        nv, delta_col = d + 1, d
    P = np.zeros((nv, nv))
    P[:m_u, :m_u] = 2.0 * np.eye(m_u)
    cvec = np.zeros(nv)
    cvec[:m_u] = -2.0 * u_nom
    if delta_col is not None:
        cvec[delta_col] = rho
    sol = conic.solve(conic.ConicProblem(cvec, _ellipsoid_blocks(c, nv, delta_col), quadratic=P))
    if not sol.ok:
        raise SolverError(f"ellipsoid filter program ended with status {sol.status}", sol)
    u, v = sol.x[:m_u], sol.x[m_u:d]
    delta = max(0.0, float(sol.x[delta_col])) if delta_col is not None else 0.0
    if delta <= SLACK_FLOOR:
        delta = 0.0
    active = c.quadratic_value(sol.x[:d]) - delta >= -ACTIVE_TOL
    return _result(u_nom, u, delta, active, rho, v)


def apply_filter(u_nom, c, rho: float = DEFAULT_RHO, allow_slack: bool = False) -> FilterResult:
    """Dispatch on the constraint type (single rows use the closed form)."""
    if isinstance(c, EllipsoidSafetyConstraint):
        return filter_ellipsoid(u_nom, c, rho, allow_slack)
    if c.n_rows == 1 and not allow_slack:
        return filter_halfspace(u_nom, c)
    return filter_polytope(u_nom, c, rho, allow_slack)
