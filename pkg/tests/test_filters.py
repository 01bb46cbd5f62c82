import numpy as np
import pytest
from scipy.optimize import brentq, linprog, nnls

from riskcbf import (
    EllipsoidSafetyConstraint,
    InfeasibleError,
    LinearSafetyConstraint,
    ValidationError,
    apply_filter,
    ellipsoid_constraint,
    filter_ellipsoid,
    filter_halfspace,
    filter_polytope,
)


def _lin(A, b):
    A = np.atleast_2d(np.asarray(A, float))
    b = np.atleast_1d(np.asarray(b, float))
    return LinearSafetyConstraint(A, b, np.zeros_like(b))


def _projection(u_nom, a, b):
    excess = a @ u_nom - b
    return u_nom if excess <= 0 else u_nom - excess / (a @ a) * a


def test_halfspace_inactive_reference():
    res = filter_halfspace([-0.7955], _lin([[-0.01]], [0.12281]))
    assert np.array_equal(res.u_star, [-0.7955])
    assert not res.active and res.slack == 0.0


def test_halfspace_active():
    res = filter_halfspace([2.0], _lin([[1.0]], [0.0]))
    assert res.u_star == pytest.approx([0.0], abs=0)
    assert res.active
    assert res.objective == pytest.approx(4.0)


def test_halfspace_on_boundary():
    res = filter_halfspace([0.5, 0.25], _lin([[2.0, 0.0]], [1.0]))
    assert np.array_equal(res.u_star, [0.5, 0.25])
    assert res.active


def test_halfspace_structurally_infeasible():
    with pytest.raises(InfeasibleError):
        filter_halfspace([0.0], _lin([[0.0]], [-1.0]))
    assert filter_halfspace([3.0], _lin([[0.0]], [1.0])).u_star == pytest.approx([3.0])


def test_halfspace_needs_one_row():
    with pytest.raises(ValidationError):
        filter_halfspace([0.0], _lin([[1.0], [2.0]], [0.0, 0.0]))


def test_polytope_inactive_returns_nominal():
    res = filter_polytope([0.1, -0.2], _lin([[1, 0], [0, 1]], [1, 1]))
    assert np.array_equal(res.u_star, [0.1, -0.2])
    assert res.slack == 0.0 and not res.active


def test_single_row_polytope_matches_projection():
    rng = np.random.default_rng(0)
    for _ in range(100):
        m = rng.integers(1, 4)
        a, b, u = rng.standard_normal(m), rng.standard_normal(), 3 * rng.standard_normal(m)
        qp = filter_polytope(u, _lin(a[None, :], [b]))
        assert np.abs(qp.u_star - _projection(u, a, b)).max() <= 1e-8


def test_contradictory_rows_with_slack():
    res = filter_polytope([0.0], _lin([[1.0], [-1.0]], [-1.0, -1.0]), rho=500, allow_slack=True)
    assert res.slack == pytest.approx(1.0, abs=1e-8)
    assert res.u_star == pytest.approx([0.0], abs=1e-8)
    assert res.objective == pytest.approx(res.u_star @ res.u_star + 500 * res.slack, abs=1e-9)


def test_contradictory_rows_strict_has_certificate():
    A, b = np.array([[1.0], [-1.0]]), np.array([-1.0, -1.0])
    with pytest.raises(InfeasibleError) as info:
        filter_polytope([0.0], _lin(A, b))
    y = info.value.certificate
    assert np.all(y >= -1e-9)
    assert np.abs(A.T @ y).max() <= 1e-8
    assert b @ y < 0


def test_minimal_deviation_on_feasible_instances():
    rng = np.random.default_rng(1)
    for _ in range(100):
        m, k = rng.integers(1, 5), rng.integers(1, 4)
        A, u = rng.standard_normal((m, k)), rng.standard_normal(k)
        b = A @ u + rng.uniform(0, 1, m)
        assert np.array_equal(filter_polytope(u, _lin(A, b)).u_star, u)
        assert np.array_equal(filter_polytope(u, _lin(A, b), allow_slack=True).u_star, u)


def _strictly_feasible(A, b):
    res = linprog(np.zeros(A.shape[1]), A_ub=A, b_ub=b, bounds=[(None, None)] * A.shape[1])
    return res.status == 0


def test_slack_consistency():
    rng = np.random.default_rng(4)
    rho = 500.0
    n_feasible = n_infeasible = 0
    for _ in range(100):
        m, k = rng.integers(2, 6), rng.integers(1, 3)
        A, b, u = rng.standard_normal((m, k)), rng.standard_normal(m), 2 * rng.standard_normal(k)
        res = filter_polytope(u, _lin(A, b), rho=rho, allow_slack=True)
        assert res.slack <= max(0.0, (A @ u - b).max()) + 1e-8
        assert res.objective == pytest.approx(np.sum((res.u_star - u) ** 2) + rho * res.slack, abs=1e-9)
        assert np.all(A @ res.u_star - b - res.slack <= 1e-8)
        if _strictly_feasible(A, b):
            strict = filter_polytope(u, _lin(A, b))
            act = np.flatnonzero(A @ strict.u_star - b >= -1e-7)
            lam = nnls(A[act].T, -2 * (strict.u_star - u))[0] if act.size else np.zeros(0)
            if lam.sum() < rho:  # exact-penalty regime
                n_feasible += 1
                assert res.slack == 0.0
                assert res.u_star == pytest.approx(strict.u_star, abs=1e-8)
        else:
            n_infeasible += 1
            assert res.slack > 1e-8
            with pytest.raises(InfeasibleError):
                filter_polytope(u, _lin(A, b))
    assert n_feasible > 10 and n_infeasible > 10


def test_slack_monotone_in_rho():
    c = _lin([[1.0], [-1.0]], [-300.0, 299.0])
    d = [filter_polytope([0.0], c, rho=r, allow_slack=True).slack for r in (50, 500, 5000)]
    assert d == pytest.approx([275.0, 50.0, 0.5], abs=1e-7)
    assert d[0] >= d[1] - 1e-8 and d[1] >= d[2] - 1e-8


def test_rho_must_be_positive():
    with pytest.raises(ValidationError):
        filter_polytope([0.0], _lin([[1.0]], [0.0]), rho=0)


def _ell(H, q, r, Eg):
    Eg = np.atleast_2d(np.asarray(Eg, float))
    n, m = Eg.shape
    A = np.block([[Eg, -np.eye(n)], [-Eg, -np.eye(n)]])
    return EllipsoidSafetyConstraint(np.asarray(H, float), np.asarray(q, float), float(r), A, m)


def test_ellipsoid_interior():
    Eg = np.array([[-0.05], [0.06]])
    c = _ell(np.diag([6e-4, 0, 0]), [0.001, 0.003, 0.009], -0.5, Eg)
    res = filter_ellipsoid([0.8], c)
    assert np.array_equal(res.u_star, [0.8])
    assert res.slack == 0.0
    assert np.all(res.v_star >= np.abs(Eg @ res.u_star) - 1e-12)
    assert c.satisfied(np.r_[res.u_star, res.v_star])


def test_ellipsoid_constant_violation_with_slack():
    c = _ell(np.zeros((3, 3)), np.zeros(3), 1.0, [[-0.05], [0.06]])
    res = filter_ellipsoid([0.3], c, rho=500, allow_slack=True)
    assert res.slack == pytest.approx(1.0, abs=1e-7)
    assert res.u_star == pytest.approx([0.3], abs=1e-6)
    assert res.objective == pytest.approx(np.sum((res.u_star - 0.3) ** 2) + 500 * res.slack, abs=1e-9)


def test_ellipsoid_constant_violation_strict():
    c = _ell(np.zeros((3, 3)), np.zeros(3), 1.0, [[-0.05], [0.06]])
    with pytest.raises(InfeasibleError):
        filter_ellipsoid([0.3], c, allow_slack=False)


def _active_ellipsoid_state(ellipsoid, pendulum, cfg, seed):
    rng = np.random.default_rng(seed)
    while True:
        x = rng.uniform(-0.45, 0.45, 2)
        if ellipsoid.barrier(x)[0] < 0.05:
            continue
        c = ellipsoid_constraint(ellipsoid, pendulum, x, cfg)
        u_nom = pendulum.nominal_control(x) + rng.uniform(-60, 60, 1)
        Eg = c.A_bar[:2, :1]
        if c.quadratic_value(np.r_[u_nom, np.abs(Eg @ u_nom)]) > 1e-3:
            return c, u_nom


def test_ellipsoid_matches_scalar_oracle(ellipsoid, pendulum, cfg):
    for seed in range(5):
        c, u_nom = _active_ellipsoid_state(ellipsoid, pendulum, cfg, seed)
        Eg = c.A_bar[:2, 0]

        def phi(u):  # constraint with the best lift v = |Eg u|
            return c.quadratic_value(np.r_[u, np.abs(Eg * u)])

        # phi is convex in u; walk from u_nom to the minimiser and bisect on the boundary
        grid = np.linspace(u_nom[0] - 400, u_nom[0] + 400, 40001)
        vals = np.array([phi(u) for u in grid])
        assert vals.min() < 0
        inside = grid[vals <= 0]
        target = inside[np.argmin(np.abs(inside - u_nom[0]))]
        lo, hi = sorted((target, u_nom[0]))
        root = brentq(phi, lo, hi, xtol=1e-14)
        res = filter_ellipsoid(u_nom, c, allow_slack=False)
        assert res.u_star[0] == pytest.approx(root, rel=1e-7, abs=1e-7)
        assert np.all(res.v_star >= np.abs(Eg * res.u_star[0]) - 1e-8)
        assert res.slack == 0.0
        relaxed = filter_ellipsoid(u_nom, c, rho=500, allow_slack=True)
        assert np.all(relaxed.v_star >= np.abs(Eg * relaxed.u_star[0]) - 1e-8)


def test_apply_filter_dispatch():
    single = _lin([[1.0]], [0.0])
    assert apply_filter([2.0], single).u_star == pytest.approx([0.0])
    multi = _lin([[1.0], [-1.0]], [-1.0, -1.0])
    assert apply_filter([0.0], multi, allow_slack=True).slack == pytest.approx(1.0, abs=1e-8)
    ell = _ell(np.zeros((3, 3)), np.zeros(3), -1.0, [[-0.05], [0.06]])
    assert apply_filter([0.5], ell).v_star is not None
