"""Risk-aware CBF conditions turned into explicit constraints on the input.

The condition at state ``x`` is::

    wcCVaR_eps[-h(x+)] <= -alpha h(x),     x+ = f(x) + g(x) u + w

For half-spaces and polytopes this is exactly a set of linear rows
``A u <= b``. For ellipsoids we get a sufficient convex condition over the
lifted input ``ubar = [u; v]`` (``v`` bounds ``|E g(x) u|`` elementwise).
Generic smooth sets only get a pointwise check for a given ``u``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cvar import (
    CvarLevel,
    QuadraticLoss,
    as_level,
    wc_cvar_elementwise,
    wc_cvar_linear,
    wc_cvar_quadratic,
)
from .errors import ValidationError
from .moments import MomentSet
from .plant import ControlAffinePlant
from .safe_sets import EllipsoidSet, HalfSpaceSet, PolytopeSet, SafeSet, SmoothSet

CHECK_TOL = 1e-9


@dataclass(frozen=True)
class RiskCbfConfig:
    """Decay rate ``alpha``, CVaR level and disturbance moments.

    ``risk_aware=False`` gives the standard (expected-value) CBF: every
    worst-case CVaR term of the disturbance is replaced by zero.
    """

    alpha: float
    level: CvarLevel
    disturbance: MomentSet
    risk_aware: bool = True

    def __post_init__(self):
        a = float(self.alpha)
        if not (0.0 <= a <= 1.0):
            raise ValidationError(f"alpha must lie in [0, 1], got {self.alpha!r}")
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "level", as_level(self.level))

    @property
    def epsilon(self) -> float:
        return self.level.epsilon

    def standard(self) -> "RiskCbfConfig":
        return RiskCbfConfig(self.alpha, self.level, self.disturbance, risk_aware=False)


@dataclass(frozen=True)
class LinearSafetyConstraint:
    """Rows ``A u <= b``; ``margin`` is the CVaR term subtracted from each ``b_i``."""

    A: np.ndarray
    b: np.ndarray
    margin: np.ndarray

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]

    def violation(self, u) -> np.ndarray:
        return self.A @ np.asarray(u, dtype=float).reshape(-1) - self.b

    def satisfied(self, u, tol: float = CHECK_TOL) -> bool:
        return bool(np.all(self.violation(u) <= tol))


@dataclass(frozen=True)
class EllipsoidSafetyConstraint:
    """``ubar^T H ubar + q^T ubar + r <= 0`` and ``A ubar <= 0`` over ``ubar = [u; v]``."""

    H_bar: np.ndarray
    q_bar: np.ndarray
    r_bar: float
    A_bar: np.ndarray
    input_dim: int

    @property
    def lift_dim(self) -> int:
        return self.q_bar.shape[0] - self.input_dim

    def quadratic_value(self, ubar) -> float:
        ubar = np.asarray(ubar, dtype=float).reshape(-1)
        return float(ubar @ self.H_bar @ ubar + self.q_bar @ ubar + self.r_bar)

    def satisfied(self, ubar, tol: float = CHECK_TOL) -> bool:
        ubar = np.asarray(ubar, dtype=float).reshape(-1)
        return self.quadratic_value(ubar) <= tol and bool(np.all(self.A_bar @ ubar <= tol))


@dataclass(frozen=True)
class GeneralCheckData:
    w_bar: np.ndarray
    x_plus_bar: np.ndarray
    remainder_loss: QuadraticLoss


@dataclass(frozen=True)
class GeneralCheckResult:
    lhs: float
    rhs: float
    satisfied: bool
    data: GeneralCheckData


def _margin(c: np.ndarray, cfg: RiskCbfConfig) -> float:
    """wcCVaR[-c^T w]: the CVaR term left after pulling the deterministic part out."""
    if not cfg.risk_aware:
        return 0.0
    return wc_cvar_linear(-c, 0.0, cfg.disturbance, cfg.level)


def _check_state(plant: ControlAffinePlant, safe_set, x, cfg: RiskCbfConfig) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != plant.state_dim:
        raise ValidationError(f"state has length {x.shape[0]}, plant expects {plant.state_dim}")
    if safe_set.dim != plant.state_dim:
        raise ValidationError(f"safe set lives in R^{safe_set.dim}, plant state in R^{plant.state_dim}")
    if cfg.disturbance.dim != plant.state_dim:
        raise ValidationError("disturbance dimension does not match the plant state")
    return x


def polytope_constraint(
    safe_set: PolytopeSet, plant: ControlAffinePlant, x, cfg: RiskCbfConfig
) -> LinearSafetyConstraint:
    """Rows ``-Q^T g(x) u <= Q^T (f(x) - alpha x) + (1 - alpha) r - wcCVaR[Q^T w]``."""
    x = _check_state(plant, safe_set, x, cfg)
    f, g = plant.drift(x), plant.input_map(x)
    Q, r, a = safe_set.Q, safe_set.r, cfg.alpha
    margin = np.array([_margin(Q[:, i], cfg) for i in range(Q.shape[1])])
    A = -Q.T @ g
    b = Q.T @ (f - a * x) + (1.0 - a) * r - margin
    return LinearSafetyConstraint(A, b, margin)


def halfspace_constraint(
    safe_set: HalfSpaceSet, plant: ControlAffinePlant, x, cfg: RiskCbfConfig
) -> LinearSafetyConstraint:
    poly = PolytopeSet(safe_set.q.reshape(-1, 1), [safe_set.r])
    return polytope_constraint(poly, plant, x, cfg)


def ellipsoid_constraint(
    safe_set: EllipsoidSet, plant: ControlAffinePlant, x, cfg: RiskCbfConfig
) -> EllipsoidSafetyConstraint:
    """Sufficient condition for ellipsoids; solves one small SDP for ``r_bar``."""
    x = _check_state(plant, safe_set, x, cfg)
    if not cfg.disturbance.is_zero_mean:
        raise ValidationError("the ellipsoidal condition requires zero-mean disturbance")
    E, r, a = safe_set.E, safe_set.r, cfg.alpha
    n = plant.state_dim
    m = plant.input_dim
    f, g = plant.drift(x), plant.input_map(x)
    Eg = E @ g

    H = np.zeros((m + n, m + n))
    H[:m, :m] = g.T @ Eg
    if cfg.risk_aware:
        w_bar = wc_cvar_elementwise(cfg.disturbance, cfg.level)
        noise = wc_cvar_quadratic(QuadraticLoss(E, E @ f, 0.0), cfg.disturbance, cfg.level).value
    else:
        w_bar = np.zeros(n)
        noise = 0.0
    q_bar = 2.0 * np.concatenate([g.T @ E @ f, w_bar])
    r_bar = noise + f @ E @ f - r - a * (x @ E @ x - r)
    eye = np.eye(n)
    A_bar = np.block([[Eg, -eye], [-Eg, -eye]])
    return EllipsoidSafetyConstraint(H, q_bar, float(r_bar), A_bar, m)


def general_feasibility_check(
    safe_set: SmoothSet, plant: ControlAffinePlant, x, u, cfg: RiskCbfConfig
) -> GeneralCheckResult:
    """Check the Taylor-bound sufficient condition at a given ``(x, u)``.

    ``lhs = -h(xbar+) + wcCVaR[-grad h(xbar+)^T z + sigma/2 |z|^2]`` with
    ``z = w - wbar``, evaluated as a quadratic loss in ``w`` through the SDP;
    ``rhs = -alpha h(x)``.
    """
    x = _check_state(plant, safe_set, x, cfg)
    sigma = safe_set.curvature_bound
    if sigma < 0:
        raise ValidationError("curvature bound must be nonnegative")
    n = plant.state_dim
    u = np.asarray(u, dtype=float).reshape(plant.input_dim)
    if cfg.risk_aware:
        w_bar = wc_cvar_elementwise(cfg.disturbance, cfg.level)
    else:
        w_bar = np.zeros(n)
    x_plus_bar = plant.drift(x) + plant.input_map(x) @ u + w_bar
    grad = safe_set.grad(x_plus_bar)
    remainder = QuadraticLoss(
        0.5 * sigma * np.eye(n),
        -0.5 * (grad + sigma * w_bar),
        0.5 * sigma * float(w_bar @ w_bar) + float(grad @ w_bar),
    )
    if cfg.risk_aware:
        tail = wc_cvar_quadratic(remainder, cfg.disturbance, cfg.level).value
    else:
        tail = 0.0
    h_bar = float(safe_set.barrier(x_plus_bar)[0])
    lhs = -h_bar + tail
    rhs = -cfg.alpha * float(safe_set.barrier(x)[0])
    return GeneralCheckResult(
        lhs, rhs, lhs <= rhs + CHECK_TOL, GeneralCheckData(w_bar, x_plus_bar, remainder)
    )


def build_constraint(safe_set: SafeSet, plant: ControlAffinePlant, x, cfg: RiskCbfConfig):
    if isinstance(safe_set, HalfSpaceSet):
        return halfspace_constraint(safe_set, plant, x, cfg)
    if isinstance(safe_set, PolytopeSet):
        return polytope_constraint(safe_set, plant, x, cfg)
    if isinstance(safe_set, EllipsoidSet):
        return ellipsoid_constraint(safe_set, plant, x, cfg)
    raise ValidationError(
        f"no explicit input constraint for {type(safe_set).__name__}; "
        "use general_feasibility_check for smooth sets"
    )


def risk_cbf_residual(safe_set: SafeSet, plant: ControlAffinePlant, x, u, cfg: RiskCbfConfig) -> np.ndarray:
    """Direct evaluation of ``wcCVaR[-h(x+)] + alpha h(x)`` for given ``(x, u)``.

    Nonpositive entries mean the risk-aware condition holds. Affine barriers
    use the closed form per row, ellipsoids the quadratic-loss SDP.
    """
    x = _check_state(plant, safe_set, x, cfg)
    u = np.asarray(u, dtype=float).reshape(plant.input_dim)
    nominal = plant.drift(x) + plant.input_map(x) @ u
    h_x = safe_set.barrier(x)
    a = cfg.alpha
    ms, lvl = cfg.disturbance, cfg.level
    if isinstance(safe_set, (HalfSpaceSet, PolytopeSet)):
        Q = safe_set.q.reshape(-1, 1) if isinstance(safe_set, HalfSpaceSet) else safe_set.Q
        r = np.atleast_1d(safe_set.r)
        out = []
        for i in range(Q.shape[1]):
            offset = -(Q[:, i] @ nominal + r[i])
            out.append(wc_cvar_linear(-Q[:, i], offset, ms, lvl) + a * h_x[i])
        return np.array(out)
    if isinstance(safe_set, EllipsoidSet):
        E = safe_set.E
        loss = QuadraticLoss(E, E @ nominal, nominal @ E @ nominal - safe_set.r)
        return np.array([wc_cvar_quadratic(loss, ms, lvl).value + a * h_x[0]])
    raise ValidationError(f"direct evaluation not available for {type(safe_set).__name__}")
