"""Worst-case CVaR over a moment ambiguity set.

For a quadratic loss ``L(xi) = xi^T P xi + 2 q^T xi + r`` the supremum of
CVaR_eps over every distribution with the given mean and covariance equals::

    inf_{beta, N}  beta + Tr(Omega N) / eps
    s.t.           N >= 0,  N - [[P, q], [q^T, r - beta]] >= 0

(``>=`` in the PSD sense, ``Omega`` the second-moment matrix). Affine losses
(``P = 0``) have the closed form ``q^T mu + r + sqrt((1-eps)/eps) sqrt(q^T Sigma q)``,
which is what constraint generation uses at every time step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import conic
from .errors import SolverError, ValidationError
from .moments import MomentSet, second_moment_matrix


@dataclass(frozen=True)
class CvarLevel:
    """Tail level ``epsilon`` in the open interval (0, 1)."""

    epsilon: float

    def __post_init__(self):
        eps = float(self.epsilon)
        if not (0.0 < eps < 1.0):
            raise ValidationError(f"epsilon must lie in (0, 1), got {self.epsilon!r}")
        object.__setattr__(self, "epsilon", eps)


def as_level(level) -> CvarLevel:
    return level if isinstance(level, CvarLevel) else CvarLevel(level)


@dataclass(frozen=True)
class QuadraticLoss:
    """``L(xi) = xi^T P xi + 2 q^T xi + r``; P is symmetrized on construction."""

    P: np.ndarray
    q: np.ndarray
    r: float

    def __post_init__(self):
        q = np.array(self.q, dtype=float).reshape(-1)
        P = np.array(self.P, dtype=float)
        if P.ndim == 0 and q.shape[0] == 1:
            P = P.reshape(1, 1)
        if P.shape != (q.shape[0], q.shape[0]):
            raise ValidationError(f"P has shape {P.shape}, q has length {q.shape[0]}")
        object.__setattr__(self, "P", 0.5 * (P + P.T))
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "r", float(self.r))

    @classmethod
    def affine(cls, c, r: float = 0.0) -> "QuadraticLoss":
        """The loss ``c^T xi + r`` (note: ``q = c / 2``)."""
        c = np.asarray(c, dtype=float).reshape(-1)
        return cls(np.zeros((c.size, c.size)), 0.5 * c, r)

    @property
    def dim(self) -> int:
        return self.q.shape[0]

    def __add__(self, other: "QuadraticLoss") -> "QuadraticLoss":
        return QuadraticLoss(self.P + other.P, self.q + other.q, self.r + other.r)

    def scaled(self, c: float) -> "QuadraticLoss":
        return QuadraticLoss(c * self.P, c * self.q, c * self.r)

    def shifted(self, c: float) -> "QuadraticLoss":
        return QuadraticLoss(self.P, self.q, self.r + c)

    def lifted(self) -> np.ndarray:
        """``[[P, q], [q^T, r]]``."""
        n = self.dim
        M = np.empty((n + 1, n + 1))
        M[:n, :n] = self.P
        M[:n, n] = self.q
        M[n, :n] = self.q
        M[n, n] = self.r
        return M

    def __call__(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        return np.einsum("...i,ij,...j->...", xi, self.P, xi) + 2.0 * xi @ self.q + self.r


@dataclass(frozen=True)
class CvarCertificate:
    """Optimal ``beta`` and ``N`` of the SDP; ``value`` is the worst-case CVaR."""

    value: float
    beta: float
    n_matrix: np.ndarray
    solution: conic.ConicSolution | None = None


def _sym_map(d: int) -> np.ndarray:
    """Columns map the lower-triangular coordinates of a symmetric d x d matrix to vec(N)."""
    cols = []
    for j in range(d):
        for i in range(j, d):
            col = np.zeros(d * d)
            col[i + j * d] = 1.0
            col[j + i * d] = 1.0
            cols.append(col)
    return np.column_stack(cols)


def _unvech(v: np.ndarray, d: int) -> np.ndarray:
    N = np.zeros((d, d))
    k = 0
    for j in range(d):
        for i in range(j, d):
            N[i, j] = N[j, i] = v[k]
            k += 1
    return N


def cvar_sdp(loss: QuadraticLoss, ms: MomentSet, level) -> conic.ConicProblem:
    """Assemble the worst-case CVaR SDP over the variables ``[beta, vech(N)]``."""
    eps = as_level(level).epsilon
    d = ms.dim + 1
    omega = second_moment_matrix(ms).omega
    S = _sym_map(d)
    # Tr(Omega N) = vec(Omega) . vec(N) = vec(Omega) . (S vech N)
    c = np.concatenate([[1.0], (omega.reshape(-1, order="F") @ S) / eps])
    beta_col = np.zeros((d * d, 1))
    beta_col[d * d - 1, 0] = 1.0
    F_n = np.hstack([np.zeros((d * d, 1)), S])
    g_n = np.zeros(d * d)
    F_shift = np.hstack([beta_col, S])
    g_shift = -loss.lifted().reshape(-1, order="F")
    return conic.ConicProblem(
        c, (conic.ConeBlock.psd(F_n, g_n, d), conic.ConeBlock.psd(F_shift, g_shift, d))
    )


def _check_dims(dim: int, ms: MomentSet):
    if dim != ms.dim:
        raise ValidationError(f"loss dimension {dim} != ambiguity set dimension {ms.dim}")


def wc_cvar_quadratic(loss: QuadraticLoss, ms: MomentSet, level) -> CvarCertificate:
    """Worst-case CVaR of a quadratic loss via the moment SDP.

    Raises :class:`SolverError` (carrying the solution and its residuals)
    if the backend does not certify optimality.
    """
    _check_dims(loss.dim, ms)
    eps = as_level(level).epsilon
    sol = conic.solve(cvar_sdp(loss, ms, level))
    if not sol.ok:
        raise SolverError(
            f"worst-case CVaR SDP ended with status {sol.status}: {sol.residuals}", sol
        )
    d = ms.dim + 1
    beta = float(sol.x[0])
    N = _unvech(sol.x[1:], d)
    omega = second_moment_matrix(ms).omega
    value = beta + float(np.sum(omega * N)) / eps
    return CvarCertificate(value, beta, N, sol)


def wc_cvar_linear(q, r: float, ms: MomentSet, level) -> float:
    """Closed-form worst-case CVaR of ``q^T xi + r``."""
    q = np.asarray(q, dtype=float).reshape(-1)
    _check_dims(q.shape[0], ms)
    eps = as_level(level).epsilon
    spread = math.sqrt(max(0.0, float(q @ ms.covariance @ q)))
    return float(q @ ms.mean) + float(r) + math.sqrt((1.0 - eps) / eps) * spread


def wc_cvar_elementwise(ms: MomentSet, level) -> np.ndarray:
    """Worst-case CVaR of each coordinate of ``xi`` separately."""
    eps = as_level(level).epsilon
    return ms.mean + math.sqrt((1.0 - eps) / eps) * np.sqrt(np.diag(ms.covariance))


def linear_cvar_bound(q, ms: MomentSet, level) -> float:
    """Upper bound ``sum_i |q_i| wcCVaR[xi_i]`` on ``wcCVaR[q^T xi]``; zero mean only."""
    if not ms.is_zero_mean:
        raise ValidationError("linear_cvar_bound requires a zero-mean ambiguity set")
    q = np.asarray(q, dtype=float).reshape(-1)
    _check_dims(q.shape[0], ms)
    return float(np.abs(q) @ wc_cvar_elementwise(ms, level))
