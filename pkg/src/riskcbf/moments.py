"""Moment ambiguity sets: distributions known only through mean and covariance."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

# Relative eigenvalue floor for positive definiteness, scaled by trace.
PD_RTOL = 1e-12


@dataclass(frozen=True)
class MomentSet:
    """All distributions on R^n sharing ``mean`` and ``covariance``.

    Use :func:`make_moment_set` to build one; it symmetrizes and validates.
    """

    mean: np.ndarray
    covariance: np.ndarray

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @property
    def is_zero_mean(self) -> bool:
        return not np.any(self.mean)


@dataclass(frozen=True)
class SecondMomentMatrix:
    """``omega = [[cov + mean mean^T, mean], [mean^T, 1]]``."""

    omega: np.ndarray

    @property
    def dim(self) -> int:
        return self.omega.shape[0] - 1


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def make_moment_set(mean, covariance) -> MomentSet:
    """Validate ``mean`` / ``covariance`` and return a :class:`MomentSet`.

    The covariance is replaced by ``(C + C^T) / 2`` and must be positive
    definite: its smallest eigenvalue has to exceed ``1e-12 * trace``.

    Raises
    ------
    ValidationError
        On shape mismatch, non-finite entries or a non-PD covariance.
    """
    mu = np.array(mean, dtype=float).reshape(-1)
    cov = np.array(covariance, dtype=float)
    n = mu.shape[0]
    if n < 1:
        raise ValidationError("mean must have at least one entry")
    if cov.ndim == 0 and n == 1:
        cov = cov.reshape(1, 1)
    if cov.shape != (n, n):
        raise ValidationError(
            f"covariance shape {cov.shape} does not match mean length {n}"
        )
    if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(cov))):
        raise ValidationError("mean and covariance must be finite")
    cov = 0.5 * (cov + cov.T)
    eigs = np.linalg.eigvalsh(cov)
    floor = PD_RTOL * abs(np.trace(cov))
    if eigs[0] <= floor:
        raise ValidationError(
            f"covariance is not positive definite: smallest eigenvalue {eigs[0]:.6g}"
        )
    return MomentSet(_readonly(mu), _readonly(cov))


def second_moment_matrix(ms: MomentSet) -> SecondMomentMatrix:
    n = ms.dim
    omega = np.empty((n + 1, n + 1))
    omega[:n, :n] = ms.covariance + np.outer(ms.mean, ms.mean)
    omega[:n, n] = ms.mean
    omega[n, :n] = ms.mean
    omega[n, n] = 1.0
    return SecondMomentMatrix(_readonly(omega))
