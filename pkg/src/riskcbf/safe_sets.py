"""Safe sets as superlevel sets ``{x : h(x) >= 0}`` of a barrier ``h``.

Four families are supported: half-spaces, polytopes (stacked half-spaces),
ellipsoids and generic smooth concave sets with a Hessian lower bound.
The boundary ``h = 0`` counts as safe.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .errors import ValidationError


def _vector(x, n: int) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != n:
        raise ValidationError(f"state has length {x.shape[0]}, set lives in R^{n}")
    return x


@dataclass(frozen=True)
class HalfSpaceSet:
    """``h(x) = q^T x + r``."""

    q: np.ndarray
    r: float

    def __post_init__(self):
        q = np.array(self.q, dtype=float).reshape(-1)
        if np.linalg.norm(q) <= 1e-12:
            raise ValidationError("half-space normal q must be nonzero")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "r", float(self.r))

    @property
    def dim(self) -> int:
        return self.q.shape[0]

    def barrier(self, x) -> np.ndarray:
        return np.array([self.q @ _vector(x, self.dim) + self.r])


@dataclass(frozen=True)
class PolytopeSet:
    """``h(x) = Q^T x + r`` with one column of ``Q`` per face."""

    Q: np.ndarray
    r: np.ndarray

    def __post_init__(self):
        Q = np.array(self.Q, dtype=float)
        if Q.ndim == 1:
            Q = Q.reshape(-1, 1)
        r = np.array(self.r, dtype=float).reshape(-1)
        if Q.ndim != 2 or Q.shape[1] < 1:
            raise ValidationError("Q must be an n x m matrix with m >= 1")
        if r.shape[0] != Q.shape[1]:
            raise ValidationError(f"r has length {r.shape[0]}, Q has {Q.shape[1]} columns")
        if np.any(np.linalg.norm(Q, axis=0) <= 1e-12):
            raise ValidationError("every column of Q must be nonzero")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "r", r)

    @property
    def dim(self) -> int:
        return self.Q.shape[0]

    @property
    def n_faces(self) -> int:
        return self.Q.shape[1]

    def barrier(self, x) -> np.ndarray:
        return self.Q.T @ _vector(x, self.dim) + self.r


@dataclass(frozen=True)
class EllipsoidSet:
    """``h(x) = -x^T E x + r`` with ``E`` symmetric positive definite, ``r > 0``."""

    E: np.ndarray
    r: float

    def __post_init__(self):
        E = np.array(self.E, dtype=float)
        if E.ndim != 2 or E.shape[0] != E.shape[1]:
            raise ValidationError("E must be a square matrix")
        E = 0.5 * (E + E.T)
        if np.linalg.eigvalsh(E)[0] <= 0:
            raise ValidationError("E must be positive definite")
        if not float(self.r) > 0:
            raise ValidationError("ellipsoid level r must be positive")
        object.__setattr__(self, "E", E)
        object.__setattr__(self, "r", float(self.r))

    @property
    def dim(self) -> int:
        return self.E.shape[0]

    def barrier(self, x) -> np.ndarray:
        x = _vector(x, self.dim)
        return np.array([self.r - x @ self.E @ x])


@dataclass(frozen=True)
class SmoothSet:
    """A concave barrier given pointwise, with its gradient and a curvature bound.

    ``curvature_bound`` is ``sigma >= 0`` such that ``-sigma I <= hess h(x)``
    everywhere.
    """

    h: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    curvature_bound: float
    dim: int

    def __post_init__(self):
        if not float(self.curvature_bound) >= 0:
            raise ValidationError("curvature_bound must be nonnegative")
        object.__setattr__(self, "curvature_bound", float(self.curvature_bound))

    def barrier(self, x) -> np.ndarray:
        return np.array([float(self.h(_vector(x, self.dim)))])

    def grad(self, x) -> np.ndarray:
        return np.asarray(self.gradient(_vector(x, self.dim)), dtype=float).reshape(-1)

    def check_gradient(self, points, step: float = 1e-6, rtol: float = 1e-4) -> bool:
        """Compare ``gradient`` against central differences of ``h`` at ``points``."""
        for x in np.atleast_2d(np.asarray(points, dtype=float)):
            fd = np.empty(self.dim)
            for i in range(self.dim):
                e = np.zeros(self.dim)
                e[i] = step
                fd[i] = (self.h(x + e) - self.h(x - e)) / (2 * step)
            g = self.grad(x)
            if np.linalg.norm(g - fd) > rtol * max(1.0, np.linalg.norm(fd)):
                return False
        return True


SafeSet = Union[HalfSpaceSet, PolytopeSet, EllipsoidSet, SmoothSet]


def barrier_value(safe_set: SafeSet, x) -> np.ndarray:
    """Barrier vector ``h(x)``; length 1 except for polytopes."""
    return safe_set.barrier(x)


def contains(safe_set: SafeSet, x) -> bool:
    return bool(np.all(safe_set.barrier(x) >= 0.0))
