"""Small conic programs: linear objective, affine maps into products of cones.

A problem is::

    minimize    c^T x  (+ x^T P x / 2 when a PSD ``quadratic`` term is given)
    subject to  F_k x + g_k  in  K_k      for every block k
                A x = b                   (optional)

with ``K_k`` one of the nonnegative orthant, a second-order cone
``{(t, s): t >= ||s||}`` or the cone of PSD ``d x d`` matrices. PSD blocks
map into ``d*d`` rows holding the matrix in column-major order.

The numerical work is delegated to ``cvxopt.solvers.conelp``; this module
owns validation, status mapping and the post-solve certificate checks.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from cvxopt import matrix, solvers

from .errors import MalformedProblemError

logger = logging.getLogger(__name__)

NONNEGATIVE = "nonnegative"
SECOND_ORDER = "second_order"
PSD = "psd"
_CONES = (NONNEGATIVE, SECOND_ORDER, PSD)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
NUMERICAL_FAILURE = "numerical_failure"

FEAS_TOL = 1e-8
GAP_TOL = 1e-8


@dataclass(frozen=True)
class ConeBlock:
    """Constraint ``F @ x + g in cone``; ``dim`` is the PSD matrix size."""

    cone: str
    F: np.ndarray
    g: np.ndarray
    dim: int | None = None

    @classmethod
    def nonnegative(cls, F, g) -> "ConeBlock":
        return cls(NONNEGATIVE, np.atleast_2d(np.asarray(F, float)), np.atleast_1d(np.asarray(g, float)))

    @classmethod
    def second_order(cls, F, g) -> "ConeBlock":
        return cls(SECOND_ORDER, np.atleast_2d(np.asarray(F, float)), np.atleast_1d(np.asarray(g, float)))

    @classmethod
    def psd(cls, F, g, dim: int) -> "ConeBlock":
        return cls(PSD, np.atleast_2d(np.asarray(F, float)), np.asarray(g, float).reshape(-1), dim)

    @property
    def rows(self) -> int:
        return self.F.shape[0]


@dataclass(frozen=True)
class ConicProblem:
    objective: np.ndarray
    blocks: tuple[ConeBlock, ...]
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    quadratic: np.ndarray | None = None

    def __post_init__(self):
        c = np.asarray(self.objective, dtype=float).reshape(-1)
        object.__setattr__(self, "objective", c)
        object.__setattr__(self, "blocks", tuple(self.blocks))
        nvar = c.shape[0]
        if nvar == 0:
            raise MalformedProblemError("problem has no variables")
        if not self.blocks:
            raise MalformedProblemError("problem has no cone constraints")
        for k, blk in enumerate(self.blocks):
            if blk.cone not in _CONES:
                raise MalformedProblemError(f"block {k}: unknown cone {blk.cone!r}")
            if blk.F.ndim != 2 or blk.F.shape[1] != nvar:
                raise MalformedProblemError(
                    f"block {k}: map has {blk.F.shape[-1]} columns, expected {nvar}"
                )
            if blk.g.shape != (blk.rows,):
                raise MalformedProblemError(f"block {k}: offset length {blk.g.shape} != {blk.rows} rows")
            if blk.cone == PSD:
                if blk.dim is None or blk.dim < 1 or blk.rows != blk.dim * blk.dim:
                    raise MalformedProblemError(
                        f"block {k}: PSD block of dim {blk.dim} needs dim*dim rows, got {blk.rows}"
                    )
            elif blk.cone == SECOND_ORDER and blk.rows < 1:
                raise MalformedProblemError(f"block {k}: empty second-order cone")
        if (self.A_eq is None) != (self.b_eq is None):
            raise MalformedProblemError("A_eq and b_eq must be given together")
        if self.A_eq is not None:
            A = np.atleast_2d(np.asarray(self.A_eq, dtype=float))
            b = np.atleast_1d(np.asarray(self.b_eq, dtype=float))
            if A.shape[1] != nvar or b.shape != (A.shape[0],):
                raise MalformedProblemError("equality rows do not match the variable space")
            object.__setattr__(self, "A_eq", A)
            object.__setattr__(self, "b_eq", b)
        if self.quadratic is not None:
            P = np.atleast_2d(np.asarray(self.quadratic, dtype=float))
            if P.shape != (nvar, nvar):
                raise MalformedProblemError(f"quadratic term has shape {P.shape}, expected {(nvar, nvar)}")
            object.__setattr__(self, "quadratic", 0.5 * (P + P.T))

    @property
    def n_variables(self) -> int:
        return self.objective.shape[0]


@dataclass
class ConicSolution:
    status: str
    x: np.ndarray | None
    objective: float
    residuals: dict = field(default_factory=dict)
    iterations: int = 0
    duals: list | None = None

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


def cone_violation(block: ConeBlock, x: np.ndarray) -> float:
    """Largest amount by which ``F x + g`` falls outside its cone (0 if inside)."""
    s = block.F @ x + block.g
    if block.cone == NONNEGATIVE:
        return float(max(0.0, -s.min()))
    if block.cone == SECOND_ORDER:
        return float(max(0.0, np.linalg.norm(s[1:]) - s[0]))
    S = s.reshape(block.dim, block.dim, order="F")
    return float(max(0.0, -np.linalg.eigvalsh(0.5 * (S + S.T))[0]))


def _block_order(problem: ConicProblem) -> list[int]:
    rank = {NONNEGATIVE: 0, SECOND_ORDER: 1, PSD: 2}
    return sorted(range(len(problem.blocks)), key=lambda k: rank[problem.blocks[k].cone])


def _assemble(problem: ConicProblem):
    blocks = [problem.blocks[k] for k in _block_order(problem)]
    # cvxopt form: G x + s = h, s in K  <=>  F x + g in K with G = -F, h = g
    G = np.vstack([-b.F for b in blocks])
    h = np.concatenate([b.g for b in blocks])
    dims = {
        "l": sum(b.rows for b in blocks if b.cone == NONNEGATIVE),
        "q": [b.rows for b in blocks if b.cone == SECOND_ORDER],
        "s": [b.dim for b in blocks if b.cone == PSD],
    }
    return G, h, dims


def solve(
    problem: ConicProblem,
    feastol: float = FEAS_TOL,
    gaptol: float = GAP_TOL,
    max_iters: int = 100,
) -> ConicSolution:
    """Solve ``problem`` and classify the outcome.

    ``optimal`` is only reported when the primal/dual residuals are within
    ``feastol``, the duality gap is within ``gaptol * max(1, |objective|)``,
    and the returned point lies in every cone up to ``feastol`` (relative to
    ``max(1, ||g||)`` over all blocks, like the primal residual). Anything
    else the solver hands back is reported as ``numerical_failure``.
    """
    G, h, dims = _assemble(problem)
    opts = {
        "show_progress": False,
        "abstol": gaptol,
        "reltol": gaptol,
        "feastol": feastol,
        "maxiters": max_iters,
    }
    args = [matrix(problem.objective), matrix(G), matrix(h), dims]
    if problem.A_eq is not None:
        args += [matrix(problem.A_eq), matrix(problem.b_eq)]
    try:
        if problem.quadratic is None:
            raw = solvers.conelp(*args, options=opts)
        else:
            # coneqp has no infeasibility detection; such problems end as numerical_failure
            raw = solvers.coneqp(matrix(problem.quadratic), *args, options=opts)
    except (ArithmeticError, ValueError) as exc:
        logger.debug("conelp raised %r", exc)
        return ConicSolution(NUMERICAL_FAILURE, None, float("nan"), {"error": str(exc)})

    residuals = {
        "primal_infeasibility": raw["primal infeasibility"],
        "dual_infeasibility": raw["dual infeasibility"],
        "gap": raw["gap"],
        "relative_gap": raw["relative gap"],
    }
    iters = int(raw["iterations"])
    if raw["status"] == "primal infeasible":
        return ConicSolution(INFEASIBLE, None, float("nan"), residuals, iters)
    if raw["status"] == "dual infeasible":
        return ConicSolution(UNBOUNDED, None, float("nan"), residuals, iters)
    if raw["x"] is None:
        return ConicSolution(NUMERICAL_FAILURE, None, float("nan"), residuals, iters)

    x = np.array(raw["x"]).reshape(-1)
    duals = _split_duals(problem, raw.get("z"))
    obj = float(problem.objective @ x)
    if problem.quadratic is not None:
        obj += 0.5 * float(x @ problem.quadratic @ x)
    scale = max(1.0, abs(obj))
    # same normalisation as the solver's relative primal residual
    worst_cone = max(cone_violation(b, x) for b in problem.blocks) / max(1.0, float(np.linalg.norm(h)))
    residuals["cone_violation"] = worst_cone
    if problem.A_eq is not None:
        residuals["equality_residual"] = float(np.abs(problem.A_eq @ x - problem.b_eq).max())

    def _small(v):
        return v is not None and v <= feastol

    gap = raw["gap"]
    converged = (
        _small(raw["primal infeasibility"])
        and _small(raw["dual infeasibility"])
        and gap is not None
        and abs(gap) <= gaptol * scale
        and worst_cone <= feastol
    )
    if not converged:
        logger.debug("conelp status %s, residuals %s", raw["status"], residuals)
        return ConicSolution(NUMERICAL_FAILURE, x, obj, residuals, iters, duals)
    return ConicSolution(OPTIMAL, x, obj, residuals, iters, duals)


def _split_duals(problem: ConicProblem, z) -> list | None:
    """Dual vectors per block, in the caller's block order."""
    if z is None:
        return None
    z = np.array(z).reshape(-1)
    out = [None] * len(problem.blocks)
    pos = 0
    for k in _block_order(problem):
        rows = problem.blocks[k].rows
        out[k] = z[pos:pos + rows]
        pos += rows
    return out
