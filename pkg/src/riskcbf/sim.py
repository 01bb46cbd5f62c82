"""Seeded closed-loop rollouts of plant + safety filter, and their statistics."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .constraints import RiskCbfConfig, build_constraint
from .errors import InfeasibleError, SimulationAbort, SolverError, ValidationError
from .filters import DEFAULT_RHO, apply_filter
from .moments import MomentSet
from .plant import ControlAffinePlant
from .safe_sets import SafeSet, contains

logger = logging.getLogger(__name__)

CONTROLLERS = ("nominal", "proposed", "standard")
_MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """One step of the splitmix64 mixer; used to derive per-run seeds."""
    z = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def run_seed(base_seed: int, run_index: int) -> int:
    return splitmix64((int(base_seed) + int(run_index)) & _MASK64)


@dataclass(frozen=True)
class DisturbanceModel:
    """``zero`` or i.i.d. ``gaussian`` noise with the moments of ``moments``."""

    kind: str = "zero"
    moments: MomentSet | None = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("zero", "gaussian"):
            raise ValidationError(f"disturbance kind must be 'zero' or 'gaussian', got {self.kind!r}")
        if self.kind == "gaussian" and self.moments is None:
            raise ValidationError("gaussian disturbance needs moments")
        if not 0 <= int(self.seed) <= _MASK64:
            raise ValidationError("seed must be an unsigned 64-bit integer")

    def with_seed(self, seed: int) -> "DisturbanceModel":
        return replace(self, seed=int(seed))

    def sample(self, steps: int, dim: int) -> np.ndarray:
        """All ``steps`` disturbance vectors for one rollout, shape ``(steps, dim)``.

        Draws come from a counter-based Philox stream keyed by ``seed``, so a
        run's noise does not depend on which other runs were drawn before it.
        """
        if self.kind == "zero":
            return np.zeros((steps, dim))
        if self.moments.dim != dim:
            raise ValidationError(f"disturbance dimension {self.moments.dim} != state dimension {dim}")
        rng = np.random.Generator(np.random.Philox(key=int(self.seed)))
        chol = np.linalg.cholesky(self.moments.covariance)
        z = rng.standard_normal((steps, dim))
        return self.moments.mean + z @ chol.T


@dataclass
class Trajectory:
    states: np.ndarray
    inputs: np.ndarray
    barrier_values: np.ndarray
    slacks: np.ndarray
    filter_active_flags: np.ndarray
    nominal_inputs: np.ndarray | None = None
    disturbances: np.ndarray | None = None

    @property
    def steps(self) -> int:
        return self.inputs.shape[0]


@dataclass(frozen=True)
class SafetyStats:
    violation_steps: int
    min_barrier: float
    terminal_state: np.ndarray
    mean_input_deviation: float
    min_barrier_after_start: float = float("nan")
    n_points: int = 0

    @property
    def violation_fraction(self) -> float:
        return self.violation_steps / self.n_points if self.n_points else 0.0

    def to_dict(self) -> dict:
        return {
            "violation_steps": int(self.violation_steps),
            "violation_fraction": self.violation_fraction,
            "min_barrier": self.min_barrier,
            "min_barrier_after_start": self.min_barrier_after_start,
            "terminal_state": [float(v) for v in self.terminal_state],
            "mean_input_deviation": self.mean_input_deviation,
            "n_points": int(self.n_points),
        }


@dataclass(frozen=True)
class RunSpec:
    """Everything needed for one rollout except the disturbance seed."""

    plant: ControlAffinePlant
    controller: str
    safe_set: SafeSet
    cfg: RiskCbfConfig
    disturbance: DisturbanceModel
    x0: tuple
    steps: int
    rho: float = DEFAULT_RHO
    allow_slack: bool = False
    allow_unsafe_start: bool = False


def run_closed_loop(
    plant: ControlAffinePlant,
    controller: str,
    safe_set: SafeSet,
    cfg: RiskCbfConfig,
    disturbance: DisturbanceModel,
    x0,
    steps: int,
    rho: float = DEFAULT_RHO,
    allow_slack: bool = False,
    allow_unsafe_start: bool = False,
    nominal=None,
) -> Trajectory:
    """Roll out ``x+ = f(x) + g(x) u + w`` for ``steps`` steps.

    ``controller`` is ``"nominal"`` (no filter), ``"proposed"`` (risk-aware
    filter) or ``"standard"`` (same filter with every CVaR margin set to 0).
    ``nominal`` maps a state to the nominal input; it defaults to
    ``plant.nominal_control``.

    Raises
    ------
    SimulationAbort
        If the filter is infeasible (without slack) or the solver fails.
    """
    if controller not in CONTROLLERS:
        raise ValidationError(f"controller must be one of {CONTROLLERS}, got {controller!r}")
    if int(steps) < 1:
        raise ValidationError(f"steps must be >= 1, got {steps!r}")
    steps = int(steps)
    n, m = plant.state_dim, plant.input_dim
    x = np.asarray(x0, dtype=float).reshape(-1)
    if x.shape[0] != n:
        raise ValidationError(f"x0 has length {x.shape[0]}, plant state has {n}")
    if not allow_unsafe_start and not contains(safe_set, x):
        raise ValidationError(f"initial state {x.tolist()} is outside the safe set")
    nominal = nominal or plant.nominal_control
    step_cfg = cfg.standard() if controller == "standard" else cfg

    noise = disturbance.sample(steps, n)
    p = safe_set.barrier(x).shape[0]
    states = np.empty((steps + 1, n))
    inputs = np.empty((steps, m))
    u_noms = np.empty((steps, m))
    barriers = np.empty((steps + 1, p))
    slacks = np.zeros(steps)
    active = np.zeros(steps, dtype=bool)
    states[0] = x
    barriers[0] = safe_set.barrier(x)
    for t in range(steps):
        u_nom = np.asarray(nominal(x), dtype=float).reshape(m)
        u_noms[t] = u_nom
        if controller == "nominal":
            u = u_nom
        else:
            try:
                c = build_constraint(safe_set, plant, x, step_cfg)
                res = apply_filter(u_nom, c, rho, allow_slack)
            except InfeasibleError as exc:
                raise SimulationAbort("safety filter infeasible", t, exc) from exc
            except SolverError as exc:
                raise SimulationAbort(f"solver failure: {exc}", t, exc) from exc
            u = res.u_star
            slacks[t] = res.slack
            active[t] = res.active
        inputs[t] = u
        x = plant.drift(x) + plant.input_map(x) @ u + noise[t]
        states[t + 1] = x
        barriers[t + 1] = safe_set.barrier(x)
    return Trajectory(states, inputs, barriers, slacks, active, u_noms, noise)


def run_spec(spec: RunSpec, seed: int | None = None) -> Trajectory:
    dist = spec.disturbance if seed is None else spec.disturbance.with_seed(seed)
    return run_closed_loop(
        spec.plant, spec.controller, spec.safe_set, spec.cfg, dist, spec.x0, spec.steps,
        rho=spec.rho, allow_slack=spec.allow_slack, allow_unsafe_start=spec.allow_unsafe_start,
    )


def safety_stats(traj: Trajectory, safe_set: SafeSet | None = None) -> SafetyStats:
    """Per-step violation count (any barrier component negative) and summaries.

    When ``safe_set`` is given the barrier values are recomputed from the
    recorded states instead of trusting ``traj.barrier_values``.
    """
    if safe_set is not None:
        h = np.array([safe_set.barrier(s) for s in traj.states])
    else:
        h = np.asarray(traj.barrier_values)
    worst = h.min(axis=1)
    if traj.nominal_inputs is not None and traj.steps:
        dev = float(np.mean(np.linalg.norm(traj.inputs - traj.nominal_inputs, axis=1)))
    else:
        dev = 0.0
    return SafetyStats(
        violation_steps=int(np.count_nonzero(worst < 0.0)),
        min_barrier=float(worst.min()),
        terminal_state=np.array(traj.states[-1]),
        mean_input_deviation=dev,
        min_barrier_after_start=float(worst[1:].min()) if worst.shape[0] > 1 else float("nan"),
        n_points=int(worst.shape[0]),
    )


def _run_indexed(args):
    spec, seed = args
    return run_spec(spec, seed)


def run_batch(spec: RunSpec, n_runs: int, base_seed: int, workers: int = 1) -> list[Trajectory]:
    """``n_runs`` rollouts with seeds ``splitmix64(base_seed + i)``, ordered by ``i``."""
    if int(n_runs) < 1:
        raise ValidationError(f"n_runs must be >= 1, got {n_runs!r}")
    jobs = [(spec, run_seed(base_seed, i)) for i in range(int(n_runs))]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_indexed, jobs))
    return [_run_indexed(j) for j in jobs]


def monte_carlo(spec: RunSpec, n_runs: int, base_seed: int, workers: int = 1) -> list[SafetyStats]:
    return [safety_stats(t) for t in run_batch(spec, n_runs, base_seed, workers)]
