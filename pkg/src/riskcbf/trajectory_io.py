"""CSV serialization of trajectories (17 significant digits, exact round-trip).

Header: ``t,x1..xn,u1..um,h1..hp,slack,active``. There is one row per
state; the final row has no input, so its ``u``, ``slack`` and ``active``
cells are empty.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .sim import Trajectory


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def header(n: int, m: int, p: int) -> list[str]:
    return (
        ["t"]
        + [f"x{i + 1}" for i in range(n)]
        + [f"u{i + 1}" for i in range(m)]
        + [f"h{i + 1}" for i in range(p)]
        + ["slack", "active"]
    )


def write_trajectory_csv(traj: Trajectory, path) -> None:
    T = traj.steps
    n, m, p = traj.states.shape[1], traj.inputs.shape[1], traj.barrier_values.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header(n, m, p))
        for t in range(T + 1):
            row = [str(t)] + [_fmt(v) for v in traj.states[t]]
            if t < T:
                row += [_fmt(v) for v in traj.inputs[t]]
            else:
                row += [""] * m
            row += [_fmt(v) for v in traj.barrier_values[t]]
            if t < T:
                row += [_fmt(traj.slacks[t]), "1" if traj.filter_active_flags[t] else "0"]
            else:
                row += ["", ""]
            w.writerow(row)


def _count(cols, prefix):
    return sum(1 for c in cols if c.startswith(prefix) and c[len(prefix):].isdigit())


def read_trajectory_csv(path) -> Trajectory:
    """Parse a trajectory CSV; raises :class:`ValidationError` if malformed."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc.strerror or exc}") from None
    if len(rows) < 2:
        raise ValidationError(f"{path}: trajectory CSV needs a header and at least one row")
    cols = rows[0]
    n, m, p = _count(cols, "x"), _count(cols, "u"), _count(cols, "h")
    if n == 0 or p == 0 or cols != header(n, m, p):
        raise ValidationError(f"{path}: unexpected header {cols}")
    body = rows[1:]
    T = len(body) - 1
    try:
        states = np.array([[float(v) for v in r[1:1 + n]] for r in body])
        inputs = np.array([[float(v) for v in r[1 + n:1 + n + m]] for r in body[:-1]]).reshape(T, m)
        barriers = np.array([[float(v) for v in r[1 + n + m:1 + n + m + p]] for r in body])
        slacks = np.array([float(r[1 + n + m + p]) for r in body[:-1]])
        active = np.array([r[2 + n + m + p] == "1" for r in body[:-1]], dtype=bool)
        ts = [int(r[0]) for r in body]
    except (ValueError, IndexError) as exc:
        raise ValidationError(f"{path}: malformed row ({exc})") from None
    if ts != list(range(T + 1)) or any(len(r) != len(cols) for r in body):
        raise ValidationError(f"{path}: rows are not a contiguous time series")
    return Trajectory(states, inputs, barriers, slacks, active)
