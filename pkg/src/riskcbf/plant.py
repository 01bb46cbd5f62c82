"""Discrete-time control-affine plants ``x+ = f(x) + g(x) u + w``."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ValidationError


class ControlAffinePlant:
    """Plant given by pointwise drift ``f`` and input map ``g``.

    Subclasses override :meth:`drift` and :meth:`input_map`; alternatively
    pass callables to the constructor.
    """

    def __init__(
        self,
        state_dim: int,
        input_dim: int,
        drift: Callable | None = None,
        input_map: Callable | None = None,
    ):
        self.state_dim = int(state_dim)
        self.input_dim = int(input_dim)
        self._drift = drift
        self._input_map = input_map

    def drift(self, x) -> np.ndarray:
        return np.asarray(self._drift(x), dtype=float).reshape(self.state_dim)

    def input_map(self, x) -> np.ndarray:
        return np.asarray(self._input_map(x), dtype=float).reshape(self.state_dim, self.input_dim)

    def step(self, x, u, w=None) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        nxt = self.drift(x) + self.input_map(x) @ np.asarray(u, dtype=float).reshape(self.input_dim)
        if w is not None:
            nxt = nxt + w
        return nxt


@dataclass(frozen=True)
class PendulumParams:
    dt: float = 0.01

    def __post_init__(self):
        if not float(self.dt) > 0:
            raise ValidationError(f"dt must be positive, got {self.dt!r}")


def pendulum_drift(params: PendulumParams, state) -> np.ndarray:
    x, y = _pendulum_state(state)
    return np.array([x + y * params.dt, y + math.sin(x) * params.dt])


def pendulum_input_map(params: PendulumParams, state=None) -> np.ndarray:
    return np.array([[0.0], [params.dt]])


def nominal_pendulum_control(state) -> float:
    """Feedback-linearizing stabilizer ``u = -x - sin(x) - y``."""
    x, y = _pendulum_state(state)
    return -x - math.sin(x) - y


def _pendulum_state(state):
    s = np.asarray(state, dtype=float).reshape(-1)
    if s.shape[0] != 2:
        raise ValidationError(f"pendulum state must have 2 entries, got {s.shape[0]}")
    return float(s[0]), float(s[1])


class Pendulum(ControlAffinePlant):
    """Inverted pendulum linearized around upright; angle is not wrapped."""

    def __init__(self, dt: float = 0.01):
        super().__init__(2, 1)
        self.params = PendulumParams(dt)

    @property
    def dt(self) -> float:
        return self.params.dt

    def drift(self, x) -> np.ndarray:
        return pendulum_drift(self.params, x)

    def input_map(self, x) -> np.ndarray:
        return pendulum_input_map(self.params, x)

    def nominal_control(self, x) -> np.ndarray:
        return np.array([nominal_pendulum_control(x)])

    def __repr__(self):
        return f"Pendulum(dt={self.dt})"


PLANTS = {"pendulum": Pendulum}


def make_plant(name: str, **kwargs) -> ControlAffinePlant:
    try:
        cls = PLANTS[name]
    except KeyError:
        raise ValidationError(f"unknown plant {name!r}; available: {sorted(PLANTS)}") from None
    return cls(**kwargs)
