"""Nominal trajectories and Lipschitz error balls around them.

Starting anywhere within ``eps_x`` of the nominal initial state and applying
the nominal open-loop controls under disturbances with ``||d|| <= eps_d``,
the state at stage ``t`` stays within ``radii[t]`` of the nominal state, where

    radii[0] = eps_x,   radii[t+1] = L_fx * radii[t] + L_fd * eps_d.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError
from .policy import Policy
from .systems import SystemModel


@dataclass(frozen=True, eq=False)
class Tube:
    nominal_states: np.ndarray  # (T+1, n)
    nominal_controls: np.ndarray  # (T, m_u)
    radii: np.ndarray  # (T+1,)
    eps_x: float
    eps_d: float

    @property
    def T(self) -> int:
        return len(self.nominal_controls)

    def contains(self, t: int, x) -> np.ndarray:
        x = np.asarray(x, float)
        return np.linalg.norm(x - self.nominal_states[t], axis=-1) <= self.radii[t]

    def to_dict(self) -> dict:
        return {
            "nominal_states": self.nominal_states.tolist(),
            "nominal_controls": self.nominal_controls.tolist(),
            "radii": self.radii.tolist(),
            "eps_x": self.eps_x,
            "eps_d": self.eps_d,
        }


def nominal_rollout(model: SystemModel, policy: Policy, x0, T: int) -> tuple[np.ndarray, np.ndarray]:
    """Disturbance-free rollout ``x_{t+1} = f(x_t, pi(x_t), 0)``."""
    if T < 1:
        raise ConfigError("certification horizon must be at least 1")
    zero_d = np.zeros(model.m_d)
    if not model.D.contains(zero_d):
        raise ConfigError("nominal rollouts need 0 in the disturbance set")
    x = np.atleast_1d(np.asarray(x0, float))
    states = np.empty((T + 1, model.n))
    controls = np.empty((T, model.m_u))
    states[0] = x
    for t in range(T):
        u = np.atleast_1d(policy(states[t]))
        controls[t] = u
        states[t + 1] = model.step(states[t], u, zero_d)
    return states, controls


def lipschitz_tube(model: SystemModel, eps_x: float, T: int, eps_d: float | None = None) -> np.ndarray:
    """Radii ``Delta x_0 .. Delta x_T`` by the one-step recursion."""
    if eps_x < 0:
        raise ConfigError("eps_x must be nonnegative")
    eps_d = model.eps_d if eps_d is None else eps_d
    radii = np.empty(T + 1)
    radii[0] = eps_x
    for t in range(T):
        radii[t + 1] = model.L_fx * radii[t] + model.L_fd * eps_d
    return radii


def lipschitz_tube_closed_form(L_fx: float, L_fd: float, eps_x: float, eps_d: float, T: int) -> np.ndarray:
    """``L_fx^t eps_x + sum_{tau<t} L_fx^tau L_fd eps_d`` evaluated term by term."""
    out = np.empty(T + 1)
    for t in range(T + 1):
        out[t] = L_fx**t * eps_x + sum(L_fx**tau * L_fd * eps_d for tau in range(t))
    return out


def build_tube(model: SystemModel, policy: Policy, x0, eps_x: float, T: int) -> Tube:
    states, controls = nominal_rollout(model, policy, x0, T)
    return Tube(states, controls, lipschitz_tube(model, eps_x, T), float(eps_x), model.eps_d)
