"""Control and disturbance policies, greedy extraction and rollouts.

Policies accept a single state ``(n,)`` or a batch ``(B, n)`` and return the
matching control shape.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .exceptions import DimensionError, PolicyError
from .systems import BoundedSet, SystemModel
from .value import ActionLattice, ValueField, interpolate_values

BLACKBOX_TOL = 1e-6


def _as_batch(x, n: int) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, float)
    if x.ndim == 0:
        x = x.reshape(1)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.shape[-1] != n:
        raise DimensionError(f"expected trailing dimension {n}, got {X.shape}")
    return X, single


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator (Philox-4x64) keyed by ``seed``."""
    return np.random.Generator(np.random.Philox(key=int(seed)))


# ---------------------------------------------------------------------------
# Control policies
# ---------------------------------------------------------------------------


class Policy:
    """State -> control map whose outputs always lie in U."""

    model: SystemModel

    def batch(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, x) -> np.ndarray:
        X, single = _as_batch(x, self.model.n)
        out = self.batch(X)
        return out[0] if single else out


class ConstantPolicy(Policy):
    def __init__(self, model: SystemModel, u):
        self.model = model
        self.u = np.atleast_1d(np.asarray(u, float))
        if self.u.size != model.m_u:
            raise DimensionError("constant control has the wrong size")

    def batch(self, X):
        return np.broadcast_to(self.u, (X.shape[0], self.model.m_u)).copy()


class BlackBoxPolicy(Policy):
    """Wraps a user callable; outputs are projected into U within ``tol``.

    The callable receives one state at a time unless ``vectorized`` is set.
    """

    def __init__(self, model: SystemModel, fn: Callable, vectorized: bool = False,
                 tol: float = BLACKBOX_TOL):
        self.model, self.fn, self.vectorized, self.tol = model, fn, vectorized, tol

    def batch(self, X):
        if self.vectorized:
            raw = np.asarray(self.fn(X), float).reshape(X.shape[0], self.model.m_u)
        else:
            raw = np.stack([np.atleast_1d(np.asarray(self.fn(x), float)) for x in X])
        gap = self.model.U.distance(raw)
        if np.any(gap > self.tol):
            worst = int(np.argmax(gap))
            raise PolicyError(f"policy output {raw[worst]} is {gap[worst]:.3g} outside U")
        return self.model.U.project(raw)


class GridGreedyPolicy(Policy):
    """Argmax over lattice controls of the worst-case backup integrand."""

    def __init__(self, field: ValueField, model: SystemModel, lattice: ActionLattice):
        lattice.check(model)
        self.field, self.model, self.lattice = field, model, lattice

    def integrand(self, X: np.ndarray) -> np.ndarray:
        """``min{c, max{r, gamma V(f(x,u,d))}}`` with shape (B, controls, disturbances)."""
        m, lat = self.model, self.lattice
        succ = m.step_batch(X[:, None, None, :], lat.controls[None, :, None, :],
                            lat.disturbances[None, None, :, :])
        vals = interpolate_values(self.field.grid, self.field.flat, succ)
        r = np.asarray(m.reward(X), float)[:, None, None]
        c = np.asarray(m.constraint(X), float)[:, None, None]
        return np.minimum(c, np.maximum(r, self.field.gamma * vals))

    def batch(self, X):
        worst = self.integrand(X).min(axis=2)
        return self.lattice.controls[np.argmax(worst, axis=1)]


def greedy_policy(field: ValueField, model: SystemModel, lattice: ActionLattice) -> GridGreedyPolicy:
    return GridGreedyPolicy(field, model, lattice)


# ---------------------------------------------------------------------------
# Disturbance policies
# ---------------------------------------------------------------------------


class DisturbancePolicy:
    """(state, control) -> disturbance map with outputs in D."""

    model: SystemModel

    def batch(self, X: np.ndarray, U: np.ndarray, rng: np.random.Generator | None) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, x, u, rng: np.random.Generator | None = None) -> np.ndarray:
        X, single = _as_batch(x, self.model.n)
        U = np.atleast_2d(np.asarray(u, float)).reshape(X.shape[0], self.model.m_u)
        out = self.batch(X, U, rng)
        return out[0] if single else out


class ConstantDisturbance(DisturbancePolicy):
    def __init__(self, model: SystemModel, d):
        self.model = model
        self.d = np.atleast_1d(np.asarray(d, float))
        if self.d.size != model.m_d:
            raise DimensionError("constant disturbance has the wrong size")

    def batch(self, X, U, rng):
        return np.broadcast_to(self.d, (X.shape[0], self.model.m_d)).copy()


class SamplerDisturbance(DisturbancePolicy):
    """Independent uniform draws over D (or a supplied set)."""

    def __init__(self, model: SystemModel, region: BoundedSet | None = None):
        self.model = model
        self.region = region if region is not None else model.D

    def batch(self, X, U, rng):
        if rng is None:
            raise ValueError("sampled disturbances need a random generator")
        return self.region.sample(rng, X.shape[0])


class GridWorstCaseDisturbance(DisturbancePolicy):
    """Argmin over lattice disturbances of the backup integrand (first index on ties)."""

    def __init__(self, field: ValueField, model: SystemModel, lattice: ActionLattice):
        lattice.check(model)
        self.field, self.model, self.lattice = field, model, lattice

    def batch(self, X, U, rng=None):
        m, D = self.model, self.lattice.disturbances
        succ = m.step_batch(X[:, None, :], U[:, None, :], D[None, :, :])
        vals = interpolate_values(self.field.grid, self.field.flat, succ)
        r = np.asarray(m.reward(X), float)[:, None]
        c = np.asarray(m.constraint(X), float)[:, None]
        integrand = np.minimum(c, np.maximum(r, self.field.gamma * vals))
        return D[np.argmin(integrand, axis=1)]


def worst_disturbance(field: ValueField, model: SystemModel, lattice: ActionLattice, x, u) -> np.ndarray:
    return GridWorstCaseDisturbance(field, model, lattice)(x, u)


# ---------------------------------------------------------------------------
# Trajectories
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Trajectory:
    states: np.ndarray  # (T+1, n)
    controls: np.ndarray  # (T, m_u)
    disturbances: np.ndarray  # (T, m_d)

    @property
    def horizon(self) -> int:
        return len(self.controls)

    def verify(self, model: SystemModel) -> bool:
        """Recompute every transition from the stored (x_t, u_t, d_t) with ``model.step``."""
        for t in range(self.horizon):
            nxt = model.step(self.states[t], self.controls[t], self.disturbances[t])
            if not np.array_equal(nxt, self.states[t + 1]):
                return False
        return True


def simulate(model: SystemModel, X0: np.ndarray, horizon: int,
             control: Callable[[int, np.ndarray], np.ndarray],
             disturbance: Callable[[int, np.ndarray, np.ndarray], np.ndarray],
             ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorised rollout core; returns states (B, T+1, n), controls and disturbances."""
    X0 = np.atleast_2d(np.asarray(X0, float))
    B = X0.shape[0]
    states = np.empty((B, horizon + 1, model.n))
    controls = np.empty((B, horizon, model.m_u))
    dists = np.empty((B, horizon, model.m_d))
    states[:, 0] = X0
    for t in range(horizon):
        X = states[:, t]
        U = control(t, X)
        D = disturbance(t, X, U)
        controls[:, t], dists[:, t] = U, D
        states[:, t + 1] = model.step_batch(X, U, D)
    return states, controls, dists


def rollout(model: SystemModel, policy: Policy, dist_policy: DisturbancePolicy, x0,
            horizon: int, seed: int = 0) -> Trajectory:
    """Closed-loop rollout; sampled disturbances come from a generator keyed by ``seed``."""
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    x = np.atleast_1d(np.asarray(x0, float))
    rng = make_rng(seed)
    states, controls, dists = [x], [], []
    for _ in range(horizon):
        u = np.atleast_1d(policy(x))
        d = np.atleast_1d(dist_policy(x, u, rng))
        x = model.step(x, u, d)  # rejects controls that escaped U
        states.append(x)
        controls.append(u)
        dists.append(d)
    return Trajectory(np.array(states),
                      np.array(controls).reshape(horizon, model.m_u),
                      np.array(dists).reshape(horizon, model.m_d))
