"""Grid value iteration for the discounted reach-avoid value function.

The backup at a node ``x`` is::

    max_u min_d min{ c(x), max{ r(x), gamma * V(f(x, u, d)) } }

with ``V`` evaluated off-grid by multilinear interpolation (coordinates are
clamped to the grid box first).  The operator is a ``gamma``-contraction in the
sup norm, so iteration from any bounded start converges to a unique field.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .exceptions import BudgetError, ConfigError, DimensionError, ReachCertError
from .systems import SystemModel

DEFAULT_CONTROL_POINTS = 11
DEFAULT_DISTURBANCE_POINTS = 5
DEFAULT_TOL = 1e-6
MAX_TABLE_ENTRIES = 60_000_000


class ContractionViolation(ReachCertError, RuntimeError):
    """Successive residuals failed to shrink by the discount factor."""


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform rectangular grid, nodes stored in row-major (C) order."""

    lo: np.ndarray
    hi: np.ndarray
    counts: tuple[int, ...]

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, float))
        hi = np.atleast_1d(np.asarray(self.hi, float))
        counts = tuple(int(c) for c in np.atleast_1d(self.counts))
        if not (lo.shape == hi.shape and lo.size == len(counts)):
            raise DimensionError("grid bounds and counts disagree in length")
        if np.any(lo >= hi) or min(counts) < 2:
            raise ConfigError("grid axes need min < max and at least 2 points")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "counts", counts)

    @classmethod
    def from_axes(cls, axes: Sequence[Sequence[float]]) -> "Grid":
        """Build from ``[(min, max, count), ...]``."""
        axes = [tuple(a) for a in axes]
        return cls([a[0] for a in axes], [a[1] for a in axes], tuple(int(a[2]) for a in axes))

    @property
    def ndim(self) -> int:
        return len(self.counts)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.counts

    @property
    def size(self) -> int:
        return int(np.prod(self.counts))

    @property
    def spacing(self) -> np.ndarray:
        return (self.hi - self.lo) / (np.asarray(self.counts) - 1)

    @property
    def axes(self) -> list[np.ndarray]:
        return [np.linspace(l, h, c) for l, h, c in zip(self.lo, self.hi, self.counts)]

    @property
    def volume(self) -> float:
        return float(np.prod(self.hi - self.lo))

    def nodes(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def to_dict(self) -> dict:
        return {"axes": [[float(l), float(h), int(c)] for l, h, c in zip(self.lo, self.hi, self.counts)]}


@dataclass(frozen=True, eq=False)
class ActionLattice:
    """Finite control and disturbance sets used to discretise the max-min."""

    controls: np.ndarray
    disturbances: np.ndarray

    def __post_init__(self):
        u = np.atleast_2d(np.asarray(self.controls, float))
        d = np.atleast_2d(np.asarray(self.disturbances, float))
        if u.shape[0] == 0 or d.shape[0] == 0:
            raise ConfigError("action lattices must be nonempty")
        object.__setattr__(self, "controls", u)
        object.__setattr__(self, "disturbances", d)

    @classmethod
    def for_model(cls, model: SystemModel, control_points: int = DEFAULT_CONTROL_POINTS,
                  disturbance_points: int = DEFAULT_DISTURBANCE_POINTS) -> "ActionLattice":
        lat = cls(model.U.lattice(control_points), model.D.lattice(disturbance_points))
        lat.check(model)
        return lat

    def check(self, model: SystemModel) -> None:
        if self.controls.shape[1] != model.m_u or self.disturbances.shape[1] != model.m_d:
            raise DimensionError("lattice dimensions disagree with the model")
        if not np.all(model.U.contains(self.controls)) or not np.all(model.D.contains(self.disturbances)):
            raise ConfigError("lattice points must lie inside U and D")


@dataclass(frozen=True, eq=False)
class ValueField:
    grid: Grid
    values: np.ndarray
    gamma: float
    iterations: int = 0
    residual: float = float("nan")
    converged: bool = False
    settled: bool = False
    mode: str = "reach_avoid"
    bound: float = 10.0
    residuals: tuple[float, ...] = field(default=(), repr=False)

    def __post_init__(self):
        vals = np.asarray(self.values, float).reshape(self.grid.shape)
        if not np.all(np.isfinite(vals)):
            raise ReachCertError("value field contains non-finite entries")
        object.__setattr__(self, "values", vals)

    @property
    def flat(self) -> np.ndarray:
        return self.values.ravel()

    @property
    def kernel_tolerance(self) -> float:
        """Viability threshold: nodes with ``V >= -gamma**K * bound`` are kept."""
        return self.gamma**self.iterations * self.bound

    def membership(self, values=None) -> np.ndarray:
        """Boolean membership of the mode's set of interest for given values."""
        v = self.values if values is None else np.asarray(values)
        if self.mode == "viability":
            return v >= -self.kernel_tolerance
        return v > 0


# ---------------------------------------------------------------------------
# Interpolation
# ---------------------------------------------------------------------------


def corner_weights(grid: Grid, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Flat corner indices and multilinear weights for points ``X`` of shape (M, n)."""
    X = np.asarray(X, float).reshape(-1, grid.ndim)
    counts = np.asarray(grid.counts)
    t = (np.clip(X, grid.lo, grid.hi) - grid.lo) / grid.spacing
    i0 = np.clip(np.floor(t).astype(np.int64), 0, counts - 2)
    frac = np.clip(t - i0, 0.0, 1.0)
    strides = np.cumprod(np.concatenate([counts[1:], [1]])[::-1])[::-1]
    base = i0 @ strides
    ncorner = 1 << grid.ndim
    idx = np.empty((X.shape[0], ncorner), dtype=np.int64)
    w = np.empty((X.shape[0], ncorner))
    for corner in range(ncorner):
        bits = np.array([(corner >> (grid.ndim - 1 - k)) & 1 for k in range(grid.ndim)])
        idx[:, corner] = base + bits @ strides
        w[:, corner] = np.prod(np.where(bits, frac, 1.0 - frac), axis=1)
    return idx, w


def interpolate_values(grid: Grid, flat_values: np.ndarray, X) -> np.ndarray:
    X = np.asarray(X, float)
    lead = X.shape[:-1]
    idx, w = corner_weights(grid, X.reshape(-1, grid.ndim))
    return np.sum(flat_values[idx] * w, axis=1).reshape(lead)


def interpolate(field: ValueField, x) -> np.ndarray | float:
    """Multilinear interpolation of ``field`` at ``x`` (shape ``(..., n)``)."""
    x = np.asarray(x, float)
    if x.ndim == 0 or x.shape[-1] != field.grid.ndim:
        if field.grid.ndim == 1:
            x = x[..., None]
        else:
            raise DimensionError(f"points must have trailing size {field.grid.ndim}")
    out = interpolate_values(field.grid, field.flat, x)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# Bellman operator
# ---------------------------------------------------------------------------


class BellmanOperator:
    """Precomputed backup for a fixed (model, grid, lattice, gamma).

    Successor interpolation stencils do not depend on the field, so they are
    built once and each application is a gather plus reductions.
    """

    def __init__(self, model: SystemModel, grid: Grid, lattice: ActionLattice, gamma: float,
                 max_entries: int = MAX_TABLE_ENTRIES):
        if not 0 < gamma < 1:
            raise ConfigError(f"gamma must lie in (0, 1), got {gamma}")
        if grid.ndim != model.n:
            raise DimensionError(f"grid has {grid.ndim} axes but the model state has {model.n}")
        lattice.check(model)
        ku, kd = lattice.controls.shape[0], lattice.disturbances.shape[0]
        entries = grid.size * ku * kd * (1 << grid.ndim)
        if entries > max_entries:
            raise BudgetError(
                f"backup table needs {entries} entries (grid {grid.size} x {ku} controls x "
                f"{kd} disturbances x {1 << grid.ndim} corners), budget is {max_entries}"
            )
        self.model, self.grid, self.lattice, self.gamma = model, grid, lattice, float(gamma)
        nodes = grid.nodes()
        self.r = np.asarray(model.reward(nodes), float)
        self.c = np.asarray(model.constraint(nodes), float)
        succ = model.step_batch(nodes[:, None, None, :], lattice.controls[None, :, None, :],
                                lattice.disturbances[None, None, :, :])
        self.shape = (grid.size, ku, kd)
        self._idx, self._w = corner_weights(grid, succ.reshape(-1, grid.ndim))

    def successor_values(self, flat_values: np.ndarray) -> np.ndarray:
        """Interpolated ``V(f(x, u, d))`` with shape (nodes, controls, disturbances)."""
        return np.einsum("ij,ij->i", flat_values[self._idx], self._w).reshape(self.shape)

    def integrand(self, flat_values: np.ndarray) -> np.ndarray:
        s = self.successor_values(flat_values)
        return np.minimum(self.c[:, None, None], np.maximum(self.r[:, None, None], self.gamma * s))

    def __call__(self, flat_values: np.ndarray) -> np.ndarray:
        # the integrand is monotone in the successor value, so reduce first
        s = self.successor_values(flat_values).min(axis=2).max(axis=1)
        return np.minimum(self.c, np.maximum(self.r, self.gamma * s))


def bellman_backup(field: ValueField, model: SystemModel, lattice: ActionLattice,
                   operator: BellmanOperator | None = None) -> ValueField:
    """Apply one backup; the input field is not modified."""
    op = operator or BellmanOperator(model, field.grid, lattice, field.gamma)
    return ValueField(field.grid, op(field.flat), field.gamma, mode=model.mode, bound=model.bound)


def default_max_iter(gamma: float, tol: float, bound: float) -> int:
    return 20 * tol_iterations(gamma, tol, bound) + 100


def tol_iterations(gamma: float, tol: float, bound: float) -> int:
    """Iterations for ``gamma**k * bound`` to fall below ``tol``."""
    return max(1, math.ceil(math.log(tol / bound) / math.log(gamma)))


def initial_values(model: SystemModel, op: BellmanOperator) -> np.ndarray:
    v0 = np.minimum(op.r, op.c)
    if model.mode == "reach":
        # with c == 1 the value is nonnegative, and max(min(r, c), 0) still bounds it from below
        v0 = np.maximum(v0, 0.0)
    return v0


def value_iteration(model: SystemModel, grid: Grid, gamma: float,
                    lattice: ActionLattice | None = None, tol: float = DEFAULT_TOL,
                    max_iter: int | None = None, settle: int | None = None,
                    operator: BellmanOperator | None = None) -> ValueField:
    """Iterate the backup to its fixed point.

    The iteration runs until the sup-norm residual drops to ``tol``.  Values
    near the zero level decay like ``gamma**t`` in the reaching time, so a
    small absolute residual does not yet fix their sign; iteration therefore
    continues until the membership mask has been unchanged for ``settle``
    consecutive backups (default: iterations for ``gamma**k * bound <= tol``).
    Exhausting ``max_iter`` is reported through ``converged``/``settled``.
    """
    if not 0 < gamma < 1:
        raise ConfigError(f"gamma must lie in (0, 1), got {gamma}")
    if tol <= 0:
        raise ConfigError("tol must be positive")
    lattice = lattice or ActionLattice.for_model(model)
    op = operator or BellmanOperator(model, grid, lattice, gamma)
    bound = model.bound
    k_tol = tol_iterations(gamma, tol, bound)
    max_iter = default_max_iter(gamma, tol, bound) if max_iter is None else int(max_iter)
    settle = k_tol if settle is None else int(settle)

    V = initial_values(model, op)
    residuals: list[float] = []
    converged = settled = False
    stable = 0
    mask = None
    k = 0
    while k < max_iter:
        V_next = op(V)
        res = float(np.max(np.abs(V_next - V)))
        if residuals and res > gamma * residuals[-1] * (1 + 1e-9) + 1e-14:
            raise ContractionViolation(
                f"residual {res:.3e} exceeds gamma * previous ({residuals[-1]:.3e}) at iteration {k + 1}"
            )
        residuals.append(res)
        V = V_next
        k += 1
        if not converged and res <= tol:
            converged = True
        if converged:
            if model.mode == "viability":
                new_mask = V >= -(gamma**k) * bound
            else:
                new_mask = V > 0
            stable = stable + 1 if mask is not None and np.array_equal(new_mask, mask) else 0
            mask = new_mask
            if stable >= settle:
                settled = True
                break
    return ValueField(grid, V, gamma, iterations=k, residual=residuals[-1] if residuals else 0.0,
                      converged=converged, settled=settled, mode=model.mode, bound=bound,
                      residuals=tuple(residuals))


# ---------------------------------------------------------------------------
# Level sets
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LevelSet:
    mask: np.ndarray
    intervals: list[tuple[float, float]] | None  # 1-D grids only


def _intervals_1d(xs: np.ndarray, vals: np.ndarray, inside: np.ndarray) -> list[tuple[float, float]]:
    """Maximal runs of ``inside`` with ends placed at the linear zero crossing of ``vals``."""
    out = []
    i, n = 0, len(xs)
    while i < n:
        if not inside[i]:
            i += 1
            continue
        j = i
        while j + 1 < n and inside[j + 1]:
            j += 1
        left = xs[i] if i == 0 else _crossing(xs[i - 1], xs[i], vals[i - 1], vals[i])
        right = xs[j] if j == n - 1 else _crossing(xs[j], xs[j + 1], vals[j], vals[j + 1])
        out.append((float(left), float(right)))
        i = j + 1
    return out


def _crossing(xa, xb, va, vb) -> float:
    if va == vb:
        return 0.5 * (xa + xb)
    return xa + (xb - xa) * va / (va - vb)


def super_zero_set(field: ValueField) -> LevelSet:
    """Nodes with ``V > 0``; on 1-D grids also the maximal intervals."""
    mask = field.values > 0
    intervals = None
    if field.grid.ndim == 1:
        intervals = _intervals_1d(field.grid.axes[0], field.values, mask)
    return LevelSet(mask, intervals)


def kernel_set(field: ValueField) -> LevelSet:
    """Viability-kernel estimate ``{V >= -kernel_tolerance}``."""
    level = -field.kernel_tolerance
    mask = field.values >= level
    intervals = None
    if field.grid.ndim == 1:
        intervals = _intervals_1d(field.grid.axes[0], field.values - level, mask)
    return LevelSet(mask, intervals)


def level_set(field: ValueField) -> LevelSet:
    return kernel_set(field) if field.mode == "viability" else super_zero_set(field)


# ---------------------------------------------------------------------------
# Reach-avoid measures
# ---------------------------------------------------------------------------


def _states(traj) -> np.ndarray:
    states = getattr(traj, "states", traj)
    states = np.asarray(states, float)
    return states[:, None] if states.ndim == 1 else states


def ra_measure(traj, t: int, model: SystemModel) -> float:
    """``min{ r(x_t), min_{tau <= t} c(x_tau) }``."""
    states = _states(traj)
    if not 0 <= t < len(states):
        raise IndexError(f"stage {t} outside trajectory of length {len(states)}")
    return float(min(model.reward(states[t]), np.min(model.constraint(states[: t + 1]))))


def discounted_ra_measure(traj, t: int, gamma: float, model: SystemModel) -> float:
    """``min{ gamma^t r(x_t), min_{tau <= t} gamma^tau c(x_tau) }``."""
    if not 0 < gamma < 1:
        raise ConfigError(f"gamma must lie in (0, 1), got {gamma}")
    states = _states(traj)
    if not 0 <= t < len(states):
        raise IndexError(f"stage {t} outside trajectory of length {len(states)}")
    disc = gamma ** np.arange(t + 1)
    c = np.asarray(model.constraint(states[: t + 1]), float)
    return float(min(gamma**t * model.reward(states[t]), np.min(disc * c)))


def ra_measures(states: np.ndarray, model: SystemModel) -> np.ndarray:
    """RA measure at every stage for a batch of state sequences ``(B, T+1, n)``."""
    r = np.asarray(model.reward(states), float)
    c = np.minimum.accumulate(np.asarray(model.constraint(states), float), axis=-1)
    return np.minimum(r, c)


def first_entry_stage(states: np.ndarray, model: SystemModel) -> np.ndarray:
    """First stage with positive RA measure per sequence, ``-1`` if none."""
    g = ra_measures(states, model) > 0
    hit = g.any(axis=-1)
    return np.where(hit, g.argmax(axis=-1), -1)
