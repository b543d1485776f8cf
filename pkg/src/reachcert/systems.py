"""Dynamical systems, admissible sets, reward/constraint functions and benchmarks.

All state-dependent callables are vectorised: they accept arrays of shape
``(..., n)`` and broadcast over leading axes.  Controls and disturbances follow
the same convention with trailing sizes ``m_u`` and ``m_d``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from .exceptions import ConfigError, DimensionError, SetMembershipError

MODES = ("reach_avoid", "viability", "reach")
MEMBERSHIP_ATOL = 1e-9
DEFAULT_BOUND = 10.0


def _vec(x, name="array") -> np.ndarray:
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be one-dimensional, got shape {arr.shape}")
    return arr


# ---------------------------------------------------------------------------
# Admissible sets
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Box:
    """Axis-aligned box ``{x : lo <= x <= hi}``."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo, hi = _vec(self.lo, "lo"), _vec(self.hi, "hi")
        if lo.shape != hi.shape:
            raise DimensionError("Box bounds have different lengths")
        if np.any(lo > hi):
            raise ConfigError(f"Box requires lo <= hi, got lo={lo}, hi={hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return self.lo.size

    @property
    def volume(self) -> float:
        return float(np.prod(self.hi - self.lo))

    @property
    def max_norm(self) -> float:
        """Largest Euclidean norm of any member."""
        return float(np.linalg.norm(np.maximum(np.abs(self.lo), np.abs(self.hi))))

    def contains(self, x, atol: float = MEMBERSHIP_ATOL) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.all((x >= self.lo - atol) & (x <= self.hi + atol), axis=-1)

    def project(self, x) -> np.ndarray:
        return np.clip(x, self.lo, self.hi)

    def distance(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.linalg.norm(x - self.project(x), axis=-1)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.uniform(self.lo, self.hi, size=(size, self.dim))

    def lattice(self, points_per_dim: int) -> np.ndarray:
        axes = []
        for lo, hi in zip(self.lo, self.hi):
            if lo == hi:
                axes.append(np.array([lo]))
            else:
                if points_per_dim < 2:
                    raise ConfigError("box lattices need at least 2 points per dimension")
                axes.append(np.linspace(lo, hi, points_per_dim))
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def to_dict(self) -> dict:
        return {"type": "box", "lo": self.lo.tolist(), "hi": self.hi.tolist()}


@dataclass(frozen=True, eq=False)
class Ball:
    """Euclidean ball ``{x : ||x - center||_2 <= radius}``."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", _vec(self.center, "center"))
        if not self.radius >= 0:
            raise ConfigError(f"Ball radius must be nonnegative, got {self.radius}")
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def dim(self) -> int:
        return self.center.size

    @property
    def max_norm(self) -> float:
        return float(np.linalg.norm(self.center) + self.radius)

    def contains(self, x, atol: float = MEMBERSHIP_ATOL) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.linalg.norm(x - self.center, axis=-1) <= self.radius + atol

    def project(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        off = x - self.center
        nrm = np.linalg.norm(off, axis=-1, keepdims=True)
        scale = np.where(nrm > self.radius, self.radius / np.maximum(nrm, 1e-300), 1.0)
        return self.center + off * scale

    def distance(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.maximum(np.linalg.norm(x - self.center, axis=-1) - self.radius, 0.0)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        direction = rng.standard_normal((size, self.dim))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        radii = self.radius * rng.uniform(size=(size, 1)) ** (1.0 / self.dim)
        return self.center + direction * radii

    def lattice(self, points_per_dim: int) -> np.ndarray:
        box = Box(self.center - self.radius, self.center + self.radius)
        pts = box.lattice(points_per_dim)
        keep = np.linalg.norm(pts - self.center, axis=1) <= self.radius * (1 + 1e-12)
        return pts[keep]

    def to_dict(self) -> dict:
        return {"type": "ball", "center": self.center.tolist(), "radius": self.radius}


BoundedSet = Box | Ball


def bounded_set_from_dict(doc: Mapping[str, Any]) -> BoundedSet:
    kind = doc.get("type", "box")
    try:
        if kind == "box":
            return Box(doc["lo"], doc["hi"])
        if kind == "ball":
            return Ball(doc["center"], doc["radius"])
    except KeyError as exc:
        raise ConfigError(f"set description missing key {exc}") from None
    raise ConfigError(f"unknown set type {kind!r}")


# ---------------------------------------------------------------------------
# Reward / constraint functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ScalarFn:
    """Clamped pointwise minimum of component functions.

    ``lipschitz`` must be valid for the clamped result (the minimum of
    L-Lipschitz functions is L-Lipschitz and clamping never increases it).
    """

    components: tuple[Callable[[np.ndarray], np.ndarray], ...]
    lipschitz: float
    bound: float = DEFAULT_BOUND

    def __post_init__(self):
        if callable(self.components):
            object.__setattr__(self, "components", (self.components,))
        else:
            object.__setattr__(self, "components", tuple(self.components))
        if not self.components:
            raise ConfigError("ScalarFn needs at least one component")
        if self.lipschitz < 0 or self.bound <= 0:
            raise ConfigError("ScalarFn needs lipschitz >= 0 and bound > 0")

    def __call__(self, x) -> np.ndarray | float:
        x = np.asarray(x, dtype=float)
        vals = self.components[0](x)
        for comp in self.components[1:]:
            vals = np.minimum(vals, comp(x))
        out = np.clip(vals, -self.bound, self.bound)
        return float(out) if np.ndim(out) == 0 else out

    def component_values(self, x) -> np.ndarray:
        """Unclamped component values, stacked on the last axis."""
        x = np.asarray(x, dtype=float)
        return np.stack([np.asarray(c(x), dtype=float) for c in self.components], axis=-1)

    @classmethod
    def constant(cls, value: float, bound: float = DEFAULT_BOUND) -> "ScalarFn":
        value = float(value)

        def const(x):
            return np.full(np.shape(x)[:-1], value)

        return cls((const,), 0.0, bound)


def halfspace_fn(P, k) -> Callable[[np.ndarray], np.ndarray]:
    """Return ``x -> P @ x - k`` (vectorised)."""
    P = _vec(P, "P")
    k = float(k)

    def fn(x):
        return np.asarray(x, dtype=float) @ P - k

    return fn


def ball_exterior_fn(center, radius, axes=None) -> Callable[[np.ndarray], np.ndarray]:
    """Signed distance to a disc obstacle, ``||x[axes] - center|| - radius`` (1-Lipschitz)."""
    center = _vec(center, "center")
    idx = np.arange(center.size) if axes is None else np.asarray(axes, dtype=int)

    def fn(x):
        x = np.asarray(x, dtype=float)
        return np.linalg.norm(x[..., idx] - center, axis=-1) - radius

    return fn


# ---------------------------------------------------------------------------
# Surrogate sets used by the cone-program certificate
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Halfspace:
    """Open halfspace ``{x : P x - k > 0}``."""

    P: np.ndarray
    k: float

    def __post_init__(self):
        object.__setattr__(self, "P", _vec(self.P, "P"))
        object.__setattr__(self, "k", float(self.k))

    def __call__(self, x):
        return np.asarray(x, dtype=float) @ self.P - self.k


@dataclass(frozen=True, eq=False)
class CoupledOffset:
    """Offset ``scale * max(a @ x + shift, 0)`` subtracted from a quadratic.

    Over a tube stage the offset is over-approximated by maximising ``a @ x``
    over the stage ball, which keeps the resulting bound conservative.
    """

    a: np.ndarray
    scale: float
    shift: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "a", _vec(self.a, "a"))
        if self.scale < 0:
            raise ConfigError("coupled offset scale must be nonnegative")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return self.scale * np.maximum(x @ self.a + self.shift, 0.0)


@dataclass(frozen=True, eq=False)
class Quadratic:
    """``0.5 x'Qx + q'x + b - offset(x)`` with ``Q`` positive semidefinite."""

    Q: np.ndarray
    q: np.ndarray
    b: float
    offset: CoupledOffset | None = None

    def __post_init__(self):
        q = _vec(self.q, "q")
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        if Q.shape != (q.size, q.size):
            raise DimensionError(f"Q has shape {Q.shape}, expected {(q.size, q.size)}")
        if not np.allclose(Q, Q.T, atol=1e-12):
            raise ConfigError("Q must be symmetric")
        if q.size and np.linalg.eigvalsh(Q).min() < -1e-8:
            raise ConfigError("Q must be positive semidefinite")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "b", float(self.b))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        val = 0.5 * np.einsum("...i,ij,...j->...", x, self.Q, x) + x @ self.q + self.b
        if self.offset is not None:
            val = val - self.offset(x)
        return val


@dataclass(frozen=True, eq=False)
class SurrogateTarget:
    """Polytope interior contained in the target set."""

    halfspaces: tuple[Halfspace, ...]

    def __post_init__(self):
        object.__setattr__(self, "halfspaces", tuple(self.halfspaces))
        if not self.halfspaces:
            raise ConfigError("surrogate target needs at least one halfspace")

    def __call__(self, x):
        return np.min(np.stack([h(x) for h in self.halfspaces], axis=-1), axis=-1)


@dataclass(frozen=True, eq=False)
class SurrogateConstraint:
    """Intersection of super-zero sets of convex quadratics, contained in C."""

    quadratics: tuple[Quadratic, ...]

    def __post_init__(self):
        object.__setattr__(self, "quadratics", tuple(self.quadratics))
        if not self.quadratics:
            raise ConfigError("surrogate constraint needs at least one quadratic")

    def __call__(self, x):
        return np.min(np.stack([q(x) for q in self.quadratics], axis=-1), axis=-1)


def linear_quadratic(q, b) -> Quadratic:
    """Affine function ``q'x + b`` written as a (degenerate) quadratic."""
    q = _vec(q, "q")
    return Quadratic(np.zeros((q.size, q.size)), q, b)


def disc_quadratic(center, radius, n, axes=None) -> Quadratic:
    """``||x[axes] - center||^2 - radius^2`` as ``0.5 x'Qx + q'x + b``."""
    center = _vec(center, "center")
    idx = np.arange(center.size) if axes is None else np.asarray(axes, dtype=int)
    Q = np.zeros((n, n))
    q = np.zeros(n)
    Q[idx, idx] = 2.0
    q[idx] = -2.0 * center
    return Quadratic(Q, q, float(center @ center - radius**2))


# ---------------------------------------------------------------------------
# System model
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SystemModel:
    """Discrete-time system ``x' = f(x, u, d)`` with its reach-avoid data."""

    name: str
    n: int
    m_u: int
    m_d: int
    dynamics: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]
    U: BoundedSet
    D: BoundedSet
    reward: ScalarFn
    constraint: ScalarFn
    L_fx: float
    L_fd: float
    surrogate_target: SurrogateTarget | None = None
    surrogate_constraint: SurrogateConstraint | None = None
    mode: str = "reach_avoid"
    params: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.U.dim != self.m_u or self.D.dim != self.m_d:
            raise DimensionError("U/D dimensions disagree with m_u/m_d")
        if self.L_fx <= 0 or self.L_fd < 0:
            raise ConfigError("Lipschitz constants of the dynamics must be positive")
        if not self.D.contains(np.zeros(self.m_d)):
            # the nominal trajectory uses d = 0, so the tube needs it to be admissible
            raise ConfigError("the disturbance set must contain the origin")

    @property
    def eps_d(self) -> float:
        """Bound on ``||d||_2`` over D."""
        return self.D.max_norm

    @property
    def bound(self) -> float:
        return max(self.reward.bound, self.constraint.bound)

    def step(self, x, u, d) -> np.ndarray:
        """One validated transition for a single state."""
        x = _vec(x, "x")
        u = _vec(u, "u")
        d = _vec(d, "d")
        if x.size != self.n or u.size != self.m_u or d.size != self.m_d:
            raise DimensionError(
                f"expected x:{self.n}, u:{self.m_u}, d:{self.m_d}; "
                f"got x:{x.size}, u:{u.size}, d:{d.size}"
            )
        if not np.all(np.isfinite(x)):
            raise DimensionError("state has non-finite entries")
        if not self.U.contains(u):
            raise SetMembershipError(f"control {u} is outside U")
        if not self.D.contains(d):
            raise SetMembershipError(f"disturbance {d} is outside D")
        return np.asarray(self.dynamics(x, u, d), dtype=float)

    def step_batch(self, X, Ub, Db) -> np.ndarray:
        """Unvalidated, broadcasting transition used by solvers."""
        return self.dynamics(np.asarray(X, float), np.asarray(Ub, float), np.asarray(Db, float))

    def with_mode(self, mode: str) -> "SystemModel":
        """Return the model with the reward or constraint overridden for ``mode``."""
        if mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")
        changes: dict[str, Any] = {"mode": mode}
        if mode == "viability":
            changes["reward"] = ScalarFn.constant(-1.0, self.reward.bound)
            changes["surrogate_target"] = SurrogateTarget((Halfspace(np.zeros(self.n), 1.0),))
        elif mode == "reach":
            changes["constraint"] = ScalarFn.constant(1.0, self.constraint.bound)
            changes["surrogate_constraint"] = SurrogateConstraint(
                (linear_quadratic(np.zeros(self.n), 1.0),)
            )
        return dataclasses.replace(self, **changes)


# ---------------------------------------------------------------------------
# Benchmarks
# ---------------------------------------------------------------------------


def _box_target(n, bounds: Sequence[tuple[int, float, float]]):
    """Halfspaces for ``lo < x[i] < hi`` as (P, k) pairs."""
    hs = []
    for i, lo, hi in bounds:
        e = np.zeros(n)
        e[i] = 1.0
        hs.append(Halfspace(-e, -hi))  # hi - x_i > 0
        hs.append(Halfspace(e, lo))  # x_i - lo > 0
    return hs


def _linear1d(p: dict) -> SystemModel:
    a = float(p.get("a", 1.01))
    b = float(p.get("b", 0.01))
    u_max = float(p.get("u_max", 1.0))
    d_max = float(p.get("d_max", 0.5))
    bound = float(p.get("bound", DEFAULT_BOUND))

    def f(x, u, d):
        return a * x + b * (u + d)

    target = [Halfspace([-1.0], 1.0)]  # -(x + 1) > 0
    cons = [linear_quadratic([1.0], 2.0)]  # x + 2 > 0
    return SystemModel(
        name="linear1d", n=1, m_u=1, m_d=1, dynamics=f,
        U=Box([-u_max], [u_max]), D=Box([-d_max], [d_max]),
        reward=ScalarFn((target[0],), 1.0, bound),
        constraint=ScalarFn((cons[0],), 1.0, bound),
        L_fx=abs(a), L_fd=abs(b),
        surrogate_target=SurrogateTarget(target),
        surrogate_constraint=SurrogateConstraint(cons),
        params=dict(a=a, b=b, u_max=u_max, d_max=d_max, bound=bound),
    )


def _double_integrator(p: dict, planar: bool) -> SystemModel:
    dt = float(p.get("dt", 0.1))
    u_max = float(p.get("u_max", 1.0))
    d_max = float(p.get("d_max", 0.1))
    p_max = float(p.get("p_max", 2.0))
    v_max = float(p.get("v_max", 1.5))
    tp = float(p.get("target_p", 0.3))
    tv = float(p.get("target_v", 0.3 if not planar else 0.5))
    bound = float(p.get("bound", DEFAULT_BOUND))
    default_obstacle = {"center": [-0.8, 0.0], "radius": 0.3} if planar else {
        "center": [-0.9, 0.6], "radius": 0.25}
    obstacle = p.get("obstacle", default_obstacle)

    blocks = 2 if planar else 1
    n = 2 * blocks
    A1 = np.array([[1.0, dt], [0.0, 1.0]])
    A = np.kron(np.eye(blocks), A1)
    E = np.kron(np.eye(blocks), np.array([[0.0], [dt]]))

    def f(x, u, d):
        x = np.asarray(x, float)
        return x @ A.T + (np.asarray(u, float) + np.asarray(d, float)) @ E.T

    # state ordering per block: (position, velocity)
    tgt_bounds, con_bounds = [], []
    for blk in range(blocks):
        tgt_bounds += [(2 * blk, -tp, tp), (2 * blk + 1, -tv, tv)]
        con_bounds += [(2 * blk, -p_max, p_max), (2 * blk + 1, -v_max, v_max)]
    target = _box_target(n, tgt_bounds)
    con_hs = _box_target(n, con_bounds)
    cons_quads = [linear_quadratic(h.P, -h.k) for h in con_hs]
    cons_fns: list[Callable] = list(con_hs)
    if obstacle:
        axes = [0, 2] if planar else [0, 1]
        cons_fns.append(ball_exterior_fn(obstacle["center"], obstacle["radius"], axes))
        cons_quads.append(disc_quadratic(obstacle["center"], obstacle["radius"], n, axes))

    U = Box(-u_max * np.ones(blocks), u_max * np.ones(blocks))
    D = Box([-d_max], [d_max]) if not planar else Ball(np.zeros(2), d_max)
    return SystemModel(
        name="di4" if planar else "di2", n=n, m_u=blocks, m_d=blocks, dynamics=f,
        U=U, D=D,
        reward=ScalarFn(tuple(target), 1.0, bound),
        constraint=ScalarFn(tuple(cons_fns), 1.0, bound),
        L_fx=float(np.linalg.norm(A, 2)), L_fd=float(np.linalg.norm(E, 2)),
        surrogate_target=SurrogateTarget(target),
        surrogate_constraint=SurrogateConstraint(cons_quads),
        params=dict(dt=dt, u_max=u_max, d_max=d_max, p_max=p_max, v_max=v_max,
                    target_p=tp, target_v=tv, bound=bound, obstacle=obstacle),
    )


def _unicycle(p: dict) -> SystemModel:
    dt = float(p.get("dt", 0.1))
    s_max = float(p.get("speed_max", 1.0))
    w_max = float(p.get("turn_max", 1.0))
    d_max = float(p.get("d_max", 0.05))
    goal = _vec(p.get("goal", [1.5, 0.0]))
    half = float(p.get("goal_half_width", 0.3))
    lane = float(p.get("lane_half_width", 1.0))
    obstacle = p.get("obstacle", {"center": [0.75, 0.0], "radius": 0.25})
    bound = float(p.get("bound", DEFAULT_BOUND))

    def f(x, u, d):
        x = np.asarray(x, float)
        u = np.asarray(u, float)
        d = np.asarray(d, float)
        th = x[..., 2]
        s = u[..., 0]
        out = np.stack([
            x[..., 0] + dt * (s * np.cos(th) + d[..., 0]),
            x[..., 1] + dt * (s * np.sin(th) + d[..., 1]),
            th + dt * u[..., 1],
        ], axis=-1)
        return out

    target = _box_target(3, [(0, goal[0] - half, goal[0] + half), (1, goal[1] - half, goal[1] + half)])
    lane_hs = _box_target(3, [(1, -lane, lane)])
    cons_fns: list[Callable] = list(lane_hs)
    cons_quads = [linear_quadratic(h.P, -h.k) for h in lane_hs]
    if obstacle:
        cons_fns.append(ball_exterior_fn(obstacle["center"], obstacle["radius"], [0, 1]))
        cons_quads.append(disc_quadratic(obstacle["center"], obstacle["radius"], 3, [0, 1]))
    # Jacobian in x is [[I, w], [0, 1]] with ||w|| <= dt * s_max.
    rho = dt * s_max
    L_fx = rho / 2 + np.sqrt(1 + rho**2 / 4)
    return SystemModel(
        name="unicycle", n=3, m_u=2, m_d=2, dynamics=f,
        U=Box([0.0, -w_max], [s_max, w_max]), D=Ball(np.zeros(2), d_max),
        reward=ScalarFn(tuple(target), 1.0, bound),
        constraint=ScalarFn(tuple(cons_fns), 1.0, bound),
        L_fx=float(L_fx), L_fd=dt,
        surrogate_target=SurrogateTarget(target),
        surrogate_constraint=SurrogateConstraint(cons_quads),
        params=dict(dt=dt, speed_max=s_max, turn_max=w_max, d_max=d_max, goal=goal.tolist(),
                    goal_half_width=half, lane_half_width=lane, obstacle=obstacle, bound=bound),
    )


_BUILDERS: dict[str, Callable[[dict], SystemModel]] = {
    "linear1d": _linear1d,
    "di2": lambda p: _double_integrator(p, planar=False),
    "di4": lambda p: _double_integrator(p, planar=True),
    "unicycle": _unicycle,
}

BUILTIN_SYSTEMS = tuple(_BUILDERS)


def builtin_system(name: str, params: Mapping[str, Any] | None = None,
                   mode: str = "reach_avoid") -> SystemModel:
    """Construct one of the shipped benchmark systems."""
    if name not in _BUILDERS:
        raise ConfigError(f"unknown system {name!r}; choose from {BUILTIN_SYSTEMS}")
    params = dict(params or {})
    mode = params.pop("mode", mode)
    try:
        model = _BUILDERS[name](params)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid parameters for {name}: {exc}") from exc
    return model.with_mode(mode) if mode != "reach_avoid" else model


def _custom_linear(doc: Mapping[str, Any]) -> SystemModel:
    """Linear system ``x' = A x + B u + E d + c`` described by matrices."""
    try:
        A = np.atleast_2d(np.asarray(doc["A"], float))
        B = np.atleast_2d(np.asarray(doc["B"], float))
        E = np.atleast_2d(np.asarray(doc["E"], float))
        c0 = np.asarray(doc.get("c", np.zeros(A.shape[0])), float)
        U = bounded_set_from_dict(doc["U"])
        D = bounded_set_from_dict(doc["D"])
        target_docs = doc["target"]
    except KeyError as exc:
        raise ConfigError(f"custom system missing key {exc}") from None
    n = A.shape[0]
    if A.shape != (n, n) or B.shape[0] != n or E.shape[0] != n:
        raise ConfigError("custom system matrices have inconsistent shapes")
    bound = float(doc.get("bound", DEFAULT_BOUND))

    def f(x, u, d):
        return np.asarray(x, float) @ A.T + np.asarray(u, float) @ B.T + np.asarray(d, float) @ E.T + c0

    target = [Halfspace(h["P"], h["k"]) for h in target_docs]
    quads = []
    for qd in doc.get("constraints", []):
        off = qd.get("offset")
        offset = CoupledOffset(off["a"], off["scale"], off.get("shift", 0.0)) if off else None
        Q = qd.get("Q", np.zeros((n, n)))
        quads.append(Quadratic(Q, qd["q"], qd["b"], offset))
    L_r = float(doc.get("L_r", max(np.linalg.norm(h.P) for h in target)))
    if quads:
        if "L_c" in doc:
            L_c = float(doc["L_c"])
        elif all(not np.any(q.Q) and q.offset is None for q in quads):
            L_c = max(float(np.linalg.norm(q.q)) for q in quads)
        else:
            raise ConfigError("custom systems with curved constraints must supply L_c")
        constraint = ScalarFn(tuple(quads), L_c, bound)
        surrogate_c = SurrogateConstraint(quads)
    else:
        constraint = ScalarFn.constant(1.0, bound)
        surrogate_c = SurrogateConstraint((linear_quadratic(np.zeros(n), 1.0),))
    return SystemModel(
        name=str(doc.get("name", "custom")), n=n, m_u=B.shape[1], m_d=E.shape[1], dynamics=f,
        U=U, D=D, reward=ScalarFn(tuple(target), L_r, bound), constraint=constraint,
        L_fx=float(doc.get("L_fx", np.linalg.norm(A, 2))),
        L_fd=float(doc.get("L_fd", np.linalg.norm(E, 2))),
        surrogate_target=SurrogateTarget(target), surrogate_constraint=surrogate_c,
        params=dict(doc),
    )


def system_from_config(doc: Mapping[str, Any]) -> SystemModel:
    """Build a model from the ``system`` section of a JSON configuration."""
    if not isinstance(doc, Mapping):
        raise ConfigError("system section must be an object")
    mode = doc.get("mode", "reach_avoid")
    if "custom" in doc:
        model = _custom_linear(doc["custom"])
        return model.with_mode(mode) if mode != "reach_avoid" else model
    if "name" not in doc:
        raise ConfigError("system section needs 'name' or 'custom'")
    return builtin_system(doc["name"], doc.get("params", {}), mode)
