"""Set-based reach-avoid certificates over a Lipschitz ball tube.

Both certificates bound the discounted value from below on a whole ball of
initial states ``{x : ||x - center|| <= eps_x}``:

* the Lipschitz certificate lowers ``r`` and ``c`` at the nominal states by
  ``L * radius``;
* the cone-program certificate minimises the surrogate target halfspaces and
  surrogate constraint quadratics exactly over each stage ball.

Stage bounds are combined as ``max_t min{gamma^t r_t, min_{tau<=t} gamma^tau c_tau}``.
A positive result certifies that the nominal open-loop controls steer every
state of the ball into the target while respecting the constraints, under
every admissible disturbance.
"""

from __future__ import annotations

import itertools
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .exceptions import BudgetError, ConfigError
from .policy import Policy
from .systems import Box, Quadratic, SystemModel
from .tube import Tube, build_tube

METHODS = ("lipschitz", "socp", "both")
SECULAR_TOL = 1e-10
SECULAR_MAX_ITER = 200
MAX_CENTERS = 200_000


# ---------------------------------------------------------------------------
# Ball-constrained subproblems
# ---------------------------------------------------------------------------


def min_linear_over_ball(P, k, center, radius) -> float:
    """``min_{||x - center|| <= radius} P x - k`` in closed form."""
    P = np.atleast_1d(np.asarray(P, float))
    center = np.atleast_1d(np.asarray(center, float))
    return float(P @ center - k - np.linalg.norm(P) * radius)


def min_convex_quadratic_over_ball(Q, q, b, center, radius, tol: float = SECULAR_TOL,
                                   max_iter: int = SECULAR_MAX_ITER, eig=None) -> float:
    """Global minimum of ``0.5 x'Qx + q'x + b`` over a Euclidean ball, ``Q`` PSD.

    With ``x = center + s`` the problem becomes a convex trust-region
    subproblem in ``s``.  If the unconstrained (least-norm) minimiser lies in
    the ball its value is returned; otherwise the boundary multiplier
    ``lam > 0`` solving ``||(Q + lam I)^{-1} g|| = radius`` is found by
    safeguarded Newton/bisection.  The returned number is the Lagrangian dual
    value at the final multiplier, which is a lower bound for any
    ``lam >= 0`` and equals the minimum at the root.  Returns ``-inf`` if the
    root is not resolved within ``max_iter`` steps.
    """
    Q = np.atleast_2d(np.asarray(Q, float))
    q = np.atleast_1d(np.asarray(q, float))
    c = np.atleast_1d(np.asarray(center, float))
    if eig is None:
        if not np.allclose(Q, Q.T, atol=1e-12):
            raise ConfigError("Q must be symmetric")
        w, V = np.linalg.eigh(Q)
    else:
        w, V = eig
    if w.size and w.min() < -1e-8:
        raise ConfigError(f"Q is not positive semidefinite (eigenvalue {w.min():.3g})")
    w = np.maximum(w, 0.0)
    f_c = float(0.5 * c @ Q @ c + q @ c + b)
    g = Q @ c + q
    gnorm = float(np.linalg.norm(g))
    if radius <= 0 or gnorm == 0.0:
        return f_c
    gt = V.T @ g
    wmax = float(w.max()) if w.size else 0.0
    null = w <= 1e-12 * max(1.0, wmax)
    if not np.any(null & (np.abs(gt) > 1e-14 * gnorm)):
        inner = ~null
        step_norm = float(np.sqrt(np.sum((gt[inner] / w[inner]) ** 2)))
        if step_norm <= radius:
            return f_c - 0.5 * float(np.sum(gt[inner] ** 2 / w[inner]))

    gt2 = gt**2

    def step_norm_at(lam):
        with np.errstate(divide="ignore"):
            return float(np.sqrt(np.sum(gt2 / (w + lam) ** 2)))

    lo = max(0.0, gnorm / radius - wmax)
    hi = max(lo, gnorm / radius - float(w.min()))
    lam = hi
    solved = False
    for _ in range(max_iter):
        sn = step_norm_at(lam)
        if abs(sn - radius) <= tol * radius:
            solved = True
            break
        if sn > radius:
            lo = lam
        else:
            hi = lam
        if hi - lo <= tol * max(1.0, hi):
            lam = hi
            solved = True
            break
        # Newton step on 1/||s(lam)|| - 1/radius, which is increasing in lam
        phi = 1.0 / sn - 1.0 / radius if np.isfinite(sn) and sn > 0 else -1.0 / radius
        dphi = float(np.sum(gt2 / (w + lam) ** 3)) / sn**3 if np.isfinite(sn) and sn > 0 else 0.0
        cand = lam - phi / dphi if dphi > 0 else np.nan
        lam = cand if lo < cand < hi else 0.5 * (lo + hi)
    if not solved:
        return -math.inf
    with np.errstate(divide="ignore"):
        dual = f_c - 0.5 * float(np.sum(gt2 / (w + lam))) - 0.5 * lam * radius**2
    return dual if np.isfinite(dual) else -math.inf


def min_surrogate_quadratic_over_ball(quad: Quadratic, center, radius, eig=None) -> float:
    """Minimum of a surrogate quadratic (with optional coupled offset) over a ball."""
    center = np.atleast_1d(np.asarray(center, float))
    b = quad.b
    if quad.offset is not None:
        off = quad.offset
        peak = float(off.a @ center + np.linalg.norm(off.a) * radius)
        b = b - off.scale * max(peak + off.shift, 0.0)
    if not np.any(quad.Q):
        return min_linear_over_ball(quad.q, -b, center, radius)
    try:
        return min_convex_quadratic_over_ball(quad.Q, quad.q, b, center, radius, eig=eig)
    except np.linalg.LinAlgError:
        return -math.inf


# ---------------------------------------------------------------------------
# Certificates
# ---------------------------------------------------------------------------


def compose_certificate(r_lb: np.ndarray, c_lb: np.ndarray, gamma: float) -> float:
    """``max_t min{gamma^t r_t, min_{tau<=t} gamma^tau c_tau}``."""
    disc = gamma ** np.arange(len(r_lb))
    running = np.minimum.accumulate(disc * c_lb)
    return float(np.max(np.minimum(disc * r_lb, running)))


@dataclass(frozen=True, eq=False)
class StageBounds:
    r_lb: np.ndarray
    c_lb: np.ndarray
    certificate: float
    wall_time: float = 0.0

    @property
    def certified(self) -> bool:
        return bool(self.certificate > 0)

    def to_dict(self, timing: bool = False) -> dict:
        out = {
            "r_lower": [_num(v) for v in self.r_lb],
            "c_lower": [_num(v) for v in self.c_lb],
            "certificate": _num(self.certificate),
            "certified": self.certified,
        }
        if timing:
            out["wall_time"] = self.wall_time
        return out


def _num(v):
    v = float(v)
    return v if math.isfinite(v) else None


@dataclass(frozen=True, eq=False)
class CertReport:
    center: np.ndarray
    eps_x: float
    T: int
    gamma: float
    method: str
    tube: Tube
    bounds: dict[str, StageBounds]
    wall_time: float = 0.0

    @property
    def certified_controls(self) -> np.ndarray:
        return self.tube.nominal_controls

    @property
    def certified(self) -> dict[str, bool]:
        return {m: b.certified for m, b in self.bounds.items()}

    @property
    def any_certified(self) -> bool:
        return any(self.certified.values())

    def certificate(self, method: str) -> float:
        return self.bounds[method].certificate

    def to_dict(self, timing: bool = False) -> dict:
        out = {
            "center": self.center.tolist(),
            "eps_x": self.eps_x,
            "T": self.T,
            "gamma": self.gamma,
            "method": self.method,
            "certified": self.certified,
            "certified_controls": self.certified_controls.tolist(),
            "tube": self.tube.to_dict(),
            "bounds": {m: b.to_dict(timing) for m, b in self.bounds.items()},
        }
        if timing:
            out["wall_time"] = self.wall_time
        return out


def lipschitz_bounds(model: SystemModel, tube: Tube, gamma: float) -> StageBounds:
    t0 = time.perf_counter()
    r_lb = np.asarray(model.reward(tube.nominal_states), float) - model.reward.lipschitz * tube.radii
    c_lb = np.asarray(model.constraint(tube.nominal_states), float) - model.constraint.lipschitz * tube.radii
    cert = compose_certificate(r_lb, c_lb, gamma)
    return StageBounds(r_lb, c_lb, cert, time.perf_counter() - t0)


def socp_bounds(model: SystemModel, tube: Tube, gamma: float) -> StageBounds:
    if model.surrogate_target is None or model.surrogate_constraint is None:
        raise ConfigError(f"system {model.name!r} has no surrogate target/constraint sets")
    t0 = time.perf_counter()
    states, radii = tube.nominal_states, tube.radii
    hs = model.surrogate_target.halfspaces
    P = np.stack([h.P for h in hs])
    k = np.array([h.k for h in hs])
    # all halfspaces and stages at once: P x_t - k - ||P|| radius_t
    r_lb = np.min(states @ P.T - k - np.outer(radii, np.linalg.norm(P, axis=1)), axis=1)
    c_lb = np.full(len(radii), np.inf)
    for quad in model.surrogate_constraint.quadratics:
        if not np.any(quad.Q) and quad.offset is None:
            vals = states @ quad.q + quad.b - np.linalg.norm(quad.q) * radii
        else:
            eig = np.linalg.eigh(quad.Q)
            vals = np.array([min_surrogate_quadratic_over_ball(quad, x, rad, eig)
                             for x, rad in zip(states, radii)])
        c_lb = np.minimum(c_lb, vals)
    cert = compose_certificate(r_lb, c_lb, gamma)
    return StageBounds(r_lb, c_lb, cert, time.perf_counter() - t0)


def _check_args(eps_x, T, gamma):
    if not 0 < gamma < 1:
        raise ConfigError(f"gamma must lie in (0, 1), got {gamma}")
    if T < 1:
        raise ConfigError("certification horizon T must be at least 1")
    if eps_x < 0:
        raise ConfigError("eps_x must be nonnegative")


def certify_online(model: SystemModel, policy: Policy, x, eps_x: float, T: int, gamma: float,
                   method: str = "both") -> CertReport:
    """Certify the ball around ``x`` with one or both certificates."""
    if method not in METHODS:
        raise ConfigError(f"method must be one of {METHODS}")
    _check_args(eps_x, T, gamma)
    t0 = time.perf_counter()
    tube = build_tube(model, policy, x, eps_x, T)
    bounds = {}
    if method in ("lipschitz", "both"):
        bounds["lipschitz"] = lipschitz_bounds(model, tube, gamma)
    if method in ("socp", "both"):
        bounds["socp"] = socp_bounds(model, tube, gamma)
    return CertReport(np.atleast_1d(np.asarray(x, float)), float(eps_x), int(T), float(gamma),
                      method, tube, bounds, time.perf_counter() - t0)


def lipschitz_certificate(model, policy, x0, eps_x, T, gamma) -> CertReport:
    return certify_online(model, policy, x0, eps_x, T, gamma, "lipschitz")


def socp_certificate(model, policy, x0, eps_x, T, gamma) -> CertReport:
    return certify_online(model, policy, x0, eps_x, T, gamma, "socp")


# ---------------------------------------------------------------------------
# Offline certification
# ---------------------------------------------------------------------------


def covering_centers(region: Box, eps_x: float, max_centers: int = MAX_CENTERS) -> np.ndarray:
    """Lattice with per-axis spacing at most ``2 eps_x / sqrt(n)``.

    Every lattice cell then has circumradius at most ``eps_x``, so the balls
    around the centers cover the region.
    """
    n = region.dim
    extent = region.hi - region.lo
    if np.any(extent > 0) and eps_x <= 0:
        raise ConfigError("covering a region of positive extent needs eps_x > 0")
    h = 2 * eps_x / math.sqrt(n) if eps_x > 0 else math.inf
    counts = [1 if e == 0 else int(math.ceil(e / h - 1e-12)) + 1 for e in extent]
    total = math.prod(counts)
    if total > max_centers:
        raise BudgetError(f"covering needs {total} centers, budget is {max_centers}")
    axes = [np.array([lo]) if c == 1 else np.linspace(lo, hi, c)
            for lo, hi, c in zip(region.lo, region.hi, counts)]
    return np.array(list(itertools.product(*axes)), float).reshape(-1, n)


@dataclass(frozen=True, eq=False)
class CertifiedSet:
    centers: np.ndarray  # all lattice centers
    reports: list[CertReport]
    eps_x: float
    T: int
    gamma: float
    method: str
    region: Box
    lattice_counts: tuple[int, ...] = field(default=())

    def certified_mask(self, method: str | None = None) -> np.ndarray:
        method = method or self.method
        if method == "both":
            return np.array([r.any_certified for r in self.reports], dtype=bool)
        return np.array([r.certified[method] for r in self.reports], dtype=bool)

    @property
    def members(self) -> np.ndarray:
        return self.centers[self.certified_mask()]

    @property
    def member_reports(self) -> list[CertReport]:
        mask = self.certified_mask()
        return [r for r, keep in zip(self.reports, mask) if keep]

    def contains(self, X, method: str | None = None) -> np.ndarray:
        """Whether points lie in the union of certified balls."""
        X = np.atleast_2d(np.asarray(X, float))
        members = self.centers[self.certified_mask(method)]
        if len(members) == 0:
            return np.zeros(len(X), dtype=bool)
        out = np.zeros(len(X), dtype=bool)
        for start in range(0, len(members), 512):
            chunk = members[start:start + 512]
            d = np.linalg.norm(X[:, None, :] - chunk[None, :, :], axis=-1)
            out |= np.any(d <= self.eps_x, axis=1)
        return out

    def to_dict(self) -> dict:
        mask = self.certified_mask()
        return {
            "eps_x": self.eps_x,
            "T": self.T,
            "gamma": self.gamma,
            "method": self.method,
            "region": self.region.to_dict(),
            "lattice": {"counts": list(self.lattice_counts),
                        "spacing_bound": 2 * self.eps_x / math.sqrt(self.region.dim)},
            "num_centers": len(self.centers),
            "num_certified": int(mask.sum()),
            "members": [r.to_dict() for r, keep in zip(self.reports, mask) if keep],
        }


def certify_offline(model: SystemModel, policy: Policy, region: Box, eps_x: float, T: int,
                    gamma: float, method: str = "both", threads: int = 1,
                    max_centers: int = MAX_CENTERS) -> CertifiedSet:
    """Certify every ball of a covering lattice of ``region``; keep the certified ones."""
    if method not in METHODS:
        raise ConfigError(f"method must be one of {METHODS}")
    _check_args(eps_x, T, gamma)
    centers = covering_centers(region, eps_x, max_centers)

    def one(x):
        return certify_online(model, policy, x, eps_x, T, gamma, method)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            reports = list(pool.map(one, centers))
    else:
        reports = [one(x) for x in centers]
    counts = tuple(len(np.unique(centers[:, i])) for i in range(centers.shape[1]))
    return CertifiedSet(centers, reports, float(eps_x), int(T), float(gamma), method, region, counts)
