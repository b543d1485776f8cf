"""Independent reference computations used to check the package.

Nothing here imports the package's numerical routines; the oracles are
plain loops or first-order iterations written from the definitions.
"""

import math

import numpy as np


def clamp(v, bound=10.0):
    return max(min(v, bound), -bound)


def lin_r(x):
    return clamp(-(x + 1.0))


def lin_c(x):
    return clamp(x + 2.0)


def lin_f(x, u, d):
    return 1.01 * x + 0.01 * (u + d)


def interp_1d(xs, vals, x):
    """Piecewise-linear interpolation with clamp to the end nodes."""
    if x <= xs[0]:
        return vals[0]
    if x >= xs[-1]:
        return vals[-1]
    h = (xs[-1] - xs[0]) / (len(xs) - 1)
    i = min(int(math.floor((x - xs[0]) / h)), len(xs) - 2)
    w = (x - xs[i]) / h
    return (1 - w) * vals[i] + w * vals[i + 1]


def lin_integrand(xs, vals, x, u, d, gamma):
    return min(lin_c(x), max(lin_r(x), gamma * interp_1d(xs, vals, lin_f(x, u, d))))


def lin_backup_node(xs, vals, x, controls, dists, gamma):
    best = -math.inf
    for u in controls:
        worst = min(lin_integrand(xs, vals, x, u, d, gamma) for d in dists)
        best = max(best, worst)
    return best


def lin_greedy(xs, vals, x, controls, dists, gamma):
    """First control attaining the max-min (ties keep the earliest)."""
    best, arg = -math.inf, None
    for u in controls:
        worst = min(lin_integrand(xs, vals, x, u, d, gamma) for d in dists)
        if worst > best:
            best, arg = worst, u
    return arg


def lin_worst(xs, vals, x, u, dists, gamma):
    best, arg = math.inf, None
    for d in dists:
        v = lin_integrand(xs, vals, x, u, d, gamma)
        if v < best:
            best, arg = v, d
    return arg


def projected_gradient_ball(Q, q, b, center, radius, iters=5000):
    """Accelerated projected gradient with restarts for 0.5 x'Qx + q'x + b over a ball.

    Batched over a leading axis: Q (B,n,n), q (B,n), b (B,), center (B,n), radius (B,).
    """
    L = np.linalg.eigvalsh(Q)[:, -1] + 1e-12
    step = (1.0 / L)[:, None]

    def proj(x):
        d = x - center
        nrm = np.linalg.norm(d, axis=1)
        scale = np.where(nrm > radius, radius / np.maximum(nrm, 1e-300), 1.0)
        return center + d * scale[:, None]

    def fval(x):
        return 0.5 * np.einsum("bi,bij,bj->b", x, Q, x) + np.einsum("bi,bi->b", q, x) + b

    x = center.copy()
    y = x.copy()
    t = np.ones(len(b))
    fx = fval(x)
    for _ in range(iters):
        g = np.einsum("bij,bj->bi", Q, y) + q
        x_new = proj(y - step * g)
        f_new = fval(x_new)
        restart = f_new > fx
        t_new = 0.5 * (1 + np.sqrt(1 + 4 * t * t))
        mom = ((t - 1) / t_new)[:, None]
        y = np.where(restart[:, None], x_new, x_new + mom * (x_new - x))
        t = np.where(restart, 1.0, t_new)
        x, fx = x_new, f_new
    return fx


def ball_samples(rng, center, radius, count):
    """Uniform samples in an n-ball (direction times radius * U^(1/n))."""
    center = np.asarray(center, float)
    n = center.size
    z = rng.standard_normal((count, n))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    return center + z * radius * rng.uniform(size=(count, 1)) ** (1.0 / n)
