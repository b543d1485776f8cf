"""Desk-scale experiment protocols: success rates, set volumes, gamma sweeps, latency.

Randomness: every stream is a Philox-4x64 counter-based generator seeded from
``numpy.random.SeedSequence([seed, stream_id])``.  Initial states use stream
id ``-1`` mapped to ``2**32 - 1``; trial ``i`` uses stream id ``i`` for its
disturbances, so results do not depend on evaluation order or batching.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .certify import CertifiedSet, certify_offline, lipschitz_certificate, socp_certificate
from .exceptions import ConfigError
from .policy import (ConstantDisturbance, GridWorstCaseDisturbance, Policy, greedy_policy,
                     simulate)
from .systems import Box, SystemModel
from .value import (ActionLattice, Grid, ValueField, first_entry_stage, interpolate_values,
                    value_iteration)

SAMPLERS = ("region", "learned", "learned_complement", "certified", "target")
DISTURBANCES = ("uniform", "worst_case", "zero")
INIT_STREAM = 2**32 - 1


def stream_rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(stream)])))


@dataclass
class ExperimentConfig:
    model: SystemModel
    region: Box
    sampler: str = "region"
    trials: int = 1000
    horizon: int = 100
    seed: int = 0
    disturbance: str = "uniform"
    control: str = "policy"  # or "certified": replay the certified open-loop controls
    band_cells: float = 2.0  # exclusion band for the learned_complement sampler

    def __post_init__(self):
        if self.sampler not in SAMPLERS:
            raise ConfigError(f"sampler must be one of {SAMPLERS}")
        if self.disturbance not in DISTURBANCES:
            raise ConfigError(f"disturbance must be one of {DISTURBANCES}")
        if self.control not in ("policy", "certified"):
            raise ConfigError("control must be 'policy' or 'certified'")
        if self.trials < 1 or self.horizon < 0:
            raise ConfigError("trials must be >= 1 and horizon >= 0")
        if self.control == "certified" and self.sampler != "certified":
            raise ConfigError("certified controls are only defined for the certified sampler")


@dataclass
class SuccessReport:
    success_rate: float
    trials: int
    first_entry_times: list[int]
    constraint_violations: int
    never_reached: int
    initial_states: np.ndarray = field(repr=False)

    @property
    def successes(self) -> int:
        return sum(t >= 0 for t in self.first_entry_times)

    def to_dict(self) -> dict:
        reached = [t for t in self.first_entry_times if t >= 0]
        return {
            "success_rate": self.success_rate,
            "trials": self.trials,
            "successes": self.successes,
            "failures": {"constraint_violation": self.constraint_violations,
                         "never_reached": self.never_reached},
            "mean_first_entry": float(np.mean(reached)) if reached else None,
            "first_entry_times": list(self.first_entry_times),
            "initial_states": self.initial_states.tolist(),
        }


def _in_learned(field: ValueField, X: np.ndarray) -> np.ndarray:
    return interpolate_values(field.grid, field.flat, X) > 0


def _rejection(rng, region: Box, accept: Callable[[np.ndarray], np.ndarray], count: int,
               max_rounds: int = 200) -> np.ndarray:
    out: list[np.ndarray] = []
    have = 0
    for _ in range(max_rounds):
        X = region.sample(rng, max(4 * count, 256))
        X = X[accept(X)]
        out.append(X)
        have += len(X)
        if have >= count:
            return np.concatenate(out)[:count]
    raise ConfigError("rejection sampler could not find enough initial states; check the region")


def sample_initial_states(config: ExperimentConfig, field: ValueField | None = None,
                          certified: CertifiedSet | None = None) -> tuple[np.ndarray, np.ndarray | None]:
    """Initial states and, for the certified sampler, the index of the owning certified ball."""
    rng = stream_rng(config.seed, INIT_STREAM)
    n, region = config.model.n, config.region
    if config.sampler == "region":
        return region.sample(rng, config.trials), None
    if config.sampler == "target":
        # states already reached safely: r > 0 and c > 0, so the RA measure is positive at stage 0
        m = config.model
        return _rejection(rng, region, lambda X: np.minimum(m.reward(X), m.constraint(X)) > 0,
                          config.trials), None
    if config.sampler in ("learned", "learned_complement"):
        if field is None:
            raise ConfigError(f"sampler {config.sampler!r} needs a value field")
        if config.sampler == "learned":
            return _rejection(rng, region, lambda X: _in_learned(field, X), config.trials), None
        offsets = [np.zeros(n)]
        for i in range(n):
            e = np.zeros(n)
            e[i] = config.band_cells * field.grid.spacing[i]
            offsets += [e, -e]

        def outside(X):
            return ~np.any([_in_learned(field, X + o) for o in offsets], axis=0)

        return _rejection(rng, region, outside, config.trials), None
    if certified is None:
        raise ConfigError("the certified sampler needs a certified set")
    members = np.flatnonzero(certified.certified_mask())
    if len(members) == 0:
        raise ConfigError("the certified set is empty")
    owner = members[rng.integers(len(members), size=config.trials)]
    direction = rng.standard_normal((config.trials, n))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    radius = certified.eps_x * rng.uniform(size=(config.trials, 1)) ** (1.0 / n)
    return certified.centers[owner] + direction * radius, owner


def _disturbance_sequences(model: SystemModel, seed: int, trials: int, horizon: int) -> np.ndarray:
    seqs = np.empty((trials, horizon, model.m_d))
    for i in range(trials):
        seqs[i] = model.D.sample(stream_rng(seed, i), horizon) if horizon else seqs[i]
    return seqs


def success_rate(config: ExperimentConfig, policy: Policy | None = None,
                 field: ValueField | None = None, lattice: ActionLattice | None = None,
                 certified: CertifiedSet | None = None) -> SuccessReport:
    """Roll out each trial; success iff the RA measure is positive at some stage."""
    model = config.model
    X0, owner = sample_initial_states(config, field, certified)
    horizon = config.horizon
    if config.control == "certified":
        horizon = certified.T
        plans = np.stack([r.certified_controls for r in certified.reports])[owner]

        def control(t, X):
            return plans[:, t]
    else:
        if policy is None:
            raise ConfigError("a policy is required unless certified controls are replayed")

        def control(t, X):
            return policy.batch(X)

    if config.disturbance == "uniform":
        seqs = _disturbance_sequences(model, config.seed, config.trials, horizon)

        def disturbance(t, X, U):
            return seqs[:, t]
    elif config.disturbance == "worst_case":
        if field is None:
            raise ConfigError("worst-case disturbances need a value field")
        worst = GridWorstCaseDisturbance(field, model, lattice or ActionLattice.for_model(model))

        def disturbance(t, X, U):
            return worst.batch(X, U)
    else:
        zero = ConstantDisturbance(model, np.zeros(model.m_d))

        def disturbance(t, X, U):
            return zero.batch(X, U, None)

    states, _, _ = simulate(model, X0, horizon, control, disturbance)
    entry = first_entry_stage(states, model)
    violated = np.any(np.asarray(model.constraint(states)) <= 0, axis=1)
    failed = entry < 0
    return SuccessReport(
        success_rate=float(np.count_nonzero(~failed)) / config.trials,
        trials=config.trials,
        first_entry_times=[int(t) for t in entry],
        constraint_violations=int(np.count_nonzero(failed & violated)),
        never_reached=int(np.count_nonzero(failed & ~violated)),
        initial_states=X0,
    )


def volume_estimate(membership: Callable[[np.ndarray], np.ndarray], region: Box, N: int,
                    seed: int = 0) -> float:
    """Monte-Carlo volume: fraction of ``N`` uniform samples accepted, times region volume."""
    if N < 1:
        raise ConfigError("N must be at least 1")
    X = region.sample(stream_rng(seed, INIT_STREAM), N)
    inside = np.asarray(membership(X), dtype=bool)
    return float(np.count_nonzero(inside)) / N * region.volume


@dataclass
class GammaMetrics:
    gamma: float
    field: ValueField = field(repr=False)
    learned_volume: float
    certified_volume: dict[str, float]
    mean_reaching_time: float | None
    reached: int
    not_reached: int

    def to_dict(self) -> dict:
        return {
            "gamma": self.gamma,
            "iterations": self.field.iterations,
            "residual": self.field.residual,
            "learned_volume": self.learned_volume,
            "certified_volume": self.certified_volume,
            "mean_reaching_time": self.mean_reaching_time,
            "reached": self.reached,
            "not_reached": self.not_reached,
        }


def mean_reaching_time(model: SystemModel, field: ValueField, lattice: ActionLattice,
                       X0: np.ndarray, horizon: int) -> tuple[float | None, int, int]:
    """Mean first-entry stage of greedy rollouts against the grid worst-case disturbance."""
    pol = greedy_policy(field, model, lattice)
    worst = GridWorstCaseDisturbance(field, model, lattice)
    states, _, _ = simulate(model, X0, horizon, lambda t, X: pol.batch(X),
                            lambda t, X, U: worst.batch(X, U))
    entry = first_entry_stage(states, model)
    reached = entry[entry >= 0]
    mean = float(reached.mean()) if len(reached) else None
    return mean, int(len(reached)), int(np.count_nonzero(entry < 0))


def gamma_sweep(model: SystemModel, grid: Grid, gammas: Sequence[float],
                lattice: ActionLattice | None = None, *, eps_x: float = 0.05, T: int = 30,
                cert_region: Box | None = None, method: str = "both",
                volume_samples: int = 10_000, reach_samples: int = 200, reach_horizon: int = 300,
                reach_region: Box | None = None, seed: int = 0, tol: float = 1e-6,
                settle: int | None = None) -> list[GammaMetrics]:
    """Solve and evaluate the pipeline for each discount factor.

    Reaching times are measured from a common set of initial states that lie
    in every gamma's super-zero set, so the per-gamma means are comparable.
    """
    for g in gammas:
        if not 0 < g < 1:
            raise ConfigError(f"gamma must lie in (0, 1), got {g}")
    lattice = lattice or ActionLattice.for_model(model)
    grid_box = Box(grid.lo, grid.hi)
    fields = [value_iteration(model, grid, g, lattice, tol=tol, settle=settle) for g in gammas]

    def in_all(X):
        return np.all([_in_learned(f, X) for f in fields], axis=0)

    rng = stream_rng(seed, INIT_STREAM - 1)
    X0 = _rejection(rng, reach_region or grid_box, in_all, reach_samples)
    out = []
    for g, fld in zip(gammas, fields):
        learned = volume_estimate(lambda X: _in_learned(fld, X), grid_box, volume_samples, seed)
        cert_vol: dict[str, float] = {}
        if cert_region is not None:
            pol = greedy_policy(fld, model, lattice)
            cset = certify_offline(model, pol, cert_region, eps_x, T, g, method)
            methods = ["lipschitz", "socp"] if method == "both" else [method]
            for m in methods:
                cert_vol[m] = volume_estimate(lambda X: cset.contains(X, m), grid_box,
                                              volume_samples, seed)
        mean, reached, missed = mean_reaching_time(model, fld, lattice, X0, reach_horizon)
        out.append(GammaMetrics(g, fld, learned, cert_vol, mean, reached, missed))
    return out


@dataclass
class LatencyReport:
    samples: dict[str, np.ndarray]

    def summary(self) -> dict[str, dict[str, float]]:
        out = {}
        for m, s in self.samples.items():
            out[m] = {"median": float(np.median(s)), "p90": float(np.quantile(s, 0.9)),
                      "max": float(np.max(s)), "mean": float(np.mean(s)), "count": int(len(s))}
        return out

    def to_dict(self) -> dict:
        return {"summary": self.summary(), "samples": {m: s.tolist() for m, s in self.samples.items()}}


def latency_histogram(model: SystemModel, policy: Policy, N: int, eps_x: float, T: int,
                      gamma: float, region: Box, seed: int = 0) -> LatencyReport:
    """Wall time of each certificate at ``N`` uniformly sampled centers."""
    if N < 1:
        raise ConfigError("N must be at least 1")
    centers = region.sample(stream_rng(seed, INIT_STREAM), N)
    times: dict[str, list[float]] = {"lipschitz": [], "socp": []}
    for x in centers:
        for name, fn in (("lipschitz", lipschitz_certificate), ("socp", socp_certificate)):
            t0 = time.perf_counter()
            fn(model, policy, x, eps_x, T, gamma)
            times[name].append(time.perf_counter() - t0)
    return LatencyReport({m: np.array(v) for m, v in times.items()})
