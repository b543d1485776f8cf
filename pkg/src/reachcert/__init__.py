"""Discounted reach-avoid value functions, greedy policies and online certificates."""

__version__ = "0.1.0"

from .certify import (CertReport, CertifiedSet, certify_offline, certify_online,
                      lipschitz_certificate, min_convex_quadratic_over_ball, socp_certificate)
from .exceptions import (BudgetError, ConfigError, DimensionError, PolicyError, ReachCertError,
                         SetMembershipError)
from .harness import (ExperimentConfig, SuccessReport, gamma_sweep, latency_histogram,
                      success_rate, volume_estimate)
from .policy import (BlackBoxPolicy, GridGreedyPolicy, GridWorstCaseDisturbance, SamplerDisturbance,
                     Trajectory, greedy_policy, rollout, worst_disturbance)
from .systems import Ball, Box, SystemModel, builtin_system, system_from_config
from .tube import Tube, build_tube, lipschitz_tube
from .value import (ActionLattice, BellmanOperator, Grid, ValueField, bellman_backup,
                    discounted_ra_measure, interpolate, level_set, ra_measure, value_iteration)

__all__ = [name for name in dir() if not name.startswith("_")]
