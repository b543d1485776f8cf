"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""

import dataclasses
import json
import math
import time

import numpy as np

from conftest import record_criterion
from oracles import ball_samples
from reachcert import (BlackBoxPolicy, Box, builtin_system, certify_offline, certify_online,
                       gamma_sweep, greedy_policy, latency_histogram, value_iteration)
from reachcert.certify import lipschitz_bounds, socp_bounds
from reachcert.cli import main
from reachcert.harness import stream_rng
from reachcert.policy import GridWorstCaseDisturbance, simulate
from reachcert.systems import Quadratic, ScalarFn, SurrogateConstraint
from reachcert.tube import Tube, build_tube
from reachcert.value import (BellmanOperator, first_entry_stage, interpolate_values, level_set,
                             super_zero_set)


def _open_loop(U):
    return lambda t, X: np.repeat(U[t][None], len(X), axis=0)


def test_c01_linear1d_ra_set(tmp_path):
    cfg = tmp_path / "linear1d.json"
    cfg.write_text(json.dumps({"system": {"name": "linear1d"}, "grid": {"axes": [[-4, 4, 801]]},
                               "gamma": 0.9, "lattice": {"controls": 21, "disturbances": 11},
                               "tol": 1e-6}))
    t0 = time.perf_counter()
    code = main(["solve", "--config", str(cfg), "--out", str(tmp_path / "out")])
    elapsed = time.perf_counter() - t0
    (lo, hi), = json.loads((tmp_path / "out" / "summary.json").read_text())["intervals"]
    ok = code == 0 and abs(lo + 2) <= 0.02 and abs(hi - 0.5) <= 0.02 and elapsed < 10
    record_criterion(1, "linear1d super-zero interval", ok,
                     f"interval=({lo:.5f}, {hi:.5f}) runtime={elapsed:.2f}s exit={code}")
    assert ok


def test_c02_contraction(lin, lin_grid, lin_lattice):
    rng = np.random.default_rng(202)
    details, ok = [], True
    for gamma in (0.5, 0.9, 0.99):
        op = BellmanOperator(lin, lin_grid, lin_lattice, gamma)
        worst = 0.0
        for i in range(100):
            v1 = rng.uniform(-10, 10, lin_grid.size)
            if i % 2:
                v2 = rng.uniform(-10, 10, lin_grid.size)
            else:
                v2 = np.clip(v1 + rng.uniform(-0.5, 0.5, lin_grid.size), -10, 10)
            worst = max(worst, np.max(np.abs(op(v1) - op(v2))) / np.max(np.abs(v1 - v2)))
        ok &= worst <= gamma + 1e-9
        details.append(f"gamma={gamma}: max ratio {worst:.6f}")
    record_criterion(2, "Bellman contraction", ok, "; ".join(details))
    assert ok


def test_c03_lipschitz_slopes(lin_field, lin_field05):
    h = 0.01
    slopes = {g: float(np.max(np.abs(np.diff(f.values))) / h) for g, f in ((0.9, lin_field), (0.5, lin_field05))}
    ok = all(s <= 1 + 5 * h for s in slopes.values())
    record_criterion(3, "Lipschitz slopes of converged field", ok,
                     ", ".join(f"gamma={g}: max slope {s:.4f}" for g, s in slopes.items()) + f" (limit {1 + 5 * h})")
    assert ok


def test_c04_viability_and_reach_modes(lin_grid, lin_lattice):
    via = value_iteration(builtin_system("linear1d", mode="viability"), lin_grid, 0.9, lin_lattice)
    reach = value_iteration(builtin_system("linear1d", mode="reach"), lin_grid, 0.9, lin_lattice)
    (vlo, vhi), = level_set(via).intervals
    (rlo, rhi), = level_set(reach).intervals
    ok = (np.all(via.values <= 0) and abs(vlo + 0.5) <= 0.02 and np.all(reach.values >= 0)
          and abs(rhi - 0.5) <= 0.02)
    record_criterion(4, "viability kernel and backward reachable set", ok,
                     f"kernel=[{vlo:.5f}, {vhi}] max V={via.values.max():.2e}; "
                     f"BRS=({rlo}, {rhi:.5f}) min V={reach.values.min():.2e}")
    assert ok


def test_c05_tube_containment(lin, lin_field, lin_lattice, di2, di2_field, di2_lattice):
    T, worst, total = 30, -np.inf, 0
    cases = [(lin, greedy_policy(lin_field, lin, lin_lattice), [[0.3], [-1.0], [0.45]]),
             (di2, greedy_policy(di2_field, di2, di2_lattice), [[0.8, -0.4], [-1.2, 0.5], [0.0, 1.0]])]
    for k, (model, pol, centers) in enumerate(cases):
        for j, x0 in enumerate(centers):
            tube = build_tube(model, pol, x0, 0.05, T)
            rng = stream_rng(500 + k, j)
            X0 = ball_samples(rng, x0, 0.05, 1000)
            D = model.D.sample(rng, 1000 * T).reshape(1000, T, model.m_d)
            D[:100] = np.sign(D[:100]) * model.D.max_norm  # extreme admissible sequences
            states, _, _ = simulate(model, X0, T, _open_loop(tube.nominal_controls), lambda t, X, U: D[:, t])
            dev = np.linalg.norm(states - tube.nominal_states[None], axis=-1) - tube.radii[None]
            worst = max(worst, float(dev.max()))
            total += len(X0)
    ok = worst <= 1e-12
    record_criterion(5, "tube containment", ok, f"{total} replays, max(dev - radius) = {worst:.3e}")
    assert ok


def _soundness_violations(model, fld, pol, region, seed):
    rng = stream_rng(seed, 0)
    slack = 3 * float(np.max(fld.grid.spacing)) * max(model.reward.lipschitz, model.constraint.lipschitz)
    violations, worst = 0, -np.inf
    for c in region.sample(rng, 200):
        rep = certify_online(model, pol, c, 0.05, 30, fld.gamma, "both")
        vmin = interpolate_values(fld.grid, fld.flat, np.vstack([ball_samples(rng, c, 0.05, 100), c])).min()
        for m in ("lipschitz", "socp"):
            gap = rep.certificate(m) - vmin
            worst = max(worst, gap)
            violations += gap > slack
    return violations, worst, slack


def test_c06_certificate_soundness(lin, lin_field, lin_lattice, di2, di2_field, di2_lattice):
    lv, lw, ls = _soundness_violations(lin, lin_field, greedy_policy(lin_field, lin, lin_lattice),
                                       Box([-3.5], [3.5]), 61)
    dv, dw, ds = _soundness_violations(di2, di2_field, greedy_policy(di2_field, di2, di2_lattice),
                                       Box([-2.0, -1.5], [2.0, 1.5]), 62)
    ok = lv == 0 and dv == 0
    record_criterion(6, "certificate lower-bound soundness", ok,
                     f"linear1d: {lv} violations, max excess {lw:.4f} (slack {ls:.3f}); "
                     f"di2: {dv} violations, max excess {dw:.4f} (slack {ds:.3f})")
    assert ok


def test_c07_deterministic_guarantee(di2, di2_field, di2_lattice):
    pol = greedy_policy(di2_field, di2, di2_lattice)
    cset = certify_offline(di2, pol, Box([-1.5, -1.0], [1.5, 1.0]), 0.05, 30, 0.9, "both")
    worst = GridWorstCaseDisturbance(di2_field, di2, di2_lattice)
    T, failures, trials = 30, 0, 0
    members = cset.member_reports
    for k, rep in enumerate(members):
        rng = stream_rng(7, k)
        U = rep.certified_controls
        X0 = ball_samples(rng, rep.center, 0.05, 50)
        seqs = np.stack([di2.D.sample(stream_rng(1000 + s, k), T) for s in range(1000)])
        Xa = np.repeat(X0, 1000, axis=0)
        Da = np.tile(seqs, (50, 1, 1))
        states, _, _ = simulate(di2, Xa, T, _open_loop(U), lambda t, X, Uu: Da[:, t])
        entry = first_entry_stage(states, di2)
        states_w, _, _ = simulate(di2, X0, T, _open_loop(U), lambda t, X, Uu: worst.batch(X, Uu))
        entry_w = first_entry_stage(states_w, di2)
        failures += int(np.count_nonzero(entry < 0) + np.count_nonzero(entry_w < 0))
        trials += len(entry) + len(entry_w)
    ok = len(members) > 0 and failures == 0
    rate = 1 - failures / trials if trials else float("nan")
    record_criterion(7, "deterministic guarantee on di2 certified set", ok,
                     f"{len(members)} certified centers, {trials} trials, {failures} failures, "
                     f"success rate {rate:.6f}")
    assert ok


def test_c08_tightness_ordering(lin, lin_field, lin_lattice, di2):
    pol = greedy_policy(lin_field, lin, lin_lattice)
    rng = np.random.default_rng(808)
    gap_r = 0.0
    for x0 in rng.uniform(-1.9, 0.45, 50):
        rep = certify_online(lin, pol, [x0], 0.05, 30, 0.9, "both")
        gap_r = max(gap_r, float(np.max(np.abs(rep.bounds["socp"].r_lb - rep.bounds["lipschitz"].r_lb))))
    bowl = Quadratic(np.eye(2), np.zeros(2), -1.0)
    model = dataclasses.replace(di2, constraint=ScalarFn((bowl,), math.hypot(2.5, 2.0)),
                                surrogate_constraint=SurrogateConstraint((bowl,)))
    worst_c = np.inf
    for _ in range(100):
        states = rng.uniform([-1.5, -1.2], [1.5, 1.2], size=(11, 2))
        radii = np.sort(rng.uniform(0.0, 0.8, 11))
        tube = Tube(states, np.zeros((10, 1)), radii, float(radii[0]), model.eps_d)
        diff = socp_bounds(model, tube, 0.9).c_lb - lipschitz_bounds(model, tube, 0.9).c_lb
        worst_c = min(worst_c, float(diff.min()))
    ok = gap_r <= 1e-9 and worst_c >= 0
    record_criterion(8, "tightness ordering", ok,
                     f"max |r_S - r_L| = {gap_r:.2e}; min (c_S - c_L) over 100 tubes = {worst_c:.4f}")
    assert ok


def test_c09_horizon_monotonicity(di2, di2_field, di2_lattice):
    pol = greedy_policy(di2_field, di2, di2_lattice)
    rng = np.random.default_rng(909)
    drops = 0
    for x in rng.uniform([-2.0, -1.5], [2.0, 1.5], size=(100, 2)):
        vals = [certify_online(di2, pol, x, 0.05, T, 0.9, "both") for T in (5, 10, 20, 40)]
        for m in ("lipschitz", "socp"):
            seq = [r.certificate(m) for r in vals]
            drops += sum(b < a for a, b in zip(seq, seq[1:]))
    ok = drops == 0
    record_criterion(9, "horizon monotonicity", ok, f"100 centers x T in (5,10,20,40): {drops} decreases")
    assert ok


def test_c10_fast_reaching(di2, di2_grid, di2_lattice):
    gammas = [0.99, 0.95, 0.9, 0.8]
    metrics = gamma_sweep(di2, di2_grid, gammas, di2_lattice, reach_samples=200, reach_horizon=300,
                          reach_region=Box([-2.0, -1.5], [2.0, 1.5]), seed=10)
    means = [m.mean_reaching_time for m in metrics]
    ok = all(m is not None for m in means) and all(b <= 1.05 * a for a, b in zip(means, means[1:]))
    record_criterion(10, "fast reaching trend on di2", ok,
                     ", ".join(f"gamma={g}: {t:.2f}" for g, t in zip(gammas, means))
                     + f"; unreached {[m.not_reached for m in metrics]}")
    assert ok


def test_c11_gamma_invariance(lin_field, lin_field05):
    (a_lo, a_hi), = super_zero_set(lin_field).intervals
    (b_lo, b_hi), = super_zero_set(lin_field05).intervals
    ok = abs(a_lo - b_lo) <= 0.03 and abs(a_hi - b_hi) <= 0.03
    record_criterion(11, "gamma invariance of the level set", ok,
                     f"gamma=0.9: ({a_lo:.5f}, {a_hi:.5f}); gamma=0.5: ({b_lo:.5f}, {b_hi:.5f})")
    assert ok


def test_c12_latency_ordering():
    di4 = builtin_system("di4")
    K = np.array([[1.0, 1.8, 0.0, 0.0], [0.0, 0.0, 1.0, 1.8]])
    pol = BlackBoxPolicy(di4, lambda X: np.clip(-X @ K.T, -1.0, 1.0), vectorized=True)
    rep = latency_histogram(di4, pol, 100, 0.05, 30, 0.9, Box([-1.5, -1.0, -1.5, -1.0], [1.5, 1.0, 1.5, 1.0]), 12)
    s = rep.summary()
    ok = s["lipschitz"]["median"] < s["socp"]["median"]
    record_criterion(12, "certificate latency ordering on di4", ok,
                     f"median lipschitz {1e3 * s['lipschitz']['median']:.3f} ms, "
                     f"median socp {1e3 * s['socp']['median']:.3f} ms "
                     f"(both under 100 ms: {max(s['lipschitz']['median'], s['socp']['median']) < 0.1}, reported only)")
    assert ok
