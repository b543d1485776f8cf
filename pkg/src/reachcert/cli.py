"""Command-line front end: solve, certify, simulate, sweep and latency.

Exit codes: 0 success or certified, 1 not certified, 2 configuration error,
3 numerical non-convergence (artifacts are still written and flagged).
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .certify import METHODS, certify_offline, certify_online
from .exceptions import ConfigError, ReachCertError
from .harness import ExperimentConfig, gamma_sweep, latency_histogram, success_rate
from .io import (export_certified_csv, export_field_csv, export_policy_csv, load_field, load_json,
                 save_field, write_csv, write_json)
from .policy import greedy_policy
from .systems import MODES, Box, SystemModel, system_from_config
from .value import ActionLattice, Grid, ValueField, level_set, value_iteration

EXIT_OK, EXIT_NOT_CERTIFIED, EXIT_CONFIG, EXIT_NONCONVERGED = 0, 1, 2, 3


class Run:
    """Resolved configuration plus the bookkeeping shared by every command."""

    def __init__(self, command: str, args: argparse.Namespace):
        self.command = command
        self.config_path = Path(args.config)
        self.doc: dict[str, Any] = load_json(self.config_path)
        if not isinstance(self.doc, dict):
            raise ConfigError("configuration must be a JSON object")
        if "system" not in self.doc:
            raise ConfigError("configuration needs a 'system' section")
        self.doc["system"] = dict(self.doc["system"])
        if args.mode is not None:
            self.doc["system"]["mode"] = args.mode
        if args.seed is not None:
            self.doc["seed"] = args.seed
        self.doc.setdefault("seed", 0)
        if args.method is not None:
            self.doc["method"] = args.method
        self.threads = args.threads
        self.out = Path(args.out)
        self.artifacts: list[str] = []
        self.started = time.perf_counter()
        self.model: SystemModel = system_from_config(self.doc["system"])

    @property
    def seed(self) -> int:
        seed = self.doc["seed"]
        if not isinstance(seed, int) or seed < 0 or seed >= 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        return seed

    def section(self, name: str) -> dict:
        sec = self.doc.get(name, {})
        if not isinstance(sec, dict):
            raise ConfigError(f"'{name}' must be an object")
        return sec

    def path(self, name: str) -> Path:
        self.artifacts.append(name)
        return self.out / name

    def grid(self) -> Grid:
        g = self.doc.get("grid")
        if not isinstance(g, dict) or "axes" not in g:
            raise ConfigError("configuration needs grid.axes = [[min, max, count], ...]")
        grid = Grid.from_axes(g["axes"])
        if grid.ndim != self.model.n:
            raise ConfigError("grid dimension disagrees with the system")
        return grid

    def lattice(self) -> ActionLattice:
        lat = self.section("lattice")
        return ActionLattice.for_model(self.model, int(lat.get("controls", 11)),
                                       int(lat.get("disturbances", 5)))

    def gamma(self) -> float:
        return float(self.doc.get("gamma", 0.9))

    def method(self) -> str:
        method = self.doc.get("method", "both")
        if method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}")
        return method

    def solve(self, gamma: float | None = None) -> ValueField:
        return value_iteration(self.model, self.grid(), self.gamma() if gamma is None else gamma,
                               self.lattice(), tol=float(self.doc.get("tol", 1e-6)),
                               max_iter=self.doc.get("max_iter"), settle=self.doc.get("settle"))

    def field(self) -> ValueField:
        """Load the field named by the config, or solve it in-process."""
        ref = self.doc.get("field")
        if ref is None:
            return self.solve()
        path = Path(ref)
        if not path.is_absolute():
            path = self.config_path.parent / path
        fld = load_field(path)
        if fld.grid.ndim != self.model.n:
            raise ConfigError("stored field dimension disagrees with the system")
        return fld

    def manifest(self, extra: dict | None = None) -> None:
        doc = {
            "command": self.command,
            "config": self.doc,
            "artifacts": sorted(self.artifacts),
            "seed": self.seed,
            "version": __version__,
            "wall_time": time.perf_counter() - self.started,
        }
        if extra:
            doc.update(extra)
        write_json(self.out / "manifest.json", doc)


def _box(doc: Any, what: str) -> Box:
    if not isinstance(doc, dict) or "lo" not in doc or "hi" not in doc:
        raise ConfigError(f"{what} must be an object with 'lo' and 'hi'")
    return Box(doc["lo"], doc["hi"])


def cmd_solve(run: Run) -> int:
    fld = run.solve()
    save_field(run.path("field.bin"), fld)
    export_field_csv(run.path("field.csv"), fld)
    export_policy_csv(run.path("policy.csv"), greedy_policy(fld, run.model, run.lattice()), fld.grid)
    ls = level_set(fld)
    summary = {
        "mode": fld.mode,
        "gamma": fld.gamma,
        "iterations": fld.iterations,
        "residual": fld.residual,
        "converged": fld.converged,
        "settled": fld.settled,
        "nodes_in_set": int(ls.mask.sum()),
        "intervals": ls.intervals,
    }
    write_json(run.path("summary.json"), summary)
    if ls.intervals is not None:
        for lo, hi in ls.intervals:
            print(f"interval: ({lo:.6f}, {hi:.6f})")
    print(f"iterations: {fld.iterations}  residual: {fld.residual:.3e}  "
          f"converged: {fld.converged}  settled: {fld.settled}")
    run.manifest()
    if not (fld.converged and fld.settled):
        print("warning: value iteration did not converge", file=sys.stderr)
        return EXIT_NONCONVERGED
    return EXIT_OK


def cmd_certify(run: Run) -> int:
    sec = run.section("certify")
    try:
        eps_x, T = float(sec["eps_x"]), int(sec["T"])
    except KeyError as exc:
        raise ConfigError(f"certify section missing {exc}") from None
    gamma = float(sec.get("gamma", run.gamma()))
    method = run.method()
    policy = greedy_policy(run.field(), run.model, run.lattice())
    if "center" in sec:
        center = np.atleast_1d(np.asarray(sec["center"], float))
        if center.shape != (run.model.n,):
            raise ConfigError("certify.center has the wrong dimension")
        rep = certify_online(run.model, policy, center, eps_x, T, gamma, method)
        write_json(run.path("certificate.json"), rep.to_dict())
        for m, b in sorted(rep.bounds.items()):
            print(f"{m}: certificate {b.certificate:.6g}  certified {b.certified}")
        run.manifest()
        return EXIT_OK if rep.any_certified else EXIT_NOT_CERTIFIED
    if "region" not in sec:
        raise ConfigError("certify needs either 'center' or 'region'")
    cset = certify_offline(run.model, policy, _box(sec["region"], "certify.region"), eps_x, T,
                           gamma, method, threads=run.threads)
    write_json(run.path("certified_set.json"), cset.to_dict())
    export_certified_csv(run.path("centers.csv"), cset)
    print(f"certified {int(cset.certified_mask().sum())} of {len(cset.centers)} centers")
    run.manifest()
    return EXIT_OK


def cmd_simulate(run: Run) -> int:
    sec = run.section("simulate")
    if "region" not in sec:
        raise ConfigError("simulate needs a 'region'")
    config = ExperimentConfig(
        model=run.model, region=_box(sec["region"], "simulate.region"),
        sampler=sec.get("sampler", "region"), trials=int(sec.get("trials", 1000)),
        horizon=int(sec.get("horizon", 100)), seed=run.seed,
        disturbance=sec.get("disturbance", "uniform"), control=sec.get("control", "policy"),
        band_cells=float(sec.get("band_cells", 2.0)))
    lattice = run.lattice()
    fld = run.field()
    policy = greedy_policy(fld, run.model, lattice)
    certified = None
    if config.sampler == "certified":
        cert = run.section("certify")
        try:
            cregion = _box(cert["region"], "certify.region")
            eps_x, T = float(cert["eps_x"]), int(cert["T"])
        except KeyError as exc:
            raise ConfigError(f"certified sampler needs certify.{exc.args[0]}") from None
        certified = certify_offline(run.model, policy, cregion, eps_x, T,
                                    float(cert.get("gamma", fld.gamma)), run.method(),
                                    threads=run.threads)
    report = success_rate(config, policy, field=fld, lattice=lattice, certified=certified)
    write_json(run.path("success.json"), report.to_dict())
    write_csv(run.path("trials.csv"), [f"x{i}" for i in range(run.model.n)] + ["first_entry"],
              (list(x) + [t] for x, t in zip(report.initial_states, report.first_entry_times)))
    print(f"success rate: {report.success_rate:.4f} ({report.successes}/{report.trials})")
    run.manifest()
    return EXIT_OK


def cmd_sweep(run: Run) -> int:
    sec = run.section("sweep")
    gammas = [float(g) for g in sec.get("gammas", [run.gamma()])]
    metrics = gamma_sweep(
        run.model, run.grid(), gammas, run.lattice(),
        eps_x=float(sec.get("eps_x", 0.05)), T=int(sec.get("T", 30)),
        cert_region=_box(sec["cert_region"], "sweep.cert_region") if "cert_region" in sec else None,
        method=run.method(), volume_samples=int(sec.get("volume_samples", 10_000)),
        reach_samples=int(sec.get("reach_samples", 200)),
        reach_horizon=int(sec.get("reach_horizon", 300)),
        reach_region=_box(sec["reach_region"], "sweep.reach_region") if "reach_region" in sec else None,
        seed=run.seed, tol=float(run.doc.get("tol", 1e-6)), settle=run.doc.get("settle"))
    rows = [m.to_dict() for m in metrics]
    write_json(run.path("sweep.json"), {"metrics": rows})
    methods = sorted({k for r in rows for k in r["certified_volume"]})
    header = ["gamma", "learned_volume"] + [f"certified_volume_{m}" for m in methods] + [
        "mean_reaching_time", "reached", "not_reached"]
    write_csv(run.path("sweep.csv"), header,
              ([r["gamma"], r["learned_volume"]] + [r["certified_volume"][m] for m in methods]
               + ["" if r["mean_reaching_time"] is None else r["mean_reaching_time"],
                  r["reached"], r["not_reached"]] for r in rows))
    for r in rows:
        print(f"gamma {r['gamma']}: volume {r['learned_volume']:.4f}  "
              f"mean reaching time {r['mean_reaching_time']}")
    run.manifest()
    ok = all(m.field.converged and m.field.settled for m in metrics)
    return EXIT_OK if ok else EXIT_NONCONVERGED


def cmd_latency(run: Run) -> int:
    sec = run.section("latency")
    try:
        region = _box(sec["region"], "latency.region")
        eps_x, T = float(sec["eps_x"]), int(sec["T"])
    except KeyError as exc:
        raise ConfigError(f"latency section missing {exc}") from None
    policy = greedy_policy(run.field(), run.model, run.lattice())
    rep = latency_histogram(run.model, policy, int(sec.get("N", 100)), eps_x, T,
                            float(sec.get("gamma", run.gamma())), region, run.seed)
    # timings vary run to run, so they go next to the manifest rather than into a reproducible artifact
    write_json(run.out / "latency.json", rep.to_dict())
    write_csv(run.out / "latency.csv", ["method", "seconds"],
              ([m, t] for m, s in sorted(rep.samples.items()) for t in s))
    for m, s in sorted(rep.summary().items()):
        print(f"{m}: median {1e3 * s['median']:.3f} ms  p90 {1e3 * s['p90']:.3f} ms")
    run.manifest({"timing_artifacts": ["latency.csv", "latency.json"]})
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "certify": cmd_certify, "simulate": cmd_simulate,
            "sweep": cmd_sweep, "latency": cmd_latency}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="reachcert",
                                     description="Discounted reach-avoid values and certificates.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON configuration file")
        p.add_argument("--out", default="reachcert_out", help="output directory")
        p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--mode", choices=MODES, default=None)
        p.add_argument("--method", choices=METHODS, default=None)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        run = Run(args.command, args)
        return COMMANDS[args.command](run)
    except (ConfigError, ValueError, TypeError, KeyError) as exc:
        # malformed documents surface as value/type/key errors from the constructors
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ReachCertError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED


if __name__ == "__main__":
    sys.exit(main())
