"""Experiment harness CLI.

    greedypde run <preset> [--n-schedule 16,32,64] [--seed S] [--out DIR]
                  [--config FILE] [--full-scale]

Writes `<preset>.csv`, `<preset>.txt`, and `<preset>.png` into the output
directory (plus `<preset>-breakpoints.csv/.png` for the adaptivity preset).
The output directory comes from --out, else $GREEDYPDE_OUT_DIR, else the
config file, else the working directory.  Configuration is a single JSON
document; CLI flags override its fields.  Exit codes: 0 success, 1 numeric
failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time
from dataclasses import dataclass, field

from .argmax import SearchConfig
from .dictionary import Expansion
from .errors import GreedyPdeError, UnsupportedDomainError
from .greedy import OgaConfig, RgaConfig, run_oga, run_rga
from .metrics import order_table
from .presets import PRESETS
from . import reports

OUT_DIR_ENV = "GREEDYPDE_OUT_DIR"


@dataclass
class ExperimentConfig:
    preset: str
    n_schedule: list = None
    seed: int = 0
    out_dir: str = "."
    full_scale: bool = False
    quadrature: dict = field(default_factory=dict)
    argmax: dict = field(default_factory=dict)
    algorithm: dict = field(default_factory=dict)

    def quad_int(self, key, default):
        value = self.quadrature.get(key, default)
        return int(value)

    def search(self, base: SearchConfig) -> SearchConfig:
        known = {f.name for f in dataclasses.fields(SearchConfig)}
        overrides = {k: v for k, v in self.argmax.items() if k in known}
        return dataclasses.replace(base, **overrides)

    def schedule(self, desk, full):
        if self.n_schedule:
            ns = [int(n) for n in self.n_schedule]
            if any(b <= a for a, b in zip(ns, ns[1:])):
                raise ValueError("--n-schedule must be strictly increasing")
            return ns
        return list(full if self.full_scale else desk)


def export_breakpoints(expansion: Expansion, lower=-1.0, upper=1.0):
    """Sorted second-derivative breakpoints -b/omega of a 1-D expansion.

    Neurons whose hyperplane lies outside the open interval (inactive or
    always-active on the domain) are excluded.
    """
    if expansion.dim not in (None, 1):
        raise UnsupportedDomainError("breakpoints are defined for d = 1 only")
    breaks = []
    for _, g in expansion.terms:
        w = float(g.omega[0])
        if w == 0.0:
            continue
        b = -g.bias / w
        if lower < b < upper:
            breaks.append(b)
    return sorted(breaks)


def run_experiment(config: ExperimentConfig):
    """Run one preset end to end; returns (report, {kind: path})."""
    if config.preset not in PRESETS:
        raise KeyError(config.preset)
    plan = PRESETS[config.preset](config)
    schedule = plan.schedule
    rows = []
    timings = []
    final_expansion = None
    metadata = dict(plan.metadata)
    metadata["preset"] = plan.name
    metadata["seed"] = config.seed
    metadata["n_schedule"] = list(schedule)

    if plan.shared_objective:
        objective, engine = plan.objective()
        t0 = time.perf_counter()
        if plan.algorithm == "oga":
            state, snaps = run_oga(
                objective, engine, OgaConfig(iterations=max(schedule)),
                snapshot_at=schedule,
            )
        else:
            state, snaps = run_rga(
                objective, engine,
                RgaConfig(M=plan.rga_M, iterations=max(schedule)),
                snapshot_at=schedule,
            )
        timings.append(time.perf_counter() - t0)
        if state.converged and state.reason:
            metadata["stopped_early"] = f"n={state.n}: {state.reason}"
        for n in schedule:
            u = snaps.get(n, state.expansion)
            rows.append((n, plan.measure(u, n, objective)))
            final_expansion = u
    else:
        for n in schedule:
            objective, engine = plan.objective(n)
            t0 = time.perf_counter()
            if plan.algorithm == "oga":
                state, _ = run_oga(objective, engine, OgaConfig(iterations=n))
            else:
                state, _ = run_rga(
                    objective, engine, RgaConfig(M=plan.rga_M, iterations=n)
                )
            timings.append(time.perf_counter() - t0)
            rows.append((n, plan.measure(state.expansion, n, objective)))
            final_expansion = state.expansion

    report = order_table(rows, plan.columns, metadata)
    out_dir = config.out_dir
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "csv": os.path.join(out_dir, f"{plan.name}.csv"),
        "txt": os.path.join(out_dir, f"{plan.name}.txt"),
        "png": os.path.join(out_dir, f"{plan.name}.png"),
    }
    reports.write_csv(report, paths["csv"])
    reports.write_text(report, paths["txt"])
    reports.render_convergence_figure(report, paths["png"])
    if plan.breakpoint_domain is not None and final_expansion is not None:
        lo, hi = plan.breakpoint_domain
        breaks = export_breakpoints(final_expansion, lo, hi)
        paths["breakpoints_csv"] = os.path.join(
            out_dir, f"{plan.name}-breakpoints.csv"
        )
        paths["breakpoints_png"] = os.path.join(
            out_dir, f"{plan.name}-breakpoints.png"
        )
        reports.write_breakpoints_csv(breaks, paths["breakpoints_csv"])
        reports.render_breakpoints_figure(
            breaks, plan.exact_curve, plan.breakpoint_domain,
            paths["breakpoints_png"],
        )
    report.metadata["row_seconds"] = [round(t, 3) for t in timings]
    return report, paths


def _parse_schedule(text):
    return [int(tok) for tok in text.replace(",", " ").split()]


def _build_config(args) -> ExperimentConfig:
    raw = {}
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    cfg = ExperimentConfig(
        preset=args.preset or raw.get("preset", ""),
        n_schedule=raw.get("n_schedule"),
        seed=int(raw.get("seed", 0)),
        out_dir=raw.get("out_dir", "."),
        full_scale=bool(raw.get("full_scale", False)),
        quadrature=dict(raw.get("quadrature", {})),
        argmax=dict(raw.get("argmax", {})),
        algorithm=dict(raw.get("algorithm", {})),
    )
    if args.n_schedule:
        cfg.n_schedule = _parse_schedule(args.n_schedule)
    if args.seed is not None:
        cfg.seed = args.seed
    if os.environ.get(OUT_DIR_ENV):
        cfg.out_dir = os.environ[OUT_DIR_ENV]
    if args.out:
        cfg.out_dir = args.out
    if args.full_scale:
        cfg.full_scale = True
    return cfg


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="greedypde",
        description="Greedy shallow-network PDE solver benchmarks",
    )
    sub = parser.add_subparsers(dest="command")
    runp = sub.add_parser("run", help="run a named experiment preset")
    runp.add_argument("preset", help="preset name, e.g. ex1-neumann")
    runp.add_argument("--n-schedule", default=None,
                      help="comma-separated neuron counts, e.g. 16,32,64")
    runp.add_argument("--seed", type=int, default=None)
    runp.add_argument("--out", default=None, help="output directory")
    runp.add_argument("--config", default=None, help="JSON config file")
    runp.add_argument("--full-scale", action="store_true",
                      help="paper-scale schedules and quadrature (slow)")
    args = parser.parse_args(argv)
    if args.command != "run":
        parser.print_help()
        return 2
    try:
        cfg = _build_config(args)
    except (OSError, json.JSONDecodeError, ValueError) as err:
        print(f"error: bad configuration: {err}", file=sys.stderr)
        return 2
    if cfg.preset not in PRESETS:
        names = ", ".join(sorted(PRESETS))
        print(f"error: unknown preset {cfg.preset!r}; available: {names}",
              file=sys.stderr)
        return 2
    try:
        report, paths = run_experiment(cfg)
    except GreedyPdeError as err:
        print(f"error: numeric failure: {err}", file=sys.stderr)
        return 1
    with open(paths["txt"], "r", encoding="utf-8") as fh:
        sys.stdout.write(fh.read())
    for kind in sorted(paths):
        print(f"wrote {paths[kind]}")
    seconds = report.metadata.get("row_seconds", [])
    print(f"total solver time: {sum(seconds):.1f}s")
    return 0


if __name__ == "__main__":
    sys.exit(main())
