"""Command-line entry point.

Subcommands
    simulate  one seeded path per ``n``: event dump and checkpoint pairings
    fluid     fluid curves ``(t, value)`` per test function
    laws      covariance tables for the six functional kinds plus the BAR defect
    verify    Monte Carlo verification campaign
    all       everything above

Exit status: 0 when every verdict passes, 1 on a verdict failure, 2 on a
configuration error, 3 on a numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .arrivals import ArrivalError
from .config import Campaign, ConfigError, ExperimentConfig, parse_config
from .distributions import DistributionError
from .fluid import fluid_age, fluid_residual
from .harness import InsufficientReplications, fluid_input_for, make_path, run_experiment
from .laws import KINDS, bar_check, covariance_functional
from .simulator import age_apply, residual_apply, write_event_dump
from .testfunctions import NotInSpaceError, TestFunctionError

__all__ = ["main", "build_parser"]

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3
COMMANDS = ("simulate", "fluid", "laws", "verify", "all")
BAR_TOL = 1e-8


def _g(x: float) -> str:
    return "%.17g" % x


def _slug(text: str) -> str:
    return text.replace(":", "-").replace(".", "p")


def _write_text(path: Path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _json(doc) -> str:
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


# subcommands ----------------------------------------------------------------

def cmd_simulate(cfg: ExperimentConfig, out: Path, workers: int) -> dict:
    dist, arr, phis = cfg.dist(), cfg.arrivals(), cfg.test_functions()
    cps = np.asarray(cfg.checkpoints)
    rows = []
    for n in cfg.n:
        path = make_path(cfg, n, 0, dist, arr)
        with open(out / f"events_{cfg.name}_n{n}.csv", "w", encoding="utf-8", newline="") as fh:
            write_event_dump(path, fh)
        for phi in phis:
            age = age_apply(path, cps, phi)
            res = residual_apply(path, cps, phi)
            rows += [[str(n), _g(t), phi.name, _g(a), _g(r)] for t, a, r in zip(cps, age, res)]
    _write_rows(out / f"paths_{cfg.name}.csv", ("n", "t", "phi", "age", "residual"), rows)
    return {"passed": True}


def cmd_fluid(cfg: ExperimentConfig, out: Path, workers: int) -> dict:
    dist = cfg.dist()
    inp = fluid_input_for(cfg, dist)
    for phi in cfg.test_functions():
        solver = fluid_residual if phi.domain == "residuals" else fluid_age
        rows = [[_g(t), _g(solver(float(t), phi, inp))] for t in cfg.checkpoints]
        _write_rows(out / f"fluid_{cfg.name}_{_slug(phi.name)}.csv", ("t", "value"), rows)
    return {"passed": True}


def _law_times(cfg: ExperimentConfig) -> list[tuple[float, float]]:
    st = [(t, t) for t in cfg.times] + [tuple(p) for p in cfg.pairs]
    return list(dict.fromkeys(st))


def cmd_laws(cfg: ExperimentConfig, out: Path, workers: int) -> dict:
    dist = cfg.dist()
    sigma2 = cfg.arrivals().sigma2
    fns = cfg.test_functions()
    if cfg.psi is not None and cfg.psi not in cfg.phi:
        fns.append(cfg.partner())
    fluid = fluid_input_for(cfg, dist)
    rows = []
    for kind in KINDS:
        cf = covariance_functional(kind, cfg.lam, sigma2, dist, fluid)
        for s, t in _law_times(cfg):
            for i, p in enumerate(fns):
                for q in fns[i:]:
                    rows.append([_g(s), _g(t), p.name, q.name, _g(cf.eval(s, p, t, q)), kind])
    _write_rows(out / f"laws_{cfg.name}.csv", ("s", "t", "phi_id", "psi_id", "value", "kind"),
                rows)
    defect = max((bar_check(p, cfg.lam, sigma2, dist) for p in fns if p.domain == "ages"),
                 default=0.0)
    return {"bar_defect_max": defect, "passed": bool(defect < BAR_TOL)}


def cmd_verify(cfg: ExperimentConfig, out: Path, workers: int) -> dict:
    report = run_experiment(cfg, workers)
    _write_text(out / f"{cfg.name}.csv", report.to_csv())
    _write_text(out / f"{cfg.name}.json", report.to_json() + "\n")
    return {"passed": report.passed, "rows": len(report.rows),
            "failures": [f"{r.statistic}:n={r.n}:t={_g(r.t)}:{r.phi}" for r in report.failures]}


_STEPS = {"simulate": cmd_simulate, "fluid": cmd_fluid, "laws": cmd_laws,
          "verify": cmd_verify}


# driver ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gginf", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"gginf {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="INI experiment file")
        sp.add_argument("--seed", type=int, default=None, help="override the master seed")
        sp.add_argument("--out", default="out", help="output directory")
        sp.add_argument("--workers", type=int, default=os.cpu_count() or 1)
        sp.add_argument("--experiment", default=None, help="run only this experiment")
    return p


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, NotInSpaceError):
        return EXIT_NUMERIC
    if isinstance(exc, (ConfigError, InsufficientReplications, DistributionError, ArrivalError,
                        TestFunctionError)):
        return EXIT_CONFIG
    return EXIT_NUMERIC


def _seed_field(campaign: Campaign):
    seeds = sorted({e.seed for e in campaign.experiments})
    return seeds[0] if len(seeds) == 1 else seeds


def run(command: str, campaign: Campaign, experiments, out: Path, workers: int) -> tuple[int, dict, dict]:
    steps = list(_STEPS) if command == "all" else [command]
    summary = {"command": command, "config_digest": campaign.digest(), "version": __version__,
               "seed": _seed_field(campaign), "experiments": {}}
    clock = {}
    for cfg in experiments:
        entry = {"kind": cfg.kind}
        t0 = time.perf_counter()
        for step in steps:
            try:
                entry[step] = _STEPS[step](cfg, out, workers)
            except Exception as exc:  # noqa: BLE001 -- mapped to an exit status
                code = _exit_code(exc)
                print(f"gginf: experiment {cfg.name} ({step}): {exc}", file=sys.stderr)
                clock[cfg.name] = time.perf_counter() - t0
                return code, summary, clock
        entry["passed"] = all(entry[s]["passed"] for s in steps)
        summary["experiments"][cfg.name] = entry
        clock[cfg.name] = time.perf_counter() - t0
    summary["passed"] = all(e["passed"] for e in summary["experiments"].values())
    return (EXIT_OK if summary["passed"] else EXIT_FAIL), summary, clock


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        campaign = parse_config(args.config).with_seed(args.seed)
        experiments = campaign.select(args.experiment)
    except ConfigError as exc:
        for field, msg in exc.errors:
            print(f"gginf: config error: {field}: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    if args.workers < 1:
        print("gginf: --workers must be >= 1", file=sys.stderr)
        return EXIT_CONFIG

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    started = time.time()
    code, summary, clock = run(args.command, campaign, experiments, out, args.workers)
    summary["exit_status"] = code
    _write_text(out / "summary.json", _json(summary))
    manifest = {
        "config_path": str(args.config),
        "config_digest": campaign.digest(),
        "seed": _seed_field(campaign),
        "version": __version__,
        "out_dir": str(out),
        "command": args.command,
        "experiment": args.experiment,
        "workers": args.workers,
        "exit_status": code,
        "wall_clock": {"started": started, "finished": time.time(),
                       "seconds": {k: round(v, 3) for k, v in clock.items()}},
    }
    _write_text(out / "manifest.json", _json(manifest))
    return code


if __name__ == "__main__":
    sys.exit(main())
