"""Command line entry point: ``run``, ``sweep`` and ``check``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import checks, sinr
from .config import CASES, ConfigError, load_config, validate_config
from .flowsim import OverloadError
from .layout import build_layout, single_small_cell_scenario
from .metrics import NoCompletedFlows
from .runner import run_experiment

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_SIM = 0, 1, 2, 3


def _error(kind, message, code):
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)
    return code


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config) if args.config else validate_config({})
        raw = cfg.to_dict()
        if args.case:
            raw["case"] = args.case
        if args.seeds:
            raw["seeds"] = args.seeds
        if args.duration is not None:
            raw["duration_s"] = args.duration
        if args.out:
            raw["output_dir"] = args.out
        cfg = validate_config(raw)
    except ConfigError as exc:
        return _error("config", str(exc), EXIT_CONFIG)
    try:
        summary = run_experiment(cfg, write_events=args.events)
    except (OverloadError, NoCompletedFlows) as exc:
        return _error("simulation", str(exc), EXIT_SIM)
    agg = summary["aggregate"]
    print(f"{cfg.case}: MUT {agg['mut']['mean'] / 1e6:.2f} ± {agg['mut']['std'] / 1e6:.2f} Mbit/s, "
          f"CET {agg['cet']['mean'] / 1e6:.3f} ± {agg['cet']['std'] / 1e6:.3f} Mbit/s "
          f"over {len(cfg.seeds)} seed(s) -> {Path(cfg.output_dir) / cfg.case}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    layout = build_layout(single_small_cell_scenario(args.edge_fraction))
    pico = layout.small_cells[0]
    rows = sinr.max_cio_sweep(layout, pico, args.m, spacing=args.spacing)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sinr.sweep_to_csv(rows, out / "max_cio_sweep.csv")
    for r in rows:
        print(f"M={r.m}: max CIO {r.max_cio_db:.1f} dB, mean gain {r.mean_sinr_gain_db:.2f} dB")
    return EXIT_OK


def cmd_check(args) -> int:
    ok = True
    for name, passed, detail in checks.run_all():
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'} {name}: {detail}")
    return EXIT_OK if ok else EXIT_CHECK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hetnet-eicic", description="Flow-level eICIC self-optimisation simulator")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate one case over one or more seeds")
    r.add_argument("--config", help="JSON experiment configuration")
    r.add_argument("--case", choices=CASES)
    r.add_argument("--seed", "--seeds", dest="seeds", type=int, nargs="+")
    r.add_argument("--duration", type=float, help="simulated seconds")
    r.add_argument("--out", help="output directory")
    r.add_argument("--events", action="store_true", help="also write the event stream as NDJSON")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="maximum offset versus number of muting macros")
    s.add_argument("--m", type=int, nargs="+", default=[1, 2, 3, 6, 9])
    s.add_argument("--edge-fraction", type=float, default=0.7)
    s.add_argument("--spacing", type=float, default=5.0, help="grid spacing in metres")
    s.add_argument("--out", default="out")
    s.set_defaults(func=cmd_sweep)

    c = sub.add_parser("check", help="verify the optimisation kernels on frozen inputs")
    c.set_defaults(func=cmd_check)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
