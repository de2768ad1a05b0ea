"""``ris-sim`` command line.

    ris-sim run <spec-file> [--out DIR] [--seeds K] [--plot] [--jobs J]
    ris-sim oracle <spec-file>

Exit codes: 0 success, 2 spec error, 3 at least one failed cell.
The environment variable ``RIS_SIM_SEED`` overrides ``base_seed``.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .harness import (SpecError, parse_spec, render_plot, run_sweep, with_overrides,
                      write_csv, cell_channels)
from .optimizer import AlgorithmVariant, OuterIterationError, run_joint_optimization
from .oracle import phase_grid_search

EXIT_OK = 0
EXIT_SPEC = 2
EXIT_FAILED_CELL = 3

SEED_ENV = "RIS_SIM_SEED"


def _load(path: str, seeds: int | None):
    spec = parse_spec(Path(path))
    changes = {}
    env_seed = os.environ.get(SEED_ENV)
    if env_seed is not None:
        try:
            changes["base_seed"] = int(env_seed)
        except ValueError:
            raise SpecError(f"{SEED_ENV}={env_seed!r} is not an integer") from None
    if seeds is not None:
        changes["num_seeds"] = seeds
    return with_overrides(spec, **changes) if changes else spec


def _cmd_run(args) -> int:
    spec = _load(args.spec_file, args.seeds)
    out = Path(spec.output_path)
    if args.out is not None:
        out = Path(args.out) / out.name
    out.parent.mkdir(parents=True, exist_ok=True)
    rows = run_sweep(spec, jobs=args.jobs)
    write_csv(rows, out)
    print(f"wrote {len(rows)} rows to {out}")
    if args.plot:
        svg = out.with_suffix(".svg")
        render_plot(rows, svg)
        print(f"wrote {svg}")
    failed = [r for r in rows if r.status == "failed"]
    for r in failed:
        print(f"failed: value={r.value:g} algorithm={r.algorithm} seed={r.seed}: {r.error}",
              file=sys.stderr)
    return EXIT_FAILED_CELL if failed else EXIT_OK


def _cmd_oracle(args) -> int:
    spec = _load(args.spec_file, args.seeds)
    big = [v for v in spec.sweep_values if spec.cell_params(v)["n_elements"] > 2]
    if big:
        raise SpecError("the grid oracle needs n_elements <= 2", None, "n_elements")
    print(f"{'value':>10} {'seed':>5} {'scf_rate':>12} {'grid_rate':>12} {'gap':>10}")
    failed = False
    for v in spec.sweep_values:
        sys_cfg = spec.system(v)
        for k in range(spec.num_seeds):
            seed, ch = cell_channels(spec, v, k)
            grid = phase_grid_search(ch, sys_cfg, spec.oracle_points)
            try:
                res = run_joint_optimization(ch, sys_cfg,
                                             spec.options(AlgorithmVariant.SCF, v, seed))
            except OuterIterationError as exc:
                print(f"{v:>10g} {k:>5d} {'failed':>12} {grid.best_rate:>12.6f}  {exc}")
                failed = True
                continue
            print(f"{v:>10g} {k:>5d} {res.rate:>12.6f} {grid.best_rate:>12.6f} "
                  f"{res.rate - grid.best_rate:>10.2e}")
    return EXIT_FAILED_CELL if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ris-sim",
                                description="RIS-assisted MIMO rate maximization sweeps.")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a parameter sweep and write CSV")
    run.add_argument("spec_file")
    run.add_argument("--out", metavar="DIR", help="output directory (default: spec output_path)")
    run.add_argument("--seeds", type=int, metavar="K", help="override num_seeds")
    run.add_argument("--plot", action="store_true", help="also write an SVG of the mean rate")
    run.add_argument("--jobs", type=int, default=1, metavar="J", help="worker processes")
    run.set_defaults(func=_cmd_run)

    orc = sub.add_parser("oracle", help="compare SCF with the brute-force phase grid (N <= 2)")
    orc.add_argument("spec_file")
    orc.add_argument("--seeds", type=int, metavar="K", help="override num_seeds")
    orc.set_defaults(func=_cmd_oracle)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SpecError as exc:
        print(f"spec error: {exc}", file=sys.stderr)
        return EXIT_SPEC


if __name__ == "__main__":
    sys.exit(main())
