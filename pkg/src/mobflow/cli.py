"""Command-line interface.

Subcommands: synth (generate a scenario), run (full pipeline), gwpc
(potential stage only), trips (through trip generation), assign (assignment
from a trip dump), check (validate config and data). Exit codes: 0 success,
1 validation failure, 2 runtime failure, 3 conservation-check failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time

from . import assign as assign_mod
from . import geometry, pipeline, tripgen
from .config import load_scenario
from .errors import ConfigValidationError, MobflowError
from .potential import export_gwpc_csv
from .synth import SynthSpec, synth_scenario

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2
EXIT_CHECKS = 3

THREADS_ENV = "MOBFLOW_THREADS"


def _default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _add_override_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("config", help="scenario config file (JSON)")
    parser.add_argument("--out", help="override output directory")
    parser.add_argument("--seed", type=int, help="override rng_seed")
    parser.add_argument("--threads", type=int, default=None,
                        help=f"worker threads (default: ${THREADS_ENV} or 1)")
    parser.add_argument("--p-trip-min", type=float, help="override evolution.p_trip_min")
    parser.add_argument("--side-length-km", type=float, help="override grid.side_length_l")
    parser.add_argument("--margin-km", type=float, help="override grid.margin_km")
    parser.add_argument("--no-cache", action="store_true", help="ignore the potential-graph cache")


def _overrides(args) -> dict:
    mapping = {
        "out": "output_dir",
        "seed": "rng_seed",
        "p_trip_min": "evolution.p_trip_min",
        "side_length_km": "grid.side_length_l",
        "margin_km": "grid.margin_km",
    }
    overrides = {}
    for attr, key in mapping.items():
        value = getattr(args, attr, None)
        if value is not None:
            overrides[key] = value
    if getattr(args, "seed", None) is not None:
        overrides["evolution.rng_seed"] = args.seed
    return overrides


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mobflow",
                                     description="Zone-based mobility flow estimation")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic scenario")
    p.add_argument("--out", required=True, help="directory to write scenario files into")
    p.add_argument("--grid-n", type=int, default=5, help="zones per side")
    p.add_argument("--side-length-km", type=float, default=1.0)
    p.add_argument("--population", type=float, default=1000.0)
    p.add_argument("--poi-density", type=float, default=0.5, help="expected POIs per zone")
    p.add_argument("--network", default="lattice", help="network style")
    p.add_argument("--seed", type=int, default=0)

    for name, helptext in (("run", "run the full pipeline"),
                           ("gwpc", "build only the potential graph"),
                           ("trips", "run through trip generation"),
                           ("check", "validate config and input data")):
        p = sub.add_parser(name, help=helptext)
        _add_override_flags(p)

    p = sub.add_parser("assign", help="assignment from an existing trip dump")
    _add_override_flags(p)
    p.add_argument("--trips", required=True, help="trip dump CSV from the trips subcommand")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _dispatch(args)
    except ConfigValidationError as exc:
        for err in exc.errors:
            print(f"config error: {err}", file=sys.stderr)
        return EXIT_VALIDATION
    except MobflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def _dispatch(args) -> int:
    if args.command == "synth":
        spec = SynthSpec(grid_n=args.grid_n, side_length_km=args.side_length_km,
                         population=args.population, poi_density=args.poi_density,
                         network_style=args.network, seed=args.seed)
        path = synth_scenario(args.out, spec)
        print(path)
        return EXIT_OK

    threads = args.threads if args.threads is not None else _default_threads()
    cfg = load_scenario(args.config, _overrides(args))

    if args.command == "check":
        # Config already validated; make sure the data files parse too.
        geometry.read_clusters_geojson(cfg.clusters_path)
        from .demand import read_pois_csv
        read_pois_csv(cfg.pois_path)
        assign_mod.read_network_csv(cfg.nodes_path, cfg.segments_path)
        print("ok")
        return EXIT_OK

    if args.command == "run":
        report = pipeline.run_pipeline(cfg, threads=threads, use_cache=not args.no_cache)
        for check in report.checks:
            status = "pass" if check.passed else "FAIL"
            print(f"check {check.name}: {status} (residual {check.residual:.3e})")
        print(f"report: {report.outputs['report']}")
        return EXIT_OK if report.all_checks_passed else EXIT_CHECKS

    os.makedirs(cfg.output_dir, exist_ok=True)
    if args.command == "gwpc":
        t0 = time.perf_counter()
        _, _, grid = pipeline.stage_spatial(cfg)
        grid, _, _ = pipeline.stage_demand(cfg, grid)
        gwpc, params, cache_hit = pipeline.stage_potential(
            cfg, grid, cache_dir=os.path.join(cfg.output_dir, "cache"),
            threads=threads, use_cache=not args.no_cache)
        csv_path = os.path.join(cfg.output_dir, "gwpc.csv")
        export_gwpc_csv(gwpc, csv_path, grid.side_length_km, params.alpha)
        print(f"gwpc: {gwpc.n_zones} zones, cache_hit={cache_hit}, "
              f"{time.perf_counter() - t0:.2f}s -> {csv_path}")
        return EXIT_OK

    if args.command == "trips":
        _, _, grid = pipeline.stage_spatial(cfg)
        grid, _, _ = pipeline.stage_demand(cfg, grid)
        gwpc, _, _ = pipeline.stage_potential(
            cfg, grid, cache_dir=os.path.join(cfg.output_dir, "cache"),
            threads=threads, use_cache=not args.no_cache)
        trips = pipeline.stage_trips(cfg, grid, gwpc, threads=threads)
        path = os.path.join(cfg.output_dir, "trips.csv")
        tripgen.write_trips_csv(trips, path)
        print(f"{sum(len(v) for v in trips.values())} trips -> {path}")
        return EXIT_OK

    if args.command == "assign":
        _, _, grid = pipeline.stage_spatial(cfg)
        trips = tripgen.read_trips_csv(args.trips, cfg.modalities)
        net, flows, routed, dropped, loads = pipeline.stage_assign(cfg, grid, trips)
        loads_path = os.path.join(cfg.output_dir, "loads.csv")
        assign_mod.write_loads_csv(loads, loads_path)
        assign_mod.write_loads_geojson(loads, net, os.path.join(cfg.output_dir, "loads.geojson"))
        print(f"{len(routed)} routed, {len(dropped)} dropped -> {loads_path}")
        return EXIT_OK

    raise MobflowError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
