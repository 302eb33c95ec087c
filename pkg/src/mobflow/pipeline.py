"""Pipeline orchestration: spatial -> demand -> potential -> trips -> assignment.

Each stage is callable on its own (the CLI's partial subcommands reuse them)
and the full run records timings, counts, drop diagnostics, and conservation
checks into a RunReport. The potential matrix is cached by a content hash of
the grid and its parameters, so sweeps over trip/assignment settings skip
the expensive stage.
"""

from __future__ import annotations

import json
import logging
import math
import os
import time
from dataclasses import dataclass, field

from . import assign as assign_mod
from . import demand as demand_mod
from . import geometry, potential, tripgen
from .behavior import daily_time_budget_h
from .config import ScenarioConfig

log = logging.getLogger(__name__)

FLOW_TOLERANCE_REL = 1e-9
POPULATION_TOLERANCE_REL = 1e-9
VKM_TOLERANCE_REL = 1e-9


@dataclass
class CheckResult:
    name: str
    passed: bool
    residual: float
    tolerance: float
    detail: str = ""


@dataclass
class RunReport:
    stages: list[dict] = field(default_factory=list)
    counts: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    checks: list[CheckResult] = field(default_factory=list)
    outputs: dict = field(default_factory=dict)

    @property
    def all_checks_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add_stage(self, name: str, seconds: float, **counts) -> None:
        self.stages.append({"name": name, "seconds": seconds, **counts})

    def to_dict(self) -> dict:
        return {
            "stages": self.stages,
            "counts": self.counts,
            "diagnostics": self.diagnostics,
            "checks": [vars(c) for c in self.checks],
            "checks_passed": self.all_checks_passed,
            "outputs": self.outputs,
        }

    def write(self, path: str) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def resolve_margin_m(cfg: ScenarioConfig) -> float:
    """Explicit margin when configured; otherwise the widest 95% daily-travel
    margin across the scenario's modalities (the boundary must hold for all)."""
    if cfg.margin_km is not None:
        return cfg.margin_km * 1000.0
    return max(geometry.pte_margin(cfg.behavior.pte, m) for m in cfg.modalities)


def stage_spatial(cfg: ScenarioConfig):
    clusters = geometry.read_clusters_geojson(cfg.clusters_path)
    margin_m = resolve_margin_m(cfg)
    area = geometry.build_target_area(clusters, margin_m)
    grid = geometry.make_grid(area, cfg.side_length_km)
    grid = geometry.assign_population(grid, clusters)
    return clusters, area, grid


def stage_demand(cfg: ScenarioConfig, grid):
    pois = demand_mod.read_pois_csv(cfg.pois_path)
    categories, report = demand_mod.bin_pois(grid, pois, cfg.demand.category_ranks)
    weights = demand_mod.normalize_weights(cfg.demand.alpha_poi, cfg.demand.top_k)
    grid = demand_mod.aggregate_wpo(grid, categories, weights)
    return grid, weights, report


def stage_potential(cfg: ScenarioConfig, grid, cache_dir: str | None = None,
                    threads: int = 1, use_cache: bool = True):
    params = potential.RadiationParams.from_grid(grid)
    cache_prefix = None
    if cache_dir is not None:
        key = potential.gwpc_cache_key(grid, params)
        cache_prefix = os.path.join(cache_dir, f"gwpc-{key}")
        if use_cache and os.path.isfile(cache_prefix + ".npy"):
            return potential.load_gwpc(cache_prefix), params, True
    gwpc = potential.build_gwpc(grid, params, threads=threads)
    if cache_prefix is not None:
        os.makedirs(cache_dir, exist_ok=True)
        potential.save_gwpc(gwpc, cache_prefix, grid, params)
    return gwpc, params, False


def stage_trips(cfg: ScenarioConfig, grid, gwpc, threads: int = 1):
    return tripgen.generate_all(grid, gwpc, cfg.evolution, cfg.modalities,
                                cfg.behavior, threads=threads)


def stage_assign(cfg: ScenarioConfig, grid, trips_by_origin):
    net = assign_mod.read_network_csv(cfg.nodes_path, cfg.segments_path)
    flows = assign_mod.path_flows(trips_by_origin, grid, cfg.modalities)
    routed, dropped = assign_mod.route_flows(flows, grid, net)
    loads = assign_mod.accumulate_loads(routed, net)
    return net, flows, routed, dropped, loads


def run_pipeline(cfg: ScenarioConfig, threads: int = 1, use_cache: bool = True) -> RunReport:
    report = RunReport()
    out = cfg.output_dir
    os.makedirs(out, exist_ok=True)

    t0 = time.perf_counter()
    clusters, area, grid = stage_spatial(cfg)
    report.add_stage("spatial", time.perf_counter() - t0,
                     zones=grid.n_zones, active_zones=int(grid.active.sum()),
                     clusters=len(clusters))

    t0 = time.perf_counter()
    grid, weights, poi_report = stage_demand(cfg, grid)
    report.add_stage("demand", time.perf_counter() - t0,
                     pois=poi_report.total, pois_outside_grid=poi_report.outside_grid,
                     pois_unranked=sum(poi_report.unranked.values()),
                     total_wpo=float(grid.wpo.sum()))

    t0 = time.perf_counter()
    gwpc, params, cache_hit = stage_potential(cfg, grid, cache_dir=os.path.join(out, "cache"),
                                              threads=threads, use_cache=use_cache)
    report.add_stage("potential", time.perf_counter() - t0, cache_hit=cache_hit,
                     degenerate_origins=len(gwpc.degenerate_origins))

    t0 = time.perf_counter()
    trips_by_origin = stage_trips(cfg, grid, gwpc, threads=threads)
    n_trips = sum(len(v) for v in trips_by_origin.values())
    report.add_stage("tripgen", time.perf_counter() - t0, trips=n_trips,
                     origins=len(trips_by_origin))
    if n_trips == 0:
        log.warning("no trips survived the realisticity threshold; outputs will be empty")

    t0 = time.perf_counter()
    net, flows, routed, dropped, loads = stage_assign(cfg, grid, trips_by_origin)
    report.add_stage("assign", time.perf_counter() - t0, path_flows=len(flows),
                     routed=len(routed), dropped=len(dropped),
                     network_components=net.component_count())

    _write_outputs(report, out, cfg, grid, gwpc, params, trips_by_origin, loads, net)
    _run_checks(report, cfg, clusters, grid, trips_by_origin, flows, routed, dropped, loads, net)
    report.counts = {
        "zones": grid.n_zones,
        "trips": n_trips,
        "path_flows": len(flows),
        "dropped_flows": len(dropped),
        "total_load_vehicle_km": math.fsum(
            loads[s.segment_id] * s.length_m for s in net.segments) / 1000.0,
    }
    report.diagnostics["daily_time_budget_h"] = {
        m.name: daily_time_budget_h(cfg.behavior.pte, m) for m in cfg.modalities
    }
    report.diagnostics["dropped_flow_per_day"] = math.fsum(p.flow for p in dropped)
    report.write(os.path.join(out, "report.json"))
    report.outputs["report"] = os.path.join(out, "report.json")
    return report


def _write_outputs(report, out, cfg, grid, gwpc, params, trips_by_origin, loads, net):
    grid_path = os.path.join(out, "grid.csv")
    geometry.write_grid_csv(grid, grid_path)
    report.outputs["grid"] = grid_path
    trips_path = os.path.join(out, "trips.csv")
    tripgen.write_trips_csv(trips_by_origin, trips_path)
    report.outputs["trips"] = trips_path
    loads_path = os.path.join(out, "loads.csv")
    assign_mod.write_loads_csv(loads, loads_path)
    report.outputs["loads"] = loads_path
    geojson_path = os.path.join(out, "loads.geojson")
    assign_mod.write_loads_geojson(loads, net, geojson_path)
    report.outputs["loads_geojson"] = geojson_path


def _run_checks(report, cfg, clusters, grid, trips_by_origin, flows, routed, dropped, loads, net):
    cluster_pop = math.fsum(c.population for c in clusters)
    grid_pop = math.fsum(float(p) for p in grid.population)
    residual = abs(grid_pop - cluster_pop) / cluster_pop if cluster_pop else 0.0
    report.checks.append(CheckResult(
        name="population_conservation", passed=residual <= POPULATION_TOLERANCE_REL,
        residual=residual, tolerance=POPULATION_TOLERANCE_REL,
        detail=f"grid={grid_pop!r} clusters={cluster_pop!r}"))

    # Flow conservation per origin and modality, over origins that produced trips.
    worst = 0.0
    worst_detail = "no flows"
    by_key: dict[tuple[int, str], list[assign_mod.PathFlow]] = {}
    for pf in flows:
        by_key.setdefault((pf.trip.origin_zone, pf.trip.modality.name), []).append(pf)
    for (origin, mod_name), group in by_key.items():
        share = group[0].trip.modality.share
        expected = share * float(grid.population[origin])
        if expected == 0.0:
            continue
        got = math.fsum(p.flow for p in group)
        rel = abs(got - expected) / expected
        if rel >= worst:
            worst = rel
            worst_detail = f"origin={origin} modality={mod_name} got={got!r} expected={expected!r}"
    report.checks.append(CheckResult(
        name="flow_conservation", passed=worst <= FLOW_TOLERANCE_REL,
        residual=worst, tolerance=FLOW_TOLERANCE_REL, detail=worst_detail))

    # Dropped flow must reconcile: routed + dropped = all generated flows.
    total_all = math.fsum(p.flow for p in flows)
    total_split = math.fsum(p.flow for p in routed) + math.fsum(p.flow for p in dropped)
    residual = abs(total_all - total_split) / total_all if total_all else 0.0
    report.checks.append(CheckResult(
        name="flow_accounting", passed=residual <= FLOW_TOLERANCE_REL,
        residual=residual, tolerance=FLOW_TOLERANCE_REL,
        detail=f"all={total_all!r} routed+dropped={total_split!r}"))

    # Vehicle-km identity over routed flows.
    lengths = {s.segment_id: s.length_m for s in net.segments}
    load_side = math.fsum(loads[sid] * lengths[sid] for sid in loads)
    path_side = math.fsum(p.flow * p.route_length_m for p in routed)
    denom = max(abs(load_side), abs(path_side))
    residual = abs(load_side - path_side) / denom if denom else 0.0
    report.checks.append(CheckResult(
        name="vehicle_km_identity", passed=residual <= VKM_TOLERANCE_REL,
        residual=residual, tolerance=VKM_TOLERANCE_REL,
        detail=f"loads={load_side!r} paths={path_side!r}"))
