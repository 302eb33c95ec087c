"""Synthetic desk-scale scenarios: one cluster, rank-weighted POIs, lattice roads.

Every file is deterministic for a given seed (floats are written with repr),
so repeated generation is byte-identical and safe to diff.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .config import DEFAULT_CATEGORY_RANKS, DEFAULT_MODALITIES
from .errors import ParameterError


@dataclass(frozen=True)
class SynthSpec:
    grid_n: int = 5
    side_length_km: float = 1.0
    population: float = 1000.0
    poi_density: float = 0.5  # expected POIs per zone
    network_style: str = "lattice"
    seed: int = 0

    def __post_init__(self):
        if self.grid_n < 2:
            raise ParameterError("grid_n must be >= 2")
        if self.side_length_km <= 0:
            raise ParameterError("side_length_km must be > 0")
        if self.population <= 0:
            raise ParameterError("population must be > 0")
        if self.poi_density <= 0:
            raise ParameterError("poi_density must be > 0")
        if self.network_style != "lattice":
            raise ParameterError(f"unknown network style '{self.network_style}'")
        if not 0 <= self.seed < 2**64:
            raise ParameterError("seed must fit in 64 unsigned bits")


def synth_scenario(out_dir: str, spec: SynthSpec = SynthSpec()) -> str:
    """Write clusters/POIs/network/config files under out_dir; returns the config path."""
    os.makedirs(out_dir, exist_ok=True)
    rng = np.random.default_rng([spec.seed, 0x53594E])
    n = spec.grid_n
    cell_m = spec.side_length_km * 1000.0
    extent = n * cell_m

    clusters_path = os.path.join(out_dir, "clusters.geojson")
    _write_cluster(clusters_path, extent, spec.population)

    pois_path = os.path.join(out_dir, "pois.csv")
    n_pois = max(1, round(spec.poi_density * n * n))
    _write_pois(pois_path, rng, extent, n_pois)

    nodes_path = os.path.join(out_dir, "nodes.csv")
    segments_path = os.path.join(out_dir, "segments.csv")
    _write_lattice(nodes_path, segments_path, n, cell_m)

    config_path = os.path.join(out_dir, "scenario.json")
    config = {
        "clusters": "clusters.geojson",
        "pois": "pois.csv",
        "network": {"nodes": "nodes.csv", "segments": "segments.csv"},
        "grid": {"side_length_l": spec.side_length_km, "margin_km": 0.0},
        "demand": {"alpha_poi": 1.0, "top_k": 10, "category_ranks": DEFAULT_CATEGORY_RANKS},
        "behavior": {
            "levy": {"mu": 0.0, "c": 1.0},
            "pte": {"family": "exponential", "median_kj": 615.0},
            "motif": {"p_e": 0.2, "gamma_r": 2.0, "gamma_e": 2.0},
            "modalities": DEFAULT_MODALITIES,
        },
        "evolution": {"p_trip_min": 1e-6, "max_intermediate_zones": 5,
                      "candidates_per_origin": 8, "k_for_sk": 2},
        "rng_seed": spec.seed,
        "output_dir": "out",
    }
    with open(config_path, "w") as fh:
        json.dump(config, fh, indent=2)
        fh.write("\n")
    return config_path


def _write_cluster(path: str, extent: float, population: float) -> None:
    ring = [[0.0, 0.0], [extent, 0.0], [extent, extent], [0.0, extent], [0.0, 0.0]]
    doc = {
        "type": "FeatureCollection",
        "features": [{
            "type": "Feature",
            "geometry": {"type": "Polygon", "coordinates": [ring]},
            "properties": {"population": population},
        }],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def _write_pois(path: str, rng: np.random.Generator, extent: float, count: int) -> None:
    names = DEFAULT_CATEGORY_RANKS
    # Rank-weighted draw so common categories dominate, mirroring real POI mixes.
    weights = np.array([1.0 / (r + 1) ** 2 for r in range(len(names))])
    weights /= weights.sum()
    xs = rng.uniform(0.0, extent, size=count)
    ys = rng.uniform(0.0, extent, size=count)
    cats = rng.choice(len(names), size=count, p=weights)
    with open(path, "w", newline="") as fh:
        fh.write("x,y,category\n")
        for x, y, c in zip(xs, ys, cats):
            fh.write(f"{float(x)!r},{float(y)!r},{names[int(c)]}\n")


def _write_lattice(nodes_path: str, segments_path: str, n: int, cell_m: float) -> None:
    with open(nodes_path, "w", newline="") as fh:
        fh.write("node_id,x,y\n")
        for row in range(n):
            for col in range(n):
                x = (col + 0.5) * cell_m
                y = (row + 0.5) * cell_m
                fh.write(f"{row * n + col},{x!r},{y!r}\n")
    with open(segments_path, "w", newline="") as fh:
        fh.write("segment_id,from,to,length_m,oneway\n")
        sid = 0
        for row in range(n):
            for col in range(n):
                node = row * n + col
                if col + 1 < n:
                    fh.write(f"{sid},{node},{node + 1},{cell_m!r},0\n")
                    sid += 1
                if row + 1 < n:
                    fh.write(f"{sid},{node},{node + n},{cell_m!r},0\n")
                    sid += 1
