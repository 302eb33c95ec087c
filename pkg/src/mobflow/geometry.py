"""Spatial discretization: living clusters, target-area boundary, and the zone grid.

Coordinates are planar projected meters (no geodesic math); callers must
project their data before loading it. Grid cells are square with a side
length given in kilometers, indexed row-major from the southwest corner.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np
import shapely
from shapely.geometry import MultiPolygon, Polygon, shape

from .behavior import ModalityProfile, PteDistribution
from .errors import InputError, ParameterError

# Segments per quarter circle when buffering polygon corners. 64 keeps the
# area error of the rounded offset below ~1e-4 relative.
BUFFER_QUAD_SEGS = 64


@dataclass(frozen=True)
class GeoPoint:
    """A planar point, meters east/north of the local origin."""

    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ParameterError(f"GeoPoint must be finite, got ({self.x}, {self.y})")


@dataclass(frozen=True)
class LivingCluster:
    """A residential polygon with the population living inside it."""

    boundary: Polygon
    population: float

    def __post_init__(self):
        if not isinstance(self.boundary, Polygon):
            raise InputError("cluster boundary must be a polygon")
        if len(self.boundary.exterior.coords) < 4:  # closed ring repeats the first vertex
            raise InputError("cluster polygon needs at least 3 vertices")
        if not self.boundary.is_valid:
            raise InputError("cluster polygon is self-intersecting or otherwise invalid")
        if self.boundary.area <= 0:
            raise InputError("cluster polygon has no area")
        if not (math.isfinite(self.population) and self.population >= 0):
            raise InputError(f"cluster population must be >= 0, got {self.population}")

    @classmethod
    def from_points(cls, points: Sequence[tuple[float, float]], population: float) -> "LivingCluster":
        return cls(Polygon(points), population)


@dataclass(frozen=True)
class TargetArea:
    """Union of living clusters grown outward by the daily-travel margin."""

    boundary: Polygon | MultiPolygon
    margin_m: float


@dataclass(frozen=True)
class Zone:
    """One square grid cell."""

    index: int
    col: int
    row: int
    centroid: GeoPoint
    population: float
    wpo: float
    active: bool


@dataclass(frozen=True, eq=False)
class ZoneGrid:
    """Row-major square grid covering the target area's bounding box.

    Cells whose centroid falls outside the target-area polygon are retained
    (the grid stays rectangular for dense matrix indexing) but flagged
    inactive and carry zero population and zero weighted-opportunity mass.
    Arrays are read-only; operations that change zone masses return a new
    grid.
    """

    origin: GeoPoint
    side_length_km: float
    n_cols: int
    n_rows: int
    population: np.ndarray
    wpo: np.ndarray
    active: np.ndarray

    def __post_init__(self):
        for arr in (self.population, self.wpo, self.active):
            arr.setflags(write=False)

    @property
    def n_zones(self) -> int:
        return self.n_cols * self.n_rows

    @property
    def cell_size_m(self) -> float:
        return self.side_length_km * 1000.0

    def centroid(self, index: int) -> GeoPoint:
        col, row = index % self.n_cols, index // self.n_cols
        cell = self.cell_size_m
        return GeoPoint(self.origin.x + (col + 0.5) * cell, self.origin.y + (row + 0.5) * cell)

    def centroids_m(self) -> np.ndarray:
        """(n_zones, 2) array of cell-center coordinates in meters."""
        cell = self.cell_size_m
        cols = np.arange(self.n_zones) % self.n_cols
        rows = np.arange(self.n_zones) // self.n_cols
        return np.column_stack(
            (self.origin.x + (cols + 0.5) * cell, self.origin.y + (rows + 0.5) * cell)
        )

    def zone(self, index: int) -> Zone:
        if not 0 <= index < self.n_zones:
            raise InputError(f"zone index {index} out of range [0, {self.n_zones})")
        return Zone(
            index=index,
            col=index % self.n_cols,
            row=index // self.n_cols,
            centroid=self.centroid(index),
            population=float(self.population[index]),
            wpo=float(self.wpo[index]),
            active=bool(self.active[index]),
        )

    def zones(self) -> list[Zone]:
        return [self.zone(i) for i in range(self.n_zones)]

    def cell_polygon(self, index: int) -> Polygon:
        col, row = index % self.n_cols, index // self.n_cols
        cell = self.cell_size_m
        x0 = self.origin.x + col * cell
        y0 = self.origin.y + row * cell
        return shapely.box(x0, y0, x0 + cell, y0 + cell)

    def zone_index_at(self, x: float, y: float) -> int | None:
        """Zone containing (x, y), or None when the point is off-grid."""
        cell = self.cell_size_m
        col = math.floor((x - self.origin.x) / cell)
        row = math.floor((y - self.origin.y) / cell)
        if 0 <= col < self.n_cols and 0 <= row < self.n_rows:
            return row * self.n_cols + col
        return None

    def with_population(self, population: np.ndarray) -> "ZoneGrid":
        return replace(self, population=np.array(population, dtype=float))

    def with_wpo(self, wpo: np.ndarray) -> "ZoneGrid":
        return replace(self, wpo=np.array(wpo, dtype=float))


def pte_margin(pte: PteDistribution, modality: ModalityProfile) -> float:
    """Width in meters of the boundary margin a commuter stays inside on 95% of days.

    The margin is the one-way distance whose round trip (factor 2, out and
    back home) costs the 95th percentile of the daily travel-energy
    distribution at the modality's energy rate.
    """
    rate = modality.energy_rate_kj_per_km
    if not (math.isfinite(rate) and rate > 0):
        raise ParameterError(f"energy rate must be > 0 kJ/km, got {rate}")
    q95_kj = pte.quantile(0.95)
    margin_km = q95_kj / (2.0 * rate)
    return margin_km * 1000.0


def build_target_area(clusters: Sequence[LivingCluster], margin_m: float) -> TargetArea:
    """Outward offset (rounded buffer) of the union of cluster polygons."""
    if not clusters:
        raise InputError("need at least one living cluster")
    if margin_m < 0:
        raise ParameterError(f"margin must be >= 0 m, got {margin_m}")
    merged = shapely.union_all([c.boundary for c in clusters])
    if margin_m > 0:
        merged = merged.buffer(margin_m, quad_segs=BUFFER_QUAD_SEGS)
    return TargetArea(boundary=merged, margin_m=margin_m)


def make_grid(area: TargetArea, side_length_km: float) -> ZoneGrid:
    """Square-cell grid over the target area's bounding box.

    Cell count per axis is ceil(extent / side length); centroids outside the
    area polygon mark their cell inactive.
    """
    if side_length_km <= 0:
        raise ParameterError(f"side length must be > 0 km, got {side_length_km}")
    minx, miny, maxx, maxy = area.boundary.bounds
    width, height = maxx - minx, maxy - miny
    if width <= 0 or height <= 0:
        raise InputError("target area has zero extent")
    cell = side_length_km * 1000.0
    n_cols = math.ceil(width / cell)
    n_rows = math.ceil(height / cell)
    grid = ZoneGrid(
        origin=GeoPoint(minx, miny),
        side_length_km=side_length_km,
        n_cols=n_cols,
        n_rows=n_rows,
        population=np.zeros(n_cols * n_rows),
        wpo=np.zeros(n_cols * n_rows),
        active=np.zeros(n_cols * n_rows, dtype=bool),
    )
    pts = shapely.points(grid.centroids_m())
    active = shapely.covers(area.boundary, pts)
    return replace(grid, active=active)


def assign_population(grid: ZoneGrid, clusters: Sequence[LivingCluster]) -> ZoneGrid:
    """Split each cluster's population over active cells by overlap area.

    Overlap with inactive cells (centroid outside the area polygon) is folded
    back into the active cells so inactive cells stay at zero and the total
    is conserved exactly.
    """
    population = np.array(grid.population)
    cell = grid.cell_size_m
    for cluster in clusters:
        minx, miny, maxx, maxy = cluster.boundary.bounds
        c0 = max(0, math.floor((minx - grid.origin.x) / cell))
        c1 = min(grid.n_cols - 1, math.floor((maxx - grid.origin.x) / cell))
        r0 = max(0, math.floor((miny - grid.origin.y) / cell))
        r1 = min(grid.n_rows - 1, math.floor((maxy - grid.origin.y) / cell))
        indices, weights = [], []
        for row in range(r0, r1 + 1):
            for col in range(c0, c1 + 1):
                idx = row * grid.n_cols + col
                if not grid.active[idx]:
                    continue
                overlap = grid.cell_polygon(idx).intersection(cluster.boundary).area
                if overlap > 0:
                    indices.append(idx)
                    weights.append(overlap)
        total = math.fsum(weights)
        if total <= 0:
            raise InputError("cluster lies entirely outside the grid's active cells")
        for idx, w in zip(indices, weights):
            population[idx] += cluster.population * (w / total)
    return grid.with_population(population)


def read_clusters_geojson(path: str) -> list[LivingCluster]:
    """Load a GeoJSON FeatureCollection of polygons with a "population" property."""
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("type") != "FeatureCollection":
        raise InputError(f"{path}: expected a GeoJSON FeatureCollection")
    clusters = []
    for i, feature in enumerate(doc.get("features", [])):
        geom = shape(feature["geometry"])
        if not isinstance(geom, Polygon):
            raise InputError(f"{path}: feature {i} is not a Polygon")
        props = feature.get("properties") or {}
        if "population" not in props:
            raise InputError(f"{path}: feature {i} lacks a 'population' property")
        clusters.append(LivingCluster(boundary=geom, population=float(props["population"])))
    if not clusters:
        raise InputError(f"{path}: no cluster features")
    return clusters


def write_grid_csv(grid: ZoneGrid, path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["zone_index", "col", "row", "centroid_x", "centroid_y", "population", "wpo"])
        for i in range(grid.n_zones):
            c = grid.centroid(i)
            writer.writerow(
                [i, i % grid.n_cols, i // grid.n_cols, repr(c.x), repr(c.y),
                 repr(float(grid.population[i])), repr(float(grid.wpo[i]))]
            )


def _grid_rows(path: str) -> Iterable[dict]:
    with open(path, newline="") as fh:
        yield from csv.DictReader(fh)
