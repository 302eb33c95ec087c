"""Zone-to-zone commutation potentials via the opportunity-weighted radiation law.

The potential graph holds, for every ordered zone pair, the probability that
a commuter starting in the origin zone picks a location in the destination
zone, given the weighted-opportunity mass at the origin, at the destination,
and in between. A gravity kernel with exponential distance decay is included
as a comparison baseline only.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateNormalizationError, InputError, ParameterError
from .geometry import ZoneGrid

log = logging.getLogger(__name__)

ALPHA_SCALE_KM = 36.0
ALPHA_EXPONENT = 1.33


def radiation_alpha(side_length_km: float) -> float:
    """Scale exponent of the survival function: (l / 36)^1.33 with l in km."""
    if side_length_km <= 0:
        raise ParameterError(f"side length must be > 0 km, got {side_length_km}")
    return (side_length_km / ALPHA_SCALE_KM) ** ALPHA_EXPONENT


@dataclass(frozen=True)
class RadiationParams:
    """Normalization constants shared by every pair evaluation.

    alpha comes from the zone side length; n_avg is total mass over the zone
    count (all cells, inactive included, since they are part of the
    tessellation).
    """

    alpha: float
    n_total: float
    n_avg: float
    z_zones: int

    def __post_init__(self):
        if self.alpha <= 0:
            raise ParameterError(f"alpha must be > 0, got {self.alpha}")
        if not (math.isfinite(self.n_total) and self.n_total >= 0):
            raise ParameterError(f"total mass must be finite and >= 0, got {self.n_total}")
        if self.z_zones < 1:
            raise ParameterError(f"zone count must be >= 1, got {self.z_zones}")
        if not math.isclose(self.n_avg, self.n_total / self.z_zones, rel_tol=1e-12, abs_tol=0.0):
            raise ParameterError("n_avg must equal n_total / z_zones")

    @classmethod
    def from_grid(cls, grid: ZoneGrid) -> "RadiationParams":
        n_total = float(grid.wpo.sum())
        z = grid.n_zones
        return cls(alpha=radiation_alpha(grid.side_length_km), n_total=n_total,
                   n_avg=n_total / z, z_zones=z)


def p_greater(x: float, params: RadiationParams) -> float:
    """Normalized survival probability of an opportunity mass x.

    [1/(1+x^a) - 1/(1+n_total^a)] / [1/(1+n_avg^a) - 1/(1+n_total^a)],
    with x clamped into [n_avg, n_total]: the law is defined on that range,
    but sparse zones can present masses below the per-zone average and the
    clamp keeps the function total. Equals 1 at n_avg and 0 at n_total.
    """
    a, n_total, n_avg = params.alpha, params.n_total, params.n_avg
    denom = 1.0 / (1.0 + n_avg**a) - 1.0 / (1.0 + n_total**a)
    if denom == 0.0:
        raise DegenerateNormalizationError(
            "survival normalization degenerate: total mass equals average mass "
            f"(n_total={n_total}, n_avg={n_avg})"
        )
    if not (math.isfinite(x) and x >= 0):
        raise ParameterError(f"mass must be finite and >= 0, got {x}")
    x = min(max(x, n_avg), n_total)
    return (1.0 / (1.0 + x**a) - 1.0 / (1.0 + n_total**a)) / denom


def radiation_probability(n_oz: float, n_dz: float, s_track: float, params: RadiationParams) -> float:
    """Probability of choosing a location in the destination zone.

    [P>(n_oz + s) - P>(n_oz + n_dz + s)] / P>(n_oz). A vanishing
    denominator (origin mass at or above the total) yields 0 rather than an
    error; such origins are counted as degenerate by the graph builder.
    """
    for name, value in (("n_oz", n_oz), ("n_dz", n_dz), ("s_track", s_track)):
        if not (math.isfinite(value) and value >= 0):
            raise ParameterError(f"{name} must be finite and >= 0, got {value}")
    denom = p_greater(n_oz, params)
    if denom == 0.0:
        return 0.0
    num = p_greater(n_oz + s_track, params) - p_greater(n_oz + n_dz + s_track, params)
    return num / denom


def s_track(grid: ZoneGrid, origin: int, dest: int) -> float:
    """Opportunity mass passed en route: zones strictly inside the origin-centered
    disk whose radius is the origin-destination distance, excluding both endpoints.
    """
    if origin == dest:
        raise ParameterError("origin and destination must differ")
    centroids = grid.centroids_m()
    d2 = _sq_dist_row(centroids, origin)
    return _s_track_from_d2(grid.wpo, d2, origin, dest)


def _sq_dist_row(centroids: np.ndarray, origin: int) -> np.ndarray:
    dx = centroids[:, 0] - centroids[origin, 0]
    dy = centroids[:, 1] - centroids[origin, 1]
    return dx * dx + dy * dy


def _s_track_from_d2(wpo: np.ndarray, d2: np.ndarray, origin: int, dest: int) -> float:
    mask = d2 < d2[dest]
    mask[origin] = False
    mask[dest] = False
    return float(wpo[mask].sum())


@dataclass(frozen=True, eq=False)
class PotentialGraph:
    """Dense origin x destination matrix of visitation probabilities, zero diagonal."""

    n_zones: int
    p_er: np.ndarray
    degenerate_origins: tuple[int, ...] = ()

    def __post_init__(self):
        self.p_er.setflags(write=False)
        if self.p_er.shape != (self.n_zones, self.n_zones):
            raise InputError(f"matrix shape {self.p_er.shape} != ({self.n_zones}, {self.n_zones})")
        if not np.all(np.isfinite(self.p_er)):
            raise InputError("potential matrix contains non-finite entries")
        if np.any(self.p_er < 0) or np.any(self.p_er > 1):
            raise InputError("potential entries must lie in [0, 1]")
        if np.any(np.diagonal(self.p_er) != 0):
            raise InputError("potential diagonal must be zero")


def build_gwpc(grid: ZoneGrid, params: RadiationParams, threads: int = 1) -> PotentialGraph:
    """Evaluate the radiation probability for every ordered zone pair.

    Rows are independent and may be computed in parallel; each row is written
    to its own matrix slot so the result does not depend on thread count.
    Destinations with zero mass are skipped: their numerator vanishes
    identically.
    """
    n = grid.n_zones
    if n < 2 or int(np.count_nonzero(grid.active)) < 2:
        raise InputError("potential graph needs at least 2 active zones")
    if params.n_total <= 0:
        raise InputError("grid has zero total opportunity mass")
    wpo = grid.wpo
    centroids = grid.centroids_m()
    matrix = np.zeros((n, n))
    degenerate: list[int] = []

    def fill_row(i: int) -> None:
        if p_greater(wpo[i], params) == 0.0:
            degenerate.append(i)
            return
        d2 = _sq_dist_row(centroids, i)
        row = matrix[i]
        for j in range(n):
            if j == i or wpo[j] == 0.0:
                continue
            s = _s_track_from_d2(wpo, d2, i, j)
            row[j] = radiation_probability(wpo[i], wpo[j], s, params)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(fill_row, range(n)))
    else:
        for i in range(n):
            fill_row(i)
    if degenerate:
        log.warning("%d origin zones have degenerate survival normalization; their rows are zero",
                    len(degenerate))
    return PotentialGraph(n_zones=n, p_er=matrix, degenerate_origins=tuple(sorted(degenerate)))


def gravity_probability(pop_i: float, pop_j: float, d_km: float, beta_per_km: float) -> float:
    """Baseline gravity weight p_i * p_j * exp(-beta * d). Diagnostic only."""
    if pop_i < 0 or pop_j < 0:
        raise ParameterError("populations must be >= 0")
    if d_km < 0:
        raise ParameterError(f"distance must be >= 0 km, got {d_km}")
    if beta_per_km <= 0:
        raise ParameterError(f"beta must be > 0 per km, got {beta_per_km}")
    return pop_i * pop_j * math.exp(-beta_per_km * d_km)


# --- persistence --------------------------------------------------------------


def gwpc_cache_key(grid: ZoneGrid, params: RadiationParams) -> str:
    """Content hash over the grid masses, geometry, and radiation constants."""
    h = hashlib.sha256()
    h.update(np.asarray(grid.wpo, dtype=np.float64).tobytes())
    h.update(np.asarray(grid.active, dtype=np.uint8).tobytes())
    meta = (grid.origin.x, grid.origin.y, grid.side_length_km, grid.n_cols, grid.n_rows,
            params.alpha, params.n_total, params.n_avg, params.z_zones)
    h.update(repr(meta).encode())
    return h.hexdigest()[:16]


def save_gwpc(graph: PotentialGraph, path_prefix: str, grid: ZoneGrid, params: RadiationParams) -> None:
    """Write the matrix as a raw .npy plus a small JSON sidecar with its context."""
    np.save(path_prefix + ".npy", graph.p_er)
    meta = {
        "n_zones": graph.n_zones,
        "side_length_km": grid.side_length_km,
        "alpha": params.alpha,
        "n_total": params.n_total,
        "degenerate_origins": list(graph.degenerate_origins),
    }
    with open(path_prefix + ".json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_gwpc(path_prefix: str) -> PotentialGraph:
    matrix = np.load(path_prefix + ".npy")
    with open(path_prefix + ".json") as fh:
        meta = json.load(fh)
    return PotentialGraph(n_zones=meta["n_zones"], p_er=matrix,
                          degenerate_origins=tuple(meta.get("degenerate_origins", [])))


def export_gwpc_csv(graph: PotentialGraph, path: str, side_length_km: float, alpha: float) -> None:
    """Row-major CSV dump with a comment header for inspection."""
    with open(path, "w") as fh:
        fh.write(f"# n_zones={graph.n_zones} side_length_km={side_length_km!r} alpha={alpha!r}\n")
        for i in range(graph.n_zones):
            fh.write(",".join(repr(v) for v in graph.p_er[i].tolist()))
            fh.write("\n")
