"""Rank-size demand weighting: turn raw POI counts into weighted opportunities.

POI categories are ranked by everyday importance (rank 1 = most important).
A rank-size power law assigns each rank a commutation probability; counts
weighted by it become the zone opportunity mass the potential graph runs on.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import InputError, ParameterError
from .geometry import ZoneGrid

log = logging.getLogger(__name__)


def poi_probability(rank_z: int, alpha_poi: float, c_poi: float) -> float:
    """Commutation probability of a POI category: c * rank^-(1 + 1/alpha)."""
    _check_rank(rank_z)
    if alpha_poi <= 0:
        raise ParameterError(f"alpha_poi must be > 0, got {alpha_poi}")
    if c_poi <= 0:
        raise ParameterError(f"c_poi must be > 0, got {c_poi}")
    return c_poi * float(rank_z) ** -(1.0 + 1.0 / alpha_poi)


def visiting_frequency(rank: int, alpha: float) -> float:
    """Unnormalized visit frequency rank^-alpha (diagnostics and calibration plots)."""
    _check_rank(rank)
    if alpha <= 0:
        raise ParameterError(f"alpha must be > 0, got {alpha}")
    return float(rank) ** -alpha


def _check_rank(rank) -> None:
    if int(rank) != rank or rank < 1:
        raise ParameterError(f"rank must be an integer >= 1, got {rank}")


@dataclass(frozen=True)
class DemandWeights:
    """Normalized per-rank commutation probabilities over the top_k ranks."""

    alpha_poi: float
    c_poi: float
    top_k: int
    probabilities: Mapping[int, float]

    def __post_init__(self):
        total = math.fsum(self.probabilities.values())
        if abs(total - 1.0) > 1e-9:
            raise ParameterError(f"rank probabilities sum to {total}, expected 1 +- 1e-9")
        probs = [self.probabilities[r] for r in sorted(self.probabilities)]
        if any(b >= a for a, b in zip(probs, probs[1:])):
            raise ParameterError("rank probabilities must decrease strictly with rank")

    def weight(self, rank: int) -> float:
        """Probability for a rank; ranks beyond top_k contribute nothing."""
        _check_rank(rank)
        return self.probabilities.get(rank, 0.0)


def normalize_weights(alpha_poi: float, top_k: int) -> DemandWeights:
    """Choose c so the rank probabilities sum to 1 over ranks 1..top_k."""
    if alpha_poi <= 0:
        raise ParameterError(f"alpha_poi must be > 0, got {alpha_poi}")
    if int(top_k) != top_k or top_k < 1:
        raise ParameterError(f"top_k must be an integer >= 1, got {top_k}")
    exponent = 1.0 + 1.0 / alpha_poi
    c = 1.0 / math.fsum(float(z) ** -exponent for z in range(1, top_k + 1))
    probs = {z: poi_probability(z, alpha_poi, c) for z in range(1, top_k + 1)}
    return DemandWeights(alpha_poi=alpha_poi, c_poi=c, top_k=top_k, probabilities=probs)


@dataclass(frozen=True, eq=False)
class PoiCategory:
    """A ranked POI category with its per-zone counts.

    Counts are a dense array aligned to the grid or a sparse
    {zone_index: count} mapping.
    """

    name: str
    rank: int
    counts: np.ndarray | Mapping[int, float]

    def __post_init__(self):
        _check_rank(self.rank)
        if isinstance(self.counts, Mapping):
            bad = [n for n in self.counts.values() if n < 0]
        else:
            self.counts.setflags(write=False)
            bad = self.counts[self.counts < 0]
        if len(bad):
            raise InputError(f"category '{self.name}' has negative counts")


@dataclass(frozen=True)
class PoiBinReport:
    """What happened to POIs that could not be used as-is."""

    total: int
    outside_grid: int
    inactive_zone: int
    unranked: dict


def bin_pois(
    grid: ZoneGrid,
    pois: Iterable[tuple[float, float, str]],
    category_ranks: Mapping[str, int],
) -> tuple[list[PoiCategory], PoiBinReport]:
    """Bucket raw (x, y, category) points into per-zone category counts.

    Points off the grid are dropped and tallied; categories missing from the
    rank table are dropped and tallied per name. Points landing in inactive
    zones are counted (and tallied) but never contribute mass because
    aggregation skips inactive zones.
    """
    counts = {name: np.zeros(grid.n_zones) for name in category_ranks}
    total = outside = inactive = 0
    unranked: dict[str, int] = {}
    for x, y, category in pois:
        total += 1
        if category not in category_ranks:
            unranked[category] = unranked.get(category, 0) + 1
            continue
        idx = grid.zone_index_at(x, y)
        if idx is None:
            outside += 1
            continue
        if not grid.active[idx]:
            inactive += 1
        counts[category][idx] += 1.0
    if outside or unranked:
        log.warning("dropped %d POIs outside the grid, %d with unranked categories",
                    outside, sum(unranked.values()))
    categories = [
        PoiCategory(name=name, rank=rank, counts=counts[name])
        for name, rank in category_ranks.items()
    ]
    report = PoiBinReport(total=total, outside_grid=outside, inactive_zone=inactive,
                          unranked=unranked)
    return categories, report


def aggregate_wpo(
    grid: ZoneGrid,
    categories: Sequence[PoiCategory],
    weights: DemandWeights,
) -> ZoneGrid:
    """Weighted-opportunity mass per zone: sum of rank weight times category count.

    Inactive zones stay at zero regardless of counts. Accepts either dense
    count arrays or sparse {zone_index: count} mappings; sparse entries with
    an out-of-range index are skipped with a warning.
    """
    wpo = np.zeros(grid.n_zones)
    for cat in categories:
        w = weights.weight(cat.rank)
        if w == 0.0:
            continue
        counts = cat.counts
        if isinstance(counts, Mapping):
            dense = np.zeros(grid.n_zones)
            for idx, n in counts.items():
                if not 0 <= idx < grid.n_zones:
                    log.warning("category '%s': zone index %s outside grid, ignored", cat.name, idx)
                    continue
                dense[idx] = n
            counts = dense
        elif counts.shape != (grid.n_zones,):
            raise InputError(
                f"category '{cat.name}' counts have shape {counts.shape}, grid has {grid.n_zones} zones"
            )
        wpo += w * counts
    wpo[~grid.active] = 0.0
    return grid.with_wpo(wpo)


def read_pois_csv(path: str) -> list[tuple[float, float, str]]:
    """Read POIs from a CSV with x, y, category columns."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"x", "y", "category"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise InputError(f"{path}: POI CSV needs columns x, y, category")
        for i, row in enumerate(reader):
            try:
                rows.append((float(row["x"]), float(row["y"]), row["category"]))
            except ValueError as exc:
                raise InputError(f"{path}: bad POI row {i + 2}: {exc}") from exc
    return rows
