"""Daily-trip evolution: grow zone sequences per origin, score them, prune, close at home.

Each candidate trip is a chain that starts at its home zone and, at every
evolution step, draws the next zone from the potential-graph row of its
current zone. Drawing the home zone closes the trip (the commuter heads
back); a draw whose extended score falls below the realisticity threshold
stops the chain and the return leg is appended to what it had so far. Closed
trips are re-scored in full and re-filtered before they are emitted.

Scores are the four-factor product: potential-graph leg probabilities,
step-size leg factors (density times the zone side length as bin width,
capped at 1), the survival probability of the round-trip energy under the
daily budget, and the returner/explorer motif weight of the visited set.
Leg products and distances carry over from the previous step; budget and
motif factors are recomputed each step.
"""

from __future__ import annotations

import csv
import hashlib
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from .behavior import BehaviorModel, ModalityProfile, exploration_ratio, levy_pdf, motif_weight
from .errors import InputError, ParameterError
from .geometry import ZoneGrid
from .potential import PotentialGraph

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Trip:
    """An ordered zone sequence with its probability factors.

    Closed trips start and end at the origin zone; consecutive zones always
    differ. p_trip is the product p_pte * p_motif * p_er * p_lf.
    """

    origin_zone: int
    zone_sequence: tuple[int, ...]
    closed: bool
    modality: ModalityProfile
    p_pte: float
    p_motif: float
    p_er: float
    p_lf: float
    p_trip: float
    total_distance_km: float

    def __post_init__(self):
        seq = self.zone_sequence
        if len(seq) < 2:
            raise InputError("a trip covers at least two zones")
        if any(a == b for a, b in zip(seq, seq[1:])):
            raise InputError(f"consecutive duplicate zone in {seq}")
        if self.closed and (seq[0] != self.origin_zone or seq[-1] != self.origin_zone):
            raise InputError("closed trips must start and end at the origin zone")
        if not self.closed and seq[0] != self.origin_zone:
            raise InputError("trips must start at the origin zone")
        for name, v in (("p_pte", self.p_pte), ("p_motif", self.p_motif),
                        ("p_er", self.p_er), ("p_lf", self.p_lf)):
            if not 0.0 <= v <= 1.0:
                raise InputError(f"{name}={v} outside [0, 1]")
        if abs(self.p_trip - self.p_pte * self.p_motif * self.p_er * self.p_lf) > 1e-12:
            raise InputError("p_trip does not equal the product of its factors")

    @property
    def distinct_locations(self) -> int:
        return len(set(self.zone_sequence))


@dataclass(frozen=True)
class EvolutionConfig:
    p_trip_min: float = 1e-6
    max_intermediate_zones: int = 5
    candidates_per_origin: int = 8
    rng_seed: int = 0
    k_for_sk: int = 2

    def __post_init__(self):
        # 1.0 is allowed as an explicit "reject everything" setting.
        if not 0.0 < self.p_trip_min <= 1.0:
            raise ParameterError(f"p_trip_min must be in (0, 1], got {self.p_trip_min}")
        if self.max_intermediate_zones < 1:
            raise ParameterError("max_intermediate_zones must be >= 1")
        if self.candidates_per_origin < 1:
            raise ParameterError("candidates_per_origin must be >= 1")
        if not 0 <= self.rng_seed < 2**64:
            raise ParameterError("rng_seed must fit in 64 unsigned bits")
        if self.k_for_sk < 1:
            raise ParameterError("k_for_sk must be >= 1")


def _leg_km(centroids: np.ndarray, a: int, b: int) -> float:
    dx = centroids[a, 0] - centroids[b, 0]
    dy = centroids[a, 1] - centroids[b, 1]
    return math.sqrt(dx * dx + dy * dy) / 1000.0


def _lf_leg_factor(d_km: float, behavior: BehaviorModel, bin_width_km: float) -> float:
    # Density-to-probability conversion: density times one zone side length,
    # capped so the factor stays a probability.
    if d_km <= behavior.levy.mu_km:
        return 0.0
    return min(1.0, levy_pdf(d_km, behavior.levy) * bin_width_km)


def _motif_factor(seq: Sequence[int], centroids: np.ndarray, behavior: BehaviorModel, k: int) -> float:
    visits: dict[int, int] = {}
    for z in seq:
        visits[z] = visits.get(z, 0) + 1
    locations = [((centroids[z, 0], centroids[z, 1]), n) for z, n in visits.items()]
    return motif_weight(exploration_ratio(locations, k), behavior.motif)


def score_sequence(
    seq: Sequence[int],
    gwpc: PotentialGraph,
    grid: ZoneGrid,
    behavior: BehaviorModel,
    modality: ModalityProfile,
    k_for_sk: int = 2,
) -> tuple[float, float, float, float, float, float]:
    """From-scratch factors for a zone sequence.

    Returns (p_pte, p_motif, p_er, p_lf, p_trip, distance_km). The factor
    products run left to right over the legs, matching what incremental
    evolution accumulates, so cached and recomputed values agree bitwise.
    """
    if len(seq) < 2:
        raise InputError("a trip covers at least two zones")
    for z in seq:
        if not 0 <= z < grid.n_zones:
            raise InputError(f"zone index {z} out of range")
    centroids = grid.centroids_m()
    p_er = 1.0
    p_lf = 1.0
    dist_km = 0.0
    for a, b in zip(seq, seq[1:]):
        d = _leg_km(centroids, a, b)
        p_er *= float(gwpc.p_er[a, b])
        p_lf *= _lf_leg_factor(d, behavior, grid.side_length_km)
        dist_km += d
    p_pte = behavior.pte.survival(modality.energy_rate_kj_per_km * dist_km)
    p_motif = _motif_factor(seq, centroids, behavior, k_for_sk)
    p_trip = p_pte * p_motif * p_er * p_lf
    return p_pte, p_motif, p_er, p_lf, p_trip, dist_km


def trip_realisticity(trip: Trip, gwpc: PotentialGraph, grid: ZoneGrid,
                      behavior: BehaviorModel, k_for_sk: int = 2) -> Trip:
    """Recompute a trip's factors from scratch and return the updated trip."""
    p_pte, p_motif, p_er, p_lf, p_trip, dist = score_sequence(
        trip.zone_sequence, gwpc, grid, behavior, trip.modality, k_for_sk)
    return replace(trip, p_pte=p_pte, p_motif=p_motif, p_er=p_er, p_lf=p_lf,
                   p_trip=p_trip, total_distance_km=dist)


def _substream(seed: int, origin: int, modality_name: str) -> np.random.Generator:
    tag = int.from_bytes(hashlib.sha256(modality_name.encode()).digest()[:8], "big")
    return np.random.default_rng([seed, origin, tag])


def _draw(rng: np.random.Generator, row: np.ndarray) -> int | None:
    """One draw proportional to the row; None when the row has no mass."""
    nz = np.nonzero(row)[0]
    if nz.size == 0:
        return None
    p = row[nz] / row[nz].sum()
    return int(nz[rng.choice(nz.size, p=p)])


def _draw_roots(rng: np.random.Generator, row: np.ndarray, count: int) -> list[int]:
    nz = np.nonzero(row)[0]
    if nz.size == 0:
        return []
    p = row[nz] / row[nz].sum()
    size = min(count, nz.size)
    picks = rng.choice(nz.size, size=size, replace=False, p=p)
    return [int(nz[i]) for i in picks]


class _Chain:
    """Mutable evolution state for one candidate trip; leg products carry over."""

    __slots__ = ("seq", "p_er", "p_lf", "dist_km")

    def __init__(self, origin: int, first: int, gwpc, centroids, behavior, bin_km):
        d = _leg_km(centroids, origin, first)
        self.seq = [origin, first]
        self.p_er = 1.0 * float(gwpc.p_er[origin, first])
        self.p_lf = 1.0 * _lf_leg_factor(d, behavior, bin_km)
        self.dist_km = 0.0 + d

    def extended(self, nxt: int, gwpc, centroids, behavior, bin_km):
        d = _leg_km(centroids, self.seq[-1], nxt)
        return (self.p_er * float(gwpc.p_er[self.seq[-1], nxt]),
                self.p_lf * _lf_leg_factor(d, behavior, bin_km),
                self.dist_km + d)


def _score_state(seq, p_er, p_lf, dist_km, centroids, behavior, modality, k):
    p_pte = behavior.pte.survival(modality.energy_rate_kj_per_km * dist_km)
    p_motif = _motif_factor(seq, centroids, behavior, k)
    return p_pte, p_motif, p_pte * p_motif * p_er * p_lf


def evolve_trips(
    origin: int,
    gwpc: PotentialGraph,
    grid: ZoneGrid,
    cfg: EvolutionConfig,
    modality: ModalityProfile,
    behavior: BehaviorModel,
) -> list[Trip]:
    """Grow, filter, and close candidate trips for one origin zone and modality.

    Deterministic for a given (rng_seed, origin, modality name). Every
    returned trip is closed, passes p_trip_min, and has at most
    max_intermediate_zones zones between the home legs.
    """
    if not 0 <= origin < grid.n_zones:
        raise InputError(f"origin {origin} out of range")
    if not grid.active[origin] or grid.population[origin] <= 0:
        raise InputError(f"origin {origin} is not an active populated zone")
    rng = _substream(cfg.rng_seed, origin, modality.name)
    centroids = grid.centroids_m()
    bin_km = grid.side_length_km
    trips: list[Trip] = []

    roots = _draw_roots(rng, gwpc.p_er[origin], cfg.candidates_per_origin)
    if not roots:
        log.warning("origin %d has an empty potential row; no trips generated", origin)
        return trips

    for root in roots:
        chain = _Chain(origin, root, gwpc, centroids, behavior, bin_km)
        _, _, p_open = _score_state(chain.seq, chain.p_er, chain.p_lf, chain.dist_km,
                                    centroids, behavior, modality, cfg.k_for_sk)
        if p_open < cfg.p_trip_min:
            continue  # first evolution step already unrealistic
        while True:
            if len(chain.seq) - 1 >= cfg.max_intermediate_zones:
                break  # reached maximum length; head home
            nxt = _draw(rng, gwpc.p_er[chain.seq[-1]])
            if nxt is None or nxt == origin:
                break  # nowhere to go, or the commuter heads home
            p_er, p_lf, dist = chain.extended(nxt, gwpc, centroids, behavior, bin_km)
            _, _, p_open = _score_state(chain.seq + [nxt], p_er, p_lf, dist,
                                        centroids, behavior, modality, cfg.k_for_sk)
            if p_open < cfg.p_trip_min:
                break  # extension rejected; branch stops growing
            chain.seq.append(nxt)
            chain.p_er, chain.p_lf, chain.dist_km = p_er, p_lf, dist
        closed_trip = _close(chain, origin, gwpc, grid, centroids, behavior, modality, cfg)
        if closed_trip is not None:
            trips.append(closed_trip)
    return trips


def _close(chain: _Chain, origin, gwpc, grid, centroids, behavior, modality, cfg) -> Trip | None:
    p_er, p_lf, dist = chain.extended(origin, gwpc, centroids, behavior, grid.side_length_km)
    seq = chain.seq + [origin]
    p_pte, p_motif, p_trip = _score_state(seq, p_er, p_lf, dist, centroids,
                                          behavior, modality, cfg.k_for_sk)
    if p_trip < cfg.p_trip_min:
        return None
    return Trip(origin_zone=origin, zone_sequence=tuple(seq), closed=True,
                modality=modality, p_pte=p_pte, p_motif=p_motif, p_er=p_er,
                p_lf=p_lf, p_trip=p_trip, total_distance_km=dist)


def generate_all(
    grid: ZoneGrid,
    gwpc: PotentialGraph,
    cfg: EvolutionConfig,
    modalities: Sequence[ModalityProfile],
    behavior: BehaviorModel,
    threads: int = 1,
) -> dict[int, list[Trip]]:
    """Evolve trips for every populated zone and every modality.

    Each (origin, modality) pair owns an independent RNG substream, so the
    result is reproducible regardless of iteration order or thread count.
    """
    origins = [i for i in range(grid.n_zones) if grid.active[i] and grid.population[i] > 0]
    if not origins:
        raise InputError("no populated zones to evolve trips from")
    jobs = [(o, m) for o in origins for m in modalities]

    def run(job):
        o, m = job
        return evolve_trips(o, gwpc, grid, cfg, m, behavior)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outputs = list(pool.map(run, jobs))
    else:
        outputs = [run(job) for job in jobs]
    result: dict[int, list[Trip]] = {o: [] for o in origins}
    for (o, _m), trips in zip(jobs, outputs):
        result[o].extend(trips)
    return result


TRIP_CSV_COLUMNS = ["origin", "modality", "zone_sequence", "distance_km",
                    "p_pte", "p_motif", "p_er", "p_lf", "p_trip"]


def write_trips_csv(trips_by_origin: Mapping[int, Sequence[Trip]], path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRIP_CSV_COLUMNS)
        for origin in sorted(trips_by_origin):
            for t in trips_by_origin[origin]:
                writer.writerow([
                    origin, t.modality.name, ";".join(str(z) for z in t.zone_sequence),
                    repr(t.total_distance_km), repr(t.p_pte), repr(t.p_motif),
                    repr(t.p_er), repr(t.p_lf), repr(t.p_trip),
                ])


def read_trips_csv(path: str, modalities: Sequence[ModalityProfile]) -> dict[int, list[Trip]]:
    by_name = {m.name: m for m in modalities}
    result: dict[int, list[Trip]] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != TRIP_CSV_COLUMNS:
            raise InputError(f"{path}: unexpected trip dump columns {reader.fieldnames}")
        for i, row in enumerate(reader):
            name = row["modality"]
            if name not in by_name:
                raise InputError(f"{path}: row {i + 2} names unknown modality '{name}'")
            seq = tuple(int(z) for z in row["zone_sequence"].split(";"))
            trip = Trip(
                origin_zone=seq[0], zone_sequence=seq, closed=True, modality=by_name[name],
                p_pte=float(row["p_pte"]), p_motif=float(row["p_motif"]),
                p_er=float(row["p_er"]), p_lf=float(row["p_lf"]),
                p_trip=float(row["p_trip"]), total_distance_km=float(row["distance_km"]),
            )
            result.setdefault(seq[0], []).append(trip)
    return result
