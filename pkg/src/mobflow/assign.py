"""Route surviving trips over the road network and accumulate segment loads.

Assignment is risk-neutral: every leg takes the shortest road connection at
free-flow lengths, with deterministic tie-breaking by lexicographic node-id
sequence. Congestion feedback is an extension point (see CostUpdater), not
implemented.
"""

from __future__ import annotations

import csv
import heapq
import json
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Protocol, Sequence

import numpy as np

from .behavior import ModalityProfile, validate_modality_shares
from .errors import InputError, ParameterError
from .geometry import Zone, ZoneGrid
from .tripgen import Trip

log = logging.getLogger(__name__)

# segment_id -> persons/day crossing it
LoadMap = dict[int, float]


@dataclass(frozen=True)
class Segment:
    segment_id: int
    from_node: int
    to_node: int
    length_m: float
    bidirectional: bool = True


@dataclass(frozen=True, eq=False)
class RoadNetwork:
    """Directed weighted road graph with planar node coordinates."""

    node_xy: Mapping[int, tuple[float, float]]
    segments: tuple[Segment, ...]
    adjacency: Mapping[int, tuple[tuple[int, float, int], ...]] = field(repr=False, default=None)
    _sorted_ids: np.ndarray = field(repr=False, default=None)
    _xy: np.ndarray = field(repr=False, default=None)

    @classmethod
    def build(cls, nodes: Mapping[int, tuple[float, float]], segments: Sequence[Segment]) -> "RoadNetwork":
        if not nodes:
            raise InputError("road network has no nodes")
        for seg in segments:
            if seg.from_node not in nodes or seg.to_node not in nodes:
                raise InputError(f"segment {seg.segment_id} references a missing node")
            if not (math.isfinite(seg.length_m) and seg.length_m > 0):
                raise InputError(f"segment {seg.segment_id} has non-positive length")
        # Parallel edges collapse to the best one (shortest, then lowest id);
        # neighbor lists are sorted for deterministic iteration.
        best: dict[tuple[int, int], tuple[float, int]] = {}
        for seg in segments:
            arcs = [(seg.from_node, seg.to_node)]
            if seg.bidirectional:
                arcs.append((seg.to_node, seg.from_node))
            for arc in arcs:
                cand = (seg.length_m, seg.segment_id)
                if arc not in best or cand < best[arc]:
                    best[arc] = cand
        adj: dict[int, list[tuple[int, float, int]]] = {n: [] for n in nodes}
        for (u, v), (length, sid) in best.items():
            adj[u].append((v, length, sid))
        adjacency = {u: tuple(sorted(nbrs)) for u, nbrs in adj.items()}
        ids = np.array(sorted(nodes), dtype=np.int64)
        xy = np.array([nodes[int(i)] for i in ids], dtype=float)
        net = cls(node_xy=dict(nodes), segments=tuple(segments), adjacency=adjacency,
                  _sorted_ids=ids, _xy=xy)
        return net

    @property
    def n_nodes(self) -> int:
        return len(self.node_xy)

    def component_count(self) -> int:
        """Weakly connected components; reported as a diagnostic, never enforced."""
        seen: set[int] = set()
        undirected: dict[int, set[int]] = {n: set() for n in self.node_xy}
        for u, nbrs in self.adjacency.items():
            for v, _, _ in nbrs:
                undirected[u].add(v)
                undirected[v].add(u)
        count = 0
        for start in self.node_xy:
            if start in seen:
                continue
            count += 1
            stack = [start]
            while stack:
                u = stack.pop()
                if u in seen:
                    continue
                seen.add(u)
                stack.extend(undirected[u] - seen)
        return count


class CostUpdater(Protocol):
    """Extension hook for capacity-aware equilibria.

    Takes the current segment loads and returns updated per-segment costs to
    re-route with. The risk-neutral pipeline never calls it.
    """

    def __call__(self, loads: Mapping[int, float]) -> Mapping[int, float]: ...


def snap_zone_to_node(zone: Zone, net: RoadNetwork) -> int:
    """Nearest node to the zone centroid; exact distance ties pick the lowest id."""
    return snap_point_to_node(zone.centroid.x, zone.centroid.y, net)


def snap_point_to_node(x: float, y: float, net: RoadNetwork) -> int:
    if net._sorted_ids is None or len(net._sorted_ids) == 0:
        raise InputError("cannot snap to an empty network")
    dx = net._xy[:, 0] - x
    dy = net._xy[:, 1] - y
    d2 = dx * dx + dy * dy
    return int(net._sorted_ids[int(np.argmin(d2))])


@dataclass(frozen=True)
class Route:
    nodes: tuple[int, ...]
    segments: tuple[int, ...]
    length_m: float


def shortest_path(net: RoadNetwork, from_node: int, to_node: int) -> Route | None:
    """Minimal-length route, or None when the target is unreachable."""
    return shortest_paths_from(net, from_node, {to_node}).get(to_node)


def shortest_paths_from(net: RoadNetwork, source: int, targets: set[int] | None = None) -> dict[int, Route]:
    """Single-source shortest routes with lexicographic node-sequence tie-breaking.

    The heap orders candidates by (length, node sequence), so the first pop
    of a node carries both the minimal length and, among equal lengths, the
    lexicographically smallest path. Stops early once every requested target
    is settled.
    """
    if source not in net.adjacency:
        raise InputError(f"node {source} not in network")
    if targets is not None:
        for t in targets:
            if t not in net.adjacency:
                raise InputError(f"node {t} not in network")
    remaining = set(targets) if targets is not None else None
    settled: dict[int, tuple[float, tuple[int, ...]]] = {}
    heap: list[tuple[float, tuple[int, ...]]] = [(0.0, (source,))]
    while heap:
        dist, path = heapq.heappop(heap)
        node = path[-1]
        if node in settled:
            continue
        settled[node] = (dist, path)
        if remaining is not None:
            remaining.discard(node)
            if not remaining:
                break
        for nbr, length, _sid in net.adjacency[node]:
            if nbr not in settled:
                heapq.heappush(heap, (dist + length, path + (nbr,)))
    routes: dict[int, Route] = {}
    wanted = targets if targets is not None else settled.keys()
    for t in wanted:
        if t not in settled:
            continue
        dist, path = settled[t]
        routes[t] = Route(nodes=path, segments=_path_segments(net, path), length_m=dist)
    return routes


def _path_segments(net: RoadNetwork, path: tuple[int, ...]) -> tuple[int, ...]:
    segs = []
    for u, v in zip(path, path[1:]):
        for nbr, _length, sid in net.adjacency[u]:
            if nbr == v:
                segs.append(sid)
                break
    return tuple(segs)


@dataclass(frozen=True)
class PathFlow:
    """One trip's daily flow and, once routed, its per-leg road routes."""

    trip: Trip
    flow: float
    legs: tuple[Route, ...] = ()

    @property
    def route_length_m(self) -> float:
        return math.fsum(leg.length_m for leg in self.legs)

    def segment_traversals(self):
        for leg in self.legs:
            yield from leg.segments


def path_flows(
    trips_by_origin: Mapping[int, Sequence[Trip]],
    grid: ZoneGrid,
    modalities: Sequence[ModalityProfile],
) -> list[PathFlow]:
    """Daily flow per trip: realisticity normalized within its origin and modality,
    scaled by the modality share of the origin population.
    """
    validate_modality_shares(modalities)
    if not any(trips_by_origin.values()):
        log.warning("no trips to assign; all flows are zero")
    flows: list[PathFlow] = []
    for origin in sorted(trips_by_origin):
        trips = trips_by_origin[origin]
        if not trips:
            continue
        population = float(grid.population[origin])
        for modality in modalities:
            group = [t for t in trips if t.modality.name == modality.name]
            if not group:
                continue
            p_origin = math.fsum(t.p_trip for t in group)
            if p_origin <= 0.0:
                log.warning("origin %d, modality %s: zero total realisticity; flows set to 0",
                            origin, modality.name)
                flows.extend(PathFlow(trip=t, flow=0.0) for t in group)
                continue
            flows.extend(
                PathFlow(trip=t, flow=t.p_trip / p_origin * modality.share * population)
                for t in group
            )
    return flows


def route_flows(
    flows: Sequence[PathFlow],
    grid: ZoneGrid,
    net: RoadNetwork,
) -> tuple[list[PathFlow], list[PathFlow]]:
    """Resolve each flow's legs over the network.

    A trip with any unroutable leg is dropped whole (the closed tour loses
    its meaning otherwise); dropped flows are returned separately so the
    accounting stays exact. Leg queries are grouped per snapped source node,
    one Dijkstra run each.
    """
    zone_node: dict[int, int] = {}

    def node_of(zone_idx: int) -> int:
        if zone_idx not in zone_node:
            zone_node[zone_idx] = snap_zone_to_node(grid.zone(zone_idx), net)
        return zone_node[zone_idx]

    wanted: dict[int, set[int]] = {}
    for pf in flows:
        seq = pf.trip.zone_sequence
        for a, b in zip(seq, seq[1:]):
            wanted.setdefault(node_of(a), set()).add(node_of(b))
    leg_routes: dict[tuple[int, int], Route] = {}
    for src, dsts in wanted.items():
        got = shortest_paths_from(net, src, set(dsts))
        for dst in dsts:
            if dst in got:
                leg_routes[(src, dst)] = got[dst]
    routed: list[PathFlow] = []
    dropped: list[PathFlow] = []
    for pf in flows:
        seq = pf.trip.zone_sequence
        legs = []
        ok = True
        for a, b in zip(seq, seq[1:]):
            key = (node_of(a), node_of(b))
            route = leg_routes.get(key)
            if route is None:
                ok = False
                break
            legs.append(route)
        if ok:
            routed.append(replace(pf, legs=tuple(legs)))
        else:
            dropped.append(pf)
    if dropped:
        log.warning("%d trips dropped as unroutable (flow %.3f persons/day)",
                    len(dropped), math.fsum(p.flow for p in dropped))
    return routed, dropped


def accumulate_loads(flows: Sequence[PathFlow], net: RoadNetwork) -> LoadMap:
    """Per-segment daily flow. A path crossing a segment in k legs counts k times.

    Per-segment sums are compensated so the vehicle-km identity holds to
    1e-9 relative.
    """
    contributions: dict[int, list[float]] = {}
    for pf in flows:
        for sid in pf.segment_traversals():
            contributions.setdefault(sid, []).append(pf.flow)
    loads = {seg.segment_id: 0.0 for seg in net.segments}
    for sid, values in contributions.items():
        loads[sid] = math.fsum(values)
    return loads


# --- file I/O -----------------------------------------------------------------


def read_network_csv(nodes_path: str, segments_path: str) -> RoadNetwork:
    """Node and segment CSVs: (node_id, x, y) and (segment_id, from, to, length_m, oneway)."""
    nodes: dict[int, tuple[float, float]] = {}
    with open(nodes_path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"node_id", "x", "y"}.issubset(reader.fieldnames):
            raise InputError(f"{nodes_path}: nodes CSV needs columns node_id, x, y")
        for row in reader:
            nodes[int(row["node_id"])] = (float(row["x"]), float(row["y"]))
    segments: list[Segment] = []
    with open(segments_path, newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"segment_id", "from", "to", "length_m", "oneway"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise InputError(f"{segments_path}: segments CSV needs columns {sorted(required)}")
        for row in reader:
            segments.append(Segment(
                segment_id=int(row["segment_id"]),
                from_node=int(row["from"]),
                to_node=int(row["to"]),
                length_m=float(row["length_m"]),
                bidirectional=int(row["oneway"]) == 0,
            ))
    return RoadNetwork.build(nodes, segments)


def write_loads_csv(loads: Mapping[int, float], path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["segment_id", "flow_per_day"])
        for sid in sorted(loads):
            writer.writerow([sid, repr(float(loads[sid]))])


def write_loads_geojson(loads: Mapping[int, float], net: RoadNetwork, path: str) -> None:
    features = []
    for seg in sorted(net.segments, key=lambda s: s.segment_id):
        a = net.node_xy[seg.from_node]
        b = net.node_xy[seg.to_node]
        features.append({
            "type": "Feature",
            "geometry": {"type": "LineString", "coordinates": [[a[0], a[1]], [b[0], b[1]]]},
            "properties": {"segment_id": seg.segment_id, "flow": loads.get(seg.segment_id, 0.0)},
        })
    with open(path, "w") as fh:
        json.dump({"type": "FeatureCollection", "features": features}, fh, indent=2)
        fh.write("\n")
