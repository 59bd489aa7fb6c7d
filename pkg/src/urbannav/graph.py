"""Georeferenced navigation graph: nodes, azimuth-annotated edges, POIs,
visibility links, a fixed-cell spatial index, and shortest-path routing.

The graph is immutable after construction and safe for concurrent readers.
"""

from __future__ import annotations

import heapq
import json
import math
from collections import deque
from dataclasses import dataclass
from pathlib import Path

from .geo import LatLon, geodesic_m

# Max angular gap between an edge azimuth and a navigable heading.
HEADING_TOLERANCE_DEG = 1.0
# Max relative gap between stored edge length and the geodesic.
LENGTH_TOLERANCE_FRAC = 0.05
# POIs link to nodes at most this far away.
VISIBILITY_RADIUS_M = 50.0
# Spatial index cell size.
INDEX_CELL_M = 100.0

_METERS_PER_DEG_LAT = 111_194.93  # mean-radius arc length of one degree

UNREACHABLE = math.inf


class GraphError(ValueError):
    """Graph file or invariant violation."""


@dataclass(frozen=True)
class NavNode:
    id: str
    pos: LatLon
    headings: tuple[float, ...]


@dataclass(frozen=True)
class NavEdge:
    frm: str
    to: str
    azimuth: float
    length_m: float


@dataclass(frozen=True)
class Poi:
    id: str
    name: str
    category: str
    descriptors: tuple[str, ...]
    pos: LatLon


class _GridIndex:
    """Fixed-cell grid over node positions; exact-checked radius queries."""

    def __init__(self, nodes: dict[str, NavNode]):
        lats = [n.pos.lat for n in nodes.values()] or [0.0]
        mean_lat = sum(lats) / len(lats)
        self._dlat = INDEX_CELL_M / _METERS_PER_DEG_LAT
        self._dlon = INDEX_CELL_M / (
            _METERS_PER_DEG_LAT * max(0.01, math.cos(math.radians(mean_lat)))
        )
        self._cells: dict[tuple[int, int], list[NavNode]] = {}
        for node in nodes.values():
            self._cells.setdefault(self._key(node.pos), []).append(node)

    def _key(self, pos: LatLon) -> tuple[int, int]:
        return (int(math.floor(pos.lat / self._dlat)), int(math.floor(pos.lon / self._dlon)))

    def within_radius(self, center: LatLon, radius_m: float) -> list[NavNode]:
        span_lat = int(math.ceil(radius_m / (_METERS_PER_DEG_LAT * self._dlat))) + 1
        span_lon = int(math.ceil(radius_m / (_METERS_PER_DEG_LAT * self._dlon))) + 1
        ci, cj = self._key(center)
        hits = []
        for i in range(ci - span_lat, ci + span_lat + 1):
            for j in range(cj - span_lon, cj + span_lon + 1):
                for node in self._cells.get((i, j), ()):
                    if geodesic_m(center, node.pos) <= radius_m:
                        hits.append(node)
        hits.sort(key=lambda n: n.id)
        return hits


class NavGraph:
    """Immutable navigation graph over georeferenced nodes."""

    def __init__(
        self,
        nodes: dict[str, NavNode],
        edges: list[NavEdge],
        pois: dict[str, Poi],
        visibility: list[tuple[str, str]],
    ):
        self.nodes = nodes
        self.edges = edges
        self.pois = pois
        self.visibility = visibility
        self._adj: dict[str, list[NavEdge]] = {nid: [] for nid in nodes}
        for edge in edges:
            self._adj[edge.frm].append(edge)
        for out in self._adj.values():
            out.sort(key=lambda e: (e.azimuth, e.to))
        self._vis: dict[str, list[str]] = {nid: [] for nid in nodes}
        for node_id, poi_id in visibility:
            self._vis[node_id].append(poi_id)
        for linked in self._vis.values():
            linked.sort()
        self._index = _GridIndex(nodes)

    # -- construction ---------------------------------------------------

    @classmethod
    def build(
        cls,
        nodes: list[NavNode],
        edges: list[NavEdge],
        pois: list[Poi],
        visibility: list[tuple[str, str]],
    ) -> "NavGraph":
        """Assemble and validate a graph; raises GraphError on any violation."""
        node_map: dict[str, NavNode] = {}
        for node in nodes:
            if node.id in node_map:
                raise GraphError(f"duplicate node id {node.id!r}")
            if list(node.headings) != sorted(set(node.headings)):
                raise GraphError(f"node {node.id!r}: headings must be sorted and distinct")
            for h in node.headings:
                if not 0.0 <= h < 360.0:
                    raise GraphError(f"node {node.id!r}: heading {h} out of [0, 360)")
            node_map[node.id] = node

        poi_map: dict[str, Poi] = {}
        for poi in pois:
            if poi.id in poi_map:
                raise GraphError(f"duplicate poi id {poi.id!r}")
            if not poi.category:
                raise GraphError(f"poi {poi.id!r}: empty category")
            poi_map[poi.id] = poi

        edge_keys = set()
        for edge in edges:
            if edge.frm not in node_map:
                raise GraphError(f"edge {edge.frm!r}->{edge.to!r}: unknown source node {edge.frm!r}")
            if edge.to not in node_map:
                raise GraphError(f"edge {edge.frm!r}->{edge.to!r}: dangling edge to missing node {edge.to!r}")
            if edge.length_m <= 0:
                raise GraphError(f"edge {edge.frm!r}->{edge.to!r}: non-positive length")
            src = node_map[edge.frm]
            gap = min(abs((edge.azimuth - h + 180.0) % 360.0 - 180.0) for h in src.headings) if src.headings else 361.0
            if gap > HEADING_TOLERANCE_DEG:
                raise GraphError(
                    f"edge {edge.frm!r}->{edge.to!r}: azimuth {edge.azimuth:.3f} matches no heading "
                    f"of {edge.frm!r} within {HEADING_TOLERANCE_DEG} deg"
                )
            geo = geodesic_m(src.pos, node_map[edge.to].pos)
            if abs(edge.length_m - geo) > max(LENGTH_TOLERANCE_FRAC * geo, 0.5):
                raise GraphError(
                    f"edge {edge.frm!r}->{edge.to!r}: length {edge.length_m:.2f} m deviates "
                    f"from geodesic {geo:.2f} m by more than {LENGTH_TOLERANCE_FRAC:.0%}"
                )
            edge_keys.add((edge.frm, edge.to))
        for frm, to in edge_keys:
            if (to, frm) not in edge_keys:
                raise GraphError(f"edge {frm!r}->{to!r} has no reverse edge (streets are two-way)")

        links: list[tuple[str, str]] = []
        for node_id, poi_id in visibility:
            if node_id not in node_map:
                raise GraphError(f"visibility link references unknown node {node_id!r}")
            if poi_id not in poi_map:
                raise GraphError(f"visibility link references unknown poi {poi_id!r}")
            dist = geodesic_m(node_map[node_id].pos, poi_map[poi_id].pos)
            if dist > VISIBILITY_RADIUS_M:
                raise GraphError(
                    f"visibility link {node_id!r}->{poi_id!r} spans {dist:.1f} m "
                    f"(limit {VISIBILITY_RADIUS_M} m)"
                )
            links.append((node_id, poi_id))

        return cls(node_map, list(edges), poi_map, links)

    # -- queries ----------------------------------------------------------

    def _require(self, node_id: str) -> NavNode:
        node = self.nodes.get(node_id)
        if node is None:
            raise KeyError(f"unknown node id {node_id!r}")
        return node

    def neighbors(self, node_id: str) -> list[tuple[NavEdge, NavNode]]:
        """Outgoing edges with their target nodes, ordered by azimuth."""
        self._require(node_id)
        return [(e, self.nodes[e.to]) for e in self._adj[node_id]]

    def visible_pois(self, node_id: str) -> list[Poi]:
        self._require(node_id)
        return [self.pois[pid] for pid in self._vis[node_id]]

    def nodes_within_radius(self, center: LatLon, radius_m: float) -> list[NavNode]:
        if radius_m <= 0:
            raise ValueError("radius must be positive")
        return self._index.within_radius(center, radius_m)

    def hop_distances_from(self, node_id: str) -> dict[str, int]:
        """BFS hop count from node_id to every reachable node."""
        self._require(node_id)
        dist = {node_id: 0}
        queue = deque([node_id])
        while queue:
            cur = queue.popleft()
            for edge in self._adj[cur]:
                if edge.to not in dist:
                    dist[edge.to] = dist[cur] + 1
                    queue.append(edge.to)
        return dist

    def topo_distance(self, frm: str, to: str) -> float:
        """Shortest hop count, or UNREACHABLE."""
        self._require(frm)
        self._require(to)
        if frm == to:
            return 0
        dist = {frm: 0}
        queue = deque([frm])
        while queue:
            cur = queue.popleft()
            for edge in self._adj[cur]:
                if edge.to not in dist:
                    dist[edge.to] = dist[cur] + 1
                    if edge.to == to:
                        return dist[edge.to]
                    queue.append(edge.to)
        return UNREACHABLE

    def shortest_path(self, frm: str, to: str, weight: str = "hops") -> list[str] | None:
        """Minimal path under 'hops' or 'meters'; ties broken by node id.

        Returns the node sequence, or None when unreachable.
        """
        self._require(frm)
        self._require(to)
        if weight not in ("hops", "meters"):
            raise ValueError(f"unknown weight {weight!r}")
        cost = self._costs_to(to, weight)
        if frm not in cost:
            return None
        path = [frm]
        cur = frm
        while cur != to:
            best = None
            for edge in self._adj[cur]:
                nxt_cost = cost.get(edge.to)
                if nxt_cost is None:
                    continue
                step = 1 if weight == "hops" else edge.length_m
                if abs(nxt_cost + step - cost[cur]) < 1e-9:
                    if best is None or edge.to < best:
                        best = edge.to
            assert best is not None, "cost map inconsistent"
            path.append(best)
            cur = best
        return path

    def _costs_to(self, goal: str, weight: str) -> dict[str, float]:
        """Cost-to-goal map; relies on the two-way street invariant."""
        if weight == "hops":
            return {k: float(v) for k, v in self.hop_distances_from(goal).items()}
        rev: dict[str, list[NavEdge]] = {}
        for edge in self.edges:
            rev.setdefault(edge.to, []).append(edge)
        dist: dict[str, float] = {goal: 0.0}
        heap = [(0.0, goal)]
        while heap:
            d, cur = heapq.heappop(heap)
            if d > dist.get(cur, UNREACHABLE):
                continue
            for edge in rev.get(cur, ()):
                nd = d + edge.length_m
                if nd < dist.get(edge.frm, UNREACHABLE) - 1e-12:
                    dist[edge.frm] = nd
                    heapq.heappush(heap, (nd, edge.frm))
        return dist


# -- serialization --------------------------------------------------------


def graph_to_dict(g: NavGraph) -> dict:
    return {
        "nodes": [
            {"id": n.id, "lat": n.pos.lat, "lon": n.pos.lon, "headings": list(n.headings)}
            for n in sorted(g.nodes.values(), key=lambda n: n.id)
        ],
        "edges": [
            {"from": e.frm, "to": e.to, "azimuth": e.azimuth, "length_m": e.length_m}
            for e in sorted(g.edges, key=lambda e: (e.frm, e.to))
        ],
        "pois": [
            {
                "id": p.id,
                "name": p.name,
                "category": p.category,
                "descriptors": list(p.descriptors),
                "lat": p.pos.lat,
                "lon": p.pos.lon,
            }
            for p in sorted(g.pois.values(), key=lambda p: p.id)
        ],
        "visibility": [{"node": n, "poi": p} for n, p in sorted(g.visibility)],
    }


def save_graph(g: NavGraph, path: str | Path) -> None:
    Path(path).write_text(json.dumps(graph_to_dict(g), indent=1, sort_keys=True))


def _as_finite(value, context: str) -> float:
    if not isinstance(value, (int, float)) or isinstance(value, bool) or not math.isfinite(value):
        raise GraphError(f"{context}: expected a finite number, got {value!r}")
    return float(value)


def graph_from_dict(doc: dict) -> NavGraph:
    if not isinstance(doc, dict):
        raise GraphError("graph document must be a JSON object")
    for key in ("nodes", "edges", "pois", "visibility"):
        if not isinstance(doc.get(key), list):
            raise GraphError(f"graph document missing list field {key!r}")
    try:
        nodes = [
            NavNode(
                id=str(rec["id"]),
                pos=LatLon(_as_finite(rec["lat"], f"node {rec.get('id')!r} lat"),
                           _as_finite(rec["lon"], f"node {rec.get('id')!r} lon")),
                headings=tuple(_as_finite(h, f"node {rec.get('id')!r} heading") for h in rec["headings"]),
            )
            for rec in doc["nodes"]
        ]
        edges = [
            NavEdge(
                frm=str(rec["from"]),
                to=str(rec["to"]),
                azimuth=_as_finite(rec["azimuth"], "edge azimuth"),
                length_m=_as_finite(rec["length_m"], "edge length_m"),
            )
            for rec in doc["edges"]
        ]
        pois = [
            Poi(
                id=str(rec["id"]),
                name=str(rec["name"]),
                category=str(rec["category"]),
                descriptors=tuple(str(d) for d in rec["descriptors"]),
                pos=LatLon(_as_finite(rec["lat"], f"poi {rec.get('id')!r} lat"),
                           _as_finite(rec["lon"], f"poi {rec.get('id')!r} lon")),
            )
            for rec in doc["pois"]
        ]
        visibility = [(str(rec["node"]), str(rec["poi"])) for rec in doc["visibility"]]
    except (KeyError, TypeError) as exc:
        raise GraphError(f"malformed graph record: {exc}") from exc
    return NavGraph.build(nodes, edges, pois, visibility)


def load_graph(path: str | Path) -> NavGraph:
    """Load and validate a graph JSON file."""
    raw = Path(path).read_text()
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise GraphError(f"{path}: invalid JSON: {exc}") from exc
    return graph_from_dict(doc)
