"""Deterministic synthetic city generator.

Produces a street grid (optionally jittered), POIs drawn from a category
catalog, visibility links, and per-heading textual observations that stand
in for street-view imagery. Output is a pure function of the spec seed.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from pathlib import Path

from .geo import LatLon, bearing_deg, geodesic_m, offset, signed_delta_deg
from .graph import VISIBILITY_RADIUS_M, NavEdge, NavGraph, NavNode, Poi

# Half-angle of the cone a heading "sees"; overlaps adjacent 90-degree views.
VIEW_CONE_HALF_ANGLE_DEG = 60.0
SALIENCE_FLOOR = 0.1


@dataclass(frozen=True)
class CategorySpec:
    category: str
    names: tuple[str, ...]
    descriptors: tuple[str, ...] = ()


DEFAULT_CATALOG: tuple[CategorySpec, ...] = (
    CategorySpec("Cafe", ("Corner Cafe", "Bean House", "Morning Brew"), ("Cozy", "Outdoor seating")),
    CategorySpec("Coffee shop", ("Starbucks", "Roast Lab"), ("Cozy",)),
    CategorySpec("Restaurant", ("Golden Fork", "Noodle Bar", "Trattoria Sole"),
                 ("Romantic", "Upscale", "Family-friendly", "Outdoor seating",
                  "Wheelchair accessible entrance")),
    CategorySpec("Fast food restaurant", ("McDonald's", "KFC"), ("Family-friendly",)),
    CategorySpec("Convenience store", ("7-Eleven", "Quick Mart"), ()),
    CategorySpec("Supermarket", ("Fresh Fields", "City Grocer"), ("Wheelchair accessible entrance",)),
    CategorySpec("Bank", ("Chase Bank", "First National Bank"), ("Wheelchair accessible entrance",)),
    CategorySpec("Subway station", ("Central Station", "Elm Street Station"), ()),
    CategorySpec("Bus stop", ("Main St Bus Stop", "Park Ave Bus Stop"), ()),
    CategorySpec("Movie theater", ("Grand Cinema", "Odeon Screens"), ()),
    CategorySpec("Park", ("Hyde Park", "Riverside Park"), ("Romantic",)),
    CategorySpec("Pharmacy", ("Green Cross Pharmacy", "Walgreens"), ("Wheelchair accessible entrance",)),
    CategorySpec("Public bathroom", ("Public Restroom",), ("Wheelchair accessible entrance",)),
    CategorySpec("Book store", ("Page One Books",), ("Cozy",)),
)


@dataclass(frozen=True)
class CitySpec:
    layout: str = "grid"  # grid | irregular
    rows: int = 10
    cols: int = 10
    node_count: int = 0  # irregular layout only; 0 means rows*cols
    jitter: float = 0.0  # fraction of spacing, irregular layout only
    spacing_m: float = 20.0
    poi_density: float = 0.0  # POIs per node
    catalog: tuple[CategorySpec, ...] = DEFAULT_CATALOG
    seed: int = 0
    origin: LatLon = field(default_factory=lambda: LatLon(40.0, -74.0))

    def __post_init__(self) -> None:
        if self.layout not in ("grid", "irregular"):
            raise ValueError(f"unknown layout {self.layout!r}")
        if self.spacing_m <= 0:
            raise ValueError("spacing must be positive")
        if not 0.0 <= self.jitter < 0.5:
            raise ValueError("jitter must lie in [0, 0.5)")
        if self.rows < 1 or self.cols < 1:
            raise ValueError("grid needs at least one row and column")
        if self.poi_density < 0:
            raise ValueError("poi_density must be non-negative")


@dataclass(frozen=True)
class ObservationText:
    node: str
    heading: float
    text: str
    tags: tuple[tuple[str, float], ...]  # (poi id, salience)


class ObservationTable:
    """Lookup of per-(node, heading) observations."""

    def __init__(self, observations: list[ObservationText]):
        self._by_key = {(o.node, round(o.heading, 6)): o for o in observations}
        self.observations = observations

    def lookup(self, node: str, heading: float) -> ObservationText:
        try:
            return self._by_key[(node, round(heading, 6))]
        except KeyError:
            raise KeyError(f"no observation for node {node!r} heading {heading}") from None

    def to_dict(self) -> dict:
        return {
            "observations": [
                {
                    "node": o.node,
                    "heading": o.heading,
                    "text": o.text,
                    "tags": [{"poi": pid, "salience": sal} for pid, sal in o.tags],
                }
                for o in self.observations
            ]
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True))

    @classmethod
    def load(cls, path: str | Path) -> "ObservationTable":
        doc = json.loads(Path(path).read_text())
        obs = [
            ObservationText(
                node=str(rec["node"]),
                heading=float(rec["heading"]),
                text=str(rec["text"]),
                tags=tuple((str(t["poi"]), float(t["salience"])) for t in rec["tags"]),
            )
            for rec in doc["observations"]
        ]
        return cls(obs)


def salience(distance_m: float) -> float:
    return max(SALIENCE_FLOOR, min(1.0, 1.0 - distance_m / VISIBILITY_RADIUS_M))


def describe_view(g: NavGraph, node_id: str, heading: float) -> ObservationText:
    """Deterministic textual view from node_id facing heading.

    Includes every linked POI whose bearing lies within the view cone;
    salience falls off linearly with distance.
    """
    node = g.nodes[node_id]
    if not any(abs(h - heading) < 1e-9 for h in node.headings):
        raise ValueError(f"heading {heading} is not navigable at node {node_id!r}")
    tagged = []
    for poi in g.visible_pois(node_id):
        dist = geodesic_m(node.pos, poi.pos)
        delta = signed_delta_deg(heading, bearing_deg(node.pos, poi.pos))
        if abs(delta) <= VIEW_CONE_HALF_ANGLE_DEG:
            tagged.append((poi, dist, delta))
    tagged.sort(key=lambda t: (t[1], t[0].id))
    parts = [f"Street view from {node_id} facing {heading:.1f} degrees."]
    if not tagged:
        parts.append("An ordinary street with buildings on both sides; no notable places in sight.")
    for poi, dist, delta in tagged:
        side = "ahead" if abs(delta) <= 20 else ("to the right" if delta > 0 else "to the left")
        desc = f", {', '.join(d.lower() for d in poi.descriptors)}" if poi.descriptors else ""
        parts.append(f"About {dist:.0f} m {side}: {poi.name} ({poi.category.lower()}{desc}).")
    return ObservationText(
        node=node_id,
        heading=heading,
        text=" ".join(parts),
        tags=tuple((poi.id, salience(dist)) for poi, dist, _ in tagged),
    )


def _grid_positions(spec: CitySpec, rng: random.Random) -> dict[tuple[int, int], LatLon]:
    if spec.layout == "grid":
        rows, cols, jitter = spec.rows, spec.cols, 0.0
        count = rows * cols
    else:
        count = spec.node_count or spec.rows * spec.cols
        cols = max(1, round(count ** 0.5))
        rows = (count + cols - 1) // cols
        jitter = spec.jitter
    positions: dict[tuple[int, int], LatLon] = {}
    placed = 0
    for r in range(rows):
        for c in range(cols):
            if placed >= count:
                break
            dn = (rng.uniform(-jitter, jitter) if jitter else 0.0) * spec.spacing_m
            de = (rng.uniform(-jitter, jitter) if jitter else 0.0) * spec.spacing_m
            positions[(r, c)] = offset(spec.origin, r * spec.spacing_m + dn, c * spec.spacing_m + de)
            placed += 1
    return positions


def _node_id(r: int, c: int) -> str:
    return f"n{r:03d}_{c:03d}"


def generate_city(spec: CitySpec) -> tuple[NavGraph, ObservationTable]:
    """Build the synthetic city; identical (spec, seed) gives identical output."""
    rng = random.Random(spec.seed)
    positions = _grid_positions(spec, rng)

    edges: list[NavEdge] = []
    headings: dict[tuple[int, int], set[float]] = {k: set() for k in positions}
    for (r, c), pos in positions.items():
        for nr, nc in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
            if (nr, nc) not in positions:
                continue
            az = bearing_deg(pos, positions[(nr, nc)])
            edges.append(NavEdge(_node_id(r, c), _node_id(nr, nc), az, geodesic_m(pos, positions[(nr, nc)])))
            headings[(r, c)].add(az)
    nodes = [
        NavNode(_node_id(r, c), positions[(r, c)], tuple(sorted(headings[(r, c)])))
        for (r, c) in sorted(positions)
    ]

    n_pois = round(spec.poi_density * len(nodes))
    node_ids = [n.id for n in nodes]
    node_by_id = {n.id: n for n in nodes}
    pois: list[Poi] = []
    for i in range(n_pois):
        anchor = node_by_id[rng.choice(node_ids)]
        dist = rng.uniform(5.0, VISIBILITY_RADIUS_M - 5.0)
        brg = rng.uniform(0.0, 360.0)
        pos = offset(anchor.pos, dist * math.cos(math.radians(brg)), dist * math.sin(math.radians(brg)))
        cat = rng.choice(spec.catalog)
        name = f"{rng.choice(cat.names)} {i}"
        descriptors = tuple(d for d in cat.descriptors if rng.random() < 0.5)
        pois.append(Poi(f"p{i:04d}", name, cat.category, descriptors, pos))

    visibility = [
        (node.id, poi.id)
        for node in nodes
        for poi in pois
        if geodesic_m(node.pos, poi.pos) <= VISIBILITY_RADIUS_M
    ]

    g = NavGraph.build(nodes, edges, pois, visibility)
    observations = [
        describe_view(g, node.id, heading) for node in nodes for heading in node.headings
    ]
    return g, ObservationTable(observations)
