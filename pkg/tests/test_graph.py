import math
import random

import pytest

from urbannav.geo import LatLon, bearing_deg, geodesic_m, offset
from urbannav.graph import (
    GraphError,
    NavEdge,
    NavGraph,
    NavNode,
    Poi,
    graph_from_dict,
    graph_to_dict,
    load_graph,
    save_graph,
)

ORIGIN = LatLon(40.0, -74.0)


def _line_graph(n: int = 3, spacing: float = 20.0) -> NavGraph:
    """n nodes in a west-east line with two-way edges."""
    positions = [offset(ORIGIN, 0.0, i * spacing) for i in range(n)]
    nodes = []
    edges = []
    for i, pos in enumerate(positions):
        headings = set()
        for j in (i - 1, i + 1):
            if 0 <= j < n:
                az = bearing_deg(pos, positions[j])
                headings.add(az)
                edges.append(NavEdge(f"v{i}", f"v{j}", az, geodesic_m(pos, positions[j])))
        nodes.append(NavNode(f"v{i}", pos, tuple(sorted(headings))))
    return NavGraph.build(nodes, edges, [], [])


class TestBuildValidation:
    def test_duplicate_node_id_rejected(self):
        nodes = [NavNode("a", ORIGIN, ()), NavNode("a", offset(ORIGIN, 20, 0), ())]
        with pytest.raises(GraphError, match="duplicate node id"):
            NavGraph.build(nodes, [], [], [])

    def test_dangling_edge_names_offender(self):
        node = NavNode("a", ORIGIN, (0.0,))
        edge = NavEdge("a", "ghost", 0.0, 20.0)
        with pytest.raises(GraphError, match="ghost"):
            NavGraph.build([node], [edge], [], [])

    def test_unsorted_headings_rejected(self):
        node = NavNode("a", ORIGIN, (90.0, 0.0))
        with pytest.raises(GraphError, match="sorted"):
            NavGraph.build([node], [], [], [])

    def test_azimuth_must_match_a_heading(self):
        b_pos = offset(ORIGIN, 0.0, 20.0)
        nodes = [NavNode("a", ORIGIN, (0.0,)), NavNode("b", b_pos, (270.0,))]
        az = bearing_deg(ORIGIN, b_pos)  # ~90, but only heading 0 exists at a
        edges = [
            NavEdge("a", "b", az, 20.0),
            NavEdge("b", "a", bearing_deg(b_pos, ORIGIN), 20.0),
        ]
        with pytest.raises(GraphError, match="matches no heading"):
            NavGraph.build(nodes, edges, [], [])

    def test_length_outside_five_percent_rejected(self):
        b_pos = offset(ORIGIN, 0.0, 100.0)
        az_ab = bearing_deg(ORIGIN, b_pos)
        az_ba = bearing_deg(b_pos, ORIGIN)
        nodes = [NavNode("a", ORIGIN, (az_ab,)), NavNode("b", b_pos, (az_ba,))]
        edges = [NavEdge("a", "b", az_ab, 120.0), NavEdge("b", "a", az_ba, 100.0)]
        with pytest.raises(GraphError, match="deviates"):
            NavGraph.build(nodes, edges, [], [])

    def test_missing_reverse_edge_rejected(self):
        b_pos = offset(ORIGIN, 0.0, 20.0)
        az = bearing_deg(ORIGIN, b_pos)
        nodes = [NavNode("a", ORIGIN, (az,)), NavNode("b", b_pos, ())]
        with pytest.raises(GraphError, match="no reverse edge"):
            NavGraph.build(nodes, [NavEdge("a", "b", az, 20.0)], [], [])

    def test_visibility_beyond_radius_rejected(self):
        node = NavNode("a", ORIGIN, ())
        poi = Poi("p", "Far Cafe", "Cafe", (), offset(ORIGIN, 0.0, 80.0))
        with pytest.raises(GraphError, match="visibility"):
            NavGraph.build([node], [], [poi], [("a", "p")])

    def test_visibility_at_fifty_meters_accepted(self):
        node = NavNode("a", ORIGIN, ())
        poi = Poi("p", "Near Cafe", "Cafe", (), offset(ORIGIN, 0.0, 49.9))
        g = NavGraph.build([node], [], [poi], [("a", "p")])
        assert [p.id for p in g.visible_pois("a")] == ["p"]


class TestQueries:
    def test_neighbors_ordered_by_azimuth(self, city_graph):
        for node_id in list(city_graph.nodes)[:20]:
            azimuths = [e.azimuth for e, _ in city_graph.neighbors(node_id)]
            assert azimuths == sorted(azimuths)

    def test_unknown_node_raises(self, city_graph):
        with pytest.raises(KeyError):
            city_graph.neighbors("nope")

    def test_hop_distances_match_line_graph(self):
        g = _line_graph(5)
        dist = g.hop_distances_from("v0")
        assert dist == {"v0": 0, "v1": 1, "v2": 2, "v3": 3, "v4": 4}

    def test_topo_distance_unreachable(self):
        a = NavNode("a", ORIGIN, ())
        b = NavNode("b", offset(ORIGIN, 500, 0), ())
        g = NavGraph.build([a, b], [], [], [])
        assert g.topo_distance("a", "b") == math.inf

    def test_nodes_within_radius_matches_brute_force(self, city_graph):
        rng = random.Random(5)
        nodes = list(city_graph.nodes.values())
        for _ in range(100):
            center = rng.choice(nodes).pos
            radius = rng.uniform(10.0, 200.0)
            fast = {n.id for n in city_graph.nodes_within_radius(center, radius)}
            brute = {n.id for n in nodes if geodesic_m(center, n.pos) <= radius}
            assert fast == brute

    def test_nodes_within_radius_rejects_non_positive(self, city_graph):
        with pytest.raises(ValueError):
            city_graph.nodes_within_radius(ORIGIN, 0.0)


class TestShortestPath:
    def test_hops_path_on_grid_matches_bfs(self, city_graph):
        rng = random.Random(11)
        ids = sorted(city_graph.nodes)
        for _ in range(25):
            a, b = rng.choice(ids), rng.choice(ids)
            path = city_graph.shortest_path(a, b, weight="hops")
            assert path is not None
            assert path[0] == a and path[-1] == b
            assert len(path) - 1 == city_graph.topo_distance(a, b)
            for u, v in zip(path, path[1:]):
                assert any(e.to == v for e, _ in city_graph.neighbors(u))

    def test_meters_path_total_not_longer_than_hops_path(self, city_graph):
        ids = sorted(city_graph.nodes)
        a, b = ids[0], ids[-1]

        def length(path):
            total = 0.0
            for u, v in zip(path, path[1:]):
                total += next(e for e, _ in city_graph.neighbors(u) if e.to == v).length_m
            return total

        hops_path = city_graph.shortest_path(a, b, weight="hops")
        meters_path = city_graph.shortest_path(a, b, weight="meters")
        assert length(meters_path) <= length(hops_path) + 1e-6

    def test_tie_break_is_lexicographic(self):
        # 2x2 block: two 2-hop routes from v00 to v11; path must pick the
        # lexicographically smaller intermediate node.
        p = {
            "v00": ORIGIN,
            "v01": offset(ORIGIN, 0.0, 20.0),
            "v10": offset(ORIGIN, 20.0, 0.0),
            "v11": offset(ORIGIN, 20.0, 20.0),
        }
        pairs = [("v00", "v01"), ("v00", "v10"), ("v01", "v11"), ("v10", "v11")]
        edges = []
        headings = {k: set() for k in p}
        for a, b in pairs:
            for frm, to in ((a, b), (b, a)):
                az = bearing_deg(p[frm], p[to])
                edges.append(NavEdge(frm, to, az, geodesic_m(p[frm], p[to])))
                headings[frm].add(az)
        nodes = [NavNode(k, p[k], tuple(sorted(headings[k]))) for k in p]
        g = NavGraph.build(nodes, edges, [], [])
        assert g.shortest_path("v00", "v11", weight="hops") == ["v00", "v01", "v11"]

    def test_unreachable_returns_none(self):
        a = NavNode("a", ORIGIN, ())
        b = NavNode("b", offset(ORIGIN, 500, 0), ())
        g = NavGraph.build([a, b], [], [], [])
        assert g.shortest_path("a", "b") is None

    def test_same_node_path(self, city_graph):
        nid = sorted(city_graph.nodes)[0]
        assert city_graph.shortest_path(nid, nid) == [nid]


class TestSerialization:
    def test_round_trip(self, city_graph, tmp_path):
        path = tmp_path / "g.json"
        save_graph(city_graph, path)
        loaded = load_graph(path)
        assert graph_to_dict(loaded) == graph_to_dict(city_graph)

    def test_invalid_json_raises_graph_error(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(GraphError, match="invalid JSON"):
            load_graph(path)

    def test_missing_field_raises(self):
        with pytest.raises(GraphError):
            graph_from_dict({"nodes": [], "edges": [], "pois": []})

    def test_non_finite_number_rejected(self):
        doc = {
            "nodes": [{"id": "a", "lat": float("nan"), "lon": 0.0, "headings": []}],
            "edges": [],
            "pois": [],
            "visibility": [],
        }
        with pytest.raises(GraphError):
            graph_from_dict(doc)
