# test_geograph.py
import itertools
from collections import deque

import numpy as np
import pytest

from geograph import (
    EdgeClass,
    GeoNode,
    GraphError,
    LengthMode,
    RawEdge,
    betweenness,
    build_graph,
    communities,
    component_labels,
    component_sizes,
    connected_components,
    degree,
    diameter,
    edge_betweenness,
    graph_summary,
    id_key,
    sorted_ids,
)


# ---- Brute-force references ----
def _adjacency(graph):
    adj = {v: set() for v in graph.nodes}
    for e in graph.edges.values():
        adj[e.tail].add(e.head)
        adj[e.head].add(e.tail)
    return adj


def _bfs(adj, s):
    dist = {s: 0}
    queue = deque([s])
    while queue:
        u = queue.popleft()
        for w in adj[u]:
            if w not in dist:
                dist[w] = dist[u] + 1
                queue.append(w)
    return dist


def _shortest_paths(adj, s, t):
    dist = _bfs(adj, s)
    if t not in dist:
        return []

    def back(v):
        if v == s:
            return [[s]]
        return [p + [v] for u in adj[v] if dist.get(u) == dist[v] - 1 for p in back(u)]

    return back(t)


def _brute_betweenness(graph):
    adj = _adjacency(graph)
    node_score = {v: 0.0 for v in graph.nodes}
    pair_score = {}
    for s, t in itertools.combinations(graph.nodes, 2):
        paths = _shortest_paths(adj, s, t)
        if not paths:
            continue
        for p in paths:
            for v in p[1:-1]:
                node_score[v] += 1.0 / len(paths)
            for u, w in zip(p, p[1:]):
                key = frozenset((u, w))
                pair_score[key] = pair_score.get(key, 0.0) + 1.0 / len(paths)
    return node_score, pair_score


def _brute_components(graph):
    adj = _adjacency(graph)
    seen, groups = set(), []
    for v in graph.nodes:
        if v in seen:
            continue
        comp = set(_bfs(adj, v))
        seen |= comp
        groups.append(frozenset(comp))
    return set(groups)


def _girvan_newman_reference(graph, target):
    """Edge removal by brute-force edge betweenness, ties to the lowest edge id."""
    active = {e.id: (e.tail, e.head) for e in graph.edges.values()}

    def adjacency():
        adj = {v: set() for v in graph.nodes}
        for a, b in active.values():
            adj[a].add(b)
            adj[b].add(a)
        return adj

    def partition():
        adj = adjacency()
        seen, groups = set(), set()
        for v in graph.nodes:
            if v not in seen:
                comp = frozenset(_bfs(adj, v))
                seen |= comp
                groups.add(comp)
        return groups

    while len(partition()) < target:
        adj = adjacency()
        pair_score = {}
        for s, t in itertools.combinations(graph.nodes, 2):
            paths = _shortest_paths(adj, s, t)
            for p in paths:
                for u, w in zip(p, p[1:]):
                    key = frozenset((u, w))
                    pair_score[key] = pair_score.get(key, 0.0) + 1.0 / len(paths)
        bundles = {}
        for e, (a, b) in active.items():
            bundles.setdefault(frozenset((a, b)), []).append(e)
        scores = {e: pair_score.get(key, 0.0) / len(members) for key, members in bundles.items() for e in members}
        top = max(scores.values())
        best = min((e for e, s in scores.items() if s >= top - 1e-9 * max(1.0, top)), key=id_key)
        del active[best]
    return partition()


# ---- Construction ----
def test_build_graph_orders_ids_and_lengths():
    g = build_graph(
        [GeoNode("b", 3.0, 4.0), GeoNode(2, 0.0, 0.0), GeoNode("a", 0.0, 4.0)],
        [RawEdge(7, 2, "b"), RawEdge(3, 2, "a", True)],
    )
    assert list(g.nodes) == [2, "a", "b"]
    assert list(g.edges) == [3, 7]
    assert g.edges[7].length == pytest.approx(5.0)
    assert g.edges[3].directed


def test_squared_length_mode():
    g = build_graph([GeoNode(1, 0.0, 0.0), GeoNode(2, 3.0, 4.0)], [RawEdge(1, 1, 2)], LengthMode.SQUARED)
    assert g.edges[1].length == pytest.approx(25.0)


@pytest.mark.parametrize("nodes, edges, message", [
    ([GeoNode(1, 0, 0), GeoNode(1, 1, 1)], [], "duplicate node id"),
    ([GeoNode(1, 0, 0), GeoNode(2, 1, 1)], [RawEdge(1, 1, 2), RawEdge(1, 2, 1)], "duplicate edge id"),
    ([GeoNode(1, 0, 0)], [RawEdge(1, 1, 9)], "dangling"),
    ([GeoNode(1, 0, 0)], [RawEdge(1, 1, 1)], "self-loop"),
    ([GeoNode(1, 0, 0), GeoNode(2, 0, 0)], [RawEdge(1, 1, 2)], "zero length"),
    ([GeoNode(1, float("nan"), 0)], [], "non-finite"),
])
def test_build_graph_rejects_malformed_input(nodes, edges, message):
    with pytest.raises(GraphError, match=message):
        build_graph(nodes, edges)


def test_edge_records_as_mappings_and_tuples():
    g = build_graph(
        [GeoNode(1, 0, 0), GeoNode(2, 1, 0), GeoNode(3, 2, 0)],
        [{"id": 1, "tail": 1, "head": 2, "directed": True}, (2, 2, 3)],
    )
    assert g.edges[1].directed and not g.edges[2].directed


def test_id_key_puts_integers_before_strings():
    assert sorted_ids(["10", 10, 2, "2"]) == [2, 10, "10", "2"]
    assert id_key(3) < id_key("1")


# ---- Degree and incidence ----
def test_incident_edge_classes(mixed_star):
    g = mixed_star
    assert g.incident(1, EdgeClass.UNDIRECTED) == (10,)
    assert g.incident(1, EdgeClass.IN) == (11,)
    assert g.incident(1, EdgeClass.OUT) == (12,)
    assert g.incident(1, EdgeClass.CG) == (10, 11, 12)
    assert g.incident(1, EdgeClass.DIRECTED) == (11, 12)
    assert g.incident(1, EdgeClass.NACH_CHILD) == (10, 12)
    assert degree(g, 5, EdgeClass.CG) == 0
    assert degree(g, 3, EdgeClass.OUT) == 1


def test_unknown_node_query(path3):
    with pytest.raises(GraphError, match="unknown node"):
        degree(path3, 99)


def test_parallel_edges_count_separately_in_degree():
    g = build_graph([GeoNode(1, 0, 0), GeoNode(2, 1, 0)], [RawEdge(1, 1, 2), RawEdge(2, 2, 1)])
    assert degree(g, 1) == 2
    assert edge_betweenness(g) == {1: pytest.approx(0.5), 2: pytest.approx(0.5)}


# ---- Summary on small graphs ----
def test_path_summary(path3):
    s = graph_summary(path3)
    assert s.mean_degree == pytest.approx(4 / 3)
    assert s.n_components == 1
    assert s.diameter == 2
    assert s.degree_distribution == {1: 2, 2: 1}
    assert betweenness(path3) == {1: 0.0, 2: pytest.approx(1.0), 3: 0.0}


def test_isolated_node_forms_its_own_component(mixed_star):
    labels = component_labels(mixed_star)
    assert labels[5] == 5
    assert connected_components(mixed_star) == [(1, 2, 3, 4), (5,)]
    assert component_sizes(mixed_star)[1] == 4
    assert graph_summary(mixed_star).n_isolated == 1


def test_diameter_is_max_over_components():
    g = build_graph(
        [GeoNode(i, float(i), 0.0) for i in range(1, 6)],
        [RawEdge(1, 1, 2), RawEdge(2, 2, 3), RawEdge(3, 4, 5)],
    )
    assert diameter(g) == 2


def test_empty_graph_summary():
    s = graph_summary(build_graph([], []))
    assert s.n_nodes == 0 and s.mean_degree == 0.0 and s.diameter == 0


# ---- Communities ----
def test_two_cliques_split_at_the_bridge(two_cliques):
    assert communities(two_cliques, 2) == [(1, 2, 3, 4), (5, 6, 7, 8)]


def test_community_target_equal_to_current_components(two_cliques):
    assert communities(two_cliques, 1) == [tuple(range(1, 9))]


def test_full_fragmentation(path3):
    assert communities(path3) == [(1,), (2,), (3,)]


def test_unreachable_community_target(path3):
    with pytest.raises(GraphError, match="unreachable"):
        communities(path3, 4)


# ---- Randomised agreement with brute force ----
def test_centralities_match_brute_force(random_graph_factory):
    rng = np.random.default_rng(20240611)
    for _ in range(200):
        g = random_graph_factory(rng)
        node_ref, pair_ref = _brute_betweenness(g)
        got = betweenness(g)
        for v in g.nodes:
            assert got[v] == pytest.approx(node_ref[v], abs=1e-9)

        edge_scores = edge_betweenness(g)
        for pair, members in g.pair_members.items():
            total = sum(edge_scores[e] for e in members)
            assert total == pytest.approx(pair_ref.get(pair, 0.0), abs=1e-9)
            assert all(edge_scores[e] == pytest.approx(edge_scores[members[0]]) for e in members)

        assert {frozenset(c) for c in connected_components(g)} == _brute_components(g)

        adj = _adjacency(g)
        longest = max((max(_bfs(adj, v).values()) for v in g.nodes), default=0)
        assert diameter(g) == longest


def test_communities_partition_nodes(random_graph_factory):
    rng = np.random.default_rng(7)
    for _ in range(30):
        g = random_graph_factory(rng, max_nodes=9)
        start = len(connected_components(g))
        for target in range(start, len(g.nodes) + 1):
            groups = communities(g, target)
            assert len(groups) == target
            assert sorted_ids(v for grp in groups for v in grp) == list(g.nodes)


def test_communities_match_brute_force(random_graph_factory):
    rng = np.random.default_rng(17)
    for _ in range(40):
        g = random_graph_factory(rng, max_nodes=8)
        start = len(connected_components(g))
        for target in range(start, len(g.nodes) + 1):
            got = {frozenset(grp) for grp in communities(g, target)}
            assert got == _girvan_newman_reference(g, target)


def test_degree_sums_match_edge_counts(random_graph_factory):
    rng = np.random.default_rng(18)
    for _ in range(100):
        g = random_graph_factory(rng)
        n_directed = sum(e.directed for e in g.edges.values())
        n_undirected = len(g.edges) - n_directed
        assert sum(degree(g, v, EdgeClass.UNDIRECTED) for v in g.nodes) == 2 * n_undirected
        assert sum(degree(g, v, EdgeClass.IN) for v in g.nodes) == n_directed
        assert sum(degree(g, v, EdgeClass.OUT) for v in g.nodes) == n_directed


def test_components_ignore_edge_direction(random_graph_factory):
    rng = np.random.default_rng(19)
    for _ in range(100):
        g = random_graph_factory(rng)
        flipped = build_graph(
            list(g.nodes.values()),
            [RawEdge(e.id, e.head, e.tail, e.directed) for e in g.edges.values()],
        )
        assert {frozenset(c) for c in connected_components(flipped)} == {frozenset(c) for c in connected_components(g)}
        assert betweenness(flipped) == pytest.approx(betweenness(g))


def test_star_centre_carries_every_path():
    g = build_graph(
        [GeoNode(1, 0, 0), GeoNode(2, 1, 0), GeoNode(3, 0, 1), GeoNode(4, -1, 0)],
        [RawEdge(1, 1, 2), RawEdge(2, 1, 3), RawEdge(3, 1, 4)],
    )
    assert betweenness(g) == pytest.approx({1: 3.0, 2: 0.0, 3: 0.0, 4: 0.0})


def test_complete_graph_has_no_betweenness():
    nodes = [GeoNode(1, 0, 0), GeoNode(2, 1, 0), GeoNode(3, 0, 1), GeoNode(4, 1, 1)]
    edges = [RawEdge(k, a, b) for k, (a, b) in enumerate(itertools.combinations(range(1, 5), 2), start=1)]
    assert all(score == 0.0 for score in betweenness(build_graph(nodes, edges)).values())
