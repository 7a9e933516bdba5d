# geograph.py
"""
Geo-referenced network model.

Nodes carry fixed planar coordinates, edges are the intervals spanned between
two nodes (undirected or directed). On top of the graph we expose the
structural statistics that enter the regression as covariates: degree
variants, betweenness, component membership, diameter and Girvan-Newman
communities.
"""
import math
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import Dict, Hashable, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import networkx as nx

NodeId = Hashable
EdgeId = Hashable

# relative slack when comparing floating betweenness scores for ties
_SCORE_TIE_RTOL = 1e-9


class GraphError(ValueError):
    """Malformed graph input or an invalid graph query."""


class EdgeKind(str, Enum):
    UNDIRECTED = "undirected"
    DIRECTED = "directed"


class LengthMode(str, Enum):
    EUCLIDEAN = "euclidean"
    SQUARED = "squared"


class EdgeClass(str, Enum):
    """Incident-edge classes of a node (used by degree and nodewise intensities)."""
    UNDIRECTED = "undirected"   # nach(v)
    IN = "in"                   # pa(v)
    OUT = "out"                 # child(v)
    CG = "cg"                   # nach ∪ pa ∪ child
    DIRECTED = "directed"       # pa ∪ child
    NACH_CHILD = "nach_child"   # nach ∪ child


def id_key(value: Hashable) -> Tuple[int, Union[int, str]]:
    """
    Sort key for node / edge ids: integers numerically, then strings.
    "Lowest id" everywhere in this package means lowest under this key.
    """
    if isinstance(value, bool):
        return (1, str(value))
    if isinstance(value, int):
        return (0, value)
    return (1, str(value))


def sorted_ids(ids: Iterable[Hashable]) -> List[Hashable]:
    return sorted(ids, key=id_key)


# -----------------------------
# Domain types
# -----------------------------
@dataclass(frozen=True)
class GeoNode:
    id: NodeId
    x: float
    y: float


@dataclass(frozen=True)
class GeoEdge:
    id: EdgeId
    tail: NodeId
    head: NodeId
    kind: EdgeKind
    length: float

    @property
    def directed(self) -> bool:
        return self.kind == EdgeKind.DIRECTED


@dataclass(frozen=True)
class RawEdge:
    """Edge record before lengths and adjacency are computed."""
    id: EdgeId
    tail: NodeId
    head: NodeId
    directed: bool = False


@dataclass(frozen=True)
class GeoGraph:
    nodes: Dict[NodeId, GeoNode]
    edges: Dict[EdgeId, GeoEdge]
    nach: Dict[NodeId, Tuple[EdgeId, ...]]
    pa: Dict[NodeId, Tuple[EdgeId, ...]]
    child: Dict[NodeId, Tuple[EdgeId, ...]]
    length_mode: LengthMode = LengthMode.EUCLIDEAN

    def node_ids(self) -> List[NodeId]:
        return list(self.nodes)

    def edge_ids(self) -> List[EdgeId]:
        return list(self.edges)

    def has_node(self, v: NodeId) -> bool:
        return v in self.nodes

    def require_node(self, v: NodeId) -> GeoNode:
        try:
            return self.nodes[v]
        except KeyError:
            raise GraphError(f"unknown node id: {v!r}") from None

    def require_edge(self, e: EdgeId) -> GeoEdge:
        try:
            return self.edges[e]
        except KeyError:
            raise GraphError(f"unknown edge id: {e!r}") from None

    def incident(self, v: NodeId, mode: Union[EdgeClass, str] = EdgeClass.UNDIRECTED) -> Tuple[EdgeId, ...]:
        """Edge ids of the requested incident-edge class of ``v`` (sorted by id)."""
        self.require_node(v)
        mode = EdgeClass(mode)
        if mode == EdgeClass.UNDIRECTED:
            return self.nach[v]
        if mode == EdgeClass.IN:
            return self.pa[v]
        if mode == EdgeClass.OUT:
            return self.child[v]
        if mode == EdgeClass.CG:
            members = set(self.nach[v]) | set(self.pa[v]) | set(self.child[v])
        elif mode == EdgeClass.DIRECTED:
            members = set(self.pa[v]) | set(self.child[v])
        else:
            members = set(self.nach[v]) | set(self.child[v])
        return tuple(sorted_ids(members))

    def other_end(self, e: EdgeId, v: NodeId) -> NodeId:
        edge = self.require_edge(e)
        return edge.head if edge.tail == v else edge.tail

    def bounding_diagonal(self) -> float:
        if not self.nodes:
            return 0.0
        xs = [n.x for n in self.nodes.values()]
        ys = [n.y for n in self.nodes.values()]
        return math.hypot(max(xs) - min(xs), max(ys) - min(ys))

    @cached_property
    def simple_graph(self) -> nx.Graph:
        """Undirected simple projection (direction ignored, parallel edges merged)."""
        g = nx.Graph()
        g.add_nodes_from(self.nodes)
        for edge in self.edges.values():
            g.add_edge(edge.tail, edge.head)
        return g

    @cached_property
    def pair_members(self) -> Dict[frozenset, Tuple[EdgeId, ...]]:
        """Edge ids grouped by unordered endpoint pair."""
        groups: Dict[frozenset, List[EdgeId]] = {}
        for edge in self.edges.values():
            groups.setdefault(frozenset((edge.tail, edge.head)), []).append(edge.id)
        return {pair: tuple(sorted_ids(ids)) for pair, ids in groups.items()}


# -----------------------------
# Construction
# -----------------------------
def _as_raw_edge(record: Union[RawEdge, Mapping, Sequence]) -> RawEdge:
    if isinstance(record, RawEdge):
        return record
    if isinstance(record, Mapping):
        try:
            return RawEdge(
                id=record["id"],
                tail=record["tail"],
                head=record["head"],
                directed=bool(record.get("directed", False)),
            )
        except KeyError as e:
            raise GraphError(f"edge record missing field {e.args[0]!r}: {dict(record)}") from None
    if len(record) == 3:
        return RawEdge(record[0], record[1], record[2], False)
    if len(record) == 4:
        return RawEdge(record[0], record[1], record[2], bool(record[3]))
    raise GraphError(f"cannot interpret edge record: {record!r}")


def edge_length(a: GeoNode, b: GeoNode, mode: LengthMode = LengthMode.EUCLIDEAN) -> float:
    dist = math.hypot(b.x - a.x, b.y - a.y)
    return dist * dist if LengthMode(mode) == LengthMode.SQUARED else dist


def build_graph(
    nodes: Sequence[GeoNode],
    edges: Sequence[Union[RawEdge, Mapping, Sequence]],
    length_mode: Union[LengthMode, str] = LengthMode.EUCLIDEAN,
) -> GeoGraph:
    """
    Validate nodes and raw edges and build an immutable GeoGraph.

    Raises GraphError on duplicate ids, non-finite coordinates, dangling node
    references, self-loops and coincident endpoints (zero length).
    """
    length_mode = LengthMode(length_mode)

    node_map: Dict[NodeId, GeoNode] = {}
    for node in nodes:
        if node.id in node_map:
            raise GraphError(f"duplicate node id: {node.id!r}")
        if not (math.isfinite(node.x) and math.isfinite(node.y)):
            raise GraphError(f"non-finite coordinates for node {node.id!r}")
        node_map[node.id] = node
    node_map = {k: node_map[k] for k in sorted_ids(node_map)}

    edge_map: Dict[EdgeId, GeoEdge] = {}
    nach: Dict[NodeId, List[EdgeId]] = {v: [] for v in node_map}
    pa: Dict[NodeId, List[EdgeId]] = {v: [] for v in node_map}
    child: Dict[NodeId, List[EdgeId]] = {v: [] for v in node_map}

    for record in edges:
        raw = _as_raw_edge(record)
        if raw.id in edge_map:
            raise GraphError(f"duplicate edge id: {raw.id!r}")
        for end in (raw.tail, raw.head):
            if end not in node_map:
                raise GraphError(f"edge {raw.id!r} references unknown node {end!r} (dangling reference)")
        if raw.tail == raw.head:
            raise GraphError(f"edge {raw.id!r} is a self-loop on node {raw.tail!r}")
        length = edge_length(node_map[raw.tail], node_map[raw.head], length_mode)
        if not length > 0:
            raise GraphError(f"edge {raw.id!r} has coincident endpoints (zero length)")

        kind = EdgeKind.DIRECTED if raw.directed else EdgeKind.UNDIRECTED
        edge_map[raw.id] = GeoEdge(raw.id, raw.tail, raw.head, kind, length)
        if kind == EdgeKind.DIRECTED:
            child[raw.tail].append(raw.id)
            pa[raw.head].append(raw.id)
        else:
            nach[raw.tail].append(raw.id)
            nach[raw.head].append(raw.id)

    edge_map = {k: edge_map[k] for k in sorted_ids(edge_map)}

    def freeze(index: Dict[NodeId, List[EdgeId]]) -> Dict[NodeId, Tuple[EdgeId, ...]]:
        return {v: tuple(sorted_ids(ids)) for v, ids in index.items()}

    return GeoGraph(
        nodes=node_map,
        edges=edge_map,
        nach=freeze(nach),
        pa=freeze(pa),
        child=freeze(child),
        length_mode=length_mode,
    )


# -----------------------------
# Degree and reachability
# -----------------------------
def degree(graph: GeoGraph, v: NodeId, mode: Union[EdgeClass, str] = EdgeClass.UNDIRECTED) -> int:
    return len(graph.incident(v, mode))


def component_labels(graph: GeoGraph) -> Dict[NodeId, NodeId]:
    """node id -> label of its component (the lowest node id it contains)."""
    labels: Dict[NodeId, NodeId] = {}
    for members in nx.connected_components(graph.simple_graph):
        label = min(members, key=id_key)
        for v in members:
            labels[v] = label
    return {v: labels[v] for v in graph.nodes}


def connected_components(graph: GeoGraph) -> List[Tuple[NodeId, ...]]:
    """Partition of node ids by reachability, ignoring edge direction."""
    groups: Dict[NodeId, List[NodeId]] = {}
    for v, label in component_labels(graph).items():
        groups.setdefault(label, []).append(v)
    return [tuple(sorted_ids(groups[label])) for label in sorted_ids(groups)]


def component_sizes(graph: GeoGraph) -> Dict[NodeId, int]:
    sizes: Dict[NodeId, int] = {}
    for members in connected_components(graph):
        for v in members:
            sizes[v] = len(members)
    return sizes


# -----------------------------
# Centralities (hop-count shortest paths)
# -----------------------------
def betweenness(graph: GeoGraph) -> Dict[NodeId, float]:
    """
    Unnormalised node betweenness: for every unordered pair (s, t) with
    s != v != t, the fraction of shortest s-t paths running through v.
    """
    scores = nx.betweenness_centrality(graph.simple_graph, normalized=False)
    return {v: float(scores.get(v, 0.0)) for v in graph.nodes}


def _pair_scores(g: nx.Graph) -> Dict[frozenset, float]:
    raw = nx.edge_betweenness_centrality(g, normalized=False)
    return {frozenset(pair): float(score) for pair, score in raw.items()}


def _split_to_edges(pair_scores: Dict[frozenset, float], pair_members: Mapping[frozenset, Sequence[EdgeId]]) -> Dict[EdgeId, float]:
    # a bundle of parallel edges is one hop; its score is shared equally
    scores: Dict[EdgeId, float] = {}
    for pair, members in pair_members.items():
        if not members:
            continue
        share = pair_scores.get(pair, 0.0) / len(members)
        for e in members:
            scores[e] = share
    return scores


def edge_betweenness(graph: GeoGraph) -> Dict[EdgeId, float]:
    scores = _split_to_edges(_pair_scores(graph.simple_graph), graph.pair_members)
    return {e: scores.get(e, 0.0) for e in graph.edges}


def component_diameters(graph: GeoGraph) -> Dict[NodeId, int]:
    """component label -> longest hop-count shortest path inside that component."""
    g = graph.simple_graph
    out: Dict[NodeId, int] = {}
    for members in connected_components(graph):
        if len(members) == 1:
            out[members[0]] = 0
            continue
        ecc = nx.eccentricity(g.subgraph(members))
        out[members[0]] = int(max(ecc.values()))
    return out


def diameter(graph: GeoGraph) -> int:
    per_component = component_diameters(graph)
    return max(per_component.values(), default=0)


# -----------------------------
# Girvan-Newman communities
# -----------------------------
def communities(graph: GeoGraph, target: Optional[int] = None) -> List[Tuple[NodeId, ...]]:
    """
    Girvan-Newman: repeatedly recompute edge betweenness on the remaining
    edges and drop the single highest-scoring edge (ties: lowest edge id)
    until ``target`` components exist. ``target=None`` runs to full
    fragmentation (every node its own group).
    """
    n_nodes = len(graph.nodes)
    current = nx.number_connected_components(graph.simple_graph) if n_nodes else 0
    if target is None:
        target = n_nodes
    if target > n_nodes:
        raise GraphError(f"unreachable community target {target}: graph has only {n_nodes} nodes")
    if target < current:
        raise GraphError(f"community target {target} is below the current component count {current}")

    active: Dict[EdgeId, GeoEdge] = dict(graph.edges)
    work = nx.Graph()
    work.add_nodes_from(graph.nodes)
    for edge in active.values():
        work.add_edge(edge.tail, edge.head)

    while nx.number_connected_components(work) < target:
        members: Dict[frozenset, List[EdgeId]] = {}
        for edge in active.values():
            members.setdefault(frozenset((edge.tail, edge.head)), []).append(edge.id)
        scores = _split_to_edges(_pair_scores(work), members)

        top = max(scores.values())
        slack = _SCORE_TIE_RTOL * max(1.0, abs(top))
        best = min((e for e, s in scores.items() if s >= top - slack), key=id_key)

        removed = active.pop(best)
        pair = frozenset((removed.tail, removed.head))
        if len(members[pair]) == 1:
            work.remove_edge(removed.tail, removed.head)

    groups = [tuple(sorted_ids(c)) for c in nx.connected_components(work)]
    return sorted(groups, key=lambda grp: id_key(grp[0]))


# -----------------------------
# Descriptive summary
# -----------------------------
@dataclass(frozen=True)
class GraphSummary:
    n_nodes: int
    n_edges: int
    n_undirected: int
    n_directed: int
    degree_distribution: Dict[int, int]
    mean_degree: float
    n_components: int
    diameter: int
    mean_betweenness: float
    max_betweenness: float
    n_isolated: int
    n_communities: Optional[int] = None

    def as_rows(self) -> List[Tuple[str, object]]:
        rows: List[Tuple[str, object]] = [
            ("nodes", self.n_nodes),
            ("edges", self.n_edges),
            ("undirected_edges", self.n_undirected),
            ("directed_edges", self.n_directed),
            ("mean_degree", self.mean_degree),
            ("components", self.n_components),
            ("diameter", self.diameter),
            ("mean_betweenness", self.mean_betweenness),
            ("max_betweenness", self.max_betweenness),
            ("isolated_nodes", self.n_isolated),
        ]
        for k, count in sorted(self.degree_distribution.items()):
            rows.append((f"degree_{k}", count))
        if self.n_communities is not None:
            rows.append(("communities", self.n_communities))
        return rows


def graph_summary(graph: GeoGraph, community_target: Optional[int] = None) -> GraphSummary:
    """Counts, degree histogram (cg degree), components, diameter, betweenness."""
    degrees = [degree(graph, v, EdgeClass.CG) for v in graph.nodes]
    distribution: Dict[int, int] = {}
    for d in degrees:
        distribution[d] = distribution.get(d, 0) + 1
    btw = list(betweenness(graph).values())
    n_directed = sum(1 for e in graph.edges.values() if e.directed)
    n_comm = len(communities(graph, community_target)) if community_target is not None else None
    return GraphSummary(
        n_nodes=len(graph.nodes),
        n_edges=len(graph.edges),
        n_undirected=len(graph.edges) - n_directed,
        n_directed=n_directed,
        degree_distribution=distribution,
        mean_degree=(sum(degrees) / len(degrees)) if degrees else 0.0,
        n_components=len(connected_components(graph)),
        diameter=diameter(graph),
        mean_betweenness=(sum(btw) / len(btw)) if btw else 0.0,
        max_betweenness=max(btw, default=0.0),
        n_isolated=sum(1 for d in degrees if d == 0),
        n_communities=n_comm,
    )
