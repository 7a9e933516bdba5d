# intensity.py
"""
Edgewise and nodewise intensity functions.

Edge intensity is the plug-in estimator count / length. Nodewise intensities
are arithmetic means of the edge intensities over an incident-edge class:
undirected (nach), in (pa), out (child), cg (union of all incident edges) and
the two partial unions pa ∪ child ("directed") and nach ∪ child ("nach_child").
"""
from dataclasses import dataclass
from typing import Dict, Iterable, Optional, Sequence, Tuple, Union

import pandas as pd

from geograph import EdgeClass, EdgeId, GeoGraph, NodeId
from pointpattern import EdgeAssignment, count_measure

ALL_MODES: Tuple[EdgeClass, ...] = tuple(EdgeClass)


class IntensityError(ValueError):
    pass


def _check_same_graph(assignment: EdgeAssignment, graph: GeoGraph) -> None:
    if assignment.graph is not graph and assignment.graph != graph:
        raise IntensityError("assignment was built on a different graph")


def edge_intensity(assignment: EdgeAssignment, graph: GeoGraph, edge: EdgeId) -> float:
    """λ(s_e) = N(s_e) / |s_e|."""
    _check_same_graph(assignment, graph)
    length = graph.require_edge(edge).length
    return count_measure(assignment, edge) / length


def _mean_over(assignment: EdgeAssignment, graph: GeoGraph, edges: Sequence[EdgeId]) -> Optional[float]:
    if not edges:
        return None
    values = [assignment.counts[e] / graph.edges[e].length for e in edges]
    return sum(values) / len(values)


def node_intensity(
    assignment: EdgeAssignment,
    graph: GeoGraph,
    v: NodeId,
    mode: Union[EdgeClass, str] = EdgeClass.UNDIRECTED,
) -> Optional[float]:
    """Mean edge intensity over the incident-edge class; None when the class is empty."""
    _check_same_graph(assignment, graph)
    return _mean_over(assignment, graph, graph.incident(v, mode))


@dataclass(frozen=True)
class IntensityTable:
    graph: GeoGraph
    edges: pd.DataFrame                     # index edge_id; columns count, length, intensity
    nodes: Dict[EdgeClass, Dict[NodeId, Optional[float]]]

    def edge_value(self, e: EdgeId) -> float:
        return float(self.edges.at[e, "intensity"])

    def value(self, v: NodeId, mode: Union[EdgeClass, str] = EdgeClass.UNDIRECTED) -> Optional[float]:
        return self.nodes[EdgeClass(mode)][v]

    def defined(self, v: NodeId, mode: Union[EdgeClass, str] = EdgeClass.UNDIRECTED) -> bool:
        return self.value(v, mode) is not None

    def modes(self) -> Tuple[EdgeClass, ...]:
        return tuple(self.nodes)


def intensity_table(
    assignment: EdgeAssignment,
    graph: GeoGraph,
    modes: Iterable[Union[EdgeClass, str]] = ALL_MODES,
) -> IntensityTable:
    """
    Full table over all edges and nodes. Nodes without events are defined
    with value 0; nodes without incident edges of a mode are undefined.
    """
    _check_same_graph(assignment, graph)
    ids = list(graph.edges)
    counts = [assignment.counts[e] for e in ids]
    lengths = [graph.edges[e].length for e in ids]
    edge_frame = pd.DataFrame(
        {
            "count": counts,
            "length": lengths,
            "intensity": [c / l for c, l in zip(counts, lengths)],
        },
        index=pd.Index(ids, name="edge_id", dtype=object),
    )

    nodes: Dict[EdgeClass, Dict[NodeId, Optional[float]]] = {}
    for mode in modes:
        mode = EdgeClass(mode)
        nodes[mode] = {v: _mean_over(assignment, graph, graph.incident(v, mode)) for v in graph.nodes}
    return IntensityTable(graph=graph, edges=edge_frame, nodes=nodes)


def intensity_frames(table: IntensityTable) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """
    Long-format frames for CSV output:
      nodes: node_id, mode, intensity, defined
      edges: edge_id, count, length, intensity
    """
    rows = []
    for mode, values in table.nodes.items():
        for v, value in values.items():
            rows.append({
                "node_id": v,
                "mode": mode.value,
                "intensity": value,
                "defined": int(value is not None),
            })
    node_frame = pd.DataFrame(rows, columns=["node_id", "mode", "intensity", "defined"])
    edge_frame = table.edges.reset_index()[["edge_id", "count", "length", "intensity"]]
    return node_frame, edge_frame
