# pointpattern.py
"""
Planar events and their attribution to edge intervals (the counting measure N).
"""
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import shapely

from config import SNR_TOLERANCE_FRACTION, get_logger
from geograph import EdgeId, GeoGraph, id_key

logger = get_logger("pointpattern")

# events per chunk when evaluating the box indicator against every edge
_BOX_CHUNK = 4096
_TIE_EPS = 1e-12


class AssignmentError(ValueError):
    """Invalid assignment request (negative tolerance, unknown edge, ...)."""


class AssignMode(str, Enum):
    SNAP = "snap"
    PAPER_BOX = "paper_box"


@dataclass(frozen=True)
class Event:
    x: float
    y: float
    mark: Optional[str] = None

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise AssignmentError(f"event coordinates must be finite, got ({self.x}, {self.y})")


@dataclass(frozen=True)
class PointPattern:
    events: Tuple[Event, ...] = ()

    def __len__(self) -> int:
        return len(self.events)

    def xy(self) -> np.ndarray:
        if not self.events:
            return np.empty((0, 2))
        return np.array([(e.x, e.y) for e in self.events], dtype=float)

    def extended(self, other: "PointPattern") -> "PointPattern":
        return PointPattern(self.events + other.events)


@dataclass(frozen=True)
class EdgeAssignment:
    """
    Per event: the edge(s) it was attributed to (empty tuple = unassigned)
    and the distance to the first of them. Per edge: the event count.
    Snap mode assigns at most one edge per event; the box mode may assign several.
    """
    graph: GeoGraph
    mode: AssignMode
    tolerance: float
    event_edges: Tuple[Tuple[EdgeId, ...], ...]
    distances: Tuple[Optional[float], ...]
    counts: Dict[EdgeId, int] = field(default_factory=dict)

    @property
    def n_events(self) -> int:
        return len(self.event_edges)

    @property
    def n_assigned(self) -> int:
        return sum(1 for edges in self.event_edges if edges)

    @property
    def n_unassigned(self) -> int:
        return self.n_events - self.n_assigned

    def edge_of(self, i: int) -> Optional[EdgeId]:
        edges = self.event_edges[i]
        return edges[0] if edges else None


def default_tolerance(graph: GeoGraph) -> float:
    """Scale-free default: a fraction of the node bounding-box diagonal."""
    return SNR_TOLERANCE_FRACTION * graph.bounding_diagonal()


def _segments(graph: GeoGraph) -> Tuple[List[EdgeId], np.ndarray]:
    ids = list(graph.edges)
    coords = np.empty((len(ids), 2, 2), dtype=float)
    for k, e in enumerate(ids):
        edge = graph.edges[e]
        a, b = graph.nodes[edge.tail], graph.nodes[edge.head]
        coords[k] = ((a.x, a.y), (b.x, b.y))
    return ids, coords


def _snap(graph: GeoGraph, xy: np.ndarray, tolerance: float):
    ids, coords = _segments(graph)
    n = xy.shape[0]
    event_edges: List[Tuple[EdgeId, ...]] = [()] * n
    distances: List[Optional[float]] = [None] * n
    if n == 0 or not ids:
        return event_edges, distances

    lines = shapely.linestrings(coords)
    points = shapely.points(xy)
    tree = shapely.STRtree(lines)
    (pt_idx, _), dist = tree.query_nearest(points, return_distance=True)
    nearest = np.full(n, np.inf)
    nearest[pt_idx] = dist
    within = np.flatnonzero(nearest <= tolerance)
    if within.size == 0:
        return event_edges, distances

    # distances to the same segment traversed in either direction differ in the last bits,
    # so everything within a relative epsilon of the nearest distance counts as a tie
    reach = nearest[within] + _TIE_EPS * np.maximum(1.0, nearest[within])
    sub, line_idx = tree.query(points[within], predicate="dwithin", distance=reach)
    cand_dist = shapely.distance(points[within][sub], lines[line_idx])

    best: Dict[int, EdgeId] = {}
    for s, li, d in zip(sub.tolist(), line_idx.tolist(), cand_dist.tolist()):
        if d > reach[s]:
            continue
        candidate = ids[li]
        current = best.get(s)
        if current is None or id_key(candidate) < id_key(current):
            best[s] = candidate

    for s, e in best.items():
        p = int(within[s])
        event_edges[p] = (e,)
        distances[p] = float(nearest[p])
    return event_edges, distances


def _paper_box(graph: GeoGraph, xy: np.ndarray):
    """
    Box indicator over [min x, max x] × [min y, max y] of each segment's
    endpoints, independent of the tail/head order. Reversed and anti-diagonal
    edges therefore get the same box as their mirrored counterparts; strict
    inequalities still leave axis-parallel edges with an empty box.
    """
    ids, coords = _segments(graph)
    n = xy.shape[0]
    event_edges: List[Tuple[EdgeId, ...]] = [()] * n
    distances: List[Optional[float]] = [None] * n
    if n == 0 or not ids:
        return event_edges, distances

    lo_x = coords[:, :, 0].min(axis=1)
    hi_x = coords[:, :, 0].max(axis=1)
    lo_y = coords[:, :, 1].min(axis=1)
    hi_y = coords[:, :, 1].max(axis=1)
    # the indicator is only defined for x_i < x_j and y_i < y_j; axis-parallel edges get an empty box
    valid = (lo_x < hi_x) & (lo_y < hi_y)
    order = sorted(range(len(ids)), key=lambda k: id_key(ids[k]))
    lines = shapely.linestrings(coords)

    for start in range(0, n, _BOX_CHUNK):
        chunk = xy[start:start + _BOX_CHUNK]
        x = chunk[:, [0]]
        y = chunk[:, [1]]
        inside = valid & (lo_x <= x) & (x <= hi_x) & (lo_y <= y) & (y <= hi_y)
        for offset, row in enumerate(inside):
            hits = [k for k in order if row[k]]
            if not hits:
                continue
            i = start + offset
            event_edges[i] = tuple(ids[k] for k in hits)
            distances[i] = float(shapely.distance(shapely.Point(xy[i]), lines[hits[0]]))
    return event_edges, distances


def assign_events(
    graph: GeoGraph,
    pattern: PointPattern,
    tolerance: Optional[float] = None,
    mode: Union[AssignMode, str] = AssignMode.SNAP,
) -> EdgeAssignment:
    """
    Attribute events to edge intervals.

    snap: nearest segment (perpendicular or endpoint distance) if within
    ``tolerance``, ties to the lowest edge id, otherwise unassigned.
    paper_box: the axis-aligned box indicator, with each box spanned by the
    segment's endpoint extremes whatever the edge direction; an event inside
    several boxes is counted on each of them and ``tolerance`` is not used.
    """
    mode = AssignMode(mode)
    if tolerance is None:
        tolerance = default_tolerance(graph)
    if tolerance < 0 or not math.isfinite(tolerance):
        raise AssignmentError(f"tolerance must be a finite value >= 0, got {tolerance}")

    xy = pattern.xy()
    if mode == AssignMode.SNAP:
        event_edges, distances = _snap(graph, xy, tolerance)
    else:
        event_edges, distances = _paper_box(graph, xy)

    counts: Dict[EdgeId, int] = {e: 0 for e in graph.edges}
    for edges in event_edges:
        for e in edges:
            counts[e] += 1

    assignment = EdgeAssignment(
        graph=graph,
        mode=mode,
        tolerance=float(tolerance),
        event_edges=tuple(event_edges),
        distances=tuple(distances),
        counts=counts,
    )
    if assignment.n_unassigned:
        logger.warning(
            f"{assignment.n_unassigned} of {assignment.n_events} events not attributed to any edge "
            f"(mode={mode.value}, tolerance={tolerance:g})"
        )
    return assignment


def count_measure(assignment: EdgeAssignment, edge: EdgeId) -> int:
    """N(s_e): number of events attributed to ``edge``."""
    try:
        return assignment.counts[edge]
    except KeyError:
        raise AssignmentError(f"unknown edge id: {edge!r}") from None


def pattern_from_arrays(x: Sequence[float], y: Sequence[float], marks: Optional[Sequence[Optional[str]]] = None) -> PointPattern:
    marks = list(marks) if marks is not None else [None] * len(x)
    return PointPattern(tuple(Event(float(a), float(b), m) for a, b, m in zip(x, y, marks)))
