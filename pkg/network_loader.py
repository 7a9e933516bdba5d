# network_loader.py
"""
Readers for the tool's input files (all CSV: comma-delimited, header row,
UTF-8, '.' decimal separator) plus GeoJSON network ingestion.
"""
import json
import os
import re
from typing import Dict, Hashable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from geograph import GeoGraph, GeoNode, LengthMode, RawEdge, build_graph
from pointpattern import Event, PointPattern

_INT_RE = re.compile(r"^-?\d+$")


class InputFileError(ValueError):
    """Parse error in an input file; carries the file name and 1-based line number."""

    def __init__(self, path: str, message: str, line: Optional[int] = None):
        self.path = path
        self.line = line
        where = f"{path}:{line}" if line is not None else path
        super().__init__(f"{where}: {message}")


def coerce_id(value) -> Hashable:
    """Integer-looking ids become ints, everything else stays a stripped string."""
    text = str(value).strip()
    if _INT_RE.match(text):
        return int(text)
    return text


def _read_csv(path: str, required: Sequence[str], id_columns: Sequence[str] = ()) -> pd.DataFrame:
    if not os.path.exists(path):
        raise InputFileError(path, "file not found")
    try:
        frame = pd.read_csv(
            path,
            dtype={c: str for c in id_columns},
            encoding="utf-8",
            skipinitialspace=True,
        )
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise InputFileError(path, f"cannot parse CSV ({e})") from None

    frame.columns = [str(c).strip() for c in frame.columns]
    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise InputFileError(path, f"missing header column(s): {', '.join(missing)}", line=1)

    for column in required:
        bad = frame[column].isna()
        if bad.any():
            row = int(bad.to_numpy().nonzero()[0][0])
            raise InputFileError(path, f"empty value in column '{column}'", line=row + 2)
    return frame


def _numeric(path: str, frame: pd.DataFrame, column: str) -> List[float]:
    values = pd.to_numeric(frame[column], errors="coerce").to_numpy(dtype=float)
    bad = ~np.isfinite(values)
    if bad.any():
        row = int(bad.nonzero()[0][0])
        raise InputFileError(path, f"non-numeric value {frame[column].iloc[row]!r} in column '{column}'", line=row + 2)
    return [float(v) for v in values]


# -----------------------------
# Network
# -----------------------------
def load_nodes(path: str) -> List[GeoNode]:
    frame = _read_csv(path, ["id", "x", "y"], id_columns=["id"])
    xs = _numeric(path, frame, "x")
    ys = _numeric(path, frame, "y")
    return [GeoNode(coerce_id(i), x, y) for i, x, y in zip(frame["id"], xs, ys)]


def load_edges(path: str) -> List[RawEdge]:
    frame = _read_csv(path, ["id", "tail", "head", "directed"], id_columns=["id", "tail", "head", "directed"])
    edges: List[RawEdge] = []
    for row, record in enumerate(frame.itertuples(index=False), start=2):
        flag = str(record.directed).strip()
        if flag not in ("0", "1"):
            raise InputFileError(path, f"column 'directed' must be 0 or 1, got {flag!r}", line=row)
        edges.append(RawEdge(coerce_id(record.id), coerce_id(record.tail), coerce_id(record.head), flag == "1"))
    return edges


def load_graph(nodes_path: str, edges_path: str, length_mode: str = LengthMode.EUCLIDEAN) -> GeoGraph:
    return build_graph(load_nodes(nodes_path), load_edges(edges_path), length_mode)


def _geojson_features(path: str) -> List[dict]:
    if not os.path.exists(path):
        raise InputFileError(path, "file not found")
    with open(path, "r", encoding="utf-8") as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise InputFileError(path, f"invalid JSON ({e.msg})", line=e.lineno) from None
    if doc.get("type") == "FeatureCollection":
        return list(doc.get("features", []))
    if doc.get("type") == "Feature":
        return [doc]
    raise InputFileError(path, "expected a GeoJSON Feature or FeatureCollection")


def load_geojson(path: str, length_mode: str = LengthMode.EUCLIDEAN) -> GeoGraph:
    """
    Point features become nodes, LineString features become edges.

    Line endpoints are matched to Point features with identical coordinates;
    unmatched endpoints and interior vertices get generated node ids
    ("g0", "g1", ...). A line with k > 2 vertices is split into k-1 chained
    edges with ids "<line id>_0", "<line id>_1", ...
    """
    features = _geojson_features(path)
    nodes: List[GeoNode] = []
    by_coord: Dict[Tuple[float, float], Hashable] = {}
    generated = 0

    def node_at(coord: Sequence[float]) -> Hashable:
        nonlocal generated
        key = (float(coord[0]), float(coord[1]))
        if key not in by_coord:
            node_id = f"g{generated}"
            generated += 1
            by_coord[key] = node_id
            nodes.append(GeoNode(node_id, key[0], key[1]))
        return by_coord[key]

    for feature in features:
        geometry = feature.get("geometry") or {}
        if geometry.get("type") != "Point":
            continue
        props = feature.get("properties") or {}
        raw_id = props.get("id", feature.get("id"))
        x, y = geometry["coordinates"][:2]
        node_id = coerce_id(raw_id) if raw_id is not None else None
        if node_id is None:
            node_at((x, y))
            continue
        nodes.append(GeoNode(node_id, float(x), float(y)))
        by_coord[(float(x), float(y))] = node_id

    edges: List[RawEdge] = []
    line_no = 0
    for feature in features:
        geometry = feature.get("geometry") or {}
        if geometry.get("type") != "LineString":
            continue
        props = feature.get("properties") or {}
        raw_id = props.get("id", feature.get("id"))
        base = coerce_id(raw_id) if raw_id is not None else f"l{line_no}"
        line_no += 1
        coords = geometry.get("coordinates") or []
        if len(coords) < 2:
            raise InputFileError(path, f"LineString {base!r} has fewer than two vertices")
        directed = bool(props.get("directed", False))
        chain = [node_at(c) for c in coords]
        if len(chain) == 2:
            edges.append(RawEdge(base, chain[0], chain[1], directed))
            continue
        for k, (tail, head) in enumerate(zip(chain[:-1], chain[1:])):
            edges.append(RawEdge(f"{base}_{k}", tail, head, directed))

    return build_graph(nodes, edges, length_mode)


# -----------------------------
# Events, covariates, lattice
# -----------------------------
def load_events(path: str) -> PointPattern:
    frame = _read_csv(path, ["x", "y"])
    xs = _numeric(path, frame, "x")
    ys = _numeric(path, frame, "y")
    if "mark" in frame.columns:
        marks = [None if pd.isna(m) else str(m) for m in frame["mark"]]
    else:
        marks = [None] * len(xs)
    return PointPattern(tuple(Event(x, y, m) for x, y, m in zip(xs, ys, marks)))


def load_covariates(path: str, key: str = "node_id") -> pd.DataFrame:
    """Covariate table indexed by node (or edge) id; remaining columns kept as read."""
    frame = _read_csv(path, [key], id_columns=[key])
    frame[key] = [coerce_id(v) for v in frame[key]]
    if frame[key].duplicated().any():
        row = int(frame[key].duplicated().to_numpy().nonzero()[0][0])
        raise InputFileError(path, f"duplicate id {frame[key].iloc[row]!r}", line=row + 2)
    return frame.set_index(key)


def load_lattice(path: str) -> List[Tuple[Hashable, Hashable]]:
    frame = _read_csv(path, ["region_a", "region_b"], id_columns=["region_a", "region_b"])
    return [(coerce_id(a), coerce_id(b)) for a, b in zip(frame["region_a"], frame["region_b"])]


def load_region_map(path: str) -> Dict[Hashable, Hashable]:
    frame = _read_csv(path, ["node_id", "region_id"], id_columns=["node_id", "region_id"])
    return {coerce_id(n): coerce_id(r) for n, r in zip(frame["node_id"], frame["region_id"])}
