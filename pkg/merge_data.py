# merge_data.py
from typing import Dict, Hashable, List, Optional

import numpy as np
import pandas as pd

from geograph import EdgeClass, GeoGraph


def node_covariates_from_edges(
    graph: GeoGraph,
    edge_covariates: pd.DataFrame,
    mode: EdgeClass = EdgeClass.CG,
) -> pd.DataFrame:
    """
    Nodewise summary of edge-level covariates over each node's incident edges:
    numeric columns become means, categorical columns become one proportion
    column per level.

    Returns a frame indexed by node_id, e.g. for columns {speed, surface}:

        node_id | speed | surface = asphalt | surface = gravel
        --------+-------+-------------------+-----------------
        1       | 42.5  | 0.5               | 0.5
        2       | 30.0  | 1.0               | 0.0

    Nodes without incident edges get NaN.
    """
    numeric = [c for c in edge_covariates.columns if pd.api.types.is_numeric_dtype(edge_covariates[c])]
    categorical = [c for c in edge_covariates.columns if c not in numeric]
    levels: Dict[str, List[Hashable]] = {
        c: sorted(edge_covariates[c].dropna().unique(), key=str) for c in categorical
    }

    rows: List[Dict[str, float]] = []
    for v in graph.nodes:
        incident = [e for e in graph.incident(v, mode) if e in edge_covariates.index]
        sub = edge_covariates.loc[incident]
        row: Dict[str, float] = {}
        for c in numeric:
            row[c] = float(sub[c].mean()) if len(sub) else np.nan
        for c in categorical:
            for level in levels[c]:
                row[f"{c} = {level}"] = float((sub[c] == level).mean()) if len(sub) else np.nan
        rows.append(row)

    columns = numeric + [f"{c} = {lv}" for c in categorical for lv in levels[c]]
    return pd.DataFrame(rows, index=pd.Index(list(graph.nodes), name="node_id", dtype=object), columns=columns)


def build_merged_covariates(
    graph: GeoGraph,
    node_covariates: Optional[pd.DataFrame] = None,
    edge_covariates: Optional[pd.DataFrame] = None,
) -> pd.DataFrame:
    """
    One covariate row per graph node (in node id order).

    Drive off the graph's node set as the base universe; node-level columns
    are taken as given, edge-level columns are aggregated with
    node_covariates_from_edges. On a name clash the node-level column wins.
    """
    ids = list(graph.nodes)
    if node_covariates is not None:
        merged = node_covariates.reindex(ids)
    else:
        merged = pd.DataFrame(index=ids)
    merged.index = pd.Index(ids, name="node_id", dtype=object)
    if edge_covariates is not None:
        derived = node_covariates_from_edges(graph, edge_covariates)
        extra = [c for c in derived.columns if c not in merged.columns]
        for c in extra:
            merged[c] = derived[c].to_numpy()
    return merged
