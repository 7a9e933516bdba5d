# calc_summaries.py
"""
Descriptive tables: covariate summaries (Min / quartiles / Mean / Max) and
per-node graph statistics.
"""
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from geograph import (
    EdgeClass,
    GeoGraph,
    betweenness,
    communities,
    component_labels,
    component_sizes,
    degree,
)

SUMMARY_COLUMNS = ["Min", "1st Q", "Median", "Mean", "3rd Q", "Max"]


def summarize_values(values: Sequence[float]) -> Dict[str, float]:
    """
    Quartiles by linear interpolation between order statistics (type 7):
    [1, 2, 3, 4] -> Min 1, 1st Q 1.75, Median 2.5, Mean 2.5, 3rd Q 3.25, Max 4
    """
    x = np.asarray(values, dtype=float)
    x = x[~np.isnan(x)]
    if x.size == 0:
        return {c: np.nan for c in SUMMARY_COLUMNS}
    q1, med, q3 = np.quantile(x, [0.25, 0.5, 0.75], method="linear")
    return {
        "Min": float(x.min()),
        "1st Q": float(q1),
        "Median": float(med),
        "Mean": float(x.mean()),
        "3rd Q": float(q3),
        "Max": float(x.max()),
    }


def summarize(covariates: pd.DataFrame, columns: Optional[Sequence[str]] = None) -> pd.DataFrame:
    """
    One row per covariate. Categorical columns are summarised through their
    0/1 level indicators ("<name> = <level>"), so the Mean is the proportion.
    """
    columns = list(columns) if columns is not None else list(covariates.columns)
    rows: Dict[str, Dict[str, float]] = {}
    for c in columns:
        if c not in covariates.columns:
            raise KeyError(f"unknown covariate '{c}'")
        series = covariates[c]
        if pd.api.types.is_numeric_dtype(series):
            rows[c] = summarize_values(series.to_numpy(dtype=float))
            continue
        present = series.dropna()
        for level in sorted(present.unique(), key=str):
            rows[f"{c} = {level}"] = summarize_values((present == level).to_numpy(dtype=float))
    frame = pd.DataFrame.from_dict(rows, orient="index", columns=SUMMARY_COLUMNS)
    frame.index.name = "covariate"
    return frame


def graph_stats_frame(graph: GeoGraph, community_target: Optional[int] = None) -> pd.DataFrame:
    """
    Per node: degree for each incident-edge class, betweenness, component
    label and size, and (when a target is given) the community label.
    """
    btw = betweenness(graph)
    labels = component_labels(graph)
    sizes = component_sizes(graph)
    community_of: Dict = {}
    if community_target is not None:
        for group in communities(graph, community_target):
            for v in group:
                community_of[v] = group[0]

    rows: List[Dict] = []
    for v in graph.nodes:
        row = {"node_id": v}
        for mode in (EdgeClass.UNDIRECTED, EdgeClass.IN, EdgeClass.OUT, EdgeClass.CG):
            row[f"degree_{mode.value}"] = degree(graph, v, mode)
        row["betweenness"] = btw[v]
        row["component"] = labels[v]
        row["component_size"] = sizes[v]
        if community_target is not None:
            row["community"] = community_of[v]
        rows.append(row)
    return pd.DataFrame(rows)
