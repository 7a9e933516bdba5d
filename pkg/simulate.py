# simulate.py
"""
Poisson point patterns on a geo-referenced network.

Per edge e: N_e ~ Poisson(λ_e · |s_e|), events placed uniformly along the
segment. Replicate k of seed s draws from its own Philox stream keyed by
(s, k), so any replicate can be regenerated on its own.
"""
import math
from concurrent.futures import ThreadPoolExecutor
from enum import Enum
from typing import Dict, Iterator, Optional, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator

from config import SNR_THREADS, get_logger
from geograph import EdgeId, GeoGraph, NodeId
from pointpattern import Event, PointPattern

logger = get_logger("simulate")


class SimulationError(ValueError):
    pass


class Aggregation(str, Enum):
    MEAN = "mean"            # (λ_tail + λ_head) / 2
    GEOMETRIC = "geometric"  # sqrt(λ_tail · λ_head)
    TAIL = "tail"            # λ_tail


class SimSpec(BaseModel):
    """
    Exactly one intensity source: ``constant``, ``edge_intensity`` (every
    edge) or ``node_intensity`` (every node, aggregated to edges).
    """
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    graph: GeoGraph
    constant: Optional[float] = None
    edge_intensity: Optional[Dict[EdgeId, float]] = None
    node_intensity: Optional[Dict[NodeId, float]] = None
    aggregation: Aggregation = Aggregation.MEAN
    seed: int = Field(0, ge=0, lt=2 ** 64)

    @model_validator(mode="after")
    def _one_source(self):
        given = [x is not None for x in (self.constant, self.edge_intensity, self.node_intensity)]
        if sum(given) != 1:
            raise ValueError("give exactly one of constant, edge_intensity, node_intensity")
        return self


def edge_intensities(spec: SimSpec) -> Dict[EdgeId, float]:
    graph = spec.graph
    if spec.constant is not None:
        out = {e: float(spec.constant) for e in graph.edges}
    elif spec.edge_intensity is not None:
        missing = [e for e in graph.edges if e not in spec.edge_intensity]
        if missing:
            raise SimulationError(f"no intensity for edge(s) {', '.join(map(repr, missing[:10]))}")
        out = {e: float(spec.edge_intensity[e]) for e in graph.edges}
    else:
        lam = spec.node_intensity
        missing = [v for v in graph.nodes if v not in lam]
        if missing:
            raise SimulationError(f"no intensity for node(s) {', '.join(map(repr, missing[:10]))}")
        out = {}
        for e, edge in graph.edges.items():
            a, b = float(lam[edge.tail]), float(lam[edge.head])
            if spec.aggregation == Aggregation.TAIL:
                out[e] = a
            elif spec.aggregation == Aggregation.GEOMETRIC:
                out[e] = math.sqrt(a * b) if a >= 0 and b >= 0 else -1.0
            else:
                out[e] = (a + b) / 2.0

    bad = [e for e, v in out.items() if not math.isfinite(v) or v < 0]
    if bad:
        raise SimulationError(f"negative or non-finite intensity on edge(s) {', '.join(map(repr, bad[:10]))}")
    return out


def _stream(seed: int, replicate: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, replicate])))


def _expected(spec: SimSpec):
    lam = edge_intensities(spec)
    ids = list(spec.graph.edges)
    mean = np.array([lam[e] * spec.graph.edges[e].length for e in ids], dtype=float)
    return ids, mean


def simulate(spec: SimSpec, replicate: int = 0) -> PointPattern:
    """
    Counts for all edges are drawn first (edge id order), then positions, so
    simulate_counts reproduces the counts of the same replicate.
    """
    graph = spec.graph
    ids, mean = _expected(spec)
    rng = _stream(spec.seed, replicate)
    counts = rng.poisson(mean)
    t = rng.uniform(size=int(counts.sum()))

    events = []
    k = 0
    for e, n in zip(ids, counts.tolist()):
        edge = graph.edges[e]
        a, b = graph.nodes[edge.tail], graph.nodes[edge.head]
        for u in t[k:k + n].tolist():
            events.append(Event(a.x + u * (b.x - a.x), a.y + u * (b.y - a.y)))
        k += n
    return PointPattern(tuple(events))


def simulate_counts(spec: SimSpec, replicates: int, start: int = 0) -> pd.DataFrame:
    """Per-edge counts only; rows = replicates start..start+replicates-1, columns = edge ids."""
    ids, mean = _expected(spec)
    rows = [_stream(spec.seed, start + r).poisson(mean) for r in range(replicates)]
    data = np.vstack(rows) if rows else np.zeros((0, len(ids)), dtype=int)
    return pd.DataFrame(data, columns=ids, index=pd.RangeIndex(start, start + replicates, name="replicate"))


def simulate_replicates(spec: SimSpec, n: int, threads: int = SNR_THREADS) -> Iterator[PointPattern]:
    if threads <= 1:
        for k in range(n):
            yield simulate(spec, k)
        return
    with ThreadPoolExecutor(max_workers=threads) as pool:
        yield from pool.map(lambda k: simulate(spec, k), range(n))


# -----------------------------
# Intensity from the command line
# -----------------------------
def intensity_spec(
    graph: GeoGraph,
    intensity: Union[str, float],
    seed: int,
    covariates: Optional[pd.DataFrame] = None,
    aggregation: Union[Aggregation, str] = Aggregation.MEAN,
) -> SimSpec:
    """
    A number gives a constant intensity; anything else is an expression in
    node covariate columns evaluated with DataFrame.eval, e.g. "exp(1 + 0.5*z)".
    """
    try:
        value = float(intensity)
    except (TypeError, ValueError):
        value = None
    if value is not None:
        return SimSpec(graph=graph, constant=value, seed=seed)

    if covariates is None:
        raise SimulationError(f"intensity expression {intensity!r} needs a covariate table")
    try:
        result = covariates.eval(str(intensity))
    except Exception as e:
        raise SimulationError(f"cannot evaluate intensity expression {intensity!r}: {e}") from None
    values = pd.Series(result, index=covariates.index) if np.ndim(result) else pd.Series(float(result), index=covariates.index)
    node_values = {v: float(values[v]) for v in graph.nodes if v in values.index}
    logger.info(f"node intensity from {intensity!r}: min={min(node_values.values(), default=0):.4g} max={max(node_values.values(), default=0):.4g}")
    return SimSpec(graph=graph, node_intensity=node_values, aggregation=Aggregation(aggregation), seed=seed)

