# snr.py
"""
Structured network regression end-to-end.

    η°_i = offset_i + γ₀ + z_iᵀγ + w_iᵀξ + Σ_j f_j(x_ij) + f_mrf(region_i)

Rows are nodes (response ``counts`` / ``intensity``) or edges
(``edge_counts``). For count responses the offset is the log of the total
incident edge length, so exp(η° − offset) is the nodewise mean intensity.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, Hashable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import stats

from config import SNR_THREADS, get_logger
from geograph import GeoGraph, betweenness, component_sizes, degree, edge_betweenness
from intensity import IntensityTable
from mmfit import FitControl, FitResult, ModelDesign, PenalizedBlock, criteria, family, fit
from model_config import ModelSpecError, Response, SNRSpec
from smooth import LatticeAdjacency, PenalizedTerm, lattice_term, smooth_term

logger = get_logger("snr")

INTERCEPT = "(Intercept)"
DEGREE_REF = "1"
GRAPHSTAT_LABELS = {"degree": "node degree", "betweenness": "betweenness", "component_size": "component size"}
CRITERIA_COLUMNS = ["model", "aic", "bic", "gcv", "edf", "loglik"]


def level_key(value) -> str:
    """Category label; integral floats print without the trailing '.0'."""
    if isinstance(value, (float, np.floating)) and float(value).is_integer():
        return str(int(value))
    return str(value)


def _level_order(label: str):
    try:
        return (0, float(label), label)
    except ValueError:
        return (1, 0.0, label)


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class TermLayout:
    """What is needed to rebuild design rows for new data."""
    fixed_levels: Dict[str, Tuple[str, ...]]
    fixed_refs: Dict[str, str]
    degree_levels: Tuple[str, ...]
    smooth_terms: Dict[str, PenalizedTerm]
    lattice: Optional[PenalizedTerm]
    lattice_column: str = "region"


@dataclass(frozen=True)
class SNRDesign:
    spec: SNRSpec
    model: ModelDesign
    frame: pd.DataFrame
    layout: TermLayout
    exposure: np.ndarray
    excluded_undefined: Tuple[Hashable, ...] = ()
    excluded_zero: Tuple[Hashable, ...] = ()

    @property
    def row_ids(self) -> Tuple[Hashable, ...]:
        return self.model.row_ids


@dataclass(frozen=True)
class SNRFit:
    spec: SNRSpec
    design: SNRDesign
    result: FitResult
    fitted_intensity: pd.Series


# ---------------------------------------------------------------------------
# Model frame
# ---------------------------------------------------------------------------
def _node_rows(graph: GeoGraph, table: IntensityTable, spec: SNRSpec):
    ids, y, exposure, undefined, zero = [], [], [], [], []
    counts = table.edges["count"]
    lengths = table.edges["length"]
    rates = table.edges["intensity"]
    for v in graph.nodes:
        edges = list(graph.incident(v, spec.mode))
        if not edges:
            undefined.append(v)
            continue
        lam = float(rates.loc[edges].mean())
        if lam == 0.0 and spec.exclude_undefined:
            zero.append(v)
            continue
        ids.append(v)
        if spec.response == Response.COUNTS:
            y.append(float(counts.loc[edges].sum()))
            exposure.append(float(lengths.loc[edges].sum()))
        else:
            y.append(lam)
            exposure.append(1.0)
    return ids, y, exposure, undefined, zero


def _edge_rows(graph: GeoGraph, table: IntensityTable, spec: SNRSpec):
    ids, y, exposure, zero = [], [], [], []
    for e in graph.edges:
        count = float(table.edges.at[e, "count"])
        if count == 0.0 and spec.exclude_undefined:
            zero.append(e)
            continue
        ids.append(e)
        y.append(count)
        exposure.append(float(table.edges.at[e, "length"]))
    return ids, y, exposure, [], zero


def _covariate_column(covariates: Optional[pd.DataFrame], name: str) -> pd.Series:
    if covariates is None or name not in covariates.columns:
        raise ModelSpecError(f"unknown covariate '{name}'")
    return covariates[name]


def _model_frame(graph: GeoGraph, ids: List[Hashable], covariates: Optional[pd.DataFrame], spec: SNRSpec) -> pd.DataFrame:
    """One row per structural element with every covariate and graph statistic the model uses."""
    edge_rows = spec.response == Response.EDGE_COUNTS
    frame = pd.DataFrame(index=pd.Index(ids, name="edge_id" if edge_rows else "node_id", dtype=object))

    names = [t.name for t in spec.fixed] + [t.name for t in spec.smooths]
    categorical = {t.name for t in spec.fixed if t.categorical}
    for name in names:
        column = _covariate_column(covariates, name)
        if edge_rows:
            tails = [graph.edges[e].tail for e in ids]
            heads = [graph.edges[e].head for e in ids]
            a = column.reindex(tails).to_numpy()
            if name in categorical:
                # categorical edge covariates take the tail node's level
                frame[name] = a
            else:
                b = column.reindex(heads).to_numpy()
                frame[name] = (pd.to_numeric(pd.Series(a), errors="coerce").to_numpy()
                               + pd.to_numeric(pd.Series(b), errors="coerce").to_numpy()) / 2.0
        else:
            frame[name] = column.reindex(ids).to_numpy()

    lattice = spec.lattice
    if lattice is not None:
        if lattice.region_map is not None:
            frame[lattice.column] = [lattice.region_map.get(v) for v in ids]
        else:
            frame[lattice.column] = _covariate_column(covariates, lattice.column).reindex(ids).to_numpy()

    wanted = {t.name for t in spec.graphstats}
    if "degree" in wanted:
        if edge_rows:
            frame["degree"] = [
                (degree(graph, graph.edges[e].tail, spec.mode) + degree(graph, graph.edges[e].head, spec.mode)) / 2.0
                for e in ids
            ]
        else:
            frame["degree"] = [degree(graph, v, spec.mode) for v in ids]
    if "betweenness" in wanted:
        scores = edge_betweenness(graph) if edge_rows else betweenness(graph)
        frame["betweenness"] = [scores[i] for i in ids]
    if "component_size" in wanted:
        sizes = component_sizes(graph)
        frame["component_size"] = [sizes[graph.edges[i].tail] if edge_rows else sizes[i] for i in ids]

    missing = []
    for column in frame.columns:
        bad = frame.index[pd.isna(frame[column]).to_numpy()]
        for row_id in bad:
            missing.append(f"{column} at {row_id!r}")
    if missing:
        shown = ", ".join(missing[:10]) + (f" (+{len(missing) - 10} more)" if len(missing) > 10 else "")
        raise ModelSpecError(f"missing covariate values: {shown}")
    return frame


# ---------------------------------------------------------------------------
# Design matrices (shared by build_design and predict)
# ---------------------------------------------------------------------------
def _numeric(frame: pd.DataFrame, name: str) -> np.ndarray:
    values = pd.to_numeric(frame[name], errors="coerce").to_numpy(dtype=float)
    if not np.all(np.isfinite(values)):
        raise ModelSpecError(f"covariate '{name}' must be numeric (use 'categorical' for labels)")
    return values


def _dummies(values: Sequence, levels: Tuple[str, ...], ref: str, name: str, label: str) -> Tuple[List[np.ndarray], List[str]]:
    keys = [level_key(v) for v in values]
    unseen = sorted(set(keys) - set(levels) - {ref}, key=_level_order)
    if unseen:
        raise ModelSpecError(f"unseen level(s) of '{name}': {', '.join(unseen)}")
    cols = [np.array([k == lv for k in keys], dtype=float) for lv in levels]
    return cols, [f"{label} = {lv}" for lv in levels]


def _fixed_matrix(frame: pd.DataFrame, spec: SNRSpec, layout: TermLayout) -> Tuple[np.ndarray, List[str]]:
    n = len(frame)
    cols: List[np.ndarray] = [np.ones(n)]
    names: List[str] = [INTERCEPT]
    for term in spec.fixed:
        if term.name not in frame.columns:
            raise ModelSpecError(f"new rows lack covariate '{term.name}'")
        if term.categorical:
            c, nm = _dummies(frame[term.name], layout.fixed_levels[term.name], layout.fixed_refs[term.name], term.name, term.name)
            cols += c
            names += nm
        else:
            cols.append(_numeric(frame, term.name))
            names.append(term.name)
    return np.column_stack(cols), names


def _graph_matrix(frame: pd.DataFrame, spec: SNRSpec, layout: TermLayout) -> Tuple[np.ndarray, List[str]]:
    n = len(frame)
    cols: List[np.ndarray] = []
    names: List[str] = []
    for term in spec.graphstats:
        if term.name not in frame.columns:
            raise ModelSpecError(f"new rows lack graph statistic '{term.name}'")
        if term.categorical:
            c, nm = _dummies(frame[term.name], layout.degree_levels, DEGREE_REF, term.name, GRAPHSTAT_LABELS["degree"])
            cols += c
            names += nm
        else:
            cols.append(_numeric(frame, term.name))
            names.append(GRAPHSTAT_LABELS[term.name])
    W = np.column_stack(cols) if cols else np.zeros((n, 0))
    return W, names


def _categorical_layout(frame: pd.DataFrame, spec: SNRSpec) -> Tuple[Dict[str, Tuple[str, ...]], Dict[str, str], Tuple[str, ...]]:
    fixed_levels: Dict[str, Tuple[str, ...]] = {}
    fixed_refs: Dict[str, str] = {}
    for term in spec.fixed:
        if not term.categorical:
            continue
        observed = sorted({level_key(v) for v in frame[term.name]}, key=_level_order)
        ref = term.ref if term.ref is not None else observed[0]
        if ref not in observed:
            raise ModelSpecError(f"reference level '{ref}' of '{term.name}' does not occur in the data")
        fixed_refs[term.name] = ref
        fixed_levels[term.name] = tuple(lv for lv in observed if lv != ref)

    degree_levels: Tuple[str, ...] = ()
    if any(t.name == "degree" and t.categorical for t in spec.graphstats):
        observed = sorted({level_key(v) for v in frame["degree"]}, key=_level_order)
        if DEGREE_REF not in observed:
            raise ModelSpecError("reference level node degree = 1 does not occur in the data")
        degree_levels = tuple(lv for lv in observed if lv != DEGREE_REF)
    return fixed_levels, fixed_refs, degree_levels


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------
def build_design(
    graph: GeoGraph,
    table: IntensityTable,
    covariates: Optional[pd.DataFrame],
    spec: SNRSpec,
) -> SNRDesign:
    if table.graph is not graph and table.graph != graph:
        raise ModelSpecError("intensity table was built on a different graph")

    if spec.response == Response.EDGE_COUNTS:
        ids, y, exposure, undefined, zero = _edge_rows(graph, table, spec)
        unit = "edge"
    else:
        ids, y, exposure, undefined, zero = _node_rows(graph, table, spec)
        unit = "node"
    if undefined:
        logger.info(f"excluded {len(undefined)} {unit}(s) with undefined intensity (mode={spec.mode.value})")
    if zero:
        logger.info(f"excluded {len(zero)} {unit}(s) with zero intensity (exclude-undefined true)")
    if not ids:
        raise ModelSpecError("empty design after exclusions")

    frame = _model_frame(graph, ids, covariates, spec)
    fixed_levels, fixed_refs, degree_levels = _categorical_layout(frame, spec)

    smooth_terms: Dict[str, PenalizedTerm] = {}
    blocks: List[PenalizedBlock] = []
    for sm in spec.smooths:
        term = smooth_term(f"s({sm.name})", _numeric(frame, sm.name), sm.spline)
        smooth_terms[sm.name] = term
        blocks.append(PenalizedBlock(term.name, term.design, term.penalty))

    mrf: Optional[PenalizedTerm] = None
    column = "region"
    if spec.lattice is not None:
        column = spec.lattice.column
        adjacency = LatticeAdjacency.from_pairs(spec.lattice.pairs)
        known = set(adjacency.regions)
        stray = [f"{i!r}" for i, r in zip(ids, frame[column]) if r not in known]
        if stray:
            raise ModelSpecError(f"region of {', '.join(stray[:10])} is not part of the lattice")
        mrf = lattice_term(f"mrf({column})", list(frame[column]), adjacency)
        blocks.append(PenalizedBlock(mrf.name, mrf.design, mrf.penalty))

    layout = TermLayout(fixed_levels, fixed_refs, degree_levels, smooth_terms, mrf, column)
    Z, z_names = _fixed_matrix(frame, spec, layout)
    W, w_names = _graph_matrix(frame, spec, layout)

    exposure_arr = np.asarray(exposure, dtype=float)
    counts_response = spec.response in (Response.COUNTS, Response.EDGE_COUNTS)
    offset = np.log(exposure_arr) if counts_response else np.zeros(len(ids))

    model = ModelDesign(
        response=np.asarray(y, dtype=float),
        offset=offset,
        Z=Z,
        z_names=tuple(z_names),
        W=W,
        w_names=tuple(w_names),
        blocks=tuple(blocks),
        row_ids=tuple(ids),
    )
    return SNRDesign(
        spec=spec,
        model=model,
        frame=frame,
        layout=layout,
        exposure=exposure_arr,
        excluded_undefined=tuple(undefined),
        excluded_zero=tuple(zero),
    )


def fit_snr(design: SNRDesign, spec: Optional[SNRSpec] = None, control: Optional[FitControl] = None) -> SNRFit:
    spec = spec or design.spec
    fam = family(spec.family.value, spec.link.value if spec.link is not None else None)
    logger.info(
        f"fitting '{spec.name}': response={spec.response.value} family={fam.name.value} "
        f"link={fam.link.value} mode={spec.mode.value} rows={design.model.n}"
    )
    result = fit(design.model, fam, control)
    values = result.fitted / design.exposure
    fitted = pd.Series(values, index=pd.Index(design.row_ids, name=design.frame.index.name, dtype=object), name="fitted_intensity")
    return SNRFit(spec=spec, design=design, result=result, fitted_intensity=fitted)


def fit_models(designs: Sequence[SNRDesign], control: Optional[FitControl] = None, threads: int = SNR_THREADS) -> List[SNRFit]:
    """Independent fits, run concurrently up to ``threads`` at a time; order preserved."""
    if threads <= 1 or len(designs) <= 1:
        return [fit_snr(d, control=control) for d in designs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda d: fit_snr(d, control=control), designs))


def predict(snr_fit: SNRFit, rows: pd.DataFrame, offset: Optional[Sequence[float]] = None) -> np.ndarray:
    """
    λ̂ = h(offset + linear predictor) for new rows carrying the model's
    covariate columns (graph statistics as columns degree / betweenness /
    component_size, lattice region under the lattice column). offset
    defaults to 0, which yields intensities for count responses.
    """
    spec, layout, result = snr_fit.spec, snr_fit.design.layout, snr_fit.result
    n = len(rows)
    Z, _ = _fixed_matrix(rows, spec, layout)
    W, _ = _graph_matrix(rows, spec, layout)
    k = result.n_z + result.n_w
    eta = np.hstack((Z, W)) @ result.coefficients[:k]

    for name, term in layout.smooth_terms.items():
        if name not in rows.columns:
            raise ModelSpecError(f"new rows lack covariate '{name}'")
        eta = eta + term.predict_design(_numeric(rows, name)) @ result.term_coefficients(term.name)
    if layout.lattice is not None:
        if layout.lattice_column not in rows.columns:
            raise ModelSpecError(f"new rows lack lattice column '{layout.lattice_column}'")
        eta = eta + layout.lattice.predict_design(list(rows[layout.lattice_column])) @ result.term_coefficients(layout.lattice.name)

    if offset is not None:
        eta = eta + np.asarray(offset, dtype=float).reshape(n)
    return result.family.linkinv(eta)


def _smooth_term_of(snr_fit: SNRFit, term: str) -> PenalizedTerm:
    terms = snr_fit.design.layout.smooth_terms
    if term in terms:
        return terms[term]
    for t in terms.values():
        if t.name == term:
            return t
    raise ModelSpecError(f"'{term}' is not a smooth term of model '{snr_fit.spec.name}'")


def evaluate_smooth(
    snr_fit: SNRFit,
    term: str,
    grid: Optional[Sequence[float]] = None,
    levels: Sequence[float] = (0.80, 0.95),
    n_grid: int = 100,
) -> pd.DataFrame:
    """
    f̂ on a grid with pointwise Gaussian bands from the coefficient covariance.
    Columns: x, fit, se, lower_80, upper_80, lower_95, upper_95.
    """
    t = _smooth_term_of(snr_fit, term)
    if grid is None:
        lo, hi = t.config.domain
        grid = np.linspace(lo, hi, n_grid)
    x = np.asarray(grid, dtype=float)
    X = t.predict_design(x)
    beta = snr_fit.result.term_coefficients(t.name)
    cov = snr_fit.result.term_covariance(t.name)
    f_hat = X @ beta
    se = np.sqrt(np.clip(np.einsum("ij,jk,ik->i", X, cov, X), 0.0, None))

    out = pd.DataFrame({"x": x, "fit": f_hat, "se": se})
    for level in levels:
        q = stats.norm.ppf(0.5 + level / 2.0)
        tag = f"{round(level * 100):d}"
        out[f"lower_{tag}"] = f_hat - q * se
        out[f"upper_{tag}"] = f_hat + q * se
    return out


def compare_models(fits: Sequence[SNRFit], names: Optional[Sequence[str]] = None) -> pd.DataFrame:
    """
    One row per model (model, aic, bic, gcv, edf, loglik) plus ``best``: the
    criteria the model minimises, ';'-separated.
    """
    if not fits:
        raise ModelSpecError("no models to compare")
    base = fits[0].result
    for f in fits[1:]:
        r = f.result
        if r.row_ids != base.row_ids or not np.array_equal(r.response, base.response):
            raise ModelSpecError(
                f"mismatched response vectors: '{f.spec.name}' vs '{fits[0].spec.name}' "
                f"(models must share response, mode and exclusion rule)"
            )

    labels = list(names) if names is not None else [f.spec.name for f in fits]
    rows = []
    for label, f in zip(labels, fits):
        c = criteria(f.result)
        rows.append({"model": label, "aic": c.aic, "bic": c.bic, "gcv": c.gcv, "edf": c.edf, "loglik": c.loglik})
    table = pd.DataFrame(rows, columns=CRITERIA_COLUMNS)

    best: List[List[str]] = [[] for _ in rows]
    for crit in ("aic", "bic", "gcv"):
        lowest = table[crit].min()
        for i, value in enumerate(table[crit]):
            if value == lowest:
                best[i].append(crit)
    table["best"] = [";".join(b) for b in best]
    return table
