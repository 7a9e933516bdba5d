# smooth.py
"""
P-spline and lattice (MRF) building blocks.

B-spline bases on equally spaced knots, difference penalties, graph-Laplacian
penalties for lattice effects and the zero-mean identifiability transform.
"""
from dataclasses import dataclass
from typing import Callable, Dict, Hashable, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.interpolate import BSpline
from scipy.sparse.csgraph import connected_components

# slack for x values that sit on the domain boundary up to rounding
_DOMAIN_RTOL = 1e-10


class SmoothError(ValueError):
    pass


class SplineConfig(BaseModel):
    """
    degree l, number of inner knots (r - 1), difference order d and the
    covariate domain [lo, hi]. m = l + r basis functions.
    """
    model_config = ConfigDict(frozen=True)

    degree: int = Field(3, ge=0, le=5)
    inner_knots: int = Field(20, ge=1)
    order: int = Field(2, ge=1, le=3)
    domain: Optional[Tuple[float, float]] = None

    @model_validator(mode="after")
    def _check_domain(self):
        if self.domain is not None:
            lo, hi = self.domain
            if not (np.isfinite(lo) and np.isfinite(hi)):
                raise ValueError("spline domain must be finite")
            if not lo < hi:
                raise ValueError(f"degenerate spline domain [{lo}, {hi}]")
        return self

    @property
    def n_intervals(self) -> int:
        return self.inner_knots + 1

    @property
    def n_basis(self) -> int:
        return self.degree + self.n_intervals

    def with_domain(self, lo: float, hi: float) -> "SplineConfig":
        return self.model_copy(update={"domain": (float(lo), float(hi))})

    def knots(self) -> np.ndarray:
        """ζ_0 .. ζ_τ padded with ``degree`` equally spaced knots on each side."""
        if self.domain is None:
            raise SmoothError("spline domain not set")
        lo, hi = self.domain
        dx = (hi - lo) / self.n_intervals
        inner = np.linspace(lo, hi, self.n_intervals + 1)
        left = lo - dx * np.arange(self.degree, 0, -1)
        right = hi + dx * np.arange(1, self.degree + 1)
        return np.concatenate((left, inner, right))


@dataclass(frozen=True)
class PenaltyMatrix:
    matrix: np.ndarray
    null_dim: int

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def quadratic_form(self, beta: np.ndarray) -> float:
        beta = np.asarray(beta, dtype=float)
        return float(beta @ self.matrix @ beta)


# -----------------------------
# B-spline basis
# -----------------------------
def bspline_basis(x: Sequence[float], config: SplineConfig) -> np.ndarray:
    """
    Rows = observations, columns = the m B-spline basis functions evaluated by
    the de Boor recursion. Every row sums to one inside the domain.
    """
    if config.domain is None:
        raise SmoothError("spline domain not set")
    lo, hi = config.domain
    if not lo < hi:
        raise SmoothError(f"degenerate spline domain [{lo}, {hi}]")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.size == 0:
        return np.zeros((0, config.n_basis))
    if not np.all(np.isfinite(x)):
        raise SmoothError("non-finite covariate values")

    slack = _DOMAIN_RTOL * (hi - lo)
    outside = (x < lo - slack) | (x > hi + slack)
    if outside.any():
        bad = x[outside][0]
        raise SmoothError(f"value {bad:g} outside the spline domain [{lo:g}, {hi:g}]")
    x = np.clip(x, lo, hi)

    basis = BSpline.design_matrix(x, config.knots(), config.degree)
    return basis.toarray()


# -----------------------------
# Penalties
# -----------------------------
def difference_penalty(m: int, d: int = 2) -> PenaltyMatrix:
    """K = DᵀD with D the order-d difference operator on m coefficients."""
    if d < 0:
        raise SmoothError(f"difference order must be >= 0, got {d}")
    if m <= d:
        raise SmoothError(f"need more basis functions than the difference order (m={m}, d={d})")
    D = np.diff(np.eye(m), n=d, axis=0)
    return PenaltyMatrix(matrix=D.T @ D, null_dim=d)


@dataclass(frozen=True)
class LatticeAdjacency:
    regions: Tuple[Hashable, ...]
    neighbors: Dict[Hashable, frozenset]

    def __post_init__(self):
        known = set(self.regions)
        if len(known) != len(self.regions):
            raise SmoothError("duplicate region ids in lattice")
        for r, nbrs in self.neighbors.items():
            if r not in known:
                raise SmoothError(f"unknown region {r!r} in lattice")
            if r in nbrs:
                raise SmoothError(f"region {r!r} listed as its own neighbour")
            for s in nbrs:
                if s not in known:
                    raise SmoothError(f"unknown region {s!r} in lattice")
                if r not in self.neighbors.get(s, frozenset()):
                    raise SmoothError(f"asymmetric adjacency: {r!r} -> {s!r} has no reverse entry")

    @classmethod
    def from_pairs(cls, pairs: Iterable[Tuple[Hashable, Hashable]], regions: Optional[Iterable[Hashable]] = None) -> "LatticeAdjacency":
        """Undirected neighbour pairs (each pair listed once or twice)."""
        pairs = list(pairs)
        ordered: List[Hashable] = list(regions) if regions is not None else []
        seen = set(ordered)
        for a, b in pairs:
            for r in (a, b):
                if r not in seen:
                    seen.add(r)
                    ordered.append(r)
        nbrs: Dict[Hashable, set] = {r: set() for r in ordered}
        for a, b in pairs:
            if a == b:
                raise SmoothError(f"region {a!r} listed as its own neighbour")
            nbrs[a].add(b)
            nbrs[b].add(a)
        return cls(tuple(ordered), {r: frozenset(s) for r, s in nbrs.items()})

    @classmethod
    def from_neighbors(cls, neighbors: Mapping[Hashable, Iterable[Hashable]]) -> "LatticeAdjacency":
        """Explicit neighbour lists; must already be symmetric."""
        regions = tuple(neighbors)
        return cls(regions, {r: frozenset(neighbors[r]) for r in regions})

    def index(self) -> Dict[Hashable, int]:
        return {r: i for i, r in enumerate(self.regions)}

    def matrix(self) -> np.ndarray:
        idx = self.index()
        A = np.zeros((len(self.regions), len(self.regions)))
        for r, nbrs in self.neighbors.items():
            for s in nbrs:
                A[idx[r], idx[s]] = 1.0
        return A


def mrf_penalty(adjacency: Union[LatticeAdjacency, np.ndarray]) -> PenaltyMatrix:
    """
    Graph Laplacian of the lattice: neighbour counts on the diagonal, -1 for
    neighbours. Null space = constants per connected lattice component.
    """
    if isinstance(adjacency, LatticeAdjacency):
        A = adjacency.matrix()
    else:
        A = np.asarray(adjacency, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise SmoothError("adjacency matrix must be square")
        if not np.array_equal(A, A.T):
            raise SmoothError("asymmetric adjacency input")
        if np.any(np.diag(A) != 0):
            raise SmoothError("adjacency must be irreflexive")
        A = (A != 0).astype(float)
    K = np.diag(A.sum(axis=1)) - A
    n_comp, _ = connected_components(A, directed=False)
    return PenaltyMatrix(matrix=K, null_dim=int(n_comp))


# -----------------------------
# Identifiability
# -----------------------------
@dataclass(frozen=True)
class CenteredBasis:
    """
    Reduced basis X Q (one column fewer) whose fitted vectors have zero mean
    over the observations; beta = Q @ beta_c recovers full-length coefficients.
    """
    matrix: np.ndarray
    transform: np.ndarray
    constraint: np.ndarray

    def back_transform(self, beta_c: np.ndarray) -> np.ndarray:
        return self.transform @ np.asarray(beta_c, dtype=float)

    def project(self, beta: np.ndarray) -> np.ndarray:
        return self.transform.T @ np.asarray(beta, dtype=float)


def center_term(basis: np.ndarray) -> CenteredBasis:
    basis = np.asarray(basis, dtype=float)
    if basis.ndim != 2 or basis.shape[1] < 2:
        raise SmoothError("centering needs a basis with at least two columns")
    c = basis.mean(axis=0)
    if np.linalg.norm(c) < 1e-12:
        raise SmoothError("rank-deficient centering constraint (column means are all zero)")
    # complete QR of the constraint vector: columns 2.. span its orthogonal complement
    Q_full, _ = np.linalg.qr(c.reshape(-1, 1), mode="complete")
    Q = Q_full[:, 1:]
    return CenteredBasis(matrix=basis @ Q, transform=Q, constraint=c)


# -----------------------------
# Model terms
# -----------------------------
@dataclass(frozen=True)
class PenalizedTerm:
    """
    A centred penalised block of the predictor: design X (rows = observations),
    penalty K in the centred coordinates and the map from raw covariate values
    to the uncentred basis for prediction.
    """
    name: str
    kind: str                      # "pspline" | "mrf"
    design: np.ndarray
    penalty: np.ndarray
    transform: np.ndarray
    basis_fn: Callable[[Sequence], np.ndarray]
    config: Optional[SplineConfig] = None
    regions: Tuple[Hashable, ...] = ()

    def predict_design(self, values: Sequence) -> np.ndarray:
        return self.basis_fn(values) @ self.transform

    @property
    def n_coef(self) -> int:
        return self.design.shape[1]


def smooth_term(name: str, x: Sequence[float], config: Optional[SplineConfig] = None) -> PenalizedTerm:
    """P-spline term; the domain defaults to the observed range of ``x``."""
    config = config or SplineConfig()
    x = np.asarray(x, dtype=float)
    if config.domain is None:
        if x.size == 0:
            raise SmoothError(f"smooth '{name}': no observations")
        config = config.with_domain(float(x.min()), float(x.max()))
    B = bspline_basis(x, config)
    centered = center_term(B)
    K = difference_penalty(config.n_basis, config.order).matrix
    Q = centered.transform
    return PenalizedTerm(
        name=name,
        kind="pspline",
        design=centered.matrix,
        penalty=Q.T @ K @ Q,
        transform=Q,
        basis_fn=lambda values, _cfg=config: bspline_basis(values, _cfg),
        config=config,
    )


def lattice_basis(regions_of_rows: Sequence[Hashable], adjacency: LatticeAdjacency) -> np.ndarray:
    """Indicator design: row i has a one in the column of its region."""
    idx = adjacency.index()
    X = np.zeros((len(regions_of_rows), len(adjacency.regions)))
    for i, r in enumerate(regions_of_rows):
        if r not in idx:
            raise SmoothError(f"region {r!r} is not part of the lattice")
        X[i, idx[r]] = 1.0
    return X


def lattice_term(name: str, regions_of_rows: Sequence[Hashable], adjacency: LatticeAdjacency) -> PenalizedTerm:
    B = lattice_basis(regions_of_rows, adjacency)
    centered = center_term(B)
    K = mrf_penalty(adjacency).matrix
    Q = centered.transform
    return PenalizedTerm(
        name=name,
        kind="mrf",
        design=centered.matrix,
        penalty=Q.T @ K @ Q,
        transform=Q,
        basis_fn=lambda values, _adj=adjacency: lattice_basis(values, _adj),
        regions=adjacency.regions,
    )
