# mmfit.py
"""
Estimation engine for structured network regression.

Exponential-family likelihoods (poisson / gaussian / gamma, log or identity
link), mixed-model reparametrisation of penalised blocks, IWLS for the
coefficients, REML Fisher scoring for the variance parameters and the usual
fit criteria.

Working model per outer iteration:

    z = C θ + ε,   ε ~ N(0, ψ W⁻¹),   β_j^(p) ~ N(0, σ_j² I)

with C = [Z | W | X⁻_1 | X⁺_1 | ...]. The coefficient update solves

    (Cᵀ W C + ψ D) θ = Cᵀ W z,   D = blockdiag(0, I/σ_j²)
"""
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field
from scipy import linalg, stats
from scipy.special import gammaln, xlogy

from config import SNR_MAX_OUTER_ITER, SNR_TOL, get_logger

logger = get_logger("mmfit")

SIGMA2_MIN = 1e-8
SIGMA2_MAX = 1e8
RIDGE_JITTER = 1e-10
# largest log-variance move per Fisher step
_MAX_LOG_STEP = 5.0


class FitError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Families
# ---------------------------------------------------------------------------
class FamilyName(str, Enum):
    POISSON = "poisson"
    GAUSSIAN = "gaussian"
    GAMMA = "gamma"


class Link(str, Enum):
    LOG = "log"
    IDENTITY = "identity"


DEFAULT_LINKS = {
    FamilyName.POISSON: Link.LOG,
    FamilyName.GAUSSIAN: Link.IDENTITY,
    FamilyName.GAMMA: Link.LOG,
}


@dataclass(frozen=True)
class Family:
    name: FamilyName
    link: Link

    @property
    def fixed_scale(self) -> bool:
        return self.name == FamilyName.POISSON

    @property
    def is_linear(self) -> bool:
        return self.name == FamilyName.GAUSSIAN and self.link == Link.IDENTITY

    # ---- link ----
    def linkfun(self, mu: np.ndarray) -> np.ndarray:
        return np.log(mu) if self.link == Link.LOG else np.asarray(mu, dtype=float)

    def linkinv(self, eta: np.ndarray) -> np.ndarray:
        return np.exp(eta) if self.link == Link.LOG else np.asarray(eta, dtype=float)

    def mu_eta(self, eta: np.ndarray) -> np.ndarray:
        """dμ/dη"""
        return np.exp(eta) if self.link == Link.LOG else np.ones_like(eta, dtype=float)

    # ---- distribution ----
    def variance(self, mu: np.ndarray) -> np.ndarray:
        if self.name == FamilyName.POISSON:
            return mu
        if self.name == FamilyName.GAMMA:
            return mu * mu
        return np.ones_like(mu, dtype=float)

    def valid_mu(self, mu: np.ndarray) -> bool:
        if not np.all(np.isfinite(mu)):
            return False
        if self.name == FamilyName.GAUSSIAN:
            return True
        return bool(np.all(mu > 0))

    def validate(self, y: np.ndarray) -> None:
        if not np.all(np.isfinite(y)):
            raise FitError("invalid response: non-finite values")
        if self.name == FamilyName.POISSON and np.any(y < 0):
            raise FitError("invalid response: poisson counts must be >= 0")
        if self.name == FamilyName.GAMMA and np.any(y <= 0):
            raise FitError("invalid response: gamma response must be > 0")

    def init_mu(self, y: np.ndarray) -> np.ndarray:
        if self.name == FamilyName.POISSON:
            return y + 0.1
        if self.name == FamilyName.GAUSSIAN and self.link == Link.LOG:
            return np.where(y > 0, y, 0.1)
        return y.astype(float)

    def init_scale(self, y: np.ndarray) -> float:
        if self.fixed_scale:
            return 1.0
        if self.name == FamilyName.GAMMA:
            cv2 = np.var(y) / max(np.mean(y) ** 2, 1e-12)
            return float(cv2) if cv2 > 0 else 1.0
        v = float(np.var(y))
        return v if v > 0 else 1.0

    def deviance(self, y: np.ndarray, mu: np.ndarray, w: np.ndarray) -> float:
        if self.name == FamilyName.POISSON:
            return float(2.0 * np.sum(w * (xlogy(y, y / mu) - (y - mu))))
        if self.name == FamilyName.GAMMA:
            return float(2.0 * np.sum(w * (-np.log(y / mu) + (y - mu) / mu)))
        return float(np.sum(w * (y - mu) ** 2))

    def loglik(self, y: np.ndarray, mu: np.ndarray, w: np.ndarray, scale: float) -> float:
        """
        poisson: Σ w (y log μ − μ − log y!)
        gaussian: profile ψ = deviance / n
        gamma: shape 1/ψ with ψ the estimated scale
        """
        if self.name == FamilyName.POISSON:
            return float(np.sum(w * (xlogy(y, mu) - mu - gammaln(y + 1.0))))
        if self.name == FamilyName.GAUSSIAN:
            n = y.size
            psi = self.deviance(y, mu, w) / n
            return float(np.sum(stats.norm.logpdf(y, loc=mu, scale=np.sqrt(psi / w))))
        shape = 1.0 / scale
        return float(np.sum(w * stats.gamma.logpdf(y, a=shape, scale=mu / shape)))


def family(name: str, link: Optional[str] = None) -> Family:
    try:
        fam = FamilyName(name)
    except ValueError:
        raise FitError(f"unknown family {name!r} (expected poisson, gaussian or gamma)") from None
    try:
        lk = Link(link) if link is not None else DEFAULT_LINKS[fam]
    except ValueError:
        raise FitError(f"unknown link {link!r} (expected log or identity)") from None
    return Family(fam, lk)


# ---------------------------------------------------------------------------
# Design
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class PenalizedBlock:
    name: str
    X: np.ndarray
    K: np.ndarray


@dataclass(frozen=True)
class ModelDesign:
    response: np.ndarray
    offset: np.ndarray
    Z: np.ndarray
    z_names: Tuple[str, ...]
    W: np.ndarray
    w_names: Tuple[str, ...]
    blocks: Tuple[PenalizedBlock, ...] = ()
    weights: Optional[np.ndarray] = None
    row_ids: Tuple = ()

    def __post_init__(self):
        n = self.response.shape[0]
        if self.offset.shape[0] != n:
            raise FitError(f"offset has {self.offset.shape[0]} rows, response has {n}")
        for label, M, names in (("Z", self.Z, self.z_names), ("W", self.W, self.w_names)):
            if M.shape[0] != n:
                raise FitError(f"{label} has {M.shape[0]} rows, response has {n}")
            if M.shape[1] != len(names):
                raise FitError(f"{label} has {M.shape[1]} columns but {len(names)} names")
        for block in self.blocks:
            if block.X.shape[0] != n:
                raise FitError(f"block '{block.name}' has {block.X.shape[0]} rows, response has {n}")
            if block.K.shape != (block.X.shape[1], block.X.shape[1]):
                raise FitError(f"block '{block.name}': penalty {block.K.shape} does not match {block.X.shape[1]} columns")
        if self.weights is not None and self.weights.shape[0] != n:
            raise FitError("weights length does not match the response")

    @property
    def n(self) -> int:
        return int(self.response.shape[0])

    @property
    def fixed_names(self) -> Tuple[str, ...]:
        return self.z_names + self.w_names


def _as_columns(M) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    return M.reshape(-1, 1) if M.ndim == 1 else M


def make_design(
    response: Sequence[float],
    Z: np.ndarray,
    z_names: Sequence[str],
    offset: Optional[Sequence[float]] = None,
    W: Optional[np.ndarray] = None,
    w_names: Sequence[str] = (),
    blocks: Sequence[PenalizedBlock] = (),
    weights: Optional[Sequence[float]] = None,
    row_ids: Sequence = (),
) -> ModelDesign:
    y = np.asarray(response, dtype=float)
    n = y.shape[0]
    Z = _as_columns(Z)
    W = np.zeros((n, 0)) if W is None else _as_columns(W)
    return ModelDesign(
        response=y,
        offset=np.zeros(n) if offset is None else np.asarray(offset, dtype=float),
        Z=Z,
        z_names=tuple(z_names),
        W=W,
        w_names=tuple(w_names),
        blocks=tuple(blocks),
        weights=None if weights is None else np.asarray(weights, dtype=float),
        row_ids=tuple(row_ids),
    )


# ---------------------------------------------------------------------------
# Mixed-model reparametrisation
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class ReparamBlock:
    """
    K = Γ Λ Γᵀ. X^(p) = Γ₊ Λ₊^(-1/2), X^(q) = null-space eigenvectors,
    so β = X^(p) β^(p) + X^(q) β^(q) and βᵀ K β = β^(p)ᵀ β^(p).
    """
    name: str
    X_plus: np.ndarray
    X_minus: np.ndarray
    Xp: np.ndarray
    Xq: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def n_pen(self) -> int:
        return self.Xp.shape[1]

    @property
    def n_null(self) -> int:
        return self.Xq.shape[1]

    def split(self, beta: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        beta = np.asarray(beta, dtype=float)
        pos = self.eigenvalues > 0
        lam = self.eigenvalues[pos]
        beta_p = np.sqrt(lam) * (self.eigenvectors[:, pos].T @ beta)
        beta_q = self.eigenvectors[:, ~pos].T @ beta
        return beta_p, beta_q

    def combine(self, beta_p: np.ndarray, beta_q: np.ndarray) -> np.ndarray:
        return self.Xp @ np.asarray(beta_p, dtype=float) + self.Xq @ np.asarray(beta_q, dtype=float)

    @property
    def transform(self) -> np.ndarray:
        """Maps [β^(q), β^(p)] (the column order used in the fit) to β."""
        return np.hstack((self.Xq, self.Xp))


def reparametrize(X: np.ndarray, K: np.ndarray, name: str = "") -> ReparamBlock:
    X = np.asarray(X, dtype=float)
    K = np.asarray(K, dtype=float)
    m = K.shape[0]
    if K.ndim != 2 or K.shape[1] != m:
        raise FitError(f"block '{name}': penalty must be square, got {K.shape}")
    if X.ndim != 2 or X.shape[1] != m:
        raise FitError(f"block '{name}': design has {X.shape[-1]} columns, penalty is {m}x{m}")
    scale = max(1.0, float(np.abs(K).max())) if m else 1.0
    if not np.allclose(K, K.T, atol=1e-10 * scale, rtol=0.0):
        raise FitError(f"block '{name}': penalty matrix is not symmetric")

    vals, vecs = linalg.eigh((K + K.T) / 2.0)
    tol = 1e-9 * max(1.0, float(np.abs(vals).max(initial=0.0)))
    if np.any(vals < -tol):
        raise FitError(f"block '{name}': penalty has negative eigenvalue {vals.min():.3g} (not positive semi-definite)")
    pos = vals > tol
    vals = np.where(pos, vals, 0.0)

    Xp = vecs[:, pos] / np.sqrt(vals[pos])
    Xq = vecs[:, ~pos]
    return ReparamBlock(
        name=name,
        X_plus=X @ Xp,
        X_minus=X @ Xq,
        Xp=Xp,
        Xq=Xq,
        eigenvalues=vals,
        eigenvectors=vecs,
    )


# ---------------------------------------------------------------------------
# Control & result
# ---------------------------------------------------------------------------
class FitControl(BaseModel):
    model_config = ConfigDict(frozen=True)

    max_outer_iter: int = Field(SNR_MAX_OUTER_ITER, ge=1)
    tol: float = Field(SNR_TOL, gt=0)
    reml_tol: float = Field(SNR_TOL, gt=0)
    max_halving: int = Field(30, ge=0)
    init_sigma2: float = Field(1.0, gt=0)
    # block name -> fixed σ²; float("inf") switches the penalty off
    fixed_sigma2: Dict[str, float] = Field(default_factory=dict)


@dataclass(frozen=True)
class FittedBlock:
    name: str
    start: int
    n_null: int
    n_pen: int
    transform: np.ndarray
    sigma2: float
    edf: float

    @property
    def stop(self) -> int:
        return self.start + self.n_null + self.n_pen


@dataclass(frozen=True)
class FitResult:
    family: Family
    coef_names: Tuple[str, ...]
    coefficients: np.ndarray
    covariance: np.ndarray
    n_z: int
    n_w: int
    blocks: Tuple[FittedBlock, ...]
    scale: float
    edf: float
    edf_by_term: Dict[str, float]
    loglik: float
    deviance: float
    fitted: np.ndarray
    linear_predictor: np.ndarray
    response: np.ndarray
    offset: np.ndarray
    converged: bool
    n_iter: int
    final_change: float
    deviance_history: Tuple[float, ...] = ()
    row_ids: Tuple = ()

    @property
    def n(self) -> int:
        return int(self.response.shape[0])

    @property
    def hat_trace(self) -> float:
        return self.edf

    @property
    def sigma2(self) -> Dict[str, float]:
        return {b.name: b.sigma2 for b in self.blocks}

    @property
    def fixed_names(self) -> Tuple[str, ...]:
        return self.coef_names[: self.n_z + self.n_w]

    @property
    def std_errors(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))

    @property
    def gamma(self) -> Dict[str, float]:
        return dict(zip(self.coef_names[: self.n_z], self.coefficients[: self.n_z]))

    @property
    def xi(self) -> Dict[str, float]:
        lo, hi = self.n_z, self.n_z + self.n_w
        return dict(zip(self.coef_names[lo:hi], self.coefficients[lo:hi]))

    def block(self, name: str) -> FittedBlock:
        for b in self.blocks:
            if b.name == name:
                return b
        raise FitError(f"no penalized block named '{name}'")

    def beta_p(self, name: str) -> np.ndarray:
        b = self.block(name)
        return self.coefficients[b.start + b.n_null: b.stop]

    def beta_q(self, name: str) -> np.ndarray:
        b = self.block(name)
        return self.coefficients[b.start: b.start + b.n_null]

    def term_coefficients(self, name: str) -> np.ndarray:
        """Block coefficients back in the block's design coordinates."""
        b = self.block(name)
        return b.transform @ self.coefficients[b.start: b.stop]

    def term_covariance(self, name: str) -> np.ndarray:
        b = self.block(name)
        sub = self.covariance[b.start: b.stop, b.start: b.stop]
        return b.transform @ sub @ b.transform.T

    def coef(self, name: str) -> float:
        try:
            return float(self.coefficients[self.coef_names.index(name)])
        except ValueError:
            raise FitError(f"unknown coefficient '{name}'") from None


# ---------------------------------------------------------------------------
# Linear algebra helpers
# ---------------------------------------------------------------------------
def _factor(H: np.ndarray):
    try:
        return linalg.cho_factor(H, lower=False, check_finite=True)
    except linalg.LinAlgError:
        pass
    jitter = RIDGE_JITTER * max(1.0, float(np.mean(np.abs(np.diag(H))))) if H.size else RIDGE_JITTER
    logger.warning(f"singular penalized system, adding ridge jitter {jitter:.1e}")
    try:
        return linalg.cho_factor(H + jitter * np.eye(H.shape[0]), lower=False)
    except linalg.LinAlgError:
        raise FitError("singular penalized system (design columns are linearly dependent)") from None


def _penalty_diag(n_fixed: int, blocks: Sequence[ReparamBlock], sigma2: Sequence[float]) -> np.ndarray:
    parts = [np.zeros(n_fixed)]
    for block, s2 in zip(blocks, sigma2):
        parts.append(np.zeros(block.n_null))
        parts.append(np.full(block.n_pen, 0.0 if np.isinf(s2) else 1.0 / s2))
    return np.concatenate(parts)


def _reml_step(
    C: np.ndarray,
    pen_cols: List[np.ndarray],
    est: List[int],
    z: np.ndarray,
    w: np.ndarray,
    sigma2: np.ndarray,
    scale: float,
) -> np.ndarray:
    """
    One Fisher-scoring step on log σ_j² for the blocks in ``est`` using the
    restricted likelihood of the weighted working model. Returns the new σ².

    Works on the p × p mixed-model equations

        H = Cᵀ W C / ψ + blockdiag(0, I/σ_j²),   T = H⁻¹,

    where ``pen_cols[j]`` are the random columns of group j:

        Z_jᵀ P z   = b̂_j / σ_j²
        Z_jᵀ P Z_l = δ_jl I / σ_j² − T_jl / (σ_j² σ_l²)
    """
    p = C.shape[1]
    d = np.zeros(p)
    for cols, s2 in zip(pen_cols, sigma2):
        d[cols] = 1.0 / s2
    CW = C * (w / scale)[:, None]
    H = CW.T @ C + np.diag(d)
    cf = _factor(H)
    T = linalg.cho_solve(cf, np.eye(p))
    theta = T @ (CW.T @ z)

    k = len(est)
    score = np.empty(k)
    info = np.empty((k, k))
    for a, j in enumerate(est):
        cj, sj = pen_cols[j], sigma2[j]
        b_j = theta[cj]
        ZPZ_jj = np.eye(cj.size) / sj - T[np.ix_(cj, cj)] / (sj * sj)
        score[a] = -0.5 * np.trace(ZPZ_jj) + 0.5 * float(b_j @ b_j) / (sj * sj)
        for b, l in enumerate(est):
            cl, sl = pen_cols[l], sigma2[l]
            ZPZ = -T[np.ix_(cj, cl)] / (sj * sl)
            if j == l:
                ZPZ = ZPZ + np.eye(cj.size) / sj
            info[a, b] = 0.5 * float(np.sum(ZPZ ** 2))

    s2 = sigma2[est]
    score_tau = s2 * score
    info_tau = info * np.outer(s2, s2)
    step = np.linalg.pinv(info_tau, hermitian=True) @ score_tau
    step = np.clip(step, -_MAX_LOG_STEP, _MAX_LOG_STEP)

    out = sigma2.copy()
    out[est] = np.clip(np.exp(np.log(s2) + step), SIGMA2_MIN, SIGMA2_MAX)
    return out


# ---------------------------------------------------------------------------
# Fit
# ---------------------------------------------------------------------------
def fit(design: ModelDesign, fam: Family, control: Optional[FitControl] = None) -> FitResult:
    """
    Penalised IWLS for θ alternating with one REML Fisher step on σ² per outer
    iteration. Stops when both the relative coefficient change and the
    log-variance change fall below tolerance; returns converged=False with
    the current estimates when the iteration cap is hit.
    """
    control = control or FitControl()
    y = design.response
    n = design.n
    if n == 0:
        raise FitError("empty design (no observations)")
    fam.validate(y)
    prior_w = np.ones(n) if design.weights is None else design.weights
    if np.any(prior_w < 0) or not np.all(np.isfinite(prior_w)):
        raise FitError("observation weights must be finite and >= 0")

    unknown = set(control.fixed_sigma2) - {b.name for b in design.blocks}
    if unknown:
        raise FitError(f"fixed_sigma2 names unknown block(s): {', '.join(sorted(unknown))}")
    bad = [k for k, v in control.fixed_sigma2.items() if not v > 0]
    if bad:
        raise FitError(f"fixed_sigma2 must be > 0 (inf switches a penalty off): {', '.join(sorted(bad))}")

    reparams = [reparametrize(b.X, b.K, b.name) for b in design.blocks]
    n_fixed = design.Z.shape[1] + design.W.shape[1]
    columns = [design.Z, design.W]
    names: List[str] = list(design.fixed_names)
    # random (penalized) columns of each block within C
    pen_cols: List[np.ndarray] = []
    start = n_fixed
    for rb in reparams:
        columns += [rb.X_minus, rb.X_plus]
        names += [f"{rb.name}.null{k}" for k in range(rb.n_null)]
        names += [f"{rb.name}.pen{k}" for k in range(rb.n_pen)]
        pen_cols.append(np.arange(start + rb.n_null, start + rb.n_null + rb.n_pen))
        start += rb.n_null + rb.n_pen
    C = np.hstack(columns) if columns else np.zeros((n, 0))
    p = C.shape[1]
    if p == 0:
        raise FitError("model has no coefficients")

    sigma2 = np.array([control.fixed_sigma2.get(rb.name, control.init_sigma2) for rb in reparams], dtype=float)
    est = [j for j, rb in enumerate(reparams) if rb.name not in control.fixed_sigma2 and rb.n_pen > 0]
    reml_groups = [j for j, rb in enumerate(reparams) if not np.isinf(sigma2[j]) and rb.n_pen > 0]

    offset = design.offset
    scale = fam.init_scale(y)
    mu = fam.init_mu(y)
    eta = fam.linkfun(mu)
    theta: Optional[np.ndarray] = None
    history: List[float] = []
    converged = False
    change = np.inf
    iteration = 0

    def penalized_deviance(th: np.ndarray, d: np.ndarray) -> Tuple[float, np.ndarray, np.ndarray]:
        e = offset + C @ th
        m = fam.linkinv(e)
        if not fam.valid_mu(m):
            return np.inf, e, m
        return fam.deviance(y, m, prior_w) + scale * float(th @ (d * th)), e, m

    for iteration in range(1, control.max_outer_iter + 1):
        d_eta = fam.mu_eta(eta)
        var = fam.variance(mu)
        w = prior_w * d_eta ** 2 / var
        if not np.all(np.isfinite(w)):
            raise FitError("non-finite working weights (separation or overflow)")
        z = (eta - offset) + (y - mu) / d_eta

        # (b) REML for σ² on the current working model
        new_sigma2 = sigma2
        if est:
            rg = [pen_cols[j] for j in reml_groups]
            est_local = [reml_groups.index(j) for j in est]
            updated = _reml_step(C, rg, est_local, z, w, sigma2[reml_groups], scale)
            new_sigma2 = sigma2.copy()
            new_sigma2[reml_groups] = updated
        sigma_change = float(np.max(np.abs(np.log(new_sigma2[est]) - np.log(sigma2[est])))) if est else 0.0
        sigma2 = new_sigma2

        # (a) penalised weighted least squares
        dpen = _penalty_diag(n_fixed, reparams, sigma2)
        CW = C * w[:, None]
        H = CW.T @ C + scale * np.diag(dpen)
        cf = _factor(H)
        theta_new = linalg.cho_solve(cf, CW.T @ z)

        pdev_new, eta_new, mu_new = penalized_deviance(theta_new, dpen)
        if theta is not None:
            pdev_old, _, _ = penalized_deviance(theta, dpen)
            halvings = 0
            while pdev_new > pdev_old + 1e-10 * max(1.0, abs(pdev_old)) and halvings < control.max_halving:
                theta_new = 0.5 * (theta + theta_new)
                pdev_new, eta_new, mu_new = penalized_deviance(theta_new, dpen)
                halvings += 1
            if pdev_new > pdev_old + 1e-10 * max(1.0, abs(pdev_old)):
                logger.warning(f"step-halving failed to reduce the penalized deviance at iter={iteration}")
                theta_new, pdev_new = theta, pdev_old
                eta_new, mu_new = penalized_deviance(theta, dpen)[1:]
        if not fam.valid_mu(mu_new):
            raise FitError("fitted means left the valid range for the family (non-finite or non-positive)")

        if theta is None:
            # an unpenalized linear model is solved exactly by the first step
            change = 0.0 if fam.is_linear and not est and not np.any(dpen) else np.inf
        else:
            change = float(np.max(np.abs(theta_new - theta))) / max(1.0, float(np.max(np.abs(theta_new))))
        theta, eta, mu = theta_new, eta_new, mu_new
        history.append(pdev_new)

        if not fam.fixed_scale:
            edf_now = float(p - scale * np.sum(np.diag(linalg.cho_solve(cf, np.eye(p))) * dpen))
            scale = fam.deviance(y, mu, prior_w) / max(n - edf_now, 1.0)
            scale = max(scale, 1e-12)

        logger.info(
            f"iter={iteration} deviance={fam.deviance(y, mu, prior_w):.6g} "
            f"max_rel_change={change:.3g} sigma2=[{', '.join(f'{s:.4g}' for s in sigma2)}]"
        )
        if change < control.tol and sigma_change < control.reml_tol:
            converged = True
            break

    if not converged:
        logger.warning(f"fit did not converge after {iteration} outer iterations (max_rel_change={change:.3g})")

    # final quantities at θ̂
    d_eta = fam.mu_eta(eta)
    w = prior_w * d_eta ** 2 / fam.variance(mu)
    dpen = _penalty_diag(n_fixed, reparams, sigma2)
    CW = C * w[:, None]
    H = CW.T @ C + scale * np.diag(dpen)
    H_inv = linalg.cho_solve(_factor(H), np.eye(p))
    # F = H⁻¹ CᵀWC = I − ψ H⁻¹ D, exactly 1 on unpenalised columns
    edf_diag = 1.0 - scale * np.diag(H_inv) * dpen
    edf = float(np.sum(edf_diag))
    deviance = fam.deviance(y, mu, prior_w)
    if not fam.fixed_scale:
        scale = max(deviance / max(n - edf, 1.0), 1e-12)
    covariance = scale * H_inv

    edf_by_term: Dict[str, float] = {name: float(edf_diag[k]) for k, name in enumerate(names[:n_fixed])}
    fitted_blocks: List[FittedBlock] = []
    start = n_fixed
    for rb, s2 in zip(reparams, sigma2):
        stop = start + rb.n_null + rb.n_pen
        term_edf = float(np.sum(edf_diag[start:stop]))
        edf_by_term[rb.name] = term_edf
        fitted_blocks.append(FittedBlock(rb.name, start, rb.n_null, rb.n_pen, rb.transform, float(s2), term_edf))
        start = stop

    return FitResult(
        family=fam,
        coef_names=tuple(names),
        coefficients=theta if theta is not None else np.zeros(0),
        covariance=covariance,
        n_z=design.Z.shape[1],
        n_w=design.W.shape[1],
        blocks=tuple(fitted_blocks),
        scale=float(scale),
        edf=edf,
        edf_by_term=edf_by_term,
        loglik=fam.loglik(y, mu, prior_w, scale),
        deviance=deviance,
        fitted=mu,
        linear_predictor=eta,
        response=y,
        offset=offset,
        converged=converged,
        n_iter=iteration,
        final_change=float(change),
        deviance_history=tuple(history),
        row_ids=design.row_ids,
    )


# ---------------------------------------------------------------------------
# Criteria and tables
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class Criteria:
    aic: float
    bic: float
    gcv: float
    edf: float
    loglik: float


def criteria(result: FitResult, n: Optional[int] = None) -> Criteria:
    """AIC = −2ℓ + 2 edf, BIC = −2ℓ + log(n) edf, GCV = n D / (n − edf)²."""
    n = result.n if n is None else int(n)
    if result.edf >= n:
        raise FitError(f"edf {result.edf:.3f} >= n={n}: GCV undefined")
    ll = result.loglik
    return Criteria(
        aic=-2.0 * ll + 2.0 * result.edf,
        bic=-2.0 * ll + np.log(n) * result.edf,
        gcv=n * result.deviance / (n - result.edf) ** 2,
        edf=result.edf,
        loglik=ll,
    )


COEF_COLUMNS = ["Estimate", "Std. Error", "t value", "Pr(>|t|)"]


def coefficient_table(result: FitResult) -> pd.DataFrame:
    """
    One row per fixed and graph-statistic coefficient. Two-sided p-values use
    the standard normal reference distribution.
    """
    k = result.n_z + result.n_w
    est = result.coefficients[:k]
    se = result.std_errors[:k]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(se > 0, est / se, np.nan)
    pval = 2.0 * stats.norm.sf(np.abs(t))
    return pd.DataFrame(
        {COEF_COLUMNS[0]: est, COEF_COLUMNS[1]: se, COEF_COLUMNS[2]: t, COEF_COLUMNS[3]: pval},
        index=pd.Index(result.fixed_names, name="term"),
    )
