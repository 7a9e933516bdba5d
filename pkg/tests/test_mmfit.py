# test_mmfit.py
import logging

import numpy as np
import pytest
from scipy.special import gammaln, xlogy

from mmfit import (
    COEF_COLUMNS,
    FitControl,
    FitError,
    PenalizedBlock,
    _reml_step,
    criteria,
    coefficient_table,
    family,
    fit,
    make_design,
    reparametrize,
)
from smooth import LatticeAdjacency, SplineConfig, bspline_basis, difference_penalty, mrf_penalty, smooth_term


def _lattice_5x5():
    pairs = []
    for r in range(5):
        for c in range(5):
            v = r * 5 + c
            if c < 4:
                pairs.append((v, v + 1))
            if r < 4:
                pairs.append((v, v + 5))
    return LatticeAdjacency.from_pairs(pairs)


def _smooth_block(x, inner_knots=6, name="s(x)"):
    term = smooth_term(name, x, SplineConfig(inner_knots=inner_knots))
    return PenalizedBlock(name, term.design, term.penalty), term


# ---- Reparametrisation ----
@pytest.mark.parametrize("kind", ["d1", "d2", "mrf"])
def test_reparametrisation_identities(kind):
    rng = np.random.default_rng(3)
    if kind == "mrf":
        K = mrf_penalty(_lattice_5x5()).matrix
    else:
        K = difference_penalty(12, int(kind[1])).matrix
    m = K.shape[0]
    X = rng.normal(size=(30, m))
    rb = reparametrize(X, K, kind)
    for _ in range(100):
        beta = rng.normal(size=m)
        beta_p, beta_q = rb.split(beta)
        np.testing.assert_allclose(rb.combine(beta_p, beta_q), beta, atol=1e-8)
        assert beta @ K @ beta == pytest.approx(beta_p @ beta_p, rel=1e-8, abs=1e-8)
        np.testing.assert_allclose(X @ beta, rb.X_plus @ beta_p + rb.X_minus @ beta_q, atol=1e-8)


def test_reparametrisation_null_dimensions():
    X = np.ones((4, 10))
    assert reparametrize(X, np.eye(10)).n_null == 0
    rb = reparametrize(X, difference_penalty(10, 2).matrix)
    assert rb.n_null == 2 and rb.n_pen == 8
    assert reparametrize(np.ones((4, 25)), mrf_penalty(_lattice_5x5()).matrix).n_null == 1


def test_reparametrisation_rejects_indefinite_penalty():
    with pytest.raises(FitError, match="negative eigenvalue"):
        reparametrize(np.ones((3, 2)), np.array([[1.0, 0.0], [0.0, -1.0]]), "bad")


def test_reparametrisation_rejects_asymmetric_penalty():
    with pytest.raises(FitError, match="not symmetric"):
        reparametrize(np.ones((3, 2)), np.array([[1.0, 1.0], [0.0, 1.0]]))


# ---- Unpenalised fits against closed forms ----
def test_gaussian_matches_normal_equations():
    rng = np.random.default_rng(0)
    n = 80
    X = np.column_stack([np.ones(n), rng.normal(size=n), rng.uniform(size=n)])
    y = X @ [1.0, -2.0, 0.5] + rng.normal(scale=0.3, size=n)
    res = fit(make_design(y, X, ["(Intercept)", "a", "b"]), family("gaussian"))
    ols = np.linalg.solve(X.T @ X, X.T @ y)
    np.testing.assert_allclose(res.coefficients, ols, atol=1e-8)
    assert res.edf == pytest.approx(3.0)
    rss = np.sum((y - X @ ols) ** 2)
    assert res.scale == pytest.approx(rss / (n - 3))
    np.testing.assert_allclose(res.covariance, res.scale * np.linalg.inv(X.T @ X), rtol=1e-8)
    assert res.converged and res.n_iter == 1


def test_poisson_intercept_with_offset():
    rng = np.random.default_rng(1)
    offset = np.log(rng.uniform(0.5, 3.0, size=50))
    y = rng.poisson(2.0 * np.exp(offset))
    res = fit(make_design(y, np.ones((50, 1)), ["(Intercept)"], offset=offset), family("poisson"))
    assert res.coefficients[0] == pytest.approx(np.log(y.sum() / np.exp(offset).sum()), abs=1e-10)
    assert res.converged


def test_gamma_log_intercept_is_the_mean():
    y = np.random.default_rng(5).gamma(shape=3.0, scale=2.0, size=60)
    res = fit(make_design(y, np.ones((60, 1)), ["(Intercept)"]), family("gamma"))
    assert np.exp(res.coefficients[0]) == pytest.approx(y.mean(), rel=1e-8)


def test_deviance_never_increases():
    rng = np.random.default_rng(2)
    x = rng.normal(size=200)
    y = rng.poisson(np.exp(0.3 + 0.8 * x))
    res = fit(make_design(y, np.column_stack([np.ones(200), x]), ["(Intercept)", "x"]), family("poisson"))
    h = res.deviance_history
    assert len(h) >= 2
    for prev, cur in zip(h, h[1:]):
        assert cur <= prev + 1e-10 * max(1.0, abs(prev))


def test_affine_recoding_leaves_fit_unchanged():
    rng = np.random.default_rng(4)
    x = rng.uniform(-1, 1, size=150)
    y = rng.poisson(np.exp(1.0 + 0.7 * x))
    a = fit(make_design(y, np.column_stack([np.ones(150), x]), ["(Intercept)", "x"]), family("poisson"))
    b = fit(make_design(y, np.column_stack([np.ones(150), 2 * x + 3]), ["(Intercept)", "x"]), family("poisson"))
    np.testing.assert_allclose(a.fitted, b.fitted, rtol=1e-8)
    assert b.coefficients[1] == pytest.approx(a.coefficients[1] / 2, rel=1e-6)


# ---- Penalised blocks ----
@pytest.fixture
def smooth_data():
    rng = np.random.default_rng(9)
    x = np.sort(rng.uniform(0, 1, size=120))
    y = np.sin(2 * np.pi * x) + rng.normal(scale=0.3, size=120)
    return x, y


def test_infinite_variance_reproduces_unpenalised_fit(smooth_data):
    x, y = smooth_data
    block, term = _smooth_block(x, inner_knots=5)
    design = make_design(y, np.ones((120, 1)), ["(Intercept)"], blocks=[block])
    res = fit(design, family("gaussian"), FitControl(fixed_sigma2={"s(x)": float("inf")}))
    full = np.column_stack([np.ones(120), term.design])
    coef, *_ = np.linalg.lstsq(full, y, rcond=None)
    np.testing.assert_allclose(res.fitted, full @ coef, atol=1e-7)
    assert res.edf == pytest.approx(full.shape[1], abs=1e-6)


def test_vanishing_variance_shrinks_to_null_space(smooth_data):
    x, y = smooth_data
    block, term = _smooth_block(x, inner_knots=5)
    design = make_design(y, np.ones((120, 1)), ["(Intercept)"], blocks=[block])
    res = fit(design, family("gaussian"), FitControl(fixed_sigma2={"s(x)": 1e-10}))
    assert np.max(np.abs(res.beta_p("s(x)"))) < 1e-3
    rb = reparametrize(term.design, term.penalty)
    null = np.column_stack([np.ones(120), rb.X_minus])
    coef, *_ = np.linalg.lstsq(null, y, rcond=None)
    np.testing.assert_allclose(res.fitted, null @ coef, atol=1e-4)
    assert res.edf_by_term["s(x)"] == pytest.approx(rb.n_null, abs=1e-3)


def test_edf_grows_with_variance(smooth_data):
    x, y = smooth_data
    block, _ = _smooth_block(x)
    design = make_design(y, np.ones((120, 1)), ["(Intercept)"], blocks=[block])
    edfs = [fit(design, family("gaussian"), FitControl(fixed_sigma2={"s(x)": s2})).edf for s2 in (1e-4, 1e-2, 1.0, 1e2)]
    assert all(b >= a - 1e-9 for a, b in zip(edfs, edfs[1:]))
    assert edfs[-1] > edfs[0]


def test_reml_estimates_a_smooth(smooth_data):
    x, y = smooth_data
    block, term = _smooth_block(x, inner_knots=10)
    res = fit(make_design(y, np.ones((120, 1)), ["(Intercept)"], blocks=[block]), family("gaussian"))
    assert res.converged
    assert 1e-8 <= res.sigma2["s(x)"] <= 1e8
    assert 3.0 < res.edf < 13.0
    truth = np.sin(2 * np.pi * x)
    assert np.sqrt(np.mean((res.fitted - truth) ** 2)) < 0.15
    beta = res.term_coefficients("s(x)")
    assert beta.shape == (term.design.shape[1],)
    np.testing.assert_allclose(res.fitted, res.coefficients[0] + term.design @ beta, atol=1e-8)


def _dense_reml_step(X, Zs, est, z, w, sigma2, scale):
    n = z.size
    V = scale * np.diag(1.0 / w)
    for Zj, s2 in zip(Zs, sigma2):
        V += s2 * Zj @ Zj.T
    Vi = np.linalg.inv(V)
    P = Vi - Vi @ X @ np.linalg.solve(X.T @ Vi @ X, X.T @ Vi)
    Pz = P @ z
    score = np.array([-0.5 * np.trace(P @ Zs[j] @ Zs[j].T) + 0.5 * np.sum((Zs[j].T @ Pz) ** 2) for j in est])
    info = np.array([[0.5 * np.sum((Zs[j].T @ P @ Zs[l]) ** 2) for l in est] for j in est])
    s2 = sigma2[est]
    step = np.clip(np.linalg.pinv(info * np.outer(s2, s2)) @ (s2 * score), -5.0, 5.0)
    out = sigma2.copy()
    out[est] = np.exp(np.log(s2) + step)
    return out


def test_reml_step_matches_marginal_covariance_form():
    rng = np.random.default_rng(21)
    n = 40
    X = np.column_stack([np.ones(n), rng.normal(size=n)])
    Z1, Z2 = rng.normal(size=(n, 6)), rng.normal(size=(n, 4))
    C = np.hstack([X, Z1, Z2])
    pen_cols = [np.arange(2, 8), np.arange(8, 12)]
    z = rng.normal(size=n)
    w = rng.uniform(0.5, 2.0, size=n)
    sigma2 = np.array([0.7, 2.0])
    for est in ([0, 1], [1]):
        got = _reml_step(C, pen_cols, est, z, w, sigma2, 1.3)
        want = _dense_reml_step(X, [Z1, Z2], est, z, w, sigma2, 1.3)
        np.testing.assert_allclose(got, want, rtol=1e-8)


# ---- Criteria and tables ----
def test_poisson_criteria_by_hand():
    y = np.random.default_rng(6).poisson(3.0, size=40).astype(float)
    res = fit(make_design(y, np.ones((40, 1)), ["(Intercept)"]), family("poisson"))
    mu = np.full(40, y.mean())
    ll = np.sum(xlogy(y, mu) - mu - gammaln(y + 1))
    dev = 2 * np.sum(xlogy(y, y / mu) - (y - mu))
    c = criteria(res)
    assert c.loglik == pytest.approx(ll, abs=1e-6)
    assert c.aic == pytest.approx(-2 * ll + 2, abs=1e-6)
    assert c.bic == pytest.approx(-2 * ll + np.log(40), abs=1e-6)
    assert c.gcv == pytest.approx(40 * dev / 39 ** 2, abs=1e-6)


def test_gaussian_aic_matches_classical_formula():
    rng = np.random.default_rng(8)
    n = 50
    X = np.column_stack([np.ones(n), rng.normal(size=n)])
    y = X @ [2.0, 1.0] + rng.normal(size=n)
    res = fit(make_design(y, X, ["(Intercept)", "x"]), family("gaussian"))
    rss = np.sum((y - res.fitted) ** 2)
    classical = n * np.log(2 * np.pi * rss / n) + n + 2 * 2
    assert criteria(res).aic == pytest.approx(classical, abs=1e-6)


def test_nested_models_deviance_order():
    rng = np.random.default_rng(10)
    x = rng.normal(size=100)
    y = rng.poisson(np.exp(0.5 + 0.4 * x))
    small = fit(make_design(y, np.ones((100, 1)), ["(Intercept)"]), family("poisson"))
    big = fit(make_design(y, np.column_stack([np.ones(100), x]), ["(Intercept)", "x"]), family("poisson"))
    assert big.deviance <= small.deviance + 1e-9


def test_criteria_undefined_when_edf_reaches_n():
    res = fit(make_design([3.0, 5.0], np.eye(2), ["a", "b"]), family("poisson"))
    with pytest.raises(FitError, match="GCV undefined"):
        criteria(res)


def test_intercept_only_coefficient_table():
    y = np.random.default_rng(12).normal(10.0, 2.0, size=30)
    res = fit(make_design(y, np.ones((30, 1)), ["(Intercept)"]), family("gaussian"))
    table = coefficient_table(res)
    assert list(table.columns) == COEF_COLUMNS
    assert table.index.name == "term"
    assert table.loc["(Intercept)", "Estimate"] == pytest.approx(y.mean())
    assert table.loc["(Intercept)", "Std. Error"] == pytest.approx(y.std(ddof=1) / np.sqrt(30))
    assert 0.0 <= table.loc["(Intercept)", "Pr(>|t|)"] <= 1.0


# ---- Errors, logging and iteration control ----
def test_invalid_poisson_response():
    with pytest.raises(FitError, match="invalid response"):
        fit(make_design([1.0, -1.0], np.ones((2, 1)), ["(Intercept)"]), family("poisson"))


def test_unknown_family_and_link():
    with pytest.raises(FitError, match="unknown family"):
        family("binomial")
    with pytest.raises(FitError, match="unknown link"):
        family("poisson", "logit")


def test_empty_design():
    with pytest.raises(FitError, match="empty design"):
        fit(make_design([], np.zeros((0, 1)), ["(Intercept)"]), family("gaussian"))


def test_fixed_variance_for_unknown_block():
    with pytest.raises(FitError, match="unknown block"):
        fit(make_design([1.0, 2.0], np.ones((2, 1)), ["(Intercept)"]), family("gaussian"),
            FitControl(fixed_sigma2={"s(z)": 1.0}))


def test_mismatched_design_rows():
    with pytest.raises(FitError, match="rows"):
        make_design([1.0, 2.0, 3.0], np.ones((3, 1)), ["(Intercept)"], offset=[0.0, 0.0])


def test_iteration_log_line(caplog):
    y = np.array([1.0, 4.0, 2.0, 0.0, 3.0])
    with caplog.at_level(logging.INFO, logger="snr"):
        fit(make_design(y, np.ones((5, 1)), ["(Intercept)"]), family("poisson"))
    assert "iter=1 deviance=" in caplog.text
    assert "max_rel_change=" in caplog.text


def test_iteration_cap_returns_unconverged_estimates(caplog):
    x = np.linspace(-1, 1, 30)
    y = np.round(np.exp(1 + x))
    with caplog.at_level(logging.WARNING, logger="snr"):
        res = fit(make_design(y, np.column_stack([np.ones(30), x]), ["(Intercept)", "x"]), family("poisson"),
                  FitControl(max_outer_iter=1))
    assert not res.converged
    assert res.n_iter == 1
    assert "did not converge" in caplog.text


def test_basis_rows_reproduce_smooth_term_prediction():
    x = np.linspace(0, 1, 25)
    cfg = SplineConfig(inner_knots=4, domain=(0.0, 1.0))
    term = smooth_term("s(x)", x, cfg)
    np.testing.assert_allclose(term.predict_design(x), bspline_basis(x, cfg) @ term.transform)
