import numpy as np
import pytest

from survicl import cox
from survicl.errors import DomainError
from survicl.io import load_vendored
from survicl.kernels import python_backend

# statsmodels PHReg (Breslow ties) on the non-constant VETERAN columns, frozen
VETERAN_BETA = np.array([
    0.28993587878648713, -0.7886715344503719, -0.3318126596441152, -1.1882993132581607,
    -0.03262171851931938, -9.200172092138372e-05, -0.008549423606877821, 0.07232653676627165,
])
VETERAN_LLF = -475.1793988481964


def _veteran():
    ds = load_vendored("veteran")
    keep = ds.X.std(axis=0) > 0
    return ds.X[:, keep], ds.time, ds.event


def test_matches_reference_on_veteran():
    X, t, e = _veteran()
    m = cox.fit(X, t, e, ridge=0.0)
    np.testing.assert_allclose(m.beta, VETERAN_BETA, rtol=1e-6, atol=1e-9)
    assert m.fit_report["log_partial_likelihood"] == pytest.approx(VETERAN_LLF, rel=1e-10)
    assert m.fit_report["gradient_norm"] < 1e-8


def _brute_loglik(X, time, event, beta):
    lp = X @ beta
    ll = 0.0
    for i in np.flatnonzero(event):
        ll += lp[i] - np.log(np.exp(lp[time >= time[i]]).sum())
    return ll


def test_breslow_derivatives_against_brute_force():
    rng = np.random.default_rng(0)
    n, p = 40, 3
    X = rng.normal(size=(n, p))
    time = np.sort(rng.integers(1, 8, n).astype(float))
    event = rng.integers(0, 2, n).astype(np.int8)
    beta = rng.normal(size=p)
    ll, g, h = python_backend.breslow_derivatives(X, X @ beta, time, event)
    assert ll == pytest.approx(_brute_loglik(X, time, event, beta), rel=1e-12)
    eps = 1e-6
    num_g = np.array([(_brute_loglik(X, time, event, beta + eps * d) - _brute_loglik(X, time, event, beta - eps * d))
                      / (2 * eps) for d in np.eye(p)])
    np.testing.assert_allclose(g, num_g, rtol=1e-6, atol=1e-8)
    num_h = np.array([(python_backend.breslow_derivatives(X, X @ (beta + eps * d), time, event)[1]
                       - python_backend.breslow_derivatives(X, X @ (beta - eps * d), time, event)[1]) / (2 * eps)
                      for d in np.eye(p)])
    np.testing.assert_allclose(h, num_h, rtol=1e-5, atol=1e-7)


def test_objective_is_monotone():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(300, 4))
    t = rng.exponential(size=300) * np.exp(-X @ np.array([0.5, -1.0, 0.0, 0.3]))
    m = cox.fit(X, t, np.ones(300))
    assert np.all(np.diff(m.fit_report["objective_history"]) >= -1e-12)


def test_separation_is_capped():
    X = np.arange(1.0, 21.0)[:, None]
    t = np.arange(20.0, 0.0, -1.0)  # perfectly ordered
    m = cox.fit(X, t, np.ones(20), ridge=0.0)
    assert m.fit_report["separation"]
    assert np.all(np.abs(m.fit_report["standardized_beta"]) <= cox.BETA_CAP)


def test_survival_and_concordance():
    X, t, e = _veteran()
    m = cox.fit(X, t, e)
    grid = np.array([10.0, 100.0, 500.0])
    S = m.survival_matrix(X[:5], grid)
    assert S.shape == (5, 3) and np.all(np.diff(S, axis=1) <= 0) and np.all((S > 0) & (S <= 1))
    curve = cox.predict_survival(m, X[0], grid)
    np.testing.assert_allclose(curve.values, S[0])
    assert 0.7 < cox.concordance(m, X, t, e) < 0.8


def test_baseline_hazard_without_covariate_effect_is_nelson_aalen():
    t = np.array([1.0, 2.0, 2.0, 3.0, 4.0])
    e = np.array([1, 1, 0, 1, 0])
    H = cox._breslow_baseline(np.zeros((5, 1)), t, e, np.zeros(1))
    np.testing.assert_allclose(H.values, np.cumsum([1 / 5, 1 / 4, 1 / 2]))


def test_input_validation():
    with pytest.raises(DomainError):
        cox.fit(np.zeros((3, 1)), [1, 2, 3], [0, 0, 0])
    with pytest.raises(DomainError):
        cox.fit(np.zeros((3, 1)), [1, 2], [1, 1])
    with pytest.raises(DomainError):
        cox.fit(np.zeros((3, 1)), [1, 2, 3], [1, 1, 1], ridge=-1)
