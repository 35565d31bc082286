import numpy as np
import pytest

from hdnowcast import factors, nowcast, synthetic


def factor_panel(rng, T=200, n=50, r=2, noise=1.0):
    f = np.cumsum(rng.standard_normal((T, r)), axis=0)
    lam = rng.normal(size=(n, r))
    X = 10.0 + f @ lam.T + noise * rng.standard_normal((T, n))
    return X, f, lam


def r_squared(target, regressors):
    A = np.column_stack([np.ones(len(target)), regressors])
    res = target - A @ np.linalg.lstsq(A, target, rcond=None)[0]
    return 1 - res.var() / target.var()


def test_factor_space_recovered(rng):
    X, f, _ = factor_panel(rng, n=100)
    dec = factors.pca_nonstationary(X, 2)
    for k in range(2):
        assert r_squared(np.diff(f[:, k]), np.diff(dec.factors, axis=0)) > 0.95
    assert np.allclose(np.diff(dec.factors, axis=0).var(axis=0), 1.0)
    assert np.allclose(dec.factors.mean(axis=0), 0.0)


def test_single_series_panel(rng):
    x = np.cumsum(rng.standard_normal(80))[:, None]
    dec = factors.pca_nonstationary(x, 1)
    d = np.diff(x[:, 0])
    assert dec.loadings[0, 0] == pytest.approx(d.std())
    assert np.allclose(np.diff(dec.factors[:, 0]) * dec.loadings[0, 0], d - d.mean())


def test_loadings_scale_with_series_units(rng):
    X, _, _ = factor_panel(rng, n=20)
    scale = rng.uniform(0.5, 5.0, 20)
    a = factors.pca_nonstationary(X, 2)
    b = factors.pca_nonstationary(X * scale, 2)
    assert np.allclose(b.loadings, a.loadings * scale[:, None], rtol=1e-8)
    assert np.allclose(b.factors, a.factors, atol=1e-8)
    assert np.allclose(b.idio_var, a.idio_var * scale ** 2, rtol=1e-8)


def test_rank_and_input_errors(rng):
    X, _, _ = factor_panel(rng, n=3)
    with pytest.raises(factors.EstimationError, match="rank"):
        factors.pca_nonstationary(X, 4)
    bad = X.copy()
    bad[5, 1] = np.nan
    with pytest.raises(factors.EstimationError):
        factors.pca_nonstationary(bad, 1)
    const = X.copy()
    const[:, 0] = np.arange(X.shape[0])
    with pytest.raises(factors.EstimationError, match="constant"):
        factors.pca_nonstationary(const, 1)


def test_information_criteria(rng):
    noise = np.cumsum(rng.standard_normal((200, 60)), axis=0)
    assert factors.ic_bai_ng(noise, 8) == (0, 0, 0)
    X, _, _ = factor_panel(rng, n=60, noise=0.5)
    assert factors.ic_bai_ng(X, 8)[:2] == (2, 2)


def test_all_criteria_find_two_strong_factors():
    hits = np.zeros(3)
    for rep in range(50):
        rng = np.random.default_rng([21, rep])
        f = np.cumsum(rng.standard_normal((150, 2)), axis=0)
        lam = rng.uniform(1.0, 2.0, (2, 100)) * rng.choice([-1.0, 1.0], (2, 100))
        X = f @ lam + rng.standard_normal((150, 100)) * np.sqrt(0.5)
        hits += np.array(factors.ic_bai_ng(X, 8)) == 2
    assert (hits >= 45).all(), hits


def test_collapse_matches_gls(rng):
    lam = rng.normal(size=(15, 2))
    psi = rng.uniform(0.5, 2.0, 15)
    A, C = factors.collapse(lam, psi)
    assert np.allclose(A @ lam, np.eye(2))
    W = np.diag(1 / psi)
    assert np.allclose(C, np.linalg.inv(lam.T @ W @ lam))


def test_em_step_rejects_collinear_factors(rng):
    X, f, _ = factor_panel(rng, n=10)
    dec = factors.pca_nonstationary(X, 2)
    with pytest.raises(factors.EstimationError, match="collinear"):
        factors.em_iterate(dec, np.column_stack([f[:, 0], 2 * f[:, 0]]), X)
    upd = factors.em_iterate(dec, dec.factors, X)
    assert upd.loadings.shape == (10, 2)


def test_two_step_without_factors():
    spec, dec = factors.two_step(np.zeros((10, 3)), 0, include_cc=True)
    assert dec is None and spec.include_cc and not spec.include_gt


def test_two_step_i1_screen_flags_random_walk_components():
    found = false_flags = 0
    for seed in range(10):
        rng = np.random.default_rng(seed)
        X, _, _ = factor_panel(rng, T=300, n=100, r=1, noise=0.3)
        X[:, :3] += np.cumsum(0.5 * rng.standard_normal((300, 3)), axis=0)
        spec, _ = factors.two_step(X, 1, i1_screen=True)
        found += spec.i1_idio_mask[:3].sum()
        false_flags += spec.i1_idio_mask[3:].sum()
    assert found >= 24
    assert false_flags <= 50


def test_weekly_loadings_beat_monthly_when_sampling_is_weekly():
    cal = synthetic.weekly_calendar("2004-01", 120)
    n_weeks, n = cal.week_starts.size, 30
    wins = 0
    for rep in range(100):
        rng = np.random.default_rng(rep)
        lam = rng.uniform(0.5, 1.5, n)
        f = np.cumsum(rng.standard_normal(n_weeks))
        raw = 50 + np.outer(f, lam) + rng.standard_normal((n_weeks, n)) * rng.uniform(0.5, 1.5, n)
        Xw = raw - raw.min() + 1
        Xm = nowcast.aggregate_weekly(Xw, cal)
        sums, full, _ = nowcast.month_sums(Xw, cal)
        truth = lam * 100 / sums[full].max(axis=0)
        truth /= np.linalg.norm(truth)

        def error(loadings):
            v = loadings[:, 0] / np.linalg.norm(loadings[:, 0])
            return np.linalg.norm(v * np.sign(v @ truth) - truth)

        weekly, _ = factors.two_step(Xm, 1, weekly=(Xw, cal, None))
        monthly, _ = factors.two_step(Xm, 1)
        wins += error(weekly.loadings) < error(monthly.loadings)
    assert wins >= 60
