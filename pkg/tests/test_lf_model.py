import numpy as np
import pytest

from hdnowcast import lf_model as lf
from hdnowcast import ssm
from hdnowcast.mle import ParameterError


def hyper(**kw):
    base = dict(sigma_R_y=1.5, sigma_omega_y=0.3, sigma_lambda=0.6, sigma_nu=np.array([1.0, 1.1, 0.9, 1.0, 1.2]),
                delta=0.3, sigma_R_cc=1.0, sigma_omega_cc=0.2, sigma_eps_cc=1.5, rho_cc=0.5,
                rho_gt=np.array([0.4]), rho_cc_gt=np.array([0.2]))
    base.update(kw)
    return lf.HyperParams(**base)


def gt_spec(n=8, r=1, seed=0, **kw):
    rng = np.random.default_rng(seed)
    return lf.ModelSpec(include_gt=True, r=r, loadings=rng.normal(size=(n, r)),
                        idio_var=rng.uniform(0.5, 1.5, n), **kw)


def design(n=40, seed=0):
    return 8.0 + np.random.default_rng(seed).uniform(-1, 1, (n, lf.N_WAVES))


def test_baseline_dimensions():
    model = lf.build(lf.ModelSpec(), hyper(), design())
    assert (model.m, model.p, model.d) == (30, 5, 17)
    assert len(lf.param_list(lf.ModelSpec())) == 9


@pytest.mark.parametrize("spec,count", [
    (lf.ModelSpec(include_cc=True), 13),
    (gt_spec(r=2), 11),
    (gt_spec(r=2, include_cc=True, all_corr=True), 17),
])
def test_parameter_counts(spec, count):
    assert len(lf.param_list(spec)) == count


def test_theta_weights_select_level_and_cosines():
    w = lf.theta_weights(30)
    assert np.flatnonzero(w).tolist() == [0, 2, 4, 6, 8, 10, 12]


def test_theta_invariant_to_rotation_bias_shift():
    hp = hyper()
    c = design(60)
    model = lf.build(lf.ModelSpec(), hp, c)
    y, _ = ssm.simulate(model, 60, np.random.default_rng(3), a1=np.r_[450.0, np.zeros(29)])
    shifted = y.copy()
    shifted[:, 1:] += np.array([4.0, -3.0, 7.0, 2.5])
    w = lf.theta_weights(model.m)
    a = ssm.filter(model, y).filtered_state @ w
    b = ssm.filter(model, shifted).filtered_state @ w
    assert np.abs(a[model.d:] - b[model.d:]).max() < 1e-7


def test_theta_variance_equals_submatrix_sum():
    model = lf.build(lf.ModelSpec(), hyper(), design(30))
    y, _ = ssm.simulate(model, 30, np.random.default_rng(1), a1=np.r_[450.0, np.zeros(29)])
    out = ssm.filter(model, y)
    idx = [0, 2, 4, 6, 8, 10, 12]
    w = lf.theta_weights(model.m)
    P = out.filtered_cov[-1]
    assert w @ P @ w == pytest.approx(P[np.ix_(idx, idx)].sum(), rel=1e-12)


def test_survey_error_initial_variances():
    hp = hyper(delta=0.5)
    v = lf.survey_error_variances(hp)
    nu2 = hp.sigma_nu ** 2
    assert v[0] == pytest.approx(nu2[0])
    assert np.allclose(v[1:5], nu2[1:] / 0.75)
    assert np.allclose(v[5:9], v[:4]) and np.allclose(v[9:13], v[:4])


def test_missing_design_error_masks_cell():
    c = design(10)
    c[3, 2] = np.nan
    y = np.full((10, 5), 400.0)
    obs = lf.observations(lf.ModelSpec(), y, c)
    assert np.isnan(obs[3, 2]) and not np.isnan(obs[3, [0, 1, 3, 4]]).any()
    lf.build(lf.ModelSpec(), hyper(), c)  # missing scale does not break the build


def test_nonpositive_design_error_rejected():
    c = design(10)
    c[4, 1] = 0.0
    with pytest.raises(lf.DataError, match="row 4"):
        lf.build(lf.ModelSpec(), hyper(), c)


def test_infeasible_correlations_raise():
    spec = gt_spec(include_cc=True, all_corr=True)
    with pytest.raises(ParameterError, match="PSD"):
        lf.build(spec, hyper(rho_cc=0.9, rho_gt=np.array([0.9]), rho_cc_gt=np.array([-0.9])), design())
    with pytest.raises(ParameterError):
        lf.build(lf.ModelSpec(), hyper(delta=1.0), design())


def test_collapsed_loglik_equals_full_panel_loglik():
    rng = np.random.default_rng(5)
    n_t = 50
    spec = gt_spec(n=10, include_cc=True, seed=2)
    full = lf.ModelSpec(**{**spec.__dict__, "collapse": False})
    hp = hyper()
    c = design(n_t)
    model_full = lf.build(full, hp, c)
    data_full, _ = ssm.simulate(model_full, n_t, rng)
    y, xcc, X = data_full[:, :5], data_full[:, 5], data_full[:, 6:]
    ll_full = ssm.loglik(model_full, data_full)
    fam = lf.LabourForceFamily(spec, c, lf.observations(spec, y, c, xcc, X), X)
    ll_coll = fam.loglik(hp.to_dict(), fam.data)
    assert ll_coll == pytest.approx(ll_full, abs=1e-7)


def test_factor_lag_extension():
    spec = lf.extend_factor_lags(gt_spec(), 2)
    model = lf.build(spec, hyper(kappa=np.array([0.3, -0.1])), design())
    assert model.m == 30 + 3
    assert len(lf.param_list(spec)) == 9 + 1 + 2
    with pytest.raises(ssm.ConfigurationError):
        lf.build(spec, hyper(kappa=np.array([0.3])), design())


def test_arima_extension_and_invalid_form():
    spec = lf.extend_factor_arima(gt_spec(), 0.5, 0.2, 0.1, 0.3)
    model = lf.build(spec, hyper(), design())
    assert model.m == 34
    with pytest.raises(ParameterError):
        lf.extend_factor_arima(gt_spec(), 0.5, 0.0, 0.1, 0.3)


def test_i1_idiosyncratic_promotion():
    mask = np.zeros(8, bool)
    mask[[1, 4]] = True
    spec = lf.promote_i1_idiosyncratics(gt_spec(), mask)
    model = lf.build(spec, hyper(), design())
    lay = lf.layout(spec)
    assert model.m == 30 + 1 + 2 and model.p == 5 + 1 + 2
    assert model.diffuse[lay.idio:lay.idio + 2].all()
    with pytest.raises(ssm.ConfigurationError):
        lf.promote_i1_idiosyncratics(gt_spec(), np.ones(3, bool))


def test_hyperparams_round_trip():
    hp = hyper(kappa=np.array([0.1, 0.2]))
    back = lf.HyperParams.from_dict(hp.to_dict())
    assert back.to_dict() == hp.to_dict()


def test_specification_errors():
    with pytest.raises(ssm.ConfigurationError):
        lf.ModelSpec(include_gt=True, r=0, loadings=np.ones((3, 1)), idio_var=np.ones(3))
    with pytest.raises(ssm.ConfigurationError):
        lf.ModelSpec(include_cc=True, all_corr=True)
    with pytest.raises(ssm.ConfigurationError):
        gt_spec(r=2, factor_lags=1)


def test_promoting_true_i1_idiosyncratic_raises_loglik():
    hp = hyper(rho_gt=np.array([0.3]))
    n, n_t = 6, 80
    mask = np.zeros(n, bool)
    mask[0] = True
    wins = 0
    for rep in range(50):
        rng = np.random.default_rng(100 + rep)
        lam = rng.uniform(0.5, 1.5, (n, 1))
        promoted = lf.ModelSpec(include_gt=True, r=1, loadings=lam, idio_var=np.full(n, 0.5),
                                i1_idio_mask=mask, collapse=False)
        c = design(n_t, rep)
        model_p = lf.build(promoted, hp, c)
        data, states = ssm.simulate(model_p, n_t, rng, a1=np.r_[450.0, np.zeros(model_p.m - 1)])
        y = data[:, :5]
        X = np.column_stack([data[:, -1], data[:, 5:-1]])  # panel in original series order
        psi = np.full(n, 0.5)
        psi[0] = 0.5 + states[:, lf.layout(promoted).idio].var()
        plain = lf.ModelSpec(include_gt=True, r=1, loadings=lam, idio_var=psi, collapse=False)
        model_u = lf.build(plain, hp, c)
        burn = model_p.d
        ll_p = ssm.loglik(model_p.replace(burn_in=burn), lf.observations(promoted, y, c, X_gt=X))
        ll_u = ssm.loglik(model_u.replace(burn_in=burn), lf.observations(plain, y, c, X_gt=X))
        wins += ll_p > ll_u
    assert wins >= 45
