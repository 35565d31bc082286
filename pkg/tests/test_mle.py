import numpy as np
import pytest

from hdnowcast import lf_model as lf
from hdnowcast import mcsim, mle, ssm


def dgp_data(rho, rep, seed=0):
    spec = mcsim.DgpSpec(rho=rho, seed=seed)
    draw = mcsim.simulate_dgp(spec, mcsim.replication_rng(seed, rep))
    data, fam, _ = mcsim.projected_data(draw.y, draw.X)
    return data, fam


@pytest.mark.parametrize("kind,value", [("scale", 2.5), ("corr", -0.7), ("real", -3.0)])
def test_transform_round_trip(kind, value):
    p = mle.Param("x", kind)
    assert p.from_free(p.to_free(value)) == pytest.approx(value, rel=1e-12)


def test_bfgs_minimizes_quadratic():
    A = np.array([[3.0, 1.0], [1.0, 2.0]])
    b = np.array([1.0, -1.0])
    x, fx, conv, _, _ = mle.bfgs(lambda x: 0.5 * x @ A @ x - b @ x, np.zeros(2), gtol=1e-8, ftol=0)
    assert conv
    assert np.allclose(x, np.linalg.solve(A, b), atol=1e-5)


def test_infeasible_start_rejected():
    with pytest.raises(mle.ParameterError):
        mle.bfgs(lambda x: np.inf, np.zeros(1))


def test_correlation_estimate_consistent():
    hits = 0
    for rep in range(100):
        data, fam = dgp_data(0.8, rep, seed=3)
        res = mle.fit(fam, data, mcsim._moment_init(data[:, 0]))
        hits += abs(res.params["rho"] - 0.8) <= 0.15
    assert hits >= 80


def test_fit_ascends_from_start():
    data, fam = dgp_data(0.5, 1)
    init = mcsim._moment_init(data[:, 0])
    res = mle.fit(fam, data, init)
    assert res.loglik >= fam.loglik(init, data)
    assert res.converged


def test_zero_seasonal_variance_drifts_to_boundary():
    hp = lf.HyperParams(sigma_R_y=1.0, sigma_omega_y=0.0, sigma_lambda=0.5,
                        sigma_nu=np.array([1.0, 1.0, 1.0, 1.0, 1.0]), delta=0.3)
    c = np.full((185, 5), 5.0)
    spec = lf.ModelSpec()
    model = lf.build(spec, hp, c)
    y, _ = ssm.simulate(model, 185, np.random.default_rng(8), a1=np.r_[450.0, np.zeros(29)])
    fam = lf.LabourForceFamily(spec, c, y)
    init = lf.default_init(spec, y)
    res = mle.fit(fam, y, init)
    assert res.params["sigma_omega_y"] < 1e-3


def test_lr_identical_models_give_zero():
    data, fam = dgp_data(0.0, 2)
    fit = mle.fit(fam, data, mcsim._moment_init(data[:, 0]))
    res = mle.lr_from_fits(fit, fit, 1, "none")
    assert res.statistic == 0.0 and res.pvalue == 1.0


def test_lr_rejects_under_strong_correlation():
    rejections = 0
    for rep in range(200):
        data, fam = dgp_data(0.9, rep, seed=5)
        data[-1, 0] = np.nan
        res = mle.lr_test(fam, data, mcsim._moment_init(data[:, 0]), ["rho"])
        rejections += res.pvalue < 0.05
    assert rejections >= 180


def test_lr_raises_when_restricted_fit_is_better():
    a = mle.EstimationResult({}, -10.0, True, 1, 0.0, np.zeros(0))
    b = mle.EstimationResult({}, -12.0, True, 1, 0.0, np.zeros(0))
    with pytest.raises(mle.OptimizerFailure):
        mle.lr_from_fits(a, b, 1, "h")


def test_boundary_correlation_is_flagged():
    class Family:
        params = (mle.Param("rho", "corr"),)

        def loglik(self, v, y):
            return 50.0 * v["rho"]

    res = mle.fit(Family(), None, {"rho": 0.0}, max_iter=50)
    assert res.warnings and "boundary" in res.warnings[0]


def test_warm_start_near_unit_correlation_recovers():
    data, fam = dgp_data(0.99, 105, seed=0)
    good = mle.fit(fam, data, mcsim._moment_init(data[:, 0]))
    stuck = dict(good.params, rho=0.99999, sigma_eps=5.0)
    res = mle.fit(fam, data, stuck)
    assert res.loglik == pytest.approx(good.loglik, abs=1e-3)
