import numpy as np
import pytest

from hdnowcast import ssm
from helpers import oracle_cases, random_data, random_model
from oracles import dense_moments, flat_prior_loglik


def local_level(q=1.0, h=2.0, diffuse=True):
    return ssm.StateSpaceModel(np.ones((1, 1)), np.ones((1, 1)), np.ones((1, 1)), np.array([[q]]),
                               np.array([[h]]), np.zeros(1), np.zeros((1, 1)) if diffuse else np.array([[5.0]]),
                               np.array([diffuse]))


def test_loglik_matches_dense_gaussian_density():
    for model, parts, y, ref in oracle_cases(seed=1, count=25):
        out = ssm.filter(model, y)
        assert abs(out.loglik - ref) < 1e-8
        assert abs(ssm.loglik(model, y) - ref) < 1e-8


def test_no_diffuse_states_gives_full_gaussian_density(rng):
    for _ in range(10):
        model, parts = random_model(rng)
        model = model.replace(diffuse=np.zeros(model.m, bool), P1=np.eye(model.m), a1=np.zeros(model.m))
        parts = (*parts[:5], np.zeros(model.m), np.eye(model.m), np.zeros(model.m, bool))
        y = random_data(rng, 12, model.p)
        mu, S, X, rows = dense_moments(*parts, 12)
        yv = np.array([y[t, i] for t, i in rows])
        ok = ~np.isnan(yv)
        ref = flat_prior_loglik(yv[ok], mu[ok], S[np.ix_(ok, ok)], X[ok])
        assert model.d == 0
        assert abs(ssm.loglik(model, y) - ref) < 1e-8


def test_fully_missing_rows_contribute_nothing(rng):
    model, parts = random_model(rng, n=12)
    model = model.replace(diffuse=np.zeros(model.m, bool), P1=np.eye(model.m), a1=np.zeros(model.m))
    y = random_data(rng, 12, model.p, miss=0.0)
    y[-1] = np.nan
    out = ssm.filter(model, y)
    assert np.isnan(out.innovations[-1]).all()
    assert ssm.loglik(model, y) == pytest.approx(ssm.loglik(model, y[:-1]), abs=1e-12)


def test_filtered_covariances_symmetric_psd(rng):
    for model, _, y, _ in oracle_cases(seed=3, count=5):
        out = ssm.filter(model, y)
        for P in out.filtered_cov:
            assert np.allclose(P, P.T, atol=1e-10)
            assert np.linalg.eigvalsh(P).min() > -1e-8


def test_large_kappa_approaches_exact_diffuse():
    rng = np.random.default_rng(7)
    model = ssm.StateSpaceModel(np.array([[1.0, 0.0]]), np.array([[1.0, 1.0], [0.0, 1.0]]),
                                np.array([[0.0], [1.0]]), np.array([[0.3]]), np.array([[1.0]]),
                                np.zeros(2), np.zeros((2, 2)), np.ones(2, bool))
    y, _ = ssm.simulate(model, 60, rng)
    exact = ssm.filter(model, y)
    errs = []
    for kappa in (1e3, 1e5, 1e7):
        approx = ssm.filter(model, y, kappa=kappa)
        errs.append(np.abs(approx.filtered_state[5:] - exact.filtered_state[5:]).max())
        assert abs(approx.loglik - exact.loglik) < 1e-2
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 1e-4


def test_noiseless_constant_series_does_not_raise():
    model = local_level(q=0.0, h=0.0)
    out = ssm.filter(model, np.full((6, 1), 3.0))
    assert np.allclose(out.filtered_state[:, 0], 3.0)


def test_degenerate_filter_names_time():
    model = local_level(q=0.0, h=0.0)
    y = np.array([[1.0], [1.0], [2.0], [2.0]])
    with pytest.raises(ssm.FilterDegeneracyError) as exc:
        ssm.filter(model, y)
    assert exc.value.t == 2


@pytest.mark.parametrize("bad", [
    dict(Q=np.array([[-1.0]])),
    dict(H=np.array([[1.0, 0.5], [0.5, 1.0]]), Z=np.ones((2, 1))),
    dict(P1=np.array([[1.0]])),
    dict(T=np.ones((2, 2))),
    dict(Q=np.array([[1.0, 0.0], [0.0, 1.0]])),
])
def test_invalid_models_rejected(bad):
    base = dict(Z=np.ones((1, 1)), T=np.ones((1, 1)), R=np.ones((1, 1)), Q=np.eye(1), H=np.eye(1),
                a1=np.zeros(1), P1=np.zeros((1, 1)), diffuse=np.ones(1, bool))
    base.update(bad)
    with pytest.raises(ssm.ConfigurationError):
        ssm.StateSpaceModel(**base)


def test_data_width_checked():
    with pytest.raises(ssm.ConfigurationError):
        ssm.filter(local_level(), np.zeros((5, 2)))


def test_standardized_innovations_are_standard_normal():
    rng = np.random.default_rng(11)
    model = ssm.StateSpaceModel(np.array([[1.0, 0.0], [1.0, 1.0]]), np.array([[1.0, 0.0], [0.0, 0.6]]),
                                np.eye(2), np.diag([0.5, 1.0]), np.diag([1.0, 0.5]), np.zeros(2),
                                np.diag([0.0, 1 / (1 - 0.36)]), np.array([True, False]))
    y, _ = ssm.simulate(model, 4000, rng)
    e = ssm.standardized_innovations(ssm.filter(model, y))
    assert np.isnan(e[: model.d]).all()
    e = e[model.d:]
    assert np.abs(e.mean(axis=0)).max() < 0.06
    assert np.abs(np.cov(e.T) - np.eye(2)).max() < 0.06


def test_simulate_shapes_and_initial_draw(rng):
    model, _ = random_model(rng)
    y, states = ssm.simulate(model, 9, rng)
    assert y.shape == (9, model.p) and states.shape == (9, model.m)


def test_kernel_model_matches_loglik(rng):
    model, _ = random_model(rng)
    model = model.replace(burn_in=1)
    y = random_data(rng, 12, model.p, miss=0.1)
    km = ssm.KernelModel(model)
    assert km.loglik(y, model.RQR, np.diag(model.H)) == pytest.approx(ssm.loglik(model, y), abs=1e-10)


def test_time_varying_loading_matches_dense(rng):
    from helpers import oracle_cases as oc
    count = 0
    for model, parts, y, ref in oc(seed=21, count=30):
        if model.Z.ndim == 3:
            count += 1
            assert abs(ssm.loglik(model, y) - ref) < 1e-8
    assert count >= 3


def _output_with(v, F):
    v = np.atleast_2d(np.asarray(v, float))
    F = np.asarray(F, float).reshape(1, v.shape[1], v.shape[1])
    z = np.zeros((1, 1))
    return ssm.FilterOutput(z, z[None], z, z[None], v, F, 0.0, 0, np.zeros(1, bool))


def test_standardization_scalar_and_diagonal():
    assert ssm.standardized_innovations(_output_with([2.0], [[4.0]]))[0, 0] == pytest.approx(1.0, abs=1e-10)
    e = ssm.standardized_innovations(_output_with([1.0, 3.0], np.diag([1.0, 9.0])))
    assert np.allclose(e[0], [1.0, 1.0], atol=1e-10)


def test_noiseless_known_level_is_constant():
    model = ssm.StateSpaceModel(np.ones((1, 1)), np.ones((1, 1)), np.ones((1, 1)), np.zeros((1, 1)),
                                np.zeros((1, 1)), np.array([5.0]), np.zeros((1, 1)), np.zeros(1, bool))
    out = ssm.filter(model, np.full((8, 1), 5.0))
    assert np.allclose(out.filtered_state, 5.0)
    assert np.allclose(out.filtered_cov, 0.0)


def test_missing_observation_leaves_prediction_unchanged():
    model = local_level(q=1.0, h=1.0)
    y, _ = ssm.simulate(model, 10, np.random.default_rng(2))
    y[4] = np.nan
    out = ssm.filter(model, y)
    assert out.filtered_state[4, 0] == out.predicted_state[4, 0]
    assert out.filtered_cov[4, 0, 0] == out.predicted_cov[4, 0, 0]


def test_loglik_invariant_to_observation_permutation(rng):
    for model, _, y, _ in oracle_cases(seed=5, count=10):
        if model.p < 2 or model.Z.ndim == 3:
            continue
        perm = rng.permutation(model.p)
        permuted = model.replace(Z=model.Z[perm], H=model.H[np.ix_(perm, perm)])
        assert ssm.loglik(permuted, y[:, perm]) == pytest.approx(ssm.loglik(model, y), abs=1e-9)


def test_loglik_drops_when_noise_inflated():
    rng = np.random.default_rng(9)
    model = local_level(q=1.0, h=0.05)
    y, _ = ssm.simulate(model, 100, rng)
    assert ssm.loglik(model.replace(H=model.H * 100), y) < ssm.loglik(model, y)


def test_random_walk_plus_noise_conditional_density():
    rng = np.random.default_rng(4)
    model = local_level(q=1.0, h=1.0)
    y, _ = ssm.simulate(model, 10, rng)
    parts = (model.Z, model.T, model.R, model.Q, model.H, model.a1, model.P1, model.diffuse)
    from oracles import dense_conditional_loglik
    assert ssm.loglik(model, y) == pytest.approx(dense_conditional_loglik(parts, y, 1), abs=1e-8)
