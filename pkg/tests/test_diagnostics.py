import numpy as np
import pytest
from scipy import stats

from hdnowcast import diagnostics as dg
from hdnowcast import lf_model as lf
from hdnowcast import ssm
from oracles import bowman_shenton_reference


def rejection_rate(draw, test, reps=1000, seed=0):
    rng = np.random.default_rng(seed)
    return np.mean([test(draw(rng))[1] < 0.05 for _ in range(reps)])


@pytest.mark.parametrize("test", [dg.shapiro_wilk, dg.bowman_shenton])
def test_size_at_survey_length(test):
    assert abs(rejection_rate(lambda r: r.standard_normal(167), test) - 0.05) <= 0.02


@pytest.mark.parametrize("test", [dg.shapiro_wilk, dg.bowman_shenton])
def test_power_against_skewed_and_heavy_tails(test):
    assert rejection_rate(lambda r: r.standard_exponential(167), test, reps=300) >= 0.95
    assert rejection_rate(lambda r: r.standard_t(4, 500), test, reps=300) >= 0.9


def test_symmetric_three_point_sample():
    w, p = dg.shapiro_wilk([-1.0, 0.0, 1.0])
    assert w == pytest.approx(1.0, abs=1e-6) and p > 0.05


def test_bowman_shenton_zero_for_exact_normal_moments():
    # symmetric, and kurtosis n/2 = 3 for two outer points among six
    stat, p = dg.bowman_shenton([-1.0, 0.0, 0.0, 0.0, 0.0, 1.0])
    assert stat == pytest.approx(0.0, abs=1e-10) and p == pytest.approx(1.0)


def test_bowman_shenton_matches_jarque_bera(rng):
    x = rng.standard_t(5, 200)
    assert dg.bowman_shenton(x)[0] == pytest.approx(bowman_shenton_reference(x)[0], rel=1e-10)


def test_affine_invariance(rng):
    x = rng.standard_exponential(100)
    for test in (dg.shapiro_wilk, dg.bowman_shenton):
        assert test(3.0 * x - 7.0)[0] == pytest.approx(test(x)[0], rel=1e-9)


def test_input_errors():
    with pytest.raises(ValueError):
        dg.shapiro_wilk([1.0, 2.0])
    with pytest.raises(ValueError, match="constant"):
        dg.bowman_shenton(np.ones(10))


def test_empty_report():
    assert dg.residual_normality_report(np.empty((0, 0))) == []


def test_pvalues_uniform_under_null():
    rng = np.random.default_rng(4)
    p = np.array([dg.bowman_shenton(rng.standard_normal(2000))[1] for _ in range(400)])
    assert stats.kstest(p, "uniform").pvalue > 0.01


def _gt_model(rng, n_gt=6):
    hp = lf.HyperParams(sigma_R_y=1.0, sigma_omega_y=0.2, sigma_lambda=0.5, delta=0.3, rho_gt=np.array([0.5]))
    spec = lf.ModelSpec(include_gt=True, r=1, loadings=rng.uniform(0.5, 1.5, (n_gt, 1)),
                        idio_var=np.full(n_gt, 0.5), collapse=False)
    return lf.build(spec, hp, np.full((185, 5), 5.0))


def test_joint_size_on_correct_model():
    rejections = total = 0
    for rep in range(20):
        rng = np.random.default_rng(rep)
        model = _gt_model(rng)
        y, _ = ssm.simulate(model, 185, rng)
        for row in dg.residual_normality_report(ssm.filter(model, y)):
            rejections += row.sw_pvalue < 0.05
            total += 1
    assert abs(rejections / total - 0.05) <= 0.03


def test_skewed_panel_noise_detected_in_panel_columns():
    gt_rej = lfs_rej = 0
    for rep in range(20):
        rng = np.random.default_rng(50 + rep)
        model = _gt_model(rng)
        clean = model.replace(H=np.diag(np.r_[np.zeros(5), np.zeros(6)]))
        y, _ = ssm.simulate(clean, 185, rng)
        y[:, 5:] += (rng.standard_exponential((185, 6)) - 1.0) * np.sqrt(0.5)
        rows = dg.residual_normality_report(ssm.filter(model, y))
        lfs_rej += sum(r.sw_pvalue < 0.05 for r in rows[:5])
        gt_rej += sum(r.sw_pvalue < 0.05 for r in rows[5:])
    assert gt_rej / 120 > 0.8
    assert lfs_rej / 100 < 0.15


def test_csv_output(tmp_path, rng):
    rows = dg.residual_normality_report(rng.standard_normal((50, 2)), ["a", "b"])
    dg.write_normality_csv(rows, tmp_path / "n.csv")
    lines = (tmp_path / "n.csv").read_text().splitlines()
    assert lines[0].startswith("series,n,sw_stat") and len(lines) == 3
