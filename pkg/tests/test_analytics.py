import math

import numpy as np
import pytest

from bhopm.analytics import (AVERAGE, POPULATION, NotAvailableError, UnknownEntityError,
                             average_candidate, empirical_bayes_update, point_estimate,
                             point_estimates, predict_dataset, predict_grade_full,
                             predict_grade_point, prob_above_threshold, round_bias_summary,
                             success_threshold, summarize_param, summarize_values)
from bhopm.data import CsvSchema, chronological_split, load_csv
from bhopm.model import ModelConfig, ParameterSpace, cell_probabilities, transform
from conftest import posterior_from_draws


def three_candidates():
    text = b"candidate,interviewer,round,grade,hired\na,x,r1,1,1\nb,x,r1,2,0\nc,y,r1,3,1\n"
    return load_csv(text, CsvSchema(hired="hired"))


def with_alpha(ds, alpha, config=None):
    config = config or ModelConfig()
    sp = ParameterSpace.build(ds, config)
    U = np.zeros((len(alpha), sp.D))
    U[:, sp.blocks["alpha_raw"]] = alpha  # sigma_alpha = 1 at log-scale 0
    return posterior_from_draws(ds, U, config)


# --------------------------------------------------------------- summaries

def test_summary_of_constant_draws():
    s = summarize_values(np.full(100, 0.7))
    assert s.mean == pytest.approx(0.7) and s.sd == 0.0


def test_median_rule_small_sample():
    s = summarize_values([1, 2, 3, 4])
    assert s.quantiles[0.5] == 2.5
    assert sum(m for *_, m in s.histogram_rows()) == pytest.approx(1.0)


def test_point_estimators():
    x = np.r_[np.zeros(10), np.full(50, 3.0)]
    assert point_estimate(x) == pytest.approx(x.mean())
    assert abs(point_estimate(x, "mode") - 3.0) < 0.1
    with pytest.raises(ValueError):
        point_estimate(x, "median")


def test_summarize_param_selectors(small_fit):
    assert summarize_param(small_fit, "beta[0]").n_draws == 300
    assert summarize_param(small_fit, "sigma_tot").mean > 0
    with pytest.raises(UnknownEntityError):
        summarize_param(small_fit, "beta[99]")


def test_average_candidate():
    ds = three_candidates()
    assert average_candidate(with_alpha(ds, [[0.2, -0.2, 0.6]])) == pytest.approx(0.2)
    one = load_csv(b"candidate,interviewer,round,grade\na,x,r1,2\n")
    assert average_candidate(with_alpha(one, [[0.4]])) == pytest.approx(0.4)


def test_average_candidate_near_zero(small_fit):
    assert abs(average_candidate(small_fit)) < 0.2


def test_prob_above_threshold(small_fit):
    assert prob_above_threshold(small_fit, 0, -math.inf) == 1.0
    med = np.median(small_fit.constrained().alpha[:, 2])
    assert prob_above_threshold(small_fit, 2, med) == pytest.approx(0.5, abs=1 / 300)
    with pytest.raises(UnknownEntityError):
        prob_above_threshold(small_fit, 99, 0.0)


def test_success_threshold():
    ds = load_csv(b"candidate,interviewer,round,grade,hired\na,x,r1,3,1\nb,x,r1,1,0\n",
                  CsvSchema(hired="hired"))
    post = with_alpha(ds, [[1.0, -1.0]])
    assert success_threshold(post, ds.hired) == pytest.approx((1.0, -1.0))
    with pytest.raises(NotAvailableError):
        success_threshold(post, [1, 1])
    with pytest.raises(NotAvailableError):
        success_threshold(post, None)


def test_success_threshold_on_synthetic(small_fit, small_data):
    ds, _ = small_data
    hired_mean, rejected_mean = success_threshold(small_fit, ds.hired)
    assert hired_mean > rejected_mean


def test_round_bias_single_round():
    ds = three_candidates()
    rb = round_bias_summary(with_alpha(ds, [[0.1, 0.2, 0.3], [0.0, 0.1, 0.2]]))
    assert len(rb) == 1 and rb[0].candidate.n_draws == 2


def test_round_bias_order_independent(small_fit, small_data):
    ds, _ = small_data
    U = small_fit.unconstrained()
    perm = np.random.default_rng(0).permutation(len(U))
    shuffled = posterior_from_draws(ds, U[perm], chains=2)
    for a, b in zip(round_bias_summary(small_fit), round_bias_summary(shuffled)):
        assert a.interviewer.mean == pytest.approx(b.interviewer.mean, abs=1e-12)
        assert a.candidate.quantiles == pytest.approx(b.candidate.quantiles, abs=1e-12)


# -------------------------------------------------------------- prediction

def test_single_draw_full_equals_point(small_fit, small_data):
    ds, _ = small_data
    U = small_fit.unconstrained()[17:18]
    post = posterior_from_draws(ds, U)
    cp, _ = transform(post.space, post.model_config, U[0])
    c, r = post.space.gamma_pairs[0]
    i = next(i for i, rr in post.space.delta_pairs if rr == r)
    full = predict_grade_full(post, c, i, r)
    point = predict_grade_point(cp, post.space, c, i, r)
    np.testing.assert_array_equal(full.probs, point.probs)
    want = cell_probabilities(cp.mu0 + cp.alpha[c] + cp.beta[i]
                              + cp.gamma[post.space.gamma_index()[(c, r)]]
                              + cp.delta[post.space.delta_index()[(i, r)]],
                              cp.sigma_tot, cp.thresholds[i])
    np.testing.assert_allclose(full.probs, want, rtol=1e-14)


@pytest.mark.parametrize("cand,intv", [(0, 0), (AVERAGE, 1), (3, POPULATION),
                                       (AVERAGE, POPULATION)])
def test_predictive_simplex(small_fit, cand, intv):
    for r in range(2):
        p = predict_grade_full(small_fit, cand, intv, r).probs
        assert abs(p.sum() - 1) < 1e-9 and np.all(p >= 0)


def test_point_prediction_reference_values():
    ds = load_csv(b"candidate,interviewer,round,grade\na,x,r1,2\n")
    cfg = ModelConfig(collapse_noise_scales=True)
    sp = ParameterSpace.build(ds, cfg)
    cp, _ = transform(sp, cfg, np.zeros(sp.D))
    p = predict_grade_point(cp, sp, 0, 0, 0).probs
    np.testing.assert_allclose(p, [0.1587, 0.3413, 0.3413, 0.1587], atol=1e-4)
    assert predict_grade_point(cp, sp, AVERAGE, 0, 0).mode_grade in (2, 3)


def test_lower_beta_raises_lowest_grade(small_fit):
    cp = point_estimates(small_fit)
    sp = small_fit.space
    base = predict_grade_point(cp, sp, 0, 0, 0).probs
    cp.beta[0] -= 0.5
    assert predict_grade_point(cp, sp, 0, 0, 0).probs[0] > base[0]


def test_tougher_round_moves_mass_left(small_fit):
    cp = point_estimates(small_fit)
    sp = small_fit.space
    di = sp.delta_index()
    i = next(i for i in range(sp.I) if (i, 0) in di and (i, 1) in di)
    r_tough = int(np.argmin([cp.delta[di[(i, 0)]], cp.delta[di[(i, 1)]]]))
    tough = predict_grade_point(cp, sp, AVERAGE, i, r_tough).probs
    easy = predict_grade_point(cp, sp, AVERAGE, i, 1 - r_tough).probs
    grades = np.arange(1, sp.K + 1)
    assert grades @ tough < grades @ easy


def test_unknown_entities(small_fit):
    with pytest.raises(UnknownEntityError):
        predict_grade_full(small_fit, 0, 99, 0)
    with pytest.raises(UnknownEntityError):
        predict_grade_full(small_fit, 0, 0, 5)


def test_predict_dataset_handles_unseen(small_fit, small_data):
    ds, _ = small_data
    _, test = chronological_split(ds, float(np.sort(ds.order_key)[100]))
    probs = predict_dataset(small_fit, test, "point")
    assert probs.shape == (test.N, ds.K)
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-9)
    full = predict_dataset(small_fit, test.take(np.arange(5)), "full")
    np.testing.assert_allclose(full.sum(axis=1), 1.0, atol=1e-9)


# --------------------------------------------------------- empirical Bayes

def test_update_direction_and_monotonicity(small_fit):
    c, r = small_fit.space.gamma_pairs[4]
    shifts = [empirical_bayes_update(small_fit, c, 1, r, k).shift for k in range(1, 5)]
    assert shifts[0] < 0 < shifts[-1]
    assert all(a <= b for a, b in zip(shifts, shifts[1:]))


def test_update_modal_grade_moves_little(small_fit):
    c, r = small_fit.space.gamma_pairs[2]
    i = 2
    k = predict_grade_full(small_fit, c, i, r).mode_grade
    upd = empirical_bayes_update(small_fit, c, i, r, k)
    assert abs(upd.shift) <= 0.25 * upd.prior.sd


def test_update_grid_resolution(small_fit):
    c, r = small_fit.space.gamma_pairs[0]
    coarse = empirical_bayes_update(small_fit, c, 0, r, 4)
    fine = empirical_bayes_update(small_fit, c, 0, r, 4, grid_points=8001)
    assert coarse.mean == pytest.approx(fine.mean, abs=1e-3 * coarse.prior.sd)
    assert coarse.sd == pytest.approx(fine.sd, rel=1e-3)
    assert np.trapezoid(coarse.posterior_density, coarse.grid) == pytest.approx(1.0)
    assert sum(m for *_, m in coarse.density_rows()) == pytest.approx(1.0)


def test_update_errors(small_fit):
    with pytest.raises(ValueError):
        empirical_bayes_update(small_fit, 0, 0, 0, 9)
    ds = three_candidates()
    with pytest.raises(NotAvailableError):
        empirical_bayes_update(with_alpha(ds, [[0.1, 0.2, 0.3]]), 0, 0, 0, 2)
