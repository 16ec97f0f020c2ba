import json
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vbmcts import gp as gpmod
from vbmcts.features import ActionPair, State, phi, start_state
from vbmcts.gp import (
    FittedGP,
    GPHyperParams,
    GPRewardModel,
    IllConditionedKernelError,
    SearchConfig,
    TrainingSet,
    default_hyperparams,
    fit,
    gp_from_json,
    gp_to_json,
    kernel,
    log_marginal_likelihood,
    predict,
    predict_batch,
    select_hyperparams,
    variance_bonus_reward,
)

HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


def hp1(signal=1.0, ls=1.0, noise=0.25, dim=1):
    return GPHyperParams(signal, np.full(dim, ls, dtype=float), noise)


# ---------------------------------------------------------------------------
# kernel
# ---------------------------------------------------------------------------


def test_kernel_at_identical_inputs_is_signal_variance():
    hp = hp1(signal=1.7, dim=3, noise=0.1)
    x = np.array([0.3, -2.0, 5.0])
    assert kernel(x, x, hp) == pytest.approx(1.7, abs=1e-15)


def test_kernel_unit_scales():
    hp = GPHyperParams(1.0, np.ones(2), 0.1)
    v = kernel(np.array([2.0, 0.0]), np.zeros(2), hp)
    assert v == pytest.approx(math.exp(-2.0), abs=1e-12)


def test_kernel_anisotropic():
    hp = GPHyperParams(2.0, np.array([2.0]), 0.1)
    v = kernel(np.array([2.0]), np.zeros(1), hp)
    assert v == pytest.approx(2.0 * math.exp(-0.5), abs=1e-12)


def test_kernel_symmetric_and_decaying():
    hp = hp1(dim=2)
    a, b = np.array([0.1, 0.9]), np.array([1.4, -0.2])
    assert kernel(a, b, hp) == pytest.approx(kernel(b, a, hp))
    assert kernel(a, b, hp) < kernel(a, a, hp)


# ---------------------------------------------------------------------------
# fit / predict closed forms
# ---------------------------------------------------------------------------


def test_single_point_weights():
    f = fit(TrainingSet(np.zeros((1, 1)), np.array([2.0])), hp1(noise=0.25))
    np.testing.assert_allclose(f.weights, [1.6], atol=1e-12)


def test_single_point_posterior():
    f = fit(TrainingSet(np.zeros((1, 1)), np.array([2.0])), hp1(noise=0.25))
    p = predict(f, np.zeros(1))
    assert p.mean == pytest.approx(1.6, abs=1e-12)
    assert p.variance == pytest.approx(0.2, abs=1e-12)


def test_triplicate_point_posterior():
    f = fit(TrainingSet(np.zeros((3, 1)), np.ones(3)), hp1(noise=0.5))
    np.testing.assert_allclose(f.weights, np.full(3, 1 / 3.5), atol=1e-12)
    p = predict(f, np.zeros(1))
    assert p.mean == pytest.approx(6 / 7, abs=1e-12)
    assert p.variance == pytest.approx(1 / 7, abs=1e-12)


def test_empty_training_set_gives_prior():
    f = fit(TrainingSet(np.zeros((0, 2)), np.zeros(0)), hp1(signal=2.5, dim=2))
    p = predict(f, np.array([0.4, -1.0]))
    assert p.mean == 0.0
    assert p.variance == pytest.approx(2.5)


def test_interpolation_with_tiny_noise():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(12, 3))
    y = rng.normal(size=12)
    f = fit(TrainingSet(X, y), GPHyperParams(1.0, np.ones(3), 1e-12))
    for i in range(12):
        assert predict(f, X[i]).mean == pytest.approx(y[i], abs=1e-6)


def test_predict_batch_matches_singles():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(9, 4))
    y = rng.normal(size=9)
    f = fit(TrainingSet(X, y), GPHyperParams(1.3, np.full(4, 0.8), 0.05))
    Q = rng.normal(size=(7, 4))
    means, variances = predict_batch(f, Q)
    for i in range(7):
        p = predict(f, Q[i])
        assert means[i] == pytest.approx(p.mean, abs=1e-12)
        assert variances[i] == pytest.approx(p.variance, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_variance_bounded_by_prior(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 12))
    X = rng.normal(size=(n, 2))
    y = rng.normal(size=n)
    hp = GPHyperParams(float(rng.uniform(0.1, 3.0)), rng.uniform(0.3, 2.0, size=2),
                       float(rng.uniform(1e-4, 0.5)))
    f = fit(TrainingSet(X, y), hp)
    q = rng.normal(size=2)
    p = predict(f, q)
    assert 0.0 <= p.variance <= hp.signal_variance + 1e-12


def test_weights_solve_regularized_system():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(8, 2))
    y = rng.normal(size=8)
    hp = GPHyperParams(1.2, np.array([0.7, 1.4]), 0.3)
    f = fit(TrainingSet(X, y), hp)
    K = np.array([[kernel(a, b, hp) for b in X] for a in X])
    np.testing.assert_allclose((K + 0.3 * np.eye(8)) @ f.weights, y, atol=1e-9)


# ---------------------------------------------------------------------------
# conditioning
# ---------------------------------------------------------------------------


def test_duplicate_rows_with_zero_noise_still_fit():
    # K is singular here; the jitter ladder has to rescue the factorization
    X = np.zeros((4, 2))
    f = fit(TrainingSet(X, np.ones(4)), GPHyperParams(1.0, np.ones(2), 0.0))
    assert f.jitter > 0.0
    assert np.isfinite(f.weights).all()


def test_conditioning_failure_reports_jitter_ladder(monkeypatch):
    import scipy.linalg

    def always_fails(*args, **kwargs):
        raise np.linalg.LinAlgError("not positive definite")

    monkeypatch.setattr(scipy.linalg, "cholesky", always_fails)
    with pytest.raises(IllConditionedKernelError) as exc:
        fit(TrainingSet(np.zeros((2, 1)), np.ones(2)), hp1())
    msg = str(exc.value)
    for level in ("1e-10", "1e-08", "1e-06", "0.0001"):
        assert level in msg


# ---------------------------------------------------------------------------
# log marginal likelihood and gradients
# ---------------------------------------------------------------------------


def test_lml_single_zero_observation():
    val = log_marginal_likelihood(
        TrainingSet(np.zeros((1, 1)), np.zeros(1)), hp1(noise=1.0)
    )
    assert val == pytest.approx(-0.5 * math.log(2.0) - HALF_LOG_2PI, abs=1e-12)


def test_lml_single_nonzero_observation_low_noise():
    val = log_marginal_likelihood(
        TrainingSet(np.zeros((1, 1)), np.array([2.0])), hp1(noise=1e-13)
    )
    assert val == pytest.approx(-2.0 - HALF_LOG_2PI, abs=1e-5)


def test_lml_zero_targets_have_zero_data_fit():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(6, 2))
    hp = GPHyperParams(1.4, np.array([0.9, 1.1]), 0.2)
    data = TrainingSet(X, np.zeros(6))
    f = fit(data, hp)
    log_det = 2.0 * np.sum(np.log(np.diag(f.chol)))
    assert log_marginal_likelihood(data, hp) == pytest.approx(
        -0.5 * log_det - 3.0 * math.log(2.0 * math.pi), abs=1e-10
    )


def test_lml_gradient_matches_finite_differences():
    rng = np.random.default_rng(11)
    h = 1e-5
    for _ in range(20):
        n, m = int(rng.integers(2, 9)), int(rng.integers(1, 4))
        data = TrainingSet(rng.normal(size=(n, m)), rng.normal(size=n))
        log_theta = rng.uniform(-1.5, 1.5, size=m + 2)
        val, grad = gpmod._lml_and_grad(data, log_theta)
        for k in range(m + 2):
            up, dn = log_theta.copy(), log_theta.copy()
            up[k] += h
            dn[k] -= h
            fd = (gpmod._lml_and_grad(data, up)[0] - gpmod._lml_and_grad(data, dn)[0]) / (2 * h)
            scale = max(1.0, abs(fd))
            assert abs(grad[k] - fd) / scale < 1e-4, f"param {k}: {grad[k]} vs {fd}"


# ---------------------------------------------------------------------------
# hyperparameter selection
# ---------------------------------------------------------------------------


def test_select_warns_and_returns_defaults_when_data_scarce():
    data = TrainingSet(np.random.default_rng(0).normal(size=(3, 2)), np.zeros(3))
    with pytest.warns(UserWarning):
        hp = select_hyperparams(data, SearchConfig(min_points=5))
    assert hp == default_hyperparams(2)


def test_select_recovers_known_length_scale():
    # 1 relevant dimension with scale 0.5, 1 pure-noise dimension
    hits = 0
    for seed in range(10):
        rng = np.random.default_rng(seed)
        X = rng.uniform(-2, 2, size=(40, 2))
        y = np.sin(X[:, 0] / 0.5) + 0.05 * rng.normal(size=40)
        hp = select_hyperparams(TrainingSet(X, y), SearchConfig(seed=seed))
        if 0.1 <= hp.length_scales[0] <= 2.5:
            hits += 1
    assert hits == 10


def test_select_improves_cv_score_over_defaults():
    rng = np.random.default_rng(2)
    X = rng.uniform(-3, 3, size=(50, 1))
    y = np.sin(3.0 * X[:, 0])
    data = TrainingSet(X, y)
    chosen = select_hyperparams(data, SearchConfig(seed=0))
    s_default = gpmod._cv_score(data, default_hyperparams(1), 5, True)
    s_chosen = gpmod._cv_score(data, chosen, 5, True)
    assert s_chosen >= s_default


def test_select_respects_bounds():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(30, 2))
    y = rng.normal(size=30) * 50.0
    hp = select_hyperparams(TrainingSet(X, y), SearchConfig(seed=1))
    assert 1e-2 <= min(hp.length_scales) and max(hp.length_scales) <= 1e3
    assert 1e-3 <= hp.signal_variance <= 1e2
    assert 1e-6 <= hp.noise_variance <= 1e1


# ---------------------------------------------------------------------------
# variance bonus
# ---------------------------------------------------------------------------


class _FixedModel:
    def __init__(self, mean, var):
        self._p = (mean, var)

    def predict_reward(self, state, action):
        return self._p


def test_variance_bonus_formula():
    assert variance_bonus_reward(_FixedModel(10.0, 2.0), None, None, 3.5, 0.0) == 17.0
    assert variance_bonus_reward(_FixedModel(10.0, 2.0), None, None, 2.0, 1.5) == 17.0


def test_variance_bonus_on_prior_is_beta_times_signal():
    f = fit(TrainingSet(np.zeros((0, 14)), np.zeros(0)), default_hyperparams(14))
    v = variance_bonus_reward(f, start_state(), ActionPair(0.5, 0.5), 3.5, 0.0)
    assert v == pytest.approx(3.5, abs=1e-12)


def test_variance_bonus_rejects_negative_betas():
    with pytest.raises(ValueError):
        variance_bonus_reward(_FixedModel(0.0, 1.0), None, None, -1.0, 0.0)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def test_gp_json_roundtrip():
    rng = np.random.default_rng(9)
    X = rng.normal(size=(10, 3))
    y = rng.normal(size=10)
    f = fit(TrainingSet(X, y), GPHyperParams(1.5, np.array([0.5, 1.0, 2.0]), 0.1))
    g = gp_from_json(gp_to_json(f))
    q = rng.normal(size=3)
    assert predict(g, q).mean == pytest.approx(predict(f, q).mean, abs=1e-12)
    assert predict(g, q).variance == pytest.approx(predict(f, q).variance, abs=1e-12)


def test_gp_json_rejects_unknown_format():
    doc = json.loads(gp_to_json(fit(TrainingSet(np.zeros((1, 1)), np.ones(1)), hp1())))
    doc["format"] = "something-else"
    with pytest.raises(ValueError):
        gp_from_json(json.dumps(doc))


# ---------------------------------------------------------------------------
# reward model wrapper (standardization + bookkeeping)
# ---------------------------------------------------------------------------


def _observe_episode(model, rewards):
    s = start_state()
    for t, r in enumerate(rewards, start=1):
        a = ActionPair(0.5, 0.5)
        model.add_observation(s, a, r)
        s = State(r, a, t + 1)


def test_reward_model_standardizes_and_restores_scale():
    model = GPRewardModel()
    rewards = [500.0, 900.0, 700.0, 800.0, 600.0]
    _observe_episode(model, rewards)
    model.refit()
    assert model.y_shift == pytest.approx(np.mean(rewards))
    assert model.y_scale == pytest.approx(np.std(rewards))
    # near-interpolation back in raw units
    s = start_state()
    mean, _ = model.predict_reward(s, ActionPair(0.5, 0.5))
    assert abs(mean - 500.0) < 60.0  # same order of magnitude, raw units


def test_reward_model_prior_prediction():
    model = GPRewardModel()
    model.refit()
    mean, var = model.predict_reward(start_state(), ActionPair(0.5, 0.5))
    assert mean == 0.0
    assert var == pytest.approx(1.0)


def test_reward_model_constant_targets_fall_back_to_unit_scale():
    model = GPRewardModel()
    _observe_episode(model, [42.0, 42.0, 42.0])
    model.refit()
    assert model.y_scale == 1.0
    mean, _ = model.predict_reward(start_state(), ActionPair(0.5, 0.5))
    assert mean == pytest.approx(42.0, abs=1.0)


def test_reward_model_batch_matches_single():
    model = GPRewardModel()
    _observe_episode(model, [10.0, -5.0, 3.0, 8.0, 0.0])
    model.refit()
    state = State(2.0, ActionPair(0.3, 0.3), 2)
    actions = [ActionPair(0.9, 0.1), ActionPair(0.1, 0.9), ActionPair(0.5, 0.5)]
    means, variances = model.predict_rewards_batch(state, actions)
    for i, a in enumerate(actions):
        m, v = model.predict_reward(state, a)
        assert means[i] == pytest.approx(m, abs=1e-12)
        assert variances[i] == pytest.approx(v, abs=1e-12)


def test_sigma_threshold_scales_with_targets():
    model = GPRewardModel()
    _observe_episode(model, [0.0, 100.0, 50.0, 25.0, 75.0])
    model.refit()
    expected = 0.5 * model.gp.hyperparams.signal_variance * model.y_scale**2
    assert model.sigma_threshold(0.5) == pytest.approx(expected)


def test_core_arrays_are_c_contiguous_float64():
    model = GPRewardModel()
    _observe_episode(model, [1.0, 2.0, 3.0, 4.0, 5.0])
    model.refit()
    core = model.core_arrays()
    for name in ("X", "weights", "chol", "ell2"):
        arr = core[name]
        assert arr.dtype == np.float64
        assert arr.flags["C_CONTIGUOUS"]
    assert core["X"].shape == (5, 14)


def test_reward_model_json_roundtrip():
    model = GPRewardModel()
    _observe_episode(model, [10.0, 20.0, 15.0, 5.0, 12.0])
    model.refit(optimize=True)
    clone = GPRewardModel.from_json(model.to_json())
    s, a = State(12.0, ActionPair(0.5, 0.5), 3), ActionPair(0.7, 0.2)
    m0, v0 = model.predict_reward(s, a)
    m1, v1 = clone.predict_reward(s, a)
    assert m1 == pytest.approx(m0, abs=1e-9)
    assert v1 == pytest.approx(v0, abs=1e-9)


def test_sample_returns_shape_and_determinism():
    model = GPRewardModel()
    _observe_episode(model, [10.0, 20.0, 15.0, 5.0, 12.0])
    model.refit()
    rng = np.random.default_rng(0)
    seqs = np.array([[[0.5, 0.5]] * 5, [[1.0, 0.1]] * 5])
    out = model.sample_returns(seqs, n_samples=16, rng=rng, gamma=1.0)
    # one Monte-Carlo estimate (mean over samples) per candidate sequence
    assert out.shape == (2,)
    assert np.all(np.isfinite(out))
    out2 = model.sample_returns(seqs, n_samples=16, rng=np.random.default_rng(0), gamma=1.0)
    np.testing.assert_array_equal(out, out2)
