from __future__ import annotations

import numpy as np
import pytest

from shared.src.common_metrics import finite_diff_grad
from shared.src.errors import DomainError, UnknownLabelError
from shared.src.oracle import (
    GaussianMixture,
    OracleEps,
    class_posterior_grad,
    class_posteriors,
    eps_at_sigma,
    eps_oracle,
    log_density,
    marginal_at,
    mixture_moments,
    posterior_grad,
    push_forward,
    restrict_to_label,
    sample_data,
    score,
    single_gaussian,
)
from shared.src.schedules import MSigmaRelation, Schedule, coeffs


def test_marginal_at_origin_is_data(vp: Schedule, two_class: GaussianMixture) -> None:
    out = marginal_at(two_class, vp, 0.0)
    np.testing.assert_array_equal(out.means, two_class.means)
    np.testing.assert_array_equal(out.variances, two_class.variances)


def test_push_forward_keeps_unit_variance_under_vp(unit_gaussian: GaussianMixture) -> None:
    out = push_forward(unit_gaussian, 0.8, 0.6)
    assert out.variances[0, 0] == pytest.approx(1.0, abs=1e-15)


def test_ve_push_forward_composes() -> None:
    gm = single_gaussian([1.0, -1.0], [0.5, 2.0])
    twice = push_forward(push_forward(gm, 1.0, 0.3), 1.0, 0.4)
    once = push_forward(gm, 1.0, 0.5)
    np.testing.assert_allclose(twice.variances, once.variances, rtol=1e-15)
    np.testing.assert_array_equal(twice.means, once.means)


def test_eps_on_unit_gaussian(unit_gaussian: GaussianMixture) -> None:
    eps = eps_at_sigma(unit_gaussian, MSigmaRelation.from_name("vp"), np.array([1.0]), 0.6)
    assert eps[0] == pytest.approx(0.6, abs=1e-12)


def test_eps_vanishes_at_symmetric_centre(two_class: GaussianMixture, vp: Schedule) -> None:
    np.testing.assert_allclose(eps_oracle(two_class, np.zeros(2), vp, 0.5), 0.0, atol=1e-15)


def test_eps_is_zero_at_origin(two_class: GaussianMixture, vp: Schedule) -> None:
    x = np.array([[1.0, 2.0], [-3.0, 0.5]])
    np.testing.assert_array_equal(eps_oracle(two_class, x, vp, 0.0), np.zeros_like(x))


def test_eps_matches_finite_difference_score(two_class: GaussianMixture, vp: Schedule) -> None:
    rng = np.random.default_rng(17)
    for _ in range(100):
        t = float(rng.uniform(vp.t_min, 1.0))
        x = rng.normal(0.0, 3.0, size=2)
        c = coeffs(vp, t)
        marginal = marginal_at(two_class, vp, t)
        fd = finite_diff_grad(lambda z: log_density(marginal, z), x, step=1e-4)
        np.testing.assert_allclose(eps_oracle(two_class, x, vp, t), -c.sigma * fd, rtol=1e-5, atol=1e-7)


def test_oracle_callable_agrees_with_time_form(two_class: GaussianMixture, vp: Schedule) -> None:
    fn = OracleEps(two_class, vp.relation)
    x = np.array([[0.5, -1.0], [2.0, 2.0]])
    c = coeffs(vp, 0.4)
    np.testing.assert_allclose(fn(x, c.sigma), eps_oracle(two_class, x, vp, 0.4), rtol=1e-12, atol=1e-14)


def test_bayes_identity(vp: Schedule) -> None:
    gm = GaussianMixture([0.3, 0.7], [[-2.0], [2.0]], [[1.0], [0.5]], [0, 1])
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(1000):
        t = float(rng.uniform(vp.t_min, 1.0))
        x = rng.normal(0.0, 3.0, size=1)
        noisy = marginal_at(gm, vp, t)
        _, grad = posterior_grad(noisy, x, 1)
        conditional = score(restrict_to_label(noisy, 1), x)
        worst = max(worst, float(np.max(np.abs(score(noisy, x) + grad - conditional))))
    assert worst <= 1e-8


def test_conditional_score_at_class_mean() -> None:
    gm = GaussianMixture([0.5, 0.5], [[-2.0], [2.0]], [[1.0], [1.0]], [0, 1])
    _, grad = posterior_grad(gm, np.array([2.0]), 1)
    assert float(score(gm, np.array([2.0]))[0] + grad[0]) == pytest.approx(0.0, abs=1e-12)


def test_single_class_posterior_is_certain(unit_gaussian: GaussianMixture, vp: Schedule) -> None:
    log_p, grad = class_posterior_grad(unit_gaussian, np.array([0.7]), vp, 0.3, 0)
    assert float(log_p) == pytest.approx(0.0, abs=1e-15)
    np.testing.assert_allclose(grad, 0.0, atol=1e-15)


def test_symmetric_posteriors(two_class: GaussianMixture) -> None:
    np.testing.assert_allclose(class_posteriors(two_class, np.zeros(2)), [0.5, 0.5], rtol=1e-15)


def test_unknown_label(two_class: GaussianMixture) -> None:
    with pytest.raises(UnknownLabelError):
        restrict_to_label(two_class, 7)
    with pytest.raises(UnknownLabelError):
        posterior_grad(two_class, np.zeros(2), 7)


def test_mixture_validation() -> None:
    with pytest.raises(DomainError):
        GaussianMixture([0.6, 0.6], [[0.0], [1.0]], [[1.0], [1.0]], [0, 1])
    with pytest.raises(DomainError):
        GaussianMixture([1.0], [[0.0]], [[0.0]], [0])


def test_sample_data_moments(two_class: GaussianMixture) -> None:
    x, labels = sample_data(two_class, 20_000, np.random.default_rng(8))
    mean, var = mixture_moments(two_class)
    np.testing.assert_allclose(x.mean(axis=0), mean, atol=0.1)
    np.testing.assert_allclose(x.var(axis=0), var, rtol=0.05)
    assert set(np.unique(labels)) == {0, 1}


def test_sample_data_respects_zero_weight() -> None:
    gm = GaussianMixture([1.0, 0.0], [[-3.0], [3.0]], [[1.0], [1.0]], [0, 1])
    _, labels = sample_data(gm, 500, np.random.default_rng(1))
    assert np.all(labels == 0)


def test_spec_round_trip(two_class: GaussianMixture) -> None:
    again = GaussianMixture.from_spec(two_class.to_spec())
    np.testing.assert_array_equal(again.means, two_class.means)
    assert again.classes == (0, 1)
    with pytest.raises(DomainError):
        GaussianMixture.from_spec([{"weight": 1.0, "mean": [0.0]}])
