import math

import numpy as np
import pytest

from mcrelax.core import ValidationError, datacost, embed_integral, project_simplex, uniform_metric
from mcrelax.regularizer import MetricEnvelope, PottsFrobenius
from mcrelax.rng import RngSpec
from mcrelax.rounding import (RoundingBudgetError, default_k_max, estimate_expectation,
                              round_argmax, round_once, termination_bound, threshold_two_class)
from mcrelax.solver import primal_energy


def test_integral_input_is_fixed():
    labels = np.random.default_rng(40).integers(0, 3, size=(4, 5))
    u = embed_integral(labels, 3)
    for k in range(50):
        out, trace = round_once(u, RngSpec(9).substream(k))
        np.testing.assert_array_equal(out, labels)


def test_single_pixel_marginal():
    u = np.array([[[0.3, 0.7]]])
    n = 100000
    rng = RngSpec(1)
    hits = sum(round_once(u, rng.substream(k), check=False)[0][0, 0] == 0 for k in range(n))
    assert abs(hits / n - 0.3) <= 3 * math.sqrt(0.3 * 0.7 / n)


def test_zero_weight_label_never_drawn():
    u = np.zeros((3, 3, 3))
    u[..., 0] = 0.4
    u[..., 1] = 0.6
    for k in range(200):
        out, _ = round_once(u, RngSpec(2).substream(k))
        assert not np.any(out == 2)


def test_traces_are_monotone():
    u = project_simplex(np.random.default_rng(41).normal(size=(5, 5, 4)))
    for k in range(30):
        _, trace = round_once(u, RngSpec(3).substream(k))
        c = np.ones(4)
        for i, alpha in trace.gamma:
            new = c.copy()
            new[i] = min(c[i], alpha)
            assert np.all(new <= c)
            c = new
        np.testing.assert_array_equal(c, trace.c_final)
        hist = trace.unassigned_history
        assert all(a >= b for a, b in zip(hist, hist[1:]))
        assert hist[-1] == 0
        assert trace.k_final == len(trace.gamma)


def test_round_once_reproducible():
    u = project_simplex(np.random.default_rng(42).normal(size=(6, 6, 3)))
    a, ta = round_once(u, RngSpec(5, 7))
    b, tb = round_once(u, RngSpec(5, 7))
    np.testing.assert_array_equal(a, b)
    assert ta.gamma == tb.gamma


def test_budget_error_carries_trace():
    u = np.zeros((2, 2, 4))
    u[..., 0] = [[0.1, 0.2], [0.3, 0.4]]
    u[..., 1] = 1.0 - u[..., 0]
    # one round can assign at most the pixels of a single label
    with pytest.raises(RoundingBudgetError) as err:
        round_once(u, RngSpec(0), k_max=1)
    assert err.value.trace.k_final == 1
    assert default_k_max(3, 16) == math.ceil(64 * 3 * math.log(18))


def test_round_argmax_examples():
    assert round_argmax(np.array([[[0.1, 0.9]]]))[0, 0] == 1
    assert round_argmax(np.array([[[0.5, 0.5]]]))[0, 0] == 0
    labels = np.array([[1, 0, 2]])
    np.testing.assert_array_equal(round_argmax(embed_integral(labels, 3)), labels)


def test_threshold_examples():
    assert threshold_two_class(np.array([[[0.6, 0.4]]]), 0.5)[0, 0] == 0
    assert threshold_two_class(np.array([[[0.5, 0.5]]]), 0.5)[0, 0] == 1
    labels = np.array([[0, 1], [1, 0]])
    for alpha in (0.01, 0.5, 0.99):
        np.testing.assert_array_equal(threshold_two_class(embed_integral(labels, 2), alpha), labels)
    with pytest.raises(ValidationError):
        threshold_two_class(np.full((1, 1, 3), 1 / 3), 0.5)


def test_termination_bound_values():
    assert termination_bound(2, 1) == 0.0
    assert termination_bound(2, 8) == pytest.approx(1 - 2 * 0.75 ** 8 + 0.5 ** 8, rel=1e-15)
    # exact value 0.8036804...; agrees with the quoted 0.80374 to four digits
    assert termination_bound(2, 8) == pytest.approx(0.80374, abs=1e-4)
    assert termination_bound(3, 400) > 0.999
    vals = [termination_bound(4, k) for k in range(1, 60)]
    assert all(0.0 <= v <= 1.0 for v in vals)
    assert all(a <= b + 1e-15 for a, b in zip(vals, vals[1:]))


def test_expectation_of_integral_field():
    labels = np.random.default_rng(43).integers(0, 2, size=(4, 4))
    u = embed_integral(labels, 2)
    s = np.random.default_rng(44).random((4, 4, 2))
    kind = PottsFrobenius()
    stats = estimate_expectation(u, s, kind, 50, RngSpec(1))
    assert stats.mean_f == pytest.approx(primal_energy(u, s, kind)[0], rel=1e-12)
    assert stats.std_f <= 1e-12
    np.testing.assert_array_equal(stats.best_labels, labels)


def test_single_pixel_mean_data():
    u = np.array([[[0.3, 0.7]]])
    s = np.array([[[1.0, 0.0]]])
    stats = estimate_expectation(u, s, None, 20000, RngSpec(2))
    assert abs(stats.mean_data - 0.3) <= 3 * stats.std_data / math.sqrt(stats.n_samples)
    assert stats.mean_reg == 0.0


def test_constant_field_has_no_regularizer_cost():
    u = np.broadcast_to(np.array([0.2, 0.5, 0.3]), (4, 4, 3)).copy()
    s = np.random.default_rng(45).random((4, 4, 3))
    stats = estimate_expectation(u, s, MetricEnvelope(uniform_metric(3)), 300, RngSpec(3))
    assert stats.mean_reg == 0.0
    assert abs(stats.mean_data - datacost(u, s)) <= 3 * stats.std_data / math.sqrt(300)


def test_expectation_independent_of_workers():
    u = project_simplex(np.random.default_rng(46).normal(size=(5, 5, 3)))
    s = np.random.default_rng(47).random((5, 5, 3))
    kind = PottsFrobenius()
    one = estimate_expectation(u, s, kind, 200, RngSpec(4), workers=1, marginals=True)
    many = estimate_expectation(u, s, kind, 200, RngSpec(4), workers=4, marginals=True)
    np.testing.assert_array_equal(one.f_values, many.f_values)
    np.testing.assert_array_equal(one.marginals, many.marginals)
    assert one.as_dict() == many.as_dict()


def test_single_sample_stats():
    u = project_simplex(np.random.default_rng(48).normal(size=(3, 3, 2)))
    stats = estimate_expectation(u, np.ones((3, 3, 2)), None, 1, RngSpec(5))
    assert stats.n_samples == 1
    assert stats.std_f is None and stats.ci95_halfwidth is None


def test_too_many_budget_failures():
    u = np.zeros((2, 2, 2))
    u[..., 0] = [[0.1, 0.2], [0.3, 0.4]]
    u[..., 1] = 1.0 - u[..., 0]
    with pytest.raises(RoundingBudgetError):
        estimate_expectation(u, np.ones(u.shape), None, 20, RngSpec(6), k_max=1)


def test_marginals_follow_field():
    u = project_simplex(np.random.default_rng(49).normal(size=(3, 3, 3)))
    n = 4000
    stats = estimate_expectation(u, np.ones(u.shape), None, n, RngSpec(7), marginals=True)
    sigma = np.sqrt(u * (1 - u) / n)
    assert np.mean(np.abs(stats.marginals - u) <= 3 * sigma + 1e-12) >= 0.95
