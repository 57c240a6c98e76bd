import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fedgwc.errors import CohortTooSmallError, ConfigError, DomainError, ShapeError
from fedgwc.rewards import (
    ConstantStep,
    GaussianWeightState,
    HarmonicStep,
    LossTrace,
    average_reward,
    cohort_rewards,
    compute_round_stats,
    gaussian_rewards,
    run_estimator,
    update_weight,
)


def traces(*rows):
    return [LossTrace(i, r) for i, r in enumerate(rows)]


def test_round_stats_hand_values():
    stats = compute_round_stats(traces([1.0, 2.0], [3.0, 4.0]))
    np.testing.assert_array_equal(stats.mean, [2.0, 3.0])
    np.testing.assert_allclose(stats.std, [math.sqrt(2), math.sqrt(2)], rtol=1e-15)
    assert stats.cohort_size == 2


@pytest.mark.parametrize("c", [0.0, 0.3, 1e-300, 7.25])
def test_constant_cohort_has_zero_spread(c):
    stats = compute_round_stats(traces([c, c], [c, c]))
    np.testing.assert_array_equal(stats.mean, [c, c])
    np.testing.assert_array_equal(stats.std, [0.0, 0.0])


def test_single_trace_is_rejected():
    with pytest.raises(CohortTooSmallError):
        compute_round_stats(traces([1.0, 2.0]))


def test_mismatched_lengths_are_rejected():
    with pytest.raises(ShapeError):
        compute_round_stats(traces([1.0, 2.0], [1.0]))


@pytest.mark.parametrize("bad", [[], [np.nan], [1.0, -0.5], [[1.0]]])
def test_invalid_traces(bad):
    with pytest.raises((ShapeError, DomainError)):
        LossTrace(0, bad)


def test_trace_is_read_only():
    t = LossTrace(0, [1.0, 2.0])
    with pytest.raises(ValueError):
        t.values[0] = 5.0


def test_reward_at_mean_is_one_and_one_sigma_away_is_exp_half():
    stats = compute_round_stats(traces([1.0, 2.0], [3.0, 4.0]))
    at_mean = LossTrace(9, stats.mean.copy())
    np.testing.assert_array_equal(gaussian_rewards(at_mean, stats), [1.0, 1.0])
    shifted = LossTrace(9, stats.mean + stats.std)
    np.testing.assert_allclose(gaussian_rewards(shifted, stats), np.exp(-0.5), rtol=1e-15)
    assert abs(np.exp(-0.5) - 0.60653) < 1e-5


def test_degenerate_spread_convention():
    stats = compute_round_stats(traces([2.0, 2.0], [2.0, 2.0]))
    np.testing.assert_array_equal(gaussian_rewards(LossTrace(0, [2.0, 2.0]), stats), [1.0, 1.0])
    np.testing.assert_array_equal(gaussian_rewards(LossTrace(0, [2.0, 2.5]), stats), [1.0, 0.0])


@pytest.mark.parametrize("rewards, expected", [([1, 1, 1, 1], 1.0), ([0.5, 1.0], 0.75)])
def test_average_reward(rewards, expected):
    assert average_reward(rewards) == expected


def test_average_of_constant_rewards():
    assert average_reward([math.exp(-0.5)] * 8) == pytest.approx(math.exp(-0.5), rel=1e-15)


def test_average_of_nothing_fails():
    with pytest.raises(ShapeError):
        average_reward([])


def test_first_weight_update_from_zero():
    state = update_weight(GaussianWeightState(), "a", 0.5, 0.1)
    assert state.weight("a") == pytest.approx(0.05, abs=1e-17)
    assert state.count("a") == 1
    assert state.weight("never") == 0.0


@given(st.floats(0.01, 1.0), st.floats(0.01, 0.99))
def test_fixed_point(g, alpha):
    state = GaussianWeightState(gamma={"k": g})
    update_weight(state, "k", g, alpha)
    assert state.weight("k") == pytest.approx(g, rel=1e-15)


@pytest.mark.parametrize("alpha", [0.0, 1.0, -0.1, 1.5])
def test_alpha_outside_open_interval(alpha):
    with pytest.raises(ConfigError):
        update_weight(GaussianWeightState(), 0, 0.5, alpha)


@pytest.mark.parametrize("omega", [0.0, -0.1, 1.01, float("nan")])
def test_omega_outside_range(omega):
    with pytest.raises(DomainError):
        update_weight(GaussianWeightState(), 0, omega, 0.1)


def test_subset_keeps_only_members():
    s = GaussianWeightState(gamma={1: 0.2, 2: 0.3}, sample_count={1: 4, 2: 5})
    sub = s.subset([2])
    assert sub.gamma == {2: 0.3} and sub.sample_count == {2: 5}


def test_step_schedules():
    assert ConstantStep(0.1)(7) == 0.1
    h = HarmonicStep()
    assert [h(t) for t in (1, 2, 4)] == [1.0, 0.5, 0.25]
    assert HarmonicStep(offset=1)(1) == 0.5


def test_harmonic_estimator_is_the_running_mean():
    rng = np.random.default_rng(0)
    w = rng.random((3, 500))
    np.testing.assert_allclose(run_estimator(w, HarmonicStep()), w.mean(axis=1), rtol=1e-12)


@given(
    arrays(np.float64, st.integers(1, 300), elements=st.floats(1e-6, 1.0)),
    st.floats(0.01, 0.99),
    st.floats(0.0, 1.0),
)
def test_unrolled_closed_form(omegas, alpha, gamma0):
    t = omegas.size
    closed = (1 - alpha) ** t * gamma0 + sum(alpha * (1 - alpha) ** tau * omegas[t - tau - 1] for tau in range(t))
    got = run_estimator(omegas, alpha, gamma0)
    assert got == pytest.approx(closed, rel=1e-12, abs=1e-300)


def test_estimator_matches_state_updates():
    rng = np.random.default_rng(3)
    omegas = rng.uniform(0.01, 1.0, 200)
    state = GaussianWeightState()
    for w in omegas:
        update_weight(state, 0, w, 0.1)
    assert state.weight(0) == run_estimator(omegas, 0.1)


# a loss matrix: cohort of 2..10 clients, 1..8 iterations, losses in a sane range
loss_matrices = st.integers(2, 10).flatmap(
    lambda n: st.integers(1, 8).flatmap(
        lambda s: arrays(np.float64, (n, s), elements=st.floats(0.0, 50.0))
    )
)


@given(loss_matrices)
def test_rewards_and_averages_are_in_range(losses):
    omegas = cohort_rewards([LossTrace(i, row) for i, row in enumerate(losses)])
    stats = compute_round_stats([LossTrace(i, row) for i, row in enumerate(losses)])
    for i, row in enumerate(losses):
        r = gaussian_rewards(LossTrace(i, row), stats)
        assert np.all((r > 0) & (r <= 1))
    assert all(0 < w <= 1 for w in omegas.values())


@given(loss_matrices, st.floats(0.01, 0.99), st.integers(1, 50))
def test_weights_stay_in_unit_interval(losses, alpha, rounds):
    state = GaussianWeightState()
    omegas = cohort_rewards([LossTrace(i, row) for i, row in enumerate(losses)])
    for _ in range(rounds):
        for k, w in omegas.items():
            update_weight(state, k, w, alpha)
    assert all(0 <= g <= 1 for g in state.gamma.values())


@pytest.mark.parametrize("losses", [[[0.0], [1e-300]], [[5e-324], [0.0], [0.0], [0.0], [0.0]]])
def test_tiny_spreads_do_not_underflow(losses):
    traces = [LossTrace(i, row) for i, row in enumerate(losses)]
    omegas = cohort_rewards(traces)
    assert all(0 < w <= 1 for w in omegas.values())


def test_rewards_are_scale_invariant():
    rows = np.array([[1.0, 2.0], [1.5, 2.5], [3.0, 1.0]])
    a = cohort_rewards([LossTrace(i, r) for i, r in enumerate(rows)])
    b = cohort_rewards([LossTrace(i, r * 1e-200) for i, r in enumerate(rows)])
    for k in a:
        assert b[k] == pytest.approx(a[k], rel=1e-12)
