import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from clha.oracle import DEFAULT_ORACLE, oracle_reward
from clha.prefdata import PreferenceRecord, SynthConfig, generate_synthetic
from clha.reward import (OptimizerConfig, RewardScorer, from_rewards, pairwise_accuracy,
                         rescore, rm_pair_loss, train_reward)

V = 8
Q, C, R = (1, 2), (3, 3), (4, 4)


def scorer_with_gap(gap):
    """Weights giving score(Q, C) - score(Q, R) == gap exactly."""
    s = RewardScorer.zeros(V)
    s.weights[3] = gap / 2
    s.weights[4] = -gap / 2
    return s


def test_equal_scores_ln2():
    loss, grad = rm_pair_loss(RewardScorer.zeros(V), Q, C, C)
    assert loss == pytest.approx(math.log(2), abs=1e-12)
    assert not grad.any()


@pytest.mark.parametrize("gap,expected", [
    (10.0, 4.539889921686465e-05),   # mpmath -log sigmoid(10)
    (-1.0, 1.3132616875182228),      # mpmath log(1 + e)
    (0.0, 0.6931471805599453),
])
def test_closed_form_values(gap, expected):
    loss, _ = rm_pair_loss(scorer_with_gap(gap), Q, C, R)
    assert loss == pytest.approx(expected, abs=1e-9)
    assert loss == pytest.approx(oracles.neg_log_sigmoid(gap), abs=1e-12)


def test_loss_decreasing_in_gap():
    losses = [rm_pair_loss(scorer_with_gap(g), Q, C, R)[0] for g in np.linspace(-20, 20, 41)]
    assert all(a > b for a, b in zip(losses, losses[1:]))
    assert all(l > 0 for l in losses)


def test_gradient_finite_difference_100_points():
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(100):
        s = RewardScorer(V, rng.normal(size=V + V * V))
        q = tuple(rng.integers(0, V, 3)); c = tuple(rng.integers(0, V, 4)); r = tuple(rng.integers(0, V, 5))
        _, g = rm_pair_loss(s, q, c, r)

        def f(w):
            return rm_pair_loss(RewardScorer(V, w), q, c, r)[0]
        coords = np.flatnonzero(g)[:12]
        fd = oracles.central_difference(f, s.weights, coords=coords)
        worst = max(worst, oracles.rel_err([g[k] for k in coords], [fd[k] for k in coords]))
    assert worst < 1e-6


@settings(max_examples=100, deadline=None)
@given(st.floats(-30, 30))
def test_swap_sum_at_least_2ln2(gap):
    s = scorer_with_gap(gap)
    total = rm_pair_loss(s, Q, C, R)[0] + rm_pair_loss(s, Q, R, C)[0]
    assert total >= 2 * math.log(2) - 1e-12
    if gap == 0:
        assert total == pytest.approx(2 * math.log(2), abs=1e-12)
    elif abs(gap) > 1e-3:
        assert total > 2 * math.log(2)


def test_train_zero_epochs_unchanged():
    s = RewardScorer(V, np.arange(V + V * V, dtype=float))
    recs = [PreferenceRecord(Q, (C, R))]
    out = train_reward(s, recs, OptimizerConfig(epochs=0))
    assert np.array_equal(out.weights, s.weights)


def test_train_reward_heldout_accuracy():
    cfg = SynthConfig(records=200, noise=0.0)
    train = generate_synthetic(cfg, 21)
    held = generate_synthetic(cfg, 22)
    s = train_reward(RewardScorer.zeros(16), train, OptimizerConfig(epochs=20, seed=0))
    assert pairwise_accuracy(s, held) >= 0.9


def test_train_deterministic():
    recs = generate_synthetic(SynthConfig(records=50, noise=0.2), 1)
    a = train_reward(RewardScorer.zeros(16), recs, OptimizerConfig(epochs=3, seed=4))
    b = train_reward(RewardScorer.zeros(16), recs, OptimizerConfig(epochs=3, seed=4))
    assert np.array_equal(a.weights, b.weights)


def test_rescore_examples():
    rec = PreferenceRecord((1,), ((2,), (3,)))
    assert from_rewards(rec, (0.9, 0.85), 0.1).k_mask[0, 1]
    assert not from_rewards(rec, (0.9, 0.2), 0.1).k_mask[0, 1]
    noisy = from_rewards(rec, (-0.1, -0.5), 0.1)
    assert noisy.noise.is_noisy and noisy.noise.chosen_reward == -0.1


def test_rescore_uses_scorer():
    s = RewardScorer.from_oracle(DEFAULT_ORACLE, 16)
    rec = PreferenceRecord((0, 0), ((1, 1, 7, 7), (4, 9, 9, 9)))
    rs = rescore(s, rec, 0.05)
    assert rs.rewards == pytest.approx((0.5, -0.25), abs=1e-15)
    assert rs.rewards[0] == pytest.approx(oracle_reward(rec.responses[0], DEFAULT_ORACLE))
    assert not rs.noise.is_noisy
    assert rs.gated_pairs == []
    again = rescore(s, rec, 0.05)
    assert (again.rewards, again.noise, again.record) == (rs.rewards, rs.noise, rs.record)
    assert np.array_equal(again.k_mask, rs.k_mask)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=2, max_size=5), st.floats(-3, 3), st.floats(0, 1))
def test_shift_invariance_split(rewards, c, eps):
    rec = PreferenceRecord((1,), tuple((2,) for _ in rewards))
    a = from_rewards(rec, rewards, eps)
    b = from_rewards(rec, [r + c for r in rewards], eps)
    diffs_a = np.subtract.outer(a.rewards, a.rewards)
    diffs_b = np.subtract.outer(b.rewards, b.rewards)
    assert np.allclose(diffs_a, diffs_b, atol=1e-12)
    # away from the threshold, float rounding of the shift cannot flip a gate
    near = np.abs(np.abs(diffs_a) - eps) < 1e-9
    assert np.array_equal(a.k_mask[~near], b.k_mask[~near])
    assert a.noise.is_noisy == (rewards[0] < 0)
    assert b.noise.is_noisy == (rewards[0] + c < 0)


def test_k_mask_symmetric_and_matches_rule():
    rec = PreferenceRecord((1,), ((2,), (3,), (4,)))
    rs = from_rewards(rec, (0.3, 0.28, -0.4), 0.05)
    assert np.array_equal(rs.k_mask, rs.k_mask.T)
    assert rs.gated_pairs == [(0, 1)]


def test_epsilon_extremes():
    rec = PreferenceRecord((1,), ((2,), (3,), (4,)))
    assert from_rewards(rec, (0.1, 0.1, 0.2), 0.0).gated_pairs == []
    assert from_rewards(rec, (0.1, 5.0, -9.0), math.inf).gated_pairs == [(0, 1), (0, 2), (1, 2)]


def test_negative_epsilon_rejected():
    with pytest.raises(ValueError):
        rescore(RewardScorer.zeros(4), PreferenceRecord((1,), ((2,), (3,))), -0.1)


def test_scorer_json_round_trip(tmp_path):
    s = RewardScorer(4, np.random.default_rng(1).normal(size=20))
    s.save(tmp_path / "s.json")
    t = RewardScorer.load(tmp_path / "s.json")
    assert t.vocab_size == 4 and np.array_equal(t.weights, s.weights)
