import numpy as np
import pytest

from helpers import model_with_logprobs, single_token_record
from clha.lm import TinyLM
from clha.losses import MarginConfig
from clha.optim import SGD, clip_global_norm
from clha.prefdata import SynthConfig, generate_synthetic
from clha.reward import RewardScorer, TrainingError, from_rewards
from clha.trainer import TrainConfig, batch_gradient, step, train
from clha.oracle import DEFAULT_ORACLE


@pytest.fixture(scope="module")
def data():
    return generate_synthetic(SynthConfig(records=120, noise=0.2), seed=3)


@pytest.fixture(scope="module")
def scorer():
    return RewardScorer.from_oracle(DEFAULT_ORACLE, 16)


def test_zero_epochs(data, scorer):
    m = TinyLM.random(16, 2, seed=1)
    out, history = train(m, scorer, data, TrainConfig(epochs=0))
    assert history == []
    assert np.array_equal(out.params, m.params)


def test_input_model_not_mutated(data, scorer):
    m = TinyLM.uniform(16, 2)
    before = m.params.copy()
    train(m, scorer, data, TrainConfig(epochs=1))
    assert np.array_equal(m.params, before)


def test_margin_makes_the_difference():
    # p gap of 0.1 in favour of the chosen response, below the margin of 2.0;
    # chosen reward < 0 switches the SFT term off
    model = model_with_logprobs([-1.0, -1.1])
    rs = from_rewards(single_token_record(2), (-0.1, -0.9), 0.05)
    _, g_clha = batch_gradient(model, [rs], TrainConfig(objective="clha", threads=1))
    _, g_noxi = batch_gradient(model, [rs], TrainConfig(objective="clha_no_xi", threads=1))
    assert np.any(g_clha != 0)
    assert not g_noxi.any()


def test_same_config_bit_identical(data, scorer):
    m = TinyLM.uniform(16, 2)
    cfg = TrainConfig(epochs=2, seed=5)
    a, ha = train(m, scorer, data, cfg)
    b, hb = train(m, scorer, data, cfg)
    assert np.array_equal(a.params, b.params)
    assert ha == hb


def test_history_one_entry_per_step(data, scorer):
    cfg = TrainConfig(epochs=2, batch_size=7)
    _, history = train(TinyLM.uniform(16, 2), scorer, data, cfg)
    steps_per_epoch = -(-len(data) // 7)
    assert len(history) == 2 * steps_per_epoch
    assert [h["step"] for h in history] == list(range(len(history)))
    for h in history:
        assert set(h) >= {"step", "clha", "sft", "total", "lambda", "gated_pairs", "epoch", "grad_norm", "clipped"}


def test_fully_gated_noisy_batch_is_a_no_op():
    model = model_with_logprobs([-2.0, -1.8])
    before = model.params.copy()
    rs = from_rewards(single_token_record(2), (-0.1, -0.12), 0.05)
    report, norm = step(model, [rs], TrainConfig(epochs=1))
    assert norm == 0.0 and report.total == 0.0
    assert np.array_equal(model.params, before)


@pytest.mark.parametrize("optimizer", ["sgd", "adam"])
def test_zero_learning_rate(optimizer):
    model = model_with_logprobs([-2.0, -1.8])
    before = model.params.copy()
    rs = from_rewards(single_token_record(2), (0.5, -0.5), 0.05)
    report, norm = step(model, [rs], TrainConfig(learning_rate=0.0, optimizer=optimizer))
    assert np.array_equal(model.params, before)
    assert report.total > 0 and norm > 0


def test_sgd_on_quadratic():
    eta = 0.1
    theta = np.array([1.0])
    SGD(eta).update(theta, 2 * theta)
    assert theta[0] == pytest.approx(1 - 2 * eta, abs=1e-15)


def test_clip_global_norm():
    g = np.array([30.0, 40.0])
    assert clip_global_norm(g, 10.0) == 50.0
    assert g == pytest.approx([6.0, 8.0])
    h = np.array([3.0, 4.0])
    clip_global_norm(h, 10.0)
    assert h.tolist() == [3.0, 4.0]


def test_sft_epoch_loss_nonincreasing():
    records = generate_synthetic(SynthConfig(records=2000, noise=0.0), seed=42)
    cfg = TrainConfig(objective="sft", epochs=4, seed=42)
    _, history = train(TinyLM.uniform(16, 2), None, records, cfg)
    means = [np.mean([h["total"] for h in history if h["epoch"] == e]) for e in range(cfg.epochs)]
    assert all(b <= a + 1e-6 for a, b in zip(means, means[1:]))


def test_ablation_equivalence_bit_exact(data, scorer):
    m = TinyLM.random(16, 2, seed=2)
    gated = TrainConfig(objective="clha", epochs=2, margin_cfg=MarginConfig(margin=0.0, epsilon=float("inf")))
    plain = TrainConfig(objective="clha_no_contrastive", epochs=2,
                        margin_cfg=MarginConfig(margin=0.0, epsilon=float("inf")))
    a, ha = train(m, scorer, data, gated)
    b, hb = train(m, scorer, data, plain)
    assert np.array_equal(a.params, b.params)
    assert ha == hb
    # the gate threshold does not affect the SFT-only objective's trajectory
    c, hc = train(m, scorer, data, TrainConfig(objective="clha_no_contrastive", epochs=2))
    assert np.array_equal(a.params, c.params)
    keys = ("clha", "sft", "total", "lambda", "grad_norm")
    assert [[h[k] for k in keys] for h in ha] == [[h[k] for k in keys] for h in hc]


def test_no_rescore_ignores_scorer(data, scorer):
    m = TinyLM.uniform(16, 2)
    cfg = TrainConfig(objective="clha_no_rescore", epochs=1)
    a, ha = train(m, scorer, data, cfg)
    b, hb = train(m, None, data, cfg)
    assert np.array_equal(a.params, b.params)
    assert all(h["lambda"] == 0 and h["gated_pairs"] == 0 for h in ha)


def test_rescoring_objective_needs_scorer(data):
    with pytest.raises(ValueError):
        train(TinyLM.uniform(16, 2), None, data, TrainConfig(objective="clha"))


def test_concurrent_matches_serial(data, scorer):
    from clha.trainer import prepare
    m = TinyLM.random(16, 2, seed=9)
    batch = prepare(data[:16], scorer, TrainConfig())
    r1, g1 = batch_gradient(m, batch, TrainConfig(threads=1))
    r4, g4 = batch_gradient(m, batch, TrainConfig(threads=4))
    assert np.array_equal(g1, g4)
    assert [r.total for r in r1] == [r.total for r in r4]


def test_non_finite_loss_aborts(data, scorer):
    m = TinyLM.uniform(16, 2)
    m.params[:] = np.nan
    with pytest.raises(TrainingError, match=r"step 0: non-finite loss at record \d+"):
        train(m, scorer, data, TrainConfig(epochs=1))


@pytest.mark.parametrize("kwargs", [dict(objective="dpo"), dict(epochs=-1), dict(batch_size=0),
                                    dict(optimizer="rmsprop"), dict(learning_rate=-1.0)])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        TrainConfig(**kwargs)


def test_config_round_trip():
    cfg = TrainConfig(objective="pro", margin_cfg=MarginConfig(margin=1.5), threads=3)
    again = TrainConfig.from_dict(cfg.to_dict())
    assert again.to_dict() == cfg.to_dict()
    with pytest.raises(ValueError, match="unknown config keys"):
        TrainConfig.from_dict({"objective": "sft", "lr": 1})
