from __future__ import annotations

import numpy as np
import pytest

from shared.src.common_metrics import finite_diff_grad
from shared.src.errors import ConfigError, DimensionError, DomainError
from shared.src.kernel import TrainingBatch, TrainingTuple, sample_training_batch
from shared.src.schedules import Schedule
from shared.src.scorenet import (
    AdamState,
    Architecture,
    EMAState,
    MLPScoreNet,
    RFFEmbedding,
    dsm_loss,
    dsm_loss_and_grads,
    load_checkpoint,
    rff_embed,
    save_checkpoint,
    silu,
    train,
)


def _small_net(seed: int = 0, hidden: tuple[int, ...] = (8, 8)) -> MLPScoreNet:
    rng = np.random.default_rng(seed)
    arch = Architecture("score", 4, 4, hidden, embed_width=8, n_frequencies=4)
    net = MLPScoreNet.initialize(arch, rng)
    net.params["out_w"] = rng.normal(0.0, 0.5, size=net.params["out_w"].shape)
    net.params["out_b"] = rng.normal(0.0, 0.1, size=net.params["out_b"].shape)
    for name in net.params:
        if name.startswith(("emb_b", "dense")) and name.endswith("_b"):
            net.params[name] = rng.normal(0.0, 0.1, size=net.params[name].shape)
    return net


def test_embedding_at_zero_noise() -> None:
    emb = RFFEmbedding.create(np.random.default_rng(0))
    out = rff_embed(emb, 0.0)
    assert out.shape == (64,)
    np.testing.assert_array_equal(out[:32], 1.0)
    np.testing.assert_array_equal(out[32:], 0.0)


def test_embedding_is_bounded_and_fixed() -> None:
    a = RFFEmbedding.create(np.random.default_rng(5))
    b = RFFEmbedding.create(np.random.default_rng(5))
    sigma = np.linspace(0.0, 1.0, 50)
    np.testing.assert_array_equal(a(sigma), b(sigma))
    assert np.all(np.abs(a(sigma)) <= 1.0)
    with pytest.raises(DomainError):
        a(-0.1)


def test_fresh_network_outputs_zero() -> None:
    net = MLPScoreNet.create(3, np.random.default_rng(0), hidden=(16, 16))
    np.testing.assert_array_equal(net(np.ones((5, 3)), 0.3), np.zeros((5, 3)))


def test_identity_film_reduces_to_plain_mlp() -> None:
    net = _small_net(1, hidden=(8,))
    net.params["film0_w"] = np.zeros_like(net.params["film0_w"])
    net.params["film0_b"] = np.concatenate([np.ones(8), np.zeros(8)])
    x = np.random.default_rng(2).standard_normal((6, 4))
    p = net.params
    plain = silu(x @ p["dense0_w"] + p["dense0_b"]) @ p["out_w"] + p["out_b"]
    for sigma in (0.0, 0.4, 0.9):
        np.testing.assert_allclose(net(x, sigma), plain, rtol=1e-12, atol=1e-14)


def test_output_is_continuous_in_sigma() -> None:
    net = _small_net(3)
    x = np.ones((1, 4))
    assert np.max(np.abs(net(x, 0.5) - net(x, 0.5 + 1e-9))) < 1e-6


def test_wrong_input_dimension() -> None:
    with pytest.raises(DimensionError):
        _small_net()(np.zeros((2, 3)), 0.5)


def test_dsm_loss_of_a_single_tuple() -> None:
    net = MLPScoreNet.create(2, np.random.default_rng(0), hidden=(4,))
    eps = np.array([0.6, -0.8])
    tp = TrainingTuple(x_t=np.array([0.1, 0.2]), sigma=0.5, eps=eps, weight=1.0, t=0.5)
    assert dsm_loss_and_grads(net, [tp])[0] == pytest.approx(1.0)


def test_dsm_loss_vanishes_on_perfect_prediction() -> None:
    net = MLPScoreNet.create(2, np.random.default_rng(0), hidden=(4,))
    batch = TrainingBatch.from_tuples(
        [TrainingTuple(np.array([0.3, 0.1]), 0.2, np.zeros(2), 1.0, 0.1) for _ in range(3)]
    )
    loss, grads = dsm_loss_and_grads(net, batch)
    assert loss == 0.0
    assert all(np.all(g == 0.0) for g in grads.values())


def test_dsm_loss_rejects_empty_batch() -> None:
    with pytest.raises(DomainError):
        dsm_loss_and_grads(MLPScoreNet.create(2, np.random.default_rng(0), hidden=(4,)), [])


def test_backprop_matches_finite_differences(vp: Schedule) -> None:
    net = _small_net(4)
    rng = np.random.default_rng(8)
    batch = sample_training_batch(rng.standard_normal((3, 4)), vp, "sigma2", rng)
    _, grads = dsm_loss_and_grads(net, batch)
    for name, value in net.params.items():

        def loss_at(w: np.ndarray, name: str = name) -> float:
            return dsm_loss(net.with_params({**net.params, name: w}), batch)

        fd = finite_diff_grad(loss_at, value, step=1e-5)
        np.testing.assert_allclose(grads[name], fd, rtol=1e-4, atol=1e-8, err_msg=name)


def test_adam_ignores_zero_gradient_and_ema_moves() -> None:
    params = {"w": np.array([1.0, -2.0])}
    adam = AdamState.zeros_like(params)
    adam.apply(params, {"w": np.zeros(2)})
    np.testing.assert_array_equal(params["w"], [1.0, -2.0])
    ema = EMAState({"w": np.zeros(2)}, rate=0.999)
    ema.update(params)
    np.testing.assert_allclose(ema.shadow["w"], [0.001, -0.002], rtol=1e-12)


def test_adam_first_step_is_signed_learning_rate() -> None:
    params = {"w": np.array([0.0, 0.0])}
    adam = AdamState.zeros_like(params, lr=1e-3)
    adam.apply(params, {"w": np.array([3.0, -0.5])})
    np.testing.assert_allclose(params["w"], [-1e-3, 1e-3], rtol=1e-6)


def test_ema_rate_zero_copies_params() -> None:
    ema = EMAState.track({"w": np.zeros(3)}, rate=0.0)
    ema.update({"w": np.arange(3.0)})
    np.testing.assert_array_equal(ema.shadow["w"], np.arange(3.0))


def test_training_is_deterministic(vp: Schedule) -> None:
    data = np.random.default_rng(0).standard_normal((64, 2))
    a = train(data, vp, epochs=2, batch_size=16, seed=3, hidden=(8,))
    b = train(data, vp, epochs=2, batch_size=16, seed=3, hidden=(8,))
    for name in a.net.params:
        np.testing.assert_array_equal(a.net.params[name], b.net.params[name])
        np.testing.assert_array_equal(a.ema_net.params[name], b.ema_net.params[name])
    assert a.steps == 8
    assert list(a.loss_curve.columns) == ["epoch", "step", "loss"]


def test_zero_epochs_keep_initialization(vp: Schedule) -> None:
    data = np.zeros((10, 2))
    result = train(data, vp, epochs=0, seed=5, hidden=(8,))
    init_seq, _ = np.random.SeedSequence(5).spawn(2)
    init = MLPScoreNet.create(2, np.random.default_rng(init_seq), (8,))
    for name, value in init.params.items():
        np.testing.assert_array_equal(result.net.params[name], value)
        np.testing.assert_array_equal(result.ema_net.params[name], value)
    assert result.loss_curve.empty


def test_validation_curve_is_recorded(vp: Schedule) -> None:
    data = np.random.default_rng(0).standard_normal((64, 2))
    val = sample_training_batch(data[:32], vp, "sigma2", np.random.default_rng(1))
    result = train(data, vp, epochs=2, batch_size=16, seed=0, hidden=(8,), val_batch=val, val_every=2)
    assert list(result.val_curve["step"]) == [0, 2, 4, 6, 8]


def test_checkpoint_round_trip(tmp_path, vp: Schedule) -> None:
    net = _small_net(6)
    path = save_checkpoint(net, tmp_path / "net.crsh", seed=6, step=10)
    loaded = load_checkpoint(path)
    assert isinstance(loaded, MLPScoreNet)
    assert loaded.arch == net.arch
    for name, value in net.params.items():
        np.testing.assert_array_equal(loaded.params[name], value.astype(np.float32).astype(float))
    np.testing.assert_array_equal(loaded.rff.frequencies, net.rff.frequencies.astype(np.float32))


def test_missing_checkpoint(tmp_path) -> None:
    with pytest.raises(ConfigError):
        load_checkpoint(tmp_path / "absent.crsh")
