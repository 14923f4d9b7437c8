import numpy as np
import pytest

from ugd.exceptions import InvalidParameterValue
from ugd.graph import build_graph
from ugd.nn import GcnLayerParams
from ugd.features import (FdConfig, AutoEncoderParams, autoencoder_forward, recon_loss, smooth_loss,
                          smooth_loss_pairwise, smoothness_operator, objective, fd_train_step)

from tests.common import random_graph, finite_difference, relative_error


def zero_params(d, hidden=(4, 3)):
    params = AutoEncoderParams.initialize(d, hidden)
    for name in params.names:
        params.layers[name] = GcnLayerParams(np.zeros_like(params.layers[name].W))
    return params


def test_full_residual_returns_input(path3):
    params = AutoEncoderParams.initialize(path3.d, (4, 3), seed=7)
    np.testing.assert_array_equal(autoencoder_forward(path3, path3.X, params, 1.0), path3.X)


def test_half_residual_with_zero_weights(path3):
    X_hat = autoencoder_forward(path3, path3.X, zero_params(path3.d), 0.5)
    np.testing.assert_allclose(X_hat, np.asarray(path3.X) / 2)


def test_forward_rejects_wrong_rows(path3):
    with pytest.raises(InvalidParameterValue):
        autoencoder_forward(path3, np.ones((4, 2)), zero_params(2), 0.0)


def test_recon_loss_examples():
    assert recon_loss(np.ones((3, 2)), np.ones((3, 2))) == 0.0
    assert recon_loss(np.array([[3.0], [4.0]]), np.zeros((2, 1))) == pytest.approx(3.5)
    assert recon_loss(np.array([[3.0, 4.0]]), np.zeros((1, 2))) == pytest.approx(5.0)
    with pytest.raises(InvalidParameterValue):
        recon_loss(np.zeros((2, 1)), np.zeros((2, 2)))


def test_smooth_loss_single_edge():
    g = build_graph([(0, 1)], [[1.0], [-1.0]])
    X = np.asarray(g.X)
    assert smooth_loss(X, smoothness_operator(g)) == pytest.approx(4.0)
    assert smooth_loss_pairwise(g, X) == pytest.approx(4.0)


def test_smooth_loss_without_edges_is_zero():
    g = build_graph([], np.ones((3, 2)))
    assert smooth_loss(np.asarray(g.X), smoothness_operator(g)) == 0.0
    assert smooth_loss_pairwise(g, np.asarray(g.X)) == 0.0


def test_smooth_loss_constant_on_regular_graph():
    g = build_graph([(0, 1), (1, 2), (2, 3), (0, 3)], np.full((4, 2), 2.5))
    assert smooth_loss(np.asarray(g.X), smoothness_operator(g)) == pytest.approx(0.0, abs=1e-12)


def test_trace_and_pairwise_forms_agree(rng):
    for _ in range(50):
        g = random_graph(rng, int(rng.integers(2, 10)), p=0.4, d=3)
        X = np.asarray(g.X)
        assert smooth_loss(X, smoothness_operator(g)) == pytest.approx(smooth_loss_pairwise(g, X), abs=1e-8)


def test_objective_gradient_matches_finite_differences():
    rng = np.random.default_rng(11)
    for trial in range(20):
        n, d = int(rng.integers(2, 7)), int(rng.integers(1, 5))
        g = random_graph(rng, n, p=0.5, d=d)
        X0 = np.asarray(g.X)
        cfg = FdConfig(beta=float(rng.uniform(0, 0.9)), gamma=float(rng.uniform(0, 1)), hidden=(5, 3))
        params = AutoEncoderParams.initialize(d, cfg.hidden, seed=trial)
        _, grads, _ = objective(g, X0, params, cfg)
        for name, grad in zip(params.names, grads):
            numeric = finite_difference(lambda: objective(g, X0, params, cfg)[0].total, params.layers[name].W)
            assert relative_error(grad, numeric) < 1e-4, (trial, name)


def test_training_reduces_reconstruction_loss():
    rng = np.random.default_rng(2)
    g = build_graph([(0, 1), (1, 2), (2, 3)], rng.normal(size=(4, 2)))
    cfg = FdConfig(beta=0.0, gamma=0.0, lr=0.01, epochs_per_step=300, hidden=(8, 4))
    result = fd_train_step(g, g.X, AutoEncoderParams.initialize(2, cfg.hidden, seed=0), cfg)
    assert len(result.trace) == 300
    assert result.final.recon < result.trace[0].recon
    assert recon_loss(result.X_hat, np.asarray(g.X)) < result.trace[0].recon


def test_training_with_full_residual_keeps_input(path3):
    cfg = FdConfig(beta=1.0, gamma=1.0, lr=0.1, epochs_per_step=5, hidden=(4, 3))
    start = AutoEncoderParams.initialize(path3.d, cfg.hidden, seed=1)
    result = fd_train_step(path3, path3.X, start, cfg)
    np.testing.assert_array_equal(result.X_hat, path3.X)
    for name in start.names:
        np.testing.assert_allclose(result.params.layers[name].W, start.layers[name].W)


def test_training_does_not_touch_input_params(path3):
    cfg = FdConfig(epochs_per_step=3, lr=0.1, hidden=(4, 3))
    start = AutoEncoderParams.initialize(path3.d, cfg.hidden, seed=1)
    before = start.layers['enc1'].W.copy()
    fd_train_step(path3, path3.X, start, cfg)
    np.testing.assert_array_equal(start.layers['enc1'].W, before)
    assert start.adam.t == 0


def test_zero_epochs_returns_current_reconstruction(path3):
    cfg = FdConfig(epochs_per_step=0, hidden=(4, 3))
    params = AutoEncoderParams.initialize(path3.d, cfg.hidden, seed=1)
    result = fd_train_step(path3, path3.X, params, cfg)
    assert result.trace == []
    X_hat = autoencoder_forward(path3, path3.X, params, cfg.beta)
    np.testing.assert_allclose(result.X_hat, X_hat)
    assert result.final.recon == pytest.approx(recon_loss(X_hat, np.asarray(path3.X)))


def test_final_losses_describe_returned_features(rng):
    g = random_graph(rng, 8, p=0.5, d=3)
    X0 = np.asarray(g.X)
    cfg = FdConfig(gamma=0.5, lr=0.05, epochs_per_step=20, hidden=(6, 4))
    result = fd_train_step(g, X0, AutoEncoderParams.initialize(3, cfg.hidden, seed=2), cfg)
    smooth = smooth_loss(result.X_hat, smoothness_operator(g))
    assert result.final.recon == recon_loss(result.X_hat, X0)
    assert result.final.smooth == smooth
    assert result.final.total == pytest.approx(result.final.recon + 0.5 * smooth)
    assert result.final != result.trace[-1]


def off_null_share(X, degrees):
    """Share of the Frobenius norm of X outside the span of sqrt(degree)."""
    u = np.sqrt(degrees) / np.linalg.norm(np.sqrt(degrees))
    return np.linalg.norm(X - np.outer(u, u @ X)) / np.linalg.norm(X)


def test_strong_smoothing_pulls_rows_toward_sqrt_degree():
    edges = [(0, 1), (0, 2), (1, 2), (0, 3), (3, 4), (4, 5), (5, 6), (2, 6)]
    g = build_graph(edges, np.random.default_rng(8).normal(size=(7, 3)))
    degrees = np.bincount(np.asarray(edges).ravel(), minlength=7).astype(float)
    shares = {}
    for gamma in (0.0, 1e3):
        cfg = FdConfig(gamma=gamma, lr=0.01, epochs_per_step=1000, hidden=(16, 8))
        result = fd_train_step(g, g.X, AutoEncoderParams.initialize(3, cfg.hidden, seed=0), cfg)
        shares[gamma] = off_null_share(result.X_hat, degrees)
    assert shares[1e3] < 0.25 * shares[0.0]


@pytest.mark.parametrize('data', [
    {'beta': 1.5},
    {'gamma': -1},
    {'hidden': [3]},
    {'epochs': 10},
])
def test_fd_config_rejects(data):
    with pytest.raises(InvalidParameterValue):
        FdConfig.from_dict(data)


def test_fd_config_from_dict():
    cfg = FdConfig.from_dict({'beta': 0.2, 'hidden': [16, 8]})
    assert cfg.hidden == (16, 8)
    assert cfg.to_dict()['hidden'] == [16, 8]
