"""FD-step: residual graph auto-encoder trained for reconstruction plus smoothness.

``X_hat = beta * X0 + (1 - beta) * Dec(Enc(X0 | E) | E)`` where encoder and
decoder are two-layer GCNs. The objective is

    L = mean_v ||x_hat_v - x_v||_2 + gamma * tr(X_hat^T L X_hat)

with L the normalized Laplacian of the current edge set, isolated rows masked.
"""
import logging
from dataclasses import dataclass, asdict, field

import numpy as np

from .exceptions import InvalidParameterValue, NumericalError
from .graph import sym_norm_adj, normalized_laplacian
from .nn import ParamSet, init_params, gcn_layer_forward, gcn_backward, check_finite

LOGGER = logging.getLogger('UGD')

LAYERS = (('enc1', 'relu'), ('enc2', 'relu'), ('dec1', 'relu'), ('dec2', 'identity'))


@dataclass(frozen=True)
class FdConfig:
    beta: float = 0.0
    gamma: float = 5e-4
    lr: float = 1e-3
    epochs_per_step: int = 200
    weight_decay: float = 0.0
    hidden: tuple = (64, 32)
    fresh_init: bool = False

    def validate(self):
        if not 0.0 <= self.beta <= 1.0:
            raise InvalidParameterValue('beta must be in [0, 1], got {}'.format(self.beta))
        if self.gamma < 0:
            raise InvalidParameterValue('gamma must be >= 0, got {}'.format(self.gamma))
        if self.lr < 0:
            raise InvalidParameterValue('lr must be >= 0, got {}'.format(self.lr))
        if self.epochs_per_step < 0:
            raise InvalidParameterValue('epochs_per_step must be >= 0')
        if self.weight_decay < 0:
            raise InvalidParameterValue('weight_decay must be >= 0')
        if len(self.hidden) != 2 or min(self.hidden) < 1:
            raise InvalidParameterValue('hidden must hold two positive widths, got {}'.format(self.hidden))
        return self

    @classmethod
    def from_dict(cls, data):
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise InvalidParameterValue('unknown fd fields: {}'.format(', '.join(sorted(unknown))))
        data = dict(data)
        if 'hidden' in data:
            data['hidden'] = tuple(int(h) for h in data['hidden'])
        return cls(**data).validate()

    def to_dict(self):
        out = asdict(self)
        out['hidden'] = list(self.hidden)
        return out


class AutoEncoderParams(ParamSet):
    """Weights of enc1, enc2, dec1, dec2 (d -> h1 -> h2 -> h1 -> d) plus Adam state."""

    @classmethod
    def initialize(cls, d, hidden=(64, 32), seed=0):
        h1, h2 = hidden
        base = init_params(np.random.default_rng(seed), [name for name, _ in LAYERS], [d, h1, h2, h1, d])
        return cls(names=base.names, layers=base.layers)


@dataclass
class FdEpoch:
    recon: float
    smooth: float
    total: float


@dataclass
class FdResult:
    """``final`` holds the losses of the returned ``X_hat``, one update past the last ``trace`` entry."""

    X_hat: np.ndarray
    params: AutoEncoderParams
    final: FdEpoch
    trace: list = field(default_factory=list)


def _forward(A_hat, X0, params, beta):
    H = X0
    caches = []
    for name, activation in LAYERS:
        H, cache = gcn_layer_forward(A_hat, H, params.layers[name], activation)
        caches.append(cache)
    X_hat = beta * X0 + (1.0 - beta) * H
    return X_hat, caches


def autoencoder_forward(g, X0, params, beta):
    """
    Denoised features for the current edge set of ``g``.

    :param g: graph carrying the current edges
    :param X0: original n x d features (input, residual and target)
    :param params: AutoEncoderParams
    :param beta: residual weight in [0, 1]
    :return: X_hat
    """
    X0 = np.asarray(X0, dtype=np.float64)
    if X0.shape[0] != g.n:
        raise InvalidParameterValue('features have {} rows, graph has {} nodes'.format(X0.shape[0], g.n))
    X_hat, _ = _forward(sym_norm_adj(g), X0, params, beta)
    return check_finite(X_hat, 'reconstructed features')


def _check_same_shape(a, b):
    if a.shape != b.shape:
        raise InvalidParameterValue('shape mismatch: {} vs {}'.format(a.shape, b.shape))


def recon_loss(X_hat, X0):
    """Mean over nodes of the Euclidean norm of the row difference."""
    _check_same_shape(X_hat, X0)
    if X_hat.shape[0] == 0:
        return 0.0
    return float(np.linalg.norm(X_hat - X0, axis=1).mean())


def recon_grad(X_hat, X0):
    diff = X_hat - X0
    norms = np.linalg.norm(diff, axis=1)
    grad = np.zeros_like(diff)
    nz = norms > 0
    grad[nz] = diff[nz] / norms[nz][:, None]
    return grad / max(X_hat.shape[0], 1)


def smoothness_operator(g):
    """Normalized Laplacian with isolated nodes masked out of the quadratic form."""
    return normalized_laplacian(g, drop_isolated=True)


def smooth_loss(X_hat, L):
    """Trace form ``tr(X_hat^T L X_hat)``."""
    if L.shape != (X_hat.shape[0], X_hat.shape[0]):
        raise InvalidParameterValue('Laplacian {} does not match {} rows'.format(L.shape, X_hat.shape[0]))
    return float(np.sum(X_hat * np.asarray(L @ X_hat)))


def smooth_loss_pairwise(g, X_hat):
    """Pairwise form: sum over edges of ||x_u/sqrt(d_u) - x_v/sqrt(d_v)||^2."""
    if g.num_edges == 0:
        return 0.0
    scaled = X_hat / np.sqrt(np.maximum(g.degrees.degrees, 1))[:, None]
    diff = scaled[g.edges[:, 0]] - scaled[g.edges[:, 1]]
    return float(np.sum(diff * diff))


def objective(g, X0, params, cfg, A_hat=None, L=None):
    """
    Value and weight gradients of ``L_recon + gamma * L_smooth``.

    :return: (FdEpoch, list of gradients in ``params.names`` order, X_hat)
    """
    A_hat = sym_norm_adj(g) if A_hat is None else A_hat
    L = smoothness_operator(g) if L is None else L
    X_hat, caches = _forward(A_hat, X0, params, cfg.beta)
    recon = recon_loss(X_hat, X0)
    smooth = smooth_loss(X_hat, L)
    total = recon + cfg.gamma * smooth
    if not np.isfinite(total):
        raise NumericalError('non-finite FD loss (recon={}, smooth={})'.format(recon, smooth))

    upstream = (1.0 - cfg.beta) * (recon_grad(X_hat, X0) + 2.0 * cfg.gamma * np.asarray(L @ X_hat))
    grads = [None] * len(LAYERS)
    for i in reversed(range(len(LAYERS))):
        grads[i], upstream = gcn_backward(caches[i], upstream)
    return FdEpoch(recon=recon, smooth=smooth, total=total), grads, X_hat


def fd_train_step(g, X0, params, cfg):
    """
    Train the auto-encoder for ``cfg.epochs_per_step`` full-batch Adam steps
    on the current edge set.

    :param g: graph carrying the current edges (fixed during the step)
    :param X0: original features
    :param params: AutoEncoderParams to start from; not modified
    :param cfg: FdConfig
    :return: FdResult with the final X_hat, its losses, trained params and per-epoch losses
    """
    X0 = np.asarray(X0, dtype=np.float64)
    params = params.copy()
    A_hat = sym_norm_adj(g)
    L = smoothness_operator(g)
    trace = []
    for epoch in range(cfg.epochs_per_step):
        losses, grads, _ = objective(g, X0, params, cfg, A_hat=A_hat, L=L)
        trace.append(losses)
        params.update(grads, cfg.lr, cfg.weight_decay)
        if epoch % 50 == 0:
            LOGGER.debug('fd epoch %s: recon=%.6f smooth=%.6f total=%.6f',
                         epoch, losses.recon, losses.smooth, losses.total)
    X_hat, _ = _forward(A_hat, X0, params, cfg.beta)
    check_finite(X_hat, 'reconstructed features')
    recon, smooth = recon_loss(X_hat, X0), smooth_loss(X_hat, L)
    final = FdEpoch(recon=recon, smooth=smooth, total=recon + cfg.gamma * smooth)
    return FdResult(X_hat=X_hat, params=params, final=final, trace=trace)
