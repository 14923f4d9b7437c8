"""Dense neural-network substrate on numpy/scipy.

GCN layers compute ``act(A_hat @ H @ W)`` with no bias. Forward calls return
the output together with a cache that the matching backward call consumes;
A_hat is symmetric so the gradient w.r.t. H is ``A_hat (dZ) W^T``.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from .exceptions import InvalidParameterValue, NumericalError

LOGGER = logging.getLogger('UGD')

ACTIVATIONS = ('relu', 'identity')

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


def check_finite(arr, what):
    if not np.isfinite(arr).all():
        raise NumericalError('non-finite values in {}'.format(what))
    return arr


@dataclass
class GcnLayerParams:
    W: np.ndarray

    @property
    def shape(self):
        return self.W.shape


@dataclass(frozen=True)
class GcnCache:
    A_hat: object
    H: np.ndarray
    W: np.ndarray
    Z: np.ndarray
    activation: str


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps: float = ADAM_EPS

    @classmethod
    def zeros_like(cls, params):
        return cls(m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params])


def glorot_uniform(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def gcn_layer_forward(A_hat, H, params, activation='relu'):
    """
    One GCN propagation.

    :param A_hat: normalized adjacency, sparse or dense n x n
    :param H: n x f input
    :param params: GcnLayerParams with an f x f' weight
    :param activation: ``relu`` or ``identity``
    :return: (n x f' output, GcnCache)
    """
    if activation not in ACTIVATIONS:
        raise InvalidParameterValue('unknown activation {}'.format(activation))
    W = params.W
    if H.shape[1] != W.shape[0]:
        raise InvalidParameterValue('cannot propagate {} features through a {} weight'.format(H.shape, W.shape))
    if A_hat.shape != (H.shape[0], H.shape[0]):
        raise InvalidParameterValue('operator shape {} does not match {} nodes'.format(A_hat.shape, H.shape[0]))
    Z = np.asarray(A_hat @ (H @ W))
    out = np.maximum(Z, 0.0) if activation == 'relu' else Z
    check_finite(out, 'GCN layer output')
    return out, GcnCache(A_hat=A_hat, H=H, W=W, Z=Z, activation=activation)


def gcn_backward(cache, upstream):
    """
    Reverse pass of :func:`gcn_layer_forward`.

    :return: (grad_W, grad_H)
    """
    if cache is None:
        raise InvalidParameterValue('gcn_backward needs the cache of a forward call')
    if upstream.shape != cache.Z.shape:
        raise InvalidParameterValue('upstream gradient {} does not match output {}'.format(
            upstream.shape, cache.Z.shape))
    dZ = upstream * (cache.Z > 0) if cache.activation == 'relu' else upstream
    propagated = np.asarray(cache.A_hat @ dZ)
    grad_W = cache.H.T @ propagated
    grad_H = propagated @ cache.W.T
    return grad_W, grad_H


def adam_step(params, grads, state, lr, weight_decay=0.0):
    """
    One Adam update with bias correction. Weight decay is added to the
    gradient as an L2 term.

    :param params: list of arrays
    :param grads: list of arrays of matching shapes
    :param state: AdamState for these parameters
    :return: (new params, new AdamState)
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise InvalidParameterValue('adam_step got {} params, {} grads, {} moments'.format(
            len(params), len(grads), len(state.m)))
    t = state.t + 1
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape or p.shape != m.shape:
            raise InvalidParameterValue('shape mismatch in adam_step: {} vs {}'.format(p.shape, g.shape))
        if weight_decay:
            g = g + weight_decay * p
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * (g * g)
        step = (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        new_params.append(p - lr * step)
        new_m.append(m)
        new_v.append(v)
    new_state = AdamState(m=new_m, v=new_v, t=t, beta1=state.beta1, beta2=state.beta2, eps=state.eps)
    return new_params, new_state


def softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits, labels, mask):
    """
    Mean cross-entropy over the masked rows.

    :return: (loss, gradient w.r.t. logits, zero outside the mask)
    """
    mask = np.asarray(mask, dtype=bool)
    count = int(mask.sum())
    if count == 0:
        raise InvalidParameterValue('cross-entropy over an empty mask')
    labels = np.asarray(labels)
    idx = np.flatnonzero(mask)
    shifted = logits[idx] - logits[idx].max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    log_probs = shifted - log_norm[:, None]
    loss = -log_probs[np.arange(count), labels[idx]].mean()
    grad = np.zeros_like(logits)
    probs = np.exp(log_probs)
    probs[np.arange(count), labels[idx]] -= 1.0
    grad[idx] = probs / count
    return float(loss), grad


def dropout(rng, H, rate):
    """Inverted dropout; returns (output, scaling mask)."""
    if rate <= 0.0:
        return H, None
    keep = (rng.random(H.shape) >= rate) / (1.0 - rate)
    return H * keep, keep


@dataclass(eq=False)
class ParamSet:
    """Ordered named weight matrices with their Adam state."""

    names: tuple
    layers: dict
    adam: AdamState = field(default=None)

    def __post_init__(self):
        if self.adam is None:
            self.adam = AdamState.zeros_like(self.arrays())

    def arrays(self):
        return [self.layers[name].W for name in self.names]

    def update(self, grads, lr, weight_decay=0.0):
        new, self.adam = adam_step(self.arrays(), grads, self.adam, lr, weight_decay)
        for name, W in zip(self.names, new):
            self.layers[name] = GcnLayerParams(check_finite(W, 'weights of {}'.format(name)))

    def copy(self):
        adam = AdamState(m=[m.copy() for m in self.adam.m], v=[v.copy() for v in self.adam.v],
                         t=self.adam.t, beta1=self.adam.beta1, beta2=self.adam.beta2, eps=self.adam.eps)
        return type(self)(names=self.names,
                          layers={k: GcnLayerParams(p.W.copy()) for k, p in self.layers.items()},
                          adam=adam)

    def __getattr__(self, name):
        layers = self.__dict__.get('layers')
        if layers is not None and name in layers:
            return layers[name]
        raise AttributeError(name)


def init_params(rng, names, dims):
    """Glorot-uniform weights for a chain of layers ``dims[0] -> dims[1] -> ...``."""
    layers = {name: GcnLayerParams(glorot_uniform(rng, dims[i], dims[i + 1])) for i, name in enumerate(names)}
    return ParamSet(names=tuple(names), layers=layers)
