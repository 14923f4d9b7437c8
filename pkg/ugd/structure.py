"""SD-step: high-order neighborhood proximity and edge filtering.

For an edge (u, v) the proximity ``D(u, v)`` is the cosine similarity between
the neighborhood prototype of u (mean of its neighbors' features) and the
features of v. The edge weight is ``min(D(u, v), D(v, u))`` and edges with
weight below the threshold are dropped.
"""
import logging
from dataclasses import dataclass, asdict, replace

import numpy as np

from .exceptions import InvalidParameterValue

LOGGER = logging.getLogger('UGD')


@dataclass(frozen=True)
class EdgeWeightTable:
    """One symmetric weight per canonical edge, aligned with ``edges``."""

    edges: np.ndarray
    weights: np.ndarray

    def __len__(self):
        return len(self.weights)

    def __getitem__(self, pair):
        u, v = min(pair), max(pair)
        hit = np.flatnonzero((self.edges[:, 0] == u) & (self.edges[:, 1] == v))
        if len(hit) == 0:
            raise KeyError(pair)
        return float(self.weights[hit[0]])

    def as_dict(self):
        return {(int(u), int(v)): float(w) for (u, v), w in zip(self.edges, self.weights)}


@dataclass(frozen=True)
class ThresholdSchedule:
    """Cosine threshold per outer iteration: a looser one while warming up."""

    main_theta: float = 0.0
    warmup_theta: float = None
    warmup_iters: int = 1

    def __post_init__(self):
        if self.warmup_theta is None:
            object.__setattr__(self, 'warmup_theta', max(-1.0, self.main_theta - 0.1))

    def validate(self):
        for name in ('main_theta', 'warmup_theta'):
            value = getattr(self, name)
            if not -1.0 <= value <= 1.0:
                raise InvalidParameterValue('{} must be in [-1, 1], got {}'.format(name, value))
        if self.warmup_theta > self.main_theta:
            raise InvalidParameterValue('warmup_theta must not exceed main_theta')
        if self.warmup_iters < 0:
            raise InvalidParameterValue('warmup_iters must be non-negative')
        return self

    def theta_at(self, iteration):
        """Threshold for the 1-based outer iteration."""
        return self.warmup_theta if iteration <= self.warmup_iters else self.main_theta

    def with_main(self, main_theta):
        """The schedule moved to another main threshold, warm-up keeping its gap below it (clamped at -1)."""
        gap = self.main_theta - self.warmup_theta
        return replace(self, main_theta=main_theta, warmup_theta=max(-1.0, main_theta - gap))

    def to_dict(self):
        return asdict(self)


def prototypes(g, X):
    """
    Neighborhood prototypes of all nodes under the current edge set.

    Isolated nodes fall back to their own feature row.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] != g.n:
        raise InvalidParameterValue('feature matrix has {} rows, graph has {} nodes'.format(X.shape[0], g.n))
    deg = g.degrees.degrees
    summed = g.adjacency @ X
    P = np.array(X)
    connected = deg > 0
    P[connected] = summed[connected] / deg[connected][:, None]
    return P


def prototype(g, X, u):
    """Prototype ``P_u``: mean feature row of u's neighbors, or ``x_u`` if u is isolated."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] != g.n:
        raise InvalidParameterValue('feature matrix has {} rows, graph has {} nodes'.format(X.shape[0], g.n))
    nbrs = g.neighbors(u)
    if len(nbrs) == 0:
        return np.array(X[u])
    return X[nbrs].sum(axis=0) / len(nbrs)


def _rowwise_cosine(A, B):
    dots = np.einsum('ij,ij->i', A, B)
    norms = np.linalg.norm(A, axis=1) * np.linalg.norm(B, axis=1)
    out = np.zeros(len(dots))
    ok = norms > 0
    out[ok] = dots[ok] / norms[ok]
    return np.clip(out, -1.0, 1.0)


def proximity(p_u, x_v):
    """Cosine similarity of two vectors; 0 when either has zero norm."""
    p_u = np.asarray(p_u, dtype=np.float64).reshape(1, -1)
    x_v = np.asarray(x_v, dtype=np.float64).reshape(1, -1)
    if not (np.isfinite(p_u).all() and np.isfinite(x_v).all()):
        raise InvalidParameterValue('proximity of non-finite vectors')
    return float(_rowwise_cosine(p_u, x_v)[0])


def compute_edge_weights(g, X):
    """
    Min-symmetrized proximity for every current edge.

    :param g: graph whose edge set defines both the edges and the prototypes
    :param X: feature matrix the prototypes and proximities are computed from
    :return: EdgeWeightTable aligned with ``g.edges``
    """
    P = prototypes(g, X)
    X = np.asarray(X, dtype=np.float64)
    u, v = g.edges[:, 0], g.edges[:, 1]
    d_uv = _rowwise_cosine(P[u], X[v])
    d_vu = _rowwise_cosine(P[v], X[u])
    return EdgeWeightTable(edges=g.edges, weights=np.minimum(d_uv, d_vu))


def filter_edges(g, table, theta):
    """Edges of ``g`` whose weight is at least ``theta`` (a subset, never an addition)."""
    if len(table) != g.num_edges or not np.array_equal(table.edges, g.edges):
        raise InvalidParameterValue('edge weight table does not cover the graph edges')
    kept = g.edges[table.weights >= theta]
    LOGGER.debug('theta=%.4f keeps %s of %s edges', theta, len(kept), g.num_edges)
    return kept


def weight_summary(table, ledger=None):
    """
    Mean weight of all edges and, given a noise ledger, of injected and
    original edges separately.
    """
    summary = {'edges': len(table), 'mean': float(table.weights.mean()) if len(table) else float('nan')}
    if ledger is not None:
        injected = {tuple(e) for e in ledger.injected_edges}
        is_injected = np.array([(int(a), int(b)) in injected for a, b in table.edges], dtype=bool)
        for key, sel in (('injected_mean', is_injected), ('original_mean', ~is_injected)):
            summary[key] = float(table.weights[sel].mean()) if sel.any() else float('nan')
    return summary
