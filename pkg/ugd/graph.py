"""Graph data model and the spectral operators shared by the denoising steps.

A :class:`Graph` is an immutable snapshot ``G = {E, X}``: a simple undirected
edge set stored canonically (``u < v``, lexicographic order) plus a dense
feature matrix, optional labels and optional train/val/test masks.
"""
from functools import cached_property
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .exceptions import InvalidParameterValue

MASK_NAMES = ('train', 'val', 'test')


def _readonly(arr):
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class NodeDegreeView:
    """Neighbor counts under the edge set of the graph it was taken from."""

    degrees: np.ndarray

    def __getitem__(self, v):
        return int(self.degrees[v])

    def __len__(self):
        return len(self.degrees)

    @property
    def total(self):
        return int(self.degrees.sum())


@dataclass(frozen=True, eq=False)
class Graph:
    n: int
    edges: np.ndarray
    X: np.ndarray
    labels: np.ndarray = None
    masks: dict = field(default=None)

    @property
    def d(self):
        return self.X.shape[1]

    @property
    def num_edges(self):
        return len(self.edges)

    @property
    def num_classes(self):
        if self.labels is None:
            return 0
        return int(self.labels.max()) + 1 if self.n else 0

    @property
    def has_splits(self):
        return self.labels is not None and self.masks is not None

    def mask(self, name):
        if self.masks is None:
            raise InvalidParameterValue('graph carries no {} mask'.format(name))
        return self.masks[name]

    @cached_property
    def adjacency(self):
        """Symmetric CSR adjacency with sorted column indices."""
        rows = np.concatenate([self.edges[:, 0], self.edges[:, 1]])
        cols = np.concatenate([self.edges[:, 1], self.edges[:, 0]])
        data = np.ones(len(rows), dtype=np.float64)
        adj = sp.csr_matrix((data, (rows, cols)), shape=(self.n, self.n))
        adj.sort_indices()
        return adj

    @property
    def indptr(self):
        return self.adjacency.indptr

    @property
    def indices(self):
        return self.adjacency.indices

    def neighbors(self, u):
        return self.indices[self.indptr[u]:self.indptr[u + 1]]

    @cached_property
    def degrees(self):
        return NodeDegreeView(_readonly(np.diff(self.indptr).astype(np.int64)))

    def edge_list(self):
        return [(int(u), int(v)) for u, v in self.edges]

    def edge_set(self):
        return frozenset(self.edge_list())

    def with_edges(self, edges):
        return build_graph(edges, self.X, labels=self.labels, masks=self.masks, n=self.n)

    def with_features(self, X):
        return build_graph(self.edges, X, labels=self.labels, masks=self.masks, n=self.n)

    def with_labels(self, labels):
        return build_graph(self.edges, self.X, labels=labels, masks=self.masks, n=self.n)

    @cached_property
    def _sym_norm_adj(self):
        a_tilde = self.adjacency + sp.identity(self.n, format='csr')
        deg = np.asarray(a_tilde.sum(axis=1)).ravel()
        d_inv_sqrt = sp.diags(1.0 / np.sqrt(deg))
        return sp.csr_matrix(d_inv_sqrt @ a_tilde @ d_inv_sqrt)

    def _laplacian(self, drop_isolated):
        deg = self.degrees.degrees.astype(np.float64)
        connected = deg > 0
        d_inv_sqrt = np.zeros(self.n)
        d_inv_sqrt[connected] = 1.0 / np.sqrt(deg[connected])
        norm_adj = sp.diags(d_inv_sqrt) @ self.adjacency @ sp.diags(d_inv_sqrt)
        diag = connected.astype(np.float64) if drop_isolated else np.ones(self.n)
        return sp.csr_matrix(sp.diags(diag) - norm_adj)


def _canonical_edges(edge_list, n):
    arr = np.asarray(edge_list, dtype=np.int64)
    if arr.size == 0:
        return np.zeros((0, 2), dtype=np.int64)
    arr = arr.reshape(-1, 2)
    if arr.min() < 0 or arr.max() >= n:
        bad = arr[(arr < 0).any(axis=1) | (arr >= n).any(axis=1)][0]
        raise InvalidParameterValue(
            'node id out of range in edge ({}, {}) for n={}'.format(bad[0], bad[1], n))
    arr = arr[arr[:, 0] != arr[:, 1]]
    arr = np.sort(arr, axis=1)
    if len(arr) == 0:
        return np.zeros((0, 2), dtype=np.int64)
    return np.unique(arr, axis=0)


def _check_masks(masks, n):
    if masks is None:
        return None
    if not isinstance(masks, dict):
        masks = dict(zip(MASK_NAMES, masks))
    checked = {}
    for name in MASK_NAMES:
        mask = np.asarray(masks.get(name, np.zeros(n, dtype=bool)), dtype=bool)
        if mask.shape != (n,):
            raise InvalidParameterValue('{} mask has length {}, expected {}'.format(name, len(mask), n))
        checked[name] = _readonly(mask.copy())
    overlap = (checked['train'].astype(int) + checked['val'].astype(int) + checked['test'].astype(int)) > 1
    if overlap.any():
        raise InvalidParameterValue('train/val/test masks overlap at node {}'.format(int(np.flatnonzero(overlap)[0])))
    return checked


def build_graph(edge_list, X, labels=None, masks=None, n=None):
    """
    Build a canonical graph from raw input.

    Directed duplicates are merged, self-loops dropped and pairs stored with
    ``u < v`` in ascending order.

    :param edge_list: iterable of node pairs
    :param X: n x d feature matrix
    :param labels: optional class ids in [0, C)
    :param masks: optional dict (or triple) of train/val/test boolean vectors
    :param n: node count, defaults to the row count of X
    :return: Graph
    """
    X = np.array(X, dtype=np.float64, copy=True)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if X.ndim != 2:
        raise InvalidParameterValue('feature matrix must be 2-dimensional, got shape {}'.format(X.shape))
    if n is None:
        n = X.shape[0]
    if X.shape[0] != n:
        raise InvalidParameterValue('feature matrix has {} rows, expected {}'.format(X.shape[0], n))
    if not np.isfinite(X).all():
        row = int(np.flatnonzero(~np.isfinite(X).all(axis=1))[0])
        raise InvalidParameterValue('non-finite feature entry in row {}'.format(row))

    if labels is not None:
        labels = np.array(labels, dtype=np.int64, copy=True)
        if labels.shape != (n,):
            raise InvalidParameterValue('labels have length {}, expected {}'.format(len(labels), n))
        if n and labels.min() < 0:
            raise InvalidParameterValue('labels must be non-negative class ids')
        labels = _readonly(labels)

    edges = _readonly(_canonical_edges(edge_list, n))
    return Graph(n=n, edges=edges, X=_readonly(X), labels=labels, masks=_check_masks(masks, n))


def sym_norm_adj(g):
    """GCN propagation operator ``D~^-1/2 (A + I) D~^-1/2`` as a CSR matrix."""
    return g._sym_norm_adj


def normalized_laplacian(g, drop_isolated=False):
    """
    ``L = I - D^-1/2 A D^-1/2`` without self-loops.

    Degree-0 nodes get a zero row and column off the diagonal and 1 on it,
    or 0 on it as well when ``drop_isolated`` is set (the smoothness loss
    uses that form so isolated nodes contribute nothing).
    """
    return g._laplacian(drop_isolated)


def _as_edge_set(edges):
    if isinstance(edges, Graph):
        return edges.edge_set()
    if isinstance(edges, np.ndarray):
        return {(int(u), int(v)) for u, v in edges.reshape(-1, 2)}
    return {(min(u, v), max(u, v)) for u, v in edges}


def edge_set_difference(a, b):
    """Size of the symmetric difference of two edge sets."""
    return len(_as_edge_set(a) ^ _as_edge_set(b))
