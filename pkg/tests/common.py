import numpy as np

from ugd.graph import build_graph
from ugd.structure import proximity


def path_graph():
    """Path 0-1-2 with x0 = x1 = (1, 0) and x2 = (0, 1)."""
    return build_graph([(0, 1), (1, 2)], [[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


def random_graph(rng, n, p=0.3, d=3, labels=None):
    u, v = np.triu_indices(n, k=1)
    keep = rng.random(len(u)) < p
    X = rng.normal(size=(n, d))
    return build_graph(np.stack([u[keep], v[keep]], axis=1), X, labels=labels, n=n)


def two_cliques(size=5, d=4, seed=0):
    """Two disjoint cliques with identical features inside each clique and a 50/25/25 split."""
    rng = np.random.default_rng(seed)
    n = 2 * size
    edges = [(i, j) for block in (range(size), range(size, n)) for i in block for j in block if i < j]
    labels = np.repeat([0, 1], size)
    centers = rng.normal(size=(2, d))
    masks = {'train': np.zeros(n, dtype=bool), 'val': np.zeros(n, dtype=bool), 'test': np.zeros(n, dtype=bool)}
    for start in (0, size):
        masks['train'][start:start + size // 2] = True
        masks['val'][start + size // 2] = True
        masks['test'][start + size // 2 + 1:start + size] = True
    return build_graph(edges, centers[labels], labels=labels, masks=masks)


def brute_force_weights(g, X):
    """Double loop over nodes and edges, no vectorization."""
    X = np.asarray(X, dtype=np.float64)
    protos = []
    for u in range(g.n):
        nbrs = [b if a == u else a for a, b in g.edge_list() if u in (a, b)]
        protos.append(X[u] if not nbrs else sum(X[w] for w in nbrs) / len(nbrs))
    return {(u, v): min(proximity(protos[u], X[v]), proximity(protos[v], X[u])) for u, v in g.edge_list()}


def finite_difference(f, x, eps=1e-5):
    """Central differences of a scalar function of an array, entry by entry."""
    grad = np.zeros_like(x)
    for idx in np.ndindex(*x.shape):
        old = x[idx]
        x[idx] = old + eps
        up = f()
        x[idx] = old - eps
        down = f()
        x[idx] = old
        grad[idx] = (up - down) / (2 * eps)
    return grad


def relative_error(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), 1e-12)
