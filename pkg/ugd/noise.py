"""Seeded noise injectors and a stochastic block model generator.

Randomness comes from ``numpy.random.default_rng`` (PCG64). Feature and
structure injection draw from separate streams ``(seed, 0)`` and
``(seed, 1)`` so changing one ratio never reshuffles the other.
"""
import logging
from dataclasses import dataclass, field, asdict

import numpy as np

from .exceptions import InvalidParameterValue
from .graph import build_graph
from .io import random_split

LOGGER = logging.getLogger('UGD')

FEATURE_MODES = ('gaussian-replace', 'bernoulli-resample')
STRUCTURE_MODES = ('uniform-random', 'cross-class')

_FEATURE_STREAM = 0
_STRUCTURE_STREAM = 1


def round_half_up(x):
    return int(np.floor(x + 0.5))


@dataclass(frozen=True)
class NoiseSpec:
    feature_ratio: float = 0.0
    feature_mode: str = 'gaussian-replace'
    gaussian_sigma: float = None
    structure_ratio: float = 0.0
    structure_mode: str = 'cross-class'
    seed: int = 0

    def validate(self):
        for name in ('feature_ratio', 'structure_ratio'):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise InvalidParameterValue('{} must be in [0, 1], got {}'.format(name, value))
        if self.feature_mode not in FEATURE_MODES:
            raise InvalidParameterValue('feature_mode must be one of {}'.format(', '.join(FEATURE_MODES)))
        if self.structure_mode not in STRUCTURE_MODES:
            raise InvalidParameterValue('structure_mode must be one of {}'.format(', '.join(STRUCTURE_MODES)))
        if self.gaussian_sigma is not None and not self.gaussian_sigma > 0:
            raise InvalidParameterValue('gaussian_sigma must be > 0')
        if self.seed < 0:
            raise InvalidParameterValue('seed must be non-negative')
        return self

    @classmethod
    def from_dict(cls, data):
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise InvalidParameterValue('unknown noise fields: {}'.format(', '.join(sorted(unknown))))
        return cls(**data).validate()

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class NoiseLedger:
    """Ground truth of what an injector changed.

    ``corrupted_rows`` holds the replacement rows in ``corrupted_nodes``
    order so the ledger can be replayed against the clean graph.
    """

    corrupted_nodes: tuple = ()
    injected_edges: tuple = ()
    corrupted_rows: np.ndarray = field(default=None, repr=False)

    def merge(self, other):
        return NoiseLedger(
            corrupted_nodes=self.corrupted_nodes or other.corrupted_nodes,
            injected_edges=self.injected_edges + other.injected_edges,
            corrupted_rows=self.corrupted_rows if self.corrupted_nodes else other.corrupted_rows)

    def to_dict(self):
        return {
            'corrupted_nodes': [int(v) for v in self.corrupted_nodes],
            'injected_edges': [[int(u), int(v)] for u, v in self.injected_edges],
        }


def inject_feature_noise(g, spec):
    """
    Overwrite ``round(feature_ratio * n)`` whole feature rows.

    gaussian-replace draws each corrupted row i.i.d. from N(0, sigma^2), sigma
    defaulting to the per-dimension std of the clean features; bernoulli-resample
    redraws every entry as a {0, 1} bit with the global nonzero density of X.

    :return: (noisy Graph, NoiseLedger)
    """
    spec.validate()
    rng = np.random.default_rng((spec.seed, _FEATURE_STREAM))
    count = round_half_up(spec.feature_ratio * g.n)
    if count == 0:
        return g, NoiseLedger(corrupted_rows=np.zeros((0, g.d)))
    nodes = np.sort(rng.choice(g.n, size=count, replace=False))

    if spec.feature_mode == 'gaussian-replace':
        if spec.gaussian_sigma is not None:
            sigma = np.full(g.d, float(spec.gaussian_sigma))
        else:
            sigma = g.X.std(axis=0)
            sigma[sigma == 0] = 1.0
        rows = rng.normal(0.0, 1.0, size=(count, g.d)) * sigma
    else:
        density = float(np.count_nonzero(g.X)) / g.X.size if g.X.size else 0.0
        rows = (rng.random((count, g.d)) < density).astype(np.float64)

    X = np.array(g.X)
    X[nodes] = rows
    LOGGER.debug('corrupted %s of %s feature rows (%s)', count, g.n, spec.feature_mode)
    ledger = NoiseLedger(corrupted_nodes=tuple(int(v) for v in nodes), corrupted_rows=rows)
    return g.with_features(X), ledger


def _candidate_count(g, cross_class):
    if not cross_class:
        return g.n * (g.n - 1) // 2 - g.num_edges
    sizes = np.bincount(g.labels)
    pairs = (sizes.sum() ** 2 - (sizes ** 2).sum()) // 2
    existing = int(np.count_nonzero(g.labels[g.edges[:, 0]] != g.labels[g.edges[:, 1]])) if g.num_edges else 0
    return int(pairs) - existing


def _enumerate_candidates(g, cross_class, existing):
    u, v = np.triu_indices(g.n, k=1)
    keep = np.ones(len(u), dtype=bool)
    if cross_class:
        keep &= g.labels[u] != g.labels[v]
    codes = u.astype(np.int64) * g.n + v
    keep &= ~np.isin(codes, np.fromiter(existing, dtype=np.int64, count=len(existing)))
    return codes[keep]


def inject_structure_noise(g, spec):
    """
    Add ``round(structure_ratio * |E|)`` edges that are neither self-loops nor
    duplicates. In cross-class mode every injected edge joins two nodes with
    different labels. Original edges are never removed.

    :return: (noisy Graph, NoiseLedger)
    """
    spec.validate()
    count = round_half_up(spec.structure_ratio * g.num_edges)
    if count == 0:
        return g, NoiseLedger()
    cross_class = spec.structure_mode == 'cross-class'
    if cross_class:
        if g.labels is None:
            raise InvalidParameterValue('cross-class structure noise requires labels')
        if len(np.unique(g.labels)) < 2:
            raise InvalidParameterValue('cross-class structure noise requires at least 2 classes')
    available = _candidate_count(g, cross_class)
    if count > available:
        raise InvalidParameterValue(
            'cannot inject {} edges: only {} candidate non-edges'.format(count, available))

    rng = np.random.default_rng((spec.seed, _STRUCTURE_STREAM))
    n = g.n
    existing = set((g.edges[:, 0] * n + g.edges[:, 1]).tolist())

    if count > available // 2:
        # dense regime, rejection sampling would stall
        candidates = _enumerate_candidates(g, cross_class, existing)
        picked = np.sort(rng.choice(candidates, size=count, replace=False)).tolist()
    else:
        picked, seen = [], set()
        while len(picked) < count:
            batch = 2 * (count - len(picked)) + 16
            u = rng.integers(0, n, size=batch)
            v = rng.integers(0, n, size=batch)
            for a, b in zip(u.tolist(), v.tolist()):
                if a == b:
                    continue
                if cross_class and g.labels[a] == g.labels[b]:
                    continue
                code = min(a, b) * n + max(a, b)
                if code in existing or code in seen:
                    continue
                seen.add(code)
                picked.append(code)
                if len(picked) == count:
                    break

    injected = tuple((code // n, code % n) for code in picked)
    LOGGER.debug('injected %s %s edges into |E|=%s', count, spec.structure_mode, g.num_edges)
    noisy = g.with_edges(np.concatenate([g.edges, np.array(injected, dtype=np.int64).reshape(-1, 2)]))
    return noisy, NoiseLedger(injected_edges=injected)


def inject_noise(g, spec):
    """Feature injection followed by structure injection, with a merged ledger."""
    noisy, feature_ledger = inject_feature_noise(g, spec)
    noisy, structure_ledger = inject_structure_noise(noisy, spec)
    return noisy, feature_ledger.merge(structure_ledger)


def apply_ledger(clean, ledger):
    """Replay a ledger against the clean graph."""
    X = np.array(clean.X)
    if ledger.corrupted_nodes:
        X[list(ledger.corrupted_nodes)] = ledger.corrupted_rows
    injected = np.array(ledger.injected_edges, dtype=np.int64).reshape(-1, 2)
    return build_graph(np.concatenate([clean.edges, injected]), X,
                       labels=clean.labels, masks=clean.masks, n=clean.n)


def removal_precision(original_edges, final_edges, ledger):
    """
    Share of injected edges among the removed ones, next to the injected
    share among all input edges (the chance level).

    :return: (precision, injected_fraction); precision is nan if nothing was removed
    """
    original = {(int(u), int(v)) for u, v in np.asarray(original_edges).reshape(-1, 2)}
    final = {(int(u), int(v)) for u, v in np.asarray(final_edges).reshape(-1, 2)}
    injected = {(int(u), int(v)) for u, v in ledger.injected_edges}
    removed = original - final
    chance = len(injected & original) / len(original) if original else float('nan')
    if not removed:
        return float('nan'), chance
    return len(removed & injected) / len(removed), chance


def _block_sizes(n, k):
    base, extra = divmod(n, k)
    return [base + 1 if c < extra else base for c in range(k)]


def generate_sbm(n, k, p_in, p_out, feature_centers_sep=1.5, seed=0, d=32, feature_std=0.5):
    """
    Homophilous stochastic block model with Gaussian class features.

    Block sizes differ by at most one node, the first ``n % k`` blocks taking
    the extra ones. Every pair is linked independently with ``p_in`` inside a
    block and ``p_out`` across blocks. Node features are
    ``(sep / sqrt(2)) * e_c + N(0, feature_std^2)`` for class c, so any two
    class centers lie ``sep`` apart, and a seeded 10/10/80 train/val/test
    split is attached.

    :return: Graph
    """
    if not 0.0 <= p_out < p_in <= 1.0:
        raise InvalidParameterValue('need 0 <= p_out < p_in <= 1, got p_in={} p_out={}'.format(p_in, p_out))
    if k < 1 or n < k:
        raise InvalidParameterValue('need 1 <= k <= n, got n={} k={}'.format(n, k))
    if d < k:
        raise InvalidParameterValue('feature dimension d={} must be at least k={}'.format(d, k))
    if feature_std < 0:
        raise InvalidParameterValue('feature_std must be non-negative')

    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(k), _block_sizes(n, k))

    sources, targets = [], []
    for i in range(n - 1):
        later = labels[i + 1:]
        probs = np.where(later == labels[i], p_in, p_out)
        hits = np.flatnonzero(rng.random(n - i - 1) < probs) + i + 1
        sources.append(np.full(len(hits), i, dtype=np.int64))
        targets.append(hits)
    if sources:
        edges = np.stack([np.concatenate(sources), np.concatenate(targets)], axis=1)
    else:
        edges = np.zeros((0, 2), dtype=np.int64)

    centers = np.zeros((k, d))
    centers[np.arange(k), np.arange(k)] = feature_centers_sep / np.sqrt(2.0)
    X = centers[labels] + rng.normal(0.0, feature_std, size=(n, d))

    masks = random_split(n, rng)

    LOGGER.debug('generated SBM n=%s k=%s |E|=%s', n, k, len(edges))
    return build_graph(edges, X, labels=labels, masks=masks, n=n)
