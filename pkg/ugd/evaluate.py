"""Downstream node classification used to score a denoised graph.

A two-layer GCN (hidden width 16, dropout 0.5, Adam with lr 0.01 and weight
decay 1e-3, 100 epochs) is trained on the train mask; the epoch with the best
validation accuracy is kept.
"""
import time
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, asdict, replace

import numpy as np

from .exceptions import InvalidParameterValue
from .graph import sym_norm_adj
from .nn import ParamSet, init_params, gcn_layer_forward, gcn_backward, softmax_cross_entropy, dropout
from .noise import inject_noise
from .driver import ugd_run, ABLATIONS

LOGGER = logging.getLogger('UGD')

CONTROL = 'none'
BENCH_VARIANTS = (CONTROL, 'no-hnp', 'no-fr', 'pipeline-fs', 'pipeline-sf', 'full')
SWEEP_AXES = ('feature', 'structure')


@dataclass(frozen=True)
class ClassifierConfig:
    hidden: int = 16
    lr: float = 0.01
    weight_decay: float = 1e-3
    epochs: int = 100
    dropout: float = 0.5
    seeds: tuple = (0, 1, 2, 3, 4)

    def validate(self):
        if self.epochs < 1:
            raise InvalidParameterValue('epochs must be >= 1, got {}'.format(self.epochs))
        if not 0.0 <= self.dropout < 1.0:
            raise InvalidParameterValue('dropout must be in [0, 1), got {}'.format(self.dropout))
        if self.hidden < 1:
            raise InvalidParameterValue('hidden must be >= 1')
        if self.lr < 0 or self.weight_decay < 0:
            raise InvalidParameterValue('lr and weight_decay must be >= 0')
        if not self.seeds:
            raise InvalidParameterValue('at least one seed is required')
        return self

    @classmethod
    def from_dict(cls, data):
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise InvalidParameterValue('unknown classifier fields: {}'.format(', '.join(sorted(unknown))))
        data = dict(data)
        if 'seeds' in data:
            data['seeds'] = tuple(int(s) for s in data['seeds'])
        return cls(**data).validate()

    def to_dict(self):
        out = asdict(self)
        out['seeds'] = list(self.seeds)
        return out


class ClassifierParams(ParamSet):
    """Weights of the two GCN layers ``gc1`` (d -> hidden) and ``gc2`` (hidden -> C)."""

    @classmethod
    def initialize(cls, d, hidden, classes, rng):
        base = init_params(rng, ['gc1', 'gc2'], [d, hidden, classes])
        return cls(names=base.names, layers=base.layers)


@dataclass
class TrainedClassifier:
    params: ClassifierParams
    best_epoch: int
    best_val_acc: float


def _logits(A_hat, X, params, rng=None, rate=0.0):
    H0, keep0 = dropout(rng, X, rate) if rng is not None else (X, None)
    H1, cache1 = gcn_layer_forward(A_hat, H0, params.gc1, 'relu')
    H1d, keep1 = dropout(rng, H1, rate) if rng is not None else (H1, None)
    logits, cache2 = gcn_layer_forward(A_hat, H1d, params.gc2, 'identity')
    return logits, (cache1, cache2, keep1)


def predict(params, g):
    logits, _ = _logits(sym_norm_adj(g), np.asarray(g.X), params)
    return logits.argmax(axis=1)


def accuracy(params, g, mask):
    """Fraction of masked nodes whose argmax prediction equals the label."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise InvalidParameterValue('accuracy over an empty mask')
    return float(np.mean(predict(params, g)[mask] == g.labels[mask]))


def _require_splits(g):
    if not g.has_splits:
        raise InvalidParameterValue('classification needs labels and train/val/test masks')
    for name in ('train', 'val'):
        if not g.mask(name).any():
            raise InvalidParameterValue('{} mask is empty'.format(name))


def train_classifier(g, cfg, seed):
    """
    Full-batch training on the train mask for ``cfg.epochs`` epochs.

    :return: TrainedClassifier holding the weights of the best validation epoch
    """
    cfg.validate()
    _require_splits(g)
    rng = np.random.default_rng(seed)
    A_hat = sym_norm_adj(g)
    X = np.asarray(g.X)
    classes = max(g.num_classes, 2)
    params = ClassifierParams.initialize(g.d, cfg.hidden, classes, rng)
    train, val = g.mask('train'), g.mask('val')

    best = None
    for epoch in range(1, cfg.epochs + 1):
        logits, (cache1, cache2, keep1) = _logits(A_hat, X, params, rng, cfg.dropout)
        loss, upstream = softmax_cross_entropy(logits, g.labels, train)
        grad2, grad_h1 = gcn_backward(cache2, upstream)
        if keep1 is not None:
            grad_h1 = grad_h1 * keep1
        grad1, _ = gcn_backward(cache1, grad_h1)
        params.update([grad1, grad2], cfg.lr, cfg.weight_decay)

        val_acc = accuracy(params, g, val)
        if best is None or val_acc > best.best_val_acc:
            best = TrainedClassifier(params=params.copy(), best_epoch=epoch, best_val_acc=val_acc)
        LOGGER.debug('classifier epoch %s: loss=%.4f val=%.4f', epoch, loss, val_acc)
    return best


@dataclass(frozen=True)
class ResultRow:
    variant: str
    seed: int
    val_acc: float
    test_acc: float
    seconds: float = 0.0
    ratio: float = None


def _score(g, cls, seed):
    trained = train_classifier(g, cls, seed)
    return accuracy(trained.params, g, g.mask('val')), accuracy(trained.params, g, g.mask('test'))


def _run_seed(clean, noise, denoise, cls, seed, variants, ratio=None):
    noisy, _ = inject_noise(clean, replace(noise, seed=noise.seed + seed))
    rows = []
    for variant in variants:
        start = time.perf_counter()
        if variant == CONTROL:
            graph = noisy
        else:
            graph, _ = ugd_run(noisy, replace(denoise, ablation=variant, seed=denoise.seed + seed))
        elapsed = time.perf_counter() - start
        val_acc, test_acc = _score(graph, cls, seed)
        LOGGER.info('seed %s %s: val=%.4f test=%.4f', seed, variant, val_acc, test_acc)
        rows.append(ResultRow(variant=variant, seed=seed, val_acc=val_acc, test_acc=test_acc,
                              seconds=elapsed, ratio=ratio))
    return rows


def _check_variants(variants):
    for variant in variants:
        if variant != CONTROL and variant not in ABLATIONS:
            raise InvalidParameterValue('unknown variant {}'.format(variant))


def benchmark(clean, noise, denoise, cls, variants=BENCH_VARIANTS, threads=1, ratio=None):
    """
    Inject noise, denoise with every variant (plus the no-denoise control)
    and classify, once per classifier seed.

    Seed s injects with ``noise.seed + s``, denoises with ``denoise.seed + s``
    and trains the classifier with s. Rows come back in seed-then-variant
    order regardless of ``threads``.

    :return: list of ResultRow
    """
    noise.validate()
    denoise.validate()
    cls.validate()
    _check_variants(variants)
    _require_splits(clean)

    def one(seed):
        return _run_seed(clean, noise, denoise, cls, seed, variants, ratio)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            per_seed = list(pool.map(one, cls.seeds))
    else:
        per_seed = [one(seed) for seed in cls.seeds]
    return [row for rows in per_seed for row in rows]


def sweep(clean, noise, denoise, cls, axis, ratios, variants=(CONTROL, 'full'), threads=1):
    """
    Repeat :func:`benchmark` while sweeping the feature or the structure noise ratio.

    :return: list of ResultRow with ``ratio`` set
    """
    if axis not in SWEEP_AXES:
        raise InvalidParameterValue('axis must be one of {}'.format(', '.join(SWEEP_AXES)))
    field_name = '{}_ratio'.format(axis)
    rows = []
    for ratio in ratios:
        swept = replace(noise, **{field_name: float(ratio)})
        rows += benchmark(clean, swept, denoise, cls, variants=variants, threads=threads, ratio=float(ratio))
    return rows


def summarize(rows):
    """
    Mean and sample standard deviation of accuracies per (variant, ratio),
    in first-seen order.
    """
    groups = {}
    for row in rows:
        groups.setdefault((row.variant, row.ratio), []).append(row)
    summary = []
    for (variant, ratio), members in groups.items():
        test = np.array([r.test_acc for r in members])
        val = np.array([r.val_acc for r in members])
        summary.append({
            'variant': variant,
            'ratio': ratio,
            'runs': len(members),
            'val_mean': float(val.mean()),
            'test_mean': float(test.mean()),
            'test_std': float(test.std(ddof=1)) if len(test) > 1 else 0.0,
            'seconds': float(np.mean([r.seconds for r in members])),
        })
    return summary


def accuracy_drop(rows, variant):
    """Mean test accuracy at the first swept ratio minus the mean at the last one."""
    means = [s for s in summarize(rows) if s['variant'] == variant]
    if len(means) < 2:
        raise InvalidParameterValue('need at least two ratios for variant {}'.format(variant))
    return means[0]['test_mean'] - means[-1]['test_mean']


def tune_theta(noisy, denoise, cls, thetas):
    """
    Pick the main threshold with the best mean validation accuracy of full UGD.

    Warm-up keeps its configured offset below the main threshold. Ties go to
    the smaller threshold.

    :return: (best theta, list of (theta, mean val acc, mean test acc))
    """
    cls.validate()
    _require_splits(noisy)
    schedule = denoise.theta_schedule
    table, best = [], None
    for theta in sorted(float(t) for t in thetas):
        trial = schedule.with_main(theta)
        cleaned, _ = ugd_run(noisy, replace(denoise, theta_schedule=trial, ablation='full'))
        scores = [_score(cleaned, cls, seed) for seed in cls.seeds]
        val_mean = float(np.mean([s[0] for s in scores]))
        test_mean = float(np.mean([s[1] for s in scores]))
        table.append((theta, val_mean, test_mean))
        LOGGER.info('theta=%.4f: val=%.4f test=%.4f', theta, val_mean, test_mean)
        if best is None or val_mean > best[1]:
            best = (theta, val_mean)
    if best is None:
        raise InvalidParameterValue('no thresholds to tune over')
    return best[0], table
