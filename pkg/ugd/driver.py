"""Iterative updating: alternate the SD-step and the FD-step until the edge set settles.

Iteration i filters ``E^{i-1}`` with the threshold of iteration i using
proximities computed from the latest features (raw X0 in iteration 1), then
trains the auto-encoder on ``E^i``. The run stops once
``|E^{i-1} xor E^i| <= epsilon`` in an iteration filtered with the main
threshold, or after ``max_iters`` iterations. A warm-up iteration with a
looser threshold never ends the run.
"""
import time
import logging
from dataclasses import dataclass, field, asdict

import numpy as np

from .exceptions import InvalidParameterValue, NumericalError
from .graph import edge_set_difference
from .structure import ThresholdSchedule, compute_edge_weights, filter_edges
from .features import FdConfig, AutoEncoderParams, fd_train_step

LOGGER = logging.getLogger('UGD')

ABLATIONS = ('full', 'no-hnp', 'no-fr', 'pipeline-fs', 'pipeline-sf')
PROTOTYPE_FEATURES = ('denoised', 'raw')


@dataclass(frozen=True)
class DenoiseConfig:
    theta_schedule: ThresholdSchedule = field(default_factory=ThresholdSchedule)
    fd: FdConfig = field(default_factory=FdConfig)
    epsilon: int = 0
    max_iters: int = 10
    ablation: str = 'full'
    prototype_features: str = 'denoised'
    seed: int = 0

    def validate(self):
        if self.max_iters < 1:
            raise InvalidParameterValue('max_iters must be >= 1, got {}'.format(self.max_iters))
        if self.epsilon < 0:
            raise InvalidParameterValue('epsilon must be >= 0, got {}'.format(self.epsilon))
        if self.ablation not in ABLATIONS:
            raise InvalidParameterValue('ablation must be one of {}'.format(', '.join(ABLATIONS)))
        if self.prototype_features not in PROTOTYPE_FEATURES:
            raise InvalidParameterValue('prototype_features must be one of {}'.format(', '.join(PROTOTYPE_FEATURES)))
        if self.seed < 0:
            raise InvalidParameterValue('seed must be non-negative')
        self.theta_schedule.validate()
        self.fd.validate()
        return self

    @classmethod
    def from_dict(cls, data):
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise InvalidParameterValue('unknown denoise fields: {}'.format(', '.join(sorted(unknown))))
        data = dict(data)
        if 'theta_schedule' in data:
            schedule = data['theta_schedule']
            unknown = set(schedule) - set(ThresholdSchedule.__dataclass_fields__)
            if unknown:
                raise InvalidParameterValue('unknown theta_schedule fields: {}'.format(', '.join(sorted(unknown))))
            data['theta_schedule'] = ThresholdSchedule(**schedule)
        if 'fd' in data:
            data['fd'] = FdConfig.from_dict(data['fd'])
        return cls(**data).validate()

    def to_dict(self):
        out = asdict(self)
        out['theta_schedule'] = self.theta_schedule.to_dict()
        out['fd'] = self.fd.to_dict()
        return out


@dataclass
class IterationRecord:
    iteration: int
    theta: float
    edges: int
    removed: int
    recon: float
    smooth: float
    total: float
    wall_time: float = 0.0


@dataclass
class RunReport:
    ablation: str
    initial_edges: int
    records: list = field(default_factory=list)
    converged: bool = False
    reason: str = ''

    @property
    def final_edges(self):
        return self.records[-1].edges if self.records else self.initial_edges

    @property
    def removed_total(self):
        return sum(r.removed for r in self.records)

    @property
    def wall_time(self):
        return sum(r.wall_time for r in self.records)

    def to_dict(self, include_timing=False):
        records = []
        for r in self.records:
            rec = {k: (None if isinstance(v, float) and np.isnan(v) else v) for k, v in asdict(r).items()}
            if not include_timing:
                rec.pop('wall_time')
            records.append(rec)
        return {
            'ablation': self.ablation,
            'initial_edges': self.initial_edges,
            'final_edges': self.final_edges,
            'converged': self.converged,
            'reason': self.reason,
            'iterations': records,
        }


def _nan_losses():
    return float('nan'), float('nan'), float('nan')


def _settled(cfg, theta, change):
    return theta == cfg.theta_schedule.main_theta and change <= cfg.epsilon


def structure_step(g, X, theta):
    """One SD-step: returns the kept edge array."""
    table = compute_edge_weights(g, X)
    return filter_edges(g, table, theta)


def _feature_step(g, X0, params, cfg):
    result = fd_train_step(g, X0, params, cfg.fd)
    final = result.final
    return result.X_hat, result.params, (final.recon, final.smooth, final.total)


class _Run:
    """Mutable state shared by the full algorithm and its ablations."""

    def __init__(self, g0, cfg, status=None):
        self.g0 = g0
        self.cfg = cfg
        self.X0 = np.asarray(g0.X)
        self.g = g0
        self.X_hat = self.X0
        self.params = None
        self.report = RunReport(ablation=cfg.ablation, initial_edges=g0.num_edges)
        self.status = status or (lambda message, percent: None)

    def fresh_params(self):
        return AutoEncoderParams.initialize(self.g0.d, self.cfg.fd.hidden, self.cfg.seed)

    def sd(self, iteration, theta, features):
        start = time.perf_counter()
        kept = structure_step(self.g, features, theta)
        removed = self.g.num_edges - len(kept)
        self.g = self.g.with_edges(kept)
        if self.g.num_edges == 0 and self.g0.num_edges > 0:
            LOGGER.warning('theta=%.4f removed every edge in iteration %s', theta, iteration)
        return removed, time.perf_counter() - start

    def fd(self):
        start = time.perf_counter()
        if self.params is None or self.cfg.fd.fresh_init:
            self.params = self.fresh_params()
        self.X_hat, self.params, losses = _feature_step(self.g, self.X0, self.params, self.cfg)
        return losses, time.perf_counter() - start

    def record(self, iteration, theta, removed, losses, elapsed):
        recon, smooth, total = losses
        rec = IterationRecord(iteration=iteration, theta=theta, edges=self.g.num_edges, removed=removed,
                              recon=recon, smooth=smooth, total=total, wall_time=elapsed)
        self.report.records.append(rec)
        LOGGER.info('iteration %s: theta=%.4f |E|=%s removed=%s loss=%.6f',
                    iteration, theta, rec.edges, removed, total)
        return rec

    def result(self):
        return self.g.with_features(self.X_hat), self.report


def _guard(run, fn):
    try:
        return fn()
    except NumericalError as e:
        e.report = run.report
        raise


def ugd_run(g0, cfg, status=None):
    """
    Denoise a graph.

    :param g0: noisy Graph
    :param cfg: DenoiseConfig; a non-full ablation is dispatched to :func:`run_ablation`
    :param status: optional ``status(message, percent)`` progress callback
    :return: (clean Graph, RunReport)
    """
    cfg.validate()
    if cfg.ablation != 'full':
        return run_ablation(g0, cfg, status=status)
    run = _Run(g0, cfg, status)

    def loop():
        for iteration in range(1, cfg.max_iters + 1):
            theta = cfg.theta_schedule.theta_at(iteration)
            features = run.X0 if iteration == 1 or cfg.prototype_features == 'raw' else run.X_hat
            before = run.g.edges
            removed, sd_time = run.sd(iteration, theta, features)
            losses, fd_time = run.fd()
            run.record(iteration, theta, removed, losses, sd_time + fd_time)
            run.status('iteration {} done'.format(iteration), int(100 * iteration / cfg.max_iters))
            change = edge_set_difference(before, run.g.edges)
            if _settled(cfg, theta, change):
                run.report.converged = True
                run.report.reason = 'edge change {} <= epsilon {}'.format(change, cfg.epsilon)
                return
        run.report.reason = 'max_iters {} reached'.format(cfg.max_iters)

    _guard(run, loop)
    run.status('done', 100)
    return run.result()


def run_ablation(g0, cfg, status=None):
    """
    Run one of the reduced variants:

    * ``no-hnp``: a single FD-step, the edge set is untouched.
    * ``no-fr``: SD-steps on the fixed raw features until convergence.
    * ``pipeline-fs``: one FD pass, then one SD pass with the main threshold.
    * ``pipeline-sf``: one SD pass with the main threshold, then one FD pass.
    """
    cfg.validate()
    if cfg.ablation == 'full':
        raise InvalidParameterValue('run_ablation needs an ablation variant, got full')
    run = _Run(g0, cfg, status)
    main_theta = cfg.theta_schedule.main_theta

    def no_hnp():
        losses, elapsed = run.fd()
        run.record(1, float('nan'), 0, losses, elapsed)
        run.report.converged, run.report.reason = True, 'single pass'

    def no_fr():
        for iteration in range(1, cfg.max_iters + 1):
            theta = cfg.theta_schedule.theta_at(iteration)
            removed, elapsed = run.sd(iteration, theta, run.X0)
            run.record(iteration, theta, removed, _nan_losses(), elapsed)
            if _settled(cfg, theta, removed):
                run.report.converged = True
                run.report.reason = 'edge change {} <= epsilon {}'.format(removed, cfg.epsilon)
                return
        run.report.reason = 'max_iters {} reached'.format(cfg.max_iters)

    def pipeline_fs():
        losses, fd_time = run.fd()
        removed, sd_time = run.sd(1, main_theta, run.X_hat)
        run.record(1, main_theta, removed, losses, fd_time + sd_time)
        run.report.converged, run.report.reason = True, 'single pass'

    def pipeline_sf():
        removed, sd_time = run.sd(1, main_theta, run.X0)
        losses, fd_time = run.fd()
        run.record(1, main_theta, removed, losses, sd_time + fd_time)
        run.report.converged, run.report.reason = True, 'single pass'

    variants = {'no-hnp': no_hnp, 'no-fr': no_fr, 'pipeline-fs': pipeline_fs, 'pipeline-sf': pipeline_sf}
    _guard(run, variants[cfg.ablation])
    run.status('done', 100)
    return run.result()
