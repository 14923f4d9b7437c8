###########################################################
# Command line for graph denoising experiments.
#
# Every command writes its artifacts plus a manifest.json
# into the output directory. Errors end in one stderr line
# "error: <kind>: <message>" and exit codes 2, 3 or 4.
###########################################################

import os
import csv
import json
import logging
from dataclasses import replace

import click
import numpy as np
from jinja2 import Environment, PackageLoader

from . import config as ugd_config
from .exceptions import UGDError, InvalidParameterValue, GraphFormatError, NumericalError
from .io import read_graph, write_graph, read_features, write_features, read_linqs
from .manifest import PipelineManifest, config_hash, graph_hash
from .noise import NoiseLedger, inject_noise, generate_sbm, removal_precision, FEATURE_MODES, STRUCTURE_MODES
from .structure import compute_edge_weights
from .features import AutoEncoderParams, fd_train_step
from .driver import ugd_run, ABLATIONS
from .evaluate import (benchmark, sweep, summarize, accuracy_drop, tune_theta, train_classifier, accuracy,
                       ResultRow, BENCH_VARIANTS, SWEEP_AXES, CONTROL)

LOGGER = logging.getLogger('UGD')

CONTEXT_SETTINGS = dict(help_option_names=['-h', '--help'])

EXIT_USAGE = 2
EXIT_IO = 3
EXIT_NUMERICAL = 4

RESULT_COLUMNS = ('variant', 'seed', 'val_acc', 'test_acc')

template_env = Environment(
    loader=PackageLoader('ugd', 'templates'),
    autoescape=False,
    keep_trailing_newline=True,
)


def defaults_epilog():
    return '\b\nConfig fields and defaults:\n' + '\n'.join('  ' + line for line in ugd_config.describe_defaults())


def exit_code(error):
    if isinstance(error, (InvalidParameterValue, click.UsageError)):
        return EXIT_USAGE
    if isinstance(error, (GraphFormatError, OSError)):
        return EXIT_IO
    if isinstance(error, NumericalError):
        return EXIT_NUMERICAL
    return 1


class UGDGroup(click.Group):
    """Maps ugd errors to exit codes with a single machine-parsable line."""

    def invoke(self, ctx):
        try:
            return super(UGDGroup, self).invoke(ctx)
        except click.UsageError as e:
            kind, error = 'usage', e
        except UGDError as e:
            kind, error = e.kind, e
        except OSError as e:
            kind, error = 'io', e
        message = error.format_message() if isinstance(error, click.UsageError) else str(error)
        click.echo('error: {}: {}'.format(kind, ' '.join(message.split())), err=True)
        ctx.exit(exit_code(error))


class Runtime(object):
    """Settings shared by all subcommands."""

    def __init__(self, config):
        self.config = config
        self.float_format = config.get('runtime', 'float_format', fallback='%.6f')

    @property
    def threads(self):
        return ugd_config.get_threads(self.config)

    def fmt(self, value):
        if value is None or (isinstance(value, float) and np.isnan(value)):
            return ''
        if isinstance(value, float):
            return self.float_format % value
        return str(value)


def render(template, **kwargs):
    return template_env.get_template(template).render(**kwargs)


def write_json(path, data):
    with open(path, 'w') as fp:
        json.dump(data, fp, indent=2, sort_keys=True)
        fp.write('\n')


def write_rows(runtime, path, columns, rows):
    with open(path, 'w', newline='') as fp:
        writer = csv.writer(fp, lineterminator='\n')
        writer.writerow(columns)
        for row in rows:
            writer.writerow([runtime.fmt(row[c]) for c in columns])


def result_dicts(rows, with_ratio=False):
    columns = RESULT_COLUMNS + (('ratio',) if with_ratio else ())
    return columns, [{c: getattr(row, c) for c in columns} for row in rows]


def prepare_outdir(outdir):
    os.makedirs(outdir, exist_ok=True)
    return outdir


def finish(manifest, outdir, outputs):
    manifest.outputs = list(outputs)
    manifest.write(outdir)


def new_manifest(command, config, indir=None):
    return PipelineManifest(command=command, config_hash=config_hash(config), input_graph_hash=graph_hash(indir))


def echo_status(message, percent):
    LOGGER.info('%3d%% %s', percent, message)


def parse_floats(text, what):
    try:
        return [float(x) for x in text.split(',') if x.strip()]
    except ValueError:
        raise InvalidParameterValue('{} must be a comma separated list of numbers, got {!r}'.format(what, text))


def seed_list(count):
    if count is None:
        return None
    if count < 1:
        raise InvalidParameterValue('--seeds must be >= 1, got {}'.format(count))
    return list(range(count))


def options(*decorators):
    def wrap(f):
        for decorator in reversed(decorators):
            f = decorator(f)
        return f
    return wrap


graph_option = click.option('--graph', '-g', 'graph', required=True, metavar='DIR',
                            type=click.Path(file_okay=False), help='graph directory.')
out_dir_option = click.option('--out', '-o', 'out', required=True, metavar='DIR',
                              type=click.Path(file_okay=False), help='output directory.')
seed_option = click.option('--seed', type=int, default=None, help='seed for all randomness of the command.')

denoise_options = options(
    click.option('--config', 'denoise_cfg', metavar='PATH', type=click.Path(dir_okay=False),
                 help='denoise JSON config (DenoiseConfig fields).'),
    click.option('--theta', type=float, default=None, help='main edge threshold.'),
    click.option('--warmup-theta', type=float, default=None, help='warm-up edge threshold.'),
    click.option('--warmup-iters', type=int, default=None, help='iterations using the warm-up threshold.'),
    click.option('--epsilon', type=int, default=None,
                 help='edge change that counts as converged under the main threshold.'),
    click.option('--max-iters', type=int, default=None, help='outer iteration cap.'),
    click.option('--beta', type=float, default=None, help='residual weight of the auto-encoder.'),
    click.option('--gamma', type=float, default=None, help='smoothness weight.'),
    click.option('--lr', type=float, default=None, help='auto-encoder learning rate.'),
    click.option('--epochs', type=int, default=None, help='auto-encoder epochs per FD-step.'),
    click.option('--fresh-init', is_flag=True, default=None, help='re-initialize the auto-encoder every iteration.'),
)

classifier_options = options(
    click.option('--cls-config', 'cls_cfg', metavar='PATH', type=click.Path(dir_okay=False),
                 help='classifier JSON config (ClassifierConfig fields).'),
    click.option('--seeds', type=int, default=None, help='number of classifier seeds (0..N-1).'),
)


def denoise_overrides(theta=None, warmup_theta=None, warmup_iters=None, epsilon=None, max_iters=None,
                      beta=None, gamma=None, lr=None, epochs=None, fresh_init=None, weight_decay=None, seed=None,
                      ablation=None):
    return {
        'theta_schedule': {'main_theta': theta, 'warmup_theta': warmup_theta, 'warmup_iters': warmup_iters},
        'fd': {'beta': beta, 'gamma': gamma, 'lr': lr, 'epochs_per_step': epochs, 'fresh_init': fresh_init,
               'weight_decay': weight_decay},
        'epsilon': epsilon,
        'max_iters': max_iters,
        'seed': seed,
        'ablation': ablation,
    }


def load_denoise(denoise_cfg=None, **kwargs):
    return ugd_config.denoise_config(denoise_cfg, **denoise_overrides(**kwargs))


def load_classifier(cls_cfg=None, seeds=None):
    return ugd_config.classifier_config(cls_cfg, seeds=seed_list(seeds))


@click.group(cls=UGDGroup, context_settings=CONTEXT_SETTINGS)
@click.version_option()
@click.option('--config', '-c', 'cfgfiles', metavar='PATH', multiple=True,
              help='runtime INI configuration file, may be repeated.')
@click.option('--log-level', metavar='LEVEL', default=None, help='log level, overrides [logging] level.')
@click.pass_context
def cli(ctx, cfgfiles, log_level):
    """Unified graph denoising: prune noisy edges and repair noisy node features.

    Graphs are directories holding graph.edges, graph.features and optionally
    graph.labels and graph.masks.
    """
    config = ugd_config.load_config(list(cfgfiles))
    ugd_config.configure_logging(config, log_level)
    ctx.obj = Runtime(config)


@cli.command('gen-sbm')
@click.option('--n', type=int, default=400, show_default=True, help='number of nodes.')
@click.option('--k', type=int, default=4, show_default=True, help='number of blocks (classes).')
@click.option('--p-in', type=float, default=0.05, show_default=True, help='link probability inside a block.')
@click.option('--p-out', type=float, default=0.005, show_default=True, help='link probability across blocks.')
@click.option('--sep', type=float, default=1.5, show_default=True, help='distance of class feature centers.')
@click.option('--d', type=int, default=32, show_default=True, help='feature dimension.')
@click.option('--feature-std', type=float, default=0.5, show_default=True, help='feature noise around centers.')
@click.option('--seed', type=int, default=0, show_default=True, help='generator seed.')
@out_dir_option
@click.pass_obj
def gen_sbm(runtime, n, k, p_in, p_out, sep, d, feature_std, seed, out):
    """Generate a labelled stochastic block model graph with a 10/10/80 split."""
    params = dict(n=n, k=k, p_in=p_in, p_out=p_out, feature_centers_sep=sep, seed=seed, d=d, feature_std=feature_std)
    manifest = new_manifest('gen-sbm', params)
    g = generate_sbm(**params)
    written = write_graph(g, prepare_outdir(out))
    finish(manifest, out, written)
    click.echo('n={} |E|={} classes={}'.format(g.n, g.num_edges, g.num_classes))


@cli.command()
@click.option('--dir', 'indir', required=True, type=click.Path(file_okay=False),
              help='folder holding <name>.content and <name>.cites.')
@click.option('--name', required=True, help='dataset stem, e.g. cora.')
@click.option('--seed', type=int, default=None, help='attach a seeded 10/10/80 split.')
@out_dir_option
@click.pass_obj
def ingest(runtime, indir, name, seed, out):
    """Convert a LINQS/Planetoid raw export into a graph directory."""
    manifest = new_manifest('ingest', {'name': name, 'seed': seed})
    g = read_linqs(indir, name, seed=seed)
    written = write_graph(g, prepare_outdir(out))
    finish(manifest, out, written)
    click.echo('n={} d={} |E|={} classes={}'.format(g.n, g.d, g.num_edges, g.num_classes))


@cli.command(epilog=defaults_epilog())
@graph_option
@click.option('--noise-config', 'noise_cfg', metavar='PATH', type=click.Path(dir_okay=False),
              help='noise JSON config (NoiseSpec fields).')
@click.option('--feature-ratio', type=float, default=None, help='fraction of nodes whose features are corrupted.')
@click.option('--structure-ratio', type=float, default=None, help='injected edges as a fraction of |E|.')
@click.option('--feature-mode', type=click.Choice(FEATURE_MODES), default=None, help='feature corruption.')
@click.option('--mode', 'structure_mode', type=click.Choice(STRUCTURE_MODES), default=None,
              help='how fake edges are drawn.')
@click.option('--sigma', type=float, default=None, help='gaussian-replace standard deviation.')
@seed_option
@out_dir_option
@click.pass_obj
def inject(runtime, graph, noise_cfg, feature_ratio, structure_ratio, feature_mode, structure_mode, sigma, seed, out):
    """Corrupt features and edges of a graph, recording a ledger."""
    spec = ugd_config.noise_spec(noise_cfg, feature_ratio=feature_ratio, structure_ratio=structure_ratio,
                                 feature_mode=feature_mode, structure_mode=structure_mode,
                                 gaussian_sigma=sigma, seed=seed)
    manifest = new_manifest('inject', spec.to_dict(), graph)
    noisy, ledger = inject_noise(read_graph(graph), spec)
    written = write_graph(noisy, prepare_outdir(out))
    write_json(os.path.join(out, 'ledger.json'), ledger.to_dict())
    finish(manifest, out, written + ['ledger.json'])
    click.echo('corrupted {} node(s), injected {} edge(s)'.format(len(ledger.corrupted_nodes),
                                                                  len(ledger.injected_edges)))


@cli.command()
@graph_option
@click.option('--features', 'features', metavar='PATH', type=click.Path(dir_okay=False),
              help='alternative feature file to score the edges with.')
@click.option('--out', '-o', 'out', required=True, metavar='PATH', type=click.Path(dir_okay=False),
              help='TSV file of u, v, weight.')
@click.pass_obj
def weights(runtime, graph, features, out):
    """Write the symmetric proximity weight of every edge."""
    manifest = new_manifest('weights', {'features': os.path.basename(features) if features else None}, graph)
    g = read_graph(graph)
    X = read_features(features) if features else g.X
    table = compute_edge_weights(g, X)
    outdir = prepare_outdir(os.path.dirname(os.path.abspath(out)))
    with open(out, 'w', newline='\n') as fp:
        for (u, v), w in zip(table.edges, table.weights):
            fp.write('{}\t{}\t{}\n'.format(u, v, runtime.fmt(float(w))))
    finish(manifest, outdir, [os.path.basename(out)])
    click.echo('{} edge weight(s) written'.format(len(table)))


@cli.command(epilog=defaults_epilog())
@graph_option
@click.option('--beta', type=float, default=None, help='residual weight.')
@click.option('--gamma', type=float, default=None, help='smoothness weight.')
@click.option('--lr', type=float, default=None, help='learning rate.')
@click.option('--epochs', type=int, default=None, help='training epochs.')
@click.option('--weight-decay', type=float, default=None, help='L2 weight decay.')
@seed_option
@click.option('--out', '-o', 'out', required=True, metavar='PATH', type=click.Path(dir_okay=False),
              help='feature binary to write.')
@click.pass_obj
def fd(runtime, graph, beta, gamma, lr, epochs, weight_decay, seed, out):
    """Run one FD-step on a fixed edge set and write the denoised features."""
    cfg = load_denoise(beta=beta, gamma=gamma, lr=lr, epochs=epochs, weight_decay=weight_decay, seed=seed)
    manifest = new_manifest('fd', cfg.fd.to_dict(), graph)
    g = read_graph(graph)
    params = AutoEncoderParams.initialize(g.d, cfg.fd.hidden, cfg.seed)
    result = fd_train_step(g, g.X, params, cfg.fd)
    outdir = prepare_outdir(os.path.dirname(os.path.abspath(out)))
    write_features(out, result.X_hat)
    finish(manifest, outdir, [os.path.basename(out)])
    final = result.final
    click.echo('recon={} smooth={} total={}'.format(*map(runtime.fmt, (final.recon, final.smooth, final.total))))


def read_ledger(path):
    with open(path) as fp:
        try:
            edges = json.load(fp)['injected_edges']
        except (ValueError, KeyError) as e:
            raise GraphFormatError('{} is not a noise ledger: {}'.format(path, e))
    return NoiseLedger(injected_edges=tuple((int(u), int(v)) for u, v in edges))


def _run_and_write(g, cfg, outdir, with_timings):
    try:
        cleaned, report = ugd_run(g, cfg, status=echo_status)
    except NumericalError as e:
        if e.report is not None:
            write_json(os.path.join(prepare_outdir(outdir), 'report.json'), e.report.to_dict(with_timings))
        raise
    written = write_graph(cleaned, prepare_outdir(outdir))
    write_json(os.path.join(outdir, 'report.json'), report.to_dict(include_timing=with_timings))
    return cleaned, report, written + ['report.json']


@cli.command(epilog=defaults_epilog())
@graph_option
@denoise_options
@click.option('--ablation', type=click.Choice(ABLATIONS), default=None, help='variant to run.')
@seed_option
@click.option('--with-timings', is_flag=True, help='include wall times in report.json.')
@out_dir_option
@click.pass_obj
def denoise(runtime, graph, ablation, with_timings, out, denoise_cfg, seed, **kwargs):
    """Denoise a graph and write the cleaned graph plus report.json."""
    cfg = load_denoise(denoise_cfg, seed=seed, ablation=ablation, **kwargs)
    manifest = new_manifest('denoise', cfg.to_dict(), graph)
    _, report, written = _run_and_write(read_graph(graph), cfg, out, with_timings)
    finish(manifest, out, written)
    click.echo(render('report.txt', report=report), nl=False)


@cli.command(epilog=defaults_epilog())
@graph_option
@denoise_options
@click.option('--variant', 'variants', multiple=True, type=click.Choice(ABLATIONS),
              help='variant to run, may be repeated (default: all).')
@click.option('--ledger', metavar='PATH', type=click.Path(dir_okay=False),
              help='ledger.json of the injection, adds removal precision.')
@seed_option
@click.option('--with-timings', is_flag=True, help='include wall times in report.json.')
@out_dir_option
@click.pass_obj
def ablate(runtime, graph, variants, ledger, with_timings, out, denoise_cfg, seed, **kwargs):
    """Run full UGD and its ablations on one graph, one subdirectory each."""
    base = load_denoise(denoise_cfg, seed=seed, **kwargs)
    variants = variants or ABLATIONS
    manifest = new_manifest('ablate', {'denoise': base.to_dict(), 'variants': list(variants)}, graph)
    g = read_graph(graph)
    injected = None
    if ledger:
        injected = read_ledger(ledger)
    rows, outputs = [], []
    for variant in variants:
        cfg = replace(base, ablation=variant)
        cleaned, report, written = _run_and_write(g, cfg, os.path.join(out, variant), with_timings)
        outputs += [os.path.join(variant, name) for name in written]
        row = {'variant': variant, 'initial_edges': report.initial_edges, 'final_edges': report.final_edges,
               'iterations': len(report.records), 'converged': report.converged}
        if injected is not None:
            row['precision'], row['chance'] = removal_precision(g.edges, cleaned.edges, injected)
        rows.append(row)
        click.echo(render('report.txt', report=report), nl=False)
    columns = list(rows[0])
    write_rows(runtime, os.path.join(out, 'ablation.csv'), columns, rows)
    finish(manifest, out, outputs + ['ablation.csv'])


@cli.command('eval', epilog=defaults_epilog())
@graph_option
@classifier_options
@click.option('--label', default='input', show_default=True, help='variant name written to results.csv.')
@out_dir_option
@click.pass_obj
def evaluate(runtime, graph, cls_cfg, seeds, label, out):
    """Train the GCN classifier on a graph and report accuracies per seed."""
    cls = load_classifier(cls_cfg, seeds)
    manifest = new_manifest('eval', cls.to_dict(), graph)
    g = read_graph(graph)
    rows = []
    for seed in cls.seeds:
        trained = train_classifier(g, cls, seed)
        rows.append(ResultRow(variant=label, seed=seed, val_acc=accuracy(trained.params, g, g.mask('val')),
                              test_acc=accuracy(trained.params, g, g.mask('test'))))
    _write_results(runtime, out, rows, manifest, 'evaluation', with_timings=False)


def _write_results(runtime, out, rows, manifest, title, with_ratio=False, with_timings=True):
    prepare_outdir(out)
    columns, dicts = result_dicts(rows, with_ratio)
    write_rows(runtime, os.path.join(out, 'results.csv'), columns, dicts)
    summary = summarize(rows)
    summary_columns = ('variant',) + (('ratio',) if with_ratio else ()) + ('runs', 'val_mean', 'test_mean', 'test_std')
    write_rows(runtime, os.path.join(out, 'summary.csv'), summary_columns, summary)
    finish(manifest, out, ['results.csv', 'summary.csv'])
    click.echo(render('results.txt', title=title, rows=summary, with_ratio=with_ratio,
                      with_timings=with_timings), nl=False)
    return summary


def _experiment_inputs(preset, graph, noise_cfg, denoise_cfg, cls_cfg, seeds):
    """Clean graph and configs from a preset, or from a graph directory and JSON files."""
    if preset and graph:
        raise InvalidParameterValue('--preset and --graph are mutually exclusive')
    if preset:
        sbm, noise, denoise_obj, cls = ugd_config.load_preset(preset, noise_cfg, denoise_cfg, cls_cfg)
        clean = generate_sbm(**sbm)
        source = {'preset': preset}
    elif graph:
        clean = read_graph(graph)
        noise = ugd_config.noise_spec(noise_cfg)
        denoise_obj = ugd_config.denoise_config(denoise_cfg)
        cls = ugd_config.classifier_config(cls_cfg)
        source = {'graph': graph}
    else:
        raise InvalidParameterValue('either --preset or --graph is required')
    if seeds is not None:
        cls = replace(cls, seeds=tuple(seed_list(seeds)))
    return clean, noise, denoise_obj, cls, source


experiment_options = options(
    click.option('--preset', type=click.Choice(sorted(ugd_config.PRESETS)), default=None,
                 help='generate the clean graph and configs from a preset.'),
    click.option('--graph', '-g', 'graph', metavar='DIR', type=click.Path(file_okay=False), default=None,
                 help='clean graph directory (instead of --preset).'),
    click.option('--noise-config', 'noise_cfg', metavar='PATH', type=click.Path(dir_okay=False),
                 help='noise JSON config.'),
    click.option('--config', 'denoise_cfg', metavar='PATH', type=click.Path(dir_okay=False),
                 help='denoise JSON config.'),
    classifier_options,
)


@cli.command(epilog=defaults_epilog())
@experiment_options
@click.option('--variant', 'variants', multiple=True, type=click.Choice(BENCH_VARIANTS),
              help='variant to run, may be repeated (default: all plus the no-denoise control).')
@out_dir_option
@click.pass_obj
def bench(runtime, preset, graph, noise_cfg, denoise_cfg, cls_cfg, seeds, variants, out):
    """Inject noise, denoise with every variant and classify, per seed."""
    clean, noise, denoise_obj, cls, source = _experiment_inputs(preset, graph, noise_cfg, denoise_cfg,
                                                                    cls_cfg, seeds)
    variants = variants or BENCH_VARIANTS
    manifest = new_manifest('bench', dict(source, noise=noise.to_dict(), denoise=denoise_obj.to_dict(),
                                          classifier=cls.to_dict(), variants=list(variants)), graph)
    rows = benchmark(clean, noise, denoise_obj, cls, variants=variants, threads=runtime.threads)
    _write_results(runtime, out, rows, manifest, 'benchmark')


@cli.command('sweep', epilog=defaults_epilog())
@experiment_options
@click.option('--axis', type=click.Choice(SWEEP_AXES), required=True, help='which noise ratio to sweep.')
@click.option('--ratios', required=True, help='comma separated ratios, e.g. 0,0.1,0.3,0.5.')
@click.option('--variant', 'variants', multiple=True, type=click.Choice(BENCH_VARIANTS),
              help='variant to run, may be repeated (default: none and full).')
@out_dir_option
@click.pass_obj
def sweep_command(runtime, preset, graph, noise_cfg, denoise_cfg, cls_cfg, seeds, axis, ratios, variants, out):
    """Benchmark while sweeping the feature or structure noise ratio."""
    clean, noise, denoise_obj, cls, source = _experiment_inputs(preset, graph, noise_cfg, denoise_cfg,
                                                                    cls_cfg, seeds)
    ratios = parse_floats(ratios, '--ratios')
    variants = variants or (CONTROL, 'full')
    manifest = new_manifest('sweep', dict(source, noise=noise.to_dict(), denoise=denoise_obj.to_dict(),
                                          classifier=cls.to_dict(), variants=list(variants), axis=axis,
                                          ratios=ratios), graph)
    rows = sweep(clean, noise, denoise_obj, cls, axis, ratios, variants=variants, threads=runtime.threads)
    _write_results(runtime, out, rows, manifest, '{} noise sweep'.format(axis), with_ratio=True)
    if len(ratios) > 1:
        for variant in variants:
            click.echo('{} accuracy drop: {}'.format(variant, runtime.fmt(accuracy_drop(rows, variant))))


@cli.command(epilog=defaults_epilog())
@graph_option
@click.option('--config', 'denoise_cfg', metavar='PATH', type=click.Path(dir_okay=False),
              help='denoise JSON config.')
@classifier_options
@click.option('--thetas', required=True, help='comma separated candidate main thresholds.')
@out_dir_option
@click.pass_obj
def tune(runtime, graph, denoise_cfg, cls_cfg, seeds, thetas, out):
    """Pick the main threshold with the best validation accuracy."""
    cfg = ugd_config.denoise_config(denoise_cfg)
    cls = load_classifier(cls_cfg, seeds)
    candidates = parse_floats(thetas, '--thetas')
    manifest = new_manifest('tune', {'denoise': cfg.to_dict(), 'classifier': cls.to_dict(),
                                     'thetas': candidates}, graph)
    best, table = tune_theta(read_graph(graph), cfg, cls, candidates)
    prepare_outdir(out)
    write_rows(runtime, os.path.join(out, 'tune.csv'), ('theta', 'val_mean', 'test_mean'),
               [dict(zip(('theta', 'val_mean', 'test_mean'), row)) for row in table])
    write_json(os.path.join(out, 'best.json'), {'main_theta': best})
    finish(manifest, out, ['tune.csv', 'best.json'])
    click.echo('best main theta: {}'.format(best))
