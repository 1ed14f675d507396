"""The ``hyperagg`` command line.

::

    hyperagg train --config ghc.ini --data cora.hagraph --seeds 10
    hyperagg sweep --synthetic sbm --axis mixing --values 8,16,32
    hyperagg generate --n 1000 --classes 4 --output sbm.hagraph
    hyperagg gradcheck --arch GHC

Exit codes: 0 success, 2 usage or config error, 3 data error, 4 numerical
failure.
"""
from __future__ import print_function

import argparse
import logging
import os
import sys

import numpy as np

from hyperagg import __version__
from hyperagg import config as cfg
from hyperagg import datasets, harness, models
from hyperagg import rng as rngs
from hyperagg.exceptions import (
    EXIT_DATA, EXIT_NUMERICAL, EXIT_OK, ConfigError, HyperAggError,
    NumericalError)
from hyperagg.graph import edge_homophily
from hyperagg.tensor import backward_hook

logger = logging.getLogger(__name__)

THREADS_ENV = 'HYPERAGG_THREADS'
GRADCHECK_TOLERANCE = 1e-4


def _default_parallel():
    raw = os.environ.get(THREADS_ENV)
    if not raw:
        return 1
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError('{0} must be an integer, got {1!r}'.format(
            THREADS_ENV, raw))
    if value < 1:
        raise ConfigError('{0} must be >= 1, got {1}'.format(
            THREADS_ENV, value))
    return value


def _add_experiment_arguments(parser):
    parser.add_argument('--config', help='INI config file with [data], '
                        '[model] and [experiment] sections')
    source = parser.add_mutually_exclusive_group()
    source.add_argument('--data', metavar='PATH', help='HAGRAPH dataset')
    source.add_argument('--synthetic', choices=[cfg.SBM],
                        help='generate the dataset from the [data] section')
    parser.add_argument('--seed', type=int, default=None,
                        help='root seed (default 0, or the config seeds)')
    parser.add_argument('--seeds', type=int, default=None, metavar='N',
                        help='run N seeds starting at --seed')
    parser.add_argument('--set', dest='overrides', action='append',
                        default=[], metavar='SECTION.KEY=VALUE',
                        help='override a config value (repeatable)')
    parser.add_argument('--output-dir', default='.',
                        help='where CSV and JSON results go')
    parser.add_argument('--parallel', type=int, default=None, metavar='N',
                        help='worker processes for seeds (default ${0} or 1)'
                        .format(THREADS_ENV))
    parser.add_argument('--omit-timing', action='store_true',
                        help='leave the seconds column empty so repeated '
                        'runs produce identical CSV files')


def build_parser():
    parser = argparse.ArgumentParser(
        prog='hyperagg',
        description='HyperAggregation graph neural networks.')
    parser.add_argument('--version', action='version',
                        version='%(prog)s ' + __version__)
    parser.add_argument('-v', '--verbose', action='count', default=0,
                        help='-v for progress, -vv for per-epoch detail')
    commands = parser.add_subparsers(dest='command')
    commands.required = True

    train = commands.add_parser('train', help='run one experiment')
    _add_experiment_arguments(train)
    train.add_argument('--save-params', metavar='PATH',
                       help='write the first seed\'s trained parameters')
    train.set_defaults(handler=cmd_train)

    sweep = commands.add_parser('sweep', help='vary one model field')
    _add_experiment_arguments(sweep)
    sweep.add_argument('--axis', required=True,
                       help='model field to vary, e.g. mixing or '
                       'root_connection')
    sweep.add_argument('--values', help='comma-separated values; boolean '
                       'fields default to current,flipped')
    sweep.set_defaults(handler=cmd_sweep)

    generate = commands.add_parser('generate', help='write a synthetic SBM')
    generate.add_argument('--n', type=int, default=1000)
    generate.add_argument('--classes', type=int, default=4)
    generate.add_argument('--p-in', type=float, default=0.02)
    generate.add_argument('--p-out', type=float, default=0.002)
    generate.add_argument('--feat-dim', type=int, default=16)
    generate.add_argument('--noise', type=float, default=1.0)
    generate.add_argument('--train-per-class', type=int,
                          default=datasets.TRAIN_PER_CLASS)
    generate.add_argument('--val-per-class', type=int,
                          default=datasets.VAL_PER_CLASS)
    generate.add_argument('--seed', type=int, default=0)
    generate.add_argument('--output', required=True, metavar='PATH')
    generate.set_defaults(handler=cmd_generate)

    gradcheck = commands.add_parser(
        'gradcheck', help='compare backward passes with finite differences')
    gradcheck.add_argument('--arch', choices=cfg.ARCHS, default=cfg.GHC)
    gradcheck.add_argument('--depth', type=int, default=2)
    gradcheck.add_argument('--hidden', type=int, default=4)
    gradcheck.add_argument('--mixing', type=int, default=3)
    gradcheck.add_argument('--vertices', type=int, default=6)
    gradcheck.add_argument('--seed', type=int, default=0)
    gradcheck.add_argument('--set', dest='overrides', action='append',
                           default=[], metavar='model.KEY=VALUE')
    gradcheck.add_argument('--corrupt', metavar='OP',
                           help='double the input gradients of operation OP '
                           '(negative control)')
    gradcheck.set_defaults(handler=cmd_gradcheck)
    return parser


def load_experiment(args):
    """The :class:`ExperimentSpec` described by config file and flags."""
    sections = cfg.read_sections(args.config) if args.config else {}
    data = sections.setdefault('data', {})
    if args.data:
        data.pop('synthetic', None)
        data['path'] = args.data
    elif args.synthetic:
        data.pop('path', None)
        data['synthetic'] = args.synthetic
    experiment = sections.setdefault('experiment', {})
    if args.seeds is not None:
        if args.seeds < 1:
            raise ConfigError('--seeds must be >= 1')
        start = args.seed or 0
        experiment['seeds'] = list(range(start, start + args.seeds))
    elif args.seed is not None:
        experiment['seeds'] = [args.seed]
    sections = cfg.merge_sections(sections,
                                  cfg.parse_overrides(args.overrides))
    return cfg.build_spec(sections)


def _parallel(args):
    parallel = args.parallel if args.parallel is not None \
        else _default_parallel()
    if parallel < 1:
        raise ConfigError('--parallel must be >= 1')
    return parallel


def _output_path(args, name):
    if not os.path.isdir(args.output_dir):
        os.makedirs(args.output_dir)
    return os.path.join(args.output_dir, name)


def cmd_train(args):
    spec = load_experiment(args)
    graph = spec.data.load()
    experiment = harness.run_experiment(
        spec, graph, _parallel(args), keep_params=bool(args.save_params))
    stem = '{0}_{1}_{2}'.format(spec.model.arch, graph.name or 'data',
                                spec.setting)
    harness.write_runs_csv(_output_path(args, stem + '.csv'),
                           experiment.results, args.omit_timing)
    harness.write_summary_json(_output_path(args, stem + '.json'), experiment)
    print(experiment.summary_line())
    if experiment.summary.all_failed:
        raise NumericalError('every run failed')
    if args.save_params:
        first = experiment.results[0]
        if first.params is None:
            raise NumericalError('seed {0} diverged, nothing to save'.format(
                first.seed))
        models.save_checkpoint(first.params, args.save_params)
        logger.info('saved parameters of seed %d to %s', first.seed,
                    args.save_params)
    return EXIT_OK


def _sweep_values(axis, raw):
    """Raw strings of ``--values``; the model config coerces each one."""
    if raw is None:
        return None
    values = [v.strip() for v in raw.split(',') if v.strip()]
    if not values:
        raise ConfigError('empty sweep axis {0}'.format(axis))
    return values


def cmd_sweep(args):
    spec = load_experiment(args)
    graph = spec.data.load()
    points = harness.sweep(spec, args.axis,
                           _sweep_values(args.axis, args.values), graph,
                           _parallel(args))
    stem = 'sweep_{0}'.format(args.axis)
    harness.write_sweep_csvs(_output_path(args, stem + '.csv'),
                             _output_path(args, stem + '_summary.csv'),
                             points, args.omit_timing)
    for point in points:
        print(u'{0}={1} {2} delta {3:+.4f}'.format(
            point.axis, cfg.format_value(point.value),
            point.experiment.summary_line(), point.delta))
    if all(p.experiment.summary.all_failed for p in points):
        raise NumericalError('every run failed')
    return EXIT_OK


def cmd_generate(args):
    graph = datasets.generate_sbm(
        args.n, args.classes, args.p_in, args.p_out, args.feat_dim,
        args.noise, rngs.derive(args.seed, rngs.DATA),
        train_per_class=args.train_per_class,
        val_per_class=args.val_per_class)
    datasets.save_graph(graph, args.output)
    logger.info('wrote %s', args.output)
    print('homophily {0:.4f}'.format(edge_homophily(graph)))
    return EXIT_OK


def _corrupted(grads):
    return tuple(None if g is None else 2.0 * g for g in grads)


def cmd_gradcheck(args):
    model = cfg.ModelConfig(arch=args.arch, depth=args.depth,
                            hidden=args.hidden, mixing=args.mixing,
                            subgraph_cap=None, k_hop=1)
    overrides = cfg.parse_overrides(args.overrides)
    unexpected = sorted(set(overrides) - {'model'})
    if unexpected:
        raise ConfigError('gradcheck only takes model.* overrides, got {0}.*'
                          .format(unexpected[0]))
    if overrides:
        model = model.replace(**overrides['model'])
    streams = rngs.streams(args.seed)
    graph = models.prepare_graph(datasets.generate_random_graph(
        args.vertices, 0.4, 3, 2, streams[rngs.DATA]), model)
    params = models.init_params(model, graph.feat_dim, 2, streams[rngs.INIT])
    samples = None
    if model.arch == cfg.GHM:
        samples = models.sample_neighborhoods(
            graph, model, np.arange(graph.num_vertices),
            streams[rngs.SAMPLING])
    if args.corrupt:
        calls = []

        def corrupt(grads):
            calls.append(args.corrupt)
            return _corrupted(grads)

        with backward_hook(args.corrupt, corrupt):
            errors = harness.gradient_check(graph, model, params, samples)
        if not calls:
            raise ConfigError('{0} does not occur in the {1} backward pass'
                              .format(args.corrupt, model.arch),
                              key='--corrupt')
    else:
        errors = harness.gradient_check(graph, model, params, samples)
    worst = max(errors, key=errors.get)
    for name in sorted(errors):
        logger.info('%s: %.3e', name, errors[name])
    print('max relative error {0:.3e} ({1})'.format(errors[worst], worst))
    if errors[worst] < GRADCHECK_TOLERANCE:
        print('PASS')
        return EXIT_OK
    print('FAIL')
    return EXIT_NUMERICAL


def configure_logging(verbosity):
    level = logging.WARNING
    if verbosity == 1:
        level = logging.INFO
    elif verbosity > 1:
        level = logging.DEBUG
    logging.basicConfig(
        level=level, format='%(asctime)s %(levelname)s %(name)s: %(message)s')


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.verbose)
    try:
        return args.handler(args)
    except HyperAggError as e:
        print('error: {0}'.format(e), file=sys.stderr)
        return e.exit_code
    except (IOError, OSError) as e:
        print('error: {0}'.format(e), file=sys.stderr)
        return EXIT_DATA


if __name__ == '__main__':
    sys.exit(main())
