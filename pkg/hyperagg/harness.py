"""Training, evaluation and experiment orchestration.

A :class:`Trainer` owns one run: the graphs of its setting, the parameters,
the optimizer and the per-purpose random streams of its seed.
:func:`run_experiment` runs one trainer per seed and summarizes the test
metric as mean and sample standard deviation.
"""
import csv
import io
import itertools
import json
import logging
import math
import time
from concurrent import futures

import numpy as np
from scipy import stats

from hyperagg import config as cfg
from hyperagg import oracles
from hyperagg import rng as rngs
from hyperagg.exceptions import (
    ConfigError, DimensionError, NumericalError, SupervisionError)
from hyperagg.fields import Field, IntField, MethodField, StrField
from hyperagg.graph import (
    PRODUCTION, STRICT, graph_masks, induced_subgraph, inductive_split)
from hyperagg.models import (
    forward, init_params, prepare_graph, sample_neighborhoods)
from hyperagg.optim import Adam
from hyperagg.serializer import Serializer
from hyperagg.tensor import (
    Tape, backward, mae_loss, softmax_cross_entropy)

logger = logging.getLogger(__name__)


def accuracy(logits, labels):
    """Fraction of rows whose argmax equals the label."""
    return float(np.mean(np.argmax(logits, axis=1) == labels))


def auroc(logits, labels):
    """Rank-based area under the ROC curve of a two-class problem.

    The score of a row is ``logit[1] - logit[0]``; ties share their average
    rank.
    """
    if logits.shape[1] != 2:
        raise ConfigError('auroc needs two classes, got {0}'.format(
            logits.shape[1]), key='experiment.eval_metric')
    positive = labels == 1
    n_pos = int(positive.sum())
    n_neg = positive.shape[0] - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SupervisionError('auroc needs both classes among the '
                               'evaluated vertices')
    ranks = stats.rankdata(logits[:, 1] - logits[:, 0])
    return float((ranks[positive].sum() - n_pos * (n_pos + 1) / 2.0) /
                 (n_pos * n_neg))


def mae(predictions, targets):
    return float(np.mean(np.abs(predictions[:, 0] - targets)))


METRIC_FUNCTIONS = {cfg.ACCURACY: accuracy, cfg.AUROC: auroc, cfg.MAE: mae}


def metric_value(metric, outputs, targets):
    try:
        function = METRIC_FUNCTIONS[metric]
    except KeyError:
        raise ConfigError('unknown metric {0!r}'.format(metric),
                          key='experiment.eval_metric')
    return function(outputs, targets)


def is_better(metric, value, best):
    if best is None:
        return True
    if metric == cfg.MAE:
        return value < best
    return value > best


def _targets(g, config):
    return g.graph_targets if config.is_graph_task else g.labels


def _task_masks(g, config):
    return graph_masks(g) if config.is_graph_task else g.masks


def evaluate(g, params, config, mask, metric, rng=None, samples=None):
    """``metric`` of the model on the rows of ``mask`` (inference mode).

    :param mask: Boolean mask over vertices, or over member graphs for graph
        tasks.
    :param rng: Sampling stream for GHM neighborhoods.
    :param samples: Optional ``{vertex: Neighborhood}`` of frozen samples.
    """
    mask = np.asarray(mask, dtype=bool).reshape(-1)
    if not mask.any():
        raise SupervisionError('no supervised vertices')
    targets = _targets(g, config)
    if rng is None:
        rng = rngs.derive(0, rngs.SAMPLING)
    if config.arch == cfg.GHM and not config.is_graph_task:
        batch = np.flatnonzero(mask)
        if samples is not None:
            samples = [samples[v] for v in batch]
        logits = forward(g, config, params, batch=batch, samples=samples,
                         sampling_rng=rng)
        return metric_value(metric, logits.data, targets[batch])
    if samples is not None:
        samples = [samples[v] for v in range(g.num_vertices)]
    logits = forward(g, config, params, samples=samples, sampling_rng=rng)
    if logits.rows != mask.shape[0]:
        raise DimensionError('mask has {0} entries for {1} outputs'.format(
            mask.shape[0], logits.rows))
    return metric_value(metric, logits.data[mask], targets[mask])


def training_loss(config, logits, targets, mask):
    """Mean absolute error for regression, cross entropy otherwise."""
    if config.is_regression:
        return mae_loss(logits, targets, mask)
    return softmax_cross_entropy(logits, targets, mask)


def _relative_error(a, b):
    scale = np.linalg.norm(a) + np.linalg.norm(b)
    if scale == 0.0:
        return 0.0
    return float(np.linalg.norm(a - b) / scale)


def gradient_check(g, config, params, samples=None, eps=1e-5):
    """Compare tape gradients of the training loss with central differences.

    The model runs in inference mode (no dropout); GHM needs ``samples`` so
    that every evaluation sees the same neighborhoods.

    :returns: ``{parameter name: relative error}`` where the error of a
        parameter is ``|tape - fd| / (|tape| + |fd|)`` in Frobenius norm.
    """
    targets = _targets(g, config)
    mask = _task_masks(g, config)['train']

    def loss():
        return training_loss(config, forward(g, config, params,
                                             samples=samples), targets, mask)

    named = params.named_parameters()
    with Tape() as tape:
        value = loss()
    backward(tape, value, [p for _, p in named])
    errors = {}
    for name, param in named:
        analytic = param.grad.copy()
        original = param.data.copy()

        def at(flat):
            param.data[...] = flat.reshape(original.shape)
            return loss().data[0, 0]
        try:
            numeric = oracles.fd_gradient(at, original.ravel(), eps)
        finally:
            param.data[...] = original
        errors[name] = _relative_error(analytic.ravel(), numeric)
    return errors


def _check_task(g, config):
    if config.is_graph_task:
        if g.graph_ids is None or g.graph_targets is None:
            raise ConfigError('task {0} needs a dataset with GRAPHID and '
                              'GTARGETS blocks'.format(config.task),
                              key='model.task')
    if config.is_regression != g.is_regression:
        raise ConfigError('task {0} does not match a {1} dataset'.format(
            config.task, 'regression' if g.is_regression else
            'classification'), key='model.task')


def setting_graphs(graph, setting, rng=None):
    """``(train, val, test)`` graphs of ``setting``.

    Transductive training sees the whole graph. ``inductive_strict`` trains
    on the subgraph induced by the training vertices, validates on the one
    induced by train and validation vertices and tests on the full graph.
    ``inductive_production`` trains and validates on the graph without the
    held-out test vertices and tests on the full graph.
    """
    if setting == cfg.TRANSDUCTIVE:
        return graph, graph, graph
    if setting == cfg.INDUCTIVE_STRICT:
        train_graph, test_graph = inductive_split(graph, STRICT)
        val_graph = induced_subgraph(
            graph, np.flatnonzero(graph.train_mask | graph.val_mask))
        return train_graph, val_graph, test_graph
    if setting == cfg.INDUCTIVE_PRODUCTION:
        train_graph, test_graph = inductive_split(graph, PRODUCTION, rng)
        return train_graph, train_graph, test_graph
    raise ConfigError('unknown setting {0!r}'.format(setting),
                      key='experiment.setting')


class RunResult(object):
    """Outcome of one seed. Failed runs carry NaN metrics and a diagnostic."""

    def __init__(self, seed, best_val_metric, test_metric, epochs_run,
                 wall_seconds, failed=False, diagnostic=None):
        self.seed = seed
        self.best_val_metric = best_val_metric
        self.test_metric = test_metric
        self.epochs_run = epochs_run
        self.wall_seconds = wall_seconds
        self.failed = failed
        self.diagnostic = diagnostic
        self.params = None

    def __repr__(self):
        if self.failed:
            return '<RunResult seed={0} failed: {1}>'.format(
                self.seed, self.diagnostic)
        return '<RunResult seed={0} val={1:.4f} test={2:.4f}>'.format(
            self.seed, self.best_val_metric, self.test_metric)


class Trainer(object):
    """Trains one model for one seed.

    :param ExperimentSpec spec: What to train and how.
    :param Graph graph: The raw dataset; preprocessing follows ``spec.model``.
    :param int seed: Root of the run's random streams.
    """

    def __init__(self, spec, graph, seed):
        self.spec = spec
        self.config = config = spec.model
        self.seed = seed
        self.rngs = rngs.streams(seed)
        _check_task(graph, config)
        prepared = prepare_graph(graph, config)
        self.train_graph, self.val_graph, self.test_graph = setting_graphs(
            prepared, spec.setting, self.rngs[rngs.SPLIT])
        num_outputs = 1 if config.is_regression else graph.num_classes
        self.params = init_params(config, graph.feat_dim, num_outputs,
                                  self.rngs[rngs.INIT])
        self.optimizer = None
        if config.lr > 0.0:
            self.optimizer = Adam(self.params.parameters(), config.lr,
                                  weight_decay=config.weight_decay)
        self._frozen = {}
        self.epochs_run = 0

    def frozen_samples(self, which, g, vertices):
        """Neighborhoods drawn once per vertex and reused for every epoch."""
        cache = self._frozen.setdefault(which, {})
        missing = [v for v in vertices if v not in cache]
        for n in sample_neighborhoods(g, self.config, missing,
                                      self.rngs[rngs.SAMPLING]):
            cache[n.root] = n
        return cache

    def _samples(self, which, g, batch):
        if not self.config.freeze_sampling:
            return None
        cache = self.frozen_samples(which, g, batch)
        return [cache[v] for v in batch]

    def loss(self, logits, targets, mask):
        return training_loss(self.config, logits, targets, mask)

    def _step(self, logits_fn, targets, mask):
        params = self.params.parameters()
        with Tape() as tape:
            loss = self.loss(logits_fn(), targets, mask)
        value = float(loss.data[0, 0])
        if not math.isfinite(value):
            raise NumericalError('training loss is {0}'.format(value))
        if self.optimizer is not None:
            backward(tape, loss, params)
            self.optimizer.step()
            self.optimizer.zero_grad()
        return value

    def train_epoch(self):
        """One pass over the training set; returns the mean training loss.

        GHM on vertex tasks takes one optimizer step per minibatch of
        ``batch_size`` training roots, each with fresh k-hop samples unless
        sampling is frozen. Every other model takes one full-batch step.
        """
        g, config = self.train_graph, self.config
        dropout_rng = self.rngs[rngs.DROPOUT]
        sampling_rng = self.rngs[rngs.SAMPLING]
        targets = _targets(g, config)
        train_mask = _task_masks(g, config)['train']
        self.epochs_run += 1
        if config.arch != cfg.GHM or config.is_graph_task:
            samples = None
            if config.arch == cfg.GHM:
                samples = self._samples('train', g,
                                        np.arange(g.num_vertices))
            return self._step(
                lambda: forward(g, config, self.params, training=True,
                                rng=dropout_rng, samples=samples,
                                sampling_rng=sampling_rng),
                targets, train_mask)
        roots = sampling_rng.permutation(np.flatnonzero(train_mask))
        if roots.size == 0:
            raise SupervisionError('no supervised vertices')
        losses = []
        for start in range(0, roots.size, config.batch_size):
            batch = roots[start:start + config.batch_size]
            samples = self._samples('train', g, batch)
            losses.append(self._step(
                lambda: forward(g, config, self.params, training=True,
                                rng=dropout_rng, batch=batch, samples=samples,
                                sampling_rng=sampling_rng),
                targets[batch], np.ones(batch.size, dtype=bool)))
        return float(np.mean(losses))

    def _evaluate(self, which, g, split):
        mask = _task_masks(g, self.config)[split]
        samples = None
        if self.config.freeze_sampling and self.config.arch == cfg.GHM:
            vertices = (np.arange(g.num_vertices)
                        if self.config.is_graph_task else np.flatnonzero(mask))
            samples = self.frozen_samples(which, g, vertices)
        return evaluate(g, self.params, self.config, mask,
                        self.spec.eval_metric, rng=self.rngs[rngs.SAMPLING],
                        samples=samples)

    def validate(self):
        return self._evaluate('val', self.val_graph, 'val')

    def test(self):
        return self._evaluate('test', self.test_graph, 'test')

    def fit(self):
        """Train with early stopping and restore the best parameters.

        :returns: ``(best validation metric, test metric)``.
        """
        metric = self.spec.eval_metric
        best, best_state, stale = None, self.params.state(), 0
        for epoch in range(1, self.spec.max_epochs + 1):
            loss = self.train_epoch()
            value = self.validate()
            if not math.isfinite(value):
                raise NumericalError('validation {0} is {1}'.format(
                    metric, value))
            logger.debug('seed %d epoch %d: loss %.6f, val %s %.6f',
                         self.seed, epoch, loss, metric, value)
            if is_better(metric, value, best):
                best, best_state, stale = value, self.params.state(), 0
            else:
                stale += 1
                if stale >= self.spec.patience:
                    logger.debug('seed %d: early stop after %d epochs',
                                 self.seed, epoch)
                    break
        self.params.load_state(best_state)
        return best, self.test()


def run_seed(spec, graph, seed, keep_params=False):
    """Train and test one seed.

    Divergence, or a metric undefined on this seed's split (AUROC over a
    single class), yields a failed result instead of an exception.

    With ``keep_params`` the trained parameters ride along on the result as
    ``params``.
    """
    started = time.time()
    try:
        trainer = Trainer(spec, graph, seed)
    except NumericalError as e:
        return RunResult(seed, float('nan'), float('nan'), 0, 0.0,
                         failed=True, diagnostic=str(e))
    try:
        best_val, test = trainer.fit()
    except (NumericalError, SupervisionError) as e:
        logger.warning('seed %d failed after %d epochs: %s', seed,
                       trainer.epochs_run, e)
        return RunResult(seed, float('nan'), float('nan'), trainer.epochs_run,
                         time.time() - started, failed=True,
                         diagnostic=str(e))
    elapsed = time.time() - started
    logger.info('seed %d: val %.4f, test %.4f, %d epochs, %.1fs', seed,
                best_val, test, trainer.epochs_run, elapsed)
    result = RunResult(seed, best_val, test, trainer.epochs_run, elapsed)
    if keep_params:
        result.params = trainer.params
    return result


class Summary(object):
    """Mean and sample standard deviation over the successful runs."""

    def __init__(self, mean, std, count, excluded):
        self.mean = mean
        self.std = std
        self.count = count
        self.excluded = excluded

    @property
    def all_failed(self):
        return self.count == 0


def summarize(results, attr='test_metric'):
    """Summary of ``attr`` over ``results``; failed runs are excluded."""
    values = [getattr(r, attr) for r in results if not r.failed]
    excluded = [r.seed for r in results if r.failed]
    if excluded:
        logger.warning('excluded failed seeds %s from the summary', excluded)
    if not values:
        return Summary(float('nan'), float('nan'), 0, excluded)
    std = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
    return Summary(float(np.mean(values)), std, len(values), excluded)


class Experiment(object):
    """Per-seed results of one :class:`ExperimentSpec` and their summary."""

    def __init__(self, spec, results, dataset=None):
        self.spec = spec
        self.results = results
        self.dataset = dataset
        self.summary = summarize(results)
        self.val_summary = summarize(results, 'best_val_metric')

    def summary_line(self):
        """``arch dataset setting mean±std``."""
        return '{0} {1} {2} {3}'.format(
            self.spec.model.arch, self.dataset or self.spec.data.label,
            self.spec.setting,
            format_score(self.spec.eval_metric, self.summary.mean,
                         self.summary.std))


def format_score(metric, mean, std):
    """Accuracy/AUROC in percent with two decimals, MAE with three."""
    if metric == cfg.MAE:
        return u'{0:.3f}±{1:.3f}'.format(mean, std)
    return u'{0:.2f}±{1:.2f}'.format(100.0 * mean, 100.0 * std)


def _run_seed_job(args):
    return run_seed(*args)


def run_experiment(spec, graph=None, parallel=1, keep_params=False):
    """Run every seed of ``spec`` and summarize.

    :param graph: The dataset; loaded from ``spec.data`` when omitted.
    :param int parallel: Worker processes; seeds are independent and results
        are returned in seed order either way.
    :param bool keep_params: Keep the trained parameters of the first seed.
    """
    if graph is None:
        graph = spec.data.load()
    jobs = [(spec, graph, seed, keep_params and i == 0)
            for i, seed in enumerate(spec.seeds)]
    if parallel > 1 and len(jobs) > 1:
        with futures.ProcessPoolExecutor(max_workers=parallel) as pool:
            results = list(pool.map(_run_seed_job, jobs))
    else:
        results = [_run_seed_job(job) for job in jobs]
    return Experiment(spec, results, dataset=graph.name)


class SweepPoint(object):

    def __init__(self, axis, value, experiment, delta):
        self.axis = axis
        self.value = value
        self.experiment = experiment
        self.delta = delta


def sweep(spec, axis, values=None, graph=None, parallel=1):
    """One experiment per value of the model field ``axis``.

    Boolean fields default to ``[current, flipped]``. ``delta`` is each
    point's mean minus the mean at the base config's value.
    """
    if axis not in cfg.ModelConfig.defaults:
        raise ConfigError('unknown sweep axis {0!r}'.format(axis))
    base_value = getattr(spec.model, axis)
    if values is None:
        if axis not in cfg.TOGGLE_FIELDS:
            raise ConfigError('axis {0} needs explicit values'.format(axis))
        values = [base_value, not base_value]
    if not values:
        raise ConfigError('empty sweep axis {0}'.format(axis))
    if graph is None:
        graph = spec.data.load()
    experiments = []
    for value in values:
        model = spec.model.replace(**{axis: value})
        experiment = run_experiment(spec.replace(model=model), graph,
                                    parallel)
        logger.info('%s=%s: %s', axis, getattr(model, axis),
                    experiment.summary_line())
        experiments.append((getattr(model, axis), experiment))
    base = [e for v, e in experiments if v == base_value]
    if base:
        base_mean = base[0].summary.mean
    else:
        base_mean = run_experiment(spec, graph, parallel).summary.mean
    return [SweepPoint(axis, value, experiment,
                       experiment.summary.mean - base_mean)
            for value, experiment in experiments]


class GridPoint(object):

    def __init__(self, stage, model, experiment):
        self.stage = stage
        self.model = model
        self.experiment = experiment

    @property
    def val_mean(self):
        return self.experiment.val_summary.mean


def _grid(base, space):
    keys = sorted(space)
    for combo in itertools.product(*(space[k] for k in keys)):
        yield base.replace(**dict(zip(keys, combo)))


def _select(points, metric):
    best = None
    for point in points:
        value = point.val_mean
        if math.isnan(value):
            continue
        if best is None or is_better(metric, value, best.val_mean):
            best = point
    return best


def grid_search(space, spec, graph=None, stage1_repeats=1, parallel=1):
    """Two-stage grid search selected by mean validation metric.

    Stage one sweeps the architectural fields of ``space`` with the
    regularization of ``spec.model`` and the first ``stage1_repeats`` seeds.
    Stage two fixes the winner and sweeps the regularization fields over all
    seeds.

    :param dict space: Model field name to candidate values.
    :returns: ``(best ModelConfig, list of GridPoint)``.
    """
    unknown = sorted(set(space) - set(cfg.ModelConfig.defaults))
    if unknown:
        raise ConfigError('unknown search field {0!r}'.format(unknown[0]))
    if graph is None:
        graph = spec.data.load()
    metric = spec.eval_metric
    architectural = dict((k, v) for k, v in space.items()
                         if k not in cfg.REGULARIZATION_FIELDS)
    regularization = dict((k, v) for k, v in space.items()
                          if k in cfg.REGULARIZATION_FIELDS)
    stage1_spec = spec.replace(seeds=spec.seeds[:max(1, stage1_repeats)])
    report = []
    for model in _grid(spec.model, architectural):
        experiment = run_experiment(stage1_spec.replace(model=model), graph,
                                    parallel)
        report.append(GridPoint(1, model, experiment))
    winner = _select(report, metric)
    if winner is None:
        raise NumericalError('every stage-one configuration diverged')
    logger.info('grid stage 1 winner: %r (val %.4f)', winner.model,
                winner.val_mean)
    stage2 = []
    for model in _grid(winner.model, regularization):
        assert model.architecture() == winner.model.architecture()
        experiment = run_experiment(spec.replace(model=model), graph,
                                    parallel)
        stage2.append(GridPoint(2, model, experiment))
    report.extend(stage2)
    best = _select(stage2, metric) or winner
    logger.info('grid stage 2 winner: %r (val %.4f)', best.model,
                best.val_mean)
    return best.model, report


class MetricField(Field):
    """A float that may be NaN (failed runs) rendered with :func:`repr`."""

    def to_value(self, value):
        value = float(value)
        return 'nan' if value != value else repr(value)


class SecondsField(Field):

    def __init__(self, omit=False, **kwargs):
        super(SecondsField, self).__init__(**kwargs)
        self.omit = omit

    def to_value(self, value):
        return '' if self.omit else '{0:.3f}'.format(value)


class RunRowSerializer(Serializer):
    seed = IntField()
    metric = MetricField(attr='test_metric')
    epochs = IntField(attr='epochs_run')
    seconds = SecondsField(attr='wall_seconds')


class UntimedRunRowSerializer(RunRowSerializer):
    seconds = SecondsField(attr='wall_seconds', omit=True)


class RunSerializer(Serializer):
    seed = IntField()
    best_val_metric = Field()
    test_metric = Field()
    epochs_run = IntField()
    failed = Field()
    diagnostic = Field(required=False)


class ExperimentSerializer(Serializer):
    mean = MethodField()
    std = MethodField()
    metric = StrField(attr='spec.eval_metric')
    setting = StrField(attr='spec.setting')
    dataset = Field()
    excluded_seeds = MethodField()
    config = MethodField()
    runs = RunSerializer(attr='results', many=True)

    def get_mean(self, experiment):
        return _json_float(experiment.summary.mean)

    def get_std(self, experiment):
        return _json_float(experiment.summary.std)

    def get_excluded_seeds(self, experiment):
        return list(experiment.summary.excluded)

    def get_config(self, experiment):
        return experiment.spec.to_dict()


def _json_float(value):
    return None if value != value else value


def _open_csv(path):
    return io.open(path, 'w', newline='', encoding='utf-8')


def write_runs_csv(path, results, omit_timing=False):
    """``seed,metric,epochs,seconds`` rows, one per run."""
    serializer = UntimedRunRowSerializer if omit_timing else RunRowSerializer
    with _open_csv(path) as f:
        writer = csv.DictWriter(f, fieldnames=serializer.field_names(),
                                lineterminator='\n')
        writer.writeheader()
        writer.writerows(serializer(results, many=True).data)


def write_summary_json(path, experiment):
    """Summary plus the full effective config of ``experiment``."""
    data = ExperimentSerializer(experiment).data
    for run in data['runs']:
        run['best_val_metric'] = _json_float(run['best_val_metric'])
        run['test_metric'] = _json_float(run['test_metric'])
    with io.open(path, 'w', encoding='utf-8') as f:
        f.write(json.dumps(data, indent=2, sort_keys=True))
        f.write(u'\n')


def write_sweep_csvs(long_path, summary_path, points, omit_timing=False):
    """Long ``axis,value,seed,...`` rows and ``axis,value,mean,std,delta``."""
    serializer = UntimedRunRowSerializer if omit_timing else RunRowSerializer
    with _open_csv(long_path) as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(['axis', 'value'] + serializer.field_names())
        for point in points:
            value = cfg.format_value(point.value)
            for row in serializer(point.experiment.results, many=True).data:
                writer.writerow([point.axis, value] +
                                [row[k] for k in serializer.field_names()])
    with _open_csv(summary_path) as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(['axis', 'value', 'mean', 'std', 'delta'])
        for point in points:
            summary = point.experiment.summary
            writer.writerow([point.axis, cfg.format_value(point.value),
                             repr(summary.mean), repr(summary.std),
                             repr(point.delta)])
