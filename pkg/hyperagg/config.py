"""Typed configuration: model knobs, experiment protocol and data source.

Config files are INI style with ``[data]``, ``[model]`` and ``[experiment]``
sections of ``key = value`` lines. Values are coerced by the schemas below,
so a file, a ``--set model.mixing=32`` override and a keyword argument all go
through the same validation. ::

    [data]
    synthetic = sbm
    n = 1000
    classes = 4

    [model]
    arch = GHC
    hidden = 64
    mixing = 32

    [experiment]
    setting = transductive
    seeds = 0,1,2
"""
import logging
import os

import six
from six.moves import configparser

from hyperagg.exceptions import ConfigError
from hyperagg.fields import (
    BoolField, CapField, ChoiceField, FloatField, IntField, IntListField,
    ProbabilityField, StrField)
from hyperagg.serializer import DictSerializer

logger = logging.getLogger(__name__)

GHC = 'GHC'
GHM = 'GHM'
GCN = 'GCN'
MLP = 'MLP'
ARCHS = (GHC, GHM, GCN, MLP)

VERTEX_CLS = 'vertex_cls'
GRAPH_CLS = 'graph_cls'
GRAPH_REG = 'graph_reg'
TASKS = (VERTEX_CLS, GRAPH_CLS, GRAPH_REG)

ROOT = 'root'
MEAN = 'mean'
READOUTS = (ROOT, MEAN)

TRANSDUCTIVE = 'transductive'
INDUCTIVE_STRICT = 'inductive_strict'
INDUCTIVE_PRODUCTION = 'inductive_production'
SETTINGS = (TRANSDUCTIVE, INDUCTIVE_STRICT, INDUCTIVE_PRODUCTION)

ACCURACY = 'accuracy'
AUROC = 'auroc'
MAE = 'mae'
METRICS = (ACCURACY, AUROC, MAE)

SBM = 'sbm'

#: Fields swept in the second grid-search stage; every other model field is
#: architectural.
REGULARIZATION_FIELDS = ('input_dropout', 'model_dropout', 'mixing_dropout',
                         'weight_decay')

#: Boolean model fields that can be flipped as single ablations.
TOGGLE_FIELDS = ('root_connection', 'residual', 'normalize_input',
                 'self_loops', 'undirected', 'pre_activation', 'trans_input',
                 'trans_output', 'freeze_sampling')


class ModelConfigSchema(DictSerializer):
    arch = ChoiceField(ARCHS)
    task = ChoiceField(TASKS)
    depth = IntField(minimum=1)
    hidden = IntField(minimum=1)
    mixing = IntField(minimum=1)
    k_hop = IntField(minimum=1)
    subgraph_cap = CapField(minimum=1, required=False)
    batch_size = IntField(minimum=1)
    freeze_sampling = BoolField()
    normalize_input = BoolField()
    self_loops = BoolField()
    undirected = BoolField()
    input_dropout = ProbabilityField()
    model_dropout = ProbabilityField()
    mixing_dropout = ProbabilityField()
    weight_decay = FloatField(minimum=0.0)
    lr = FloatField(minimum=0.0)
    root_connection = BoolField()
    residual = BoolField()
    readout = ChoiceField(READOUTS)
    pre_activation = BoolField()
    trans_input = BoolField()
    trans_output = BoolField()


class ExperimentSchema(DictSerializer):
    setting = ChoiceField(SETTINGS)
    seeds = IntListField()
    max_epochs = IntField(minimum=1)
    patience = IntField(minimum=1)
    eval_metric = ChoiceField(METRICS, required=False)


class DataSchema(DictSerializer):
    path = StrField(required=False)
    synthetic = ChoiceField((SBM,), required=False)
    n = IntField(minimum=1)
    classes = IntField(minimum=1)
    p_in = FloatField(minimum=0.0)
    p_out = FloatField(minimum=0.0)
    feat_dim = IntField(minimum=1)
    noise = FloatField(minimum=0.0)
    seed = IntField()
    train_per_class = IntField(minimum=0)
    val_per_class = IntField(minimum=0)


class _Config(object):
    """A validated bundle of typed values described by ``schema``."""
    schema = None
    section = None
    defaults = {}

    def __init__(self, **values):
        unknown = sorted(set(values) - set(self.defaults))
        if unknown:
            raise ConfigError('unknown key', key='{0}.{1}'.format(
                self.section, unknown[0]))
        merged = dict(self.defaults)
        merged.update(values)
        typed = self.schema(merged, prefix=self.section).data
        for key in self.defaults:
            setattr(self, key, typed.get(key))
        self._validate()

    def _validate(self):
        pass

    def to_dict(self):
        return dict((key, getattr(self, key)) for key in sorted(self.defaults))

    def replace(self, **changes):
        values = self.to_dict()
        values.update(changes)
        return type(self)(**values)

    def __eq__(self, other):
        return type(self) is type(other) and self.to_dict() == other.to_dict()

    def __ne__(self, other):
        return not self == other

    def __hash__(self):
        return hash(tuple(sorted((k, repr(v))
                                 for k, v in self.to_dict().items())))

    def __repr__(self):
        return '{0}({1})'.format(type(self).__name__, ', '.join(
            '{0}={1!r}'.format(k, v)
            for k, v in sorted(self.to_dict().items())))


class ModelConfig(_Config):
    """Every architectural and regularization knob of a model.

    ``trans_input`` switches layer norm and dropout before the hypernetwork.
    ``trans_output`` switches layer norm and dropout after the target network
    together with the GeLU in front of a block's ``ff_out``.
    ``pre_activation`` is the optional GeLU applied to the aggregation input.
    """
    schema = ModelConfigSchema
    section = 'model'
    defaults = {
        'arch': GHC,
        'task': VERTEX_CLS,
        'depth': 2,
        'hidden': 64,
        'mixing': 32,
        'k_hop': 2,
        'subgraph_cap': 16,
        'batch_size': 64,
        'freeze_sampling': False,
        'normalize_input': False,
        'self_loops': True,
        'undirected': True,
        'input_dropout': 0.0,
        'model_dropout': 0.0,
        'mixing_dropout': 0.0,
        'weight_decay': 0.0,
        'lr': 0.01,
        'root_connection': True,
        'residual': False,
        'readout': ROOT,
        'pre_activation': True,
        'trans_input': False,
        'trans_output': True,
    }

    @property
    def is_graph_task(self):
        return self.task != VERTEX_CLS

    @property
    def is_regression(self):
        return self.task == GRAPH_REG

    def architecture(self):
        """The config without its regularization fields."""
        values = self.to_dict()
        for key in REGULARIZATION_FIELDS:
            values.pop(key)
        return values


class DataSpec(_Config):
    """The data source: a HAGRAPH ``path`` or a ``synthetic`` SBM."""
    schema = DataSchema
    section = 'data'
    defaults = {
        'path': None,
        'synthetic': None,
        'n': 1000,
        'classes': 4,
        'p_in': 0.02,
        'p_out': 0.002,
        'feat_dim': 16,
        'noise': 1.0,
        'seed': 0,
        'train_per_class': 20,
        'val_per_class': 30,
    }

    def _validate(self):
        if (self.path is None) == (self.synthetic is None):
            raise ConfigError('exactly one of data.path and data.synthetic '
                              'must be given', key='data')
        for key in ('p_in', 'p_out'):
            if getattr(self, key) > 1.0:
                raise ConfigError('must lie in [0, 1]', key='data.' + key)

    @property
    def label(self):
        if self.synthetic is not None:
            return self.synthetic
        base = os.path.basename(self.path)
        return base.rsplit('.', 1)[0] if '.' in base else base

    def load(self):
        """Read or generate the graph."""
        from hyperagg import datasets, rng
        if self.path is not None:
            return datasets.load_graph(self.path)
        return datasets.generate_sbm(
            self.n, self.classes, self.p_in, self.p_out, self.feat_dim,
            self.noise, rng.derive(self.seed, rng.DATA),
            train_per_class=self.train_per_class,
            val_per_class=self.val_per_class)


class ExperimentSpec(object):
    """A dataset, a model config and the protocol to evaluate it with.

    :param DataSpec data: The data source.
    :param ModelConfig model: The model.
    :param str setting: One of :data:`SETTINGS`.
    :param seeds: Non-empty list of integer seeds, one run each.
    :param str eval_metric: One of :data:`METRICS`; defaults to ``mae`` for
        regression and ``accuracy`` otherwise.
    """

    def __init__(self, data, model, setting=TRANSDUCTIVE, seeds=(0,),
                 max_epochs=1000, patience=100, eval_metric=None):
        typed = ExperimentSchema(dict(
            setting=setting, seeds=seeds, max_epochs=max_epochs,
            patience=patience, eval_metric=eval_metric),
            prefix='experiment').data
        self.data = data
        self.model = model
        self.setting = typed['setting']
        self.seeds = typed['seeds']
        self.max_epochs = typed['max_epochs']
        self.patience = typed['patience']
        self.eval_metric = typed.get('eval_metric') or (
            MAE if model.is_regression else ACCURACY)
        if not self.seeds:
            raise ConfigError('at least one seed is required',
                              key='experiment.seeds')
        if self.patience > self.max_epochs:
            raise ConfigError('patience must not exceed max_epochs',
                              key='experiment.patience')
        if model.is_regression != (self.eval_metric == MAE):
            raise ConfigError('{0} does not fit task {1}'.format(
                self.eval_metric, model.task), key='experiment.eval_metric')
        if model.is_graph_task and self.setting != TRANSDUCTIVE:
            raise ConfigError('graph-level tasks are inductive by '
                              'construction; use setting = transductive',
                              key='experiment.setting')

    def experiment_dict(self):
        return {'setting': self.setting, 'seeds': list(self.seeds),
                'max_epochs': self.max_epochs, 'patience': self.patience,
                'eval_metric': self.eval_metric}

    def to_dict(self):
        """The full effective configuration, one dict per section."""
        return {'data': self.data.to_dict(), 'model': self.model.to_dict(),
                'experiment': self.experiment_dict()}

    def replace(self, model=None, seeds=None, **experiment):
        values = self.experiment_dict()
        values.update(experiment)
        if seeds is not None:
            values['seeds'] = list(seeds)
        return ExperimentSpec(self.data, model or self.model, **values)


SECTIONS = {'data': DataSpec, 'model': ModelConfig}


def parse_overrides(pairs):
    """Turn ``section.key=value`` strings into ``{section: {key: value}}``."""
    sections = {}
    for pair in pairs or ():
        if '=' not in pair:
            raise ConfigError('override {0!r} must look like '
                              'section.key=value'.format(pair))
        name, value = pair.split('=', 1)
        if '.' not in name:
            raise ConfigError('override {0!r} must name a section, e.g. '
                              'model.{1}'.format(pair, name.strip()))
        section, key = name.strip().split('.', 1)
        sections.setdefault(section, {})[key.strip()] = value.strip()
    return sections


def read_sections(path):
    """Read a config file into ``{section: {key: raw string}}``."""
    parser = configparser.ConfigParser()
    try:
        with open(path) as f:
            parser.read_file(f)
    except (IOError, OSError) as e:
        raise ConfigError('cannot read config file: {0}'.format(e))
    except configparser.Error as e:
        raise ConfigError('malformed config file: {0}'.format(e))
    return dict((name, dict(parser.items(name)))
                for name in parser.sections())


def _known_keys(section):
    if section == 'experiment':
        return set(ExperimentSchema.field_names())
    if section in SECTIONS:
        return set(SECTIONS[section].defaults)
    raise ConfigError('unknown section {0!r}'.format(section))


def merge_sections(base, overrides):
    """Overlay ``overrides`` onto ``base``; every key must exist somewhere."""
    merged = dict((name, dict(values)) for name, values in base.items())
    for section, values in overrides.items():
        known = _known_keys(section)
        for key in values:
            if key not in known:
                raise ConfigError('unknown key', key='{0}.{1}'.format(
                    section, key))
        merged.setdefault(section, {}).update(values)
    return merged


def build_spec(sections):
    """An :class:`ExperimentSpec` from raw (string-valued) sections."""
    for section, values in sections.items():
        known = _known_keys(section)
        for key in values:
            if key not in known:
                raise ConfigError('unknown key', key='{0}.{1}'.format(
                    section, key))
    data = DataSpec(**sections.get('data', {}))
    model = ModelConfig(**sections.get('model', {}))
    experiment = dict(sections.get('experiment', {}))
    spec = ExperimentSpec(data, model, **experiment)
    logger.debug('effective config: %s', spec.to_dict())
    return spec


def load_spec(path=None, overrides=()):
    """Read ``path`` (optional), apply ``section.key=value`` overrides."""
    sections = read_sections(path) if path else {}
    return build_spec(merge_sections(sections, parse_overrides(overrides)))


def format_value(value):
    """Render a typed value the way config files spell it."""
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, (list, tuple)):
        return ','.join(format_value(v) for v in value)
    if value is None:
        return 'none'
    return six.text_type(value)
