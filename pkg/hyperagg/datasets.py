"""Synthetic datasets and the HAGRAPH text format.

A HAGRAPH file is line oriented UTF-8::

    HAGRAPH 1 <num_vertices> <num_edges> <feat_dim> <num_classes|REG>
    EDGES
    <src> <dst>                      (num_edges lines)
    FEATURES
    <feat_dim decimals>              (num_vertices lines)
    LABELS
    <class | decimal | ?>            (num_vertices lines)
    MASKS
    <train | val | test | observed | none>   (num_vertices lines)
    GRAPHID                          (optional, num_vertices integers)
    GTARGETS                         (optional, one line per member graph)

Decimals are written with :func:`repr`, so a saved graph loads back
bit-exactly.
"""
import io
import logging
import os

import numpy as np

from hyperagg.exceptions import ConfigError, DataError, GraphFormatError
from hyperagg.graph import from_edges

logger = logging.getLogger(__name__)

MAGIC = 'HAGRAPH'
VERSION = '1'
REGRESSION = 'REG'
UNKNOWN = '?'
MASK_TOKENS = ('train', 'val', 'test', 'observed', 'none')

TRAIN_PER_CLASS = 20
VAL_PER_CLASS = 30


def _check_probability(value, key):
    if not 0.0 <= value <= 1.0:
        raise ConfigError('must lie in [0, 1], got {0}'.format(value), key=key)


def _block_edges(sizes, starts, a, b, p, rng):
    if a == b:
        size = sizes[a]
        pairs = size * (size - 1) // 2
        picks = rng.choice(pairs, size=rng.binomial(pairs, p), replace=False)
        upper_i, upper_j = np.triu_indices(size, 1)
        return starts[a] + upper_i[picks], starts[a] + upper_j[picks]
    pairs = sizes[a] * sizes[b]
    picks = rng.choice(pairs, size=rng.binomial(pairs, p), replace=False)
    return starts[a] + picks // sizes[b], starts[b] + picks % sizes[b]


def generate_sbm(n, classes, p_in, p_out, feat_dim, noise, rng,
                 train_per_class=TRAIN_PER_CLASS, val_per_class=VAL_PER_CLASS):
    """Sample an undirected stochastic block model with noisy class features.

    Vertices are split into ``classes`` equal blocks (the label is the
    block). Each unordered pair is joined with probability ``p_in`` inside a
    block and ``p_out`` across blocks, so ``p_in > p_out`` gives a homophilic
    graph and ``p_in < p_out`` a heterophilic one. Features are the one-hot
    class plus Gaussian noise of scale ``noise``. Per class,
    ``train_per_class`` vertices are drawn for training, ``val_per_class``
    for validation and the rest are test vertices.

    :param rng: :class:`numpy.random.Generator`.
    """
    _check_probability(p_in, 'p_in')
    _check_probability(p_out, 'p_out')
    if classes < 1:
        raise ConfigError('must be >= 1, got {0}'.format(classes),
                          key='classes')
    if feat_dim < classes:
        raise ConfigError('must be >= classes ({0}) to hold the class '
                          'signal, got {1}'.format(classes, feat_dim),
                          key='feat_dim')
    if noise < 0.0:
        raise ConfigError('must be >= 0, got {0}'.format(noise), key='noise')
    sizes = np.full(classes, n // classes, dtype=np.int64)
    sizes[:n % classes] += 1
    needed = train_per_class + val_per_class
    if sizes.min() < needed:
        raise ConfigError('blocks of {0} vertices cannot hold {1} train and '
                          '{2} val vertices'.format(int(sizes.min()),
                                                train_per_class,
                                                val_per_class), key='n')
    starts = np.concatenate(([0], np.cumsum(sizes)))
    labels = np.repeat(np.arange(classes), sizes)

    src_parts, dst_parts = [], []
    for a in range(classes):
        for b in range(a, classes):
            p = p_in if a == b else p_out
            if p == 0.0:
                continue
            src, dst = _block_edges(sizes, starts, a, b, p, rng)
            src_parts.extend((src, dst))
            dst_parts.extend((dst, src))
    src = np.concatenate(src_parts) if src_parts else np.zeros(0, np.int64)
    dst = np.concatenate(dst_parts) if dst_parts else np.zeros(0, np.int64)

    features = np.zeros((n, feat_dim))
    features[np.arange(n), labels] = 1.0
    features += noise * rng.standard_normal((n, feat_dim))

    train = np.zeros(n, dtype=bool)
    val = np.zeros(n, dtype=bool)
    test = np.zeros(n, dtype=bool)
    for c in range(classes):
        members = rng.permutation(np.flatnonzero(labels == c))
        train[members[:train_per_class]] = True
        val[members[train_per_class:needed]] = True
        test[members[needed:]] = True

    g = from_edges(n, src, dst, features=features, labels=labels,
                   train_mask=train, val_mask=val, test_mask=test,
                   num_classes=classes, name='sbm')
    logger.debug('generated SBM: %d vertices, %d edges', n, g.num_edges)
    return g


def generate_random_graph(n, p, feat_dim, classes, rng):
    """A small undirected Erdos-Renyi graph with every vertex in training.

    Labels are uniform over ``classes`` and features standard normal; meant
    for gradient checks and property tests rather than learning.
    """
    _check_probability(p, 'p')
    upper_i, upper_j = np.triu_indices(n, 1)
    keep = rng.random(upper_i.shape[0]) < p
    src = np.concatenate((upper_i[keep], upper_j[keep]))
    dst = np.concatenate((upper_j[keep], upper_i[keep]))
    return from_edges(n, src, dst,
                      features=rng.standard_normal((n, feat_dim)),
                      labels=rng.integers(0, classes, size=n),
                      train_mask=np.ones(n, dtype=bool),
                      num_classes=classes, name='random')


def _format_float(value):
    if value != value:
        return UNKNOWN
    return repr(float(value))


def save_graph(g, path):
    """Write ``g`` to ``path`` in HAGRAPH format."""
    classes = REGRESSION if g.is_regression else str(g.num_classes)
    lines = ['{0} {1} {2} {3} {4} {5}'.format(
        MAGIC, VERSION, g.num_vertices, g.num_edges, g.feat_dim, classes)]
    lines.append('EDGES')
    src, dst = g.edges()
    lines.extend('{0} {1}'.format(s, d) for s, d in zip(src.tolist(),
                                                        dst.tolist()))
    lines.append('FEATURES')
    lines.extend(' '.join(repr(x) for x in row)
                 for row in g.features.data.tolist())
    lines.append('LABELS')
    if g.is_regression:
        lines.extend(_format_float(y) for y in g.labels.tolist())
    else:
        lines.extend(UNKNOWN if y < 0 else str(y) for y in g.labels.tolist())
    lines.append('MASKS')
    for v in range(g.num_vertices):
        for name in ('train', 'val', 'test', 'observed'):
            if g.masks[name][v]:
                lines.append(name)
                break
        else:
            lines.append('none')
    if g.graph_ids is not None:
        lines.append('GRAPHID')
        lines.extend(str(i) for i in g.graph_ids.tolist())
        if g.graph_targets is not None:
            lines.append('GTARGETS')
            if g.is_regression:
                lines.extend(_format_float(y)
                             for y in g.graph_targets.tolist())
            else:
                lines.extend(UNKNOWN if y < 0 else str(y)
                             for y in g.graph_targets.tolist())
    with io.open(path, 'w', encoding='utf-8') as f:
        f.write(u'\n'.join(lines))
        f.write(u'\n')


class _Lines(object):
    """Sequential access to the lines of a file with 1-based numbering."""

    def __init__(self, text):
        self.lines = text.split('\n')
        if self.lines and self.lines[-1] == '':
            self.lines.pop()
        self.position = 0

    @property
    def line_number(self):
        return self.position + 1

    def at_end(self):
        return self.position >= len(self.lines)

    def next(self):
        if self.at_end():
            raise GraphFormatError('unexpected end of file',
                                   line=self.line_number)
        line = self.lines[self.position]
        self.position += 1
        return line

    def expect(self, keyword):
        line = self.next()
        if line.strip() != keyword:
            raise GraphFormatError('expected {0!r}, got {1!r}'.format(
                keyword, line), line=self.position)

    def block(self, name, count):
        start = self.position
        available = len(self.lines) - start
        if available < count:
            raise GraphFormatError(
                '{0} block truncated: expected {1} lines, got {2}'.format(
                    name, count, available), line=len(self.lines) + 1)
        self.position += count
        return [(start + i + 1, self.lines[start + i]) for i in range(count)]


def _parse_header(lines):
    tokens = lines.next().split()
    if len(tokens) != 6 or tokens[0] != MAGIC:
        raise GraphFormatError('malformed header, expected "{0} {1} '
                               '<vertices> <edges> <feat_dim> <classes|{2}>"'
                               .format(MAGIC, VERSION, REGRESSION), line=1)
    if tokens[1] != VERSION:
        raise GraphFormatError('unsupported version {0!r}'.format(tokens[1]),
                               line=1)
    try:
        counts = [int(t) for t in tokens[2:5]]
        classes = None if tokens[5] == REGRESSION else int(tokens[5])
    except ValueError:
        raise GraphFormatError('malformed header counts', line=1)
    if min(counts) < 0 or (classes is not None and classes < 1):
        raise GraphFormatError('header counts must be positive', line=1)
    return counts[0], counts[1], counts[2], classes


def _parse_value(text, line, integer):
    text = text.strip()
    if text == UNKNOWN:
        return -1 if integer else float('nan')
    try:
        return int(text) if integer else float(text)
    except ValueError:
        raise GraphFormatError('invalid value {0!r}'.format(text), line=line)


def _parse_target(text, line, classes):
    """A class id in ``[0, classes)``, a regression value or ``?``."""
    value = _parse_value(text, line, classes is not None)
    if (classes is not None and text.strip() != UNKNOWN and
            not 0 <= value < classes):
        raise GraphFormatError('label {0} outside [0, {1})'.format(
            value, classes), line=line)
    return value


def load_graph(path):
    """Read a HAGRAPH file into a :class:`hyperagg.graph.Graph`."""
    try:
        with io.open(path, 'rb') as f:
            raw = f.read()
    except (IOError, OSError) as e:
        raise DataError('cannot read graph file {0}: {1}'.format(path, e))
    try:
        text = raw.decode('utf-8').replace('\r\n', '\n')
    except UnicodeDecodeError as e:
        raise GraphFormatError('invalid UTF-8 byte 0x{0:02x}'.format(
            raw[e.start]), line=raw.count(b'\n', 0, e.start) + 1)
    lines = _Lines(text)
    num_vertices, num_edges, feat_dim, classes = _parse_header(lines)

    lines.expect('EDGES')
    src = np.zeros(num_edges, dtype=np.int64)
    dst = np.zeros(num_edges, dtype=np.int64)
    for i, (line, text) in enumerate(lines.block('EDGES', num_edges)):
        parts = text.split()
        if len(parts) != 2:
            raise GraphFormatError('expected "src dst"', line=line)
        try:
            src[i], dst[i] = int(parts[0]), int(parts[1])
        except ValueError:
            raise GraphFormatError('invalid edge {0!r}'.format(text),
                                   line=line)
        if not (0 <= src[i] < num_vertices and 0 <= dst[i] < num_vertices):
            raise GraphFormatError('edge endpoint out of range', line=line)

    lines.expect('FEATURES')
    features = np.zeros((num_vertices, feat_dim))
    for v, (line, text) in enumerate(lines.block('FEATURES', num_vertices)):
        parts = text.split()
        if len(parts) != feat_dim:
            raise GraphFormatError('expected {0} features, got {1}'.format(
                feat_dim, len(parts)), line=line)
        try:
            features[v] = [float(p) for p in parts]
        except ValueError:
            raise GraphFormatError('invalid feature value', line=line)

    lines.expect('LABELS')
    labels = [_parse_target(text, line, classes)
              for line, text in lines.block('LABELS', num_vertices)]

    lines.expect('MASKS')
    masks = dict((name, np.zeros(num_vertices, dtype=bool))
                 for name in MASK_TOKENS)
    for v, (line, text) in enumerate(lines.block('MASKS', num_vertices)):
        token = text.strip()
        if token not in masks:
            raise GraphFormatError('unknown mask {0!r}'.format(token),
                                   line=line)
        masks[token][v] = True

    graph_ids = graph_targets = None
    if not lines.at_end():
        lines.expect('GRAPHID')
        graph_ids = [_parse_value(text, line, True)
                     for line, text in lines.block('GRAPHID', num_vertices)]
        if not lines.at_end():
            lines.expect('GTARGETS')
            count = max(graph_ids) + 1 if graph_ids else 0
            graph_targets = [_parse_target(text, line, classes)
                             for line, text in lines.block('GTARGETS', count)]
    if not lines.at_end():
        raise GraphFormatError('unexpected trailing content',
                               line=lines.line_number)

    return from_edges(
        num_vertices, src, dst, features=features, labels=labels,
        train_mask=masks['train'], val_mask=masks['val'],
        test_mask=masks['test'], observed_mask=masks['observed'],
        num_classes=classes, graph_ids=graph_ids, graph_targets=graph_targets,
        name=_dataset_name(path))


def _dataset_name(path):
    base = os.path.basename(str(path))
    return base.rsplit('.', 1)[0] if '.' in base else base
