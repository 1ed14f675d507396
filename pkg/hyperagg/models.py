"""HyperAggregation and the architectures built from it.

HyperAggregation (HA) mixes the rows of a neighborhood matrix ``Xn`` with
weights generated from the neighborhood itself::

    W_tar = gelu(Xn . W_A) . W_B          # n x m, the hypernetwork
    out   = W_tar . gelu(Xn^T . W_tar)^T   # n x h, the tied target network

GraphHyperConv (GHC) applies HA to the 1-hop neighborhood of every vertex of
the full graph. GraphHyperMixer (GHM) applies it to sampled k-hop subgraphs
treated as fully connected. GCN and MLP are the baselines.

Neighborhoods of many vertices are stacked into one matrix and processed by
the segmented operations of :mod:`hyperagg.tensor`, so a forward pass costs a
handful of batched products instead of one small product per vertex.
"""
import io
import json
import logging
import math
import struct

import numpy as np
from scipy import sparse

from hyperagg import config as cfg
from hyperagg.exceptions import ConfigError, DataError, DimensionError
from hyperagg.graph import (
    add_self_loops, gcn_adjacency, make_undirected, one_hop_index,
    sample_khop)
from hyperagg.tensor import (
    Matrix, Segments, add, concat_cols, dropout, gelu, layer_norm, matmul,
    row_select, segment_expand, segment_outer, spmm)

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b'HACKPT1\n'


def glorot(fan_in, fan_out, rng, name=None):
    """Uniform in ``+-sqrt(6 / (fan_in + fan_out))``."""
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return Matrix(rng.uniform(-limit, limit, size=(fan_in, fan_out)),
                  requires_grad=True, name=name)


def _zeros(cols, name):
    return Matrix(np.zeros((1, cols)), requires_grad=True, name=name)


def _ones(cols, name):
    return Matrix(np.ones((1, cols)), requires_grad=True, name=name)


class Linear(object):
    """``x . weight + bias`` with a ``1 x out`` bias row."""

    def __init__(self, weight, bias):
        if bias.shape != (1, weight.cols):
            raise DimensionError.mismatch('Linear', weight.shape, bias.shape)
        self.weight = weight
        self.bias = bias

    @classmethod
    def create(cls, fan_in, fan_out, rng, name):
        return cls(glorot(fan_in, fan_out, rng, name + '.weight'),
                   _zeros(fan_out, name + '.bias'))

    @property
    def in_features(self):
        return self.weight.rows

    @property
    def out_features(self):
        return self.weight.cols

    def __call__(self, x):
        return add(matmul(x, self.weight), self.bias)

    def parameters(self):
        return [self.weight, self.bias]


class LayerNorm(object):

    def __init__(self, gain, bias):
        self.gain = gain
        self.bias = bias

    @classmethod
    def create(cls, width, name):
        return cls(_ones(width, name + '.gain'), _zeros(width, name + '.bias'))

    def __call__(self, x):
        return layer_norm(x, self.gain, self.bias)

    def parameters(self):
        return [self.gain, self.bias]


class HAParams(object):
    """Weights and switches of one HyperAggregation.

    :param Matrix W_A: ``h x h`` first hypernetwork layer.
    :param Matrix W_B: ``h x m`` second hypernetwork layer.
    :param bool pre_activation: GeLU on the aggregation input.
    :param LayerNorm pre_norm: Layer norm before the hypernetwork, or None.
    :param float pre_dropout: Dropout before the hypernetwork.
    :param LayerNorm post_norm: Layer norm on the output, or None.
    :param float post_dropout: Dropout on the output.
    :param float mixing_dropout: Dropout on the target network input.
    """

    def __init__(self, W_A, W_B, pre_activation=True, pre_norm=None,
                 pre_dropout=0.0, post_norm=None, post_dropout=0.0,
                 mixing_dropout=0.0):
        if W_A.rows != W_A.cols:
            raise DimensionError('W_A must be square, got {0}x{1}'.format(
                W_A.rows, W_A.cols))
        if W_B.rows != W_A.cols:
            raise DimensionError.mismatch('HAParams', W_A.shape, W_B.shape)
        self.W_A = W_A
        self.W_B = W_B
        self.pre_activation = pre_activation
        self.pre_norm = pre_norm
        self.pre_dropout = pre_dropout
        self.post_norm = post_norm
        self.post_dropout = post_dropout
        self.mixing_dropout = mixing_dropout

    @property
    def hidden(self):
        return self.W_A.rows

    @property
    def mixing(self):
        return self.W_B.cols

    @property
    def hypernetwork_size(self):
        """Trainable weights of the hypernetwork, ``h*h + h*m``."""
        return self.W_A.size + self.W_B.size

    def parameters(self):
        params = [self.W_A, self.W_B]
        for norm in (self.pre_norm, self.post_norm):
            if norm is not None:
                params.extend(norm.parameters())
        return params


class BlockParams(object):
    """``ff_in -> HA -> readout -> [concat root] -> [gelu] -> ff_out``.

    :param float dropout: Dropout applied to the block input.
    :param bool post_activation: GeLU before ``ff_out``; together with the
        HA post norm and post dropout it forms the ``trans_output`` bundle.
    """

    def __init__(self, ff_in, ha, ff_out, root_connection=True,
                 residual=False, readout=cfg.ROOT, dropout=0.0,
                 post_activation=True):
        width = 2 * ha.hidden if root_connection else ha.hidden
        if ff_out.in_features != width:
            raise DimensionError('ff_out expects {0} inputs, got {1}'.format(
                width, ff_out.in_features))
        if ff_in.out_features != ha.hidden:
            raise DimensionError.mismatch('BlockParams', ff_in.weight.shape,
                                          ha.W_A.shape)
        self.ff_in = ff_in
        self.ha = ha
        self.ff_out = ff_out
        self.root_connection = root_connection
        self.residual = residual
        self.readout = readout
        self.dropout = dropout
        self.post_activation = post_activation

    def parameters(self):
        return (self.ff_in.parameters() + self.ha.parameters() +
                self.ff_out.parameters())


class ModelParams(object):
    """All parameters of one model.

    GHC and GHM keep a list of :class:`BlockParams` in ``blocks``; GCN and
    MLP keep their hidden :class:`Linear` layers in ``layers``. Every
    architecture ends in the linear ``head``.
    """

    def __init__(self, config, in_features, num_outputs, blocks=(),
                 layers=(), head=None):
        self.config = config
        self.in_features = in_features
        self.num_outputs = num_outputs
        self.blocks = list(blocks)
        self.layers = list(layers)
        self.head = head

    def named_parameters(self):
        named = []
        for i, block in enumerate(self.blocks):
            prefix = 'block{0}.'.format(i)
            named.append((prefix + 'ff_in.weight', block.ff_in.weight))
            named.append((prefix + 'ff_in.bias', block.ff_in.bias))
            named.append((prefix + 'ha.W_A', block.ha.W_A))
            named.append((prefix + 'ha.W_B', block.ha.W_B))
            if block.ha.pre_norm is not None:
                named.append((prefix + 'ha.pre_norm.gain',
                              block.ha.pre_norm.gain))
                named.append((prefix + 'ha.pre_norm.bias',
                              block.ha.pre_norm.bias))
            if block.ha.post_norm is not None:
                named.append((prefix + 'ha.post_norm.gain',
                              block.ha.post_norm.gain))
                named.append((prefix + 'ha.post_norm.bias',
                              block.ha.post_norm.bias))
            named.append((prefix + 'ff_out.weight', block.ff_out.weight))
            named.append((prefix + 'ff_out.bias', block.ff_out.bias))
        for i, layer in enumerate(self.layers):
            named.append(('layer{0}.weight'.format(i), layer.weight))
            named.append(('layer{0}.bias'.format(i), layer.bias))
        named.append(('head.weight', self.head.weight))
        named.append(('head.bias', self.head.bias))
        return named

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def count(self):
        return sum(p.size for p in self.parameters())

    def state(self):
        """Detached copies of every parameter array."""
        return [p.data.copy() for p in self.parameters()]

    def load_state(self, arrays):
        params = self.parameters()
        if len(arrays) != len(params):
            raise DimensionError('state holds {0} arrays for {1} parameters'
                                 .format(len(arrays), len(params)))
        for param, array in zip(params, arrays):
            if array.shape != param.shape:
                raise DimensionError.mismatch('load_state', param.shape,
                                              array.shape)
            param.data[...] = array


def _make_ha(config, rng, prefix):
    h, m = config.hidden, config.mixing
    return HAParams(
        glorot(h, h, rng, prefix + 'ha.W_A'),
        glorot(h, m, rng, prefix + 'ha.W_B'),
        pre_activation=config.pre_activation,
        pre_norm=(LayerNorm.create(h, prefix + 'ha.pre_norm')
                  if config.trans_input else None),
        pre_dropout=config.model_dropout if config.trans_input else 0.0,
        post_norm=(LayerNorm.create(h, prefix + 'ha.post_norm')
                   if config.trans_output else None),
        post_dropout=config.model_dropout if config.trans_output else 0.0,
        mixing_dropout=config.mixing_dropout)


def init_params(config, in_features, num_outputs, rng):
    """Freshly initialized :class:`ModelParams` for ``config``.

    Weights are Glorot uniform, biases zero, layer norms the identity.

    :param int in_features: Input feature width.
    :param int num_outputs: Classes, or 1 for regression.
    :param rng: :class:`numpy.random.Generator` of the init stream.
    """
    h = config.hidden
    blocks, layers = [], []
    width = in_features
    for i in range(config.depth):
        prefix = 'block{0}.'.format(i)
        if config.arch in (cfg.GHC, cfg.GHM):
            out_in = 2 * h if config.root_connection else h
            blocks.append(BlockParams(
                Linear.create(width, h, rng, prefix + 'ff_in'),
                _make_ha(config, rng, prefix),
                Linear.create(out_in, h, rng, prefix + 'ff_out'),
                root_connection=config.root_connection,
                residual=config.residual,
                readout=config.readout,
                dropout=config.model_dropout,
                post_activation=config.trans_output))
        else:
            layers.append(Linear.create(width, h, rng,
                                        'layer{0}'.format(i)))
        width = h
    head = Linear.create(width, num_outputs, rng, 'head')
    params = ModelParams(config, in_features, num_outputs, blocks, layers,
                         head)
    logger.debug('initialized %s with %d parameters', config.arch,
                 params.count())
    return params


def aggregate_segments(xn, ha, segments, training, rng):
    """HyperAggregation of every segment of the stacked rows ``xn``."""
    if xn.cols != ha.hidden:
        raise DimensionError.mismatch('hyper_aggregate', xn.shape,
                                      ha.W_A.shape)
    x = gelu(xn) if ha.pre_activation else xn
    if ha.pre_norm is not None:
        x = ha.pre_norm(x)
    x = dropout(x, ha.pre_dropout, training, rng)
    w_tar = matmul(gelu(matmul(x, ha.W_A)), ha.W_B)
    mixed = dropout(x, ha.mixing_dropout, training, rng)
    y = gelu(segment_outer(mixed, w_tar, segments))
    out = segment_expand(w_tar, y, segments)
    if ha.post_norm is not None:
        out = ha.post_norm(out)
    return dropout(out, ha.post_dropout, training, rng)


def hyper_aggregate(Xn, params, training=False, rng=None):
    """HyperAggregation of one neighborhood, an ``n x h`` matrix."""
    return aggregate_segments(Xn, params, Segments([Xn.rows]), training, rng)


def _close_block(root, aggregated, block, block_input):
    if block.root_connection:
        aggregated = concat_cols(root, aggregated)
    if block.post_activation:
        aggregated = gelu(aggregated)
    out = block.ff_out(aggregated)
    if block.residual and block_input.shape == out.shape:
        out = add(out, block_input)
    return out


def ghc_block(X, g, params, training=False, rng=None):
    """One GraphHyperConv block over the 1-hop neighborhoods of ``g``."""
    if X.rows != g.num_vertices:
        raise DimensionError('ghc_block: {0} rows for {1} vertices'.format(
            X.rows, g.num_vertices))
    index = one_hop_index(g)
    h = params.ff_in(dropout(X, params.dropout, training, rng))
    aggregated = aggregate_segments(row_select(h, index.members), params.ha,
                                    index.segments, training, rng)
    if params.readout == cfg.MEAN:
        reduced = spmm(index.mean_matrix(), aggregated)
    else:
        reduced = row_select(aggregated, index.root_rows)
    return _close_block(h, reduced, params, X)


def ghm_block(Xn, params, training=False, rng=None, segments=None):
    """One GraphHyperMixer block; each segment is mixed as a whole.

    :param segments: Layout of several stacked subgraphs; by default ``Xn``
        is a single subgraph.
    """
    if segments is None:
        segments = Segments([Xn.rows])
    h = params.ff_in(dropout(Xn, params.dropout, training, rng))
    aggregated = aggregate_segments(h, params.ha, segments, training, rng)
    return _close_block(h, aggregated, params, Xn)


def gcn_layer(X, g, W, bias):
    """``D^-1/2 A D^-1/2 . X . W + bias``; ``g`` must carry self-loops."""
    return add(matmul(spmm(gcn_adjacency(g), X), W), bias)


def mlp_forward(X, layers, training=False, rng=None, p=0.0,
                activate_last=False):
    """Linear layers with GeLU and dropout ``p`` between them.

    The last layer stays linear unless ``activate_last`` is set, as for the
    hidden stack of the MLP baseline whose head follows separately.
    """
    x = X
    for i, layer in enumerate(layers):
        if i:
            x = dropout(gelu(x), p, training, rng)
        x = layer(x)
    if activate_last and layers:
        x = gelu(x)
    return x


def pooling_matrix(graph_ids):
    """Sparse ``num_graphs x |V|`` matrix averaging each graph's rows."""
    graph_ids = np.asarray(graph_ids, dtype=np.int64).reshape(-1)
    if graph_ids.size == 0:
        raise DataError('graph readout needs at least one vertex')
    sizes = np.bincount(graph_ids)
    if np.any(sizes == 0):
        raise DataError('graph {0} has no vertices'.format(
            int(np.flatnonzero(sizes == 0)[0])))
    weights = 1.0 / sizes[graph_ids]
    return sparse.csr_matrix(
        (weights, (graph_ids, np.arange(graph_ids.size))),
        shape=(sizes.size, graph_ids.size))


def graph_readout(vertex_embeddings, graph_ids):
    """Mean of every member graph's vertex rows."""
    if vertex_embeddings.rows != len(graph_ids):
        raise DimensionError('{0} graph ids for {1} rows'.format(
            len(graph_ids), vertex_embeddings.rows))
    return spmm(pooling_matrix(graph_ids), vertex_embeddings)


def prepare_graph(g, config):
    """Apply the structural preprocessing switches of ``config``."""
    if config.undirected:
        g = make_undirected(g)
    if config.self_loops:
        g = add_self_loops(g)
    return g


def input_features(g, config):
    """Vertex features, L1 row-normalized when ``normalize_input`` is set."""
    if not config.normalize_input:
        return g.features
    normalized = g._cache.get('normalized')
    if normalized is None:
        data = g.features.data
        norms = np.abs(data).sum(axis=1, keepdims=True)
        norms[norms == 0.0] = 1.0
        normalized = g._cache['normalized'] = Matrix(data / norms)
    return normalized


def _head(emb, g, config, params):
    if config.is_graph_task:
        if g.graph_ids is None:
            raise DataError('{0} needs a graph-level dataset'.format(
                config.task))
        emb = graph_readout(emb, g.graph_ids)
    return params.head(emb)


def forward_ghc(g, config, params, training=False, rng=None):
    """GHC logits, one row per vertex (or per graph for graph tasks)."""
    x = dropout(input_features(g, config), config.input_dropout, training,
                rng)
    for block in params.blocks:
        x = ghc_block(x, g, block, training, rng)
    return _head(x, g, config, params)


def sample_neighborhoods(g, config, batch, rng):
    return [sample_khop(g, v, config.k_hop, config.subgraph_cap, rng)
            for v in batch]


def forward_ghm(g, config, params, batch=None, training=False, rng=None,
                samples=None, sampling_rng=None):
    """GHM logits, one row per vertex of ``batch``.

    Every batch vertex gets a k-hop subgraph (``samples`` when given, else
    drawn from ``sampling_rng``); the blocks run on all subgraphs at once and
    the root rows feed the head. Graph tasks always use every vertex.
    """
    if batch is None or config.is_graph_task:
        batch = np.arange(g.num_vertices)
    if samples is None:
        samples = sample_neighborhoods(g, config, batch,
                                       sampling_rng if sampling_rng is not None
                                       else rng)
    if len(samples) != len(batch):
        raise DimensionError('{0} samples for {1} batch vertices'.format(
            len(samples), len(batch)))
    segments = Segments([len(n) for n in samples])
    members = (np.concatenate([n.members for n in samples]) if samples
               else np.zeros(0, dtype=np.int64))
    x = row_select(input_features(g, config), members)
    x = dropout(x, config.input_dropout, training, rng)
    for block in params.blocks:
        x = ghm_block(x, block, training, rng, segments)
    roots = segments.offsets[:-1] + np.array(
        [n.root_position for n in samples], dtype=np.intp)
    return _head(row_select(x, roots), g, config, params)


def forward_gcn(g, config, params, training=False, rng=None):
    x = dropout(input_features(g, config), config.input_dropout, training,
                rng)
    for i, layer in enumerate(params.layers):
        if i:
            x = dropout(x, config.model_dropout, training, rng)
        x = gelu(gcn_layer(x, g, layer.weight, layer.bias))
    return _head(x, g, config, params)


def forward_mlp(g, config, params, training=False, rng=None):
    x = dropout(input_features(g, config), config.input_dropout, training,
                rng)
    x = mlp_forward(x, params.layers, training, rng, p=config.model_dropout,
                    activate_last=True)
    return _head(x, g, config, params)


def forward(g, config, params, training=False, rng=None, batch=None,
            samples=None, sampling_rng=None):
    """Dispatch to the forward pass of ``config.arch``."""
    if config.arch == cfg.GHC:
        return forward_ghc(g, config, params, training, rng)
    if config.arch == cfg.GHM:
        return forward_ghm(g, config, params, batch, training, rng,
                           samples=samples, sampling_rng=sampling_rng)
    if config.arch == cfg.GCN:
        return forward_gcn(g, config, params, training, rng)
    if config.arch == cfg.MLP:
        return forward_mlp(g, config, params, training, rng)
    raise ConfigError('unknown architecture {0!r}'.format(config.arch),
                      key='model.arch')


def _checkpoint_header(params):
    return {'config': params.config.to_dict(),
            'in_features': params.in_features,
            'num_outputs': params.num_outputs}


def save_checkpoint(params, path):
    """Write length-prefixed named little-endian float64 blocks to ``path``."""
    header = json.dumps(_checkpoint_header(params),
                        sort_keys=True).encode('utf-8')
    named = params.named_parameters()
    with io.open(path, 'wb') as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack('<I', len(header)))
        f.write(header)
        f.write(struct.pack('<I', len(named)))
        for name, matrix in named:
            encoded = name.encode('utf-8')
            f.write(struct.pack('<H', len(encoded)))
            f.write(encoded)
            f.write(struct.pack('<II', matrix.rows, matrix.cols))
            f.write(np.ascontiguousarray(matrix.data, dtype='<f8').tobytes())


class _Reader(object):

    def __init__(self, payload, path):
        self.payload = payload
        self.position = 0
        self.path = path

    def take(self, count):
        end = self.position + count
        if end > len(self.payload):
            raise DataError('checkpoint {0} is truncated'.format(self.path))
        chunk = self.payload[self.position:end]
        self.position = end
        return chunk

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path, config=None):
    """Read a checkpoint back into :class:`ModelParams`.

    :param ModelConfig config: When given, the stored config must equal it.
    :raises ConfigError: On a config mismatch.
    """
    try:
        with io.open(path, 'rb') as f:
            payload = f.read()
    except (IOError, OSError) as e:
        raise DataError('cannot read checkpoint {0}: {1}'.format(path, e))
    reader = _Reader(payload, path)
    if reader.take(len(CHECKPOINT_MAGIC)) != CHECKPOINT_MAGIC:
        raise DataError('{0} is not a hyperagg checkpoint'.format(path))
    header_length, = reader.unpack('<I')
    header = json.loads(reader.take(header_length).decode('utf-8'))
    stored = cfg.ModelConfig(**header['config'])
    if config is not None and stored != config:
        raise ConfigError('checkpoint {0} was saved for a different model '
                          'config'.format(path))
    rng = np.random.default_rng(0)
    params = init_params(stored, header['in_features'],
                         header['num_outputs'], rng)
    expected = params.named_parameters()
    count, = reader.unpack('<I')
    if count != len(expected):
        raise ConfigError('checkpoint holds {0} blocks, config needs {1}'
                          .format(count, len(expected)))
    for name, matrix in expected:
        name_length, = reader.unpack('<H')
        stored_name = reader.take(name_length).decode('utf-8')
        rows, cols = reader.unpack('<II')
        if stored_name != name or (rows, cols) != matrix.shape:
            raise ConfigError('checkpoint block {0} ({1}x{2}) does not match '
                              '{3} {4}'.format(stored_name, rows, cols, name,
                                               matrix.shape))
        data = np.frombuffer(reader.take(8 * rows * cols), dtype='<f8')
        matrix.data[...] = data.reshape(rows, cols)
    return params
