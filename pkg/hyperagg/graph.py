"""Graph storage and structural transforms.

A :class:`Graph` keeps its adjacency in canonical CSR form: the targets of
every row are sorted ascending and duplicate edges are removed. Graphs are
immutable; every transform returns a fresh :class:`Graph`.
"""
import logging

import numpy as np
from scipy import sparse

from hyperagg.exceptions import ConfigError, DataError
from hyperagg.tensor import Matrix, Segments

logger = logging.getLogger(__name__)

STRICT = 'strict'
PRODUCTION = 'production'

#: Share of the test vertices that become unlabeled-but-visible vertices in
#: the production inductive split.
OBSERVED_FRACTION = 0.8

MASK_NAMES = ('train', 'val', 'test', 'observed')


def _frozen(array, dtype):
    array = np.array(array, dtype=dtype)
    array.setflags(write=False)
    return array


def _mask(mask, num_vertices, name):
    if mask is None:
        return _frozen(np.zeros(num_vertices, dtype=bool), bool)
    mask = _frozen(mask, bool).reshape(-1)
    if mask.shape[0] != num_vertices:
        raise DataError('{0} mask has {1} entries for {2} vertices'.format(
            name, mask.shape[0], num_vertices))
    return mask


class Graph(object):
    """A graph with vertex features, labels and split masks.

    Use :func:`from_edges` to build one from an edge list.

    :param int num_vertices: Vertex count.
    :param csr_offsets: ``num_vertices + 1`` nondecreasing row offsets.
    :param csr_targets: Concatenated out-neighbor lists.
    :param features: ``num_vertices x feat_dim`` matrix (or array).
    :param labels: Integer class per vertex (``-1`` when unknown), or floats
        for regression datasets.
    :param int num_classes: Class count; ``None`` for regression.
    :param graph_ids: Optional member-graph id per vertex for graph-level
        datasets.
    :param graph_targets: Optional label/target per member graph.
    :param original_ids: Vertex ids in the graph this one was cut from.
    """

    def __init__(self, num_vertices, csr_offsets, csr_targets, features,
                 labels=None, train_mask=None, val_mask=None, test_mask=None,
                 observed_mask=None, num_classes=None, graph_ids=None,
                 graph_targets=None, original_ids=None, name=None):
        self.num_vertices = int(num_vertices)
        self.csr_offsets = _frozen(csr_offsets, np.int64).reshape(-1)
        self.csr_targets = _frozen(csr_targets, np.int64).reshape(-1)
        self._check_csr()
        if isinstance(features, Matrix):
            features = features.data
        features = np.array(features, dtype=np.float64)
        if features.ndim == 1:
            features = features.reshape(-1, 1)
        if features.shape[0] != self.num_vertices:
            raise DataError('{0} feature rows for {1} vertices'.format(
                features.shape[0], self.num_vertices))
        self.features = Matrix(features, name='features')
        self.features.data.setflags(write=False)
        self.num_classes = num_classes
        if labels is None:
            labels = np.full(self.num_vertices, -1)
        label_dtype = np.int64 if num_classes is not None else np.float64
        self.labels = _frozen(labels, label_dtype).reshape(-1)
        if self.labels.shape[0] != self.num_vertices:
            raise DataError('{0} labels for {1} vertices'.format(
                self.labels.shape[0], self.num_vertices))
        self.train_mask = _mask(train_mask, self.num_vertices, 'train')
        self.val_mask = _mask(val_mask, self.num_vertices, 'val')
        self.test_mask = _mask(test_mask, self.num_vertices, 'test')
        self.observed_mask = _mask(observed_mask, self.num_vertices,
                                   'observed')
        if np.any(self.train_mask & self.val_mask) or \
                np.any(self.train_mask & self.test_mask) or \
                np.any(self.val_mask & self.test_mask):
            raise DataError('train, val and test masks must be disjoint')
        self.graph_ids = None
        self.graph_targets = None
        if graph_ids is not None:
            self.graph_ids = _frozen(graph_ids, np.int64).reshape(-1)
            self._check_graph_ids()
            if graph_targets is not None:
                target_dtype = (np.int64 if num_classes is not None
                                else np.float64)
                self.graph_targets = _frozen(graph_targets,
                                             target_dtype).reshape(-1)
        if original_ids is None:
            original_ids = np.arange(self.num_vertices)
        self.original_ids = _frozen(original_ids, np.int64).reshape(-1)
        self.name = name
        self._cache = {}

    def _check_csr(self):
        offsets, targets = self.csr_offsets, self.csr_targets
        if offsets.shape[0] != self.num_vertices + 1:
            raise DataError('csr_offsets needs {0} entries, got {1}'.format(
                self.num_vertices + 1, offsets.shape[0]))
        if offsets[0] != 0 or offsets[-1] != targets.shape[0]:
            raise DataError('csr_offsets must span [0, {0}]'.format(
                targets.shape[0]))
        if np.any(np.diff(offsets) < 0):
            raise DataError('csr_offsets must be nondecreasing')
        if targets.size and (targets.min() < 0 or
                             targets.max() >= self.num_vertices):
            raise DataError('csr_targets must lie in [0, {0})'.format(
                self.num_vertices))

    def _check_graph_ids(self):
        if self.graph_ids.shape[0] != self.num_vertices:
            raise DataError('{0} graph ids for {1} vertices'.format(
                self.graph_ids.shape[0], self.num_vertices))
        if self.graph_ids.size and self.graph_ids.min() < 0:
            raise DataError('graph ids must be >= 0')
        src, dst = self.edges()
        if np.any(self.graph_ids[src] != self.graph_ids[dst]):
            raise DataError('edges must not connect distinct graphs')

    @property
    def num_edges(self):
        return int(self.csr_targets.shape[0])

    @property
    def feat_dim(self):
        return self.features.cols

    @property
    def is_regression(self):
        return self.num_classes is None

    @property
    def is_graph_level(self):
        return self.graph_ids is not None

    @property
    def num_graphs(self):
        if self.graph_ids is None:
            return 0
        return int(self.graph_ids.max()) + 1 if self.graph_ids.size else 0

    @property
    def masks(self):
        return {'train': self.train_mask, 'val': self.val_mask,
                'test': self.test_mask, 'observed': self.observed_mask}

    def degrees(self):
        return np.diff(self.csr_offsets)

    def neighbors(self, v):
        return self.csr_targets[self.csr_offsets[v]:self.csr_offsets[v + 1]]

    def edges(self):
        """``(src, dst)`` arrays in canonical order."""
        src = np.repeat(np.arange(self.num_vertices), self.degrees())
        return src, np.array(self.csr_targets)

    def adjacency(self):
        """The adjacency as a :class:`scipy.sparse.csr_matrix` of ones."""
        data = np.ones(self.num_edges)
        return sparse.csr_matrix(
            (data, self.csr_targets, self.csr_offsets),
            shape=(self.num_vertices, self.num_vertices))

    def replace(self, **changes):
        """A new :class:`Graph` with the given constructor fields changed."""
        fields = dict(
            num_vertices=self.num_vertices, csr_offsets=self.csr_offsets,
            csr_targets=self.csr_targets, features=self.features.data,
            labels=self.labels, train_mask=self.train_mask,
            val_mask=self.val_mask, test_mask=self.test_mask,
            observed_mask=self.observed_mask, num_classes=self.num_classes,
            graph_ids=self.graph_ids, graph_targets=self.graph_targets,
            original_ids=self.original_ids, name=self.name)
        fields.update(changes)
        return Graph(**fields)

    def __repr__(self):
        return '<Graph {0}: {1} vertices, {2} edges>'.format(
            self.name or '?', self.num_vertices, self.num_edges)


def from_edges(num_vertices, src, dst, **kwargs):
    """Build a :class:`Graph` from directed edges ``src[i] -> dst[i]``.

    Duplicate edges are dropped and every row is sorted ascending. Remaining
    keyword arguments go to the :class:`Graph` constructor.
    """
    src = np.asarray(src, dtype=np.int64).reshape(-1)
    dst = np.asarray(dst, dtype=np.int64).reshape(-1)
    if src.shape != dst.shape:
        raise DataError('edge endpoint arrays differ in length')
    if src.size and (min(src.min(), dst.min()) < 0 or
                     max(src.max(), dst.max()) >= num_vertices):
        raise DataError('edge endpoints must lie in [0, {0})'.format(
            num_vertices))
    if src.size:
        keys = np.unique(src * num_vertices + dst)
        src, dst = keys // num_vertices, keys % num_vertices
    counts = np.bincount(src, minlength=num_vertices)
    offsets = np.concatenate(([0], np.cumsum(counts)))
    return Graph(num_vertices, offsets, dst, **kwargs)


def _with_edges(g, src, dst):
    return from_edges(
        g.num_vertices, src, dst, features=g.features.data, labels=g.labels,
        train_mask=g.train_mask, val_mask=g.val_mask, test_mask=g.test_mask,
        observed_mask=g.observed_mask, num_classes=g.num_classes,
        graph_ids=g.graph_ids, graph_targets=g.graph_targets,
        original_ids=g.original_ids, name=g.name)


def make_undirected(g):
    """Close the edge set under reversal."""
    src, dst = g.edges()
    return _with_edges(g, np.concatenate((src, dst)),
                       np.concatenate((dst, src)))


def remove_self_loops(g):
    src, dst = g.edges()
    keep = src != dst
    return _with_edges(g, src[keep], dst[keep])


def add_self_loops(g):
    """Give every vertex exactly one self-edge."""
    src, dst = g.edges()
    loops = np.arange(g.num_vertices)
    return _with_edges(g, np.concatenate((src, loops)),
                       np.concatenate((dst, loops)))


class Neighborhood(object):
    """The vertices aggregated together for one root vertex.

    :param int root: The target vertex.
    :param members: Vertex ids; ``members[root_position] == root``.
    """

    def __init__(self, root, members, root_position):
        self.root = int(root)
        self.members = np.asarray(members, dtype=np.int64)
        self.root_position = int(root_position)

    def __len__(self):
        return int(self.members.shape[0])

    def __repr__(self):
        return '<Neighborhood of {0}: {1}>'.format(
            self.root, self.members.tolist())


def neighborhood_1hop(g, v):
    """Out-neighbors of ``v``; ``v`` is appended when it has no self-loop.

    The fallback guarantees that an isolated vertex still aggregates itself.
    """
    members = g.neighbors(v)
    hits = np.flatnonzero(members == v)
    if hits.size:
        return Neighborhood(v, members, hits[0])
    return Neighborhood(v, np.append(members, v), members.shape[0])


def sample_khop(g, v, k, cap, rng):
    """Breadth-first ``k``-hop neighborhood of ``v`` holding at most ``cap``.

    Hops are added whole while they fit; the first hop that would overflow
    ``cap`` is sampled uniformly without replacement to fill it exactly. The
    root is always kept at position 0.

    :param int cap: Member limit, ``None`` for unbounded.
    :param rng: :class:`numpy.random.Generator`, only drawn from when a hop
        overflows.
    """
    if k < 1:
        raise ConfigError('must be >= 1, got {0}'.format(k), key='k_hop')
    if cap is not None and cap < 1:
        raise ConfigError('must be >= 1, got {0}'.format(cap),
                          key='subgraph_cap')
    members = [int(v)]
    seen = set(members)
    frontier = members
    for _ in range(k):
        if cap is not None and len(members) >= cap:
            break
        fresh = []
        for u in frontier:
            for w in g.neighbors(u):
                w = int(w)
                if w not in seen:
                    seen.add(w)
                    fresh.append(w)
        if not fresh:
            break
        if cap is not None and len(members) + len(fresh) > cap:
            room = cap - len(members)
            picks = np.sort(rng.choice(len(fresh), size=room, replace=False))
            members.extend(fresh[i] for i in picks)
            break
        members.extend(fresh)
        frontier = fresh
    return Neighborhood(v, members, 0)


class NeighborhoodIndex(object):
    """All 1-hop neighborhoods of a graph, stacked for batched aggregation.

    :ivar members: Concatenated member lists, vertex by vertex.
    :ivar segments: :class:`hyperagg.tensor.Segments` over ``members``.
    :ivar root_rows: Row of each vertex's own entry within ``members``.
    """

    def __init__(self, neighborhoods):
        sizes = [len(n) for n in neighborhoods]
        self.segments = Segments(sizes)
        if neighborhoods:
            self.members = np.concatenate([n.members for n in neighborhoods])
        else:
            self.members = np.zeros(0, dtype=np.int64)
        self.root_rows = self.segments.offsets[:-1] + np.array(
            [n.root_position for n in neighborhoods], dtype=np.intp)
        self._mean = None

    def mean_matrix(self):
        if self._mean is None:
            self._mean = self.segments.mean_matrix()
        return self._mean


def one_hop_index(g):
    """The (cached) :class:`NeighborhoodIndex` of every vertex of ``g``."""
    index = g._cache.get('one_hop')
    if index is None:
        index = NeighborhoodIndex(
            [neighborhood_1hop(g, v) for v in range(g.num_vertices)])
        g._cache['one_hop'] = index
    return index


def gcn_adjacency(g):
    """Symmetric-normalized ``D^-1/2 A D^-1/2`` as a sparse matrix (cached).

    Requires every vertex to have at least one edge, normally its self-loop.
    """
    normalized = g._cache.get('gcn')
    if normalized is None:
        degrees = g.degrees().astype(np.float64)
        if np.any(degrees == 0):
            raise DataError('GCN propagation needs self-loops: vertex {0} has '
                            'no edges, apply add_self_loops first'.format(
                                int(np.flatnonzero(degrees == 0)[0])))
        inv_sqrt = 1.0 / np.sqrt(degrees)
        src, dst = g.edges()
        weights = inv_sqrt[src] * inv_sqrt[dst]
        normalized = sparse.csr_matrix(
            (weights, g.csr_targets, g.csr_offsets),
            shape=(g.num_vertices, g.num_vertices))
        g._cache['gcn'] = normalized
    return normalized


def induced_subgraph(g, vertices):
    """The subgraph on ``vertices`` with ids remapped to ``0..len-1``.

    The mapping back is kept in ``original_ids``.
    """
    keep = np.unique(np.asarray(vertices, dtype=np.int64))
    remap = np.full(g.num_vertices, -1, dtype=np.int64)
    remap[keep] = np.arange(keep.shape[0])
    src, dst = g.edges()
    inside = (remap[src] >= 0) & (remap[dst] >= 0)
    return from_edges(
        keep.shape[0], remap[src[inside]], remap[dst[inside]],
        features=g.features.data[keep], labels=g.labels[keep],
        train_mask=g.train_mask[keep], val_mask=g.val_mask[keep],
        test_mask=g.test_mask[keep], observed_mask=g.observed_mask[keep],
        num_classes=g.num_classes,
        graph_ids=None if g.graph_ids is None else g.graph_ids[keep],
        graph_targets=g.graph_targets, original_ids=g.original_ids[keep],
        name=g.name)


def inductive_split(g, mode, rng=None):
    """Hide evaluation vertices from training.

    ``strict``: the train graph is the subgraph induced by the training
    vertices. ``production``: the test vertices are shuffled and 80% of them
    become observed (visible, unlabeled) vertices; the train graph is induced
    on train, val and observed vertices, and the evaluation graph's test mask
    keeps only the remaining 20%.

    :returns: ``(train_graph, eval_graph)``; ``eval_graph`` is the full graph.
    """
    if mode == STRICT:
        eval_graph = g
        train_vertices = np.flatnonzero(g.train_mask)
    elif mode == PRODUCTION:
        if rng is None:
            raise ConfigError('the production split needs a random generator')
        test = np.flatnonzero(g.test_mask)
        shuffled = rng.permutation(test)
        observed_count = int(np.floor(OBSERVED_FRACTION * test.shape[0] + 0.5))
        observed = np.zeros(g.num_vertices, dtype=bool)
        observed[shuffled[:observed_count]] = True
        final_test = np.zeros(g.num_vertices, dtype=bool)
        final_test[shuffled[observed_count:]] = True
        eval_graph = g.replace(test_mask=final_test, observed_mask=observed)
        train_vertices = np.flatnonzero(g.train_mask | g.val_mask | observed)
    else:
        raise ConfigError('unknown inductive mode {0!r}'.format(mode),
                          key='setting')
    train_graph = induced_subgraph(eval_graph, train_vertices)
    if train_graph.num_vertices == 0:
        logger.warning('inductive %s split: induced train graph is empty',
                       mode)
    elif train_graph.num_edges == 0:
        logger.warning('inductive %s split: induced train graph has no edges',
                       mode)
    return train_graph, eval_graph


def edge_homophily(g):
    """Fraction of non-loop edges whose endpoints share a label.

    ``nan`` when the graph has no such edges.
    """
    src, dst = g.edges()
    keep = src != dst
    if not np.any(keep):
        return float('nan')
    return float(np.mean(g.labels[src[keep]] == g.labels[dst[keep]]))


def graph_masks(g):
    """Per-graph train/val/test masks of a graph-level dataset.

    A member graph's split is the mask its vertices share.
    """
    if g.graph_ids is None:
        raise DataError('graph masks need graph ids')
    count = g.num_graphs
    masks = {}
    for name in ('train', 'val', 'test'):
        vertex_mask = g.masks[name]
        hits = np.bincount(g.graph_ids, weights=vertex_mask, minlength=count)
        sizes = np.bincount(g.graph_ids, minlength=count)
        if np.any((hits > 0) & (hits < sizes)):
            raise DataError('vertices of one graph disagree on the {0} mask'
                            .format(name))
        masks[name] = (hits > 0) & (sizes > 0)
    return masks
