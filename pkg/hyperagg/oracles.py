"""Brute-force reference implementations.

Nothing here shares code with the production paths: matrices are lists of
lists, products are explicit loops and neighborhoods come from dense
adjacency matrices. Agreement with :mod:`hyperagg.models` is therefore
evidence rather than tautology. Everything is sized for tests: quadratic or
cubic loops, factorial enumerations.
"""
import itertools
import math

import numpy as np

from hyperagg.exceptions import ConfigError, DimensionError, NumericalError

MAX_PERMUTATION_SIZE = 6
MAX_ORACLE_VERTICES = 64


def fd_gradient(f, theta, eps=1e-5):
    """Central-difference gradient of the scalar function ``f`` at ``theta``.

    :param f: Maps a 1-D float array to a float.
    :param theta: The point, a 1-D array (not modified).
    :raises NumericalError: If ``f`` returns a non-finite value.
    """
    if not eps > 0.0:
        raise ConfigError('finite-difference step must be > 0, got {0}'
                          .format(eps))
    theta = np.array(theta, dtype=np.float64).reshape(-1)
    grad = np.zeros_like(theta)
    shifted = theta.copy()
    for i in range(theta.shape[0]):
        shifted[i] = theta[i] + eps
        upper = float(f(shifted))
        shifted[i] = theta[i] - eps
        lower = float(f(shifted))
        shifted[i] = theta[i]
        if not (math.isfinite(upper) and math.isfinite(lower)):
            raise NumericalError('function is not finite near coordinate {0}'
                                 .format(i))
        grad[i] = (upper - lower) / (2.0 * eps)
    return grad


def _rows(m):
    if hasattr(m, 'data'):
        m = m.data
    return [[float(x) for x in row] for row in np.asarray(m, dtype=float)]


def dense_matmul(a, b):
    """Triple-loop product of two list-of-lists matrices."""
    inner = len(b)
    if a and len(a[0]) != inner:
        raise DimensionError('dense_matmul: {0}x{1} . {2}x?'.format(
            len(a), len(a[0]), inner))
    cols = len(b[0]) if b else 0
    out = []
    for i in range(len(a)):
        row = []
        for j in range(cols):
            total = 0.0
            for k in range(inner):
                total += a[i][k] * b[k][j]
            row.append(total)
        out.append(row)
    return out


def dense_transpose(a):
    if not a:
        return []
    return [[a[i][j] for i in range(len(a))] for j in range(len(a[0]))]


def dense_gelu(a):
    return [[x * 0.5 * (1.0 + math.erf(x / math.sqrt(2.0))) for x in row]
            for row in a]


def dense_ha_forward(Xn, W_A, W_B, pre_activation=False):
    """HyperAggregation written out literally, without norms or dropout.

    ``W_tar = gelu(Xn W_A) W_B`` and ``out = (gelu(Xn^T W_tar) W_tar^T)^T``.
    :returns: ``n x h`` numpy array.
    """
    x = _rows(Xn)
    if pre_activation:
        x = dense_gelu(x)
    w_tar = dense_matmul(dense_gelu(dense_matmul(x, _rows(W_A))), _rows(W_B))
    mixed = dense_gelu(dense_matmul(dense_transpose(x), w_tar))
    out = dense_transpose(dense_matmul(mixed, dense_transpose(w_tar)))
    return np.array(out, dtype=float).reshape(len(x), -1)


def enumerate_permutations(n):
    """All ``n!`` orderings of ``range(n)`` as tuples, for ``n <= 6``."""
    if n < 0 or n > MAX_PERMUTATION_SIZE:
        raise ConfigError('permutation enumeration supports 0 <= n <= {0}, '
                          'got {1}'.format(MAX_PERMUTATION_SIZE, n))
    return list(itertools.permutations(range(n)))


class DenseOracleGraph(object):
    """A small graph held as a dense ``|V| x |V|`` adjacency of floats.

    :param adjacency: Square matrix; nonzero ``[u][v]`` is an edge u -> v.
    :param features: Optional ``|V| x F`` features.
    """

    def __init__(self, adjacency, features=None):
        adjacency = _rows(adjacency)
        n = len(adjacency)
        if n > MAX_ORACLE_VERTICES:
            raise ConfigError('dense oracle graphs hold at most {0} vertices, '
                              'got {1}'.format(MAX_ORACLE_VERTICES, n))
        for row in adjacency:
            if len(row) != n:
                raise DimensionError('adjacency must be square')
        self.adjacency = adjacency
        self.features = None if features is None else _rows(features)

    @classmethod
    def from_edges(cls, n, edges, features=None):
        adjacency = [[0.0] * n for _ in range(n)]
        for u, v in edges:
            adjacency[u][v] = 1.0
        return cls(adjacency, features)

    @property
    def num_vertices(self):
        return len(self.adjacency)

    def has_edge(self, u, v):
        return self.adjacency[u][v] != 0.0

    def neighbors(self, v):
        """Sorted out-neighbors of ``v``."""
        return [u for u in range(self.num_vertices) if self.has_edge(v, u)]

    def one_hop(self, v):
        """Out-neighbors, with ``v`` appended when it has no self-loop."""
        members = self.neighbors(v)
        if v not in members:
            members.append(v)
        return members

    def hop_distances(self, v):
        """Hop count from ``v`` to every vertex, None when unreachable."""
        distance = [None] * self.num_vertices
        distance[v] = 0
        frontier = [v]
        while frontier:
            following = []
            for u in frontier:
                for w in self.neighbors(u):
                    if distance[w] is None:
                        distance[w] = distance[u] + 1
                        following.append(w)
            frontier = following
        return distance

    def khop(self, v, k):
        """Every vertex within ``k`` hops of ``v``, including ``v``."""
        return set(u for u, d in enumerate(self.hop_distances(v))
                   if d is not None and d <= k)

    def symmetrize(self):
        n = self.num_vertices
        return DenseOracleGraph(
            [[1.0 if self.has_edge(u, v) or self.has_edge(v, u) else 0.0
              for v in range(n)] for u in range(n)], self.features)

    def with_self_loops(self):
        n = self.num_vertices
        return DenseOracleGraph(
            [[1.0 if u == v or self.has_edge(u, v) else 0.0
              for v in range(n)] for u in range(n)], self.features)

    def gcn_normalized(self):
        """``D^-1/2 A D^-1/2`` computed entry by entry."""
        n = self.num_vertices
        degree = [sum(1.0 for v in range(n) if self.has_edge(u, v))
                  for u in range(n)]
        out = [[0.0] * n for _ in range(n)]
        for u in range(n):
            for v in range(n):
                if self.has_edge(u, v):
                    out[u][v] = 1.0 / math.sqrt(degree[u] * degree[v])
        return out

    def gcn_forward(self, W, bias=None, features=None):
        """One dense GCN propagation ``A_hat X W + bias``."""
        x = self.features if features is None else _rows(features)
        out = dense_matmul(dense_matmul(self.gcn_normalized(), x), _rows(W))
        if bias is not None:
            b = _rows(bias)[0]
            out = [[value + b[j] for j, value in enumerate(row)]
                   for row in out]
        return np.array(out, dtype=float)
