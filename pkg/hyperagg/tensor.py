"""Dense 64-bit matrices with reverse-mode automatic differentiation.

Every operation in this module returns a fresh :class:`Matrix`. When it is
called while a :class:`Tape` is active and at least one input requires a
gradient, the operation is recorded together with its backward rule. A tape
is rebuilt on every forward pass, so graphs of any shape (one neighborhood
per vertex, resampled every epoch) are supported. ::

    with Tape() as tape:
        loss = sum_all(matmul(x, w))
    backward(tape, loss, params=[w])
    w.grad  # d loss / d w
"""
import contextlib
import logging
import math
import threading

import numpy as np
from scipy import special

from hyperagg.exceptions import (
    ConfigError, DimensionError, NumericalError, SupervisionError)

logger = logging.getLogger(__name__)

#: Variance floor of :func:`layer_norm`.
LAYER_NORM_EPS = 1e-5

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

_local = threading.local()
_backward_hooks = {}

#: Names of the recorded operations, the keys :func:`backward_hook` accepts.
OPERATIONS = frozenset([
    'matmul', 'transpose', 'add', 'sub', 'scale', 'elementwise_mul', 'gelu',
    'sum_all', 'mean_rows', 'concat_cols', 'row_select', 'spmm',
    'layer_norm', 'dropout', 'softmax_cross_entropy', 'mae_loss',
    'segment_outer', 'segment_expand'])


class Matrix(object):
    """A dense ``rows x cols`` matrix of 64-bit floats.

    :param data: Anything :func:`numpy.array` accepts. Scalars become 1x1
        matrices and vectors become single rows. The data is copied.
    :param bool requires_grad: Whether :func:`backward` fills :attr:`grad`.
    :param str name: Optional name, used for parameters and checkpoints.
    """
    __slots__ = ('data', 'grad', 'node_id', 'requires_grad', 'name')

    def __init__(self, data, requires_grad=False, name=None):
        array = np.array(data, dtype=np.float64)
        if array.ndim == 0:
            array = array.reshape(1, 1)
        elif array.ndim == 1:
            array = array.reshape(1, -1)
        elif array.ndim != 2:
            raise DimensionError(
                'matrix data must be at most 2-D, got {0}-D'.format(
                    array.ndim))
        self.data = array
        self.grad = None
        self.node_id = None
        self.requires_grad = requires_grad
        self.name = name

    @classmethod
    def _wrap(cls, array):
        # Adopt an array produced by an operation without copying it.
        matrix = cls.__new__(cls)
        matrix.data = array
        matrix.grad = None
        matrix.node_id = None
        matrix.requires_grad = False
        matrix.name = None
        return matrix

    @classmethod
    def zeros(cls, rows, cols, **kwargs):
        return cls(np.zeros((rows, cols)), **kwargs)

    @classmethod
    def ones(cls, rows, cols, **kwargs):
        return cls(np.ones((rows, cols)), **kwargs)

    @property
    def rows(self):
        return self.data.shape[0]

    @property
    def cols(self):
        return self.data.shape[1]

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def copy(self):
        """A detached copy (no gradient, not on any tape)."""
        return Matrix(self.data, requires_grad=self.requires_grad,
                      name=self.name)

    def zero_grad(self):
        self.grad = None

    def check_finite(self, what=None):
        """Raise :class:`NumericalError` if any entry is NaN or infinite."""
        if not np.all(np.isfinite(self.data)):
            raise NumericalError('{0} contains non-finite values'.format(
                what or self.name or 'matrix'))
        return self

    def tolist(self):
        return self.data.tolist()

    def __repr__(self):
        label = ' {0}'.format(self.name) if self.name else ''
        return '<Matrix{0} {1}x{2}>'.format(label, self.rows, self.cols)


class _Operation(object):
    __slots__ = ('name', 'inputs', 'output', 'backward')

    def __init__(self, name, inputs, output, backward):
        self.name = name
        self.inputs = inputs
        self.output = output
        self.backward = backward


class Tape(object):
    """An ordered record of the operations of one forward pass.

    Use it as a context manager; operations executed inside the ``with``
    block are recorded on it. Tapes belong to the thread that entered them.

    :param bool check_finite: Debug mode, raise :class:`NumericalError` as
        soon as a recorded operation produces a non-finite value.
    """

    def __init__(self, check_finite=False):
        self.nodes = []
        self.operations = []
        self.check_finite = check_finite

    def __enter__(self):
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _tape_stack().pop()
        return False

    def __len__(self):
        return len(self.operations)

    def tracks(self, matrix):
        node_id = matrix.node_id
        return (node_id is not None and node_id < len(self.nodes) and
                self.nodes[node_id] is matrix)

    def watch(self, matrix):
        if not self.tracks(matrix):
            matrix.node_id = len(self.nodes)
            self.nodes.append(matrix)
        return matrix.node_id

    def record(self, name, inputs, output, backward):
        if self.check_finite:
            output.check_finite('output of {0}'.format(name))
        input_ids = tuple(self.watch(m) for m in inputs)
        output_id = self.watch(output)
        self.operations.append(_Operation(name, input_ids, output_id,
                                          backward))


def _tape_stack():
    stack = getattr(_local, 'stack', None)
    if stack is None:
        stack = _local.stack = []
    return stack


def current_tape():
    """The innermost active :class:`Tape` of this thread, or ``None``."""
    stack = _tape_stack()
    return stack[-1] if stack else None


def _record(name, inputs, output, backward):
    tape = current_tape()
    if tape is None or not any(m.requires_grad for m in inputs):
        return output
    output.requires_grad = True
    tape.record(name, inputs, output, backward)
    return output


@contextlib.contextmanager
def backward_hook(op_name, fn):
    """Rewrite the input gradients of every ``op_name`` operation.

    Debug aid: ``fn`` receives the tuple of input gradients and returns the
    tuple to use instead. ``gradcheck --corrupt`` uses it as a negative
    control.
    """
    if op_name not in OPERATIONS:
        raise ConfigError('unknown operation {0!r}, expected one of {1}'
                          .format(op_name, ', '.join(sorted(OPERATIONS))))
    _backward_hooks[op_name] = fn
    try:
        yield
    finally:
        _backward_hooks.pop(op_name, None)


def backward(tape, loss, params=()):
    """Fill ``grad`` of every leaf on ``tape`` with d loss / d leaf.

    Operations are visited once each, in reverse recording order. Leaves the
    loss does not depend on, and any of ``params`` absent from the tape, get
    an all-zero gradient.

    :param Tape tape: The tape the loss was computed on.
    :param Matrix loss: A 1x1 matrix.
    :param params: Parameters that must end up with a gradient buffer.
    """
    if loss.shape != (1, 1):
        raise DimensionError('backward needs a 1x1 loss, got {0}x{1}'.format(
            loss.rows, loss.cols))
    produced = set(op.output for op in tape.operations)
    grads = {}
    if tape.tracks(loss):
        grads[loss.node_id] = np.ones((1, 1))
    for op in reversed(tape.operations):
        grad_out = grads.pop(op.output, None)
        if grad_out is None:
            continue
        input_grads = op.backward(grad_out)
        hook = _backward_hooks.get(op.name)
        if hook is not None:
            input_grads = hook(input_grads)
        for node_id, grad in zip(op.inputs, input_grads):
            if grad is None or not tape.nodes[node_id].requires_grad:
                continue
            if node_id in grads:
                grads[node_id] = grads[node_id] + grad
            else:
                grads[node_id] = grad
    for node_id, node in enumerate(tape.nodes):
        if node_id not in produced and node.requires_grad:
            grad = grads.get(node_id)
            node.grad = np.zeros_like(node.data) if grad is None else grad
    for param in params:
        if not tape.tracks(param):
            param.grad = np.zeros_like(param.data)


def _same_shape(op, a, b):
    if a.shape != b.shape:
        raise DimensionError.mismatch(op, a.shape, b.shape)


def matmul(a, b):
    """Matrix product ``a . b``."""
    if a.cols != b.rows:
        raise DimensionError.mismatch('matmul', a.shape, b.shape)
    a_data, b_data = a.data, b.data
    out = Matrix._wrap(a_data.dot(b_data))

    def grad_fn(g):
        return g.dot(b_data.T), a_data.T.dot(g)
    return _record('matmul', (a, b), out, grad_fn)


def transpose(a):
    out = Matrix._wrap(np.ascontiguousarray(a.data.T))

    def grad_fn(g):
        return (np.ascontiguousarray(g.T),)
    return _record('transpose', (a,), out, grad_fn)


def _broadcast_rows(op, a, b):
    if a.shape == b.shape:
        return False
    if b.rows == 1 and b.cols == a.cols:
        return True
    raise DimensionError.mismatch(op, a.shape, b.shape)


def add(a, b):
    """Elementwise sum; ``b`` may also be a single row added to every row."""
    broadcast = _broadcast_rows('add', a, b)
    out = Matrix._wrap(a.data + b.data)

    def grad_fn(g):
        return g, (g.sum(axis=0, keepdims=True) if broadcast else g)
    return _record('add', (a, b), out, grad_fn)


def sub(a, b):
    """Elementwise difference; ``b`` may be a single broadcast row."""
    broadcast = _broadcast_rows('sub', a, b)
    out = Matrix._wrap(a.data - b.data)

    def grad_fn(g):
        return g, -(g.sum(axis=0, keepdims=True) if broadcast else g)
    return _record('sub', (a, b), out, grad_fn)


def scale(a, factor):
    factor = float(factor)
    out = Matrix._wrap(a.data * factor)

    def grad_fn(g):
        return (g * factor,)
    return _record('scale', (a,), out, grad_fn)


def elementwise_mul(a, b):
    _same_shape('elementwise_mul', a, b)
    a_data, b_data = a.data, b.data
    out = Matrix._wrap(a_data * b_data)

    def grad_fn(g):
        return g * b_data, g * a_data
    return _record('elementwise_mul', (a, b), out, grad_fn)


def gelu(a):
    """Exact GeLU, ``x * Phi(x)`` with Phi from the error function."""
    x = a.data
    cdf = 0.5 * (1.0 + special.erf(x / _SQRT2))
    out = Matrix._wrap(x * cdf)

    def grad_fn(g):
        pdf = np.exp(-0.5 * x * x) * _INV_SQRT_2PI
        return (g * (cdf + x * pdf),)
    return _record('gelu', (a,), out, grad_fn)


def sum_all(a):
    """Sum of all entries as a 1x1 matrix."""
    shape = a.shape
    out = Matrix._wrap(np.array([[a.data.sum()]]))

    def grad_fn(g):
        return (np.full(shape, g[0, 0]),)
    return _record('sum_all', (a,), out, grad_fn)


def mean_rows(a):
    """Column-wise mean over all rows, a ``1 x cols`` matrix."""
    if a.rows == 0:
        raise DimensionError('mean_rows of a matrix without rows')
    rows = a.rows
    shape = a.shape
    out = Matrix._wrap(a.data.mean(axis=0, keepdims=True))

    def grad_fn(g):
        return (np.broadcast_to(g / rows, shape).copy(),)
    return _record('mean_rows', (a,), out, grad_fn)


def concat_cols(*matrices):
    """Place matrices with equal row counts side by side."""
    if not matrices:
        raise DimensionError('concat_cols needs at least one matrix')
    first = matrices[0]
    for other in matrices[1:]:
        if other.rows != first.rows:
            raise DimensionError.mismatch('concat_cols', first.shape,
                                          other.shape)
    splits = np.cumsum([m.cols for m in matrices])[:-1]
    out = Matrix._wrap(np.hstack([m.data for m in matrices]))

    def grad_fn(g):
        return tuple(np.ascontiguousarray(part)
                     for part in np.split(g, splits, axis=1))
    return _record('concat_cols', tuple(matrices), out, grad_fn)


def row_select(a, indices):
    """Gather rows ``indices`` (repeats allowed) into a new matrix."""
    index = np.asarray(indices, dtype=np.intp).reshape(-1)
    if index.size and (index.min() < 0 or index.max() >= a.rows):
        raise DimensionError('row_select: index out of range for {0} rows'
                             .format(a.rows))
    shape = a.shape
    out = Matrix._wrap(a.data[index])

    def grad_fn(g):
        scattered = np.zeros(shape)
        np.add.at(scattered, index, g)
        return (scattered,)
    return _record('row_select', (a,), out, grad_fn)


def spmm(sparse, a):
    """Product of a constant :mod:`scipy.sparse` matrix with ``a``."""
    if sparse.shape[1] != a.rows:
        raise DimensionError.mismatch('spmm', sparse.shape, a.shape)
    out = Matrix._wrap(np.asarray(sparse.dot(a.data)))

    def grad_fn(g):
        return (np.asarray(sparse.T.dot(g)),)
    return _record('spmm', (a,), out, grad_fn)


def layer_norm(a, gain, bias, eps=LAYER_NORM_EPS):
    """Standardize every row, then apply per-column ``gain`` and ``bias``."""
    if gain.shape != (1, a.cols) or bias.shape != (1, a.cols):
        raise DimensionError('layer_norm: gain and bias must be 1x{0}, got '
                             '{1}x{2} and {3}x{4}'.format(
                                 a.cols, gain.rows, gain.cols,
                                 bias.rows, bias.cols))
    x = a.data
    centered = x - x.mean(axis=1, keepdims=True)
    var = (centered * centered).mean(axis=1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std
    gain_data = gain.data
    out = Matrix._wrap(xhat * gain_data + bias.data)

    def grad_fn(g):
        dxhat = g * gain_data
        dx = inv_std * (dxhat - dxhat.mean(axis=1, keepdims=True) -
                        xhat * (dxhat * xhat).mean(axis=1, keepdims=True))
        return (dx, (g * xhat).sum(axis=0, keepdims=True),
                g.sum(axis=0, keepdims=True))
    return _record('layer_norm', (a, gain, bias), out, grad_fn)


def dropout(a, p, training, rng):
    """Inverted dropout: survivors are scaled by ``1 / (1 - p)``.

    Outside training, or with ``p == 0``, ``a`` itself is returned.

    :param float p: Drop probability in ``[0, 1)``.
    :param bool training: Whether to drop at all.
    :param rng: A :class:`numpy.random.Generator` drawing the mask.
    """
    if not 0.0 <= p < 1.0:
        raise ConfigError('dropout probability must lie in [0, 1), got {0}'
                          .format(p))
    if not training or p == 0.0:
        return a
    if rng is None:
        raise ConfigError('dropout in training mode needs a random generator')
    mask = (rng.random(a.shape) >= p) / (1.0 - p)
    out = Matrix._wrap(a.data * mask)

    def grad_fn(g):
        return (g * mask,)
    return _record('dropout', (a,), out, grad_fn)


def _masked_rows(mask, rows):
    mask = np.asarray(mask, dtype=bool).reshape(-1)
    if mask.shape[0] != rows:
        raise DimensionError('mask has {0} entries for {1} rows'.format(
            mask.shape[0], rows))
    selected = np.flatnonzero(mask)
    if selected.size == 0:
        raise SupervisionError('no supervised vertices')
    return selected


def softmax_cross_entropy(logits, labels, mask):
    """Mean negative log-likelihood of ``labels`` over the masked rows.

    :param Matrix logits: ``n x C`` unnormalized scores.
    :param labels: Integer class per row; only masked rows are read.
    :param mask: Boolean vector selecting the supervised rows.
    :returns: A 1x1 :class:`Matrix`.
    """
    labels = np.asarray(labels).reshape(-1)
    if labels.shape[0] != logits.rows:
        raise DimensionError('{0} labels for {1} logit rows'.format(
            labels.shape[0], logits.rows))
    rows = _masked_rows(mask, logits.rows)
    targets = labels[rows].astype(np.intp)
    classes = logits.cols
    if targets.min() < 0 or targets.max() >= classes:
        raise DimensionError('labels must lie in [0, {0})'.format(classes))
    count = rows.size
    shifted = logits.data[rows]
    shifted = shifted - shifted.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    picks = np.arange(count)
    out = Matrix._wrap(np.array([[-log_probs[picks, targets].mean()]]))
    shape = logits.shape

    def grad_fn(g):
        probs = np.exp(log_probs)
        probs[picks, targets] -= 1.0
        full = np.zeros(shape)
        full[rows] = probs * (g[0, 0] / count)
        return (full,)
    return _record('softmax_cross_entropy', (logits,), out, grad_fn)


def mae_loss(predictions, targets, mask):
    """Mean absolute error of a one-column ``predictions`` over masked rows."""
    if predictions.cols != 1:
        raise DimensionError('mae_loss expects one column, got {0}'.format(
            predictions.cols))
    targets = np.asarray(targets, dtype=np.float64).reshape(-1)
    if targets.shape[0] != predictions.rows:
        raise DimensionError('{0} targets for {1} prediction rows'.format(
            targets.shape[0], predictions.rows))
    rows = _masked_rows(mask, predictions.rows)
    diff = predictions.data[rows, 0] - targets[rows]
    count = rows.size
    out = Matrix._wrap(np.array([[np.abs(diff).mean()]]))
    shape = predictions.shape

    def grad_fn(g):
        full = np.zeros(shape)
        full[rows, 0] = np.sign(diff) * (g[0, 0] / count)
        return (full,)
    return _record('mae_loss', (predictions,), out, grad_fn)


class Segments(object):
    """Layout of consecutive row blocks stacked in one matrix.

    Neighborhoods of many vertices are evaluated together by stacking their
    rows; a :class:`Segments` records where each block starts. Blocks of equal
    size are grouped so the segmented operations run as batched products.

    :param sizes: Row count of every segment, in stacking order.
    """

    def __init__(self, sizes):
        sizes = np.asarray(sizes, dtype=np.intp).reshape(-1)
        if sizes.size and sizes.min() < 1:
            raise DimensionError('empty neighborhood')
        self.sizes = sizes
        self.count = int(sizes.size)
        self.offsets = np.concatenate(([0], np.cumsum(sizes))).astype(np.intp)
        self.total = int(self.offsets[-1])
        self.buckets = []
        for size in np.unique(sizes):
            segs = np.flatnonzero(sizes == size)
            rows = self.offsets[segs][:, None] + np.arange(size)
            self.buckets.append((segs, rows))

    def mean_matrix(self):
        """Sparse ``count x total`` matrix averaging each segment's rows."""
        from scipy import sparse
        weights = np.repeat(1.0 / self.sizes, self.sizes)
        owner = np.repeat(np.arange(self.count), self.sizes)
        return sparse.csr_matrix((weights, (owner, np.arange(self.total))),
                                 shape=(self.count, self.total))


def segment_outer(x, t, segments):
    """Per segment ``s``: ``x_s^T . t_s``, stacked into ``(count*h) x m``.

    ``x`` is ``total x h`` and ``t`` is ``total x m``.
    """
    if x.rows != segments.total or t.rows != segments.total:
        raise DimensionError.mismatch('segment_outer', x.shape, t.shape)
    count, h, m = segments.count, x.cols, t.cols
    x_data, t_data = x.data, t.data
    out = np.empty((count, h, m))
    for segs, rows in segments.buckets:
        out[segs] = np.matmul(x_data[rows].transpose(0, 2, 1), t_data[rows])
    result = Matrix._wrap(out.reshape(count * h, m))

    def grad_fn(g):
        g3 = g.reshape(count, h, m)
        gx = np.empty_like(x_data)
        gt = np.empty_like(t_data)
        for segs, rows in segments.buckets:
            block = g3[segs]
            gx[rows] = np.matmul(t_data[rows], block.transpose(0, 2, 1))
            gt[rows] = np.matmul(x_data[rows], block)
        return gx, gt
    return _record('segment_outer', (x, t), result, grad_fn)


def segment_expand(t, y, segments):
    """Per segment ``s``: ``t_s . y_s^T``, stacked into ``total x h``.

    ``t`` is ``total x m`` and ``y`` is ``(count*h) x m`` as produced by
    :func:`segment_outer`.
    """
    count = segments.count
    if (t.rows != segments.total or y.cols != t.cols or count == 0 or
            y.rows % count):
        raise DimensionError.mismatch('segment_expand', t.shape, y.shape)
    h, m = y.rows // count, t.cols
    t_data = t.data
    y3 = y.data.reshape(count, h, m)
    out = np.empty((segments.total, h))
    for segs, rows in segments.buckets:
        out[rows] = np.matmul(t_data[rows], y3[segs].transpose(0, 2, 1))
    result = Matrix._wrap(out)

    def grad_fn(g):
        gt = np.empty_like(t_data)
        gy = np.empty((count, h, m))
        for segs, rows in segments.buckets:
            block = g[rows]
            gt[rows] = np.matmul(block, y3[segs])
            gy[segs] = np.matmul(block.transpose(0, 2, 1), t_data[rows])
        return gt, gy.reshape(count * h, m)
    return _record('segment_expand', (t, y), result, grad_fn)
