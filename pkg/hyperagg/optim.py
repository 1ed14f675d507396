"""Adam with decoupled weight decay."""
import logging

import numpy as np

from hyperagg.exceptions import ConfigError, DimensionError

logger = logging.getLogger(__name__)

DEFAULT_BETAS = (0.9, 0.999)
DEFAULT_EPS = 1e-8


class AdamState(object):
    """First/second moment buffers and the step counter for ``params``."""

    def __init__(self, params):
        self.step = 0
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]


def adam_step(params, grads, state, lr, betas=DEFAULT_BETAS, eps=DEFAULT_EPS,
              weight_decay=0.0):
    """Apply one Adam update in place and return ``params``.

    Weight decay is decoupled: parameters shrink by ``lr * weight_decay``
    before the moment-based step, independent of the gradient.

    :param params: List of :class:`hyperagg.tensor.Matrix`.
    :param grads: Arrays matching ``params`` one to one.
    :param AdamState state: Moment buffers, shape-matched to ``params``.
    """
    if lr <= 0.0:
        raise ConfigError('learning rate must be > 0, got {0}'.format(lr),
                          key='lr')
    if weight_decay < 0.0:
        raise ConfigError('must be >= 0, got {0}'.format(weight_decay),
                          key='weight_decay')
    beta1, beta2 = betas
    if len(params) != len(grads) or len(params) != len(state.m):
        raise DimensionError('adam_step: {0} params, {1} grads, {2} state '
                             'buffers'.format(len(params), len(grads),
                                              len(state.m)))
    state.step += 1
    correction1 = 1.0 - beta1 ** state.step
    correction2 = 1.0 - beta2 ** state.step
    for param, grad, m, v in zip(params, grads, state.m, state.v):
        if grad.shape != param.data.shape or m.shape != param.data.shape:
            raise DimensionError.mismatch('adam_step', param.data.shape,
                                          grad.shape)
        if weight_decay:
            param.data *= 1.0 - lr * weight_decay
        m *= beta1
        m += (1.0 - beta1) * grad
        v *= beta2
        v += (1.0 - beta2) * grad * grad
        param.data -= lr * (m / correction1) / (np.sqrt(v / correction2) + eps)
    return params


class Adam(object):
    """Stateful wrapper around :func:`adam_step` for a fixed parameter list.

    :param params: The :class:`hyperagg.tensor.Matrix` objects to optimize.
    :param float lr: Learning rate, must be positive.
    :param float weight_decay: Decoupled weight decay coefficient.
    """

    def __init__(self, params, lr, weight_decay=0.0, betas=DEFAULT_BETAS,
                 eps=DEFAULT_EPS):
        if lr <= 0.0:
            raise ConfigError('learning rate must be > 0, got {0}'.format(lr),
                              key='lr')
        self.params = list(params)
        self.lr = lr
        self.weight_decay = weight_decay
        self.betas = betas
        self.eps = eps
        self.state = AdamState(self.params)

    def step(self):
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data)
                 for p in self.params]
        adam_step(self.params, grads, self.state, self.lr, self.betas,
                  self.eps, self.weight_decay)

    def zero_grad(self):
        for p in self.params:
            p.grad = None
