"""
Trainable layers: spectral-normalized convolution, graph attention in spatial
and temporal orientation, residual feed-forward blocks, batch normalization,
an LSTM stack for forecasting and a compact transformer encoder for embeddings.
"""
import logging
from collections import OrderedDict

import numpy as np

from .errors import ContractError, DimensionError
from .tensor import (DTYPE, Tensor, conv1d, leaky_relu, no_grad, parameter, sigmoid, softmax_last,
                     stack, tanh)

logger = logging.getLogger(__name__)

SPECTRAL_EPS = 1e-12
CERTIFY_ITERS = 30


def glorot(rng, shape, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def _unit(vector):
    return vector / (np.linalg.norm(vector) + SPECTRAL_EPS)


class Module:
    """
    Container of named parameters, buffers and child modules.

    Parameters are leaf tensors that require gradients; buffers are numpy
    arrays holding non-trainable state (power-iteration vectors, running
    statistics). Iteration order follows assignment order.
    """

    def __init__(self):
        object.__setattr__(self, '_parameters', OrderedDict())
        object.__setattr__(self, '_buffers', OrderedDict())
        object.__setattr__(self, '_modules', OrderedDict())
        object.__setattr__(self, 'training', True)

    def __setattr__(self, name, value):
        if isinstance(value, Module):
            self._modules[name] = value
        elif isinstance(value, Tensor) and value.requires_grad:
            self._parameters[name] = value
        elif name in self._buffers:
            self._buffers[name] = value
        object.__setattr__(self, name, value)

    def register_buffer(self, name, array):
        self._buffers[name] = np.asarray(array, dtype=DTYPE)
        object.__setattr__(self, name, self._buffers[name])

    def add_module(self, name, module):
        self._modules[name] = module
        object.__setattr__(self, name, module)

    def named_parameters(self, prefix=''):
        for name, param in self._parameters.items():
            yield prefix + name, param
        for name, module in self._modules.items():
            yield from module.named_parameters(f'{prefix}{name}.')

    def named_buffers(self, prefix=''):
        for name, buffer in self._buffers.items():
            yield prefix + name, buffer
        for name, module in self._modules.items():
            yield from module.named_buffers(f'{prefix}{name}.')

    def parameters(self):
        return [param for _, param in self.named_parameters()]

    def parameter_count(self):
        return int(sum(param.size for param in self.parameters()))

    def zero_grad(self):
        for param in self.parameters():
            param.grad = None

    def train(self, mode=True):
        object.__setattr__(self, 'training', mode)
        for module in self._modules.values():
            module.train(mode)
        return self

    def eval(self):
        return self.train(False)

    def load_buffer(self, dotted_name, array):
        """ Replaces the buffer at `dotted_name` in place, keeping its shape """
        owner = self
        *path, name = dotted_name.split('.')
        for part in path:
            owner = owner._modules[part]  # pylint: disable=protected-access
        if owner._buffers[name].shape != array.shape:  # pylint: disable=protected-access
            raise DimensionError(f'buffer {dotted_name} has shape {list(owner._buffers[name].shape)}, '
                                 f'got {list(array.shape)}')
        owner._buffers[name][...] = array  # pylint: disable=protected-access


class Linear(Module):
    """ Affine map over the last axis """

    def __init__(self, in_features, out_features, rng, zero_init=False):
        super().__init__()
        if zero_init:
            weight = np.zeros((in_features, out_features))
        else:
            weight = glorot(rng, (in_features, out_features), in_features, out_features)
        self.weight = parameter(weight)
        self.bias = parameter(np.zeros(out_features))

    def __call__(self, x):
        if x.shape[-1] != self.weight.shape[0]:
            raise DimensionError(f'linear layer expects last axis {self.weight.shape[0]}, got {list(x.shape)}')
        return x @ self.weight + self.bias


class SpectralConv1d(Module):
    """
    Temporal convolution whose kernel is divided by its spectral norm, estimated
    by power iteration on the kernel flattened to [F_out, w * F_in].
    """

    def __init__(self, in_features, out_features, width, rng, power_iters=1, slope=0.2):
        super().__init__()
        self.kernel = parameter(glorot(rng, (width, in_features, out_features),
                                       width * in_features, out_features))
        self.bias = parameter(np.zeros(out_features))
        self.register_buffer('u', _unit(rng.normal(size=out_features)))
        self.power_iters = power_iters
        self.slope = slope

    def flat_kernel(self):
        width, in_features, out_features = self.kernel.shape
        return self.kernel.values.transpose(2, 0, 1).reshape(out_features, width * in_features)

    def power_iteration(self, iters):
        matrix = self.flat_kernel()
        u = self.u.copy()
        for _ in range(iters):
            v = _unit(matrix.T @ u)
            u = _unit(matrix @ v)
        self.u[...] = u

    def certify(self, iters=CERTIFY_ITERS):
        """ Runs enough power iterations for the normalized kernel to have spectral norm <= 1 """
        if self.certified():
            return
        self.power_iteration(iters)
        self.mark_certified()

    def mark_certified(self):
        """ Records the current kernel and power-iteration vector as certified """
        self._certified = (self.kernel.values.copy(), self.u.copy())

    def certified(self):
        snapshot = getattr(self, '_certified', None)
        if snapshot is None:
            return False
        return np.array_equal(snapshot[0], self.kernel.values) and np.array_equal(snapshot[1], self.u)

    def sigma(self):
        """ Differentiable spectral-norm estimate u^T W v with u, v held constant """
        width, in_features, out_features = self.kernel.shape
        flat = self.kernel.transpose(2, 0, 1).reshape(out_features, width * in_features)
        v = _unit(self.flat_kernel().T @ self.u)
        return (Tensor(self.u.reshape(1, -1)) @ flat @ Tensor(v.reshape(-1, 1))).reshape(())

    def normalized_kernel(self):
        sigma = self.sigma()
        if sigma.item() < SPECTRAL_EPS:
            return self.kernel / SPECTRAL_EPS
        return self.kernel / sigma

    def __call__(self, x):
        if self.training:
            self.power_iteration(self.power_iters)
        return leaky_relu(conv1d(x, self.normalized_kernel(), 'same') + self.bias, self.slope)


class GraphAttentionLayer(Module):
    """
    Dynamic graph attention over a complete graph with self-loops.

    In spatial orientation the nodes are the features and each node carries its
    series over time; in temporal orientation the nodes are the time steps and
    each carries its feature vector. Pair scores follow
    W2^T LeakyReLU([h_j || h_k] W1) + b[j, k], normalized by a softmax over k.
    Messages are the neighbour half of the same transform, h_k W1[d:, d:].
    """

    def __init__(self, orientation, steps, features, rng, slope=0.2, residual=False):
        super().__init__()
        if orientation not in ('spatial', 'temporal'):
            raise ContractError(f'unknown attention orientation {orientation}')
        self.orientation = orientation
        self.steps = steps
        self.features = features
        self.nodes, self.node_dim = (features, steps) if orientation == 'spatial' else (steps, features)
        if self.nodes < 1:
            raise DimensionError(f'graph attention needs at least one node, got {self.nodes}')
        width = 2 * self.node_dim
        self.w1 = parameter(glorot(rng, (width, width), width, width))
        self.w2 = parameter(glorot(rng, (width, 1), width, 1))
        self.bias = parameter(np.zeros((self.nodes, self.nodes)))
        self.slope = slope
        self.residual = residual

    def _node_view(self, x):
        if x.ndim != 3 or x.shape[1] != self.steps or x.shape[2] != self.features:
            raise DimensionError(f'{self.orientation} attention expects [K, {self.steps}, {self.features}], '
                                 f'got {list(x.shape)}')
        return x.transpose(0, 2, 1) if self.orientation == 'spatial' else x

    def _project(self, nodes):
        d = self.node_dim
        own = nodes @ self.w1[:d]
        neighbour = nodes @ self.w1[d:]
        return own, neighbour

    def _attention(self, nodes):
        batch, count, width = nodes.shape[0], self.nodes, 2 * self.node_dim
        own, neighbour = self._project(nodes)
        pairs = own.reshape(batch, count, 1, width) + neighbour.reshape(batch, 1, count, width)
        logits = (leaky_relu(pairs, self.slope) @ self.w2).reshape(batch, count, count) + self.bias
        return softmax_last(logits), neighbour

    def scores(self, x):
        """ Attention matrix alpha of shape [K, nodes, nodes]; rows sum to one """
        alpha, _ = self._attention(self._node_view(x))
        return alpha

    def __call__(self, x):
        alpha, neighbour = self._attention(self._node_view(x))
        out = sigmoid(alpha @ neighbour[:, :, self.node_dim:])
        if self.orientation == 'spatial':
            out = out.transpose(0, 2, 1)
        return x + out if self.residual else out


class BatchNorm(Module):
    """ Per-feature normalization over every leading axis, with running statistics for eval mode """

    def __init__(self, features, momentum=0.9, eps=1e-5):
        super().__init__()
        self.gamma = parameter(np.ones(features))
        self.beta = parameter(np.zeros(features))
        self.register_buffer('running_mean', np.zeros(features))
        self.register_buffer('running_var', np.ones(features))
        self.momentum = momentum
        self.eps = eps

    def __call__(self, x):
        axes = tuple(range(x.ndim - 1))
        if self.training:
            mean = x.mean(axes, keepdims=True)
            centered = x - mean
            var = (centered ** 2).mean(axes, keepdims=True)
            count = x.size // x.shape[-1]
            unbiased = var.values.reshape(-1) * count / max(count - 1, 1)
            self.running_mean[...] = self.momentum * self.running_mean + (1 - self.momentum) * mean.values.reshape(-1)
            self.running_var[...] = self.momentum * self.running_var + (1 - self.momentum) * unbiased
        else:
            centered = x - Tensor(self.running_mean)
            var = Tensor(self.running_var)
        return centered / (var + self.eps).sqrt() * self.gamma + self.beta


class ResidualFFN(Module):
    """ depth x (affine -> LeakyReLU -> batch norm), plus a skip connection from input to output """

    def __init__(self, features, depth, rng, slope=0.2):
        super().__init__()
        self.depth = depth
        self.slope = slope
        for i in range(depth):
            self.add_module(f'affine{i}', Linear(features, features, rng))
            self.add_module(f'norm{i}', BatchNorm(features))

    def __call__(self, z):
        if not self.depth:
            return z
        hidden = z
        for i in range(self.depth):
            hidden = getattr(self, f'norm{i}')(leaky_relu(getattr(self, f'affine{i}')(hidden), self.slope))
        return hidden + z


class LstmCell(Module):

    def __init__(self, in_features, hidden, rng):
        super().__init__()
        self.hidden = hidden
        self.w_x = parameter(glorot(rng, (in_features, 4 * hidden), in_features, hidden))
        self.w_h = parameter(glorot(rng, (hidden, 4 * hidden), hidden, hidden))
        self.bias = parameter(np.zeros(4 * hidden))

    def gates(self, x, h):
        """ Input, forget, candidate and output gates for one step """
        pre = x @ self.w_x + h @ self.w_h + self.bias
        size = self.hidden
        return (sigmoid(pre[:, :size]), sigmoid(pre[:, size:2 * size]),
                tanh(pre[:, 2 * size:3 * size]), sigmoid(pre[:, 3 * size:]))

    def __call__(self, x, state):
        h, c = state
        gate_in, gate_forget, candidate, gate_out = self.gates(x, h)
        c = gate_forget * c + gate_in * candidate
        return gate_out * tanh(c), c


class LstmStack(Module):
    """ Stacked LSTM cells with a linear projection from the top hidden state to the features """

    def __init__(self, features, rng, hidden=64, layers=2):
        super().__init__()
        self.features = features
        self.hidden = hidden
        self.layers = layers
        for i in range(layers):
            self.add_module(f'cell{i}', LstmCell(features if i == 0 else hidden, hidden, rng))
        self.head = Linear(hidden, features, rng)

    def initial_state(self, batch):
        return [(Tensor(np.zeros((batch, self.hidden))), Tensor(np.zeros((batch, self.hidden))))
                for _ in range(self.layers)]

    def step(self, x, states):
        new_states = []
        inputs = x
        for i in range(self.layers):
            h, c = getattr(self, f'cell{i}')(inputs, states[i])
            new_states.append((h, c))
            inputs = h
        return self.head(inputs), new_states

    def teacher_forced(self, x):
        """ One-step-ahead predictions for every position of x[K, T, F] """
        if x.ndim != 3 or x.shape[2] != self.features:
            raise DimensionError(f'lstm expects [K, T, {self.features}], got {list(x.shape)}')
        states = self.initial_state(x.shape[0])
        outputs = []
        for t in range(x.shape[1]):
            y, states = self.step(x[:, t, :], states)
            outputs.append(y)
        return stack(outputs, axis=1)

    def forecast(self, context, horizon):
        """
        * Free-running rollout: the context is consumed step by step, then each
        * prediction is fed back as the next input.
        * @param {Tensor} context Tensor[K, c, F] with c >= 1
        * @param {int} horizon Number of predicted steps p
        * @returns {Tensor} Tensor[K, p, F]
        """
        if context.ndim != 3 or context.shape[1] < 1:
            raise ContractError(f'forecast needs a context of at least one step, got {list(context.shape)}')
        if context.shape[2] != self.features:
            raise DimensionError(f'lstm expects {self.features} features, got {list(context.shape)}')
        if horizon < 1:
            raise ContractError(f'forecast horizon must be >= 1, got {horizon}')
        states = self.initial_state(context.shape[0])
        for t in range(context.shape[1]):
            y, states = self.step(context[:, t, :], states)
        outputs = [y]
        for _ in range(horizon - 1):
            y, states = self.step(y, states)
            outputs.append(y)
        return stack(outputs, axis=1)


class LayerNorm(Module):

    def __init__(self, features, eps=1e-5):
        super().__init__()
        self.gamma = parameter(np.ones(features))
        self.beta = parameter(np.zeros(features))
        self.eps = eps

    def __call__(self, x):
        mean = x.mean(-1, keepdims=True)
        centered = x - mean
        var = (centered ** 2).mean(-1, keepdims=True)
        return centered / (var + self.eps).sqrt() * self.gamma + self.beta


class MultiHeadSelfAttention(Module):

    def __init__(self, d_model, heads, rng):
        super().__init__()
        if d_model % heads:
            raise ContractError(f'model width {d_model} is not divisible by {heads} heads')
        self.heads = heads
        self.head_dim = d_model // heads
        self.query = Linear(d_model, d_model, rng)
        self.key = Linear(d_model, d_model, rng)
        self.value = Linear(d_model, d_model, rng)
        self.out = Linear(d_model, d_model, rng)
        self.last_attention = None

    def _split(self, x):
        batch, steps, _ = x.shape
        return x.reshape(batch, steps, self.heads, self.head_dim).transpose(0, 2, 1, 3)

    def __call__(self, x):
        batch, steps, width = x.shape
        q, k, v = self._split(self.query(x)), self._split(self.key(x)), self._split(self.value(x))
        weights = softmax_last(q @ k.swapaxes(-1, -2) / np.sqrt(self.head_dim))
        self.last_attention = weights.values
        mixed = (weights @ v).transpose(0, 2, 1, 3).reshape(batch, steps, width)
        return self.out(mixed)


class TransformerBlock(Module):

    def __init__(self, d_model, heads, rng, slope=0.2):
        super().__init__()
        self.attention = MultiHeadSelfAttention(d_model, heads, rng)
        self.norm1 = LayerNorm(d_model)
        self.expand = Linear(d_model, 2 * d_model, rng)
        self.contract = Linear(2 * d_model, d_model, rng)
        self.norm2 = LayerNorm(d_model)
        self.slope = slope

    def __call__(self, x):
        x = self.norm1(x + self.attention(x))
        return self.norm2(x + self.contract(leaky_relu(self.expand(x), self.slope)))


def sinusoidal_positions(steps, width):
    positions = np.arange(steps)[:, None]
    rates = np.exp(-np.log(10000.0) * (np.arange(0, width, 2) / width))
    table = np.zeros((steps, width))
    table[:, 0::2] = np.sin(positions * rates)
    table[:, 1::2] = np.cos(positions * rates[:width // 2])
    return table


class TransformerEmbedder(Module):
    """
    Transformer encoder trained to regress the last step of a window from the
    steps before it. The mean-pooled output of the final block is the embedding.
    """

    def __init__(self, features, rng, width=32, heads=4, blocks=2, positional=True):
        super().__init__()
        self.features = features
        self.width = width
        self.positional = positional
        self.blocks = blocks
        self.heads = heads
        self.project = Linear(features, width, rng)
        for i in range(blocks):
            self.add_module(f'block{i}', TransformerBlock(width, heads, rng))
        self.head = Linear(width, features, rng)
        self.trained = False

    def pooled(self, x):
        if x.ndim != 3 or x.shape[2] != self.features:
            raise DimensionError(f'embedder expects [K, T, {self.features}], got {list(x.shape)}')
        if x.shape[1] < 1:
            raise ContractError('embedder needs at least one input step')
        hidden = self.project(x)
        if self.positional:
            hidden = hidden + Tensor(sinusoidal_positions(x.shape[1], self.width))
        for i in range(self.blocks):
            hidden = getattr(self, f'block{i}')(hidden)
        return hidden.mean(1)

    def __call__(self, x):
        return self.head(self.pooled(x))


# operation entry points

def specnorm_conv_forward(layer, x):
    return layer(x)


def gat_scores(layer, x):
    return layer.scores(x)


def gat_forward(layer, x):
    return layer(x)


def ffn_residual_forward(block, z):
    return block(z)


def lstm_forecast(stack_, context, horizon=8):
    return stack_.forecast(context, horizon)


def embed(embedder, x, allow_untrained=False):
    """
    * Pooled pre-head representation of each sequence, computed in eval mode.
    * @param {TransformerEmbedder} embedder A trained embedder
    * @param {Tensor} x Tensor[K, tau - 1, F]
    * @param {bool} allow_untrained Skip the trained-embedder check
    * @returns {Tensor} Tensor[K, width]
    """
    if not embedder.trained and not allow_untrained:
        raise ContractError('embedder has not been trained')
    x = x if isinstance(x, Tensor) else Tensor(x)
    if x.ndim != 3 or x.shape[1] < 1:
        raise ContractError(f'embedding needs at least one input step, got {list(x.shape)}')
    mode = embedder.training
    embedder.eval()
    try:
        with no_grad():
            return embedder.pooled(x)
    finally:
        embedder.train(mode)

