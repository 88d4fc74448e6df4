"""
Dense float64 tensors with reverse-mode automatic differentiation.

Every differentiable operation is a `Function` whose `forward` works on numpy
arrays and whose `backward` maps the gradient of the output to gradients of the
inputs. Operations run while gradients are enabled are appended to the active
`Tape`; `backward(loss)` walks that record in reverse and then resets it.
"""
import itertools
import logging
import os
import threading
from contextlib import contextmanager

import numpy as np

from .errors import ContractError, DimensionError

logger = logging.getLogger(__name__)

DTYPE = np.float64
DEBUG = os.environ.get('GAT_GAN_DEBUG', '') not in ('', '0')

_local = threading.local()


def _tape_stack():
    if not hasattr(_local, 'tapes'):
        _local.tapes = [Tape()]
    return _local.tapes


def current_tape():
    """ Returns the tape operations are being recorded on in this thread """
    return _tape_stack()[-1]


def grad_enabled():
    return getattr(_local, 'grad_enabled', True)


@contextmanager
def no_grad():
    """ Disables recording for the enclosed block """
    previous = grad_enabled()
    _local.grad_enabled = False
    try:
        yield
    finally:
        _local.grad_enabled = previous


class _Record:
    __slots__ = ('function', 'inputs', 'output')

    def __init__(self, function, inputs, output):
        self.function = function
        self.inputs = inputs
        self.output = output


class Tape:
    """
    Ordered record of the operations of one forward pass.

    A tape belongs to a single thread. Used as a context manager it becomes the
    active tape of the enclosed block.
    """
    _ids = itertools.count(1)

    def __init__(self):
        self.tape_id = next(Tape._ids)
        self.records = []

    def __enter__(self):
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc):
        _tape_stack().pop()
        self.reset()
        return False

    def __len__(self):
        return len(self.records)

    def record(self, function, inputs, output):
        output.tape_id = (self.tape_id, len(self.records))
        output._tape = self  # pylint: disable=protected-access
        self.records.append(_Record(function, inputs, output))

    def position(self, tensor):
        """ Index of the record that produced `tensor`, or None if it is not on this tape """
        if tensor.tape_id is None or tensor.tape_id[0] != self.tape_id:
            return None
        index = tensor.tape_id[1]
        if index < len(self.records) and self.records[index].output is tensor:
            return index
        return None

    def reset(self):
        self.records = []
        self.tape_id = next(Tape._ids)


class Tensor:
    """
    A shaped array of 64-bit reals, optionally tracking gradients.

    `values` is the row-major storage, `grad` is populated by `backward` for
    leaves that require gradients, `tape_id` identifies the record that
    produced a non-leaf tensor.
    """
    __array_priority__ = 100

    def __init__(self, values, requires_grad=False):
        self.values = np.array(values, dtype=DTYPE)
        self.requires_grad = requires_grad
        self.grad = None
        self.tape_id = None
        self._tape = None

    @classmethod
    def _wrap(cls, array, requires_grad):
        tensor = cls.__new__(cls)
        tensor.values = array if array.dtype == DTYPE else array.astype(DTYPE)
        tensor.requires_grad = requires_grad
        tensor.grad = None
        tensor.tape_id = None
        tensor._tape = None
        return tensor

    @property
    def shape(self):
        return self.values.shape

    @property
    def ndim(self):
        return self.values.ndim

    @property
    def size(self):
        return self.values.size

    @property
    def is_leaf(self):
        return self.tape_id is None

    def __repr__(self):
        return f'Tensor(shape={list(self.shape)}, requires_grad={self.requires_grad})'

    def __len__(self):
        return self.shape[0]

    def numpy(self):
        return self.values.copy()

    def item(self):
        return float(self.values.reshape(-1)[0]) if self.size == 1 else float(self.values)

    def detach(self):
        return Tensor(self.values, requires_grad=False)

    def zero_grad(self):
        self.grad = None

    # arithmetic
    def __add__(self, other):
        return Add.apply(self, as_tensor(other))

    def __radd__(self, other):
        return Add.apply(as_tensor(other), self)

    def __sub__(self, other):
        return Sub.apply(self, as_tensor(other))

    def __rsub__(self, other):
        return Sub.apply(as_tensor(other), self)

    def __mul__(self, other):
        return Mul.apply(self, as_tensor(other))

    def __rmul__(self, other):
        return Mul.apply(as_tensor(other), self)

    def __truediv__(self, other):
        return Div.apply(self, as_tensor(other))

    def __rtruediv__(self, other):
        return Div.apply(as_tensor(other), self)

    def __neg__(self):
        return Neg.apply(self)

    def __pow__(self, exponent):
        return Pow.apply(self, exponent=float(exponent))

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return GetItem.apply(self, index=index)

    def sum(self, axis=None, keepdims=False):
        return reduce(self, 'sum', axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return reduce(self, 'mean', axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return Reshape.apply(self, shape=shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return Transpose.apply(self, axes=axes or None)

    def swapaxes(self, first, second):
        axes = list(range(self.ndim))
        axes[first], axes[second] = axes[second], axes[first]
        return self.transpose(axes)

    def exp(self):
        return Exp.apply(self)

    def log(self):
        return Log.apply(self)

    def sqrt(self):
        return Sqrt.apply(self)

    def abs(self):
        return Abs.apply(self)


def as_tensor(value):
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def parameter(values):
    """ Leaf tensor that requires gradients """
    return Tensor(values, requires_grad=True)


def zeros(shape, requires_grad=False):
    return Tensor(np.zeros(shape, dtype=DTYPE), requires_grad=requires_grad)


def ones(shape, requires_grad=False):
    return Tensor(np.ones(shape, dtype=DTYPE), requires_grad=requires_grad)


class Function:
    """
    Base class for differentiable operations.

    Subclasses implement `forward(*arrays, **kwargs)` returning the output array
    and `backward(grad)` returning one gradient (or None) per input.
    """

    def __init__(self, *tensors):
        self.tensors = tensors

    def forward(self, *arrays, **kwargs):
        raise NotImplementedError(f'{type(self).__name__}.forward')

    def backward(self, grad):
        raise NotImplementedError(f'{type(self).__name__}.backward')

    @classmethod
    def apply(cls, *tensors, **kwargs):
        function = cls(*tensors)
        out = function.forward(*(t.values for t in tensors), **kwargs)
        if DEBUG and not np.all(np.isfinite(out)):
            if all(np.all(np.isfinite(t.values)) for t in tensors):
                raise ArithmeticError(f'{cls.__name__} produced non-finite values from finite inputs')
        requires_grad = grad_enabled() and any(t.requires_grad for t in tensors)
        output = Tensor._wrap(np.asarray(out), requires_grad)  # pylint: disable=protected-access
        if requires_grad:
            current_tape().record(function, tensors, output)
        return output


def _unbroadcast(grad, shape):
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(first, second):
    try:
        return np.broadcast_shapes(first, second)
    except ValueError:
        raise DimensionError(f'cannot broadcast shapes {list(first)} and {list(second)}') from None


class _Elementwise(Function):

    def forward(self, *arrays, **kwargs):
        if len(arrays) == 2:
            _broadcast_shape(arrays[0].shape, arrays[1].shape)
        return self.compute(*arrays)

    def compute(self, *arrays):
        raise NotImplementedError


class Add(_Elementwise):

    def compute(self, a, b):
        return a + b

    def backward(self, grad):
        a, b = self.tensors
        return _unbroadcast(grad, a.shape), _unbroadcast(grad, b.shape)


class Sub(_Elementwise):

    def compute(self, a, b):
        return a - b

    def backward(self, grad):
        a, b = self.tensors
        return _unbroadcast(grad, a.shape), _unbroadcast(-grad, b.shape)


class Mul(_Elementwise):

    def compute(self, a, b):
        return a * b

    def backward(self, grad):
        a, b = self.tensors
        return (_unbroadcast(grad * b.values, a.shape),
                _unbroadcast(grad * a.values, b.shape))


class Div(_Elementwise):

    def compute(self, a, b):
        return a / b

    def backward(self, grad):
        a, b = self.tensors
        return (_unbroadcast(grad / b.values, a.shape),
                _unbroadcast(-grad * a.values / (b.values ** 2), b.shape))


class Neg(Function):

    def forward(self, a):
        return -a

    def backward(self, grad):
        return (-grad,)


class Pow(Function):

    def forward(self, a, exponent):
        self.exponent = exponent
        return a ** exponent

    def backward(self, grad):
        a = self.tensors[0].values
        return (grad * self.exponent * a ** (self.exponent - 1),)


class Exp(Function):

    def forward(self, a):
        self.out = np.exp(a)
        return self.out

    def backward(self, grad):
        return (grad * self.out,)


class Log(Function):

    def forward(self, a):
        return np.log(a)

    def backward(self, grad):
        return (grad / self.tensors[0].values,)


class Sqrt(Function):

    def forward(self, a):
        self.out = np.sqrt(a)
        return self.out

    def backward(self, grad):
        # zero subgradient where the root is exactly zero
        safe = np.where(self.out > 0, self.out, 1.0)
        return (np.where(self.out > 0, grad * 0.5 / safe, 0.0),)


class Abs(Function):

    def forward(self, a):
        return np.abs(a)

    def backward(self, grad):
        return (grad * np.sign(self.tensors[0].values),)


class Sigmoid(Function):

    def forward(self, a):
        # exp of a non-positive argument only, so large magnitudes never overflow
        decay = np.exp(-np.abs(a))
        self.out = np.where(a >= 0, 1.0 / (1.0 + decay), decay / (1.0 + decay))
        return self.out

    def backward(self, grad):
        return (grad * self.out * (1.0 - self.out),)


class Tanh(Function):

    def forward(self, a):
        self.out = np.tanh(a)
        return self.out

    def backward(self, grad):
        return (grad * (1.0 - self.out ** 2),)


class LeakyRelu(Function):

    def forward(self, a, slope):
        self.scale = np.where(a > 0, 1.0, slope)
        return a * self.scale

    def backward(self, grad):
        return (grad * self.scale,)


class MatMul(Function):

    def forward(self, a, b):
        return np.matmul(a, b)

    def backward(self, grad):
        a, b = self.tensors
        grad_a = np.matmul(grad, np.swapaxes(b.values, -1, -2))
        grad_b = np.matmul(np.swapaxes(a.values, -1, -2), grad)
        return _unbroadcast(grad_a, a.shape), _unbroadcast(grad_b, b.shape)


class Sum(Function):

    def forward(self, a, axis, keepdims):
        self.axis = axis
        self.keepdims = keepdims
        return np.sum(a, axis=axis, keepdims=keepdims)

    def backward(self, grad):
        shape = self.tensors[0].shape
        if not self.keepdims and self.axis is not None:
            grad = np.expand_dims(grad, self.axis)
        return (np.broadcast_to(grad, shape).copy(),)


class Mean(Sum):

    def forward(self, a, axis, keepdims):
        out = super().forward(a, axis, keepdims)
        self.count = a.size // max(out.size, 1) if a.size else 1
        return out / self.count

    def backward(self, grad):
        return (super().backward(grad)[0] / self.count,)


class Reshape(Function):

    def forward(self, a, shape):
        try:
            return np.reshape(a, shape)
        except ValueError:
            raise DimensionError(f'cannot reshape {list(a.shape)} to {list(shape)}') from None

    def backward(self, grad):
        return (np.reshape(grad, self.tensors[0].shape),)


class Transpose(Function):

    def forward(self, a, axes):
        self.axes = axes if axes is not None else tuple(reversed(range(a.ndim)))
        if sorted(self.axes) != list(range(a.ndim)):
            raise DimensionError(f'invalid permutation {list(self.axes)} for shape {list(a.shape)}')
        return np.transpose(a, self.axes)

    def backward(self, grad):
        return (np.transpose(grad, np.argsort(self.axes)),)


class GetItem(Function):

    def forward(self, a, index):
        self.index = index
        return np.array(a[index], dtype=DTYPE)

    def backward(self, grad):
        full = np.zeros(self.tensors[0].shape, dtype=DTYPE)
        np.add.at(full, self.index, grad)
        return (full,)


class Concat(Function):

    def forward(self, *arrays, axis):
        self.axis = axis
        self.sizes = [a.shape[axis] for a in arrays]
        return np.concatenate(arrays, axis=axis)

    def backward(self, grad):
        bounds = np.cumsum(self.sizes)[:-1]
        return tuple(np.split(grad, bounds, axis=self.axis))


class Stack(Function):

    def forward(self, *arrays, axis):
        self.axis = axis
        return np.stack(arrays, axis=axis)

    def backward(self, grad):
        return tuple(np.take(grad, i, axis=self.axis) for i in range(len(self.tensors)))


class SoftmaxLast(Function):

    def forward(self, a):
        shifted = a - np.max(a, axis=-1, keepdims=True)
        exp_a = np.exp(shifted)
        self.out = exp_a / np.sum(exp_a, axis=-1, keepdims=True)
        return self.out

    def backward(self, grad):
        inner = np.sum(grad * self.out, axis=-1, keepdims=True)
        return (self.out * (grad - inner),)


def _same_padding(total):
    """ Symmetric zero padding; an odd deficit puts the extra element on the left """
    return total - total // 2, total // 2


class Conv1d(Function):

    def forward(self, x, kernel, padding):
        width = kernel.shape[0]
        if padding == 'valid':
            left, right = 0, 0
        else:
            left, right = _same_padding(width - 1)
        self.left = left
        padded = np.pad(x, ((0, 0), (left, right), (0, 0)))
        length = padded.shape[1] - width + 1
        self.padded = padded
        self.length = length
        out = np.zeros((x.shape[0], length, kernel.shape[2]), dtype=DTYPE)
        for offset in range(width):
            out += np.matmul(padded[:, offset:offset + length, :], kernel[offset])
        return out

    def backward(self, grad):
        x, kernel = self.tensors
        kernel = kernel.values
        grad_padded = np.zeros_like(self.padded)
        grad_kernel = np.zeros_like(kernel)
        for offset in range(kernel.shape[0]):
            window = self.padded[:, offset:offset + self.length, :]
            grad_padded[:, offset:offset + self.length, :] += np.matmul(grad, kernel[offset].T)
            grad_kernel[offset] = np.einsum('kti,kto->io', window, grad)
        grad_x = grad_padded[:, self.left:self.left + x.shape[1], :]
        return grad_x, grad_kernel


def pooling_matrix(steps, window, stride, padding):
    """
    * Builds the [steps_out x steps] averaging matrix of a temporal average pool.
    * Padded positions are excluded from each window's average.
    * @param {int} steps Input length
    * @param {int} window Pooling window
    * @param {int} stride Pooling stride
    * @param {str} padding 'same' or 'valid'
    * @returns {np.ndarray} The pooling matrix
    """
    if padding == 'valid':
        out_steps = (steps - window) // stride + 1
        left = 0
    else:
        out_steps = -(-steps // stride)
        left, _ = _same_padding(max((out_steps - 1) * stride + window - steps, 0))
    matrix = np.zeros((out_steps, steps), dtype=DTYPE)
    for row in range(out_steps):
        start = row * stride - left
        lo, hi = max(start, 0), min(start + window, steps)
        matrix[row, lo:hi] = 1.0 / (hi - lo)
    return matrix


class AvgPool1d(Function):

    def forward(self, x, matrix):
        self.matrix = matrix
        return np.einsum('ot,ktf->kof', matrix, x)

    def backward(self, grad):
        return (np.einsum('ot,kof->ktf', self.matrix, grad),)


# public operations

def matmul(a, b):
    """
    * Matrix product over the last two axes; leading batch axes broadcast.
    * @param {Tensor} a Tensor[.., m, k]
    * @param {Tensor} b Tensor[.., k, n]
    * @returns {Tensor} Tensor[.., m, n]
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f'matmul shape mismatch: {list(a.shape)} x {list(b.shape)}')
    _broadcast_shape(a.shape[:-2], b.shape[:-2])
    return MatMul.apply(a, b)


def conv1d(x, kernel, padding='same'):
    """
    * Temporal cross-correlation of x[K, tau, F_in] with kernel[w, F_in, F_out].
    * 'same' padding preserves tau, 'valid' yields tau - w + 1 steps.
    """
    if padding not in ('same', 'valid'):
        raise ContractError(f'unknown padding mode {padding}')
    if x.ndim != 3 or kernel.ndim != 3 or kernel.shape[1] != x.shape[2]:
        raise DimensionError(f'conv1d shape mismatch: input {list(x.shape)}, kernel {list(kernel.shape)}')
    if padding == 'valid' and kernel.shape[0] > x.shape[1]:
        raise DimensionError(
            f'conv1d kernel width {kernel.shape[0]} exceeds {x.shape[1]} steps of input {list(x.shape)}')
    return Conv1d.apply(x, kernel, padding=padding)


def avg_pool1d(x, window, stride=1, padding='same'):
    """ Temporal average pooling of x[K, tau, F] """
    if window < 1 or stride < 1:
        raise ContractError(f'pooling window and stride must be >= 1, got {window}, {stride}')
    if padding not in ('same', 'valid'):
        raise ContractError(f'unknown padding mode {padding}')
    if x.ndim != 3:
        raise DimensionError(f'avg_pool1d expects [K, tau, F], got {list(x.shape)}')
    if padding == 'valid' and window > x.shape[1]:
        raise DimensionError(f'pooling window {window} exceeds {x.shape[1]} steps of input {list(x.shape)}')
    return AvgPool1d.apply(x, matrix=pooling_matrix(x.shape[1], window, stride, padding))


def leaky_relu(x, slope=0.2):
    if not 0 < slope < 1:
        raise ContractError(f'leaky_relu slope must lie in (0, 1), got {slope}')
    return LeakyRelu.apply(x, slope=slope)


def sigmoid(x):
    return Sigmoid.apply(x)


def tanh(x):
    return Tanh.apply(x)


def activation(x, kind, slope=0.2):
    """ Elementwise activation: 'leaky_relu', 'sigmoid' or 'tanh' """
    if kind == 'leaky_relu':
        return leaky_relu(x, slope)
    if kind == 'sigmoid':
        return sigmoid(x)
    if kind == 'tanh':
        return tanh(x)
    raise ContractError(f'unknown activation {kind}')


def softmax_last(x):
    return SoftmaxLast.apply(x)


def _normalize_axes(axes, ndim, shape):
    if axes is None:
        return None
    axes = (axes,) if isinstance(axes, int) else tuple(axes)
    normalized = []
    for axis in axes:
        if not -ndim <= axis < ndim:
            raise DimensionError(f'axis {axis} is out of range for shape {list(shape)}')
        normalized.append(axis % ndim)
    if len(set(normalized)) != len(normalized):
        raise DimensionError(f'repeated axis in {list(axes)} for shape {list(shape)}')
    return tuple(sorted(normalized))


def reduce(x, kind, axes=None, keepdims=False):
    """
    * Sum or mean over `axes` (all axes when None).
    * @param {Tensor} x The tensor to reduce
    * @param {str} kind 'sum' or 'mean'
    * @param {int|tuple} axes Axes to reduce
    * @param {bool} keepdims Keep reduced axes with size 1
    * @returns {Tensor} The reduction
    """
    axes = _normalize_axes(axes, x.ndim, x.shape)
    if kind == 'sum':
        return Sum.apply(x, axis=axes, keepdims=keepdims)
    if kind == 'mean':
        return Mean.apply(x, axis=axes, keepdims=keepdims)
    raise ContractError(f'unknown reduction {kind}')


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    ndim = tensors[0].ndim
    axis = axis % ndim
    reference = tensors[0].shape
    for tensor in tensors[1:]:
        other = tensor.shape
        if len(other) != ndim or any(r != o for i, (r, o) in enumerate(zip(reference, other)) if i != axis):
            raise DimensionError(f'cannot concatenate {list(reference)} and {list(other)} on axis {axis}')
    return Concat.apply(*tensors, axis=axis)


def concat_last(a, b):
    """ Joins a and b along the last axis; every other axis must agree """
    return concat([a, b], axis=-1)


def stack(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    shapes = {t.shape for t in tensors}
    if len(shapes) != 1:
        raise DimensionError(f'cannot stack tensors of shapes {[list(s) for s in shapes]}')
    return Stack.apply(*tensors, axis=axis)


def backward(loss):
    """
    * Populates `grad` on every leaf that requires gradients and contributed to `loss`,
    * then resets the tape that recorded the forward pass.
    * @param {Tensor} loss A scalar tensor produced on the active tape
    """
    if loss.size != 1:
        raise ContractError(f'backward needs a scalar loss, got shape {list(loss.shape)}')
    seed = np.ones(loss.shape, dtype=DTYPE)
    if loss.is_leaf:
        if not loss.requires_grad:
            raise ContractError('loss does not require gradients')
        loss.grad = seed if loss.grad is None else loss.grad + seed
        return
    tape = loss._tape  # pylint: disable=protected-access
    end = tape.position(loss) if tape is not None else None
    if end is None:
        raise ContractError('loss is not on the tape; backward needs a fresh forward pass')
    grads = {id(loss): seed}
    for record in reversed(tape.records[:end + 1]):
        grad = grads.pop(id(record.output), None)
        if grad is None:
            continue
        input_grads = record.function.backward(grad)
        for tensor, input_grad in zip(record.inputs, input_grads):
            if input_grad is None or not tensor.requires_grad:
                continue
            if tensor.is_leaf:
                tensor.grad = input_grad.copy() if tensor.grad is None else tensor.grad + input_grad
            else:
                key = id(tensor)
                grads[key] = input_grad if key not in grads else grads[key] + input_grad
    tape.reset()


def relative_error(analytic, numeric):
    """ |a - n| / max(|a|, |n|); an analytic gradient of exactly zero is compared absolutely """
    if analytic == 0.0:
        return abs(numeric)
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric))


def grad_check(f, x, eps=1e-3, directions=None, seed=0):
    """
    * Compares the autodiff gradient of a scalar function with one central difference per check.
    *
    * `x` is perturbed in place, so it may be a layer parameter that `f` reads
    * implicitly. By default every element of x is checked; with `directions`
    * set, the directional derivative g.v along that many random unit directions
    * over all of x is checked instead. A piecewise-linear kink inside
    * [x - eps, x + eps] breaks the difference quotient, so networks with many
    * LeakyReLU units are best checked with a small eps or along directions.
    * @param {callable} f Maps x to a scalar Tensor
    * @param {Tensor} x Leaf tensor with requires_grad set
    * @param {float} eps Finite-difference step in [1e-5, 1e-2]
    * @param {int} directions Number of random directions, or None for every element
    * @param {int} seed Seed of the direction generator
    * @returns {float} The worst relative error over the checks
    """
    if not 1e-5 <= eps <= 1e-2:
        raise ContractError(f'grad_check step {eps} outside [1e-5, 1e-2]')
    saved_grad = x.grad
    x.grad = None
    with Tape():
        out = f(x)
        backward(out)
    analytic = np.zeros(x.shape, dtype=DTYPE) if x.grad is None else x.grad.copy()
    x.grad = saved_grad

    def evaluate():
        with no_grad():
            return float(np.sum(f(x).values))

    original = x.values.copy()

    def central(delta):
        x.values[...] = original + delta
        upper = evaluate()
        x.values[...] = original - delta
        lower = evaluate()
        x.values[...] = original
        return (upper - lower) / (2 * eps)

    worst = 0.0
    if directions is None:
        for index in np.ndindex(*x.shape):
            delta = np.zeros(x.shape, dtype=DTYPE)
            delta[index] = eps
            worst = max(worst, relative_error(analytic[index], central(delta)))
        return worst
    rng = np.random.default_rng(seed)
    for _ in range(directions):
        direction = rng.standard_normal(x.shape)
        direction /= np.linalg.norm(direction)
        worst = max(worst, relative_error(float(np.sum(analytic * direction)), central(eps * direction)))
    return worst
