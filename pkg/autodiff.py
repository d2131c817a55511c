"""Dense tensors with reverse-mode differentiation.

Only what the recurrent model needs: linear maps, the LSTM cell,
segment-wise softmax, dropout, concatenation, binary cross-entropy,
and the Adam optimizer with a milestone learning-rate schedule.
"""

import numpy as np
import scipy.special

import constants
from utils import Error


class Tensor:
    "Dense array of reals, its gradient, and the operation that produced it."

    def __init__(self, values, requires_grad=False, parents=(), backward=None, op=None):
        values = np.asarray(values)
        if not np.issubdtype(values.dtype, np.floating):
            values = values.astype(np.float64)
        self.values = values
        self.requires_grad = bool(requires_grad) or any([p.requires_grad for p in parents])
        self.grad = None
        # Intermediate results keep the graph only when some input needs it.
        self.parents = tuple(parents) if self.requires_grad else ()
        self.backward_fn = backward if self.requires_grad else None
        self.op = op

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op})"

    @property
    def shape(self):
        return self.values.shape

    @property
    def dtype(self):
        return self.values.dtype

    def item(self):
        return float(self.values)

    def zero_grad(self):
        self.grad = None

    def backward(self, grad=None):
        "Accumulate gradients of this tensor into the .grad of all leaves."
        if grad is None:
            if self.values.size != 1:
                raise Error("backward: gradient needed for non-scalar", constants.SHAPE_ERROR)
            grad = np.ones_like(self.values)
        grads = {id(self): grad}
        for node in reversed(self._topological()):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if not node.parents:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node.parents, node.backward_fn(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = grads[key] + pg if key in grads else pg

    def _topological(self):
        "Nodes of the graph in topological order; iterative to allow long sequences."
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node.parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        return order

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(value):
    return value if isinstance(value, Tensor) else Tensor(value)


def _unbroadcast(grad, shape):
    "Sum the gradient over the axes that were broadcast to reach its shape."
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(name, a, b):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise Error(f"{name}: shapes {a.shape} and {b.shape} differ", constants.SHAPE_ERROR)


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("add", a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor(a.values + b.values, parents=(a, b), backward=backward, op="add")


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("mul", a, b)

    def backward(g):
        return _unbroadcast(g * b.values, a.shape), _unbroadcast(g * a.values, b.shape)

    return Tensor(a.values * b.values, parents=(a, b), backward=backward, op="mul")


def matmul(a, b):
    "Product of a vector or matrix with a matrix."
    a, b = as_tensor(a), as_tensor(b)
    if b.values.ndim != 2 or a.values.ndim not in (1, 2) or a.shape[-1] != b.shape[0]:
        raise Error(f"matmul: shapes {a.shape} and {b.shape} differ", constants.SHAPE_ERROR)

    def backward(g):
        if a.values.ndim == 1:
            return g @ b.values.T, np.outer(a.values, g)
        return g @ b.values.T, a.values.T @ g

    return Tensor(a.values @ b.values, parents=(a, b), backward=backward, op="matmul")


def linear(x, W, b=None):
    "Affine map x W + b; x is (features,) or (batch, features)."
    x, W = as_tensor(x), as_tensor(W)
    if W.values.ndim != 2 or x.values.ndim not in (1, 2) or x.shape[-1] != W.shape[0]:
        raise Error(f"linear: input {x.shape} and weight {W.shape} differ", constants.SHAPE_ERROR)
    parents = [x, W]
    values = x.values @ W.values
    if b is not None:
        b = as_tensor(b)
        if b.shape != (W.shape[1],):
            raise Error(f"linear: bias {b.shape} and weight {W.shape} differ", constants.SHAPE_ERROR)
        parents.append(b)
        values = values + b.values

    def backward(g):
        x2 = x.values.reshape(-1, W.shape[0])
        g2 = g.reshape(-1, W.shape[1])
        result = [g @ W.values.T, x2.T @ g2]
        if b is not None:
            result.append(g2.sum(axis=0))
        return result

    return Tensor(values, parents=parents, backward=backward, op="linear")


def sigmoid(x):
    x = as_tensor(x)
    y = scipy.special.expit(x.values)

    def backward(g):
        return (g * y * (1.0 - y),)

    return Tensor(y, parents=(x,), backward=backward, op="sigmoid")


def tanh(x):
    x = as_tensor(x)
    y = np.tanh(x.values)

    def backward(g):
        return (g * (1.0 - y * y),)

    return Tensor(y, parents=(x,), backward=backward, op="tanh")


def relu(x):
    x = as_tensor(x)
    positive = x.values > 0

    def backward(g):
        return (g * positive,)

    return Tensor(x.values * positive, parents=(x,), backward=backward, op="relu")


def columns(x, start, stop):
    "Slice [start, stop) of the last axis."
    x = as_tensor(x)
    if not 0 <= start <= stop <= x.shape[-1]:
        raise Error(f"columns: [{start}, {stop}) outside {x.shape}", constants.SHAPE_ERROR)

    def backward(g):
        result = np.zeros_like(x.values)
        result[..., start:stop] = g
        return (result,)

    return Tensor(x.values[..., start:stop], parents=(x,), backward=backward, op="columns")


def split(x, widths):
    "Split the last axis into consecutive parts of the given widths."
    x = as_tensor(x)
    if sum(widths) != x.shape[-1]:
        raise Error(f"split: widths {widths} do not cover {x.shape}", constants.SHAPE_ERROR)
    offsets = np.cumsum([0] + list(widths))
    return [columns(x, int(a), int(b)) for a, b in zip(offsets[:-1], offsets[1:])]


def concat(xs):
    "Concatenate along the last axis."
    xs = [as_tensor(x) for x in xs]
    if not xs:
        raise Error("concat: nothing to concatenate", constants.SHAPE_ERROR)
    leading = set([x.shape[:-1] for x in xs])
    if len(leading) != 1:
        raise Error(f"concat: shapes {[x.shape for x in xs]} differ", constants.SHAPE_ERROR)
    offsets = np.cumsum([0] + [x.shape[-1] for x in xs])

    def backward(g):
        return [g[..., a:b] for a, b in zip(offsets[:-1], offsets[1:])]

    return Tensor(
        np.concatenate([x.values for x in xs], axis=-1),
        parents=xs,
        backward=backward,
        op="concat",
    )


def one_hot(index, width, dtype=np.float64):
    "Return a vector (or a matrix, for several indices) of one-hot rows."
    indices = np.asarray(index)
    if np.any(indices < 0) or np.any(indices >= width):
        raise Error(f"one_hot: index {index} outside width {width}", constants.SHAPE_ERROR)
    return Tensor(np.eye(width, dtype=dtype)[indices])


def recurrent_cell_step(x, h_prev, c_prev, params):
    """One LSTM step; returns (h, c). The params mapping holds 'weight_ih'
    (input, 4H), 'weight_hh' (H, 4H), 'bias_ih' and 'bias_hh' (4H,),
    with the gates in the order input, forget, candidate, output.
    """
    hidden = params["weight_hh"].shape[0]
    if params["weight_hh"].shape[1] != 4 * hidden or params["weight_ih"].shape[1] != 4 * hidden:
        raise Error("recurrent_cell_step: gate weights are not 4H wide", constants.SHAPE_ERROR)
    for name, state in (("h_prev", h_prev), ("c_prev", c_prev)):
        if as_tensor(state).shape[-1] != hidden:
            raise Error(
                f"recurrent_cell_step: {name} {as_tensor(state).shape} not of width {hidden}",
                constants.SHAPE_ERROR,
            )
    gates = add(
        linear(x, params["weight_ih"], params["bias_ih"]),
        linear(h_prev, params["weight_hh"], params["bias_hh"]),
    )
    i, f, g, o = split(gates, [hidden] * 4)
    c = add(mul(sigmoid(f), c_prev), mul(sigmoid(i), tanh(g)))
    h = mul(sigmoid(o), tanh(c))
    return h, c


def softmax(x, segments=None):
    "Softmax over each consecutive segment of the last axis."
    x = as_tensor(x)
    width = x.shape[-1]
    segments = list(segments or [width])
    if sum(segments) != width:
        raise Error(f"softmax: segments {segments} do not cover width {width}", constants.SHAPE_ERROR)
    offsets = np.cumsum([0] + segments)
    y = np.empty_like(x.values)
    for a, b in zip(offsets[:-1], offsets[1:]):
        part = x.values[..., a:b]
        e = np.exp(part - part.max(axis=-1, keepdims=True))
        y[..., a:b] = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        result = np.empty_like(g)
        for a, b in zip(offsets[:-1], offsets[1:]):
            ys = y[..., a:b]
            gs = g[..., a:b]
            result[..., a:b] = ys * (gs - (gs * ys).sum(axis=-1, keepdims=True))
        return (result,)

    return Tensor(y, parents=(x,), backward=backward, op="softmax")


def dropout(x, rate, training, seed=None):
    """Zero each entry with probability rate and scale the survivors by
    1/(1 - rate) when training; identity otherwise. The seed is an integer
    or a numpy Generator.
    """
    x = as_tensor(x)
    if not training or rate == 0:
        return x
    if not 0 <= rate < 1:
        raise Error(f"dropout: invalid rate {rate}", constants.SHAPE_ERROR)
    generator = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    mask = (generator.random(x.shape) >= rate).astype(x.dtype) / (1.0 - rate)

    def backward(g):
        return (g * mask,)

    return Tensor(x.values * mask, parents=(x,), backward=backward, op="dropout")


def total(x):
    "Sum of all entries."
    x = as_tensor(x)

    def backward(g):
        return (np.full_like(x.values, g),)

    return Tensor(x.values.sum(), parents=(x,), backward=backward, op="total")


def bce_loss(predicted, target, mask=None, eps=constants.BCE_EPS):
    """Binary cross-entropy summed over all entries:
    -sum(t log p + (1 - t) log(1 - p)), with p clamped to [eps, 1 - eps].
    The optional mask weights the rows (all axes but the last).
    """
    predicted = as_tensor(predicted)
    t = target.values if isinstance(target, Tensor) else np.asarray(target)
    if t.shape != predicted.shape:
        raise Error(f"bce_loss: shapes {predicted.shape} and {t.shape} differ", constants.SHAPE_ERROR)
    if mask is None:
        weight = np.ones(predicted.shape[:-1] + (1,), dtype=predicted.dtype)
    else:
        weight = np.asarray(mask, dtype=predicted.dtype)
        if weight.shape != predicted.shape[:-1]:
            raise Error(f"bce_loss: mask {weight.shape} does not fit {predicted.shape}", constants.SHAPE_ERROR)
        weight = weight[..., None]
    values = predicted.values.astype(np.float64)
    p = np.clip(values, eps, 1.0 - eps)
    inside = (values >= eps) & (values <= 1.0 - eps)
    value = -np.sum(weight * (t * np.log(p) + (1.0 - t) * np.log(1.0 - p)))

    def backward(g):
        grad = np.where(inside, -t / p + (1.0 - t) / (1.0 - p), 0.0)
        return ((g * weight * grad).astype(predicted.dtype),)

    return Tensor(predicted.dtype.type(value), parents=(predicted,), backward=backward, op="bce_loss")


def learning_rate(
    epoch,
    lr=constants.LEARNING_RATE,
    decay=constants.DECAY,
    milestones=constants.MILESTONES,
):
    "Learning rate for the 1-based epoch; multiplied by decay for each milestone passed."
    return lr * decay ** len([m for m in milestones if epoch > m])


class AdamState:
    "Moment estimates and hyperparameters of the Adam optimizer."

    def __init__(
        self,
        params,
        lr=constants.LEARNING_RATE,
        decay=constants.DECAY,
        milestones=constants.MILESTONES,
        betas=constants.ADAM_BETAS,
        eps=constants.ADAM_EPS,
    ):
        self.lr = lr
        self.decay = decay
        self.milestones = tuple(milestones)
        self.betas = betas
        self.eps = eps
        self.step_count = 0
        self.first = dict([(name, np.zeros_like(p.values)) for name, p in params.items()])
        self.second = dict([(name, np.zeros_like(p.values)) for name, p in params.items()])

    def learning_rate(self, epoch):
        return learning_rate(epoch, self.lr, self.decay, self.milestones)


def adam_step(params, grads, state, epoch=1):
    """Update the parameters in place with one Adam step at the learning
    rate for the epoch; return the parameters. Missing gradients count as zero.
    """
    state.step_count += 1
    lr = state.learning_rate(epoch)
    beta1, beta2 = state.betas
    correction1 = 1.0 - beta1**state.step_count
    correction2 = 1.0 - beta2**state.step_count
    for name, param in params.items():
        grad = grads.get(name)
        if grad is None:
            grad = np.zeros_like(param.values)
        if grad.shape != param.shape:
            raise Error(f"adam_step: gradient for '{name}' has shape {grad.shape}", constants.SHAPE_ERROR)
        first = state.first[name] = beta1 * state.first[name] + (1.0 - beta1) * grad
        second = state.second[name] = beta2 * state.second[name] + (1.0 - beta2) * grad * grad
        update = lr * (first / correction1) / (np.sqrt(second / correction2) + state.eps)
        param.values -= update.astype(param.dtype)
    return params


def numerical_gradient(f, tensor, step=1e-5):
    "Central finite-difference gradient of the scalar function f() w.r.t. the tensor."
    result = np.zeros_like(tensor.values)
    flat = tensor.values.reshape(-1)
    for i in range(flat.size):
        saved = flat[i]
        flat[i] = saved + step
        plus = float(f().values)
        flat[i] = saved - step
        minus = float(f().values)
        flat[i] = saved
        result.reshape(-1)[i] = (plus - minus) / (2 * step)
    return result
