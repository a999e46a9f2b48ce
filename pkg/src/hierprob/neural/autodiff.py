"""A small reverse-mode automatic differentiation engine over numpy arrays.

Every ``Tensor`` produced by an operation remembers its parents together with
a function mapping the output adjoint to each parent's adjoint (a vector-
Jacobian product). ``backward`` walks this recorded graph in reverse
topological order. A 0-d tensor is a differentiable scalar.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

ArrayLike = "Tensor | np.ndarray | float"


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("value", "grad", "_parents", "requires_grad", "name")
    __array_priority__ = 100

    def __init__(self, value, requires_grad: bool = False, name: str | None = None,
                 _parents: tuple = ()):
        self.value = np.asarray(value, dtype=float)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad or any(p.requires_grad for p, _ in _parents)
        self._parents = _parents if self.requires_grad else ()
        self.name = name

    def __repr__(self) -> str:
        return f"Tensor({self.value!r}{', grad' if self.requires_grad else ''})"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    def item(self) -> float:
        return float(self.value)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self, seed: np.ndarray | float | None = None) -> None:
        """Accumulate d(self)/d(leaf) into ``leaf.grad`` for every reachable leaf."""
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent, _ in node._parents:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))
        adj: dict[int, np.ndarray] = {id(self): np.ones_like(self.value) if seed is None
                                      else np.broadcast_to(np.asarray(seed, dtype=float), self.shape).copy()}
        for node in reversed(order):
            g = adj.pop(id(node), None)
            if g is None:
                continue
            if not node._parents:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, vjp in node._parents:
                if not parent.requires_grad:
                    continue
                pg = _unbroadcast(vjp(g), parent.shape)
                key = id(parent)
                adj[key] = pg if key not in adj else adj[key] + pg

    # arithmetic -----------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return Tensor(-self.value, _parents=((self, lambda g: -g),))

    def __pow__(self, exponent: float):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims: bool = False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], tuple) else shape)

    @property
    def T(self):
        return transpose(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(value, name: str | None = None) -> Tensor:
    return Tensor(np.array(value, dtype=float), requires_grad=True, name=name)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return Tensor(a.value + b.value, _parents=((a, lambda g: g), (b, lambda g: g)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return Tensor(a.value - b.value, _parents=((a, lambda g: g), (b, lambda g: -g)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return Tensor(a.value * b.value, _parents=((a, lambda g: g * b.value), (b, lambda g: g * a.value)))


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.value / b.value
    return Tensor(out, _parents=((a, lambda g: g / b.value), (b, lambda g: -g * out / b.value)))


def power(a, exponent: float) -> Tensor:
    a = as_tensor(a)
    return Tensor(a.value ** exponent,
                  _parents=((a, lambda g: g * exponent * a.value ** (exponent - 1)),))


def square(a) -> Tensor:
    a = as_tensor(a)
    return Tensor(a.value * a.value, _parents=((a, lambda g: 2.0 * g * a.value),))


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    out = np.sqrt(a.value)
    return Tensor(out, _parents=((a, lambda g: 0.5 * g / out),))


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.value)
    return Tensor(out, _parents=((a, lambda g: g * out),))


def log(a) -> Tensor:
    a = as_tensor(a)
    return Tensor(np.log(a.value), _parents=((a, lambda g: g / a.value),))


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.value)
    return Tensor(out, _parents=((a, lambda g: g * (1.0 - out * out)),))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = _sigmoid(a.value)
    return Tensor(out, _parents=((a, lambda g: g * out * (1.0 - out)),))


def softplus(a) -> Tensor:
    """log(1 + exp(x)), evaluated stably."""
    a = as_tensor(a)
    x = a.value
    out = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))
    return Tensor(out, _parents=((a, lambda g: g * _sigmoid(x)),))


def floor_at(a, lower: float) -> Tensor:
    """max(a, lower); the gradient is zero where the floor is active."""
    a = as_tensor(a)
    mask = a.value >= lower
    return Tensor(np.where(mask, a.value, lower), _parents=((a, lambda g: g * mask),))


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def grad_a(g):
        if b.ndim == 1:
            return np.multiply.outer(g, b.value)
        return g @ np.swapaxes(b.value, -1, -2)

    def grad_b(g):
        if a.ndim == 1:
            return np.multiply.outer(a.value, g)
        return np.swapaxes(a.value, -1, -2) @ g

    return Tensor(a.value @ b.value, _parents=((a, grad_a), (b, grad_b)))


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    shape = a.shape

    def grad(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, shape)

    return Tensor(a.value.sum(axis=axis, keepdims=keepdims), _parents=((a, grad),))


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    count = a.value.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return tsum(a, axis, keepdims) * (1.0 / count)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    old = a.shape
    return Tensor(a.value.reshape(shape), _parents=((a, lambda g: g.reshape(old)),))


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    inv = None if axes is None else np.argsort(axes)
    return Tensor(np.transpose(a.value, axes), _parents=((a, lambda g: np.transpose(g, inv)),))


def getitem(a, index) -> Tensor:
    a = as_tensor(a)

    def grad(g):
        out = np.zeros_like(a.value)
        np.add.at(out, index, g)
        return out

    return Tensor(a.value[index], _parents=((a, grad),))


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in ts]
    cuts = np.cumsum(sizes)[:-1]

    def make(i):
        return lambda g: np.split(g, cuts, axis=axis)[i]

    return Tensor(np.concatenate([t.value for t in ts], axis=axis),
                  _parents=tuple((t, make(i)) for i, t in enumerate(ts)))


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]

    def make(i):
        return lambda g: np.take(g, i, axis=axis)

    return Tensor(np.stack([t.value for t in ts], axis=axis),
                  _parents=tuple((t, make(i)) for i, t in enumerate(ts)))


def numerical_gradient(f: Callable[[], float], params: Iterable[Tensor], step: float = 1e-5) -> list[np.ndarray]:
    """Central finite differences of ``f()`` with respect to each parameter's entries."""
    grads = []
    for p in params:
        g = np.zeros_like(p.value)
        flat = p.value.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = f()
            flat[i] = orig - step
            down = f()
            flat[i] = orig
            gflat[i] = (up - down) / (2 * step)
        grads.append(g)
    return grads
