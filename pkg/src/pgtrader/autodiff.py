"""Tape-based reverse-mode automatic differentiation over numpy arrays.

Small op set sized for a decoder transformer and PPO losses: arithmetic
with broadcasting, matmul (batched), exp/log/tanh, reductions, reshapes,
indexing/gather, and elementwise min/max. Everything runs in float64.
Gradients accumulate into ``.grad`` after calling ``backward()`` on a
scalar (or seeded) output.
"""

from __future__ import annotations

import numpy as np


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a broadcasted gradient back to the original operand shape."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    # keep numpy from broadcasting elementwise over Tensor objects; binary
    # ops with ndarrays then dispatch to the reflected methods below
    __array_ufunc__ = None

    def __init__(self, data, requires_grad: bool = False, _parents: tuple = ()):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = None

    # ------------------------------------------------------------------
    # graph plumbing

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def _accum(self, grad: np.ndarray) -> None:
        """Accumulate a gradient contribution (copies on first receipt)."""
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = grad.copy()
        else:
            self.grad += grad

    def _accum_owned(self, grad: np.ndarray) -> None:
        """Accumulate a freshly allocated gradient the caller will not reuse."""
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = grad
        else:
            self.grad += grad

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def backward(self, seed: np.ndarray | float | None = None) -> None:
        """Backpropagate from this node; seeds default to ones."""
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited and parent.requires_grad:
                    stack.append((parent, False))

        if seed is None:
            seed = np.ones_like(self.data)
        self.grad = np.broadcast_to(np.asarray(seed, dtype=np.float64), self.data.shape).copy()
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward()

    def zero_graph_grads(self) -> None:
        """Clear grads across the whole graph so backward can run again."""
        visited: set[int] = set()
        stack = [self]
        while stack:
            node = stack.pop()
            if id(node) in visited:
                continue
            visited.add(id(node))
            node.grad = None
            stack.extend(node._parents)

    # ------------------------------------------------------------------
    # arithmetic

    @staticmethod
    def _wrap(value) -> "Tensor":
        return value if isinstance(value, Tensor) else Tensor(value)

    def __add__(self, other):
        other = self._wrap(other)
        out = Tensor(self.data + other.data, self.requires_grad or other.requires_grad,
                     (self, other))

        def _backward():
            for parent in (self, other):
                g = _unbroadcast(out.grad, parent.data.shape)
                # no reduction means g aliases out.grad, shared by both parents
                if g is out.grad:
                    parent._accum(g)
                else:
                    parent._accum_owned(g)
        out._backward = _backward
        return out

    __radd__ = __add__

    def __mul__(self, other):
        other = self._wrap(other)
        out = Tensor(self.data * other.data, self.requires_grad or other.requires_grad,
                     (self, other))

        def _backward():
            if self.requires_grad:
                self._accum_owned(_unbroadcast(out.grad * other.data, self.data.shape))
            if other.requires_grad:
                other._accum_owned(_unbroadcast(out.grad * self.data, other.data.shape))
        out._backward = _backward
        return out

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-self._wrap(other))

    def __rsub__(self, other):
        return self._wrap(other) + (-self)

    def __truediv__(self, other):
        other = self._wrap(other)
        return self * other ** -1.0

    def __rtruediv__(self, other):
        return self._wrap(other) * self ** -1.0

    def __pow__(self, exponent: float):
        out = Tensor(self.data ** exponent, self.requires_grad, (self,))

        def _backward():
            self._accum_owned(out.grad * exponent * self.data ** (exponent - 1.0))
        out._backward = _backward
        return out

    def __matmul__(self, other):
        other = self._wrap(other)
        out = Tensor(self.data @ other.data, self.requires_grad or other.requires_grad,
                     (self, other))

        def _backward():
            if self.requires_grad:
                self._accum_owned(
                    _unbroadcast(out.grad @ other.data.swapaxes(-1, -2), self.data.shape)
                )
            if other.requires_grad:
                other._accum_owned(
                    _unbroadcast(self.data.swapaxes(-1, -2) @ out.grad, other.data.shape)
                )
        out._backward = _backward
        return out

    # ------------------------------------------------------------------
    # elementwise functions

    def exp(self):
        out = Tensor(np.exp(self.data), self.requires_grad, (self,))

        def _backward():
            self._accum_owned(out.grad * out.data)
        out._backward = _backward
        return out

    def log(self):
        out = Tensor(np.log(self.data), self.requires_grad, (self,))

        def _backward():
            self._accum_owned(out.grad / self.data)
        out._backward = _backward
        return out

    def tanh(self):
        out = Tensor(np.tanh(self.data), self.requires_grad, (self,))

        def _backward():
            self._accum_owned(out.grad * (1.0 - out.data ** 2))
        out._backward = _backward
        return out

    def maximum(self, other):
        other = self._wrap(other)
        out = Tensor(np.maximum(self.data, other.data),
                     self.requires_grad or other.requires_grad, (self, other))

        def _backward():
            take_self = self.data >= other.data
            if self.requires_grad:
                self._accum_owned(_unbroadcast(out.grad * take_self, self.data.shape))
            if other.requires_grad:
                other._accum_owned(_unbroadcast(out.grad * ~take_self, other.data.shape))
        out._backward = _backward
        return out

    def minimum(self, other):
        other = self._wrap(other)
        out = Tensor(np.minimum(self.data, other.data),
                     self.requires_grad or other.requires_grad, (self, other))

        def _backward():
            take_self = self.data <= other.data
            if self.requires_grad:
                self._accum_owned(_unbroadcast(out.grad * take_self, self.data.shape))
            if other.requires_grad:
                other._accum_owned(_unbroadcast(out.grad * ~take_self, other.data.shape))
        out._backward = _backward
        return out

    def clip(self, lo: float, hi: float):
        return self.maximum(lo).minimum(hi)

    # ------------------------------------------------------------------
    # reductions and shape ops

    def sum(self, axis=None, keepdims: bool = False):
        out = Tensor(self.data.sum(axis=axis, keepdims=keepdims), self.requires_grad, (self,))

        def _backward():
            grad = out.grad
            if axis is not None and not keepdims:
                grad = np.expand_dims(grad, axis)
            self._accum_owned(np.broadcast_to(grad, self.data.shape).copy())
        out._backward = _backward
        return out

    def mean(self, axis=None, keepdims: bool = False):
        count = self.data.size if axis is None else np.prod(
            [self.data.shape[a] for a in (axis if isinstance(axis, tuple) else (axis,))]
        )
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / float(count))

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        out = Tensor(self.data.reshape(shape), self.requires_grad, (self,))

        def _backward():
            # the view is safe to own: out.grad is never read again
            self._accum_owned(out.grad.reshape(self.data.shape))
        out._backward = _backward
        return out

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        inverse = tuple(np.argsort(axes))
        out = Tensor(self.data.transpose(axes), self.requires_grad, (self,))

        def _backward():
            self._accum_owned(out.grad.transpose(inverse))
        out._backward = _backward
        return out

    def swapaxes(self, a: int, b: int):
        out = Tensor(self.data.swapaxes(a, b), self.requires_grad, (self,))

        def _backward():
            self._accum_owned(out.grad.swapaxes(a, b))
        out._backward = _backward
        return out

    def __getitem__(self, key):
        """Static indexing/gather; duplicate indices accumulate in backward."""
        out = Tensor(self.data[key], self.requires_grad, (self,))

        def _backward():
            grad = np.zeros_like(self.data)
            np.add.at(grad, key, out.grad)
            self._accum_owned(grad)
        out._backward = _backward
        return out

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


# ----------------------------------------------------------------------
# composite helpers


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Shift-invariant softmax; the max shift is detached as a constant."""
    shift = Tensor(x.data.max(axis=axis, keepdims=True))
    e = (x - shift).exp()
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    shift = Tensor(x.data.max(axis=axis, keepdims=True))
    z = x - shift
    return z - z.exp().sum(axis=axis, keepdims=True).log()


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    mu = x.mean(axis=-1, keepdims=True)
    centered = x - mu
    var = (centered ** 2.0).mean(axis=-1, keepdims=True)
    normed = centered * (var + eps) ** -0.5
    return normed * gain + bias


__all__ = ["Tensor", "softmax", "log_softmax", "layer_norm"]
