"""
Reverse-mode differentiation over float64 numpy arrays.

A Tensor stores its value, its gradient and a closure that pushes the
output gradient to its children. `backward()` walks the graph in reverse
topological order. Constants (requires_grad=False) never receive gradients,
which is how detached quantities are expressed.
"""

from typing import Callable, Iterable, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.special import expit


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_backward", "_prev", "_op", "name")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        _children: Tuple["Tensor", ...] = (),
        _op: str = "",
        name: str = "",
    ):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._backward: Callable[[], None] = lambda: None
        self._prev = _children
        self._op = _op
        self.name = name

    # --------------------------------------------------
    # Utilidades internas
    # --------------------------------------------------
    @staticmethod
    def lift(x) -> "Tensor":
        return x if isinstance(x, Tensor) else Tensor(x)

    def _accumulate(self, g: np.ndarray) -> None:
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    @staticmethod
    def _result(data, children: Sequence["Tensor"], op: str) -> "Tensor":
        needs = any(c.requires_grad for c in children)
        return Tensor(data, requires_grad=needs, _children=tuple(children) if needs else (), _op=op)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, op={self._op!r}, requires_grad={self.requires_grad})"

    # --------------------------------------------------
    # Elementwise
    # --------------------------------------------------
    def __add__(self, other) -> "Tensor":
        other = Tensor.lift(other)
        out = Tensor._result(self.data + other.data, (self, other), "+")

        def _backward():
            self._accumulate(_unbroadcast(out.grad, self.shape))
            other._accumulate(_unbroadcast(out.grad, other.shape))
        out._backward = _backward
        return out

    def __mul__(self, other) -> "Tensor":
        other = Tensor.lift(other)
        out = Tensor._result(self.data * other.data, (self, other), "*")

        def _backward():
            self._accumulate(_unbroadcast(out.grad * other.data, self.shape))
            other._accumulate(_unbroadcast(out.grad * self.data, other.shape))
        out._backward = _backward
        return out

    def __pow__(self, power: int) -> "Tensor":
        assert isinstance(power, (int, float)), "only int/float powers"
        out = Tensor._result(self.data ** power, (self,), f"**{power}")

        def _backward():
            self._accumulate(power * self.data ** (power - 1) * out.grad)
        out._backward = _backward
        return out

    def __neg__(self):
        return self * -1.0

    def __radd__(self, other):
        return self + other

    def __sub__(self, other):
        return self + (-Tensor.lift(other))

    def __rsub__(self, other):
        return Tensor.lift(other) + (-self)

    def __rmul__(self, other):
        return self * other

    # --------------------------------------------------
    # Álgebra
    # --------------------------------------------------
    def __matmul__(self, other) -> "Tensor":
        other = Tensor.lift(other)
        out = Tensor._result(self.data @ other.data, (self, other), "@")

        def _backward():
            self._accumulate(out.grad @ other.data.T)
            other._accumulate(self.data.T @ out.grad)
        out._backward = _backward
        return out

    @property
    def T(self) -> "Tensor":
        out = Tensor._result(self.data.T, (self,), "T")

        def _backward():
            self._accumulate(out.grad.T)
        out._backward = _backward
        return out

    def sum(self, axis: int | None = None) -> "Tensor":
        out = Tensor._result(self.data.sum(axis=axis), (self,), "sum")

        def _backward():
            g = out.grad if axis is None else np.expand_dims(out.grad, axis)
            self._accumulate(np.broadcast_to(g, self.shape).copy())
        out._backward = _backward
        return out

    def mean(self) -> "Tensor":
        n = max(self.data.size, 1)
        return self.sum() * (1.0 / n)

    def take_rows(self, idx: np.ndarray) -> "Tensor":
        idx = np.asarray(idx, dtype=np.int64)
        out = Tensor._result(self.data[idx], (self,), "take")

        def _backward():
            if self.requires_grad:
                g = np.zeros_like(self.data)
                np.add.at(g, idx, out.grad)
                self._accumulate(g)
        out._backward = _backward
        return out

    def log_sigmoid(self) -> "Tensor":
        # ln sigma(x) = -ln(1 + e^{-x}), evaluated without overflow
        out = Tensor._result(-np.logaddexp(0.0, -self.data), (self,), "logsig")

        def _backward():
            self._accumulate(expit(-self.data) * out.grad)
        out._backward = _backward
        return out

    # --------------------------------------------------
    # Recorrido inverso
    # --------------------------------------------------
    def backward(self) -> None:
        if self.data.size != 1:
            raise ValueError("backward() starts from a scalar")

        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for child in node._prev:
                if id(child) not in visited:
                    stack.append((child, False))

        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node.grad is not None:
                node._backward()


# ------------------------------------------------------------
# Operaciones compuestas
# ------------------------------------------------------------
def concat_rows(parts: Iterable[Tensor]) -> Tensor:
    parts = list(parts)
    out = Tensor._result(np.concatenate([p.data for p in parts], axis=0), parts, "concat")
    bounds = np.cumsum([0] + [p.shape[0] for p in parts])

    def _backward():
        for p, lo, hi in zip(parts, bounds[:-1], bounds[1:]):
            p._accumulate(out.grad[lo:hi])
    out._backward = _backward
    return out


def rowdot(a: Tensor, b: Tensor) -> Tensor:
    return (a * b).sum(axis=1)


def spmm(matrix: sp.csr_matrix, x: Tensor) -> Tensor:
    """matrix @ x with a constant sparse matrix."""
    out = Tensor._result(np.asarray(matrix @ x.data), (x,), "spmm")

    def _backward():
        x._accumulate(np.asarray(matrix.T @ out.grad))
    out._backward = _backward
    return out


def edge_spmm(
    rows: np.ndarray,
    cols: np.ndarray,
    coef: np.ndarray,
    weight: Tensor,
    x: Tensor,
    shape: Tuple[int, int],
) -> Tensor:
    """
    S @ x where S[rows[e], cols[e]] = coef[e] * weight[e] and `weight` is
    differentiable (one entry per edge).
    """
    matrix = sp.csr_matrix((coef * weight.data, (rows, cols)), shape=shape)
    out = Tensor._result(np.asarray(matrix @ x.data), (weight, x), "edge_spmm")

    def _backward():
        x._accumulate(np.asarray(matrix.T @ out.grad))
        if weight.requires_grad:
            weight._accumulate(coef * np.einsum("ij,ij->i", out.grad[rows], x.data[cols]))
    out._backward = _backward
    return out


def cosine_rows(a: Tensor, b: Tensor) -> Tuple[Tensor, int]:
    """
    Row-wise cosine similarity. Rows with a zero-norm side get similarity 0
    and no gradient; their count is returned alongside.
    """
    na = np.linalg.norm(a.data, axis=1)
    nb = np.linalg.norm(b.data, axis=1)
    ok = (na > 0) & (nb > 0)
    denom = np.where(ok, na * nb, 1.0)
    dots = np.einsum("ij,ij->i", a.data, b.data)
    sim = np.where(ok, dots / denom, 0.0)

    out = Tensor._result(sim, (a, b), "cos")

    def _backward():
        g = np.where(ok, out.grad, 0.0)[:, None]
        na_safe = np.where(ok, na, 1.0)[:, None]
        nb_safe = np.where(ok, nb, 1.0)[:, None]
        s = sim[:, None]
        a._accumulate(g * (b.data / (na_safe * nb_safe) - s * a.data / na_safe ** 2))
        b._accumulate(g * (a.data / (na_safe * nb_safe) - s * b.data / nb_safe ** 2))
    out._backward = _backward
    return out, int((~ok).sum())


def sum_squares(t: Tensor) -> Tensor:
    return (t * t).sum()
