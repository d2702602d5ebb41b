"""Dense float64 tensors with reverse-mode automatic differentiation.

Only the operations the recognizer needs are provided. Every op records its
operands and a backward closure on the output tensor; :meth:`Tensor.backward`
walks the recorded graph in reverse topological order.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager
from typing import Callable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = [
    "Tensor",
    "no_grad",
    "is_grad_enabled",
    "tensor",
    "add",
    "sub",
    "mul",
    "matmul",
    "tanh",
    "sigmoid",
    "exp",
    "softmax",
    "concat",
    "reshape",
    "transpose",
    "tsum",
    "mean",
    "embedding_lookup",
    "cross_entropy",
    "conv2d",
    "pad_edge",
    "max_pool2d",
    "avg_pool2d",
    "upsample2x_nearest",
]

_state = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextmanager
def no_grad():
    """Disable graph recording in the current thread."""
    prev = is_grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = np.zeros_like(self.data) if self.requires_grad else None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self.op = ""

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.item())

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> Tensor:
        return Tensor(self.data)

    def zero_grad(self) -> None:
        if self.requires_grad:
            self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    __add__ = lambda self, other: add(self, other)  # noqa: E731
    __radd__ = lambda self, other: add(other, self)  # noqa: E731
    __sub__ = lambda self, other: sub(self, other)  # noqa: E731
    __rsub__ = lambda self, other: sub(other, self)  # noqa: E731
    __mul__ = lambda self, other: mul(self, other)  # noqa: E731
    __rmul__ = lambda self, other: mul(other, self)  # noqa: E731
    __matmul__ = lambda self, other: matmul(self, other)  # noqa: E731

    def __neg__(self) -> Tensor:
        return mul(self, -1.0)

    def backward(self) -> None:
        """Populate ``.grad`` of every requires_grad leaf reachable from this scalar."""
        if self.data.size != 1:
            raise ValueError(f"backward() needs a scalar loss, got shape {self.shape}")
        if not self.requires_grad:
            raise ValueError("loss does not depend on any tensor that requires grad")
        order = _topological_order(self)
        for node in order:
            if node._parents:
                node.grad = np.zeros_like(node.data)
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None:
                node._backward(node.grad)


def _topological_order(root: Tensor) -> list[Tensor]:
    # iterative DFS; decoder graphs are far deeper than the recursion limit
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in reversed(node._parents):
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data: np.ndarray, parents: Sequence[Tensor], backward, op: str) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.op = op
    out._parents = ()
    out._backward = None
    out.grad = None
    needs = is_grad_enabled() and any(p.requires_grad for p in parents)
    out.requires_grad = needs
    if needs:
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if t.requires_grad:
        t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise and contraction ops
# ---------------------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)

    def backward(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(g, b.shape))

    return _result(a.data + b.data, (a, b), backward, "add")


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)

    def backward(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(-g, b.shape))

    return _result(a.data - b.data, (a, b), backward, "sub")


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)

    def backward(g):
        if a.requires_grad:
            a.grad += _unbroadcast(g * b.data, a.shape)
        if b.requires_grad:
            b.grad += _unbroadcast(g * a.data, b.shape)

    return _result(a.data * b.data, (a, b), backward, "mul")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product for 1-D/2-D operands (numpy ``@`` semantics)."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim not in (1, 2) or b.ndim not in (1, 2):
        raise ValueError(f"matmul supports 1-D/2-D operands, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")

    def backward(g):
        if a.requires_grad:
            if b.ndim == 1:
                ga = np.multiply.outer(g, b.data)
            else:
                ga = g @ b.data.T
            a.grad += ga
        if b.requires_grad:
            if a.ndim == 1:
                gb = np.multiply.outer(a.data, g)
            else:
                gb = a.data.T @ g
            b.grad += gb

    return _result(a.data @ b.data, (a, b), backward, "matmul")


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)

    def backward(g):
        x.grad += g * (1.0 - y * y)

    return _result(y, (x,), backward, "tanh")


def sigmoid(x: Tensor) -> Tensor:
    # split by sign so exp never overflows
    d = x.data
    y = np.empty_like(d)
    pos = d >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
    ez = np.exp(d[~pos])
    y[~pos] = ez / (1.0 + ez)

    def backward(g):
        x.grad += g * y * (1.0 - y)

    return _result(y, (x,), backward, "sigmoid")


def exp(x: Tensor) -> Tensor:
    y = np.exp(x.data)

    def backward(g):
        x.grad += g * y

    return _result(y, (x,), backward, "exp")


def _check_axis(axis: int, ndim: int) -> int:
    if not -ndim <= axis < ndim:
        raise ValueError(f"axis {axis} out of range for {ndim}-D tensor")
    return axis % ndim


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    axis = _check_axis(axis, x.ndim)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        x.grad += y * (g - (g * y).sum(axis=axis, keepdims=True))

    return _result(y, (x,), backward, "softmax")


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    if not tensors:
        raise ValueError("concat needs at least one tensor")
    axis = _check_axis(axis, tensors[0].ndim)
    sizes = [t.shape[axis] for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                t.grad += g[tuple(idx)]

    return _result(data, tensors, backward, "concat")


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    def backward(g):
        x.grad += g.reshape(x.shape)

    return _result(x.data.reshape(shape), (x,), backward, "reshape")


def transpose(x: Tensor) -> Tensor:
    if x.ndim != 2:
        raise ValueError(f"transpose expects a 2-D tensor, got {x.shape}")

    def backward(g):
        x.grad += g.T

    return _result(x.data.T.copy(), (x,), backward, "transpose")


def tsum(x: Tensor, axis: int | None = None) -> Tensor:
    if axis is not None:
        axis = _check_axis(axis, x.ndim)

    def backward(g):
        if axis is None:
            x.grad += np.broadcast_to(g, x.shape)
        else:
            x.grad += np.broadcast_to(np.expand_dims(g, axis), x.shape)

    return _result(np.asarray(x.data.sum(axis=axis)), (x,), backward, "sum")


def mean(x: Tensor, axis: int | None = None) -> Tensor:
    n = x.size if axis is None else x.shape[_check_axis(axis, x.ndim)]
    return mul(tsum(x, axis), 1.0 / n)


def embedding_lookup(table: Tensor, index: int) -> Tensor:
    """Row ``index`` of a [V, m] table."""
    n = table.shape[0]
    if not 0 <= index < n:
        raise IndexError(f"id {index} out of range for table with {n} rows")

    def backward(g):
        table.grad[index] += g

    return _result(table.data[index].copy(), (table,), backward, "embedding")


def cross_entropy(logits: Tensor, target: int) -> Tensor:
    """``-log softmax(logits)[target]`` for a 1-D logit vector."""
    if logits.ndim != 1:
        raise ValueError(f"cross_entropy expects 1-D logits, got {logits.shape}")
    n = logits.shape[0]
    if not 0 <= target < n:
        raise IndexError(f"target id {target} out of range [0, {n})")
    z = logits.data - logits.data.max()
    lse = np.log(np.exp(z).sum())
    loss = lse - z[target]

    def backward(g):
        p = np.exp(z - lse)
        p[target] -= 1.0
        logits.grad += g * p

    return _result(np.asarray(loss), (logits,), backward, "cross_entropy")


# ---------------------------------------------------------------------------
# image ops, N,C,H,W layout
# ---------------------------------------------------------------------------


def _pair(v) -> tuple[int, int]:
    if isinstance(v, int):
        return (v, v)
    a, b = v
    return (int(a), int(b))


def _out_size(n: int, k: int, s: int, p: int = 0) -> int:
    return (n + 2 * p - k) // s + 1


def conv2d(x: Tensor, kernel: Tensor, bias: Tensor | None = None, stride=1, padding=0) -> Tensor:
    """Cross-correlation of ``x[N,Cin,H,W]`` with ``kernel[Cout,Cin,kh,kw]``, zero padding."""
    sh, sw = _pair(stride)
    ph, pw = _pair(padding)
    if x.ndim != 4 or kernel.ndim != 4:
        raise ValueError(f"conv2d expects 4-D input and kernel, got {x.shape} and {kernel.shape}")
    n, cin, h, w = x.shape
    cout, kcin, kh, kw = kernel.shape
    if kcin != cin:
        raise ValueError(
            f"conv2d channel mismatch: input has {cin} channels, kernel expects {kcin} "
            f"(input {x.shape}, kernel {kernel.shape})"
        )
    if sh < 1 or sw < 1:
        raise ValueError(f"stride must be >= 1, got {(sh, sw)}")
    if kh > h + 2 * ph or kw > w + 2 * pw:
        raise ValueError(f"kernel {(kh, kw)} larger than padded input {(h + 2 * ph, w + 2 * pw)}")
    if bias is not None and bias.shape != (cout,):
        raise ValueError(f"bias shape {bias.shape} does not match {cout} output channels")
    ho, wo = _out_size(h, kh, sh, ph), _out_size(w, kw, sw, pw)
    xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if (ph or pw) else x.data
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw][:, :, :ho, :wo]
    # win: [N, Cin, Ho, Wo, kh, kw]
    out = np.tensordot(win, kernel.data, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    if bias is not None:
        out = out + bias.data[None, :, None, None]
    out = np.ascontiguousarray(out)
    parents = (x, kernel) if bias is None else (x, kernel, bias)

    def backward(g):
        if kernel.requires_grad:
            kernel.grad += np.tensordot(g, win, axes=([0, 2, 3], [0, 2, 3]))
        if bias is not None and bias.requires_grad:
            bias.grad += g.sum(axis=(0, 2, 3))
        if x.requires_grad:
            # [N, Ho, Wo, Cin, kh, kw], scattered back one kernel offset at a time
            gcols = np.tensordot(g, kernel.data, axes=([1], [0])).transpose(0, 3, 1, 2, 4, 5)
            gxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, :, i : i + sh * ho : sh, j : j + sw * wo : sw] += gcols[..., i, j]
            x.grad += gxp[:, :, ph : ph + h, pw : pw + w]

    return _result(out, parents, backward, "conv2d")


def pad_edge(x: Tensor, padding) -> Tensor:
    """Replicate-pad the two trailing axes of a 4-D tensor."""
    ph, pw = _pair(padding)
    h, w = x.shape[2], x.shape[3]
    data = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw)), mode="edge")

    def backward(g):
        g = g.copy()
        if ph:
            g[:, :, ph, :] += g[:, :, :ph, :].sum(axis=2)
            g[:, :, ph + h - 1, :] += g[:, :, ph + h :, :].sum(axis=2)
        g = g[:, :, ph : ph + h, :]
        if pw:
            g[:, :, :, pw] += g[:, :, :, :pw].sum(axis=3)
            g[:, :, :, pw + w - 1] += g[:, :, :, pw + w :].sum(axis=3)
        x.grad += g[:, :, :, pw : pw + w]

    return _result(data, (x,), backward, "pad_edge")


def _pool_windows(x: Tensor, window, stride):
    kh, kw = _pair(window)
    sh, sw = _pair(stride)
    if kh < 1 or kw < 1:
        raise ValueError(f"pooling window must be non-empty, got {(kh, kw)}")
    if sh < 1 or sw < 1:
        raise ValueError(f"stride must be >= 1, got {(sh, sw)}")
    if x.ndim != 4:
        raise ValueError(f"pooling expects a 4-D tensor, got {x.shape}")
    h, w = x.shape[2], x.shape[3]
    if kh > h or kw > w:
        raise ValueError(f"pooling window {(kh, kw)} exceeds input extent {(h, w)}")
    ho, wo = _out_size(h, kh, sh), _out_size(w, kw, sw)
    win = sliding_window_view(x.data, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw][:, :, :ho, :wo]
    return win, (kh, kw), (sh, sw), (ho, wo)


def max_pool2d(x: Tensor, window=2, stride=2) -> Tensor:
    win, (kh, kw), (sh, sw), (ho, wo) = _pool_windows(x, window, stride)
    flat = win.reshape(win.shape[:4] + (kh * kw,))
    arg = flat.argmax(axis=-1)  # first maximum wins ties
    out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]

    def backward(g):
        gx = np.zeros_like(x.data)
        for k in range(kh * kw):
            i, j = divmod(k, kw)
            gx[:, :, i : i + sh * ho : sh, j : j + sw * wo : sw] += np.where(arg == k, g, 0.0)
        x.grad += gx

    return _result(np.ascontiguousarray(out), (x,), backward, "max_pool2d")


def avg_pool2d(x: Tensor, window=2, stride=2) -> Tensor:
    win, (kh, kw), (sh, sw), (ho, wo) = _pool_windows(x, window, stride)
    out = win.mean(axis=(4, 5))

    def backward(g):
        gx = np.zeros_like(x.data)
        share = g / (kh * kw)
        for i in range(kh):
            for j in range(kw):
                gx[:, :, i : i + sh * ho : sh, j : j + sw * wo : sw] += share
        x.grad += gx

    return _result(out, (x,), backward, "avg_pool2d")


def upsample2x_nearest(x: Tensor) -> Tensor:
    if x.ndim != 4:
        raise ValueError(f"upsample expects a 4-D tensor, got {x.shape}")
    n, c, h, w = x.shape
    out = np.repeat(np.repeat(x.data, 2, axis=2), 2, axis=3)

    def backward(g):
        x.grad += g.reshape(n, c, h, 2, w, 2).sum(axis=(3, 5))

    return _result(out, (x,), backward, "upsample2x")
