"""Minimal reverse-mode differentiation on numpy arrays.

Every op takes and returns :class:`Tensor`.  Values are float64; shapes never
broadcast implicitly, so every op checks its operands and raises
:class:`ShapeError` naming the op and the offending dims.

Usage::

    w = Tensor(np.ones((3, 2)), requires_grad=True)
    loss = mean(square(dense(x, w, b)))
    backward(loss)
    w.grad
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class ShapeError(ValueError):
    pass


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "op", "parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(())
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.op = "leaf"
        self.parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item: tensor has shape {self.shape}, expected a scalar")
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op!r}, requires_grad={self.requires_grad})"

    # operator sugar, all routed through the checked ops below
    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, float(other))
        return mul(self, _as_tensor(other))

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(op: str, value: np.ndarray, parents: Sequence[Tensor], backward_fn) -> Tensor:
    out = Tensor(value)
    out.op = op
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.parents = tuple(parents)
        out._backward = backward_fn
    return out


def _check_same(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: operand shapes differ, {a.shape} vs {b.shape} (no broadcasting)")


def _check_ndim(op: str, t: Tensor, ndim: int, what: str) -> None:
    if t.data.ndim != ndim:
        raise ShapeError(f"{op}: {what} must be {ndim}-d, got shape {t.shape}")


# ---------------------------------------------------------------------------
# elementwise


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same("add", a, b)
    return _make("add", a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_same("sub", a, b)
    return _make("sub", a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_same("mul", a, b)
    av, bv = a.data, b.data
    return _make("mul", av * bv, (a, b), lambda g: (g * bv, g * av))


def scale(a: Tensor, c: float) -> Tensor:
    return _make("scale", a.data * c, (a,), lambda g: (g * c,))


def square(a: Tensor) -> Tensor:
    av = a.data
    return _make("square", av * av, (a,), lambda g: (2.0 * av * g,))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _make("exp", out, (a,), lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0):
        raise ValueError("log: non-positive input")
    av = a.data
    return _make("log", np.log(av), (a,), lambda g: (g / av,))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _make("relu", np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


# ---------------------------------------------------------------------------
# reductions and shape ops


def sum_all(a: Tensor) -> Tensor:
    shape = a.shape
    return _make("sum", np.array(a.data.sum()), (a,), lambda g: (np.full(shape, float(g)),))


def mean(a: Tensor) -> Tensor:
    shape, n = a.shape, a.size
    return _make("mean", np.array(a.data.mean()), (a,), lambda g: (np.full(shape, float(g) / n),))


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape)) != a.size:
        raise ShapeError(f"reshape: cannot reshape {a.shape} ({a.size} values) to {shape}")
    old = a.shape
    return _make("reshape", a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def concat(parts: Sequence[Tensor], axis: int = 1) -> Tensor:
    if not parts:
        raise ShapeError("concat: no inputs")
    ref = parts[0].shape
    for p in parts[1:]:
        if len(p.shape) != len(ref) or any(
            d != r for k, (d, r) in enumerate(zip(p.shape, ref)) if k != axis % len(ref)
        ):
            raise ShapeError(f"concat: shapes {ref} and {p.shape} disagree off axis {axis}")
    sizes = [p.shape[axis] for p in parts]
    bounds = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _make("concat", np.concatenate([p.data for p in parts], axis=axis), tuple(parts), bw)


def global_avg_pool(x: Tensor) -> Tensor:
    """(N, C, H, W) -> (N, C), mean over space."""
    _check_ndim("global_avg_pool", x, 4, "input")
    n, c, h, w = x.shape
    return _make(
        "global_avg_pool",
        x.data.mean(axis=(2, 3)),
        (x,),
        lambda g: (np.broadcast_to(g[:, :, None, None] / (h * w), (n, c, h, w)).copy(),),
    )


# ---------------------------------------------------------------------------
# affine and convolution


def dense(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """x (N, in) @ w.T + b with w (out, in), b (out,)."""
    _check_ndim("dense", x, 2, "input")
    _check_ndim("dense", w, 2, "weight")
    if x.shape[1] != w.shape[1]:
        raise ShapeError(f"dense: input width {x.shape[1]} != weight in-dim {w.shape[1]}")
    if b is not None and b.shape != (w.shape[0],):
        raise ShapeError(f"dense: bias shape {b.shape} != ({w.shape[0]},)")
    xv, wv = x.data, w.data
    out = xv @ wv.T
    if b is not None:
        out = out + b.data

    def bw(g):
        grads = [g @ wv, g.T @ xv]
        if b is not None:
            grads.append(g.sum(axis=0))
        return grads

    parents = (x, w) if b is None else (x, w, b)
    return _make("dense", out, parents, bw)


def _out_size(n: int, k: int, stride: int, pad: int) -> int:
    return (n + 2 * pad - k) // stride + 1


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation, x (N, C, H, W), w (O, C, kh, kw), zero padding."""
    _check_ndim("conv2d", x, 4, "input")
    _check_ndim("conv2d", w, 4, "kernel")
    n, c, h, wd = x.shape
    o, ck, kh, kw = w.shape
    if c != ck:
        raise ShapeError(f"conv2d: input channels {c} != kernel channels {ck}")
    if b is not None and b.shape != (o,):
        raise ShapeError(f"conv2d: bias shape {b.shape} != ({o},)")
    if stride < 1 or padding < 0:
        raise ShapeError(f"conv2d: bad stride {stride} / padding {padding}")
    ho, wo = _out_size(h, kh, stride, padding), _out_size(wd, kw, stride, padding)
    if ho < 1 or wo < 1:
        raise ShapeError(f"conv2d: kernel {kh}x{kw} larger than padded input {h}x{wd}")
    if kh == kw == 1 and padding == 0:
        return _conv1x1(x, w, b, stride, ho, wo)

    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride][:, :, :ho, :wo]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * kh * kw)
    wmat = w.data.reshape(o, -1)
    out = cols @ wmat.T
    if b is not None:
        out = out + b.data
    out = out.reshape(n, ho, wo, o).transpose(0, 3, 1, 2)

    def bw(g):
        gmat = g.transpose(0, 2, 3, 1).reshape(n * ho * wo, o)
        gw = (gmat.T @ cols).reshape(w.shape)
        dcols = (gmat @ wmat).reshape(n, ho, wo, c, kh, kw)
        dxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                dxp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += dcols[
                    :, :, :, :, i, j
                ].transpose(0, 3, 1, 2)
        gx = dxp[:, :, padding : padding + h, padding : padding + wd]
        grads = [gx, gw]
        if b is not None:
            grads.append(gmat.sum(axis=0))
        return grads

    parents = (x, w) if b is None else (x, w, b)
    return _make("conv2d", out, parents, bw)


def _conv1x1(x: Tensor, w: Tensor, b: Tensor | None, stride: int, ho: int, wo: int) -> Tensor:
    n, c, h, wd = x.shape
    o = w.shape[0]
    xs = x.data[:, :, ::stride, ::stride][:, :, :ho, :wo]
    cols = xs.transpose(0, 2, 3, 1).reshape(n * ho * wo, c)
    wmat = w.data.reshape(o, c)
    out = cols @ wmat.T
    if b is not None:
        out = out + b.data
    out = out.reshape(n, ho, wo, o).transpose(0, 3, 1, 2)

    def bw(g):
        gmat = g.transpose(0, 2, 3, 1).reshape(n * ho * wo, o)
        gw = (gmat.T @ cols).reshape(w.shape)
        dxs = (gmat @ wmat).reshape(n, ho, wo, c).transpose(0, 3, 1, 2)
        if stride == 1 and (ho, wo) == (h, wd):
            gx = dxs
        else:
            gx = np.zeros(x.shape)
            gx[:, :, : stride * ho : stride, : stride * wo : stride] = dxs
        grads = [gx, gw]
        if b is not None:
            grads.append(gmat.sum(axis=0))
        return grads

    parents = (x, w) if b is None else (x, w, b)
    return _make("conv2d", out, parents, bw)


def maxpool2d(x: Tensor, kernel: int, stride: int, padding: int = 0) -> Tensor:
    """Max pooling; ties go to the first element in row-major window order."""
    _check_ndim("maxpool2d", x, 4, "input")
    n, c, h, wd = x.shape
    ho, wo = _out_size(h, kernel, stride, padding), _out_size(wd, kernel, stride, padding)
    if ho < 1 or wo < 1:
        raise ShapeError(f"maxpool2d: window {kernel} larger than padded input {h}x{wd}")
    xp = np.pad(
        x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)), constant_values=-np.inf
    )
    win = sliding_window_view(xp, (kernel, kernel), axis=(2, 3))[:, :, ::stride, ::stride][
        :, :, :ho, :wo
    ]
    flat = win.reshape(n, c, ho, wo, kernel * kernel)
    idx = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]

    def bw(g):
        dxp = np.zeros(xp.shape)
        for i in range(kernel):
            for j in range(kernel):
                hit = idx == i * kernel + j
                dxp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += g * hit
        return (dxp[:, :, padding : padding + h, padding : padding + wd],)

    return _make("maxpool2d", out, (x,), bw)


# ---------------------------------------------------------------------------
# losses


def softmax_cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean over the batch of -log softmax(logits)[label]."""
    _check_ndim("softmax_cross_entropy", logits, 2, "logits")
    labels = np.asarray(labels)
    n, k = logits.shape
    if labels.shape != (n,):
        raise ShapeError(f"softmax_cross_entropy: labels shape {labels.shape} != ({n},)")
    if labels.dtype.kind not in "iu" or np.any(labels < 0) or np.any(labels >= k):
        raise ValueError(f"softmax_cross_entropy: labels must be integers in [0, {k})")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1))
    logp = z - logsum[:, None]
    rows = np.arange(n)
    loss = -logp[rows, labels].mean()

    def bw(g):
        d = np.exp(logp)
        d[rows, labels] -= 1.0
        return (d * (float(g) / n),)

    return _make("softmax_cross_entropy", np.array(loss), (logits,), bw)


def mse(a: Tensor, b: Tensor) -> Tensor:
    """Mean squared difference over all elements."""
    _check_same("mse", a, b)
    diff = a.data - b.data
    m = diff.size

    def bw(g):
        d = diff * (2.0 * float(g) / m)
        return (d, -d)

    return _make("mse", np.array((diff * diff).mean()), (a, b), bw)


def pearson_matrix(x: Tensor, y: Tensor, eps: float = 1e-8) -> Tensor:
    """R[i, j] = Pearson(x[i], y[j]) over rows of two (N, D) / (M, D) matrices.

    Norms carry an additive ``eps`` so constant rows give r = 0 with finite
    gradients.
    """
    _check_ndim("pearson_r", x, 2, "x")
    _check_ndim("pearson_r", y, 2, "y")
    if x.shape[1] != y.shape[1]:
        raise ShapeError(f"pearson_r: vector lengths differ, {x.shape[1]} vs {y.shape[1]}")
    if x.shape[1] < 2:
        raise ShapeError("pearson_r: need at least 2 values per vector")
    a = x.data - x.data.mean(axis=1, keepdims=True)
    b = y.data - y.data.mean(axis=1, keepdims=True)
    la = np.sqrt((a * a).sum(axis=1))
    lb = np.sqrt((b * b).sum(axis=1))
    na, nb = la + eps, lb + eps
    r = (a @ b.T) / np.outer(na, nb)

    def bw(g):
        # d/da_i of a_i.b_j / (na_i nb_j); d na_i / d a_i = a_i / |a_i|
        ua = a / np.where(la > 0, la, 1.0)[:, None]
        ub = b / np.where(lb > 0, lb, 1.0)[:, None]
        ga = (g / np.outer(na, nb)) @ b - ((g * r).sum(axis=1) / na)[:, None] * ua
        gb = (g / np.outer(na, nb)).T @ a - ((g * r).sum(axis=0) / nb)[:, None] * ub
        ga -= ga.mean(axis=1, keepdims=True)
        gb -= gb.mean(axis=1, keepdims=True)
        return (ga, gb)

    return _make("pearson_r", r, (x, y), bw)


# ---------------------------------------------------------------------------
# dispatch

OPS: dict[str, Callable[..., Tensor]] = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "scale": scale,
    "square": square,
    "exp": exp,
    "log": log,
    "relu": relu,
    "sum": sum_all,
    "mean": mean,
    "reshape": reshape,
    "concat": concat,
    "global_avg_pool": global_avg_pool,
    "dense": dense,
    "conv2d": conv2d,
    "maxpool2d": maxpool2d,
    "softmax_cross_entropy": softmax_cross_entropy,
    "mse": mse,
    "pearson_r": pearson_matrix,
}


def forward(op_kind: str, *inputs, **attrs) -> Tensor:
    """Apply a named op, e.g. ``forward("conv2d", x, w, b, stride=2, padding=1)``."""
    try:
        fn = OPS[op_kind]
    except KeyError:
        raise ValueError(f"unknown op kind {op_kind!r}; known: {sorted(OPS)}") from None
    return fn(*inputs, **attrs)


# ---------------------------------------------------------------------------
# backward


@dataclass
class Graph:
    """Topologically ordered nodes reachable from a loss (inputs before outputs)."""

    nodes: list[Tensor] = field(default_factory=list)

    @classmethod
    def trace(cls, root: Tensor) -> "Graph":
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
            for p in node.parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        return cls(order)

    def parameters(self) -> list[Tensor]:
        return [n for n in self.nodes if n.op == "leaf"]


def backward(loss: Tensor) -> Graph:
    """Populate ``.grad`` on every node reachable from the scalar ``loss``.

    Gradients are recomputed from zero on each call, so repeated calls with
    unchanged values give identical results.
    """
    if loss.size != 1:
        raise ShapeError(f"backward: loss must be scalar, got shape {loss.shape}")
    graph = Graph.trace(loss)
    for node in graph.nodes:
        node.grad = np.zeros(node.shape)
    loss.grad = np.ones(loss.shape)
    for node in reversed(graph.nodes):
        if node._backward is None:
            continue
        for parent, g in zip(node.parents, node._backward(node.grad)):
            if g is not None and parent.requires_grad:
                parent.grad += g
    return graph


# ---------------------------------------------------------------------------
# optimiser


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: Sequence[Tensor], **kw) -> "AdamState":
        return cls([np.zeros(p.shape) for p in params], [np.zeros(p.shape) for p in params], **kw)


def adam_step(
    params: Sequence[Tensor], grads: Sequence[np.ndarray], state: AdamState, lr: float
) -> None:
    """One bias-corrected Adam update, in place on ``params``; advances ``state``."""
    if lr <= 0:
        raise ValueError(f"adam_step: learning rate must be positive, got {lr}")
    if not (len(params) == len(grads) == len(state.m)):
        raise ShapeError("adam_step: params, grads and state lengths differ")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g.shape != p.shape or m.shape != p.shape:
            raise ShapeError(f"adam_step: grad {g.shape} / state {m.shape} vs param {p.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.data -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


class Adam:
    def __init__(self, params: Sequence[Tensor], lr: float, **kw):
        if lr <= 0:
            raise ValueError(f"Adam: learning rate must be positive, got {lr}")
        self.params = list(params)
        self.lr = lr
        self.state = AdamState.for_params(self.params, **kw)

    def step(self) -> None:
        grads = [p.grad if p.grad is not None else np.zeros(p.shape) for p in self.params]
        adam_step(self.params, grads, self.state, self.lr)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None
