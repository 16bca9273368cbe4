"""Small reverse-mode differentiation engine over numpy arrays.

Every primitive below accepts either plain arrays or :class:`Var` nodes.  With
plain arrays it is a thin numpy call, so model code written against these
functions runs at full numpy speed when no gradient is needed.  With ``Var``
inputs each call records one node on an implicit tape; :func:`value_and_grad`
replays the tape backwards.

Only the operations the score models need are provided.  Anything else that
touches a ``Var`` (e.g. ``np.exp(v)``) raises :class:`UnsupportedPrimitive`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit

__all__ = [
    "Var", "UnsupportedPrimitive", "value_and_grad", "AdamState", "adam_step",
    "FiniteDifferenceReport", "finite_difference_check",
    "add", "sub", "mul", "div", "neg", "exp", "log", "sqrt", "square",
    "softplus", "sigmoid", "step", "sum", "mean", "softmax", "std",
    "reshape", "expand_dims", "concatenate", "cumsum", "take", "take_along_axis",
    "pwl_interp", "value_of",
]


class UnsupportedPrimitive(TypeError):
    """Raised when a Var flows into an operation the engine cannot differentiate."""


_ARITH_UFUNCS = {np.add, np.subtract, np.multiply, np.true_divide}


class Var:
    """A node in the recorded computation.

    ``parents`` holds ``(node, vjp)`` pairs, where ``vjp`` maps the upstream
    gradient of this node to the gradient contribution of that parent.
    ``smooth`` is False once a piecewise-constant primitive (``step``) has been
    applied anywhere upstream.
    """

    __slots__ = ("value", "parents", "smooth")

    def __init__(self, value, parents=(), smooth=True):
        self.value = np.asarray(value, dtype=np.float64)
        self.parents = tuple(parents)
        self.smooth = smooth

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __len__(self):
        return len(self.value)

    def __repr__(self):
        return f"Var(shape={self.value.shape})"

    # numpy hands mixed ndarray/Var arithmetic back to our reflected operators
    # and refuses everything else.
    def __array_ufunc__(self, ufunc, method, *inputs, **kwargs):
        if method == "__call__" and ufunc in _ARITH_UFUNCS:
            return NotImplemented
        raise UnsupportedPrimitive(f"numpy ufunc {ufunc.__name__!r} is not differentiable here")

    def __array_function__(self, func, types, args, kwargs):
        raise UnsupportedPrimitive(f"numpy function {func.__name__!r} is not differentiable here")

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
        return neg(self)

    def __pow__(self, k):
        if k == 2:
            return square(self)
        raise UnsupportedPrimitive("only squaring is supported")

    def __getitem__(self, idx):
        return take(self, idx)

    def __float__(self):
        return float(self.value)


def value_of(x):
    return x.value if isinstance(x, Var) else np.asarray(x, dtype=np.float64)


def _is_var(*xs):
    return any(isinstance(x, Var) for x in xs)


def _smooth(*xs):
    return all(x.smooth for x in xs if isinstance(x, Var))


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _node(out, pairs, smooth=True):
    parents = [(p, fn) for p, fn in pairs if isinstance(p, Var)]
    return Var(out, parents, smooth and _smooth(*(p for p, _ in pairs)))


# ---------------------------------------------------------------- arithmetic

def add(a, b):
    if not _is_var(a, b):
        return np.add(a, b)
    av, bv = value_of(a), value_of(b)
    return _node(av + bv, [
        (a, lambda g: _unbroadcast(g, av.shape)),
        (b, lambda g: _unbroadcast(g, bv.shape)),
    ])


def sub(a, b):
    if not _is_var(a, b):
        return np.subtract(a, b)
    av, bv = value_of(a), value_of(b)
    return _node(av - bv, [
        (a, lambda g: _unbroadcast(g, av.shape)),
        (b, lambda g: _unbroadcast(-g, bv.shape)),
    ])


def mul(a, b):
    if not _is_var(a, b):
        return np.multiply(a, b)
    av, bv = value_of(a), value_of(b)
    return _node(av * bv, [
        (a, lambda g: _unbroadcast(g * bv, av.shape)),
        (b, lambda g: _unbroadcast(g * av, bv.shape)),
    ])


def div(a, b):
    if not _is_var(a, b):
        return np.divide(a, b)
    av, bv = value_of(a), value_of(b)
    out = av / bv
    return _node(out, [
        (a, lambda g: _unbroadcast(g / bv, av.shape)),
        (b, lambda g: _unbroadcast(-g * out / bv, bv.shape)),
    ])


def neg(a):
    if not _is_var(a):
        return np.negative(a)
    return _node(-a.value, [(a, lambda g: -g)])


def square(a):
    if not _is_var(a):
        return np.square(a)
    av = a.value
    return _node(av * av, [(a, lambda g: 2.0 * g * av)])


# ---------------------------------------------------------------- elementwise

def exp(a):
    if not _is_var(a):
        return np.exp(a)
    out = np.exp(a.value)
    return _node(out, [(a, lambda g: g * out)])


def log(a):
    if not _is_var(a):
        return np.log(a)
    av = a.value
    return _node(np.log(av), [(a, lambda g: g / av)])


def sqrt(a):
    if not _is_var(a):
        return np.sqrt(a)
    out = np.sqrt(a.value)
    return _node(out, [(a, lambda g: 0.5 * g / out)])


def softplus(a):
    if not _is_var(a):
        return np.logaddexp(0.0, a)
    av = a.value
    return _node(np.logaddexp(0.0, av), [(a, lambda g: g * expit(av))])


def sigmoid(a):
    if not _is_var(a):
        return expit(a)
    out = expit(a.value)
    return _node(out, [(a, lambda g: g * out * (1.0 - out))])


def step(a):
    """Hard indicator 1{a > 0}; zero gradient, marks the result non-smooth."""
    av = value_of(a)
    out = (av > 0).astype(np.float64)
    if not _is_var(a):
        return out
    return Var(out, [(a, lambda g: np.zeros_like(av))], smooth=False)


# ---------------------------------------------------------------- reductions

def sum(a, axis=None, keepdims=False):  # noqa: A001 - mirrors numpy naming
    if not _is_var(a):
        return np.sum(a, axis=axis, keepdims=keepdims)
    av = a.value
    out = av.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, av.shape).copy()

    return _node(out, [(a, vjp)])


def mean(a, axis=None, keepdims=False):
    n = value_of(a).size if axis is None else np.prod([value_of(a).shape[i] for i in np.atleast_1d(axis)])
    return div(sum(a, axis=axis, keepdims=keepdims), float(n))


def std(a, axis=None, keepdims=False):
    """Population standard deviation (ddof=0)."""
    centred = sub(a, mean(a, axis=axis, keepdims=True))
    return sqrt(mean(square(centred), axis=axis, keepdims=keepdims))


def softmax(a, axis=-1):
    av = value_of(a)
    z = av - av.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)
    if not _is_var(a):
        return out
    return _node(out, [(a, lambda g: out * (g - (g * out).sum(axis=axis, keepdims=True)))])


def cumsum(a, axis=-1):
    if not _is_var(a):
        return np.cumsum(a, axis=axis)
    out = np.cumsum(a.value, axis=axis)
    return _node(out, [(a, lambda g: np.flip(np.cumsum(np.flip(g, axis), axis=axis), axis))])


# ---------------------------------------------------------------- shape

def reshape(a, shape):
    if not _is_var(a):
        return np.reshape(a, shape)
    old = a.value.shape
    return _node(a.value.reshape(shape), [(a, lambda g: g.reshape(old))])


def expand_dims(a, axis):
    if not _is_var(a):
        return np.expand_dims(a, axis)
    old = a.value.shape
    return _node(np.expand_dims(a.value, axis), [(a, lambda g: g.reshape(old))])


def concatenate(xs: Sequence, axis=0):
    if not _is_var(*xs):
        return np.concatenate(xs, axis=axis)
    vals = [np.atleast_1d(value_of(x)) for x in xs]
    bounds = np.cumsum([0] + [v.shape[axis] for v in vals])
    pairs = []
    for i, x in enumerate(xs):
        lo, hi = bounds[i], bounds[i + 1]
        shape = value_of(x).shape

        def vjp(g, lo=lo, hi=hi, shape=shape):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            return g[tuple(sl)].reshape(shape)

        pairs.append((x, vjp))
    return _node(np.concatenate(vals, axis=axis), pairs)


def take(a, idx):
    """``a[idx]`` for basic or integer-array indices (no ``None`` axes)."""
    if not _is_var(a):
        return np.asarray(a)[idx]
    av = a.value

    def vjp(g):
        z = np.zeros_like(av)
        np.add.at(z, idx, g)
        return z

    return _node(av[idx], [(a, vjp)])


def take_along_axis(a, indices, axis):
    if not _is_var(a):
        return np.take_along_axis(np.asarray(a), indices, axis=axis)
    av = a.value

    def vjp(g):
        z = np.zeros_like(av)
        # indices along the axis are unique per row in our use (argmax gathers)
        np.put_along_axis(z, indices, g, axis=axis)
        return z

    return _node(np.take_along_axis(av, indices, axis=axis), [(a, vjp)])


# ---------------------------------------------------------------- piecewise linear

def pwl_interp(x, knots_x, knots_y, extrapolate=True):
    """Piecewise-linear interpolation through ``(knots_x, knots_y)``.

    ``knots_x`` is a fixed, strictly increasing grid.  Outside the grid the
    boundary segment is extended linearly when ``extrapolate`` is true,
    otherwise the input is clamped.  Differentiable in both ``x`` and
    ``knots_y`` away from the knot abscissae.
    """
    xk = np.asarray(knots_x, dtype=np.float64)
    xv, yv = value_of(x), value_of(knots_y)
    K = len(xk) - 1
    seg = np.clip(np.searchsorted(xk, xv, side="right") - 1, 0, K - 1)
    xc = xv if extrapolate else np.clip(xv, xk[0], xk[-1])
    h = np.diff(xk)
    t = (xc - xk[seg]) / h[seg]
    y0, y1 = yv[seg], yv[seg + 1]
    out = y0 + t * (y1 - y0)
    if not _is_var(x, knots_y):
        return out

    def vjp_x(g):
        slope = (y1 - y0) / h[seg]
        if not extrapolate:
            slope = np.where((xv < xk[0]) | (xv > xk[-1]), 0.0, slope)
        return g * slope

    def vjp_y(g):
        s = seg.ravel()
        gt = (g * t).ravel()
        gl = g.ravel() - gt
        return np.bincount(s, weights=gl, minlength=K + 1) + np.bincount(s + 1, weights=gt, minlength=K + 1)

    return _node(out, [(x, vjp_x), (knots_y, vjp_y)])


# ---------------------------------------------------------------- driver

def _backward(out: Var):
    order, seen = [], set()
    stack = [(out, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent, _ in node.parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    grads = {id(out): np.ones_like(out.value)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if not node.parents:
            grads[id(node)] = g
            continue
        for parent, vjp in node.parents:
            contrib = vjp(g)
            key = id(parent)
            grads[key] = grads[key] + contrib if key in grads else contrib
    return grads


def value_and_grad(objective: Callable[[Var], "Var | float"], params, return_smooth=False):
    """Evaluate ``objective(params)`` and its exact gradient w.r.t. ``params``.

    The objective must be a deterministic function of the parameter vector; any
    randomness it uses has to be drawn beforehand and closed over.
    """
    leaf = Var(np.array(params, dtype=np.float64, copy=True))
    out = objective(leaf)
    if not isinstance(out, Var):
        value = float(np.asarray(out))
        grad = np.zeros_like(leaf.value)
        smooth = True
    else:
        if out.value.size != 1:
            raise ValueError("objective must return a scalar")
        value = float(out.value)
        grad = _backward(out).get(id(leaf), np.zeros_like(leaf.value))
        smooth = out.smooth
    if return_smooth:
        return value, grad, smooth
    return value, grad


# ---------------------------------------------------------------- Adam

@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, n, **kw):
        return cls(np.zeros(n), np.zeros(n), **kw)


def adam_step(state: AdamState, params, grad):
    """One bias-corrected Adam update; returns ``(new_state, new_params)``."""
    params = np.asarray(params, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if params.shape != grad.shape or state.m.shape != params.shape:
        raise ValueError(f"shape mismatch: params {params.shape}, grad {grad.shape}, state {state.m.shape}")
    t = state.t + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    new_params = params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    new_state = AdamState(m, v, t, state.lr, state.beta1, state.beta2, state.eps)
    return new_state, new_params


# ---------------------------------------------------------------- gradient check

@dataclass
class FiniteDifferenceReport:
    max_rel_error: float
    passing: bool
    grad: np.ndarray = field(repr=False)
    fd_grad: np.ndarray = field(repr=False)
    smooth: bool = True


def finite_difference_check(objective, params, epsilon=1e-5, tolerance=1e-4, floor=1e-3):
    """Compare the reverse-mode gradient against central differences.

    The per-coordinate error is ``|g - g_fd| / max(|g|, |g_fd|, floor * max|g|)``:
    coordinates whose gradient is tiny next to the largest one are judged
    against that floor instead of their own magnitude.  A check on an
    objective built from hard indicators never passes.
    """
    params = np.asarray(params, dtype=np.float64)
    _, grad, smooth = value_and_grad(objective, params, return_smooth=True)
    fd = np.empty_like(params)
    for i in range(params.size):
        hi, lo = params.copy(), params.copy()
        hi[i] += epsilon
        lo[i] -= epsilon
        fd[i] = (float(value_of(objective(hi))) - float(value_of(objective(lo)))) / (2.0 * epsilon)
    scale = max(np.max(np.abs(grad), initial=0.0), np.max(np.abs(fd), initial=0.0))
    denom = np.maximum(np.maximum(np.abs(grad), np.abs(fd)), max(floor * scale, 1e-300))
    rel = np.abs(grad - fd) / denom
    max_rel = float(rel.max(initial=0.0))
    return FiniteDifferenceReport(max_rel, bool(smooth and max_rel < tolerance), grad, fd, smooth)
