"""Reverse-mode automatic differentiation on a flat tape.

Each recorded node holds a numpy value (a 0-d array for scalars) together
with a vector-Jacobian product for each of its inputs. Elementwise binary
ops broadcast like numpy; gradients are summed back to the input shape.

Subgradient conventions:

* ``d|x|/dx = sgn(x)`` with ``sgn(0) = 0``; ``d sgn(x)/dx = 0`` everywhere.
* ``pow_vw`` and ``log_abs`` clamp ``|z|`` to at least ``ABS_FLOOR`` before
  taking powers or logarithms.
* ``sqrt_abs`` (the L1/2 penalty) has subgradient 0 at 0.
"""

from __future__ import annotations

import numpy as np

from .errors import NonFiniteError

ABS_FLOOR = 1e-8


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, size in enumerate(shape):
        if size == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def sigmoid(x):
    return 0.5 * (np.tanh(0.5 * x) + 1.0)


class Value:
    """Handle to a node on a tape. Supports ``+ - * @`` and unary ``-``."""

    __slots__ = ("tape", "id", "value")

    def __init__(self, tape, id, value):
        self.tape = tape
        self.id = id
        self.value = value

    @property
    def shape(self):
        return self.value.shape

    def __add__(self, o):
        return self.tape.record("add", self, o)

    def __radd__(self, o):
        return self.tape.record("add", o, self)

    def __sub__(self, o):
        return self.tape.record("sub", self, o)

    def __rsub__(self, o):
        return self.tape.record("sub", o, self)

    def __mul__(self, o):
        return self.tape.record("mul", self, o)

    def __rmul__(self, o):
        return self.tape.record("mul", o, self)

    def __neg__(self):
        return self.tape.record("neg", self)

    def __matmul__(self, o):
        return self.tape.record("matmul", self, o)

    def __repr__(self):
        return f"Value(id={self.id}, value={self.value!r})"


class Tape:
    """Append-only record of operations.

    Node ids are assigned in creation order, so every node's inputs have
    smaller ids than the node itself and ``backward`` can sweep ids in
    decreasing order.
    """

    def __init__(self, check_finite=True):
        self.values = []
        self.parents = []     # per node: tuple of (input id, vjp callable)
        self.params = []      # ids of registered parameter leaves
        self.check_finite = check_finite

    def __len__(self):
        return len(self.values)

    def _push(self, value, parents=()):
        if self.check_finite and not np.all(np.isfinite(value)):
            raise NonFiniteError("non-finite value recorded on tape")
        self.values.append(value)
        self.parents.append(parents)
        return Value(self, len(self.values) - 1, value)

    def param(self, value):
        """Register a differentiable leaf."""
        v = self._push(np.array(value, dtype=float))
        self.params.append(v.id)
        return v

    def const(self, value):
        return self._push(np.asarray(value, dtype=float))

    def _as_value(self, x):
        if isinstance(x, Value):
            if x.tape is not self:
                raise ValueError("value belongs to a different tape")
            return x
        return self.const(x)

    # ------------------------------------------------------------ recording

    def record(self, op, *inputs, **kw):
        """Apply ``op`` to ``inputs`` and append the result.

        Supported ops: add, sub, mul, neg, sigmoid, sin, cos, exp, abs, sgn,
        ln, log_abs, sqrt_abs, pow_vw, dot, matmul, transpose, sum, mean,
        prod, reshape, concat, stack.
        """
        fn = _OPS.get(op)
        if fn is None:
            raise ValueError(f"unknown op {op!r}")
        xs = [self._as_value(x) for x in inputs]
        value, vjps = fn(*[x.value for x in xs], **kw)
        value = np.asarray(value, dtype=float)
        if self.check_finite:
            for vjp in vjps:
                if vjp is not None and hasattr(vjp, "partial") and not np.all(np.isfinite(vjp.partial)):
                    raise NonFiniteError(f"non-finite partial derivative in {op}")
        parents = tuple((x.id, vjp) for x, vjp in zip(xs, vjps) if vjp is not None)
        return self._push(value, parents)

    # ------------------------------------------------------------- backward

    def backward(self, output):
        """Gradients of a scalar ``output`` w.r.t. every registered parameter.

        Returns a list aligned with registration order; parameters that do
        not influence ``output`` get zeros.
        """
        output = self._as_value(output)
        if output.value.size != 1:
            raise ValueError("backward needs a scalar output")
        grads = [None] * (output.id + 1)
        grads[output.id] = np.ones_like(output.value)
        for i in range(output.id, -1, -1):
            g = grads[i]
            if g is None:
                continue
            for pid, vjp in self.parents[i]:
                contrib = vjp(g)
                if grads[pid] is None:
                    grads[pid] = contrib
                else:
                    grads[pid] = grads[pid] + contrib
        out = []
        for pid in self.params:
            g = grads[pid] if pid < len(grads) else None
            if g is None:
                g = np.zeros_like(self.values[pid])
            if self.check_finite and not np.all(np.isfinite(g)):
                raise NonFiniteError("non-finite gradient")
            out.append(g)
        return out


# --------------------------------------------------------------------- ops
#
# Each op returns (value, [vjp per input]). Elementwise vjps carry their
# cached local partial in a ``partial`` attribute for finiteness checks.


class _Elementwise:
    __slots__ = ("partial", "shape")

    def __init__(self, partial, shape):
        self.partial = partial
        self.shape = shape

    def __call__(self, g):
        return _unbroadcast(g * self.partial, self.shape)


def _ew(partial, x):
    return _Elementwise(np.asarray(partial, dtype=float), np.shape(x))


def _add(a, b):
    return a + b, [lambda g: _unbroadcast(g, np.shape(a)), lambda g: _unbroadcast(g, np.shape(b))]


def _sub(a, b):
    return a - b, [lambda g: _unbroadcast(g, np.shape(a)), lambda g: _unbroadcast(-g, np.shape(b))]


def _mul(a, b):
    return a * b, [_ew(b, a), _ew(a, b)]


def _neg(a):
    return -a, [lambda g: -g]


def _sigmoid(a):
    s = sigmoid(a)
    return s, [_ew(s * (1.0 - s), a)]


def _sin(a):
    return np.sin(a), [_ew(np.cos(a), a)]


def _cos(a):
    return np.cos(a), [_ew(-np.sin(a), a)]


def _exp(a):
    with np.errstate(over="ignore"):
        v = np.exp(a)
    return v, [_ew(v, a)]


def _abs(a):
    return np.abs(a), [_ew(np.sign(a), a)]


def _sgn(a):
    return np.sign(a), [_ew(np.zeros_like(a), a)]


def _ln(a):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.log(a), [_ew(1.0 / a, a)]


def _log_abs(a):
    """ln(max(|a|, ABS_FLOOR)); derivative sgn(a) / max(|a|, ABS_FLOOR)."""
    m = np.maximum(np.abs(a), ABS_FLOOR)
    return np.log(m), [_ew(np.sign(a) / m, a)]


def _sqrt_abs(a):
    r = np.sqrt(np.abs(a))
    with np.errstate(divide="ignore", invalid="ignore"):
        d = np.where(r > 0, 0.5 * np.sign(a) / np.where(r > 0, r, 1.0), 0.0)
    return r, [_ew(d, a)]


def _pow_vw(z, w):
    """|z|^w with |z| clamped to ABS_FLOOR."""
    m = np.maximum(np.abs(z), ABS_FLOOR)
    with np.errstate(over="ignore"):
        v = m ** w
        dz = w * m ** (w - 1.0) * np.sign(z)
    dw = v * np.log(m)
    return v, [_ew(dz, z), _ew(dw, w)]


def _matmul(a, b):
    def ga(g):
        if b.ndim == 1:
            return np.multiply.outer(g, b) if a.ndim > 1 else g * b
        return g @ np.swapaxes(b, -1, -2)

    def gb(g):
        if a.ndim == 1:
            return np.multiply.outer(a, g) if b.ndim > 1 else g * a
        if b.ndim == 1:
            return np.swapaxes(a, -1, -2) @ g
        return np.swapaxes(a, -1, -2) @ g

    return a @ b, [ga, gb]


def _dot(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    return np.dot(a, b), [lambda g: g * b, lambda g: g * a]


def _transpose(a):
    return a.T, [lambda g: g.T]


def _sum(a, axis=None, keepdims=False):
    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, a.shape).copy()
    return np.sum(a, axis=axis, keepdims=keepdims), [vjp]


def _mean(a, axis=None):
    n = a.size if axis is None else a.shape[axis]

    def vjp(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g / n, a.shape).copy()
    return np.mean(a, axis=axis), [vjp]


def _prod(a, axis=-1):
    """Product along ``axis``; gradient via prefix/suffix products (zero-safe)."""
    ax = axis % a.ndim
    a_m = np.moveaxis(a, ax, -1)
    ones = np.ones(a_m.shape[:-1] + (1,))
    left = np.concatenate([ones, np.cumprod(a_m[..., :-1], axis=-1)], axis=-1)
    right = np.concatenate([np.cumprod(a_m[..., :0:-1], axis=-1)[..., ::-1], ones], axis=-1)
    value = left[..., -1] * a_m[..., -1]
    others = np.moveaxis(left * right, -1, ax)
    return value, [_ProdVjp(others, a.shape, ax)]


class _ProdVjp(_Elementwise):
    __slots__ = ("axis",)

    def __init__(self, partial, shape, axis):
        super().__init__(partial, shape)
        self.axis = axis

    def __call__(self, g):
        return np.expand_dims(g, self.axis) * self.partial


def _reshape(a, shape):
    return a.reshape(shape), [lambda g: g.reshape(a.shape)]


def _concat(*arrays, axis=0):
    sizes = np.cumsum([x.shape[axis] for x in arrays])[:-1]

    def make(i):
        return lambda g: np.split(g, sizes, axis=axis)[i]
    return np.concatenate(arrays, axis=axis), [make(i) for i in range(len(arrays))]


def _stack(*arrays, axis=0):
    def make(i):
        return lambda g: np.take(g, i, axis=axis)
    return np.stack(arrays, axis=axis), [make(i) for i in range(len(arrays))]


_OPS = {
    "add": _add, "sub": _sub, "mul": _mul, "neg": _neg,
    "sigmoid": _sigmoid, "sin": _sin, "cos": _cos, "exp": _exp,
    "abs": _abs, "sgn": _sgn, "ln": _ln, "log_abs": _log_abs,
    "sqrt_abs": _sqrt_abs, "pow_vw": _pow_vw, "dot": _dot,
    "matmul": _matmul, "transpose": _transpose, "sum": _sum, "mean": _mean,
    "prod": _prod, "reshape": _reshape, "concat": _concat, "stack": _stack,
}

# thin functional wrappers


def _unary(op):
    def f(x, **kw):
        return x.tape.record(op, x, **kw)
    f.__name__ = op
    return f


sin = _unary("sin")
cos = _unary("cos")
exp = _unary("exp")
absolute = _unary("abs")
sgn = _unary("sgn")
ln = _unary("ln")
log_abs = _unary("log_abs")
sqrt_abs = _unary("sqrt_abs")
transpose = _unary("transpose")


def sigmoid_v(x):
    return x.tape.record("sigmoid", x)


def pow_vw(z, w):
    tape = z.tape if isinstance(z, Value) else w.tape
    return tape.record("pow_vw", z, w)


def vsum(x, axis=None, keepdims=False):
    return x.tape.record("sum", x, axis=axis, keepdims=keepdims)


def vmean(x, axis=None):
    return x.tape.record("mean", x, axis=axis)


def vprod(x, axis=-1):
    return x.tape.record("prod", x, axis=axis)


def reshape(x, shape):
    return x.tape.record("reshape", x, shape=shape)


def concat(values, axis=0):
    tape = next(v.tape for v in values if isinstance(v, Value))
    return tape.record("concat", *values, axis=axis)


def stack(values, axis=0):
    tape = next(v.tape for v in values if isinstance(v, Value))
    return tape.record("stack", *values, axis=axis)
