"""Structured network whose weights spell out a closed-form model.

Each stack k takes the signals produced so far (the states, the constant
2 and the outputs of earlier stacks) and appends four new signals per
operational layer:

    lin   w_lin . z
    pow   prod_i |z_i|^w_pow,i
    prod  prod_i (sigmoid(w_prod,i) z_i + 1 - sigmoid(w_prod,i))
    ops   w_out . [exp(a), sin(a), sgn(a)],  a = w_in . z

A dense layer ``W_out`` maps the final signal vector to the n outputs.
Signals are laid out as ``[x_1..x_n, 2, stack 1 (lin, pow, prod, ops per
layer), stack 2, ...]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .expr import Abs, Const, Exp, Pow, Prod, Sgn, Sin, Sum, Var, normalize

SUBLAYERS = ("lin", "pow", "prod", "w_in", "w_out")
CONSTANT_INPUT = 2.0


@dataclass(frozen=True)
class NetworkShape:
    n: int
    K: int = 1
    L: int = 10
    time_input: bool = False

    def __post_init__(self):
        if self.n < 1 or self.K < 1 or self.L < 1:
            raise ValueError("need n >= 1, K >= 1, L >= 1")

    @property
    def n_in(self):
        """Number of data columns fed to the network (states, plus time if enabled)."""
        return self.n + int(self.time_input)

    @property
    def const_index(self):
        return self.n_in

    def input_width(self, k):
        """Width of the signal vector entering stack ``k`` (1-based)."""
        return 4 * self.L * (k - 1) + self.n_in + 1

    def output_width(self, k):
        return 4 * self.L * k + self.n_in + 1

    @property
    def final_width(self):
        return self.output_width(self.K)


def param_count(shape: NetworkShape) -> int:
    total = 0
    for k in range(1, shape.K + 1):
        d = shape.input_width(k)
        total += shape.L * (4 * d + 3)
    return total + shape.n * shape.final_width


@dataclass
class InitSpec:
    lin_std: float = 0.1
    pow_std: float = 0.1     # divided by K
    prod_mean: float = -1.0
    prod_std: float = 0.5    # divided by K
    ops_std: float = 0.1     # divided by the 1-based stack index
    out_std: float = 0.1
    seed: int = 0


@dataclass
class NetworkWeights:
    shape: NetworkShape
    stacks: list = field(default_factory=list)   # one dict per stack, keys SUBLAYERS
    W_out: np.ndarray = None

    def arrays(self):
        """All parameter arrays in a fixed order (stack-major, then W_out)."""
        out = []
        for st in self.stacks:
            out.extend(st[name] for name in SUBLAYERS)
        out.append(self.W_out)
        return out

    def with_arrays(self, arrays):
        arrays = list(arrays)
        stacks = []
        i = 0
        for _ in self.stacks:
            stacks.append({name: np.array(arrays[i + j], dtype=float) for j, name in enumerate(SUBLAYERS)})
            i += len(SUBLAYERS)
        return NetworkWeights(self.shape, stacks, np.array(arrays[i], dtype=float))

    def copy(self):
        return self.with_arrays(self.arrays())

    @property
    def size(self):
        return int(sum(a.size for a in self.arrays()))

    def flat(self):
        return np.concatenate([a.ravel() for a in self.arrays()])

    def __eq__(self, other):
        if not isinstance(other, NetworkWeights) or other.shape != self.shape:
            return NotImplemented
        return all(np.array_equal(a, b) for a, b in zip(self.arrays(), other.arrays()))

    def check(self):
        s = self.shape
        if len(self.stacks) != s.K:
            raise ValueError(f"expected {s.K} stacks, got {len(self.stacks)}")
        for k, st in enumerate(self.stacks, start=1):
            d = s.input_width(k)
            for name in SUBLAYERS:
                want = (s.L, 3) if name == "w_out" else (s.L, d)
                if st[name].shape != want:
                    raise ValueError(f"stack {k} {name}: shape {st[name].shape}, expected {want}")
        if self.W_out.shape != (s.n, s.final_width):
            raise ValueError(f"W_out: shape {self.W_out.shape}, expected {(s.n, s.final_width)}")
        if not all(np.all(np.isfinite(a)) for a in self.arrays()):
            raise ValueError("weights must be finite")


def zero_weights(shape: NetworkShape) -> NetworkWeights:
    stacks = []
    for k in range(1, shape.K + 1):
        d = shape.input_width(k)
        st = {name: np.zeros((shape.L, d)) for name in SUBLAYERS}
        st["w_out"] = np.zeros((shape.L, 3))
        stacks.append(st)
    return NetworkWeights(shape, stacks, np.zeros((shape.n, shape.final_width)))


def init_weights(shape: NetworkShape, spec: InitSpec | None = None) -> NetworkWeights:
    """Draw weights so that most signals start out nearly constant."""
    spec = spec or InitSpec()
    rng = np.random.default_rng(spec.seed)
    K, L = shape.K, shape.L
    stacks = []
    for k in range(1, K + 1):
        d = shape.input_width(k)
        stacks.append({
            "lin": rng.normal(0.0, spec.lin_std, (L, d)),
            "pow": rng.normal(0.0, spec.pow_std / K, (L, d)),
            "prod": rng.normal(spec.prod_mean, spec.prod_std / K, (L, d)),
            "w_in": rng.normal(0.0, spec.ops_std / k, (L, d)),
            "w_out": rng.normal(0.0, spec.ops_std / k, (L, 3)),
        })
    W_out = rng.normal(0.0, spec.out_std, (shape.n, shape.final_width))
    return NetworkWeights(shape, stacks, W_out)


# ------------------------------------------------------------------ forward

@dataclass
class Bound:
    """Weights registered as parameter leaves on a tape."""

    shape: NetworkShape
    stacks: list
    W_out: ad.Value


def bind(weights: NetworkWeights, tape: ad.Tape) -> Bound:
    """Register every weight array on ``tape`` in ``weights.arrays()`` order."""
    return bind_arrays(weights.shape, weights.arrays(), tape)


def bind_arrays(shape: NetworkShape, arrays, tape: ad.Tape) -> Bound:
    vals = [tape.param(a) for a in arrays]
    per = len(SUBLAYERS)
    stacks = [dict(zip(SUBLAYERS, vals[k * per:(k + 1) * per])) for k in range(shape.K)]
    return Bound(shape, stacks, vals[-1])


def _augment(x, shape):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    if X.shape[1] != shape.n_in:
        raise ValueError(f"expected {shape.n_in} input columns, got {X.shape[1]}")
    return np.hstack([X, np.full((X.shape[0], 1), CONSTANT_INPUT)]), single


def _stack_forward(st, Z, shape, B):
    L = shape.L
    d = Z.shape[1]
    lin = Z @ ad.transpose(st["lin"])
    pw = ad.exp(ad.log_abs(Z) @ ad.transpose(st["pow"]))
    s = ad.sigmoid_v(st["prod"])
    V = ad.reshape(Z, (B, 1, d)) * s + (1.0 - s)
    pr = ad.vprod(V, axis=2)
    a = Z @ ad.transpose(st["w_in"])
    G = ad.stack([ad.exp(a), ad.sin(a), ad.sgn(a)], axis=2)
    ops = ad.vsum(G * st["w_out"], axis=2)
    new = ad.reshape(ad.stack([lin, pw, pr, ops], axis=2), (B, 4 * L))
    return ad.concat([Z, new], axis=1)


def forward(weights, x, tape: ad.Tape):
    """Network output recorded on ``tape``.

    ``weights`` is either :class:`NetworkWeights` (bound on the fly) or a
    :class:`Bound`. ``x`` is one state (returns an (n,) Value) or an (m, n)
    batch (returns an (m, n) Value).
    """
    if isinstance(weights, NetworkWeights):
        shape = weights.shape
        bound = bind(weights, tape)
    else:
        bound, shape = weights, weights.shape
    Xa, single = _augment(x, shape)
    B = Xa.shape[0]
    Z = tape.const(Xa)
    for k, st in enumerate(bound.stacks, start=1):
        if Z.shape[1] != shape.input_width(k):
            raise AssertionError(f"stack {k} input width {Z.shape[1]} != {shape.input_width(k)}")
        Z = _stack_forward(st, Z, shape, B)
    assert Z.shape[1] == shape.final_width
    F = Z @ ad.transpose(bound.W_out)
    return ad.reshape(F, (shape.n,)) if single else F


def predict(weights: NetworkWeights, X):
    """Plain numpy evaluation of the network (no gradient bookkeeping)."""
    tape = ad.Tape(check_finite=False)
    return forward(weights, X, tape).value


# --------------------------------------------------------------- extraction

def _sigma(w):
    return float(ad.sigmoid(np.float64(w)))


def layer_expressions(st, l, z):
    """Expressions of the four signals of layer ``l`` given input signals ``z``."""
    lin = Sum(tuple(Prod((Const(w), zi)) for w, zi in zip(st["lin"][l], z)))
    pw = Prod(tuple(Pow(Abs(zi), w) for w, zi in zip(st["pow"][l], z)))
    gates = []
    for w, zi in zip(st["prod"][l], z):
        s = _sigma(w)
        gates.append(Sum((Prod((Const(s), zi)), Const(1.0 - s))))
    pr = Prod(tuple(gates))
    a = normalize(Sum(tuple(Prod((Const(w), zi)) for w, zi in zip(st["w_in"][l], z))))
    wo = st["w_out"][l]
    ops = Sum((Prod((Const(wo[0]), Exp(a))), Prod((Const(wo[1]), Sin(a))), Prod((Const(wo[2]), Sgn(a)))))
    return [normalize(lin), normalize(pw), normalize(pr), normalize(ops)]


def signal_expressions(weights: NetworkWeights):
    """Expressions of every signal feeding the output layer, in layout order."""
    shape = weights.shape
    z = [Var(i) for i in range(shape.n_in)] + [Const(CONSTANT_INPUT)]
    for st in weights.stacks:
        new = []
        for l in range(shape.L):
            new.extend(layer_expressions(st, l, z))
        z = z + new
    return z


def extract_expression(weights: NetworkWeights):
    """One normalized expression per output dimension."""
    z = signal_expressions(weights)
    out = []
    for row in weights.W_out:
        out.append(normalize(Sum(tuple(Prod((Const(w), zi)) for w, zi in zip(row, z) if w != 0))))
    return out
