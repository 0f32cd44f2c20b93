"""Immutable symbolic expression trees.

Trees are built from ``Const``, ``Var``, ``Sum``, ``Prod``, ``Pow`` and the
unary functions ``Abs``, ``Sin``, ``Exp`` and ``Sgn``. ``Var(i)`` reads the
i-th state component; the index equal to the state dimension reads the
constant input 2 that the network appends to every state.

The main entry points are :func:`evaluate`, :func:`normalize`,
:func:`round_coefficients`, :func:`count_parameters`, :func:`to_text` and
:func:`parse_text`.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DomainError, NonFiniteError, ParseError

__all__ = [
    "Expr", "Const", "Var", "Sum", "Prod", "Pow", "Abs", "Sin", "Exp", "Sgn",
    "ConstantTable", "DEFAULT_CONSTANTS", "evaluate", "normalize",
    "round_value", "round_coefficients", "count_parameters", "count_terms",
    "to_text", "parse_text", "free_indices", "default_names", "term_map", "same_model", "resolve_abs",
]

# Products of sums are expanded unless the expansion would exceed this many
# terms; larger factors are then kept as opaque sub-sums.
MAX_EXPANSION_TERMS = 20000
MAX_EXPAND_POWER = 8


class Expr:
    """Base class. Arithmetic operators build raw (unnormalized) trees."""

    __slots__ = ()

    def __add__(self, other):
        return Sum((self, _wrap(other)))

    def __radd__(self, other):
        return Sum((_wrap(other), self))

    def __sub__(self, other):
        return Sum((self, Prod((Const(-1.0), _wrap(other)))))

    def __rsub__(self, other):
        return Sum((_wrap(other), Prod((Const(-1.0), self))))

    def __mul__(self, other):
        return Prod((self, _wrap(other)))

    def __rmul__(self, other):
        return Prod((_wrap(other), self))

    def __neg__(self):
        return Prod((Const(-1.0), self))

    def __pow__(self, exponent):
        return Pow(self, float(exponent))

    def __str__(self):
        return to_text(self, default_names(max(free_indices(self), default=-1) + 1))


def _wrap(v):
    if isinstance(v, Expr):
        return v
    return Const(float(v))


@dataclass(frozen=True, eq=True, repr=True)
class Const(Expr):
    value: float

    def __post_init__(self):
        object.__setattr__(self, "value", float(self.value))


@dataclass(frozen=True)
class Var(Expr):
    index: int

    def __post_init__(self):
        if self.index < 0:
            raise ValueError("variable index must be non-negative")


@dataclass(frozen=True)
class Sum(Expr):
    terms: tuple

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))


@dataclass(frozen=True)
class Prod(Expr):
    factors: tuple

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(self.factors))


@dataclass(frozen=True)
class Pow(Expr):
    base: Expr
    exponent: float

    def __post_init__(self):
        object.__setattr__(self, "exponent", float(self.exponent))


@dataclass(frozen=True)
class Abs(Expr):
    arg: Expr


@dataclass(frozen=True)
class Sin(Expr):
    arg: Expr


@dataclass(frozen=True)
class Exp(Expr):
    arg: Expr


@dataclass(frozen=True)
class Sgn(Expr):
    arg: Expr


_UNARY = (Abs, Sin, Exp, Sgn)


@dataclass(frozen=True)
class ConstantTable:
    """Named constants that coefficient rounding may snap to."""

    entries: tuple = field(default_factory=lambda: (
        ("pi", math.pi),
        ("e", math.e),
        ("pi/2", math.pi / 2),
        ("2*pi", 2 * math.pi),
        ("sqrt(2)", math.sqrt(2.0)),
        ("1/3", 1 / 3),
        ("2/3", 2 / 3),
        ("8/3", 8 / 3),
    ))

    def __post_init__(self):
        entries = tuple((str(n), float(v)) for n, v in self.entries)
        names = [n for n, _ in entries]
        values = [v for _, v in entries]
        if len(set(names)) != len(names):
            raise ValueError("constant names must be unique")
        if any(not v > 0 for v in values):
            raise ValueError("constant values must be strictly positive")
        if len(set(values)) != len(values):
            raise ValueError("constant values must be distinct")
        object.__setattr__(self, "entries", entries)


DEFAULT_CONSTANTS = ConstantTable()


def free_indices(e: Expr) -> set:
    """Set of variable indices referenced by ``e``."""
    out = set()
    stack = [e]
    while stack:
        node = stack.pop()
        if isinstance(node, Var):
            out.add(node.index)
        elif isinstance(node, Sum):
            stack.extend(node.terms)
        elif isinstance(node, Prod):
            stack.extend(node.factors)
        elif isinstance(node, Pow):
            stack.append(node.base)
        elif isinstance(node, _UNARY):
            stack.append(node.arg)
    return out


def default_names(n):
    if n <= 3:
        return ["x", "y", "z"][:n]
    return [f"x{i + 1}" for i in range(n)]


# ---------------------------------------------------------------- evaluation

def _is_int(a):
    return float(a).is_integer()


def _eval(e, x):
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        n = x.shape[-1]
        if e.index < n:
            return x[..., e.index]
        if e.index == n:
            return 2.0
        raise ValueError(f"Var({e.index}) needs a state of dimension > {e.index - 1}, got {n}")
    if isinstance(e, Sum):
        out = 0.0
        for t in e.terms:
            out = out + _eval(t, x)
        return out
    if isinstance(e, Prod):
        out = 1.0
        for f in e.factors:
            out = out * _eval(f, x)
        return out
    if isinstance(e, Pow):
        b = _eval(e.base, x)
        if not _is_int(e.exponent) and np.any(np.asarray(b) < 0):
            raise DomainError(f"negative base raised to non-integer power {e.exponent!r}")
        return np.power(b, e.exponent)
    if isinstance(e, Abs):
        return np.abs(_eval(e.arg, x))
    if isinstance(e, Sin):
        return np.sin(_eval(e.arg, x))
    if isinstance(e, Exp):
        return np.exp(_eval(e.arg, x))
    if isinstance(e, Sgn):
        return np.sign(_eval(e.arg, x))
    raise TypeError(f"not an expression: {e!r}")


def evaluate(e: Expr, x):
    """Evaluate ``e`` at a state vector, or row-wise on an (m, n) array.

    Returns a float for a 1-d state and an (m,) array for a 2-d input.
    Raises DomainError for a negative base under a non-integer power and
    NonFiniteError if the result is inf/nan.
    """
    x = np.asarray(x, dtype=float)
    with np.errstate(all="ignore"):
        v = np.asarray(_eval(e, x), dtype=float)
    if not np.all(np.isfinite(v)):
        raise NonFiniteError("expression evaluated to a non-finite value")
    if x.ndim <= 1:
        return float(v)
    return np.broadcast_to(v, x.shape[:-1]).copy()


# ------------------------------------------------------------- normalization
#
# Internally a normalized expression is a polynomial: a dict mapping a
# monomial to its coefficient. A monomial is a sorted tuple of
# (atom, exponent) pairs; atoms are Var, unary-function nodes, or sub-sums
# and products that cannot be distributed.

def _key(e):
    if isinstance(e, Const):
        return (0, e.value)
    if isinstance(e, Var):
        return (1, e.index)
    if isinstance(e, Abs):
        return (2, _key(e.arg))
    if isinstance(e, Sin):
        return (3, _key(e.arg))
    if isinstance(e, Exp):
        return (4, _key(e.arg))
    if isinstance(e, Sgn):
        return (5, _key(e.arg))
    if isinstance(e, Pow):
        return (6, _key(e.base), e.exponent)
    if isinstance(e, Sum):
        return (7, tuple(_key(t) for t in e.terms))
    if isinstance(e, Prod):
        return (8, tuple(_key(f) for f in e.factors))
    raise TypeError(f"not an expression: {e!r}")


def _is_even(a):
    return _is_int(a) and int(a) % 2 == 0


def _nonneg(atom):
    return isinstance(atom, (Abs, Exp))


def _mono_key(m):
    return tuple((_key(t), e) for t, e in m)


def _term_key(m):
    return (sum(e for _, e in m), _mono_key(m))


def _canon(d):
    out = {}
    exps = [(t, e) for t, e in d.items() if isinstance(t, Exp) and e != 0]
    if len(exps) > 1 or (exps and exps[0][1] != 1):
        # exp(u)^a * exp(v)^b -> exp(a*u + b*v)
        arg = {}
        for t, e in exps:
            arg = _padd(arg, _pscale(_poly(t.arg), e))
            del d[t]
        if arg:
            d[Exp(_to_expr(arg))] = 1.0
    for t, e in d.items():
        if e == 0:
            continue
        if isinstance(t, Abs) and _is_even(e) and not isinstance(t.arg, Sum):
            t = t.arg
        out[t] = out.get(t, 0.0) + e
    items = [(t, float(e)) for t, e in out.items() if e != 0]
    items.sort(key=lambda te: _key(te[0]))
    return tuple(items)


def _mono_mul(m1, m2):
    d = dict(m1)
    for t, e in m2:
        d[t] = d.get(t, 0.0) + e
    return _canon(d)


def _clean(p):
    return {m: c for m, c in p.items() if c != 0}


def _padd(p, q):
    r = dict(p)
    for m, c in q.items():
        r[m] = r.get(m, 0.0) + c
    return _clean(r)


def _pmul(p, q):
    r = {}
    for m1, c1 in p.items():
        for m2, c2 in q.items():
            m = _mono_mul(m1, m2) if m1 and m2 else (m1 or m2)
            r[m] = r.get(m, 0.0) + c1 * c2
    return _clean(r)


def _pscale(p, c):
    return _clean({m: v * c for m, v in p.items()})


def _atom(e, exponent=1.0):
    return {((e, float(exponent)),): 1.0}


def _sorted_items(p):
    return sorted(p.items(), key=lambda mc: _term_key(mc[0]))


def _to_expr(p):
    terms = []
    for m, c in _sorted_items(p):
        if c == 0:
            continue
        factors = [t if e == 1 else Pow(t, e) for t, e in m]
        if not factors:
            terms.append(Const(c))
        elif c == 1:
            terms.append(factors[0] if len(factors) == 1 else Prod(tuple(factors)))
        else:
            terms.append(Prod((Const(c), *factors)))
    if not terms:
        return Const(0.0)
    if len(terms) == 1:
        return terms[0]
    return Sum(tuple(terms))


def _leading_negative(p):
    items = _sorted_items(p)
    return bool(items) and items[0][1] < 0


def _abs_atom(t):
    if isinstance(t, Sum):
        p = _poly(t)
        if _leading_negative(p):
            p = _pscale(p, -1.0)
        return Abs(_to_expr(p))
    return Abs(t)


def _pabs(p):
    if not p:
        return {}
    if len(p) == 1:
        ((m, c),) = p.items()
        d = {}
        for t, e in m:
            a = t if (_nonneg(t) or _is_even(e)) else _abs_atom(t)
            d[a] = d.get(a, 0.0) + e
        return {_canon(d): abs(c)}
    if _leading_negative(p):
        p = _pscale(p, -1.0)
    return _atom(Abs(_to_expr(p)))


def _ppow(p, a):
    if a == 0:
        return {(): 1.0}
    if a == 1:
        return p
    if not p:
        if a > 0:
            return {}
        return _atom(Const(0.0), a)
    if len(p) == 1:
        ((m, c),) = p.items()
        try:
            if _is_int(a):
                coef = c ** a
                d = {}
                for t, e in m:
                    d[t] = d.get(t, 0.0) + e * a
                return _clean({_canon(d): float(coef)})
            if c > 0:
                coef = c ** a
                d = {}
                for t, e in m:
                    if _is_even(e) and not _nonneg(t):
                        t = _abs_atom(t)
                    d[t] = d.get(t, 0.0) + e * a
                return _clean({_canon(d): float(coef)})
        except OverflowError:
            pass
        return _atom(_to_expr(p), a)
    if _is_int(a) and 1 < a <= MAX_EXPAND_POWER and len(p) ** int(a) <= MAX_EXPANSION_TERMS:
        r = p
        for _ in range(int(a) - 1):
            r = _pmul(r, p)
        return r
    return _atom(_to_expr(p), a)


def _odd_func(cls, p, fold):
    if not p or set(p) == {()}:
        v = fold(p.get((), 0.0))
        return {(): float(v)} if v != 0 else {}
    sign = 1.0
    if _leading_negative(p):
        p = _pscale(p, -1.0)
        sign = -1.0
    return {k: v * sign for k, v in _atom(cls(_to_expr(p))).items()}


def _pexp(p):
    p = dict(p)
    c0 = p.pop((), 0.0)
    try:
        coef = math.exp(c0)
    except OverflowError:
        p[()] = c0
        return _atom(Exp(_to_expr(p)))
    if not p:
        return {(): coef}
    return {k: v * coef for k, v in _atom(Exp(_to_expr(p))).items()}


def _poly(e):
    if isinstance(e, Const):
        return {(): e.value} if e.value != 0 else {}
    if isinstance(e, Var):
        return _atom(e)
    if isinstance(e, Sum):
        r = {}
        for t in e.terms:
            r = _padd(r, _poly(t))
        return r
    if isinstance(e, Prod):
        r = {(): 1.0}
        for f in e.factors:
            q = _poly(f)
            if not q:
                return {}
            if len(r) * len(q) > MAX_EXPANSION_TERMS:
                if len(q) > 1:
                    q = _atom(_to_expr(q))
                elif len(r) > 1:
                    r = _atom(_to_expr(r))
            r = _pmul(r, q)
        return r
    if isinstance(e, Pow):
        return _ppow(_poly(e.base), e.exponent)
    if isinstance(e, Abs):
        return _pabs(_poly(e.arg))
    if isinstance(e, Sin):
        return _odd_func(Sin, _poly(e.arg), math.sin)
    if isinstance(e, Sgn):
        return _odd_func(Sgn, _poly(e.arg), lambda v: float(np.sign(v)))
    if isinstance(e, Exp):
        return _pexp(_poly(e.arg))
    raise TypeError(f"not an expression: {e!r}")


def normalize(e: Expr) -> Expr:
    """Canonical sum-of-monomials form.

    Flattens sums and products, distributes products over sums, folds
    constants, merges like terms and drops zero terms and unit factors.
    The result is a fixed point: ``normalize(normalize(e)) == normalize(e)``.
    """
    cur = _to_expr(_poly(e))
    for _ in range(6):
        nxt = _to_expr(_poly(cur))
        if nxt == cur:
            return cur
        cur = nxt
    return cur


# ---------------------------------------------------------- coefficient rounding

MAX_DENOMINATOR = 20
MAX_NUMERATOR = 1000
MAX_CONSTANT_DENOMINATOR = 4


def round_value(c, tol, constants=DEFAULT_CONSTANTS):
    """Snap ``c`` to the simplest candidate within ``tol * max(1, |c|)``.

    Candidates are 0, integers, rationals p/d (d <= 20, |p| <= 1000) and
    rational multiples r*k of table constants (denominator of r <= 4).
    Complexity: 0, then by denominator; a constant multiple with
    denominator q ranks as denominator 4 + q, so pi beats 22/7. Ties go to
    the closer candidate. Returns ``c`` itself if nothing is in range.
    """
    c = float(c)
    if not math.isfinite(c):
        return c
    slack = tol * max(1.0, abs(c))
    best = None
    if abs(c) <= slack:
        best = (0, abs(c), 0.0)
    for d in range(1, MAX_DENOMINATOR + 1):
        if best is not None and best[0] < d:
            break
        p = round(c * d)
        if p == 0 or abs(p) > MAX_NUMERATOR or math.gcd(p, d) != 1:
            continue
        q = p / d
        err = abs(c - q)
        if err <= slack:
            cand = (d, err, q)
            if best is None or cand[:2] < best[:2]:
                best = cand
    for _, kappa in constants.entries:
        for d in range(1, MAX_CONSTANT_DENOMINATOR + 1):
            score = 4 + d
            if best is not None and best[0] < score:
                break
            p = round(c * d / kappa)
            if p == 0 or abs(p) > MAX_NUMERATOR or math.gcd(p, d) != 1:
                continue
            q = p * kappa / d
            err = abs(c - q)
            if err <= slack:
                cand = (score, err, q)
                if best is None or cand[:2] < best[:2]:
                    best = cand
    return c if best is None else float(best[2])


def _round_tree(e, tol, constants):
    if isinstance(e, Const):
        return Const(round_value(e.value, tol, constants))
    if isinstance(e, Var):
        return e
    if isinstance(e, Sum):
        return Sum(tuple(_round_tree(t, tol, constants) for t in e.terms))
    if isinstance(e, Prod):
        return Prod(tuple(_round_tree(f, tol, constants) for f in e.factors))
    if isinstance(e, Pow):
        return Pow(_round_tree(e.base, tol, constants), round_value(e.exponent, tol, constants))
    return type(e)(_round_tree(e.arg, tol, constants))


def round_coefficients(e: Expr, tol: float, constants: ConstantTable = DEFAULT_CONSTANTS) -> Expr:
    """Round every constant and exponent of ``e`` and re-normalize.

    Rounding is repeated until stable because merging like terms after a
    pass can create a new coefficient that is itself roundable.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    cur = normalize(e)
    for _ in range(5):
        nxt = normalize(_round_tree(cur, tol, constants))
        if nxt == cur:
            break
        cur = nxt
    return cur


# ------------------------------------------------------------ parameter count

def count_parameters(e) -> int:
    """Number of fitted constants in a normalized expression.

    Counts Const nodes other than the unit signs +-1 plus every non-integer
    exponent. A sequence of expressions is summed.
    """
    if isinstance(e, (list, tuple)):
        return sum(count_parameters(x) for x in e)
    n = 0
    stack = [e]
    while stack:
        node = stack.pop()
        if isinstance(node, Const):
            n += abs(node.value) != 1.0
        elif isinstance(node, Sum):
            stack.extend(node.terms)
        elif isinstance(node, Prod):
            stack.extend(node.factors)
        elif isinstance(node, Pow):
            n += not _is_int(node.exponent)
            stack.append(node.base)
        elif isinstance(node, _UNARY):
            stack.append(node.arg)
    return n


def count_terms(e) -> int:
    """Number of additive terms (nonzero coefficients) of a normalized expression."""
    if isinstance(e, (list, tuple)):
        return sum(count_terms(x) for x in e)
    if isinstance(e, Sum):
        return len(e.terms)
    if isinstance(e, Const) and e.value == 0:
        return 0
    return 1


def resolve_abs(e: Expr, signs) -> Expr:
    """Replace Abs(Var(i)) by signs[i] * Var(i) where the sign of Var(i) is known.

    ``signs`` maps variable index to +1 or -1. Only bare |x_i| and integer
    powers of it are rewritten; fractional powers keep their Abs so the
    model stays real-valued if the state later changes sign.
    """
    def walk(node):
        if isinstance(node, Abs) and isinstance(node.arg, Var) and node.arg.index in signs:
            return node.arg if signs[node.arg.index] > 0 else Prod((Const(-1.0), node.arg))
        if isinstance(node, Pow):
            if isinstance(node.base, Abs) and not _is_int(node.exponent):
                return node
            return Pow(walk(node.base), node.exponent)
        if isinstance(node, Sum):
            return Sum(tuple(walk(t) for t in node.terms))
        if isinstance(node, Prod):
            return Prod(tuple(walk(f) for f in node.factors))
        if isinstance(node, _UNARY):
            return type(node)(walk(node.arg))
        return node

    return normalize(walk(e))


def term_map(e) -> dict:
    """Map each additive term's factor tuple to its coefficient.

    ``e`` should be normalized; the constant term has key ``()``.
    """
    out = {}
    terms = e.terms if isinstance(e, Sum) else (e,)
    for t in terms:
        if isinstance(t, Const):
            key, c = (), t.value
        elif isinstance(t, Prod) and isinstance(t.factors[0], Const):
            key, c = t.factors[1:], t.factors[0].value
        elif isinstance(t, Prod):
            key, c = t.factors, 1.0
        else:
            key, c = (t,), 1.0
        if c != 0:
            out[key] = out.get(key, 0.0) + c
    return out


def same_model(a, b, rtol=1e-9) -> bool:
    """True when two normalized expressions have the same terms and coefficients."""
    if isinstance(a, (list, tuple)):
        return len(a) == len(b) and all(same_model(x, y, rtol) for x, y in zip(a, b))
    ta, tb = term_map(normalize(a)), term_map(normalize(b))
    if ta.keys() != tb.keys():
        return False
    return all(abs(ta[k] - tb[k]) <= rtol * max(1.0, abs(tb[k])) for k in ta)


# ------------------------------------------------------------------ rendering

def _fmt_num(v):
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    r = repr(v)
    if len(r.lstrip("-")) <= 8:
        return r
    for q in range(2, MAX_DENOMINATOR + 1):
        p = round(v * q)
        if abs(p) <= MAX_NUMERATOR * q and p / q == v:
            return f"{p}/{q}"
    for q in range(1, MAX_CONSTANT_DENOMINATOR + 1):
        p = round(v * q / math.pi)
        if p != 0 and math.gcd(p, q) == 1 and p * math.pi / q == v:
            num = {1: "pi", -1: "-pi"}.get(p, f"{p}*pi")
            return num if q == 1 else f"{num}/{q}"
    return repr(v)


_PLAIN_NUMBER = re.compile(r"[0-9.]+(e[+-]?[0-9]+)?")


def _render(e, names, wrap=False):
    """Render ``e``; ``wrap`` requests parentheses around anything looser than a factor."""
    if isinstance(e, Const):
        s = _fmt_num(e.value)
        if wrap and not _PLAIN_NUMBER.fullmatch(s):
            return f"({s})"
        return s
    if isinstance(e, Var):
        if e.index < len(names):
            return names[e.index]
        if e.index == len(names):
            return "2"
        raise ValueError(f"no name for Var({e.index})")
    if isinstance(e, Sum):
        terms = list(e.terms)
        consts = [t for t in terms if isinstance(t, Const)]
        terms = [t for t in terms if not isinstance(t, Const)] + consts
        parts = []
        for i, t in enumerate(terms):
            s = _render(t, names)
            if i == 0:
                parts.append(s)
            elif s.startswith("-"):
                parts.append(" - " + s[1:])
            else:
                parts.append(" + " + s)
        s = "".join(parts)
        return f"({s})" if wrap else s
    if isinstance(e, Prod):
        factors = list(e.factors)
        prefix = ""
        if len(factors) > 1 and isinstance(factors[0], Const):
            c = factors.pop(0).value
            if c == -1:
                prefix = "-"
            elif c != 1:
                s = _fmt_num(abs(c))
                prefix = ("-" if c < 0 else "") + s + "*"
        body = "*".join(_render(f, names, wrap=True) for f in factors)
        s = prefix + body
        return f"({s})" if wrap and s.startswith("-") else s
    if isinstance(e, Pow):
        base = _render(e.base, names, wrap=True)
        if isinstance(e.base, (Pow, Prod)) and not base.startswith("("):
            base = f"({base})"
        ex = _fmt_num(e.exponent)
        if not _PLAIN_NUMBER.fullmatch(ex):
            ex = f"({ex})"
        return f"{base}^{ex}"
    fname = {Abs: "abs", Sin: "sin", Exp: "exp", Sgn: "sgn"}[type(e)]
    return f"{fname}({_render(e.arg, names)})"


def to_text(e: Expr, var_names: Sequence[str]) -> str:
    """Infix rendering; index ``len(var_names)`` renders as ``2``."""
    return _render(e, list(var_names))


# -------------------------------------------------------------------- parsing

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>\*\*|[-+*/^(),]))"
)
_FUNCS = {"sin": Sin, "exp": Exp, "abs": Abs, "sgn": Sgn, "sign": Sgn}


def _tokenize(s):
    pos = 0
    out = []
    while pos < len(s):
        if s[pos:].strip() == "":
            break
        m = _TOKEN.match(s, pos)
        if m is None or m.end() == pos:
            raise ParseError(f"unexpected character {s[pos:].lstrip()[:1]!r}", pos)
        start = m.start(m.lastgroup)
        out.append((m.lastgroup, m.group(m.lastgroup), start))
        pos = m.end()
    out.append(("end", "", len(s)))
    return out


class _Parser:
    def __init__(self, text, names):
        self.toks = _tokenize(text)
        self.i = 0
        self.names = {n: k for k, n in enumerate(names)}

    def peek(self):
        return self.toks[self.i]

    def take(self, value=None):
        tok = self.toks[self.i]
        if value is not None and tok[1] != value:
            raise ParseError(f"expected {value!r}, found {tok[1] or 'end of input'!r}", tok[2])
        self.i += 1
        return tok

    def expr(self):
        terms = [self.term()]
        while self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            t = self.term()
            terms.append(t if op == "+" else _neg(t))
        return terms[0] if len(terms) == 1 else Sum(tuple(terms))

    def term(self):
        left = self.unary()
        while self.peek()[1] in ("*", "/"):
            op, _, pos = self.take()[1], None, self.toks[self.i - 1][2]
            right = self.unary()
            if op == "*":
                if isinstance(left, Const) and isinstance(right, Const):
                    left = Const(left.value * right.value)
                else:
                    left = Prod((left, right))
            else:
                if isinstance(right, Const):
                    if right.value == 0:
                        raise ParseError("division by zero", pos)
                    if isinstance(left, Const):
                        left = Const(left.value / right.value)
                        continue
                left = Prod((left, Pow(right, -1.0)))
        return left

    def unary(self):
        tok = self.peek()
        if tok[1] == "-":
            self.take()
            return _neg(self.unary())
        if tok[1] == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.primary()
        if self.peek()[1] in ("^", "**"):
            pos = self.take()[2]
            ex = normalize(self.unary())
            if not isinstance(ex, Const):
                raise ParseError("exponent must be a constant", pos)
            if isinstance(base, Const) and (base.value > 0 or _is_int(ex.value)):
                try:
                    return Const(base.value ** ex.value)
                except (OverflowError, ZeroDivisionError):
                    pass
            return Pow(base, ex.value)
        return base

    def primary(self):
        kind, val, pos = self.take()
        if kind == "num":
            return Const(float(val))
        if kind == "name":
            if self.peek()[1] == "(" and val in _FUNCS:
                self.take("(")
                arg = self.expr()
                self.take(")")
                return _FUNCS[val](arg)
            if val in self.names:
                return Var(self.names[val])
            if val == "pi":
                return Const(math.pi)
            raise ParseError(f"unknown name {val!r}", pos)
        if val == "(":
            e = self.expr()
            self.take(")")
            return e
        raise ParseError(f"unexpected token {val or 'end of input'!r}", pos)


def _neg(t):
    if isinstance(t, Const):
        return Const(-t.value)
    return Prod((Const(-1.0), t))


def parse_text(s: str, var_names: Sequence[str], raw: bool = False) -> Expr:
    """Parse infix text into a normalized tree (``raw=True`` skips normalization)."""
    p = _Parser(s, list(var_names))
    e = p.expr()
    kind, val, pos = p.peek()
    if kind != "end":
        raise ParseError(f"unexpected token {val!r}", pos)
    return e if raw else normalize(e)
