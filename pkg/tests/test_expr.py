import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from symode.errors import DomainError, NonFiniteError, ParseError
from symode.expr import (DEFAULT_CONSTANTS, Abs, Const, ConstantTable, Exp, Pow, Prod, Sgn, Sin, Sum,
                         Var, count_parameters, count_terms, evaluate, normalize, parse_text,
                         resolve_abs, round_coefficients, round_value, same_model, term_map, to_text)

XY = ["x", "y"]
XYZ = ["x", "y", "z"]


# ------------------------------------------------------------ strategies

coef = st.floats(-5, 5, allow_nan=False).filter(lambda v: abs(v) > 1e-3).map(lambda v: round(v, 3))


def trees(nvars=2, depth=3):
    leaf = st.one_of(coef.map(Const), st.integers(0, nvars - 1).map(Var))

    def extend(inner):
        return st.one_of(
            st.lists(inner, min_size=2, max_size=3).map(lambda t: Sum(tuple(t))),
            st.lists(inner, min_size=2, max_size=3).map(lambda f: Prod(tuple(f))),
            st.tuples(inner, st.integers(1, 3)).map(lambda p: Pow(p[0], float(p[1]))),
            st.tuples(st.integers(0, nvars - 1),
                      st.sampled_from([0.5, 1.5, -0.5, 2.0, 0.25])).map(
                lambda p: Pow(Abs(Var(p[0])), p[1])),
            inner.map(Sin),
            st.tuples(coef, st.integers(0, nvars - 1)).map(
                lambda p: Exp(Prod((Const(p[0] / 5), Var(p[1]))))),
        )

    return st.recursive(leaf, extend, max_leaves=6)


points = st.lists(st.floats(0.2, 2.0), min_size=2, max_size=2).map(np.array)


def _close(a, b, rel=1e-10):
    return abs(a - b) <= rel * (1 + abs(a))


# ------------------------------------------------------------- evaluation

def test_evaluate_examples():
    assert evaluate(Const(2.5), []) == 2.5
    assert evaluate(Sin(Var(0)), [0.0]) == 0.0
    assert evaluate(Prod((Pow(Abs(Var(1)), 2.0),)), [5.0, -3.0]) == 9.0


def test_constant_slot_reads_two():
    assert evaluate(Var(2), [7.0, 8.0]) == 2.0
    with pytest.raises(ValueError):
        evaluate(Var(3), [7.0, 8.0])


def test_negative_base_fractional_power_is_domain_error():
    with pytest.raises(DomainError):
        evaluate(Pow(Var(0), 0.5), [-4.0])
    assert evaluate(Pow(Abs(Var(0)), 0.5), [-4.0]) == 2.0
    assert evaluate(Pow(Var(0), 3.0), [-2.0]) == -8.0


def test_overflow_is_non_finite():
    with pytest.raises(NonFiniteError):
        evaluate(Exp(Var(0)), [1000.0])


def test_batch_evaluation_matches_rows():
    e = parse_text("x*y - sin(x) + 3", XY)
    X = np.array([[0.1, 2.0], [1.0, -1.0], [3.0, 0.5]])
    batch = evaluate(e, X)
    assert batch.shape == (3,)
    assert all(batch[i] == evaluate(e, X[i]) for i in range(3))


@given(trees(), points)
def test_evaluation_is_deterministic(e, x):
    try:
        a = evaluate(e, x)
    except (DomainError, NonFiniteError):
        return
    assert evaluate(e, x) == a


# ---------------------------------------------------------- normalization

def test_normalize_examples():
    assert normalize(Sum((Const(0.0), Var(0)))) == Var(0)
    assert normalize(Prod((Const(1.0), Sin(Var(0))))) == Sin(Var(0))
    merged = normalize(Sum((Prod((Const(2.0), Var(0))), Prod((Const(3.0), Var(0))))))
    assert merged == normalize(Prod((Const(5.0), Var(0))))


def test_normalize_structure_invariants():
    e = normalize(parse_text("(x + (y + 0)) * 1 * (2 * x) - 0*y", XY))
    stack = [e]
    while stack:
        node = stack.pop()
        if isinstance(node, Sum):
            assert len(node.terms) >= 2
            assert not any(isinstance(t, Sum) for t in node.terms)
            assert Const(0.0) not in node.terms
            stack.extend(node.terms)
        if isinstance(node, Prod):
            assert len(node.factors) >= 2
            assert not any(isinstance(f, Prod) for f in node.factors)
            assert Const(1.0) not in node.factors and Const(0.0) not in node.factors
            stack.extend(node.factors)


@given(trees(), st.lists(points, min_size=5, max_size=5))
def test_normalize_preserves_values(e, xs):
    try:
        n = normalize(e)
    except (OverflowError, ValueError):
        assume(False)
    for x in xs:
        try:
            a = evaluate(e, x)
        except (DomainError, NonFiniteError):
            continue
        assert _close(evaluate(n, x), a, 1e-9)


@given(trees())
def test_normalize_is_idempotent(e):
    n = normalize(e)
    assert normalize(n) == n


# ---------------------------------------------------------------- rounding

def test_round_examples():
    assert round_coefficients(Const(3.14159), 0.01) == Const(math.pi)
    assert round_coefficients(Const(2.6667), 0.01) == Const(8 / 3)
    e = Sum((Prod((Const(0.006), Pow(Var(0), 2.0))), Var(1)))
    assert round_coefficients(e, 0.0631) == Var(1)


def test_round_value_complexity_order():
    assert round_value(0.02, 0.05) == 0.0              # zero first
    assert round_value(3.04, 0.05) == 3.0              # then integers
    assert round_value(0.49, 0.05) == 0.5              # then small denominators
    assert round_value(2.6666, 1e-4) == 8 / 3          # 8/3 is a plain rational first
    assert round_value(6.2832, 1e-4) == 2 * math.pi    # named constant
    assert round_value(1.234567, 1e-9) == 1.234567     # nothing in range -> kept


def test_round_value_relative_slack():
    # 28 tolerates proportional slack, a small coefficient does not
    assert round_value(28.4, 0.0398) == 28.0   # |error| 0.4 is within 0.0398 * 28.4
    assert round_value(1.06, 0.0398) != 1.0    # here the slack is only 0.042


def test_round_exponents_too():
    e = Pow(Abs(Var(0)), 1.98)
    assert round_coefficients(e, 0.0251) == normalize(Pow(Var(0), 2.0))


def _oracle_round(c, tol):
    """Brute force over the candidate set with Fraction arithmetic.

    Rank: 0, then rationals by denominator d, with a named-constant multiple
    r*k (denominator q of r) ranked as denominator 4 + q; ties go to the
    closer candidate.
    """
    slack = tol * max(1.0, abs(c))
    cands = []
    if abs(c) <= slack:
        cands.append((0, abs(c), 0.0))
    for d in range(1, 21):
        for p in range(-1000, 1001):
            if p == 0 or math.gcd(p, d) != 1:
                continue
            q = float(Fraction(p, d))
            if abs(c - q) <= slack:
                cands.append((d, abs(c - q), q))
    for q in range(1, 5):
        for _, kappa in DEFAULT_CONSTANTS.entries:
            for p in range(-200, 201):
                if p == 0 or math.gcd(p, q) != 1:
                    continue
                v = p * kappa / q
                if abs(c - v) <= slack:
                    cands.append((4 + q, abs(c - v), v))
    return min(cands)[2] if cands else c


@given(st.floats(-30, 30, allow_nan=False), st.sampled_from([0.01, 0.0251, 0.1, 0.3981]))
def test_round_value_matches_bruteforce(c, tol):
    assert round_value(c, tol) == pytest.approx(_oracle_round(c, tol), abs=1e-12)


@given(st.floats(-20, 20, allow_nan=False).filter(lambda v: abs(v) > 1e-6))
def test_tiny_tolerance_is_identity_on_awkward_values(c):
    v = c + 1.234567e-7          # almost surely not a candidate
    assume(abs(v * 2520 - round(v * 2520)) > 1e-3)
    assert round_coefficients(Const(v), 1e-12) == Const(v)


def test_round_rejects_non_positive_tolerance():
    with pytest.raises(ValueError):
        round_coefficients(Const(1.0), 0.0)


# ---------------------------------------------------------- parameter count

def test_count_parameters_examples():
    assert count_parameters(Var(1)) == 0
    assert count_parameters(normalize(Prod((Const(-4.857), Sin(Var(0)))))) == 1
    e = normalize(Prod((Const(10.0), Sum((Var(1), Prod((Const(-1.0), Var(0))))))))
    assert count_parameters(e) == 2
    assert count_parameters(normalize(Pow(Abs(Var(0)), 0.5))) == 1
    assert count_parameters([Var(0), normalize(Prod((Const(3.0), Var(1))))]) == 1


def test_count_terms():
    assert count_terms(parse_text("x - y + 3", XY)) == 3
    assert count_terms(Const(0.0)) == 0


def test_fixture_models_count_is_monotone_in_tolerance():
    fixtures = [
        (["x", "y"], ["0.998*x - x^3/3 - 0.971*y + 0.311 - 0.006*x^2", "0.078*x - 0.06*y + 0.054"]),
        (["x", "y", "z"], ["15.857*y - 1/4*x + 2.143*sin(2*x)", "x - y + z", "-28.667*y"]),
        (["x", "y"], ["y", "-4.333 + 1.5*y + x^2 + x*y"]),
    ]
    grid = [0.01, 0.0158, 0.0251, 0.0398, 0.0631, 0.1, 0.1585, 0.2512, 0.3981, 0.631, 1.0]
    for names, texts in fixtures:
        exprs = [parse_text(t, names) for t in texts]
        counts = [count_parameters([round_coefficients(e, t) for e in exprs]) for t in grid]
        assert counts[-1] <= counts[0]


# ----------------------------------------------------------------- text I/O

def test_to_text_examples():
    assert to_text(Prod((Const(5.0), Var(0))), ["x"]) == "5*x"
    assert to_text(normalize(Sum((Var(1), Const(-4.333)))), XY) == "y - 4.333"
    assert to_text(Exp(Prod((Const(0.9), Var(1)))), ["alpha", "theta"]) == "exp(0.9*theta)"
    assert to_text(Var(2), XY) == "2"


def test_parse_examples():
    assert parse_text("y", XY) == Var(1)
    assert parse_text("-y - z", XYZ) == normalize(Sum((Prod((Const(-1.0), Var(1))),
                                                      Prod((Const(-1.0), Var(2))))))
    want = normalize(Sum((Prod((Const(28.0), Var(0))), Prod((Const(-1.0), Var(0), Var(2))),
                          Prod((Const(-1.0), Var(1))))))
    assert parse_text("x*(28 - z) - y", XYZ) == want


def test_parse_errors_report_position():
    with pytest.raises(ParseError) as err:
        parse_text("x + * y", XY)
    assert err.value.position == 4
    with pytest.raises(ParseError):
        parse_text("sin(x", XY)
    with pytest.raises(ParseError):
        parse_text("q + 1", XY)


@given(trees(nvars=3))
def test_text_round_trip(e):
    n = normalize(e)
    assert parse_text(to_text(n, XYZ), XYZ) == n


# ---------------------------------------------------------------- helpers

def test_constant_table_validation():
    with pytest.raises(ValueError):
        ConstantTable((("a", 1.0), ("a", 2.0)))
    with pytest.raises(ValueError):
        ConstantTable((("a", -1.0),))
    with pytest.raises(ValueError):
        ConstantTable((("a", 1.0), ("b", 1.0)))


def test_same_model_and_term_map():
    assert same_model(parse_text("x*y - 8/3*z", XYZ), parse_text("-2.6666666666666665*z + y*x", XYZ))
    assert not same_model(parse_text("2 + z*(x - 4)", XYZ), parse_text("2 + x*z - 4*abs(z)", XYZ))
    tm = term_map(parse_text("3 - 2*x", XY))
    assert tm[()] == 3 and tm[(Var(0),)] == -2


def test_resolve_abs_uses_known_signs():
    e = parse_text("-2*z - 2*abs(z) + x*z + 2", XYZ)
    assert same_model(resolve_abs(e, {2: 1}), parse_text("2 + x*z - 4*z", XYZ))
    # fractional powers keep their Abs whatever the sign
    f = parse_text("abs(x)^3 + abs(x)^0.5 + abs(y)", XYZ)
    assert same_model(resolve_abs(f, {0: -1, 1: -1}), parse_text("-x^3 + abs(x)^0.5 - y", XYZ))
    assert resolve_abs(e, {}) == e
