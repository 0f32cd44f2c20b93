import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from symode import autodiff as ad
from symode.expr import Abs, Const, Pow, Var, evaluate, normalize, same_model
from symode.network import (CONSTANT_INPUT, InitSpec, NetworkShape, bind_arrays, extract_expression, forward,
                            init_weights, param_count, predict, signal_expressions, zero_weights)



@pytest.mark.parametrize("n,K,L,want", [(2, 1, 10, 236), (3, 1, 10, 322), (2, 2, 1, 68)])
def test_param_count_examples(n, K, L, want):
    shape = NetworkShape(n, K, L)
    assert param_count(shape) == want
    assert init_weights(shape).size == want


@given(st.integers(1, 4), st.integers(1, 3), st.integers(1, 5))
def test_param_count_matches_entries(n, K, L):
    shape = NetworkShape(n, K, L)
    w = zero_weights(shape)
    w.check()
    assert param_count(shape) == w.size


def test_width_law():
    shape = NetworkShape(3, 3, 2)
    for k in range(1, 4):
        assert shape.input_width(k) == 4 * 2 * (k - 1) + 3 + 1
        assert shape.output_width(k) == 4 * 2 * k + 3 + 1
    assert init_weights(shape).W_out.shape == (3, 4 * 2 * 3 + 3 + 1)


def test_invalid_shape():
    with pytest.raises(ValueError):
        NetworkShape(0, 1, 1)


def test_init_deterministic():
    shape = NetworkShape(3, 2, 4)
    assert init_weights(shape, InitSpec(seed=5)) == init_weights(shape, InitSpec(seed=5))
    assert not init_weights(shape, InitSpec(seed=5)) == init_weights(shape, InitSpec(seed=6))


def test_init_prod_mean():
    shape = NetworkShape(n=99, K=1, L=100)   # 100 x 100 = 10^4 prod draws
    w = init_weights(shape, InitSpec(seed=3))
    m = w.stacks[0]["prod"].mean()
    assert -1.05 <= m <= -0.95


def test_init_stds_shrink_with_depth():
    w = init_weights(NetworkShape(2, 4, 30), InitSpec(seed=1))
    s1 = w.stacks[0]["w_in"].std()
    s4 = w.stacks[3]["w_in"].std()
    assert s4 < s1 / 2


def _deep_init_finite(radius):
    shape = NetworkShape(3, 4, 4)
    X = np.random.default_rng(0).uniform(-radius, radius, (200, 3))
    with np.errstate(all="ignore"):
        return all(np.all(np.isfinite(predict(init_weights(shape, InitSpec(seed=s)), X)))
                   for s in range(5))


def test_init_forward_finite_deep():
    assert _deep_init_finite(3.0)


@pytest.mark.xfail(strict=True, reason="gated products compound across stacks: with gate weight "
                   "sigmoid(-1) ~ 0.27 the prod signal reaches ~40 in stack 1, ~1e4 in stack 2 and "
                   "~1e17 in stack 3 for |x| ~ 10, so stack 4 overflows for every seed")
def test_init_forward_finite_deep_wide_box():
    assert _deep_init_finite(10.0)


def test_zero_weights_saturated_gates_give_zero():
    shape = NetworkShape(2, 1, 3)
    w = zero_weights(shape)
    w.stacks[0]["prod"][:] = -40.0
    tape = ad.Tape()
    x = np.array([0.7, -1.3])
    out = forward(w, x, tape)
    assert np.array_equal(out.value, np.zeros(2))
    # signals: lin 0, pow 1, prod 1, ops 0 per layer
    w.W_out[:] = 0.0
    w.W_out[0, 3:] = 1.0
    assert predict(w, x)[0] == pytest.approx(3 * (0 + 1 + 1 + 0))


def crafted_square():
    shape = NetworkShape(2, 1, 1)
    w = zero_weights(shape)
    st_ = w.stacks[0]
    st_["pow"][0] = [0.0, 2.0, 0.0]
    st_["prod"][0] = [40.0, 40.0, -40.0]
    w.W_out[0, 3 + 1] = 1.0      # the pow signal
    return w


def test_crafted_square_network():
    w = crafted_square()
    assert predict(w, np.array([1.0, 3.0]))[0] == pytest.approx(9.0, rel=1e-12)
    # the prod signal of that layer is the gated product x1 * x2
    w2 = crafted_square()
    w2.W_out[0] = 0.0
    w2.W_out[0, 3 + 2] = 1.0
    assert predict(w2, np.array([1.5, -2.0]))[0] == pytest.approx(-3.0, rel=1e-12)


def test_crafted_square_extraction():
    w = crafted_square()
    e = extract_expression(w)[0]
    assert same_model([e], [normalize(Pow(Abs(Var(1)), 2.0))])
    X = np.random.default_rng(2).uniform(-3, 3, (100, 2))
    assert np.allclose(evaluate(e, X), predict(w, X)[:, 0], rtol=1e-12, atol=0)


def test_simple_product_gate():
    # gates [1.5, 2.1, -0.99] on (x1, x2, 2) approximate x1 * x2 on the unit box;
    # the deviation stays under 0.3, i.e. 30% of the largest |x1 x2| there
    shape = NetworkShape(2, 1, 1)
    w = zero_weights(shape)
    w.stacks[0]["prod"][0] = [1.5, 2.1, -0.99]
    w.W_out[0, 3 + 2] = 1.0
    g = np.linspace(0, 1, 21)
    X = np.array([(a, b) for a in g for b in g])
    err = np.abs(predict(w, X)[:, 0] - X[:, 0] * X[:, 1])
    assert err.max() <= 0.3
    assert err.max() > 0.2       # the approximation is coarse, not exact


def test_zero_weights_extract_to_zero():
    exprs = extract_expression(zero_weights(NetworkShape(3, 2, 2)))
    assert all(e == Const(0.0) for e in exprs)


def test_constant_signal_is_two():
    z = signal_expressions(zero_weights(NetworkShape(2, 1, 1)))
    assert z[:3] == [Var(0), Var(1), Const(CONSTANT_INPUT)]


def test_bad_input_width():
    with pytest.raises(ValueError):
        predict(init_weights(NetworkShape(2, 1, 1)), np.zeros((4, 3)))


def test_single_state_shape():
    w = init_weights(NetworkShape(3, 1, 2))
    out = forward(w, np.array([0.5, 1.0, -2.0]), ad.Tape())
    assert out.shape == (3,)
    assert np.allclose(out.value, predict(w, np.array([[0.5, 1.0, -2.0]]))[0])


def _signals_away_from_clamp(w, X, floor=1e-3):
    z = signal_expressions(w)
    vals = np.stack([np.broadcast_to(evaluate(s, X), (len(X),)) for s in z], axis=1)
    return np.all(np.abs(vals) >= floor, axis=1)


def test_extraction_fidelity():
    rng = np.random.default_rng(42)
    for draw in range(20):
        shape = NetworkShape(2, 2, 1) if draw % 2 else NetworkShape(3, 1, 3)
        w = init_weights(shape, InitSpec(seed=draw, lin_std=0.5, pow_std=0.5, ops_std=0.5, out_std=0.5))
        X = rng.uniform(-2, 2, (400, shape.n))
        X = X[_signals_away_from_clamp(w, X)][:100]
        assert len(X) == 100
        exprs = extract_expression(w)
        ref = predict(w, X)
        for j, e in enumerate(exprs):
            got = np.broadcast_to(evaluate(e, X), (len(X),))
            assert np.all(np.abs(got - ref[:, j]) <= 1e-8 * (1 + np.abs(ref[:, j])))


def test_full_network_gradient():
    """Every weight of an n=2, K=2, L=2 network against central differences."""
    shape = NetworkShape(2, 2, 2)
    rng = np.random.default_rng(9)
    w = init_weights(shape, InitSpec(seed=1, lin_std=0.4, pow_std=0.4, ops_std=0.4, out_std=0.4))
    proj = rng.normal(size=2)
    arrays = w.arrays()
    h = 1e-6

    X = rng.uniform(-2, 2, (400, 2))
    X = X[_signals_away_from_clamp(w, X, 1e-2)][:100]
    assert len(X) == 100

    def scalars(arrs):
        return predict(w.with_arrays(arrs), X) @ proj

    # finite differences for all 100 points at once, one weight at a time
    fd = []
    for i, a in enumerate(arrays):
        col = np.zeros((len(X),) + a.shape)
        for idx in np.ndindex(a.shape):
            up = [b.copy() for b in arrays]
            dn = [b.copy() for b in arrays]
            up[i][idx] += h
            dn[i][idx] -= h
            col[(slice(None),) + idx] = (scalars(up) - scalars(dn)) / (2 * h)
        fd.append(col)
    for p, x in enumerate(X):
        tape = ad.Tape()
        out = forward(bind_arrays(shape, arrays, tape), x, tape)
        g = tape.backward(ad.vsum(out * proj))
        for i in range(len(arrays)):
            rel = np.abs(g[i] - fd[i][p]) / np.maximum(np.maximum(np.abs(g[i]), np.abs(fd[i][p])), 1e-3)
            assert rel.max() < 1e-5, (p, i, rel.max())
