import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from symode.errors import AllFoldsDivergedError, DivergedError, NonFiniteError
from symode.loss import LossConfig, empirical_error
from symode.network import InitSpec, NetworkShape, init_weights, predict
from symode.train import (PRESETS, AdamState, TrainConfig, adam_step, batch_size_for, fold_partition,
                          fold_seeds, train_fold, train_kfold)


def decay_data(m=250, seed=0):
    """Samples of x' = -x with 1% noise on the derivative."""
    rng = np.random.default_rng(seed)
    X = rng.uniform(-2, 2, (m, 1))
    Y = -X + 0.01 * np.sqrt(np.mean(X ** 2)) * rng.normal(size=X.shape)
    return X, Y


# ------------------------------------------------------------------- Adam

def test_adam_zero_grad():
    p = [np.array([1.0, -2.0])]
    new, state = adam_step(p, [np.zeros(2)], AdamState.zeros_like(p), 0.01)
    assert np.array_equal(new[0], p[0]) and state.t == 1


def test_adam_first_step():
    # bias-corrected first step moves by lr * g / (|g| + eps)
    p = [np.array([0.5])]
    new, _ = adam_step(p, [np.array([1.0])], AdamState.zeros_like(p), 0.01)
    assert new[0][0] == pytest.approx(0.5 - 0.01 / (1 + 1e-8), abs=1e-15)


def test_adam_independent_coordinates():
    p = [np.array([1.0, 1.0])]
    joint, _ = adam_step(p, [np.array([2.0, -0.5])], AdamState.zeros_like(p), 0.1)
    a, _ = adam_step([np.array([1.0])], [np.array([2.0])], AdamState.zeros_like([np.zeros(1)]), 0.1)
    b, _ = adam_step([np.array([1.0])], [np.array([-0.5])], AdamState.zeros_like([np.zeros(1)]), 0.1)
    assert joint[0][0] == a[0][0] and joint[0][1] == b[0][0]


def test_adam_rejects_non_finite():
    p = [np.zeros(2)]
    with pytest.raises(NonFiniteError):
        adam_step(p, [np.array([np.nan, 0.0])], AdamState.zeros_like(p), 0.01)


def test_adam_matches_closed_form_sequence():
    # constant gradient: m_hat = g and v_hat = g^2 at every step
    p = [np.array([0.0])]
    state = AdamState.zeros_like(p)
    for _ in range(5):
        p, state = adam_step(p, [np.array([3.0])], state, 0.02)
    assert p[0][0] == pytest.approx(-5 * 0.02 * 3 / (3 + 1e-8), rel=1e-12)


# ----------------------------------------------------------------- configs

def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0)
    with pytest.raises(ValueError):
        TrainConfig(epochs=-1)
    with pytest.raises(ValueError):
        TrainConfig(folds=1)


def test_batch_size_rule():
    assert batch_size_for(800) == 28
    assert batch_size_for(5000) == 32
    assert batch_size_for(3) == 1
    assert batch_size_for(800, 7) == 7


def test_presets():
    want = {"takens_bogdanov": 25, "pendulum": 100, "rossler": 400, "fitzhugh_nagumo": 3200,
            "lorenz": 6400, "chua": 6400, "chemical_kinetics": 6400}
    assert {k: p.epochs for k, p in PRESETS.items()} == want
    assert PRESETS["pendulum"].learning_rate == PRESETS["chua"].learning_rate == 0.032
    assert PRESETS["fitzhugh_nagumo"].shape(2) == NetworkShape(2, 2, 1)


# ------------------------------------------------------------------ folds

@given(st.integers(7, 300), st.integers(2, 7), st.integers(0, 2**32 - 1))
def test_partition_law(m, folds, seed):
    parts = fold_partition(m, folds, seed)
    allidx = np.concatenate(parts)
    assert sorted(allidx.tolist()) == list(range(m))
    # every sample is held out once and trained on folds - 1 times
    held = np.zeros(m, int)
    for p in parts:
        held[p] += 1
    assert np.all(held == 1)


def test_partition_too_small():
    with pytest.raises(ValueError):
        fold_partition(3, 5, 0)


def test_fold_seeds_distinct_and_stable():
    s = fold_seeds(7, 5)
    assert s == fold_seeds(7, 5)
    assert len({a for a, _ in s}) == 5


# --------------------------------------------------------------- training

def test_zero_epochs_returns_init():
    X, Y = decay_data(50)
    shape = NetworkShape(1, 1, 2)
    r = train_fold(X[:40], Y[:40], X[40:], Y[40:], shape, InitSpec(seed=3), LossConfig(), TrainConfig(epochs=0))
    assert r.weights == init_weights(shape, InitSpec(seed=3))
    assert r.history == []


def test_smoke_linear_decay():
    # the data term reaches the noise level; the total also carries the
    # L1/2 penalties of weights that Adam keeps jittering around zero
    X, Y = decay_data()
    r = train_fold(X[:200], Y[:200], X[200:], Y[200:], NetworkShape(1, 1, 2), InitSpec(seed=0),
                   LossConfig(), TrainConfig(epochs=200))
    assert len(r.history) == 200
    assert empirical_error(predict(r.weights, X[:200]), Y[:200]) < 0.05
    assert r.history[-1] < r.history[0] / 10


def test_train_fold_deterministic():
    X, Y = decay_data(100)
    args = (X[:80], Y[:80], X[80:], Y[80:], NetworkShape(1, 1, 2), InitSpec(seed=1), LossConfig(),
            TrainConfig(epochs=5))
    a, b = train_fold(*args), train_fold(*args)
    assert a.weights == b.weights and a.history == b.history and a.held_out_loss == b.held_out_loss


def test_monotone_on_smooth_surrogate():
    X, Y = decay_data(200)
    r = train_fold(X, Y, X[:10], Y[:10], NetworkShape(1, 1, 1), InitSpec(seed=0),
                   LossConfig(error="mse", regularizer="none"),
                   TrainConfig(epochs=100, learning_rate=1e-3, batch_size=len(X)))
    assert np.all(np.diff(r.history) <= 1e-6)


def test_forced_identical_seeds_pick_fold_zero():
    # identical rows make every fold's train and held-out data the same
    X = np.full((50, 1), 0.7)
    Y = -X
    best, results = train_kfold(X, Y, NetworkShape(1, 1, 1), cfg=TrainConfig(epochs=3), seeds=[(11, 12)] * 5)
    assert len({r.held_out_loss for r in results}) == 1
    assert best.fold == 0


def test_kfold_reproducible_across_threads():
    X, Y = decay_data(60)
    cfg = TrainConfig(epochs=3, seed=4)
    b1, r1 = train_kfold(X, Y, NetworkShape(1, 1, 2), cfg=cfg, threads=1)
    b2, r2 = train_kfold(X, Y, NetworkShape(1, 1, 2), cfg=cfg, threads=3)
    assert b1.fold == b2.fold and b1.weights == b2.weights
    assert [r.held_out_loss for r in r1] == [r.held_out_loss for r in r2]


def test_divergence_is_reported():
    X, Y = decay_data(40)
    Y = Y * 1e9
    cfg = TrainConfig(epochs=15, diverge_patience=3)
    with pytest.raises(DivergedError) as err:
        train_fold(X[:30], Y[:30], X[30:], Y[30:], NetworkShape(1, 1, 1), InitSpec(), LossConfig(), cfg)
    assert len(err.value.history) == 3
    with pytest.raises(AllFoldsDivergedError):
        train_kfold(X, Y, NetworkShape(1, 1, 1), cfg=cfg)
