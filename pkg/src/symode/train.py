"""Adam training with mini-batches and k-fold instance selection."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .errors import AllFoldsDivergedError, DivergedError, NonFiniteError
from .loss import LossConfig, loss_value, total_loss
from .network import InitSpec, NetworkShape, NetworkWeights, bind_arrays, init_weights


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    epochs: int = 400
    folds: int = 5
    batch_size: int | None = None    # None -> min(floor(sqrt(n_train)), 32)
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    diverge_threshold: float = 1e6
    diverge_patience: int = 10

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.folds < 2:
            raise ValueError("need at least 2 folds")


def batch_size_for(n_train, override=None):
    if override:
        return int(override)
    return max(1, min(math.isqrt(n_train), 32))


@dataclass
class Preset:
    """Hyperparameters of one benchmark example."""

    name: str
    K: int
    L: int
    learning_rate: float
    epochs: int
    sigma1: float = 0.01
    sigma2: float = 0.01

    def shape(self, n):
        return NetworkShape(n, self.K, self.L)

    def train_config(self, seed=0, **over):
        return TrainConfig(learning_rate=self.learning_rate, epochs=self.epochs, seed=seed, **over)


PRESETS = {
    p.name: p for p in [
        Preset("takens_bogdanov", 1, 10, 0.01, 25),
        Preset("pendulum", 1, 10, 0.032, 100),
        Preset("rossler", 1, 10, 0.01, 400),
        Preset("lorenz", 1, 10, 0.01, 6400),
        Preset("fitzhugh_nagumo", 2, 1, 0.01, 3200),
        Preset("chemical_kinetics", 2, 1, 0.01, 6400, 0.001, 0.001),
        Preset("chua", 1, 10, 0.032, 6400),
    ]
}


# ------------------------------------------------------------------- Adam

@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0

    @classmethod
    def zeros_like(cls, params):
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], 0)


def adam_step(params, grads, state: AdamState, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update. Returns (new params, new state)."""
    if len(params) != len(grads):
        raise ValueError("params and grads differ in length")
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise NonFiniteError("non-finite gradient passed to adam_step")
    t = state.t + 1
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ValueError(f"param shape {p.shape} != grad shape {g.shape}")
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        new_p.append(p - lr * (m / c1) / (np.sqrt(v / c2) + eps))
        new_m.append(m)
        new_v.append(v)
    return new_p, AdamState(new_m, new_v, t)


# -------------------------------------------------------------- one fold

@dataclass
class FoldResult:
    fold: int
    weights: NetworkWeights
    held_out_loss: float
    history: list = field(default_factory=list)
    diverged: bool = False
    message: str = ""


def train_fold(X_train, Y_train, X_test, Y_test, shape: NetworkShape, init: InitSpec,
               loss_cfg: LossConfig, cfg: TrainConfig, fold=0, shuffle_seed=None) -> FoldResult:
    """Train one network instance and score it on the held-out split.

    Raises DivergedError if the epoch loss stays non-finite or above the
    threshold for ``cfg.diverge_patience`` consecutive epochs.
    """
    X_train = np.asarray(X_train, dtype=float)
    Y_train = np.asarray(Y_train, dtype=float)
    weights = init_weights(shape, init)
    params = weights.arrays()
    state = AdamState.zeros_like(params)
    rng = np.random.default_rng(init.seed if shuffle_seed is None else shuffle_seed)
    m = len(X_train)
    bs = batch_size_for(m, cfg.batch_size)
    history = []
    bad = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(m)
        total, count = 0.0, 0
        failed = False
        for start in range(0, m, bs):
            idx = order[start:start + bs]
            # per-node checks are skipped for speed; any inf/nan reaches the
            # loss or the gradients and is caught here
            tape = ad.Tape(check_finite=False)
            with np.errstate(all="ignore"):
                bound = bind_arrays(shape, params, tape)
                loss = total_loss(bound, X_train[idx], Y_train[idx], loss_cfg, tape)
                grads = tape.backward(loss)
            if not (math.isfinite(float(loss.value)) and all(np.isfinite(g).all() for g in grads)):
                failed = True
                break
            params, state = adam_step(params, grads, state, cfg.learning_rate,
                                      cfg.beta1, cfg.beta2, cfg.eps)
            total += float(loss.value) * len(idx)
            count += len(idx)
        epoch_loss = math.inf if failed else total / count
        history.append(epoch_loss)
        if not math.isfinite(epoch_loss) or epoch_loss > cfg.diverge_threshold:
            bad += 1
            if bad >= cfg.diverge_patience:
                raise DivergedError(f"fold {fold} diverged at epoch {epoch}", history)
        else:
            bad = 0
    weights = weights.with_arrays(params)
    held = loss_value(weights, X_test, Y_test, loss_cfg)
    if not math.isfinite(held):
        raise DivergedError(f"fold {fold} has non-finite held-out loss", history)
    return FoldResult(fold, weights, held, history)


# ---------------------------------------------------------------- k-fold

def fold_partition(m, folds, seed):
    """Disjoint random fifths (for folds=5) of range(m)."""
    if m < folds:
        raise ValueError(f"need at least {folds} samples, got {m}")
    perm = np.random.default_rng(seed).permutation(m)
    return [np.sort(p) for p in np.array_split(perm, folds)]


def fold_seeds(seed, folds):
    """Distinct (init, shuffle) seed pairs per fold derived from one root seed."""
    out = []
    for child in np.random.SeedSequence(seed).spawn(folds):
        a, b = child.generate_state(2, dtype=np.uint64)
        out.append((int(a), int(b)))
    return out


def _run_fold(args):
    i, X, Y, test_idx, shape, init, loss_cfg, cfg, seeds = args
    mask = np.ones(len(X), dtype=bool)
    mask[test_idx] = False
    try:
        return train_fold(X[mask], Y[mask], X[test_idx], Y[test_idx], shape,
                          replace(init, seed=seeds[0]), loss_cfg, cfg, fold=i, shuffle_seed=seeds[1])
    except DivergedError as e:
        return FoldResult(i, None, math.inf, e.history, diverged=True, message=str(e))


def train_kfold(X, Y, shape: NetworkShape, loss_cfg: LossConfig | None = None,
                cfg: TrainConfig | None = None, init: InitSpec | None = None,
                threads=1, seeds=None):
    """Train one instance per fold and keep the one with the lowest held-out loss.

    ``seeds`` may force the per-fold (init, shuffle) seed pairs; by default
    they are derived from ``cfg.seed``. Returns (best FoldResult, all results).
    """
    loss_cfg = loss_cfg or LossConfig()
    cfg = cfg or TrainConfig()
    init = init or InitSpec()
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    parts = fold_partition(len(X), cfg.folds, cfg.seed)
    seeds = seeds or fold_seeds(cfg.seed, cfg.folds)
    jobs = [(i, X, Y, parts[i], shape, init, loss_cfg, cfg, seeds[i]) for i in range(cfg.folds)]
    if threads and threads > 1:
        with ProcessPoolExecutor(max_workers=min(threads, cfg.folds)) as pool:
            results = list(pool.map(_run_fold, jobs))
    else:
        results = [_run_fold(j) for j in jobs]
    live = [r for r in results if not r.diverged]
    if not live:
        raise AllFoldsDivergedError("every fold diverged: " + "; ".join(r.message for r in results))
    best = min(live, key=lambda r: (r.held_out_loss, r.fold))
    return best, results
