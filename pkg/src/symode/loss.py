"""Training objective: data error plus sparsity-promoting penalties."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .network import NetworkWeights, bind, forward

LN_1_1 = float(np.log(1.1))


@dataclass
class LossConfig:
    error: str = "mae"             # "mae" or "mse"
    regularizer: str = "custom"    # "custom", "l1" or "none"
    alpha1: float = 0.05           # L1/2 weight on lin (and W_out if enabled)
    alpha2: float = 0.01           # exponential penalty on pow exponents
    alpha3: float = 0.0375         # L1/2 weight on ops in/out
    l1_lambda: float = 0.01
    regularize_output: bool = False  # optional L1/2 on W_out

    def __post_init__(self):
        if self.error not in ("mae", "mse"):
            raise ValueError(f"unknown error kind {self.error!r}")
        if self.regularizer not in ("custom", "l1", "none"):
            raise ValueError(f"unknown regularizer {self.regularizer!r}")

    @classmethod
    def l1_mse(cls, lam=0.01):
        """Plain MSE with an L1 penalty over every weight."""
        return cls(error="mse", regularizer="l1", l1_lambda=lam)


def _lift(*xs):
    """Put plain arrays on a scratch tape so the same code returns floats."""
    if any(isinstance(x, ad.Value) for x in xs):
        return xs, False
    tape = ad.Tape()
    return tuple(tape.const(x) for x in xs), True


def _out(v, plain):
    return float(v.value) if plain else v


def empirical_error(pred, target, kind="mae"):
    """Mean over samples of the 1-norm (mae) or squared 2-norm (mse) of the residual."""
    (pred,), plain = _lift(pred)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise ValueError(f"prediction shape {pred.shape} != target shape {target.shape}")
    r = pred - target
    if r.value.ndim == 1:
        r = ad.reshape(r, (1, r.shape[0]))
    per = ad.absolute(r) if kind == "mae" else r * r
    return _out(ad.vmean(ad.vsum(per, axis=1)), plain)


def reg_l_half(w, alpha):
    """alpha * sum sqrt|w|, with zero subgradient at w = 0."""
    (w,), plain = _lift(w)
    return _out(alpha * ad.vsum(ad.sqrt_abs(w)), plain)


def reg_l_poly(w, alpha, const_index=-1):
    """alpha * 1.1^(sum_{i != c} |w_i| + w_c) per row of ``w``.

    Exponents on the states are pushed towards zero while the exponent on
    the constant input may go negative freely, which keeps spurious powers
    out of the model.
    """
    (w,), plain = _lift(w)
    W = w if w.value.ndim == 2 else ad.reshape(w, (1, w.shape[0]))
    d = W.shape[1]
    mask = np.ones(d)
    mask[const_index] = 0.0
    cmask = 1.0 - mask
    s = ad.vsum(ad.absolute(W) * mask + W * cmask, axis=1)
    return _out(alpha * ad.vsum(ad.exp(s * LN_1_1)), plain)


def reg_l_ops(w_in, w_out, alpha):
    (w_in, w_out), plain = _lift(w_in, w_out)
    return _out(alpha * (ad.vsum(ad.sqrt_abs(w_in)) + ad.vsum(ad.sqrt_abs(w_out))), plain)


def penalty(bound, config: LossConfig):
    """Regularization term for bound weights (a tape Value, or 0.0)."""
    if config.regularizer == "none":
        return 0.0
    terms = []
    if config.regularizer == "l1":
        for st in bound.stacks:
            for v in st.values():
                terms.append(ad.vsum(ad.absolute(v)))
        terms.append(ad.vsum(ad.absolute(bound.W_out)))
        total = terms[0]
        for t in terms[1:]:
            total = total + t
        return config.l1_lambda * total
    c = bound.shape.const_index
    for st in bound.stacks:
        terms.append(reg_l_half(st["lin"], config.alpha1))
        terms.append(reg_l_poly(st["pow"], config.alpha2, c))
        terms.append(reg_l_ops(st["w_in"], st["w_out"], config.alpha3))
    if config.regularize_output:
        terms.append(reg_l_half(bound.W_out, config.alpha1))
    total = terms[0]
    for t in terms[1:]:
        total = total + t
    return total


def total_loss(weights, X, Y, config: LossConfig, tape: ad.Tape):
    """Loss Value on ``tape``; ``weights`` may be NetworkWeights or already bound."""
    bound = bind(weights, tape) if isinstance(weights, NetworkWeights) else weights
    pred = forward(bound, X, tape)
    err = empirical_error(pred, Y, config.error)
    return err + penalty(bound, config)


def loss_value(weights: NetworkWeights, X, Y, config: LossConfig):
    """Loss as a plain float."""
    tape = ad.Tape(check_finite=False)
    return float(total_loss(weights, X, Y, config, tape).value)


def loss_and_grad(weights: NetworkWeights, X, Y, config: LossConfig):
    tape = ad.Tape()
    loss = total_loss(weights, X, Y, config, tape)
    return float(loss.value), tape.backward(loss)
