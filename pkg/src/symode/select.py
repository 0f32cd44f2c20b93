"""Tolerance sweep with corrected AIC to pick a parsimonious model."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CorrectionUndefinedError, DomainError, NonFiniteError
from .expr import (DEFAULT_CONSTANTS, Abs, count_parameters, default_names, evaluate, resolve_abs,
                   round_coefficients, to_text)


def tolerance_grid():
    """11 log-spaced tolerances from 0.01 to 1, rounded to 4 decimals."""
    return [round(10 ** (-2 + i / 5), 4) for i in range(11)]


def aic_score(P, mse, m):
    """2P + m ln(mse) + 2(P+1)(P+2)/(m-P-2).

    Returns -inf for a perfect fit (mse <= 0); see :func:`is_degenerate`.
    """
    if m <= P + 2:
        raise CorrectionUndefinedError(f"need m > P + 2 (m={m}, P={P})")
    if mse <= 0:
        return -math.inf
    return 2 * P + m * math.log(mse) + 2 * (P + 1) * (P + 2) / (m - P - 2)


def is_degenerate(mse):
    return mse <= 0


@dataclass
class CandidateModel:
    exprs: list
    tolerance: float
    P: int
    mse: float
    aic: float
    degenerate: bool = False
    discarded_reason: str | None = None
    sign_resolved: bool = False

    @property
    def discarded(self):
        return self.discarded_reason is not None

    def texts(self, names=None):
        names = names or default_names(max(1, len(self.exprs)))
        return [to_text(e, names) for e in self.exprs]


def predict_exprs(exprs, X):
    X = np.asarray(X, dtype=float)
    return np.stack([np.broadcast_to(evaluate(e, X), (len(X),)) for e in exprs], axis=1)


def model_mse(exprs, X, Y):
    """Mean over samples of the squared 2-norm of the residual."""
    R = predict_exprs(exprs, X) - np.asarray(Y, dtype=float)
    return float(np.mean(np.sum(R ** 2, axis=1)))


def score(exprs, X, Y, tolerance=float("nan")):
    """Score a fixed model; non-evaluable models come back discarded."""
    m = len(X)
    P = sum(count_parameters(e) for e in exprs)
    try:
        mse = model_mse(exprs, X, Y)
        aic = aic_score(P, mse, m)
    except (DomainError, NonFiniteError, CorrectionUndefinedError) as err:
        return CandidateModel(list(exprs), tolerance, P, math.nan, math.nan,
                              discarded_reason=f"{type(err).__name__}: {err}")
    return CandidateModel(list(exprs), tolerance, P, mse, aic, degenerate=is_degenerate(mse))


def best_candidate(candidates):
    """Minimum AIC; ties go to the larger tolerance, then the smaller P."""
    live = [c for c in candidates if not c.discarded]
    if not live:
        raise ValueError("no evaluable candidate: " + "; ".join(c.discarded_reason for c in candidates))
    return min(live, key=lambda c: (c.aic, -c.tolerance, c.P))


def select_model(exprs, X, Y, grid=None, constants=DEFAULT_CONSTANTS, resolve_signs=True):
    """Round the model at every tolerance and keep the lowest-AIC version.

    Returns (winner, candidates) with one candidate per tolerance, in grid
    order. Candidates that cannot be evaluated after rounding are kept in
    the list with ``discarded_reason`` set.

    With ``resolve_signs``, a variable that never changes sign in ``X`` may
    have |x_i| rewritten as +-x_i; at each tolerance the rewritten model
    replaces the plain one when its AIC is no worse.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if len(X) == 0:
        raise ValueError("empty dataset")
    grid = tolerance_grid() if grid is None else list(grid)
    signs = fixed_signs(X) if resolve_signs else {}
    candidates = []
    for tol in grid:
        rounded = [round_coefficients(e, tol, constants) for e in exprs]
        cand = score(rounded, X, Y, tol)
        if signs and any(_has_abs(e) for e in rounded):
            alt = score([resolve_abs(e, signs) for e in rounded], X, Y, tol)
            alt.sign_resolved = True
            if not alt.discarded and (cand.discarded or (alt.aic, alt.P) <= (cand.aic, cand.P)):
                cand = alt
        candidates.append(cand)
    return best_candidate(candidates), candidates


def fixed_signs(X):
    """Variables whose samples all share one strict sign, as {index: +1 or -1}."""
    X = np.asarray(X, dtype=float)
    out = {}
    for i in range(X.shape[1]):
        if np.all(X[:, i] > 0):
            out[i] = 1
        elif np.all(X[:, i] < 0):
            out[i] = -1
    return out


def _has_abs(e):
    stack = [e]
    while stack:
        node = stack.pop()
        if isinstance(node, Abs):
            return True
        stack.extend(getattr(node, "terms", ()) + getattr(node, "factors", ()))
        for attr in ("arg", "base"):
            if hasattr(node, attr):
                stack.append(getattr(node, attr))
    return False
