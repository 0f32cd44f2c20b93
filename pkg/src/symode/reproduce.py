"""End-to-end runs of the benchmark examples and their pass/fail verdicts."""

from __future__ import annotations

import time
from pathlib import Path

from .expr import Exp, Sin, parse_text, same_model, term_map, to_text
from .io import (RunReport, candidate_dict, emit_comparison, save_checkpoint, save_dataset,
                 save_report, save_selection)
from .loss import LossConfig
from .network import extract_expression
from .select import select_model
from .systems import build_dataset, get_system, relative_rmse
from .train import PRESETS, train_kfold

# relative RMSE (in %) of the selected models reported for each example
REPORTED_RMSE = {
    "takens_bogdanov": 2.10, "pendulum": 4.45, "rossler": 2.60, "lorenz": 2.59,
    "fitzhugh_nagumo": 2.40, "chemical_kinetics": 1.56, "chua": 5.41,
}


def _contains(e, cls):
    if isinstance(e, cls):
        return True
    for child in getattr(e, "terms", ()) + getattr(e, "factors", ()):
        if _contains(child, cls):
            return True
    for attr in ("arg", "base"):
        if hasattr(e, attr) and _contains(getattr(e, attr), cls):
            return True
    return False


def _keys(text, names):
    return set(term_map(parse_text(text, names)))


def verdict(name, exprs, rmse):
    """Checks for one example; ``rmse`` is a fraction, not a percentage."""
    system = get_system(name)
    names = list(system.names)
    truth = system.rhs_exprs()
    pct = 100.0 * rmse
    checks = {}
    notes = []
    if name in ("rossler", "lorenz"):
        checks["exact"] = same_model(list(exprs), truth)
        if name == "lorenz":
            checks["rmse_within_1pp"] = abs(pct - REPORTED_RMSE[name]) <= 1.0
    elif name == "takens_bogdanov":
        tm = term_map(exprs[1])
        want = _keys("1 + y + x^2 + x*y", names)
        checks["four_terms"] = set(tm) == want
        if checks["four_terms"]:
            by = {to_text_key(k, names): c for k, c in tm.items()}
            checks["constant_in_range"] = -4.6 <= by["1"] <= -4.1
            checks["y_coef_in_range"] = 1.35 <= by["y"] <= 1.65
            checks["x2_coef_rounds_to_1"] = round(by["x^2"]) == 1
            checks["xy_coef_rounds_to_1"] = round(by["x*y"]) == 1
        checks["rmse_at_most_3pct"] = pct <= 3.0
    elif name == "pendulum":
        tm = term_map(exprs[1])
        key = next(iter(_keys("sin(x)", names)))
        checks["c_sin_x"] = set(tm) == {key}
        if checks["c_sin_x"]:
            checks["c_in_range"] = -5.1 <= tm[key] <= -4.6
    elif name == "chua":
        checks["not_exact"] = not same_model(list(exprs), truth)
        checks["sinusoidal_surrogate"] = any(_contains(e, Sin) for e in exprs)
        checks["rmse_within_2pp"] = abs(pct - REPORTED_RMSE[name]) <= 2.0
        notes.append("absolute value is not a network primitive; a sinusoidal stand-in is expected")
    elif name == "fitzhugh_nagumo":
        have = [set(term_map(e)) for e in exprs]
        want = [set(term_map(e)) for e in truth]
        checks["truth_terms_present"] = all(w <= h for w, h in zip(want, have))
        checks["rmse_within_2pp"] = abs(pct - REPORTED_RMSE[name]) <= 2.0
    elif name == "chemical_kinetics":
        checks["exponential_terms"] = all(_contains(e, Exp) for e in exprs)
        checks["rmse_within_2pp"] = abs(pct - REPORTED_RMSE[name]) <= 2.0
    else:
        raise KeyError(name)
    return {"passed": all(checks.values()), "checks": checks, "notes": notes,
            "rmse_pct": pct}


def to_text_key(key, names):
    if not key:
        return "1"
    return "*".join(to_text(f, names) for f in key)


def run_example(name, seed=0, epochs=None, loss="custom", threads=1, out_dir=None, log=None):
    """Generate, train, select, evaluate and simulate one example."""
    system = get_system(name)
    preset = PRESETS[name]
    names = list(system.names)
    timings = {}
    t0 = time.perf_counter()
    ds = build_dataset(system, sigma1=preset.sigma1, sigma2=preset.sigma2, seed=seed)
    timings["generate"] = time.perf_counter() - t0

    cfg = preset.train_config(seed=seed)
    if epochs is not None:
        cfg.epochs = int(epochs)
    loss_cfg = LossConfig.l1_mse() if loss == "l1mse" else LossConfig()
    t0 = time.perf_counter()
    best, folds = train_kfold(ds.X, ds.Y, preset.shape(system.n), loss_cfg, cfg, threads=threads)
    timings["train"] = time.perf_counter() - t0
    if log:
        log(f"{name} seed {seed}: fold losses {[round(f.held_out_loss, 5) for f in folds]}, best {best.fold}")

    t0 = time.perf_counter()
    net = extract_expression(best.weights)
    winner, cands = select_model(net, ds.X, ds.Y)
    timings["select"] = time.perf_counter() - t0

    w_rmse = relative_rmse(winner.exprs, ds)
    t_rmse = relative_rmse(system, ds)
    v = verdict(name, winner.exprs, w_rmse)

    x0 = ds.X_clean[0]
    horizon = 10.0 if system.chaotic else system.layout.horizon
    t0 = time.perf_counter()
    comparison = emit_comparison(system, winner.exprs, x0, horizon, system.layout.dt,
                                 Path(out_dir) / f"{name}_comparison.csv" if out_dir else None)
    timings["simulate"] = time.perf_counter() - t0
    v["comparison_finite_rows"] = int(comparison[:, -1].sum())

    report = RunReport(
        config={"example": name, "seed": seed, "epochs": cfg.epochs, "loss": loss,
                "learning_rate": cfg.learning_rate, "K": preset.K, "L": preset.L,
                "sigma1": preset.sigma1, "sigma2": preset.sigma2},
        fold_losses=[f.held_out_loss for f in folds],
        selected_fold=best.fold,
        network_exprs=[to_text(e, names) for e in net],
        candidates=[candidate_dict(c, names) for c in cands],
        winner_exprs=winner.texts(names),
        winner_rmse=w_rmse, truth_rmse=t_rmse, timings=timings, verdict=v,
    )
    if out_dir:
        out = Path(out_dir)
        save_dataset(out / f"{name}_data.csv", ds)
        save_checkpoint(out / f"{name}_checkpoint.json", best.weights, seed)
        save_selection(out / f"{name}_selection.json", winner, cands, names)
        save_report(out / f"{name}_report.json", report)
    return report, winner, ds


def reproduce(name, seed=0, retries=3, **kw):
    """Try up to ``retries`` consecutive seeds until the verdict passes."""
    reports = []
    for k in range(max(1, retries)):
        report, winner, ds = run_example(name, seed + k, **kw)
        reports.append(report)
        if report.verdict["passed"]:
            break
    return reports


def summary_line(report):
    v = report.verdict
    status = "PASS" if v["passed"] else "FAIL"
    return (f"{status} {report.config['example']} seed={report.config['seed']} "
            f"rmse={v['rmse_pct']:.2f}% truth={100 * report.truth_rmse:.2f}% "
            f"winner={report.winner_exprs}")


__all__ = ["verdict", "run_example", "reproduce", "summary_line", "REPORTED_RMSE"]
