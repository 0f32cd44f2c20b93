"""Command-line driver: generate, train, select, evaluate, simulate, report, reproduce.

Exit codes: 0 success, 1 a reproduce verdict failed, 2 invalid flags or
input data, 3 training diverged, 4 domain or non-finite arithmetic error,
5 file or schema problem.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import io as sio
from .errors import (AllFoldsDivergedError, DivergedError, DivideByZeroError, DomainError,
                     NonFiniteError, ParseError, SchemaError, ValidationError)
from .expr import parse_text, to_text
from .loss import LossConfig
from .network import NetworkShape, extract_expression
from .reproduce import reproduce, summary_line
from .select import predict_exprs, select_model
from .systems import SYSTEMS, Layout, SystemDef, build_dataset, get_system, relative_rmse
from .train import PRESETS, batch_size_for, train_kfold

EXIT_OK, EXIT_VERDICT, EXIT_VALIDATION, EXIT_DIVERGED, EXIT_DOMAIN, EXIT_IO = 0, 1, 2, 3, 4, 5
OUT_ENV = "SYMODE_OUT"


class UsageError(Exception):
    """Flag values that parse but make no sense together."""


def out_dir():
    return Path(os.environ.get(OUT_ENV, "symode_out"))


# ------------------------------------------------------------ flag checks

def _nonneg(text):
    v = float(text)
    if not (math.isfinite(v) and v >= 0):
        raise argparse.ArgumentTypeError(f"must be a finite number >= 0, got {text}")
    return v


def _positive(text):
    v = float(text)
    if not (math.isfinite(v) and v > 0):
        raise argparse.ArgumentTypeError(f"must be a finite number > 0, got {text}")
    return v


def _count(minimum):
    def check(text):
        v = int(text)
        if v < minimum:
            raise argparse.ArgumentTypeError(f"must be an integer >= {minimum}, got {text}")
        return v
    return check


def _vector(text):
    try:
        vals = [float(t) for t in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not all(math.isfinite(v) for v in vals):
        raise argparse.ArgumentTypeError("values must be finite")
    return np.array(vals)


# ------------------------------------------------------- user system files

def system_from_file(path) -> SystemDef:
    """A custom system from JSON: names, rhs, box_low, box_high and a layout."""
    try:
        obj = json.loads(Path(path).read_text())
        names = tuple(obj["names"])
        rhs = tuple(obj["rhs"])
        exprs = [parse_text(t, list(names)) for t in rhs]
        layout = Layout(**obj["layout"])
        low, high = tuple(map(float, obj["box_low"])), tuple(map(float, obj["box_high"]))
    except ParseError:
        raise
    except (OSError, json.JSONDecodeError) as e:
        raise SchemaError(f"{path}: {e}") from None
    except (KeyError, TypeError, ValueError) as e:
        raise SchemaError(f"{path}: malformed system file ({e})") from None
    if not (len(rhs) == len(names) == len(low) == len(high)):
        raise SchemaError(f"{path}: names, rhs and box sizes disagree")
    return SystemDef(obj.get("name", Path(path).stem), names, rhs,
                     lambda X: predict_exprs(exprs, X), layout, layout, low, high,
                     sigma=float(obj.get("sigma", 0.01)))


def resolve_system(name):
    if name in SYSTEMS:
        return get_system(name)
    if Path(name).is_file():
        return system_from_file(name)
    raise UsageError(f"unknown system {name!r}; choose from {sorted(SYSTEMS)} or give a system file")


def _names_for(ds, n):
    if ds.system in SYSTEMS:
        return list(get_system(ds.system).names)
    return [f"x{i + 1}" for i in range(n)]


# ---------------------------------------------------------------- commands

def cmd_generate(a):
    system = resolve_system(a.system)
    ds = build_dataset(system, sigma1=a.sigma1, sigma2=a.sigma2, seed=a.seed, large=a.large)
    path = Path(a.out) if a.out else out_dir() / f"{system.name}_data.csv"
    sio.save_dataset(path, ds)
    print(f"wrote {ds.m} rows to {path}")
    return EXIT_OK


def cmd_train(a):
    ds = sio.load_dataset(a.data)
    preset = PRESETS.get(a.preset)
    if preset is None:
        raise UsageError(f"unknown preset {a.preset!r}; choose from {sorted(PRESETS)}")
    K = a.stacks or preset.K
    L = a.layers or preset.L
    cfg = preset.train_config(seed=a.seed)
    if a.lr is not None:
        cfg.learning_rate = a.lr
    if a.epochs is not None:
        cfg.epochs = a.epochs
    if a.folds is not None:
        cfg.folds = a.folds
    if a.preset in SYSTEMS and get_system(a.preset).n != ds.n:
        raise UsageError(f"dataset has {ds.n} states but preset {a.preset!r} expects {get_system(a.preset).n}")
    loss_cfg = LossConfig.l1_mse() if a.loss == "l1mse" else LossConfig()
    shape = NetworkShape(ds.n, K, L)
    path = Path(a.out) if a.out else out_dir() / f"{a.preset}_checkpoint.json"
    run = sio.RunConfig(ds.system, ds.sigma1 if math.isfinite(ds.sigma1) else 0.0,
                        ds.sigma2 if math.isfinite(ds.sigma2) else 0.0, K, L, loss_cfg, cfg, a.seed)
    run_path = path.with_name(path.stem + "_run.json")
    if a.dry_run:
        sio.save_run_config(run_path, run)
        print(f"K={K} L={L} lr={cfg.learning_rate} epochs={cfg.epochs} folds={cfg.folds} "
              f"batch={batch_size_for(ds.m - ds.m // cfg.folds)} loss={a.loss}; run config {run_path}")
        return EXIT_OK
    best, folds = train_kfold(ds.X, ds.Y, shape, loss_cfg, cfg, threads=a.threads)
    summary = [{"fold": f.fold, "held_out_loss": f.held_out_loss if math.isfinite(f.held_out_loss) else None,
                "diverged": f.diverged, "message": f.message} for f in folds]
    sio.save_checkpoint(path, best.weights, a.seed, extra={"folds": summary, "selected_fold": best.fold})
    sio.save_run_config(run_path, run)
    for f in summary:
        print(f"fold {f['fold']}: held-out loss {f['held_out_loss']}" + (" (diverged)" if f["diverged"] else ""))
    print(f"best fold {best.fold}; checkpoint {path}")
    return EXIT_OK


def cmd_select(a):
    weights, _ = sio.load_checkpoint(a.checkpoint)
    ds = sio.load_dataset(a.data)
    if weights.shape.n != ds.n:
        raise UsageError(f"checkpoint has n={weights.shape.n} but dataset has {ds.n} states")
    names = _names_for(ds, ds.n)
    winner, cands = select_model(extract_expression(weights), ds.X, ds.Y)
    path = Path(a.out) if a.out else out_dir() / "selection.json"
    sio.save_selection(path, winner, cands, names)
    for c in cands:
        aic = "discarded" if c.discarded else f"{c.aic:.2f}"
        print(f"tol {c.tolerance:<7g} P {c.P:<3d} AIC {aic}")
    print("winner:", "; ".join(winner.texts(names)))
    return EXIT_OK


def _model_from_args(a, names):
    if a.selection:
        sel = sio.load_selection(a.selection)
        texts = sel["winner"]["exprs"]
        names = sel.get("names", names)
    elif a.expr:
        texts = a.expr
    else:
        return None, names
    if len(texts) != len(names):
        raise UsageError(f"model has {len(texts)} components for {len(names)} states")
    return [parse_text(t, list(names)) for t in texts], names


def cmd_evaluate(a):
    ds = sio.load_dataset(a.data)
    names = _names_for(ds, ds.n)
    model, names = _model_from_args(a, names)
    out = {}
    if model is not None:
        out["model_rmse"] = relative_rmse(model, ds)
        out["model"] = [to_text(e, names) for e in model]
    if ds.system in SYSTEMS:
        out["truth_rmse"] = relative_rmse(get_system(ds.system), ds)
    if not out:
        raise UsageError("nothing to evaluate: give --selection or --expr for a custom dataset")
    print(json.dumps(out, indent=1))
    return EXIT_OK


def cmd_simulate(a):
    system = resolve_system(a.system)
    model, names = _model_from_args(a, list(system.names))
    if model is None:
        raise UsageError("simulate needs --selection or --expr")
    x0 = a.x0 if a.x0 is not None else np.asarray(system.box_low) + 0.5 * (
        np.asarray(system.box_high) - np.asarray(system.box_low))
    if len(x0) != system.n:
        raise UsageError(f"--x0 needs {system.n} values")
    dt = a.dt or system.layout.dt
    horizon = a.horizon or (10.0 if system.chaotic else system.layout.horizon)
    path = Path(a.out) if a.out else out_dir() / f"{system.name}_comparison.csv"
    table = sio.emit_comparison(system, model, x0, horizon, dt, path, names)
    alive = int(table[:, -1].sum())
    print(f"wrote {len(table)} rows to {path} ({alive} with a finite model state)")
    return EXIT_OK


def cmd_report(a):
    rep = sio.load_report(a.report)
    v = rep.verdict
    print(f"example   {rep.config.get('example')}  seed {rep.config.get('seed')}")
    print(f"folds     {['-' if x is None else round(x, 5) for x in rep.fold_losses]}  best {rep.selected_fold}")
    print(f"winner    {'; '.join(rep.winner_exprs)}")
    print(f"rmse      model {100 * rep.winner_rmse:.2f}%  truth {100 * rep.truth_rmse:.2f}%")
    for k, ok in v.get("checks", {}).items():
        print(f"  {'ok  ' if ok else 'FAIL'} {k}")
    print("verdict  ", "PASS" if v.get("passed") else "FAIL")
    return EXIT_OK if v.get("passed") else EXIT_VERDICT


def cmd_reproduce(a):
    if a.example not in PRESETS:
        raise UsageError(f"unknown example {a.example!r}; choose from {sorted(PRESETS)}")
    dest = Path(a.out_dir) if a.out_dir else out_dir()
    reports = reproduce(a.example, a.seed, retries=a.retries, epochs=a.epochs, loss=a.loss,
                        threads=a.threads, out_dir=dest,
                        log=(lambda msg: print(msg, file=sys.stderr)) if a.verbose else None)
    for r in reports:
        print(summary_line(r))
    return EXIT_OK if reports[-1].verdict["passed"] else EXIT_VERDICT


# ------------------------------------------------------------------ parser

def build_parser():
    p = argparse.ArgumentParser(prog="symode", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="sample a noisy dataset")
    g.add_argument("--system", required=True, help="preset name or JSON system file")
    g.add_argument("--sigma1", type=_nonneg, help="state noise level (default: system preset)")
    g.add_argument("--sigma2", type=_nonneg, help="derivative noise level")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--large", action="store_true", help="use the large noise-floor layout")
    g.add_argument("--out")
    g.set_defaults(fn=cmd_generate)

    t = sub.add_parser("train", help="k-fold training, keeps the best fold")
    t.add_argument("--data", required=True)
    t.add_argument("--preset", required=True, choices=sorted(PRESETS))
    t.add_argument("--stacks", type=_count(1))
    t.add_argument("--layers", type=_count(1))
    t.add_argument("--lr", type=_positive)
    t.add_argument("--epochs", type=_count(0))
    t.add_argument("--folds", type=_count(2))
    t.add_argument("--loss", choices=["custom", "l1mse"], default="custom")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--threads", type=_count(1), default=1)
    t.add_argument("--out")
    t.add_argument("--dry-run", action="store_true", help="resolve and save the run config without training")
    t.set_defaults(fn=cmd_train)

    s = sub.add_parser("select", help="tolerance sweep and AIC selection")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--out")
    s.set_defaults(fn=cmd_select)

    e = sub.add_parser("evaluate", help="relative RMSE of a model and of the ground truth")
    e.add_argument("--data", required=True)
    e.add_argument("--selection")
    e.add_argument("--expr", nargs="+", help="one expression per state")
    e.set_defaults(fn=cmd_evaluate)

    m = sub.add_parser("simulate", help="integrate model and ground truth side by side")
    m.add_argument("--system", required=True)
    m.add_argument("--selection")
    m.add_argument("--expr", nargs="+")
    m.add_argument("--x0", type=_vector, help="initial state, comma separated")
    m.add_argument("--horizon", type=_positive)
    m.add_argument("--dt", type=_positive)
    m.add_argument("--out")
    m.set_defaults(fn=cmd_simulate)

    r = sub.add_parser("report", help="print a run report and its verdict")
    r.add_argument("--report", required=True)
    r.set_defaults(fn=cmd_report)

    x = sub.add_parser("reproduce", help="run a benchmark example end to end")
    x.add_argument("--example", required=True, choices=sorted(PRESETS))
    x.add_argument("--seed", type=int, default=0)
    x.add_argument("--retries", type=_count(1), default=3, help="consecutive seeds to try")
    x.add_argument("--epochs", type=_count(0), help="override the preset epoch count")
    x.add_argument("--loss", choices=["custom", "l1mse"], default="custom")
    x.add_argument("--threads", type=_count(1), default=1)
    x.add_argument("--out-dir")
    x.add_argument("-v", "--verbose", action="store_true")
    x.set_defaults(fn=cmd_reproduce)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (UsageError, ValidationError, ParseError) as e:
        code, err = EXIT_VALIDATION, e
    except (DivergedError, AllFoldsDivergedError) as e:
        code, err = EXIT_DIVERGED, e
    except (DomainError, NonFiniteError, DivideByZeroError) as e:
        code, err = EXIT_DOMAIN, e
    except (SchemaError, OSError) as e:
        code, err = EXIT_IO, e
    print(f"symode: error: {err}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
