"""Files: run configs, datasets, checkpoints, selection/run reports, comparison CSVs.

Structured artifacts are JSON, tables are CSV. Floats are written with 17
significant digits (CSV) or shortest round-trip repr (JSON), so reals
survive a save/load cycle bit for bit. Every file is written to a temp
file and renamed into place.
"""

from __future__ import annotations

import csv
import io as _io
import json
import math
import os
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import DomainError, NonFiniteError, SchemaError, ValidationError
from .expr import count_terms, to_text
from .loss import LossConfig
from .network import SUBLAYERS, NetworkShape, NetworkWeights
from .systems import Dataset, Layout, SystemDef, get_system, integrate_rk4
from .train import TrainConfig

SCHEMA_MAJOR = 1
SCHEMA_VERSION = "1.0"


def atomic_write(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _dump(obj):
    return json.dumps(obj, indent=1, allow_nan=False) + "\n"


def _read_json(path, kind):
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise SchemaError(f"{path}: not valid JSON ({e})") from None
    if not isinstance(obj, dict):
        raise SchemaError(f"{path}: expected a JSON object")
    if obj.get("kind") != kind:
        raise SchemaError(f"{path}: expected kind {kind!r}, found {obj.get('kind')!r}")
    version = str(obj.get("version", ""))
    try:
        major = int(version.split(".")[0])
    except ValueError:
        raise SchemaError(f"{path}: bad schema version {version!r}") from None
    if major != SCHEMA_MAJOR:
        raise SchemaError(f"{path}: unsupported schema version {version} (reader is {SCHEMA_VERSION})")
    return obj


def _header(kind):
    return {"kind": kind, "version": SCHEMA_VERSION}


# ---------------------------------------------------------------- checkpoints

def checkpoint_dict(weights: NetworkWeights, seed=None):
    s = weights.shape
    w = {}
    for k, st in enumerate(weights.stacks, start=1):
        for l in range(s.L):
            for name in SUBLAYERS:
                w[f"{k}.{l + 1}.{name}"] = [float(v) for v in st[name][l]]
    w["W_out"] = [[float(v) for v in row] for row in weights.W_out]
    return {**_header("checkpoint"),
            "shape": {"n": s.n, "K": s.K, "L": s.L, "time_input": s.time_input},
            "seed": seed, "weights": w}


def weights_from_dict(obj):
    try:
        sh = obj["shape"]
        shape = NetworkShape(int(sh["n"]), int(sh["K"]), int(sh["L"]), bool(sh.get("time_input", False)))
        w = obj["weights"]
        expected = {f"{k}.{l}.{name}" for k in range(1, shape.K + 1)
                    for l in range(1, shape.L + 1) for name in SUBLAYERS} | {"W_out"}
        if set(w) != expected:
            extra = sorted(set(w) - expected)[:3]
            missing = sorted(expected - set(w))[:3]
            raise SchemaError(f"weight keys do not match shape (missing {missing}, unexpected {extra})")
        stacks = []
        for k in range(1, shape.K + 1):
            stacks.append({name: np.array([w[f"{k}.{l}.{name}"] for l in range(1, shape.L + 1)], dtype=float)
                           for name in SUBLAYERS})
        weights = NetworkWeights(shape, stacks, np.array(w["W_out"], dtype=float))
        weights.check()
    except SchemaError:
        raise
    except (KeyError, TypeError, ValueError) as e:
        raise SchemaError(f"malformed checkpoint: {e}") from None
    return weights


def save_checkpoint(path, weights: NetworkWeights, seed=None, extra=None):
    obj = checkpoint_dict(weights, seed)
    if extra:
        obj["extra"] = extra
    atomic_write(path, _dump(obj))


def load_checkpoint(path):
    """Returns (weights, metadata dict)."""
    obj = _read_json(path, "checkpoint")
    return weights_from_dict(obj), {"seed": obj.get("seed"), "extra": obj.get("extra")}


# ------------------------------------------------------------------- datasets

def _fmt(v):
    return format(float(v), ".17g")


def dataset_header(n):
    return ["traj", "t"] + [f"x{i + 1}" for i in range(n)] + [f"dx{i + 1}" for i in range(n)]


def save_dataset(path, ds: Dataset):
    """CSV of noisy samples plus a JSON sidecar (``<path>.json``)."""
    buf = _io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(dataset_header(ds.n))
    traj = ds.traj if ds.traj is not None else np.zeros(ds.m, dtype=int)
    t = ds.t if ds.t is not None else np.zeros(ds.m)
    for j in range(ds.m):
        wr.writerow([int(traj[j]), _fmt(t[j])] + [_fmt(v) for v in ds.X[j]] + [_fmt(v) for v in ds.Y[j]])
    atomic_write(path, buf.getvalue())
    side = {**_header("dataset"), "system": ds.system, "sigma1": ds.sigma1, "sigma2": ds.sigma2,
            "seed": ds.seed, "x_rms": [float(v) for v in ds.x_rms],
            "xdot_rms": [float(v) for v in ds.xdot_rms],
            "layout": ds.layout.to_dict() if ds.layout else None, "rows": ds.m}
    atomic_write(sidecar_path(path), _dump(side))


def sidecar_path(path):
    return Path(str(path) + ".json")


def _parse_cell(text, row, col):
    try:
        v = float(text)
    except ValueError:
        raise ValidationError(f"row {row}, column {col!r}: not a number ({text!r})") from None
    if not math.isfinite(v):
        raise ValidationError(f"row {row}, column {col!r}: non-finite value ({text!r})")
    return v


def load_dataset(path) -> Dataset:
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except UnicodeDecodeError:
        raise ValidationError(f"{path}: not a text CSV") from None
    if not rows:
        raise ValidationError(f"{path}: empty file")
    head = rows[0]
    if len(head) < 4 or head[:2] != ["traj", "t"] or (len(head) - 2) % 2:
        raise ValidationError(f"{path}: bad header {head!r}")
    n = (len(head) - 2) // 2
    if head != dataset_header(n):
        raise ValidationError(f"{path}: bad header {head!r}")
    body = rows[1:]
    if not body:
        raise ValidationError(f"{path}: no data rows")
    data = np.empty((len(body), len(head)))
    for r, cells in enumerate(body, start=1):
        if len(cells) != len(head):
            raise ValidationError(f"row {r}: expected {len(head)} columns, found {len(cells)}")
        for c, (name, cell) in enumerate(zip(head, cells)):
            data[r - 1, c] = _parse_cell(cell, r, name)
    meta = {}
    side = sidecar_path(path)
    if side.exists():
        meta = _read_json(side, "dataset")
    try:
        layout = Layout(**meta["layout"]) if meta.get("layout") else None
        X = data[:, 2:2 + n]
        Y = data[:, 2 + n:]
        x_rms = np.array(meta.get("x_rms") or np.sqrt(np.mean(X ** 2, axis=0)), dtype=float)
        xdot_rms = np.array(meta.get("xdot_rms") or np.sqrt(np.mean(Y ** 2, axis=0)), dtype=float)
        if x_rms.shape != (n,) or xdot_rms.shape != (n,):
            raise SchemaError(f"{side}: rms vectors do not match {n} columns")
        return Dataset(meta.get("system", "custom"), X, Y, x_rms, xdot_rms,
                       float(meta.get("sigma1", math.nan)), float(meta.get("sigma2", math.nan)),
                       int(meta.get("seed", 0) or 0), layout, data[:, 0].astype(int), data[:, 1])
    except SchemaError:
        raise
    except (KeyError, TypeError, ValueError) as e:
        raise SchemaError(f"{side}: malformed sidecar ({e})") from None


# ----------------------------------------------------------------- run config

@dataclass
class RunConfig:
    system: str
    sigma1: float = 0.01
    sigma2: float = 0.01
    K: int = 1
    L: int = 10
    loss: LossConfig = field(default_factory=LossConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    seed: int = 0

    def to_dict(self):
        return {**_header("run_config"), "system": self.system,
                "noise": {"sigma1": self.sigma1, "sigma2": self.sigma2},
                "shape": {"K": self.K, "L": self.L}, "loss": asdict(self.loss),
                "train": asdict(self.train), "seed": self.seed}

    @classmethod
    def from_dict(cls, obj):
        try:
            return cls(obj["system"], float(obj["noise"]["sigma1"]), float(obj["noise"]["sigma2"]),
                       int(obj["shape"]["K"]), int(obj["shape"]["L"]), LossConfig(**obj["loss"]),
                       TrainConfig(**obj["train"]), int(obj["seed"]))
        except (KeyError, TypeError, ValueError) as e:
            raise SchemaError(f"malformed run config: {e}") from None


def save_run_config(path, cfg: RunConfig):
    atomic_write(path, _dump(cfg.to_dict()))


def load_run_config(path) -> RunConfig:
    return RunConfig.from_dict(_read_json(path, "run_config"))


# -------------------------------------------------------------------- reports

def candidate_dict(c, names):
    return {"tolerance": c.tolerance, "exprs": c.texts(names), "P": c.P,
            "terms": sum(count_terms(e) for e in c.exprs),
            "mse": None if math.isnan(c.mse) else c.mse,
            "aic": None if not math.isfinite(c.aic) else c.aic,
            "degenerate": c.degenerate, "discarded_reason": c.discarded_reason,
            "sign_resolved": getattr(c, "sign_resolved", False)}


def selection_report(winner, candidates, names):
    return {**_header("selection"), "names": list(names),
            "candidates": [candidate_dict(c, names) for c in candidates],
            "winner": candidate_dict(winner, names)}


def save_selection(path, winner, candidates, names):
    atomic_write(path, _dump(selection_report(winner, candidates, names)))


def load_selection(path):
    obj = _read_json(path, "selection")
    if "winner" not in obj or "candidates" not in obj:
        raise SchemaError(f"{path}: missing winner or candidates")
    return obj


@dataclass
class RunReport:
    config: dict
    fold_losses: list
    selected_fold: int
    network_exprs: list
    candidates: list
    winner_exprs: list
    winner_rmse: float
    truth_rmse: float
    timings: dict = field(default_factory=dict)
    verdict: dict = field(default_factory=dict)

    def to_dict(self):
        def clean(v):
            return None if isinstance(v, float) and not math.isfinite(v) else v
        d = asdict(self)
        d["fold_losses"] = [clean(v) for v in self.fold_losses]
        return {**_header("run_report"), **d}


def save_report(path, report: RunReport):
    atomic_write(path, _dump(report.to_dict()))


def load_report(path):
    obj = _read_json(path, "run_report")
    try:
        fields = {k: obj[k] for k in RunReport.__dataclass_fields__}
    except KeyError as e:
        raise SchemaError(f"{path}: missing field {e}") from None
    return RunReport(**fields)


# ----------------------------------------------------------------- comparison

def _expr_rhs(exprs):
    from .select import predict_exprs

    return lambda X: predict_exprs(exprs, X)


def emit_comparison(system, exprs, x0, horizon, dt, path=None, names=None):
    """Ground-truth and model RK4 trajectories side by side.

    Returns an array with columns t, truth states, model states and a
    finite flag (1.0 while the model trajectory is finite). A model that
    blows up is recorded with NaN states rather than aborting.
    """
    system = get_system(system) if isinstance(system, str) else system
    steps = int(round(horizon / dt))
    truth = integrate_rk4(system.fn, x0, dt, steps)
    f = _expr_rhs(exprs)
    n = system.n
    model = np.full((steps + 1, n), np.nan)
    x = np.asarray(x0, dtype=float)[None, :].copy()
    model[0] = x[0]
    alive = True
    for i in range(steps):
        if alive:
            try:
                with np.errstate(all="ignore"):
                    k1 = f(x)
                    k2 = f(x + 0.5 * dt * k1)
                    k3 = f(x + 0.5 * dt * k2)
                    k4 = f(x + dt * k3)
                    x = x + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
                alive = bool(np.all(np.isfinite(x)))
            except (NonFiniteError, DomainError):
                alive = False
        if alive:
            model[i + 1] = x[0]
    finite = np.all(np.isfinite(model), axis=1).astype(float)
    t = np.arange(steps + 1) * dt
    table = np.column_stack([t, truth, model, finite])
    if path is not None:
        names = list(names or system.names)
        head = ["t"] + [f"true_{v}" for v in names] + [f"model_{v}" for v in names] + ["finite"]
        buf = _io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(head)
        for row in table:
            wr.writerow([_fmt(v) for v in row])
        atomic_write(path, buf.getvalue())
    return table
