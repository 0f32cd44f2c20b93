"""Benchmark dynamical systems, RK4 sampling, noise injection and the relative RMSE."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DivideByZeroError, NonFiniteError
from .expr import evaluate, parse_text


@dataclass(frozen=True)
class Layout:
    trajectories: int
    points: int          # stored samples per trajectory
    horizon: float       # length of each trajectory in time units
    substeps: int = 10   # RK4 steps between stored samples

    @property
    def total(self):
        return self.trajectories * self.points

    @property
    def dt(self):
        return self.horizon / self.points

    def to_dict(self):
        return {"trajectories": self.trajectories, "points": self.points,
                "horizon": self.horizon, "substeps": self.substeps}


@dataclass(frozen=True)
class SystemDef:
    name: str
    names: tuple
    rhs_text: tuple
    fn: object                       # vectorized numpy rhs: (m, n) -> (m, n)
    layout: Layout
    large_layout: Layout
    box_low: tuple
    box_high: tuple
    sigma: float = 0.01
    chaotic: bool = False
    basin_horizon: float | None = None   # reject initial states that leave
    basin_bound: float = 50.0            # |x| <= bound within this horizon

    @property
    def n(self):
        return len(self.names)

    def rhs_exprs(self):
        return [parse_text(t, list(self.names)) for t in self.rhs_text]


def _tb(X):
    x, y = X[:, 0], X[:, 1]
    return np.stack([y, -4.41 + 1.5 * y + x * x + x * y], axis=1)


def _pendulum(X):
    return np.stack([X[:, 1], -4.905 * np.sin(X[:, 0])], axis=1)


def _rossler(X):
    x, y, z = X[:, 0], X[:, 1], X[:, 2]
    return np.stack([-y - z, x + 0.5 * y, 2.0 + z * (x - 4.0)], axis=1)


def _lorenz(X):
    x, y, z = X[:, 0], X[:, 1], X[:, 2]
    return np.stack([10.0 * (y - x), x * (28.0 - z) - y, x * y - 8.0 / 3.0 * z], axis=1)


def _fhn(X):
    v, w = X[:, 0], X[:, 1]
    return np.stack([v - v ** 3 / 3.0 - w + 0.328, 0.08 * (v - 0.8 * w + 0.7)], axis=1)


def _kinetics(X):
    a, th = X[:, 0], X[:, 1]
    r = a * np.exp(th)
    return np.stack([-0.07 * r + 0.1, r - th], axis=1)


def _chua(X):
    x, y, z = X[:, 0], X[:, 1], X[:, 2]
    g = np.abs(x + 1.0) - np.abs(x - 1.0)
    return np.stack([15.6 * y - 31.2 / 7.0 * x + 3.343 * g, x - y + z, -28.0 * y], axis=1)


_NONCHAOTIC_LARGE = dict(trajectories=1000, points=100)
# one long trajectory; a single RK4 step per stored sample (h = 0.01) keeps
# the 10^5-step run affordable and is far below the noise level
_CHAOTIC_LARGE = Layout(1, 100000, 1000.0, substeps=1)

SYSTEMS = {
    s.name: s for s in [
        SystemDef(
            "takens_bogdanov", ("x", "y"),
            ("y", "-4.41 + 1.5*y + x^2 + x*y"), _tb,
            Layout(4, 250, 1.0), Layout(horizon=1.0, **_NONCHAOTIC_LARGE),
            (-4.0, -3.0), (2.0, 3.0), basin_horizon=20.0,
        ),
        SystemDef(
            "pendulum", ("x", "y"),
            ("y", "-4.905*sin(x)"), _pendulum,
            Layout(4, 250, 4.0), Layout(horizon=4.0, **_NONCHAOTIC_LARGE),
            (-np.pi, -4.5), (np.pi, 4.5),
        ),
        SystemDef(
            "rossler", ("x", "y", "z"),
            ("-y - z", "x + 0.5*y", "2 + z*(x - 4)"), _rossler,
            Layout(1, 1000, 100.0), _CHAOTIC_LARGE,
            (-1.0, -1.0, 0.0), (1.0, 1.0, 0.2), chaotic=True,
            basin_horizon=200.0, basin_bound=100.0,
        ),
        SystemDef(
            "lorenz", ("x", "y", "z"),
            ("10*(y - x)", "x*(28 - z) - y", "x*y - 8/3*z"), _lorenz,
            Layout(1, 1000, 25.0), _CHAOTIC_LARGE,
            (-15.0, -20.0, 5.0), (15.0, 20.0, 40.0), chaotic=True,
        ),
        SystemDef(
            "fitzhugh_nagumo", ("v", "w"),
            ("v - v^3/3 - w + 0.328", "0.08*(v - 0.8*w + 0.7)"), _fhn,
            Layout(100, 10, 1.0), Layout(horizon=1.0, **_NONCHAOTIC_LARGE),
            (-2.0, -1.0), (2.0, 2.0),
        ),
        SystemDef(
            "chemical_kinetics", ("alpha", "theta"),
            ("-0.07*alpha*exp(theta) + 0.1", "alpha*exp(theta) - theta"), _kinetics,
            Layout(100, 160, 0.001), Layout(horizon=0.001, **_NONCHAOTIC_LARGE),
            (1e-3, 1e-3), (0.7, 7.0), sigma=0.001,
        ),
        SystemDef(
            "chua", ("x", "y", "z"),
            ("15.6*y - 31.2/7*x + 3.343*(abs(x + 1) - abs(x - 1))", "x - y + z", "-28*y"), _chua,
            Layout(1, 1000, 100.0), _CHAOTIC_LARGE,
            (-1.0, -0.3, -1.0), (1.0, 0.3, 1.0), chaotic=True,
        ),
    ]
}


def get_system(name) -> SystemDef:
    try:
        return SYSTEMS[name]
    except KeyError:
        raise KeyError(f"unknown system {name!r}; choose from {sorted(SYSTEMS)}") from None


def rhs_eval(system, x):
    """Right-hand side at one state (n,) or a batch (m, n)."""
    system = get_system(system) if isinstance(system, str) else system
    x = np.asarray(x, dtype=float)
    out = system.fn(np.atleast_2d(x))
    return out[0] if x.ndim == 1 else out


def integrate_rk4(f, x0, dt, steps, substeps=1):
    """Classical fixed-step RK4.

    ``f`` is a SystemDef, a system name or a callable mapping (B, n) to
    (B, n). ``x0`` is (n,) or a batch (B, n). Returns the ``steps + 1``
    stored states, each ``substeps`` RK4 steps of size ``dt / substeps``
    apart, shaped (steps+1, n) or (steps+1, B, n).
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if isinstance(f, (str, SystemDef)):
        f = (get_system(f) if isinstance(f, str) else f).fn
    x0 = np.asarray(x0, dtype=float)
    single = x0.ndim == 1
    x = np.atleast_2d(x0).copy()
    h = dt / substeps
    out = np.empty((steps + 1,) + x.shape)
    out[0] = x
    for i in range(steps):
        for _ in range(substeps):
            k1 = f(x)
            k2 = f(x + 0.5 * h * k1)
            k3 = f(x + 0.5 * h * k2)
            k4 = f(x + h * k3)
            x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x)):
            raise NonFiniteError(f"trajectory escaped at stored step {i + 1}")
        out[i + 1] = x
    return out[:, 0] if single else out


@dataclass
class Dataset:
    system: str
    X: np.ndarray
    Y: np.ndarray
    x_rms: np.ndarray
    xdot_rms: np.ndarray
    sigma1: float
    sigma2: float
    seed: int
    layout: Layout
    traj: np.ndarray = None
    t: np.ndarray = None
    X_clean: np.ndarray = field(default=None, repr=False)
    Y_clean: np.ndarray = field(default=None, repr=False)

    @property
    def m(self):
        return len(self.X)

    @property
    def n(self):
        return self.X.shape[1]


def rms(A):
    return np.sqrt(np.mean(np.asarray(A) ** 2, axis=0))


def add_noise(clean, sigma, rng):
    """Gaussian noise scaled per column by sigma times the column RMS."""
    scale = rms(clean)
    return clean + scale * rng.normal(0.0, sigma, clean.shape) if sigma else clean.copy(), scale


def stays_bounded(system: SystemDef, x0, horizon, bound, h=0.01):
    """Mask of initial states whose RK4 trajectory keeps |x| <= bound up to ``horizon``."""
    x = np.array(x0, dtype=float)
    ok = np.ones(len(x), dtype=bool)
    with np.errstate(all="ignore"):
        for _ in range(int(round(horizon / h))):
            k1 = system.fn(x)
            k2 = system.fn(x + 0.5 * h * k1)
            k3 = system.fn(x + 0.5 * h * k2)
            k4 = system.fn(x + h * k3)
            x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            ok &= np.all(np.isfinite(x), axis=1) & (np.max(np.abs(x), axis=1) <= bound)
            x[~ok] = 0.0
    return ok


def sample_initial(system: SystemDef, count, rng):
    """Uniform draws from the system's box, optionally restricted to a basin."""
    lo = np.asarray(system.box_low, dtype=float)
    hi = np.asarray(system.box_high, dtype=float)
    if system.basin_horizon is None:
        return lo + (hi - lo) * rng.random((count, system.n))
    kept = []
    have = 0
    for _ in range(100):
        cand = lo + (hi - lo) * rng.random((max(2 * count, 16), system.n))
        cand = cand[stays_bounded(system, cand, system.basin_horizon, system.basin_bound)]
        kept.append(cand)
        have += len(cand)
        if have >= count:
            return np.concatenate(kept)[:count]
    raise NonFiniteError(f"could not find {count} bounded initial states for {system.name}")


def build_dataset(system, layout: Layout | None = None, sigma1=None, sigma2=None, seed=0,
                  large=False) -> Dataset:
    """Noisy states and derivatives sampled along RK4 trajectories.

    Initial conditions are drawn uniformly from the system's box, states
    are stored every ``horizon / points`` time units starting at t = 0, and
    derivatives come from the exact right-hand side at the clean states.
    """
    system = get_system(system) if isinstance(system, str) else system
    layout = layout or (system.large_layout if large else system.layout)
    sigma1 = system.sigma if sigma1 is None else sigma1
    sigma2 = system.sigma if sigma2 is None else sigma2
    if sigma1 < 0 or sigma2 < 0:
        raise ValueError("noise levels must be non-negative")
    rng = np.random.default_rng(seed)
    x0 = sample_initial(system, layout.trajectories, rng)
    traj = integrate_rk4(system.fn, x0, layout.dt, layout.points - 1, layout.substeps)
    # (points, B, n) -> trajectory-major rows
    Xc = np.transpose(traj, (1, 0, 2)).reshape(-1, system.n)
    Yc = system.fn(Xc)
    if not np.all(np.isfinite(Yc)):
        raise NonFiniteError("non-finite derivative in clean data")
    X, x_rms = add_noise(Xc, sigma1, rng)
    Y, xdot_rms = add_noise(Yc, sigma2, rng)
    ids = np.repeat(np.arange(layout.trajectories), layout.points)
    t = np.tile(np.arange(layout.points) * layout.dt, layout.trajectories)
    return Dataset(system.name, X, Y, x_rms, xdot_rms, float(sigma1), float(sigma2), int(seed),
                   layout, ids, t, Xc, Yc)


def model_predict(model, X):
    """Evaluate a model given as a list of Exprs, a SystemDef or a callable."""
    if isinstance(model, SystemDef):
        return model.fn(np.asarray(X, dtype=float))
    if callable(model):
        return np.asarray(model(np.asarray(X, dtype=float)), dtype=float)
    return np.stack([np.broadcast_to(evaluate(e, X), (len(X),)) for e in model], axis=1)


def relative_rmse(model, X, Y=None):
    """sqrt(sum |f(X) - Y|^2 / sum |Y|^2); ``X`` may be a Dataset."""
    if isinstance(X, Dataset):
        X, Y = X.X, X.Y
    Y = np.asarray(Y, dtype=float)
    den = float(np.sum(Y ** 2))
    if den == 0.0:
        raise DivideByZeroError("targets are identically zero")
    R = model_predict(model, X) - Y
    return float(np.sqrt(np.sum(R ** 2) / den))
