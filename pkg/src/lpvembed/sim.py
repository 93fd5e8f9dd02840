"""Simulation of nonlinear models and self-scheduled LPV models.

Continuous-time models integrate with an adaptive Dormand-Prince 5(4)
pair (dense output through 4th-order Hermite interpolation on accepted
steps, final step clipped to the horizon) or a fixed-step classic RK4;
discrete-time models iterate the state map directly.  The self-scheduled
loop closes the scheduling map at every derivative evaluation:
p = eta(x, u(t)), then xi(x) = A(p)(x - x_bar) + B(p)(u - u_bar) + V.

Everything here is deterministic: identical inputs and configuration
produce bit-identical trajectories.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .expr import EvalError, Expr, compile_scalar
from .factorize import NlssModel, quadrature_memo
from .lpv import LpvssModel, SchedulingMap
from .parser import parse_expr

TRAJECTORY_FORMAT_VERSION = 1


class SolverError(Exception):
    """Integration failed; carries the time of failure."""

    def __init__(self, message: str, t: float):
        super().__init__(f"{message} (t = {t!r})")
        self.t = t


class GridMismatchError(Exception):
    """Trajectories live on different time grids."""


# ---------------------------------------------------------------------------
# inputs
# ---------------------------------------------------------------------------

class InputSignal:
    """A u(t) source: closed-form expressions, a ZOH table, or zero."""

    def __init__(self, nu: int, fn: Callable[[float], np.ndarray], label: str):
        self.nu = nu
        self._fn = fn
        self.label = label

    def __call__(self, t: float) -> np.ndarray:
        return self._fn(t)

    @classmethod
    def zero(cls, nu: int) -> "InputSignal":
        z = np.zeros(nu)
        return cls(nu, lambda t: z, "zero")

    @classmethod
    def from_exprs(cls, sources: Sequence[str | Expr], nu: int) -> "InputSignal":
        """One expression in t per channel (";"-separated in CLI usage)."""
        if len(sources) != nu:
            raise ValueError(f"expected {nu} input expressions, got {len(sources)}")
        exprs = [parse_expr(s, variables=("t",)) if isinstance(s, str) else s
                 for s in sources]
        fns = [compile_scalar(e, ("t",)) for e in exprs]

        def fn(t: float) -> np.ndarray:
            return np.array([f(t) for f in fns])

        return cls(nu, fn, "; ".join(str(e) for e in exprs))

    @classmethod
    def zoh(cls, times: Sequence[float], values: np.ndarray) -> "InputSignal":
        """Zero-order hold over a sample table (held left of the first sample too)."""
        times = np.asarray(times, dtype=float)
        values = np.atleast_2d(np.asarray(values, dtype=float))
        if values.shape[0] != times.shape[0]:
            raise ValueError("ZOH table: times and values disagree in length")
        if np.any(np.diff(times) <= 0):
            raise ValueError("ZOH table: times must be strictly increasing")
        nu = values.shape[1]

        def fn(t: float) -> np.ndarray:
            i = int(np.searchsorted(times, t, side="right")) - 1
            return values[max(i, 0)]

        return cls(nu, fn, f"zoh[{len(times)} samples]")


# ---------------------------------------------------------------------------
# configuration and trajectories
# ---------------------------------------------------------------------------

@dataclass
class SolverConfig:
    """Solver selection and tolerances.

    method 'auto' resolves to 'rk45' for continuous-time models and
    'discrete' for discrete-time ones; explicit methods must match the
    model's time domain.  ``step`` is the fixed RK4 step; ``output_dt``
    the spacing of the reported grid.
    """

    method: str = "auto"
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    max_step: float = math.inf
    step: float = 1e-3
    output_dt: float = 0.01

    def __post_init__(self):
        if self.method not in ("auto", "rk45", "rk4", "discrete"):
            raise ValueError(f"unknown method '{self.method}'")
        if min(self.rel_tol, self.abs_tol) <= 0:
            raise ValueError("tolerances must be positive")
        if self.step <= 0 or self.output_dt <= 0 or self.max_step <= 0:
            raise ValueError("step sizes must be positive")

    def resolve(self, sample_time: float) -> str:
        continuous = sample_time == 0.0
        if self.method == "auto":
            return "rk45" if continuous else "discrete"
        if continuous and self.method == "discrete":
            raise ValueError("discrete iteration needs a discrete-time model")
        if not continuous and self.method != "discrete":
            raise ValueError("discrete-time models use the discrete method")
        return self.method


@dataclass
class Trajectory:
    t: np.ndarray
    x: np.ndarray                  # (n, nx)
    y: np.ndarray                  # (n, ny)
    u: np.ndarray                  # (n, nu)
    p: np.ndarray | None = None    # (n, np) for self-scheduled runs

    def __post_init__(self):
        n = len(self.t)
        for name in ("x", "y", "u", "p"):
            arr = getattr(self, name)
            if arr is None:
                continue
            if arr.shape[0] != n:
                raise ValueError(f"{name} has {arr.shape[0]} rows for {n} times")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite samples")


def rmse(a: Trajectory, b: Trajectory, channels: str = "x") -> np.ndarray:
    """Per-channel root-mean-square difference on a shared grid."""
    if a.t.shape != b.t.shape or not np.array_equal(a.t, b.t):
        raise GridMismatchError("trajectories are on different time grids")
    va = getattr(a, channels)
    vb = getattr(b, channels)
    if va is None or vb is None or va.shape != vb.shape:
        raise GridMismatchError(f"channel set '{channels}' not comparable")
    return np.sqrt(np.mean((va - vb) ** 2, axis=0))


# ---------------------------------------------------------------------------
# integrators
# ---------------------------------------------------------------------------

# Dormand-Prince 5(4) tableau; row 7 is also the 5th-order solution
# (FSAL), _E holds b5 - b4 for the embedded error estimate.
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_E = (71 / 57600, 0.0, -71 / 16695, 71 / 1920,
      -17253 / 339200, 22 / 525, -1 / 40)

_MIN_FACTOR = 0.2
_MAX_FACTOR = 5.0
_SAFETY = 0.9


def _hermite(t0, y0, f0, t1, y1, f1, s):
    """Cubic Hermite value at s in [t0, t1]; 4th-order accurate."""
    h = t1 - t0
    th = (s - t0) / h
    u = th * th * (3.0 - 2.0 * th)
    return ((1.0 - u) * y0 + u * y1
            + th * (th - 1.0) * ((th - 1.0) * h * f0 + th * h * f1))


def _error_norm(err, y0, y1, rel_tol, abs_tol):
    sc = abs_tol + rel_tol * np.maximum(np.abs(y0), np.abs(y1))
    return float(np.sqrt(np.mean((err / sc) ** 2)))


def _initial_step(rhs, t0, y0, f0, t_end, rel_tol, abs_tol):
    sc = abs_tol + rel_tol * np.abs(y0)
    d0 = float(np.sqrt(np.mean((y0 / sc) ** 2)))
    d1 = float(np.sqrt(np.mean((f0 / sc) ** 2)))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, t_end - t0)
    f1 = rhs(t0 + h0, y0 + h0 * f0)
    d2 = float(np.sqrt(np.mean(((f1 - f0) / sc) ** 2))) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1, t_end - t0)


def _integrate_rk45(rhs, y0, t_grid, cfg: SolverConfig):
    t_end = float(t_grid[-1])
    t = float(t_grid[0])
    y = np.array(y0, dtype=float)
    f = rhs(t, y)
    if not np.all(np.isfinite(f)):
        raise SolverError("non-finite derivative", t)
    out = np.empty((len(t_grid), len(y)))
    out[0] = y
    gi = 1  # next grid index to fill

    h = min(_initial_step(rhs, t, y, f, t_end, cfg.rel_tol, cfg.abs_tol),
            cfg.max_step)
    eps = np.finfo(float).eps
    k = [f] + [None] * 6
    while t < t_end:
        rem = t_end - t
        if rem <= 4 * eps * max(abs(t_end), 1.0):
            break  # within rounding distance of the horizon
        h = min(h, cfg.max_step, rem)
        if h < 16 * eps * max(abs(t), 1.0):
            raise SolverError("step size underflow", t)
        for i in range(1, 7):
            yi = y + h * sum(aij * k[j] for j, aij in enumerate(_A[i]) if aij)
            k[i] = rhs(t + _C[i] * h, yi)
        y_new = yi  # stage 7 state: the 5th-order solution (FSAL)
        if not all(np.all(np.isfinite(ki)) for ki in k):
            raise SolverError("non-finite derivative", t)
        err_vec = h * sum(e * k[j] for j, e in enumerate(_E) if e)
        err = _error_norm(err_vec, y, y_new, cfg.rel_tol, cfg.abs_tol)
        if err <= 1.0:
            t_new = t + h
            # fill output grid points passed by this step
            while gi < len(t_grid) and t_grid[gi] <= t_new:
                s = t_grid[gi]
                if s == t_new:
                    out[gi] = y_new
                else:
                    out[gi] = _hermite(t, y, k[0], t_new, y_new, k[6], s)
                gi += 1
            t, y = t_new, y_new
            k[0] = k[6]  # FSAL
            factor = _MAX_FACTOR if err == 0.0 else min(
                _MAX_FACTOR, max(_MIN_FACTOR, _SAFETY * err ** -0.2))
            h *= factor
        else:
            h *= max(_MIN_FACTOR, _SAFETY * err ** -0.2)
    while gi < len(t_grid):  # grid points at exactly t_end
        out[gi] = y
        gi += 1
    return out


def _integrate_rk4(rhs, y0, t_grid, cfg: SolverConfig):
    t_end = float(t_grid[-1])
    t = float(t_grid[0])
    y = np.array(y0, dtype=float)
    f = rhs(t, y)
    out = np.empty((len(t_grid), len(y)))
    out[0] = y
    gi = 1
    eps = np.finfo(float).eps
    while t < t_end:
        rem = t_end - t
        if rem <= 4 * eps * max(abs(t_end), 1.0):
            break
        h = min(cfg.step, rem)
        k1 = f
        k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1)
        k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2)
        k4 = rhs(t + h, y + h * k3)
        y_new = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(y_new)):
            raise SolverError("non-finite state", t)
        t_new = t + h
        f_new = rhs(t_new, y_new)
        while gi < len(t_grid) and t_grid[gi] <= t_new:
            s = t_grid[gi]
            if s == t_new:
                out[gi] = y_new
            else:
                out[gi] = _hermite(t, y, k1, t_new, y_new, f_new, s)
            gi += 1
        t, y, f = t_new, y_new, f_new
    while gi < len(t_grid):
        out[gi] = y
        gi += 1
    return out


def _output_grid(t_end: float, dt: float) -> np.ndarray:
    if t_end <= 0:
        raise ValueError("t_end must be positive")
    n = int(math.floor(t_end / dt + 1e-9))
    grid = np.minimum(np.arange(n + 1) * dt, t_end)
    if grid[-1] < t_end:
        grid = np.append(grid, t_end)
    return grid


def _discrete_grid(t_end: float, sample_time: float) -> np.ndarray:
    if sample_time > 0:
        n = int(math.floor(t_end / sample_time + 1e-9))
        return np.arange(n + 1) * sample_time
    # unspecified sample time: t_end is the step count
    n = int(round(t_end))
    if n < 0 or abs(t_end - n) > 1e-9:
        raise ValueError("with sample_time -1, t_end must be a step count")
    return np.arange(n + 1, dtype=float)


# ---------------------------------------------------------------------------
# front ends
# ---------------------------------------------------------------------------

def _eval_all(fns, args, t):
    try:
        return [fn(*args) for fn in fns]
    except (EvalError, ValueError, ZeroDivisionError, OverflowError) as exc:
        raise SolverError(f"model evaluation failed: {exc}", t) from exc


def _continuous(rhs, x0, u, t_end, cfg, method):
    grid = _output_grid(t_end, cfg.output_dt)
    integ = _integrate_rk45 if method == "rk45" else _integrate_rk4
    xs = integ(rhs, x0, grid, cfg)
    us = np.array([u(t) for t in grid])
    return grid, xs, us


def simulate_nl(model: NlssModel, x0: Sequence[float], u: InputSignal,
                t_end: float, cfg: SolverConfig | None = None) -> Trajectory:
    """Simulate the nonlinear model itself."""
    cfg = cfg or SolverConfig()
    if len(x0) != model.nx or u.nu != model.nu:
        raise ValueError("x0 or input dimension does not match the model")
    method = cfg.resolve(model.sample_time)
    names = model.var_names
    f_fns = [compile_scalar(e, names) for e in model.f]
    h_fns = [compile_scalar(e, names) for e in model.h]

    if method == "discrete":
        grid = _discrete_grid(t_end, model.sample_time)
        xs = np.empty((len(grid), model.nx))
        us = np.array([u(t) for t in grid])
        xs[0] = x0
        for i in range(len(grid) - 1):
            args = tuple(xs[i]) + tuple(us[i])
            xs[i + 1] = _eval_all(f_fns, args, float(grid[i]))
            if not np.all(np.isfinite(xs[i + 1])):
                raise SolverError("non-finite state", float(grid[i + 1]))
    else:
        def rhs(t, ystate):
            args = tuple(ystate) + tuple(u(t))
            return np.array(_eval_all(f_fns, args, t))
        grid, xs, us = _continuous(rhs, x0, u, t_end, cfg, method)

    ys = np.array([_eval_all(h_fns, tuple(x) + tuple(uu), float(t))
                   for t, x, uu in zip(grid, xs, us)])
    return Trajectory(grid, xs, ys, us)


def simulate_lpv_self_scheduled(m: LpvssModel, sm: SchedulingMap,
                                x0: Sequence[float], u: InputSignal,
                                t_end: float,
                                cfg: SolverConfig | None = None) -> Trajectory:
    """Simulate the LPV model closed over its own scheduling map.

    Every derivative (or step map) evaluation recomputes
    p = eta(x, u(t)) before combining the affine matrix families.
    """
    cfg = cfg or SolverConfig()
    if len(x0) != m.nx or u.nu != m.nu:
        raise ValueError("x0 or input dimension does not match the model")
    method = cfg.resolve(m.sample_time)
    x_bar = np.asarray(m.anchor.x_bar)
    u_bar = np.asarray(m.anchor.u_bar)

    def step_map(x, uu):
        p = sm.evaluate(x, uu)
        A, B, _, _ = m.matrices(p)
        return A @ (x - x_bar) + B @ (uu - u_bar) + m.V

    if method == "discrete":
        grid = _discrete_grid(t_end, m.sample_time)
        xs = np.empty((len(grid), m.nx))
        us = np.array([u(t) for t in grid])
        xs[0] = x0
        for i in range(len(grid) - 1):
            xs[i + 1] = step_map(xs[i], us[i])
        if not np.all(np.isfinite(xs)):
            raise SolverError("non-finite state", float(grid[-1]))
    else:
        def rhs(t, ystate):
            return step_map(ystate, u(t))
        grid, xs, us = _continuous(rhs, x0, u, t_end, cfg, method)

    ps = np.empty((len(grid), m.np))
    ys = np.empty((len(grid), m.ny))
    for i in range(len(grid)):
        p = sm.evaluate(xs[i], us[i])
        _, _, C, D = m.matrices(p)
        ps[i] = p
        ys[i] = C @ (xs[i] - x_bar) + D @ (us[i] - u_bar) + m.W
    return Trajectory(grid, xs, ys, us, ps)


# ---------------------------------------------------------------------------
# trajectory I/O
# ---------------------------------------------------------------------------

def trajectory_header(nx: int, ny: int, nu: int, n_p: int | None) -> list[str]:
    cols = (["t"]
            + [f"x{i + 1}" for i in range(nx)]
            + [f"y{i + 1}" for i in range(ny)]
            + [f"u{i + 1}" for i in range(nu)])
    if n_p is not None:
        cols += [f"p{i + 1}" for i in range(n_p)]
    return cols


def write_trajectory_csv(traj: Trajectory, path: str):
    """Columns t, x.., y.., u.. and p.. when scheduling was recorded."""
    n_p = traj.p.shape[1] if traj.p is not None else None
    blocks = [traj.t[:, None], traj.x, traj.y, traj.u]
    if traj.p is not None:
        blocks.append(traj.p)
    data = np.hstack(blocks)
    with open(path, "w", newline="") as fh:
        fh.write(f"# format_version: {TRAJECTORY_FORMAT_VERSION}\n")
        w = csv.writer(fh)
        w.writerow(trajectory_header(traj.x.shape[1], traj.y.shape[1],
                                     traj.u.shape[1], n_p))
        for row in data:
            w.writerow([repr(float(v)) for v in row])


def trajectory_to_dict(traj: Trajectory) -> dict:
    out = {
        "format_version": TRAJECTORY_FORMAT_VERSION,
        "kind": "trajectory",
        "t": [float(v) for v in traj.t],
        "x": traj.x.tolist(),
        "y": traj.y.tolist(),
        "u": traj.u.tolist(),
    }
    if traj.p is not None:
        out["p"] = traj.p.tolist()
    return out


def read_input_csv(path: str, nu: int) -> InputSignal:
    """Build a ZOH input from a CSV with a t column and u1..u_nu columns."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh)
                if r and not r[0].lstrip().startswith("#")]
    if not rows:
        raise ValueError(f"{path}: empty input table")
    header = [c.strip() for c in rows[0]]
    try:
        ti = header.index("t")
        ui = [header.index(f"u{i + 1}") for i in range(nu)]
    except ValueError:
        raise ValueError(
            f"{path}: header must contain t and u1..u{nu}") from None
    body = np.array([[float(c) for c in r] for r in rows[1:]])
    return InputSignal.zoh(body[:, ti], body[:, ui])
