"""Affine LPV models and scheduling maps from factorized systems.

A factorized system's matrix functions are split into an affine family

    A(p) = A0 + p1*A1 + ... + pnp*Anp     (likewise B, C, D)

together with a scheduling map p = eta(x, u) built from the nonlinear
matrix entries.  Two extraction policies are provided: 'element' turns
every nonlinear entry into one scheduling variable, 'factor' first
splits entries into sums of (constant coefficient) * (nonlinear factor)
and schedules the factors.  Both deduplicate structurally identical
expressions, so repeated nonlinearities cost a single p component.

Substituting p = eta(x, u) back recovers the factorized matrices
exactly; combined with the line-integral identity this makes the LPV
model an exact global embedding of the nonlinear system, which
:func:`verify_embedding` checks by direct sampling.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .expr import Expr, Add, Mul, EvalError, compile_scalar, mul, to_string
from .factorize import (
    Anchor, FactorizedSystem, ModelError, NlssModel,
    quadrature_memo, var_sort_key,
)

RANGE_GRID_BUDGET = 10_000_000


class SchedulingError(Exception):
    """Scheduling map evaluation failed; carries the offending p index."""

    def __init__(self, index: int, cause: Exception):
        super().__init__(f"p{index + 1}: {cause}")
        self.index = index


class RangeGridError(Exception):
    """The requested range grid is larger than the evaluation budget."""


@dataclass
class SchedulingMap:
    """p = eta(x, u), one expression per scheduling variable."""

    entries: tuple[Expr, ...]
    var_names: tuple[str, ...]     # x names then u names of the source model
    _compiled: list = field(default=None, repr=False, compare=False)

    @property
    def np(self) -> int:
        return len(self.entries)

    @property
    def footprints(self) -> tuple[tuple[str, ...], ...]:
        """Per-entry (x, u) components the entry actually depends on."""
        return tuple(
            tuple(sorted(e.free_vars(), key=var_sort_key)) for e in self.entries
        )

    def _fns(self):
        if self._compiled is None:
            self._compiled = [compile_scalar(e, self.var_names)
                              for e in self.entries]
        return self._compiled

    def evaluate(self, x: Sequence[float], u: Sequence[float]) -> np.ndarray:
        args = tuple(x) + tuple(u)
        out = np.empty(len(self.entries))
        with quadrature_memo():
            for i, fn in enumerate(self._fns()):
                try:
                    out[i] = fn(*args)
                except (EvalError, ValueError, ZeroDivisionError, OverflowError) as exc:
                    raise SchedulingError(i, exc) from exc
        return out

    def entry_strings(self) -> list[str]:
        return [to_string(e) for e in self.entries]


@dataclass
class RangeBox:
    """Scheduling ranges: raw grid extrema and the reported (widened) box."""

    raw: tuple[tuple[float, float], ...]
    reported: tuple[tuple[float, float], ...]
    grid_per_dim: int
    box: dict[str, tuple[float, float]]


@dataclass
class LpvssModel:
    """Affine LPV state-space model.

    Coefficient families are stacked arrays: ``A[0]`` is the constant
    part and ``A[1 + i]`` the coefficient of p_{i+1}; likewise B, C, D.
    The realization identity, with (dx, du) = (x - x_bar, u - u_bar):

        f(x, u) = A(p) dx + B(p) du + V,   p = eta(x, u)

    and the output analogue with C, D, W.  For the default origin
    anchor dx = x and du = u.
    """

    nx: int
    nu: int
    ny: int
    np: int
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    V: np.ndarray
    W: np.ndarray
    anchor: Anchor
    sample_time: float = 0.0
    range_box: RangeBox | None = None

    def __post_init__(self):
        expected = {
            "A": (self.np + 1, self.nx, self.nx),
            "B": (self.np + 1, self.nx, self.nu),
            "C": (self.np + 1, self.ny, self.nx),
            "D": (self.np + 1, self.ny, self.nu),
        }
        for name, shape in expected.items():
            arr = getattr(self, name)
            if arr.shape != shape:
                raise ModelError(f"{name} has shape {arr.shape}, expected {shape}")
        if self.V.shape != (self.nx,) or self.W.shape != (self.ny,):
            raise ModelError("offset vectors V, W have wrong length")

    @property
    def is_continuous(self) -> bool:
        return self.sample_time == 0.0

    def matrices(self, p: Sequence[float]):
        p = np.asarray(p, dtype=float)
        if p.shape != (self.np,):
            raise ModelError(f"expected {self.np} scheduling values, got {p.shape}")
        w = np.empty(self.np + 1)
        w[0] = 1.0
        w[1:] = p
        return (np.tensordot(w, self.A, axes=1),
                np.tensordot(w, self.B, axes=1),
                np.tensordot(w, self.C, axes=1),
                np.tensordot(w, self.D, axes=1))


def eval_sched(sm: SchedulingMap, x: Sequence[float], u: Sequence[float]) -> np.ndarray:
    return sm.evaluate(x, u)


def eval_lpvss(m: LpvssModel, p: Sequence[float]):
    """Numeric (A, B, C, D) at the scheduling point p."""
    return m.matrices(p)


# ---------------------------------------------------------------------------
# extraction
# ---------------------------------------------------------------------------

def _split_term(term: Expr):
    """(coefficient, factor) with the coefficient constant in (x, u).

    Splits a canonical product into its variable-free factors (folded to
    a float) and the rest.  Terms that refuse to split (a variable-free
    factor that cannot be evaluated) degrade to coefficient 1 on the
    whole term.
    """
    if not isinstance(term, Mul):
        return 1.0, term
    const_part = []
    hot = []
    for f in term.terms:
        (hot if f.free_vars() else const_part).append(f)
    if not const_part:
        return 1.0, term
    try:
        coeff = mul(*const_part).eval({})
    except EvalError:
        return 1.0, term
    return coeff, mul(*hot)


class _Assembler:
    """Shared bookkeeping for both extraction policies."""

    def __init__(self, fs: FactorizedSystem):
        self.fs = fs
        self.index: dict[Expr, int] = {}
        self.entries: list[Expr] = []
        # per matrix tag: constant block and list of (p, i, j, coeff)
        self.const = {}
        self.hits = {t: [] for t in "ABCD"}
        m = fs.model
        self.shapes = {"A": (m.nx, m.nx), "B": (m.nx, m.nu),
                       "C": (m.ny, m.nx), "D": (m.ny, m.nu)}
        for t, s in self.shapes.items():
            self.const[t] = np.zeros(s)

    def sched_index(self, e: Expr) -> int:
        k = self.index.get(e)
        if k is None:
            k = len(self.entries)
            self.index[e] = k
            self.entries.append(e)
        return k

    def build(self):
        m = self.fs.model
        n_p = len(self.entries)
        stacked = {}
        for t, (r, c) in self.shapes.items():
            arr = np.zeros((n_p + 1, r, c))
            arr[0] = self.const[t]
            for k, i, j, coeff in self.hits[t]:
                arr[k + 1, i, j] += coeff
            stacked[t] = arr
        model = LpvssModel(
            nx=m.nx, nu=m.nu, ny=m.ny, np=n_p,
            A=stacked["A"], B=stacked["B"], C=stacked["C"], D=stacked["D"],
            V=self.fs.V.copy(), W=self.fs.W.copy(),
            anchor=self.fs.anchor, sample_time=m.sample_time,
        )
        sched = SchedulingMap(tuple(self.entries), m.var_names)
        return model, sched


def _matrix_blocks(fs: FactorizedSystem):
    for tag in "ABCD":
        yield tag, getattr(fs, f"{tag}_bar").entries


def extract_element(fs: FactorizedSystem):
    """One scheduling variable per distinct nonlinear matrix entry.

    Constant entries populate the p-independent matrices; every other
    entry e becomes (or reuses) a scheduling variable with coefficient 1
    at its position.  Discovery order is row-major over A, B, C, D.
    """
    asm = _Assembler(fs)
    for tag, rows in _matrix_blocks(fs):
        for i, row in enumerate(rows):
            for j, e in enumerate(row):
                if not e.free_vars():
                    asm.const[tag][i, j] += e.eval({})
                else:
                    asm.hits[tag].append((asm.sched_index(e), i, j, 1.0))
    return asm.build()


def extract_factor(fs: FactorizedSystem):
    """Scheduling variables from the nonlinear factors of each entry.

    Each entry is flattened into a sum of terms; each term contributes
    its variable-free coefficient to the coefficient matrix of the
    scheduling variable carrying its nonlinear factor.  Factors repeated
    anywhere in the system share one scheduling variable.  A term with
    no clean split degrades to element treatment (coefficient 1 on the
    whole term).
    """
    asm = _Assembler(fs)
    for tag, rows in _matrix_blocks(fs):
        for i, row in enumerate(rows):
            for j, e in enumerate(row):
                terms = e.terms if isinstance(e, Add) else (e,)
                for term in terms:
                    if not term.free_vars():
                        asm.const[tag][i, j] += term.eval({})
                        continue
                    coeff, factor = _split_term(term)
                    asm.hits[tag].append((asm.sched_index(factor), i, j, coeff))
    return asm.build()


# ---------------------------------------------------------------------------
# scheduling ranges
# ---------------------------------------------------------------------------

def _widen(lo: float, hi: float) -> tuple[float, float]:
    # safety margin: 0.5% of each endpoint's magnitude, outward
    return lo - 0.005 * abs(lo), hi + 0.005 * abs(hi)


def estimate_range(sm: SchedulingMap, box: Mapping[str, tuple[float, float]],
                   grid_per_dim: int = 10001,
                   budget: int = RANGE_GRID_BUDGET) -> RangeBox:
    """Scheduling extrema over a dense grid on the (x, u) box.

    Each entry is scanned over a regular grid of ``grid_per_dim`` points
    per dimension spanning its own dependency footprint (components the
    entry does not use cannot move its extrema, so they are not
    gridded).  An entry whose footprint grid would exceed ``budget``
    points raises RangeGridError; pass a coarser grid in that case.
    Reported intervals are widened outward by 0.5% of each endpoint's
    magnitude; the raw extrema are kept alongside.
    """
    if grid_per_dim < 2:
        raise RangeGridError("grid_per_dim must be at least 2")
    raw = []
    for idx, (e, fp) in enumerate(zip(sm.entries, sm.footprints)):
        missing = [n for n in fp if n not in box]
        if missing:
            raise ModelError(
                f"p{idx + 1} needs bounds for {', '.join(missing)}")
        points = grid_per_dim ** len(fp)
        if points > budget:
            raise RangeGridError(
                f"p{idx + 1} depends on {len(fp)} components; "
                f"{grid_per_dim}^{len(fp)} = {points} grid points exceed the "
                f"budget of {budget}; use a coarser grid")
        axes = []
        for n in fp:
            lo, hi = box[n]
            if not (np.isfinite(lo) and np.isfinite(hi)) or lo > hi:
                raise ModelError(f"invalid box for {n}: [{lo}, {hi}]")
            axes.append(np.linspace(lo, hi, grid_per_dim))
        fn = compile_scalar(e, fp)
        lo = hi = None
        with quadrature_memo():
            for pt in itertools.product(*axes):
                try:
                    v = fn(*pt)
                except (EvalError, ValueError, ZeroDivisionError,
                        OverflowError) as exc:
                    raise SchedulingError(idx, exc) from exc
                if lo is None or v < lo:
                    lo = v
                if hi is None or v > hi:
                    hi = v
        if not (np.isfinite(lo) and np.isfinite(hi)):
            raise SchedulingError(idx, ValueError(
                f"non-finite value over the box: [{lo}, {hi}]"))
        raw.append((lo, hi))
    return RangeBox(
        raw=tuple(raw),
        reported=tuple(_widen(lo, hi) for lo, hi in raw),
        grid_per_dim=grid_per_dim,
        box={k: (float(v[0]), float(v[1])) for k, v in box.items()},
    )


# ---------------------------------------------------------------------------
# embedding verification
# ---------------------------------------------------------------------------

@dataclass
class VerifyReport:
    """Worst-case reconstruction residuals over sampled (x, u) points."""

    f_max: np.ndarray               # per state equation
    h_max: np.ndarray               # per output equation
    f_worst: list                   # (x, u) attaining each state residual
    h_worst: list
    samples: int
    seed: int
    box: dict[str, tuple[float, float]]

    @property
    def max_residual(self) -> float:
        return float(max(self.f_max.max(initial=0.0),
                         self.h_max.max(initial=0.0)))

    def to_dict(self) -> dict:
        return {
            "samples": self.samples,
            "seed": self.seed,
            "box": {k: list(v) for k, v in self.box.items()},
            "max_residual": self.max_residual,
            "f_max": [float(v) for v in self.f_max],
            "h_max": [float(v) for v in self.h_max],
            "f_worst": [[list(map(float, x)), list(map(float, u))]
                        for x, u in self.f_worst],
            "h_worst": [[list(map(float, x)), list(map(float, u))]
                        for x, u in self.h_worst],
        }


def default_box(model: NlssModel) -> dict[str, tuple[float, float]]:
    """Unit box [-1, 1] per component, used when no box is declared."""
    return {n: (-1.0, 1.0) for n in model.var_names}


def verify_embedding(model: NlssModel, m: LpvssModel, sm: SchedulingMap,
                     samples: int = 1000,
                     box: Mapping[str, tuple[float, float]] | None = None,
                     seed: int = 0) -> VerifyReport:
    """Sample the box and compare the LPV realization against f and h.

    At each point: p = eta(x, u), then A(p)(x - x_bar) + B(p)(u - u_bar)
    + V is checked against f(x, u) entrywise (outputs likewise).  The
    report carries per-equation worst residuals and where they occurred.
    """
    if box is None:
        box = default_box(model)
    rng = np.random.default_rng(seed)
    names = model.var_names
    lo = np.array([box[n][0] for n in names])
    hi = np.array([box[n][1] for n in names])
    pts = lo + (hi - lo) * rng.random((samples, len(names)))

    f_fns = [compile_scalar(e, names) for e in model.f]
    h_fns = [compile_scalar(e, names) for e in model.h]
    x_bar = np.asarray(m.anchor.x_bar)
    u_bar = np.asarray(m.anchor.u_bar)

    f_max = np.zeros(model.nx)
    h_max = np.zeros(model.ny)
    f_worst = [None] * model.nx
    h_worst = [None] * model.ny
    for row in pts:
        x = row[:model.nx]
        u = row[model.nx:]
        p = sm.evaluate(x, u)
        A, B, C, D = m.matrices(p)
        dx = x - x_bar
        du = u - u_bar
        f_lpv = A @ dx + B @ du + m.V
        h_lpv = C @ dx + D @ du + m.W
        args = tuple(row)
        for i in range(model.nx):
            r = abs(f_lpv[i] - f_fns[i](*args))
            if r > f_max[i] or f_worst[i] is None:
                f_max[i] = r
                f_worst[i] = (tuple(x), tuple(u))
        for i in range(model.ny):
            r = abs(h_lpv[i] - h_fns[i](*args))
            if r > h_max[i] or h_worst[i] is None:
                h_max[i] = r
                h_worst[i] = (tuple(x), tuple(u))
    return VerifyReport(f_max, h_max, f_worst, h_worst,
                        samples, seed, {k: (float(v[0]), float(v[1]))
                                        for k, v in box.items()})
