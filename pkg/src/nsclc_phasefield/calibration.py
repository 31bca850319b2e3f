"""Fitting patient parameters to measured tumor volumes."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import minimize

from .drug import TherapySchedule
from .mesh import RadialGrid
from .observables import M3_TO_MM3
from .params import ModelParameters
from .simulation import simulate
from .stepper import NumericalFailure, StepConfig

V_FLOOR = 1e-7  # m^3


class ForwardRunError(RuntimeError):
    """A forward simulation failed for a particular parameter set."""

    def __init__(self, message: str, values: dict[str, float]):
        super().__init__(message)
        self.values = dict(values)


@dataclass(frozen=True, eq=False)
class MeasurementSeries:
    """Volumes in m^3 at times in days; ``mask`` marks the points that count."""

    t: np.ndarray
    volume: np.ndarray
    label: str = ""
    mask: np.ndarray | None = None

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        v = np.asarray(self.volume, dtype=float)
        if t.ndim != 1 or t.shape != v.shape or t.size == 0:
            raise ValueError("times and volumes must be non-empty 1-D arrays of equal length")
        if np.any(np.diff(t) < 0):
            raise ValueError("measurement times must be non-decreasing")
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise ValueError("volumes must be finite and non-negative")
        mask = np.ones(t.size, bool) if self.mask is None else np.asarray(self.mask, bool)
        if mask.shape != t.shape:
            raise ValueError("mask length does not match the measurements")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "volume", v)
        object.__setattr__(self, "mask", mask)

    def __len__(self) -> int:
        return self.t.size

    def without(self, *indices: int) -> "MeasurementSeries":
        """Copy with the given points excluded from the misfit."""
        mask = self.mask.copy()
        mask[list(indices)] = False
        return MeasurementSeries(self.t, self.volume, self.label, mask)

    @classmethod
    def from_csv(cls, path, label: str | None = None) -> "MeasurementSeries":
        """Read ``t_days, volume_mm3`` rows; the header row is mandatory."""
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
        if not rows:
            raise ValueError(f"{path}: empty measurement file")
        header = [c.strip() for c in rows[0]]
        if header[:2] != ["t_days", "volume_mm3"]:
            raise ValueError(f"{path}: expected header 't_days,volume_mm3', got {rows[0]}")
        try:
            t = [float(r[0]) for r in rows[1:]]
            v = [float(r[1]) / M3_TO_MM3 for r in rows[1:]]
        except (ValueError, IndexError) as exc:
            raise ValueError(f"{path}: malformed measurement row") from exc
        return cls(np.array(t), np.array(v), label if label is not None else Path(path).stem)


@dataclass(frozen=True)
class FreeParameter:
    name: str
    lower: float
    upper: float

    def __post_init__(self):
        if not (math.isfinite(self.lower) and math.isfinite(self.upper)):
            raise ValueError(f"bounds of {self.name} must be finite")
        if not self.lower < self.upper:
            raise ValueError(f"lower bound of {self.name} must be below the upper bound")


@dataclass(frozen=True, eq=False)
class CalibrationProblem:
    """Forward scenario with some parameters left free.

    ``lam_values`` enumerates the growth exponent as a category; set it to
    ``None`` to keep ``lam`` fixed (or list it among ``free`` to treat it as
    continuous).
    """

    params: ModelParameters
    schedule: TherapySchedule
    grid: RadialGrid
    r0: float
    free: tuple[FreeParameter, ...]
    measurements: MeasurementSeries
    start: dict[str, float] = field(default_factory=dict)
    cfg: StepConfig | None = None
    lam_values: tuple[float, ...] | None = None
    v_floor: float = V_FLOOR

    def __post_init__(self):
        object.__setattr__(self, "free", tuple(self.free))
        names = [f.name for f in self.free]
        if len(set(names)) != len(names):
            raise ValueError("duplicate free parameter")
        for name in names:
            self.params.get(name)  # KeyError for unknown names
        if self.lam_values is not None:
            if "lam" in names:
                raise ValueError("lam cannot be both categorical and continuous")
            if not self.lam_values:
                raise ValueError("lam_values must not be empty")
        if not self.v_floor > 0:
            raise ValueError("v_floor must be positive")

    @property
    def names(self) -> list[str]:
        return [f.name for f in self.free]

    def start_values(self) -> dict[str, float]:
        return {n: float(self.start.get(n, self.params.get(n))) for n in self.names}

    def check_bounds(self, values: dict[str, float]) -> None:
        for f in self.free:
            v = values[f.name]
            if not f.lower <= v <= f.upper:
                raise ValueError(f"{f.name}={v} outside [{f.lower}, {f.upper}]")


def simulated_volumes(values: dict[str, float], problem: CalibrationProblem) -> np.ndarray:
    """Visible volume (m^3) at the measurement times for the given parameters."""
    params = problem.params.with_values(**values)
    meas = problem.measurements
    try:
        run = simulate(problem.grid, params, problem.schedule, float(meas.t[-1]), problem.r0,
                       cfg=problem.cfg)
    except (NumericalFailure, ValueError) as exc:
        raise ForwardRunError(f"forward run failed for {values}: {exc}", values) from exc
    return run.series.sample_v_vis(meas.t)


def misfit(values: dict[str, float], problem: CalibrationProblem) -> float:
    """Sum of squared relative volume errors over the unmasked measurements."""
    problem.check_bounds(values)
    meas = problem.measurements
    sim = simulated_volumes(values, problem)
    rel = (sim - meas.volume) / np.maximum(meas.volume, problem.v_floor)
    return float(np.sum(rel[meas.mask] ** 2))


@dataclass
class FitResult:
    values: dict[str, float]
    misfit: float
    trace: list[tuple[dict[str, float], float]]
    converged: bool


class _BudgetExhausted(Exception):
    pass


class _Objective:
    """Counts forward runs against the budget and keeps the evaluation trace."""

    def __init__(self, problem: CalibrationProblem, fixed: dict[str, float], budget: int):
        self.problem = problem
        self.fixed = fixed
        self.budget = budget
        self.trace: list[tuple[dict[str, float], float]] = []
        self._cache: dict[tuple, float] = {}
        self.best: tuple[dict[str, float], float] | None = None

    def values(self, u: np.ndarray) -> dict[str, float]:
        out = dict(self.fixed)
        for f, ui in zip(self.problem.free, np.clip(u, 0.0, 1.0)):
            out[f.name] = min(f.upper, f.lower + float(ui) * (f.upper - f.lower))
        return out

    def __call__(self, u) -> float:
        vals = self.values(np.asarray(u, dtype=float))
        key = tuple(sorted(vals.items()))
        if key in self._cache:
            return self._cache[key]
        if len(self.trace) >= self.budget:
            raise _BudgetExhausted
        try:
            value = misfit(vals, self.problem)
        except ForwardRunError:
            value = math.inf
        self._cache[key] = value
        self.trace.append((vals, value))
        if self.best is None or value < self.best[1]:
            self.best = (vals, value)
        return value


def _unit(problem: CalibrationProblem, values: dict[str, float]) -> np.ndarray:
    return np.array([(values[f.name] - f.lower) / (f.upper - f.lower) for f in problem.free])


def _simplex(u0: np.ndarray, step: float, rng: np.random.Generator) -> np.ndarray:
    """Axis simplex around ``u0``; each edge points away from the nearer bound."""
    n = u0.size
    signs = np.where(u0 > 0.5, -1.0, 1.0)
    # random flips only where both directions fit
    room = (u0 - step >= 0) & (u0 + step <= 1)
    signs = np.where(room & (rng.random(n) < 0.5), -signs, signs)
    simplex = np.tile(u0, (n + 1, 1))
    for i in range(n):
        simplex[i + 1, i] = u0[i] + signs[i] * step
    return np.clip(simplex, 0.0, 1.0)


def _local_search(obj: _Objective, u0: np.ndarray, rng, xatol: float, fatol: float) -> bool:
    """Nelder-Mead with restarts from the projected best point; True if it converged."""
    step = 0.1
    best = obj(u0)
    u = u0
    while True:
        res = minimize(obj, u, method="Nelder-Mead",
                       bounds=[(0.0, 1.0)] * u.size,
                       options={"initial_simplex": _simplex(u, step, rng),
                                "xatol": xatol, "fatol": fatol,
                                "maxfev": obj.budget})
        u_new = np.clip(res.x, 0.0, 1.0)
        f_new = obj(u_new)
        if not f_new < best - fatol:
            return True
        best, u = f_new, u_new
        step = max(step / 2, 10 * xatol)


def fit(problem: CalibrationProblem, budget: int, seed: int = 0,
        xatol: float = 1e-3, fatol: float = 1e-8) -> FitResult:
    """Derivative-free minimization of ``misfit`` within ``budget`` forward runs.

    Categorical ``lam`` values are enumerated, each getting an equal share of
    the remaining budget. The result is never worse than the start.
    """
    if budget < 10:
        raise ValueError("budget must be at least 10 forward runs")
    start = problem.start_values()
    problem.check_bounds(start)
    lam_values = problem.lam_values or (None,)
    rng = np.random.default_rng(seed)

    trace: list[tuple[dict[str, float], float]] = []
    best: tuple[dict[str, float], float] | None = None
    converged = True
    for k, lam in enumerate(lam_values):
        fixed = {} if lam is None else {"lam": float(lam)}
        share = (budget - len(trace)) // (len(lam_values) - k)
        obj = _Objective(problem, fixed, share)
        u0 = _unit(problem, start)
        try:
            if problem.free:
                converged &= _local_search(obj, u0, rng, xatol, fatol)
            else:
                obj(u0)
        except _BudgetExhausted:
            converged = False
        trace.extend(obj.trace)
        if obj.best is not None and (best is None or obj.best[1] < best[1]):
            best = obj.best
    if best is None:
        raise RuntimeError("no forward run fitted in the budget")
    return FitResult(dict(best[0]), best[1], trace, converged)


def synthetic_measurements(params: ModelParameters, schedule: TherapySchedule, grid: RadialGrid,
                           r0: float, times, cfg: StepConfig | None = None,
                           label: str = "synthetic") -> MeasurementSeries:
    """Forward-model visible volumes at ``times``."""
    times = np.asarray(times, dtype=float)
    run = simulate(grid, params, schedule, float(times[-1]), r0, cfg=cfg)
    return MeasurementSeries(times, run.series.sample_v_vis(times), label)
