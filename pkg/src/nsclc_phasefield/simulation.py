"""Forward runs: drive the stepper and record observables."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .drug import DrugState, TherapySchedule
from .mesh import RadialGrid, integrate
from .observables import TimeSeries, visible_volume
from .params import ModelParameters
from .stepper import FieldState, NumericalFailure, StepConfig, Stepper


@dataclass
class RunResult:
    series: TimeSeries
    state: FieldState
    drug: DrugState
    snapshots: dict[float, FieldState]


def record(series: TimeSeries, grid: RadialGrid, state: FieldState, drug: DrugState,
           threshold: float = 0.3, visible_field: str = "total") -> None:
    phi_vis = state.phi_t if visible_field == "total" else state.phi_p
    prolif = integrate(grid, state.phi_p)
    necrotic = integrate(grid, state.phi_n)
    series.append(state.t, visible_volume(grid, phi_vis, threshold), prolif + necrotic,
                  drug.phi_tau, prolif, necrotic)


def simulate(grid: RadialGrid, params: ModelParameters, schedule: TherapySchedule,
             t_end: float, r0: float, cfg: StepConfig | None = None, dose_scale: float = 1.0,
             threshold: float = 0.3, visible_field: str = "total",
             snapshot_times=(), initial: FieldState | None = None) -> RunResult:
    """Integrate from t = 0 (or ``initial``) to ``t_end`` days.

    On a ``NumericalFailure`` the records collected so far are attached to
    the exception as ``series``.
    """
    if visible_field not in ("total", "proliferative"):
        raise ValueError("visible_field must be 'total' or 'proliferative'")
    stepper = Stepper(grid, params, schedule, cfg, dose_scale)
    state = initial if initial is not None else stepper.initial_state(r0)
    drug = DrugState(0.0, state.t)
    n_steps = int(round((t_end - state.t) / stepper.cfg.dt))
    series = TimeSeries()
    record(series, grid, state, drug, threshold, visible_field)
    wanted = sorted(snapshot_times)
    snaps: dict[float, FieldState] = {}
    t0, dt = state.t, stepper.cfg.dt
    for k in range(1, n_steps + 1):
        try:
            state, drug = stepper.step(state, drug)
        except NumericalFailure as exc:
            exc.series = series
            raise
        # t0 + k dt instead of a running sum keeps the time stamps free of drift
        state = replace(state, t=t0 + k * dt)
        drug.t = state.t
        record(series, grid, state, drug, threshold, visible_field)
        while wanted and state.t >= wanted[0] - 1e-9:
            snaps[wanted.pop(0)] = state
    return RunResult(series, state, drug, snaps)
