"""Immunotherapy agent kinetics and administration schedules."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .params import DrugParameters

# Slack for window boundaries; substep times are sums of binary fractions.
_TIME_TOL = 1e-9


@dataclass(frozen=True)
class TherapySchedule:
    """Sorted, disjoint half-open administration windows ``[start, end)`` in days."""

    windows: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        prev_end = -math.inf
        for start, end in self.windows:
            if not end > start:
                raise ValueError(f"empty window ({start}, {end})")
            if start < prev_end - _TIME_TOL:
                raise ValueError("windows must be sorted and disjoint")
            prev_end = end

    @classmethod
    def from_starts(cls, starts, length: float = 1.0 / 24.0) -> "TherapySchedule":
        merged: list[float] = []
        for s in sorted(float(s) for s in starts):
            if merged and s < merged[-1] + length - _TIME_TOL:
                continue
            merged.append(s)
        return cls(tuple((s, s + length) for s in merged))

    @property
    def starts(self) -> list[float]:
        return [s for s, _ in self.windows]

    def __len__(self) -> int:
        return len(self.windows)

    def active(self, t: float) -> bool:
        # windows are few (< 100); a linear scan is cheaper than bisect bookkeeping
        for start, end in self.windows:
            if start - _TIME_TOL <= t < end - _TIME_TOL:
                return True
            if start > t + _TIME_TOL:
                break
        return False

    def overlaps(self, t0: float, t1: float) -> bool:
        return any(s < t1 + _TIME_TOL and e > t0 - _TIME_TOL for s, e in self.windows)

    @property
    def end(self) -> float:
        return self.windows[-1][1] if self.windows else -math.inf


def _cycle(t_first: float, interval: float, t_last: float) -> list[float]:
    starts = []
    k = 0
    while t_first + interval * k <= t_last + _TIME_TOL:
        starts.append(t_first + interval * k)
        k += 1
    return starts


def schedule_patient1(t_s: float, t_p: float, interval: float = 14.0,
                      window_length: float = 1.0 / 24.0) -> TherapySchedule:
    """Two-weekly administrations from ``t_s`` up to and including ``t_p``."""
    if t_p < t_s:
        return TherapySchedule()
    return TherapySchedule.from_starts(_cycle(t_s, interval, t_p), window_length)


def schedule_patient2(t_s: float, t_q6w: float, t_pd: float,
                      window_length: float = 1.0 / 24.0) -> TherapySchedule:
    """Three-weekly cycle until ``t_q6w``, then six-weekly until ``t_pd``."""
    if not t_s <= t_q6w <= t_pd:
        if t_pd < t_s:
            return TherapySchedule()
        raise ValueError("expected t_s <= t_q6w <= t_pd")
    starts = _cycle(t_s, 21.0, t_q6w) if t_q6w > t_s else []
    starts += _cycle(t_q6w, 42.0, t_pd)
    return TherapySchedule.from_starts(starts, window_length)


@dataclass
class DrugState:
    phi_tau: float = 0.0
    t: float = 0.0


def decay_rate(p: DrugParameters) -> float:
    return math.log(2.0) / p.t_half


def step_drug(state: DrugState, dt: float, n_sub: int, schedule: TherapySchedule,
              p: DrugParameters, dose_scale: float = 1.0) -> DrugState:
    """Advance the agent count over ``dt`` days with ``n_sub`` explicit Euler substeps."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    if n_sub < 1:
        raise ValueError("n_sub must be >= 1")
    if dose_scale < 0:
        raise ValueError("dose_scale must be non-negative")
    h = dt / n_sub
    k = decay_rate(p)
    influx = dose_scale * p.influx_rate
    x = state.phi_tau
    t0 = state.t
    if influx == 0.0 or not schedule.overlaps(t0, t0 + dt):
        x *= (1.0 - k * h) ** n_sub
    else:
        for j in range(n_sub):
            t = t0 + j * h
            x = x - h * k * x + (h * influx if schedule.active(t) else 0.0)
    return DrugState(phi_tau=max(x, 0.0), t=t0 + dt)


def quasi_periodic_ratio(p: DrugParameters, interval_days: float) -> float:
    """Trough-to-peak ratio of the periodic steady state for a fixed cycle."""
    if not interval_days > 0:
        raise ValueError("interval must be positive")
    return 2.0 ** (-interval_days / p.t_half)


def drug_trajectory(schedule: TherapySchedule, p: DrugParameters, t_end: float,
                    dt: float = 1.0 / 24.0, n_sub: int = 32, dose_scale: float = 1.0,
                    phi0: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Agent count sampled once per ``dt`` from 0 to ``t_end``."""
    n = int(round(t_end / dt))
    ts = np.arange(n + 1) * dt
    xs = np.empty(n + 1)
    state = DrugState(phi0, 0.0)
    xs[0] = phi0
    for i in range(n):
        state = step_drug(DrugState(state.phi_tau, ts[i]), dt, n_sub, schedule, p, dose_scale)
        xs[i + 1] = state.phi_tau
    return ts, xs
