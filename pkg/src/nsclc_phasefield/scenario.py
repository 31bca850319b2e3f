"""Scenario configuration, patient presets and what-if studies."""

from __future__ import annotations

import copy
import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .drug import TherapySchedule, schedule_patient1, schedule_patient2
from .mesh import RadialGrid, build_grid
from .observables import TimeSeries
from .params import (DrugParameters, GrowthParameters, ModelParameters, NutrientParameters,
                     TherapyEffectParameters, patient1_parameters, patient2_parameters)
from .simulation import simulate
from .stepper import NumericalFailure, StepConfig

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

CURE_FRACTION = 0.01  # proliferative mass relative to its peak
RELAPSE_FACTOR = 2.0
RELAPSE_AFTER = 100.0  # days

_GROUPS = {
    "growth": GrowthParameters,
    "therapy": TherapyEffectParameters,
    "nutrient": NutrientParameters,
    "drug": DrugParameters,
}


class ConfigError(ValueError):
    pass


# -- schedules ---------------------------------------------------------------

_SCHEDULE_KEYS = {
    "none": set(),
    "patient1": {"t_s", "t_p", "interval", "window_length"},
    "patient2": {"t_s", "t_q6w", "t_pd", "window_length"},
    "cycle": {"start", "stop", "interval", "window_length"},
    "starts": {"starts", "window_length"},
    "windows": {"windows"},
}


def build_schedule(spec: dict[str, Any]) -> TherapySchedule:
    """Turn a schedule section (``kind`` plus its rule arguments) into windows."""
    spec = dict(spec)
    kind = spec.pop("kind", None)
    if kind not in _SCHEDULE_KEYS:
        raise ConfigError(f"schedule kind must be one of {sorted(_SCHEDULE_KEYS)}, got {kind!r}")
    unknown = set(spec) - _SCHEDULE_KEYS[kind]
    if unknown:
        raise ConfigError(f"unknown key(s) for schedule {kind!r}: {sorted(unknown)}")
    try:
        if kind == "none":
            return TherapySchedule()
        if kind == "patient1":
            return schedule_patient1(float(spec["t_s"]), float(spec["t_p"]),
                                     float(spec.get("interval", 14.0)),
                                     float(spec.get("window_length", 1.0 / 24.0)))
        if kind == "patient2":
            return schedule_patient2(float(spec["t_s"]), float(spec["t_q6w"]), float(spec["t_pd"]),
                                     float(spec.get("window_length", 1.0 / 24.0)))
        if kind == "cycle":
            return schedule_patient1(float(spec["start"]), float(spec["stop"]),
                                     float(spec["interval"]),
                                     float(spec.get("window_length", 1.0 / 24.0)))
        if kind == "starts":
            return TherapySchedule.from_starts([float(s) for s in spec["starts"]],
                                               float(spec.get("window_length", 1.0 / 24.0)))
        return TherapySchedule(tuple((float(a), float(b)) for a, b in spec["windows"]))
    except KeyError as exc:
        raise ConfigError(f"schedule {kind!r} is missing {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid schedule {kind!r}: {exc}") from None


# -- configuration -----------------------------------------------------------

@dataclass(frozen=True)
class ScenarioConfig:
    name: str = "custom"
    params: ModelParameters = field(default_factory=ModelParameters)
    n_elements: int = 500
    R: float = 0.04  # m
    r0: float = 0.01  # m
    schedule: dict[str, Any] = field(default_factory=lambda: {"kind": "none"})
    dose_scale: float = 1.0
    t_end: float = 700.0  # d
    step: StepConfig = field(default_factory=StepConfig)
    threshold: float = 0.3
    visible_field: str = "total"
    csv_stride: int = 1
    output: str | None = None
    measurements: str | None = None

    def __post_init__(self):
        if not (isinstance(self.n_elements, int) and self.n_elements >= 2):
            raise ConfigError("grid.n_elements must be an integer >= 2")
        if not self.R > 0:
            raise ConfigError("grid.R must be positive")
        if not 0 < self.r0 < self.R:
            raise ConfigError("initial.r0 must lie inside the domain")
        if not (self.dose_scale >= 0 and math.isfinite(self.dose_scale)):
            raise ConfigError("dose_scale must be a finite non-negative number")
        if not (self.t_end >= 0 and math.isfinite(self.t_end)):
            raise ConfigError("time.t_end must be a finite non-negative number")
        if not 0 < self.threshold < 1:
            raise ConfigError("output.threshold must lie in (0, 1)")
        if self.visible_field not in ("total", "proliferative"):
            raise ConfigError("output.visible_field must be 'total' or 'proliferative'")
        if not (isinstance(self.csv_stride, int) and self.csv_stride >= 1):
            raise ConfigError("output.csv_stride must be a positive integer")
        build_schedule(self.schedule)

    def grid(self) -> RadialGrid:
        return build_grid(self.n_elements, self.R)

    def therapy(self) -> TherapySchedule:
        return build_schedule(self.schedule)

    @property
    def therapy_end(self) -> float:
        return self.therapy().end


PATIENT1_SCHEDULE = {"kind": "patient1", "t_s": 296.0, "t_p": 1000.0, "interval": 14.0}
PATIENT2_SCHEDULE = {"kind": "patient2", "t_s": 0.0, "t_q6w": 514.0, "t_pd": 1063.0}


def _patient1() -> ScenarioConfig:
    return ScenarioConfig(name="patient1", params=patient1_parameters(),
                          schedule=dict(PATIENT1_SCHEDULE), t_end=1200.0)


def _patient2(lambda_eff: float = 0.55, name: str = "patient2") -> ScenarioConfig:
    return ScenarioConfig(name=name, params=patient2_parameters(lambda_eff),
                          schedule=dict(PATIENT2_SCHEDULE), t_end=1400.0)


PRESETS = {
    "patient1": _patient1,
    "patient2": _patient2,
    "patient2-alt": lambda: _patient2(0.499, "patient2-alt"),
}


def preset(name: str) -> ScenarioConfig:
    try:
        return PRESETS[name]()
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


_TOP_KEYS = {"preset", "name", "parameters", "grid", "initial", "schedule", "dose_scale",
             "time", "solver", "output", "measurements"}
_SECTION_KEYS = {
    "grid": {"n_elements", "R"},
    "initial": {"r0"},
    "time": {"t_end", "dt", "drug_substeps"},
    "solver": {"method", "clamp", "minres_rtol", "minres_maxiter"},
    "output": {"path", "threshold", "visible_field", "csv_stride"},
}


def _section(doc: dict, key: str) -> dict:
    sec = doc.get(key) or {}
    if not isinstance(sec, dict):
        raise ConfigError(f"section {key!r} must be a mapping")
    unknown = set(sec) - _SECTION_KEYS.get(key, set(sec))
    if unknown:
        raise ConfigError(f"unknown key(s) in {key!r}: {sorted(unknown)}")
    return sec


def _apply_parameters(base: ModelParameters, sec: dict) -> ModelParameters:
    if not isinstance(sec, dict):
        raise ConfigError("section 'parameters' must be a mapping")
    groups = {g: getattr(base, g) for g in _GROUPS}
    for gname, values in sec.items():
        if gname not in _GROUPS:
            raise ConfigError(f"unknown parameter group {gname!r}; expected {sorted(_GROUPS)}")
        if not isinstance(values, dict):
            raise ConfigError(f"parameter group {gname!r} must be a mapping")
        allowed = {f.name for f in fields(_GROUPS[gname])}
        unknown = set(values) - allowed
        if unknown:
            raise ConfigError(f"unknown parameter(s) in {gname!r}: {sorted(unknown)}")
        try:
            groups[gname] = replace(groups[gname], **values)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid {gname!r} parameters: {exc}") from None
    return ModelParameters(**groups)


def config_from_mapping(doc: dict, base_dir: Path | None = None) -> ScenarioConfig:
    """Validate a parsed configuration document.

    An optional ``preset`` key selects the starting point; every other
    section overrides it field by field. Unknown keys are rejected.
    """
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a mapping")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {sorted(unknown)}")
    cfg = preset(doc["preset"]) if "preset" in doc else ScenarioConfig()
    grid, initial = _section(doc, "grid"), _section(doc, "initial")
    tsec, ssec, osec = _section(doc, "time"), _section(doc, "solver"), _section(doc, "output")

    def path(value):
        if value is None:
            return None
        p = Path(value)
        return str(p if p.is_absolute() or base_dir is None else base_dir / p)

    try:
        step = replace(cfg.step,
                       dt=float(tsec.get("dt", cfg.step.dt)),
                       drug_substeps=int(tsec.get("drug_substeps", cfg.step.drug_substeps)),
                       solver=ssec.get("method", cfg.step.solver),
                       clamp=ssec.get("clamp", cfg.step.clamp),
                       minres_rtol=float(ssec.get("minres_rtol", cfg.step.minres_rtol)),
                       minres_maxiter=int(ssec.get("minres_maxiter", cfg.step.minres_maxiter)))
        schedule = doc.get("schedule", cfg.schedule)
        if not isinstance(schedule, dict):
            raise ConfigError("section 'schedule' must be a mapping")
        return replace(
            cfg,
            name=str(doc.get("name", cfg.name)),
            params=_apply_parameters(cfg.params, doc.get("parameters") or {}),
            n_elements=grid.get("n_elements", cfg.n_elements),
            R=float(grid.get("R", cfg.R)),
            r0=float(initial.get("r0", cfg.r0)),
            schedule=dict(schedule),
            dose_scale=float(doc.get("dose_scale", cfg.dose_scale)),
            t_end=float(tsec.get("t_end", cfg.t_end)),
            step=step,
            threshold=float(osec.get("threshold", cfg.threshold)),
            visible_field=osec.get("visible_field", cfg.visible_field),
            csv_stride=osec.get("csv_stride", cfg.csv_stride),
            output=path(osec.get("path", cfg.output)),
            measurements=path(doc.get("measurements", cfg.measurements)),
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def load_config(path: str | Path) -> ScenarioConfig:
    """Read a YAML (or JSON) scenario file."""
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return config_from_mapping(doc, path.parent)


def config_to_mapping(cfg: ScenarioConfig) -> dict:
    """Inverse of ``config_from_mapping`` (without a preset key)."""
    doc = {
        "name": cfg.name,
        "parameters": {g: asdict(getattr(cfg.params, g)) for g in _GROUPS},
        "grid": {"n_elements": cfg.n_elements, "R": cfg.R},
        "initial": {"r0": cfg.r0},
        "schedule": copy.deepcopy(cfg.schedule),
        "dose_scale": cfg.dose_scale,
        "time": {"t_end": cfg.t_end, "dt": cfg.step.dt, "drug_substeps": cfg.step.drug_substeps},
        "solver": {"method": cfg.step.solver, "clamp": cfg.step.clamp,
                   "minres_rtol": cfg.step.minres_rtol,
                   "minres_maxiter": cfg.step.minres_maxiter},
        "output": {"threshold": cfg.threshold, "visible_field": cfg.visible_field,
                   "csv_stride": cfg.csv_stride},
    }
    if cfg.output is not None:
        doc["output"]["path"] = cfg.output
    if cfg.measurements is not None:
        doc["measurements"] = cfg.measurements
    return doc


# -- running -----------------------------------------------------------------

def first_time_below(t: np.ndarray, x: np.ndarray, level: float, after: float = -math.inf):
    idx = np.nonzero((t >= after) & (x < level))[0]
    return float(t[idx[0]]) if idx.size else None


def relapse_time(series: TimeSeries, factor: float = RELAPSE_FACTOR,
                 after: float = RELAPSE_AFTER) -> float | None:
    """First time past ``after`` at which the visible volume exceeds ``factor``
    times its minimum over all earlier records."""
    t, v = series.t, series.column("v_vis_mm3")
    if t.size < 2:
        return None
    prior_min = np.minimum.accumulate(v)[:-1]
    hit = np.nonzero((t[1:] >= after) & (v[1:] > factor * prior_min))[0]
    return float(t[1:][hit[0]]) if hit.size else None


def summarize(series: TimeSeries, therapy_end: float) -> dict[str, Any]:
    """Headline numbers of one run (volumes in mm^3, times in days)."""
    t = series.t
    v = series.column("v_vis_mm3")
    tot = series.column("total_mass_mm3")
    prolif = series.column("proliferative_mass_mm3")
    i_peak = int(np.argmax(prolif))
    peak_p = float(prolif[i_peak])
    cure = first_time_below(t, prolif, CURE_FRACTION * peak_p, after=t[i_peak]) if peak_p > 0 else None
    if math.isfinite(therapy_end) and t[0] <= therapy_end <= t[-1]:
        p_end = float(np.interp(therapy_end, t, prolif))
    else:
        p_end = None
    return {
        "peak_volume_mm3": float(v.max()),
        "final_volume_mm3": float(v[-1]),
        "final_mass_mm3": float(tot[-1]),
        "peak_proliferative_mm3": peak_p,
        "final_proliferative_mm3": float(prolif[-1]),
        "proliferative_at_therapy_end_mm3": p_end,
        "cure_time": cure,
        "cured_before_therapy_end": cure is not None and cure <= therapy_end,
        "relapse_time": relapse_time(series),
    }


@dataclass
class ScenarioOutcome:
    status: int
    series: TimeSeries | None
    summary: dict[str, Any]
    message: str = ""
    dump_path: str | None = None


def dump_state(path: str | Path, state, grid: RadialGrid) -> None:
    """Write the nodal fields of ``state`` as CSV."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"# t_days={state.t!r}"])
        w.writerow(["r_m", "phi_p", "phi_n", "mu_p", "sigma"])
        for row in zip(grid.node_radii, state.phi_p, state.phi_n, state.mu, state.sigma):
            w.writerow([repr(float(x)) for x in row])


def run_scenario(cfg: ScenarioConfig, output: str | Path | None = None) -> ScenarioOutcome:
    """Simulate ``cfg`` from t = 0 to its end time and write the CSV if a path is set."""
    output = output if output is not None else cfg.output
    grid = cfg.grid()
    try:
        res = simulate(grid, cfg.params, cfg.therapy(), cfg.t_end, cfg.r0, cfg=cfg.step,
                       dose_scale=cfg.dose_scale, threshold=cfg.threshold,
                       visible_field=cfg.visible_field)
    except NumericalFailure as exc:
        series = exc.series
        dump = None
        if output is not None:
            if series is not None and len(series):
                series.subsample(cfg.csv_stride).to_csv(output)
            if exc.last_state is not None:
                dump = str(output) + ".last_good.csv"
                dump_state(dump, exc.last_state, grid)
        summary = summarize(series, cfg.therapy_end) if series is not None and len(series) else {}
        return ScenarioOutcome(EXIT_NUMERICAL, series, summary, str(exc), dump)
    series = res.series.subsample(cfg.csv_stride) if cfg.csv_stride > 1 else res.series
    if output is not None:
        series.to_csv(output)
    return ScenarioOutcome(EXIT_OK, series, summarize(res.series, cfg.therapy_end))


# -- what-if studies ---------------------------------------------------------

def _run_row(cfg: ScenarioConfig) -> tuple[int, dict[str, Any], str]:
    out = run_scenario(cfg)
    return out.status, out.summary, out.message


def _run_many(cfgs: list[ScenarioConfig], workers: int) -> list[tuple[int, dict, str]]:
    if workers <= 1 or len(cfgs) <= 1:
        return [_run_row(c) for c in cfgs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_row, cfgs))


_SUMMARY_FIELDS = ("peak_volume_mm3", "final_volume_mm3", "final_mass_mm3",
                   "peak_proliferative_mm3", "final_proliferative_mm3",
                   "proliferative_at_therapy_end_mm3", "cure_time",
                   "cured_before_therapy_end", "relapse_time")


def _per_run_path(out_dir: str | Path | None, stem: str) -> str | None:
    return None if out_dir is None else str(Path(out_dir) / f"{stem}.csv")


def _write_rows(path: str | Path, key: str, rows: list[dict[str, Any]]) -> None:
    columns = (key, "status", *_SUMMARY_FIELDS, "message")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow(["" if row.get(c) is None else
                        repr(row[c]) if isinstance(row.get(c), float) else row[c]
                        for c in columns])


def sweep_dose(cfg: ScenarioConfig, scales, out_dir: str | Path | None = None,
               workers: int = 1) -> list[dict[str, Any]]:
    """Run ``cfg`` once per dose scale; failures are reported per row.

    With ``out_dir`` set, each run's series and the comparison table
    (``dose_sweep.csv``) are written there.
    """
    scales = [float(s) for s in scales]
    if any(not s >= 0 for s in scales):
        raise ConfigError("dose scales must be non-negative")
    cfgs = [replace(cfg, dose_scale=s, output=_per_run_path(out_dir, f"{cfg.name}_dose_{s:g}"))
            for s in scales]
    rows = []
    for s, (status, summary, msg) in zip(scales, _run_many(cfgs, workers)):
        rows.append({"dose_scale": s, "status": status, **summary, "message": msg})
    if out_dir is not None:
        _write_rows(Path(out_dir) / "dose_sweep.csv", "dose_scale", rows)
    return rows


def patient2_variants(t_s: float = 0.0, t_q6w: float = 514.0, t_pd: float = 1063.0,
                      t_end: float = 1400.0) -> dict[str, dict[str, Any]]:
    """Three-weekly throughout, the switched plan, and the switched plan without a break."""
    return {
        "Q3W": {"kind": "cycle", "start": t_s, "stop": t_pd, "interval": 21.0},
        "Q3W/Q6W": {"kind": "patient2", "t_s": t_s, "t_q6w": t_q6w, "t_pd": t_pd},
        "Q3W/Q6W ext.": {"kind": "patient2", "t_s": t_s, "t_q6w": t_q6w,
                         "t_pd": max(t_end, t_pd)},
    }


def compare_schedules(cfg: ScenarioConfig, variants: dict[str, dict[str, Any]],
                      out_dir: str | Path | None = None,
                      workers: int = 1) -> list[dict[str, Any]]:
    """Run ``cfg`` under each named schedule; failures are reported per row."""
    for spec in variants.values():
        build_schedule(spec)
    names = list(variants)
    cfgs = []
    for i, name in enumerate(names):
        stem = f"{cfg.name}_schedule_{i}"
        cfgs.append(replace(cfg, schedule=dict(variants[name]),
                            output=_per_run_path(out_dir, stem)))
    rows = []
    for name, (status, summary, msg) in zip(names, _run_many(cfgs, workers)):
        rows.append({"variant": name, "status": status, **summary, "message": msg})
    if out_dir is not None:
        _write_rows(Path(out_dir) / "schedule_comparison.csv", "variant", rows)
    return rows
