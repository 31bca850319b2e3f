"""Per-step observables: visible volume, tumor masses and drug count."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .mesh import FOUR_PI, RadialGrid, integrate

M3_TO_MM3 = 1e9

CSV_COLUMNS = ("t_days", "v_vis_mm3", "total_mass_mm3", "drug_count",
               "proliferative_mass_mm3", "necrotic_mass_mm3")


def visible_volume(grid: RadialGrid, phi: np.ndarray, threshold: float = 0.3) -> float:
    """Measure of {phi > threshold} for the piecewise-linear interpolant."""
    if not 0 < threshold < 1:
        raise ValueError("threshold must lie in (0, 1)")
    r = grid.node_radii
    a, b = r[:-1], r[1:]
    fa, fb = np.asarray(phi[:-1], float), np.asarray(phi[1:], float)
    above_a, above_b = fa > threshold, fb > threshold
    lo = np.where(above_a, a, b)
    hi = np.where(above_b, b, a)
    cross = above_a != above_b
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        rc = a + (threshold - fa) / (fb - fa) * (b - a)
    lo = np.where(cross & above_b, rc, lo)
    hi = np.where(cross & above_a, rc, hi)
    shell = np.where(hi > lo, FOUR_PI / 3.0 * (hi**3 - lo**3), 0.0)
    return float(shell.sum())


def total_mass(grid: RadialGrid, phi_t: np.ndarray) -> float:
    return integrate(grid, phi_t)


@dataclass
class TimeSeries:
    """Per-step records, stored in CSV units (days, mm^3, molecule count).

    Keeping the stored values identical to what is written makes the CSV
    round trip exact.
    """

    t_days: list[float] = field(default_factory=list)
    v_vis_mm3: list[float] = field(default_factory=list)
    total_mass_mm3: list[float] = field(default_factory=list)
    drug_count: list[float] = field(default_factory=list)
    proliferative_mass_mm3: list[float] = field(default_factory=list)
    necrotic_mass_mm3: list[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.t_days)

    def append(self, t: float, v_vis: float, total: float, drug: float,
               prolif: float, necrotic: float) -> None:
        """Append one record; volumes and masses are given in m^3."""
        self._append_raw(t, v_vis * M3_TO_MM3, total * M3_TO_MM3, drug,
                         prolif * M3_TO_MM3, necrotic * M3_TO_MM3)

    def _append_raw(self, *row: float) -> None:
        if self.t_days and not row[0] > self.t_days[-1]:
            raise ValueError("time must be strictly increasing")
        for name, value in zip(CSV_COLUMNS, row):
            getattr(self, name).append(float(value))

    def column(self, name: str) -> np.ndarray:
        return np.asarray(getattr(self, name), dtype=float)

    @property
    def t(self) -> np.ndarray:
        return self.column("t_days")

    @property
    def v_vis(self) -> np.ndarray:
        """Visible volume in m^3."""
        return self.column("v_vis_mm3") / M3_TO_MM3

    @property
    def total_mass(self) -> np.ndarray:
        return self.column("total_mass_mm3") / M3_TO_MM3

    @property
    def prolif_mass(self) -> np.ndarray:
        return self.column("proliferative_mass_mm3") / M3_TO_MM3

    @property
    def necrotic_mass(self) -> np.ndarray:
        return self.column("necrotic_mass_mm3") / M3_TO_MM3

    @property
    def drug(self) -> np.ndarray:
        return self.column("drug_count")

    def sample_v_vis(self, times) -> np.ndarray:
        """Visible volume (m^3) linearly interpolated at the given times."""
        return np.interp(np.asarray(times, float), self.t, self.v_vis)

    def subsample(self, stride: int) -> "TimeSeries":
        """Every ``stride``-th record, always keeping the last one."""
        idx = list(range(0, len(self), stride))
        if idx and idx[-1] != len(self) - 1:
            idx.append(len(self) - 1)
        out = TimeSeries()
        for i in idx:
            out._append_raw(*(getattr(self, c)[i] for c in CSV_COLUMNS))
        return out

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_COLUMNS)
            for row in zip(*(getattr(self, c) for c in CSV_COLUMNS)):
                writer.writerow([repr(v) for v in row])

    @classmethod
    def from_csv(cls, path: str | Path) -> "TimeSeries":
        ts = cls()
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = tuple(h.strip() for h in next(reader))
            if header != CSV_COLUMNS:
                raise ValueError(f"unexpected CSV header {header}")
            for row in reader:
                ts._append_raw(*(float(x) for x in row))
        return ts
