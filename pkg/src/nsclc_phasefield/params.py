"""Model parameter groups and the two patient presets."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

AVOGADRO = 6.022140857e23


@dataclass(frozen=True)
class GrowthParameters:
    c_m: float = 5e-4  # m^2/d
    lambda_pro: float = 0.38  # 1/d
    lam: float = 2.0
    lambda_pn: float = 0.1  # 1/d
    sigma_pn: float = 0.2
    eps_p: float = 5e-4  # m
    c_psi: float = 2.0
    eps_g: float = 0.1
    chi: float = 0.0

    def __post_init__(self):
        for name, value in asdict(self).items():
            if value < 0:
                raise ValueError(f"{name} must be non-negative, got {value}")
        if self.lam < 1:
            raise ValueError("growth exponent lam must be >= 1")
        if self.eps_p <= 0 or self.eps_g <= 0:
            raise ValueError("eps_p and eps_g must be positive")


@dataclass(frozen=True)
class TherapyEffectParameters:
    lambda_eff: float = 4.49  # kg/d
    phi50: float = 1.012e16  # molecule count
    weight: float = 80.0  # kg

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not value > 0:
                raise ValueError(f"{name} must be positive, got {value}")


@dataclass(frozen=True)
class NutrientParameters:
    kappa_i: float = 1e-5  # m^2/d
    eta_vi: float = 1.0
    eta_iv: float = 0.0
    alpha_h: float = 1.0  # uptake in healthy tissue
    alpha_p: float = 4.0  # uptake by proliferative cells
    sigma_v: float = 0.5

    def __post_init__(self):
        if not self.kappa_i > 0:
            raise ValueError("kappa_i must be positive")
        for name in ("eta_vi", "eta_iv", "alpha_h", "alpha_p", "sigma_v"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


@dataclass(frozen=True)
class DrugParameters:
    t_half: float = 26.7  # d
    molar_mass: float = 146000.0  # g/mol
    dose: float = 0.24  # g
    avogadro: float = AVOGADRO
    window_length: float = 1.0 / 24.0  # d
    full_dose_per_window: bool = False

    def __post_init__(self):
        for name in ("t_half", "molar_mass", "dose", "avogadro", "window_length"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @property
    def molecules_per_dose(self) -> float:
        return self.avogadro * self.dose / self.molar_mass

    @property
    def influx_rate(self) -> float:
        """Molecules per day while a window is active.

        By default one dose worth of molecules enters per day of infusion, so a
        one-hour window delivers 1/24 of the nominal dose into the tracked pool.
        ``full_dose_per_window`` delivers the whole dose inside the window.
        """
        rate = self.molecules_per_dose
        if self.full_dose_per_window:
            rate /= self.window_length
        return rate


@dataclass(frozen=True)
class ModelParameters:
    growth: GrowthParameters = field(default_factory=GrowthParameters)
    therapy: TherapyEffectParameters = field(default_factory=TherapyEffectParameters)
    nutrient: NutrientParameters = field(default_factory=NutrientParameters)
    drug: DrugParameters = field(default_factory=DrugParameters)

    def with_values(self, **kwargs) -> "ModelParameters":
        """Copy with individual fields replaced, looked up across all groups."""
        groups = {name: getattr(self, name) for name in ("growth", "therapy", "nutrient", "drug")}
        pending = dict(kwargs)
        for gname, group in groups.items():
            hit = {k: pending.pop(k) for k in list(pending) if k in group.__dataclass_fields__}
            if hit:
                groups[gname] = replace(group, **hit)
        if pending:
            raise KeyError(f"unknown parameter(s): {sorted(pending)}")
        return ModelParameters(**groups)

    def get(self, name: str) -> float:
        for group in (self.growth, self.therapy, self.nutrient, self.drug):
            if name in group.__dataclass_fields__:
                return getattr(group, name)
        raise KeyError(name)


def patient1_parameters() -> ModelParameters:
    return ModelParameters()


def patient2_parameters(lambda_eff: float = 0.55) -> ModelParameters:
    """Second patient; pass ``lambda_eff=0.499`` for the alternate therapy effect."""
    return ModelParameters(
        growth=GrowthParameters(lambda_pro=0.0038, lam=1.0, lambda_pn=20.0),
        therapy=TherapyEffectParameters(lambda_eff=lambda_eff),
        nutrient=NutrientParameters(sigma_v=0.76),
        drug=DrugParameters(t_half=22.0, molar_mass=143600.0, dose=0.20),
    )
