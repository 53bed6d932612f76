# models.py
from __future__ import annotations

import math
from pathlib import Path
from typing import Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationInfo, model_validator


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


def _exactly_one(section: str, **options) -> None:
    given = [name for name, value in options.items() if value is not None]
    if len(given) != 1:
        names = " / ".join(options)
        raise ValueError(f"{section}: give exactly one of {names} (got {len(given)})")


# ---- Scenario configuration ----

class CarrierSection(_Section):
    wavelength_m: Optional[float] = Field(None, gt=0)
    frequency_hz: Optional[float] = Field(None, gt=0)

    @model_validator(mode="after")
    def _one_carrier(self):
        _exactly_one("carrier", wavelength_m=self.wavelength_m, frequency_hz=self.frequency_hz)
        return self

    @property
    def wavelength(self) -> float:
        from scipy.constants import speed_of_light
        return self.wavelength_m if self.wavelength_m is not None else speed_of_light / self.frequency_hz


class ArraySection(_Section):
    """Spacings are given either in wavelengths (_wl) or meters (_m) per axis."""
    m_x: int = Field(..., ge=1)
    m_y: int = Field(1, ge=1)
    spacing_x_wl: Optional[float] = Field(None, gt=0)
    spacing_x_m: Optional[float] = Field(None, gt=0)
    spacing_y_wl: Optional[float] = Field(None, gt=0)
    spacing_y_m: Optional[float] = Field(None, gt=0)

    @model_validator(mode="after")
    def _one_spacing_per_axis(self):
        _exactly_one("array.x", spacing_x_wl=self.spacing_x_wl, spacing_x_m=self.spacing_x_m)
        _exactly_one("array.y", spacing_y_wl=self.spacing_y_wl, spacing_y_m=self.spacing_y_m)
        return self

    @property
    def m(self) -> int:
        return self.m_x * self.m_y

    def spacings_m(self, wavelength_m: float) -> Tuple[float, float]:
        a = self.spacing_x_m if self.spacing_x_m is not None else self.spacing_x_wl * wavelength_m
        b = self.spacing_y_m if self.spacing_y_m is not None else self.spacing_y_wl * wavelength_m
        return a, b


class PatternSection(_Section):
    """Either a synthetic fixture for every element or one CSV per element (1..M order)."""
    fixture: Optional[Literal["isotropic", "dipole"]] = None
    files: Optional[List[str]] = Field(None, min_length=1)
    n_theta: int = Field(91, ge=2)
    n_phi: int = Field(180, ge=1)
    accepted_power_w: float = Field(1.0, gt=0)
    ref_distance_m: float = Field(1.0, gt=0)

    @model_validator(mode="after")
    def _one_source(self):
        _exactly_one("patterns", fixture=self.fixture, files=self.files)
        return self


class SyntheticCoupling(_Section):
    c0: float = Field(..., gt=0, lt=1)
    alpha: float = Field(1.0, gt=0)


class CouplingSection(_Section):
    touchstone_path: Optional[str] = None
    frequency_hz: Optional[float] = Field(None, gt=0)
    reciprocal: bool = False
    synthetic: Optional[SyntheticCoupling] = None

    @model_validator(mode="after")
    def _one_source(self):
        _exactly_one("coupling", touchstone_path=self.touchstone_path, synthetic=self.synthetic)
        return self


class UserSpec(_Section):
    theta_deg: float = Field(..., ge=0, le=180)
    phi_deg: float = 0.0
    distance_m: float = Field(..., gt=0)


class PowerSection(_Section):
    p_up_w: float = Field(..., gt=0)
    p_down_w: float = Field(..., gt=0)


class NoiseSection(_Section):
    p_n_w: float = Field(..., gt=0)
    k_dyn: float = Field(0.0, ge=0)


class PhaseSection(_Section):
    """C constants as (re, im) pairs."""
    phi_delta_up_rad: float = 0.0
    phi_delta_down_rad: float = 0.0
    c_up: Tuple[float, float] = (1.0, 0.0)
    c_down: Tuple[float, float] = (1.0, 0.0)


class ChannelSection(_Section):
    mode: Literal["los", "rayleigh"] = "los"
    seed: int = Field(0, ge=0)
    rayleigh_grid: Optional[Tuple[int, int]] = None
    shared_field: Optional[bool] = None
    exact_angles: Optional[bool] = None


class PartitionSection(_Section):
    mode: Literal["search", "explicit"] = "search"
    n_up: Optional[int] = Field(None, ge=1)
    n_down: Optional[int] = Field(None, ge=1)
    max_total: Optional[int] = Field(None, ge=2)
    max_up: Optional[int] = Field(None, ge=1)
    max_down: Optional[int] = Field(None, ge=1)

    @model_validator(mode="after")
    def _explicit_counts(self):
        if self.mode == "explicit" and (self.n_up is None or self.n_down is None):
            raise ValueError("partition: explicit mode needs n_up and n_down")
        return self


class ScenarioConfig(_Section):
    """
    One full-duplex scenario. File paths are relative to the config file
    (validation context "base_dir"), or to the working directory.
    """
    name: str = "scenario"
    carrier: CarrierSection
    array: ArraySection
    patterns: PatternSection
    coupling: CouplingSection
    uplink_indices: List[int] = Field(..., min_length=1)
    downlink_indices: List[int] = Field(..., min_length=1)
    uplink_users: List[UserSpec] = Field(..., min_length=1)
    downlink_users: List[UserSpec] = Field(..., min_length=1)
    powers: PowerSection
    noise: NoiseSection
    phase: PhaseSection = PhaseSection()
    channel: ChannelSection = ChannelSection()
    partition: PartitionSection = PartitionSection()
    noise_reading: Literal["trace", "literal"] = "trace"
    # symbol-level cross-check of the precoded uplink terms; off when None
    monte_carlo_symbols: Optional[int] = Field(None, ge=1)

    @model_validator(mode="after")
    def _check_scenario(self, info: ValidationInfo):
        m = self.array.m
        for name in ("uplink_indices", "downlink_indices"):
            idx = getattr(self, name)
            bad = [k for k in idx if not 1 <= k <= m]
            if bad:
                raise ValueError(f"{name}: {bad} outside 1..{m}")
            if len(set(idx)) != len(idx):
                raise ValueError(f"{name}: duplicate element indices")
        overlap = sorted(set(self.uplink_indices) & set(self.downlink_indices))
        if overlap:
            raise ValueError(f"uplink_indices and downlink_indices overlap: {overlap}")

        if self.patterns.files is not None and len(self.patterns.files) != m:
            raise ValueError(f"patterns.files: need {m} files (one per element), got {len(self.patterns.files)}")
        if self.partition.mode == "explicit":
            if self.partition.n_up > len(self.uplink_indices):
                raise ValueError(f"partition.n_up: {self.partition.n_up} > M_up={len(self.uplink_indices)}")
            if self.partition.n_down > len(self.downlink_indices):
                raise ValueError(f"partition.n_down: {self.partition.n_down} > M_down={len(self.downlink_indices)}")

        base = Path((info.context or {}).get("base_dir", "."))
        referenced = [("patterns.files", f) for f in (self.patterns.files or [])]
        if self.coupling.touchstone_path:
            referenced.append(("coupling.touchstone_path", self.coupling.touchstone_path))
        for field_name, rel in referenced:
            if not (base / rel).is_file():
                raise ValueError(f"{field_name}: file not found: {rel}")
        return self


# ---- Reports ----

class ModeReport(BaseModel):
    sinr_up: float
    sinr_down: float
    sinr_up_db: Optional[float] = None  # None when the SINR is 0
    sinr_down_db: Optional[float] = None
    capacity_up: float
    capacity_down: float
    sum_capacity: float


class PlanReport(BaseModel):
    n_up: int
    n_down: int
    searched: bool
    singular_values: List[float]
    residual_si_w: float
    closed_form_si_w: float
    desired_signal_w: float


class MonteCarloReport(BaseModel):
    n_symbols: int
    p_s_w: float
    p_i_w: float
    p_n_w: float
    se_s_w: float
    se_i_w: float
    se_n_w: float
    sinr: float


class LinkReport(BaseModel):
    """Everything one run produces; serialized as the JSON report."""
    scenario: str
    seed: int
    channel_mode: str
    strict_paper: bool
    noise_reading: str
    wavelength_m: float
    m_up: int
    m_down: int
    k_up: int
    k_down: int
    h_self_fro: float
    p_s_w: List[float]
    p_i_w: List[float]
    p_n_w: List[float]
    modes: Dict[str, ModeReport]
    plan: PlanReport
    monte_carlo: Optional[MonteCarloReport] = None


class PartitionRow(BaseModel):
    n_up: int
    n_down: int
    sinr_up: float
    sinr_down: float
    sinr_up_db: Optional[float] = None
    sinr_down_db: Optional[float] = None
    capacity_up: float
    capacity_down: float
    sum_capacity: float
    residual_si_w: float


class PartitionSweep(BaseModel):
    scenario: str
    m_up: int
    m_down: int
    rows: List[PartitionRow]
    strict_paper: bool = False
    best_n_up: int
    best_n_down: int
    claim: str
    verdict: Literal["holds", "fails"]


class SpacingRow(BaseModel):
    spacing_wl: float
    h_self_fro: float
    best_n_up: int
    best_n_down: int
    best_sum_capacity: float


class SpacingSweep(BaseModel):
    scenario: str
    rows: List[SpacingRow]
    strict_paper: bool = False
    peak_spacing_wl: float
    claim: str
    verdict: Literal["holds", "fails", "untested"]


class SpacingRequest(BaseModel):
    config: ScenarioConfig
    spacings_wl: List[float] = Field(..., min_length=1)

    @model_validator(mode="after")
    def _positive(self):
        if any(not (s > 0 and math.isfinite(s)) for s in self.spacings_wl):
            raise ValueError("spacings_wl: every spacing must be positive")
        return self
