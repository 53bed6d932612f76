# channel.py
from __future__ import annotations

import cmath
import logging
import math
import os
from dataclasses import dataclass
from typing import Literal, Optional, Sequence, Tuple

import numpy as np
from dotenv import load_dotenv

from errors import ConsistencyError, DimensionError
from geometry import ArrayGeometry, UserPosition, element_to_user
from patterns import (
    ETA0_OHM,
    LinkRole,
    RadiationPattern,
    gain,
    node_gains,
    quadrature_weights,
    sample_pattern,
)

load_dotenv()

logger = logging.getLogger(__name__)


def _parse_grid(text: str) -> Tuple[int, int]:
    n_theta, n_phi = text.lower().split("x")
    return int(n_theta), int(n_phi)


# Common quadrature grid for the Rayleigh integral.
RAYLEIGH_GRID = _parse_grid(os.getenv("FDSIM_RAYLEIGH_GRID", "91x180"))
# One angular field per user shared by all elements (off = per-element fields).
SHARED_FIELD = os.getenv("FDSIM_SHARED_FIELD", "1").lower() in ("1", "true", "yes")

FRIIS_RTOL = 1e-10

Provenance = Literal["LOS", "Rayleigh"]
SeedLike = int | np.random.SeedSequence


@dataclass(frozen=True)
class LinkPhaseConfig:
    """Guided-wave phase offsets and the C constants of the channel model."""
    phi_delta_up: float = 0.0
    phi_delta_down: float = 0.0
    c_up: complex = 1 + 0j
    c_down: complex = 1 + 0j

    def phi_delta(self, role: LinkRole) -> float:
        return self.phi_delta_up if role == "uplink" else self.phi_delta_down

    def c(self, role: LinkRole) -> complex:
        return self.c_up if role == "uplink" else self.c_down


@dataclass(frozen=True, eq=False)
class ChannelMatrix:
    """
    uplink:   entries is M_up x K_up   (rows = base-station elements)
    downlink: entries is K_down x M_down (rows = users)
    """
    entries: np.ndarray
    role: LinkRole
    provenance: Provenance
    wavelength_m: float

    def __post_init__(self) -> None:
        entries = np.array(self.entries, dtype=complex)
        if entries.ndim != 2:
            raise DimensionError(f"channel matrix must be 2-D, got shape {entries.shape}")
        if not np.all(np.isfinite(entries)):
            raise ValueError("channel matrix has non-finite entries")
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    @property
    def n_elements(self) -> int:
        return self.entries.shape[0] if self.role == "uplink" else self.entries.shape[1]

    @property
    def n_users(self) -> int:
        return self.entries.shape[1] if self.role == "uplink" else self.entries.shape[0]


# ---------- pattern phase ----------
def dominant_phase(e_theta, e_phi):
    """Phase of whichever polarization component is stronger (E_theta on ties)."""
    e_theta = np.asarray(e_theta)
    e_phi = np.asarray(e_phi)
    return np.angle(np.where(np.abs(e_theta) >= np.abs(e_phi), e_theta, e_phi))


def complex_gain_pattern(pattern: RadiationPattern) -> np.ndarray:
    """E^G at every node: sqrt(G) * exp(j(Phi0 - 2 pi d0 / lambda))."""
    phase = dominant_phase(pattern.e_theta, pattern.e_phi)
    phase = phase - 2 * math.pi * pattern.ref_distance_m / pattern.wavelength_m
    return np.sqrt(node_gains(pattern)) * np.exp(1j * phase)


# ---------- LOS ----------
def los_coefficient(
    pattern: RadiationPattern,
    theta: float,
    phi: float,
    distance_m: float,
    phase_cfg: LinkPhaseConfig = LinkPhaseConfig(),
) -> complex:
    """h = sqrt(G) lambda/(4 pi d) exp(j(Phi0 + Phi_delta) - j 2 pi (d - d0)/lambda)."""
    if not distance_m > 0:
        raise ValueError("distance_m must be > 0")
    lam = pattern.wavelength_m
    e_t, e_p = sample_pattern(pattern, theta, phi)
    g = gain(pattern, theta, phi)
    magnitude = math.sqrt(g) * lam / (4 * math.pi * distance_m)
    phase = (
        float(dominant_phase(e_t, e_p))
        + phase_cfg.phi_delta(pattern.link_role)
        - 2 * math.pi * (distance_m - pattern.ref_distance_m) / lam
    )
    return cmath.rect(magnitude, phase)


def friis_power_check(
    pattern: RadiationPattern,
    theta: float,
    phi: float,
    distance_m: float,
    p0_w: float,
) -> float:
    """
    Received power by the Friis formula, cross-checked against the same
    power obtained by propagating the stored field out to distance_m.
    Raises ConsistencyError if the two routes disagree.
    """
    lam = pattern.wavelength_m
    g = gain(pattern, theta, phi)
    p_friis = p0_w * lam ** 2 * g / (4 * math.pi * distance_m) ** 2

    e_t, e_p = sample_pattern(pattern, theta, phi)
    field_sq = (abs(e_t) ** 2 + abs(e_p) ** 2) * (p0_w / pattern.accepted_power_w)
    field_sq *= (pattern.ref_distance_m / distance_m) ** 2
    p_field = field_sq * lam ** 2 / (8 * math.pi * ETA0_OHM)

    if not math.isclose(p_field, p_friis, rel_tol=FRIIS_RTOL, abs_tol=0.0):
        raise ConsistencyError(
            f"Friis power {p_friis!r} W != field-propagation power {p_field!r} W "
            f"at theta={theta}, phi={phi}, d={distance_m}"
        )
    return p_friis


def _resolve_elements(
    geometry: ArrayGeometry,
    patterns: Sequence[RadiationPattern],
    users: Sequence[UserPosition],
    element_indices: Optional[Sequence[int]],
) -> list[int]:
    if element_indices is None:
        element_indices = range(1, len(patterns) + 1)
    indices = list(element_indices)
    if len(indices) != len(patterns):
        raise DimensionError(f"{len(patterns)} patterns for {len(indices)} elements")
    if not patterns:
        raise DimensionError("at least one base-station element is required")
    if not users:
        raise DimensionError("at least one user is required")
    for k in indices:
        if not 1 <= k <= geometry.m:
            raise DimensionError(f"element index {k} outside 1..{geometry.m}")
    return indices


def _los_block(geometry, patterns, users, phase_cfg, element_indices, exact_angles) -> np.ndarray:
    indices = _resolve_elements(geometry, patterns, users, element_indices)
    h = np.empty((len(indices), len(users)), dtype=complex)
    for i, (k, pattern) in enumerate(zip(indices, patterns)):
        for j, user in enumerate(users):
            theta, phi, d = element_to_user(geometry, k, user, pattern.wavelength_m,
                                            exact_angles=exact_angles)
            h[i, j] = los_coefficient(pattern, theta, phi, d, phase_cfg)
    return h


def assemble_uplink(
    geometry: ArrayGeometry,
    patterns: Sequence[RadiationPattern],
    users: Sequence[UserPosition],
    phase_cfg: LinkPhaseConfig = LinkPhaseConfig(),
    *,
    element_indices: Optional[Sequence[int]] = None,
    exact_angles: bool | None = None,
) -> ChannelMatrix:
    """H_up (M_up x K_up); row i uses patterns[i] placed at element_indices[i]."""
    h = _los_block(geometry, patterns, users, phase_cfg, element_indices, exact_angles)
    return ChannelMatrix(h, "uplink", "LOS", patterns[0].wavelength_m)


def assemble_downlink(
    geometry: ArrayGeometry,
    patterns: Sequence[RadiationPattern],
    users: Sequence[UserPosition],
    phase_cfg: LinkPhaseConfig = LinkPhaseConfig(),
    *,
    element_indices: Optional[Sequence[int]] = None,
    exact_angles: bool | None = None,
) -> ChannelMatrix:
    """H_down (K_down x M_down)."""
    h = _los_block(geometry, patterns, users, phase_cfg, element_indices, exact_angles)
    return ChannelMatrix(h.T, "downlink", "LOS", patterns[0].wavelength_m)


# ---------- Rayleigh ----------
def user_seed(seed: SeedLike, *key: int) -> np.random.SeedSequence:
    """
    Child stream for (seed, *key); same as the matching SeedSequence.spawn
    child of a fresh sequence, but never mutates `seed`.
    """
    seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return np.random.SeedSequence(seq.entropy, spawn_key=tuple(seq.spawn_key) + key,
                                  pool_size=seq.pool_size)


def _angular_field(rng: np.random.Generator, size) -> np.ndarray:
    # i.i.d. zero-mean circular complex Gaussian, unit variance
    return (rng.standard_normal(size) + 1j * rng.standard_normal(size)) / math.sqrt(2)


def _rayleigh_kernel(pattern: RadiationPattern) -> np.ndarray:
    return (complex_gain_pattern(pattern) * quadrature_weights(pattern)).ravel()


def _spherical_prefactor(c: complex, distance_m: float, wavelength_m: float) -> complex:
    kappa = 2 * math.pi / wavelength_m
    return c * cmath.exp(-1j * kappa * distance_m) / distance_m


def rayleigh_coefficient(
    pattern: RadiationPattern,
    distance_m: float,
    phase_cfg: LinkPhaseConfig,
    rng: np.random.Generator,
    *,
    n_draws: int | None = None,
):
    """
    Pattern-weighted Rayleigh coefficient: C e^{-j kappa d}/d times the sphere
    quadrature of E^G(theta, phi) p(theta, phi), one Gaussian draw per node.

    With n_draws, returns an array of independent realizations.
    """
    if not distance_m > 0:
        raise ValueError("distance_m must be > 0")
    kernel = _rayleigh_kernel(pattern)
    pre = _spherical_prefactor(phase_cfg.c(pattern.link_role), distance_m, pattern.wavelength_m)
    if n_draws is None:
        return complex(pre * (kernel @ _angular_field(rng, kernel.size)))
    field = _angular_field(rng, (n_draws, kernel.size))
    return pre * (field @ kernel)


def assemble_rayleigh(
    geometry: ArrayGeometry,
    patterns: Sequence[RadiationPattern],
    users: Sequence[UserPosition],
    phase_cfg: LinkPhaseConfig,
    seed: SeedLike,
    *,
    role: LinkRole = "uplink",
    element_indices: Optional[Sequence[int]] = None,
    shared_field: bool | None = None,
    exact_angles: bool | None = None,
) -> ChannelMatrix:
    """
    Rayleigh channel matrix. User j draws from the sub-stream user_seed(seed, j);
    with shared_field its angular field is common to every element, otherwise
    element k (1-based array index) uses user_seed(seed, j, k).
    """
    if shared_field is None:
        shared_field = SHARED_FIELD
    indices = _resolve_elements(geometry, patterns, users, element_indices)
    ref = patterns[0]
    for p in patterns[1:]:
        if not (np.array_equal(p.theta_grid, ref.theta_grid) and np.array_equal(p.phi_grid, ref.phi_grid)):
            raise DimensionError("Rayleigh assembly needs all element patterns on one grid")

    kernels = [_rayleigh_kernel(p) for p in patterns]
    c = phase_cfg.c(role)
    h = np.empty((len(indices), len(users)), dtype=complex)
    for j, user in enumerate(users):
        if shared_field:
            field = _angular_field(np.random.default_rng(user_seed(seed, j)), ref.e_theta.size)
        for i, (k, pattern) in enumerate(zip(indices, patterns)):
            if not shared_field:
                field = _angular_field(np.random.default_rng(user_seed(seed, j, k)), ref.e_theta.size)
            _, _, d = element_to_user(geometry, k, user, pattern.wavelength_m, exact_angles=exact_angles)
            h[i, j] = _spherical_prefactor(c, d, pattern.wavelength_m) * (kernels[i] @ field)

    entries = h if role == "uplink" else h.T
    logger.debug("[channel] Rayleigh %s matrix %s (shared_field=%s)", role, entries.shape, shared_field)
    return ChannelMatrix(entries, role, "Rayleigh", ref.wavelength_m)
