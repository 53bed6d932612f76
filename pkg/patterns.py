# patterns.py
from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Final, Literal, Tuple

import numpy as np

from errors import PatternFormatError

logger = logging.getLogger(__name__)

# Wave impedance of free space (ohm). Fixed, never configurable.
ETA0_OHM: Final[float] = 376.730313668

CSV_HEADER: Final[Tuple[str, ...]] = (
    "theta_deg", "phi_deg", "re_etheta", "im_etheta", "re_ephi", "im_ephi",
)

# Slack on the efficiency <= 1 check: coarse grids overshoot a little.
EFFICIENCY_TOL = 1e-3
_ANGLE_EPS = 1e-12

LinkRole = Literal["uplink", "downlink"]
LINK_ROLES: Final[Tuple[str, ...]] = ("uplink", "downlink")


@dataclass(frozen=True, eq=False)
class RadiationPattern:
    """
    Complex far field of one element on the reference sphere (radius d0).

    e_theta / e_phi are (n_theta, n_phi) arrays in V/m, sampled on the
    ascending theta_grid x phi_grid (radians). Arrays are frozen after
    construction so a pattern can be shared freely.
    """
    theta_grid: np.ndarray
    phi_grid: np.ndarray
    e_theta: np.ndarray
    e_phi: np.ndarray
    wavelength_m: float
    accepted_power_w: float
    link_role: LinkRole = "uplink"
    ref_distance_m: float = 1.0

    def __post_init__(self) -> None:
        theta = np.array(self.theta_grid, dtype=float).reshape(-1)
        phi = np.array(self.phi_grid, dtype=float).reshape(-1)
        e_t = np.array(self.e_theta, dtype=complex)
        e_p = np.array(self.e_phi, dtype=complex)

        if theta.size == 0 or phi.size == 0:
            raise ValueError("pattern grid is empty")
        if np.any(np.diff(theta) <= 0) or np.any(np.diff(phi) <= 0):
            raise ValueError("pattern grid must be strictly ascending")
        if theta[0] < -_ANGLE_EPS or theta[-1] > math.pi + _ANGLE_EPS:
            raise ValueError("theta grid must lie in [0, pi]")
        if phi[0] < -_ANGLE_EPS or phi[-1] >= 2 * math.pi:
            raise ValueError("phi grid must lie in [0, 2pi)")
        shape = (theta.size, phi.size)
        if e_t.shape != shape or e_p.shape != shape:
            raise ValueError(f"samples must have shape {shape}, got {e_t.shape} / {e_p.shape}")
        if not (np.all(np.isfinite(e_t)) and np.all(np.isfinite(e_p))):
            raise ValueError("pattern samples must be finite")
        for name in ("wavelength_m", "accepted_power_w", "ref_distance_m"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if self.link_role not in LINK_ROLES:
            raise ValueError(f"link_role must be one of {LINK_ROLES}")

        for arr in (theta, phi, e_t, e_p):
            arr.setflags(write=False)
        object.__setattr__(self, "theta_grid", theta)
        object.__setattr__(self, "phi_grid", phi)
        object.__setattr__(self, "e_theta", e_t)
        object.__setattr__(self, "e_phi", e_p)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.e_theta.shape

    @property
    def samples(self) -> np.ndarray:
        """(n_theta, n_phi, 2) stack of (E_theta, E_phi)."""
        return np.stack([self.e_theta, self.e_phi], axis=-1)

    @property
    def intensity(self) -> np.ndarray:
        """|E|^2 = |E_theta|^2 + |E_phi|^2 at every node."""
        return np.abs(self.e_theta) ** 2 + np.abs(self.e_phi) ** 2

    def with_role(self, link_role: LinkRole) -> "RadiationPattern":
        return dataclasses.replace(self, link_role=link_role)


# ---------- quadrature ----------
def _theta_weights(theta: np.ndarray) -> np.ndarray:
    """
    Product-trapezoid weights: the piecewise-linear interpolant of the
    integrand is integrated exactly against sin(theta). Constant intensity
    integrates without discretization error.
    """
    if theta.size < 2:
        raise ValueError("quadrature needs at least 2 theta samples")
    a, b = theta[:-1], theta[1:]
    h = b - a
    ds = np.sin(b) - np.sin(a)
    w = np.zeros_like(theta)
    w[:-1] += (h * np.cos(a) - ds) / h
    w[1:] += (ds - h * np.cos(b)) / h
    return w


def _phi_weights(phi: np.ndarray) -> np.ndarray:
    # periodic trapezoid; uniform grids give 2pi/n everywhere
    if phi.size == 1:
        return np.array([2 * math.pi])
    gaps = np.diff(np.append(phi, phi[0] + 2 * math.pi))
    return 0.5 * (gaps + np.roll(gaps, 1))


def quadrature_weights(pattern: RadiationPattern) -> np.ndarray:
    """(n_theta, n_phi) weights W such that sum(f * W) ~ integral f sin(theta) dtheta dphi."""
    return np.outer(_theta_weights(pattern.theta_grid), _phi_weights(pattern.phi_grid))


def total_radiated_power(pattern: RadiationPattern) -> float:
    """Radiated power in watts: closed integral of |E|^2 / (2 eta0) * d0^2 over the sphere."""
    w = quadrature_weights(pattern)
    integral = float(np.sum(pattern.intensity * w))
    return integral * pattern.ref_distance_m ** 2 / (2 * ETA0_OHM)


def radiation_efficiency(pattern: RadiationPattern) -> float:
    return total_radiated_power(pattern) / pattern.accepted_power_w


# ---------- interpolation ----------
def _theta_bracket(grid: np.ndarray, x: np.ndarray):
    x = np.clip(x, 0.0, math.pi)
    n = grid.size
    if n == 1:
        zero = np.zeros(x.shape, dtype=int)
        return zero, zero, np.zeros(x.shape)
    i = np.clip(np.searchsorted(grid, x, side="right") - 1, 0, n - 2)
    t = np.clip((x - grid[i]) / (grid[i + 1] - grid[i]), 0.0, 1.0)
    return i, i + 1, t


def _phi_bracket(grid: np.ndarray, x: np.ndarray):
    x = np.mod(x, 2 * math.pi)
    n = grid.size
    if n == 1:
        zero = np.zeros(x.shape, dtype=int)
        return zero, zero, np.zeros(x.shape)
    ext = np.append(grid, grid[0] + 2 * math.pi)
    # below the first node means we are in the wrap-around cell
    x = np.where(x < grid[0], x + 2 * math.pi, x)
    j = np.clip(np.searchsorted(ext, x, side="right") - 1, 0, n - 1)
    t = np.clip((x - ext[j]) / (ext[j + 1] - ext[j]), 0.0, 1.0)
    return j, (j + 1) % n, t


def _interpolate(pattern: RadiationPattern, theta, phi) -> Tuple[np.ndarray, np.ndarray]:
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    i0, i1, tt = _theta_bracket(pattern.theta_grid, theta)
    j0, j1, tp = _phi_bracket(pattern.phi_grid, phi)
    w00 = (1 - tt) * (1 - tp)
    w01 = (1 - tt) * tp
    w10 = tt * (1 - tp)
    w11 = tt * tp

    def blend(f: np.ndarray) -> np.ndarray:
        # real weights, so real and imaginary parts are interpolated independently
        return w00 * f[i0, j0] + w01 * f[i0, j1] + w10 * f[i1, j0] + w11 * f[i1, j1]

    return blend(pattern.e_theta), blend(pattern.e_phi)


def sample_pattern(pattern: RadiationPattern, theta: float, phi: float) -> Tuple[complex, complex]:
    """Bilinear (E_theta, E_phi) at (theta, phi); exact at grid nodes, periodic in phi."""
    e_t, e_p = _interpolate(pattern, theta, phi)
    return complex(e_t), complex(e_p)


def gain(pattern: RadiationPattern, theta: float, phi: float) -> float:
    e_t, e_p = sample_pattern(pattern, theta, phi)
    intensity = abs(e_t) ** 2 + abs(e_p) ** 2
    return intensity * 2 * math.pi * pattern.ref_distance_m ** 2 / (pattern.accepted_power_w * ETA0_OHM)


def node_gains(pattern: RadiationPattern) -> np.ndarray:
    """Realized gain at every grid node."""
    scale = 2 * math.pi * pattern.ref_distance_m ** 2 / (pattern.accepted_power_w * ETA0_OHM)
    return pattern.intensity * scale


def resample_pattern(pattern: RadiationPattern, n_theta: int, n_phi: int) -> RadiationPattern:
    """Re-grid a pattern onto the uniform n_theta x n_phi grid used by the synthesizers."""
    theta, phi = _uniform_grid(n_theta, n_phi)
    if pattern.shape == (n_theta, n_phi) and np.array_equal(theta, pattern.theta_grid) \
            and np.array_equal(phi, pattern.phi_grid):
        return pattern
    tt, pp = np.meshgrid(theta, phi, indexing="ij")
    e_t, e_p = _interpolate(pattern, tt, pp)
    return dataclasses.replace(pattern, theta_grid=theta, phi_grid=phi, e_theta=e_t, e_phi=e_p)


# ---------- synthetic fixtures ----------
def _uniform_grid(n_theta: int, n_phi: int) -> Tuple[np.ndarray, np.ndarray]:
    if n_theta < 2 or n_phi < 1:
        raise ValueError(f"need n_theta >= 2 and n_phi >= 1, got {n_theta} x {n_phi}")
    theta = np.linspace(0.0, math.pi, n_theta)
    phi = 2 * math.pi * np.arange(n_phi) / n_phi
    return theta, phi


def _unit_gain_amplitude(accepted_power_w: float, ref_distance_m: float) -> float:
    # |E| that makes the realized gain exactly 1
    return math.sqrt(ETA0_OHM * accepted_power_w / (2 * math.pi * ref_distance_m ** 2))


def synthesize_isotropic(
    wavelength_m: float,
    accepted_power_w: float,
    n_theta: int,
    n_phi: int,
    *,
    ref_distance_m: float = 1.0,
    link_role: LinkRole = "uplink",
) -> RadiationPattern:
    """Zero-phase theta-polarized field with G == 1 everywhere."""
    theta, phi = _uniform_grid(n_theta, n_phi)
    amp = _unit_gain_amplitude(accepted_power_w, ref_distance_m)
    e_t = np.full((theta.size, phi.size), amp, dtype=complex)
    return RadiationPattern(
        theta_grid=theta, phi_grid=phi, e_theta=e_t, e_phi=np.zeros_like(e_t),
        wavelength_m=wavelength_m, accepted_power_w=accepted_power_w,
        link_role=link_role, ref_distance_m=ref_distance_m,
    )


def synthesize_dipole(
    wavelength_m: float,
    accepted_power_w: float,
    n_theta: int,
    n_phi: int,
    *,
    ref_distance_m: float = 1.0,
    link_role: LinkRole = "uplink",
) -> RadiationPattern:
    """Lossless z-directed Hertzian dipole: G(theta) = 1.5 sin^2(theta)."""
    theta, phi = _uniform_grid(n_theta, n_phi)
    amp = math.sqrt(1.5) * _unit_gain_amplitude(accepted_power_w, ref_distance_m)
    column = (amp * np.sin(theta)).astype(complex)
    e_t = np.repeat(column[:, None], phi.size, axis=1)
    return RadiationPattern(
        theta_grid=theta, phi_grid=phi, e_theta=e_t, e_phi=np.zeros_like(e_t),
        wavelength_m=wavelength_m, accepted_power_w=accepted_power_w,
        link_role=link_role, ref_distance_m=ref_distance_m,
    )


# ---------- CSV I/O ----------
def _parse_float(token: str, lineno: int) -> float:
    try:
        value = float(token)
    except ValueError:
        raise PatternFormatError(f"invalid number {token.strip()!r}", lineno) from None
    if not math.isfinite(value):
        raise PatternFormatError(f"non-finite value {token.strip()!r}", lineno)
    return value


def load_pattern(
    path: str | Path,
    link_role: LinkRole,
    accepted_power_w: float,
    wavelength_m: float,
    *,
    ref_distance_m: float = 1.0,
) -> RadiationPattern:
    """
    Read a pattern CSV (degrees on disk, radians in memory).

    Raises PatternFormatError with the offending line for parse errors,
    duplicate nodes, a non-rectangular grid or an empty file.
    """
    path = Path(path)
    lines = path.read_text(encoding="utf-8").split("\n")

    header_seen = False
    nodes: dict[Tuple[float, float], Tuple[complex, complex]] = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        if not header_seen:
            if line.startswith("#"):
                continue
            header = tuple(tok.strip() for tok in line.split(","))
            if header != CSV_HEADER:
                raise PatternFormatError(f"expected header {','.join(CSV_HEADER)}", lineno)
            header_seen = True
            continue

        tokens = line.split(",")
        if len(tokens) != len(CSV_HEADER):
            raise PatternFormatError(f"expected {len(CSV_HEADER)} fields, got {len(tokens)}", lineno)
        th, ph, re_t, im_t, re_p, im_p = (_parse_float(tok, lineno) for tok in tokens)
        if not 0.0 <= th <= 180.0:
            raise PatternFormatError(f"theta_deg {th} outside [0, 180]", lineno)
        if not 0.0 <= ph < 360.0:
            raise PatternFormatError(f"phi_deg {ph} outside [0, 360)", lineno)
        if (th, ph) in nodes:
            raise PatternFormatError(f"duplicate node ({th}, {ph})", lineno)
        nodes[(th, ph)] = (complex(re_t, im_t), complex(re_p, im_p))

    if not header_seen:
        raise PatternFormatError(f"{path}: missing header")
    if not nodes:
        raise PatternFormatError(f"{path}: empty grid")

    thetas = sorted({k[0] for k in nodes})
    phis = sorted({k[1] for k in nodes})
    if len(nodes) != len(thetas) * len(phis):
        missing = next((t, p) for t in thetas for p in phis if (t, p) not in nodes)
        raise PatternFormatError(f"{path}: non-rectangular grid (missing node {missing})")

    e_t = np.empty((len(thetas), len(phis)), dtype=complex)
    e_p = np.empty_like(e_t)
    for i, t in enumerate(thetas):
        for j, p in enumerate(phis):
            e_t[i, j], e_p[i, j] = nodes[(t, p)]

    pattern = RadiationPattern(
        theta_grid=np.deg2rad(thetas), phi_grid=np.deg2rad(phis),
        e_theta=e_t, e_phi=e_p,
        wavelength_m=wavelength_m, accepted_power_w=accepted_power_w,
        link_role=link_role, ref_distance_m=ref_distance_m,
    )
    if len(thetas) >= 2:
        eff = radiation_efficiency(pattern)
        if eff > 1 + EFFICIENCY_TOL:
            logger.warning("[patterns] %s: radiation efficiency %.4f > 1 (not passive?)", path, eff)
    logger.debug("[patterns] loaded %s: %d x %d nodes", path, len(thetas), len(phis))
    return pattern


def write_pattern(pattern: RadiationPattern, path: str | Path, comment: str | None = None) -> None:
    """Write the pattern CSV with shortest round-trip float formatting."""
    out = []
    if comment:
        out.extend(f"# {c}" for c in comment.splitlines())
    out.append(",".join(CSV_HEADER))
    theta_deg = np.rad2deg(pattern.theta_grid)
    phi_deg = np.rad2deg(pattern.phi_grid)
    for i, t in enumerate(theta_deg):
        for j, p in enumerate(phi_deg):
            e_t, e_p = pattern.e_theta[i, j], pattern.e_phi[i, j]
            row = (t, p, e_t.real, e_t.imag, e_p.real, e_p.imag)
            out.append(",".join(repr(float(v)) for v in row))
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")
