# geometry.py
from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from dotenv import load_dotenv

load_dotenv()

logger = logging.getLogger(__name__)

# Far-field check: kappa * d below this only warns.
FAR_FIELD_MIN_KD = float(os.getenv("FDSIM_FAR_FIELD_KD", "100"))
# Per-element angles instead of the shared array-origin direction.
EXACT_ANGLES = os.getenv("FDSIM_EXACT_ANGLES", "").lower() in ("1", "true", "yes")


@dataclass(frozen=True)
class UserPosition:
    """User location in array coordinates: theta from +z, phi from +x, distance from the origin."""
    theta: float
    phi: float
    distance_m: float

    def __post_init__(self) -> None:
        if not self.distance_m > 0:
            raise ValueError("distance_m must be > 0")
        if not 0.0 <= self.theta <= math.pi:
            raise ValueError(f"theta {self.theta} outside [0, pi]")

    @classmethod
    def from_degrees(cls, theta_deg: float, phi_deg: float, distance_m: float) -> "UserPosition":
        return cls(math.radians(theta_deg), math.radians(phi_deg) % (2 * math.pi), distance_m)

    def cartesian(self) -> np.ndarray:
        st = math.sin(self.theta)
        return self.distance_m * np.array(
            [st * math.cos(self.phi), st * math.sin(self.phi), math.cos(self.theta)]
        )

    def is_far_field(self, wavelength_m: float) -> bool:
        return 2 * math.pi / wavelength_m * self.distance_m >= FAR_FIELD_MIN_KD


@dataclass(frozen=True, eq=False)
class ArrayGeometry:
    """
    Planar uniform array in the z = 0 plane.

    Element k (1-based) sits at ((i_k - 1) a, (j_k - 1) b, 0), x index fastest.
    """
    m_x: int
    m_y: int
    spacing_x_m: float
    spacing_y_m: float
    element_positions: np.ndarray

    @property
    def m(self) -> int:
        return self.m_x * self.m_y

    def position(self, k: int) -> np.ndarray:
        _check_index(self, k)
        return self.element_positions[k - 1]


def _check_index(geometry: ArrayGeometry, k: int) -> None:
    if not 1 <= k <= geometry.m:
        raise IndexError(f"element index {k} outside 1..{geometry.m}")


def element_index_maps(geometry: ArrayGeometry, k: int) -> Tuple[int, int]:
    """(i_k, j_k): 1-based x and y indices of element k."""
    _check_index(geometry, k)
    j_k = 1 + (k - 1) // geometry.m_x
    i_k = k - (j_k - 1) * geometry.m_x
    return i_k, j_k


def build_planar_array(m_x: int, m_y: int, spacing_x_m: float, spacing_y_m: float) -> ArrayGeometry:
    if m_x < 1 or m_y < 1:
        raise ValueError(f"element counts must be >= 1, got {m_x} x {m_y}")
    if not (spacing_x_m > 0 and spacing_y_m > 0):
        raise ValueError("element spacings must be > 0")

    count = m_x * m_y
    positions = np.zeros((count, 3))
    for k in range(1, count + 1):
        j_k = 1 + (k - 1) // m_x
        i_k = k - (j_k - 1) * m_x
        positions[k - 1] = ((i_k - 1) * spacing_x_m, (j_k - 1) * spacing_y_m, 0.0)
    positions.setflags(write=False)
    return ArrayGeometry(m_x, m_y, float(spacing_x_m), float(spacing_y_m), positions)


def pairwise_distances(geometry: ArrayGeometry) -> np.ndarray:
    """M x M element-to-element distance matrix."""
    p = geometry.element_positions
    return np.linalg.norm(p[:, None, :] - p[None, :, :], axis=-1)


def element_to_user(
    geometry: ArrayGeometry,
    k: int,
    user: UserPosition,
    wavelength_m: float,
    *,
    exact_angles: bool | None = None,
) -> Tuple[float, float, float]:
    """
    (theta, phi, distance) from element k to the user.

    Angles are the shared array-origin direction unless exact_angles is set;
    the distance is always the exact per-element distance, which keeps the
    inter-element phase differences.
    """
    if exact_angles is None:
        exact_angles = EXACT_ANGLES
    offset = user.cartesian() - geometry.position(k)
    distance = float(np.linalg.norm(offset))

    kd = 2 * math.pi / wavelength_m * distance
    if kd < FAR_FIELD_MIN_KD:
        logger.warning("[geometry] element %d: kappa*d = %.1f < %.0f, far-field assumption is weak",
                       k, kd, FAR_FIELD_MIN_KD)

    if not exact_angles:
        return user.theta, user.phi, distance
    theta = math.acos(max(-1.0, min(1.0, offset[2] / distance)))
    phi = math.atan2(offset[1], offset[0]) % (2 * math.pi)
    return theta, phi, distance
