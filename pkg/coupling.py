# coupling.py
from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Sequence

import numpy as np
from scipy.constants import speed_of_light
from skrf.io.touchstone import Touchstone

from errors import DimensionError, TouchstoneFormatError
from geometry import ArrayGeometry, pairwise_distances

logger = logging.getLogger(__name__)

FREQ_UNITS = {"hz": 1.0, "khz": 1e3, "mhz": 1e6, "ghz": 1e9}
MAX_PORTS = 64
# |S_ij| above this is reported; smaller overshoots are measurement noise.
PASSIVITY_TOL = 1.01
RECIPROCITY_ATOL = 1e-6

DataFormat = Literal["RI", "MA", "DB"]


@dataclass(frozen=True, eq=False)
class ScatteringMatrix:
    """M x M S-parameters at one frequency."""
    entries: np.ndarray
    frequency_hz: float
    reference_impedance_ohm: float = 50.0
    reciprocal: bool = False

    def __post_init__(self) -> None:
        s = np.array(self.entries, dtype=complex)
        if s.ndim != 2 or s.shape[0] != s.shape[1]:
            raise DimensionError(f"S-matrix must be square, got shape {s.shape}")
        if not np.all(np.isfinite(s)):
            raise ValueError("S-matrix has non-finite entries")
        peak = float(np.max(np.abs(s))) if s.size else 0.0
        if peak > PASSIVITY_TOL:
            logger.warning("[coupling] max |S_ij| = %.4f > 1: network is not passive", peak)
        if self.reciprocal and not np.allclose(s, s.T, rtol=0.0, atol=RECIPROCITY_ATOL):
            raise ValueError("S-matrix declared reciprocal but S != S^T")
        s.setflags(write=False)
        object.__setattr__(self, "entries", s)

    @property
    def n_ports(self) -> int:
        return self.entries.shape[0]

    @property
    def max_magnitude(self) -> float:
        return float(np.max(np.abs(self.entries)))


@dataclass(frozen=True, eq=False)
class TouchstoneData:
    """Every frequency point of a Touchstone file; matrices is (n_freq, N, N)."""
    frequencies_hz: np.ndarray
    matrices: np.ndarray
    reference_impedance_ohm: float = 50.0

    @property
    def n_ports(self) -> int:
        return self.matrices.shape[1]

    def at(self, frequency_hz: float | None = None, *, reciprocal: bool = False) -> ScatteringMatrix:
        """Nearest-neighbour frequency selection; the first point if frequency_hz is None."""
        if frequency_hz is None:
            idx = 0
        else:
            idx = int(np.argmin(np.abs(self.frequencies_hz - frequency_hz)))
            delta = float(self.frequencies_hz[idx] - frequency_hz)
            if delta != 0.0:
                logger.info("[coupling] requested %.6g Hz, using %.6g Hz (delta %.3g Hz)",
                            frequency_hz, self.frequencies_hz[idx], delta)
        return ScatteringMatrix(self.matrices[idx], float(self.frequencies_hz[idx]),
                                self.reference_impedance_ohm, reciprocal)


@dataclass(frozen=True, eq=False)
class SelfInterferenceMatrix:
    """H_self (M_up x M_down) with the 1-based element indices it was cut from."""
    entries: np.ndarray
    uplink_indices: tuple[int, ...]
    downlink_indices: tuple[int, ...]

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape


# ---------- Touchstone v1 ----------
def _check_option_line(line: str, lineno: int) -> DataFormat:
    toks = line[1:].lower().split()
    fmt = "ma"
    i = 0
    while i < len(toks):
        tok = toks[i]
        if tok in FREQ_UNITS or tok == "s":
            pass
        elif tok in ("ri", "ma", "db"):
            fmt = tok
        elif tok in ("y", "z", "g", "h"):
            raise TouchstoneFormatError(f"unsupported parameter type {tok.upper()} (only S)", lineno)
        elif tok == "r":
            if i + 1 >= len(toks):
                raise TouchstoneFormatError("option line: R without impedance", lineno)
            try:
                float(toks[i + 1])
            except ValueError:
                raise TouchstoneFormatError(f"option line: bad impedance {toks[i + 1]!r}", lineno) from None
            i += 1
        else:
            raise TouchstoneFormatError(f"malformed option line: unknown token {tok!r}", lineno)
        i += 1
    return fmt.upper()  # type: ignore[return-value]


def _port_count(path: Path) -> int:
    m = re.fullmatch(r"s(\d+)p", path.suffix.lower().lstrip("."))
    if not m:
        raise TouchstoneFormatError(f"{path.name}: expected a .sNp extension")
    n = int(m.group(1))
    if not 1 <= n <= MAX_PORTS:
        raise TouchstoneFormatError(f"{path.name}: {n} ports outside 1..{MAX_PORTS}")
    return n


def _check_layout(path: Path, n: int) -> DataFormat:
    """Line-numbered structural checks; decoding is left to scikit-rf."""
    per_record = 1 + 2 * n * n
    fmt: DataFormat | None = None
    count = 0
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.partition("!")[0].strip()
        if not line:
            continue
        if line.startswith("#"):
            if fmt is None:
                fmt = _check_option_line(line, lineno)
            continue
        if line.startswith("["):
            raise TouchstoneFormatError("Touchstone v2 keywords are not supported", lineno)
        try:
            values = [float(tok) for tok in line.split()]
        except ValueError:
            raise TouchstoneFormatError(f"non-numeric data: {line!r}", lineno) from None
        if n <= 2 and len(values) != per_record:
            raise TouchstoneFormatError(
                f"row length mismatch: expected {per_record} values, got {len(values)}", lineno)
        count += len(values)

    if fmt is None:
        raise TouchstoneFormatError(f"{path.name}: missing option line")
    if not count:
        raise TouchstoneFormatError(f"{path.name}: frequency list empty")
    if count % per_record:
        raise TouchstoneFormatError(
            f"{path.name}: row length mismatch: {count} values is not a multiple of {per_record}")
    return fmt


def read_touchstone(path: str | Path) -> TouchstoneData:
    """
    Read a Touchstone v1 S-parameter file (all frequency points).

    2-port records use the S11 S21 S12 S22 order; N >= 3 records are
    row-major and may continue over several lines.
    """
    path = Path(path)
    n = _port_count(path)
    fmt = _check_layout(path, n)
    try:
        ts = Touchstone(str(path))
    except ValueError as e:
        raise TouchstoneFormatError(f"{path.name}: {e}") from e
    freqs, matrices = ts.get_sparameter_arrays()
    logger.debug("[coupling] %s: %d ports, %d frequencies, %s", path.name, n, len(freqs), fmt)
    return TouchstoneData(np.asarray(freqs, dtype=float), np.asarray(matrices, dtype=complex),
                          float(np.real(ts.resistance)))


def load_touchstone(
    path: str | Path,
    frequency_hz: float | None = None,
    *,
    reciprocal: bool = False,
) -> ScatteringMatrix:
    return read_touchstone(path).at(frequency_hz, reciprocal=reciprocal)


def _format_pair(value: complex, fmt: DataFormat) -> tuple[float, float]:
    if fmt == "RI":
        return value.real, value.imag
    mag = abs(value)
    ang = math.degrees(math.atan2(value.imag, value.real))
    if fmt == "MA":
        return mag, ang
    return (20 * math.log10(mag) if mag > 0 else -400.0), ang


def write_touchstone(
    path: str | Path,
    data: TouchstoneData | ScatteringMatrix,
    fmt: DataFormat = "RI",
    *,
    unit: str = "GHz",
) -> None:
    if isinstance(data, ScatteringMatrix):
        data = TouchstoneData(np.array([data.frequency_hz]), data.entries[None],
                              data.reference_impedance_ohm)
    path = Path(path)
    n = data.n_ports
    if _port_count(path) != n:
        raise TouchstoneFormatError(f"{path.name}: extension does not match {n} ports")
    mult = FREQ_UNITS[unit.lower()]

    out = [f"! {n}-port S-parameters", f"# {unit} S {fmt} R {data.reference_impedance_ohm!r}"]
    for f, s in zip(data.frequencies_hz, data.matrices):
        order = s.T if n == 2 else s
        values = [pair for v in order.reshape(-1) for pair in _format_pair(complex(v), fmt)]
        text = [repr(float(v)) for v in values]
        head = repr(float(f / mult))
        if n <= 2:
            out.append(" ".join([head, *text]))
            continue
        # four complex values per line, one matrix row starting each new line
        for r in range(n):
            row = text[2 * n * r: 2 * n * (r + 1)]
            for c in range(0, len(row), 8):
                prefix = [head] if (r == 0 and c == 0) else []
                out.append(" ".join([*prefix, *row[c:c + 8]]))
    path.write_text("\n".join(out) + "\n", encoding="utf-8")


# ---------- H_self ----------
def build_h_self(
    s: ScatteringMatrix,
    uplink_indices: Sequence[int],
    downlink_indices: Sequence[int],
) -> SelfInterferenceMatrix:
    """Rows = uplink (receive) elements, columns = downlink (transmit) elements."""
    up = tuple(int(k) for k in uplink_indices)
    down = tuple(int(k) for k in downlink_indices)
    if not up or not down:
        raise DimensionError("uplink and downlink index sets must be non-empty")
    overlap = sorted(set(up) & set(down))
    if overlap:
        raise DimensionError(f"overlapping index sets: {overlap}")
    for k in up + down:
        if not 1 <= k <= s.n_ports:
            raise DimensionError(f"index {k} out of range 1..{s.n_ports}")
    rows = np.asarray(up) - 1
    cols = np.asarray(down) - 1
    entries = s.entries[np.ix_(rows, cols)].copy()
    entries.setflags(write=False)
    return SelfInterferenceMatrix(entries, up, down)


def synthesize_coupling(
    geometry: ArrayGeometry,
    wavelength_m: float,
    c0: float,
    alpha: float,
    *,
    reference_impedance_ohm: float = 50.0,
) -> ScatteringMatrix:
    """
    Distance-law coupling fixture:
    S_ij = c0 (lambda / 2 r_ij)^alpha exp(-j kappa r_ij), S_ii = 0.
    """
    if not 0 < c0 < 1:
        raise ValueError(f"c0 must lie in (0, 1), got {c0}")
    if not alpha > 0:
        raise ValueError(f"alpha must be > 0, got {alpha}")
    r = pairwise_distances(geometry)
    off = ~np.eye(geometry.m, dtype=bool)
    if np.any(r[off] == 0):
        raise DimensionError("coincident elements: coupling undefined at zero distance")

    kappa = 2 * math.pi / wavelength_m
    s = np.zeros((geometry.m, geometry.m), dtype=complex)
    s[off] = c0 * (wavelength_m / (2 * r[off])) ** alpha * np.exp(-1j * kappa * r[off])
    return ScatteringMatrix(s, speed_of_light / wavelength_m, reference_impedance_ohm, reciprocal=True)
