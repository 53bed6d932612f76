# linkbudget.py
from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Dict, Literal, NamedTuple, Optional, Tuple

import numpy as np
from dotenv import load_dotenv

from channel import SeedLike, user_seed
from errors import DimensionError

if TYPE_CHECKING:
    from precoder import PartitionPlan, SvdTriple

load_dotenv()

logger = logging.getLogger(__name__)

# "trace": P_N holds per-antenna noise powers, projected as tr(P_r diag(P_N) P_r^H).
# "literal": P_N is a column of powers pushed through the Frobenius norm as written.
NoiseReading = Literal["trace", "literal"]
NOISE_READING: NoiseReading = os.getenv("FDSIM_NOISE_READING", "trace")  # type: ignore[assignment]
MC_BLOCK = int(os.getenv("FDSIM_MC_BLOCK", "8192"))

Mode = Literal["precoded", "reference", "full", "half"]
MODES: Tuple[str, ...] = ("precoded", "reference", "full", "half")


@dataclass(frozen=True)
class NoiseConfig:
    """Thermal floor P_n (W) and dynamic-range ratio K."""
    p_n_w: float
    k_dyn: float = 0.0

    def __post_init__(self) -> None:
        if not self.p_n_w > 0:
            raise ValueError("p_n_w must be > 0")
        if not self.k_dyn >= 0:
            raise ValueError("k_dyn must be >= 0")


@dataclass(frozen=True)
class TransmitPowers:
    """Per-stream powers under R_up = P_up I and R_down = P_down I."""
    p_up_w: float
    p_down_w: float

    def __post_init__(self) -> None:
        if not (self.p_up_w > 0 and self.p_down_w > 0):
            raise ValueError("transmit powers must be > 0")


class SinrPair(NamedTuple):
    up: float
    down: float


def _as_array(h) -> np.ndarray:
    h = np.asarray(getattr(h, "entries", h), dtype=complex)
    return h


def _row_power(h: np.ndarray) -> np.ndarray:
    return np.sum(np.abs(h) ** 2, axis=1)


def _fro2(h: np.ndarray) -> float:
    return float(np.sum(np.abs(h) ** 2))


def _reading(noise_reading: Optional[str]) -> str:
    reading = noise_reading or NOISE_READING
    if reading not in ("trace", "literal"):
        raise ValueError(f"unknown noise reading {reading!r}")
    return reading


def per_antenna_noise(p_s_i, p_i_i, noise_cfg: NoiseConfig):
    """Dynamic-range noise floor max(P_n, K (P_S,i + P_I,i)). Pass p_i_i = 0 for interference-free modes."""
    out = np.maximum(noise_cfg.p_n_w, noise_cfg.k_dyn * (np.asarray(p_s_i) + np.asarray(p_i_i)))
    return float(out) if out.ndim == 0 else out


def _aggregate_noise(p_n: np.ndarray, reading: str) -> float:
    # ||P_N||_F^2
    return float(np.sum(p_n)) if reading == "trace" else float(np.sum(p_n ** 2))


def _projected_noise(p_r: np.ndarray, p_n: np.ndarray, reading: str) -> float:
    # ||S_r^T U^H P_N||_F^2
    if reading == "trace":
        return float(np.sum(np.abs(p_r) ** 2 @ p_n))
    return float(np.sum(np.abs(p_r @ p_n) ** 2))


# ---------- precoded full duplex ----------
def uplink_antenna_powers(
    h_up, svd: "SvdTriple", plan: "PartitionPlan", powers: TransmitPowers, noise_cfg: NoiseConfig,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Per receive antenna: P_S,i = P_up |{H_up}_i|^2, P_I,i = P_down |{H_self V S_t}_i|^2
    and the resulting noise level P_N,i.
    """
    h_up = _as_array(h_up)
    if h_up.shape[0] != svd.m_up:
        raise DimensionError(f"H_up has {h_up.shape[0]} rows, H_self has {svd.m_up}")
    p_s = powers.p_up_w * _row_power(h_up)
    # H_self V S_t == U Sigma S_t
    p_i = powers.p_down_w * _row_power(svd.u @ svd.sigma @ plan.s_t)
    return p_s, p_i, per_antenna_noise(p_s, p_i, noise_cfg)


def sinr_uplink_precoded(
    h_up, svd: "SvdTriple", plan: "PartitionPlan", powers: TransmitPowers, noise_cfg: NoiseConfig,
    *, strict: bool = False, noise_reading: Optional[str] = None,
) -> float:
    """With strict, P_I is the closed-form index sum instead of the direct block norm."""
    h_up = _as_array(h_up)
    _, _, p_n = uplink_antenna_powers(h_up, svd, plan, powers, noise_cfg)
    signal = powers.p_up_w * _fro2(plan.p_r @ h_up)
    if strict:
        from precoder import closed_form_si_power
        interference = closed_form_si_power(svd, plan.n_up, plan.n_down, powers.p_down_w)
    else:
        interference = powers.p_down_w * _fro2(plan.s_r.T @ svd.sigma @ plan.s_t)
    return signal / (interference + _projected_noise(plan.p_r, p_n, _reading(noise_reading)))


def sinr_downlink_precoded(
    h_down, svd: "SvdTriple", plan: "PartitionPlan", powers: TransmitPowers, noise_cfg: NoiseConfig,
    *, noise_reading: Optional[str] = None,
) -> float:
    """Downlink users see no uplink leakage (H_user = 0); their noise follows the same floor rule."""
    h_down = _as_array(h_down)
    if h_down.shape[1] != svd.m_down:
        raise DimensionError(f"H_down has {h_down.shape[1]} columns, H_self has {svd.m_down}")
    effective = h_down @ plan.p_t
    p_n = per_antenna_noise(powers.p_down_w * _row_power(effective), 0.0, noise_cfg)
    return powers.p_down_w * _fro2(effective) / _aggregate_noise(np.atleast_1d(p_n), _reading(noise_reading))


# ---------- comparison modes ----------
def sinr_reference(
    h_up, h_down, h_self, powers: TransmitPowers, noise_cfg: NoiseConfig,
    *, strict: bool = False, noise_reading: Optional[str] = None,
) -> SinrPair:
    """
    Full duplex without SI reduction. With strict, the downlink numerator uses
    H_up (the literal reading) instead of H_down.
    """
    h_up, h_down, h_self = _as_array(h_up), _as_array(h_down), _as_array(h_self)
    reading = _reading(noise_reading)
    p_n_up = per_antenna_noise(powers.p_up_w * _row_power(h_up),
                               powers.p_down_w * _row_power(h_self), noise_cfg)
    up = powers.p_up_w * _fro2(h_up) / (
        powers.p_down_w * _fro2(h_self) + _aggregate_noise(np.atleast_1d(p_n_up), reading))

    p_n_down = per_antenna_noise(powers.p_down_w * _row_power(h_down), 0.0, noise_cfg)
    numerator = powers.p_down_w * _fro2(h_up if strict else h_down)
    down = numerator / _aggregate_noise(np.atleast_1d(p_n_down), reading)
    return SinrPair(up, down)


def _interference_free(h: np.ndarray, p_w: float, noise_cfg: NoiseConfig, reading: str,
                       numerator_p_w: Optional[float] = None) -> float:
    p_n = per_antenna_noise(p_w * _row_power(h), 0.0, noise_cfg)
    p_num = p_w if numerator_p_w is None else numerator_p_w
    return p_num * _fro2(h) / _aggregate_noise(np.atleast_1d(p_n), reading)


def sinr_full_ideal(
    h_up, h_down, powers: TransmitPowers, noise_cfg: NoiseConfig,
    *, strict: bool = False, noise_reading: Optional[str] = None,
) -> SinrPair:
    """
    Ideal full duplex (no self-interference). With strict, the uplink value is
    replaced by the downlink expression (the literal reading).
    """
    reading = _reading(noise_reading)
    up = _interference_free(_as_array(h_up), powers.p_up_w, noise_cfg, reading)
    down = _interference_free(_as_array(h_down), powers.p_down_w, noise_cfg, reading)
    return SinrPair(down if strict else up, down)


def sinr_half_duplex(
    h_up_half, h_down_half, powers: TransmitPowers, noise_cfg: NoiseConfig,
    *, strict: bool = False, noise_reading: Optional[str] = None,
) -> SinrPair:
    """
    Half duplex over all M elements. A length-M vector is the single-user
    case (uplink column, downlink row). Time sharing only enters capacity().
    """
    reading = _reading(noise_reading)
    h_up_half = _as_array(h_up_half)
    h_down_half = _as_array(h_down_half)
    if h_up_half.ndim == 1:
        h_up_half = h_up_half[:, None]
    if h_down_half.ndim == 1:
        h_down_half = h_down_half[None, :]
    up = _interference_free(h_up_half, powers.p_up_w, noise_cfg, reading)
    down = _interference_free(h_down_half, powers.p_down_w, noise_cfg, reading,
                              numerator_p_w=powers.p_up_w if strict else None)
    return SinrPair(up, down)


def capacity(sinr_linear: float, mode: Mode = "precoded") -> float:
    """Shannon capacity in bit/s/Hz; halved for half duplex."""
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if not sinr_linear >= 0:
        raise ValueError(f"SINR must be >= 0, got {sinr_linear}")
    c = math.log2(1.0 + sinr_linear)
    return 0.5 * c if mode == "half" else c


def to_db(ratio: float) -> float:
    return 10.0 * math.log10(ratio) if ratio > 0 else float("-inf")


@dataclass(frozen=True)
class ModeResults:
    """Every SINR the report carries, plus the per-antenna uplink powers under the plan."""
    p_s: np.ndarray
    p_i: np.ndarray
    p_n: np.ndarray
    sinr: Dict[str, SinrPair] = field(default_factory=dict)

    def capacities(self) -> Dict[str, SinrPair]:
        return {mode: SinrPair(capacity(pair.up, mode), capacity(pair.down, mode))  # type: ignore[arg-type]
                for mode, pair in self.sinr.items()}


def evaluate_modes(
    h_up, h_down, h_self, svd: "SvdTriple", plan: "PartitionPlan",
    h_up_half, h_down_half, powers: TransmitPowers, noise_cfg: NoiseConfig,
    *, strict: bool = False, noise_reading: Optional[str] = None,
) -> ModeResults:
    p_s, p_i, p_n = uplink_antenna_powers(h_up, svd, plan, powers, noise_cfg)
    kw = dict(noise_reading=noise_reading)
    sinr = {
        "precoded": SinrPair(
            sinr_uplink_precoded(h_up, svd, plan, powers, noise_cfg, strict=strict, **kw),
            sinr_downlink_precoded(h_down, svd, plan, powers, noise_cfg, **kw),
        ),
        "reference": sinr_reference(h_up, h_down, h_self, powers, noise_cfg, strict=strict, **kw),
        "full": sinr_full_ideal(h_up, h_down, powers, noise_cfg, strict=strict, **kw),
        "half": sinr_half_duplex(h_up_half, h_down_half, powers, noise_cfg, strict=strict, **kw),
    }
    return ModeResults(p_s, p_i, p_n, sinr)


# ---------- Monte-Carlo ----------
@dataclass(frozen=True)
class SymbolEstimate:
    p_s: float
    p_i: float
    p_n: float
    se_s: float
    se_i: float
    se_n: float
    n_symbols: int

    @property
    def sinr(self) -> float:
        return self.p_s / (self.p_i + self.p_n)


def _cn(rng: np.random.Generator, shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2)


def _mean_se(x: np.ndarray) -> Tuple[float, float]:
    se = float(np.std(x, ddof=1) / math.sqrt(x.size)) if x.size > 1 else 0.0
    return float(np.mean(x)), se


def simulate_symbols(
    h_up, h_self, plan: Optional["PartitionPlan"], powers: TransmitPowers, noise_cfg: NoiseConfig,
    n_symbols: int, seed: SeedLike, *, block_size: Optional[int] = None,
) -> SymbolEstimate:
    """
    Symbol-level estimate of the signal, self-interference and noise terms
    after the receive beamformer. Block b draws from user_seed(seed, b), so
    the result does not depend on how blocks are scheduled.
    """
    if n_symbols < 1:
        raise ValueError("n_symbols must be >= 1")
    block = block_size or MC_BLOCK
    h_up, h_self = _as_array(h_up), _as_array(h_self)
    m_up, k_up = h_up.shape
    if h_self.shape[0] != m_up:
        raise DimensionError(f"H_self has {h_self.shape[0]} rows, H_up has {m_up}")
    if plan is None:
        p_r, p_t = np.eye(m_up), np.eye(h_self.shape[1])
    else:
        p_r, p_t = plan.p_r, plan.p_t

    p_s_i = powers.p_up_w * _row_power(h_up)
    p_i_i = powers.p_down_w * _row_power(h_self @ p_t)
    p_n_i = np.atleast_1d(per_antenna_noise(p_s_i, p_i_i, noise_cfg))

    a_sig = p_r @ h_up
    a_int = p_r @ h_self @ p_t
    a_noise = p_r * np.sqrt(p_n_i)[None, :]

    sig, intf, noise = [], [], []
    for b, start in enumerate(range(0, n_symbols, block)):
        nb = min(block, n_symbols - start)
        rng = np.random.default_rng(user_seed(seed, b))
        x_up = math.sqrt(powers.p_up_w) * _cn(rng, (k_up, nb))
        x_down = math.sqrt(powers.p_down_w) * _cn(rng, (p_t.shape[1], nb))
        z = _cn(rng, (m_up, nb))
        sig.append(np.sum(np.abs(a_sig @ x_up) ** 2, axis=0))
        intf.append(np.sum(np.abs(a_int @ x_down) ** 2, axis=0))
        noise.append(np.sum(np.abs(a_noise @ z) ** 2, axis=0))

    (p_s, se_s), (p_i, se_i), (p_n, se_n) = (_mean_se(np.concatenate(x)) for x in (sig, intf, noise))
    logger.debug("[linkbudget] %d symbols: P_S=%.4g P_I=%.4g P_N=%.4g", n_symbols, p_s, p_i, p_n)
    return SymbolEstimate(p_s, p_i, p_n, se_s, se_i, se_n, n_symbols)
