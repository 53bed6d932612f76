# precoder.py
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
import scipy.linalg

import linkbudget
from errors import DimensionError, NumericalError

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class SvdTriple:
    """H_self = U diag(sigma) V^H with full unitary U (M_up) and V (M_down)."""
    u: np.ndarray
    singular_values: np.ndarray
    v: np.ndarray

    @property
    def m_up(self) -> int:
        return self.u.shape[0]

    @property
    def m_down(self) -> int:
        return self.v.shape[0]

    @property
    def sigma(self) -> np.ndarray:
        """M_up x M_down rectangular diagonal matrix."""
        out = np.zeros((self.m_up, self.m_down))
        k = self.singular_values.size
        out[np.arange(k), np.arange(k)] = self.singular_values
        return out

    def reconstruct(self) -> np.ndarray:
        return self.u @ self.sigma @ self.v.conj().T


@dataclass(frozen=True, eq=False)
class PartitionPlan:
    """
    Effective antenna counts and the eigen-beamformers they induce:
    p_r = S_r^T U^H (N_up x M_up), p_t = V S_t (M_down x N_down).
    """
    n_up: int
    n_down: int
    s_r: np.ndarray
    s_t: np.ndarray
    p_r: np.ndarray
    p_t: np.ndarray


def _rotate_columns(mat: np.ndarray, phases: np.ndarray) -> None:
    mat *= np.exp(-1j * phases)[None, :]


def _peak_phases(mat: np.ndarray) -> np.ndarray:
    # phase of the largest-magnitude entry per column (first one on ties)
    idx = np.argmax(np.abs(mat), axis=0)
    return np.angle(mat[idx, np.arange(mat.shape[1])])


def svd_decompose(h_self) -> SvdTriple:
    """
    Full SVD with descending singular values and a deterministic phase
    convention: the largest-magnitude entry of each U column is real-positive,
    the rotation being applied to the (U, V) column pair. Columns of V beyond
    the rank-carrying ones are normalized the same way on their own.
    A zero matrix decomposes with identity factors.
    """
    h = np.asarray(h_self, dtype=complex)
    if h.ndim != 2:
        raise DimensionError(f"H_self must be 2-D, got shape {h.shape}")
    if not np.all(np.isfinite(h)):
        raise NumericalError("H_self has non-finite entries")
    m_up, m_down = h.shape
    k = min(m_up, m_down)

    if not np.any(h):
        return SvdTriple(np.eye(m_up, dtype=complex), np.zeros(k), np.eye(m_down, dtype=complex))

    try:
        u, s, vh = scipy.linalg.svd(h, full_matrices=True, lapack_driver="gesdd")
    except (np.linalg.LinAlgError, ValueError):
        try:
            u, s, vh = scipy.linalg.svd(h, full_matrices=True, lapack_driver="gesvd")
        except (np.linalg.LinAlgError, ValueError) as e:
            raise NumericalError(f"SVD did not converge: {e}") from e

    u = np.array(u, dtype=complex)
    v = np.array(vh.conj().T, dtype=complex)

    phases = _peak_phases(u)
    _rotate_columns(u, phases)
    _rotate_columns(v[:, :k], phases[:k])
    if m_down > k:
        _rotate_columns(v[:, k:], _peak_phases(v[:, k:]))
    return SvdTriple(u, np.asarray(s, dtype=float), v)


def selection_matrices(m_up: int, m_down: int, n_up: int, n_down: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    s_r (M_up x N_up) and s_t (M_down x N_down), both [0; I]: the LAST
    N indices, i.e. the weakest singular directions.
    """
    if not 1 <= n_up <= m_up:
        raise ValueError(f"n_up={n_up} outside 1..{m_up}")
    if not 1 <= n_down <= m_down:
        raise ValueError(f"n_down={n_down} outside 1..{m_down}")
    s_r = np.zeros((m_up, n_up))
    s_r[m_up - n_up:, :] = np.eye(n_up)
    s_t = np.zeros((m_down, n_down))
    s_t[m_down - n_down:, :] = np.eye(n_down)
    return s_r, s_t


def make_plan(svd: SvdTriple, n_up: int, n_down: int) -> PartitionPlan:
    s_r, s_t = selection_matrices(svd.m_up, svd.m_down, n_up, n_down)
    p_r = s_r.T @ svd.u.conj().T
    p_t = svd.v @ s_t
    return PartitionPlan(n_up, n_down, s_r, s_t, p_r, p_t)


def _check_plan(svd: SvdTriple, plan: PartitionPlan) -> None:
    if plan.s_r.shape[0] != svd.m_up or plan.s_t.shape[0] != svd.m_down:
        raise DimensionError(
            f"plan built for {plan.s_r.shape[0]}x{plan.s_t.shape[0]}, SVD is {svd.m_up}x{svd.m_down}")


def residual_si_power(svd: SvdTriple, plan: PartitionPlan, p_down_w: float) -> float:
    """P_I = P_down ||S_r^T Sigma S_t||_F^2, evaluated directly."""
    _check_plan(svd, plan)
    block = plan.s_r.T @ svd.sigma @ plan.s_t
    return p_down_w * float(np.sum(np.abs(block) ** 2))


def closed_form_si_power(svd: SvdTriple, n_up: int, n_down: int, p_down_w: float) -> float:
    """
    The index-sum simplification: P_down * sum of sigma_i^2 for
    i = M_up + M_down - (N_up + N_down) + 1 .. min(M_up, M_down) (1-based).
    Only agrees with residual_si_power when one side is fully selected.
    """
    first = svd.m_up + svd.m_down - (n_up + n_down) + 1
    last = min(svd.m_up, svd.m_down)
    sel = svd.singular_values[max(first, 1) - 1: last]
    return p_down_w * float(np.sum(sel ** 2))


@dataclass(frozen=True)
class SiPowerDiagnostic:
    n_up: int
    n_down: int
    direct_w: float
    closed_form_w: float

    @property
    def discrepancy_w(self) -> float:
        return self.direct_w - self.closed_form_w

    @property
    def agrees(self) -> bool:
        return math.isclose(self.direct_w, self.closed_form_w, rel_tol=1e-12, abs_tol=1e-300)


def si_power_diagnostic(svd: SvdTriple, plan: PartitionPlan, p_down_w: float) -> SiPowerDiagnostic:
    diag = SiPowerDiagnostic(
        plan.n_up, plan.n_down,
        residual_si_power(svd, plan, p_down_w),
        closed_form_si_power(svd, plan.n_up, plan.n_down, p_down_w),
    )
    if not diag.agrees:
        logger.info("[precoder] closed-form P_I differs at (N_up=%d, N_down=%d): direct %.6g W, closed form %.6g W",
                    diag.n_up, diag.n_down, diag.direct_w, diag.closed_form_w)
    return diag


def desired_signal_power(plan: PartitionPlan, h_up, p_up_w: float) -> float:
    """P_S = P_up ||S_r^T U^H H_up||_F^2."""
    h_up = np.asarray(h_up)
    if plan.p_r.shape[1] != h_up.shape[0]:
        raise DimensionError(f"P_r is {plan.p_r.shape}, H_up is {h_up.shape}")
    return p_up_w * float(np.sum(np.abs(plan.p_r @ h_up) ** 2))


@dataclass(frozen=True)
class PartitionScore:
    n_up: int
    n_down: int
    sinr_up: float
    sinr_down: float
    capacity_up: float
    capacity_down: float
    residual_si_w: float

    @property
    def sum_capacity(self) -> float:
        return self.capacity_up + self.capacity_down


def feasible_partitions(
    m_up: int,
    m_down: int,
    *,
    max_total: Optional[int] = None,
    max_up: Optional[int] = None,
    max_down: Optional[int] = None,
) -> List[Tuple[int, int]]:
    up_cap = m_up if max_up is None else min(m_up, max_up)
    down_cap = m_down if max_down is None else min(m_down, max_down)
    return [
        (n_up, n_down)
        for n_up in range(1, up_cap + 1)
        for n_down in range(1, down_cap + 1)
        if max_total is None or n_up + n_down <= max_total
    ]


def search_partition(
    h_self,
    h_up,
    h_down,
    powers: "linkbudget.TransmitPowers",
    noise_cfg: "linkbudget.NoiseConfig",
    *,
    max_total: Optional[int] = None,
    max_up: Optional[int] = None,
    max_down: Optional[int] = None,
    noise_reading: Optional[str] = None,
    strict: bool = False,
) -> List[PartitionScore]:
    """
    Exhaustive (N_up, N_down) search ranked by precoded uplink + downlink
    capacity, ties broken by smaller N_up then smaller N_down. With strict the
    uplink SINR takes P_I from the closed-form index sum.
    """
    svd = svd_decompose(h_self)
    h_up = np.asarray(h_up)
    h_down = np.asarray(h_down)
    scores = []
    for n_up, n_down in feasible_partitions(svd.m_up, svd.m_down, max_total=max_total,
                                            max_up=max_up, max_down=max_down):
        plan = make_plan(svd, n_up, n_down)
        up = linkbudget.sinr_uplink_precoded(h_up, svd, plan, powers, noise_cfg, strict=strict,
                                             noise_reading=noise_reading)
        down = linkbudget.sinr_downlink_precoded(h_down, svd, plan, powers, noise_cfg,
                                                 noise_reading=noise_reading)
        scores.append(PartitionScore(
            n_up, n_down, up, down,
            linkbudget.capacity(up, "precoded"), linkbudget.capacity(down, "precoded"),
            residual_si_power(svd, plan, powers.p_down_w),
        ))
    scores.sort(key=lambda s: (-s.sum_capacity, s.n_up, s.n_down))
    return scores
