# scenario.py
from __future__ import annotations

import csv
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
from dotenv import load_dotenv
from scipy.constants import speed_of_light
from tqdm import tqdm

import channel
from channel import ChannelMatrix, LinkPhaseConfig, assemble_downlink, assemble_rayleigh, assemble_uplink, user_seed
from coupling import ScatteringMatrix, SelfInterferenceMatrix, build_h_self, load_touchstone, synthesize_coupling
from errors import ConfigError
from geometry import ArrayGeometry, UserPosition, build_planar_array
from linkbudget import NoiseConfig, TransmitPowers, evaluate_modes, simulate_symbols, to_db
from models import (
    LinkReport,
    ModeReport,
    MonteCarloReport,
    PartitionRow,
    PartitionSweep,
    PlanReport,
    ScenarioConfig,
    SpacingRow,
    SpacingSweep,
)
from patterns import LinkRole, RadiationPattern, load_pattern, resample_pattern, synthesize_dipole, synthesize_isotropic
from precoder import desired_signal_power, make_plan, search_partition, si_power_diagnostic, svd_decompose

load_dotenv()

logger = logging.getLogger(__name__)

# ---- .env ----
SWEEP_WORKERS = int(os.getenv("FDSIM_SWEEP_WORKERS", "1"))

# Rayleigh sub-stream keys per link; half-duplex channels reuse their link's stream.
_UPLINK_STREAM = 0
_DOWNLINK_STREAM = 1
_MONTE_CARLO_STREAM = 2

PARTITION_CLAIM = "best N_up < M_down / 2"
SPACING_CLAIM = "best sum capacity at 0.5 wavelength spacing"

SUMMARY_FIELDS = ["scenario", "seed", "channel_mode", "strict_paper", "n_up", "n_down"] + [
    f"{mode}_{col}"
    for mode in ("precoded", "reference", "full", "half")
    for col in ("sinr_up_db", "sinr_down_db", "capacity_up", "capacity_down")
]


# ---- config I/O ----
def load_config(path: str | Path) -> ScenarioConfig:
    """Parse and validate a scenario file; relative paths resolve against its directory."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    return ScenarioConfig.model_validate_json(text, context={"base_dir": path.parent})


def dump_config(cfg: ScenarioConfig) -> str:
    return cfg.model_dump_json(indent=2)


# ---- artifacts ----
@dataclass(frozen=True, eq=False)
class Scenario:
    """Everything the link budget needs, built once from a config."""
    name: str
    seed: int
    wavelength_m: float
    geometry: ArrayGeometry
    s_matrix: ScatteringMatrix
    h_self: SelfInterferenceMatrix
    h_up: ChannelMatrix
    h_down: ChannelMatrix
    h_up_half: ChannelMatrix
    h_down_half: ChannelMatrix
    powers: TransmitPowers
    noise: NoiseConfig


def _element_patterns(cfg: ScenarioConfig, base_dir: Path, wavelength_m: float,
                      role: LinkRole) -> List[RadiationPattern]:
    """One pattern per element 1..M for the given link role."""
    ps = cfg.patterns
    if ps.fixture is not None:
        synth = synthesize_isotropic if ps.fixture == "isotropic" else synthesize_dipole
        one = synth(wavelength_m, ps.accepted_power_w, ps.n_theta, ps.n_phi,
                    ref_distance_m=ps.ref_distance_m, link_role=role)
        patterns = [one] * cfg.array.m
    else:
        cache: Dict[str, RadiationPattern] = {}
        patterns = []
        for rel in ps.files:
            if rel not in cache:
                cache[rel] = load_pattern(base_dir / rel, role, ps.accepted_power_w, wavelength_m,
                                          ref_distance_m=ps.ref_distance_m)
            patterns.append(cache[rel])

    if cfg.channel.mode == "rayleigh":
        n_theta, n_phi = cfg.channel.rayleigh_grid or channel.RAYLEIGH_GRID
        regridded: Dict[int, RadiationPattern] = {}
        for p in patterns:
            if id(p) not in regridded:
                regridded[id(p)] = resample_pattern(p, n_theta, n_phi)
        patterns = [regridded[id(p)] for p in patterns]
    return patterns


def _users(specs) -> List[UserPosition]:
    return [UserPosition.from_degrees(u.theta_deg, u.phi_deg, u.distance_m) for u in specs]


def _phase_config(cfg: ScenarioConfig) -> LinkPhaseConfig:
    ph = cfg.phase
    return LinkPhaseConfig(ph.phi_delta_up_rad, ph.phi_delta_down_rad, complex(*ph.c_up), complex(*ph.c_down))


def _coupling(cfg: ScenarioConfig, base_dir: Path, geometry: ArrayGeometry, wavelength_m: float) -> ScatteringMatrix:
    cs = cfg.coupling
    if cs.synthetic is not None:
        return synthesize_coupling(geometry, wavelength_m, cs.synthetic.c0, cs.synthetic.alpha)
    freq = cs.frequency_hz if cs.frequency_hz is not None else speed_of_light / wavelength_m
    s = load_touchstone(base_dir / cs.touchstone_path, freq, reciprocal=cs.reciprocal)
    if s.n_ports != cfg.array.m:
        raise ConfigError(f"coupling.touchstone_path: {s.n_ports}-port file for an array of {cfg.array.m} elements")
    return s


def _channels(cfg, geometry, users, patterns, element_indices, role: LinkRole, seed: int):
    phase_cfg = _phase_config(cfg)
    pats = [patterns[k - 1] for k in element_indices]
    if cfg.channel.mode == "los":
        assemble = assemble_uplink if role == "uplink" else assemble_downlink
        return assemble(geometry, pats, users, phase_cfg, element_indices=element_indices,
                        exact_angles=cfg.channel.exact_angles)
    stream = _UPLINK_STREAM if role == "uplink" else _DOWNLINK_STREAM
    return assemble_rayleigh(geometry, pats, users, phase_cfg, user_seed(seed, stream), role=role,
                             element_indices=element_indices, shared_field=cfg.channel.shared_field,
                             exact_angles=cfg.channel.exact_angles)


def build_scenario(
    cfg: ScenarioConfig,
    base_dir: str | Path = ".",
    *,
    seed: Optional[int] = None,
    spacing_wl: Optional[float] = None,
) -> Scenario:
    """
    patterns -> geometry -> channels -> coupling -> H_self. spacing_wl
    overrides both array spacings (used by the spacing sweep).
    """
    base_dir = Path(base_dir)
    seed = cfg.channel.seed if seed is None else seed
    lam = cfg.carrier.wavelength
    if spacing_wl is None:
        a, b = cfg.array.spacings_m(lam)
    else:
        a = b = spacing_wl * lam
    geometry = build_planar_array(cfg.array.m_x, cfg.array.m_y, a, b)

    up_users = _users(cfg.uplink_users)
    down_users = _users(cfg.downlink_users)
    up_patterns = _element_patterns(cfg, base_dir, lam, "uplink")
    down_patterns = _element_patterns(cfg, base_dir, lam, "downlink")
    every = list(range(1, geometry.m + 1))

    h_up = _channels(cfg, geometry, up_users, up_patterns, cfg.uplink_indices, "uplink", seed)
    h_down = _channels(cfg, geometry, down_users, down_patterns, cfg.downlink_indices, "downlink", seed)
    h_up_half = _channels(cfg, geometry, up_users, up_patterns, every, "uplink", seed)
    h_down_half = _channels(cfg, geometry, down_users, down_patterns, every, "downlink", seed)

    s = _coupling(cfg, base_dir, geometry, lam)
    h_self = build_h_self(s, cfg.uplink_indices, cfg.downlink_indices)
    logger.info("[scenario] %s: M=%d (up %d, down %d), %s channel, ||H_self||_F=%.4g",
                cfg.name, geometry.m, len(cfg.uplink_indices), len(cfg.downlink_indices),
                cfg.channel.mode, float(np.linalg.norm(h_self.entries)))
    return Scenario(
        name=cfg.name, seed=seed, wavelength_m=lam, geometry=geometry, s_matrix=s, h_self=h_self,
        h_up=h_up, h_down=h_down, h_up_half=h_up_half, h_down_half=h_down_half,
        powers=TransmitPowers(cfg.powers.p_up_w, cfg.powers.p_down_w),
        noise=NoiseConfig(cfg.noise.p_n_w, cfg.noise.k_dyn),
    )


def _db_or_none(ratio: float) -> Optional[float]:
    return to_db(ratio) if ratio > 0 else None


def _rank(sc: Scenario, cfg: ScenarioConfig, *, constrained: bool = True, strict: bool = False):
    part = cfg.partition
    caps = dict(max_total=part.max_total, max_up=part.max_up, max_down=part.max_down) if constrained else {}
    return search_partition(sc.h_self.entries, sc.h_up.entries, sc.h_down.entries, sc.powers, sc.noise,
                            noise_reading=cfg.noise_reading, strict=strict, **caps)


# ---- single run ----
def evaluate(cfg: ScenarioConfig, base_dir: str | Path = ".", *, seed: Optional[int] = None,
             strict: bool = False) -> LinkReport:
    sc = build_scenario(cfg, base_dir, seed=seed)
    svd = svd_decompose(sc.h_self.entries)

    searched = cfg.partition.mode == "search"
    if searched:
        best = _rank(sc, cfg, strict=strict)[0]
        n_up, n_down = best.n_up, best.n_down
    else:
        n_up, n_down = cfg.partition.n_up, cfg.partition.n_down
    plan = make_plan(svd, n_up, n_down)
    diag = si_power_diagnostic(svd, plan, sc.powers.p_down_w)

    results = evaluate_modes(sc.h_up, sc.h_down, sc.h_self, svd, plan, sc.h_up_half, sc.h_down_half,
                             sc.powers, sc.noise, strict=strict, noise_reading=cfg.noise_reading)
    caps = results.capacities()
    modes = {
        mode: ModeReport(
            sinr_up=pair.up, sinr_down=pair.down,
            sinr_up_db=_db_or_none(pair.up), sinr_down_db=_db_or_none(pair.down),
            capacity_up=caps[mode].up, capacity_down=caps[mode].down,
            sum_capacity=caps[mode].up + caps[mode].down,
        )
        for mode, pair in results.sinr.items()
    }

    monte_carlo = None
    if cfg.monte_carlo_symbols:
        est = simulate_symbols(sc.h_up, sc.h_self, plan, sc.powers, sc.noise, cfg.monte_carlo_symbols,
                               user_seed(sc.seed, _MONTE_CARLO_STREAM))
        monte_carlo = MonteCarloReport(n_symbols=est.n_symbols, p_s_w=est.p_s, p_i_w=est.p_i, p_n_w=est.p_n,
                                       se_s_w=est.se_s, se_i_w=est.se_i, se_n_w=est.se_n, sinr=est.sinr)

    return LinkReport(
        scenario=cfg.name,
        seed=sc.seed,
        channel_mode=cfg.channel.mode,
        strict_paper=strict,
        noise_reading=cfg.noise_reading,
        wavelength_m=sc.wavelength_m,
        m_up=svd.m_up,
        m_down=svd.m_down,
        k_up=sc.h_up.n_users,
        k_down=sc.h_down.n_users,
        h_self_fro=float(np.linalg.norm(sc.h_self.entries)),
        p_s_w=results.p_s.tolist(),
        p_i_w=results.p_i.tolist(),
        p_n_w=np.atleast_1d(results.p_n).tolist(),
        modes=modes,
        plan=PlanReport(
            n_up=n_up, n_down=n_down, searched=searched,
            singular_values=svd.singular_values.tolist(),
            residual_si_w=diag.direct_w, closed_form_si_w=diag.closed_form_w,
            desired_signal_w=desired_signal_power(plan, sc.h_up.entries, sc.powers.p_up_w),
        ),
        monte_carlo=monte_carlo,
    )


def summary_row(report: LinkReport) -> Dict[str, object]:
    row: Dict[str, object] = {
        "scenario": report.scenario, "seed": report.seed, "channel_mode": report.channel_mode,
        "strict_paper": report.strict_paper, "n_up": report.plan.n_up, "n_down": report.plan.n_down,
    }
    for mode, m in report.modes.items():
        row[f"{mode}_sinr_up_db"] = m.sinr_up_db
        row[f"{mode}_sinr_down_db"] = m.sinr_down_db
        row[f"{mode}_capacity_up"] = m.capacity_up
        row[f"{mode}_capacity_down"] = m.capacity_down
    return row


def _write_csv(path: Path, fields: Sequence[str], rows: Sequence[Dict[str, object]]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(fields), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: ("" if v is None else repr(v) if isinstance(v, float) else v)
                             for k, v in row.items()})


def _write_json(path: Path, model) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(model.model_dump_json(indent=2) + "\n", encoding="utf-8")


def _sibling(path: Path, suffix: str) -> Path:
    return path.with_name(path.stem + suffix)


def run(config_path: str | Path, output_path: str | Path, *, seed: Optional[int] = None,
        strict: bool = False) -> LinkReport:
    """JSON report at output_path plus a one-row CSV summary next to it (<stem>_summary.csv)."""
    config_path, output_path = Path(config_path), Path(output_path)
    cfg = load_config(config_path)
    report = evaluate(cfg, config_path.parent, seed=seed, strict=strict)
    _write_json(output_path, report)
    _write_csv(_sibling(output_path, "_summary.csv"), SUMMARY_FIELDS, [summary_row(report)])
    logger.info("[scenario] wrote %s", output_path)
    return report


# ---- partition sweep ----
def partition_table(cfg: ScenarioConfig, base_dir: str | Path = ".", *,
                    seed: Optional[int] = None, strict: bool = False) -> PartitionSweep:
    """Every (N_up, N_down) in 1..M_up x 1..M_down, best first."""
    sc = build_scenario(cfg, base_dir, seed=seed)
    ranking = _rank(sc, cfg, constrained=False, strict=strict)
    rows = [
        PartitionRow(
            n_up=s.n_up, n_down=s.n_down, sinr_up=s.sinr_up, sinr_down=s.sinr_down,
            sinr_up_db=_db_or_none(s.sinr_up), sinr_down_db=_db_or_none(s.sinr_down),
            capacity_up=s.capacity_up, capacity_down=s.capacity_down,
            sum_capacity=s.sum_capacity, residual_si_w=s.residual_si_w,
        )
        for s in ranking
    ]
    m_up, m_down = sc.h_self.shape
    best = rows[0]
    verdict = "holds" if best.n_up < 0.5 * m_down else "fails"
    logger.info("[scenario] %s: best partition (%d, %d) of %dx%d; '%s' %s",
                cfg.name, best.n_up, best.n_down, m_up, m_down, PARTITION_CLAIM, verdict)
    return PartitionSweep(scenario=cfg.name, m_up=m_up, m_down=m_down, rows=rows, strict_paper=strict,
                          best_n_up=best.n_up, best_n_down=best.n_down,
                          claim=PARTITION_CLAIM, verdict=verdict)


def sweep_partition(config_path: str | Path, output_path: str | Path, *,
                    seed: Optional[int] = None, strict: bool = False) -> PartitionSweep:
    """CSV table at output_path, verdict in <stem>_summary.json."""
    config_path, output_path = Path(config_path), Path(output_path)
    cfg = load_config(config_path)
    sweep = partition_table(cfg, config_path.parent, seed=seed, strict=strict)
    _write_csv(output_path, list(PartitionRow.model_fields), [r.model_dump() for r in sweep.rows])
    _write_json(_sibling(output_path, "_summary.json"), sweep.model_copy(update={"rows": []}))
    return sweep


# ---- spacing sweep ----
def _spacing_point(cfg: ScenarioConfig, base_dir: Path, spacing_wl: float, seed: Optional[int],
                   strict: bool) -> SpacingRow:
    sc = build_scenario(cfg, base_dir, seed=seed, spacing_wl=spacing_wl)
    best = _rank(sc, cfg, strict=strict)[0]
    return SpacingRow(spacing_wl=spacing_wl, h_self_fro=float(np.linalg.norm(sc.h_self.entries)),
                      best_n_up=best.n_up, best_n_down=best.n_down, best_sum_capacity=best.sum_capacity)


def spacing_table(cfg: ScenarioConfig, spacings_wl: Sequence[float], base_dir: str | Path = ".", *,
                  seed: Optional[int] = None, workers: Optional[int] = None,
                  strict: bool = False) -> SpacingSweep:
    """
    One best-partition evaluation per spacing, rows in ascending spacing.
    Needs synthetic coupling: a measured S-matrix belongs to one geometry.
    """
    if cfg.coupling.synthetic is None:
        raise ConfigError("coupling.synthetic: the spacing sweep needs synthetic coupling")
    spacings = sorted(float(s) for s in spacings_wl)
    if not spacings or any(not (s > 0 and math.isfinite(s)) for s in spacings):
        raise ConfigError("spacings must be a non-empty list of positive numbers")
    base_dir = Path(base_dir)
    workers = workers or SWEEP_WORKERS

    def point(s: float) -> SpacingRow:
        return _spacing_point(cfg, base_dir, s, seed, strict)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(tqdm(pool.map(point, spacings), total=len(spacings), desc="spacing"))
    else:
        rows = [point(s) for s in tqdm(spacings, desc="spacing")]

    peak = max(rows, key=lambda r: r.best_sum_capacity)  # first (smallest spacing) on ties
    if not any(math.isclose(r.spacing_wl, 0.5) for r in rows):
        verdict = "untested"
    else:
        verdict = "holds" if math.isclose(peak.spacing_wl, 0.5) else "fails"
    logger.info("[scenario] %s: peak sum capacity %.4f at %.3g wavelengths; '%s' %s",
                cfg.name, peak.best_sum_capacity, peak.spacing_wl, SPACING_CLAIM, verdict)
    return SpacingSweep(scenario=cfg.name, rows=rows, strict_paper=strict, peak_spacing_wl=peak.spacing_wl,
                        claim=SPACING_CLAIM, verdict=verdict)


def sweep_spacing(config_path: str | Path, spacings_wl: Sequence[float], output_path: str | Path, *,
                  seed: Optional[int] = None, strict: bool = False) -> SpacingSweep:
    config_path, output_path = Path(config_path), Path(output_path)
    cfg = load_config(config_path)
    sweep = spacing_table(cfg, spacings_wl, config_path.parent, seed=seed, strict=strict)
    _write_csv(output_path, list(SpacingRow.model_fields), [r.model_dump() for r in sweep.rows])
    _write_json(_sibling(output_path, "_summary.json"), sweep)
    return sweep
