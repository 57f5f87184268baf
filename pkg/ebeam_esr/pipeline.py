"""
Scenario-driven computations behind the command-line subcommands. Each
``cmd_*`` returns data frames and reports; writing files is left to ``main``.
"""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from . import sample as smp
from . import spectro
from .config import Scenario
from .errors import ValidationError
from .nearfield import harmonics
from .storage import load_iq, load_spectrum

FIELD_MAP_COLUMNS = ["d_m", "h_m", "b1x_T", "theta_x_rad", "b1y_T", "theta_y_rad", "b2mag_T"]
VOXEL_MAP_COLUMNS = ["x_m", "y_m", "b1x_T", "theta_x_rad", "b1y_T", "theta_y_rad", "b2mag_T"]


@dataclass
class SpectrumRun:
    frame: pd.DataFrame
    fit: Optional[spectro.FitResult]
    s_res: complex


@dataclass
class CalibrationRun:
    i_model: spectro.CalibrationModel
    q_model: spectro.CalibrationModel
    phase_spread: float

    def report(self) -> Dict[str, str]:
        out = spectro.calibration_report(self.i_model, "i_")
        out.update(spectro.calibration_report(self.q_model, "q_"))
        out["a"] = repr(self.i_model.a)
        out["compensated_phase_spread"] = repr(self.phase_spread)
        return out


def _field_row(d: float, h: float, field) -> List[float]:
    return [d, h, field.b1x, field.theta_x, field.b1y, field.theta_y, field.second_harmonic_magnitude]


def beam_positions(scenario: Scenario) -> List[Tuple[float, float]]:
    """(d, h) of every sweep point in output order."""
    sweep, beam = scenario.sweep, scenario.beam
    if sweep.kind == "offset":
        return [(d, beam.standoff) for d in sweep.values]
    if sweep.kind == "standoff":
        return [(beam.offset, h) for h in sweep.values]
    if sweep.kind == "map":
        return [(d, h) for h in sweep.standoffs for d in sweep.values]
    raise ValidationError("sweep.kind", "a spatial sweep (offset, standoff or map) is required")


def cmd_field_map(scenario: Scenario, voxels: bool = False) -> pd.DataFrame:
    if voxels:
        grid = smp.build_voxel_grid(scenario.sample)
        xs, ys, c2x, c2y = smp.voxel_drive_map(grid, scenario.beam, scenario.n_samples)
        return pd.DataFrame({
            "x_m": xs,
            "y_m": ys,
            "b1x_T": np.abs(c2x),
            "theta_x_rad": np.angle(c2x),
            "b1y_T": np.abs(c2y),
            "theta_y_rad": np.angle(c2y),
            "b2mag_T": np.hypot(np.abs(c2x), np.abs(c2y)),
        }, columns=VOXEL_MAP_COLUMNS)

    if scenario.sweep.kind not in ("offset", "map"):
        raise ValidationError("sweep.kind", "field-map needs an offset or map sweep")
    point = (scenario.sample.top, scenario.sample.origin_offset[1])
    rows = []
    for d, h in beam_positions(scenario):
        beam = scenario.beam.moved(offset=d, standoff=h)
        field = harmonics(beam, point, n_max=scenario.n_max, n_samples=scenario.n_samples)
        rows.append(_field_row(d * scenario.d_scale, h * scenario.h_scale, field))
    return pd.DataFrame(rows, columns=FIELD_MAP_COLUMNS)


def _simulate(args) -> smp.PositionSignals:
    grid, beam, scenario = args
    return smp.simulate_position(grid, beam, scenario.coil, scenario.material, scenario.b0,
                                 beam.drive_omega, scenario.n_samples, scenario.aperture_samples)


def run_positions(scenario: Scenario, grid: smp.VoxelGrid, beams, jobs: int = 1) -> List[smp.PositionSignals]:
    """Simulate every beam position; results keep the input order."""
    tasks = [(grid, beam, scenario) for beam in beams]
    if jobs <= 1 or len(tasks) <= 1:
        return [_simulate(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as executor:
        return list(executor.map(_simulate, tasks))


def recovery_params(scenario: Scenario, grid: smp.VoxelGrid, omega: float) -> spectro.RecoveryParams:
    alpha = smp.self_consistent_alpha(grid, scenario.coil, scenario.material, scenario.b0, omega)
    bu_avg = smp.grid_unitary_average(grid, scenario.coil)
    return spectro.RecoveryParams.from_alpha(alpha, bu_avg, scenario.coil.resistance)


def cmd_sweep(scenario: Scenario, jobs: int = 1) -> pd.DataFrame:
    if scenario.sweep.kind not in ("offset", "standoff"):
        raise ValidationError("sweep.kind", "sweep needs an offset or standoff sweep")
    if not scenario.beam.current > 0:
        raise ValidationError("beam.current", "must be positive to normalize a sweep")
    grid = smp.build_voxel_grid(scenario.sample)
    positions = beam_positions(scenario)
    beams = [scenario.beam.moved(offset=d, standoff=h) for d, h in positions]
    params = recovery_params(scenario, grid, scenario.beam.drive_omega)
    results = run_positions(scenario, grid, beams, jobs)

    scale = scenario.gain * scenario.rescale_current / scenario.beam.current
    axis = "d" if scenario.sweep.kind == "offset" else "h"
    rows = []
    for (d, h), res in zip(positions, results):
        s_esr = scale * res.total.value
        u_emf = scale * res.u_emf
        s_emf = params.alpha * u_emf
        s_beam = spectro.recover_beam_signal(s_esr, u_emf, params)
        direct = scale * res.direct.value
        rows.append({
            "axis": axis,
            "position_m": d * scenario.d_scale if axis == "d" else h * scenario.h_scale,
            "d_m": d * scenario.d_scale,
            "h_m": h * scenario.h_scale,
            "s_esr_i_V": s_esr.real,
            "s_esr_q_V": s_esr.imag,
            "u_emf_i_V": u_emf.real,
            "u_emf_q_V": u_emf.imag,
            "s_emf_i_V": s_emf.real,
            "s_emf_q_V": s_emf.imag,
            "s_beam_i_V": s_beam.real,
            "s_beam_q_V": s_beam.imag,
            "direct_i_V": direct.real,
            "direct_q_V": direct.imag,
        })
    return pd.DataFrame(rows)


def _background(scenario: Scenario, omegas: np.ndarray) -> np.ndarray:
    bg = np.full_like(omegas, scenario.background.offset)
    if scenario.background.ripple is not None:
        bg = bg + spectro.calibration_model(omegas, scenario.background.ripple)
    return bg


def cmd_spectrum(scenario: Scenario, rng: Optional[np.random.Generator] = None) -> SpectrumRun:
    if scenario.sweep.kind != "frequency":
        raise ValidationError("sweep.kind", "spectrum needs a frequency sweep")
    omega0 = scenario.omega0
    t2 = scenario.material.t2
    grid = smp.build_voxel_grid(scenario.sample)
    beam = replace(scenario.beam, base_omega=omega0 / 2)
    signals = _simulate((grid, beam, scenario))
    s_res = scenario.gain * signals.total.value

    beam_model = smp.resonance_response(s_res, t2, omega0)
    parasitic = smp.resonance_response(scenario.background.esr_amplitude, t2, omega0)
    lk = scenario.lockin
    omegas = np.asarray(scenario.sweep.values, dtype=float)

    def synth(model):
        return spectro.synthesize_lockin(model, omegas, lk.amplitude, lk.omega, lk.phase,
                                         lk.cycle_samples, t2=t2, mode=lk.mode).values

    bg = _background(scenario, omegas)
    on = synth(lambda w, shift=0.0: beam_model(w, shift) + parasitic(w, shift)) + bg
    off = synth(parasitic) + bg

    sigma = scenario.noise_relative * float(np.ptp(on - off))
    if sigma > 0:
        rng = rng if rng is not None else np.random.default_rng(0)
        on = on + rng.normal(0.0, sigma, len(on))
        off = off + rng.normal(0.0, sigma, len(off))

    diff = spectro.differential(on, off)
    frame = pd.DataFrame({"omega_rad_s": omegas, "on_V": on, "off_V": off, "value_V": diff})
    fit = None
    if np.ptp(diff) > 0:
        fit = spectro.fit_spectrum(spectro.Spectrum(omegas, diff, lk.phase, (lk.amplitude, lk.omega)))
    return SpectrumRun(frame=frame, fit=fit, s_res=s_res)


def spectrum_report(run: SpectrumRun) -> Dict[str, str]:
    report = spectro.fit_report(run.fit) if run.fit is not None else {"fit": "skipped"}
    report["s_res_i"] = repr(run.s_res.real)
    report["s_res_q"] = repr(run.s_res.imag)
    return report


def cmd_fit(csv_path: Path, init: Optional[spectro.FitResult] = None) -> spectro.FitResult:
    return spectro.fit_spectrum(load_spectrum(csv_path), init)


def cmd_calibrate(csv_path: Path) -> CalibrationRun:
    omegas, i_vals, q_vals = load_iq(csv_path)
    init = spectro.estimate_calibration_iq(omegas, i_vals, q_vals)
    i_model = spectro.fit_calibration(omegas, i_vals, init)
    q_model = spectro.fit_calibration(omegas, q_vals, replace(init, theta=init.theta - math.pi / 2))
    ci, cq = spectro.compensate_phase(omegas, i_vals, q_vals, i_model.a)
    phase = np.unwrap(np.angle(ci + 1j * cq))
    return CalibrationRun(i_model=i_model, q_model=q_model, phase_spread=float(np.ptp(phase)))
