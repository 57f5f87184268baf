"""
Voxelized spin sample: per-voxel drive fields, reciprocity pickup and the
indirect drive through the beam-induced coil current.
"""

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence, Tuple

import numpy as np

from . import bloch
from .errors import BadDiscretization, BeamIntersectsSample, NumericalError, SaturationRegime, ValidationError
from .nearfield import (
    DEFAULT_N_SAMPLES,
    BeamSpec,
    CoilSpec,
    HarmonicField,
    beam_line_position,
    coil_unitary_field,
    harmonics_grid,
    self_weighted_average,
)

DEFAULT_APERTURE_SAMPLES = 32
SIGNAL_KINDS = ("direct", "indirect", "total")


@dataclass(frozen=True)
class SampleSpec:
    """Cuboid sample; dims are (height along x, width along y, depth along z)."""

    material: bloch.SpinMaterial
    dims: Tuple[float, float, float] = (0.7e-3, 1.1e-3, 0.7e-3)
    voxel_size: float = 100e-6
    origin_offset: Tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if len(self.dims) != 3 or min(self.dims) <= 0:
            raise ValidationError("sample.dims", "three positive edge lengths required")
        if not self.voxel_size > 0:
            raise ValidationError("sample.voxel_size", "must be positive")
        for length in self.dims:
            # a half-voxel remainder has no nearest voxel count
            if abs(length / self.voxel_size - round(length / self.voxel_size)) >= 0.5 - 1e-9:
                raise ValidationError("sample.dims", f"{length:g} m is not a whole number of {self.voxel_size:g} m voxels")

    @property
    def top(self) -> float:
        return self.origin_offset[0] + self.dims[0]

    @property
    def bounds(self) -> Tuple[Tuple[float, float], ...]:
        ox, oy, oz = self.origin_offset
        lx, ly, lz = self.dims
        return ((ox, ox + lx), (oy - ly / 2, oy + ly / 2), (oz - lz / 2, oz + lz / 2))


@dataclass(frozen=True)
class VoxelGrid:
    centers: np.ndarray
    volume: float
    shape: Tuple[int, int, int]
    bounds: Tuple[Tuple[float, float], ...] = field(default=None)

    def __len__(self):
        return len(self.centers)


@dataclass(frozen=True)
class SignalPhasor:
    value: complex
    kind: str

    def __post_init__(self):
        if self.kind not in SIGNAL_KINDS:
            raise ValueError(f"unknown signal kind '{self.kind}'")

    @property
    def i(self) -> float:
        return float(self.value.real)

    @property
    def q(self) -> float:
        return float(self.value.imag)


@dataclass(frozen=True)
class PositionSignals:
    direct: SignalPhasor
    indirect: SignalPhasor
    total: SignalPhasor
    u_emf: complex


def build_voxel_grid(spec: SampleSpec) -> VoxelGrid:
    v = spec.voxel_size
    counts = [int(round(length / v)) for length in spec.dims]
    if min(counts) == 0:
        raise BadDiscretization(f"voxel size {v:g} m leaves an axis without voxels")
    axes = []
    for (lo, hi), n in zip(spec.bounds, counts):
        mid = 0.5 * (lo + hi)
        axes.append(mid + (np.arange(n) - (n - 1) / 2) * v)
    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    centers = np.column_stack([gx.ravel(), gy.ravel(), gz.ravel()])
    return VoxelGrid(centers=centers, volume=v ** 3, shape=tuple(counts), bounds=spec.bounds)


def check_beam_clear(grid: VoxelGrid, beam: BeamSpec, n_instants: int = 256) -> None:
    (x_lo, x_hi), (y_lo, y_hi), _ = grid.bounds
    t = np.arange(n_instants) * beam.period / n_instants
    bx, by = beam_line_position(beam, t)
    inside = (bx >= x_lo) & (bx <= x_hi) & (by >= y_lo) & (by <= y_hi)
    if np.any(inside):
        raise BeamIntersectsSample("beam path passes through the sample volume")


def voxel_columns(grid: VoxelGrid) -> Tuple[np.ndarray, np.ndarray]:
    """Distinct (x, y) voxel columns and the column index of every voxel."""
    xy = np.round(grid.centers[:, :2], 15)
    columns, inverse = np.unique(xy, axis=0, return_inverse=True)
    return columns, np.ravel(inverse)


def voxel_drive_map(grid: VoxelGrid, beam: BeamSpec, n_samples: int = DEFAULT_N_SAMPLES):
    """(x, y, c2x, c2y) per voxel column; the beam field does not depend on z."""
    columns, _ = voxel_columns(grid)
    cx, cy = harmonics_grid(beam, columns[:, 0], columns[:, 1], n_max=2, n_samples=n_samples)
    return columns[:, 0], columns[:, 1], cx[:, 2], cy[:, 2]


def voxel_drive_phasors(grid: VoxelGrid, beam: BeamSpec, n_samples: int = DEFAULT_N_SAMPLES) -> np.ndarray:
    """Complex drive c2x - i c2y at every voxel."""
    _, inverse = voxel_columns(grid)
    _, _, c2x, c2y = voxel_drive_map(grid, beam, n_samples)
    return (c2x - 1j * c2y)[inverse]


def voxel_unitary_fields(grid: VoxelGrid, coil: CoilSpec):
    return coil_unitary_field(coil, grid.centers)


def grid_unitary_average(grid: VoxelGrid, coil: CoilSpec) -> float:
    bux, buy, buz = voxel_unitary_fields(grid, coil)
    return self_weighted_average(np.sqrt(bux ** 2 + buy ** 2 + buz ** 2))


def _reciprocity(omega, volume, bux, buy, response):
    return 0.5j * omega * volume * (bux + 1j * buy) * response


def _warn_if_saturated(phasors, mat: bloch.SpinMaterial, omega: float, b0: float) -> None:
    strongest = float(np.max(np.abs(phasors))) if len(phasors) else 0.0
    s = bloch.saturation_parameter(bloch.DriveField.from_phasor(strongest, omega, b0), mat)
    if s > bloch.SATURATION_LIMIT:
        warnings.warn(f"saturation parameter {s:.3g} above {bloch.SATURATION_LIMIT}", SaturationRegime, stacklevel=3)


def voxel_signal(
    voxel_center: Sequence[float],
    vv: float,
    drive: HarmonicField,
    bu: Sequence[float],
    mat: bloch.SpinMaterial,
    m0: float,
    omega: float,
    delta_omega: float,
) -> complex:
    """Reciprocity voltage U0 of one voxel."""
    if not np.allclose(drive.point, voxel_center[:2], rtol=0, atol=1e-12):
        raise ValueError("harmonic field was evaluated at a different position")
    b0 = (omega - delta_omega) / bloch.CONSTANTS.gamma_e
    state = bloch.steady_state(bloch.DriveField.from_harmonics(drive, omega, b0), mat, m0)
    return complex(_reciprocity(omega, vv, bu[0], bu[1], bloch.transverse_phasor(state)))


def _sum_signal(grid, bux, buy, phasors, mat, b0, omega, delta_omega=0.0) -> complex:
    m0 = bloch.thermal_magnetization(mat, b0)
    response = bloch.drive_response(m0, mat.t2, delta_omega, phasors)
    return complex(np.sum(_reciprocity(omega, grid.volume, bux, buy, response)))


def direct_signal(
    grid: VoxelGrid,
    beam: BeamSpec,
    coil: CoilSpec,
    mat: bloch.SpinMaterial,
    b0: float,
    omega: float,
    n_samples: int = DEFAULT_N_SAMPLES,
) -> SignalPhasor:
    check_beam_clear(grid, beam)
    phasors = voxel_drive_phasors(grid, beam, n_samples)
    _warn_if_saturated(phasors, mat, omega, b0)
    bux, buy, _ = voxel_unitary_fields(grid, coil)
    delta = omega - bloch.resonance_omega(b0)
    return SignalPhasor(_sum_signal(grid, bux, buy, phasors, mat, b0, omega, delta), "direct")


def aperture_b1x(beam: BeamSpec, coil: CoilSpec, aperture_samples: int = DEFAULT_APERTURE_SAMPLES,
                 n_samples: int = DEFAULT_N_SAMPLES) -> complex:
    """Second-harmonic c2x averaged over the inner winding.

    The beam field is independent of z, so only the y direction of the
    aperture grid needs evaluating.
    """
    if aperture_samples < 16:
        raise ValueError("aperture_samples must be at least 16 per axis")
    y0, y1, _, _ = coil.inner_rect
    ys = y0 + (np.arange(aperture_samples) + 0.5) * (y1 - y0) / aperture_samples
    cx, _ = harmonics_grid(beam, np.zeros_like(ys), ys, n_max=2, n_samples=n_samples)
    return complex(np.mean(cx[:, 2]))


def coil_emf(beam: BeamSpec, coil: CoilSpec, omega: float,
             aperture_samples: int = DEFAULT_APERTURE_SAMPLES,
             n_samples: int = DEFAULT_N_SAMPLES) -> complex:
    b1x_bar = aperture_b1x(beam, coil, aperture_samples, n_samples)
    return 1j * coil.turns * omega * coil.area * b1x_bar


def indirect_driving_field(voxel_center, u_emf: complex, coil: CoilSpec) -> complex:
    bux, buy, _ = coil_unitary_field(coil, voxel_center)
    return (bux + 1j * buy) * u_emf / (2 * coil.resistance)


def indirect_drive_ratio(coil: CoilSpec, omega: float, bu: float = None) -> complex:
    """B_p / mean(B1x) for a coil field ``bu`` per ampere (nominal unitary_ref by default)."""
    bu = coil.unitary_ref if bu is None else bu
    return 1j * coil.turns * omega * coil.area * bu / (2 * coil.resistance)


def self_consistent_alpha(
    grid: VoxelGrid,
    coil: CoilSpec,
    mat: bloch.SpinMaterial,
    b0: float,
    omega: float,
) -> complex:
    """Indirect-drive signal per volt of coil EMF; independent of beam position."""
    bux, buy, _ = voxel_unitary_fields(grid, coil)
    phasors = (bux + 1j * buy) / (2 * coil.resistance)
    delta = omega - bloch.resonance_omega(b0)
    return _sum_signal(grid, bux, buy, phasors, mat, b0, omega, delta)


def simulate_position(
    grid: VoxelGrid,
    beam: BeamSpec,
    coil: CoilSpec,
    mat: bloch.SpinMaterial,
    b0: float,
    omega: float,
    n_samples: int = DEFAULT_N_SAMPLES,
    aperture_samples: int = DEFAULT_APERTURE_SAMPLES,
) -> PositionSignals:
    check_beam_clear(grid, beam)
    direct_drive = voxel_drive_phasors(grid, beam, n_samples)
    bux, buy, _ = voxel_unitary_fields(grid, coil)
    u_emf = coil_emf(beam, coil, omega, aperture_samples, n_samples)
    indirect_drive = (bux + 1j * buy) * u_emf / (2 * coil.resistance)
    _warn_if_saturated(direct_drive + indirect_drive, mat, omega, b0)

    delta = omega - bloch.resonance_omega(b0)
    direct = _sum_signal(grid, bux, buy, direct_drive, mat, b0, omega, delta)
    indirect = _sum_signal(grid, bux, buy, indirect_drive, mat, b0, omega, delta)
    total = _sum_signal(grid, bux, buy, direct_drive + indirect_drive, mat, b0, omega, delta)

    scale = max(abs(direct) + abs(indirect), np.finfo(float).tiny)
    if abs(total - direct - indirect) > 1e-10 * scale:
        raise NumericalError("superposition of direct and indirect drive failed")
    return PositionSignals(
        direct=SignalPhasor(direct, "direct"),
        indirect=SignalPhasor(indirect, "indirect"),
        total=SignalPhasor(total, "total"),
        u_emf=u_emf,
    )


def total_signal(
    grid: VoxelGrid,
    beam: BeamSpec,
    coil: CoilSpec,
    mat: bloch.SpinMaterial,
    b0: float,
    omega: float,
    n_samples: int = DEFAULT_N_SAMPLES,
    aperture_samples: int = DEFAULT_APERTURE_SAMPLES,
) -> Tuple[SignalPhasor, SignalPhasor, SignalPhasor]:
    signals = simulate_position(grid, beam, coil, mat, b0, omega, n_samples, aperture_samples)
    return signals.direct, signals.indirect, signals.total


def resonance_response(s_res: complex, t2: float, omega0: float):
    """Frequency dependence of a coil signal around resonance: model(omega, shift)."""

    def model(omega, shift=0.0):
        return s_res / (1 + 1j * t2 * (np.asarray(omega, dtype=float) - omega0 - shift))

    return model


def dc_shift_bound(dc_field_magnitude: float) -> float:
    """Largest resonance shift in Hz caused by a static field of the given size."""
    return bloch.CONSTANTS.gamma_e * dc_field_magnitude / (2 * math.pi)
