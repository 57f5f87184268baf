"""
Magnetic near-field of a sinusoidally deflected electron beam and of the
two-winding pickup coil.

Coordinates: origin at the coil centre, coil windings in the yz-plane at
x = 0, sample on top of the coil (0 <= x <= H), beam travelling along +z above
the sample and deflected approximately along y.
"""

import math
from dataclasses import dataclass, replace
from typing import Sequence, Tuple, Union

import numpy as np
from scipy import constants as sc

from .errors import AllZero, EmptyInput, SingularPoint, ValidationError

ArrayLike = Union[float, np.ndarray]

SINGULAR_RADIUS = 1e-9
DEFAULT_N_MAX = 8
DEFAULT_N_SAMPLES = 4096
DEFAULT_TILT = math.radians(5.0)


@dataclass(frozen=True)
class PhysicalConstants:
    mu0: float = sc.mu_0
    gamma_e: float = sc.physical_constants["electron gyromag. ratio"][0]
    hbar: float = sc.hbar
    kB: float = sc.k

    def __post_init__(self):
        for name in ("mu0", "gamma_e", "hbar", "kB"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")


CONSTANTS = PhysicalConstants()


@dataclass(frozen=True)
class BeamSpec:
    """Deflected beam: current, modulation frequency Ω and geometry."""

    current: float
    base_omega: float
    amplitude: float = 0.9e-3
    standoff: float = 0.6e-3
    offset: float = 0.0
    tilt: float = DEFAULT_TILT
    sample_height: float = 0.7e-3

    def __post_init__(self):
        # current == 0 is accepted and means "beam off"
        if not self.current >= 0:
            raise ValidationError("beam.current", "must not be negative")
        if not self.base_omega > 0:
            raise ValidationError("beam.base_omega", "must be positive")
        if not self.amplitude >= 0:
            raise ValidationError("beam.amplitude", "must not be negative")
        if not self.standoff > 0:
            raise ValidationError("beam.standoff", "must be positive")

    @property
    def period(self) -> float:
        return 2.0 * math.pi / self.base_omega

    @property
    def drive_omega(self) -> float:
        """Second-harmonic angular frequency 2Ω seen by the spins."""
        return 2.0 * self.base_omega

    def moved(self, offset: float = None, standoff: float = None) -> "BeamSpec":
        changes = {}
        if offset is not None:
            changes["offset"] = offset
        if standoff is not None:
            changes["standoff"] = standoff
        return replace(self, **changes)


@dataclass(frozen=True)
class FieldVector:
    bx: ArrayLike
    by: ArrayLike

    def __post_init__(self):
        if not (np.all(np.isfinite(self.bx)) and np.all(np.isfinite(self.by))):
            raise ValueError("field components must be finite")

    @property
    def magnitude(self) -> ArrayLike:
        return np.hypot(self.bx, self.by)


@dataclass(frozen=True)
class HarmonicField:
    """Fourier amplitudes with B(t) = sum_n Re[c_n exp(i n Omega t)]."""

    point: Tuple[float, float]
    coeffs_x: np.ndarray
    coeffs_y: np.ndarray

    def __post_init__(self):
        for coeffs in (self.coeffs_x, self.coeffs_y):
            scale = max(float(np.max(np.abs(coeffs))), np.finfo(float).tiny)
            if abs(coeffs[0].imag) > 1e-12 * scale:
                raise ValueError("DC coefficient must be real")

    @property
    def n_max(self) -> int:
        return len(self.coeffs_x) - 1

    @property
    def b1x(self) -> float:
        return float(abs(self.coeffs_x[2]))

    @property
    def b1y(self) -> float:
        return float(abs(self.coeffs_y[2]))

    @property
    def theta_x(self) -> float:
        return float(np.angle(self.coeffs_x[2]))

    @property
    def theta_y(self) -> float:
        return float(np.angle(self.coeffs_y[2]))

    @property
    def second_harmonic_magnitude(self) -> float:
        return float(math.hypot(self.b1x, self.b1y))

    def drive_phasor(self) -> complex:
        """Complex drive B1x e^{i theta_x} - i B1y e^{i theta_y} of the spins."""
        return complex(self.coeffs_x[2] - 1j * self.coeffs_y[2])


@dataclass(frozen=True)
class CoilSpec:
    """Microcoil made of rectangular windings in the yz-plane at x = 0.

    Each entry of ``loop_rects`` is ``(y_min, y_max, z_min, z_max)`` in metres;
    current circulates y_min -> y_max along z_min first, so the field at the
    centre points along +x.
    """

    turns: int
    area: float
    resistance: float
    loop_rects: Tuple[Tuple[float, float, float, float], ...]
    unitary_ref: float = 2e-3

    def __post_init__(self):
        if self.turns < 1:
            raise ValidationError("coil.turns", "must be at least 1")
        if not self.area > 0:
            raise ValidationError("coil.area", "must be positive")
        if not self.resistance > 0:
            raise ValidationError("coil.resistance", "must be positive")
        if len(self.loop_rects) != self.turns:
            raise ValidationError("coil.loop_rects", "one rectangle per turn required")
        for y0, y1, z0, z1 in self.loop_rects:
            if not (y1 > y0 and z1 > z0):
                raise ValidationError("coil.loop_rects", "rectangle bounds must be increasing")

    def segments(self):
        """Yield (start, end) of every straight conductor piece."""
        for y0, y1, z0, z1 in self.loop_rects:
            corners = [(0.0, y0, z0), (0.0, y1, z0), (0.0, y1, z1), (0.0, y0, z1)]
            for i in range(4):
                yield np.array(corners[i]), np.array(corners[(i + 1) % 4])

    @property
    def inner_rect(self) -> Tuple[float, float, float, float]:
        return min(self.loop_rects, key=lambda r: (r[1] - r[0]) * (r[3] - r[2]))


def default_coil(
    inner_width: float = 1.1e-3,
    inner_depth: float = 0.6e-3,
    trace_width: float = 0.2e-3,
    turns: int = 2,
    area: float = 1e-6,
    resistance: float = 1.25,
    unitary_ref: float = 2e-3,
) -> CoilSpec:
    """Concentric windings, each one trace width larger than the previous."""
    rects = []
    for i in range(turns):
        hw = inner_width / 2 + i * trace_width
        hd = inner_depth / 2 + i * trace_width
        rects.append((-hw, hw, -hd, hd))
    return CoilSpec(turns=turns, area=area, resistance=resistance,
                    loop_rects=tuple(rects), unitary_ref=unitary_ref)


def beam_line_position(spec: BeamSpec, t: ArrayLike) -> Tuple[ArrayLike, ArrayLike]:
    swing = spec.amplitude * np.cos(spec.base_omega * np.asarray(t, dtype=float))
    x = spec.sample_height + spec.standoff + math.sin(spec.tilt) * swing
    y = spec.offset + math.cos(spec.tilt) * swing
    return x, y


def _line_field(current, px, py, lx, ly):
    dx = px - lx
    dy = py - ly
    r2 = dx * dx + dy * dy
    if np.any(r2 <= SINGULAR_RADIUS ** 2):
        raise SingularPoint("evaluation point lies on the beam line")
    k = CONSTANTS.mu0 * current / (2.0 * math.pi)
    return -k * dy / r2, k * dx / r2


def field_at(spec: BeamSpec, point: Sequence[float], t: ArrayLike) -> FieldVector:
    """Field of the infinite straight beam line at ``point`` = (x, y) and time ``t``."""
    lx, ly = beam_line_position(spec, t)
    bx, by = _line_field(spec.current, point[0], point[1], lx, ly)
    return FieldVector(bx=bx, by=by)


def _check_sampling(n_max: int, n_samples: int) -> None:
    if n_max < 0:
        raise ValueError("n_max must not be negative")
    if n_samples < max(8 * n_max, 8):
        raise ValueError(f"n_samples={n_samples} too small for n_max={n_max}")


def harmonics_grid(
    spec: BeamSpec,
    xs: ArrayLike,
    ys: ArrayLike,
    n_max: int = DEFAULT_N_MAX,
    n_samples: int = DEFAULT_N_SAMPLES,
) -> Tuple[np.ndarray, np.ndarray]:
    """Harmonic coefficients for many points at once, shape (points, n_max + 1)."""
    _check_sampling(n_max, n_samples)
    t = np.arange(n_samples) * (spec.period / n_samples)
    lx, ly = beam_line_position(spec, t)
    px = np.atleast_1d(np.asarray(xs, dtype=float))[:, None]
    py = np.atleast_1d(np.asarray(ys, dtype=float))[:, None]
    bx, by = _line_field(spec.current, px, py, lx[None, :], ly[None, :])

    def project(samples):
        coeffs = np.fft.rfft(samples, axis=1)[:, : n_max + 1] * (2.0 / n_samples)
        coeffs[:, 0] = coeffs[:, 0].real / 2.0
        return coeffs

    return project(bx), project(by)


def harmonics(
    spec: BeamSpec,
    point: Sequence[float],
    n_max: int = DEFAULT_N_MAX,
    n_samples: int = DEFAULT_N_SAMPLES,
) -> HarmonicField:
    cx, cy = harmonics_grid(spec, point[0], point[1], n_max, n_samples)
    return HarmonicField(point=(float(point[0]), float(point[1])), coeffs_x=cx[0], coeffs_y=cy[0])


def reconstruct(field: HarmonicField, base_omega: float, t: ArrayLike) -> FieldVector:
    n = np.arange(field.n_max + 1)
    phase = np.exp(1j * np.multiply.outer(np.asarray(t, dtype=float) * base_omega, n))
    return FieldVector(bx=(phase @ field.coeffs_x).real, by=(phase @ field.coeffs_y).real)


def dc_field(spec: BeamSpec, point: Sequence[float], n_samples: int = DEFAULT_N_SAMPLES) -> FieldVector:
    field = harmonics(spec, point, n_max=0, n_samples=n_samples)
    return FieldVector(bx=float(field.coeffs_x[0].real), by=float(field.coeffs_y[0].real))


def segment_field(start, end, points, current: float = 1.0) -> np.ndarray:
    """Biot-Savart field of a finite straight segment, shape (N, 3) in tesla."""
    start = np.asarray(start, dtype=float)
    end = np.asarray(end, dtype=float)
    pts = np.atleast_2d(np.asarray(points, dtype=float))

    seg = end - start
    frac = np.clip((pts - start) @ seg / (seg @ seg), 0.0, 1.0)
    nearest = start + frac[:, None] * seg
    if np.any(np.linalg.norm(pts - nearest, axis=1) <= SINGULAR_RADIUS):
        raise SingularPoint("evaluation point lies on a conductor segment")

    r1 = pts - start
    r2 = pts - end
    n1 = np.linalg.norm(r1, axis=1)
    n2 = np.linalg.norm(r2, axis=1)
    denom = n1 * n2 * (n1 * n2 + np.einsum("ij,ij->i", r1, r2))
    factor = CONSTANTS.mu0 * current / (4.0 * math.pi) * (n1 + n2) / denom
    return np.cross(r1, r2) * factor[:, None]


def coil_unitary_field(coil: CoilSpec, point) -> Tuple[ArrayLike, ArrayLike, ArrayLike]:
    """Field per ampere of coil current at one point (3,) or many points (N, 3)."""
    pts = np.asarray(point, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    total = np.zeros_like(pts)
    for start, end in coil.segments():
        total += segment_field(start, end, pts)
    if single:
        return float(total[0, 0]), float(total[0, 1]), float(total[0, 2])
    return total[:, 0], total[:, 1], total[:, 2]


def self_weighted_average(values: Sequence[float]) -> float:
    """sum(B^2) / sum(B): the coupling seen by both excitation and detection."""
    arr = np.asarray(list(values), dtype=float)
    if arr.size == 0:
        raise EmptyInput("no values to average")
    if np.any(arr < 0):
        raise ValueError("values must not be negative")
    total = arr.sum()
    if total == 0:
        raise AllZero("all values are zero")
    return float(np.sum(arr * arr) / total)
