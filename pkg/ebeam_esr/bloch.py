"""
Thermal magnetization and the steady-state Bloch solution for a spin packet
driven by two transverse field components.

Lab-frame transverse magnetization is written as Mx = Re[P e^{iwt}],
My = Re[i P e^{iwt}] with the phasor P = Mx' - i My'. The closed form below is
evaluated in the frame that co-rotates with this representation, and
``time_domain_oracle`` integrates the lab-frame equations to check it.
"""

import math
import warnings
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .errors import SaturationRegime, StepTooLarge, ValidationError
from .nearfield import CONSTANTS, HarmonicField

SATURATION_LIMIT = 0.01
ORACLE_MIN_STEPS = 64
ORACLE_RELAXATION_TIMES = 10


@dataclass(frozen=True)
class SpinMaterial:
    spin_density: float
    t2: float
    t1: Optional[float] = None
    temperature: float = 293.0
    spin: float = 0.5

    def __post_init__(self):
        if self.t1 is None:
            object.__setattr__(self, "t1", self.t2)
        for name in ("spin_density", "t2", "t1", "temperature", "spin"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"material.{name}", "must be positive")
        if self.t2 > 2 * self.t1:
            raise ValidationError("material.t2", "must not exceed 2*t1")


@dataclass(frozen=True)
class DriveField:
    b1x: float
    theta_x: float
    b1y: float
    theta_y: float
    omega: float
    b0: float

    def __post_init__(self):
        if self.b1x < 0 or self.b1y < 0:
            raise ValidationError("drive.b1", "amplitudes must not be negative")
        if not self.omega > 0:
            raise ValidationError("drive.omega", "must be positive")
        if not self.b0 > 0:
            raise ValidationError("drive.b0", "must be positive")

    @classmethod
    def from_harmonics(cls, field: HarmonicField, omega: float, b0: float) -> "DriveField":
        return cls(field.b1x, field.theta_x, field.b1y, field.theta_y, omega, b0)

    @classmethod
    def from_phasor(cls, phasor: complex, omega: float, b0: float) -> "DriveField":
        """Single x-component drive carrying the whole complex phasor."""
        return cls(abs(phasor), float(np.angle(phasor)), 0.0, 0.0, omega, b0)

    @property
    def phasor(self) -> complex:
        return self.b1x * np.exp(1j * self.theta_x) - 1j * self.b1y * np.exp(1j * self.theta_y)

    @property
    def delta_omega(self) -> float:
        return self.omega - resonance_omega(self.b0)


@dataclass(frozen=True)
class RotatingFrameDrive:
    b1x_rot: float
    b1y_rot: float

    @classmethod
    def from_drive(cls, drive: DriveField) -> "RotatingFrameDrive":
        rot = cls(
            b1x_rot=0.5 * (drive.b1x * math.cos(drive.theta_x) + drive.b1y * math.sin(drive.theta_y)),
            b1y_rot=0.5 * (drive.b1y * math.cos(drive.theta_y) - drive.b1x * math.sin(drive.theta_x)),
        )
        assert rot.matches(drive)
        return rot

    def matches(self, drive: DriveField, rtol: float = 1e-12) -> bool:
        # B1x' - i B1y' is half the drive phasor
        expected = 0.5 * drive.phasor
        got = complex(self.b1x_rot, -self.b1y_rot)
        return abs(got - expected) <= rtol * max(drive.b1x + drive.b1y, np.finfo(float).tiny)


@dataclass(frozen=True)
class Magnetization:
    mx_rot: float
    my_rot: float
    m0: float

    def __post_init__(self):
        if abs(complex(self.mx_rot, -self.my_rot)) > 1.1 * abs(self.m0) + np.finfo(float).tiny:
            raise ValueError("transverse magnetization exceeds M0; drive is outside the linear regime")


def resonance_omega(b0: float) -> float:
    return CONSTANTS.gamma_e * b0


def thermal_magnetization(mat: SpinMaterial, b0: float) -> float:
    """Curie-law magnetization M0 in A/m."""
    c = CONSTANTS
    s = mat.spin
    return mat.spin_density * (c.gamma_e * c.hbar) ** 2 * s * (s + 1) / (3 * c.kB * mat.temperature) * b0


def spin_polarization(b0: float, temperature: float) -> float:
    """Two-level Boltzmann polarization hbar*w0 / (2 kB T)."""
    return CONSTANTS.hbar * resonance_omega(b0) / (2 * CONSTANTS.kB * temperature)


def saturation_parameter(drive: DriveField, mat: SpinMaterial) -> float:
    return (CONSTANTS.gamma_e * max(drive.b1x, drive.b1y)) ** 2 * mat.t1 * mat.t2


def drive_response(m0, t2, delta_omega, phasor):
    """Transverse phasor P for a complex drive phasor; works on arrays."""
    gamma = CONSTANTS.gamma_e
    return -0.5j * gamma * m0 * t2 * np.asarray(phasor) / (1 + 1j * t2 * np.asarray(delta_omega))


def steady_state(drive: DriveField, mat: SpinMaterial, m0: float) -> Magnetization:
    s = saturation_parameter(drive, mat)
    if s > SATURATION_LIMIT:
        warnings.warn(f"saturation parameter {s:.3g} above {SATURATION_LIMIT}", SaturationRegime, stacklevel=2)
    rot = RotatingFrameDrive.from_drive(drive)
    u = mat.t2 * drive.delta_omega
    k = m0 * CONSTANTS.gamma_e * mat.t2 / (1 + u * u)
    return Magnetization(
        mx_rot=-k * (rot.b1y_rot + u * rot.b1x_rot),
        my_rot=k * (rot.b1x_rot - u * rot.b1y_rot),
        m0=m0,
    )


def transverse_phasor(m: Magnetization) -> complex:
    return complex(m.mx_rot, -m.my_rot)


def lab_components(phasor: complex, omega: float, t):
    """(Mx, My) at times ``t`` for a rotating-frame phasor."""
    rot = phasor * np.exp(1j * omega * np.asarray(t, dtype=float))
    return rot.real, (1j * rot).real


def _integrate(drive, mat, m0, dt, n_steps, m_init, keep_from):
    gamma = CONSTANTS.gamma_e
    r1 = 0.0 if math.isinf(mat.t1) else 1.0 / mat.t1
    r2 = 0.0 if math.isinf(mat.t2) else 1.0 / mat.t2
    w, bx1, by1, bz = drive.omega, drive.b1x, drive.b1y, drive.b0
    tx, ty = drive.theta_x, drive.theta_y
    cos = math.cos

    def deriv(t, mx, my, mz):
        bx = bx1 * cos(w * t + tx)
        by = by1 * cos(w * t + ty)
        return (
            gamma * (my * bz - mz * by) - r2 * mx,
            gamma * (mz * bx - mx * bz) - r2 * my,
            gamma * (mx * by - my * bx) - r1 * (mz - m0),
        )

    mx, my, mz = m_init
    times, states = [], []
    half = 0.5 * dt
    for step in range(n_steps + 1):
        t = step * dt
        if step >= keep_from:
            times.append(t)
            states.append((mx, my, mz))
        if step == n_steps:
            break
        k1 = deriv(t, mx, my, mz)
        k2 = deriv(t + half, mx + half * k1[0], my + half * k1[1], mz + half * k1[2])
        k3 = deriv(t + half, mx + half * k2[0], my + half * k2[1], mz + half * k2[2])
        k4 = deriv(t + dt, mx + dt * k3[0], my + dt * k3[1], mz + dt * k3[2])
        mx += dt / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        my += dt / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        mz += dt / 6 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
    return np.array(times), np.array(states)


def bloch_trajectory(
    drive: DriveField,
    mat: SpinMaterial,
    m0: float,
    duration: float,
    dt: float,
    m_init: Optional[Tuple[float, float, float]] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """Fixed-step RK4 solution of dM/dt = gamma M x B - relaxation in the lab frame."""
    n_steps = int(math.ceil(duration / dt))
    start = (0.0, 0.0, m0) if m_init is None else m_init
    return _integrate(drive, mat, m0, dt, n_steps, start, keep_from=0)


def time_domain_oracle(
    drive: DriveField,
    mat: SpinMaterial,
    m0: float,
    duration: float,
    dt: float,
) -> Magnetization:
    period = 2 * math.pi / drive.omega
    if dt > period / ORACLE_MIN_STEPS:
        raise StepTooLarge(f"dt={dt:.3g}s exceeds period/{ORACLE_MIN_STEPS}")
    if duration < ORACLE_RELAXATION_TIMES * max(mat.t1, mat.t2):
        raise ValueError("duration must cover at least ten relaxation times")

    # shrink dt so that a whole number of steps tiles one drive period
    per_period = int(math.ceil(period / dt))
    dt = period / per_period
    n_steps = int(math.ceil(duration / period)) * per_period
    t, states = _integrate(drive, mat, m0, dt, n_steps, (0.0, 0.0, m0), keep_from=n_steps - per_period)
    t, states = t[:-1], states[:-1]

    phasor = np.mean((states[:, 0] - 1j * states[:, 1]) * np.exp(-1j * drive.omega * t))
    return Magnetization(mx_rot=float(phasor.real), my_rot=float(-phasor.imag), m0=m0)
