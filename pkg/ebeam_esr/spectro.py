"""
Lock-in spectra: synthesis, derivative-Lorentzian fitting, differential
subtraction, IQ phase handling, coil phase calibration and removal of the
indirect-drive contribution.
"""

import json
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import least_squares, minimize_scalar
from scipy.signal import savgol_filter

from .errors import BothZero, DegenerateData, NoConvergence, QuasiStaticViolation, ValidationError
from .nearfield import CONSTANTS, CoilSpec

QUASI_STATIC_LIMIT = 0.01
MIN_CYCLE_SAMPLES = 64
MIN_FIT_POINTS = 8
FIT_XTOL = 1e-10
FIT_MAX_ITERATIONS = 200
MAGNITUDE_SPAN = 5.0
MAGNITUDE_POINTS = 4001
LOCKIN_MODES = ("exact", "derivative")

# peak-to-peak of the absorptive derivative is PP_ABSORPTIVE * k / gamma2**2
PP_ABSORPTIVE = 2 * 9 / (8 * math.sqrt(3))
PP_DISPERSIVE = 9 / 8


@dataclass(frozen=True)
class Spectrum:
    omegas: np.ndarray
    values: np.ndarray
    quadrature_phase: float = 0.0
    modulation: Tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        omegas = np.asarray(self.omegas, dtype=float)
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "omegas", omegas)
        object.__setattr__(self, "values", values)
        if omegas.shape != values.shape or omegas.ndim != 1:
            raise ValueError("omegas and values must be 1-D arrays of equal length")
        if np.any(np.diff(omegas) <= 0):
            raise ValueError("omegas must be strictly increasing")
        if not np.all(np.isfinite(values)):
            raise ValueError("spectrum values must be finite")
        if self.modulation[0] < 0:
            raise ValueError("modulation amplitude must not be negative")

    def __len__(self):
        return len(self.omegas)


@dataclass(frozen=True)
class FitResult:
    omega0: float
    gamma2: float
    k: float
    phi: float
    offset: float
    magnitude: float = 0.0
    covariance: Optional[np.ndarray] = field(default=None, compare=False)
    residual_norm: float = 0.0

    def __post_init__(self):
        if not self.gamma2 > 0:
            raise ValueError("gamma2 must be positive")
        if self.magnitude < 0:
            raise ValueError("magnitude must not be negative")

    @property
    def t2(self) -> float:
        return 1.0 / self.gamma2

    @property
    def delta_omega_pp(self) -> float:
        return 2.0 * self.gamma2 / math.sqrt(3.0)

    @property
    def params(self) -> np.ndarray:
        return np.array([self.omega0, self.gamma2, self.k, self.phi, self.offset])

    def curve(self, omega):
        return lineshape(omega, self.omega0, self.gamma2, self.k, self.phi, self.offset)

    @classmethod
    def from_linewidth(cls, omega0, delta_omega_pp, k, phi=0.0, offset=0.0) -> "FitResult":
        return cls(omega0, math.sqrt(3.0) / 2.0 * delta_omega_pp, k, phi, offset)


@dataclass(frozen=True)
class CalibrationModel:
    """Parameters of k cos(a w + theta) / sqrt(((w - w0)/s)^2 + 1)."""

    k: float
    a: float
    theta: float
    omega0: float
    s: float

    def __post_init__(self):
        if not self.s > 0:
            raise ValidationError("calibration.s", "must be positive")


@dataclass(frozen=True)
class RecoveryParams:
    alpha: complex
    r_signal: complex
    bu_avg: float
    rc: float
    phase_offset: float = 0.0

    def __post_init__(self):
        if not (self.bu_avg > 0 and self.rc > 0):
            raise ValueError("bu_avg and rc must be positive")
        expected = abs(self.r_signal * self.bu_avg / (2 * self.rc))
        if not math.isclose(abs(self.alpha), expected, rel_tol=1e-9, abs_tol=1e-300):
            raise ValueError(f"|alpha|={abs(self.alpha):.6g} inconsistent with R*Bu/(2Rc)={expected:.6g}")

    @classmethod
    def from_alpha(cls, alpha: complex, bu_avg: float, rc: float, phase_offset: float = 0.0) -> "RecoveryParams":
        return cls(alpha=complex(alpha), r_signal=complex(alpha) * 2 * rc / bu_avg,
                   bu_avg=bu_avg, rc=rc, phase_offset=phase_offset)


def lineshape(omega, omega0, gamma2, k, phi, offset):
    """k * d/dw [absorptive cos(phi) + dispersive sin(phi)] + offset."""
    if not gamma2 > 0:
        raise ValueError("gamma2 must be positive")
    delta = np.asarray(omega, dtype=float) - omega0
    den = gamma2 * gamma2 + delta * delta
    d_abs = -2.0 * gamma2 * delta / (den * den)
    d_disp = (gamma2 * gamma2 - delta * delta) / (den * den)
    return k * (d_abs * math.cos(phi) + d_disp * math.sin(phi)) + offset


def _lineshape_signed(omega, omega0, gamma2, k, phi, offset):
    # optimizer path: the sign of gamma2 is normalized after the fit
    delta = omega - omega0
    den = gamma2 * gamma2 + delta * delta
    return k * ((-2.0 * gamma2 * delta) * np.cos(phi) + (gamma2 * gamma2 - delta * delta) * np.sin(phi)) / (den * den) + offset


def lorentzian_phasor(omega0: float, gamma2: float, amplitude: complex = 1.0) -> Callable:
    """Complex resonance amplitude * g2 / (g2 + i(w - w0 - shift)).

    Its real part is the absorptive Lorentzian for a real ``amplitude``; a
    complex amplitude with argument phi yields the mixture that ``lineshape``
    describes with the same phi.
    """
    if not gamma2 > 0:
        raise ValueError("gamma2 must be positive")

    def model(omega, shift=0.0):
        return amplitude * gamma2 / (gamma2 + 1j * (np.asarray(omega, dtype=float) - omega0 - shift))

    model.gamma2 = gamma2
    return model


def synthesize_lockin(
    signal_model: Callable,
    omegas: Sequence[float],
    a_m: float,
    omega_m: float,
    phi_lo: float = 0.0,
    n_cycle_samples: int = MIN_CYCLE_SAMPLES,
    t2: Optional[float] = None,
    mode: str = "exact",
) -> Spectrum:
    """First-harmonic lock-in output while B0 is modulated by a_m cos(w_m t)."""
    if mode not in LOCKIN_MODES:
        raise ValueError(f"unknown lock-in mode '{mode}'")
    if n_cycle_samples < MIN_CYCLE_SAMPLES:
        raise ValueError(f"n_cycle_samples must be at least {MIN_CYCLE_SAMPLES}")
    if a_m < 0:
        raise ValueError("modulation amplitude must not be negative")
    if t2 is None and getattr(signal_model, "gamma2", None):
        t2 = 1.0 / signal_model.gamma2
    if t2 is not None and omega_m * t2 > QUASI_STATIC_LIMIT:
        raise QuasiStaticViolation(f"omega_m*T2 = {omega_m * t2:.3g} exceeds {QUASI_STATIC_LIMIT}")

    omegas = np.asarray(omegas, dtype=float)
    if a_m == 0:
        return Spectrum(omegas, np.zeros_like(omegas), phi_lo, (a_m, omega_m))

    depth = CONSTANTS.gamma_e * a_m
    rotation = np.exp(-1j * phi_lo)
    if mode == "derivative":
        h = 1e-3 * depth
        upper = (rotation * signal_model(omegas, h)).real
        lower = (rotation * signal_model(omegas, -h)).real
        values = depth * (upper - lower) / (2 * h)
    else:
        theta = 2 * math.pi * np.arange(n_cycle_samples) / n_cycle_samples
        shifts = depth * np.cos(theta)
        s = (rotation * signal_model(omegas[:, None], shifts[None, :])).real
        values = (2.0 / n_cycle_samples) * (s @ np.cos(theta))
    return Spectrum(omegas, values, phi_lo, (a_m, omega_m))


def add_noise(spec: Spectrum, sigma: float, rng: np.random.Generator) -> Spectrum:
    """Additive white Gaussian noise."""
    if sigma <= 0:
        return spec
    return replace(spec, values=spec.values + rng.normal(0.0, sigma, len(spec)))


def _smoothed(values: np.ndarray) -> np.ndarray:
    window = min(11, len(values) if len(values) % 2 else len(values) - 1)
    if window < 5:
        return values
    return savgol_filter(values, window, 3)


def _zero_crossing(omegas, values, lo, hi) -> Optional[float]:
    for j in range(lo, hi):
        a, b = values[j], values[j + 1]
        if a == 0:
            return float(omegas[j])
        if a * b < 0:
            return float(omegas[j] - a * (omegas[j + 1] - omegas[j]) / (b - a))
    return None


def _check_fit_data(spec: Spectrum) -> None:
    if len(spec) < MIN_FIT_POINTS:
        raise DegenerateData(f"need at least {MIN_FIT_POINTS} points, got {len(spec)}")
    if np.ptp(spec.values) == 0:
        raise DegenerateData("spectrum is flat")


def initial_guesses(spec: Spectrum) -> Tuple[FitResult, FitResult]:
    """Absorptive (phi = 0) and dispersive (phi = pi/2) starting points."""
    _check_fit_data(spec)
    w, v = spec.omegas, spec.values
    edge = max(1, len(v) // 10)
    offset = float(np.median(np.concatenate([v[:edge], v[-edge:]])))
    smooth = _smoothed(v) - offset
    pp = float(np.ptp(smooth)) or float(np.ptp(v))
    i_max, i_min = int(np.argmax(smooth)), int(np.argmin(smooth))
    sep = abs(w[i_max] - w[i_min]) or (w[-1] - w[0]) / 10

    lo, hi = sorted((i_max, i_min))
    g_abs = math.sqrt(3.0) / 2.0 * sep
    w0_abs = _zero_crossing(w, smooth, lo, hi)
    if w0_abs is None:
        w0_abs = 0.5 * (w[i_max] + w[i_min])
    # absorptive derivative falls through zero; the positive lobe sits below w0 for k > 0
    k_abs = math.copysign(pp * g_abs ** 2 / PP_ABSORPTIVE, w[i_min] - w[i_max])

    i_peak = int(np.argmax(np.abs(smooth)))
    g_disp = sep / math.sqrt(3.0)
    k_disp = math.copysign(pp * g_disp ** 2 / PP_DISPERSIVE, smooth[i_peak])
    return (
        FitResult(w0_abs, g_abs, k_abs, 0.0, offset),
        FitResult(float(w[i_peak]), g_disp, k_disp, math.pi / 2, offset),
    )


def _wrap_phase(phi: float) -> float:
    wrapped = math.remainder(phi, 2 * math.pi)
    return math.pi if wrapped == -math.pi else wrapped


def _solve(spec: Spectrum, init: FitResult):
    w, v = spec.omegas, spec.values
    scale = abs(init.gamma2)
    vscale = float(np.ptp(v))
    w_ref = init.omega0
    u = (w - w_ref) / scale
    y = v / vscale
    x0 = np.array([0.0, 1.0, init.k / (scale * scale * vscale), init.phi, init.offset / vscale])

    def residuals(p):
        return _lineshape_signed(u, p[0], p[1], p[2], p[3], p[4]) - y

    res = least_squares(residuals, x0, method="lm", xtol=FIT_XTOL, ftol=FIT_XTOL, gtol=FIT_XTOL,
                        max_nfev=FIT_MAX_ITERATIONS * (len(x0) + 1))
    if res.status <= 0 or not np.all(np.isfinite(res.x)):
        raise NoConvergence(f"lineshape fit did not converge: {res.message}")
    return res, np.array([scale, scale, scale * scale * vscale, 1.0, vscale]), w_ref


def _covariance(res, n_points: int) -> Optional[np.ndarray]:
    dof = n_points - len(res.x)
    if dof <= 0:
        return None
    s2 = 2.0 * res.cost / dof
    return np.linalg.pinv(res.jac.T @ res.jac) * s2


def fitted_magnitude(omega0: float, gamma2: float, k: float, phi: float) -> float:
    """Peak-to-peak of the fitted curve over omega0 +- 5 gamma2."""
    grid = np.linspace(omega0 - MAGNITUDE_SPAN * gamma2, omega0 + MAGNITUDE_SPAN * gamma2, MAGNITUDE_POINTS)
    return float(np.ptp(lineshape(grid, omega0, gamma2, k, phi, 0.0)))


def fit_spectrum(spec: Spectrum, init: Optional[FitResult] = None) -> FitResult:
    """Least-squares fit of the derivative lineshape to a lock-in spectrum."""
    _check_fit_data(spec)
    trials = initial_guesses(spec) if init is None else (init,)

    best = None
    for guess in trials:
        try:
            solved = _solve(spec, guess)
        except NoConvergence:
            continue
        if best is None or solved[0].cost < best[0].cost:
            best = solved
    if best is None:
        raise NoConvergence("lineshape fit did not converge from any starting point")

    res, scales, w_ref = best
    p = res.x.copy()
    flip = np.ones(5)
    if p[1] < 0:
        p[1], p[3] = -p[1], math.pi - p[3]
        flip[1] = flip[3] = -1.0
    if p[2] < 0:
        p[2], p[3] = -p[2], p[3] + math.pi
        flip[2] = -flip[2]

    omega0 = w_ref + scales[0] * p[0]
    gamma2 = scales[1] * p[1]
    k = scales[2] * p[2]
    phi = _wrap_phase(p[3])
    offset = scales[4] * p[4]

    cov = _covariance(res, len(spec))
    if cov is not None:
        jac = np.diag(scales * flip)
        cov = jac @ cov @ jac

    fitted = lineshape(spec.omegas, omega0, gamma2, k, phi, offset)
    return FitResult(
        omega0=float(omega0),
        gamma2=float(gamma2),
        k=float(k),
        phi=float(phi),
        offset=float(offset),
        magnitude=fitted_magnitude(omega0, gamma2, k, phi),
        covariance=cov,
        residual_norm=float(np.linalg.norm(spec.values - fitted)),
    )


def linewidth_pp(fit: FitResult) -> float:
    """Numerical extrema separation of the absorptive component of ``fit``."""

    # searched in units of gamma2 around omega0 so the tolerance is not swamped by |omega|
    def curve(u):
        return lineshape(u, 0.0, 1.0, 1.0, 0.0, 0.0)

    upper = minimize_scalar(curve, bounds=(0.0, 2.0), method="bounded", options={"xatol": 1e-12})
    lower = minimize_scalar(lambda u: -curve(u), bounds=(-2.0, 0.0), method="bounded", options={"xatol": 1e-12})
    return float((upper.x - lower.x) * fit.gamma2)


def differential(on, off):
    """Beam-on minus beam-off; works on scalars and arrays."""
    return np.subtract(on, off)


def phase_align(d_i: float, d_q: float) -> float:
    if d_i == 0 and d_q == 0:
        raise BothZero("both quadrature offsets are zero")
    phi = math.atan2(d_i, d_q)
    return math.pi if phi == -math.pi else phi


def rotate_iq(i, q, phi: float):
    """Rotate (I, Q) by ``phi``; rotating by phase_align(dI, dQ) zeroes the I offset."""
    z = (np.asarray(i) + 1j * np.asarray(q)) * np.exp(1j * phi)
    return z.real, z.imag


def calibration_model(omega, cal: CalibrationModel):
    w = np.asarray(omega, dtype=float)
    return cal.k * np.cos(cal.a * w + cal.theta) / np.sqrt(((w - cal.omega0) / cal.s) ** 2 + 1.0)


def estimate_calibration_iq(omegas, i_vals, q_vals) -> CalibrationModel:
    """Starting parameters from an I/Q pair with Q = g(theta - pi/2)."""
    w = np.asarray(omegas, dtype=float)
    z = np.asarray(i_vals, dtype=float) + 1j * np.asarray(q_vals, dtype=float)
    env = np.abs(z)
    if len(w) < MIN_FIT_POINTS:
        raise DegenerateData(f"need at least {MIN_FIT_POINTS} points, got {len(w)}")
    if not np.any(env > 0):
        raise DegenerateData("calibration data is all zero")

    a, theta = np.polyfit(w, np.unwrap(np.angle(z)), 1, w=env)
    peak = int(np.argmax(env))
    k = float(env[peak])
    above = np.nonzero(env >= k / math.sqrt(2.0))[0]
    s = 0.5 * (w[above[-1]] - w[above[0]])
    if s <= 0:
        s = 0.5 * (w[-1] - w[0])
    return CalibrationModel(k=k, a=float(a), theta=float(theta), omega0=float(w[peak]), s=float(s))


def fit_calibration(omegas, values, init: CalibrationModel) -> CalibrationModel:
    """Fit ``calibration_model`` to one quadrature starting from ``init``."""
    w = np.asarray(omegas, dtype=float)
    v = np.asarray(values, dtype=float)
    if len(w) < MIN_FIT_POINTS:
        raise DegenerateData(f"need at least {MIN_FIT_POINTS} points, got {len(w)}")
    vscale = float(np.max(np.abs(v)))
    if vscale == 0:
        raise DegenerateData("calibration data is all zero")

    scale = init.s
    w_ref = init.omega0
    u = (w - w_ref) / scale
    y = v / vscale
    x0 = np.array([init.k / vscale, init.a * scale, init.theta + init.a * w_ref, 0.0, 1.0])

    def residuals(p):
        return p[0] * np.cos(p[1] * u + p[2]) / np.sqrt(((u - p[3]) / p[4]) ** 2 + 1.0) - y

    res = least_squares(residuals, x0, method="lm", xtol=FIT_XTOL, ftol=FIT_XTOL, gtol=FIT_XTOL,
                        max_nfev=FIT_MAX_ITERATIONS * (len(x0) + 1))
    if res.status <= 0 or not np.all(np.isfinite(res.x)):
        raise NoConvergence(f"calibration fit did not converge: {res.message}")

    k, a_s, phase, u0, s_u = res.x
    a = a_s / scale
    theta = phase - a * w_ref
    if k < 0:
        k, theta = -k, theta + math.pi
    return CalibrationModel(k=float(k * vscale), a=float(a), theta=float(theta),
                            omega0=float(w_ref + scale * u0), s=float(abs(s_u) * scale))


def compensate_phase(omegas, i_vals, q_vals, a: float):
    """Remove the linear phase a*w from an I/Q pair."""
    z = (np.asarray(i_vals) + 1j * np.asarray(q_vals)) * np.exp(-1j * a * np.asarray(omegas, dtype=float))
    return z.real, z.imag


def recover_beam_signal(s_esr: complex, u_emf: complex, params: RecoveryParams) -> complex:
    return s_esr * np.exp(1j * params.phase_offset) - params.alpha * u_emf


def infer_b1x(u_emf: complex, omega: float, coil: CoilSpec) -> complex:
    """Aperture-averaged B1x from the coil EMF, inverse of ``sample.coil_emf``."""
    if not (omega > 0 and coil.turns > 0 and coil.area > 0):
        raise ValueError("omega, turns and area must be positive")
    return u_emf / (1j * omega * coil.turns * coil.area)


def fit_report(fit: FitResult) -> Dict[str, str]:
    report = {
        "omega0": repr(fit.omega0),
        "gamma2": repr(fit.gamma2),
        "k": repr(fit.k),
        "phi": repr(fit.phi),
        "offset": repr(fit.offset),
        "magnitude": repr(fit.magnitude),
        "residual_norm": repr(fit.residual_norm),
        "t2": repr(fit.t2),
        "delta_omega_pp": repr(fit.delta_omega_pp),
    }
    cov = None if fit.covariance is None else [[float(x) for x in row] for row in fit.covariance]
    report["covariance"] = json.dumps(cov, separators=(",", ":"))
    return report


def fit_from_report(report: Dict[str, str]) -> FitResult:
    cov = json.loads(report.get("covariance") or "null")
    return FitResult(
        omega0=float(report["omega0"]),
        gamma2=float(report["gamma2"]),
        k=float(report["k"]),
        phi=float(report["phi"]),
        offset=float(report["offset"]),
        magnitude=float(report["magnitude"]),
        covariance=None if cov is None else np.array(cov, dtype=float),
        residual_norm=float(report["residual_norm"]),
    )


def calibration_report(cal: CalibrationModel, prefix: str = "") -> Dict[str, str]:
    return {f"{prefix}{name}": repr(float(getattr(cal, name))) for name in ("k", "a", "theta", "omega0", "s")}
