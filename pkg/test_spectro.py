import math
import unittest

import numpy as np
import numpy.testing as npt

from ebeam_esr import nearfield as nf
from ebeam_esr import spectro as sp
from ebeam_esr.errors import BothZero, DegenerateData, NumericalError, QuasiStaticViolation, ValidationError

OMEGA0 = 2 * math.pi * 347.4e6
GAMMA2 = math.sqrt(3) / 2 * 2 * math.pi * 2.1e6
GAMMA_E = nf.CONSTANTS.gamma_e
OMEGA_M = 2 * math.pi * 1280


def sweep(gamma2=GAMMA2, n=201, span=8.0):
    return np.linspace(OMEGA0 - span * gamma2, OMEGA0 + span * gamma2, n)


def synthetic(k=None, phi=0.3, offset=2e-8, gamma2=GAMMA2, n=201):
    k = 1e-6 * gamma2 ** 2 if k is None else k
    w = sweep(gamma2, n)
    return sp.Spectrum(w, sp.lineshape(w, OMEGA0, gamma2, k, phi, offset))


class TestLineshape(unittest.TestCase):
    def test_centre_value_is_offset(self):
        self.assertEqual(sp.lineshape(OMEGA0, OMEGA0, GAMMA2, 1e8, 0.0, 3e-7), 3e-7)

    def test_extrema_positions(self):
        g = GAMMA2
        w = np.linspace(OMEGA0 - 2 * g, OMEGA0 + 2 * g, 400001)
        v = sp.lineshape(w, OMEGA0, g, 1.0, 0.0, 0.0)
        separation = w[np.argmin(v)] - w[np.argmax(v)]
        self.assertAlmostEqual(separation / (2 * g / math.sqrt(3)), 1.0, delta=1e-4)

    def test_matches_finite_difference(self):
        g, k, phi = GAMMA2, 2.5e7, 0.7

        def undifferentiated(w):
            d = w - OMEGA0
            return k * (g * math.cos(phi) + d * math.sin(phi)) / (g * g + d * d)

        h = 1e-4 * g
        for w in OMEGA0 + g * np.array([-3.1, -0.8, -0.2, 0.9, 1.3, 2.2]):
            fd = (undifferentiated(w + h) - undifferentiated(w - h)) / (2 * h)
            exact = sp.lineshape(w, OMEGA0, g, k, phi, 0.0)
            self.assertAlmostEqual(exact / fd, 1.0, delta=1e-6)

    def test_quadrature_decomposition(self):
        w = sweep()
        for phi in (0.4, 2.2, -1.3):
            mixed = sp.lineshape(w, OMEGA0, GAMMA2, 1.0, phi, 0.0)
            parts = (math.cos(phi) * sp.lineshape(w, OMEGA0, GAMMA2, 1.0, 0.0, 0.0)
                     + math.sin(phi) * sp.lineshape(w, OMEGA0, GAMMA2, 1.0, math.pi / 2, 0.0))
            npt.assert_allclose(mixed, parts, rtol=0, atol=1e-14 / GAMMA2 ** 2)

    def test_rejects_bad_width(self):
        with self.assertRaises(ValueError):
            sp.lineshape(OMEGA0, OMEGA0, 0.0, 1.0, 0.0, 0.0)

    def test_phasor_matches_lineshape_phase(self):
        phi = 0.9
        model = sp.lorentzian_phasor(OMEGA0, GAMMA2, np.exp(1j * phi))
        w = sweep()
        d = w - OMEGA0
        expected = GAMMA2 * (GAMMA2 * math.cos(phi) + d * math.sin(phi)) / (GAMMA2 ** 2 + d ** 2)
        npt.assert_allclose(model(w).real, expected, atol=1e-12)


class TestLockin(unittest.TestCase):
    def test_zero_modulation(self):
        model = sp.lorentzian_phasor(OMEGA0, GAMMA2)
        spec = sp.synthesize_lockin(model, sweep(), 0.0, OMEGA_M)
        self.assertTrue(np.all(spec.values == 0))

    def test_small_modulation_gives_derivative(self):
        model = sp.lorentzian_phasor(OMEGA0, GAMMA2)
        depth = 0.05 * GAMMA2
        w = sweep(n=161, span=4.0)
        spec = sp.synthesize_lockin(model, w, depth / GAMMA_E, OMEGA_M)
        # shifting the resonance up moves the curve right: output is -depth * d/dw
        expected = -depth * GAMMA2 * sp.lineshape(w, OMEGA0, GAMMA2, 1.0, 0.0, 0.0)
        scale = float(np.max(np.abs(expected)))
        self.assertLess(float(np.max(np.abs(spec.values - expected))), 0.01 * scale)

    def test_derivative_mode_agrees_for_small_modulation(self):
        model = sp.lorentzian_phasor(OMEGA0, GAMMA2, 1 - 0.5j)
        w = sweep(n=81, span=4.0)
        a_m = 0.02 * GAMMA2 / GAMMA_E
        exact = sp.synthesize_lockin(model, w, a_m, OMEGA_M).values
        approx = sp.synthesize_lockin(model, w, a_m, OMEGA_M, mode="derivative").values
        self.assertLess(float(np.max(np.abs(exact - approx))), 1e-3 * float(np.max(np.abs(exact))))

    def test_attenuation_at_working_modulation(self):
        for pp_hz in (1.25e6, 1.5e6):
            g = math.sqrt(3) / 2 * 2 * math.pi * pp_hz
            model = sp.lorentzian_phasor(OMEGA0, g)
            spec = sp.synthesize_lockin(model, sweep(g, 401, 6.0), 18e-6, OMEGA_M)
            ratio = float(np.max(np.abs(spec.values)))
            self.assertTrue(0.15 <= ratio <= 0.35, (pp_hz, ratio))

    def test_linear_in_signal(self):
        w = sweep(n=41)
        one = sp.synthesize_lockin(sp.lorentzian_phasor(OMEGA0, GAMMA2, 1.0), w, 18e-6, OMEGA_M).values
        three = sp.synthesize_lockin(sp.lorentzian_phasor(OMEGA0, GAMMA2, 3.0), w, 18e-6, OMEGA_M).values
        npt.assert_allclose(three, 3 * one, rtol=1e-12, atol=1e-15)

        other = sp.lorentzian_phasor(OMEGA0 + GAMMA2, GAMMA2, 0.5j)
        t2 = 1 / GAMMA2
        combined = sp.synthesize_lockin(lambda om, s=0.0: model_sum(om, s, other), w, 18e-6, OMEGA_M, t2=t2).values
        separate = (one + sp.synthesize_lockin(other, w, 18e-6, OMEGA_M).values)
        npt.assert_allclose(combined, separate, rtol=1e-12, atol=1e-15)

    def test_phase_reference(self):
        w = sweep(n=41)
        model = sp.lorentzian_phasor(OMEGA0, GAMMA2, 1j)
        rotated = sp.synthesize_lockin(model, w, 18e-6, OMEGA_M, phi_lo=math.pi / 2).values
        plain = sp.synthesize_lockin(sp.lorentzian_phasor(OMEGA0, GAMMA2), w, 18e-6, OMEGA_M).values
        npt.assert_allclose(rotated, plain, atol=1e-12)

    def test_quasi_static_violation(self):
        model = sp.lorentzian_phasor(OMEGA0, GAMMA2)
        with self.assertRaises(QuasiStaticViolation):
            sp.synthesize_lockin(model, sweep(), 18e-6, 2 * math.pi * 1e6)

    def test_cycle_sample_guard(self):
        with self.assertRaises(ValueError):
            sp.synthesize_lockin(sp.lorentzian_phasor(OMEGA0, GAMMA2), sweep(), 18e-6, OMEGA_M, n_cycle_samples=32)


def model_sum(omega, shift, other):
    return sp.lorentzian_phasor(OMEGA0, GAMMA2, 1.0)(omega, shift) + other(omega, shift)


class TestFit(unittest.TestCase):
    def test_noiseless_roundtrip(self):
        k = 1e-6 * GAMMA2 ** 2
        fit = sp.fit_spectrum(synthetic(k=k))
        for got, want in zip(fit.params, (OMEGA0, GAMMA2, k, 0.3, 2e-8)):
            self.assertAlmostEqual(got / want, 1.0, delta=1e-6)
        self.assertLess(fit.residual_norm, 1e-12)

    def test_linewidth_to_t2(self):
        self.assertAlmostEqual(sp.FitResult.from_linewidth(OMEGA0, 2 * math.pi * 2.1e6, 1.0).t2, 87e-9, delta=1e-9)
        self.assertAlmostEqual(sp.FitResult.from_linewidth(OMEGA0, 2 * math.pi * 1.25e6, 1.0).t2, 147e-9, delta=5e-9)

    def test_fitted_t2_of_narrow_line(self):
        g = math.sqrt(3) / 2 * 2 * math.pi * 1.25e6
        fit = sp.fit_spectrum(synthetic(gamma2=g, phi=0.0, offset=0.0))
        self.assertAlmostEqual(fit.t2 / 147e-9, 1.0, delta=0.05)

    def test_noisy_centre_recovery(self):
        rng = np.random.default_rng(2024)
        clean = synthetic()
        sigma = 0.1 * float(np.max(np.abs(clean.values - 2e-8)))
        hits = 0
        for _ in range(100):
            try:
                fit = sp.fit_spectrum(sp.add_noise(clean, sigma, rng))
            except NumericalError:
                continue
            if abs(fit.omega0 - OMEGA0) < 0.1 * GAMMA2:
                hits += 1
        self.assertGreaterEqual(hits, 95)

    def test_degenerate_data(self):
        w = sweep()
        with self.assertRaises(DegenerateData):
            sp.fit_spectrum(sp.Spectrum(w, np.full_like(w, 1e-7)))
        with self.assertRaises(DegenerateData):
            sp.fit_spectrum(synthetic(n=5))

    def test_idempotence(self):
        spec = synthetic(phi=-1.1)
        first = sp.fit_spectrum(spec)
        second = sp.fit_spectrum(sp.Spectrum(spec.omegas, first.curve(spec.omegas)), init=first)
        npt.assert_allclose(second.params[:4], first.params[:4], rtol=1e-8)
        self.assertAlmostEqual(second.offset, first.offset, delta=1e-8 * first.magnitude)

    def test_absorptive_and_dispersive_phase(self):
        absorptive = sp.fit_spectrum(synthetic(phi=0.0))
        self.assertLess(abs(math.remainder(absorptive.phi, math.pi)), 1e-3)
        dispersive = sp.fit_spectrum(synthetic(phi=math.pi / 2))
        self.assertLess(abs(math.remainder(dispersive.phi - math.pi / 2, math.pi)), 1e-3)

    def test_negative_amplitude_is_normalized(self):
        k = 1e-6 * GAMMA2 ** 2
        fit = sp.fit_spectrum(synthetic(k=-k, phi=0.3))
        self.assertGreater(fit.k, 0)
        self.assertAlmostEqual(fit.k / k, 1.0, delta=1e-6)
        self.assertAlmostEqual(math.remainder(fit.phi - 0.3 - math.pi, 2 * math.pi), 0.0, delta=1e-6)

    def test_covariance_shape(self):
        fit = sp.fit_spectrum(sp.add_noise(synthetic(), 1e-8, np.random.default_rng(7)))
        self.assertEqual(fit.covariance.shape, (5, 5))
        self.assertTrue(np.all(np.diag(fit.covariance) >= 0))

    def test_magnitude(self):
        k = 1e-6 * GAMMA2 ** 2
        self.assertAlmostEqual(sp.fitted_magnitude(OMEGA0, GAMMA2, k, 0.0) / (sp.PP_ABSORPTIVE * 1e-6), 1.0, delta=1e-4)
        self.assertAlmostEqual(sp.fitted_magnitude(OMEGA0, GAMMA2, k, math.pi / 2) / (sp.PP_DISPERSIVE * 1e-6), 1.0,
                               delta=1e-4)
        fit = sp.fit_spectrum(synthetic(k=k, phi=0.0, offset=0.0))
        self.assertAlmostEqual(fit.magnitude / (sp.PP_ABSORPTIVE * 1e-6), 1.0, delta=1e-4)

    def test_width_convention(self):
        fit = sp.fit_spectrum(synthetic())
        measured = sp.linewidth_pp(fit)
        self.assertAlmostEqual(fit.gamma2 / (math.sqrt(3) / 2 * measured), 1.0, delta=1e-6)
        self.assertAlmostEqual(fit.delta_omega_pp / measured, 1.0, delta=1e-6)


class TestDifferentialAndPhase(unittest.TestCase):
    def test_differential(self):
        on = np.array([1 + 2j, -0.5j, 3.0])
        self.assertTrue(np.all(sp.differential(on, on) == 0))
        npt.assert_array_equal(sp.differential(on, 0), on)
        off = np.array([0.25 - 1j, 2j, -1.5])
        npt.assert_array_equal(sp.differential(on, off), on - off)
        self.assertEqual(sp.differential(2 + 1j, 1j), 2 + 0j)

    def test_phase_align_examples(self):
        self.assertEqual(sp.phase_align(0.0, 1e-6), 0.0)
        self.assertAlmostEqual(sp.phase_align(1e-6, 1e-6), math.pi / 4)
        with self.assertRaises(BothZero):
            sp.phase_align(0.0, 0.0)

    def test_rotation_zeroes_in_phase_offset(self):
        rng = np.random.default_rng(11)
        for d_i, d_q in rng.normal(size=(20, 2)):
            phi = sp.phase_align(d_i, d_q)
            self.assertTrue(-math.pi < phi <= math.pi)
            i, q = sp.rotate_iq(d_i, d_q, phi)
            self.assertLess(abs(float(i)), 1e-12 * math.hypot(d_i, d_q))
            self.assertAlmostEqual(float(q), math.hypot(d_i, d_q))


class TestCalibration(unittest.TestCase):
    true = sp.CalibrationModel(k=2e-3, a=2e-8, theta=0.4 - 2e-8 * 2 * math.pi * 348e6,
                               omega0=2 * math.pi * 348e6, s=2 * math.pi * 5e6)

    def grid(self):
        return np.linspace(self.true.omega0 - 3 * self.true.s, self.true.omega0 + 3 * self.true.s, 301)

    def test_model_examples(self):
        cal = sp.CalibrationModel(k=1.5, a=3e-8, theta=-3e-8 * 1e9, omega0=1e9, s=1e6)
        self.assertAlmostEqual(float(sp.calibration_model(1e9, cal)), 1.5)
        envelope = sp.calibration_model([1e9 - 1e6, 1e9 + 1e6], sp.CalibrationModel(1.0, 0.0, 0.0, 1e9, 1e6))
        npt.assert_allclose(envelope, 1 / math.sqrt(2), rtol=1e-12)

    def test_invalid_width(self):
        with self.assertRaises(ValidationError) as ctx:
            sp.CalibrationModel(1.0, 0.0, 0.0, 1e9, 0.0)
        self.assertEqual(ctx.exception.field, "calibration.s")

    def test_roundtrip_fit(self):
        w = self.grid()
        i_vals = sp.calibration_model(w, self.true)
        q_vals = sp.calibration_model(w, sp.CalibrationModel(self.true.k, self.true.a, self.true.theta - math.pi / 2,
                                                             self.true.omega0, self.true.s))
        init = sp.estimate_calibration_iq(w, i_vals, q_vals)
        fitted = sp.fit_calibration(w, i_vals, init)
        for name in ("k", "a", "omega0", "s"):
            self.assertAlmostEqual(getattr(fitted, name) / getattr(self.true, name), 1.0, delta=1e-4, msg=name)
        self.assertAlmostEqual(math.remainder(fitted.theta - self.true.theta, 2 * math.pi), 0.0, delta=1e-4)

        i_c, q_c = sp.compensate_phase(w, i_vals, q_vals, fitted.a)
        phase = np.angle(np.asarray(i_c) + 1j * np.asarray(q_c))
        self.assertLess(float(np.ptp(np.unwrap(phase))), 1e-3)

    def test_all_zero_data(self):
        w = self.grid()
        with self.assertRaises(DegenerateData):
            sp.estimate_calibration_iq(w, np.zeros_like(w), np.zeros_like(w))
        with self.assertRaises(DegenerateData):
            sp.fit_calibration(w, np.zeros_like(w), self.true)


class TestRecovery(unittest.TestCase):
    def test_no_emf_leaves_signal(self):
        params = sp.RecoveryParams.from_alpha(0.3 + 2j, 2e-3, 1.25)
        self.assertEqual(sp.recover_beam_signal(1e-9 + 2e-9j, 0j, params), 1e-9 + 2e-9j)

    def test_subtracts_scaled_emf(self):
        params = sp.RecoveryParams.from_alpha(0.5j, 2e-3, 1.25, phase_offset=math.pi / 2)
        got = sp.recover_beam_signal(1.0 + 0j, 2.0 + 0j, params)
        self.assertAlmostEqual(abs(got - (1j - 1j)), 0.0, delta=1e-15)

    def test_alpha_is_indirect_signal_per_volt(self):
        with self.assertRaises(ValueError):
            sp.RecoveryParams(alpha=1.0, r_signal=4.0, bu_avg=2e-3, rc=1.25)
        params = sp.RecoveryParams(alpha=3.2e-3, r_signal=4.0, bu_avg=2e-3, rc=1.25)
        self.assertAlmostEqual(abs(params.alpha), 3.2e-3)

    def test_infer_b1x(self):
        coil = nf.default_coil()
        omega = 2 * math.pi * 348e6
        self.assertEqual(sp.infer_b1x(0j, omega, coil), 0j)
        self.assertAlmostEqual(abs(sp.infer_b1x(2.2e-7j, omega, coil)), 50e-12, delta=1e-12)
        with self.assertRaises(ValueError):
            sp.infer_b1x(1e-7, 0.0, coil)


class TestReports(unittest.TestCase):
    def test_fit_report_roundtrip(self):
        fit = sp.fit_spectrum(sp.add_noise(synthetic(), 1e-8, np.random.default_rng(3)))
        back = sp.fit_from_report(sp.fit_report(fit))
        self.assertEqual(back, fit)
        npt.assert_array_equal(back.covariance, fit.covariance)

    def test_calibration_report_keys(self):
        report = sp.calibration_report(TestCalibration.true, prefix="i_")
        self.assertEqual(sorted(report), ["i_a", "i_k", "i_omega0", "i_s", "i_theta"])
        self.assertEqual(float(report["i_k"]), 2e-3)


if __name__ == "__main__":
    unittest.main()
