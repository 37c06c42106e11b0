import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sivsaw.errors import InconsistencyError, InvalidParameterError
from sivsaw.saw_device import (
    SINC_HALF, CalibrationPoint, IdtSpec, Impulse, RectEnvelope, SampledEnvelope, amplitude_fwhm,
    beam_profile, calibration_acoustic_power, derive_finger_pairs, focal_strain_amplitude, frequency_response,
    impulse_response, in_band, lateral_sigma, onchip_power_bounds, power_to_rabi,
    propagation_delay, pulse_response, s_parameters, strain_constant, sweep_s_parameters,
)

SPEC = IdtSpec()
CAL = CalibrationPoint()
F0 = SPEC.center_freq


def test_response_unity_at_center():
    assert abs(frequency_response(SPEC, F0)) == pytest.approx(1.0, abs=1e-15)


@pytest.mark.parametrize("sign", [-1, 1])
def test_first_nulls(sign):
    f = F0 * (1 + sign / SPEC.finger_pairs)
    assert abs(frequency_response(SPEC, f)) < 1e-12


def test_response_rejects_nonpositive_frequency():
    with pytest.raises(InvalidParameterError):
        frequency_response(SPEC, 0.0)


def test_derived_pairs_give_126mhz():
    n = derive_finger_pairs(SPEC, 126e6)
    assert n == 32
    fwhm = amplitude_fwhm(replace(SPEC, finger_pairs=n))
    assert fwhm == pytest.approx(126e6, rel=0.01)


def test_fwhm_constant():
    assert 2 * SINC_HALF == pytest.approx(2 * 1.8955 / math.pi, rel=1e-4)
    assert amplitude_fwhm(SPEC) == pytest.approx(2 * SINC_HALF * F0 / 32, rel=1e-9)


def test_single_pair():
    assert derive_finger_pairs(SPEC, F0 * 1.2067) == 1


def test_derive_rejects_nonpositive_target():
    with pytest.raises(InvalidParameterError):
        derive_finger_pairs(SPEC, 0.0)


@pytest.mark.parametrize("n", [8, 16, 32, 50])
def test_doubling_pairs_halves_fwhm(n):
    a = amplitude_fwhm(replace(SPEC, finger_pairs=n))
    b = amplitude_fwhm(replace(SPEC, finger_pairs=2 * n))
    assert b == pytest.approx(a / 2, rel=1e-9)
    assert abs(derive_finger_pairs(SPEC, a / 2) - 2 * n) <= 1


def test_magnitude_bounded():
    f = np.linspace(2.5e9, 4.5e9, 20001)
    mag = np.abs(frequency_response(SPEC, f))
    assert np.all(mag <= 1.0 + 1e-15)
    off = np.abs(f - F0) > 1.0
    assert np.all(mag[off] < 1.0)


def test_linear_phase():
    f = F0 + np.array([-20e6, 20e6])
    ph = np.angle(frequency_response(SPEC, f))
    group_delay = -(ph[1] - ph[0]) / (2 * math.pi * 40e6)
    assert group_delay == pytest.approx(SPEC.finger_pairs / (2 * F0), rel=1e-9)


def test_in_band():
    assert in_band(SPEC, 3.43e9)
    assert not in_band(SPEC, 10e9)


def test_impulse_response_duration():
    out = pulse_response(SPEC, Impulse(0.0))
    assert out.fwhm() == pytest.approx(32 / F0, rel=1e-3)
    assert out.fwhm() == pytest.approx(9.5e-9, rel=0.01)
    assert abs(out.fwhm() - 13e-9) <= 0.4 * 13e-9


def test_impulse_response_unit_area():
    assert impulse_response(SPEC).area() == pytest.approx(1.0, rel=1e-3)


def test_rect_input_fwhm_bounds():
    out = pulse_response(SPEC, RectEnvelope(0.0, 20e-9))
    assert 20e-9 - 1e-12 <= out.fwhm() <= 20e-9 + SPEC.impulse_duration


def test_rect_closed_form_matches_numeric():
    rect = RectEnvelope(0.0, 20e-9, 2.0)
    exact = pulse_response(SPEC, rect)

    class Shape(RectEnvelope):
        pass  # defeats the closed-form branch

    numeric = pulse_response(SPEC, Shape(0.0, 20e-9, 2.0), dt=SPEC.impulse_duration / 400)
    t = np.linspace(1e-9, 28e-9, 50)
    np.testing.assert_allclose(numeric.sample(t), exact.sample(t), atol=2 * 2.0 / 400)


def test_long_pulse_plateau():
    out = pulse_response(SPEC, RectEnvelope(0.0, 1e-6, 0.7))
    assert out(0.5e-6) == pytest.approx(0.7, rel=1e-12)


def test_youngs_bound():
    rng = np.random.default_rng(4)
    for _ in range(5):
        t = np.linspace(0, 40e-9, 81)
        env = SampledEnvelope(tuple(t), tuple(rng.uniform(0, 1, t.size)))
        out = pulse_response(SPEC, env)

        def energy(e):
            a, b = e.support
            x = np.linspace(a, b, 40001)
            return np.trapezoid(e.sample(x) ** 2, x)

        # ||f * h||_2 <= ||f||_2 ||h||_1 with the unit-area impulse response
        assert energy(out) <= energy(env) * impulse_response(SPEC).area() ** 2 * (1 + 1e-3)


def test_s_parameters_at_center():
    s11, s21 = s_parameters(SPEC, F0)
    assert s21 == -31.0
    assert s11 == pytest.approx(-0.4, abs=1e-12)


def test_s21_null_clamped():
    _, s21 = s_parameters(SPEC, F0 * (1 + 1 / 32))
    assert s21 == -120.0


def test_s_parameter_sweep_shapes():
    f, s11, s21 = sweep_s_parameters(SPEC, np.linspace(3.2e9, 3.6e9, 11))
    assert f.shape == s11.shape == s21.shape == (11,)
    assert np.all(s21 <= -31.0) and np.all(s11 <= -0.1 + 1e-12)


def test_power_bounds_example():
    lo, hi = onchip_power_bounds(4e-3, -0.4, -31.0)
    assert lo == pytest.approx(3.1773e-6, rel=1e-4)
    assert hi == pytest.approx(352.2e-6, rel=1e-3)
    assert 3e-6 <= lo <= 3.2e-6 and 350e-6 <= hi <= 355e-6


def test_power_bounds_edge_cases():
    assert onchip_power_bounds(4e-3, 0.0, -math.inf) == (0.0, 0.0)
    lo, hi = onchip_power_bounds(4e-3, -math.inf, 0.0)
    assert lo == hi == 4e-3
    with pytest.raises(InconsistencyError):
        onchip_power_bounds(4e-3, 0.0, -31.0)
    # s21 <= s11 <= 0 alone does not keep the bracket ordered
    with pytest.raises(InconsistencyError):
        onchip_power_bounds(1.0, -0.1, -0.2)
    with pytest.raises(InvalidParameterError):
        onchip_power_bounds(0.0, -1.0, -2.0)


@settings(max_examples=200, deadline=None)
@given(st.floats(1e-6, 1.0), st.floats(-60.0, 0.0), st.floats(-60.0, 0.0))
def test_power_bounds_ordered_for_passive_ports(p, s11, s21):
    passive = 10 ** (s11 / 10) + 10 ** (s21 / 10) <= 1.0
    if passive:
        lo, hi = onchip_power_bounds(p, s11, s21)
        assert 0 <= lo <= hi <= p
    else:
        with pytest.raises(InconsistencyError):
            onchip_power_bounds(p, s11, s21)


def test_power_to_rabi_examples():
    assert power_to_rabi(4e-3, CAL.at_freq, SPEC, CAL) == pytest.approx(48e6, rel=1e-12)
    assert power_to_rabi(1e-3, CAL.at_freq, SPEC, CAL) == pytest.approx(24e6, rel=1e-12)
    assert power_to_rabi(0.0, CAL.at_freq, SPEC, CAL) == 0.0
    with pytest.raises(InvalidParameterError):
        power_to_rabi(-1e-3, CAL.at_freq, SPEC, CAL)


def test_power_to_rabi_linear_in_sqrt_power():
    p = np.linspace(0.2e-3, 5e-3, 10)
    x = np.sqrt(p)
    y = np.array([power_to_rabi(v, 3.40e9, SPEC, CAL) for v in p])
    slope, icpt = np.polyfit(x, y, 1)
    resid = y - (slope * x + icpt)
    assert np.max(np.abs(resid)) / np.max(y) < 1e-12


def test_power_to_rabi_follows_passband():
    on = power_to_rabi(4e-3, F0, SPEC, CAL)
    off = power_to_rabi(4e-3, F0 + 60e6, SPEC, CAL)
    assert off < on


def test_strain_profile():
    k = 2.0
    surface = focal_strain_amplitude(1e-4, SPEC, 0.0, 0.0, k)
    assert surface == pytest.approx(k * 1e-2)
    deep = focal_strain_amplitude(1e-4, SPEC, 3e-6, 0.0, k)
    assert surface / deep == pytest.approx(math.e)
    side = focal_strain_amplitude(1e-4, SPEC, 0.0, 1.5e-6, k)
    assert (side / surface) ** 2 == pytest.approx(0.5, rel=1e-12)
    assert lateral_sigma(SPEC) == pytest.approx(3e-6 / 2.3548, rel=1e-4)
    with pytest.raises(InvalidParameterError):
        beam_profile(SPEC, -1e-9, 0.0)


def test_strain_constant_closes_the_chain():
    rate, depth = 1.085e14, 100e-9
    k = strain_constant(CAL, SPEC, rate, depth)
    strain = focal_strain_amplitude(calibration_acoustic_power(CAL, SPEC), SPEC, depth, 0.0, k)
    assert strain * rate == pytest.approx(CAL.rabi_freq, rel=1e-12)
    with pytest.raises(InvalidParameterError):
        strain_constant(CAL, SPEC, 0.0, depth)


def test_propagation_delay():
    assert propagation_delay(300e-6, SPEC) == pytest.approx(29.67e-9, abs=0.01e-9)
    assert propagation_delay(0.0, SPEC) == 0.0
    assert propagation_delay(600e-6, SPEC) == pytest.approx(2 * propagation_delay(300e-6, SPEC))
    with pytest.raises(InvalidParameterError):
        propagation_delay(-1.0, SPEC)


def test_spec_validation():
    with pytest.raises(InvalidParameterError):
        IdtSpec(finger_pairs=0)
    with pytest.raises(InvalidParameterError):
        IdtSpec(transmission_s21_db=1.0)
    with pytest.raises(InvalidParameterError):
        CalibrationPoint(input_power=0.0)
    assert SPEC.saw_velocity == pytest.approx(1.011e4)
