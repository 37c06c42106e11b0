"""Interdigital transducer pair and the focused SAW beam it launches.

The transducer is an ideal array of ``finger_pairs`` periods: its amplitude
response is a sinc in frequency and its impulse response a rectangle lasting
``finger_pairs / center_freq``.  The strain at the defect is not computed
from first principles; it is anchored to one measured Rabi frequency
(:class:`CalibrationPoint`) and scales as the square root of power.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import brentq

from .errors import InconsistencyError, InvalidParameterError

#: Root of ``sinc(x) = 1/2`` for the normalised sinc; amplitude FWHM is
#: ``2 * SINC_HALF * f0 / N``.
SINC_HALF = brentq(lambda x: np.sinc(x) - 0.5, 0.1, 0.9, xtol=1e-15)
S_PARAM_FLOOR_DB = -120.0


@dataclass(frozen=True)
class IdtSpec:
    center_freq: float = 3.37e9
    saw_wavelength: float = 3e-6
    finger_pairs: int = 32
    aperture: float = 30e-6
    focal_length: float = 100e-6
    insertion_s11_db: float = -0.4
    transmission_s21_db: float = -31.0
    s11_background_db: float = -0.1

    def __post_init__(self):
        if self.center_freq <= 0 or self.saw_wavelength <= 0:
            raise InvalidParameterError("center_freq and saw_wavelength must be positive")
        if int(self.finger_pairs) != self.finger_pairs or self.finger_pairs < 1:
            raise InvalidParameterError("finger_pairs must be a positive integer")
        object.__setattr__(self, "finger_pairs", int(self.finger_pairs))
        if self.insertion_s11_db > 0 or self.transmission_s21_db > 0 or self.s11_background_db > 0:
            raise InvalidParameterError("S-parameter magnitudes must be <= 0 dB")

    @property
    def saw_velocity(self):
        return self.center_freq * self.saw_wavelength

    @property
    def impulse_duration(self):
        return self.finger_pairs / self.center_freq


@dataclass(frozen=True)
class CalibrationPoint:
    input_power: float = 4e-3
    rabi_freq: float = 48e6
    at_freq: float = 3.43e9

    def __post_init__(self):
        if self.input_power <= 0:
            raise InvalidParameterError("calibration input_power must be positive")
        if self.rabi_freq < 0:
            raise InvalidParameterError("calibration rabi_freq must be non-negative")


def frequency_response(spec, f):
    """Complex amplitude response, 1 at the centre frequency.

    Magnitude ``|sinc(N (f - f0) / f0)|``; the phase is the linear phase of
    the transducer's group delay ``N / (2 f0)``, referenced to ``f0``.
    """
    f = np.asarray(f, dtype=float)
    if np.any(f <= 0):
        raise InvalidParameterError("frequency must be positive")
    x = spec.finger_pairs * (f - spec.center_freq) / spec.center_freq
    out = np.sinc(x) * np.exp(-1j * np.pi * x)
    return out if out.ndim else complex(out)


def amplitude_fwhm(spec):
    """Numerical full width at half maximum of ``|frequency_response|``."""
    f0 = spec.center_freq
    null = f0 / spec.finger_pairs
    # |sinc| is even about f0, so the width is twice the upper half-maximum offset
    half = brentq(lambda df: abs(frequency_response(spec, f0 + df)) - 0.5,
                  0.3 * null, 0.99 * null, xtol=1e-9, rtol=1e-14)
    return 2.0 * half


def derive_finger_pairs(spec, target_fwhm, n_max=200):
    """Integer finger-pair count whose amplitude FWHM is closest to ``target_fwhm``."""
    # a single pair is wider than f0 itself, so only positivity is required
    if not target_fwhm > 0:
        raise InvalidParameterError("target_fwhm must be positive")
    best, best_err = 1, math.inf
    for n in range(1, n_max + 1):
        err = abs(amplitude_fwhm(replace(spec, finger_pairs=n)) - target_fwhm)
        if err < best_err:
            best, best_err = n, err
    return best


def in_band(spec, f, widths=3.0):
    """True if ``f`` lies within ``widths`` amplitude bandwidths of the centre."""
    return abs(f - spec.center_freq) <= widths * amplitude_fwhm(spec)


# --- time-domain envelopes -------------------------------------------------

class Envelope:
    """Real pulse envelope with bounded support.

    ``breakpoints`` lists the kinks; the integrator steps across them exactly.
    """

    support = (0.0, 0.0)
    breakpoints = ()

    def __call__(self, t):
        raise NotImplementedError

    def sample(self, t):
        return np.array([self(x) for x in np.atleast_1d(t)])

    def fwhm(self, n=20001):
        a, b = self.support
        if b <= a:
            return 0.0
        t = np.linspace(a, b, n)
        y = self.sample(t)
        peak = y.max()
        if peak <= 0:
            return 0.0
        above = np.nonzero(y >= 0.5 * peak)[0]
        i0, i1 = above[0], above[-1]

        def cross(i, j):
            # linear interpolation of the half-maximum crossing between samples i and j
            if y[j] == y[i]:
                return t[i]
            return t[i] + (0.5 * peak - y[i]) * (t[j] - t[i]) / (y[j] - y[i])

        left = t[i0] if i0 == 0 else cross(i0 - 1, i0)
        right = t[i1] if i1 == n - 1 else cross(i1, i1 + 1)
        return right - left

    def area(self, n=20001):
        a, b = self.support
        if b <= a:
            return 0.0
        t = np.linspace(a, b, n)
        return float(np.trapezoid(self.sample(t), t))

    def scaled(self, factor):
        return ScaledEnvelope(self, factor)


@dataclass(frozen=True)
class Impulse(Envelope):
    """Dirac pulse of the given area at ``t0``; only meaningful as a convolution input."""

    t0: float = 0.0
    area_: float = 1.0

    @property
    def support(self):
        return (self.t0, self.t0)

    def __call__(self, t):
        return 0.0


@dataclass(frozen=True)
class RectEnvelope(Envelope):
    start: float
    duration: float
    amplitude: float = 1.0

    @property
    def support(self):
        return (self.start, self.start + self.duration)

    @property
    def breakpoints(self):
        return self.support

    def __call__(self, t):
        return self.amplitude if self.start <= t < self.start + self.duration else 0.0


@dataclass(frozen=True)
class TrapezoidEnvelope(Envelope):
    """Exact convolution of a rectangle (``duration``, ``amplitude``) with a
    unit-area rectangle of width ``width``."""

    start: float
    duration: float
    width: float
    amplitude: float = 1.0

    @property
    def support(self):
        return (self.start, self.start + self.duration + self.width)

    @property
    def breakpoints(self):
        short, long_ = sorted((self.duration, self.width))
        return (self.start, self.start + short, self.start + long_, self.start + self.duration + self.width)

    def __call__(self, t):
        s = t - self.start
        overlap = min(s, self.duration) - max(s - self.width, 0.0)
        if overlap <= 0.0:
            return 0.0
        return self.amplitude * overlap / self.width


@dataclass(frozen=True)
class SampledEnvelope(Envelope):
    times: tuple
    values: tuple

    @property
    def support(self):
        return (self.times[0], self.times[-1])

    def __call__(self, t):
        if t < self.times[0] or t > self.times[-1]:
            return 0.0
        return float(np.interp(t, self.times, self.values))


@dataclass(frozen=True)
class ScaledEnvelope(Envelope):
    base: Envelope
    factor: float

    @property
    def support(self):
        return self.base.support

    @property
    def breakpoints(self):
        return self.base.breakpoints

    def __call__(self, t):
        return self.factor * self.base(t)


def impulse_response(spec):
    """Unit-area rectangular impulse response of the transducer."""
    tau = spec.impulse_duration
    return RectEnvelope(0.0, tau, 1.0 / tau)


def pulse_response(spec, input_envelope, dt=None):
    """Acoustic envelope launched by ``input_envelope``.

    The input is convolved with the unit-area rectangular impulse response,
    so a long input reaches a plateau equal to its own amplitude.  Rectangles
    and impulses are handled in closed form, other shapes numerically on a
    grid of step ``dt``.  The output's ``fwhm()`` gives its duration.
    """
    tau = spec.impulse_duration
    if isinstance(input_envelope, Impulse):
        return RectEnvelope(input_envelope.t0, tau, input_envelope.area_ / tau)
    if isinstance(input_envelope, RectEnvelope):
        return TrapezoidEnvelope(input_envelope.start, input_envelope.duration, tau,
                                 input_envelope.amplitude)
    a, b = input_envelope.support
    if not (math.isfinite(a) and math.isfinite(b)):
        raise InvalidParameterError("input envelope must have bounded support")
    dt = dt or tau / 200.0
    t_in = np.arange(a, b + dt / 2, dt)
    x = input_envelope.sample(t_in)
    kernel = np.full(max(int(round(tau / dt)), 1), 1.0 / tau)
    y = np.convolve(x, kernel) * dt
    t_out = a + dt * np.arange(y.size)
    return SampledEnvelope(tuple(t_out), tuple(y))


# --- electrical ports -------------------------------------------------------

def _db(power_ratio):
    with np.errstate(divide="ignore"):
        return np.maximum(10.0 * np.log10(power_ratio), S_PARAM_FLOOR_DB)


def s_parameters(spec, f):
    """``(|S11|^2, |S21|^2)`` in dB at frequency ``f``.

    Transmission passes two transducers, so it follows ``|H|^4`` scaled to
    the configured value at the centre.  Reflection sits on a flat background
    and dips to the configured insertion value at the centre, weighted by
    ``|H|^2``.  Values are clamped at -120 dB.
    """
    h2 = np.abs(frequency_response(spec, f)) ** 2
    s21 = spec.transmission_s21_db + 20.0 * np.log10(np.maximum(h2, 1e-300))
    s21 = np.maximum(s21, S_PARAM_FLOOR_DB)
    s11 = spec.s11_background_db + (spec.insertion_s11_db - spec.s11_background_db) * h2
    if np.ndim(f) == 0:
        return float(s11), float(s21)
    return s11, s21


def onchip_power_bounds(p_in, s11_db, s21_db):
    """Bracket on the acoustic power launched on chip.

    The upper bound is everything not reflected at the input port; the
    lower bound is the power that actually reaches the receiving transducer.
    """
    if p_in <= 0:
        raise InvalidParameterError("input power must be positive")
    if s11_db > 0 or s21_db > 0:
        raise InvalidParameterError("S-parameters must be <= 0 dB")
    upper = p_in * (1.0 - 10.0 ** (s11_db / 10.0))
    lower = p_in * 10.0 ** (s21_db / 10.0)
    if lower > upper:
        raise InconsistencyError(
            f"lower bound {lower:.3e} W exceeds upper bound {upper:.3e} W")
    return lower, upper


def power_to_rabi(p_in, f, spec, cal):
    """Rabi frequency (Hz) for input microwave power ``p_in`` at carrier ``f``."""
    if p_in < 0:
        raise InvalidParameterError("input power must be non-negative")
    ratio = abs(frequency_response(spec, f)) / abs(frequency_response(spec, cal.at_freq))
    return cal.rabi_freq * math.sqrt(p_in / cal.input_power) * ratio


def lateral_sigma(spec):
    """RMS width of the lateral intensity profile; its FWHM is one wavelength."""
    return spec.saw_wavelength / (2.0 * math.sqrt(2.0 * math.log(2.0)))


def beam_profile(spec, depth, lateral_offset):
    """Relative strain amplitude at ``depth`` below the surface and ``lateral_offset`` from focus."""
    if depth < 0:
        raise InvalidParameterError("depth must be non-negative")
    sigma = lateral_sigma(spec)
    # amplitude = sqrt(intensity); intensity Gaussian has rms width sigma
    lateral = math.exp(-(lateral_offset ** 2) / (4.0 * sigma ** 2))
    return lateral * math.exp(-depth / spec.saw_wavelength)


def focal_strain_amplitude(p_acoustic, spec, depth, lateral_offset, constant):
    """Strain amplitude ``constant * sqrt(p) * profile(depth, offset)``.

    ``constant`` (strain per sqrt(W)) comes from :func:`strain_constant`.
    """
    if p_acoustic < 0:
        raise InvalidParameterError("acoustic power must be non-negative")
    return constant * math.sqrt(p_acoustic) * beam_profile(spec, depth, lateral_offset)


def calibration_acoustic_power(cal, spec):
    """Acoustic power at the calibration point, taken as the upper on-chip bound."""
    return onchip_power_bounds(cal.input_power, spec.insertion_s11_db, spec.transmission_s21_db)[1]


def strain_constant(cal, spec, spin_strain_rate, depth, lateral_offset=0.0):
    """Solve the strain-per-sqrt(W) constant from the calibration point.

    The calibrated Rabi frequency divided by the qubit's strain
    susceptibility gives the strain at the defect; dividing out the beam
    profile and the square root of acoustic power leaves the constant.
    """
    if spin_strain_rate <= 0:
        raise InvalidParameterError("spin_strain_rate must be positive to anchor the strain chain")
    strain_at_defect = cal.rabi_freq / spin_strain_rate
    p_ac = calibration_acoustic_power(cal, spec)
    return strain_at_defect / (math.sqrt(p_ac) * beam_profile(spec, depth, lateral_offset))


def propagation_delay(distance, spec):
    """Acoustic travel time over ``distance`` at ``f0 * wavelength``."""
    if distance < 0:
        raise InvalidParameterError("distance must be non-negative")
    return distance / spec.saw_velocity


def sweep_s_parameters(spec, freqs):
    freqs = np.asarray(freqs, dtype=float)
    s11, s21 = s_parameters(spec, freqs)
    return freqs, np.atleast_1d(s11), np.atleast_1d(s21)
