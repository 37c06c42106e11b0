"""Pulse sequences and their compilation into piecewise Lindblad segments.

The simulated space has three levels::

    0  DOWN     lower-branch qubit state |e+ dn>
    1  UP       lower-branch qubit state |e- up>
    2  EXCITED  effective optically excited level of up-spin character

C1 light pumps DOWN -> EXCITED (spin flipping), C3 pumps UP -> EXCITED; the
excited level decays to UP with the spin-conserving branching ratio and to
DOWN otherwise.  Optical pulses are incoherent pumping channels, acoustic
pulses coherent drives between DOWN and UP.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import asdict, dataclass, field, replace
from enum import Enum

import numpy as np

from . import saw_device
from .dynamics import DriveTerm, embed
from .errors import AlreadyCorrectedError, InvalidParameterError, UnsupportedOverlapError
from .siv_model import collapse_operators, reduce_params

log = logging.getLogger(__name__)

DOWN, UP, EXCITED = 0, 1, 2
DIM = 3


class OutOfBandWarning(UserWarning):
    pass


class PulseKind(str, Enum):
    OPTICAL_C1 = "optical_c1"
    OPTICAL_C3 = "optical_c3"
    ACOUSTIC = "acoustic"


@dataclass(frozen=True)
class Pulse:
    """One optical or acoustic pulse.

    ``power_or_rate`` is the input microwave power (W) for acoustic pulses
    and the optical pumping rate (1/s) for optical ones.  ``freq`` is the
    acoustic carrier (Hz); optical pulses are identified by ``kind`` alone.
    """

    kind: PulseKind
    start: float
    duration: float
    freq: float = 0.0
    power_or_rate: float = 0.0
    phase: float = 0.0
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "kind", PulseKind(self.kind))
        if not self.duration > 0:
            raise InvalidParameterError("pulse duration must be positive")
        if self.start < 0:
            raise InvalidParameterError("pulse start must be non-negative")
        if self.power_or_rate < 0:
            raise InvalidParameterError("pulse power or rate must be non-negative")
        if self.kind is PulseKind.ACOUSTIC and not self.freq > 0:
            raise InvalidParameterError("acoustic pulses need a positive carrier frequency")

    @property
    def end(self):
        return self.start + self.duration

    @property
    def optical(self):
        return self.kind is not PulseKind.ACOUSTIC

    def to_dict(self):
        d = asdict(self)
        d["kind"] = self.kind.value
        return d


def _overlaps(a0, a1, b0, b1):
    return a0 < b1 and b0 < a1


@dataclass(frozen=True)
class PulseSequence:
    pulses: tuple
    total_duration: float
    delay_corrected: bool = False
    allow_overlap: bool = False

    def __post_init__(self):
        pulses = tuple(sorted(self.pulses, key=lambda p: (p.start, p.kind.value)))
        object.__setattr__(self, "pulses", pulses)
        last = max((p.end for p in pulses), default=0.0)
        if self.total_duration < last * (1 - 1e-12):
            raise InvalidParameterError("total_duration shorter than the last pulse")
        if not self.allow_overlap:
            for p in pulses:
                for q in pulses:
                    if p.optical != q.optical and _overlaps(p.start, p.end, q.start, q.end):
                        raise UnsupportedOverlapError(
                            "optical and acoustic pulses overlap; set allow_overlap to permit it")

    @property
    def acoustic(self):
        return [p for p in self.pulses if not p.optical]

    @property
    def optical(self):
        return [p for p in self.pulses if p.optical]

    def mirrored(self):
        """Time-reversed copy: each pulse ends where it used to start, counted from the end."""
        flipped = [replace(p, start=self.total_duration - p.end) for p in self.pulses]
        return replace(self, pulses=tuple(flipped))

    def to_dict(self):
        return {
            "total_duration": self.total_duration,
            "delay_corrected": self.delay_corrected,
            "allow_overlap": self.allow_overlap,
            "pulses": [p.to_dict() for p in self.pulses],
        }

    @classmethod
    def from_dict(cls, data):
        pulses = tuple(Pulse(**p) for p in data.get("pulses", []))
        return cls(pulses=pulses, total_duration=float(data["total_duration"]),
                   delay_corrected=bool(data.get("delay_corrected", False)),
                   allow_overlap=bool(data.get("allow_overlap", False)))


def correct_timing(seq, distance, device):
    """Shift acoustic pulses later by the travel time from transducer to defect."""
    if seq.delay_corrected:
        raise AlreadyCorrectedError("sequence timing was already corrected")
    delay = saw_device.propagation_delay(distance, device)
    shifted = tuple(replace(p, start=p.start + delay) if not p.optical else p for p in seq.pulses)
    last = max((p.end for p in shifted), default=0.0)
    return replace(seq, pulses=shifted, total_duration=max(seq.total_duration, last),
                   delay_corrected=True)


def pi_pulse_duration(omega):
    """Length (s) of a resonant pi pulse at Rabi frequency ``omega`` (Hz)."""
    if not omega > 0:
        raise InvalidParameterError("Rabi frequency must be positive")
    return 1.0 / (2.0 * omega)


@dataclass(frozen=True)
class Segment:
    start: float
    stop: float
    hamiltonian: np.ndarray
    drives: tuple
    collapses: tuple
    label: str

    @property
    def length(self):
        return self.stop - self.start


@dataclass(frozen=True)
class CompiledSchedule:
    segments: tuple
    readout_windows: tuple
    qubit_freq: float
    frame_numbers: tuple
    total_duration: float
    carriers: tuple = field(default=())

    def describe(self):
        lines = []
        for seg in self.segments:
            lines.append(
                f"[{seg.start * 1e9:9.3f}, {seg.stop * 1e9:9.3f}] ns  {seg.label:<20s} "
                f"drives={len(seg.drives)} collapses={len(seg.collapses)}")
        return "\n".join(lines)


def static_hamiltonian(reduction):
    """Lab-frame static Hamiltonian (rad/s) of the three-level space."""
    e = np.array(reduction.energies) - min(reduction.energies)
    return np.diag([2 * math.pi * e[0], 2 * math.pi * e[1], 0.0]).astype(complex)


def frame_numbers(reduction):
    """Frame generator: one quantum on whichever qubit level is higher."""
    return (0.0, 1.0, 0.0) if reduction.down_is_lower else (1.0, 0.0, 0.0)


def qubit_drive_operator():
    op = np.zeros((DIM, DIM), dtype=complex)
    op[DOWN, UP] = op[UP, DOWN] = 1.0
    return op


def ambient_collapses(model, reduction, dephasing_rate=0.0, relaxation_rate=0.0):
    """Collapse operators present at all times: excited-state decay plus qubit decoherence."""
    gamma = model.es_decay_rate
    b = model.branching_spin_conserving
    ops = []
    if gamma * b > 0:
        op = np.zeros((DIM, DIM), dtype=complex)
        op[UP, EXCITED] = math.sqrt(gamma * b)
        ops.append(op)
    if gamma * (1 - b) > 0:
        op = np.zeros((DIM, DIM), dtype=complex)
        op[DOWN, EXCITED] = math.sqrt(gamma * (1 - b))
        ops.append(op)
    for q in collapse_operators(model, reduction, dephasing_rate, relaxation_rate):
        ops.append(embed(q, [DOWN, UP], DIM))
    return ops


def pump_operator(pulse):
    op = np.zeros((DIM, DIM), dtype=complex)
    source = DOWN if pulse.kind is PulseKind.OPTICAL_C1 else UP
    op[EXCITED, source] = math.sqrt(pulse.power_or_rate)
    return op


def acoustic_envelope(pulse, device, cal, envelope="shaped", passband_weighting=True):
    """Drive envelope (rad/s) of one acoustic pulse at the defect.

    Peak amplitude is ``2 pi`` times the calibrated Rabi frequency.  With
    ``passband_weighting`` off the calibration frequency is used, i.e. the
    transducer response is taken as flat across the sweep.
    """
    f_eval = pulse.freq if passband_weighting else cal.at_freq
    amp = 2 * math.pi * saw_device.power_to_rabi(pulse.power_or_rate, f_eval, device, cal)
    if envelope == "shaped":
        return saw_device.TrapezoidEnvelope(pulse.start, pulse.duration, device.impulse_duration, amp)
    if envelope == "rect":
        return saw_device.RectEnvelope(pulse.start, pulse.duration, amp)
    raise InvalidParameterError(f"unknown envelope mode {envelope!r}")


def compile_sequence(seq, model, device, cal, *, dephasing_rate=0.0, relaxation_rate=0.0,
                     envelope="shaped", passband_weighting=True, allow_uncorrected=False):
    """Turn ``seq`` into segments that tile ``[0, total_duration]``.

    Each segment carries the lab-frame static Hamiltonian, the acoustic
    drives active in it and the collapse set (ambient decay plus the
    pumping channel of any active optical pulse).  Optical pulses double as
    the detection windows listed in ``readout_windows``.
    """
    if not seq.delay_corrected and not allow_uncorrected:
        raise InvalidParameterError("sequence timing not corrected; call correct_timing first")
    optical = seq.optical
    for i, p in enumerate(optical):
        for q in optical[i + 1:]:
            if _overlaps(p.start, p.end, q.start, q.end):
                raise UnsupportedOverlapError("optical pulses overlap")

    reduction = reduce_params(model)
    h0 = static_hamiltonian(reduction)
    xop = qubit_drive_operator()
    ambient = ambient_collapses(model, reduction, dephasing_rate, relaxation_rate)

    active = []  # (support start, support end, pulse, payload)
    for p in seq.pulses:
        if p.optical:
            active.append((p.start, p.end, p, pump_operator(p)))
            continue
        if not saw_device.in_band(device, p.freq):
            warnings.warn(f"acoustic carrier {p.freq:.4g} Hz lies outside 3x the transducer "
                          "bandwidth; drive amplitude is near zero", OutOfBandWarning, stacklevel=2)
        env = acoustic_envelope(p, device, cal, envelope, passband_weighting)
        drive = DriveTerm(operator=xop, envelope=env, carrier_freq=p.freq, carrier_phase=p.phase)
        a, b = env.support
        active.append((a, b, p, drive))

    total = seq.total_duration
    for a, b, p, _ in active:
        if b > total * (1 + 1e-12):
            raise InvalidParameterError(
                f"{p.kind.value} pulse support ends at {b:.4e} s, after total_duration {total:.4e} s")

    edges = sorted({0.0, total, *[min(max(x, 0.0), total) for a, b, *_ in active for x in (a, b)]})
    segments = []
    for a, b in zip(edges[:-1], edges[1:]):
        if b - a <= 1e-15 * max(total, 1e-30):
            continue
        drives, collapses, labels = [], list(ambient), []
        for s0, s1, p, payload in active:
            if not _overlaps(s0, s1, a, b):
                continue
            labels.append(p.label or p.kind.value)
            if p.optical:
                collapses.append(payload)
            else:
                drives.append(payload)
        segments.append(Segment(a, b, h0, tuple(drives), tuple(collapses),
                                "+".join(labels) if labels else "gap"))

    windows = tuple(((p.start, p.end), p.label or f"optical{i}") for i, p in enumerate(optical))
    sched = CompiledSchedule(
        segments=tuple(segments),
        readout_windows=windows,
        qubit_freq=reduction.qubit_freq,
        frame_numbers=frame_numbers(reduction),
        total_duration=total,
        carriers=tuple(sorted({p.freq for p in seq.acoustic})),
    )
    log.debug("compiled schedule:\n%s", sched.describe())
    return sched
