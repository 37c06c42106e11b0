"""ODAR, Rabi and Ramsey measurements simulated end to end.

Every sweep point builds a pulse sequence, corrects it for the acoustic
travel time, compiles it, evolves the thermal state through the segments,
records the photon-emission histogram and reduces it to the normalised
spin-down population (readout counts over initialisation counts).
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np

from . import saw_device
from .dynamics import DensityMatrix, evolve, rotating_frame
from .errors import InvalidParameterError, NormalizationError
from .saw_device import CalibrationPoint, IdtSpec
from .sequence import (
    DIM, DOWN, EXCITED, UP, Pulse, PulseKind, PulseSequence, compile_sequence,
    correct_timing, pi_pulse_duration,
)
from .siv_model import (
    MAGIC_ANGLE, SivModelParams, boltzmann_populations, default_field_direction,
    reduce_params, tune_field_to_qubit_freq,
)

FRAMES = ("rwa", "rotating", "lab")


@dataclass(frozen=True)
class ExperimentContext:
    """Everything a sweep point needs besides the swept value.

    Use :meth:`create` to obtain a context whose magnetic field has been
    tuned to the requested qubit frequency.
    """

    model: SivModelParams
    device: IdtSpec = field(default_factory=IdtSpec)
    calibration: CalibrationPoint = field(default_factory=CalibrationPoint)
    distance: float = 300e-6
    depth: float = 100e-9
    init_duration: float = 150e-9
    readout_duration: float = 100e-9
    gap: float = 50e-9
    window: float = 10e-9
    pump_rate: float = 5e7
    t2_star: Optional[float] = 33e-9
    relaxation_rate: float = 0.0
    envelope: str = "shaped"
    frame: str = "rwa"
    passband_weighting: bool = False
    thermal: str = "equal"
    tol: float = 1e-9
    bin_width: float = 1e-9
    collection_efficiency: float = 1.0
    shot_noise: bool = False
    repetitions: float = 1e5
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.frame not in FRAMES:
            raise InvalidParameterError(f"frame must be one of {FRAMES}")
        if self.thermal not in ("equal", "boltzmann"):
            raise InvalidParameterError("thermal must be 'equal' or 'boltzmann'")
        for name in ("init_duration", "readout_duration", "window", "bin_width"):
            if not getattr(self, name) > 0:
                raise InvalidParameterError(f"{name} must be positive")
        for name in ("distance", "depth", "gap", "pump_rate", "relaxation_rate"):
            if getattr(self, name) < 0:
                raise InvalidParameterError(f"{name} must be non-negative")
        if self.t2_star is not None and not self.t2_star > 0:
            raise InvalidParameterError("t2_star must be positive (or None for no dephasing)")

    @classmethod
    def create(cls, qubit_freq=3.43e9, field_angle=MAGIC_ANGLE, model=None, **kwargs):
        model = model or SivModelParams()
        direction = default_field_direction(field_angle)
        b = tune_field_to_qubit_freq(model, qubit_freq, direction)
        return cls(model=model.with_field(b, direction), **kwargs)

    @property
    def reduction(self):
        return reduce_params(self.model)

    @property
    def qubit_freq(self):
        return self.reduction.qubit_freq

    @property
    def dephasing_rate(self):
        return 0.0 if self.t2_star is None else 1.0 / self.t2_star

    def snapshot(self):
        d = asdict(self)
        d["model"]["b_field"] = list(self.model.b_field)
        d["qubit_freq"] = self.qubit_freq
        d["spin_strain_rate"] = self.reduction.spin_strain_rate
        return d

    def initial_state(self):
        if self.thermal == "equal":
            p_down, p_up = 0.5, 0.5
        else:
            p_down, p_up = boltzmann_populations(self.reduction, self.model.temperature)
        pops = np.zeros(DIM)
        pops[DOWN], pops[UP] = p_down, p_up
        return DensityMatrix.diagonal(pops)


@dataclass
class DetectionHistogram:
    """Time-resolved photon detections.

    ``bins`` hold expected rates (counts/s) when ``kind == "rate"`` and
    sampled counts per bin when ``kind == "counts"``.  ``edges`` has one more
    entry than ``bins``; all bins have width ``bin_width`` except possibly
    the last.
    """

    bin_width: float
    bins: np.ndarray
    t0: float = 0.0
    kind: str = "rate"
    edges: Optional[np.ndarray] = None
    windows: tuple = ()
    checks: dict = field(default_factory=dict)

    def __post_init__(self):
        self.bins = np.asarray(self.bins, dtype=float)
        if self.edges is None:
            self.edges = self.t0 + self.bin_width * np.arange(self.bins.size + 1)
        if np.any(self.bins < 0):
            raise InvalidParameterError("histogram bins must be non-negative")

    @property
    def centers(self):
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    def window(self, label):
        for interval, name in self.windows:
            if name == label:
                return interval
        raise KeyError(label)

    def integral(self, interval):
        """Detections (or expected detections per repetition) inside ``interval``."""
        a, b = interval
        lo, hi = self.edges[:-1], self.edges[1:]
        overlap = np.clip(np.minimum(hi, b) - np.maximum(lo, a), 0.0, None)
        if self.kind == "counts":
            return float(np.sum(self.bins * overlap / (hi - lo)))
        return float(np.sum(self.bins * overlap))


@dataclass
class ScanResult:
    variable_name: str
    values: np.ndarray
    population: np.ndarray
    unit: str = ""
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.population = np.asarray(self.population, dtype=float)
        if self.values.shape != self.population.shape:
            raise InvalidParameterError("values and population differ in length")


def normalized_population(h, init_window, readout_window):
    """Readout detections divided by initialisation detections."""
    for a, b in (init_window, readout_window):
        if a < h.edges[0] - 1e-15 or b > h.edges[-1] + 1e-15:
            raise InvalidParameterError("window outside histogram support")
    init = h.integral(init_window)
    if init <= 0:
        raise NormalizationError("no detections in the initialisation window")
    return h.integral(readout_window) / init


def default_windows(h, width):
    (i0, _), (r0, _) = h.window("init"), h.window("readout")
    return (i0, i0 + width), (r0, r0 + width)


# --- sequence builders -------------------------------------------------------

def _ceil_to(x, step):
    return math.ceil(x / step - 1e-9) * step


def build_sequence(ctx, acoustic=()):
    """Standard init / acoustic / readout sequence.

    ``acoustic`` lists ``(offset, duration, freq, power, phase)`` tuples with
    offsets relative to the intended arrival time at the defect, ``gap``
    after initialisation ends.  Emission times are set early by the travel
    time so that, once :func:`correct_timing` is applied, arrivals land on
    schedule.  The returned sequence is not yet timing corrected.
    """
    delay = saw_device.propagation_delay(ctx.distance, ctx.device)
    bw = ctx.bin_width
    init_start = _ceil_to(max(0.0, delay - ctx.init_duration - ctx.gap), bw)
    arrival = init_start + ctx.init_duration + ctx.gap
    tail = ctx.device.impulse_duration if ctx.envelope == "shaped" else 0.0

    pulses = [Pulse(PulseKind.OPTICAL_C1, init_start, ctx.init_duration,
                    power_or_rate=ctx.pump_rate, label="init")]
    last = arrival - ctx.gap
    for offset, duration, freq, power, phase in acoustic:
        pulses.append(Pulse(PulseKind.ACOUSTIC, arrival + offset - delay, duration, freq=freq,
                            power_or_rate=power, phase=phase, label="acoustic"))
        last = max(last, arrival + offset + duration + tail)
    readout_start = _ceil_to(last + ctx.gap, bw)
    pulses.append(Pulse(PulseKind.OPTICAL_C1, readout_start, ctx.readout_duration,
                        power_or_rate=ctx.pump_rate, label="readout"))
    total = _ceil_to(readout_start + ctx.readout_duration, bw)
    return PulseSequence(tuple(pulses), total)


def odar_sequence(ctx, freq, duration=20e-9, power=2e-3):
    return build_sequence(ctx, [(0.0, duration, freq, power, 0.0)])


def rabi_sequence(ctx, duration, power=4e-3, freq=None):
    freq = ctx.qubit_freq if freq is None else freq
    if duration <= 0:
        return build_sequence(ctx, [])
    return build_sequence(ctx, [(0.0, duration, freq, power, 0.0)])


def half_pi_duration(ctx, power, freq):
    f_eval = freq if ctx.passband_weighting else ctx.calibration.at_freq
    omega = saw_device.power_to_rabi(power, f_eval, ctx.device, ctx.calibration)
    return pi_pulse_duration(omega) / 2.0


def ramsey_sequence(ctx, delay, detuning=50e6, power=4e-3):
    freq = ctx.qubit_freq + detuning
    t90 = half_pi_duration(ctx, power, freq)
    return build_sequence(ctx, [(0.0, t90, freq, power, 0.0),
                                (t90 + delay, t90, freq, power, 0.0)])


# --- simulation ---------------------------------------------------------------

def compile_for(ctx, seq):
    if not seq.delay_corrected:
        seq = correct_timing(seq, ctx.distance, ctx.device)
    return compile_sequence(
        seq, ctx.model, ctx.device, ctx.calibration,
        dephasing_rate=ctx.dephasing_rate, relaxation_rate=ctx.relaxation_rate,
        envelope=ctx.envelope, passband_weighting=ctx.passband_weighting)


def _bin_edges(total, width):
    n = int(math.floor(total / width + 1e-9))
    edges = list(width * np.arange(n + 1))
    if total - edges[-1] > 1e-9 * width:
        edges.append(total)
    return np.array(edges)


def simulate_schedule(schedule, ctx, rho0=None, subdivisions=4):
    """Evolve through ``schedule``; return ``(bin_edges, excited_average, populations, checks)``.

    ``excited_average`` is the excited-state population averaged over each
    bin (composite Simpson rule on ``subdivisions`` sub-intervals).
    """
    rho = (rho0 or ctx.initial_state()).entries
    edges = _bin_edges(schedule.total_duration, ctx.bin_width)
    frac = np.linspace(0.0, 1.0, subdivisions + 1)
    grid = np.unique(np.concatenate([a + (b - a) * frac for a, b in zip(edges[:-1], edges[1:])]))

    frame_freq = schedule.carriers[0] if schedule.carriers else schedule.qubit_freq
    p_exc = np.zeros(grid.size)
    pops = np.zeros((grid.size, DIM))
    worst = [0.0, 0.0, 0.0]
    steps = 0
    for seg in schedule.segments:
        h, drives = seg.hamiltonian, list(seg.drives)
        if ctx.frame != "lab":
            rot_drives = []
            h_rot, _ = rotating_frame(h, None, frame_freq, schedule.frame_numbers)
            for d in drives:
                _, res = rotating_frame(h, d, frame_freq, schedule.frame_numbers,
                                        rwa=ctx.frame == "rwa")
                rot_drives.extend(res)
            h, drives = h_rot, rot_drives
        idx = np.nonzero((grid >= seg.start) & (grid <= seg.stop))[0]
        times = grid[idx]
        if times.size == 0 or times[-1] < seg.stop:
            times = np.append(times, seg.stop)
        res = evolve(rho, h, drives, seg.collapses, (seg.start, seg.stop), ctx.tol,
                     sample_times=times)
        steps += res.steps
        worst = [max(w, v) for w, v in zip(worst, res.max_violation)]
        diag = np.einsum("nii->ni", res.states).real
        n = idx.size
        p_exc[idx] = diag[:n, EXCITED]
        pops[idx] = diag[:n]
        rho = res.final

    # Simpson average of the excited population inside each bin
    avg = np.empty(edges.size - 1)
    w = np.ones(subdivisions + 1)
    w[1:-1:2], w[2:-1:2] = 4.0, 2.0
    w /= w.sum()
    pos = np.searchsorted(grid, edges)
    for i in range(edges.size - 1):
        seg = p_exc[pos[i]:pos[i + 1] + 1]
        avg[i] = float(np.dot(w, seg)) if seg.size == w.size else float(seg.mean())
    checks = {"max_hermiticity_error": worst[0], "max_trace_error": worst[1],
              "min_eigenvalue": -worst[2], "steps": steps}
    return edges, np.clip(avg, 0.0, None), (grid, pops), checks


def histogram_from_schedule(schedule, ctx, rng=None, rho0=None):
    edges, p_exc, _, checks = simulate_schedule(schedule, ctx, rho0)
    rates = ctx.collection_efficiency * ctx.model.es_decay_rate * p_exc
    h = DetectionHistogram(bin_width=ctx.bin_width, bins=rates, t0=float(edges[0]), edges=edges,
                           windows=schedule.readout_windows, checks=checks)
    if ctx.shot_noise:
        rng = rng if rng is not None else np.random.default_rng(ctx.seed)
        h = sample_counts(h, rng, ctx.repetitions)
    return h


def sample_counts(h, rng, repetitions):
    """Poisson-sample detections from a rate histogram accumulated over ``repetitions`` runs."""
    if h.kind != "rate":
        raise InvalidParameterError("can only sample from a rate histogram")
    expected = h.bins * np.diff(h.edges) * repetitions
    return replace(h, bins=rng.poisson(expected).astype(float), kind="counts")


def run_histogram(seq, ctx, rng=None):
    """Photon-detection histogram for one pulse sequence."""
    return histogram_from_schedule(compile_for(ctx, seq), ctx, rng)


def _point(args):
    ctx, seq, seed = args
    rng = np.random.default_rng(seed) if ctx.shot_noise else None
    h = run_histogram(seq, ctx, rng)
    init_w, read_w = default_windows(h, ctx.window)
    return normalized_population(h, init_w, read_w), h.checks


def _map(fn, items, workers):
    if workers is None or workers <= 0:
        workers = os.cpu_count() or 1
    if workers == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _merge_checks(all_checks):
    return {
        "max_hermiticity_error": max(c["max_hermiticity_error"] for c in all_checks),
        "max_trace_error": max(c["max_trace_error"] for c in all_checks),
        "min_eigenvalue": min(c["min_eigenvalue"] for c in all_checks),
        "steps": sum(c["steps"] for c in all_checks),
    }


def run_scan(ctx, sequences, variable_name, values, unit, extra=None):
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise InvalidParameterError("sweep is empty")
    seeds = [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(ctx.seed).spawn(len(sequences))]
    out = _map(_point, [(ctx, s, seed) for s, seed in zip(sequences, seeds)], ctx.workers)
    pops = np.array([p for p, _ in out])
    meta = {"context": ctx.snapshot(), "state_checks": _merge_checks([c for _, c in out])}
    meta.update(extra or {})
    return ScanResult(variable_name, values, pops, unit, meta)


def run_odar(freqs, pulse_duration=20e-9, power=2e-3, ctx=None):
    """Normalised population versus acoustic carrier frequency."""
    ctx = ctx or ExperimentContext.create()
    freqs = np.asarray(freqs, dtype=float)
    if freqs.size and np.any(np.diff(freqs) <= 0):
        raise InvalidParameterError("frequencies must be sorted ascending")
    seqs = [odar_sequence(ctx, f, pulse_duration, power) for f in freqs]
    return run_scan(ctx, seqs, "frequency", freqs, "Hz",
                    {"pulse_duration": pulse_duration, "power": power})


def run_rabi(durations, power=4e-3, freq=None, ctx=None):
    """Normalised population versus acoustic pulse duration."""
    ctx = ctx or ExperimentContext.create()
    freq = ctx.qubit_freq if freq is None else freq
    seqs = [rabi_sequence(ctx, d, power, freq) for d in np.asarray(durations, dtype=float)]
    return run_scan(ctx, seqs, "duration", durations, "s", {"power": power, "freq": freq})


def run_ramsey(delays, detuning=50e6, power=4e-3, ctx=None):
    """Normalised population versus free-precession time between two pi/2 pulses."""
    ctx = ctx or ExperimentContext.create()
    seqs = [ramsey_sequence(ctx, d, detuning, power) for d in np.asarray(delays, dtype=float)]
    t90 = half_pi_duration(ctx, power, ctx.qubit_freq + detuning)
    return run_scan(ctx, seqs, "delay", delays, "s",
                    {"detuning": detuning, "power": power, "half_pi_duration": t90})
