"""Execute a parsed config and collect its tables, fits and plot data."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import experiments as exp
from . import fitting, saw_device
from .errors import FitError, SimulationError
from .sequence import OutOfBandWarning, PulseSequence


@dataclass
class Table:
    """Column-oriented table; ``columns`` is a list of ``(name, unit)``."""

    columns: list
    data: list

    def rows(self):
        return zip(*self.data)


@dataclass
class RunOutput:
    kind: str
    table: Table
    payload: dict
    summary: str
    plot: object = None
    fits: list = field(default_factory=list)


def _fit_or_none(fn, *args, **kw):
    try:
        return fn(*args, **kw), None
    except (FitError, SimulationError) as exc:
        return None, f"{type(exc).__name__}: {exc}"


def _scan_payload(scan):
    return {"variable_name": scan.variable_name, "unit": scan.unit,
            "values": scan.values.tolist(), "population": scan.population.tolist(),
            "metadata": scan.metadata}


def run_odar(cfg, ctx):
    e = cfg.experiment
    scan = exp.run_odar(e["freqs"], e["pulse_duration"], e["power"], ctx)
    fit, err = _fit_or_none(fitting.fit_lineshape, scan.values, scan.population, e["lineshape"])
    i = int(np.argmax(scan.population))
    summary = f"odar: argmax {scan.values[i] / 1e9:.4f} GHz"
    if fit:
        summary += f", fitted center {fit['center'] / 1e9:.4f} GHz, FWHM {fit['fwhm'] / 1e6:.1f} MHz"
    table = Table([("frequency", "Hz"), ("population", "1")], [scan.values, scan.population])
    payload = {"scan": _scan_payload(scan), "fit": fit.to_dict() if fit else None, "fit_error": err,
               "argmax": float(scan.values[i])}
    return RunOutput("odar", table, payload, summary, scan, [fit] if fit else [])


def run_rabi(cfg, ctx):
    e = cfg.experiment
    scans, fits, errs = [], [], []
    for p in e["powers"]:
        scan = exp.run_rabi(e["durations"], p, e["freq"], ctx)
        scans.append(scan)
        fit, err = _fit_or_none(fitting.fit_damped_sinusoid, scan.values, scan.population)
        fits.append(fit)
        errs.append(err)
    freqs = [f["freq"] if f else math.nan for f in fits]
    parts = [f"{p * 1e3:g} mW -> {f / 1e6:.2f} MHz" for p, f in zip(e["powers"], freqs)]
    payload = {"scans": [_scan_payload(s) for s in scans], "powers": list(map(float, e["powers"])),
               "fits": [f.to_dict() if f else None for f in fits], "fit_errors": errs}
    ok = [(p, f) for p, f in zip(e["powers"], freqs) if math.isfinite(f)]
    if len(ok) >= 3:
        lin, err = _fit_or_none(fitting.fit_linear, [math.sqrt(p) for p, _ in ok], [f for _, f in ok])
        payload["sqrt_power_fit"] = lin.to_dict() if lin else None
        if lin:
            parts.append(f"r^2 vs sqrt(power) {lin['r_squared']:.6f}")
    n = len(e["durations"])
    table = Table([("duration", "s"), ("power", "W"), ("population", "1")],
                  [np.concatenate([s.values for s in scans]),
                   np.repeat(np.asarray(e["powers"], dtype=float), n),
                   np.concatenate([s.population for s in scans])])
    return RunOutput("rabi", table, payload, "rabi: " + "; ".join(parts), scans,
                     [f for f in fits if f])


def run_ramsey(cfg, ctx):
    e = cfg.experiment
    scan = exp.run_ramsey(e["delays"], e["detuning"], e["power"], ctx)
    fit, err = _fit_or_none(fitting.fit_ramsey, scan.values, scan.population)
    summary = "ramsey: fit failed"
    if fit:
        summary = (f"ramsey: fringe {fit['fringe_freq'] / 1e6:.2f} MHz, "
                   f"T2* {fit['t2_star'] * 1e9:.1f} +/- {fit.std_errors['t2_star'] * 1e9:.1f} ns")
    table = Table([("delay", "s"), ("population", "1")], [scan.values, scan.population])
    payload = {"scan": _scan_payload(scan), "fit": fit.to_dict() if fit else None, "fit_error": err}
    return RunOutput("ramsey", table, payload, summary, scan, [fit] if fit else [])


def histogram_sequence(cfg, ctx):
    e = cfg.experiment
    if e["pulses"] is not None:
        total = e["total_duration"]
        if total is None:
            total = max(float(p["start"]) + float(p["duration"]) for p in e["pulses"])
        return PulseSequence.from_dict({"pulses": e["pulses"], "total_duration": total})
    freq = ctx.qubit_freq if e["acoustic_freq"] is None else e["acoustic_freq"]
    if e["power"] == 0:
        return exp.build_sequence(ctx, [])
    return exp.odar_sequence(ctx, freq, e["pulse_duration"], e["power"])


def run_histogram(cfg, ctx):
    seq = histogram_sequence(cfg, ctx)
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
    h = exp.run_histogram(seq, ctx, rng)
    payload = {"bin_width": h.bin_width, "bin_kind": h.kind, "edges": h.edges.tolist(),
               "bins": h.bins.tolist(), "windows": [[list(w), name] for w, name in h.windows],
               "state_checks": h.checks}
    summary = f"histogram: {h.bins.size} bins of {h.bin_width * 1e9:g} ns"
    try:
        iw, rw = exp.default_windows(h, ctx.window)
        pop = exp.normalized_population(h, iw, rw)
        payload["normalized_population"] = pop
        summary += f", normalized population {pop:.4f}"
    except (KeyError, SimulationError):
        pass
    unit = "1/s" if h.kind == "rate" else "counts"
    table = Table([("t_start", "s"), ("t_stop", "s"), (h.kind, unit)],
                  [h.edges[:-1], h.edges[1:], h.bins])
    return RunOutput("histogram", table, payload, summary, h)


def run_sparams(cfg, ctx):
    spec = cfg.device
    f, s11, s21 = saw_device.sweep_s_parameters(spec, cfg.experiment["freqs"])
    cal = cfg.calibration
    lo, hi = saw_device.onchip_power_bounds(cal.input_power, spec.insertion_s11_db,
                                            spec.transmission_s21_db)
    fwhm = saw_device.amplitude_fwhm(spec)
    imp = saw_device.impulse_response(spec)
    payload = {
        "finger_pairs": spec.finger_pairs, "amplitude_fwhm": fwhm,
        "onchip_power_bounds": [lo, hi], "impulse_fwhm": imp.fwhm(),
        "propagation_delay": saw_device.propagation_delay(ctx.distance, spec),
        "frequency": f.tolist(), "s11_db": s11.tolist(), "s21_db": s21.tolist(),
    }
    summary = (f"sparams: N={spec.finger_pairs}, amplitude FWHM {fwhm / 1e6:.1f} MHz, "
               f"on-chip power {lo * 1e6:.3g}-{hi * 1e6:.3g} uW at {cal.input_power * 1e3:g} mW")
    table = Table([("frequency", "Hz"), ("s11", "dB"), ("s21", "dB")], [f, s11, s21])
    return RunOutput("sparams", table, payload, summary, table)


RUNNERS = {"odar": run_odar, "rabi": run_rabi, "ramsey": run_ramsey,
           "histogram": run_histogram, "sparams": run_sparams}


def execute(cfg):
    ctx = cfg.make_context()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", OutOfBandWarning)
        out = RUNNERS[cfg.kind](cfg, ctx)
    out.payload = {"kind": cfg.kind, "seed": cfg.seed, "config": _jsonable(cfg.raw),
                   "qubit_freq": ctx.qubit_freq, **out.payload}
    return out


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj
