"""Acceptance criteria, one test each; every test records a PASS/FAIL line.

Criteria 1-5 and 10-11 read the outputs of the five bundled configs, which
are run once per session through the ``simulate`` entry point.
"""

import json
import math
from dataclasses import replace

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES, run_bundled
from sivsaw.dynamics import DensityMatrix, DriveTerm, evolve, purity, rabi_analytic
from sivsaw.fitting import LINESHAPES, _peak, fit_damped_sinusoid, fit_lineshape
from sivsaw.saw_device import (
    IdtSpec, Impulse, amplitude_fwhm, derive_finger_pairs, onchip_power_bounds, pulse_response,
)

QUBIT = 3.43e9


def record(number, title, ok, detail):
    ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] {number:>2}. {title}: {detail}")
    assert ok, detail


def load(bundled, stem):
    out, _ = bundled
    return json.loads((out / f"{stem}.json").read_text())


def test_01_odar_center(bundled):
    d = load(bundled, "fig3c_odar")
    _, runs = bundled
    code, seconds = runs["fig3c_odar"]
    center = d["fit"]["params"]["center"]
    step = np.median(np.diff(d["scan"]["values"]))
    ok = code == 0 and abs(center - QUBIT) <= min(step, 5e6) and seconds < 60
    record(1, "ODAR center", ok,
           f"{center / 1e9:.5f} GHz (tolerance {min(step, 5e6) / 1e6:g} MHz), run {seconds:.1f} s")


def test_02_odar_width(bundled):
    fwhm = load(bundled, "fig3c_odar")["fit"]["params"]["fwhm"]
    record(2, "ODAR width", abs(fwhm / 48e6 - 1) <= 0.25, f"FWHM {fwhm / 1e6:.2f} MHz vs 48 MHz +/- 25%")


def test_03_rabi_frequency(bundled):
    d = load(bundled, "fig4b_rabi")
    i = d["powers"].index(4e-3)
    freq = d["fits"][i]["params"]["freq"]
    record(3, "Rabi calibration", abs(freq - 48e6) <= 1e6, f"{freq / 1e6:.3f} MHz at 4 mW vs 48 +/- 1 MHz")


def test_04_sqrt_power_scaling(bundled):
    d = load(bundled, "fig4b_rabi")
    lin = d["sqrt_power_fit"]
    r2 = lin["params"]["r_squared"]
    icpt, se = lin["params"]["intercept"], lin["std_errors"]["intercept"]
    ok = sorted(d["powers"]) == [0.5e-3, 1e-3, 2e-3, 4e-3] and r2 >= 0.999 and abs(icpt) <= 2 * se
    record(4, "sqrt(power) scaling", ok,
           f"r^2 {r2:.7f}; intercept {icpt / 1e3:.1f} kHz, 2 SE = {2 * se / 1e3:.1f} kHz")


def test_05_ramsey(bundled):
    d = load(bundled, "fig4d_ramsey")
    p = d["fit"]["params"]
    delays = d["scan"]["values"]
    t2 = d["scan"]["metadata"]["context"]["t2_star"]
    ok = (abs(p["fringe_freq"] - 50e6) <= 1e6 and 28e-9 <= p["t2_star"] <= 38e-9
          and t2 == 33e-9 and min(delays) == 0 and max(delays) == pytest.approx(120e-9))
    record(5, "Ramsey fringes", ok,
           f"fringe {p['fringe_freq'] / 1e6:.2f} MHz, T2* {p['t2_star'] * 1e9:.2f} ns")


def test_06_idt_bandwidth():
    spec = IdtSpec()
    n = derive_finger_pairs(spec, 126e6)
    fwhm = amplitude_fwhm(replace(spec, finger_pairs=n))
    record(6, "IDT bandwidth", abs(fwhm / 126e6 - 1) <= 0.01, f"N = {n}, FWHM {fwhm / 1e6:.2f} MHz")


def test_07_minimum_pulse():
    spec = replace(IdtSpec(), finger_pairs=derive_finger_pairs(IdtSpec(), 126e6))
    width = pulse_response(spec, Impulse(0.0)).fwhm()
    record(7, "minimum pulse", abs(width / 13e-9 - 1) <= 0.4,
           f"{width * 1e9:.2f} ns vs 13 ns +/- 40%")


def test_08_power_bracket():
    lo, hi = onchip_power_bounds(4e-3, -0.4, -31.0)

    def agree(x, ref):
        # same value to three significant figures: within one unit of the third digit
        return abs(x - ref) < 10 ** (math.floor(math.log10(abs(ref))) - 2)

    ok = agree(lo, 3.17e-6) and agree(hi, 352e-6)
    record(8, "power bracket", ok, f"({lo * 1e6:.4f} uW, {hi * 1e6:.2f} uW)")


def test_09_oracle_equivalence():
    omega = 48e6
    x = np.array([[0, 1], [1, 0]], dtype=complex)
    drive = DriveTerm(0.5 * x, lambda t: 2 * math.pi * omega)
    t = np.linspace(0, 100e-9, 1001)
    res = evolve(DensityMatrix.diagonal([1, 0]), np.zeros((2, 2)), [drive], (), (0, 100e-9),
                 1e-9, sample_times=t)
    err = float(np.max(np.abs(res.states[:, 1, 1].real - rabi_analytic(omega, 0.0, t))))
    record(9, "oracle equivalence", err <= 1e-6, f"max population error {err:.2e}")


def _state_checks(bundled):
    odar = load(bundled, "fig3c_odar")["scan"]["metadata"]["state_checks"]
    rabi = [s["metadata"]["state_checks"] for s in load(bundled, "fig4b_rabi")["scans"]]
    ramsey = load(bundled, "fig4d_ramsey")["scan"]["metadata"]["state_checks"]
    return [odar, *rabi, ramsey]


def test_10_invariant_suite(bundled):
    checks = _state_checks(bundled)
    herm = max(c["max_hermiticity_error"] for c in checks)
    trace = max(c["max_trace_error"] for c in checks)
    min_eig = min(c["min_eigenvalue"] for c in checks)
    states_ok = herm <= 1e-10 and trace <= 1e-9 and min_eig >= -1e-8

    rng = np.random.default_rng(10)
    purity_ok = True
    for _ in range(50):
        a = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
        rho = a @ a.conj().T
        rho /= np.trace(rho)
        ls = []
        for _ in range(2):
            b = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
            ls.append(math.sqrt(1e7) * 0.5 * (b + b.conj().T))
        res = evolve(rho, np.zeros((3, 3)), (), ls, (0, 50e-9), 1e-10,
                     sample_times=np.linspace(0, 50e-9, 11))
        purity_ok &= bool(np.all(np.diff([purity(s) for s in res.states]) <= 1e-12))

    t = np.linspace(0, 100e-9, 201)
    f = np.linspace(3.2e9, 3.6e9, 201)
    worst = 0.0
    rng = np.random.default_rng(0)
    for _ in range(100):
        a, fr, ph = rng.uniform(0.2, 1), rng.uniform(15e6, 90e6), rng.uniform(-3, 3)
        tau, c = rng.uniform(30e-9, 300e-9), rng.uniform(-1, 1)
        y = c + a * np.exp(-t / tau) * np.cos(2 * math.pi * fr * t + ph)
        p = fit_damped_sinusoid(t, y).params
        worst = max(worst, abs(p["freq"] / fr - 1), abs(p["decay_time"] / tau - 1),
                    abs(p["amplitude"] / a - 1))
    for model in LINESHAPES:
        for _ in range(100):
            center, fwhm = rng.uniform(3.33e9, 3.47e9), rng.uniform(20e6, 100e6)
            height, base = rng.uniform(0.2, 2), rng.uniform(0, 0.5)
            y = base + height * _peak(model, (f - center) / fwhm)
            p = fit_lineshape(f, y, model).params
            worst = max(worst, abs(p["center"] / center - 1), abs(p["fwhm"] / fwhm - 1),
                        abs(p["height"] / height - 1))
    fits_ok = worst <= 1e-6

    record(10, "invariant suite", states_ok and purity_ok and fits_ok,
           f"hermiticity {herm:.1e}, trace {trace:.1e}, min eigenvalue {min_eig:.1e}; "
           f"purity {'non-increasing' if purity_ok else 'increased'}; fit round trip {worst:.1e}")


def test_11_determinism(bundled, tmp_path):
    first, _ = bundled
    runs = run_bundled(tmp_path)
    names = sorted(p.name for p in first.iterdir())
    same = [n for n in names if (first / n).read_bytes() == (tmp_path / n).read_bytes()]
    ok = all(code == 0 for code, _ in runs.values()) and len(same) == len(names) > 0
    record(11, "determinism", ok, f"{len(same)}/{len(names)} files byte-identical across reruns")
