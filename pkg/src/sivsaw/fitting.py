"""Least-squares reduction of simulated scans.

All nonlinear fits run Levenberg-Marquardt (MINPACK, via scipy) with
analytic Jacobians on rescaled data: the abscissa is divided by its span
and the ordinate by its spread, so the optimiser sees O(1) numbers and the
estimates are equivariant under rescaling of ``y``.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import optimize, signal

from .errors import DegenerateFitError, EdgePeakError, InvalidParameterError, NoOscillationError

XTOL = 1e-10
MAX_ITER = 200
LINESHAPES = ("gaussian", "lorentzian", "sinc2")
SINC2_FWHM = 0.885892941378904  # full width at half maximum of np.sinc(x)**2
FOUR_LN2 = 4.0 * math.log(2.0)


class UnboundedDecayWarning(UserWarning):
    pass


@dataclass
class FitResult:
    model: str
    params: dict
    std_errors: dict
    residual_norm: float
    converged: bool
    iterations: int
    warnings: list = field(default_factory=list)

    def __post_init__(self):
        if self.converged and not math.isfinite(self.residual_norm):
            raise InvalidParameterError("converged fit with non-finite residual")

    def __getitem__(self, name):
        return self.params[name]

    def to_dict(self):
        return asdict(self)

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    def predict(self, x):
        x = np.asarray(x, dtype=float)
        p = self.params
        if self.model in ("damped_sinusoid", "ramsey"):
            decay = p["decay_time"] if self.model == "damped_sinusoid" else p["t2_star"]
            freq = p["freq"] if self.model == "damped_sinusoid" else p["fringe_freq"]
            env = np.exp(-x / decay) if math.isfinite(decay) else np.ones_like(x)
            return p["offset"] + p["amplitude"] * env * np.cos(2 * math.pi * freq * x + p["phase"])
        if self.model in LINESHAPES:
            return p["baseline"] + p["height"] * _peak(self.model, (x - p["center"]) / p["fwhm"])
        if self.model == "linear":
            return p["intercept"] + p["slope"] * x
        raise InvalidParameterError(f"unknown model {self.model!r}")


def _prepare(x, y, min_points):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 1 or x.shape != y.shape:
        raise InvalidParameterError("x and y must be 1-D arrays of equal length")
    if x.size < min_points:
        raise InvalidParameterError(f"need at least {min_points} points, got {x.size}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise InvalidParameterError("x and y must be finite")
    order = np.argsort(x, kind="stable")
    return x[order], y[order]


def _lm(fun, jac, starts):
    """Run LM from each start and keep the lowest cost; returns (p, result)."""
    best = None
    for p0 in starts:
        with np.errstate(over="ignore", invalid="ignore"):
            try:
                res = optimize.least_squares(fun, p0, jac=jac, method="lm", xtol=XTOL,
                                             ftol=1e-15, gtol=1e-15,
                                             max_nfev=MAX_ITER * (len(p0) + 1))
            except (ValueError, np.linalg.LinAlgError):
                continue
        if not np.all(np.isfinite(res.x)) or not math.isfinite(res.cost):
            continue
        if best is None or res.cost < best.cost:
            best = res
    if best is None:
        raise DegenerateFitError("no start converged to a finite solution")
    return best


def _covariance(res, n):
    """Residual-variance scaled covariance of the internal parameters."""
    J = res.jac
    sv = np.linalg.svd(J, compute_uv=False)
    if sv[-1] <= 1e-12 * sv[0]:
        raise DegenerateFitError("Jacobian is singular at the optimum")
    dof = max(n - J.shape[1], 1)
    s2 = 2.0 * res.cost / dof
    return s2 * np.linalg.inv(J.T @ J)


def _iterations(res):
    return int(res.njev) if res.njev is not None else int(res.nfev)


# --- damped sinusoid -----------------------------------------------------------

def _spectrum_guess(u, v):
    """Frequency (cycles per unit u) and phase of the strongest spectral component."""
    n = u.size
    dv = v - v.mean()
    du = np.median(np.diff(u))
    nyq = 0.5 / du if du > 0 else 0.5 * n
    freqs = np.arange(0.5, nyq, 0.05)
    if freqs.size < 4:
        raise NoOscillationError("scan too short to resolve an oscillation")
    spec = np.exp(-2j * math.pi * np.outer(freqs, u)) @ dv
    power = np.abs(spec) ** 2
    i = int(np.argmax(power))
    if power[i] < 3.0 * np.median(power):
        raise NoOscillationError("no spectral peak above the noise floor")
    return freqs[i], float(np.angle(spec[i])), 2.0 * abs(spec[i]) / n


def _decay_guess(u, v):
    """Decay rate (per unit u) from a straight-line fit to the log of the analytic envelope."""
    d = np.diff(u)
    if not np.allclose(d, d[0], rtol=1e-6) or u.size < 8:
        return 1.0
    env = np.abs(signal.hilbert(v - v.mean()))
    lo, hi = u.size // 10, u.size - u.size // 10
    seg = env[lo:hi]
    if seg.size < 3 or np.any(seg <= 0):
        return 1.0
    slope = np.polyfit(u[lo:hi], np.log(seg), 1)[0]
    return float(np.clip(-slope, 0.0, 20.0))


def _sin_model(p, u):
    a, f, ph, k, c = p
    env = np.exp(-k * u)
    arg = 2 * math.pi * f * u + ph
    return c + a * env * np.cos(arg), env, arg


def _sin_jac(p, u):
    a, f, ph, k, c = p
    _, env, arg = _sin_model(p, u)
    cos, sin = np.cos(arg), np.sin(arg)
    return np.column_stack([
        env * cos,
        -a * env * sin * 2 * math.pi * u,
        -a * env * sin,
        -a * u * env * cos,
        np.ones_like(u),
    ])


def _fit_sinusoid(x, y, model_name):
    x, y = _prepare(x, y, 8)
    if np.ptp(y) <= 1e-12 * max(float(np.max(np.abs(y))), 1e-300):
        raise NoOscillationError("data are constant")
    x0, span = 0.0, x[-1] - x[0]
    if span <= 0:
        raise DegenerateFitError("x values are all identical")
    y_mid = float(np.mean(y))
    scale = float(np.std(y))
    u, v = (x - x0) / span, (y - y_mid) / scale

    f0, ph0, a0 = _spectrum_guess(u, v)
    k0 = _decay_guess(u, v)
    # amplitude at u=0 is larger than the spectral average when the signal decays
    a_start = max(a0, 1e-3) * (1.0 + 0.5 * k0)
    starts = [np.array([a_start, f0, ph0, k, 0.0]) for k in sorted({k0, 0.0, 1.0})]

    def fun(p):
        return _sin_model(p, u)[0] - v

    res = _lm(fun, lambda p: _sin_jac(p, u), starts)
    a, f, ph, k, c = res.x
    cov = _covariance(res, u.size)
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    if a < 0:
        a, ph = -a, ph + math.pi
    ph = float(math.remainder(ph, 2 * math.pi))

    notes = []
    if k > 0:
        decay = span / k
        decay_se = span * se[3] / k**2
    else:
        decay, decay_se = math.inf, math.inf
    if decay > 10 * span:
        msg = f"decay time exceeds 10x the scan length ({span:.3g}); treat it as a lower bound"
        warnings.warn(msg, UnboundedDecayWarning, stacklevel=3)
        notes.append("unbounded_decay")

    freq_key, decay_key = ("freq", "decay_time") if model_name == "damped_sinusoid" \
        else ("fringe_freq", "t2_star")
    params = {"amplitude": float(a * scale), freq_key: float(f / span), "phase": ph,
              decay_key: float(decay), "offset": float(c * scale + y_mid)}
    errs = {"amplitude": float(se[0] * scale), freq_key: float(se[1] / span),
            "phase": float(se[2]), decay_key: float(decay_se), "offset": float(se[4] * scale)}
    return FitResult(model_name, params, errs, float(math.sqrt(2 * res.cost) * scale),
                     bool(res.status > 0), _iterations(res), notes)


def fit_damped_sinusoid(x, y):
    """Fit ``offset + amplitude * exp(-x/decay_time) * cos(2 pi freq x + phase)``."""
    return _fit_sinusoid(x, y, "damped_sinusoid")


def fit_ramsey(x, y):
    """Damped-sinusoid fit with the Ramsey parameter names ``fringe_freq`` and ``t2_star``."""
    return _fit_sinusoid(x, y, "ramsey")


# --- lineshapes -------------------------------------------------------------------

def _peak(kind, z):
    """Unit-height peak with unit FWHM evaluated at ``z = (f - center) / fwhm``."""
    if kind == "gaussian":
        return np.exp(-FOUR_LN2 * z**2)
    if kind == "lorentzian":
        return 1.0 / (1.0 + 4.0 * z**2)
    if kind == "sinc2":
        return np.sinc(SINC2_FWHM * z) ** 2
    raise InvalidParameterError(f"unknown lineshape {kind!r}; choose from {LINESHAPES}")


def _dpeak(kind, z):
    """Derivative of :func:`_peak` with respect to ``z``."""
    if kind == "gaussian":
        return -2.0 * FOUR_LN2 * z * np.exp(-FOUR_LN2 * z**2)
    if kind == "lorentzian":
        return -8.0 * z / (1.0 + 4.0 * z**2) ** 2
    s = SINC2_FWHM * z
    with np.errstate(invalid="ignore", divide="ignore"):
        ps = np.pi * s
        ds = np.where(np.abs(ps) < 1e-8, -ps / 3.0, (np.cos(ps) - np.sinc(s)) / np.where(ps == 0, 1, ps))
    # d/ds sinc(s) = pi * ds
    return 2.0 * np.sinc(s) * np.pi * ds * SINC2_FWHM


def fit_lineshape(f, y, model="gaussian"):
    """Fit a symmetric peak on a baseline; returns ``center``, ``fwhm``, ``height``, ``baseline``."""
    if model not in LINESHAPES:
        raise InvalidParameterError(f"unknown lineshape {model!r}; choose from {LINESHAPES}")
    f, y = _prepare(f, y, 10)
    i = int(np.argmax(y))
    if i == 0 or i == y.size - 1:
        raise EdgePeakError("maximum lies at the edge of the scan; widen the sweep")
    f_mid = 0.5 * (f[0] + f[-1])
    span = f[-1] - f[0]
    base0 = float(np.min(y))
    scale = float(y[i] - base0)
    if scale <= 0:
        raise DegenerateFitError("data are constant")
    u, v = (f - f_mid) / span, (y - base0) / scale

    above = np.nonzero(v >= 0.5)[0]
    w0 = max(u[above[-1]] - u[above[0]], np.median(np.diff(u)))

    def fun(p):
        c, w, h, b = p
        return b + h * _peak(model, (u - c) / w) - v

    def jac(p):
        c, w, h, b = p
        z = (u - c) / w
        dp = _dpeak(model, z)
        return np.column_stack([-h * dp / w, -h * dp * z / w, _peak(model, z), np.ones_like(u)])

    starts = [np.array([u[i], w0 * s, 1.0, 0.0]) for s in (1.0, 0.5, 2.0)]
    res = _lm(fun, jac, starts)
    c, w, h, b = res.x
    se = np.sqrt(np.clip(np.diag(_covariance(res, u.size)), 0.0, None))
    params = {"center": float(c * span + f_mid), "fwhm": float(abs(w) * span),
              "height": float(h * scale), "baseline": float(b * scale + base0)}
    errs = {"center": float(se[0] * span), "fwhm": float(se[1] * span),
            "height": float(se[2] * scale), "baseline": float(se[3] * scale)}
    return FitResult(model, params, errs, float(math.sqrt(2 * res.cost) * scale),
                     bool(res.status > 0), _iterations(res))


# --- straight line ---------------------------------------------------------------

def fit_linear(x, y):
    """Ordinary least squares ``y = intercept + slope * x``."""
    x, y = _prepare(x, y, 3)
    xm, ym = x.mean(), y.mean()
    sxx = float(np.sum((x - xm) ** 2))
    if sxx <= 1e-300 or np.ptp(x) <= 1e-12 * max(abs(xm), 1e-300):
        raise DegenerateFitError("all x values are identical")
    slope = float(np.sum((x - xm) * (y - ym)) / sxx)
    intercept = float(ym - slope * xm)
    resid = y - (intercept + slope * x)
    ssr = float(resid @ resid)
    sst = float(np.sum((y - ym) ** 2))
    n = x.size
    s2 = ssr / (n - 2) if n > 2 else 0.0
    se_slope = math.sqrt(s2 / sxx)
    se_int = math.sqrt(s2 * (1.0 / n + xm**2 / sxx))
    r2 = 1.0 - ssr / sst if sst > 0 else 1.0
    return FitResult("linear", {"slope": slope, "intercept": intercept, "r_squared": r2},
                     {"slope": se_slope, "intercept": se_int, "r_squared": 0.0},
                     math.sqrt(ssr), True, 1)
