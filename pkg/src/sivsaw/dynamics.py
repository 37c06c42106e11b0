"""Lindblad master-equation engine.

Operators handed to :func:`evolve` are in angular frequency (rad/s) and
collapse operators carry the square root of their rate (1/s).  Carrier
frequencies of :class:`DriveTerm` are cyclic (Hz).

The density matrix is integrated as a flattened vector ``vec(rho)`` (row
major) with a Dormand-Prince 5(4) pair; the Liouvillian is assembled as a
``d^2 x d^2`` superoperator once per call, so every right-hand side costs one
small matrix-vector product.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import IntegratorError, InvalidParameterError, StiffnessError

HERMITIAN_TOL = 1e-10
TRACE_TOL = 1e-9
POSITIVITY_TOL = -1e-8
TRACE_DRIFT_LIMIT = 1e-6


@dataclass(frozen=True)
class DensityMatrix:
    entries: np.ndarray

    def __post_init__(self):
        rho = np.array(self.entries, dtype=complex)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
            raise InvalidParameterError("density matrix must be square")
        rho.setflags(write=False)
        object.__setattr__(self, "entries", rho)

    @property
    def dim(self):
        return self.entries.shape[0]

    @classmethod
    def pure(cls, psi):
        psi = np.asarray(psi, dtype=complex)
        psi = psi / np.linalg.norm(psi)
        return cls(np.outer(psi, psi.conj()))

    @classmethod
    def diagonal(cls, populations):
        return cls(np.diag(np.asarray(populations, dtype=complex)))

    def violations(self):
        """``(hermiticity error, trace error, minimum eigenvalue)``."""
        return state_violations(self.entries)

    def check(self):
        check_state(self.entries)
        return self


def state_violations(rho):
    herm = float(np.max(np.abs(rho - rho.conj().T)))
    trace = float(abs(np.trace(rho) - 1.0))
    min_eig = float(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min())
    return herm, trace, min_eig


def check_state(rho):
    herm, trace, min_eig = state_violations(rho)
    if herm > HERMITIAN_TOL or trace > TRACE_TOL or min_eig < POSITIVITY_TOL:
        raise IntegratorError(
            f"invalid density matrix: hermiticity {herm:.2e}, trace {trace:.2e}, "
            f"min eigenvalue {min_eig:.2e}")


@dataclass(frozen=True)
class DriveTerm:
    """``envelope(t) * [cos(2 pi f t + phase) * operator + sin(...) * quadrature]``.

    ``envelope`` maps seconds to rad/s.  Lab-frame drives leave
    ``quadrature`` unset; rotating-frame residuals use it to carry the
    out-of-phase component.
    """

    operator: np.ndarray
    envelope: Callable[[float], float]
    carrier_freq: float = 0.0
    carrier_phase: float = 0.0
    quadrature: Optional[np.ndarray] = None

    def coefficients(self, t):
        amp = self.envelope(t)
        if amp == 0.0:
            return 0.0, 0.0
        arg = 2.0 * math.pi * self.carrier_freq * t + self.carrier_phase
        return amp * math.cos(arg), amp * math.sin(arg)


@dataclass
class EvolutionResult:
    times: np.ndarray
    states: np.ndarray
    expectations: dict = field(default_factory=dict)
    steps: int = 0
    # worst (hermiticity, trace, -min eigenvalue) over the emitted samples
    max_violation: tuple = (0.0, 0.0, 0.0)

    def state(self, i):
        return DensityMatrix(self.states[i])

    @property
    def final(self):
        return self.states[-1]


def _commutator_super(h):
    d = h.shape[0]
    eye = np.eye(d)
    return -1j * (np.kron(h, eye) - np.kron(eye, h.T))


def _dissipator_super(ops):
    d = ops[0].shape[0] if ops else 0
    out = np.zeros((d * d, d * d), dtype=complex)
    eye = np.eye(d)
    for op in ops:
        ldl = op.conj().T @ op
        out += np.kron(op, op.conj()) - 0.5 * np.kron(ldl, eye) - 0.5 * np.kron(eye, ldl.T)
    return out


def liouvillian(h0, collapses=()):
    """Superoperator of ``-i[h0, .] + D[collapses]`` acting on row-major vec(rho)."""
    h0 = np.asarray(h0, dtype=complex)
    sup = _commutator_super(h0)
    if collapses:
        sup = sup + _dissipator_super([np.asarray(c, dtype=complex) for c in collapses])
    return sup


# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4
# coefficients of the free fourth-order continuous extension (Shampine), powers theta^1..theta^4
_P = np.array([
    [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0, 0, 0, 0],
    [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])


class _Rhs:
    def __init__(self, h0, drives, collapses):
        self.static = liouvillian(h0, collapses)
        self.drives = list(drives)
        self.ops = [_commutator_super(np.asarray(d.operator, dtype=complex)) for d in self.drives]
        self.quads = [
            None if d.quadrature is None else _commutator_super(np.asarray(d.quadrature, dtype=complex))
            for d in self.drives
        ]

    def __call__(self, t, y):
        if not self.drives:
            return self.static @ y
        m = self.static
        for drive, op, quad in zip(self.drives, self.ops, self.quads):
            c, s = drive.coefficients(t)
            if c != 0.0:
                m = m + c * op
            if quad is not None and s != 0.0:
                m = m + s * quad
        return m @ y

    def scale(self):
        """Rough spectral scale (1/s) used for the initial step."""
        norm = np.abs(self.static).sum(axis=1).max()
        return max(norm, 1.0)


def _hermitize(y, d):
    rho = y.reshape(d, d)
    return (0.5 * (rho + rho.conj().T)).reshape(-1)


def _breakpoints(drives, t0, t1):
    pts = {t0, t1}
    for d in drives:
        for b in getattr(d.envelope, "breakpoints", ()):
            if t0 < b < t1:
                pts.add(float(b))
    return sorted(pts)


def evolve(rho0, h0, drives=(), collapses=(), t_span=(0.0, 1e-9), tol=1e-9,
           sample_times=None, observables=None, check_states=True, max_steps=2_000_000):
    """Integrate the Lindblad equation from ``t_span[0]`` to ``t_span[1]``.

    Parameters
    ----------
    rho0 : DensityMatrix or ndarray
    h0 : ndarray
        Static Hamiltonian (rad/s).
    drives : sequence of DriveTerm
    collapses : sequence of ndarray
        Collapse operators scaled by the square root of their rate.
    tol : float
        Maximum local error per step (absolute, on the matrix entries).
    sample_times : array, optional
        Times at which states are recorded; defaults to the two endpoints.
        Samples between steps use the integrator's fourth-order continuous extension.
    observables : dict name -> operator, optional
        Expectation values recorded at each sample.

    The state is re-Hermitized after every step; the trace is never
    renormalised, and a drift beyond 1e-6 raises :class:`IntegratorError`.
    """
    rho0 = rho0.entries if isinstance(rho0, DensityMatrix) else np.asarray(rho0, dtype=complex)
    t0, t1 = map(float, t_span)
    if not t1 > t0:
        raise InvalidParameterError("t_span must be a non-empty interval")
    if not 1e-12 <= tol <= 1e-4:
        raise InvalidParameterError("tol must lie in [1e-12, 1e-4]")
    d = rho0.shape[0]
    if sample_times is None:
        sample_times = np.array([t0, t1])
    sample_times = np.asarray(sample_times, dtype=float)
    if sample_times.size and (sample_times.min() < t0 - 1e-18 or sample_times.max() > t1 + 1e-18):
        raise InvalidParameterError("sample times outside t_span")
    if sample_times.size > 1 and np.any(np.diff(sample_times) <= 0):
        raise InvalidParameterError("sample times must be strictly increasing")
    if check_states:
        check_state(rho0)

    rhs = _Rhs(h0, drives, collapses)
    y = rho0.reshape(-1).astype(complex)
    trace0 = np.trace(rho0).real
    out = np.empty((sample_times.size, d * d), dtype=complex)
    next_sample = 0
    while next_sample < sample_times.size and sample_times[next_sample] <= t0:
        out[next_sample] = y
        next_sample += 1

    steps = 0
    h = None
    t = t0
    f = rhs(t, y)
    edges = _breakpoints(drives, t0, t1)
    for a, b in zip(edges[:-1], edges[1:]):
        t = a
        if h is None:
            h = min(b - a, 0.01 / rhs.scale())
        h = min(h, b - a)
        f = rhs(t, y)
        while t < b:
            if steps >= max_steps:
                raise StiffnessError("maximum number of steps exceeded")
            last = False
            if t + h >= b - 1e-15 * max(abs(b), 1e-30):
                h = b - t
                last = True
            if h < 1e-14 * max(abs(t), t1 - t0):
                raise StiffnessError(f"step size underflow at t = {t:.6e} s")
            k = [f]
            for i in range(1, 7):
                yi = y + h * sum(coef * k[j] for j, coef in enumerate(_A[i]) if coef != 0.0)
                k.append(rhs(t + _C[i] * h, yi))
            y_new = y + h * sum(_B5[j] * k[j] for j in range(6) if _B5[j] != 0.0)
            err_vec = h * sum(_E[j] * k[j] for j in range(7) if _E[j] != 0.0)
            err = float(np.max(np.abs(err_vec)))
            if err <= tol:
                t_new = b if last else t + h
                y_new = _hermitize(y_new, d)
                f_new = rhs(t_new, y_new)
                while next_sample < sample_times.size and sample_times[next_sample] <= t_new:
                    ts = sample_times[next_sample]
                    out[next_sample] = y_new if ts == t_new else _dense(t, t_new - t, y, k, ts)
                    next_sample += 1
                t, y, f = t_new, y_new, f_new
                steps += 1
                drift = abs(y.reshape(d, d).trace().real - trace0)
                if drift > TRACE_DRIFT_LIMIT:
                    raise IntegratorError(f"trace drift {drift:.3e} at t = {t:.6e} s")
                factor = 5.0 if err == 0.0 else min(5.0, 0.9 * (tol / err) ** 0.2)
                h = h * max(factor, 0.2)
            else:
                h = h * max(0.2, 0.9 * (tol / err) ** 0.25)

    while next_sample < sample_times.size:
        out[next_sample] = y
        next_sample += 1

    states = out.reshape(-1, d, d)
    states = 0.5 * (states + states.conj().transpose(0, 2, 1))
    worst = (0.0, 0.0, 0.0)
    if check_states:
        for rho in states:
            herm, tr, mn = state_violations(rho)
            worst = (max(worst[0], herm), max(worst[1], tr), max(worst[2], -mn))
            if herm > HERMITIAN_TOL or tr > TRACE_TOL or mn < POSITIVITY_TOL:
                raise IntegratorError(
                    f"state left the physical set: hermiticity {herm:.2e}, "
                    f"trace {tr:.2e}, min eigenvalue {mn:.2e}")
    expectations = {}
    for name, op in (observables or {}).items():
        expectations[name] = np.einsum("nij,ji->n", states, np.asarray(op)).real
    return EvolutionResult(sample_times, states, expectations, steps, worst)


def _dense(t, h, y, k, ts):
    """State at ``ts`` inside the accepted step ``[t, t + h]`` from the stage derivatives."""
    theta = (ts - t) / h
    return y + h * (np.stack(k, axis=1) @ (_P @ np.cumprod(np.full(4, theta))))


def rotating_frame(h0, drive, frame_freq, frame_numbers, rwa=True):
    """Move ``h0`` and ``drive`` into a frame rotating at ``frame_freq``.

    The frame is ``U(t) = exp(i 2 pi frame_freq t N)`` with ``N`` the diagonal
    ``frame_numbers``; ``h0`` must commute with ``N``.  A state in the frame
    maps back to the lab through ``rho_lab = U^dagger rho U``; populations are
    frame independent.

    Returns ``(static, drives)``: the static term ``h0 - 2 pi frame_freq N``
    and a list of residual :class:`DriveTerm`.  The co-rotating residual is
    always first.  With ``rwa=False`` the counter-rotating residual (carrier
    ``f_c + frame_freq``) and any number-conserving part follow, so the
    transformation is exact.
    """
    if frame_freq <= 0:
        raise InvalidParameterError("frame_freq must be positive")
    h0 = np.asarray(h0, dtype=complex)
    n = np.asarray(frame_numbers, dtype=float)
    nmat = np.diag(n)
    if np.max(np.abs(h0 @ nmat - nmat @ h0)) > 1e-9 * max(1.0, np.max(np.abs(h0))):
        raise InvalidParameterError("h0 must commute with the frame generator")
    static = h0 - 2.0 * math.pi * frame_freq * nmat

    if drive is None:
        return static, []
    x = np.asarray(drive.operator, dtype=complex)
    if drive.quadrature is not None:
        raise InvalidParameterError("drive is already in a rotating frame")
    dn = n[:, None] - n[None, :]
    if np.any((np.abs(dn) > 1.5) & (np.abs(x) > 0)):
        raise InvalidParameterError("drive connects levels differing by more than one quantum")
    k = np.where(np.isclose(dn, 1.0), x, 0.0)
    kdag = k.conj().T
    co = DriveTerm(
        operator=0.5 * (k + kdag),
        quadrature=-0.5j * (k - kdag),
        envelope=drive.envelope,
        carrier_freq=drive.carrier_freq - frame_freq,
        carrier_phase=drive.carrier_phase,
    )
    drives = [co]
    if not rwa:
        drives.append(DriveTerm(
            operator=0.5 * (k + kdag),
            quadrature=0.5j * (k - kdag),
            envelope=drive.envelope,
            carrier_freq=drive.carrier_freq + frame_freq,
            carrier_phase=drive.carrier_phase,
        ))
        same = np.where(np.isclose(dn, 0.0), x, 0.0)
        if np.any(same != 0):
            drives.append(DriveTerm(operator=same, envelope=drive.envelope,
                                    carrier_freq=drive.carrier_freq,
                                    carrier_phase=drive.carrier_phase))
    return static, drives


def rabi_analytic(omega, delta, t):
    """Two-level transfer probability for Rabi frequency ``omega`` and detuning ``delta`` (Hz)."""
    if omega < 0:
        raise InvalidParameterError("omega must be non-negative")
    w2 = omega**2 + delta**2
    if w2 == 0:
        return np.zeros_like(np.asarray(t, dtype=float)) if np.ndim(t) else 0.0
    return omega**2 / w2 * np.sin(np.pi * np.sqrt(w2) * np.asarray(t)) ** 2


def expectation(rho, op):
    """Real part of ``tr(rho op)``; a sizeable imaginary part is an error."""
    rho = rho.entries if isinstance(rho, DensityMatrix) else np.asarray(rho)
    op = np.asarray(op)
    if rho.shape != op.shape:
        raise InvalidParameterError(f"dimension mismatch {rho.shape} vs {op.shape}")
    val = np.trace(rho @ op)
    if abs(val.imag) > 1e-10:
        raise InvalidParameterError(f"expectation has imaginary part {val.imag:.3e}; operator not Hermitian?")
    return float(val.real)


def purity(rho):
    rho = rho.entries if isinstance(rho, DensityMatrix) else np.asarray(rho)
    return float(np.trace(rho @ rho).real)


def embed(op, indices, dim):
    """Place a small operator on the given ``indices`` of a ``dim``-level space."""
    out = np.zeros((dim, dim), dtype=complex)
    idx = np.asarray(indices)
    out[np.ix_(idx, idx)] = op
    return out
