"""Ground-state Hamiltonian of the SiV centre and its spin-qubit reduction.

Basis convention (used everywhere in this module)::

    index   0        1        2        3
    state   |e+ up>  |e+ dn>  |e- up>  |e- dn>

i.e. orbital (e+, e-) tensor spin (up, down).  All Hamiltonians returned here
are in cyclic frequency (Hz); the dynamics engine multiplies by 2*pi.

The terms are

* spin-orbit ``(lambda_so / 2) Lz (x) sz`` which puts ``|e+ dn>`` and
  ``|e- up>`` in the lower branch,
* spin Zeeman ``(gamma_s / 2) B . sigma`` and quenched orbital Zeeman
  ``q_orbital (gamma_s / 2) Bz Lz``,
* A1g strain ``f_a1g eps_a1g`` times identity,
* Eg strain ``d_orbital (eps_x + i eps_y)`` on the ``<e+|...|e->`` element.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import lru_cache

import numpy as np
from scipy import constants

from .errors import (
    AmbiguousLabelError,
    DegeneracyError,
    InvalidParameterError,
    OutOfRangeError,
)

#: Angle between a <111> SiV axis and the [100] surface normal.
MAGIC_ANGLE = math.acos(1.0 / math.sqrt(3.0))

_ORB_Z = np.diag([1.0, -1.0]).astype(complex)
_ORB_X = np.array([[0, 1], [1, 0]], dtype=complex)
_SX = np.array([[0, 1], [1, 0]], dtype=complex)
_SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
_SZ = np.diag([1.0, -1.0]).astype(complex)
_I2 = np.eye(2, dtype=complex)

#: Projector onto spin-down components in the 4-level basis.
SPIN_DOWN = np.kron(_I2, np.diag([0.0, 1.0])).astype(complex)


@dataclass(frozen=True)
class SivModelParams:
    """Physical constants of one SiV centre.

    Frequencies in Hz, susceptibilities in Hz per unit strain, field in tesla
    expressed in the SiV frame (z along the defect axis).
    """

    lambda_so: float = 50e9
    d_orbital: float = 1e15
    f_a1g: float = 1e15
    gamma_s: float = 28.025e9
    q_orbital: float = 0.1
    b_field: tuple = (0.0, 0.0, 0.0)
    es_decay_rate: float = 1.0 / 1.7e-9
    branching_spin_conserving: float = 0.9
    temperature: float = 5.8
    orbital_t1: float = 20e-9

    def __post_init__(self):
        object.__setattr__(self, "b_field", tuple(float(b) for b in self.b_field))
        self.validate()

    def validate(self):
        values = [self.lambda_so, self.d_orbital, self.f_a1g, self.gamma_s,
                  self.q_orbital, self.es_decay_rate, self.branching_spin_conserving,
                  self.temperature, self.orbital_t1, *self.b_field]
        if len(self.b_field) != 3:
            raise InvalidParameterError("b_field must have three components")
        if not all(math.isfinite(v) for v in values):
            raise InvalidParameterError("non-finite SiV model parameter")
        if self.lambda_so <= 0 or self.d_orbital <= 0 or self.temperature <= 0:
            raise InvalidParameterError("lambda_so, d_orbital and temperature must be positive")
        if not 0.0 <= self.branching_spin_conserving <= 1.0:
            raise InvalidParameterError("branching_spin_conserving must lie in [0, 1]")
        if self.es_decay_rate < 0 or self.orbital_t1 <= 0:
            raise InvalidParameterError("rates and lifetimes must be positive")

    def with_field(self, magnitude, direction):
        direction = np.asarray(direction, dtype=float)
        direction = direction / np.linalg.norm(direction)
        return replace(self, b_field=tuple(magnitude * direction))


@dataclass(frozen=True)
class StrainInput:
    eps_a1g: float = 0.0
    eps_egx: float = 0.0
    eps_egy: float = 0.0

    def __post_init__(self):
        comps = (self.eps_a1g, self.eps_egx, self.eps_egy)
        if not all(math.isfinite(c) for c in comps):
            raise InvalidParameterError("strain components must be finite")
        if max(abs(c) for c in comps) > 1e-2:
            warnings.warn("strain beyond 1e-2 leaves the linear-response regime",
                          RuntimeWarning, stacklevel=2)


@dataclass(frozen=True)
class QubitReduction:
    """Two lowest eigenstates of the undriven ground-state Hamiltonian.

    ``projectors[0]`` belongs to the spin-down-like state ``|e+ dn>``,
    ``projectors[1]`` to the spin-up-like state ``|e- up>``.
    ``energies`` are the matching eigenvalues (Hz).
    """

    qubit_freq: float
    spin_strain_rate: float
    projectors: tuple
    energies: tuple = field(default=(0.0, 0.0))
    states: tuple = field(default=(), repr=False)

    @property
    def down_is_lower(self):
        return self.energies[0] <= self.energies[1]


class OpticalTransition(Enum):
    """Fine-structure lines of the C transition.

    Value is ``(ground qubit label, excited spin character, spin flipping)``.
    Only C1 and C3 take part in the pumping model.
    """

    C1 = ("down", "up", True)
    C2 = ("down", "down", False)
    C3 = ("up", "up", False)
    C4 = ("up", "down", True)

    @property
    def spin_flipping(self):
        return self.value[2]


def default_field_direction(angle=MAGIC_ANGLE):
    """Unit vector in the x-z plane at ``angle`` from the SiV axis."""
    return np.array([math.sin(angle), 0.0, math.cos(angle)])


def eg_strain_operator(params):
    """Derivative of the Hamiltonian with respect to unit Eg-x strain (Hz)."""
    return params.d_orbital * np.kron(_ORB_X, _I2)


def build_ground_hamiltonian(params, strain=None):
    """Return the 4x4 ground-state Hamiltonian in Hz.

    Hermiticity holds by construction: every off-diagonal block is written
    once and mirrored with its conjugate.
    """
    if strain is None:
        strain = StrainInput()
    params.validate()
    bx, by, bz = params.b_field
    h = (params.lambda_so / 2.0) * np.kron(_ORB_Z, _SZ)
    h = h + (params.gamma_s / 2.0) * np.kron(_I2, bx * _SX + by * _SY + bz * _SZ)
    h = h + params.q_orbital * (params.gamma_s / 2.0) * bz * np.kron(_ORB_Z, _I2)
    h = h + params.f_a1g * strain.eps_a1g * np.eye(4)

    coupling = params.d_orbital * complex(strain.eps_egx, strain.eps_egy)
    orb = np.array([[0.0, coupling], [np.conj(coupling), 0.0]], dtype=complex)
    h = h + np.kron(orb, _I2)
    # Pauli-y and the mirrored Eg element are exactly conjugate; keep diagonal real.
    h[np.diag_indices(4)] = h.diagonal().real
    return h


def _lowest_pair(h, perturbation, spin_down):
    """Diagonalise ``h`` and extract the qubit pair.

    Returns ``(energies, states, rate)`` ordered (down-like, up-like).
    Exposed separately so basis permutations can be checked in tests.
    """
    vals, vecs = np.linalg.eigh(h)
    down_weight = np.einsum("ij,ik,kj->j", vecs.conj(), spin_down, vecs).real
    order = np.lexsort((-down_weight, vals))
    vals, vecs, down_weight = vals[order], vecs[:, order], down_weight[order]

    if abs(vals[1] - vals[0]) < 1e3:
        raise DegeneracyError(
            f"lowest pair split by {abs(vals[1] - vals[0]):.3g} Hz; field cannot define a qubit")
    pair = [0, 1]
    for i in pair:
        purity = max(down_weight[i], 1.0 - down_weight[i])
        if purity < 0.501:
            raise AmbiguousLabelError(f"eigenstate {i} has spin purity {purity:.4f}")
    if (down_weight[0] > 0.5) == (down_weight[1] > 0.5):
        raise AmbiguousLabelError("both qubit states carry the same spin label")
    if down_weight[0] < 0.5:
        pair = [1, 0]
    states = [vecs[:, i] for i in pair]
    energies = [float(vals[i]) for i in pair]
    rate = float(abs(states[0].conj() @ perturbation @ states[1]))
    return energies, states, rate


def qubit_reduction(h, params):
    """Identify the ``|e+ dn>`` / ``|e- up>`` qubit in an undriven Hamiltonian."""
    energies, states, rate = _lowest_pair(h, eg_strain_operator(params), SPIN_DOWN)
    projectors = tuple(np.outer(s, s.conj()) for s in states)
    return QubitReduction(
        qubit_freq=abs(energies[1] - energies[0]),
        spin_strain_rate=rate,
        projectors=projectors,
        energies=tuple(energies),
        states=tuple(states),
    )


@lru_cache(maxsize=64)
def reduce_params(params):
    """Qubit reduction of ``params`` at zero strain (cached per parameter set)."""
    return qubit_reduction(build_ground_hamiltonian(params), params)


def _lowest_splitting(params, magnitude, direction):
    h = build_ground_hamiltonian(params.with_field(magnitude, direction))
    vals = np.linalg.eigvalsh(h)
    return vals[1] - vals[0]


def tune_field_to_qubit_freq(params, target, direction=None, b_max=10.0, tol=1e3):
    """Field magnitude (T) along ``direction`` giving a qubit splitting ``target`` (Hz).

    A coarse scan brackets the first crossing, then bisection refines it
    until the splitting is within ``tol``.
    """
    if target < 0:
        raise InvalidParameterError("target frequency must be non-negative")
    if target == 0:
        return 0.0
    if direction is None:
        direction = default_field_direction()

    grid = np.linspace(0.0, b_max, 2001)
    prev = _lowest_splitting(params, grid[0], direction) - target
    lo = hi = None
    for b in grid[1:]:
        cur = _lowest_splitting(params, b, direction) - target
        if prev < 0 <= cur:
            lo, hi = b - grid[1], b
            break
        prev = cur
    if lo is None:
        raise OutOfRangeError(f"{target:.4g} Hz qubit splitting unreachable below {b_max} T")

    for _ in range(200):
        mid = 0.5 * (lo + hi)
        err = _lowest_splitting(params, mid, direction) - target
        if abs(err) < tol * 1e-3 or hi - lo < 1e-15:
            return mid
        if err < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def thermal_rates(base_rate, freq, temperature):
    """Downward and upward relaxation rates in detailed balance.

    ``base_rate`` is the zero-temperature downward rate; both rates carry the
    Bose factor so that ``up / down = exp(-h f / k T)``.
    """
    if base_rate < 0:
        raise InvalidParameterError("relaxation rate must be non-negative")
    if math.isinf(temperature):
        return base_rate, base_rate
    x = constants.h * freq / (constants.k * temperature)
    n_th = 1.0 / math.expm1(x) if x > 0 else math.inf
    if math.isinf(n_th):
        return base_rate, base_rate
    return base_rate * (n_th + 1.0), base_rate * n_th


def collapse_operators(params, reduction, pure_dephasing_rate, relaxation_rate=0.0):
    """Lindblad operators on the qubit subspace, basis order (down, up).

    ``pure_dephasing_rate`` is the decay rate (1/s) of the qubit coherence, so
    ``1 / T2*`` gives a free-induction decay with time constant ``T2*``.
    ``relaxation_rate`` (default off) adds thermal relaxation from the
    upper to the lower qubit level plus its detailed-balance partner.
    Operators carry the square root of their rate; zero rates are omitted.
    """
    if pure_dephasing_rate < 0 or relaxation_rate < 0:
        raise InvalidParameterError("collapse rates must be non-negative")
    ops = []
    if pure_dephasing_rate > 0:
        ops.append(math.sqrt(pure_dephasing_rate / 2.0) * np.diag([1.0, -1.0]).astype(complex))
    if relaxation_rate > 0:
        down, up = thermal_rates(relaxation_rate, reduction.qubit_freq, params.temperature)
        # index 0 is the down-like state; relaxation lands in whichever is lower
        lower, upper = (0, 1) if reduction.down_is_lower else (1, 0)
        lower_op = np.zeros((2, 2), dtype=complex)
        lower_op[lower, upper] = 1.0
        ops.append(math.sqrt(down) * lower_op)
        if up > 0:
            ops.append(math.sqrt(up) * lower_op.T.copy())
    return ops


def boltzmann_populations(reduction, temperature):
    """Thermal populations of (down, up) at ``temperature``."""
    e = np.array(reduction.energies)
    w = np.exp(-(e - e.min()) * constants.h / (constants.k * temperature))
    return w / w.sum()
