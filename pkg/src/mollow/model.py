"""Driven two-level emitter plus filter sensors.

All frequencies are in the frame rotating at the drive laser and in
units of the emitter decay rate (gamma = 1 by default): the emitter
detuning is  w_e = omega_emitter - omega_laser,  a sensor center is
w_k = omega_k - omega_laser.

Emitter Hamiltonian:   H_e = w_e s+ s  +  Om (s+ + s)
Sensor k Hamiltonian:  H_k = w_k x+ x  +  eps (s+ x + x+ s)
Dissipators: (gamma, s) and (Gamma_k, x_k).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import CapacityError, ParameterError, RegimeError
from .operators import SpaceLayout, annihilation_op, build_liouvillian, lift

#: Hard cap on the composite dimension (raise truncations consciously).
DIMENSION_CAP = 4096


@dataclass(frozen=True)
class SystemParams:
    """Physical parameters of the driven two-level emitter."""

    rabi: float                 # drive amplitude Om, units of gamma
    detuning: float = 0.0       # w_e = omega_emitter - omega_laser
    gamma: float = 1.0          # emitter decay rate, the global unit

    def __post_init__(self):
        if self.gamma <= 0:
            raise ParameterError(f"gamma must be positive, got {self.gamma}")
        if self.rabi < 0:
            raise ParameterError(f"rabi must be nonnegative, got {self.rabi}")


@dataclass(frozen=True)
class SensorSpec:
    """One filter mode: a weakly coupled bosonic sensor.

    ``bundle_order`` is the number of photons the sensor detects jointly;
    the default truncation keeps exactly bundle_order + 1 Fock states.
    """

    frequency: float            # w_k = omega_k - omega_laser
    linewidth: float            # Gamma_k > 0
    bundle_order: int = 1
    truncation: int | None = None

    def __post_init__(self):
        if self.linewidth <= 0:
            raise ParameterError(f"sensor linewidth must be positive, got {self.linewidth}")
        if self.bundle_order < 1:
            raise ParameterError(f"bundle order must be >= 1, got {self.bundle_order}")
        if self.truncation is not None and self.truncation < self.bundle_order + 1:
            raise ParameterError(
                f"truncation {self.truncation} too small for bundle order {self.bundle_order}"
            )

    @property
    def dim(self) -> int:
        return self.truncation if self.truncation is not None else self.bundle_order + 1


@dataclass
class CompositeModel:
    """Assembled emitter-plus-sensors model; immutable after construction."""

    params: SystemParams
    sensors: tuple[SensorSpec, ...]
    epsilon: float
    layout: SpaceLayout
    hamiltonian: object
    dissipators: list          # [(rate, lifted collapse operator), ...]
    sigma: object              # lifted emitter lowering operator
    xi: tuple                  # lifted sensor lowering operators
    _liouvillian: object = field(default=None, repr=False)

    def liouvillian(self, sparse: bool | None = None):
        if self._liouvillian is None or sparse is not None:
            L = build_liouvillian(self.hamiltonian, self.dissipators,
                                  self.layout, sparse=sparse)
            if sparse is None:
                self._liouvillian = L
            return L
        return self._liouvillian

    def sensor_excitations(self) -> np.ndarray:
        """Total sensor Fock number of each composite basis state."""
        exc = np.zeros(self.layout.total_dim)
        for slot in range(1, len(self.layout.dims)):
            exc += self.layout.local_indices(slot)
        return exc


@dataclass(frozen=True)
class DressedInfo:
    """Triplet splitting of the dressed emitter-laser ladder."""

    omega0: float               # bare splitting, omega0^2 = 4 Om^2 + w_e^2
    omega_plus: float           # dissipation-corrected splitting
    peak_positions: tuple[float, float, float]


def default_epsilon(params: SystemParams, sensors) -> float:
    """Perturbative sensor coupling: well below the geometric mean of the
    emitter and narrowest filter rates, so sensor occupations stay << 1."""
    if not sensors:
        return 0.05 * params.gamma
    gmin = min(s.linewidth for s in sensors)
    return 0.05 * math.sqrt(params.gamma * gmin)


def splitting_corrected(rabi: float, detuning: float, gamma: float = 1.0) -> float:
    """Triplet half-splitting with dissipative corrections.

    The inner discriminant uses the dimensionally consistent gamma^4
    term; see ``splitting_printed`` for the variant with a bare gamma
    that circulates in the literature. Returns NaN-free value or raises
    ``RegimeError`` when either square root turns negative (weak drive).
    """
    o0sq = 4.0 * rabi**2 + detuning**2
    inner = 9.0 * gamma**4 + 16.0 * o0sq**2 - 24.0 * gamma**2 * (16.0 * rabi**2 + o0sq)
    if inner < 0:
        raise RegimeError("no triplet: inner discriminant negative (drive too weak)")
    outer = 8.0 * o0sq - 6.0 * gamma**2 + math.sqrt(inner)
    if outer <= 0:
        raise RegimeError("no triplet: splitting not real (drive too weak)")
    return math.sqrt(outer) / (2.0 * math.sqrt(3.0))


def splitting_printed(rabi: float, detuning: float, gamma: float = 1.0) -> float:
    """Literal form with a first-power gamma inside the inner square root.

    Dimensionally inconsistent; exposed only for comparison against
    ``splitting_corrected``.
    """
    o0sq = 4.0 * rabi**2 + detuning**2
    inner = 9.0 * gamma + 16.0 * o0sq**2 - 24.0 * gamma**2 * (16.0 * rabi**2 + o0sq)
    if inner < 0:
        raise RegimeError("no triplet: inner discriminant negative (drive too weak)")
    outer = 8.0 * o0sq - 6.0 * gamma**2 + math.sqrt(inner)
    if outer <= 0:
        raise RegimeError("no triplet: splitting not real (drive too weak)")
    return math.sqrt(outer) / (2.0 * math.sqrt(3.0))


def dressed_splitting(params: SystemParams) -> DressedInfo:
    """Splitting and peak positions of the fluorescence triplet."""
    o0 = math.sqrt(4.0 * params.rabi**2 + params.detuning**2)
    op = splitting_corrected(params.rabi, params.detuning, params.gamma)
    return DressedInfo(omega0=o0, omega_plus=op, peak_positions=(-op, 0.0, op))


def drive_for_target_splitting(target: float, detuning: float = 0.0,
                               gamma: float = 1.0) -> float:
    """Invert the splitting formula: drive amplitude giving ``target``.

    Root-found on the corrected splitting; the result round-trips through
    :func:`dressed_splitting` to 1e-6 relative.
    """
    if target <= 0:
        raise ParameterError(f"target splitting must be positive, got {target}")

    def f(rabi):
        try:
            return splitting_corrected(rabi, detuning, gamma) - target
        except RegimeError:
            return -target

    lo, hi = 1e-9, max(2.0 * target, 10.0 * gamma)
    if f(lo) >= 0 or f(hi) <= 0:
        raise ParameterError(
            f"no drive amplitude reaches splitting {target} at detuning {detuning}"
        )
    rabi = brentq(f, lo, hi, xtol=1e-14, rtol=8.9e-16)
    return float(rabi)


def build_model(params: SystemParams, sensors, epsilon: float | None = None) -> CompositeModel:
    """Assemble the composite Hamiltonian, dissipators and lifted operators.

    ``sensors`` may be empty (bare emitter). ``epsilon`` defaults to the
    perturbative choice of :func:`default_epsilon`.
    """
    sensors = tuple(sensors)
    if epsilon is None:
        epsilon = default_epsilon(params, sensors)
    if epsilon <= 0:
        raise ParameterError(f"sensor coupling must be positive, got {epsilon}")

    dims = (2,) + tuple(s.dim for s in sensors)
    total = int(np.prod(dims))
    if total > DIMENSION_CAP:
        raise CapacityError(
            f"composite dimension {total} exceeds cap {DIMENSION_CAP}; "
            "lower sensor truncations or split the request"
        )
    layout = SpaceLayout(dims)

    sigma = lift(annihilation_op(2), 0, layout)
    xi = tuple(lift(annihilation_op(s.dim), k + 1, layout)
               for k, s in enumerate(sensors))

    dag = lambda a: a.conj().T
    H = params.detuning * (dag(sigma) @ sigma) + params.rabi * (sigma + dag(sigma))
    for s, x in zip(sensors, xi):
        H = H + s.frequency * (dag(x) @ x) + epsilon * (dag(sigma) @ x + dag(x) @ sigma)

    dissipators = [(params.gamma, sigma)]
    dissipators += [(s.linewidth, x) for s, x in zip(sensors, xi)]

    return CompositeModel(params=params, sensors=sensors, epsilon=float(epsilon),
                          layout=layout, hamiltonian=H, dissipators=dissipators,
                          sigma=sigma, xi=xi)
