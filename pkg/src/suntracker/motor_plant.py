"""Two-phase stepper motor in the rotor-aligned d-q frame.

The public API works on small immutable value types.  The same equations are
also exposed as numba kernels operating on a packed parameter vector so that
the closed-loop simulation can run them without Python overhead.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from typing import Any, Mapping, NamedTuple

import numpy as np
from numba import njit

from .errors import DomainError

# Layout of the packed parameter vector consumed by the jitted kernels.
P_R, P_L, P_J, P_N, P_K, P_FV, P_C, P_VMAX, P_SIGN = range(9)
N_PACKED = 9


@dataclass(frozen=True)
class MotorParams:
    """Electrical and mechanical constants of one axis drive.

    ``C`` is the nominal constant load torque.  ``paper_literal_signs``
    flips the orientation of the ``N*L*omega*i_d`` coupling in the q-axis
    current equation, which makes the model non-dissipative; it exists only
    for comparison runs.
    """

    R: float = 3.15
    L: float = 8.15e-3
    J: float = 3.0145e-4
    N: int = 50
    K: float = 0.433
    f_v: float = 0.0172
    C: float = 0.780
    V_max: float = 24.0
    paper_literal_signs: bool = False

    def __post_init__(self) -> None:
        for name in ("R", "L", "J", "K", "f_v", "V_max"):
            value = getattr(self, name)
            if not _finite(value) or value <= 0.0:
                raise DomainError(f"motor parameter {name} must be finite and > 0, got {value!r}")
        if not _finite(self.C) or self.C < 0.0:
            raise DomainError(f"load torque C must be finite and >= 0, got {self.C!r}")
        if isinstance(self.N, bool) or not _finite(self.N) or self.N < 1 or float(self.N) != int(self.N):
            raise DomainError(f"spin number N must be an integer >= 1, got {self.N!r}")
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "paper_literal_signs", bool(self.paper_literal_signs))

    @property
    def coupling_sign(self) -> float:
        """Sign applied to ``N*L*omega*i_d`` in the q-axis equation."""
        return 1.0 if self.paper_literal_signs else -1.0

    def packed(self) -> np.ndarray:
        out = np.empty(N_PACKED)
        out[P_R], out[P_L], out[P_J], out[P_N] = self.R, self.L, self.J, self.N
        out[P_K], out[P_FV], out[P_C], out[P_VMAX] = self.K, self.f_v, self.C, self.V_max
        out[P_SIGN] = self.coupling_sign
        return out

    def to_mapping(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "MotorParams":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise DomainError(f"unknown motor parameter(s): {', '.join(unknown)}")
        return cls(**dict(data))


class MotorState(NamedTuple):
    """Plant state. ``theta`` is unwrapped."""

    i_d: float = 0.0
    i_q: float = 0.0
    omega: float = 0.0
    theta: float = 0.0


class DqInput(NamedTuple):
    v_d: float = 0.0
    v_q: float = 0.0


class StateDerivative(NamedTuple):
    di_d: float
    di_q: float
    domega: float
    dtheta: float


class FlatTrajectory(NamedTuple):
    """Flat outputs (position and d-axis current) with the derivatives the inverse needs."""

    y1: float = 0.0
    y1_d: float = 0.0
    y1_dd: float = 0.0
    y1_ddd: float = 0.0
    y2: float = 0.0
    y2_d: float = 0.0
    C: float = 0.0
    C_d: float = 0.0


def _finite(x: Any) -> bool:
    try:
        return math.isfinite(x)
    except TypeError:
        return False


def _require_finite(label: str, values) -> None:
    for v in values:
        if not _finite(v):
            raise DomainError(f"{label} contains a non-finite value: {tuple(values)!r}")


@njit(cache=True)
def electrical_mechanical_rhs(prm, i_d, i_q, omega, v_d, v_q, load):
    """Current, speed derivatives of the d-q model (position rate is omega)."""
    R = prm[P_R]
    L = prm[P_L]
    J = prm[P_J]
    NL = prm[P_N] * L
    K = prm[P_K]
    did = (v_d - R * i_d + NL * omega * i_q) / L
    diq = (v_q - R * i_q + prm[P_SIGN] * NL * omega * i_d - K * omega) / L
    dw = (K * i_q - prm[P_FV] * omega - load) / J
    return did, diq, dw


@njit(cache=True)
def frozen_rhs(prm, omega_frozen, i_d, i_q, omega, v_d, v_q, load):
    """Same as the full model but with the coupling velocity held at ``omega_frozen``."""
    R = prm[P_R]
    L = prm[P_L]
    NL = prm[P_N] * L
    K = prm[P_K]
    did = (v_d - R * i_d + NL * omega_frozen * i_q) / L
    diq = (v_q - R * i_q + prm[P_SIGN] * NL * omega_frozen * i_d - K * omega) / L
    dw = (K * i_q - prm[P_FV] * omega - load) / prm[P_J]
    return did, diq, dw


@njit(cache=True)
def flat_inverse_kernel(prm, y1, y1_d, y1_dd, y1_ddd, y2, y2_d, load, load_d):
    """Returns (i_d, i_q, omega, theta, di_q/dt, v_d, v_q) along a flat trajectory."""
    R = prm[P_R]
    L = prm[P_L]
    J = prm[P_J]
    NL = prm[P_N] * L
    K = prm[P_K]
    fv = prm[P_FV]
    i_q = (J * y1_dd + fv * y1_d + load) / K
    di_q = (J * y1_ddd + fv * y1_dd + load_d) / K
    v_d = L * y2_d + R * y2 - NL * y1_d * i_q
    v_q = L * di_q + R * i_q - prm[P_SIGN] * NL * y1_d * y2 + K * y1_d
    return y2, i_q, y1_d, y1, di_q, v_d, v_q


def derivatives(p: MotorParams, s: MotorState, u: DqInput, load: float) -> StateDerivative:
    """Time derivative of the plant state under input ``u`` and total load torque ``load``."""
    _require_finite("state", tuple(s))
    _require_finite("input", tuple(u))
    _require_finite("load", (load,))
    did, diq, dw = electrical_mechanical_rhs(p.packed(), s.i_d, s.i_q, s.omega, u.v_d, u.v_q, float(load))
    return StateDerivative(did, diq, dw, s.omega)


def state_space(p: MotorParams, omega: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Velocity-frozen affine model ``x' = A x + B u + p_aff``.

    The state order here is ``(i_d, i_q, theta, omega)``.  The constant
    vector carries the nominal load ``p.C``.
    """
    if not _finite(omega):
        raise DomainError(f"frozen velocity must be finite, got {omega!r}")
    R, L, J, K = p.R, p.L, p.J, p.K
    n_omega = p.N * omega
    A = np.array(
        [
            [-R / L, n_omega, 0.0, 0.0],
            [p.coupling_sign * n_omega, -R / L, 0.0, -K / L],
            [0.0, 0.0, 0.0, 1.0],
            [0.0, K / J, 0.0, -p.f_v / J],
        ]
    )
    B = np.array([[1.0 / L, 0.0], [0.0, 1.0 / L], [0.0, 0.0], [0.0, 0.0]])
    p_aff = np.array([0.0, 0.0, 0.0, -p.C / J])
    return A, B, p_aff


def flat_inverse(p: MotorParams, traj: FlatTrajectory) -> tuple[DqInput, MotorState]:
    """Input and state that realise a flat-output trajectory exactly."""
    _require_finite("trajectory", tuple(traj))
    i_d, i_q, omega, theta, _, v_d, v_q = flat_inverse_kernel(p.packed(), *(float(v) for v in traj))
    return DqInput(v_d, v_q), MotorState(i_d, i_q, omega, theta)


def stored_energy(p: MotorParams, s: MotorState) -> float:
    """Magnetic plus kinetic energy, the storage function of the unloaded plant."""
    return 0.5 * p.L * (s.i_d**2 + s.i_q**2) + 0.5 * p.J * s.omega**2


def holding_state(p: MotorParams, theta: float = 0.0) -> MotorState:
    """At rest with the q-axis current that balances the nominal load."""
    return MotorState(0.0, p.C / p.K, 0.0, theta)
