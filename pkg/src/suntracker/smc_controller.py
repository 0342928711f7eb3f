"""Sliding-mode position and velocity control of the q-axis channel.

Surfaces have the common form ``s = c0*e4 + c1*e3 + de3`` where ``de3`` is
the model-based speed-error rate.  The position surface uses ``(m1, m2)``,
the velocity surface uses ``(0, mu)``.  Because ``de3`` already contains the
q-current error, ``s`` has relative degree one with respect to ``v_q``.

``U0`` is a reaching rate in surface units per second: the switching term
commands ``ds/dt = -U0*sign(s)`` and is converted to volts through the
channel gain ``K/(J*L)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple, Sequence

import numpy as np
from numba import njit

from .errors import DomainError
from .motor_plant import P_FV, P_J, P_K, P_L, P_N, P_R, P_SIGN, DqInput, MotorParams, MotorState, derivatives
from .sun_reference import ReferencePoint


class SurfaceKind(str, Enum):
    VELOCITY = "velocity"
    POSITION = "position"


@dataclass(frozen=True)
class SurfaceConfig:
    """Surface coefficients and switching gains.

    ``U0`` and ``U0_d`` are reaching rates (surface units per second and A/s).
    ``h`` is the reaching-rate floor used by the diagnostic.
    """

    mu: float = 0.135
    m1: float = 1.2
    m2: float = 0.355
    U0: float = 4.0
    h: float = 0.5
    U0_d: float = 6.0
    mode: SurfaceKind = SurfaceKind.POSITION

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode", SurfaceKind(self.mode))
        for name in ("mu", "m1", "m2", "U0", "h", "U0_d"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0.0):
                raise DomainError(f"{name} must be finite and > 0, got {v!r}")

    def coefficients(self, surface: SurfaceKind | None = None) -> tuple[float, float]:
        kind = self.mode if surface is None else SurfaceKind(surface)
        return (self.m1, self.m2) if kind is SurfaceKind.POSITION else (0.0, self.mu)

    def packed(self) -> np.ndarray:
        c0, c1 = self.coefficients()
        return np.array([c0, c1, self.U0, self.U0_d, self.h])


class ErrorState(NamedTuple):
    e1: float
    e2: float
    e3: float
    e4: float


class ControlOutput(NamedTuple):
    """One controller evaluation; ``u == u_eq + u_sw`` before clamping."""

    u_eq: float
    u_sw: float
    u: float
    s: float
    s_dot: float
    v_d: float = 0.0
    clamped: bool = False


class EquivalentControl(NamedTuple):
    v_q: float
    saturated: bool


class ReachingReport(NamedTuple):
    violation_fraction: float
    max_violation: float
    n_reaching: int
    n_violations: int


def _sign(x: float) -> float:
    return 1.0 if x > 0.0 else (-1.0 if x < 0.0 else 0.0)


def error_state(s: MotorState, r: ReferencePoint) -> ErrorState:
    return ErrorState(s.i_d - r.i_dr, s.i_q - r.i_qr, s.omega - r.omega_r, s.theta - r.q_r)


def error_rates(p: MotorParams, s: MotorState, r: ReferencePoint, u: DqInput, load: float | None = None) -> ErrorState:
    """Time derivative of the tracking error under input ``u``.

    ``load`` defaults to the nominal load carried by the reference.
    """
    d = derivatives(p, s, u, r.C_r if load is None else load)
    return ErrorState(d.di_d - r.di_dr, d.di_q - r.di_qr, d.domega - r.domega_r, d.dtheta - r.omega_r)


def speed_error_rate(e: ErrorState, p: MotorParams, load_mismatch: float = 0.0) -> float:
    """Model-based ``de3/dt``; ``load_mismatch`` is load not covered by the feedforward."""
    return (p.K * e.e2 - p.f_v * e.e3 - load_mismatch) / p.J


def _surface_rate(c0, c1, e, e_dot, p, load_mismatch_rate):
    de3 = e_dot.e3
    return c0 * e.e3 + c1 * de3 + (p.K * e_dot.e2 - p.f_v * de3 - load_mismatch_rate) / p.J


def velocity_surface(
    e: ErrorState,
    e3_dot: float,
    cfg: SurfaceConfig,
    *,
    p: MotorParams | None = None,
    e_dot: ErrorState | None = None,
    load_mismatch_rate: float = 0.0,
) -> tuple[float, float]:
    """``s = mu*e3 + de3``.

    The rate needs the model and the error rates; without them it is NaN.
    """
    s = cfg.mu * e.e3 + e3_dot
    if p is None or e_dot is None:
        return s, math.nan
    return s, _surface_rate(0.0, cfg.mu, e, e_dot, p, load_mismatch_rate)


def position_surface(
    e: ErrorState,
    cfg: SurfaceConfig,
    p: MotorParams,
    *,
    load_mismatch: float = 0.0,
    e_dot: ErrorState | None = None,
    load_mismatch_rate: float = 0.0,
) -> tuple[float, float]:
    """``s = m1*e4 + m2*e3 + (K*e2 - f_v*e3 - load_mismatch)/J``."""
    s = cfg.m1 * e.e4 + cfg.m2 * e.e3 + speed_error_rate(e, p, load_mismatch)
    if e_dot is None:
        return s, math.nan
    return s, _surface_rate(cfg.m1, cfg.m2, e, e_dot, p, load_mismatch_rate)


def switching_control(s: float, cfg: SurfaceConfig) -> float:
    """Commanded surface rate ``-U0*sign(s)`` with ``sign(0) = 0``."""
    return -cfg.U0 * _sign(s)


def channel_gain(p: MotorParams) -> float:
    """Sensitivity of the surface rate to ``v_q`` (per volt per second)."""
    gain = p.K / (p.J * p.L)
    if not (math.isfinite(gain) and gain > 0.0):
        raise DomainError("degenerate control channel")
    return gain


def equivalent_control(
    s_state: MotorState,
    r: ReferencePoint,
    cfg: SurfaceConfig,
    p: MotorParams,
    surface: SurfaceKind | str | None = None,
    *,
    load_mismatch_rate: float = 0.0,
) -> EquivalentControl:
    """The ``v_q`` that makes the surface rate vanish, clamped to ``V_max``."""
    channel_gain(p)
    c0, c1 = cfg.coefficients(surface)
    v = _equivalent_vq(p.packed(), c0, c1, *s_state, r.q_r, r.omega_r, r.i_qr, r.di_qr, load_mismatch_rate)
    if not math.isfinite(v):
        raise DomainError("equivalent control is not finite")
    if abs(v) > p.V_max:
        return EquivalentControl(math.copysign(p.V_max, v), True)
    return EquivalentControl(v, False)


def d_axis_control(s_state: MotorState, r: ReferencePoint, cfg: SurfaceConfig, p: MotorParams) -> float:
    """Regulates ``i_d`` to its reference with the surface ``s_d = e1``."""
    return _d_axis_v(p.packed(), cfg.U0_d, 0.0, *s_state, r.i_dr, r.di_dr)


@njit(cache=True)
def _sgn(x):
    if x > 0.0:
        return 1.0
    if x < 0.0:
        return -1.0
    return 0.0


@njit(cache=True)
def _equivalent_vq(prm, c0, c1, i_d, i_q, omega, theta, q_r, w_r, i_qr, di_qr, load_mismatch_rate):
    K = prm[P_K]
    J = prm[P_J]
    L = prm[P_L]
    fv = prm[P_FV]
    e2 = i_q - i_qr
    e3 = omega - w_r
    de3 = (K * e2 - fv * e3) / J
    de2 = (J * (-c0 * e3 - c1 * de3) + fv * de3 + load_mismatch_rate) / K
    return L * (di_qr + de2) + prm[P_R] * i_q - prm[P_SIGN] * prm[P_N] * L * omega * i_d + K * omega


@njit(cache=True)
def _d_axis_v(prm, U0_d, psi_d, i_d, i_q, omega, theta, i_dr, di_dr):
    """d-axis voltage; ``psi_d > 0`` replaces the sign by a saturation."""
    L = prm[P_L]
    e1 = i_d - i_dr
    if psi_d > 0.0:
        z = min(1.0, max(-1.0, e1 / psi_d))
    else:
        z = _sgn(e1)
    return L * (di_dr - U0_d * z) + prm[P_R] * i_d - prm[P_N] * L * omega * i_q


@njit(cache=True)
def smc_law(prm, cfg, i_d, i_q, omega, theta, q_r, w_r, i_qr, di_qr, i_dr, di_dr):
    """Returns ``(v_d, v_q, s, v_eq, v_sw, level)`` before clamping.

    ``level`` is the normalised switching component in [-1, 1].
    """
    c0, c1, U0, U0_d = cfg[0], cfg[1], cfg[2], cfg[3]
    K = prm[P_K]
    J = prm[P_J]
    L = prm[P_L]
    e3 = omega - w_r
    s = c0 * (theta - q_r) + c1 * e3 + (K * (i_q - i_qr) - prm[P_FV] * e3) / J
    v_eq = _equivalent_vq(prm, c0, c1, i_d, i_q, omega, theta, q_r, w_r, i_qr, di_qr, 0.0)
    level = -_sgn(s)
    v_sw = (J * L / K) * U0 * level
    v_d = _d_axis_v(prm, U0_d, 0.0, i_d, i_q, omega, theta, i_dr, di_dr)
    return v_d, v_eq + v_sw, s, v_eq, v_sw, level


class SmcController:
    """Stateless evaluator of the sliding-mode law for one axis.

    ``evaluate`` takes the state the controller is allowed to see, i.e. with
    the observed speed in place of the true one.
    """

    def __init__(self, cfg: SurfaceConfig, p: MotorParams) -> None:
        channel_gain(p)
        self.cfg = cfg
        self.p = p
        self._prm = p.packed()
        self._cfg = cfg.packed()

    def evaluate(self, x: MotorState, r: ReferencePoint) -> ControlOutput:
        v_d, v_q, s, v_eq, v_sw, _ = smc_law(
            self._prm, self._cfg, *x, r.q_r, r.omega_r, r.i_qr, r.di_qr, r.i_dr, r.di_dr
        )
        vmax = self.p.V_max
        applied = min(vmax, max(-vmax, v_q))
        s_dot = channel_gain(self.p) * (applied - v_eq)
        return ControlOutput(v_eq, v_sw, v_eq + v_sw, s, s_dot, min(vmax, max(-vmax, v_d)), applied != v_q)


def reaching_diagnostic(
    s: Sequence[float] | np.ndarray,
    s_dot: Sequence[float] | np.ndarray,
    h: float,
    boundary_layer: float = 0.0,
) -> ReachingReport:
    """Checks ``s*ds <= -h*|s|`` on samples with ``|s| > boundary_layer``.

    ``max_violation`` is the largest excess ``s*ds + h*|s|`` among violators.
    """
    s = np.asarray(s, dtype=float)
    s_dot = np.asarray(s_dot, dtype=float)
    if s.size == 0 or s.shape != s_dot.shape:
        raise DomainError("surface trace must be nonempty and match its rate trace")
    reaching = np.abs(s) > boundary_layer
    n = int(reaching.sum())
    if n == 0:
        return ReachingReport(0.0, 0.0, 0, 0)
    excess = s[reaching] * s_dot[reaching] + h * np.abs(s[reaching])
    bad = excess > 0.0
    nv = int(bad.sum())
    return ReachingReport(nv / n, float(excess[bad].max()) if nv else 0.0, n, nv)
