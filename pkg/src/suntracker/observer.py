"""Sliding-mode observer of shaft position and speed.

The observer copies the mechanical model driven by the measured q-axis
current and corrects it with two sign injections: one on the position error
(gain ``I1``, rad/s) and one on the speed error (gain ``I2``, a torque in
N*m, divided by the inertia internally).

In ``ground_truth`` mode the speed injection uses the true speed error, which
only a simulation can provide.  In ``sensorless`` mode it uses the sign of
the low-pass filtered position injection, whose average equals the speed
error while the position error slides on zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple, Sequence

import numpy as np
from numba import njit

from .errors import DomainError
from .motor_plant import P_FV, P_J, P_K, MotorParams


class ObserverMode(str, Enum):
    GROUND_TRUTH = "ground_truth"
    SENSORLESS = "sensorless"

    @property
    def code(self) -> int:
        return 0 if self is ObserverMode.GROUND_TRUTH else 1


@dataclass(frozen=True)
class ObserverGains:
    I1: float = 0.1
    I2: float = 1e-6

    def __post_init__(self) -> None:
        for name in ("I1", "I2"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0.0):
                raise DomainError(f"{name} must be finite and > 0, got {v!r}")


@dataclass(frozen=True)
class ObserverConfig:
    """Gains plus run options.  ``filter_tau = None`` means ten time steps."""

    gains: ObserverGains = ObserverGains()
    mode: ObserverMode = ObserverMode.GROUND_TRUTH
    filter_tau: float | None = None
    q_hat0_offset: float = 0.0
    omega_hat0_offset: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode", ObserverMode(self.mode))
        if self.filter_tau is not None and not (math.isfinite(self.filter_tau) and self.filter_tau > 0.0):
            raise DomainError("filter_tau must be > 0")
        for name in ("q_hat0_offset", "omega_hat0_offset"):
            if not math.isfinite(getattr(self, name)):
                raise DomainError(f"{name} must be finite")

    def tau(self, dt: float) -> float:
        return 10.0 * dt if self.filter_tau is None else self.filter_tau


class ObserverState(NamedTuple):
    q_hat: float
    omega_hat: float


class ObserverErrors(NamedTuple):
    e_q: float
    e_omega: float


class GainCheck(NamedTuple):
    ok: bool
    failures: tuple[str, ...]


class LyapunovReport(NamedTuple):
    violation_fraction: float
    n_checked: int
    n_violations: int
    hit_index: int | None
    hit_time: float | None
    final_v2: float
    v2_band: float
    converged: bool


def _sign(x: float) -> float:
    return 1.0 if x > 0.0 else (-1.0 if x < 0.0 else 0.0)


def observer_errors(q: float, omega: float, obs: ObserverState) -> ObserverErrors:
    return ObserverErrors(q - obs.q_hat, omega - obs.omega_hat)


def observer_derivatives(
    obs: ObserverState,
    measured_q: float,
    i_q: float,
    p: MotorParams,
    C_r: float,
    gains: ObserverGains,
    *,
    omega: float | None = None,
    injection_estimate: float | None = None,
) -> tuple[float, float]:
    """``(dq_hat/dt, domega_hat/dt)``.

    Pass the true ``omega`` for the literal speed injection, or
    ``injection_estimate`` (the filtered position injection) for the
    sensorless surrogate.
    """
    if omega is not None:
        speed_sign = _sign(omega - obs.omega_hat)
    elif injection_estimate is not None:
        speed_sign = _sign(injection_estimate)
    else:
        raise DomainError("either omega or injection_estimate is required")
    dq = obs.omega_hat + gains.I1 * _sign(measured_q - obs.q_hat)
    dw = (p.K * i_q - p.f_v * obs.omega_hat - C_r + gains.I2 * speed_sign) / p.J
    return dq, dw


def check_gains(gains: ObserverGains, e_omega_max: float | None = None, load_max: float | None = None) -> GainCheck:
    """Checks ``I1 > |e_omega|max`` and ``I2 > |load|max`` for the bounds supplied."""
    failures = []
    if e_omega_max is not None and not gains.I1 > abs(e_omega_max):
        failures.append(f"I1={gains.I1:g} does not exceed the speed error bound {abs(e_omega_max):g}")
    if load_max is not None and not gains.I2 > abs(load_max):
        failures.append(f"I2={gains.I2:g} does not exceed the load bound {abs(load_max):g}")
    return GainCheck(not failures, tuple(failures))


def convergence_bound(e_q0: float, e_omega_max: float, I1: float) -> float:
    """Worst-case time for the position error to reach zero."""
    if not I1 > abs(e_omega_max):
        raise DomainError(f"I1={I1:g} must exceed the speed error bound {abs(e_omega_max):g}")
    return abs(e_q0) / (I1 - abs(e_omega_max))


def hitting_index(e_q: np.ndarray, band: float) -> int | None:
    inside = np.nonzero(np.abs(e_q) <= band)[0]
    return int(inside[0]) if inside.size else None


def lyapunov_check(
    e_q: Sequence[float] | np.ndarray,
    e_omega: Sequence[float] | np.ndarray,
    p: MotorParams,
    gains: ObserverGains,
    dt: float,
) -> LyapunovReport:
    """Discrete decrease test of ``V1 = e_q^2/2`` then ``V2 = (e_q^2 + J e_omega^2)/2``.

    ``V1`` is tested until ``|e_q|`` first enters the one-step band
    ``2*I1*dt``; ``V2`` afterwards.  Samples already inside the band of the
    active function are skipped, since sign switching cannot do better there.
    """
    e_q = np.asarray(e_q, dtype=float)
    e_w = np.asarray(e_omega, dtype=float)
    if e_q.size < 2 or e_q.shape != e_w.shape:
        raise DomainError("error traces must have equal length >= 2")
    q_band = 2.0 * gains.I1 * dt
    w_band = 2.0 * gains.I2 / p.J * dt
    v1 = 0.5 * e_q**2
    v2 = 0.5 * (e_q**2 + p.J * e_w**2)
    v1_band = 0.5 * q_band**2
    v2_band = 0.5 * (q_band**2 + p.J * w_band**2)
    hit = hitting_index(e_q, q_band)
    split = e_q.size - 1 if hit is None else hit
    dv1 = np.diff(v1[: split + 1])
    check1 = v1[:split] > v1_band
    dv2 = np.diff(v2[split:])
    check2 = v2[split:-1] > v2_band
    n_checked = int(check1.sum() + check2.sum())
    n_bad = int((dv1[check1] >= 0.0).sum() + (dv2[check2] >= 0.0).sum())
    frac = n_bad / n_checked if n_checked else 0.0
    final_v2 = float(v2[-1])
    return LyapunovReport(
        frac,
        n_checked,
        n_bad,
        hit,
        None if hit is None else hit * dt,
        final_v2,
        v2_band,
        hit is not None and final_v2 <= v2_band,
    )


@njit(cache=True)
def observer_rhs(prm, I1, I2, tau, q_hat, w_hat, z_f, i_q, sign_q, sign_w, load):
    """Observer derivatives with the injection signs held over the step."""
    dq = w_hat + I1 * sign_q
    dw = (prm[P_K] * i_q - prm[P_FV] * w_hat - load + I2 * sign_w) / prm[P_J]
    dz = (I1 * sign_q - z_f) / tau
    return dq, dw, dz


@njit(cache=True)
def _sgn(x):
    if x > 0.0:
        return 1.0
    if x < 0.0:
        return -1.0
    return 0.0


@njit(cache=True)
def _replay(prm, I1, I2, tau, mode, load, q, w, i_q, dt, q_hat0, w_hat0, q_hat, w_hat):
    qh = q_hat0
    wh = w_hat0
    zf = 0.0
    for k in range(q.shape[0]):
        q_hat[k] = qh
        w_hat[k] = wh
        sq = _sgn(q[k] - qh)
        sw = _sgn(w[k] - wh) if mode == 0 else _sgn(zf)
        a = observer_rhs(prm, I1, I2, tau, qh, wh, zf, i_q[k], sq, sw, load)
        b = observer_rhs(prm, I1, I2, tau, qh + 0.5 * dt * a[0], wh + 0.5 * dt * a[1], zf + 0.5 * dt * a[2], i_q[k], sq, sw, load)
        c = observer_rhs(prm, I1, I2, tau, qh + 0.5 * dt * b[0], wh + 0.5 * dt * b[1], zf + 0.5 * dt * b[2], i_q[k], sq, sw, load)
        d = observer_rhs(prm, I1, I2, tau, qh + dt * c[0], wh + dt * c[1], zf + dt * c[2], i_q[k], sq, sw, load)
        qh += dt / 6.0 * (a[0] + 2.0 * b[0] + 2.0 * c[0] + d[0])
        wh += dt / 6.0 * (a[1] + 2.0 * b[1] + 2.0 * c[1] + d[1])
        zf += dt / 6.0 * (a[2] + 2.0 * b[2] + 2.0 * c[2] + d[2])


def replay(
    q: np.ndarray,
    omega: np.ndarray,
    i_q: np.ndarray,
    dt: float,
    p: MotorParams,
    cfg: ObserverConfig,
    *,
    load: float | None = None,
    initial: ObserverState | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Run the observer offline over recorded signals sampled every ``dt``.

    ``load`` is the torque the observer assumes (nominal ``p.C`` by
    default).  Returns the estimates at each sample time.
    """
    q = np.ascontiguousarray(q, dtype=float)
    omega = np.ascontiguousarray(omega, dtype=float)
    i_q = np.ascontiguousarray(i_q, dtype=float)
    if not (q.shape == omega.shape == i_q.shape) or q.ndim != 1:
        raise DomainError("signals must be one-dimensional and of equal length")
    if initial is None:
        initial = ObserverState(q[0] + cfg.q_hat0_offset, omega[0] + cfg.omega_hat0_offset)
    q_hat = np.empty_like(q)
    w_hat = np.empty_like(q)
    _replay(
        p.packed(), cfg.gains.I1, cfg.gains.I2, cfg.tau(dt), cfg.mode.code, p.C if load is None else load,
        q, omega, i_q, dt, initial.q_hat, initial.omega_hat, q_hat, w_hat,
    )
    return q_hat, w_hat
