"""Sliding-mode multimodel control.

A bank of frozen-velocity linear models predicts the shaft speed under the
applied input.  Prediction residues give each model a validity; the
reinforced, normalised validities weight per-model controls (equivalent
control plus saturated switching on a PID surface) into one voltage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple, Sequence

import numpy as np
from numba import njit

from .errors import DomainError
from .motor_plant import (
    P_C,
    P_FV,
    P_J,
    P_K,
    P_L,
    P_N,
    P_R,
    P_SIGN,
    P_VMAX,
    MotorParams,
    MotorState,
    frozen_rhs,
    state_space,
)
from .smc_controller import _d_axis_v
from .sun_reference import ReferencePoint


class Weighting(str, Enum):
    REINFORCED = "reinforced"
    PLAIN = "plain"

    @property
    def code(self) -> int:
        return 0 if self is Weighting.REINFORCED else 1


@dataclass(frozen=True)
class ModelBank:
    """Frozen-velocity models anchored at ``anchors_deg_s`` (strictly increasing)."""

    p: MotorParams
    anchors_deg_s: tuple[float, ...] = (0.0, 100.0, 200.0)

    def __post_init__(self) -> None:
        anchors = tuple(float(a) for a in self.anchors_deg_s)
        object.__setattr__(self, "anchors_deg_s", anchors)
        _check_anchors(anchors)

    @classmethod
    def spanning(cls, p: MotorParams, n_models: int = 3, omega_max_deg_s: float = 200.0) -> "ModelBank":
        if n_models < 1:
            raise DomainError("a bank needs at least one model")
        if n_models == 1:
            return cls(p, (0.0,))
        return cls(p, tuple(float(a) for a in np.linspace(0.0, omega_max_deg_s, n_models)))

    @property
    def anchors(self) -> np.ndarray:
        return np.radians(np.asarray(self.anchors_deg_s))

    def __len__(self) -> int:
        return len(self.anchors_deg_s)

    def models(self) -> list[tuple[np.ndarray, np.ndarray, np.ndarray]]:
        return [state_space(self.p, w) for w in self.anchors]


def _check_anchors(anchors: Sequence[float]) -> None:
    if len(anchors) < 1:
        raise DomainError("a bank needs at least one model")
    if not all(math.isfinite(a) for a in anchors):
        raise DomainError("anchor velocities must be finite")
    if any(b <= a for a, b in zip(anchors, anchors[1:])):
        raise DomainError("anchor velocities must be strictly increasing")


@dataclass(frozen=True)
class PidSurfaceConfig:
    """Coefficients of ``s = a*e + b*de + g*int(e)`` and its saturated switching.

    ``I`` is a reaching rate in surface units per second.  ``u_min``/``u_max``
    bound the switching term and default to ``-I``/``+I``.
    """

    a: float = 0.355
    b: float = 1.0
    g: float = 1.2
    I: float = 4.0
    psi: float = 0.02
    u_min: float | None = None
    u_max: float | None = None

    def __post_init__(self) -> None:
        for name in ("a", "b", "g", "I", "psi"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0.0):
                raise DomainError(f"{name} must be finite and > 0, got {v!r}")
        if self.u_min is None:
            object.__setattr__(self, "u_min", -self.I)
        if self.u_max is None:
            object.__setattr__(self, "u_max", self.I)
        if not self.u_min < self.u_max:
            raise DomainError("u_min must be < u_max")

    def packed(self) -> np.ndarray:
        return np.array([self.a, self.b, self.g, self.I, self.psi, self.u_min, self.u_max])


@dataclass(frozen=True)
class SmmmcConfig:
    anchors_deg_s: tuple[float, ...] = (0.0, 100.0, 200.0)
    surfaces: tuple[PidSurfaceConfig, ...] = (PidSurfaceConfig(),) * 3
    reset_horizon: float = 0.5
    weighting: Weighting = Weighting.REINFORCED
    U0_d: float = 1.0
    psi_d: float = 1e-3

    def __post_init__(self) -> None:
        anchors = tuple(float(a) for a in self.anchors_deg_s)
        object.__setattr__(self, "anchors_deg_s", anchors)
        _check_anchors(anchors)
        surfaces = tuple(self.surfaces)
        if len(surfaces) == 1 and len(anchors) > 1:
            surfaces = surfaces * len(anchors)
        if len(surfaces) != len(anchors):
            raise DomainError(f"{len(anchors)} models but {len(surfaces)} surface configurations")
        object.__setattr__(self, "surfaces", surfaces)
        object.__setattr__(self, "weighting", Weighting(self.weighting))
        for name in ("reset_horizon", "U0_d", "psi_d"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0.0):
                raise DomainError(f"{name} must be finite and > 0, got {v!r}")

    @property
    def n_models(self) -> int:
        return len(self.anchors_deg_s)

    def packed(self) -> tuple[np.ndarray, np.ndarray]:
        return np.radians(np.asarray(self.anchors_deg_s)), np.stack([c.packed() for c in self.surfaces])


@dataclass
class ValiditySet:
    residues: np.ndarray
    r_norm: np.ndarray
    v: np.ndarray
    v_ref: np.ndarray
    nu: np.ndarray


@dataclass
class PidSurfaceState:
    integral: float = 0.0
    prev_error: float | None = None
    prev_rate: float | None = None


class PidSurfaceResult(NamedTuple):
    s: float
    s_dot: float
    state: PidSurfaceState


def residues(y: float, predictions: Sequence[float] | np.ndarray) -> np.ndarray:
    """Absolute prediction errors of each model against the measured output."""
    return np.abs(float(y) - np.asarray(predictions, dtype=float))


@njit(cache=True)
def validities_kernel(r, mode, r_norm, v, v_ref, nu):
    n = r.shape[0]
    total = 0.0
    for i in range(n):
        total += r[i]
    if n == 1:
        r_norm[0] = 1.0 if total > 0.0 else 0.0
        v[0] = 1.0 - r_norm[0]
        v_ref[0] = v[0]
        nu[0] = 1.0
        return
    if total <= 0.0:
        for i in range(n):
            r_norm[i] = 0.0
            v[i] = 1.0
            v_ref[i] = 0.0
            nu[i] = 1.0 / n
        return
    for i in range(n):
        r_norm[i] = r[i] / total
        v[i] = 1.0 - r_norm[i]
    for i in range(n):
        prod = v[i]
        for j in range(n):
            if j != i:
                prod *= 1.0 - v[j]
        v_ref[i] = prod
    sv = 0.0
    sref = 0.0
    for i in range(n):
        sv += v[i]
        sref += v_ref[i]
    if mode == 0 and sref > 0.0:
        for i in range(n):
            nu[i] = v_ref[i] / sref
    else:
        for i in range(n):
            nu[i] = v[i] / sv


def validities(r: Sequence[float] | np.ndarray, weighting: Weighting | str = Weighting.REINFORCED) -> ValiditySet:
    """Normalised residues, validities and their reinforced, normalised form.

    Equal-zero residues give uniform weights.  If every reinforced validity
    vanishes (two or more exact models) the plain validities are normalised
    instead.
    """
    r = np.asarray(r, dtype=float).ravel()
    if r.size == 0:
        raise DomainError("empty residue vector")
    if not np.all(np.isfinite(r)) or np.any(r < 0.0):
        raise DomainError("residues must be finite and >= 0")
    out = [np.empty_like(r) for _ in range(4)]
    validities_kernel(r, Weighting(weighting).code, *out)
    return ValiditySet(r.copy(), *out)


def pid_surface(
    x_d: float,
    x_r: float,
    state: PidSurfaceState,
    cfg: PidSurfaceConfig,
    dt: float,
    *,
    rate: float | None = None,
    accel: float | None = None,
    integral: float | None = None,
) -> PidSurfaceResult:
    """Evaluate ``s = a*e + b*de/dt + g*int(e)`` with ``e = x_d - x_r``.

    The integral advances by the trapezoidal rule; ``de/dt`` and ``d2e/dt2``
    come from backward differences unless supplied.  ``integral`` overrides
    the accumulated value, e.g. with a measured position error.
    """
    if not dt > 0.0:
        raise DomainError("dt must be > 0")
    e = float(x_d) - float(x_r)
    if state.prev_error is None:
        acc = 0.0
        fd_rate = 0.0
    else:
        acc = state.integral + 0.5 * dt * (state.prev_error + e)
        fd_rate = (e - state.prev_error) / dt
    de = fd_rate if rate is None else float(rate)
    if accel is None:
        dde = 0.0 if state.prev_rate is None else (de - state.prev_rate) / dt
    else:
        dde = float(accel)
    if integral is not None:
        acc = float(integral)
    s = cfg.a * e + cfg.b * de + cfg.g * acc
    s_dot = cfg.a * de + cfg.b * dde + cfg.g * e
    return PidSurfaceResult(s, s_dot, PidSurfaceState(acc, e, de))


@njit(cache=True)
def _sat_switch(s, I, psi, u_min, u_max):
    z = s / psi
    if z > 1.0:
        z = 1.0
    elif z < -1.0:
        z = -1.0
    return min(u_max, max(u_min, I * z))


def saturated_switching(s: float, cfg: PidSurfaceConfig) -> float:
    """``I*sat(s/psi)`` clamped into ``[u_min, u_max]``."""
    return _sat_switch(float(s), cfg.I, cfg.psi, cfg.u_min, cfg.u_max)


def fuse(u: Sequence[float] | np.ndarray, nu, s: Sequence[float] | np.ndarray | None = None) -> tuple[float, float]:
    """Validity-weighted control and surface.  ``nu`` may be a ValiditySet."""
    weights = np.asarray(nu.nu if isinstance(nu, ValiditySet) else nu, dtype=float)
    u = np.asarray(u, dtype=float)
    if u.shape != weights.shape:
        raise DomainError(f"{u.size} controls but {weights.size} validities")
    S = math.nan
    if s is not None:
        s = np.asarray(s, dtype=float)
        if s.shape != weights.shape:
            raise DomainError(f"{s.size} surfaces but {weights.size} validities")
        S = float(np.dot(weights, s))
    return float(np.dot(weights, u)), S


@njit(cache=True)
def smmmc_law(prm, anchors, mcfg, mode, U0_d, psi_d, i_d, i_q, omega, theta, pos_err,
              q_r, w_r, dw_r, ddw_r, i_dr, di_dr, omega_res, preds, r, r_norm, v, v_ref, nu, s_out):
    """Fused control for one axis.

    ``omega`` is the observed speed, ``pos_err`` the integral term (the
    anchored position error) and ``omega_res`` the output compared with the
    model predictions.  Returns ``(v_d, v_q, S, v_eq, level)``.
    """
    n = anchors.shape[0]
    for i in range(n):
        r[i] = abs(omega_res - preds[i, 2])
    validities_kernel(r, mode, r_norm, v, v_ref, nu)
    K = prm[P_K]
    J = prm[P_J]
    L = prm[P_L]
    fv = prm[P_FV]
    e = w_r - omega
    dw_model = (K * i_q - fv * omega - prm[P_C]) / J
    de = dw_r - dw_model
    v_q = 0.0
    v_eq = 0.0
    S = 0.0
    level = 0.0
    for i in range(n):
        a, b, g, I, psi, u_min, u_max = mcfg[i, 0], mcfg[i, 1], mcfg[i, 2], mcfg[i, 3], mcfg[i, 4], mcfg[i, 5], mcfg[i, 6]
        s = a * e + b * de + g * pos_err
        s_out[i] = s
        ddw_target = ddw_r + (a * de + g * e) / b
        di_q = (J * ddw_target + fv * dw_model) / K
        u_e = L * di_q + prm[P_R] * i_q - prm[P_SIGN] * prm[P_N] * L * anchors[i] * i_d + K * omega
        u_s = _sat_switch(s, I, psi, u_min, u_max)
        v_q += nu[i] * (u_e + (J * L / (b * K)) * u_s)
        v_eq += nu[i] * u_e
        S += nu[i] * s
        level += nu[i] * u_s / I
    v_d = _d_axis_v(prm, U0_d, psi_d, i_d, i_q, omega, theta, i_dr, di_dr)
    return v_d, v_q, S, v_eq, level


@njit(cache=True)
def bank_rhs(prm, anchors, preds, v_d, v_q, out):
    """Derivatives of all frozen-model predictions under the applied input and nominal load."""
    for i in range(anchors.shape[0]):
        did, diq, dw = frozen_rhs(prm, anchors[i], preds[i, 0], preds[i, 1], preds[i, 2], v_d, v_q, prm[P_C])
        out[i, 0] = did
        out[i, 1] = diq
        out[i, 2] = dw
        out[i, 3] = preds[i, 2]


@njit(cache=True)
def bank_rk4(prm, anchors, preds, v_d, v_q, dt):
    k1 = np.empty_like(preds)
    k2 = np.empty_like(preds)
    k3 = np.empty_like(preds)
    k4 = np.empty_like(preds)
    bank_rhs(prm, anchors, preds, v_d, v_q, k1)
    bank_rhs(prm, anchors, preds + 0.5 * dt * k1, v_d, v_q, k2)
    bank_rhs(prm, anchors, preds + 0.5 * dt * k2, v_d, v_q, k3)
    bank_rhs(prm, anchors, preds + dt * k3, v_d, v_q, k4)
    return preds + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


class SmmmcDiagnostics(NamedTuple):
    validity: ValiditySet
    surfaces: np.ndarray
    S: float
    u_eq: float
    level: float


@dataclass
class SmmmcController:
    """Stateful multimodel controller for one axis.

    ``step`` computes the fused voltages from the visible state (observed
    speed, measured position and currents) and then advances the model bank
    with the clamped voltages it returns.  Predictions are reset to the
    visible state every ``reset_horizon`` seconds.
    """

    cfg: SmmmcConfig
    p: MotorParams
    _preds: np.ndarray = field(init=False, repr=False)
    _k: int = field(default=0, init=False, repr=False)

    def __post_init__(self) -> None:
        self._prm = self.p.packed()
        self._anchors, self._mcfg = self.cfg.packed()
        self._preds = np.zeros((self.cfg.n_models, 4))

    @property
    def predictions(self) -> np.ndarray:
        return self._preds.copy()

    def step(self, x: MotorState, ref: ReferencePoint, dt: float) -> tuple[float, float, SmmmcDiagnostics]:
        if not dt > 0.0:
            raise DomainError("dt must be > 0")
        reset_every = max(1, int(round(self.cfg.reset_horizon / dt)))
        if self._k % reset_every == 0:
            self._preds[:] = np.array([x.i_d, x.i_q, x.omega, x.theta])
        n = self.cfg.n_models
        bufs = [np.empty(n) for _ in range(6)]
        v_d, v_q, S, v_eq, level = smmmc_law(
            self._prm, self._anchors, self._mcfg, self.cfg.weighting.code, self.cfg.U0_d, self.cfg.psi_d,
            x.i_d, x.i_q, x.omega, x.theta, ref.q_r - x.theta,
            ref.q_r, ref.omega_r, ref.domega_r, ref.ddomega_r, ref.i_dr, ref.di_dr, x.omega, self._preds, *bufs,
        )
        vmax = self._prm[P_VMAX]
        v_d = min(vmax, max(-vmax, v_d))
        v_q = min(vmax, max(-vmax, v_q))
        self._preds = bank_rk4(self._prm, self._anchors, self._preds, v_d, v_q, dt)
        self._k += 1
        r, r_norm, v, v_ref, nu, s = bufs
        return v_d, v_q, SmmmcDiagnostics(ValiditySet(r, r_norm, v, v_ref, nu), s, S, v_eq, level)
