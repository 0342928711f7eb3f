"""Closed-loop runs of plant, observer and controller, and the metrics on their traces.

One jitted kernel executes a whole run.  Per step and per axis it samples the
reference, evaluates the controller on the visible state (measured position
and currents, observed speed), clamps the voltages, records the sample and
advances plant, observer and model bank together with one explicit step.
Controller outputs, observer injections and the disturbance are held over
the step.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
import pandas as pd
from numba import njit

from .errors import DomainError, ScenarioError, SimulationAborted
from .integrator import IntegratorConfig
from .motor_plant import P_C, P_J, P_K, P_L, P_VMAX, MotorParams, electrical_mechanical_rhs, frozen_rhs
from .multimodel import SmmmcConfig, smmmc_law
from .observer import ObserverConfig, observer_rhs
from .smc_controller import SurfaceConfig, smc_law
from .sun_reference import (
    EARTH_RATE,
    REF_SOLAR,
    Axis,
    ReferenceProfile,
    SolarDay,
    _check_day,
    _check_latitude,
    _horizontal,
    declination,
    energy_gain,
    feedforward_kernel,
    fixed_panel_orientation,
    reference_kernel,
    sunrise_hour_angle,
)

log = logging.getLogger(__name__)

SETTLING_FRACTION = 0.02
SETTLING_FLOOR = math.radians(0.02)
TAIL_FRACTION = 0.2
SCHMITT_LEVEL = 0.5

# Recorded channels per axis, in CSV order; validities follow.
CHANNELS = (
    "q", "omega", "q_hat", "omega_hat", "q_r", "omega_r", "i_d", "i_q",
    "v_d", "u", "s", "s_dot", "switch", "u_eq", "disturbance", "clamped",
)
N_CHANNELS = len(CHANNELS)
(C_Q, C_W, C_QH, C_WH, C_QR, C_WR, C_ID, C_IQ, C_VD, C_U, C_S, C_SDOT,
 C_SW, C_UEQ, C_DIST, C_CLAMP) = range(N_CHANNELS)


class ControllerKind(str, Enum):
    SMC2 = "smc2"
    SMMMC = "smmmc"


class AxisMode(str, Enum):
    INDEPENDENT = "independent"
    SEQUENTIAL = "sequential"


class InitialState(str, Enum):
    HOLDING = "holding"
    REST = "rest"


class DisturbanceKind(str, Enum):
    NONE = "none"
    SQUARE = "square"
    CUSTOM = "custom"


@dataclass(frozen=True)
class DisturbanceConfig:
    """Additive load torque.

    ``square`` alternates ``+amplitude`` and ``-amplitude`` every half period
    from ``start`` on.  ``custom`` holds each ``(time, torque)`` sample until
    the next one and is zero before the first.
    """

    kind: DisturbanceKind = DisturbanceKind.NONE
    amplitude: float = 0.0
    period: float = 15.0
    start: float = 0.0
    samples: tuple[tuple[float, float], ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", DisturbanceKind(self.kind))
        object.__setattr__(self, "samples", tuple((float(a), float(b)) for a, b in self.samples))
        if not (math.isfinite(self.amplitude) and self.amplitude >= 0.0):
            raise DomainError("disturbance amplitude must be >= 0")
        if not (math.isfinite(self.period) and self.period > 0.0):
            raise DomainError("disturbance period must be > 0")
        if not (math.isfinite(self.start) and self.start >= 0.0):
            raise DomainError("disturbance start must be >= 0")
        times = [s[0] for s in self.samples]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise DomainError("custom disturbance times must be strictly increasing")
        if self.kind is DisturbanceKind.CUSTOM and not self.samples:
            raise DomainError("custom disturbance needs samples")

    def packed(self) -> tuple[int, np.ndarray, np.ndarray, np.ndarray]:
        code = {DisturbanceKind.NONE: 0, DisturbanceKind.SQUARE: 1, DisturbanceKind.CUSTOM: 2}[self.kind]
        times = np.array([s[0] for s in self.samples], dtype=float)
        values = np.array([s[1] for s in self.samples], dtype=float)
        return code, np.array([self.amplitude, self.period, self.start]), times, values

    def value(self, t: float) -> float:
        code, par, times, values = self.packed()
        return _disturbance(code, par, times, values, float(t))


@dataclass(frozen=True)
class EnergyConfig:
    latitude: float = 35.0
    day: int = 81
    p_max: float = 1000.0
    dt: float = 60.0

    def __post_init__(self) -> None:
        _check_latitude(self.latitude)
        _check_day(self.day)
        if not (math.isfinite(self.p_max) and self.p_max > 0.0):
            raise DomainError("p_max must be > 0")
        if not (math.isfinite(self.dt) and 0.0 < self.dt <= 3600.0):
            raise DomainError("energy dt must lie in (0, 3600] s")


@dataclass(frozen=True)
class Scenario:
    """Everything a run needs.  All axes share one drive type."""

    references: tuple[ReferenceProfile, ...]
    motor: MotorParams = MotorParams()
    controller: ControllerKind = ControllerKind.SMC2
    smc: SurfaceConfig = SurfaceConfig()
    smmmc: SmmmcConfig = SmmmcConfig()
    observer: ObserverConfig = ObserverConfig()
    disturbance: DisturbanceConfig = DisturbanceConfig()
    integrator: IntegratorConfig = IntegratorConfig()
    axis_mode: AxisMode = AxisMode.INDEPENDENT
    epoch: float = 1.0
    record_every: int = 1
    output_every: int = 1
    initial_state: InitialState = InitialState.HOLDING
    energy: EnergyConfig | None = None

    def __post_init__(self) -> None:
        refs = tuple(self.references)
        object.__setattr__(self, "references", refs)
        object.__setattr__(self, "controller", ControllerKind(self.controller))
        object.__setattr__(self, "axis_mode", AxisMode(self.axis_mode))
        object.__setattr__(self, "initial_state", InitialState(self.initial_state))
        if not 1 <= len(refs) <= 2:
            raise DomainError("a scenario drives one or two axes")
        axes = [r.axis for r in refs]
        if len(set(axes)) != len(axes):
            raise DomainError("each axis may appear only once")
        if not (math.isfinite(self.epoch) and self.epoch >= self.integrator.dt):
            raise DomainError("epoch must be at least one time step")
        for name in ("record_every", "output_every"):
            v = getattr(self, name)
            if isinstance(v, bool) or int(v) != v or v < 1:
                raise DomainError(f"{name} must be a positive integer")

    @property
    def axes(self) -> tuple[str, ...]:
        return tuple(r.axis.value for r in self.references)

    @property
    def dt(self) -> float:
        return self.integrator.dt


@dataclass
class AxisTrace:
    q: np.ndarray
    omega: np.ndarray
    q_hat: np.ndarray
    omega_hat: np.ndarray
    q_r: np.ndarray
    omega_r: np.ndarray
    i_d: np.ndarray
    i_q: np.ndarray
    v_d: np.ndarray
    u: np.ndarray
    s: np.ndarray
    s_dot: np.ndarray
    switch: np.ndarray
    u_eq: np.ndarray
    disturbance: np.ndarray
    clamped: np.ndarray
    nu: np.ndarray | None = None


@dataclass
class SimTrace:
    """Recorded samples of a run; ``nu`` columns are empty for the SMC law."""

    t: np.ndarray
    axes: dict[str, AxisTrace]
    dt: float
    controller: ControllerKind = ControllerKind.SMC2
    n_models: int = 0
    boundary_layer: float = 0.0
    reaching_floor: float = 0.0
    energy_gain: float | None = None
    meta: dict = field(default_factory=dict)

    def axis(self, name: str | None = None) -> AxisTrace:
        if name is None:
            return next(iter(self.axes.values()))
        return self.axes[name]

    @property
    def sample_dt(self) -> float:
        return float(self.t[1] - self.t[0]) if self.t.size > 1 else self.dt


class SimMetrics(NamedTuple):
    settling_time_2pct: float
    settled: bool
    steady_state_error: float
    chattering_pp: float
    switching_rate: float
    u_crossing_rate: float
    rms_control: float
    max_observer_error: float
    reaching_violation_frac: float
    energy_gain: float | None = None


class Comparison(NamedTuple):
    a: SimMetrics
    b: SimMetrics
    chattering_ratio: float
    switching_ratio: float
    settling_ratio: float
    trace_a: SimTrace | None = None
    trace_b: SimTrace | None = None


# --------------------------------------------------------------------------
# kernel


@njit(cache=True)
def _disturbance(code, par, times, values, t):
    if code == 1:
        if t < par[2]:
            return 0.0
        phase = (t - par[2]) % par[1]
        return par[0] if phase < 0.5 * par[1] else -par[0]
    if code == 2:
        j = np.searchsorted(times, t, side="right") - 1
        return values[j] if j >= 0 else 0.0
    return 0.0


@njit(cache=True)
def _sgn(x):
    if x > 0.0:
        return 1.0
    if x < 0.0:
        return -1.0
    return 0.0


@njit(cache=True)
def _axis_rhs(prm, anchors, z, v_d, v_q, load, I1, I2, tau, sq, sw, iq_meas, locked, out):
    """Derivative of the per-axis vector [plant(4), observer(3), bank(4 per model)].

    The observer is driven by the current sampled at the start of the step.
    """
    out[:] = 0.0
    if locked:
        out[0] = (v_d - prm[0] * z[0]) / prm[1]
        out[1] = (v_q - prm[0] * z[1]) / prm[1]
        return
    did, diq, dw = electrical_mechanical_rhs(prm, z[0], z[1], z[2], v_d, v_q, load)
    out[0] = did
    out[1] = diq
    out[2] = dw
    out[3] = z[2]
    dq, dwh, dz = observer_rhs(prm, I1, I2, tau, z[4], z[5], z[6], iq_meas, sq, sw, prm[P_C])
    out[4] = dq
    out[5] = dwh
    out[6] = dz
    for i in range(anchors.shape[0]):
        o = 7 + 4 * i
        a, b, c = frozen_rhs(prm, anchors[i], z[o], z[o + 1], z[o + 2], v_d, v_q, prm[P_C])
        out[o] = a
        out[o + 1] = b
        out[o + 2] = c
        out[o + 3] = z[o + 2]


@njit(cache=True)
def _control(ctrl, p, smc_cfg, anchors, mcfg, weight_mode, U0_d_mm, psi_d, i_d, i_q, w_hat, q,
             code, par, t, offset, omega_res, preds, r, r_norm, v, v_ref, nu, s_models):
    """Controller evaluated on a visible state at time ``t``.

    Returns ``(v_d, v_q, s, v_eq, level, gain)`` where ``gain`` is the
    sensitivity of the surface rate to ``v_q``.
    """
    q_r, w_r, dw_r, ddw_r = reference_kernel(code, par, t)
    ff = feedforward_kernel(p, q_r, w_r, dw_r, ddw_r)
    if ctrl == 0:
        v_d, v_q, s, v_eq, v_sw, level = smc_law(p, smc_cfg, i_d, i_q, w_hat, q, q_r, w_r, ff[1], ff[4], 0.0, 0.0)
        return v_d, v_q, s, v_eq, level, p[P_K] / (p[P_J] * p[P_L])
    v_d, v_q, s, v_eq, level = smmmc_law(
        p, anchors, mcfg, weight_mode, U0_d_mm, psi_d, i_d, i_q, w_hat, q, q_r - q - offset,
        q_r, w_r, dw_r, ddw_r, 0.0, 0.0, omega_res, preds, r, r_norm, v, v_ref, nu, s_models)
    b_avg = 0.0
    for i in range(anchors.shape[0]):
        b_avg += nu[i] * mcfg[i, 1]
    return v_d, v_q, s, v_eq, level, -b_avg * p[P_K] / (p[P_J] * p[P_L])


@njit(cache=True)
def _simulate(n_steps, dt, method, prm, ref_code, ref_par, ctrl, smc_cfg, anchors, mcfg, weight_mode,
              U0_d_mm, psi_d, reset_every, I1, I2, tau, obs_mode, z0, dist_code, dist_par, dist_t,
              dist_v, sequential, epoch_steps, record_every, v0, rec):
    n_axes = prm.shape[0]
    nm = anchors.shape[0]
    nz = 7 + 4 * nm
    z = z0.copy()
    k1 = np.empty(nz)
    k2 = np.empty(nz)
    k3 = np.empty(nz)
    k4 = np.empty(nz)
    tmp = np.empty(nz)
    preds = np.empty((nm, 4))
    r = np.empty(nm)
    r_norm = np.empty(nm)
    v = np.empty(nm)
    v_ref = np.empty(nm)
    nu = np.empty(nm)
    s_models = np.empty(nm)
    offset = np.zeros(n_axes)
    prev_raw = np.zeros(n_axes)
    prev_clamped = np.zeros(n_axes, dtype=np.bool_)
    was_locked = np.zeros(n_axes, dtype=np.bool_)
    v_prev = v0.copy()
    n_clamped = 0
    for k in range(n_steps):
        t = k * dt
        d = _disturbance(dist_code, dist_par, dist_t, dist_v, t)
        active_axis = (k // epoch_steps) % n_axes
        rec_row = k // record_every
        recording = k % record_every == 0
        for a in range(n_axes):
            p = prm[a]
            za = z[a]
            locked = sequential and a != active_axis
            if locked and not was_locked[a]:
                za[2] = 0.0
                za[5] = 0.0
            unlocked_now = was_locked[a] and not locked
            was_locked[a] = locked
            i_d, i_q, w, q = za[0], za[1], za[2], za[3]
            w_hat = za[5]
            q_r, w_r, dw_r, ddw_r = reference_kernel(ref_code[a], ref_par[a], t)
            s = 0.0
            s_dot = 0.0
            level = 0.0
            v_eq = 0.0
            v_d = 0.0
            v_q = 0.0
            clamped = False
            if not locked:
                if ctrl == 1:
                    if k % reset_every == 0 or unlocked_now:
                        for i in range(nm):
                            o = 7 + 4 * i
                            za[o] = i_d
                            za[o + 1] = i_q
                            za[o + 2] = w_hat
                            za[o + 3] = q
                    for i in range(nm):
                        o = 7 + 4 * i
                        for j in range(4):
                            preds[i, j] = za[o + j]
                    raw = q_r - q
                    if prev_clamped[a]:
                        offset[a] += raw - prev_raw[a]
                    prev_raw[a] = raw
                # Equivalent part at the state predicted half a step ahead.
                h = 0.5 * dt
                did, diq, dwh = electrical_mechanical_rhs(p, i_d, i_q, w_hat, v_prev[a, 0], v_prev[a, 1], p[P_C])
                out = _control(ctrl, p, smc_cfg, anchors, mcfg, weight_mode, U0_d_mm, psi_d,
                               i_d + h * did, i_q + h * diq, w_hat + h * dwh, q + h * w_hat,
                               ref_code[a], ref_par[a], t + h, offset[a], w_hat,
                               preds, r, r_norm, v, v_ref, nu, s_models)
                v_eq_mid = out[3]
                v_d, v_q, s, v_eq, level, gain = _control(
                    ctrl, p, smc_cfg, anchors, mcfg, weight_mode, U0_d_mm, psi_d, i_d, i_q, w_hat, q,
                    ref_code[a], ref_par[a], t, offset[a], w_hat, preds, r, r_norm, v, v_ref, nu, s_models)
                v_q += v_eq_mid - v_eq
                v_eq = v_eq_mid
                vmax = p[P_VMAX]
                if v_q > vmax or v_q < -vmax:
                    v_q = min(vmax, max(-vmax, v_q))
                    clamped = True
                if v_d > vmax or v_d < -vmax:
                    v_d = min(vmax, max(-vmax, v_d))
                    clamped = True
                s_dot = gain * (v_q - v_eq)
                prev_clamped[a] = clamped
                if clamped:
                    n_clamped += 1
            v_prev[a, 0] = v_d
            v_prev[a, 1] = v_q
            sq = _sgn(q - za[4])
            if obs_mode == 0:
                sw = _sgn(w - w_hat)
            else:
                sw = _sgn(za[6])
            if recording:
                row = rec[rec_row, a]
                row[C_Q] = q
                row[C_W] = w
                row[C_QH] = za[4]
                row[C_WH] = w_hat
                row[C_QR] = q_r
                row[C_WR] = w_r
                row[C_ID] = i_d
                row[C_IQ] = i_q
                row[C_VD] = v_d
                row[C_U] = v_q
                row[C_S] = s
                row[C_SDOT] = s_dot
                row[C_SW] = level
                row[C_UEQ] = v_eq
                row[C_DIST] = d
                row[C_CLAMP] = 1.0 if clamped else 0.0
                for i in range(nm):
                    if ctrl == 1 and not locked:
                        row[N_CHANNELS + i] = nu[i]
                    elif ctrl == 1:
                        row[N_CHANNELS + i] = 0.0
                    else:
                        row[N_CHANNELS + i] = np.nan
            load = p[P_C] + d
            if method == 0:
                _axis_rhs(p, anchors, za, v_d, v_q, load, I1, I2, tau, sq, sw, i_q, locked, k1)
                za += dt * k1
            else:
                _axis_rhs(p, anchors, za, v_d, v_q, load, I1, I2, tau, sq, sw, i_q, locked, k1)
                tmp[:] = za + 0.5 * dt * k1
                _axis_rhs(p, anchors, tmp, v_d, v_q, load, I1, I2, tau, sq, sw, i_q, locked, k2)
                tmp[:] = za + 0.5 * dt * k2
                _axis_rhs(p, anchors, tmp, v_d, v_q, load, I1, I2, tau, sq, sw, i_q, locked, k3)
                tmp[:] = za + dt * k3
                _axis_rhs(p, anchors, tmp, v_d, v_q, load, I1, I2, tau, sq, sw, i_q, locked, k4)
                za += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            for j in range(nz):
                if not np.isfinite(za[j]):
                    return 1, k, n_clamped
    return 0, n_steps, n_clamped


# --------------------------------------------------------------------------
# running


def _initial_vector(sc: Scenario) -> np.ndarray:
    nm = sc.smmmc.n_models
    z0 = np.zeros((len(sc.references), 7 + 4 * nm))
    for a in range(len(sc.references)):
        if sc.initial_state is InitialState.HOLDING:
            z0[a, 1] = sc.motor.C / sc.motor.K
        z0[a, 4] = z0[a, 3] + sc.observer.q_hat0_offset
        z0[a, 5] = z0[a, 2] + sc.observer.omega_hat0_offset
        for i in range(nm):
            z0[a, 7 + 4 * i: 11 + 4 * i] = z0[a, :4]
    return z0


def _initial_voltage(sc: Scenario) -> np.ndarray:
    v0 = np.zeros((len(sc.references), 2))
    if sc.initial_state is InitialState.HOLDING:
        v0[:, 1] = sc.motor.R * sc.motor.C / sc.motor.K
    return v0


def _unpack(sc: Scenario, rec: np.ndarray, n_rows: int) -> SimTrace:
    nm = sc.smmmc.n_models
    stride = sc.record_every * sc.dt
    t = np.arange(n_rows) * stride
    axes = {}
    for a, name in enumerate(sc.axes):
        block = rec[:n_rows, a]
        cols = {c: block[:, j].copy() for j, c in enumerate(CHANNELS)}
        cols["clamped"] = cols["clamped"].astype(bool)
        nu = block[:, N_CHANNELS:N_CHANNELS + nm].copy() if nm else None
        axes[name] = AxisTrace(**cols, nu=nu)
    if sc.controller is ControllerKind.SMC2:
        layer = 2.0 * sc.smc.U0 * sc.dt
    else:
        layer = max(c.psi for c in sc.smmmc.surfaces)
    return SimTrace(t, axes, sc.dt, sc.controller, nm, layer, sc.smc.h)


def run(sc: Scenario) -> SimTrace:
    """Execute a scenario.  Raises :class:`SimulationAborted` with the partial trace on divergence."""
    ig = sc.integrator
    n = ig.n_steps
    n_axes = len(sc.references)
    nm = sc.smmmc.n_models
    prm = np.stack([sc.motor.packed()] * n_axes)
    codes = np.empty(n_axes, dtype=np.int64)
    pars = []
    for a, ref in enumerate(sc.references):
        codes[a], par = ref.packed()
        pars.append(par)
    anchors, mcfg = sc.smmmc.packed()
    dcode, dpar, dt_s, dv_s = sc.disturbance.packed()
    n_rec = -(-n // sc.record_every)
    rec = np.full((n_rec, n_axes, N_CHANNELS + nm), np.nan)
    status, k_last, n_clamped = _simulate(
        n, ig.dt, ig.method.code, prm, codes, np.stack(pars),
        0 if sc.controller is ControllerKind.SMC2 else 1, sc.smc.packed(), anchors, mcfg,
        sc.smmmc.weighting.code, sc.smmmc.U0_d, sc.smmmc.psi_d,
        max(1, int(round(sc.smmmc.reset_horizon / ig.dt))),
        sc.observer.gains.I1, sc.observer.gains.I2, sc.observer.tau(ig.dt), sc.observer.mode.code,
        _initial_vector(sc), dcode, dpar, dt_s, dv_s,
        sc.axis_mode is AxisMode.SEQUENTIAL, max(1, int(round(sc.epoch / ig.dt))), sc.record_every, _initial_voltage(sc), rec,
    )
    if n_clamped:
        log.info("voltage clamp active on %d axis-steps", n_clamped)
    if status != 0:
        rows = k_last // sc.record_every + (1 if k_last % sc.record_every else 0)
        partial = _unpack(sc, rec, rows)
        raise SimulationAborted(k_last * ig.dt, "non-finite closed-loop state", partial)
    trace = _unpack(sc, rec, n_rec)
    trace.meta["n_clamped"] = int(n_clamped)
    trace.energy_gain = _energy_gain(sc, trace)
    return trace


def _energy_gain(sc: Scenario, trace: SimTrace) -> float | None:
    """Realised gain when both axes follow the same solar day, else the ideal one."""
    solar = [r for r in sc.references if isinstance(r.kind, SolarDay)]
    if not solar:
        return None
    day = solar[0].kind
    if len(solar) < 2 or solar[1].kind != day:
        return energy_gain(day.latitude_deg, day.day_of_year).gain
    lat = math.radians(day.latitude_deg)
    decl = declination(day.day_of_year)
    h_set = sunrise_hour_angle(lat, decl)
    if h_set == 0.0:
        return None
    rate = EARTH_RATE * day.speedup
    az_profile = next(r for r in solar if r.axis is Axis.AZIMUTH)
    az0 = az_profile.packed()[1][5]
    t = trace.t
    inside = t <= 2.0 * h_set / rate
    h = -h_set + rate * t[inside]
    pan_az = az0 + trace.axes["azimuth"].q[inside]
    pan_alt = trace.axes["altitude"].q[inside]
    sun_alt = np.empty_like(h)
    sun_az = np.empty_like(h)
    for j, hj in enumerate(h):
        sun_alt[j], sun_az[j] = _horizontal(lat, decl, hj)
    up = sun_alt > 0.0
    cos_track = np.sin(pan_alt) * np.sin(sun_alt) + np.cos(pan_alt) * np.cos(sun_alt) * np.cos(pan_az - sun_az)
    f_az, f_alt = fixed_panel_orientation(day.latitude_deg)
    cos_fixed = math.sin(f_alt) * np.sin(sun_alt) + math.cos(f_alt) * np.cos(sun_alt) * np.cos(f_az - sun_az)
    tracked = np.sum(np.clip(cos_track, 0.0, None)[up])
    fixed = np.sum(np.clip(cos_fixed, 0.0, None)[up])
    return float(tracked / fixed - 1.0) if fixed > 0.0 else None


# --------------------------------------------------------------------------
# metrics


def settling_time(t: np.ndarray, err: np.ndarray, band: float) -> tuple[float, bool]:
    """First time after which ``|err|`` stays within ``band``; ``(t_end, False)`` if it never does."""
    outside = np.nonzero(np.abs(err) > band)[0]
    if outside.size == 0:
        return 0.0, True
    last = outside[-1]
    if last == err.size - 1:
        return float(t[-1]), False
    return float(t[last + 1]), True


def commutation_count(level: np.ndarray, threshold: float = SCHMITT_LEVEL) -> int:
    """Transitions between ``>= threshold`` and ``<= -threshold`` (hysteresis between)."""
    state = 0
    count = 0
    for x in level:
        if x >= threshold:
            if state == -1:
                count += 1
            state = 1
        elif x <= -threshold:
            if state == 1:
                count += 1
            state = -1
    return count


def sign_change_count(x: np.ndarray) -> int:
    sg = np.sign(x)
    sg = sg[sg != 0]
    return int(np.count_nonzero(sg[1:] != sg[:-1]))


def tail_slice(n: int, fraction: float = TAIL_FRACTION) -> slice:
    return slice(min(n - 1, int(math.floor((1.0 - fraction) * n))), n)


def metrics(trace: SimTrace, axis: str | None = None) -> SimMetrics:
    """Scalar summary of one axis of a trace.

    Tail quantities use the final 20% of samples.  The switching rate counts
    commutations of the normalised switching term between its upper and lower
    halves; ``u_crossing_rate`` counts raw crossings of the voltage about its
    tail mean.
    """
    if trace.t.size == 0:
        raise DomainError("empty trace")
    ax = trace.axis(axis)
    t = trace.t
    err = ax.q - ax.q_r
    band = max(SETTLING_FRACTION * float(np.ptp(ax.q_r)), SETTLING_FLOOR)
    t_settle, settled = settling_time(t, err, band)
    w = tail_slice(t.size)
    span = float(t[w][-1] - t[w][0]) if t[w].size > 1 else 0.0
    u_tail = ax.u[w]
    if span > 0.0:
        switching = commutation_count(ax.switch[w]) / span
        crossings = sign_change_count(u_tail - u_tail.mean()) / span
    else:
        switching = crossings = 0.0
    ds = np.diff(ax.s) / trace.sample_dt
    if ds.size:
        s = ax.s[:-1]
        reaching = np.abs(s) > trace.boundary_layer
        n_reach = int(reaching.sum())
        bad = (s * ds + trace.reaching_floor * np.abs(s))[reaching] > 0.0
        reach_frac = float(bad.sum()) / n_reach if n_reach else 0.0
    else:
        reach_frac = 0.0
    return SimMetrics(
        settling_time_2pct=t_settle,
        settled=settled,
        steady_state_error=float(np.mean(np.abs(err[w]))),
        chattering_pp=float(np.ptp(err[w])),
        switching_rate=float(switching),
        u_crossing_rate=float(crossings),
        rms_control=float(np.sqrt(np.mean(ax.u**2))),
        max_observer_error=float(np.max(np.abs(ax.omega[w] - ax.omega_hat[w]))),
        reaching_violation_frac=reach_frac,
        energy_gain=trace.energy_gain,
    )


def _ratio(x: float, y: float) -> float:
    if x == y:
        return 1.0
    if y == 0.0:
        return math.inf
    return x / y


def comparable(a: Scenario, b: Scenario) -> bool:
    return (
        a.motor == b.motor
        and a.references == b.references
        and a.disturbance == b.disturbance
        and a.integrator == b.integrator
    )


def compare_traces(ta: SimTrace, tb: SimTrace, axis: str | None = None) -> Comparison:
    ma, mb = metrics(ta, axis), metrics(tb, axis)
    return Comparison(
        ma,
        mb,
        _ratio(ma.chattering_pp, mb.chattering_pp),
        _ratio(ma.switching_rate, mb.switching_rate),
        _ratio(ma.settling_time_2pct, mb.settling_time_2pct),
        ta,
        tb,
    )


def compare(a: Scenario, b: Scenario, axis: str | None = None) -> Comparison:
    """Run both scenarios and report metric ratios ``a / b``."""
    if not comparable(a, b):
        raise ScenarioError("scenarios not comparable: plant, reference, disturbance or integrator differ")
    return compare_traces(run(a), run(b), axis)


# --------------------------------------------------------------------------
# output


def trace_frame(trace: SimTrace, every: int = 1) -> pd.DataFrame:
    cols = {"t": trace.t[::every]}
    for name, ax in trace.axes.items():
        for c in CHANNELS:
            values = getattr(ax, c)[::every]
            cols[f"{c}_{name}"] = values.astype(float) if c == "clamped" else values
        for i in range(trace.n_models):
            cols[f"nu_{i + 1}_{name}"] = ax.nu[::every, i]
    return pd.DataFrame(cols)


def write_csv(trace: SimTrace, path: str | Path, every: int = 1) -> None:
    """CSV with a header row; missing validities are written as empty fields."""
    trace_frame(trace, every).to_csv(path, index=False, na_rep="", float_format="%.12g", lineterminator="\n")


def metrics_mapping(m: SimMetrics) -> dict:
    out = m._asdict()
    if out["energy_gain"] is None:
        del out["energy_gain"]
    return out
