"""Reference trajectories for the two tracker axes and a cosine power model.

Angles in profile definitions are kept in degrees so that scenario files
round-trip exactly; everything returned by :func:`sample` is in SI units.
All derivatives are analytic.  Solar angles are differentiated with
third-order jets: a jet ``(f, f', f'', f''')`` is pushed through ``sin``,
``cos``, ``asin`` and ``atan2`` with the chain rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple, Union

import numpy as np
from numba import njit

from .errors import DomainError
from .motor_plant import MotorParams, flat_inverse_kernel

DECLINATION_AMPLITUDE = math.radians(23.45)
SECONDS_PER_DAY = 86400.0
EARTH_RATE = 2.0 * math.pi / SECONDS_PER_DAY  # hour angle advance, rad per solar second


class Axis(str, Enum):
    AZIMUTH = "azimuth"
    ALTITUDE = "altitude"


@dataclass(frozen=True)
class Step:
    """Position step of ``target_deg`` starting at ``t_on``.

    With ``rise_time > 0`` the step is a quintic blend whose first three
    derivatives exist.  ``rise_time = 0`` gives a pure jump with static
    feedforward only.
    """

    target_deg: float
    t_on: float = 0.0
    rise_time: float = 0.5

    def __post_init__(self) -> None:
        if not math.isfinite(self.target_deg):
            raise DomainError("step target must be finite")
        if not (math.isfinite(self.t_on) and self.t_on >= 0.0):
            raise DomainError("t_on must be >= 0")
        if not (math.isfinite(self.rise_time) and self.rise_time >= 0.0):
            raise DomainError("rise_time must be >= 0")

    @property
    def target(self) -> float:
        return math.radians(self.target_deg)


@dataclass(frozen=True)
class Ramp:
    """Constant-rate slew ``q_r = rate * (t - t_on)`` after ``t_on``."""

    rate_deg_s: float
    t_on: float = 0.0

    def __post_init__(self) -> None:
        if not math.isfinite(self.rate_deg_s):
            raise DomainError("ramp rate must be finite")
        if not (math.isfinite(self.t_on) and self.t_on >= 0.0):
            raise DomainError("t_on must be >= 0")

    @property
    def rate(self) -> float:
        return math.radians(self.rate_deg_s)


@dataclass(frozen=True)
class SolarDay:
    """Sun-following reference from sunrise to sunset, then a return to home.

    Simulation time runs ``speedup`` times faster than solar time.  The axis
    angle is measured relative to its value at sunrise, so the tracker starts
    at zero.  After sunset a quintic segment of ``return_time`` seconds brings
    the reference back to zero.
    """

    latitude_deg: float
    day_of_year: int
    speedup: float = 1.0
    return_time: float = 10.0

    def __post_init__(self) -> None:
        _check_latitude(self.latitude_deg)
        _check_day(self.day_of_year)
        object.__setattr__(self, "day_of_year", int(self.day_of_year))
        if not (math.isfinite(self.speedup) and self.speedup > 0.0):
            raise DomainError("speedup must be > 0")
        if not (math.isfinite(self.return_time) and self.return_time > 0.0):
            raise DomainError("return_time must be > 0")


ProfileKind = Union[Step, Ramp, SolarDay]


@dataclass(frozen=True)
class ReferenceProfile:
    kind: ProfileKind
    axis: Axis = Axis.AZIMUTH

    def __post_init__(self) -> None:
        object.__setattr__(self, "axis", Axis(self.axis))
        if not isinstance(self.kind, (Step, Ramp, SolarDay)):
            raise DomainError(f"unsupported profile kind {type(self.kind).__name__}")

    def packed(self) -> tuple[int, np.ndarray]:
        """Kernel encoding ``(code, parameters)``."""
        k = self.kind
        par = np.zeros(N_REF_PARAMS)
        if isinstance(k, Step):
            par[:3] = (k.target, k.t_on, k.rise_time)
            return REF_STEP, par
        if isinstance(k, Ramp):
            par[:2] = (k.rate, k.t_on)
            return REF_RAMP, par
        return REF_SOLAR, _solar_parameters(k, self.axis)


class ReferencePoint(NamedTuple):
    """Desired motion at one instant plus the feedforward that realises it."""

    q_r: float
    omega_r: float
    domega_r: float
    ddomega_r: float
    i_dr: float
    i_qr: float
    v_dr: float
    v_qr: float
    C_r: float
    dC_r: float
    di_dr: float = 0.0
    di_qr: float = 0.0


class SunGeometry(NamedTuple):
    declination: float
    hour_angle: float
    altitude: float
    azimuth: float


REF_STEP, REF_RAMP, REF_SOLAR = 0, 1, 2
N_REF_PARAMS = 10


# --------------------------------------------------------------------------
# jets


@njit(cache=True)
def _jet_sin(a0, a1, a2, a3):
    s = math.sin(a0)
    c = math.cos(a0)
    return s, c * a1, -s * a1 * a1 + c * a2, -c * a1**3 - 3.0 * s * a1 * a2 + c * a3


@njit(cache=True)
def _jet_cos(a0, a1, a2, a3):
    s = math.sin(a0)
    c = math.cos(a0)
    return c, -s * a1, -c * a1 * a1 - s * a2, s * a1**3 - 3.0 * c * a1 * a2 - s * a3


@njit(cache=True)
def _jet_asin(a0, a1, a2, a3):
    a0 = min(1.0, max(-1.0, a0))
    w = 1.0 - a0 * a0
    if w <= 0.0:
        return math.asin(a0), 0.0, 0.0, 0.0
    f1 = w**-0.5
    f2 = a0 * w**-1.5
    f3 = (1.0 + 2.0 * a0 * a0) * w**-2.5
    return math.asin(a0), f1 * a1, f2 * a1 * a1 + f1 * a2, f3 * a1**3 + 3.0 * f2 * a1 * a2 + f1 * a3


@njit(cache=True)
def _jet_atan2(y0, y1, y2, y3, x0, x1, x2, x3):
    # theta' = (x y' - y x') / (x^2 + y^2); differentiate that quotient twice.
    r0 = x0 * x0 + y0 * y0
    if r0 == 0.0:
        return math.atan2(y0, x0), 0.0, 0.0, 0.0
    r1 = 2.0 * (x0 * x1 + y0 * y1)
    r2 = 2.0 * (x1 * x1 + x0 * x2 + y1 * y1 + y0 * y2)
    n0 = x0 * y1 - y0 * x1
    n1 = x0 * y2 - y0 * x2
    n2 = x1 * y2 + x0 * y3 - y1 * x2 - y0 * x3
    q0 = n0 / r0
    q1 = (n1 - q0 * r1) / r0
    q2 = (n2 - 2.0 * q1 * r1 - q0 * r2) / r0
    return math.atan2(y0, x0), q0, q1, q2


@njit(cache=True)
def _solar_axis_jet(lat, decl, h0, h1, axis, noon_north):
    """Axis angle and its first three time derivatives for hour angle ``h0 + h1 t``."""
    sh = _jet_sin(h0, h1, 0.0, 0.0)
    ch = _jet_cos(h0, h1, 0.0, 0.0)
    sp, cp = math.sin(lat), math.cos(lat)
    sd, cd = math.sin(decl), math.cos(decl)
    if axis == 1:
        return _jet_asin(sp * sd + cp * cd * ch[0], cp * cd * ch[1], cp * cd * ch[2], cp * cd * ch[3])
    y = (cd * sh[0], cd * sh[1], cd * sh[2], cd * sh[3])
    x = (cd * sp * ch[0] - sd * cp, cd * sp * ch[1], cd * sp * ch[2], cd * sp * ch[3])
    if noon_north:
        # Measure from north so the branch cut sits behind the midday sun.
        a = _jet_atan2(-y[0], -y[1], -y[2], -y[3], -x[0], -x[1], -x[2], -x[3])
        return a[0] + math.pi, a[1], a[2], a[3]
    return _jet_atan2(y[0], y[1], y[2], y[3], x[0], x[1], x[2], x[3])


@njit(cache=True)
def _quintic(t, T):
    tau = min(1.0, max(0.0, t / T))
    s0 = tau**3 * (10.0 - 15.0 * tau + 6.0 * tau * tau)
    if tau <= 0.0 or tau >= 1.0:
        return s0, 0.0, 0.0, 0.0
    s1 = 30.0 * tau * tau * (1.0 - tau) ** 2 / T
    s2 = (60.0 * tau - 180.0 * tau * tau + 120.0 * tau**3) / (T * T)
    s3 = (60.0 - 360.0 * tau + 360.0 * tau * tau) / T**3
    return s0, s1, s2, s3


@njit(cache=True)
def reference_kernel(code, par, t):
    """Returns ``(q_r, omega_r, domega_r, ddomega_r)`` at time ``t``."""
    if code == 0:
        target, t_on, rise = par[0], par[1], par[2]
        if t < t_on:
            return 0.0, 0.0, 0.0, 0.0
        if rise <= 0.0:
            return target, 0.0, 0.0, 0.0
        s = _quintic(t - t_on, rise)
        return target * s[0], target * s[1], target * s[2], target * s[3]
    if code == 1:
        rate, t_on = par[0], par[1]
        if t < t_on:
            return 0.0, 0.0, 0.0, 0.0
        return rate * (t - t_on), rate, 0.0, 0.0
    lat, decl, h_rise, h_rate = par[0], par[1], par[2], par[3]
    t_day, ang0, axis, ret, q_end, noon_north = par[4], par[5], par[6], par[7], par[8], par[9]
    if t <= t_day:
        a = _solar_axis_jet(lat, decl, h_rise + h_rate * t, h_rate, int(axis), noon_north > 0.5)
        return a[0] - ang0, a[1], a[2], a[3]
    s = _quintic(t - t_day, ret)
    return q_end * (1.0 - s[0]), -q_end * s[1], -q_end * s[2], -q_end * s[3]


@njit(cache=True)
def feedforward_kernel(prm, q_r, w_r, dw_r, ddw_r):
    """Flat feedforward with ``i_d`` held at zero and the nominal load."""
    return flat_inverse_kernel(prm, q_r, w_r, dw_r, ddw_r, 0.0, 0.0, prm[6], 0.0)


# --------------------------------------------------------------------------
# solar geometry


def _check_latitude(lat: float) -> None:
    if not (math.isfinite(lat) and -90.0 <= lat <= 90.0):
        raise DomainError(f"latitude must lie in [-90, 90] degrees, got {lat!r}")


def _check_day(day) -> None:
    if isinstance(day, bool) or float(day) != int(day) or not 1 <= int(day) <= 365:
        raise DomainError(f"day of year must be an integer in 1..365, got {day!r}")


def declination(day: int) -> float:
    """Solar declination in radians for a day of the year."""
    return DECLINATION_AMPLITUDE * math.sin(2.0 * math.pi * (284 + day) / 365.0)


def sunrise_hour_angle(latitude: float, decl: float) -> float:
    """Magnitude of the hour angle at sunrise (radians); 0 in polar night, pi in polar day."""
    x = -math.tan(latitude) * math.tan(decl)
    if x >= 1.0:
        return 0.0
    if x <= -1.0:
        return math.pi
    return math.acos(x)


def _horizontal(lat: float, decl: float, h: float) -> tuple[float, float]:
    sin_alt = math.sin(lat) * math.sin(decl) + math.cos(lat) * math.cos(decl) * math.cos(h)
    alt = math.asin(min(1.0, max(-1.0, sin_alt)))
    az = math.atan2(
        math.cos(decl) * math.sin(h),
        math.cos(decl) * math.sin(lat) * math.cos(h) - math.sin(decl) * math.cos(lat),
    )
    return alt, az


def solar_position(latitude: float, day: int, solar_time: float) -> SunGeometry:
    """Sun angles for a latitude in degrees and local solar time in hours.

    Azimuth is measured from due south, positive towards the west.
    """
    _check_latitude(latitude)
    _check_day(day)
    if not (math.isfinite(solar_time) and 0.0 <= solar_time <= 24.0):
        raise DomainError(f"solar time must lie in [0, 24] hours, got {solar_time!r}")
    decl = declination(int(day))
    h = math.radians(15.0 * (solar_time - 12.0))
    alt, az = _horizontal(math.radians(latitude), decl, h)
    return SunGeometry(decl, h, alt, az)


def _solar_parameters(k: SolarDay, axis: Axis) -> np.ndarray:
    lat = math.radians(k.latitude_deg)
    decl = declination(k.day_of_year)
    h_set = sunrise_hour_angle(lat, decl)
    h_rate = EARTH_RATE * k.speedup
    noon_north = 1.0 if decl > lat else 0.0
    ax = 1 if axis is Axis.ALTITUDE else 0
    par = np.zeros(N_REF_PARAMS)
    par[:4] = (lat, decl, -h_set, h_rate)
    par[4] = 2.0 * h_set / h_rate
    par[6], par[7], par[9] = ax, k.return_time, noon_north
    if h_set > 0.0:
        par[5] = _solar_axis_jet(lat, decl, -h_set, h_rate, ax, noon_north > 0.5)[0]
        par[8] = reference_kernel(REF_SOLAR, par, par[4])[0]
    return par


def incidence_power(panel_azimuth: float, panel_altitude: float, sun: SunGeometry, p_max: float) -> float:
    """Power collected by a panel whose normal points at (azimuth, altitude)."""
    if not p_max > 0.0:
        raise DomainError("p_max must be > 0")
    if sun.altitude <= 0.0:
        return 0.0
    cos_inc = math.sin(panel_altitude) * math.sin(sun.altitude) + math.cos(panel_altitude) * math.cos(
        sun.altitude
    ) * math.cos(panel_azimuth - sun.azimuth)
    return p_max * max(0.0, cos_inc)


def fixed_panel_orientation(latitude: float) -> tuple[float, float]:
    """(azimuth, altitude) of a panel tilted at the latitude and facing the equator."""
    azimuth = 0.0 if latitude >= 0.0 else math.pi
    return azimuth, math.radians(90.0 - abs(latitude))


def daily_energy(tracking: bool, latitude: float, day: int, p_max: float = 1000.0, dt: float = 60.0) -> float:
    """Energy in Wh collected between sunrise and sunset (midpoint rule in time)."""
    _check_latitude(latitude)
    _check_day(day)
    if not (math.isfinite(dt) and dt > 0.0):
        raise DomainError("dt must be > 0")
    if not p_max > 0.0:
        raise DomainError("p_max must be > 0")
    lat = math.radians(latitude)
    decl = declination(int(day))
    h_set = sunrise_hour_angle(lat, decl)
    if h_set == 0.0:
        return 0.0
    span = 2.0 * h_set / EARTH_RATE
    n = max(1, int(round(span / dt)))
    step_s = span / n
    panel_az, panel_alt = fixed_panel_orientation(latitude)
    total = 0.0
    for j in range(n):
        h = -h_set + (j + 0.5) * step_s * EARTH_RATE
        alt, az = _horizontal(lat, decl, h)
        sun = SunGeometry(decl, h, alt, az)
        if tracking:
            total += incidence_power(az, alt, sun, p_max)
        else:
            total += incidence_power(panel_az, panel_alt, sun, p_max)
    return total * step_s / 3600.0


class EnergyReport(NamedTuple):
    fixed_wh: float
    tracked_wh: float
    gain: float


def energy_gain(latitude: float, day: int, p_max: float = 1000.0, dt: float = 60.0) -> EnergyReport:
    """Fixed versus ideally tracked daily energy; ``gain = tracked / fixed - 1``."""
    fixed = daily_energy(False, latitude, day, p_max, dt)
    tracked = daily_energy(True, latitude, day, p_max, dt)
    gain = tracked / fixed - 1.0 if fixed > 0.0 else math.inf
    return EnergyReport(fixed, tracked, gain)


# --------------------------------------------------------------------------
# sampling


def sample(profile: ReferenceProfile, t: float, p: MotorParams) -> ReferencePoint:
    """Reference and feedforward at time ``t`` for the given drive."""
    if not (math.isfinite(t) and t >= 0.0):
        raise DomainError(f"t must be finite and >= 0, got {t!r}")
    code, par = profile.packed()
    prm = p.packed()
    q, w, dw, ddw = reference_kernel(code, par, float(t))
    i_d, i_q, _, _, di_q, v_d, v_q = feedforward_kernel(prm, q, w, dw, ddw)
    return ReferencePoint(q, w, dw, ddw, i_d, i_q, v_d, v_q, p.C, 0.0, 0.0, di_q)


def solar_day_duration(k: SolarDay) -> float:
    """Simulated seconds from sunrise to the end of the return segment."""
    lat = math.radians(k.latitude_deg)
    h_set = sunrise_hour_angle(lat, declination(k.day_of_year))
    return 2.0 * h_set / (EARTH_RATE * k.speedup) + k.return_time
