"""Fixed-step explicit integration.

Inputs held by a controller are zero-order-hold: the caller closes over them
before calling :func:`step`, so every stage sees the same value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np

from .errors import DomainError, SimulationAborted

MAX_STEPS = 10**8


class Method(str, Enum):
    EULER = "euler"
    RK4 = "rk4"

    @property
    def code(self) -> int:
        return 0 if self is Method.EULER else 1


@dataclass(frozen=True)
class IntegratorConfig:
    method: Method = Method.RK4
    dt: float = 1e-4
    t_end: float = 100.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "method", Method(self.method))
        if not (math.isfinite(self.dt) and self.dt > 0.0):
            raise DomainError(f"dt must be > 0, got {self.dt!r}")
        if not (math.isfinite(self.t_end) and self.t_end >= self.dt):
            raise DomainError(f"t_end must be >= dt, got t_end={self.t_end!r}, dt={self.dt!r}")
        if self.t_end / self.dt > MAX_STEPS:
            raise DomainError(f"t_end/dt exceeds the {MAX_STEPS:.0e} step guard")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))


Field = Callable[[float, np.ndarray], np.ndarray]


def step(f: Field, state, t: float, dt: float, method: Method | str = Method.RK4) -> np.ndarray:
    """Advance ``state`` by one step of size ``dt``.

    Raises :class:`SimulationAborted` if any stage produces a non-finite value.
    """
    if not dt > 0.0:
        raise DomainError(f"dt must be > 0, got {dt!r}")
    method = Method(method)
    x = np.asarray(state, dtype=float)

    def stage(tt, xx):
        k = np.asarray(f(tt, xx), dtype=float)
        if not np.all(np.isfinite(k)):
            raise SimulationAborted(tt, "non-finite derivative")
        return k

    if method is Method.EULER:
        out = x + dt * stage(t, x)
    else:
        k1 = stage(t, x)
        k2 = stage(t + 0.5 * dt, x + 0.5 * dt * k1)
        k3 = stage(t + 0.5 * dt, x + 0.5 * dt * k2)
        k4 = stage(t + dt, x + dt * k3)
        out = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise SimulationAborted(t + dt, "non-finite state")
    return out


def integrate(f: Field, x0, t0: float, dt: float, n_steps: int, method: Method | str = Method.RK4) -> np.ndarray:
    """Return the ``n_steps + 1`` states visited from ``x0``."""
    x = np.asarray(x0, dtype=float)
    out = np.empty((n_steps + 1,) + x.shape)
    out[0] = x
    for k in range(n_steps):
        x = step(f, x, t0 + k * dt, dt, method)
        out[k + 1] = x
    return out
