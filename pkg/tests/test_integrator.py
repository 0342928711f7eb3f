import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from suntracker.errors import DomainError, SimulationAborted
from suntracker.integrator import IntegratorConfig, Method, integrate, step


def decay(t, x):
    return -x


class TestStep:
    @given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=5))
    def test_zero_field_keeps_state(self, x):
        np.testing.assert_array_equal(step(lambda t, y: np.zeros_like(y), x, 0.0, 0.1), x)

    def test_rk4_decay(self):
        assert step(decay, [1.0], 0.0, 0.1, "rk4")[0] == pytest.approx(math.exp(-0.1), abs=1e-7)

    def test_euler_decay(self):
        assert step(decay, [1.0], 0.0, 0.1, Method.EULER)[0] == 0.9

    def test_rejects_bad_dt(self):
        with pytest.raises(DomainError):
            step(decay, [1.0], 0.0, 0.0)

    def test_non_finite_aborts_with_time(self):
        with pytest.raises(SimulationAborted) as info:
            step(lambda t, x: np.full_like(x, np.inf) if t >= 0.2 else x * 0.0, [1.0], 0.2, 0.1, "euler")
        assert info.value.t == pytest.approx(0.2)

    def test_rk4_order(self):
        def error(n):
            return abs(integrate(decay, [1.0], 0.0, 1.0 / n, n)[-1, 0] - math.exp(-1.0))

        ratio = error(10) / error(20)
        assert 14.0 <= ratio <= 18.0

    def test_deterministic(self):
        a = integrate(lambda t, x: np.sin(3 * t) - x**3, [0.3, -1.0], 0.0, 1e-3, 500)
        b = integrate(lambda t, x: np.sin(3 * t) - x**3, [0.3, -1.0], 0.0, 1e-3, 500)
        assert a.tobytes() == b.tobytes()


class TestConfig:
    def test_defaults(self):
        cfg = IntegratorConfig()
        assert (cfg.method, cfg.dt, cfg.t_end, cfg.n_steps) == (Method.RK4, 1e-4, 100.0, 1_000_000)

    @pytest.mark.parametrize("kw", [{"dt": 0.0}, {"dt": -1e-3}, {"t_end": 1e-5}, {"dt": 1e-9, "t_end": 1.0}, {"method": "midpoint"}])
    def test_guards(self, kw):
        with pytest.raises((DomainError, ValueError)):
            IntegratorConfig(**kw)
