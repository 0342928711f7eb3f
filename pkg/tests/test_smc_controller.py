import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from suntracker.errors import DomainError
from suntracker.motor_plant import DqInput, MotorParams, MotorState
from suntracker.smc_controller import (
    ErrorState,
    SmcController,
    SurfaceConfig,
    SurfaceKind,
    channel_gain,
    d_axis_control,
    equivalent_control,
    error_rates,
    error_state,
    position_surface,
    reaching_diagnostic,
    speed_error_rate,
    switching_control,
    velocity_surface,
)
from suntracker.sun_reference import ReferencePoint, ReferenceProfile, Step, sample

P = MotorParams()
CFG = SurfaceConfig()
small = st.floats(-5.0, 5.0)
errors = st.builds(ErrorState, small, small, small, small)


def ref_at(q=0.0, w=0.0, i_qr=None):
    i_qr = P.C / P.K if i_qr is None else i_qr
    return ReferencePoint(q, w, 0.0, 0.0, 0.0, i_qr, 0.0, P.R * i_qr + P.K * w, P.C, 0.0)


class TestErrors:
    def test_zero_at_reference(self):
        r = ref_at(0.3, 1.0)
        s = MotorState(r.i_dr, r.i_qr, r.omega_r, r.q_r)
        assert error_state(s, r) == (0.0, 0.0, 0.0, 0.0)

    def test_speed_error(self):
        e = error_state(MotorState(0, 0, math.radians(180), 0), ref_at(w=math.radians(160)))
        assert e.e3 == pytest.approx(0.349066, rel=1e-5)

    def test_position_error(self):
        e = error_state(MotorState(), ref_at(q=8.3776e-3, i_qr=0.0))
        assert e.e4 == pytest.approx(-8.3776e-3)


class TestSurfaces:
    def test_velocity_origin(self):
        assert velocity_surface(ErrorState(0, 0, 0, 0), 0.0, CFG)[0] == 0.0

    def test_velocity_coefficient(self):
        assert velocity_surface(ErrorState(0, 0, 1.0, 0), 0.0, CFG)[0] == pytest.approx(0.135)

    @given(st.floats(-100.0, 100.0))
    def test_velocity_manifold(self, de3):
        assert velocity_surface(ErrorState(0, 0, -de3 / CFG.mu, 0), de3, CFG)[0] == pytest.approx(0.0, abs=1e-12)

    def test_velocity_rate_needs_model(self):
        assert math.isnan(velocity_surface(ErrorState(0, 0, 1.0, 0), 0.0, CFG)[1])

    def test_position_origin(self):
        assert position_surface(ErrorState(0, 0, 0, 0), CFG, P)[0] == 0.0

    def test_position_coefficient(self):
        assert position_surface(ErrorState(0, 0, 0, 1.0), CFG, P)[0] == pytest.approx(1.2)

    def test_position_cancelling_current(self):
        e3, e4, mismatch = 0.4, -0.02, 0.05
        e2 = (P.J * (-(CFG.m1 * e4 + CFG.m2 * e3)) + P.f_v * e3 + mismatch) / P.K
        s, _ = position_surface(ErrorState(0, e2, e3, e4), CFG, P, load_mismatch=mismatch)
        assert s == pytest.approx(0.0, abs=1e-12)

    @given(errors, errors, st.floats(-3.0, 3.0))
    def test_linearity(self, a, b, k):
        combo = ErrorState(*(x + k * y for x, y in zip(a, b)))
        for fn in (
            lambda e: position_surface(e, CFG, P)[0],
            lambda e: velocity_surface(e, speed_error_rate(e, P), CFG)[0],
        ):
            assert fn(combo) == pytest.approx(fn(a) + k * fn(b), rel=1e-9, abs=1e-6)


class TestSwitching:
    def test_positive_surface(self):
        assert switching_control(0.7, CFG) == -CFG.U0

    def test_zero_surface(self):
        assert switching_control(0.0, CFG) == 0.0

    def test_negative_surface(self):
        assert switching_control(-3.2, SurfaceConfig(U0=5.0)) == 5.0

    @given(st.floats(-1e6, 1e6))
    def test_odd(self, s):
        assert switching_control(-s, CFG) == -switching_control(s, CFG)

    def test_gain_validation(self):
        with pytest.raises(DomainError):
            SurfaceConfig(U0=0.0)


class TestEquivalentControl:
    def test_matches_feedforward_at_steady_state(self):
        r = ref_at(0.2, 0.0)
        s = MotorState(0.0, r.i_qr, 0.0, 0.2)
        assert equivalent_control(s, r, CFG, P).v_q == pytest.approx(r.v_qr, rel=1e-12)

    def test_matches_feedforward_on_ramp(self):
        r = sample(ReferenceProfile(Step(20.0, 0.0, 1.0)), 0.4, P)
        s = MotorState(0.0, r.i_qr, r.omega_r, r.q_r)
        assert equivalent_control(s, r, CFG, P).v_q == pytest.approx(r.v_qr, rel=1e-9)

    def test_origin(self):
        r = ReferencePoint(0, 0, 0, 0, 0, 0, 0, 0, 0, 0)
        assert equivalent_control(MotorState(), r, CFG, P).v_q == 0.0

    @given(
        st.builds(MotorState, st.floats(-1, 1), st.floats(-2, 4), st.floats(-3, 3), st.floats(-1, 1)),
        st.floats(-1.0, 1.0),
        st.sampled_from(list(SurfaceKind)),
    )
    def test_surface_rate_vanishes(self, x, q_r, kind):
        r = sample(ReferenceProfile(Step(10.0, 0.0, 1.0)), 0.3, P)._replace(q_r=q_r)
        eq = equivalent_control(x, r, CFG, P, kind)
        if eq.saturated:
            return
        d_axis = d_axis_control(x, r, CFG, P)
        e = error_state(x, r)
        e_dot = error_rates(P, x, r, DqInput(d_axis, eq.v_q))
        if kind is SurfaceKind.POSITION:
            _, s_dot = position_surface(e, CFG, P, e_dot=e_dot)
        else:
            _, s_dot = velocity_surface(e, speed_error_rate(e, P), CFG, p=P, e_dot=e_dot)
        assert abs(s_dot) < 1e-9 * max(1.0, abs(eq.v_q) * channel_gain(P))

    def test_switching_commands_surface_rate(self):
        ctrl = SmcController(CFG, P)
        r = ref_at(0.01)
        out = ctrl.evaluate(MotorState(0.0, r.i_qr, 0.0, 0.0), r)
        assert out.s < 0.0
        assert out.s_dot == pytest.approx(CFG.U0, rel=1e-9)
        assert out.u == pytest.approx(out.u_eq + out.u_sw)


class TestReaching:
    def test_exponential_decay_outside_layer(self):
        t = np.linspace(0.0, 10.0, 1001)
        s = np.exp(-t)
        rep = reaching_diagnostic(s, -s, h=0.1, boundary_layer=0.1)
        assert rep.n_violations == 0 and rep.n_reaching > 0

    def test_stalled_surface(self):
        rep = reaching_diagnostic(np.full(50, 0.3), np.zeros(50), h=0.5)
        assert rep.violation_fraction == 1.0
        assert rep.max_violation == pytest.approx(0.15)

    def test_shape_mismatch(self):
        with pytest.raises(DomainError):
            reaching_diagnostic([1.0, 2.0], [1.0], 0.5)
