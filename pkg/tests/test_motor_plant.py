import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from suntracker.errors import DomainError
from suntracker.motor_plant import (
    DqInput,
    FlatTrajectory,
    MotorParams,
    MotorState,
    derivatives,
    flat_inverse,
    holding_state,
    state_space,
    stored_energy,
)

P = MotorParams()
finite = st.floats(-50.0, 50.0, allow_nan=False)
states = st.builds(MotorState, finite, finite, st.floats(-20.0, 20.0), st.floats(-100.0, 100.0))
inputs = st.builds(DqInput, st.floats(-24.0, 24.0), st.floats(-24.0, 24.0))


class TestParams:
    def test_defaults(self):
        assert (P.R, P.L, P.J, P.K, P.f_v, P.C, P.N) == (3.15, 8.15e-3, 3.0145e-4, 0.433, 0.0172, 0.780, 50)

    @pytest.mark.parametrize("field,value", [("R", 0.0), ("L", -1.0), ("J", math.nan), ("K", math.inf), ("C", -0.1), ("N", 0), ("N", 2.5)])
    def test_rejects_out_of_domain(self, field, value):
        with pytest.raises(DomainError):
            MotorParams(**{field: value})

    def test_mapping_round_trip(self):
        assert MotorParams.from_mapping(P.to_mapping()) == P

    def test_mapping_rejects_unknown_key(self):
        with pytest.raises(DomainError, match="unknown"):
            MotorParams.from_mapping({"R": 1.0, "Rs": 2.0})

    def test_coupling_sign_flag(self):
        assert P.coupling_sign == -1.0
        assert MotorParams(paper_literal_signs=True).coupling_sign == 1.0


class TestDerivatives:
    def test_origin_is_equilibrium(self):
        assert derivatives(P, MotorState(), DqInput(), 0.0) == (0.0, 0.0, 0.0, 0.0)

    def test_load_decelerates_from_rest(self):
        d = derivatives(P, MotorState(), DqInput(), 0.780)
        assert d.domega == pytest.approx(-2587.494, rel=1e-6)
        assert (d.di_d, d.di_q, d.dtheta) == (0.0, 0.0, 0.0)

    def test_torque_balance(self):
        s = MotorState(0.0, 0.780 / 0.433, 0.0, 1.234)
        assert derivatives(P, s, DqInput(), 0.780).domega == pytest.approx(0.0, abs=1e-12)

    def test_rejects_non_finite(self):
        with pytest.raises(DomainError):
            derivatives(P, MotorState(math.nan, 0, 0, 0), DqInput(), 0.0)

    @given(states, inputs, inputs)
    def test_affine_in_input(self, s, u1, u2):
        total = derivatives(P, s, DqInput(u1.v_d + u2.v_d, u1.v_q + u2.v_q), 0.3)
        lhs = np.subtract(total, derivatives(P, s, u2, 0.3))
        rhs = np.subtract(derivatives(P, s, u1, 0.3), derivatives(P, s, DqInput(), 0.3))
        np.testing.assert_allclose(lhs, rhs, rtol=1e-9, atol=1e-6)

    def test_literal_sign_flag_flips_coupling(self):
        s = MotorState(1.0, 0.0, 2.0, 0.0)
        a = derivatives(P, s, DqInput(), 0.0).di_q
        b = derivatives(MotorParams(paper_literal_signs=True), s, DqInput(), 0.0).di_q
        coupling = P.N * P.L * 2.0 * 1.0 / P.L
        assert b - a == pytest.approx(2.0 * coupling)


class TestStateSpace:
    def test_no_cross_coupling_at_rest(self):
        A, _, _ = state_space(P, 0.0)
        assert A[0, 1] == 0.0 and A[1, 0] == 0.0
        assert A[0, 0] == A[1, 1] == pytest.approx(-P.R / P.L)

    def test_coupling_entries_at_unit_speed(self):
        A, _, _ = state_space(P, 1.0)
        assert A[0, 1] == 50.0
        assert A[1, 0] == -50.0

    def test_equivalence_with_derivatives_on_random_states(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            s = MotorState(*rng.uniform(-5.0, 5.0, 2), rng.uniform(-10.0, 10.0), rng.uniform(-6.0, 6.0))
            u = DqInput(*rng.uniform(-24.0, 24.0, 2))
            A, B, p_aff = state_space(P, s.omega)
            x = np.array([s.i_d, s.i_q, s.theta, s.omega])
            lin = A @ x + B @ np.array(u) + p_aff
            d = derivatives(P, s, u, P.C)
            ref = np.array([d.di_d, d.di_q, d.dtheta, d.domega])
            np.testing.assert_allclose(lin, ref, rtol=1e-12, atol=1e-12 * np.abs(ref).max())


class TestFlatInverse:
    def test_holding_point(self):
        u, s = flat_inverse(P, FlatTrajectory(y1=0.3, C=0.780))
        assert s == pytest.approx(MotorState(0.0, 1.8013856813, 0.0, 0.3), rel=1e-9)
        assert u.v_q == pytest.approx(5.6743648961, rel=1e-9)
        assert u.v_d == 0.0

    def test_origin(self):
        u, s = flat_inverse(P, FlatTrajectory())
        assert tuple(u) == (0.0, 0.0) and tuple(s) == (0.0, 0.0, 0.0, 0.0)

    def test_holding_state_matches(self):
        _, s = flat_inverse(P, FlatTrajectory(C=P.C))
        assert holding_state(P) == s

    @pytest.mark.parametrize(
        "poly",
        [
            lambda t: (t**3, 3 * t**2, 6 * t, 6.0),
            lambda t: (0.2 * t**4 - t**2, 0.8 * t**3 - 2 * t, 2.4 * t**2 - 2, 4.8 * t),
        ],
        ids=["cubic", "quartic"],
    )
    def test_round_trip_by_independent_integration(self, poly):
        def traj(t):
            return FlatTrajectory(*poly(t), 0.0, 0.0, P.C, 0.0)

        def rhs(t, x):
            u, _ = flat_inverse(P, traj(t))
            d = derivatives(P, MotorState(*x), u, P.C)
            return list(d)

        _, x0 = flat_inverse(P, traj(0.0))
        t_eval = np.linspace(0.0, 1.0, 101)
        sol = solve_ivp(rhs, (0.0, 1.0), list(x0), method="DOP853", rtol=1e-12, atol=1e-12, t_eval=t_eval)
        target = np.array([poly(t)[0] for t in t_eval])
        assert np.max(np.abs(sol.y[3] - target)) < 1e-6


class TestEnergy:
    @given(states)
    def test_unforced_plant_dissipates(self, s):
        d = derivatives(P, s, DqInput(), 0.0)
        power = P.L * (s.i_d * d.di_d + s.i_q * d.di_q) + P.J * s.omega * d.domega
        assert power <= 1e-9 * (1.0 + stored_energy(P, s))

    def test_energy_non_increasing_along_trajectory(self):
        from suntracker.integrator import integrate

        def f(t, x):
            return np.array(derivatives(P, MotorState(*x), DqInput(), 0.0))

        xs = integrate(f, [1.0, -2.0, 5.0, 0.0], 0.0, 1e-5, 2000)
        energy = [stored_energy(P, MotorState(*x)) for x in xs]
        assert np.all(np.diff(energy) <= 1e-12)
